import json
import warnings

import numpy as np
import pytest

from helpers import random_feasible_target, random_metasurfaces, random_pump, round_trip_holds, union_matches
from qomsim import presets
from qomsim._validation import ValidationError
from qomsim.graphs import (
    Edge,
    EntanglementGraph,
    UnphysicalPairWarning,
    WavelengthBin,
    build_graph,
    classify,
    contains_edges,
    plan_pumps,
)
from qomsim.optics import Metasurface, Resonance
from qomsim.spdc import PumpConfig, idler_wavelength


def ring_1359():
    return Metasurface("ring", [Resonance("ED", 1359.0, 330.0, 0.0)])


def centers(graph):
    return sorted(round(v.center_nm, 1) for v in graph.vertices)


def test_two_coherent_pumps_give_path_3():
    pumps = [PumpConfig(725.0, 9.6, coherent_group_id="comb"), PumpConfig(718.0, 9.6, coherent_group_id="comb")]
    g = build_graph(ring_1359(), pumps)
    assert g.classification == "path-3"
    assert centers(g) == [1359.0, 1522.2, 1554.1]
    assert g.coherent and not g.notes
    middle = next(i for i, v in enumerate(g.vertices) if round(v.center_nm) == 1359)
    assert g.adjacency[middle].sum() == 2
    by_pump = {e.pump_nm: sorted((g.vertices[e.a].center_nm, g.vertices[e.b].center_nm)) for e in g.edges}
    assert by_pump[725.0][1] == pytest.approx(idler_wavelength(725.0, 1359.0))
    assert by_pump[718.0][1] == pytest.approx(idler_wavelength(718.0, 1359.0))


def test_third_pump_sharing_the_mode_gives_star_4():
    pumps = [PumpConfig(lam, 9.6, coherent_group_id="comb") for lam in (725.0, 718.0, 710.0)]
    g = build_graph(ring_1359(), pumps)
    assert g.classification == "star-4"


def test_degenerate_pair_is_a_flagged_vertex():
    g = build_graph(presets.qom_a(), presets.pump_a())
    assert len(g.vertices) == 1 and g.vertices[0].degenerate
    assert len(g.edges) == 1 and g.edges[0].degenerate
    assert g.classification == "single-edge"
    # the MD mode is orthogonal to the pump and stays dark
    assert g.to_networkx().number_of_edges() == 0


def test_every_edge_conserves_energy(rng):
    for _ in range(30):
        mss = random_metasurfaces(rng, 3)
        g = build_graph(mss, [random_pump(rng), random_pump(rng)])
        for e in g.edges:
            assert g.energy_mismatch(e) <= g.energy_tolerance(e) * (1 + 1e-9)
        assert not any("energy" in w for w in g.warnings)


def test_unphysical_resonance_is_skipped_with_warning():
    ms = Metasurface("m", [Resonance("low", 700.0, 300.0), Resonance("ok", 1446.0, 330.0)])
    with pytest.warns(UnphysicalPairWarning):
        g = build_graph(ms, PumpConfig(723.0, 9.6))
    assert len(g.vertices) == 1
    assert g.warnings


def test_build_graph_preconditions():
    with pytest.raises(ValidationError):
        build_graph([], PumpConfig(723.0, 9.6))
    with pytest.raises(ValidationError):
        build_graph(ring_1359(), [])


def test_placement_outside_spot_emits_nothing():
    far = build_graph([ring_1359(), presets.qom_b()], PumpConfig(725.0, 9.6),
                      placements=[(0.0, 0.0), (500.0, 0.0)])
    near = build_graph(ring_1359(), PumpConfig(725.0, 9.6))
    assert centers(far) == centers(near)


def test_incoherent_pumps_are_annotated_not_rejected():
    g = build_graph(ring_1359(), [PumpConfig(725.0, 9.6), PumpConfig(718.0, 9.6)])
    assert g.classification == "path-3"
    assert not g.coherent
    assert "incoherent" in g.notes[0]
    assert "style=dashed" in g.to_dot()


def graph_from_edges(n, pairs):
    verts = [WavelengthBin(1300.0 + 10 * i, 1.0) for i in range(n)]
    return EntanglementGraph(verts, [Edge(a, b, 0, 700.0) for a, b in pairs])


@pytest.mark.parametrize("n,pairs,expected", [
    (2, [(0, 1)], "single-edge"),
    (3, [(0, 1), (1, 2)], "path-3"),
    (5, [(0, 1), (1, 2), (2, 3), (3, 4)], "path-5"),
    (4, [(0, 1), (0, 2), (0, 3)], "star-4"),
    (3, [(0, 1), (1, 2), (0, 2)], "general"),
    (4, [(0, 1), (2, 3)], "general"),
    (2, [], "general"),
])
def test_classify(n, pairs, expected):
    assert classify(graph_from_edges(n, pairs)) == expected


def test_plan_pumps_examples():
    res = [Resonance("ED", 1359.0, 330.0)]
    plan = plan_pumps([(1359.0, 1554.1)], res)
    assert plan.pumps_nm == [pytest.approx(725.0, abs=0.01)]
    path = plan_pumps([(1554.1, 1359.0), (1359.0, 1522.2)], res)
    # idlers rounded to 0.1 nm move the pumps by about 0.01 nm
    assert path.pumps_nm == pytest.approx([718.0, 725.0], abs=0.05)
    deg = plan_pumps([(1400.0, 1400.0)], [Resonance("D", 1400.0, 300.0)])
    assert deg.pumps_nm == [pytest.approx(700.0)]
    assert deg.assignments[0]["degenerate"]


def test_plan_pumps_reports_infeasible_edges():
    plan = plan_pumps([(1359.0, 1554.1), (1200.0, 1800.0)], ring_1359())
    assert not plan.feasible
    assert plan.infeasible == [(1200.0, 1800.0)]
    assert plan.to_dict()["feasible"] is False


def test_plan_then_build_recovers_the_path():
    plan = plan_pumps([(1554.1, 1359.0), (1359.0, 1522.2)], ring_1359())
    g = build_graph(ring_1359(), plan.pump_configs())
    assert g.classification == "path-3" and g.coherent
    assert contains_edges(g, [(1554.1, 1359.0), (1359.0, 1522.2)])
    assert not contains_edges(g, [(1554.1, 1522.2)])


@pytest.mark.parametrize("seed", range(25))
def test_round_trip_on_random_feasible_graphs(seed):
    assert round_trip_holds(*random_feasible_target(np.random.default_rng(seed)))


@pytest.mark.parametrize("seed", range(25))
def test_spatial_multiplexing_is_a_union(seed):
    rng = np.random.default_rng(1000 + seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnphysicalPairWarning)
        assert union_matches(random_metasurfaces(rng, int(rng.integers(2, 5))), random_pump(rng))


def test_multiplexed_surfaces_under_one_pump():
    g = build_graph([ring_1359(), Metasurface("b", [Resonance("ED", 1429.0, 1000.0)])], PumpConfig(725.0, 9.6))
    assert len(g.edges) == 2
    assert g.classification == "general"


def test_graph_json_and_dot():
    g = build_graph(ring_1359(), [PumpConfig(725.0, 9.6, coherent_group_id="c"),
                                  PumpConfig(718.0, 9.6, coherent_group_id="c")])
    d = json.loads(g.to_json())
    assert d["classification"] == "path-3"
    assert len(d["adjacency"]) == 3
    assert {e["coherent_group_id"] for e in d["edges"]} == {"c"}
    dot = g.to_dot()
    assert dot.startswith("graph entanglement {") and dot.count("--") == 2
    deg = build_graph(presets.qom_a(), presets.pump_a()).to_dot()
    assert "doublecircle" in deg
