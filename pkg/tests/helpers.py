"""Random-case generators and oracles shared by the unit and acceptance suites."""

import numpy as np

from qomsim.graphs import build_graph, contains_edges, plan_pumps
from qomsim.optics import Metasurface, Resonance
from qomsim.spdc import PumpConfig


def spaced_wavelengths(rng, n, lo, hi, gap, avoid=()):
    """``n`` wavelengths in [lo, hi] at least ``gap`` apart from each other and from ``avoid``."""
    out = list(avoid)
    picked = []
    while len(picked) < n:
        lam = float(rng.uniform(lo, hi))
        if all(abs(lam - x) >= gap for x in out):
            out.append(lam)
            picked.append(lam)
    return picked


def random_feasible_target(rng):
    """Resonances plus a target edge list in which every edge has a resonance endpoint.

    Wavelengths are kept well apart so bins stay distinct.
    """
    n_res = int(rng.integers(1, 5))
    res_nm = spaced_wavelengths(rng, n_res, 1300.0, 1600.0, 15.0)
    resonances = [Resonance(f"r{k}", lam, float(rng.uniform(200, 1500)), 0.0) for k, lam in enumerate(res_nm)]
    n_free = int(rng.integers(0, 4))
    free_nm = spaced_wavelengths(rng, n_free, 1250.0, 1700.0, 15.0, avoid=res_nm)
    edges = set()
    for _ in range(int(rng.integers(1, 6))):
        a = res_nm[int(rng.integers(n_res))]
        others = [x for x in res_nm + free_nm if x != a]
        if not others:
            continue
        b = others[int(rng.integers(len(others)))]
        edges.add(tuple(sorted((a, b))))
    if not edges:
        b = spaced_wavelengths(rng, 1, 1250.0, 1700.0, 15.0, avoid=res_nm)[0]
        edges.add(tuple(sorted((res_nm[0], b))))
    return resonances, sorted(edges)


def round_trip_holds(resonances, edges):
    plan = plan_pumps(edges, resonances)
    if not plan.feasible:
        return False
    graph = build_graph(Metasurface("target", resonances), plan.pump_configs(pol_deg=0.0))
    return contains_edges(graph, edges)


def random_metasurfaces(rng, k):
    out = []
    for m in range(k):
        n = int(rng.integers(1, 3))
        centers = spaced_wavelengths(rng, n, 1300.0, 1600.0, 10.0)
        res = [Resonance(f"m{m}r{j}", c, float(rng.uniform(200, 1200)), float(rng.choice([0.0, 90.0])))
               for j, c in enumerate(centers)]
        out.append(Metasurface(f"ms{m}", res))
    return out


def union_matches(metasurfaces, pump):
    """The joint graph equals the union of per-surface graphs with bins merged.

    Bin merging only unions source tags, so each single-surface vertex maps to
    the joint vertex whose tags contain its own.
    """
    joint = build_graph(metasurfaces, pump)
    owner = {}
    for vid, v in enumerate(joint.vertices):
        for tag in v.sources:
            owner[tag] = vid
    mapped_edges, mapped_sources = set(), {}
    for ms in metasurfaces:
        single = build_graph(ms, pump)
        ids = []
        for v in single.vertices:
            targets = {owner[t] for t in v.sources}
            if len(targets) != 1:
                return False
            ids.append(targets.pop())
            mapped_sources.setdefault(ids[-1], set()).update(v.sources)
        for e in single.edges:
            mapped_edges.add((min(ids[e.a], ids[e.b]), max(ids[e.a], ids[e.b])))
    joint_edges = {(e.a, e.b) for e in joint.edges}
    joint_sources = {vid: set(v.sources) for vid, v in enumerate(joint.vertices)}
    return mapped_edges == joint_edges and mapped_sources == joint_sources


def random_pump(rng):
    return PumpConfig(float(rng.uniform(640.0, 760.0)), 9.6, float(rng.choice([0.0, 45.0, 90.0])))
