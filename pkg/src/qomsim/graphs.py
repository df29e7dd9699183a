"""Frequency-bin entanglement graphs from pairwise coupling.

Every (pump, resonance) combination emits pairs with one photon in the
resonance and its energy-conserving partner; that pair becomes an edge
between two wavelength bins.  Pumps that share a resonance bin couple their
partners through it, which is how path, star (GHZ) and more general graphs
arise.  Only adjacency is tracked here, not the quantum state.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import networkx as nx
import numpy as np

from ._validation import ValidationError, check_positive
from .optics import Metasurface, Resonance
from .spdc import PumpConfig, idler_wavelength, pump_for_pair


class UnphysicalPairWarning(UserWarning):
    """A resonance lies at or below a pump wavelength and cannot host a pair."""


@dataclass(frozen=True)
class WavelengthBin:
    center_nm: float
    tolerance_nm: float
    sources: frozenset = frozenset()
    degenerate: bool = False

    def __post_init__(self):
        check_positive(self.tolerance_nm, "tolerance_nm")

    def overlaps(self, other):
        """Two bins are the same optical mode iff they lie within the smaller tolerance."""
        return abs(self.center_nm - other.center_nm) <= min(self.tolerance_nm, other.tolerance_nm)


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    pump_index: int
    pump_nm: float
    coherent_group_id: Optional[str] = None
    sources: frozenset = frozenset()

    @property
    def degenerate(self):
        return self.a == self.b


@dataclass
class EntanglementGraph:
    vertices: list
    edges: list
    classification: str = "general"
    coherent: bool = True
    notes: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def adjacency(self):
        n = len(self.vertices)
        adj = np.zeros((n, n), dtype=np.int64)
        for e in self.edges:
            adj[e.a, e.b] = 1
            adj[e.b, e.a] = 1
        return adj

    def to_networkx(self):
        g = nx.Graph()
        for i, v in enumerate(self.vertices):
            g.add_node(i, wavelength_nm=v.center_nm, degenerate=v.degenerate)
        for e in self.edges:
            if not e.degenerate:
                g.add_edge(e.a, e.b)
        return g

    def edge_wavelengths(self):
        return [(self.vertices[e.a].center_nm, self.vertices[e.b].center_nm) for e in self.edges]

    def energy_mismatch(self, edge):
        """``|1/lam_a + 1/lam_b - 1/lam_p|`` in nm^-1."""
        la, lb = self.vertices[edge.a].center_nm, self.vertices[edge.b].center_nm
        return abs(1.0 / la + 1.0 / lb - 1.0 / edge.pump_nm)

    def energy_tolerance(self, edge):
        """Bin tolerances converted to inverse wavelength (first order)."""
        va, vb = self.vertices[edge.a], self.vertices[edge.b]
        return va.tolerance_nm / va.center_nm ** 2 + vb.tolerance_nm / vb.center_nm ** 2

    def to_dict(self):
        return {
            "vertices": [
                {
                    "id": i,
                    "center_nm": v.center_nm,
                    "tolerance_nm": v.tolerance_nm,
                    "sources": sorted(v.sources),
                    "degenerate": v.degenerate,
                }
                for i, v in enumerate(self.vertices)
            ],
            "edges": [
                {
                    "a": e.a,
                    "b": e.b,
                    "pump_index": e.pump_index,
                    "pump_nm": e.pump_nm,
                    "coherent_group_id": e.coherent_group_id,
                    "sources": sorted(e.sources),
                    "degenerate": e.degenerate,
                }
                for e in self.edges
            ],
            "classification": self.classification,
            "coherent": self.coherent,
            "notes": list(self.notes),
            "warnings": list(self.warnings),
            "adjacency": self.adjacency.tolist(),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    def to_dot(self):
        lines = ["graph entanglement {", f'  label="{self.classification}";']
        for i, v in enumerate(self.vertices):
            shape = "doublecircle" if v.degenerate else "circle"
            lines.append(f'  v{i} [label="{v.center_nm:.1f} nm", shape={shape}];')
        for e in self.edges:
            style = "" if self.coherent else ", style=dashed"
            lines.append(f'  v{e.a} -- v{e.b} [label="{e.pump_nm:.1f} nm"{style}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def classify(graph):
    """One of ``single-edge``, ``path-n``, ``star-n`` (GHZ) or ``general``.

    Degenerate self-loops do not count as edges; a graph made of a single
    degenerate vertex is reported as ``single-edge`` (one pair, one mode).
    """
    g = graph.to_networkx()
    n, m = g.number_of_nodes(), g.number_of_edges()
    if m == 0:
        if n == 1 and any(e.degenerate for e in graph.edges):
            return "single-edge"
        return "general"
    if not nx.is_connected(g):
        return "general"
    if n == 2 and m == 1:
        return "single-edge"
    if m == n - 1:
        degrees = sorted(d for _, d in g.degree())
        if degrees[-1] <= 2:
            return f"path-{n}"
        if degrees[-1] == n - 1 and n - 1 >= 3:
            return f"star-{n}"
    return "general"


def _union_find_clusters(records):
    # records sorted by center; single-linkage on the overlap relation
    parent = list(range(len(records)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, ri in enumerate(records):
        for j in range(i + 1, len(records)):
            rj = records[j]
            if rj["center"] - ri["center"] > ri["tol"]:
                break
            if rj["center"] - ri["center"] <= min(ri["tol"], rj["tol"]):
                parent[find(j)] = find(i)
    clusters = {}
    for i in range(len(records)):
        clusters.setdefault(find(i), []).append(i)
    return sorted(clusters.values(), key=lambda c: records[c[0]]["center"])


def _illuminated(position_um, pump):
    if position_um is None:
        return True
    return math.hypot(*position_um) <= pump.spot_diameter_um / 2.0


def build_graph(metasurfaces, pumps, tolerance_nm=None, *, placements=None, min_coupling=1e-3):
    """Pairwise-coupling graph for metasurfaces under a set of pumps.

    Parameters
    ----------
    metasurfaces : Metasurface or sequence of Metasurface
    pumps : PumpConfig or sequence of PumpConfig
    tolerance_nm : float, optional
        Bin merge radius.  By default each resonance vertex uses half its
        FWHM and each partner vertex half the FWHM mapped through energy
        conservation.
    placements : sequence of (x_um, y_um), optional
        Position of each metasurface relative to the pump spot center; a
        surface outside every spot emits nothing.
    min_coupling : float
        Polarization coupling (cos^2) below which a resonance is inactive.
    """
    if isinstance(metasurfaces, Metasurface):
        metasurfaces = [metasurfaces]
    if isinstance(pumps, PumpConfig):
        pumps = [pumps]
    metasurfaces, pumps = list(metasurfaces), list(pumps)
    if not metasurfaces or not pumps:
        raise ValidationError("build_graph needs at least one metasurface and one pump")
    if placements is not None and len(placements) != len(metasurfaces):
        raise ValidationError("placements must match metasurfaces one to one")
    if tolerance_nm is not None:
        check_positive(tolerance_nm, "tolerance_nm")

    records, raw_edges, problems = [], [], []
    for pi, pump in enumerate(pumps):
        lam_p = pump.wavelength_nm
        for mi, ms in enumerate(metasurfaces):
            if not _illuminated(None if placements is None else placements[mi], pump):
                continue
            for r in ms.resonances:
                if r.coupling(pump.pol_deg) < min_coupling:
                    continue
                lam_r = r.center_wavelength_nm
                tag = f"{ms.name}:{r.label}"
                if lam_r <= lam_p:
                    msg = f"{tag} at {lam_r} nm cannot host a pair from the {lam_p} nm pump; skipped"
                    warnings.warn(msg, UnphysicalPairWarning, stacklevel=2)
                    problems.append(msg)
                    continue
                lam_x = idler_wavelength(lam_p, lam_r)
                tol_r = tolerance_nm if tolerance_nm is not None else r.fwhm_nm / 2.0
                tol_x = tolerance_nm if tolerance_nm is not None else r.fwhm_nm * (lam_x / lam_r) ** 2 / 2.0
                ir = len(records)
                if abs(lam_x - lam_r) <= min(tol_r, tol_x):
                    records.append({"center": lam_r, "tol": tol_r, "tag": tag, "res": True, "deg": True})
                    raw_edges.append((ir, ir, pi, tag))
                    continue
                records.append({"center": lam_r, "tol": tol_r, "tag": tag, "res": True, "deg": False})
                records.append({"center": lam_x, "tol": tol_x, "tag": f"partner:{tag}@{lam_p:g}",
                                "res": False, "deg": False})
                raw_edges.append((ir, ir + 1, pi, tag))

    order = sorted(range(len(records)), key=lambda i: (records[i]["center"], i))
    sorted_records = [records[i] for i in order]
    clusters = _union_find_clusters(sorted_records)
    vertex_of = {}
    vertices = []
    for vid, members in enumerate(clusters):
        recs = [sorted_records[k] for k in members]
        anchored = [r["center"] for r in recs if r["res"]] or [r["center"] for r in recs]
        vertices.append(WavelengthBin(
            center_nm=float(np.mean(anchored)),
            tolerance_nm=min(r["tol"] for r in recs),
            sources=frozenset(r["tag"] for r in recs),
            degenerate=any(r["deg"] for r in recs),
        ))
        for k in members:
            vertex_of[order[k]] = vid

    merged = {}
    for ia, ib, pi, tag in raw_edges:
        a, b = sorted((vertex_of[ia], vertex_of[ib]))
        key = (a, b, pi)
        merged.setdefault(key, set()).add(tag)
    edges = [
        Edge(a, b, pi, pumps[pi].wavelength_nm, pumps[pi].coherent_group_id, frozenset(tags))
        for (a, b, pi), tags in sorted(merged.items())
    ]
    # a non-degenerate pair folded into one bin would be a self-loop
    for e in edges:
        if e.degenerate and not vertices[e.a].degenerate:
            vertices[e.a] = WavelengthBin(vertices[e.a].center_nm, vertices[e.a].tolerance_nm,
                                          vertices[e.a].sources, True)

    graph = EntanglementGraph(vertices, edges, warnings=problems)
    for e in edges:
        if graph.energy_mismatch(e) > graph.energy_tolerance(e) * (1 + 1e-9):
            graph.warnings.append(
                f"edge {e.a}-{e.b} misses energy conservation by {graph.energy_mismatch(e):.3g} nm^-1"
            )
    groups = {e.coherent_group_id if e.coherent_group_id is not None else f"pump-{e.pump_index}"
              for e in edges}
    graph.coherent = len(groups) <= 1
    if not graph.coherent:
        graph.notes.append(
            "edges come from mutually incoherent pumps; read the graph as a map of pair channels, "
            "not as a coherent graph state"
        )
    graph.classification = classify(graph)
    return graph


@dataclass
class PumpPlan:
    pumps_nm: list
    assignments: list
    infeasible: list

    @property
    def feasible(self):
        return not self.infeasible

    def pump_configs(self, power_mW=9.6, pol_deg=0.0, coherent_group_id="comb"):
        return [PumpConfig(lam, power_mW, pol_deg, coherent_group_id=coherent_group_id)
                for lam in self.pumps_nm]

    def to_dict(self):
        return {"pumps_nm": list(self.pumps_nm), "assignments": list(self.assignments),
                "infeasible": [list(e) for e in self.infeasible], "feasible": self.feasible}


def _resonance_list(resonances):
    if isinstance(resonances, (Metasurface, Resonance)):
        resonances = [resonances]
    out = []
    for item in resonances:
        if isinstance(item, Metasurface):
            out.extend(item.resonances)
        else:
            out.append(item)
    return out


def plan_pumps(target, resonances, tolerance_nm=None):
    """Pump wavelengths that realize every edge of a target graph.

    Parameters
    ----------
    target : EntanglementGraph or sequence of (lambda_a_nm, lambda_b_nm)
    resonances : Metasurface, Resonance or a sequence of either
    tolerance_nm : float, optional
        How close an edge endpoint must be to a resonance center; defaults
        to half the resonance FWHM.

    Returns
    -------
    PumpPlan
        One pump ``(1/lambda_a + 1/lambda_b)**-1`` per feasible edge (equal
        pumps listed once) and the edges with no endpoint on a resonance.
    """
    if isinstance(target, EntanglementGraph):
        edges = target.edge_wavelengths()
    else:
        edges = [tuple(map(float, e)) for e in target]
    res = _resonance_list(resonances)
    pumps, assignments, infeasible = [], [], []
    for la, lb in edges:
        anchor = None
        for lam in (la, lb):
            for r in res:
                tol = tolerance_nm if tolerance_nm is not None else r.fwhm_nm / 2.0
                if abs(lam - r.center_wavelength_nm) <= tol:
                    anchor = r
                    break
            if anchor is not None:
                break
        if anchor is None:
            infeasible.append((la, lb))
            continue
        lam_p = pump_for_pair(la, lb)
        tol = tolerance_nm if tolerance_nm is not None else anchor.fwhm_nm / 2.0
        assignments.append({"edge": [la, lb], "pump_nm": lam_p, "resonance": anchor.label,
                            "degenerate": abs(la - lb) <= tol})
        if not any(abs(lam_p - p) <= 1e-9 * lam_p for p in pumps):
            pumps.append(lam_p)
    return PumpPlan(sorted(pumps), assignments, infeasible)


def contains_edges(graph, target_edges, tolerance_nm=None):
    """True if every target edge joins two graph bins that match its endpoints."""
    def matches(vertex, lam):
        tol = tolerance_nm if tolerance_nm is not None else vertex.tolerance_nm
        return abs(vertex.center_nm - lam) <= tol

    for la, lb in target_edges:
        found = False
        for e in graph.edges:
            va, vb = graph.vertices[e.a], graph.vertices[e.b]
            if (matches(va, la) and matches(vb, lb)) or (matches(va, lb) and matches(vb, la)):
                found = True
                break
        if not found:
            return False
    return True
