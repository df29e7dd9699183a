"""Declarative scenario documents (YAML or JSON).

A scenario names the metasurfaces, pumps, source statistics, the optical
routing tree that ends in detectors, and the analyses to run.  Loading
validates every field and reports the offending field path together with
its line in the source file.

Routing tree
------------
Each node has optional ``stages`` (fiber, bandpass, attenuator) and either a
``detector`` (a leaf, whose ``name`` becomes the channel id) or a ``split``
(beamsplitter or dichroic) with exactly two ``outputs``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from . import presets
from ._validation import ValidationError
from .detection import BandpassSpec, DetectorSpec, FiberSpec
from .optics import Metasurface
from .spdc import DEFAULT_BAND_NM, DEFAULT_RATE_CONSTANT, STATS_MODES, PumpConfig

SCHEMA_VERSION = 1
PRESETS = {"QOM-A": presets.qom_a, "QOM-B": presets.qom_b, "QOM-C": presets.qom_c}
SCAN_PARAMS = ("pump_power", "detuning")


class ScenarioError(ValidationError):
    """Invalid scenario; carries the field path and source line."""

    def __init__(self, message, path=(), line=None, source=None):
        self.path = tuple(path)
        self.line = line
        self.source = source
        self.message = message
        super().__init__(self._format())

    @property
    def field_path(self):
        out = ""
        for p in self.path:
            out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
        return out or "<root>"

    def _format(self):
        where = f"{self.source}:" if self.source else ""
        where += f"{self.line}: " if self.line else (" " if where else "")
        return f"{where}field '{self.field_path}': {self.message}"


def _line_map(text):
    """Map every field path of a YAML/JSON document to its 1-based line."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines = {}

    def walk(node, path):
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                k = key.value
                lines[path + (k,)] = key.start_mark.line + 1
                walk(value, path + (k,))
                lines[path + (k,)] = key.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                walk(item, path + (i,))

    if root is not None:
        walk(root, ())
    return lines


class _Reader:
    """Typed field access that raises :class:`ScenarioError` with locations."""

    def __init__(self, lines, source):
        self.lines = lines
        self.source = source

    def fail(self, message, path):
        path = tuple(path)
        line = None
        for n in range(len(path), -1, -1):
            if path[:n] in self.lines:
                line = self.lines[path[:n]]
                break
        raise ScenarioError(message, path, line, self.source)

    def mapping(self, value, path):
        if not isinstance(value, dict):
            self.fail(f"expected a mapping, got {type(value).__name__}", path)
        return value

    def seq(self, value, path):
        if not isinstance(value, list):
            self.fail(f"expected a list, got {type(value).__name__}", path)
        return value

    def get(self, d, key, path, kind, default=..., *, choices=None, minimum=None, exclusive=False,
            maximum=None):
        if key not in d or d[key] is None:
            if default is ...:
                self.fail("required field is missing", path + (key,))
            return default
        value = d[key]
        p = path + (key,)
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail(f"expected a number, got {value!r}", p)
            value = float(value)
        elif kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.fail(f"expected an integer, got {value!r}", p)
        elif kind is str:
            if not isinstance(value, str):
                self.fail(f"expected a string, got {value!r}", p)
        elif kind is bool:
            if not isinstance(value, bool):
                self.fail(f"expected true or false, got {value!r}", p)
        if choices is not None and value not in choices:
            self.fail(f"must be one of {list(choices)}, got {value!r}", p)
        if minimum is not None and (value < minimum or (exclusive and value == minimum)):
            self.fail(f"must be {'>' if exclusive else '>='} {minimum}, got {value!r}", p)
        if maximum is not None and value > maximum:
            self.fail(f"must be <= {maximum}, got {value!r}", p)
        return value

    def check_keys(self, d, allowed, path):
        for key in d:
            if key not in allowed:
                self.fail(f"unknown field (allowed: {', '.join(sorted(allowed))})", path + (key,))

    def build(self, factory, path, *args, **kwargs):
        try:
            return factory(*args, **kwargs)
        except (ValidationError, ValueError, TypeError) as exc:
            self.fail(str(exc), path)


@dataclass
class RouteNode:
    name: str
    stages: list = field(default_factory=list)   # [(kind, spec)]
    detector: DetectorSpec = None
    split: dict = None                           # {"kind": ..., "ratio"/"cutoff_nm": ...}
    outputs: list = field(default_factory=list)

    def channels(self):
        if self.detector is not None:
            return [self.name]
        return [c for child in self.outputs for c in child.channels()]

    def detectors(self):
        if self.detector is not None:
            return {self.name: self.detector}
        out = {}
        for child in self.outputs:
            out.update(child.detectors())
        return out


@dataclass
class Scenario:
    name: str
    seed: int
    duration_s: float
    metasurfaces: list
    placements: list
    pumps: list
    source: dict
    routing: RouteNode
    analysis: dict
    document: dict
    source_path: str = None

    @property
    def sha256(self):
        """Hash of the canonical JSON form of the effective document."""
        return scenario_hash(self.document)

    @property
    def channels(self):
        return self.routing.channels()

    def common_fiber(self):
        for kind, spec in self.routing.stages:
            if kind == "fiber":
                return spec
        return None

    def with_overrides(self, *, seed=None, pump_power_mW=None, pump_wavelengths_nm=None):
        """A copy with the seed or the pump lines replaced (document kept in sync)."""
        doc = copy.deepcopy(self.document)
        if seed is not None:
            doc["seed"] = int(seed)
        if pump_power_mW is not None:
            for p in doc["pumps"]:
                p["power_mW"] = float(pump_power_mW)
        if pump_wavelengths_nm is not None:
            for p, lam in zip(doc["pumps"], pump_wavelengths_nm):
                p["wavelength_nm"] = float(lam)
        return parse_scenario(doc, source=self.source_path)


def scenario_hash(document):
    blob = json.dumps(document, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# --- parsing ----------------------------------------------------------------

def _parse_metasurfaces(r, items, path):
    out, placements, docs = [], [], []
    for i, item in enumerate(r.seq(items, path)):
        p = path + (i,)
        r.mapping(item, p)
        if "preset" in item:
            r.check_keys(item, {"preset", "position_um"}, p)
            key = r.get(item, "preset", p, str, choices=sorted(PRESETS))
            ms = PRESETS[key]()
        else:
            r.check_keys(item, {"name", "chi2", "thickness_nm", "resonances", "position_um"}, p)
            r.get(item, "name", p, str)
            res = r.seq(r.get(item, "resonances", p, list), p + ("resonances",))
            for j, entry in enumerate(res):
                rp = p + ("resonances", j)
                r.mapping(entry, rp)
                r.check_keys(entry, {"label", "center_nm", "q", "pol_axis_deg", "kappa", "fano_q"}, rp)
                r.get(entry, "label", rp, str)
                r.get(entry, "center_nm", rp, float, minimum=0, exclusive=True)
                r.get(entry, "q", rp, float, minimum=0, exclusive=True)
                r.get(entry, "pol_axis_deg", rp, float, 0.0)
                r.get(entry, "kappa", rp, float, None, minimum=0, exclusive=True)
                r.get(entry, "fano_q", rp, float, None)
            r.get(item, "chi2", p, float, None, minimum=0, exclusive=True)
            r.get(item, "thickness_nm", p, float, None, minimum=0, exclusive=True)
            body = {k: v for k, v in item.items() if k != "position_um"}
            ms = r.build(Metasurface.from_dict, p, body)
        pos = item.get("position_um")
        if pos is not None:
            if (not isinstance(pos, list) or len(pos) != 2
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in pos)):
                r.fail("expected [x, y] in micrometres", p + ("position_um",))
            pos = (float(pos[0]), float(pos[1]))
        out.append(ms)
        placements.append(pos)
        doc = ms.to_dict()
        if pos is not None:
            doc["position_um"] = list(pos)
        docs.append(doc)
    if not out:
        r.fail("at least one metasurface is required", path)
    return out, placements, docs


def _parse_pumps(r, items, path):
    pumps, docs = [], []
    for i, item in enumerate(r.seq(items, path)):
        p = path + (i,)
        r.mapping(item, p)
        r.check_keys(item, {"wavelength_nm", "power_mW", "pol_deg", "spot_diameter_um", "coherent_group_id"}, p)
        doc = {
            "wavelength_nm": r.get(item, "wavelength_nm", p, float, minimum=0, exclusive=True),
            "power_mW": r.get(item, "power_mW", p, float, 9.6, minimum=0),
            "pol_deg": r.get(item, "pol_deg", p, float, 0.0),
            "spot_diameter_um": r.get(item, "spot_diameter_um", p, float, 140.0, minimum=0, exclusive=True),
            "coherent_group_id": r.get(item, "coherent_group_id", p, str, None),
        }
        pumps.append(r.build(PumpConfig, p, **doc))
        docs.append(doc)
    if not pumps:
        r.fail("at least one pump is required", path)
    return pumps, docs


def _parse_source(r, item, path):
    item = r.mapping(item if item is not None else {}, path)
    r.check_keys(item, {"stats_mode", "rate_constant", "band_nm", "coherence_time_s", "thermal_modes",
                        "chunk_s"}, path)
    band = item.get("band_nm", list(DEFAULT_BAND_NM))
    if (not isinstance(band, list) or len(band) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in band)
            or not 0 < band[0] < band[1]):
        r.fail("expected [low, high] with 0 < low < high", path + ("band_nm",))
    return {
        "stats_mode": r.get(item, "stats_mode", path, str, "poisson", choices=STATS_MODES),
        "rate_constant": r.get(item, "rate_constant", path, float, DEFAULT_RATE_CONSTANT, minimum=0, exclusive=True),
        "band_nm": [float(band[0]), float(band[1])],
        "coherence_time_s": r.get(item, "coherence_time_s", path, float, None, minimum=0, exclusive=True),
        "thermal_modes": r.get(item, "thermal_modes", path, float, 1.0, minimum=0, exclusive=True),
        "chunk_s": r.get(item, "chunk_s", path, float, 1.0, minimum=0, exclusive=True),
    }


_STAGE_KINDS = ("fiber", "bandpass", "attenuator")


def _parse_stage(r, item, path):
    r.mapping(item, path)
    if len(item) != 1 or next(iter(item)) not in _STAGE_KINDS:
        r.fail(f"a stage is a single-key mapping, one of {list(_STAGE_KINDS)}", path)
    kind, body = next(iter(item.items()))
    p = path + (kind,)
    if kind == "attenuator" and isinstance(body, (int, float)) and not isinstance(body, bool):
        body = {"transmission": body}
    body = r.mapping(body if body is not None else {}, p)
    if kind == "fiber":
        r.check_keys(body, {"length_km", "dispersion_ps_per_nm_km", "reference_wavelength_nm", "base_delay_ps"}, p)
        doc = {
            "length_km": r.get(body, "length_km", p, float, 3.0, minimum=0),
            "dispersion_ps_per_nm_km": r.get(body, "dispersion_ps_per_nm_km", p, float, 17.0),
            "reference_wavelength_nm": r.get(body, "reference_wavelength_nm", p, float, 1550.0, minimum=0, exclusive=True),
            "base_delay_ps": r.get(body, "base_delay_ps", p, float, 0.0),
        }
        spec = r.build(FiberSpec, p, **doc)
    elif kind == "bandpass":
        r.check_keys(body, {"center_nm", "fwhm_nm", "transmission_peak", "order"}, p)
        doc = {
            "center_nm": r.get(body, "center_nm", p, float, minimum=0, exclusive=True),
            "fwhm_nm": r.get(body, "fwhm_nm", p, float, minimum=0, exclusive=True),
            "transmission_peak": r.get(body, "transmission_peak", p, float, 1.0, minimum=0, maximum=1),
            "order": r.get(body, "order", p, float, 4.0, minimum=0, exclusive=True),
        }
        spec = r.build(BandpassSpec, p, **doc)
    else:
        r.check_keys(body, {"transmission"}, p)
        doc = {"transmission": r.get(body, "transmission", p, float, minimum=0, maximum=1)}
        spec = doc["transmission"]
    return (kind, spec), {kind: doc}


def _parse_detector(r, item, path):
    if item == "ideal":
        return DetectorSpec.ideal(), "ideal"
    item = r.mapping(item if item is not None else {}, path)
    r.check_keys(item, {"efficiency", "dark_count_rate_cps", "jitter_sigma_ps", "dead_time_ns"}, path)
    doc = {
        "efficiency": r.get(item, "efficiency", path, float, 0.8, minimum=0, maximum=1),
        "dark_count_rate_cps": r.get(item, "dark_count_rate_cps", path, float, 100.0, minimum=0),
        "jitter_sigma_ps": r.get(item, "jitter_sigma_ps", path, float, 50.0, minimum=0),
        "dead_time_ns": r.get(item, "dead_time_ns", path, float, 30.0, minimum=0),
    }
    return r.build(DetectorSpec, path, **doc), doc


def _parse_node(r, item, path, name, seen):
    item = r.mapping(item, path)
    r.check_keys(item, {"name", "stages", "detector", "split", "outputs"}, path)
    name = r.get(item, "name", path, str, name)
    stages, stage_docs = [], []
    for i, st in enumerate(r.seq(item.get("stages") or [], path + ("stages",))):
        stage, doc = _parse_stage(r, st, path + ("stages", i))
        stages.append(stage)
        stage_docs.append(doc)
    doc = {"name": name, "stages": stage_docs}
    if "detector" in item:
        if "split" in item or "outputs" in item:
            r.fail("a node is either a detector leaf or a split, not both", path)
        if name in seen:
            r.fail(f"duplicate channel name {name!r}", path + ("name",))
        seen.add(name)
        det, det_doc = _parse_detector(r, item["detector"], path + ("detector",))
        doc["detector"] = det_doc
        return RouteNode(name, stages, detector=det), doc
    split = r.mapping(item.get("split") if item.get("split") is not None else {"kind": "beamsplitter"},
                      path + ("split",))
    sp = path + ("split",)
    r.check_keys(split, {"kind", "ratio", "cutoff_nm"}, sp)
    kind = r.get(split, "kind", sp, str, "beamsplitter", choices=("beamsplitter", "dichroic"))
    if kind == "beamsplitter":
        split_doc = {"kind": kind, "ratio": r.get(split, "ratio", sp, float, 0.5, minimum=0, exclusive=True)}
        if split_doc["ratio"] >= 1:
            r.fail("must lie strictly between 0 and 1", sp + ("ratio",))
    else:
        split_doc = {"kind": kind, "cutoff_nm": r.get(split, "cutoff_nm", sp, float, minimum=0, exclusive=True)}
    outputs = r.seq(r.get(item, "outputs", path, list), path + ("outputs",))
    if len(outputs) != 2:
        r.fail("a split needs exactly two outputs", path + ("outputs",))
    children, child_docs = [], []
    for i, out in enumerate(outputs):
        child, cdoc = _parse_node(r, out, path + ("outputs", i), f"{name}{'AB'[i]}", seen)
        children.append(child)
        child_docs.append(cdoc)
    doc.update(split=split_doc, outputs=child_docs)
    return RouteNode(name, stages, split=split_doc, outputs=children), doc


DEFAULT_ROUTING = {
    "name": "",
    "split": {"kind": "beamsplitter", "ratio": 0.5},
    "outputs": [{"name": "A", "detector": {}}, {"name": "B", "detector": {}}],
}


def _channel_list(r, value, path, channels):
    names = value if isinstance(value, list) else [value]
    if not names:
        r.fail("at least one channel is required", path)
    for n in names:
        if n not in channels:
            r.fail(f"unknown channel {n!r} (known: {', '.join(channels)})", path)
    return list(names)


def _parse_analysis(r, item, path, channels, n_pumps):
    item = r.mapping(item if item is not None else {}, path)
    r.check_keys(item, {"histograms", "g2", "cs", "spectrum", "graph", "scan"}, path)
    out = {"histograms": [], "g2": [], "cs": None, "spectrum": None, "graph": None, "scan": None}
    names = set()
    for i, h in enumerate(r.seq(item.get("histograms") or [], path + ("histograms",))):
        p = path + ("histograms", i)
        r.mapping(h, p)
        r.check_keys(h, {"name", "a", "b", "bin_ps", "span_ps"}, p)
        doc = {
            "name": r.get(h, "name", p, str, f"hist{i}"),
            "a": _channel_list(r, r.get(h, "a", p, object), p + ("a",), channels),
            "b": _channel_list(r, r.get(h, "b", p, object), p + ("b",), channels),
            "bin_ps": r.get(h, "bin_ps", p, float, 10.0, minimum=0, exclusive=True),
            "span_ps": r.get(h, "span_ps", p, float, 30000.0, minimum=0, exclusive=True),
        }
        if doc["span_ps"] / doc["bin_ps"] < 100:
            r.fail("span_ps / bin_ps must give at least 100 bins", p)
        names.add(doc["name"])
        out["histograms"].append(doc)
    g2_names = set()
    for i, g in enumerate(r.seq(item.get("g2") or [], path + ("g2",))):
        p = path + ("g2", i)
        r.mapping(g, p)
        r.check_keys(g, {"name", "kind", "a", "b", "window_ns", "delay_ps", "subtract_accidentals"}, p)
        kind = r.get(g, "kind", p, str, "cross", choices=("cross", "auto"))
        doc = {
            "name": r.get(g, "name", p, str, f"g2_{i}"),
            "kind": kind,
            "a": _channel_list(r, r.get(g, "a", p, object), p + ("a",), channels),
            "b": _channel_list(r, r.get(g, "b", p, object), p + ("b",), channels),
            "window_ns": r.get(g, "window_ns", p, float, 1.0, minimum=0, exclusive=True),
            "delay_ps": r.get(g, "delay_ps", p, float, None if kind == "cross" else 0.0),
            "subtract_accidentals": r.get(g, "subtract_accidentals", p, bool, False),
        }
        if doc["name"] in g2_names:
            r.fail(f"duplicate g2 name {doc['name']!r}", p + ("name",))
        g2_names.add(doc["name"])
        out["g2"].append(doc)
    if item.get("cs") is not None:
        p = path + ("cs",)
        cs = r.mapping(item["cs"], p)
        r.check_keys(cs, {"si", "ss", "ii"}, p)
        doc = {}
        for key in ("si", "ss", "ii"):
            doc[key] = r.get(cs, key, p, str)
            if doc[key] not in g2_names:
                r.fail(f"refers to unknown g2 entry {doc[key]!r}", p + (key,))
        out["cs"] = doc
    if item.get("spectrum") is not None:
        p = path + ("spectrum",)
        sp = r.mapping(item["spectrum"], p)
        r.check_keys(sp, {"histogram", "pump_index", "lambda_bin_nm", "zero_delay_ps", "timing_fwhm_ps",
                          "lambda_range_nm", "min_prominence", "subtract_background", "fiber"}, p)
        hist = r.get(sp, "histogram", p, str)
        if hist not in names:
            r.fail(f"refers to unknown histogram {hist!r}", p + ("histogram",))
        zero = sp.get("zero_delay_ps", 0.0)
        if zero != "auto" and (isinstance(zero, bool) or not isinstance(zero, (int, float))):
            r.fail("expected a number or 'auto'", p + ("zero_delay_ps",))
        rng = sp.get("lambda_range_nm")
        if rng is not None and (not isinstance(rng, list) or len(rng) != 2 or not rng[0] < rng[1]):
            r.fail("expected [low, high]", p + ("lambda_range_nm",))
        fiber = None
        if sp.get("fiber") is not None:
            (_, fiber_spec), fdoc = _parse_stage(r, {"fiber": sp["fiber"]}, p)
            fiber = fdoc["fiber"]
        out["spectrum"] = {
            "histogram": hist,
            "pump_index": r.get(sp, "pump_index", p, int, 0, minimum=0, maximum=n_pumps - 1),
            "lambda_bin_nm": r.get(sp, "lambda_bin_nm", p, float, 1.0, minimum=0, exclusive=True),
            "zero_delay_ps": zero if zero == "auto" else float(zero),
            "timing_fwhm_ps": r.get(sp, "timing_fwhm_ps", p, float, None, minimum=0, exclusive=True),
            "lambda_range_nm": None if rng is None else [float(rng[0]), float(rng[1])],
            "min_prominence": r.get(sp, "min_prominence", p, float, 0.05, minimum=0, maximum=1),
            "subtract_background": r.get(sp, "subtract_background", p, bool, True),
            "fiber": fiber,
        }
    if item.get("graph") is not None:
        p = path + ("graph",)
        g = item["graph"]
        g = {} if g is True else r.mapping(g, p)
        r.check_keys(g, {"tolerance_nm", "min_coupling"}, p)
        out["graph"] = {
            "tolerance_nm": r.get(g, "tolerance_nm", p, float, None, minimum=0, exclusive=True),
            "min_coupling": r.get(g, "min_coupling", p, float, 1e-3, minimum=0, maximum=1),
        }
    if item.get("scan") is not None:
        p = path + ("scan",)
        sc = r.mapping(item["scan"], p)
        r.check_keys(sc, {"param", "values", "g2", "reference_nm"}, p)
        values = r.seq(r.get(sc, "values", p, list), p + ("values",))
        for j, v in enumerate(values):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                r.fail("expected a number", p + ("values", j))
        param = r.get(sc, "param", p, str, choices=SCAN_PARAMS)
        if param == "pump_power" and any(v <= 0 for v in values):
            r.fail("pump powers must be positive", p + ("values",))
        g2_ref = r.get(sc, "g2", p, str, None)
        if g2_ref is not None and g2_ref not in g2_names:
            r.fail(f"refers to unknown g2 entry {g2_ref!r}", p + ("g2",))
        out["scan"] = {
            "param": param,
            "values": [float(v) for v in values],
            "g2": g2_ref,
            "reference_nm": r.get(sc, "reference_nm", p, float, None, minimum=0, exclusive=True),
        }
    return out


def parse_scenario(data, source=None, lines=None):
    """Validate a scenario mapping and return a :class:`Scenario`."""
    r = _Reader(lines or {}, source)
    data = r.mapping(data, ())
    r.check_keys(data, {"schema_version", "name", "description", "seed", "duration_s", "metasurfaces",
                        "pumps", "source", "detection", "analysis"}, ())
    version = r.get(data, "schema_version", (), int)
    if version != SCHEMA_VERSION:
        r.fail(f"unsupported schema_version {version}; this build reads {SCHEMA_VERSION}", ("schema_version",))
    name = r.get(data, "name", (), str, "scenario")
    seed = r.get(data, "seed", (), int, minimum=0, maximum=2 ** 64 - 1)
    duration = r.get(data, "duration_s", (), float, minimum=0, exclusive=True)
    metasurfaces, placements, ms_docs = _parse_metasurfaces(r, r.get(data, "metasurfaces", (), list),
                                                             ("metasurfaces",))
    pumps, pump_docs = _parse_pumps(r, r.get(data, "pumps", (), list), ("pumps",))
    source_doc = _parse_source(r, data.get("source"), ("source",))
    routing_in = data.get("detection") if data.get("detection") is not None else DEFAULT_ROUTING
    routing, routing_doc = _parse_node(r, routing_in, ("detection",), "", set())
    channels = routing.channels()
    analysis = _parse_analysis(r, data.get("analysis"), ("analysis",), channels, len(pumps))
    spec = analysis["spectrum"]
    if spec is not None and spec["fiber"] is None:
        fibers = [s for k, s in routing.stages if k == "fiber"]
        if not fibers:
            r.fail("no fiber given and no common fiber stage in detection", ("analysis", "spectrum"))
    document = {
        "schema_version": version,
        "name": name,
        "seed": seed,
        "duration_s": duration,
        "metasurfaces": ms_docs,
        "pumps": pump_docs,
        "source": source_doc,
        "detection": routing_doc,
        "analysis": analysis,
    }
    return Scenario(name, seed, duration, metasurfaces, placements, pumps, source_doc, routing,
                    analysis, document, source)


def bundled_scenarios():
    """Names of the scenarios shipped with the package."""
    root = resources.files("qomsim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_scenario_path(name_or_path):
    """A filesystem path, or the bundled scenario of that name."""
    path = Path(name_or_path)
    if path.exists():
        return path
    candidate = resources.files("qomsim") / "scenarios" / f"{name_or_path}.yaml"
    if candidate.is_file():
        return Path(str(candidate))
    raise ScenarioError(
        f"no scenario file or bundled scenario named {name_or_path!r} "
        f"(bundled: {', '.join(bundled_scenarios())})"
    )


def load_scenario(name_or_path, seed=None):
    """Read, validate and return a scenario; ``seed`` overrides the file's seed."""
    path = resolve_scenario_path(name_or_path)
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"cannot parse: {getattr(exc, 'problem', exc)}", (),
                            mark.line + 1 if mark else None, str(path)) from None
    lines = _line_map(text)
    if seed is not None and isinstance(data, dict):
        data = dict(data, seed=int(seed))
    return parse_scenario(data, source=str(path), lines=lines)
