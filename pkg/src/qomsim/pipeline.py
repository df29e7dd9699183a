"""Scenario execution: generate, route, detect, analyze, and write a bundle.

Every random draw descends from the scenario seed through named substreams:
``source`` chunks per (metasurface, pump), ``split``/``stage`` draws per
routing-tree position and ``detector`` draws per channel name.  Adding a
detector therefore leaves pair sampling untouched.

Output bundles are byte-reproducible: no timestamps, sorted JSON keys and
``repr`` floats.  Every file records the scenario hash.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import networkx
import numpy as np
import scipy
import sklearn
import yaml

from . import __version__
from ._validation import ValidationError, substream
from .correlations import (
    UndefinedEstimateError,
    coincidence_histogram,
    cs_test,
    g2_auto,
    g2_cross,
    power_scan_fit,
)
from .detection import (
    FiberSpec,
    Photons,
    TimestampStream,
    apply_attenuator,
    apply_bandpass,
    apply_beamsplitter,
    apply_dichroic,
    apply_fiber,
    detect,
    read_streams_csv,
    write_streams_csv,
)
from .graphs import build_graph
from .spdc import generate_events, pair_spectral_density
from .spectroscopy import SpectrumReconstructor, timing_fwhm_ps

STREAMS_FILE = "streams.csv"
MANIFEST_FILE = "manifest.json"


class HashMismatchError(ValidationError):
    """Streams were produced by a different scenario."""


@dataclass
class SimulationResult:
    events: object
    streams: dict
    model_rates: list = field(default_factory=list)


# --- simulation -------------------------------------------------------------

def _apply_stages(node, photons, seed, path):
    for k, (kind, spec) in enumerate(node.stages):
        if kind == "fiber":
            photons = apply_fiber(photons, spec)
        elif kind == "bandpass":
            photons = apply_bandpass(photons, spec, substream(seed, "stage", path, k))
        else:
            photons = apply_attenuator(photons, spec, substream(seed, "stage", path, k))
    return photons


def _route(node, photons, scenario, streams, path):
    seed = scenario.seed
    photons = _apply_stages(node, photons, seed, path)
    if node.detector is not None:
        streams[node.name] = detect(photons, node.detector, scenario.duration_s,
                                    substream(seed, "detector", node.name), node.name)
        return
    if node.split["kind"] == "beamsplitter":
        outs = apply_beamsplitter(photons, node.split["ratio"], substream(seed, "split", path))
    else:
        outs = apply_dichroic(photons, node.split["cutoff_nm"])
    for i, (child, ph) in enumerate(zip(node.outputs, outs)):
        _route(child, ph, scenario, streams, f"{path}/{i}")


def model_rates(scenario):
    """Model pair rate of every (metasurface, pump) combination."""
    src = scenario.source
    rows = []
    for mi, ms in enumerate(scenario.metasurfaces):
        for pi, pump in enumerate(scenario.pumps):
            sd = pair_spectral_density(ms, pump, rate_constant=src["rate_constant"],
                                       band_nm=tuple(src["band_nm"]))
            rows.append({"metasurface": ms.name, "pump_index": pi, "pump_nm": pump.wavelength_nm,
                         "power_mW": pump.power_mW, "pair_rate_cps": sd.total_rate})
    return rows


def simulate(scenario, n_jobs=1):
    src = scenario.source
    events = generate_events(
        scenario.metasurfaces, scenario.pumps, scenario.duration_s, src["stats_mode"], scenario.seed,
        rate_constant=src["rate_constant"], band_nm=tuple(src["band_nm"]),
        coherence_time_s=src["coherence_time_s"], thermal_modes=src["thermal_modes"],
        chunk_s=src["chunk_s"], n_jobs=n_jobs,
    )
    streams = {}
    _route(scenario.routing, Photons.from_events(events), scenario, streams, "root")
    ordered = {name: streams[name] for name in scenario.channels}
    return SimulationResult(events, ordered, model_rates(scenario))


# --- analysis ---------------------------------------------------------------

def merge_streams(streams, names):
    """Union of several channels as one stream (for multi-detector arms)."""
    if len(names) == 1:
        return streams[names[0]]
    times = np.sort(np.concatenate([streams[n].times_s for n in names]), kind="stable")
    duration = max(streams[n].duration_s for n in names)
    return TimestampStream("+".join(names), times, duration)


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def analyze(scenario, streams, *, only=None):
    """Run the scenario's analysis requests on ``streams``.

    Returns ``(report, artifacts)`` where ``artifacts`` holds histogram,
    spectrum and graph objects for writing.  ``only`` restricts the run to
    a subset of {"histograms", "g2", "cs", "spectrum", "graph"}.
    """
    want = set(only) if only is not None else {"histograms", "g2", "cs", "spectrum", "graph"}
    if "spectrum" in want:
        want.add("histograms")
    if "cs" in want:
        want.add("g2")
    an = scenario.analysis
    missing = [c for c in scenario.channels if c not in streams]
    needs_streams = want & {"histograms", "g2", "cs", "spectrum"}
    if missing and needs_streams:
        raise ValidationError(f"streams are missing channel(s): {', '.join(missing)}")

    report = {"channels": {}, "g2": {}, "histograms": {}, "warnings": []}
    for name in scenario.channels:
        s = streams.get(name)
        if s is None:
            continue
        entry = {"clicks": len(s), "rate_cps": s.rate_cps, "duration_s": s.duration_s}
        entry.update(s.meta)
        report["channels"][name] = entry
    artifacts = {"histograms": {}, "spectrum": None, "graph": None}

    if "histograms" in want:
        for h in an["histograms"]:
            hist = coincidence_histogram(merge_streams(streams, h["a"]), merge_streams(streams, h["b"]),
                                         h["bin_ps"], h["span_ps"])
            artifacts["histograms"][h["name"]] = hist
            report["histograms"][h["name"]] = {
                "total": int(hist.total), "bins": int(hist.counts.size), "bin_ps": h["bin_ps"],
                "accidental_level": hist.accidental_level,
            }

    estimates = {}
    if "g2" in want:
        for g in an["g2"]:
            a, b = merge_streams(streams, g["a"]), merge_streams(streams, g["b"])
            try:
                if g["kind"] == "cross":
                    est = g2_cross(a, b, g["window_ns"], delay_ps=g["delay_ps"],
                                   subtract_accidentals=g["subtract_accidentals"])
                else:
                    est = g2_auto(a, b, g["window_ns"], delay_ps=g["delay_ps"],
                                  subtract_accidentals=g["subtract_accidentals"])
            except UndefinedEstimateError as exc:
                report["warnings"].append(f"g2 {g['name']}: {exc}")
                report["g2"][g["name"]] = None
                continue
            estimates[g["name"]] = est
            report["g2"][g["name"]] = dict(est.as_dict(), kind=g["kind"])

    if "cs" in want and an["cs"] is not None:
        cs = an["cs"]
        if all(k in estimates for k in (cs["si"], cs["ss"], cs["ii"])):
            res = cs_test(estimates[cs["si"]], estimates[cs["ss"]], estimates[cs["ii"]])
            report["cs"] = dict(res.as_dict(), inputs=dict(cs))
        else:
            report["cs"] = None
            report["warnings"].append("cs: an input g2 estimate is undefined")

    if "spectrum" in want and an["spectrum"] is not None:
        sp = an["spectrum"]
        fiber = FiberSpec(**sp["fiber"]) if sp["fiber"] is not None else scenario.common_fiber()
        hist = artifacts["histograms"][sp["histogram"]]
        fwhm = sp["timing_fwhm_ps"]
        if fwhm is None:
            hdoc = next(h for h in an["histograms"] if h["name"] == sp["histogram"])
            dets = scenario.routing.detectors()
            fwhm = timing_fwhm_ps(dets[hdoc["a"][0]], dets[hdoc["b"][0]])
        pump_nm = scenario.pumps[sp["pump_index"]].wavelength_nm
        est = SpectrumReconstructor(pump_nm, fiber.length_km, fiber.dispersion_ps_per_nm_km,
                                    sp["lambda_bin_nm"], sp["zero_delay_ps"], fwhm,
                                    sp["subtract_background"])
        spectrum = est.fit_transform(hist)
        if sp["lambda_range_nm"] is not None:
            lo, hi = sp["lambda_range_nm"]
            keep = (spectrum.lambda_nm >= lo) & (spectrum.lambda_nm <= hi)
            spectrum.lambda_nm = spectrum.lambda_nm[keep]
            spectrum.intensity = spectrum.intensity[keep]
            spectrum.lambda_err_nm = spectrum.lambda_err_nm[keep]
        artifacts["spectrum"] = spectrum
        report["spectrum"] = {
            "peaks": spectrum.peaks(sp["min_prominence"]),
            "resolution_nm": spectrum.resolution_nm,
            "zero_delay_ps": est.zero_delay_,
            "pump_nm": pump_nm,
        }

    if "graph" in want and an["graph"] is not None:
        graph = graph_for(scenario)
        artifacts["graph"] = graph
        report["graph"] = {
            "classification": graph.classification,
            "coherent": graph.coherent,
            "vertices_nm": [v.center_nm for v in graph.vertices],
            "edges": [[e.a, e.b, e.pump_nm] for e in graph.edges],
            "notes": graph.notes,
            "warnings": graph.warnings,
        }
    return _json_safe(report), artifacts


def graph_for(scenario):
    g = scenario.analysis["graph"] or {"tolerance_nm": None, "min_coupling": 1e-3}
    placements = scenario.placements if any(p is not None for p in scenario.placements) else None
    if placements is not None:
        placements = [p if p is not None else (0.0, 0.0) for p in placements]
    return build_graph(scenario.metasurfaces, scenario.pumps, g["tolerance_nm"],
                       placements=placements, min_coupling=g["min_coupling"])


# --- scans ------------------------------------------------------------------

def scan_values(spec, steps=6):
    """Parse ``a..b`` (log-spaced for positive ends, else linear), ``+-x`` or a comma list."""
    text = str(spec).strip().replace("nm", "").replace("mW", "")
    if text.startswith(("±", "+-")):
        half = float(text.lstrip("±+-"))
        return np.linspace(-half, half, steps).tolist()
    if ".." in text:
        lo, hi = (float(v) for v in text.split("..", 1))
        if steps < 2:
            raise ValidationError("a range needs --steps >= 2")
        if lo > 0 and hi > 0:
            return np.geomspace(lo, hi, steps).tolist()
        return np.linspace(lo, hi, steps).tolist()
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse scan values {spec!r}") from None


def _scan_point(scenario, param, value, reference_nm, g2_name):
    if param == "pump_power":
        point = scenario.with_overrides(pump_power_mW=value)
    else:
        # detune the degenerate wavelength 2*lam_p from the reference resonance
        pump_nm = (reference_nm + value) / 2.0
        point = scenario.with_overrides(pump_wavelengths_nm=[pump_nm] * len(scenario.pumps))
    result = simulate(point)
    report, _ = analyze(point, result.streams, only={"g2"})
    row = {
        "value": value,
        "pump_nm": point.pumps[0].wavelength_nm,
        "power_mW": point.pumps[0].power_mW,
        "model_pair_rate_cps": sum(r["pair_rate_cps"] for r in result.model_rates),
        "pairs_generated": len(result.events),
    }
    for name, ch in report["channels"].items():
        row[f"rate_{name}_cps"] = ch["rate_cps"]
    est = report["g2"].get(g2_name) if g2_name else None
    row["g2"] = est["value"] if est else None
    row["g2_err"] = est["std_error"] if est else None
    row["coincidence_rate_cps"] = est["R_c"] if est else None
    return row


def run_scan(scenario, param=None, values=None, n_jobs=1):
    """Sweep pump power or detuning; returns ``(rows, summary)``.

    Every point reuses the scenario seed (common random numbers), and
    points run in parallel threads.  A pump-power scan is fitted with
    ``g2 = 1 + a * P**b``.
    """
    sc = scenario.analysis["scan"] or {}
    param = param or sc.get("param")
    if param not in ("pump_power", "detuning"):
        raise ValidationError("scan needs --param pump_power or detuning")
    if values is None:
        values = sc.get("values")
    if not values:
        raise ValidationError("scan needs values (scenario analysis.scan.values or --values)")
    g2_name = sc.get("g2") or next((g["name"] for g in scenario.analysis["g2"] if g["kind"] == "cross"), None)
    reference = sc.get("reference_nm") or scenario.metasurfaces[0].resonances[0].center_wavelength_nm

    def work(v):
        return _scan_point(scenario, param, float(v), reference, g2_name)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(work, values))
    else:
        rows = [work(v) for v in values]
    summary = {"param": param, "values": [float(v) for v in values], "g2": g2_name}
    if param == "detuning":
        summary["reference_nm"] = reference
    if param == "pump_power":
        pts = [(r["power_mW"], r["g2"]) for r in rows if r["g2"] is not None]
        errs = [r["g2_err"] for r in rows if r["g2"] is not None]
        if len({p for p, _ in pts}) >= 4:
            summary["fit"] = power_scan_fit(pts, errs).as_dict()
        else:
            summary["fit"] = None
    return _json_safe(rows), _json_safe(summary)


# --- bundle writing ---------------------------------------------------------

def _sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_json_safe(payload), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_table(path, rows, columns, header, fmt):
    if fmt == "json":
        _write_json(path, dict(header, columns=columns, rows=[[r.get(c) for c in columns] for r in rows]))
        return
    buf = io.StringIO()
    for k, v in header.items():
        buf.write(f"# {k}={v}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow(["" if r.get(c) is None else repr(r.get(c)) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def versions():
    return {
        "qomsim": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "networkx": networkx.__version__,
        "pyyaml": yaml.__version__,
    }


class BundleWriter:
    """Writes files into an output directory and tracks them for the manifest."""

    def __init__(self, out_dir, scenario, fmt="csv"):
        if fmt not in ("csv", "json"):
            raise ValidationError("format must be csv or json")
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.scenario = scenario
        self.fmt = fmt
        self.files = []
        self.header = {"scenario_sha256": scenario.sha256, "scenario": scenario.name}

    def path(self, name):
        self.files.append(name)
        return self.out / name

    def json(self, name, payload):
        _write_json(self.path(name), dict(payload, **self.header))

    def table(self, stem, rows, columns):
        _write_table(self.path(f"{stem}.{self.fmt}"), rows, columns, self.header, self.fmt)

    def streams(self, streams):
        write_streams_csv(self.path(STREAMS_FILE), list(streams.values()), dict(self.header, seed=self.scenario.seed))

    def histogram(self, name, hist):
        if self.fmt == "csv":
            hist.to_csv(self.path(f"histogram_{name}.csv"), self.header)
            return
        rows = [{"delay_ps": float(c), "counts": int(n)} for c, n in zip(hist.centers_ps, hist.counts)]
        self.table(f"histogram_{name}", rows, ["delay_ps", "counts"])

    def spectrum(self, spectrum):
        rows = [{"lambda_nm": float(a), "intensity": float(b), "lambda_err_nm": float(c)}
                for a, b, c in zip(spectrum.lambda_nm, spectrum.intensity, spectrum.lambda_err_nm)]
        self.table("spectrum", rows, ["lambda_nm", "intensity", "lambda_err_nm"])
        self.json("spectrum_meta.json", spectrum.metadata())

    def graph(self, graph):
        self.json("graph.json", graph.to_dict())
        dot = f"// scenario_sha256={self.scenario.sha256}\n" + graph.to_dot()
        self.path("graph.dot").write_text(dot, encoding="utf-8")

    def finish(self, command):
        manifest = {
            "command": command,
            "scenario_sha256": self.scenario.sha256,
            "scenario": self.scenario.name,
            "seed": self.scenario.seed,
            "schema_version": self.scenario.document["schema_version"],
            "versions": versions(),
            "files": {name: _sha256_file(self.out / name) for name in sorted(set(self.files))},
        }
        _write_json(self.out / MANIFEST_FILE, manifest)
        return manifest


def write_analysis(writer, report, artifacts, model=None):
    for name, hist in artifacts["histograms"].items():
        writer.histogram(name, hist)
    if artifacts["spectrum"] is not None:
        writer.spectrum(artifacts["spectrum"])
    if artifacts["graph"] is not None:
        writer.graph(artifacts["graph"])
    payload = dict(report)
    if model is not None:
        payload["source"] = model
    writer.json("report.json", payload)


def run(scenario, out_dir, *, fmt="csv", n_jobs=1):
    """The full generate, detect and analyze pipeline; returns the manifest."""
    writer = BundleWriter(out_dir, scenario, fmt)
    writer.json("scenario.json", {"document": scenario.document})
    result = simulate(scenario, n_jobs=n_jobs)
    writer.streams(result.streams)
    report, artifacts = analyze(scenario, result.streams)
    model = {"pairs_generated": len(result.events), "model_rates": result.model_rates}
    write_analysis(writer, report, artifacts, model)
    return writer.finish("run")


def run_simulate(scenario, out_dir, *, fmt="csv", n_jobs=1):
    writer = BundleWriter(out_dir, scenario, fmt)
    writer.json("scenario.json", {"document": scenario.document})
    result = simulate(scenario, n_jobs=n_jobs)
    writer.streams(result.streams)
    writer.json("source.json", {"pairs_generated": len(result.events), "model_rates": result.model_rates})
    return writer.finish("simulate")


def load_streams(path, scenario, force=False):
    """Read a streams CSV and check it was produced by ``scenario``.

    A recorded hash that differs raises :class:`HashMismatchError` unless
    ``force``.  A file without a hash (external data) is accepted and
    flagged in the returned note.
    """
    streams, header = read_streams_csv(path)
    recorded = header.get("scenario_sha256")
    note = None
    if recorded is None:
        note = "streams carry no scenario hash (external data); provenance not verified"
    elif recorded != scenario.sha256:
        if not force:
            raise HashMismatchError(
                f"{path} was produced by scenario {recorded[:12]}..., not {scenario.sha256[:12]}...; "
                "use --force to analyze anyway"
            )
        note = f"forced analysis of streams from scenario {recorded}"
    return streams, note


def run_analyze(scenario, streams_path, out_dir, *, fmt="csv", force=False, only=None, command="analyze"):
    streams, note = load_streams(streams_path, scenario, force)
    writer = BundleWriter(out_dir, scenario, fmt)
    report, artifacts = analyze(scenario, streams, only=only)
    if note:
        report["warnings"].append(note)
    write_analysis(writer, report, artifacts)
    return writer.finish(command)


def run_graph(scenario, out_dir, *, fmt="csv"):
    writer = BundleWriter(out_dir, scenario, fmt)
    report, artifacts = analyze(scenario, {}, only={"graph"} if scenario.analysis["graph"] else set())
    if artifacts["graph"] is None:
        artifacts["graph"] = graph_for(scenario)
        g = artifacts["graph"]
        report["graph"] = {"classification": g.classification, "coherent": g.coherent,
                           "vertices_nm": [v.center_nm for v in g.vertices],
                           "edges": [[e.a, e.b, e.pump_nm] for e in g.edges],
                           "notes": g.notes, "warnings": g.warnings}
    write_analysis(writer, _json_safe(report), artifacts)
    return writer.finish("graph")


def run_scan_bundle(scenario, out_dir, *, param=None, values=None, fmt="csv", n_jobs=1):
    rows, summary = run_scan(scenario, param, values, n_jobs)
    writer = BundleWriter(out_dir, scenario, fmt)
    columns = list(rows[0].keys()) if rows else ["value"]
    writer.table("scan", rows, columns)
    writer.json("scan_report.json", summary)
    return writer.finish("scan"), rows, summary
