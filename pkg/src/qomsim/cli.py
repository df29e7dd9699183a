"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, pipeline
from ._validation import ValidationError
from .scenario import ScenarioError, bundled_scenarios, load_scenario

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors already; keep the message on stderr
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    return n


def _seed(text):
    n = int(text)
    if not 0 <= n < 2 ** 64:
        raise argparse.ArgumentTypeError("--seed must be an unsigned 64-bit integer")
    return n


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario_pos", nargs="?", metavar="SCENARIO",
                        help="scenario file or bundled scenario name")
    common.add_argument("--scenario", help="scenario file or bundled scenario name")
    common.add_argument("--out", default="qomsim-out", help="output directory (default: %(default)s)")
    common.add_argument("--seed", type=_seed, help="override the scenario seed")
    common.add_argument("--threads", type=_threads, default=1, help="worker threads")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")

    parser = _Parser(prog="qomsim", description="Metasurface photon-pair simulator and analysis toolkit.")
    parser.add_argument("--version", action="version", version=f"qomsim {__version__}")
    parser.add_argument("--list-scenarios", action="store_true", help="print bundled scenario names")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    sub.add_parser("run", parents=[common], help="simulate and analyze; write a full bundle")
    sub.add_parser("simulate", parents=[common], help="write detector timestamp streams")
    for name, text in (("analyze", "analyze timestamp streams"), ("spectrum", "fiber-assisted spectrum")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--streams", help="streams CSV (default: simulate first)")
        p.add_argument("--force", action="store_true", help="accept streams from another scenario")
    sub.add_parser("graph", parents=[common], help="entanglement graph of the pump/resonance set")
    p = sub.add_parser("scan", parents=[common], help="sweep pump power or detuning")
    p.add_argument("--param", choices=("pump_power", "detuning"))
    p.add_argument("--values", help="comma list, a..b range or +-x (detuning)")
    p.add_argument("--range", dest="range_", help="alias of --values, e.g. '+-100nm'")
    p.add_argument("--steps", type=int, default=6, help="points for a range (default: %(default)s)")
    return parser


def _summary(command, manifest, out, extra=None):
    lines = [f"{command}: scenario {manifest['scenario']} ({manifest['scenario_sha256'][:12]}), "
             f"seed {manifest['seed']}, {len(manifest['files'])} files in {out}"]
    if extra:
        lines.extend(extra)
    return "\n".join(lines)


def _report_lines(out):
    path = Path(out) / "report.json"
    if not path.exists():
        return []
    report = json.loads(path.read_text(encoding="utf-8"))
    lines = []
    for name, g in (report.get("g2") or {}).items():
        if g:
            lines.append(f"  g2 {name} = {g['value']:.4g} +- {g['std_error']:.2g}")
    cs = report.get("cs")
    if cs:
        lines.append(f"  CS: lhs {cs['lhs']:.4g} vs rhs {cs['rhs']:.4g}, violated={cs['violated']} "
                     f"({cs['sigma_violation']:.1f} sigma)")
    sp = report.get("spectrum")
    if sp:
        peaks = ", ".join(f"{p['center_nm']:.1f}" for p in sp["peaks"])
        lines.append(f"  spectrum peaks (nm): {peaks}")
    gr = report.get("graph")
    if gr:
        lines.append(f"  graph: {gr['classification']}, coherent={gr['coherent']}")
    return lines


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_scenarios:
        print("\n".join(bundled_scenarios()))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("qomsim: error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE
    name = args.scenario or args.scenario_pos
    if name is None:
        print(f"qomsim {args.command}: error: --scenario is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        scenario = load_scenario(name, seed=args.seed)
        out = args.out
        if args.command == "run":
            manifest = pipeline.run(scenario, out, fmt=args.format, n_jobs=args.threads)
            print(_summary("run", manifest, out, _report_lines(out)))
        elif args.command == "simulate":
            manifest = pipeline.run_simulate(scenario, out, fmt=args.format, n_jobs=args.threads)
            print(_summary("simulate", manifest, out))
        elif args.command in ("analyze", "spectrum"):
            only = {"spectrum"} if args.command == "spectrum" else None
            if args.command == "spectrum" and scenario.analysis["spectrum"] is None:
                raise ScenarioError("the scenario has no analysis.spectrum request", ("analysis", "spectrum"),
                                    None, scenario.source_path)
            streams_path = args.streams
            if streams_path is None:
                pipeline.run_simulate(scenario, out, fmt=args.format, n_jobs=args.threads)
                streams_path = Path(out) / pipeline.STREAMS_FILE
            manifest = pipeline.run_analyze(scenario, streams_path, out, fmt=args.format, force=args.force,
                                            only=only, command=args.command)
            print(_summary(args.command, manifest, out, _report_lines(out)))
        elif args.command == "graph":
            manifest = pipeline.run_graph(scenario, out, fmt=args.format)
            print(_summary("graph", manifest, out, _report_lines(out)))
        elif args.command == "scan":
            spec = args.values or args.range_
            values = pipeline.scan_values(spec, args.steps) if spec else None
            manifest, rows, summary = pipeline.run_scan_bundle(
                scenario, out, param=args.param, values=values, fmt=args.format, n_jobs=args.threads)
            extra = [f"  {summary['param']} = {r['value']:.4g}: model rate {r['model_pair_rate_cps']:.4g} /s, "
                     f"g2 {r['g2'] if r['g2'] is None else format(r['g2'], '.4g')}" for r in rows]
            fit = summary.get("fit")
            if fit:
                extra.append(f"  fit g2 = 1 + a*P^b: b = {fit['free_exponent']:.3f} "
                             f"+- {fit['free_exponent_error']:.3f}")
            print(_summary("scan", manifest, out, extra))
    except ScenarioError as exc:
        print(f"qomsim: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"qomsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        print(f"qomsim: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
