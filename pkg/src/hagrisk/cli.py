"""Command-line pipeline: ``simulate``, ``fit``, ``cvar`` and ``report``.

Every command accepts ``--config FILE`` with flat ``key = value`` lines whose
keys are the long flag names (dashes or underscores). Flags given on the
command line win over the file.

A single ``--seed`` is the master seed. Each stage derives its own seed as
the first 8 bytes of ``sha256("<master>:<stage>")`` (big endian, top bit
cleared), so one integer reproduces the whole pipeline.

Exit codes: 0 success, 2 usage or configuration, 3 data parse, 4 sampler
failure, 5 convergence failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .cvar import DEFAULT_LEVELS, DEFAULT_M, compare_reports, estimate_cvar, load_report, save_report
from .inference import (
    SamplerConfig,
    SamplerError,
    converged,
    diagnostics,
    diagnostics_to_json,
    load_draws,
    sample_posterior,
    save_draws,
)
from .models import TABLE2_PARAMS, TABLE2_THRESHOLD, HagParams, ParameterError
from .panel import PanelFormatError, _atomic_write, export_panel, import_panel
from .simulator import simulate_panel

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_SAMPLER, EXIT_CONVERGENCE = 0, 2, 3, 4, 5
WORKERS_ENV = "HAGRISK_WORKERS"


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def stage_seed(master: int, stage: str) -> int:
    digest = hashlib.sha256(f"{master}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _levels(text) -> list:
    try:
        levels = [float(x) for x in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None
    if not levels or any(not 0 < q < 1 for q in levels):
        raise argparse.ArgumentTypeError("levels must lie in (0, 1)")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise argparse.ArgumentTypeError("levels must be strictly increasing")
    return levels


_HAG_FIELDS = list(asdict(TABLE2_PARAMS))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hagrisk", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        return p

    p = common(sub.add_parser("simulate", help="draw a synthetic panel from the HAG process"))
    for name in _HAG_FIELDS:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float,
                       help=f"default {getattr(TABLE2_PARAMS, name)}")
    p.add_argument("--T", dest="T", type=int, help="number of years (default 15)")
    p.add_argument("--u", type=float, help=f"threshold (default {TABLE2_THRESHOLD:g})")
    p.add_argument("--panel", help="output panel file (.json selects JSON)")
    p.add_argument("--truth", help="output JSON with parameters and latent paths")

    p = common(sub.add_parser("fit", help="sample a model posterior"))
    p.add_argument("--model", choices=("indep", "shared", "hag"))
    p.add_argument("--panel", help="input panel file")
    p.add_argument("--draws", help="output draws file")
    p.add_argument("--diagnostics", help="output diagnostics JSON")
    p.add_argument("--chains", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--samples", type=int, help="retained draws per chain (default 2000)")
    p.add_argument("--target-accept", dest="target_accept", type=float)
    p.add_argument("--max-tree-depth", dest="max_tree_depth", type=int)
    p.add_argument("--workers", type=int)

    p = common(sub.add_parser("cvar", help="posterior-predictive VaR/CVaR"))
    p.add_argument("--draws", help="input draws file")
    p.add_argument("--panel", help="panel file supplying the threshold")
    p.add_argument("--u", type=float, help="threshold; overrides the panel's")
    p.add_argument("--levels", type=_levels, help="e.g. '0.999 0.9995 0.99995'")
    p.add_argument("--M", dest="M", type=int, help=f"simulations (default {DEFAULT_M})")
    p.add_argument("--workers", type=int)
    p.add_argument("--report", help="output report JSON")
    p.add_argument("--table", help="optional aligned text table")

    p = sub.add_parser("report", help="join CVaR reports into one comparison table")
    p.add_argument("reports", nargs="+", help="report JSON files")
    p.add_argument("--out", help="write the table here as well as to stdout")
    return parser


def _resolve(args, parser, defaults: dict) -> argparse.Namespace:
    """Fill unset flags from the config file, then from ``defaults``."""
    conf = read_config(args.config) if getattr(args, "config", None) else {}
    known = vars(args)
    unknown = set(conf) - set(known)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
    # convert config strings with the same types argparse would use
    types = {a.dest: a.type for sp in parser._subparsers._group_actions
             for a in sp.choices[args.command]._actions}
    for key, value in conf.items():
        if known[key] is None:
            conv = types.get(key) or str
            try:
                known[key] = conv(value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise CliError(f"config key {key}: {exc}") from None
    for key, value in defaults.items():
        if known.get(key) is None:
            known[key] = value
    return argparse.Namespace(**known)


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise CliError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV)
    try:
        return int(env) if env else 1
    except ValueError:
        raise CliError(f"{WORKERS_ENV} must be an integer") from None


def cmd_simulate(args) -> int:
    _require(args, "panel", "truth")
    try:
        params = HagParams(**{k: getattr(args, k) for k in _HAG_FIELDS}).validate()
    except ParameterError as exc:
        raise CliError(f"invalid parameters: {exc}") from None
    if args.T < 1 or not args.u > 0:
        raise CliError("need T >= 1 and u > 0")
    seed = stage_seed(args.seed, "simulate")
    data, truth = simulate_panel(params, args.T, args.u, seed)
    export_panel(data, args.panel)
    payload = {
        "master_seed": args.seed, "seed": seed, "T": args.T, "u": args.u,
        "params": asdict(params),
        "w_f": truth.latents.w_f.tolist(), "w_s": truth.latents.w_s.tolist(),
        "z": truth.latents.z.tolist(), "intensity": truth.intensities.tolist(),
        "counts": data.counts.tolist(),
    }
    _atomic_write(args.truth, json.dumps(payload, indent=2) + "\n")
    print(f"wrote {args.panel} ({data.counts.sum()} events over {args.T} years) and {args.truth}")
    return EXIT_OK


def _load_panel(path):
    try:
        return import_panel(path)
    except FileNotFoundError:
        raise CliError(f"panel file not found: {path}") from None
    except (PanelFormatError, ValueError) as exc:
        raise CliError(f"cannot parse panel {path}: {exc}", EXIT_PARSE) from None


def cmd_fit(args) -> int:
    _require(args, "model", "panel", "draws", "diagnostics")
    try:
        cfg = SamplerConfig(chains=args.chains, warmup=args.warmup, draws=args.samples,
                            target_accept=args.target_accept, max_tree_depth=args.max_tree_depth,
                            seed=stage_seed(args.seed, "fit"), workers=_workers(args))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    data = _load_panel(args.panel)
    try:
        draws = sample_posterior(args.model, data, cfg)
    except (SamplerError, FloatingPointError) as exc:
        raise CliError(f"sampler failed for model {args.model}: {exc}", EXIT_SAMPLER) from None
    diag = diagnostics(draws)
    ok = converged(diag)
    diag["converged"] = ok
    diag["model"] = args.model
    save_draws(draws, args.draws)
    _atomic_write(args.diagnostics, diagnostics_to_json(diag) + "\n")
    for name, v in diag["parameters"].items():
        print(f"{name:>10}  mean {v['mean']:10.4f}  rhat {v['rhat']:.4f}  ess_bulk {v['ess_bulk']:7.0f}")
    print(f"divergences: {diag['divergences']}")
    if not ok:
        print("convergence: FAILED (need R-hat < 1.01 and bulk ESS > 400)", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_cvar(args) -> int:
    _require(args, "draws", "report")
    if args.M < 1:
        raise CliError("M must be positive")
    workers = _workers(args)
    u = args.u
    if u is None:
        u = _load_panel(args.panel).threshold if args.panel else TABLE2_THRESHOLD
    try:
        draws = load_draws(args.draws)
    except FileNotFoundError:
        raise CliError(f"draws file not found: {args.draws}") from None
    except (ValueError, KeyError, IndexError) as exc:
        raise CliError(f"cannot parse draws {args.draws}: {exc}", EXIT_PARSE) from None
    report = estimate_cvar(draws, u, args.levels, args.M, stage_seed(args.seed, "cvar"), workers)
    save_report(report, args.report)
    table = report.to_table()
    if args.table:
        _atomic_write(args.table, table + "\n")
    print(table)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        try:
            reports.append(load_report(path))
        except FileNotFoundError:
            raise CliError(f"report not found: {path}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise CliError(f"cannot parse report {path}: {exc}", EXIT_PARSE) from None
    try:
        table = compare_reports(reports)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if args.out:
        _atomic_write(args.out, table + "\n")
    print(table)
    return EXIT_OK


DEFAULTS = {
    "simulate": {**asdict(TABLE2_PARAMS), "T": 15, "u": TABLE2_THRESHOLD, "seed": 0},
    "fit": {"chains": 2, "warmup": 2000, "samples": 2000, "max_tree_depth": 10, "seed": 0},
    "cvar": {"levels": list(DEFAULT_LEVELS), "M": DEFAULT_M, "seed": 0},
    "report": {},
}
COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "cvar": cmd_cvar, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command != "report":
            args = _resolve(args, parser, DEFAULTS[args.command])
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"hagrisk {args.command}: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
