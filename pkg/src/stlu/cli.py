"""Command-line entry point: ``stlu {monitor,calibrate,simulate,bench}``.

Machine-readable results go to stdout; diagnostics go to stderr as one JSON
object per line.  Exit codes: 0 success, 2 input or contract error,
1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CandidateConfig, LossConfig, select_config
from .errors import ContractError, DataParseError, StluError
from .logic import Formula, parse, rescale, signal_keys
from .monitor import SignalEnv, robustness, verdict, verdict_from_robustness
from .signal import (
    Flowpipe,
    flowpipe_from_samples,
    load_flowpipe,
    load_samples,
    load_trace,
)
from .simloop import config_from_json, run_episode

SCHEMA_VERSION = 1

_UNIT_SECONDS = {"steps": None, "s": 1.0, "min": 60.0}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _warn(message: str) -> None:
    print(json.dumps({"level": "WARNING", "message": message}), file=sys.stderr)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_formula(args, default_epsilon=None) -> Formula:
    if args.spec is not None and args.spec_file is not None:
        raise ContractError("give either --spec or --spec-file, not both")
    if args.spec_file is not None:
        try:
            text = Path(args.spec_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataParseError(f"cannot read {args.spec_file}: {exc.strerror}") from None
    elif args.spec is not None:
        text = args.spec
    else:
        raise ContractError("a formula is required (--spec or --spec-file)")
    return parse(text.strip(), default_epsilon)


def _single_channel(phi: Formula) -> str | None:
    channels = {ch for ch, _ in signal_keys(phi)}
    return channels.pop() if len(channels) == 1 else None


def _to_steps(phi: Formula, unit: str, step_duration: float) -> Formula:
    seconds = _UNIT_SECONDS[unit]
    if seconds is None:
        return phi
    return rescale(phi, step_duration / seconds)


# --- subcommands ------------------------------------------------------------

def cmd_monitor(args) -> int:
    phi = _load_formula(args, args.epsilon)
    pipes = [load_flowpipe(p) for p in args.flowpipe]
    channel = _single_channel(phi)
    for path in args.samples:
        if args.epsilon is None:
            raise ContractError("--samples needs --epsilon to build a flowpipe")
        pipes.append(flowpipe_from_samples(load_samples(path, channel=channel), args.epsilon))
    for path in args.trace:
        tr = load_trace(path, channel=channel)
        pipes.append(Flowpipe(tr.values, tr.values, 1.0, tr.channel, tr.step_duration))
    if not pipes:
        raise ContractError("no signal given (--flowpipe, --samples or --trace)")
    env = SignalEnv(pipes)
    for ch, eps in env.missing(phi):
        _warn(f"no flowpipe registered for ({ch}, {eps})")
    phi = _to_steps(phi, args.time_unit, pipes[0].step_duration)
    at = args.at
    if _UNIT_SECONDS[args.time_unit] is not None:
        at = int(round(args.at * _UNIT_SECONDS[args.time_unit] / pipes[0].step_duration))
    rho = robustness(phi, env, at)
    flags = verdict(phi, env, at) if args.boolean else verdict_from_robustness(rho)
    sys.stdout.write(_dump({
        "schema_version": SCHEMA_VERSION,
        "lower": rho.lower,
        "upper": rho.upper,
        "strong": flags.strong,
        "weak": flags.weak,
    }))
    return 0


def _load_candidates(manifest_path: Path, epsilon: float, channel: str | None):
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataParseError(f"cannot read {manifest_path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataParseError(f"invalid JSON: {exc.msg}", row=exc.lineno, column=exc.colno) from None
    entries = manifest.get("candidates") if isinstance(manifest, dict) else None
    if not isinstance(entries, list) or not entries:
        raise DataParseError("manifest needs a non-empty 'candidates' list")
    base = manifest_path.parent
    out = []
    for entry in entries:
        if not isinstance(entry, dict) or "label" not in entry:
            raise DataParseError("each candidate needs a 'label'")
        pipes = []
        for rel in entry.get("flowpipes", []):
            pipes.append(load_flowpipe(base / rel))
        for rel in entry.get("samples", []):
            pipes.append(flowpipe_from_samples(load_samples(base / rel, channel=channel), epsilon))
        out.append(CandidateConfig(str(entry["label"]), pipes))
    return out


def cmd_calibrate(args) -> int:
    phi = _load_formula(args, args.epsilon)
    channel = _single_channel(phi)
    target_dir = Path(args.targets)
    if not target_dir.is_dir():
        raise DataParseError(f"targets directory {target_dir} does not exist")
    paths = sorted(p for p in target_dir.iterdir() if p.suffix.lower() in (".csv", ".json"))
    if not paths:
        raise DataParseError(f"no .csv or .json traces in {target_dir}")
    targets = [load_trace(p, channel=channel) for p in paths]
    cfg = LossConfig(beta=args.beta, epsilon=args.epsilon)
    candidates = _load_candidates(Path(args.candidates), cfg.epsilon, channel)
    ranking = select_config(candidates, targets, phi, cfg)
    sys.stdout.write(_dump({
        "schema_version": SCHEMA_VERSION,
        "beta": cfg.beta,
        "ranking": [{"label": r.label, "mean_loss": r.mean_loss, "f1": r.f1} for r in ranking],
    }))
    return 0


def cmd_simulate(args) -> int:
    path = Path(args.config)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataParseError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataParseError(f"invalid JSON: {exc.msg}", row=exc.lineno, column=exc.colno) from None
    cfg = config_from_json(obj)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.workers is not None:
        cfg = cfg.replace(predictor=dataclasses.replace(cfg.predictor, workers=args.workers))
    report = run_episode(cfg)
    payload = {"schema_version": SCHEMA_VERSION, "seed": cfg.seed, **report.to_json()}
    text = _dump(payload)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    phi = _load_formula(args, 0.95)
    try:
        lengths = [int(x) for x in args.lengths.split(",") if x.strip()]
    except ValueError:
        raise ContractError(f"--lengths must be comma-separated integers, got {args.lengths!r}") from None
    if not lengths or min(lengths) < 1:
        raise ContractError("--lengths must be positive")
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["length", "seconds"])
    for n in lengths:
        pipes = []
        for ch, eps in sorted(signal_keys(phi)):
            mid = rng.normal(0.0, 10.0, n)
            half = rng.uniform(0.0, 5.0, n)
            pipes.append(Flowpipe(mid - half, mid + half, eps, ch))
        env = SignalEnv(pipes)
        best = float("inf")
        for _ in range(args.repeat):
            start = time.perf_counter()
            robustness(phi, env, 0)
            best = min(best, time.perf_counter() - start)
        writer.writerow([n, f"{best:.6f}"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stlu", description="STL-U predictive monitoring toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="seed for every random draw")
    # --seed is accepted before or after the subcommand
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for every random draw")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def spec_args(p):
        p.add_argument("--spec", help="formula text, e.g. 'G[0,3](BG{0.95} > 70)'")
        p.add_argument("--spec-file", help="file holding the formula text")

    p = sub.add_parser("monitor", parents=[common], help="robustness interval and verdict of a formula")
    spec_args(p)
    p.add_argument("--flowpipe", action="append", default=[], help="flowpipe JSON (repeatable)")
    p.add_argument("--samples", action="append", default=[], help="Monte Carlo sample CSV/JSON (repeatable)")
    p.add_argument("--trace", action="append", default=[], help="single trace CSV/JSON (repeatable)")
    p.add_argument("--epsilon", type=float, default=None,
                   help="confidence level for un-annotated signals and for --samples")
    p.add_argument("--at", type=int, default=0, help="evaluation time (default 0)")
    p.add_argument("--time-unit", choices=sorted(_UNIT_SECONDS), default="steps",
                   help="unit of formula intervals and --at")
    p.add_argument("--boolean", action="store_true",
                   help="compute strong/weak with the boolean monitor instead of the interval signs")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("calibrate", parents=[common], help="rank candidate prediction configurations by loss")
    spec_args(p)
    p.add_argument("--targets", required=True, help="directory of target trace CSV/JSON files")
    p.add_argument("--candidates", required=True, help="candidate manifest JSON")
    p.add_argument("--beta", type=float, default=0.5, help="weight of the robustness term (default 0.5)")
    p.add_argument("--epsilon", type=float, default=0.95,
                   help="confidence level for sample-based candidates (default 0.95)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", parents=[common], help="run one closed-loop episode")
    p.add_argument("--config", required=True, help="scenario JSON")
    p.add_argument("--out", help="report JSON path (default stdout)")
    p.add_argument("--workers", type=int, default=None, help="threads for predictor rollouts")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common], help="monitoring wall time versus flowpipe length")
    spec_args(p)
    p.add_argument("--lengths", default="1000,10000,100000", help="comma-separated flowpipe lengths")
    p.add_argument("--repeat", type=int, default=3, help="best-of repetitions per length")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _emit_error("usage", str(exc))
        return 2
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    if args.seed is not None and args.seed < 0:
        _emit_error("usage", "--seed must be non-negative")
        return 2
    try:
        return args.func(args)
    except StluError as exc:
        _emit_error(exc.kind, str(exc))
        return 2
    except Exception as exc:  # pragma: no cover - reported, not handled
        _emit_error("internal", f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
