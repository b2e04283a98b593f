"""Command-line entry point: run experiments, verify the theory suites,
and sweep a parameter across values.

Config files are flat ``key = value`` lines with ``#`` comments; keys match
the ExperimentConfig field names exactly. Each run writes ``log.csv``
(frozen schema, byte-identical across reruns) and a ``manifest`` that
echoes the effective config, so the manifest itself re-parses as a config
file and reproduces the run.

Exit codes: 0 success, 1 verification failure, 2 usage/parse error,
3 runtime divergence (non-finite values).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import __version__
from .federation import ExperimentConfig, RoundLog, run_experiment
from .verify import SUITES
from .zo import NonFiniteLossError

CSV_HEADER = "step,train_loss,test_acc,uplink_scalars,downlink_scalars,wall_ms"


class ConfigParseError(ValueError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def parse_config_text(text: str) -> ExperimentConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigParseError("expected 'key = value'", lineno, len(line) - len(line.lstrip()) + 1)
        key, value = (part.strip() for part in stripped.split("=", 1))
        if not key:
            raise ConfigParseError("empty key", lineno)
        if key in raw:
            raise ConfigParseError(f"duplicate key {key!r}", lineno)
        raw[key] = value
    try:
        return ExperimentConfig.from_mapping(raw)
    except KeyError as exc:
        key = str(exc).strip("'\"")
        raise ConfigParseError(str(exc).strip("'\""), _key_line(text, key)) from exc
    except ValueError as exc:
        raise ConfigParseError(str(exc), _value_line(text, str(exc))) from exc


def _key_line(text: str, message: str) -> int:
    key = message.split("'")[1] if "'" in message else message.split()[-1]
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.split("#", 1)[0].strip().startswith(key):
            return lineno
    return 1


def _value_line(text: str, message: str) -> int:
    first = message.split(":")[0].split()[0] if message else ""
    return _key_line(text, first) if first else 1


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def csv_lines(logs: list[RoundLog]) -> list[str]:
    # wall_ms is written as 0: the log must be byte-identical across reruns
    # and thread counts; measured timing lives in the manifest comments
    lines = [CSV_HEADER]
    for log in logs:
        lines.append(
            f"{log.step},{log.train_loss!r},{log.test_acc!r},"
            f"{log.uplink_scalars},{log.downlink_scalars},0"
        )
    return lines


def write_log_csv(logs: list[RoundLog], path: Path) -> None:
    path.write_text("\n".join(csv_lines(logs)) + "\n", encoding="utf-8")


def write_manifest(config: ExperimentConfig, out_dir: Path, wall_seconds: float,
                   outputs: list[str]) -> None:
    lines = [
        f"# cyber0 run manifest (version {__version__})",
        f"# wall_seconds: {wall_seconds:.3f}",
    ]
    lines += [f"# output: {name}" for name in outputs]
    lines += [f"{key} = {value}" for key, value in sorted(config.to_mapping().items())]
    (out_dir / "manifest").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _execute_run(config: ExperimentConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    try:
        result = run_experiment(config)
    except NonFiniteLossError as exc:
        print(f"error: run diverged: {exc}", file=sys.stderr)
        return 3
    write_log_csv(result.logs, out_dir / "log.csv")
    write_manifest(config, out_dir, time.monotonic() - started, ["log.csv"])
    last = result.logs[-1]
    print(f"wrote {out_dir / 'log.csv'}: {len(result.logs)} rows, "
          f"final step {last.step}, train_loss {last.train_loss:.6g}, "
          f"test_acc {last.test_acc:.4g}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 2
    except ConfigParseError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return 2
    return _execute_run(config, Path(args.out))


def cmd_verify(args: argparse.Namespace) -> int:
    suite = SUITES.get(args.suite)
    if suite is None:
        print(f"error: unknown suite {args.suite!r}; choose from {sorted(SUITES)}", file=sys.stderr)
        return 2
    results = suite()
    for res in results:
        print(res.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        base = load_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 2
    except ConfigParseError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return 2
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        print("error: empty sweep value list", file=sys.stderr)
        return 2
    if args.param not in base.to_mapping():
        print(f"error: unknown sweep parameter {args.param!r}", file=sys.stderr)
        return 2
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    summary = ["param,value,final_step,final_train_loss,final_test_acc,"
               "uplink_scalars,downlink_scalars"]
    for value in values:
        mapping = base.to_mapping()
        mapping[args.param] = value
        try:
            config = ExperimentConfig.from_mapping(mapping)
        except (KeyError, ValueError) as exc:
            print(f"error: {args.param}={value}: {exc}", file=sys.stderr)
            return 2
        sub_dir = out_root / f"{args.param}={value}"
        code = _execute_run(config, sub_dir)
        if code != 0:
            return code
        last_line = (sub_dir / "log.csv").read_text(encoding="utf-8").rstrip().splitlines()[-1]
        step, tr, acc, up, down, _ = last_line.split(",")
        summary.append(f"{args.param},{value},{step},{tr},{acc},{up},{down}")
    (out_root / "summary.csv").write_text("\n".join(summary) + "\n", encoding="utf-8")
    print(f"wrote {out_root / 'summary.csv'} ({len(values)} runs)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyber0",
        description="Byzantine-resilient federated zero-order optimization simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment from a config file")
    p_run.add_argument("config", help="flat key = value config file")
    p_run.add_argument("--out", required=True, help="output directory for log.csv and manifest")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="run the lemma/theorem verification checks")
    p_verify.add_argument("suite", help="lemmas, theorems, or all")
    p_verify.set_defaults(func=cmd_verify)

    p_sweep = sub.add_parser("sweep", help="run one experiment per parameter value")
    p_sweep.add_argument("config", help="base config file")
    p_sweep.add_argument("--param", required=True, help="config key to vary")
    p_sweep.add_argument("--values", required=True, help="comma-separated value list")
    p_sweep.add_argument("--out", default=".", help="output root directory")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
