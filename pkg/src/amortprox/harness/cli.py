from __future__ import annotations

import argparse
import sys
import uuid
from pathlib import Path

from amortprox.errors import AmortProxError, ConfigError, ConvergenceError, TrainingDivergedError
from amortprox.utils.apo_logger import init_logger, logger
from amortprox.utils.config_mgr import reload_config
from amortprox.utils.report import build_report

from .checks import CHECKS, CheckContext, run_checks
from .config import load_experiment, load_sweep
from .ppm_demo import DEFAULT_REGIMES, ppm_demo, write_curves
from .runner import grid, run

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_CHECK_FAILED = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amortprox", description="Amortized proximal optimization experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Train one experiment and write its metrics")
    p_run.add_argument("--config", required=True, help="Experiment config (JSON)")
    p_run.add_argument("--out", required=True, help="Output directory")

    p_grid = sub.add_parser("grid", help="Run the Cartesian product of a sweep")
    p_grid.add_argument("--config", required=True, help="Template experiment config (JSON)")
    p_grid.add_argument("--sweep", required=True, help="Sweep spec (JSON)")
    p_grid.add_argument("--out", required=True, help="Output directory")
    p_grid.add_argument("--parallel", type=int, default=None, help="Concurrent runs (default GRID_PARALLEL)")

    p_check = sub.add_parser("check", help="Run the oracle and invariant checks")
    p_check.add_argument("--json", default=None, help="Also write the report to this file")
    p_check.add_argument("--only", nargs="+", choices=sorted(CHECKS), default=None, help="Subset of check groups")
    p_check.add_argument("--seed", type=int, default=0)

    p_demo = sub.add_parser("ppm-demo", help="1D exact proximal update curves")
    p_demo.add_argument("--out", required=True, help="Output CSV")
    p_demo.add_argument("--lambda-fsd", type=float, nargs="+", default=None)
    p_demo.add_argument("--lambda-wsd", type=float, nargs="+", default=None)
    p_demo.add_argument("--seed", type=int, default=0)
    return parser


def _regimes(args: argparse.Namespace) -> tuple[tuple[str, float, float], ...]:
    if args.lambda_fsd is None and args.lambda_wsd is None:
        return DEFAULT_REGIMES
    fsd = args.lambda_fsd or [0.0]
    wsd = args.lambda_wsd or [0.0]
    if len(fsd) != len(wsd) and 1 not in (len(fsd), len(wsd)):
        raise ConfigError("--lambda-fsd and --lambda-wsd must have equal lengths or one value")
    n = max(len(fsd), len(wsd))
    fsd = fsd * n if len(fsd) == 1 else fsd
    wsd = wsd * n if len(wsd) == 1 else wsd
    return tuple((f"regime{i}", f, w) for i, (f, w) in enumerate(zip(fsd, wsd)))


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_experiment(args.config)
    init_logger(cfg.resolved().config_hash())
    result = run(cfg, args.out)
    print(f"{result.metrics_path}: final loss {result.final_loss:.6g}")
    return EXIT_OK


def cmd_grid(args: argparse.Namespace) -> int:
    template = load_experiment(args.config)
    sweep = load_sweep(args.sweep)
    init_logger(uuid.uuid4().hex)
    summary = grid(template, sweep, args.out, args.parallel)
    print(summary.to_string(index=False))
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    init_logger(uuid.uuid4().hex)
    report = run_checks(CheckContext(seed=args.seed), args.only)
    payload = build_report(report["success"], report["message"], report.get("data"))
    if args.json:
        path = Path(args.json)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(payload + "\n", encoding="utf-8")
    print(payload)
    return EXIT_OK if report["success"] else EXIT_CHECK_FAILED


def cmd_ppm_demo(args: argparse.Namespace) -> int:
    init_logger(uuid.uuid4().hex)
    curves = ppm_demo(_regimes(args), seed=args.seed)
    path = write_curves(curves, args.out)
    for c in curves:
        far, near = c.locality()
        print(f"{c.name}: mean |Δf| off-window {far:.4g}, |Δf| at example {near:.4g}")
    print(f"Wrote {path}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "grid": cmd_grid, "check": cmd_check, "ppm-demo": cmd_ppm_demo}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    reload_config()
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as e:
        print(f"diverged at step {e.step}: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConvergenceError as e:
        print(f"inner solver did not converge (|grad|={e.last_grad_norm:.3g}): {e}", file=sys.stderr)
        return EXIT_ERROR
    except AmortProxError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
