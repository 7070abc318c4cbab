"""
Command-line front door.

    python -m kinex <command> [flags]

A JSON file given with --config is loaded first, flags override it, and the
result is validated before anything runs. Exit codes: 0 success, 2 invalid
input or a domain error, 1 anything unexpected.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from kinex import __version__
from kinex.core.artifacts import prepare_output_dir
from kinex.core.config import DEFAULT_OUTPUT_DIR, ENVIRONMENT, LOG_LEVEL, SENTRY_DSN
from kinex.core.errors import ConfigurationError, KinexError
from kinex.core.experiments import FIGURES, execute
from kinex.schemas.common import Violation, check
from kinex.schemas.experiments import ExperimentConfig

try:
    import sentry_sdk
except ImportError:
    sentry_sdk = None

logger = logging.getLogger("kinex")

Path_ = Tuple[str, ...]

# Flag destination -> location in the config document, per command.
LAW_FLAGS: Dict[str, Path_] = {
    "law": ("initial", "kind"),
    "k": ("initial", "k"),
    "law_lambda": ("initial", "lam"),
    "law_n": ("initial", "n"),
    "gamma": ("initial", "gamma"),
    "law_K": ("initial", "K"),
    "law_mean": ("initial", "mean"),
    "law_file": ("initial", "path"),
}

FLAG_PATHS: Dict[str, Dict[str, Path_]] = {
    "simulate": {
        "n": ("N",),
        "events": ("events",),
        "snapshot_every": ("snapshot_every",),
        "rule": ("rule", "kind"),
        "s": ("rule", "s"),
        "initial": ("initial", "kind"),
        "k": ("initial", "k"),
        "a": ("initial", "a"),
        "b": ("initial", "b"),
        "time_convention": ("time_convention",),
    },
    "meanfield": {
        **LAW_FLAGS,
        "lam": ("target_lambda",),
        "K": ("ode", "K"),
        "dt": ("ode", "dt"),
        "t_end": ("ode", "t_end"),
    },
    "couple": {
        **LAW_FLAGS,
        "lam": ("lam",),
        "m": ("M",),
        "t_end": ("t_end",),
        "couple_replicas": ("replicas",),
        "points": ("points",),
    },
    "chain": {
        "n": ("N",),
        "total": ("total",),
    },
    "laplace": {
        **LAW_FLAGS,
        "t_end": ("t_end",),
        "depth": ("M",),
        "dt": ("dt",),
        "mu_low": ("mu_low",),
        "mu_high": ("mu_high",),
    },
    "metrics": {
        "p": ("p",),
        "q": ("q",),
        "trace": ("trace",),
        "window": ("window",),
        "wealth": ("wealth",),
    },
    "reproduce": {
        "figure": ("figure",),
        "n": ("n",),
        "events": ("events",),
        "snapshot_every": ("snapshot_every",),
        "lam": ("lam",),
        "t_end": ("t_end",),
        "s": ("s",),
    },
}

# Top-level keys any command may override.
GLOBAL_FLAGS = ("seed", "output_dir", "workers", "replicas")


def _add_law_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--law", choices=["dirac", "poisson", "binomial", "tilted_uniform", "file"],
                        help="initial law")
    parser.add_argument("--k", type=int, help="location of the point mass")
    parser.add_argument("--law-lambda", dest="law_lambda", type=float, help="Poisson rate of the initial law")
    parser.add_argument("--law-n", dest="law_n", type=int, help="binomial size")
    parser.add_argument("--gamma", type=float, help="binomial probability")
    parser.add_argument("--law-K", dest="law_K", type=int, help="support bound / truncation of the initial law")
    parser.add_argument("--law-mean", dest="law_mean", type=float, help="mean of the tilted uniform law")
    parser.add_argument("--law-file", dest="law_file", help="Pmf JSON or n,p_n CSV")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--workers", type=int, help="worker processes (capped by KINEX_THREADS)")
    common.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    common.add_argument("--verbose", action="store_true", help="DEBUG logging")

    parser = argparse.ArgumentParser(prog="kinex", description="Binomial reshuffling laboratory")
    parser.add_argument("--version", action="version", version=f"kinex {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    kw = dict(parents=[common], argument_default=argparse.SUPPRESS)

    p = sub.add_parser("simulate", help="N-agent exchange simulation", **kw)
    p.add_argument("--n", type=int, help="number of agents")
    p.add_argument("--events", type=int)
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    p.add_argument("--rule", choices=["binomial", "uniform", "repeated_average", "saving"])
    p.add_argument("--s", type=float, help="reshuffled fraction of the saving rule")
    p.add_argument("--initial", choices=["dirac", "uniform_range", "custom"])
    p.add_argument("--k", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--time-convention", dest="time_convention", choices=["discrete", "poisson_clock"])
    p.add_argument("--replicas", type=int)

    p = sub.add_parser("meanfield", help="integrate dp/dt = Q[p]", **kw)
    _add_law_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, help="Poisson rate of the comparison target")
    p.add_argument("--K", type=int, help="truncation index")
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)

    p = sub.add_parser("couple", help="shared-coin coupling with the Poisson copy", **kw)
    _add_law_flags(p)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--m", type=int, help="ensemble size")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--replicas", dest="couple_replicas", type=int)
    p.add_argument("--points", type=int)

    p = sub.add_parser("chain", help="exact finite-N Markov chain", **kw)
    p.add_argument("--n", type=int, help="number of agents")
    p.add_argument("--total", type=int, help="total wealth")

    p = sub.add_parser("laplace", help="generating-function dynamical system", **kw)
    _add_law_flags(p)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--depth", type=int, help="truncation depth M")
    p.add_argument("--dt", type=float)
    p.add_argument("--mu-low", dest="mu_low", type=float)
    p.add_argument("--mu-high", dest="mu_high", type=float)

    p = sub.add_parser("metrics", help="distances, Gini and decay fits of saved artifacts", **kw)
    p.add_argument("--p", help="Pmf file")
    p.add_argument("--q", help="Pmf file")
    p.add_argument("--trace", help="t,value CSV")
    p.add_argument("--window", type=float, nargs=2, metavar=("START", "END"))
    p.add_argument("--wealth", help="CSV with a value column")

    p = sub.add_parser("reproduce", help="named figure and result reproductions", **kw)
    p.add_argument("figure", choices=sorted(FIGURES))
    p.add_argument("--n", type=int)
    p.add_argument("--events", type=int)
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--s", type=float)
    return parser


def _read_config_file(path: str) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"Cannot read config {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config {path} must hold a JSON object")
    # A manifest carries the resolved config under "config".
    if "artifacts" in data and isinstance(data.get("config"), dict):
        data = data["config"]
    return data


def _set(data: Dict[str, Any], path: Path_, value: Any) -> None:
    node = data
    for key in path[:-1]:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    node[path[-1]] = value


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file, then flag overrides, parsed into an ExperimentConfig."""
    flags = vars(args)
    data = _read_config_file(flags["config"]) if "config" in flags else {}
    data["command"] = args.command
    for name in GLOBAL_FLAGS:
        if name in flags:
            data[name] = flags[name]
    for dest, path in FLAG_PATHS[args.command].items():
        if dest in flags:
            _set(data, (args.command,) + path, flags[dest])
    return ExperimentConfig.model_validate(data)


def validate_config(cfg: ExperimentConfig) -> List[Violation]:
    """Every unmet precondition of the active command; empty when it can run."""
    out: List[Violation] = []
    check(out, 0 <= cfg.seed < 2 ** 64, "seed", "0 ≤ seed < 2^64", cfg.seed)
    check(out, cfg.replicas >= 1, "replicas", "replicas ≥ 1", cfg.replicas)
    if cfg.workers is not None:
        check(out, cfg.workers >= 1, "workers", "workers ≥ 1", cfg.workers)
    prefix = f"{cfg.command}."
    out.extend(cfg.block().violations(prefix=prefix))
    return out


def default_output_dir(cfg: ExperimentConfig) -> Path:
    label = f"reproduce-{cfg.reproduce.figure}" if cfg.command == "reproduce" else cfg.command
    return Path(DEFAULT_OUTPUT_DIR) / f"{label}-seed{cfg.seed}"


def configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, LOG_LEVEL, logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logger.setLevel(level)


def init_sentry() -> None:
    if sentry_sdk is not None and SENTRY_DSN:
        sentry_sdk.init(dsn=SENTRY_DSN, environment=ENVIRONMENT, traces_sample_rate=0.0)


def _one_line(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        return "; ".join(
            f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
    return " ".join(str(exc).split())


def _discard_if_empty(run_dir: Optional[Path]) -> None:
    """Remove a run directory this invocation created when the run wrote nothing into it."""
    if run_dir is not None and run_dir.is_dir() and not any(run_dir.iterdir()):
        run_dir.rmdir()


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, validate, run. Returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    configure_logging(getattr(args, "verbose", False))
    init_sentry()
    created: Optional[Path] = None
    try:
        cfg = load_config(args)
        problems = validate_config(cfg)
        if problems:
            print("kinex: invalid configuration: " + "; ".join(str(v) for v in problems), file=sys.stderr)
            return 2
        target = Path(cfg.output_dir or default_output_dir(cfg))
        fresh = not target.exists()
        run_dir = prepare_output_dir(str(target), force=getattr(args, "force", False))
        created = run_dir if fresh else None
        paths = execute(cfg, run_dir, __version__)
    except (KinexError, ValidationError) as exc:
        _discard_if_empty(created)
        print(f"kinex: {_one_line(exc)}", file=sys.stderr)
        return 2
    except Exception as exc:
        _discard_if_empty(created)
        logger.exception("Unhandled error in %s", args.command)
        if sentry_sdk is not None and SENTRY_DSN:
            sentry_sdk.capture_exception(exc)
        print(f"kinex: internal error: {_one_line(exc)}", file=sys.stderr)
        return 1

    logger.info("Wrote %d files to %s", len(paths), run_dir)
    return 0


def main() -> None:
    sys.exit(run_cli())
