"""
Run directories and the files written into them.
CSV goes through pandas in long format with a fixed float format; JSON is
pretty-printed with sorted keys; every run closes with manifest.json.
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from kinex.core.errors import ConfigurationError, ParameterError
from kinex.core.exact_chain import matrix_rows
from kinex.models import ASystemState, CouplingBand, ExactChain, Pmf, SimSnapshot, TraceSeries, Trajectory

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MANIFEST = "manifest.json"


def prepare_output_dir(path: str, force: bool = False) -> Path:
    """Create the run directory; an existing non-empty one needs force=True."""
    run_dir = Path(path)
    if run_dir.exists():
        if not run_dir.is_dir():
            raise ConfigurationError(f"Output path {run_dir} exists and is not a directory")
        if any(run_dir.iterdir()) and not force:
            raise ConfigurationError(f"Output directory {run_dir} is not empty; pass --force to overwrite")
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _plain(value):
    """numpy scalars and arrays to JSON-native values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(run_dir: Path, name: str, obj) -> Path:
    path = run_dir / name
    path.write_text(dumps(obj), encoding="utf-8")
    logger.debug("Wrote %s", path)
    return path


def write_frame(run_dir: Path, name: str, frame: pd.DataFrame) -> Path:
    path = run_dir / name
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
    logger.debug("Wrote %s (%d rows)", path, len(frame))
    return path


# ==========================================
# Frames
# ==========================================

def pmf_frame(p: Pmf) -> pd.DataFrame:
    return pd.DataFrame({"n": np.arange(p.K + 1), "p_n": p.weights})


def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
    size = traj.states[0].K + 1
    return pd.DataFrame({
        "t": np.repeat(traj.times, size),
        "n": np.tile(np.arange(size), len(traj)),
        "p_n": np.concatenate([state.weights for state in traj.states]),
    })


def snapshots_frame(snapshots: Sequence[SimSnapshot], replica: Optional[int] = None) -> pd.DataFrame:
    """Wealth histograms in long format: event, t_model, n, count (integer rules only)."""
    rows = []
    for snap in snapshots:
        if snap.pmf is None:
            raise ParameterError("Histogram export needs an integer-valued simulation")
        counts = np.bincount(snap.values)
        for n in np.nonzero(counts)[0]:
            row = {"event": snap.event, "t_model": snap.t_model, "n": int(n), "count": int(counts[n])}
            if replica is not None:
                row = {"replica": replica, **row}
            rows.append(row)
    return pd.DataFrame(rows)


def summary_frame(snapshots: Sequence[SimSnapshot]) -> pd.DataFrame:
    return pd.DataFrame({
        "event": [s.event for s in snapshots],
        "t_model": [s.t_model for s in snapshots],
        "mean": [s.mean for s in snapshots],
        "variance": [s.variance for s in snapshots],
        "gini": [s.gini for s in snapshots],
    })


def trace_frame(series: TraceSeries) -> pd.DataFrame:
    return pd.DataFrame({"t": series.times, "value": series.values})


def coupling_frame(band: CouplingBand) -> pd.DataFrame:
    return pd.DataFrame({
        "t": band.times,
        "D_mean": band.mean,
        "D_stderr": band.stderr,
        "bound_value": band.bound,
    })


def chain_frame(chain: ExactChain) -> pd.DataFrame:
    rows, cols, probs = matrix_rows(chain)
    return pd.DataFrame({"row": rows, "col": cols, "prob": probs})


def a_system_frame(states: Sequence[ASystemState]) -> pd.DataFrame:
    size = states[0].M + 1
    return pd.DataFrame({
        "t": np.repeat([s.t for s in states], size),
        "n": np.tile(np.arange(size), len(states)),
        "a_n": np.concatenate([s.a for s in states]),
    })


# ==========================================
# Readers
# ==========================================

def pmf_to_dict(p: Pmf) -> Dict[str, object]:
    return {"weights": p.weights.tolist(), "trunc_defect": p.trunc_defect}


def read_pmf(path: str) -> Pmf:
    """Pmf from `{"weights": [...], "trunc_defect": x}` JSON or an `n,p_n` CSV."""
    source = Path(path)
    if not source.exists():
        raise ConfigurationError(f"Cannot read law from {source}: file not found")
    if source.suffix.lower() == ".csv":
        frame = pd.read_csv(source, float_precision="round_trip")
        if list(frame.columns[:2]) != ["n", "p_n"]:
            raise ConfigurationError(f"{source} needs columns n,p_n")
        weights = np.zeros(int(frame["n"].max()) + 1)
        weights[frame["n"].to_numpy(dtype=int)] = frame["p_n"].to_numpy(dtype=float)
        return Pmf(weights, max(0.0, 1.0 - float(weights.sum())))
    try:
        data = json.loads(source.read_text(encoding="utf-8"))
        return Pmf(np.asarray(data["weights"], dtype=np.float64), float(data.get("trunc_defect", 0.0)))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{source} is not a Pmf JSON file: {exc}")


def read_trace(path: str) -> TraceSeries:
    frame = pd.read_csv(path, float_precision="round_trip")
    if not {"t", "value"}.issubset(frame.columns):
        raise ConfigurationError(f"{path} needs columns t,value")
    return TraceSeries(frame["t"].to_numpy(), frame["value"].to_numpy(), label=Path(path).stem)


def read_wealth(path: str) -> np.ndarray:
    frame = pd.read_csv(path, float_precision="round_trip")
    if "value" not in frame.columns:
        raise ConfigurationError(f"{path} needs a value column")
    return frame["value"].to_numpy(dtype=np.float64)


# ==========================================
# Manifest
# ==========================================

def sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(run_dir: Path, config: dict, artifacts: Iterable[Path], version: str) -> Path:
    """manifest.json: resolved config, seed, version and a checksum per artifact."""
    files: List[Path] = sorted(set(artifacts), key=lambda p: p.name)
    manifest = {
        "command": config.get("command"),
        "seed": config.get("seed"),
        "config": config,
        "version": version,
        "artifacts": {p.name: sha256(p) for p in files},
    }
    path = write_json(run_dir, MANIFEST, manifest)
    logger.info("Run directory %s: %d artifacts", run_dir, len(files))
    return path
