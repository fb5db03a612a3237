"""Convergence metrics and trace serialization."""

import csv
from dataclasses import dataclass
import json
import math
from pathlib import Path

import numpy as np

from .errors import ContractError, FitError, QOError, ShapeError
from .linalg import as_block, thin_svd

TRACE_COLUMNS = ("n", "energy", "grad_norm", "orth_err_pre", "orth_err_post",
                 "step", "inner_count", "wall_time_s")
_INT_COLUMNS = {"n", "inner_count"}
DECAY_FLOOR = 1e-11


def orthogonality_error(U):
    """``||I - U^T U||_F``."""
    U = as_block(U)
    return float(np.linalg.norm(np.eye(U.shape[1]) - U.T @ U))


def grassmann_distance(U, V):
    """``min_Q ||U Q - V||_F`` over orthogonal ``Q`` (orthogonal Procrustes)."""
    U = as_block(U, "U")
    V = as_block(V, "V")
    if U.shape != V.shape:
        raise ShapeError(f"grassmann_distance: shape mismatch {U.shape} vs {V.shape}")
    # form the minimizer explicitly; the closed form |U|^2+|V|^2-2|U^T V|_*
    # cancels to ~sqrt(eps)*|U| when the blocks coincide
    W, _, Z = thin_svd(U.T @ V)
    return float(np.linalg.norm(U @ (W @ Z.T) - V))


def relative_iterate_error(snapshots, U_end):
    """``||U_n - U_end||_F / ||U_end||_F`` per snapshot, without alignment."""
    if len(snapshots) == 0:
        raise ContractError("relative_iterate_error: no snapshots")
    U_end = as_block(U_end, "U_end")
    ref = np.linalg.norm(U_end)
    if ref == 0.0:
        raise ContractError("relative_iterate_error: U_end is zero")
    out = []
    for U in snapshots:
        U = as_block(U)
        if U.shape != U_end.shape:
            raise ShapeError(f"snapshot shape {U.shape} differs from {U_end.shape}")
        out.append(float(np.linalg.norm(U - U_end) / ref))
    return out


@dataclass(frozen=True)
class DecayFit:
    """Geometric model ``series[k] ~ C * ratio**k`` fitted on ``window``."""

    ratio: float
    window: tuple
    residual: float


def fit_decay_ratio(series, floor=DECAY_FLOOR):
    """Least-squares fit of ``log(series)`` against the index.

    Only entries above ``floor`` take part; ``window`` is the (first, last)
    index used and ``residual`` the largest relative deviation of the fitted
    geometric model from those entries.
    """
    y = np.asarray(series, dtype=float)
    idx = np.nonzero(y > floor)[0]
    if idx.size < 3:
        raise FitError(f"need at least 3 points above floor {floor:g}, got {idx.size}")
    k = idx.astype(float)
    logs = np.log(y[idx])
    kc = k - k.mean()
    slope = float(np.sum(kc * (logs - logs.mean())) / np.sum(kc * kc))
    intercept = logs.mean() - slope * k.mean()
    model = np.exp(intercept + slope * k)
    residual = float(np.max(np.abs(y[idx] / model - 1.0)))
    return DecayFit(math.exp(slope), (int(idx[0]), int(idx[-1])), residual)


def _fmt(name, value):
    if name in _INT_COLUMNS:
        return str(int(value))
    return format(float(value), ".17g")


def write_trace(trace, path, fmt="csv"):
    """Write iteration records as CSV or JSON.

    CSV uses the fixed column order of ``TRACE_COLUMNS`` and 17 significant
    digits, so floats survive a round trip exactly.
    """
    path = Path(path)
    rows = [{c: getattr(r, c) for c in TRACE_COLUMNS} for r in trace]
    try:
        if fmt == "csv":
            lines = [",".join(TRACE_COLUMNS)]
            lines += [",".join(_fmt(c, row[c]) for c in TRACE_COLUMNS) for row in rows]
            path.write_text("\n".join(lines) + "\n")
        elif fmt == "json":
            clean = [{c: (int(v) if c in _INT_COLUMNS else float(v)) for c, v in row.items()}
                     for row in rows]
            path.write_text(json.dumps(clean, indent=1) + "\n")
        else:
            raise ValueError(f"unknown trace format {fmt!r}")
    except OSError as exc:
        raise QOError(f"cannot write trace to {path}: {exc}") from exc


def read_trace(path):
    """Read a CSV or JSON trace back into a list of dicts."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)
    reader = csv.DictReader(text.splitlines())
    return [{c: (int(v) if c in _INT_COLUMNS else float(v)) for c, v in row.items()}
            for row in reader]
