"""Space-time error norms, convergence rates, entropy decay fits and CSV output."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ErrorTriple",
    "DecayFit",
    "error_norms",
    "convergence_rates",
    "entropy_decay_fit",
    "format_value",
    "write_csv",
    "TABLE_COLUMNS",
    "SUMMARY_COLUMNS",
]

TABLE_COLUMNS = (
    "h",
    "n_vertices",
    "dt_init",
    "dt_max",
    "err_l2",
    "rate_l2",
    "err_l1",
    "rate_l1",
    "err_linf",
    "rate_linf",
    "u_min",
    "newton_total",
)

SUMMARY_COLUMNS = ("h", "n_vertices", "dt_init", "dt_max", "err_l2", "err_l1", "err_linf", "u_min", "newton_total")


@dataclass(frozen=True)
class ErrorTriple:
    l1: float
    l2: float
    linf: float


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r_squared: float


def error_norms(
    times: Sequence[float],
    states: Sequence[np.ndarray],
    dts: Sequence[float],
    exact: Callable[[np.ndarray, float], np.ndarray],
    points: np.ndarray,
    masses: np.ndarray,
) -> ErrorTriple:
    """Discrete L1, L2 and Linf errors over all stored steps after t = 0.

    err_q = (sum_n dt_n sum_b m_b |u_b^n - u(x_b, t_n)|^q)^(1/q); the step
    sizes must be the ones that produced each state, so the trajectory has
    to keep every accepted step.
    """
    l1 = l2 = linf = 0.0
    for t, x, dt in zip(times[1:], states[1:], dts[1:]):
        e = np.abs(np.asarray(x) - exact(points, t))
        l1 += dt * float(np.dot(masses, e))
        l2 += dt * float(np.dot(masses, e * e))
        linf = max(linf, float(e.max()))
    return ErrorTriple(l1, math.sqrt(l2), linf)


def convergence_rates(errors: Sequence[float], h: Sequence[float]) -> list[float]:
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1}); NaN where an error is zero."""
    e = [float(v) for v in errors]
    hh = [float(v) for v in h]
    if len(e) != len(hh):
        raise ValueError("errors and mesh sizes differ in length")
    if any(b >= a for a, b in zip(hh, hh[1:])):
        raise ValueError("mesh sizes must be strictly decreasing")
    rates = []
    for i in range(len(e) - 1):
        if e[i] <= 0 or e[i + 1] <= 0:
            rates.append(math.nan)
        else:
            rates.append(math.log(e[i] / e[i + 1]) / math.log(hh[i] / hh[i + 1]))
    return rates


def entropy_decay_fit(t: Sequence[float], E: Sequence[float], window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares line through (t, log E) restricted to ``window``."""
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
        t, E = t[keep], E[keep]
    if t.size < 2:
        raise ValueError("need at least two samples in the window")
    if np.any(~(E > 0)):
        raise ValueError("relative entropy must be positive on the fit window")
    y = np.log(E)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    return DecayFit(float(slope), float(intercept), r2)


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    return "%.17g" % v


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a CSV file atomically (temporary file then rename)."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([format_value(v) for v in r])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
