"""Time scans and joint (r, tau) optimisation of the passive transfer."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .protocols import ProtocolResult, transfer_curve
from .statespace import DEFAULT_EPSILON, choose_cutoff

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
DEFAULT_BUDGET = 10


def worker_count() -> int:
    """Worker cap from ``ENTXFER_THREADS``; 0 or unset means one per CPU."""
    raw = os.environ.get("ENTXFER_THREADS", "").strip()
    n = int(raw) if raw else 0
    return n if n > 0 else (os.cpu_count() or 1)


def grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive uniform grid ``lo, lo+step, ...`` not exceeding ``hi``."""
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    if hi < lo:
        raise ValueError(f"empty range [{lo}, {hi}]")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


@dataclass(frozen=True)
class ScanGrid:
    tau_min: float = 0.0
    tau_max: float = 2 * math.pi
    tau_step: float = 0.02
    r_min: float = 0.5
    r_max: float = 1.6
    r_step: float = 0.02
    n_values: tuple[int, ...] = (1,)

    def __post_init__(self):
        if self.tau_step <= 0 or self.r_step <= 0:
            raise ValueError("grid steps must be > 0")
        if self.tau_max < self.tau_min or self.r_max < self.r_min:
            raise ValueError("grid ranges must be nonempty")
        if not self.n_values:
            raise ValueError("need at least one N")

    def taus(self) -> np.ndarray:
        return grid(self.tau_min, self.tau_max, self.tau_step)

    def rs(self) -> np.ndarray:
        return grid(self.r_min, self.r_max, self.r_step)


@dataclass(frozen=True, eq=False)
class TimeCurve:
    taus: np.ndarray
    log_negativity: np.ndarray
    probability: np.ndarray
    errors: tuple[str | None, ...]
    results: tuple[ProtocolResult | None, ...] = ()

    def argmax(self) -> int:
        return int(np.nanargmax(self.log_negativity))

    def peak(self) -> tuple[float, float]:
        i = self.argmax()
        return float(self.taus[i]), float(self.log_negativity[i])


def scan_time(evaluate: Callable[[float], ProtocolResult], taus: Sequence[float],
              workers: int | None = None) -> TimeCurve:
    """One protocol evaluation per time point.

    A failing point (e.g. a zero-probability outcome) is recorded as NaN
    with its error message; the scan carries on.
    """
    taus = np.asarray(taus, dtype=float).reshape(-1)

    def one(tau):
        try:
            return evaluate(float(tau)), None
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    workers = worker_count() if workers is None else workers
    if workers > 1 and taus.size > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(one, taus))
    else:
        out = [one(t) for t in taus]
    en = np.array([res.log_negativity if res else np.nan for res, _ in out])
    prob = np.array([res.probability if res else np.nan for res, _ in out])
    return TimeCurve(taus, en, prob, tuple(err for _, err in out), tuple(res for res, _ in out))


def golden_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-3):
    """Golden-section search for a maximum of a unimodal ``f`` on ``[a, b]``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


@dataclass(frozen=True)
class OptimumRow:
    n_qubits: int
    r_opt: float
    E_N: float
    eff: float
    tau_at_max: float
    cutoff: int
    diagnostics: dict = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict:
        return {"N": self.n_qubits, "r_opt": self.r_opt, "E_N": self.E_N,
                "eff": self.eff, "tau_at_max": self.tau_at_max, "cutoff": self.cutoff}


def efficiency(log_neg: float, r: float) -> float:
    """Transferred fraction of the squeezed state's log-negativity."""
    return log_neg * math.log(2.0) / (2.0 * r)


def coarse_landscape(n_qubits: int, rs: np.ndarray, taus: np.ndarray, kind: str = "collective",
                     epsilon: float = DEFAULT_EPSILON, workers: int | None = None) -> np.ndarray:
    """Log-negativity on the full ``(r, tau)`` grid, rows indexed by r."""
    def row(r):
        return transfer_curve(n_qubits, float(r), taus, kind, epsilon=epsilon)

    workers = worker_count() if workers is None else workers
    if workers > 1 and len(rs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(row, rs))
    else:
        rows = [row(r) for r in rs]
    return np.vstack(rows)


def optimize_transfer(n_qubits: int, r_grid: Sequence[float] | None = None,
                      tau_grid: Sequence[float] | None = None, refine: bool = True,
                      kind: str = "collective", epsilon: float = DEFAULT_EPSILON,
                      tol: float = 1e-3, workers: int | None = None) -> OptimumRow:
    """Maximise the passive log-negativity jointly over squeezing and time.

    A coarse grid pass is followed, when ``refine`` is set, by nested
    golden-section searches (time inside squeezing) around the grid peak.
    """
    defaults = ScanGrid()
    rs = np.asarray(defaults.rs() if r_grid is None else r_grid, dtype=float)
    taus = np.asarray(defaults.taus() if tau_grid is None else tau_grid, dtype=float)
    land = coarse_landscape(n_qubits, rs, taus, kind, epsilon, workers)
    i, j = np.unravel_index(int(np.argmax(land)), land.shape)
    r_best, tau_best, en_best = float(rs[i]), float(taus[j]), float(land[i, j])
    diag = {"coarse_E_N": en_best, "coarse_r": r_best, "coarse_tau": tau_best,
            "refined": False, "warnings": []}
    if len(rs) > 1 and i in (0, len(rs) - 1):
        diag["warnings"].append(f"optimum at r grid boundary r={r_best}")
    if len(taus) > 1 and j in (0, len(taus) - 1):
        diag["warnings"].append(f"optimum at tau grid boundary tau={tau_best}")

    if refine:
        dr = float(np.diff(rs).min()) if len(rs) > 1 else 0.0
        dt = float(np.diff(taus).min()) if len(taus) > 1 else 0.0

        def at(r, tau):
            return float(transfer_curve(n_qubits, r, [tau], kind, epsilon=epsilon)[0])

        def best_tau(r):
            if dt == 0:
                return tau_best, at(r, tau_best)
            return golden_max(lambda t: at(r, t), tau_best - 2 * dt, tau_best + 2 * dt, tol)

        if dr > 0:
            r_new, _ = golden_max(lambda r: best_tau(r)[1],
                                  max(0.0, r_best - dr), r_best + dr, tol)
        else:
            r_new = r_best
        tau_new, en_new = best_tau(r_new)
        diag["refined"] = True
        # refinement may only improve on the grid
        if en_new > en_best:
            r_best, tau_best, en_best = r_new, tau_new, en_new

    for w in diag["warnings"]:
        log.warning("N=%d: %s", n_qubits, w)
    return OptimumRow(n_qubits, r_best, en_best, efficiency(en_best, r_best), tau_best,
                      choose_cutoff(r_best, epsilon), diag)


@dataclass(frozen=True)
class Table:
    rows: tuple[OptimumRow, ...]
    truncated: bool
    eff_monotone: bool
    r_opt_monotone: bool


def table1(n_max: int, budget: int = DEFAULT_BUDGET, **kwargs) -> Table:
    """Optimal squeezing, peak log-negativity and efficiency for N = 1..n_max.

    Rows beyond ``budget`` are not computed and the table is flagged as
    truncated.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    stop = min(n_max, budget)
    rows = tuple(optimize_transfer(n, **kwargs) for n in range(1, stop + 1))
    effs = [row.eff for row in rows]
    ropts = [row.r_opt for row in rows]
    eff_ok = all(b >= a - 1e-9 for a, b in zip(effs, effs[1:]))
    r_ok = all(b >= a - 1e-9 for a, b in zip(ropts, ropts[1:]))
    if not eff_ok:
        log.warning("efficiency column is not monotone: %s", effs)
    if not r_ok:
        log.warning("r_opt column is not monotone: %s", ropts)
    return Table(rows, stop < n_max, eff_ok, r_ok)
