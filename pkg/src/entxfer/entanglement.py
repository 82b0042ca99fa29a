"""Reduced states and negativity-based entanglement measures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .statespace import PureState, SubsystemLayout

TOL_NEG = 1e-12

PHI_MINUS = np.array([1.0, 0.0, 0.0, -1.0], dtype=complex) / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    layout: SubsystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.layout.dimension
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match layout dimension {d}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityOperator":
        v = state.amplitudes
        return cls(state.layout, np.outer(v, v.conj()))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def validity(self) -> dict:
        """Residuals against Hermiticity, unit trace, and positivity."""
        m = self.matrix
        return {
            "hermiticity": float(np.abs(m - m.conj().T).max()),
            "trace_error": abs(complex(np.trace(m)) - 1.0),
            "min_eigenvalue": float(np.linalg.eigvalsh((m + m.conj().T) / 2).min()),
        }

    def is_valid(self, herm_tol=1e-10, trace_tol=1e-10, psd_tol=1e-9) -> bool:
        v = self.validity()
        return (v["hermiticity"] <= herm_tol and v["trace_error"] <= trace_tol
                and v["min_eigenvalue"] >= -psd_tol)


@dataclass(frozen=True)
class EntanglementReport:
    negativity: float
    log_negativity: float
    negative_eigenvalues: tuple[float, ...]
    bipartition: tuple[tuple[str, ...], tuple[str, ...]]


def _as_density(rho) -> DensityOperator:
    if isinstance(rho, PureState):
        return DensityOperator.from_pure(rho)
    return rho


def partial_trace(state: PureState | DensityOperator,
                  keep: Iterable[int | str]) -> DensityOperator:
    """Reduced operator on the ``keep`` factors, in their layout order.

    Pure states are contracted directly from the amplitudes; the global
    density matrix is never formed.
    """
    layout = state.layout
    kept = sorted(set(layout.indices(keep)))
    if not kept:
        raise ValueError("partial_trace needs a nonempty set of factors to keep")
    traced = [i for i in range(len(layout)) if i not in kept]
    dims = layout.dims
    dk = math.prod(dims[i] for i in kept)
    dt = math.prod(dims[i] for i in traced)
    sub = layout.subset(kept)
    if isinstance(state, PureState):
        m = state.tensor().transpose(kept + traced).reshape(dk, dt)
        return DensityOperator(sub, m @ m.conj().T)
    n = len(dims)
    t = state.matrix.reshape(dims + dims)
    order = kept + traced + [n + i for i in kept] + [n + i for i in traced]
    t = t.transpose(order).reshape(dk, dt, dk, dt)
    return DensityOperator(sub, np.trace(t, axis1=1, axis2=3))


def partial_transpose(rho: DensityOperator | np.ndarray,
                      transpose_side: Iterable[int | str],
                      dims: Sequence[int] | None = None) -> np.ndarray:
    """Transpose the row and column indices of the chosen factors."""
    if isinstance(rho, DensityOperator):
        side = rho.layout.indices(transpose_side)
        dims = rho.layout.dims
        m = rho.matrix
    else:
        side = list(transpose_side)
        m = np.asarray(rho)
    n = len(dims)
    if not side or len(set(side)) >= n:
        raise ValueError("transpose_side must be a proper nonempty subset of factors")
    axes = list(range(2 * n))
    for i in set(side):
        axes[i], axes[n + i] = n + i, i
    d = m.shape[0]
    return m.reshape(tuple(dims) * 2).transpose(axes).reshape(d, d)


def _site2(layout: SubsystemLayout) -> list[int]:
    side = layout.site_indices(2)
    if not side or len(side) == len(layout):
        raise ValueError(f"layout {layout.names} has no two-site bipartition")
    return side


def _pt_eigenvalues(rho: DensityOperator, side) -> np.ndarray:
    pt = partial_transpose(rho, side)
    return np.linalg.eigvalsh((pt + pt.conj().T) / 2)


def negativity(rho: DensityOperator | PureState, side: Iterable[int | str] | None = None) -> float:
    """Absolute sum of the partial transpose's negative eigenvalues.

    The site-2 factors are transposed unless ``side`` is given. Pure states
    skip the density matrix: with Schmidt coefficients ``s_k`` the value
    is ``((sum s_k)^2 - 1) / 2``.
    """
    if isinstance(rho, PureState):
        layout = rho.layout
        side = _site2(layout) if side is None else layout.indices(side)
        rest = [i for i in range(len(layout)) if i not in side]
        if not side or not rest:
            raise ValueError("transpose_side must be a proper nonempty subset of factors")
        d_side = math.prod(layout.dims[i] for i in side)
        m = rho.tensor().transpose(rest + side).reshape(-1, d_side)
        s = np.linalg.svd(m, compute_uv=False)
        s = s / np.linalg.norm(s)
        neg = (s.sum() ** 2 - 1.0) / 2.0
        return float(neg) if neg > TOL_NEG else 0.0
    rho = _as_density(rho)
    side = _site2(rho.layout) if side is None else rho.layout.indices(side)
    ev = _pt_eigenvalues(rho, side)
    return float(-ev[ev < -TOL_NEG].sum())


def log_negativity(rho: DensityOperator | PureState, side: Iterable[int | str] | None = None) -> float:
    return float(np.log2(2.0 * negativity(rho, side) + 1.0))


def entanglement_report(rho: DensityOperator | PureState,
                        side: Iterable[int | str] | None = None) -> EntanglementReport:
    rho = _as_density(rho)
    side = _site2(rho.layout) if side is None else rho.layout.indices(side)
    ev = _pt_eigenvalues(rho, side)
    neg_ev = ev[ev < -TOL_NEG]
    neg = float(-neg_ev.sum())
    names = rho.layout.names
    rest = tuple(names[i] for i in range(len(names)) if i not in side)
    return EntanglementReport(
        negativity=neg,
        log_negativity=float(np.log2(2.0 * neg + 1.0)),
        negative_eigenvalues=tuple(float(x) for x in neg_ev),
        bipartition=(rest, tuple(names[i] for i in side)),
    )


def log_negativity_matrix(m: np.ndarray, dims: Sequence[int], side: Sequence[int]) -> float:
    """Log-negativity of a bare matrix; used on hot paths that skip layouts."""
    pt = partial_transpose(m, side, dims)
    ev = np.linalg.eigvalsh((pt + pt.conj().T) / 2)
    return float(np.log2(1.0 - 2.0 * ev[ev < -TOL_NEG].sum()))


def tmss_log_negativity_exact(r: float) -> float:
    """Log-negativity of the untruncated two-mode squeezed state, 2r/ln 2."""
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    return 2.0 * r / math.log(2.0)


def _check_two_qubit(rho) -> np.ndarray:
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    if m.shape != (4, 4):
        raise ValueError(f"expected a two-qubit (4x4) state, got shape {m.shape}")
    return m


def bell_overlap(rho: DensityOperator | np.ndarray) -> float:
    """Fidelity with (|00> - |11>)/sqrt(2)."""
    m = _check_two_qubit(rho)
    return float(np.real(PHI_MINUS.conj() @ m @ PHI_MINUS))


def purity(rho: DensityOperator | np.ndarray) -> float:
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    return float(np.real(np.einsum("ij,ji->", m, m)))
