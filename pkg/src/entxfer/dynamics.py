"""Site propagators and their action on composite pure states."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .operators import Block, SiteHamiltonian, excitation_blocks
from .statespace import PureState

LEAK_FRACTION = 0.9
LEAK_WARN = 1e-6


class PropagatorError(RuntimeError):
    pass


class LayoutError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SitePropagator:
    """exp(-i H tau) of one site, kept as excitation blocks."""

    tau: float
    n_qubits: int
    cutoff: int
    kind: str
    blocks: tuple[Block, ...]
    edge_indices: tuple[int, ...] = ()

    @property
    def dimension(self) -> int:
        return (self.n_qubits + 1) * (self.cutoff + 1)

    @property
    def dims(self) -> tuple[int, int]:
        return (self.n_qubits + 1, self.cutoff + 1)

    def dense(self) -> np.ndarray:
        U = np.zeros((self.dimension, self.dimension), dtype=complex)
        for blk in self.blocks:
            U[np.ix_(blk.indices, blk.indices)] = blk.matrix
        return U

    @cached_property
    def _groups(self):
        # stack equal-size blocks so one batched matmul applies them all
        by_size: dict[int, list[Block]] = {}
        for blk in self.blocks:
            by_size.setdefault(blk.size, []).append(blk)
        return [
            (np.stack([b.indices for b in group]), np.stack([b.matrix for b in group]))
            for _, group in sorted(by_size.items())
        ]

    def apply(self, m: np.ndarray) -> np.ndarray:
        """Left-multiply a ``(site_dim, ...)`` array block by block."""
        if m.shape[0] != self.dimension:
            raise LayoutError(
                f"propagator of dimension {self.dimension} cannot act on axis of length {m.shape[0]}"
            )
        out = np.empty(m.shape, dtype=complex)
        for idx, mats in self._groups:
            x = m[idx]  # (B, d, ...)
            shp = x.shape
            y = np.matmul(mats, x.reshape(shp[0], shp[1], -1))
            out[idx] = y.reshape(shp)
        return out

    def unitarity_error(self) -> float:
        worst = 0.0
        for blk in self.blocks:
            u = blk.matrix
            worst = max(worst, float(np.abs(u.conj().T @ u - np.eye(blk.size)).max()))
        return worst


def site_propagator(H: SiteHamiltonian, tau: float) -> SitePropagator:
    """Exact exponential of each excitation block at rescaled time ``tau``."""
    blocks = []
    for blk, (w, v) in zip(H.blocks, H.spectra):
        u = (v * np.exp(-1j * w * tau)) @ v.conj().T
        blocks.append(Block(blk.excitation, blk.indices, u))
    return SitePropagator(float(tau), H.n_qubits, H.cutoff, H.kind, tuple(blocks))


def analytic_jc_propagator(cutoff: int, tau: float) -> SitePropagator:
    """Closed-form single-atom propagator on a truncated field.

    Entries on the ``|1>, |0>`` atomic basis::

        <1,n|U|1,n>   = cos(tau sqrt(n+1))
        <0,n|U|0,n>   = cos(tau sqrt(n))
        <0,n+1|U|1,n> = -i sin(tau sqrt(n+1))
        <1,n|U|0,n+1> = -i sin(tau sqrt(n+1))

    ``|1, cutoff>`` couples only to a photon level outside the truncation;
    it is kept as in the truncated model (no evolution) and listed in
    ``edge_indices``.
    """
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    df = cutoff + 1
    dim = 2 * df
    U = np.zeros((dim, dim), dtype=complex)
    g = lambda f: f  # noqa: E731  ground-atom index
    e = lambda f: df + f  # noqa: E731  excited-atom index
    for n in range(df):
        U[g(n), g(n)] = math.cos(tau * math.sqrt(n))
    for n in range(cutoff):
        root = math.sqrt(n + 1)
        U[e(n), e(n)] = math.cos(tau * root)
        U[g(n + 1), e(n)] = -1j * math.sin(tau * root)
        U[e(n), g(n + 1)] = -1j * math.sin(tau * root)
    edge = e(cutoff)
    U[edge, edge] = 1.0
    blocks = tuple(
        Block(b.excitation, b.indices, b.matrix) for b in excitation_blocks(U, 2, df)
    )
    return SitePropagator(float(tau), 1, cutoff, "analytic-jc", blocks, (edge,))


def apply_local(state: PureState, prop: SitePropagator,
                factors: Sequence[int | str]) -> PureState:
    """Apply a site propagator to the two named factors (spin-like, field)."""
    layout = state.layout
    axes = layout.indices(factors)
    if len(axes) != 2:
        raise LayoutError("a site propagator acts on exactly two factors")
    dims = tuple(layout.dims[a] for a in axes)
    if dims != prop.dims:
        raise LayoutError(f"factors {list(factors)} have dims {dims}, propagator expects {prop.dims}")
    psi = state.tensor()
    if axes[1] == axes[0] + 1:
        # adjacent factors: a reshape exposes the site axis without copying
        lead = math.prod(layout.dims[: axes[0]])
        m = psi.reshape(lead, prop.dimension, -1).transpose(1, 0, 2)
        out = prop.apply(m).transpose(1, 0, 2).reshape(-1)
    else:
        moved = np.moveaxis(psi, axes, (0, 1))
        shp = moved.shape
        out = prop.apply(moved.reshape(prop.dimension, -1)).reshape(shp)
        out = np.moveaxis(out, (0, 1), axes).reshape(-1)
    return PureState(layout, out, dict(state.diagnostics))


def _site_pair(layout, site: int) -> list[int]:
    idx = layout.site_indices(site)
    spin = [i for i in idx if layout.factors[i].role in ("spin", "qubit") and not layout.factors[i].tag]
    fld = [i for i in idx if layout.factors[i].role == "field"]
    if len(spin) != 1 or len(fld) != 1:
        raise LayoutError(f"layout {layout.names} lacks a unique (spin, field) pair at site {site}")
    return [spin[0], fld[0]]


def evolve(state: PureState, U1: SitePropagator, U2: SitePropagator) -> PureState:
    """Apply ``U1 (x) U2`` site by site, never forming the global unitary."""
    out = apply_local(state, U1, _site_pair(state.layout, 1))
    return apply_local(out, U2, _site_pair(state.layout, 2))


def field_occupation(state: PureState, factor: int | str) -> np.ndarray:
    """Photon-number distribution of one field factor."""
    ax = state.layout.index(factor)
    probs = np.abs(state.tensor()) ** 2
    other = tuple(i for i in range(probs.ndim) if i != ax)
    return probs.sum(axis=other)


def cutoff_leak(state: PureState, fraction: float = LEAK_FRACTION) -> float:
    """Largest weight any field factor carries above ``fraction * cutoff``."""
    worst = 0.0
    for i, f in enumerate(state.layout.factors):
        if f.role != "field":
            continue
        occ = field_occupation(state, i)
        cutoff = f.dim - 1
        worst = max(worst, float(occ[np.arange(f.dim) > fraction * cutoff].sum()))
    return worst
