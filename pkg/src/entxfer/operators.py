"""Ladder operators and per-site interaction Hamiltonians.

Site basis is spin-major: index ``s * (cutoff + 1) + f`` for ``s`` atomic
excitations and ``f`` photons. Energies are in units of the coupling ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

KINDS = ("collective", "bosonic")


@dataclass(frozen=True, eq=False)
class LadderOperator:
    matrix: np.ndarray
    kind: str

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def dicke_raising(n_qubits: int) -> LadderOperator:
    """Collective raising operator on the symmetric ladder of ``n_qubits`` atoms."""
    if n_qubits < 1:
        raise ValueError(f"n_qubits must be >= 1, got {n_qubits}")
    n = np.arange(n_qubits)
    op = np.zeros((n_qubits + 1, n_qubits + 1))
    op[n + 1, n] = np.sqrt((n_qubits - n) * (n + 1.0))
    return LadderOperator(op, "dicke-raise")


def boson_annihilation(cutoff: int) -> LadderOperator:
    if cutoff < 0:
        raise ValueError(f"cutoff must be >= 0, got {cutoff}")
    n = np.arange(1, cutoff + 1)
    op = np.zeros((cutoff + 1, cutoff + 1))
    op[n - 1, n] = np.sqrt(n)
    return LadderOperator(op, "boson-annihilate")


def truncated_boson_raising(n_levels: int) -> LadderOperator:
    """Harmonic raising operator cut at level ``n_levels``, which it annihilates."""
    if n_levels < 1:
        raise ValueError(f"n_levels must be >= 1, got {n_levels}")
    n = np.arange(n_levels)
    op = np.zeros((n_levels + 1, n_levels + 1))
    op[n + 1, n] = np.sqrt(n + 1.0)
    return LadderOperator(op, "truncated-boson-raise")


@dataclass(frozen=True, eq=False)
class Block:
    """Fixed-excitation sector of a site operator."""

    excitation: int
    indices: np.ndarray
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class SiteHamiltonian:
    n_qubits: int
    cutoff: int
    kind: str
    matrix: np.ndarray
    blocks: tuple[Block, ...]

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def spin_dim(self) -> int:
        return self.n_qubits + 1

    @property
    def field_dim(self) -> int:
        return self.cutoff + 1

    @cached_property
    def spectra(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        """Eigenpairs of every block, computed once."""
        from .dynamics import PropagatorError

        out = []
        for blk in self.blocks:
            try:
                out.append(np.linalg.eigh(blk.matrix))
            except np.linalg.LinAlgError as exc:
                raise PropagatorError(
                    f"eigensolver failed on excitation block {blk.excitation} "
                    f"(size {blk.size}): {exc}"
                ) from exc
        return tuple(out)


def _excitation_numbers(spin_dim: int, field_dim: int) -> np.ndarray:
    s, f = np.divmod(np.arange(spin_dim * field_dim), field_dim)
    return s + f


def excitation_blocks(H: SiteHamiltonian | np.ndarray, spin_dim: int | None = None,
                      field_dim: int | None = None) -> list[Block]:
    """Partition a site operator into its total-excitation sectors.

    Works on a built ``SiteHamiltonian`` or on any dense site matrix when
    the factor dimensions are given.
    """
    if isinstance(H, SiteHamiltonian):
        return list(H.blocks)
    exc = _excitation_numbers(spin_dim, field_dim)
    blocks = []
    for e in range(int(exc.max()) + 1):
        idx = np.flatnonzero(exc == e)
        blocks.append(Block(e, idx, H[np.ix_(idx, idx)]))
    return blocks


def site_hamiltonian(n_qubits: int, cutoff: int, kind: str = "collective") -> SiteHamiltonian:
    """Resonant coupling of one site's atoms to its field mode.

    ``collective`` uses the Dicke raising operator; ``bosonic`` replaces it
    by ``sqrt(N)`` times a truncated boson raising operator.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if n_qubits < 1 or cutoff < 1:
        raise ValueError("need n_qubits >= 1 and cutoff >= 1")
    if kind == "collective":
        raise_op = dicke_raising(n_qubits).matrix
    else:
        raise_op = np.sqrt(n_qubits) * truncated_boson_raising(n_qubits).matrix
    a = boson_annihilation(cutoff).matrix
    upper = np.kron(raise_op, a)
    # conjugate pairs are placed explicitly, so H is Hermitian bit-for-bit
    H = upper + upper.T
    H = H.astype(complex)
    blocks = tuple(excitation_blocks(H, n_qubits + 1, cutoff + 1))
    return SiteHamiltonian(n_qubits, cutoff, kind, H, blocks)


def excitation_number(n_qubits: int, cutoff: int) -> np.ndarray:
    """Diagonal of the per-site excitation-number operator."""
    return _excitation_numbers(n_qubits + 1, cutoff + 1).astype(float)
