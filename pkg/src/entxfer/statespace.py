"""Truncated Hilbert-space layouts and initial states.

Composite amplitudes are stored row-major over the declared factor order.
The canonical order for the transfer protocols is
``(spin1, field1, spin2, field2)`` so that each site's interaction acts on
two adjacent factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ROLES = ("spin", "field", "qubit")
DEFAULT_EPSILON = 1e-8


@dataclass(frozen=True)
class ModeSpace:
    """Fock space of one field mode truncated at ``cutoff`` photons."""

    cutoff: int

    def __post_init__(self):
        if self.cutoff < 0:
            raise ValueError(f"cutoff must be >= 0, got {self.cutoff}")

    @property
    def dimension(self) -> int:
        return self.cutoff + 1


@dataclass(frozen=True)
class SpinSpace:
    """Symmetric (Dicke-ladder) subspace of ``n_qubits`` two-level atoms.

    Basis state ``n`` carries ``n`` excitations above the polarised ground
    state, ``n = 0..N``.
    """

    n_qubits: int

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")

    @property
    def dimension(self) -> int:
        return self.n_qubits + 1


@dataclass(frozen=True)
class Factor:
    """One tensor factor: its physical role, the site it lives at, its size.

    ``tag`` distinguishes several factors with the same role at one site
    (ancilla qubits of successive rounds).
    """

    role: str
    site: int
    dim: int
    tag: str = ""

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.dim < 1:
            raise ValueError(f"factor dimension must be >= 1, got {self.dim}")

    @property
    def name(self) -> str:
        return f"{self.role}{self.site}{self.tag}"


@dataclass(frozen=True)
class SubsystemLayout:
    factors: tuple[Factor, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate factor names in layout: {names}")

    @classmethod
    def of(cls, *factors: Factor) -> "SubsystemLayout":
        return cls(tuple(factors))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dimension(self) -> int:
        return math.prod(self.dims)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    def __len__(self):
        return len(self.factors)

    def index(self, key: int | str) -> int:
        """Position of a factor given by position or by name."""
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < len(self.factors):
                raise IndexError(f"factor index {key} out of range")
            return int(key)
        try:
            return self.names.index(key)
        except ValueError:
            raise KeyError(f"no factor named {key!r} in {self.names}") from None

    def indices(self, keys: Iterable[int | str]) -> list[int]:
        return [self.index(k) for k in keys]

    def site_indices(self, site: int) -> list[int]:
        return [i for i, f in enumerate(self.factors) if f.site == site]

    def subset(self, keys: Iterable[int | str]) -> "SubsystemLayout":
        return SubsystemLayout(tuple(self.factors[i] for i in self.indices(keys)))

    def permuted(self, order: Sequence[int]) -> "SubsystemLayout":
        return SubsystemLayout(tuple(self.factors[i] for i in order))

    def __add__(self, other: "SubsystemLayout") -> "SubsystemLayout":
        return SubsystemLayout(self.factors + other.factors)


def canonical_layout(n_qubits: int, cutoff: int) -> SubsystemLayout:
    """Layout ``(spin1, field1, spin2, field2)`` for two symmetric sites."""
    ds = SpinSpace(n_qubits).dimension
    df = ModeSpace(cutoff).dimension
    return SubsystemLayout.of(
        Factor("spin", 1, ds), Factor("field", 1, df),
        Factor("spin", 2, ds), Factor("field", 2, df),
    )


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalised amplitude vector over a layout.

    ``diagnostics`` carries construction metadata such as the retained
    weight of a truncated squeezed state.
    """

    layout: SubsystemLayout
    amplitudes: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.layout.dimension:
            raise ValueError(
                f"amplitude length {amps.size} does not match layout "
                f"dimension {self.layout.dimension}"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per factor."""
        return self.amplitudes.reshape(self.layout.dims)

    def normalized(self) -> "PureState":
        nrm = self.norm
        if nrm == 0:
            raise ValueError("cannot normalise the zero vector")
        return PureState(self.layout, self.amplitudes / nrm, dict(self.diagnostics))


@dataclass(frozen=True)
class TwoModeSqueezedSpec:
    r: float
    cutoff: int

    def __post_init__(self):
        if not np.isfinite(self.r) or self.r < 0:
            raise ValueError(f"squeezing parameter must be finite and >= 0, got {self.r}")
        if self.cutoff < 0:
            raise ValueError(f"cutoff must be >= 0, got {self.cutoff}")

    @classmethod
    def auto(cls, r: float, epsilon: float = DEFAULT_EPSILON) -> "TwoModeSqueezedSpec":
        return cls(r, choose_cutoff(r, epsilon))


def truncation_deficit(r: float, cutoff: int) -> float:
    """Weight of the squeezed state above ``|cutoff, cutoff>``.

    Closed form of ``1 - sum_{n<=cutoff} tanh(r)^(2n) / cosh(r)^2``.
    """
    t2 = math.tanh(r) ** 2
    return t2 ** (cutoff + 1)


def choose_cutoff(r: float, epsilon: float = DEFAULT_EPSILON) -> int:
    """Smallest photon cutoff whose truncation deficit is at most ``epsilon``."""
    if not math.isfinite(r):
        raise ValueError(f"r must be finite, got {r}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    r = abs(r)
    if r == 0:
        return 0
    t2 = math.tanh(r) ** 2
    if t2 >= 1.0:
        raise ValueError(f"r={r} too large for a finite cutoff in double precision")
    # deficit = t2**(n+1) <= eps
    n = max(0, math.ceil(math.log(epsilon) / math.log(t2)) - 1)
    # guard the ceil against rounding on either side
    while n > 0 and truncation_deficit(r, n - 1) <= epsilon:
        n -= 1
    while truncation_deficit(r, n) > epsilon:
        n += 1
    return n


def two_mode_squeezed_state(spec: TwoModeSqueezedSpec) -> PureState:
    """Truncated, renormalised two-mode squeezed vacuum on ``(field1, field2)``.

    Amplitudes are ``tanh(r)^n / cosh(r)`` on ``|n, n>`` before
    renormalisation; the retained weight is kept in the diagnostics.
    """
    r, cutoff = spec.r, spec.cutoff
    d = cutoff + 1
    coeffs = np.tanh(r) ** np.arange(d) / np.cosh(r)
    retained = float(np.sum(coeffs**2))
    amps = np.zeros((d, d), dtype=complex)
    amps[np.arange(d), np.arange(d)] = coeffs / math.sqrt(retained)
    layout = SubsystemLayout.of(Factor("field", 1, d), Factor("field", 2, d))
    diag = {
        "r": r,
        "cutoff": cutoff,
        "retained_weight": retained,
        "truncation_deficit": truncation_deficit(r, cutoff),
    }
    return PureState(layout, amps.reshape(-1), diag)


def tmss_coefficients(r: float, cutoff: int) -> np.ndarray:
    """Renormalised Schmidt coefficients of the truncated squeezed state."""
    c = np.tanh(r) ** np.arange(cutoff + 1) / np.cosh(r)
    return c / np.linalg.norm(c)


def polarised_ground(n_qubits: int, site_count: int = 2) -> PureState:
    """All atoms in the ground state, one Dicke-ladder factor per site."""
    ds = SpinSpace(n_qubits).dimension
    layout = SubsystemLayout(tuple(Factor("spin", k + 1, ds) for k in range(site_count)))
    amps = np.zeros(layout.dimension, dtype=complex)
    amps[0] = 1.0
    return PureState(layout, amps)


def basis_state(layout: SubsystemLayout, levels: Sequence[int]) -> PureState:
    amps = np.zeros(layout.dims, dtype=complex)
    amps[tuple(levels)] = 1.0
    return PureState(layout, amps.reshape(-1))


def tensor(a: PureState, b: PureState) -> PureState:
    """Product state with ``a``'s factors first."""
    layout = a.layout + b.layout
    diag = {**a.diagnostics, **b.diagnostics}
    return PureState(layout, np.kron(a.amplitudes, b.amplitudes), diag)


def permute(state: PureState, new_order: Sequence[int | str]) -> PureState:
    """Reorder factors; ``new_order[i]`` names the old factor placed at slot ``i``."""
    order = state.layout.indices(new_order)
    if sorted(order) != list(range(len(state.layout))):
        raise ValueError(f"{list(new_order)} is not a permutation of the layout factors")
    amps = np.ascontiguousarray(state.tensor().transpose(order)).reshape(-1)
    return PureState(state.layout.permuted(order), amps, dict(state.diagnostics))


def inverse_order(order: Sequence[int]) -> list[int]:
    inv = [0] * len(order)
    for new, old in enumerate(order):
        inv[old] = new
    return inv


def initial_transfer_state(n_qubits: int, r: float, cutoff: int) -> PureState:
    """Squeezed light times polarised atoms, in canonical site order."""
    light = two_mode_squeezed_state(TwoModeSqueezedSpec(r, cutoff))
    atoms = polarised_ground(n_qubits, 2)
    joint = tensor(atoms, light)  # (spin1, spin2, field1, field2)
    return permute(joint, ["spin1", "field1", "spin2", "field2"])
