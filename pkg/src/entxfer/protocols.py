"""End-to-end transfer and postselection protocols.

Every protocol starts from squeezed light and polarised atoms, evolves the
two sites independently, and reports the log-negativity of the retained
atomic state across the site bipartition.

Passive transfer has two interchangeable evaluation paths. ``full`` builds
the composite state, evolves it, and traces out the fields. ``sector`` uses
that the squeezed state only populates ``|n, n>``: with atoms starting in
the ground state, site ``k`` stays inside excitation block ``n``, so the
global state is ``sum_n c_n phi_n (x) phi_n`` with ``phi_n`` the evolved
``|0, n>``. The reduced atomic state follows from these short vectors
alone. Both paths agree to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .dynamics import (LEAK_FRACTION, LEAK_WARN, apply_local, cutoff_leak, evolve,
                       site_propagator)
from .entanglement import (DensityOperator, bell_overlap, entanglement_report,
                           partial_trace, purity)
from .operators import SiteHamiltonian, site_hamiltonian
from .statespace import (DEFAULT_EPSILON, Factor, PureState, SubsystemLayout,
                         choose_cutoff, initial_transfer_state, tensor,
                         tmss_coefficients, truncation_deficit)

PROB_FLOOR = 1e-14
OUTCOME_CODES = {"p": "psi", "o": "psi_perp"}


class ZeroProbabilityError(RuntimeError):
    """Requested measurement outcome has (numerically) zero probability."""

    def __init__(self, message: str, round_index: int | None = None):
        super().__init__(message)
        self.round_index = round_index


@dataclass(frozen=True)
class TransferParams:
    n_qubits: int
    r: float
    tau: float
    cutoff: int | None = None
    kind: str = "collective"
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")
        if not math.isfinite(self.r) or self.r < 0:
            raise ValueError(f"r must be finite and >= 0, got {self.r}")
        if self.cutoff is not None and self.cutoff < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.cutoff}")

    @property
    def resolved_cutoff(self) -> int:
        if self.cutoff is not None:
            return self.cutoff
        return max(1, choose_cutoff(self.r, self.epsilon))


@dataclass(frozen=True)
class MeasurementSpec:
    """Ancilla measurement in the basis ``{a|0> + b|1>, b|0> - a|1>}``.

    ``b = sqrt(1 - a^2)`` is taken real and nonnegative.
    """

    alpha: float
    outcomes: tuple[str, str] = ("p", "p")

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if len(self.outcomes) != 2 or any(o not in OUTCOME_CODES for o in self.outcomes):
            raise ValueError(f"outcomes must be two of {sorted(OUTCOME_CODES)}, got {self.outcomes!r}")

    @property
    def beta(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.alpha**2))

    def vector(self, code: str) -> np.ndarray:
        a, b = self.alpha, self.beta
        if code == "p":
            return np.array([a, b], dtype=complex)
        return np.array([b, -a], dtype=complex)


@dataclass(frozen=True, eq=False)
class ProtocolResult:
    params: dict
    log_negativity: float
    negativity: float
    probability: float
    reduced_state: DensityOperator
    diagnostics: dict = field(default_factory=dict)


@lru_cache(maxsize=64)
def cached_hamiltonian(n_qubits: int, cutoff: int, kind: str) -> SiteHamiltonian:
    return site_hamiltonian(n_qubits, cutoff, kind)


def _params_dict(params: TransferParams, cutoff: int) -> dict:
    return {
        "n_qubits": params.n_qubits, "r": params.r, "tau": params.tau,
        "kind": params.kind, "cutoff": cutoff, "epsilon": params.epsilon,
    }


def _atomic_result(params: dict, rho: DensityOperator, probability: float,
                   diagnostics: dict) -> ProtocolResult:
    rep = entanglement_report(rho)
    diagnostics = dict(diagnostics)
    diagnostics["purity"] = purity(rho)
    diagnostics["negative_eigenvalues"] = list(rep.negative_eigenvalues)
    if rho.layout.dimension == 4:
        diagnostics["bell_overlap"] = bell_overlap(rho)
    return ProtocolResult(params, rep.log_negativity, rep.negativity, probability, rho, diagnostics)


def _leak_diagnostics(r: float, cutoff: int, leak: float) -> dict:
    return {
        "truncation_deficit": truncation_deficit(r, cutoff),
        "cutoff_leak": leak,
        "cutoff_leak_warning": leak > LEAK_WARN,
    }


def evolved_transfer_state(params: TransferParams) -> PureState:
    """Composite state ``(spin1, field1, spin2, field2)`` after time ``tau``."""
    cutoff = params.resolved_cutoff
    state = initial_transfer_state(params.n_qubits, params.r, cutoff)
    U = site_propagator(cached_hamiltonian(params.n_qubits, cutoff, params.kind), params.tau)
    return evolve(state, U, U)


# -- sector path ----------------------------------------------------------

def _sector_spectra(n_qubits: int, cutoff: int, kind: str):
    """Padded eigenpairs of the excitation blocks ``0..cutoff``."""
    H = cached_hamiltonian(n_qubits, cutoff, kind)
    ds = n_qubits + 1
    vecs = np.zeros((cutoff + 1, ds, ds), dtype=complex)
    vals = np.zeros((cutoff + 1, ds))
    for blk, (w, v) in zip(H.blocks[: cutoff + 1], H.spectra[: cutoff + 1]):
        m = blk.size
        vecs[blk.excitation, :m, :m] = v
        vals[blk.excitation, :m] = w
    return vals, vecs


def _sector_amplitudes(n_qubits: int, r: float, cutoff: int, kind: str,
                       taus: np.ndarray) -> np.ndarray:
    """``P[t, n, s1, s2] = c_n phi_n(s1) phi_n(s2)`` at each time."""
    vals, vecs = _sector_spectra(n_qubits, cutoff, kind)
    c = tmss_coefficients(r, cutoff)
    phase = np.exp(-1j * vals[None, :, :] * taus[:, None, None])  # (T, n, k)
    # block row 0 is |0 atoms, n photons>
    phi = np.einsum("nsk,tnk,nk->tns", vecs, phase, vecs[:, 0, :].conj())
    return c[None, :, None, None] * phi[:, :, :, None] * phi[:, :, None, :]


def _sector_density(P: np.ndarray) -> np.ndarray:
    """Reduced atomic matrices on ``(spin1, spin2)`` for every time slice."""
    T, nn, ds, _ = P.shape
    rho = np.zeros((T, ds, ds, ds, ds), dtype=complex)
    # only coherences with equal excitation shift d on both sites survive
    for d in range(min(ds, nn)):
        m = ds - d
        a = P[:, : nn - d, :m, :m]
        b = P[:, d:, d:, d:]
        vals = np.einsum("tnij,tnij->tij", a, b.conj())
        i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        rho[:, i, j, i + d, j + d] = vals
        if d:
            rho[:, i + d, j + d, i, j] = vals.conj()
    return rho.reshape(T, ds * ds, ds * ds)


def _sector_leak(P: np.ndarray, cutoff: int) -> np.ndarray:
    T, nn, ds, _ = P.shape
    w = (np.abs(P) ** 2).sum(axis=3)  # (T, n, s1): field1 holds n - s1 photons
    photons = np.arange(nn)[:, None] - np.arange(ds)[None, :]
    high = photons > LEAK_FRACTION * cutoff
    return (w * high[None]).sum(axis=(1, 2))


def _batched_log_negativity(rho: np.ndarray, ds: int) -> np.ndarray:
    T = rho.shape[0]
    pt = rho.reshape(T, ds, ds, ds, ds).transpose(0, 1, 4, 3, 2).reshape(T, ds * ds, ds * ds)
    ev = np.linalg.eigvalsh(pt)
    neg = -np.where(ev < -1e-12, ev, 0.0).sum(axis=1)
    return np.log2(2.0 * neg + 1.0)


def transfer_curve(n_qubits: int, r: float, taus: Sequence[float], kind: str = "collective",
                   cutoff: int | None = None, epsilon: float = DEFAULT_EPSILON,
                   max_elements: int = 2_000_000) -> np.ndarray:
    """Passive log-negativity at every time in ``taus`` (sector path, batched)."""
    taus = np.asarray(taus, dtype=float).reshape(-1)
    if cutoff is None:
        cutoff = max(1, choose_cutoff(r, epsilon))
    ds = n_qubits + 1
    per_time = ds**4 + (cutoff + 1) * ds * ds
    chunk = max(1, max_elements // per_time)
    out = np.empty(taus.size)
    for start in range(0, taus.size, chunk):
        t = taus[start:start + chunk]
        P = _sector_amplitudes(n_qubits, r, cutoff, kind, t)
        out[start:start + chunk] = _batched_log_negativity(_sector_density(P), ds)
    return out


def passive_transfer(params: TransferParams, method: str = "sector") -> ProtocolResult:
    """Evolve light and atoms for ``tau`` and trace out both fields."""
    cutoff = params.resolved_cutoff
    if method == "sector":
        P = _sector_amplitudes(params.n_qubits, params.r, cutoff, params.kind,
                               np.array([params.tau]))
        ds = params.n_qubits + 1
        layout = SubsystemLayout.of(Factor("spin", 1, ds), Factor("spin", 2, ds))
        rho = DensityOperator(layout, _sector_density(P)[0])
        leak = float(_sector_leak(P, cutoff)[0])
    elif method == "full":
        state = evolved_transfer_state(replace(params, cutoff=cutoff))
        rho = partial_trace(state, ["spin1", "spin2"])
        leak = cutoff_leak(state)
    else:
        raise ValueError(f"unknown method {method!r}")
    diag = _leak_diagnostics(params.r, cutoff, leak)
    diag["method"] = method
    return _atomic_result(_params_dict(params, cutoff), rho, 1.0, diag)


def bosonic_reference_transfer(params: TransferParams, method: str = "sector") -> ProtocolResult:
    """Passive transfer with atoms replaced by sqrt(N)-scaled truncated bosons."""
    return passive_transfer(replace(params, kind="bosonic"), method)


# -- field parity ---------------------------------------------------------

PARITY_MODES = ("total", "per-mode")


def parity_mask(cutoff: int, parity: str, mode: str = "total") -> np.ndarray:
    """Boolean mask over ``(n1, n2)`` photon numbers selecting one outcome.

    ``total`` selects the parity of ``n1 + n2``; ``per-mode`` requires both
    modes to individually have the requested parity.
    """
    if parity not in ("even", "odd"):
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    if mode not in PARITY_MODES:
        raise ValueError(f"parity mode must be one of {PARITY_MODES}, got {mode!r}")
    want = 0 if parity == "even" else 1
    n = np.arange(cutoff + 1)
    if mode == "total":
        return ((n[:, None] + n[None, :]) % 2) == want
    return ((n[:, None] % 2) == want) & ((n[None, :] % 2) == want)


def parity_postselect(params: TransferParams, parity: str, mode: str = "total") -> ProtocolResult:
    """Condition the atoms on a photon-parity outcome measured after ``tau``."""
    cutoff = params.resolved_cutoff
    state = evolved_transfer_state(replace(params, cutoff=cutoff))
    mask = parity_mask(cutoff, parity, mode)
    psi = state.tensor() * mask[None, :, None, :]
    p = float(np.vdot(psi, psi).real)
    if p < PROB_FLOOR:
        raise ZeroProbabilityError(f"parity outcome {parity!r} has zero probability at tau={params.tau}")
    post = PureState(state.layout, psi.reshape(-1) / math.sqrt(p))
    rho = partial_trace(post, ["spin1", "spin2"])
    diag = _leak_diagnostics(params.r, cutoff, cutoff_leak(state))
    diag.update(parity=parity, parity_mode=mode)
    return _atomic_result(_params_dict(params, cutoff), rho, p, diag)


# -- sequential ancilla rounds -------------------------------------------

def normalize_outcomes(outcomes, rounds: int) -> list[tuple[str, str]]:
    """Accept ``None``, ``"pp"``, ``"pp,po"`` or a sequence of pairs."""
    if rounds == 0:
        return []
    if outcomes is None:
        return [("p", "p")] * rounds
    if isinstance(outcomes, str):
        outcomes = [s.strip() for s in outcomes.split(",") if s.strip()]
    pairs = [tuple(o) for o in outcomes]
    if len(pairs) == 1:
        pairs = pairs * rounds
    if len(pairs) != rounds:
        raise ValueError(f"need outcomes for {rounds} measured round(s), got {len(pairs)}")
    for pair in pairs:
        if len(pair) != 2 or any(c not in OUTCOME_CODES for c in pair):
            raise ValueError(f"bad outcome pair {''.join(pair)!r}; use two of {sorted(OUTCOME_CODES)}")
    return pairs


def add_ancilla_pair(state: PureState, tag: str) -> PureState:
    """Append a fresh ground-state ancilla qubit at each site."""
    anc = SubsystemLayout.of(Factor("qubit", 1, 2, tag), Factor("qubit", 2, 2, tag))
    ground = np.zeros(4, dtype=complex)
    ground[0] = 1.0
    return tensor(state, PureState(anc, ground))


def project_factors(state: PureState, vectors: dict) -> PureState:
    """Contract factors with ``<v|`` and drop them; the result is unnormalised."""
    layout = state.layout
    axes = layout.indices(vectors)
    psi = state.tensor()
    for ax, key in sorted(zip(axes, vectors), reverse=True):
        psi = np.tensordot(psi, np.conj(vectors[key]), axes=([ax], [0]))
    keep = [i for i in range(len(layout)) if i not in axes]
    return PureState(layout.subset(keep), psi.reshape(-1), dict(state.diagnostics))


def ancilla_round(state: PureState, tau: float, tag: str) -> PureState:
    """Couple a fresh ancilla pair to the fields for ``tau`` (no measurement)."""
    cutoff = state.layout.factors[state.layout.index("field1")].dim - 1
    U = site_propagator(cached_hamiltonian(1, cutoff, "collective"), tau)
    out = add_ancilla_pair(state, tag)
    out = apply_local(out, U, [f"qubit1{tag}", "field1"])
    return apply_local(out, U, [f"qubit2{tag}", "field2"])


def sequential_postselect(r: float, taus: Sequence[float], alpha: float = 0.0,
                          outcomes=None, cutoff: int | None = None,
                          epsilon: float = DEFAULT_EPSILON, n_qubits: int = 1) -> ProtocolResult:
    """Kept pair after ``len(taus) - 1`` measured ancilla rounds.

    Round 1 couples the kept pair for ``taus[0]``. Each later round couples a
    fresh ancilla pair for ``taus[i]`` and projects both ancillas on the
    requested outcomes; the fields are never measured and carry over.
    """
    taus = [float(t) for t in taus]
    if not taus:
        raise ValueError("need at least one interaction time")
    pairs = normalize_outcomes(outcomes, len(taus) - 1)
    params = TransferParams(n_qubits, r, taus[0], cutoff, "collective", epsilon)
    cutoff = params.resolved_cutoff
    state = evolved_transfer_state(replace(params, cutoff=cutoff))
    leak = cutoff_leak(state)
    round_probs = []
    for i, (tau, pair) in enumerate(zip(taus[1:], pairs), start=2):
        meas = MeasurementSpec(alpha, pair)
        tag = f"a{i}"
        coupled = ancilla_round(state, tau, tag)
        post = project_factors(coupled, {
            f"qubit1{tag}": meas.vector(pair[0]),
            f"qubit2{tag}": meas.vector(pair[1]),
        })
        p = post.norm**2
        if p < PROB_FLOOR:
            raise ZeroProbabilityError(
                f"round {i}: outcome {''.join(pair)} has zero probability "
                f"(alpha={alpha}, tau={tau})", round_index=i)
        round_probs.append(p)
        state = post.normalized()
        leak = max(leak, cutoff_leak(state))
    rho = partial_trace(state, ["spin1", "spin2"])
    diag = _leak_diagnostics(r, cutoff, leak)
    diag["round_probabilities"] = round_probs
    if n_qubits == 1:
        diag["xform_residual"] = xform_check(rho).off_pattern_max
    info = {
        "r": r, "taus": taus, "alpha": alpha, "n_qubits": n_qubits,
        "outcomes": ["".join(p) for p in pairs], "cutoff": cutoff, "epsilon": epsilon,
    }
    return _atomic_result(info, rho, float(np.prod(round_probs)), diag)


@dataclass(frozen=True)
class XFormReport:
    off_pattern_max: float
    diagonal: tuple[float, float, float, float]
    b: float


def xform_check(rho: DensityOperator | np.ndarray) -> XFormReport:
    """Distance of a two-qubit state from the diagonal-plus-corners pattern."""
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho)
    if m.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
    pattern = np.eye(4, dtype=bool)
    pattern[0, 3] = pattern[3, 0] = True
    off = float(np.abs(m[~pattern]).max())
    diag = tuple(float(x) for x in np.real(np.diag(m)))
    return XFormReport(off, diag, float(-m[0, 3].real))
