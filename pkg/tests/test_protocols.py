import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from entxfer.entanglement import partial_trace
from entxfer.protocols import (PROB_FLOOR, MeasurementSpec, TransferParams, ZeroProbabilityError,
                               ancilla_round, bosonic_reference_transfer, evolved_transfer_state,
                               normalize_outcomes, parity_mask, parity_postselect,
                               passive_transfer, sequential_postselect, transfer_curve,
                               xform_check)
from entxfer.statespace import tmss_coefficients


def _explicit_two_qubit_sites(r, tau, cutoff):
    """Passive transfer with N=2 simulated as two distinguishable qubits per site.

    Site space is qubit (x) qubit (x) field; the fields are traced out and the
    log-negativity is taken on the full 4x4-per-site qubit state.
    """
    df = cutoff + 1
    sp = np.array([[0.0, 0.0], [1.0, 0.0]])
    a = np.diag(np.sqrt(np.arange(1, df)), 1)
    S = np.kron(sp, np.eye(2)) + np.kron(np.eye(2), sp)
    Hup = np.kron(S, a)
    H = Hup + Hup.T
    U = scipy.linalg.expm(-1j * tau * H)
    c = tmss_coefficients(r, cutoff)
    psi = np.zeros((4, df, 4, df), dtype=complex)
    for n in range(df):
        psi[0, n, 0, n] = c[n]
    # U (x) U acting on the (site1, site2) matrix of amplitudes
    m = U @ psi.reshape(4 * df, 4 * df) @ U.T
    t = m.reshape(4, df, 4, df)
    rho = np.einsum("iajb,kalb->ijkl", t, t.conj()).reshape(16, 16)
    pt = rho.reshape(4, 4, 4, 4).transpose(0, 3, 2, 1).reshape(16, 16)
    ev = np.linalg.eigvalsh(pt)
    return math.log2(1 - 2 * ev[ev < -1e-12].sum())


@pytest.mark.parametrize("r,tau", [(0.86, 1.18), (0.8, 1.2), (0.5, 3.3)])
def test_n2_against_explicit_qubits(r, tau):
    cutoff = 16
    ref = _explicit_two_qubit_sites(r, tau, cutoff)
    got = passive_transfer(TransferParams(2, r, tau, cutoff)).log_negativity
    assert got == pytest.approx(ref, abs=1e-8)


@given(n=st.integers(1, 5), r=st.floats(0.1, 1.0), tau=st.floats(0, 6.3))
@settings(max_examples=25, deadline=None)
def test_sector_and_full_paths_agree(n, r, tau):
    p = TransferParams(n, r, tau, cutoff=8)
    a = passive_transfer(p, "sector")
    b = passive_transfer(p, "full")
    assert np.abs(a.reduced_state.matrix - b.reduced_state.matrix).max() < 1e-12
    assert a.log_negativity == pytest.approx(b.log_negativity, abs=1e-10)
    assert a.diagnostics["cutoff_leak"] == pytest.approx(b.diagnostics["cutoff_leak"], abs=1e-12)


def test_curve_matches_pointwise_and_chunking():
    taus = np.linspace(0, 6, 31)
    curve = transfer_curve(3, 0.9, taus)
    tiny = transfer_curve(3, 0.9, taus, max_elements=1)
    np.testing.assert_array_equal(curve, tiny)
    pts = [passive_transfer(TransferParams(3, 0.9, t)).log_negativity for t in taus[::6]]
    np.testing.assert_allclose(curve[::6], pts, atol=1e-12)


def test_initial_time_carries_nothing():
    res = passive_transfer(TransferParams(2, 0.86, 0.0))
    assert res.log_negativity == 0.0
    assert res.probability == 1.0
    assert res.reduced_state.is_valid()


def test_bosonic_small_squeezing_peak():
    # single-excitation exchange at rate sqrt(N): swap completes at pi / (2 sqrt N)
    n = 7
    taus = np.arange(0.3, 0.9, 0.001)
    en = transfer_curve(n, 0.05, taus, "bosonic")
    assert taus[np.argmax(en)] == pytest.approx(math.pi / (2 * math.sqrt(n)), abs=0.01)
    res = bosonic_reference_transfer(TransferParams(n, 0.05, 0.5))
    assert res.params["kind"] == "bosonic"


def test_leak_warning_for_tight_cutoff():
    res = passive_transfer(TransferParams(1, 1.2, 2.0, cutoff=4))
    assert res.diagnostics["cutoff_leak_warning"]
    ok = passive_transfer(TransferParams(1, 0.86, 2.0))
    assert not ok.diagnostics["cutoff_leak_warning"]


def test_params_validation():
    with pytest.raises(ValueError):
        TransferParams(0, 0.5, 1.0)
    with pytest.raises(ValueError):
        TransferParams(1, -0.5, 1.0)
    with pytest.raises(ValueError):
        TransferParams(1, 0.5, 1.0, cutoff=0)
    with pytest.raises(ValueError):
        passive_transfer(TransferParams(1, 0.5, 1.0), method="magic")
    assert TransferParams(1, 0.0, 1.0).resolved_cutoff == 1


# -- parity ---------------------------------------------------------------

def test_parity_masks():
    tot = parity_mask(3, "even")
    assert tot[1, 1] and tot[0, 2] and not tot[0, 1]
    per = parity_mask(3, "odd", "per-mode")
    assert per[1, 3] and not per[1, 2] and not per[0, 0]
    with pytest.raises(ValueError):
        parity_mask(3, "weird")
    with pytest.raises(ValueError):
        parity_mask(3, "even", "sideways")


@pytest.mark.parametrize("n,tau", [(1, 1.1), (2, 2.5), (3, 0.7)])
def test_parity_mixture_reconstructs_passive(n, tau):
    p = TransferParams(n, 0.86, tau)
    even = parity_postselect(p, "even")
    odd = parity_postselect(p, "odd")
    assert even.probability + odd.probability == pytest.approx(1.0, abs=1e-10)
    mix = even.probability * even.reduced_state.matrix + odd.probability * odd.reduced_state.matrix
    ref = passive_transfer(p, "full").reduced_state.matrix
    assert np.abs(mix - ref).max() < 1e-9


def test_per_mode_outcomes_are_subsets():
    p = TransferParams(1, 0.86, 1.3)
    tot = parity_postselect(p, "even")
    ee = parity_postselect(p, "even", "per-mode")
    oo = parity_postselect(p, "odd", "per-mode")
    # even total parity = (even, even) or (odd, odd)
    assert ee.probability + oo.probability == pytest.approx(tot.probability, abs=1e-12)


def test_parity_zero_probability():
    # at tau = 0 the fields are exactly squeezed: n1 + n2 is always even
    with pytest.raises(ZeroProbabilityError):
        parity_postselect(TransferParams(1, 0.86, 0.0), "odd")


# -- ancilla rounds -------------------------------------------------------

def test_measurement_basis():
    m = MeasurementSpec(0.6)
    assert m.beta == pytest.approx(0.8)
    basis = np.array([m.vector("p"), m.vector("o")])
    np.testing.assert_allclose(basis @ basis.conj().T, np.eye(2), atol=1e-15)
    with pytest.raises(ValueError):
        MeasurementSpec(1.5)
    with pytest.raises(ValueError):
        MeasurementSpec(0.5, ("p", "x"))


def test_normalize_outcomes():
    assert normalize_outcomes(None, 2) == [("p", "p")] * 2
    assert normalize_outcomes("po", 2) == [("p", "o")] * 2
    assert normalize_outcomes("pp,oo", 2) == [("p", "p"), ("o", "o")]
    assert normalize_outcomes([("o", "p")], 1) == [("o", "p")]
    assert normalize_outcomes("pp", 0) == []
    for bad in ("pp,pp,pp", "px", "ppp"):
        with pytest.raises(ValueError):
            normalize_outcomes(bad, 2)


def test_no_rounds_is_passive():
    res = sequential_postselect(0.86, [2.2])
    ref = passive_transfer(TransferParams(1, 0.86, 2.2))
    assert res.log_negativity == pytest.approx(ref.log_negativity, abs=1e-12)
    assert res.probability == 1.0


def test_zero_probability_outcome_raises():
    # alpha = 0 projects on |1>; an ancilla coupled for zero time is still |0>
    with pytest.raises(ZeroProbabilityError) as info:
        sequential_postselect(0.86, [5.65, 0.0], alpha=0.0)
    assert info.value.round_index == 2
    assert PROB_FLOOR == 1e-14


@pytest.mark.parametrize("alpha,taus", [(0.0, [5.65, 4.712]), (0.95, [4.65, 3.0]), (0.3, [1.0, 2.0, 2.5])])
def test_measurement_completeness(alpha, taus):
    """Outcome-weighted conditional states add up to the unmeasured state."""
    cutoff = 20
    if len(taus) == 2:
        codes = ["pp", "po", "op", "oo"]
    else:
        codes = [f"{a},{b}" for a in ("pp", "po", "op", "oo") for b in ("pp", "po", "op", "oo")]
    total = np.zeros((4, 4), dtype=complex)
    prob = 0.0
    for code in codes:
        try:
            res = sequential_postselect(0.86, taus, alpha, code, cutoff=cutoff)
        except ZeroProbabilityError:
            continue
        total += res.probability * res.reduced_state.matrix
        prob += res.probability
    state = evolved_transfer_state(TransferParams(1, 0.86, taus[0], cutoff))
    for i, t in enumerate(taus[1:], start=2):
        state = ancilla_round(state, t, f"a{i}")
    ref = partial_trace(state, ["spin1", "spin2"]).matrix
    assert prob == pytest.approx(1.0, abs=1e-9)
    assert np.abs(total - ref).max() < 1e-9


@given(t1=st.floats(0, 6.3), t2=st.floats(0.2, 6.3), outcome=st.sampled_from(["pp", "po", "op", "oo"]))
@settings(max_examples=25, deadline=None)
def test_x_form_at_alpha_zero(t1, t2, outcome):
    try:
        res = sequential_postselect(0.86, [t1, t2], 0.0, outcome, cutoff=20)
    except ZeroProbabilityError:
        return
    rep = xform_check(res.reduced_state)
    assert rep.off_pattern_max < 1e-9
    assert res.reduced_state.is_valid()


def test_xform_report_fields():
    m = np.diag([0.4, 0.1, 0.1, 0.4]).astype(complex)
    m[0, 3] = m[3, 0] = -0.3
    rep = xform_check(m)
    assert rep.off_pattern_max == 0
    assert rep.b == pytest.approx(0.3)
    with pytest.raises(ValueError):
        xform_check(np.eye(3))


def test_sequential_reports_round_data():
    res = sequential_postselect(0.86, [5.65, 3 * math.pi / 2, 3.0], 0.0, "pp")
    probs = res.diagnostics["round_probabilities"]
    assert len(probs) == 2
    assert res.probability == pytest.approx(probs[0] * probs[1])
    assert res.params["outcomes"] == ["pp", "pp"]


def test_sequential_with_larger_ensembles():
    res = sequential_postselect(0.86, [1.0, 2.0], 0.5, "pp", n_qubits=2, cutoff=12)
    assert res.reduced_state.layout.dims == (3, 3)
    assert "xform_residual" not in res.diagnostics


def _alpha_one_deviation(r):
    taus = np.arange(0.0, 2 * math.pi, 0.3)
    worst = 0.0
    for t1 in taus:
        e0 = passive_transfer(TransferParams(1, r, t1)).log_negativity
        for t2 in taus:
            worst = max(worst, abs(sequential_postselect(r, [t1, t2], 1.0).log_negativity - e0))
    return worst


def test_alpha_one_matches_passive_to_second_order():
    """At weak squeezing the alpha=1 round changes E_N only at O(r^2)."""
    d1, d2 = _alpha_one_deviation(0.04), _alpha_one_deviation(0.02)
    assert 3.0 < d1 / d2 < 5.0
    # E_N itself is O(r), so the relative deviation vanishes
    e = transfer_curve(1, 0.02, np.arange(0, 6.3, 0.05)).max()
    assert d2 / e < 0.05
