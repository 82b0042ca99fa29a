import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entxfer.statespace import (Factor, PureState, SubsystemLayout, TwoModeSqueezedSpec,
                                basis_state, canonical_layout, choose_cutoff,
                                initial_transfer_state, inverse_order, permute, polarised_ground,
                                tensor, tmss_coefficients, truncation_deficit,
                                two_mode_squeezed_state)


def _deficit_by_summation(r, cutoff):
    # independent oracle: explicit partial sum of the photon distribution
    w = sum(math.tanh(r) ** (2 * n) / math.cosh(r) ** 2 for n in range(cutoff + 1))
    return 1.0 - w


@pytest.mark.parametrize("r,cutoff", [(0.3, 2), (0.86, 10), (0.86, 25), (1.2, 40)])
def test_deficit_matches_partial_sum(r, cutoff):
    assert truncation_deficit(r, cutoff) == pytest.approx(_deficit_by_summation(r, cutoff), abs=1e-13)


@given(r=st.floats(0.01, 2.5), log_eps=st.floats(-12, -2))
@settings(max_examples=200, deadline=None)
def test_choose_cutoff_is_minimal(r, log_eps):
    eps = 10.0**log_eps
    n = choose_cutoff(r, eps)
    assert truncation_deficit(r, n) <= eps
    if n > 0:
        assert truncation_deficit(r, n - 1) > eps


def test_choose_cutoff_at_working_point():
    # tanh(0.86)^2 ~ 0.4836; need (n+1) ln t2 <= ln 1e-8 -> n = 25
    assert choose_cutoff(0.86) == 25


@pytest.mark.parametrize("r,eps", [(float("nan"), 1e-8), (0.5, 0.0), (0.5, 1.0), (0.5, -1e-3)])
def test_choose_cutoff_rejects_bad_input(r, eps):
    with pytest.raises(ValueError):
        choose_cutoff(r, eps)


def test_choose_cutoff_huge_r_raises():
    with pytest.raises(ValueError, match="too large"):
        choose_cutoff(40.0)


def test_zero_squeezing_is_vacuum():
    assert choose_cutoff(0.0) == 0
    st_ = two_mode_squeezed_state(TwoModeSqueezedSpec(0.0, 0))
    assert st_.amplitudes.tolist() == [1.0]


def test_tmss_amplitudes():
    r, cutoff = 0.7, 6
    s = two_mode_squeezed_state(TwoModeSqueezedSpec(r, cutoff))
    amps = s.tensor()
    assert np.count_nonzero(amps - np.diag(np.diag(amps))) == 0
    raw = np.tanh(r) ** np.arange(cutoff + 1) / np.cosh(r)
    np.testing.assert_allclose(np.diag(amps).real, raw / np.linalg.norm(raw), atol=1e-15)
    assert s.norm == pytest.approx(1.0, abs=1e-14)
    assert s.diagnostics["retained_weight"] == pytest.approx(1 - _deficit_by_summation(r, cutoff), abs=1e-14)
    np.testing.assert_allclose(tmss_coefficients(r, cutoff), np.diag(amps).real, atol=1e-15)


def test_auto_spec_uses_cutoff_rule():
    spec = TwoModeSqueezedSpec.auto(0.5, 1e-6)
    assert spec.cutoff == choose_cutoff(0.5, 1e-6)


@pytest.mark.parametrize("bad", [dict(r=-0.1, cutoff=3), dict(r=float("inf"), cutoff=3), dict(r=0.1, cutoff=-1)])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        TwoModeSqueezedSpec(**bad)


def test_layout_names_and_lookup():
    lay = canonical_layout(2, 4)
    assert lay.names == ("spin1", "field1", "spin2", "field2")
    assert lay.dims == (3, 5, 3, 5)
    assert lay.dimension == 225
    assert lay.index("spin2") == 2
    assert lay.site_indices(2) == [2, 3]
    with pytest.raises(KeyError):
        lay.index("qubit1")
    with pytest.raises(IndexError):
        lay.index(7)


def test_layout_rejects_duplicates():
    with pytest.raises(ValueError, match="duplicate"):
        SubsystemLayout.of(Factor("spin", 1, 2), Factor("spin", 1, 3))
    # a tag makes the names distinct
    SubsystemLayout.of(Factor("qubit", 1, 2), Factor("qubit", 1, 2, "a2"))


def test_amplitude_length_checked():
    lay = canonical_layout(1, 1)
    with pytest.raises(ValueError):
        PureState(lay, np.zeros(15))


def test_amplitudes_read_only():
    s = basis_state(canonical_layout(1, 1), [0, 1, 0, 1])
    with pytest.raises(ValueError):
        s.amplitudes[0] = 2.0


def test_tensor_order_is_kron(rng):
    a = PureState(SubsystemLayout.of(Factor("spin", 1, 2)), rng.normal(size=2))
    b = PureState(SubsystemLayout.of(Factor("field", 1, 3)), rng.normal(size=3))
    ab = tensor(a, b)
    assert ab.layout.names == ("spin1", "field1")
    np.testing.assert_allclose(ab.tensor(), np.outer(a.amplitudes, b.amplitudes))


@given(perm=st.permutations(range(4)))
@settings(max_examples=24, deadline=None)
def test_permute_roundtrip(perm):
    rng = np.random.default_rng(1)
    lay = SubsystemLayout.of(Factor("spin", 1, 2), Factor("field", 1, 3),
                             Factor("spin", 2, 4), Factor("field", 2, 5))
    s = PureState(lay, rng.normal(size=lay.dimension) + 1j * rng.normal(size=lay.dimension))
    p = permute(s, list(perm))
    assert p.layout.names == tuple(lay.names[i] for i in perm)
    # element check against the index map
    idx = (1, 2, 3, 4)
    assert p.tensor()[tuple(idx[i] for i in perm)] == s.tensor()[idx]
    back = permute(p, inverse_order(list(perm)))
    assert np.array_equal(back.amplitudes, s.amplitudes)


def test_permute_rejects_non_permutation():
    s = basis_state(canonical_layout(1, 1), [0, 0, 0, 0])
    with pytest.raises(ValueError):
        permute(s, [0, 0, 1, 2])


def test_initial_state_layout_and_content():
    s = initial_transfer_state(2, 0.5, 4)
    assert s.layout.names == ("spin1", "field1", "spin2", "field2")
    t = s.tensor()
    c = tmss_coefficients(0.5, 4)
    for n in range(5):
        assert t[0, n, 0, n] == pytest.approx(c[n])
    assert abs(np.vdot(t, t) - 1) < 1e-14
    # atoms carry no excitation
    assert np.abs(t[1:]).max() == 0 and np.abs(t[:, :, 1:]).max() == 0


def test_polarised_ground():
    g = polarised_ground(3)
    assert g.layout.names == ("spin1", "spin2")
    assert g.amplitudes[0] == 1 and np.count_nonzero(g.amplitudes) == 1
