import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from entxfer.dynamics import (LayoutError, analytic_jc_propagator, apply_local, cutoff_leak,
                              evolve, field_occupation, site_propagator)
from entxfer.operators import site_hamiltonian
from entxfer.statespace import (Factor, PureState, SubsystemLayout, basis_state,
                                canonical_layout, initial_transfer_state, permute)


@given(n=st.integers(1, 4), cutoff=st.integers(1, 6), tau=st.floats(-10, 10))
@settings(max_examples=40, deadline=None)
def test_block_propagator_matches_expm(n, cutoff, tau):
    H = site_hamiltonian(n, cutoff)
    U = site_propagator(H, tau)
    ref = scipy.linalg.expm(-1j * tau * H.matrix)
    assert np.abs(U.dense() - ref).max() < 1e-10
    assert U.unitarity_error() < 1e-12


def test_zero_time_is_identity():
    U = site_propagator(site_hamiltonian(3, 4), 0.0)
    np.testing.assert_allclose(U.dense(), np.eye(20), atol=1e-14)


@pytest.mark.parametrize("tau", [0.7, 1.3, 5.65])
def test_analytic_single_atom_propagator(tau):
    cutoff = 20
    Ua = analytic_jc_propagator(cutoff, tau)
    Un = site_propagator(site_hamiltonian(1, cutoff), tau)
    edge = set(Ua.edge_indices)
    rows = [i for i in range(Ua.dimension) if i not in edge]
    assert np.abs(Ua.dense()[rows] - Un.dense()[rows]).max() < 1e-10
    # the edge state is left alone by both
    (e,) = Ua.edge_indices
    assert Ua.dense()[e, e] == 1 and Un.dense()[e, e] == pytest.approx(1)


def test_analytic_rabi_oscillation():
    # |0 atoms, 1 photon> -> cos|0,1> - i sin|1,0>
    U = analytic_jc_propagator(3, 0.4).dense()
    assert U[1, 1] == pytest.approx(math.cos(0.4))
    assert U[4, 1] == pytest.approx(-1j * math.sin(0.4))


def test_analytic_rejects_zero_cutoff():
    with pytest.raises(ValueError):
        analytic_jc_propagator(0, 1.0)


def _dense_site_op(U, layout, axes):
    """Full-space operator acting with U on the given (adjacent) factors."""
    dims = layout.dims
    left = math.prod(dims[: axes[0]])
    right = math.prod(dims[axes[1] + 1:])
    return np.kron(np.kron(np.eye(left), U), np.eye(right))


def _random_state(layout, rng):
    v = rng.normal(size=layout.dimension) + 1j * rng.normal(size=layout.dimension)
    return PureState(layout, v / np.linalg.norm(v))


def test_evolve_matches_dense_product(rng):
    n, cutoff, tau = 2, 3, 0.9
    lay = canonical_layout(n, cutoff)
    s = _random_state(lay, rng)
    U = site_propagator(site_hamiltonian(n, cutoff), tau)
    full = np.kron(U.dense(), U.dense())
    out = evolve(s, U, U)
    np.testing.assert_allclose(out.amplitudes, full @ s.amplitudes, atol=1e-12)


def test_apply_local_non_adjacent_factors(rng):
    # spins first, fields last: site pairs are not adjacent
    cutoff, tau = 3, 1.7
    lay = canonical_layout(1, cutoff)
    s = _random_state(lay, rng)
    U = site_propagator(site_hamiltonian(1, cutoff), tau)
    ref = apply_local(s, U, ["spin2", "field2"])
    shuffled = permute(s, ["spin2", "spin1", "field1", "field2"])
    out = apply_local(shuffled, U, ["spin2", "field2"])
    back = permute(out, ["spin1", "field1", "spin2", "field2"])
    np.testing.assert_allclose(back.amplitudes, ref.amplitudes, atol=1e-13)
    dense = _dense_site_op(U.dense(), lay, (2, 3))
    np.testing.assert_allclose(ref.amplitudes, dense @ s.amplitudes, atol=1e-12)


def test_apply_local_dimension_mismatch():
    lay = canonical_layout(2, 3)
    s = basis_state(lay, [0, 0, 0, 0])
    U = site_propagator(site_hamiltonian(1, 3), 1.0)
    with pytest.raises(LayoutError):
        apply_local(s, U, ["spin1", "field1"])
    with pytest.raises(LayoutError):
        apply_local(s, U, ["spin1"])


def test_evolve_requires_site_pairs():
    lay = SubsystemLayout.of(Factor("spin", 1, 2), Factor("spin", 2, 2))
    U = site_propagator(site_hamiltonian(1, 1), 1.0)
    with pytest.raises(LayoutError):
        evolve(basis_state(lay, [0, 0]), U, U)


@given(tau=st.floats(0, 7), r=st.floats(0.1, 1.0))
@settings(max_examples=20, deadline=None)
def test_norm_and_excitations_conserved(tau, r):
    n, cutoff = 2, 8
    s = initial_transfer_state(n, r, cutoff)
    U = site_propagator(site_hamiltonian(n, cutoff), tau)
    out = evolve(s, U, U)
    assert out.norm == pytest.approx(1.0, abs=1e-12)
    t = np.abs(out.tensor()) ** 2
    s_idx, f_idx = np.meshgrid(np.arange(n + 1), np.arange(cutoff + 1), indexing="ij")
    e1 = (s_idx + f_idx)[:, :, None, None]
    e2 = (s_idx + f_idx)[None, None, :, :]
    # the squeezed state pairs equal photon numbers; both sites keep equal excitation
    assert t[(e1 != e2)].sum() < 1e-24


def test_field_occupation_and_leak():
    s = initial_transfer_state(1, 0.86, 10)
    occ = field_occupation(s, "field1")
    c2 = np.tanh(0.86) ** (2 * np.arange(11))
    np.testing.assert_allclose(occ, c2 / c2.sum(), atol=1e-14)
    # levels above 0.9 * 10 = 9
    assert cutoff_leak(s) == pytest.approx(occ[10])
