import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import hubbard_dense, tfi_dense
from qevmc.models import (
    AllSpins, BasisState, FixedFill, LatticeSpec, ModelKind, SectorTooLarge, build_hamiltonian,
    double_occupancy, enumerate_sector, hubbard, jw_sign, pack_bits, tfi, unpack_bits,
)


@pytest.mark.parametrize("shape,dim", [((1, 4), 36), ((1, 8), 4900), ((2, 2), 36)])
def test_half_filled_sector_sizes(shape, dim):
    basis = enumerate_sector(hubbard(*shape))
    assert basis.dim == dim
    assert math.comb(shape[0] * shape[1], shape[0] * shape[1] // 2) ** 2 == dim


def test_two_spin_enumeration_is_full():
    basis = enumerate_sector(tfi(2))
    assert list(basis.states) == [0, 1, 2, 3]


def test_sector_states_sorted_and_indexed(hubbard14):
    _, basis = hubbard14
    assert np.all(np.diff(basis.states) > 0)
    assert np.array_equal(basis.index_array(basis.states), np.arange(basis.dim))
    for k in (0, 7, 35):
        assert basis.index(basis.state(k)) == k


def test_states_respect_filling(hubbard14):
    spec, basis = hubbard14
    bits = basis.bits()
    assert np.all(bits[:, :4].sum(1) == 2) and np.all(bits[:, 4:].sum(1) == 2)


def test_two_spin_tfi_matrix():
    spec = tfi(2)
    H = build_hamiltonian(spec, enumerate_sector(spec)).toarray()
    assert np.allclose(np.diag(H), [-1, 1, 1, -1])
    expected_off = -np.array([[0, 1, 1, 0], [1, 0, 0, 1], [1, 0, 0, 1], [0, 1, 1, 0]])
    assert np.allclose(H - np.diag(np.diag(H)), expected_off)
    assert np.linalg.eigvalsh(H)[0] == pytest.approx(-math.sqrt(5), abs=1e-12)


def test_two_site_hubbard_single_electron():
    spec = hubbard(1, 2, U=3.7)
    basis = enumerate_sector(spec, FixedFill(1, 0))
    H = build_hamiltonian(spec, basis).toarray()
    assert np.allclose(H, [[0, -1], [-1, 0]])
    assert np.linalg.eigvalsh(H)[0] == pytest.approx(-1.0)


@pytest.mark.parametrize("shape,U", [((1, 4), 4.0), ((2, 2), 4.0), ((1, 6), 2.5), ((2, 3), 1.0)])
def test_hubbard_matches_operator_oracle(shape, U):
    spec = hubbard(*shape, U=U)
    basis = enumerate_sector(spec)
    L = spec.n_sites
    H_ref, states = hubbard_dense(L, spec.lattice.bonds(), U, L // 2, L // 2)
    assert np.array_equal(states, basis.states)
    assert np.allclose(build_hamiltonian(spec, basis).toarray(), H_ref, atol=1e-14)


@pytest.mark.parametrize("n,h,periodic", [(3, 0.7, False), (4, 1.0, False), (5, 2.0, True)])
def test_tfi_matches_kron_oracle(n, h, periodic):
    spec = tfi(n, h=h, boundary="periodic" if periodic else "open")
    H_ref, _ = tfi_dense(n, 1.0, h, periodic)
    assert np.allclose(build_hamiltonian(spec, enumerate_sector(spec)).toarray(), H_ref)


@pytest.mark.parametrize("spec", [hubbard(1, 4), hubbard(2, 2), tfi(5), tfi(4, boundary="periodic")])
def test_hamiltonian_symmetric(spec):
    H = build_hamiltonian(spec, enumerate_sector(spec))
    assert abs(H - H.T).max() == 0


def test_double_occupancy_examples():
    L = 4
    x = BasisState.from_occupations([0, 1], [0, 2], L)
    assert double_occupancy(x, L) == 1
    assert double_occupancy(BasisState.from_occupations([], [], L), L) == 0
    assert double_occupancy(BasisState.from_occupations(range(4), range(4), L), L) == 4


def test_jw_sign_counts_modes_between():
    # modes 1 and 2 occupied lie between 0 and 3
    assert jw_sign(0b0111, 0, 3) == 1
    assert jw_sign(0b0011, 0, 3) == -1
    assert jw_sign(0b0001, 0, 1) == 1


def test_periodic_2d_rejected():
    with pytest.raises(ValueError):
        hubbard(2, 2, boundary="periodic")


def test_bonds_open_and_periodic():
    assert LatticeSpec((1, 4), "open", ModelKind.TFI).bonds() == [(0, 1), (1, 2), (2, 3)]
    assert (3, 0) in LatticeSpec((1, 4), "periodic", ModelKind.TFI).bonds() or \
        (0, 3) in LatticeSpec((1, 4), "periodic", ModelKind.TFI).bonds()
    assert len(LatticeSpec((2, 3), "open", ModelKind.HUBBARD).bonds()) == 7


def test_all_spins_constraint_dimension():
    assert enumerate_sector(tfi(3), AllSpins()).dim == 8


@given(st.lists(st.integers(0, 1), min_size=1, max_size=40))
def test_pack_unpack_roundtrip(bits):
    arr = np.array([bits], dtype=np.uint8)
    assert np.array_equal(unpack_bits(pack_bits(arr), len(bits)), arr)


@given(st.integers(0, 2**16 - 1), st.integers(0, 15))
def test_basis_state_flip_involution(bits, j):
    x = BasisState(bits, 16)
    assert x.flip(j).flip(j) == x
    assert x.flip(j).popcount() == x.popcount() + (1 if not x.bit(j) else -1)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([2, 4, 6]), st.floats(0.0, 8.0))
def test_hubbard_chain_spectrum_bounds(L, U):
    spec = hubbard(1, L, U=U)
    H = build_hamiltonian(spec, enumerate_sector(spec)).toarray()
    w = np.linalg.eigvalsh(H)
    # kinetic part bounded by 2 * (number of bonds) per spin species in magnitude
    assert w[0] >= -4 * (L - 1) - 1e-9
    assert w[-1] <= U * L + 4 * (L - 1) + 1e-9
