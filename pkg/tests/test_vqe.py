import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from oracles import hubbard_dense, hva_tfi_dense
from qevmc.analysis import tvd, vqe_energy_reference
from qevmc.exact_engine import StateVector
from qevmc.models import ModelKind, build_hamiltonian, enumerate_sector, hubbard, tfi
from qevmc.samples import empirical_distribution
from qevmc.trial_wavefunctions import SlaterDeterminant, slater_distribution
from qevmc.vqe import (
    AliasTable, HvaCircuit, SizeLimitExceeded, VqeAnsatz, draw_indices, exact_distribution,
    fd_gradient, optimize, prepare_state, sample_state,
)


def test_zero_layers_tfi_is_all_plus():
    spec = tfi(3)
    vec = prepare_state(VqeAnsatz(ModelKind.TFI, 0), spec)
    assert np.allclose(exact_distribution(vec), 1 / 8)
    assert vqe_energy_reference(spec, vec) == pytest.approx(-3.0)


def test_zero_layers_hubbard_is_slater(hubbard14):
    spec, basis = hubbard14
    vec = prepare_state(VqeAnsatz(ModelKind.HUBBARD, 0), spec)
    sd = SlaterDeterminant.ground_state(spec.lattice)
    assert np.allclose(exact_distribution(vec), slater_distribution(sd, basis), atol=1e-14)


def test_zero_layer_hubbard_energy_is_slater_energy(hubbard14):
    spec, basis = hubbard14
    vec = prepare_state(VqeAnsatz(ModelKind.HUBBARD, 0), spec)
    p = exact_distribution(vec)
    D = basis.bits()[:, :4] & basis.bits()[:, 4:]
    # two lowest open-chain orbitals per spin: 2 * (2cos(pi/5) + 2cos(2pi/5))
    kinetic = -2 * (2 * math.cos(math.pi / 5) + 2 * math.cos(2 * math.pi / 5))
    assert vqe_energy_reference(spec, vec) == pytest.approx(kinetic + 4.0 * (p @ D.sum(1)), abs=1e-12)


def test_two_spin_one_layer_matches_dense_oracle():
    theta = np.array([0.3, 0.0, 0.5])
    vec = prepare_state(VqeAnsatz(ModelKind.TFI, 1, theta), tfi(2))
    assert np.allclose(vec.amplitudes, hva_tfi_dense(2, theta), atol=1e-10)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6), st.floats(0.3, 2.0))
def test_tfi_circuit_matches_dense_oracle(theta, h):
    theta = np.array(theta)
    spec = tfi(5, h=h)
    vec = HvaCircuit(spec).prepare(theta)
    assert np.allclose(vec.amplitudes, hva_tfi_dense(5, theta, h=h), atol=1e-9)
    assert vec.norm() == pytest.approx(1.0, abs=1e-12)


def test_hubbard_circuit_matches_dense_oracle(hubbard14):
    spec, basis = hubbard14
    bonds = spec.lattice.bonds()
    onsite, _ = hubbard_dense(4, [], 4.0, 2, 2)
    even, _ = hubbard_dense(4, [b for b in bonds if b[0] % 2 == 0], 0.0, 2, 2)
    odd, _ = hubbard_dense(4, [b for b in bonds if b[0] % 2 == 1], 0.0, 2, 2)
    theta = np.array([0.2, -0.7, 0.4, 1.1, 0.05, -0.3])
    v = HvaCircuit(spec).initial.copy()
    for layer in range(2):
        for k, G in enumerate((onsite, even, odd)):
            v = expm(-1j * theta[3 * layer + k] * G) @ v
    assert np.allclose(HvaCircuit(spec).prepare(theta).amplitudes, v, atol=1e-10)


@pytest.mark.parametrize("spec", [tfi(6, h=0.8), hubbard(1, 4), hubbard(2, 2)])
def test_adjoint_gradient_matches_finite_differences(spec):
    circuit = HvaCircuit(spec)
    theta = np.random.default_rng(4).uniform(-1, 1, 6)
    e, g = circuit.energy_and_gradient(theta)
    assert e == pytest.approx(circuit.energy(theta), abs=1e-12)
    assert np.allclose(g, fd_gradient(circuit.energy, theta), atol=1e-7)


def test_tfi_energy_shortcut_matches_hamiltonian():
    spec = tfi(7, h=1.3)
    circuit = HvaCircuit(spec)
    theta = np.random.default_rng(5).uniform(-1, 1, 6)
    vec = circuit.prepare(theta)
    assert circuit.energy(theta) == pytest.approx(vqe_energy_reference(spec, vec), abs=1e-11)


@pytest.mark.parametrize("gradient", ["fd", "adjoint"])
def test_two_spin_one_layer_reaches_ground_state(gradient):
    res = optimize(tfi(2), 1, restarts=3, seed=0, gradient=gradient)
    assert res.energy == pytest.approx(-math.sqrt(5), abs=1e-6)


def test_optimize_deterministic_and_not_worse_than_start():
    a = optimize(tfi(4), 2, restarts=2, seed=11)
    b = optimize(tfi(4), 2, restarts=2, seed=11)
    assert np.array_equal(a.ansatz.theta, b.ansatz.theta)
    assert a.energy <= a.initial_energy
    assert len(a.restart_energies) == 2


def test_deeper_circuit_not_worse():
    spec = tfi(8)
    e1 = optimize(spec, 1, restarts=2, seed=0, gradient="adjoint").energy
    e3 = optimize(spec, 3, restarts=2, seed=0, gradient="adjoint").energy
    assert e3 < e1


def test_ansatz_validation():
    with pytest.raises(ValueError):
        VqeAnsatz(ModelKind.TFI, 2, np.zeros(5))
    with pytest.raises(ValueError):
        VqeAnsatz(ModelKind.TFI, -1)
    with pytest.raises(ValueError):
        prepare_state(VqeAnsatz(ModelKind.TFI, 0), hubbard(1, 4))
    with pytest.raises(SizeLimitExceeded):
        HvaCircuit(tfi(26))
    with pytest.raises(ValueError):
        optimize(tfi(2), 1, gradient="newton")


def test_point_mass_sampling():
    spec = tfi(3)
    basis = enumerate_sector(spec)
    v = np.zeros(8, complex)
    v[5] = 1j
    store = sample_state(StateVector(v, basis), 500, seed=1, spec=spec)
    assert np.all(store.samples == [1, 0, 1])


def test_all_plus_frequencies():
    spec = tfi(2)
    vec = prepare_state(VqeAnsatz(ModelKind.TFI, 0), spec)
    store = sample_state(vec, 10**5, seed=2, spec=spec)
    freq = empirical_distribution(store, vec.basis)
    assert np.all(np.abs(freq - 0.25) <= 0.01)


def test_hubbard_vqe_samples_follow_state(hubbard14):
    spec, basis = hubbard14
    circuit = HvaCircuit(spec)
    vec = circuit.prepare(np.array([0.3, -0.4, 0.25, 0.1, 0.2, -0.5]))
    store = sample_state(vec, 10**5, seed=3, spec=spec, layers=2)
    assert tvd(empirical_distribution(store, basis), exact_distribution(vec)) <= 0.02
    assert store.layers == 2 and store.source == "vqe-sim"


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=12).filter(lambda p: sum(p) > 0.1),
       st.integers(0, 10**6))
def test_alias_table_law(p, seed):
    p = np.array(p) / sum(p)
    table = AliasTable(p)
    # alias construction reproduces p exactly: P(k) = (prob_k + sum over j aliased to k of (1 - prob_j)) / n
    n = len(p)
    law = table.prob / n
    np.add.at(law, table.alias, (1 - table.prob) / n)
    assert np.allclose(law, p, atol=1e-12)
    draws = draw_indices(p, 50, np.random.default_rng(seed))
    assert np.all(p[draws] > 0)
