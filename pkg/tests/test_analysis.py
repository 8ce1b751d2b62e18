import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import matrix_power_distribution
from qevmc.analysis import (
    BoundViolation, NonReversibleChain, check_fidelity_bound, check_mixing_bound, chi_squared,
    default_tvd_grid, detailed_balance_violation, evolve_distribution, first_passage, l1_distance,
    local_energy_table, mixing_report, relaxation_time, row_sum_error, speedup_factor,
    spectrum_edges, transition_matrix, tvd, vqe_energy_reference,
)
from qevmc.exact_engine import ground_state
from qevmc.mcmc import Mixer
from qevmc.models import build_hamiltonian, enumerate_sector, tfi
from qevmc.trial_wavefunctions import NqsWF, exact_energy, slater_distribution


@pytest.fixture(scope="module")
def kernel14(hubbard14, gutzwiller14):
    spec, basis = hubbard14
    return transition_matrix(gutzwiller14, Mixer.for_spec(spec), basis)


def test_rows_stochastic_and_reversible(kernel14):
    assert row_sum_error(kernel14) <= 1e-14
    assert detailed_balance_violation(kernel14) <= 1e-12


def test_stationarity(kernel14):
    pi = kernel14.pi
    assert np.abs(kernel14.matrix.T @ pi - pi).sum() <= 1e-12


def test_uniform_target_gives_bare_proposal():
    spec = tfi(3)
    basis = enumerate_sector(spec)
    tm = transition_matrix(NqsWF.zeros(3, 3), Mixer.spin_flip(3), basis)
    M = tm.matrix.toarray()
    for i in range(8):
        for j in range(8):
            assert M[i, j] == pytest.approx(1 / 3 if bin(i ^ j).count("1") == 1 else 0.0)


def test_kernel_agrees_with_dense_metropolis_oracle(hubbard14, gutzwiller14, kernel14):
    spec, basis = hubbard14
    psi = gutzwiller14.amplitudes(basis)
    p = psi**2
    mixer = Mixer.for_spec(spec)
    M = np.zeros((basis.dim, basis.dim))
    for i in range(basis.dim):
        x = basis.state(i)
        for y in mixer.targets(x):
            j = basis.index(y)
            if j != i:
                M[i, j] += min(1.0, p[j] / p[i]) / mixer.n_slots
        M[i, i] = 1 - M[i].sum()
    assert np.allclose(kernel14.matrix.toarray(), M, atol=1e-15)


def test_trajectory_constant_at_stationarity(kernel14):
    traj = evolve_distribution(kernel14, kernel14.pi, 20)
    assert np.abs(traj - kernel14.pi).max() < 1e-14


def test_one_step_from_point_mass_is_row(kernel14):
    e = np.zeros(kernel14.dim)
    e[5] = 1.0
    assert np.allclose(evolve_distribution(kernel14, e, 1)[1], kernel14.matrix.toarray()[5], atol=1e-16)


def test_matrix_powers_oracle(kernel14):
    nu0 = np.random.default_rng(0).dirichlet(np.ones(kernel14.dim))
    traj = evolve_distribution(kernel14, nu0, 30)
    M = kernel14.matrix.toarray()
    for n in (1, 7, 30):
        assert np.allclose(traj[n], matrix_power_distribution(M, nu0, n), atol=1e-14)


def test_slater_source_contracts(hubbard14, gutzwiller14, kernel14):
    _, basis = hubbard14
    nu0 = slater_distribution(gutzwiller14.slater, basis)
    traj = evolve_distribution(kernel14, nu0, 200)
    d = [tvd(nu, kernel14.pi) for nu in traj]
    assert d[-1] < d[0]
    assert max(np.diff(d)) <= 1e-12


def test_distance_examples():
    assert tvd([0.3, 0.7], [0.3, 0.7]) == 0 and chi_squared([0.3, 0.7], [0.3, 0.7]) == pytest.approx(0)
    assert tvd([1, 0], [0.5, 0.5]) == 0.5 and chi_squared([1, 0], [0.5, 0.5]) == pytest.approx(1.0)
    assert chi_squared([0.5, 0.5], [0.75, 0.25]) == pytest.approx(1 / 3)
    assert l1_distance([1, 0], [0.5, 0.5]) == 1.0
    assert chi_squared([0.5, 0.5], [1.0, 0.0]) == math.inf


def test_spectrum_matches_dense_eigenvalues(kernel14):
    M = kernel14.matrix.toarray()
    w = np.sort(np.linalg.eigvals(M).real)
    lam2, lam_min = spectrum_edges(kernel14)
    assert lam2 == pytest.approx(w[-2], abs=1e-10)
    assert lam_min == pytest.approx(w[0], abs=1e-10)
    assert relaxation_time(lam2) == pytest.approx(1 / (1 - w[-2]))


def test_sparse_spectrum_path_matches_dense(monkeypatch):
    import qevmc.analysis as analysis
    spec = tfi(7, h=0.8)
    basis = enumerate_sector(spec)
    _, vec = ground_state(build_hamiltonian(spec, basis))
    tm = transition_matrix(vec.probabilities(), Mixer.spin_flip(7), basis)
    dense = spectrum_edges(tm)
    monkeypatch.setattr(analysis, "DENSE_SPECTRUM_LIMIT", 8)
    sparse = spectrum_edges(tm)
    assert sparse == pytest.approx(dense, abs=1e-8)


def test_mixing_bound_at_step_zero_and_stationarity(kernel14):
    nu0 = np.random.default_rng(1).dirichlet(np.ones(kernel14.dim))
    ledger = check_mixing_bound(kernel14, nu0, 0)
    assert ledger.lhs[0] == pytest.approx(4 * tvd(nu0, kernel14.pi) ** 2)
    assert ledger.rhs[0] == pytest.approx(chi_squared(nu0, kernel14.pi))
    assert ledger.lhs[0] <= ledger.rhs[0]
    at_pi = check_mixing_bound(kernel14, kernel14.pi, 5)
    assert max(at_pi.lhs) < 1e-28 and max(abs(r) for r in at_pi.rhs) < 1e-12


def test_mixing_bound_slater_hundred_steps(hubbard14, gutzwiller14, kernel14):
    _, basis = hubbard14
    ledger = check_mixing_bound(kernel14, slater_distribution(gutzwiller14.slater, basis), 100)
    assert ledger.violations == 0


def test_mixing_bound_flags_wrong_lambda(kernel14):
    nu0 = np.zeros(kernel14.dim)
    nu0[0] = 1.0
    with pytest.raises(BoundViolation):
        check_mixing_bound(kernel14, nu0, 50, lam2=0.1)
    ledger = check_mixing_bound(kernel14, nu0, 50, lam2=0.1, strict=False)
    assert ledger.violations > 0


def test_nonreversible_chain_rejected(kernel14):
    import dataclasses
    bad = dataclasses.replace(kernel14, pi=np.full(kernel14.dim, 1 / kernel14.dim))
    with pytest.raises(NonReversibleChain):
        check_mixing_bound(bad, bad.pi, 3)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_fidelity_bound_random_pairs(seed):
    rng = np.random.default_rng(seed)
    nu, pi = rng.dirichlet(np.ones(16)), rng.dirichlet(np.ones(16))
    led = check_fidelity_bound(nu, pi)
    assert led.slack >= -1e-12


def test_fidelity_bound_equal_and_skewed():
    p = np.array([0.2, 0.8])
    assert check_fidelity_bound(p, p).slack == pytest.approx(0.0, abs=1e-14)
    d = 0.01
    led = check_fidelity_bound(np.array([1 - d, d]), np.array([d, 1 - d]))
    assert led.chi2 > 90 and led.overlap < 0.2 and led.slack > 50


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40))
def test_distance_properties(seed, dim):
    rng = np.random.default_rng(seed)
    nu, pi = rng.dirichlet(np.ones(dim)), rng.dirichlet(np.ones(dim))
    d = tvd(nu, pi)
    assert 0 <= d <= 1
    assert 4 * d**2 <= chi_squared(nu, pi) + 1e-12


def test_speedup_contracts():
    a = np.array([1.0, 0.5, 0.2, 0.1, 0.05])
    b = np.array([0.6, 0.15, 0.08, 0.04, 0.02])
    self_cmp = speedup_factor(a, a, [0.5, 0.2, 0.1])
    assert set(self_cmp.values()) == {1.0}
    s = speedup_factor(a, b, [0.3, 0.1, 0.01])
    assert 0.01 not in s
    assert s[0.1] == pytest.approx(3 / 2)
    assert speedup_factor(a, b, [0.7])[0.7] == math.inf
    assert first_passage(a, 0.2) == 2 and first_passage(a, 0.0) is None


def test_energy_helpers(hubbard14, gutzwiller14, kernel14):
    spec, basis = hubbard14
    el = local_energy_table(kernel14, spec)
    assert kernel14.pi @ el == pytest.approx(exact_energy(gutzwiller14, spec, basis), abs=1e-12)
    e, vec = ground_state(build_hamiltonian(spec, basis))
    assert vqe_energy_reference(spec, vec, basis) == pytest.approx(e)


def test_mixing_report_contents(hubbard14, gutzwiller14, kernel14):
    spec, basis = hubbard14
    slater = slater_distribution(gutzwiller14.slater, basis)
    uniform = np.full(basis.dim, 1 / basis.dim)
    rep = mixing_report(kernel14, {"slater": slater, "uniform": uniform}, 120, spec=spec, baseline="uniform")
    assert set(rep.sources) == {"slater", "uniform"}
    assert all(b.violations == 0 for b in rep.bounds.values())
    assert len(rep.sources["slater"].tvd) == 121
    assert set(rep.speedups["slater"].values()) and all(v > 0 for v in rep.speedups["slater"].values())
    assert abs(rep.energy_error("slater")[-1]) < 1e-6
    json.loads(rep.to_json())
    grid = default_tvd_grid()
    assert grid[0] == 0.5 and grid[-1] == pytest.approx(1e-4) and np.all(np.diff(grid) < 0)
