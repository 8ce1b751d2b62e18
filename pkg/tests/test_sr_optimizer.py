import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import tfi_dense
from qevmc.models import tfi
from qevmc.sr_optimizer import (
    BatchStats, Diverged, SolveFailure, SrConfig, batch_statistics, compare_sources,
    default_chain_length, iterations_to_threshold, reference_energy, solve_sr, sr_iteration,
    SrTrace, tfi_ground_energy, train,
)
from qevmc.trial_wavefunctions import NqsWF


def test_defaults():
    cfg = SrConfig()
    assert (cfg.iterations, cfg.n_samples, cfg.eta) == (200, 5000, 0.05)
    assert cfg.resolved_chain_length(16) == 15 and cfg.resolved_chain_length(24) == 20
    assert default_chain_length(8) == 15
    assert cfg.lam(0) == 100 and cfg.lam(1) == pytest.approx(90) and cfg.lam(500) == 1e-4


@pytest.mark.parametrize("n,h,periodic", [(6, 1.0, False), (7, 0.5, False), (8, 2.0, True), (6, 1.0, True)])
def test_free_fermion_energy_matches_dense(n, h, periodic):
    H, _ = tfi_dense(n, 1.0, h, periodic)
    e = np.linalg.eigvalsh(H)[0]
    assert tfi_ground_energy(n, 1.0, h, "periodic" if periodic else "open") == pytest.approx(e, abs=1e-10)


def test_reference_energy_small_uses_diagonalisation():
    H, _ = tfi_dense(6, 1.0, 1.0)
    assert reference_energy(tfi(6)) == pytest.approx(np.linalg.eigvalsh(H)[0], abs=1e-10)


def test_zero_gradient_leaves_weights():
    spec = tfi(4, h=1.0, J=0.0)  # uniform state is the exact ground state
    wf = NqsWF.zeros(4, 4)
    new, stats = sr_iteration(wf, spec, SrConfig(n_samples=200), 0)
    assert np.array_equal(new.params, wf.params)
    assert stats.energy == pytest.approx(-4.0)


def test_first_estimate_is_uniform_average():
    spec = tfi(10)
    _, stats = sr_iteration(NqsWF.zeros(10, 10), spec, SrConfig(n_samples=4000, seed=1), 0)
    assert abs(stats.energy - (-10.0)) <= 3 * stats.sem


def test_single_parameter_toy_reaches_exact_ratio():
    # N = 1 spin, H = -h X, only the visible bias a is trained; exact ground state is (1, 1)/sqrt2
    h = 0.8
    a = 0.4
    lam = 1e-3
    for _ in range(400):
        sigma = np.array([1.0, -1.0])
        log_psi = a * sigma
        w = np.exp(2 * log_psi) / np.exp(2 * log_psi).sum()
        eloc = -h * np.exp(-2 * log_psi)  # psi(-sigma)/psi(sigma) = exp(-2 a sigma)
        stats = batch_statistics(sigma[:, None], eloc, weights=w)
        a -= 0.1 * solve_sr(stats, lam, 1e-4)[0]
    assert math.exp(2 * a) == pytest.approx(1.0, abs=1e-3)


def test_zero_iterations():
    spec = tfi(4)
    cfg = SrConfig(iterations=0, seed=3)
    trace, wf = train(cfg, spec)
    assert len(trace) == 0
    assert np.array_equal(wf.params, NqsWF.random(4, 1, seed=3, std=0.01).params)


def test_exact_mode_training_converges():
    spec = tfi(6, h=1.5)
    trace, wf = train(SrConfig(iterations=120, sampling="exact", seed=0), spec)
    assert trace.final_rel_error() < 1e-3
    assert len(trace.energy) == len(trace.rel_error) == len(trace.param_norm) == 120


def test_sampled_training_small_chain():
    spec = tfi(8, h=2.0)
    trace, _ = train(SrConfig(iterations=80, n_samples=1000, seed=2), spec)
    assert trace.final_rel_error() < 5e-3


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(1e-4, 10.0))
def test_cg_path_agrees_with_cholesky(seed, lam):
    import qevmc.sr_optimizer as sr
    rng = np.random.default_rng(seed)
    O = rng.normal(size=(60, 12))
    eloc = rng.normal(size=60)
    stats = batch_statistics(O, eloc)
    x_chol = solve_sr(stats, lam, 1e-4)
    old = sr.CHOLESKY_LIMIT
    sr.CHOLESKY_LIMIT = 0
    try:
        x_cg = solve_sr(batch_statistics(O, eloc, build_s=False), lam, 1e-4)
    finally:
        sr.CHOLESKY_LIMIT = old
    assert np.allclose(x_cg, x_chol, rtol=1e-5, atol=1e-7 * np.abs(x_chol).max())


def test_singular_system_raises_after_retries():
    stats = BatchStats(0.0, 0.0, np.zeros((3, 3)), np.ones(3), np.zeros((4, 3)))
    with pytest.raises(SolveFailure):
        solve_sr(stats, 0.0, 0.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_detected():
    spec = tfi(4)
    with pytest.raises(Diverged) as info:
        train(SrConfig(iterations=50, n_samples=300, eta=1e4, lam0=0.0, lam_min=0.0, seed=0), spec)
    assert len(info.value.trace) >= 1


def test_threshold_and_comparison_contracts():
    assert iterations_to_threshold([0.5, 0.2, 0.05], 0.1) == 3
    assert iterations_to_threshold([0.5, 0.2], 0.1) is None
    a = SrTrace(rel_error=[0.5, 0.2, 0.05, 0.01])
    b = SrTrace(rel_error=[0.3, 0.05, 0.04, 0.03])
    table = compare_sources({"uniform": a, "vqe": b}, [0.1, 0.02])
    assert table["uniform"] == {0.1: 1.0, 0.02: 1.0}
    assert table["vqe"] == {0.1: 1.5}
