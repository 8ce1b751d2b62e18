import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qevmc.exact_engine import ground_state
from qevmc.models import (
    BasisState, FixedFill, build_hamiltonian, double_occupancy, enumerate_sector, hopping_operator,
    hubbard, tfi,
)
from qevmc.trial_wavefunctions import (
    GutzwillerWF, NqsWF, SlaterDeterminant, TabulatedWF, exact_energy, gutzwiller_energy_curve,
    local_energy, log_amplitude, log_derivatives, optimal_gutzwiller, ratio, sample_slater,
    slater_distribution,
)


def test_gutzwiller_c_zero_is_slater(hubbard14):
    spec, basis = hubbard14
    sd = SlaterDeterminant.ground_state(spec.lattice)
    assert np.allclose(GutzwillerWF(0.0, sd).amplitudes(basis), sd.amplitudes(basis))


def test_nqs_zero_weights_uniform():
    wf = NqsWF.zeros(5, 10)
    for bits in (0, 7, 31):
        la, sg = log_amplitude(wf, BasisState(bits, 5))
        assert la == pytest.approx(10 * math.log(2)) and sg == 1


def test_nqs_scalar_amplitude_and_derivative():
    wf = NqsWF([0.0], [0.0], [[0.7]])
    x = BasisState(0, 1)  # bit 0 clear: sigma = +1
    assert log_amplitude(wf, x)[0] == pytest.approx(math.log(2 * math.cosh(0.7)))
    assert log_derivatives(wf, x)[-1] == pytest.approx(math.tanh(0.7))


def test_nqs_zero_weight_derivatives():
    wf = NqsWF.zeros(3, 3)
    x = BasisState(0b010, 3)
    d = log_derivatives(wf, x)
    assert np.allclose(d[:3], [1, -1, 1]) and np.allclose(d[3:], 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 2**6 - 1))
def test_nqs_derivatives_match_central_differences(seed, bits):
    wf = NqsWF.random(6, 2, seed=seed, std=0.5)
    x = BasisState(bits, 6)
    d = log_derivatives(wf, x)
    delta = 1e-6
    w = wf.params
    for k in range(0, wf.n_params, 7):
        e = np.zeros_like(w)
        e[k] = delta
        fd = (log_amplitude(wf.with_params(w + e), x)[0] - log_amplitude(wf.with_params(w - e), x)[0]) / (2 * delta)
        assert fd == pytest.approx(d[k], rel=1e-6, abs=1e-8)


def test_ratio_identity_and_uniform(gutzwiller14):
    x = BasisState.from_occupations([0, 1], [2, 3], 4)
    assert ratio(gutzwiller14, x, x) == 1.0
    assert ratio(NqsWF.zeros(4, 4), BasisState(0, 4), BasisState(1, 4)) == 1.0


def test_gutzwiller_ratio_one_extra_double_occupancy():
    # 2 sites, one electron per species; orbital (1,1)/sqrt2 for both species, so every
    # configuration has the same determinant magnitude
    spec = hubbard(1, 2)
    sd = SlaterDeterminant(np.full((2, 1), 1 / math.sqrt(2)), np.full((2, 1), 1 / math.sqrt(2)))
    wf = GutzwillerWF(0.37, sd)
    x = BasisState.from_occupations([0], [1], 2)
    y = BasisState.from_occupations([0], [0], 2)
    assert double_occupancy(y, 2) == double_occupancy(x, 2) + 1
    assert abs(ratio(wf, x, y)) == pytest.approx(math.exp(-0.37))


def test_local_energy_two_site_single_electron():
    spec = hubbard(1, 2)
    sd = SlaterDeterminant(np.full((2, 1), 1 / math.sqrt(2)), np.zeros((2, 0)))
    wf = GutzwillerWF(0.0, sd)
    for occ in ([0], [1]):
        assert local_energy(wf, spec, BasisState.from_occupations(occ, [], 2)) == pytest.approx(-1.0)


def test_local_energy_two_spin_zero_weight():
    assert local_energy(NqsWF.zeros(2, 2), tfi(2), BasisState(0, 2)) == pytest.approx(-3.0)


def test_local_energy_constant_on_eigenstate(tfi4):
    spec, basis = tfi4
    e, vec = ground_state(build_hamiltonian(spec, basis))
    wf = TabulatedWF(basis, vec.amplitudes.real)
    el = [local_energy(wf, spec, basis.state(k)) for k in range(basis.dim)]
    assert np.allclose(el, e, atol=1e-9)


def test_batched_local_energy_matches_scalar(hubbard14, gutzwiller14):
    spec, basis = hubbard14
    configs = basis.bits()
    batch = gutzwiller14.walkers(configs).local_energy(spec)
    scalar = [local_energy(gutzwiller14, spec, basis.state(k)) for k in range(basis.dim)]
    assert np.allclose(batch, scalar, atol=1e-12)
    wf = NqsWF.random(4, 1, seed=3, std=0.3)
    spec4 = tfi(4, h=0.7)
    b4 = enumerate_sector(spec4)
    assert np.allclose(wf.walkers(b4.bits()).local_energy(spec4),
                       [local_energy(wf, spec4, b4.state(k)) for k in range(16)], atol=1e-12)


def test_exact_energy_matches_local_energy_average(hubbard14, gutzwiller14):
    spec, basis = hubbard14
    psi = gutzwiller14.amplitudes(basis)
    p = psi**2 / (psi @ psi)
    el = gutzwiller14.walkers(basis.bits()).local_energy(spec)
    assert exact_energy(gutzwiller14, spec, basis) == pytest.approx(p @ el, abs=1e-12)


def test_two_site_slater_distribution():
    sd = SlaterDeterminant(np.full((2, 1), 1 / math.sqrt(2)), np.zeros((2, 0)))
    basis = enumerate_sector(hubbard(1, 2), FixedFill(1, 0))
    assert np.allclose(slater_distribution(sd, basis), [0.5, 0.5])


def test_slater_distribution_matches_hopping_ground_state(hubbard14):
    spec, basis = hubbard14
    sd = SlaterDeterminant.ground_state(spec.lattice)
    _, vec = ground_state(hopping_operator(spec, basis, spec.lattice.bonds()))
    p = slater_distribution(sd, basis)
    assert p.sum() == pytest.approx(1.0)
    assert np.allclose(p, vec.probabilities(), atol=1e-12)


def test_slater_sampler_site_occupations():
    spec = hubbard(1, 16)
    sd = SlaterDeterminant.ground_state(spec.lattice)
    configs = sample_slater(sd, 10**5, np.random.default_rng(0))
    up_diag, down_diag = sd.projector_diagonal()
    assert np.all(np.abs(configs[:, :16].mean(0) - up_diag) <= 0.01)
    assert np.all(np.abs(configs[:, 16:].mean(0) - down_diag) <= 0.01)
    assert np.all(configs[:, :16].sum(1) == 8) and np.all(configs[:, 16:].sum(1) == 8)


def test_slater_sampler_matches_distribution(hubbard14):
    spec, basis = hubbard14
    sd = SlaterDeterminant.ground_state(spec.lattice)
    configs = sample_slater(sd, 10**5, np.random.default_rng(1))
    from qevmc.models import pack_bits
    freq = np.bincount(basis.index_array(pack_bits(configs)), minlength=basis.dim) / 10**5
    assert 0.5 * np.abs(freq - slater_distribution(sd, basis)).sum() <= 0.02


def test_gutzwiller_curve_brute_force(hubbard14):
    spec, basis = hubbard14
    sd = SlaterDeterminant.ground_state(spec.lattice)
    cs = np.array([0.0, 0.3, 0.9])
    ref = [exact_energy(GutzwillerWF(c, sd), spec, basis) for c in cs]
    assert np.allclose(gutzwiller_energy_curve(spec, basis, cs), ref, atol=1e-12)


def test_optimal_gutzwiller_is_grid_minimum(hubbard14):
    spec, basis = hubbard14
    c, e = optimal_gutzwiller(spec, basis)
    # frozen value for t = 1, U = 4, open 1x4 chain (see the decisions ledger)
    assert c == pytest.approx(0.865, abs=1e-9)
    sd = SlaterDeterminant.ground_state(spec.lattice)
    for dc in (-0.001, 0.001):
        assert exact_energy(GutzwillerWF(c + dc, sd), spec, basis) >= e


def test_nqs_save_load_roundtrip(tmp_path):
    wf = NqsWF.random(6, 2, seed=9, std=0.4)
    wf.save(tmp_path / "w.weights")
    back = NqsWF.load(tmp_path / "w.weights")
    assert np.array_equal(back.params, wf.params)
    assert (back.n_visible, back.n_hidden) == (6, 12)
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(ValueError):
        NqsWF.load(tmp_path / "bad")


def test_walker_ratio_and_accept_consistent(gutzwiller14, hubbard14):
    spec, basis = hubbard14
    configs = basis.bits()[:10].copy()
    walkers = gutzwiller14.walkers(configs)
    p = np.zeros(10, dtype=np.int64)
    q = np.ones(10, dtype=np.int64)
    valid = configs[:, 0] != configs[:, 1]
    r = walkers.ratio(p, q, valid)
    for k in np.nonzero(valid)[0]:
        x = BasisState.from_array(configs[k])
        assert r[k] == pytest.approx(ratio(gutzwiller14, x, x.flip(0, 1)))
