"""Exact mixing analysis on enumerable sectors.

Distributions are row vectors; one chain step maps nu -> nu M.  ``tvd`` uses
the 1/2 factor.  The mixing bound is checked in the form

    4 * tvd(nu_n, pi)^2 <= lambda_2^n * chi2(nu_0, pi)

which at n = 0 is the Cauchy-Schwarz inequality (sum |nu - pi|)^2 <= chi2.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exact_engine import StateVector, expectation
from .mcmc import Mixer, MixerKind
from .models import HamiltonianSpec, SectorBasis, build_hamiltonian

logger = logging.getLogger(__name__)

MAX_ENUMERABLE = 2**20
# p(x) below this fraction of max p is treated as outside the support
SUPPORT_CUTOFF = 1e-24
DENSE_SPECTRUM_LIMIT = 4096


class NonReversibleChain(ValueError):
    pass


class BoundViolation(AssertionError):
    pass


@dataclass(eq=False)
class TransitionMatrix:
    matrix: sp.csr_matrix
    pi: np.ndarray
    support: np.ndarray
    basis: SectorBasis
    amplitudes: np.ndarray | None = None

    @property
    def restricted(self) -> bool:
        return len(self.support) < self.basis.dim

    @property
    def dim(self) -> int:
        return len(self.support)

    def restrict(self, nu_full: np.ndarray) -> tuple[np.ndarray, float]:
        """Condition a full-sector distribution on the support; returns (nu, dropped mass)."""
        nu_full = np.asarray(nu_full, dtype=float)
        nu = nu_full[self.support]
        kept = nu.sum()
        if kept <= 0:
            raise ValueError("distribution has no mass on the chain's support")
        return nu / kept, float(1.0 - kept / nu_full.sum())


def _target_probabilities(target, basis: SectorBasis) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(target, np.ndarray):
        p = np.asarray(target, dtype=float)
        return p / p.sum(), None
    amp = np.real(np.asarray(target.amplitudes(basis)))
    p = amp**2
    return p / p.sum(), amp


def transition_matrix(target, mixer: Mixer, basis: SectorBasis) -> TransitionMatrix:
    """Exact Metropolis kernel on the support of p = |psi|^2 (or a given vector)."""
    if basis.dim > MAX_ENUMERABLE:
        raise ValueError(f"basis too large for an explicit kernel ({basis.dim} states)")
    p, amp = _target_probabilities(target, basis)
    support = np.nonzero(p > SUPPORT_CUTOFF * p.max())[0]
    if len(support) < basis.dim:
        logger.info("kernel restricted to %d of %d states (zero amplitudes)", len(support), basis.dim)
    full_to_sup = np.full(basis.dim, -1)
    full_to_sup[support] = np.arange(len(support))
    states = basis.states[support]
    ps = p[support]
    rows, cols, vals = [], [], []
    weight = 1.0 / mixer.n_slots
    for pq in mixer.slots:
        a, b = int(pq[0]), int(pq[1])
        if b < 0:
            moved = np.ones(len(states), dtype=bool)
            y = states ^ (np.int64(1) << a)
        else:
            moved = ((states >> a) & 1) != ((states >> b) & 1)
            y = states ^ ((np.int64(1) << a) | (np.int64(1) << b))
        src = np.nonzero(moved)[0]
        tgt = full_to_sup[basis.index_array(y[src])]
        ok = tgt >= 0
        src, tgt = src[ok], tgt[ok]
        rows.append(src)
        cols.append(tgt)
        vals.append(weight * np.minimum(1.0, ps[tgt] / ps[src]))
    n = len(support)
    off = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n)).tocsr()
    off.sum_duplicates()
    diag = np.array([1.0 - math.fsum(off.data[off.indptr[k]:off.indptr[k + 1]]) for k in range(n)])
    M = (off + sp.diags(diag)).tocsr()
    return TransitionMatrix(M, ps / ps.sum(), support, basis, None if amp is None else amp[support])


def row_sum_error(tm: TransitionMatrix) -> float:
    sums = np.array([math.fsum(tm.matrix.data[tm.matrix.indptr[k]:tm.matrix.indptr[k + 1]])
                     for k in range(tm.dim)])
    return float(np.abs(sums - 1.0).max())


def detailed_balance_violation(tm: TransitionMatrix) -> float:
    F = sp.diags(tm.pi) @ tm.matrix
    D = (F - F.T).tocoo()
    return float(np.abs(D.data).max()) if D.nnz else 0.0


def iterate_distribution(tm: TransitionMatrix, nu0: np.ndarray, steps: int) -> Iterator[np.ndarray]:
    """Yields nu_0, nu_1, ..., nu_steps."""
    nu = np.asarray(nu0, dtype=float)
    if nu.shape != (tm.dim,):
        raise ValueError(f"dimension mismatch: kernel {tm.dim}, distribution {nu.shape}")
    MT = tm.matrix.T.tocsr()
    yield nu
    for _ in range(steps):
        nu = MT @ nu
        drift = abs(nu.sum() - 1.0)
        assert drift <= 1e-12, f"probability drift {drift:.2e}"
        yield nu


def evolve_distribution(tm: TransitionMatrix, nu0: np.ndarray, steps: int) -> np.ndarray:
    return np.array(list(iterate_distribution(tm, nu0, steps)))


def tvd(nu: np.ndarray, pi: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(nu) - np.asarray(pi)).sum())


def l1_distance(nu: np.ndarray, pi: np.ndarray) -> float:
    return 2.0 * tvd(nu, pi)


def chi_squared(nu: np.ndarray, pi: np.ndarray) -> float:
    """sum nu^2/pi - 1; +inf when nu charges a state pi does not."""
    nu, pi = np.asarray(nu, float), np.asarray(pi, float)
    if np.any((pi <= 0) & (nu > 0)):
        logger.warning("chi-squared undefined: support of nu exceeds support of pi")
        return math.inf
    m = pi > 0
    return float(np.sum(nu[m] ** 2 / pi[m]) - 1.0)


def spectrum_edges(tm: TransitionMatrix) -> tuple[float, float]:
    """(lambda_2, lambda_min) of the pi-symmetrised kernel D^1/2 M D^-1/2."""
    s = np.sqrt(tm.pi)
    S = (sp.diags(s) @ tm.matrix @ sp.diags(1.0 / s)).tocsr()
    S = 0.5 * (S + S.T)
    if tm.dim <= DENSE_SPECTRUM_LIMIT:
        w = np.linalg.eigvalsh(S.toarray())
        return float(w[-2]), float(w[0])
    # deflate the known top eigenvector sqrt(pi) (eigenvalue 1)
    def mv(x):
        return S @ x - s * (s @ x)
    op = spla.LinearOperator(S.shape, matvec=mv, dtype=float)
    lam2 = spla.eigsh(op, k=1, which="LA", tol=1e-12, return_eigenvectors=False)[0]
    lam_min = spla.eigsh(S, k=1, which="SA", tol=1e-10, return_eigenvectors=False)[0]
    return float(lam2), float(lam_min)


def relaxation_time(lam2: float) -> float:
    return 1.0 / (1.0 - lam2)


@dataclass
class BoundLedger:
    lam2: float
    chi2_initial: float
    lhs: list[float]
    rhs: list[float]
    slack: list[float]
    tolerance: float

    @property
    def violations(self) -> int:
        return int(sum(s < -self.tolerance for s in self.slack))

    @property
    def min_slack(self) -> float:
        return float(min(self.slack))


def check_mixing_bound(tm: TransitionMatrix, nu0: np.ndarray, steps: int,
                       lam2: float | None = None, tolerance: float = 1e-10,
                       strict: bool = True) -> BoundLedger:
    """Check 4 tvd(nu_n, pi)^2 <= lambda_2^n chi2(nu_0, pi) for n = 0..steps."""
    db = detailed_balance_violation(tm)
    if db > 1e-10:
        raise NonReversibleChain(f"detailed balance violated by {db:.2e}")
    if lam2 is None:
        lam2, _ = spectrum_edges(tm)
    chi0 = chi_squared(nu0, tm.pi)
    lhs, rhs, slack = [], [], []
    for n, nu in enumerate(iterate_distribution(tm, nu0, steps)):
        left = 4.0 * tvd(nu, tm.pi) ** 2
        right = lam2**n * chi0
        lhs.append(left)
        rhs.append(right)
        slack.append(right - left)
    ledger = BoundLedger(lam2, chi0, lhs, rhs, slack, tolerance)
    if strict and ledger.violations:
        raise BoundViolation(f"mixing bound violated at {ledger.violations} steps "
                             f"(min slack {ledger.min_slack:.3e})")
    return ledger


@dataclass
class FidelityLedger:
    chi2: float
    overlap: float
    lower_bound: float
    slack: float


def check_fidelity_bound(nu: np.ndarray, pi: np.ndarray) -> FidelityLedger:
    """chi2(nu, pi) >= 1/<sqrt nu|sqrt pi>^2 - 1."""
    nu, pi = np.asarray(nu, float), np.asarray(pi, float)
    chi2 = chi_squared(nu, pi)
    overlap = float(np.sum(np.sqrt(nu * pi)))
    lower = 1.0 / overlap**2 - 1.0 if overlap > 0 else math.inf
    return FidelityLedger(chi2, overlap, lower, chi2 - lower)


def first_passage(curve: np.ndarray, target: float) -> int | None:
    hit = np.nonzero(np.asarray(curve) <= target)[0]
    return int(hit[0]) if len(hit) else None


def speedup_factor(curve_a: np.ndarray, curve_b: np.ndarray, targets) -> dict[float, float]:
    """n_a(t)/n_b(t) with n(t) the first step where the curve is <= t.

    ``curve_a`` is the classical baseline, ``curve_b`` the candidate.  Targets
    missed by either curve are omitted.  A candidate that starts below the
    target while the baseline does not gives +inf.
    """
    out = {}
    for t in targets:
        na, nb = first_passage(curve_a, t), first_passage(curve_b, t)
        if na is None or nb is None:
            continue
        if nb == 0:
            out[float(t)] = 1.0 if na == 0 else math.inf
        else:
            out[float(t)] = na / nb
    return out


def vqe_energy_reference(spec: HamiltonianSpec, vec: StateVector, basis: SectorBasis | None = None) -> float:
    """Exact <psi_V|H|psi_V>.  This is not the mean local energy of the target
    wavefunction over psi_V samples, which is what a chain reports at step 0."""
    basis = vec.basis if basis is None else basis
    return expectation(build_hamiltonian(spec, basis), vec)


def local_energy_table(tm: TransitionMatrix, spec: HamiltonianSpec) -> np.ndarray:
    """E_loc(x) = (H psi)(x)/psi(x) on the kernel's support."""
    if tm.amplitudes is None:
        raise ValueError("kernel was built from a bare distribution; amplitudes unknown")
    H = build_hamiltonian(spec, tm.basis)
    psi = np.zeros(tm.basis.dim)
    psi[tm.support] = tm.amplitudes
    return (H @ psi)[tm.support] / tm.amplitudes


@dataclass
class SourceTrajectory:
    name: str
    tvd: np.ndarray
    energy: np.ndarray | None
    chi2: float
    dropped_mass: float


@dataclass
class MixingReport:
    lam2: float
    lam_min: float
    tau: float
    target_energy: float | None
    sources: dict[str, SourceTrajectory]
    bounds: dict[str, BoundLedger] = field(default_factory=dict)
    speedups: dict[str, dict[float, float]] = field(default_factory=dict)
    energy_speedups: dict[str, dict[float, float]] = field(default_factory=dict)
    baseline: str | None = None

    def energy_error(self, name: str) -> np.ndarray:
        e = self.sources[name].energy
        return np.abs(e - self.target_energy) / abs(self.target_energy)

    def to_json(self) -> str:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return str(x)
            if isinstance(x, dict):
                return {str(k): clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            return x

        doc = {
            "lambda2": self.lam2,
            "lambda_min": self.lam_min,
            "relaxation_time": self.tau,
            "target_energy": self.target_energy,
            "baseline": self.baseline,
            "chi2": {k: s.chi2 for k, s in self.sources.items()},
            "dropped_mass": {k: s.dropped_mass for k, s in self.sources.items()},
            "bounds": {k: {"violations": b.violations, "min_slack": b.min_slack,
                           "chi2_initial": b.chi2_initial} for k, b in self.bounds.items()},
            "speedup_tvd": self.speedups,
            "speedup_energy": self.energy_speedups,
        }
        return json.dumps(clean(doc), indent=2, sort_keys=True)


def default_tvd_grid(n: int = 40, lo: float = 1e-4, hi: float = 0.5) -> np.ndarray:
    return np.geomspace(hi, lo, n)


def mixing_report(tm: TransitionMatrix, sources: dict[str, np.ndarray], steps: int,
                  spec: HamiltonianSpec | None = None, baseline: str | None = None,
                  tvd_grid=None, check_bounds: bool = True, strict: bool = True) -> MixingReport:
    """Exact TVD / energy trajectories for several initial distributions.

    ``sources`` map names to distributions over the full sector; they are
    conditioned on the kernel's support first (mirroring resampling of
    zero-amplitude initial states in the sampler).
    """
    lam2, lam_min = spectrum_edges(tm)
    eloc = local_energy_table(tm, spec) if spec is not None and tm.amplitudes is not None else None
    target = float(tm.pi @ eloc) if eloc is not None else None
    trajectories = {}
    bounds = {}
    for name, nu_full in sources.items():
        nu0, dropped = tm.restrict(nu_full)
        tv, en = [], []
        for nu in iterate_distribution(tm, nu0, steps):
            tv.append(tvd(nu, tm.pi))
            if eloc is not None:
                en.append(float(nu @ eloc))
        trajectories[name] = SourceTrajectory(name, np.array(tv), np.array(en) if en else None,
                                              chi_squared(nu0, tm.pi), dropped)
        if check_bounds:
            bounds[name] = check_mixing_bound(tm, nu0, steps, lam2=lam2, strict=strict)
    report = MixingReport(lam2, lam_min, relaxation_time(lam2), target, trajectories, bounds,
                          baseline=baseline)
    if baseline is not None:
        grid = default_tvd_grid() if tvd_grid is None else tvd_grid
        base = trajectories[baseline]
        for name, tr in trajectories.items():
            if name == baseline:
                continue
            report.speedups[name] = speedup_factor(base.tvd, tr.tvd, grid)
            if target is not None:
                err_grid = np.geomspace(0.3, 1e-5, 40)
                report.energy_speedups[name] = speedup_factor(
                    report.energy_error(baseline), report.energy_error(name), err_grid)
    return report
