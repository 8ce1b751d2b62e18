"""Stochastic reconfiguration (SR) training of the RBM wavefunction on the TFI chain.

Each iteration draws ``n_samples`` chains of ``chain_length`` spin-flip steps
from the configured initial source, then applies

    W <- W - eta * (S + lam(p) diag(S) + lam_floor I)^-1 F

with S the covariance of the log-derivatives and F the energy gradient.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .exact_engine import ground_state
from .mcmc import ChainConfig, Mixer, UniformSource, run
from .models import Boundary, HamiltonianSpec, ModelKind, build_hamiltonian, enumerate_sector
from .trial_wavefunctions import NqsWF

logger = logging.getLogger(__name__)

CHOLESKY_LIMIT = 2000
CG_TOL = 1e-8
MAX_RETRIES = 3


class SolveFailure(RuntimeError):
    pass


class Diverged(RuntimeError):
    def __init__(self, message: str, trace: "SrTrace"):
        super().__init__(message)
        self.trace = trace


def default_chain_length(n_spins: int) -> int:
    return 15 if n_spins <= 16 else 20


@dataclass
class SrConfig:
    iterations: int = 200
    n_samples: int = 5000
    chain_length: int | None = None
    eta: float = 0.05
    lam0: float = 100.0
    lam_decay: float = 0.9
    lam_min: float = 1e-4
    lam_floor: float = 1e-4
    alpha: int = 1
    init_std: float = 0.01
    seed: int = 0
    # "exact" replaces sampling by the exact |psi|^2 over the full basis (small N only)
    sampling: str = "mcmc"

    def lam(self, p: int) -> float:
        return max(self.lam0 * self.lam_decay**p, self.lam_min)

    def resolved_chain_length(self, n_spins: int) -> int:
        return default_chain_length(n_spins) if self.chain_length is None else self.chain_length


@dataclass
class SrTrace:
    energy: list[float] = field(default_factory=list)
    sem: list[float] = field(default_factory=list)
    rel_error: list[float] = field(default_factory=list)
    param_norm: list[float] = field(default_factory=list)
    reference: float | None = None

    def __len__(self) -> int:
        return len(self.energy)

    def final_energy(self, window: int = 5) -> float:
        if not self.energy:
            return math.nan
        return float(np.mean(self.energy[-window:]))

    def final_rel_error(self, window: int = 5) -> float:
        return abs(self.final_energy(window) - self.reference) / abs(self.reference)

    def rows(self):
        for k in range(len(self)):
            yield k, self.energy[k], self.sem[k], self.rel_error[k], self.param_norm[k]


# --------------------------------------------------------------------------- reference energies


def tfi_ground_energy(n: int, J: float = 1.0, h: float = 1.0, boundary=Boundary.OPEN) -> float:
    """Closed-form TFI chain ground energy from the free-fermion solution.

    Open chains: minus the sum of singular values of the bidiagonal matrix with
    h on the diagonal and J above it.  Periodic chains: the even-parity sector
    with antiperiodic momenta k = (2m+1) pi / n.
    """
    if Boundary(boundary) is Boundary.OPEN or n <= 2:
        B = np.diag(np.full(n, float(h))) + np.diag(np.full(n - 1, float(J)), 1)
        return -float(np.linalg.svd(B, compute_uv=False).sum())
    k = np.pi * (2 * np.arange(n) + 1) / n
    return -float(np.sqrt(J * J + h * h - 2 * J * h * np.cos(k)).sum())


def reference_energy(spec: HamiltonianSpec) -> float:
    if spec.model is not ModelKind.TFI:
        raise ValueError("SR reference energies are defined for the TFI chain")
    if spec.lattice.shape[0] != 1:
        raise ValueError("reference energy needs a 1D chain")
    if spec.n_sites <= 12:
        basis = enumerate_sector(spec)
        return ground_state(build_hamiltonian(spec, basis))[0]
    return tfi_ground_energy(spec.n_sites, spec.J, spec.h, spec.lattice.boundary)


# --------------------------------------------------------------------------- one iteration


@dataclass
class BatchStats:
    energy: float
    sem: float
    S: np.ndarray | None
    F: np.ndarray
    O: np.ndarray
    weights: np.ndarray | None = None


def batch_statistics(O: np.ndarray, eloc: np.ndarray, weights: np.ndarray | None = None,
                     build_s: bool = True) -> BatchStats:
    """S and F from log-derivatives ``O`` (n, P) and local energies (n,).

    ``weights`` (summing to 1) replace the uniform 1/n sample weights."""
    n = len(eloc)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, float)
    e_mean = float(w @ eloc)
    Oc = O - w @ O
    ec = eloc - e_mean
    F = Oc.T @ (w * ec)
    S = (Oc.T * w) @ Oc if build_s else None
    if weights is None:
        sem = float(np.std(eloc, ddof=1) / np.sqrt(n)) if n > 1 else math.nan
    else:
        sem = 0.0
    return BatchStats(e_mean, sem, S, F, Oc, w)


def solve_sr(stats: BatchStats, lam: float, lam_floor: float) -> np.ndarray:
    """Solve (S + lam diag S + lam_floor I) x = F; raise lam tenfold on failure."""
    P = len(stats.F)
    for attempt in range(MAX_RETRIES + 1):
        try:
            if P <= CHOLESKY_LIMIT:
                S = stats.S if stats.S is not None else (stats.O.T * stats.weights) @ stats.O
                A = S + np.diag(lam * np.diag(S) + lam_floor)
                x = sla.cho_solve(sla.cho_factor(A), stats.F)
            else:
                Oc, w = stats.O, stats.weights
                diag = np.einsum("i,ij,ij->j", w, Oc, Oc)
                shift = lam * diag + lam_floor

                def mv(v):
                    return Oc.T @ (w * (Oc @ v)) + shift * v

                A = spla.LinearOperator((P, P), matvec=mv, dtype=float)
                M = spla.LinearOperator((P, P), matvec=lambda v: v / (diag + shift), dtype=float)
                x, info = spla.cg(A, stats.F, rtol=CG_TOL, maxiter=10 * P, M=M)
                if info != 0:
                    raise np.linalg.LinAlgError(f"CG did not converge (info={info})")
            if not np.all(np.isfinite(x)):
                raise np.linalg.LinAlgError("non-finite SR update")
            return x
        except np.linalg.LinAlgError as exc:
            logger.info("SR solve failed with lam=%.1e (%s); retrying", lam, exc)
            lam *= 10.0
    raise SolveFailure(f"SR linear solve failed after {MAX_RETRIES} retries")


def _exact_batch(wf: NqsWF, spec: HamiltonianSpec, basis_cache: dict):
    if "configs" not in basis_cache:
        basis = enumerate_sector(spec)
        basis_cache["configs"] = basis.bits()
    configs = basis_cache["configs"]
    walkers = wf.walkers(configs)
    lp = 2.0 * walkers.log_abs
    p = np.exp(lp - lp.max())
    return walkers, p / p.sum()


def sr_iteration(wf: NqsWF, spec: HamiltonianSpec, config: SrConfig, p: int = 0,
                 source=None, mixer: Mixer | None = None, seed=None,
                 _cache: dict | None = None) -> tuple[NqsWF, BatchStats]:
    """One SR update; returns the new wavefunction and the statistics of the batch
    that was used (energy estimate of the *incoming* wavefunction)."""
    if config.sampling == "exact":
        walkers, weights = _exact_batch(wf, spec, {} if _cache is None else _cache)
    else:
        mixer = Mixer.spin_flip(spec.n_sites) if mixer is None else mixer
        source = UniformSource.for_spec(spec) if source is None else source
        chain = ChainConfig(config.n_samples, config.resolved_chain_length(spec.n_sites),
                            seed=[config.seed, p] if seed is None else seed)
        res = run(chain, wf, mixer, spec, source, record_energy=False)
        walkers, weights = wf.walkers(res.final), None
    eloc = walkers.local_energy(spec)
    O = walkers.log_derivatives()
    P = wf.n_params
    stats = batch_statistics(O, eloc, weights, build_s=P <= CHOLESKY_LIMIT)
    if not math.isfinite(stats.energy) or not np.any(stats.F):
        # non-finite batches are reported by the caller rather than solved
        return wf, stats
    delta = solve_sr(stats, config.lam(p), config.lam_floor)
    return wf.with_params(wf.params - config.eta * delta), stats


def train(config: SrConfig, spec: HamiltonianSpec, wf: NqsWF | None = None, source=None,
          reference: float | None = None, callback=None) -> tuple[SrTrace, NqsWF]:
    """Run ``config.iterations`` SR updates from a random RBM.

    The energy recorded at iteration p is the batch estimate for the weights
    entering that iteration.  Divergence (an estimate above E_0 + 10 |E_0|, E_0
    being the first estimate, or a non-finite value) aborts with the trace.
    """
    if spec.model is not ModelKind.TFI:
        raise ValueError("SR training is implemented for the TFI model")
    N = spec.n_sites
    if wf is None:
        wf = NqsWF.random(N, config.alpha, seed=config.seed, std=config.init_std)
    trace = SrTrace(reference=reference_energy(spec) if reference is None else reference)
    mixer = Mixer.spin_flip(N)
    cache: dict = {}
    e_first = None
    for p in range(config.iterations):
        new_wf, stats = sr_iteration(wf, spec, config, p, source, mixer, _cache=cache)
        e = stats.energy
        trace.energy.append(e)
        trace.sem.append(stats.sem)
        trace.rel_error.append(abs(e - trace.reference) / abs(trace.reference))
        trace.param_norm.append(float(np.linalg.norm(wf.params)))
        if e_first is None:
            e_first = e
        if not math.isfinite(e) or e > e_first + 10.0 * abs(e_first):
            raise Diverged(f"SR diverged at iteration {p} (E = {e})", trace)
        if callback is not None:
            callback(p, trace, new_wf)
        logger.debug("SR %d: E = %.6f +- %.6f", p, e, stats.sem)
        wf = new_wf
    return trace, wf


def iterations_to_threshold(errors, threshold: float) -> int | None:
    hit = np.nonzero(np.asarray(errors) <= threshold)[0]
    return int(hit[0]) + 1 if len(hit) else None


def compare_sources(traces: dict[str, SrTrace], thresholds, baseline: str = "uniform") -> dict[str, dict[float, float]]:
    """(iterations needed with the baseline)/(iterations needed with each source).

    Thresholds that either run never reaches are left out of that source's table."""
    base = traces[baseline].rel_error
    table = {}
    for name, tr in traces.items():
        row = {}
        for t in thresholds:
            na = iterations_to_threshold(base, t)
            nb = iterations_to_threshold(tr.rel_error, t)
            if na is not None and nb is not None:
                row[float(t)] = na / nb
        table[name] = row
    return table
