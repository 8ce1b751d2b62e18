"""Metropolis-Hastings engine.

Two routes are provided.  :func:`step` advances a single :class:`ChainState`
using scalar wavefunction evaluations; it is the readable reference.  :func:`run`
advances many chains at once in blocks through the wavefunction's batched walker
caches and is what experiments use.

Acceptance rates count only proposals that actually move (hop proposals on a
00/11 bond are self-loops and are excluded from the denominator); the self-loop
fraction is reported separately.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .models import (
    BasisState,
    Constraint,
    HamiltonianSpec,
    LatticeSpec,
    ModelKind,
    SectorBasis,
    default_constraint,
)
from .samples import SampleStore, uniform_configs
from .trial_wavefunctions import SlaterDeterminant, ZeroAmplitudeError, sample_slater

logger = logging.getLogger(__name__)


class MixerKind(str, Enum):
    ELECTRON_HOP = "electron-hop"
    SPIN_FLIP = "single-spin-flip"


@dataclass(frozen=True, eq=False)
class Mixer:
    """Symmetric proposal kernel described by a table of equally likely move slots.

    Each slot is a pair of bit positions; spin-flip slots have ``q = -1``.
    """

    kind: MixerKind
    width: int
    slots: np.ndarray

    @classmethod
    def electron_hop(cls, lattice: LatticeSpec) -> "Mixer":
        L = lattice.n_sites
        slots = [(s * L + i, s * L + j) for s in (0, 1) for i, j in lattice.bonds()]
        return cls(MixerKind.ELECTRON_HOP, 2 * L, np.array(slots, dtype=np.int64))

    @classmethod
    def spin_flip(cls, n_spins: int) -> "Mixer":
        slots = np.stack([np.arange(n_spins), np.full(n_spins, -1)], axis=1)
        return cls(MixerKind.SPIN_FLIP, n_spins, slots.astype(np.int64))

    @classmethod
    def for_spec(cls, spec: HamiltonianSpec) -> "Mixer":
        if spec.model is ModelKind.HUBBARD:
            return cls.electron_hop(spec.lattice)
        return cls.spin_flip(spec.n_sites)

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def propose_batch(self, configs: np.ndarray, rng: np.random.Generator):
        """Draw one slot per chain; returns ``(p, q, valid)``.

        ``q`` is ``None`` for spin flips; ``valid`` is False for hop self-loops.
        """
        k = rng.integers(0, self.n_slots, size=len(configs))
        p = self.slots[k, 0]
        if self.kind is MixerKind.SPIN_FLIP:
            return p, None, np.ones(len(configs), dtype=bool)
        q = self.slots[k, 1]
        rows = np.arange(len(configs))
        valid = configs[rows, p] != configs[rows, q]
        return p, q, valid

    def targets(self, x: BasisState) -> list[BasisState]:
        """Image of ``x`` under every slot (self-loops included), for exact kernels."""
        out = []
        for p, q in self.slots:
            if q < 0:
                out.append(x.flip(int(p)))
            elif x.bit(int(p)) != x.bit(int(q)):
                out.append(x.flip(int(p), int(q)))
            else:
                out.append(x)
        return out


def propose(mixer: Mixer, x: BasisState, rng: np.random.Generator) -> BasisState:
    p, q = mixer.slots[rng.integers(mixer.n_slots)]
    if q < 0:
        return x.flip(int(p))
    if x.bit(int(p)) == x.bit(int(q)):
        return x
    return x.flip(int(p), int(q))


# --------------------------------------------------------------------------- single chain


@dataclass
class ChainState:
    current: BasisState
    log_abs: float
    sign: int
    rng: np.random.Generator
    steps: int = 0
    accepted: int = 0
    moves: int = 0

    @classmethod
    def start(cls, wf, x: BasisState, seed) -> "ChainState":
        la, sg = wf.log_amplitude(x)
        if sg == 0:
            raise ZeroAmplitudeError(f"cannot start a chain on zero-amplitude state {x}")
        return cls(x, la, sg, np.random.default_rng(seed))

    @property
    def acceptance(self) -> float:
        return self.accepted / self.moves if self.moves else 0.0


def step(chain: ChainState, wf, mixer: Mixer) -> ChainState:
    """One Metropolis step with min(1, p(y)/p(x)); the proposal is symmetric."""
    y = propose(mixer, chain.current, chain.rng)
    u = chain.rng.random()
    chain.steps += 1
    if y == chain.current:
        return chain
    chain.moves += 1
    ly, sy = wf.log_amplitude(y)
    if sy == 0:
        return chain
    if u < math.exp(min(0.0, 2.0 * (ly - chain.log_abs))):
        chain.current, chain.log_abs, chain.sign = y, ly, sy
        chain.accepted += 1
    return chain


# --------------------------------------------------------------------------- sources


class SourceExhausted(RuntimeError):
    pass


class UniformSource:
    name = "uniform"

    def __init__(self, model: ModelKind, n_sites: int, constraint: Constraint):
        self.model, self.n_sites, self.constraint = ModelKind(model), n_sites, constraint

    @classmethod
    def for_spec(cls, spec: HamiltonianSpec, constraint: Constraint | None = None):
        return cls(spec.model, spec.n_sites, constraint or default_constraint(spec))

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return uniform_configs(self.model, self.n_sites, self.constraint, n, rng)


class SlaterSource:
    name = "slater"

    def __init__(self, sd: SlaterDeterminant):
        self.sd = sd

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_slater(self.sd, n, rng)


class StoreSource:
    """Draws rows of a sample store; without replacement unless ``replace``."""

    def __init__(self, store: SampleStore, replace: bool = False, name: str | None = None):
        self.store = store
        self.replace = replace
        self.name = name or store.source
        self._order = None
        self._pos = 0

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.replace:
            return self.store.samples[rng.integers(0, len(self.store), size=n)]
        if self._order is None:
            self._order = rng.permutation(len(self.store))
        if self._pos + n > len(self._order):
            raise SourceExhausted(
                f"sample store holds {len(self.store)} samples, {self._pos + n} requested")
        idx = self._order[self._pos:self._pos + n]
        self._pos += n
        return self.store.samples[idx]


class ExactVectorSource:
    """Exact draws from a probability vector over an enumerable sector."""

    def __init__(self, basis: SectorBasis, probs: np.ndarray, name: str = "exact"):
        self.basis = basis
        self.probs = np.asarray(probs, dtype=float) / np.sum(probs)
        self.name = name
        self._cdf = np.cumsum(self.probs)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = np.minimum(np.searchsorted(self._cdf, rng.random(n) * self._cdf[-1], side="right"),
                         self.basis.dim - 1)
        return self.basis.bits()[idx].copy()


# --------------------------------------------------------------------------- batched runs


@dataclass
class ChainConfig:
    """Energy is recorded at step 0 and at every step s >= burn_in with
    (s - burn_in) % thinning == 0, plus the final step."""

    n_chains: int
    chain_length: int
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    block_size: int = 4096
    check_every: int = 100

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be at least 1")
        if self.chain_length < 0 or self.burn_in < 0:
            raise ValueError("chain_length and burn_in must be non-negative")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")

    def checkpoints(self) -> list[int]:
        pts = {0, self.chain_length}
        pts.update(range(self.burn_in, self.chain_length + 1, self.thinning))
        return sorted(s for s in pts if s <= self.chain_length)


@dataclass
class RunResult:
    steps: np.ndarray
    mean_energy: np.ndarray
    sem: np.ndarray
    acceptance: np.ndarray
    step_acceptance: np.ndarray
    self_loop_fraction: np.ndarray
    final: np.ndarray
    n_resampled: int = 0
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    final_energies: np.ndarray | None = None

    def to_store(self, spec: HamiltonianSpec, constraint: Constraint | None = None,
                 seed=None) -> SampleStore:
        return SampleStore(spec.model, spec.lattice.shape, constraint or default_constraint(spec),
                           self.final, "vmc", seed)


def _screen_initial(wf, source, n: int, rng: np.random.Generator, max_rounds: int = 1000):
    configs = np.array(source.draw(n, rng), dtype=np.uint8)
    resampled = 0
    for _ in range(max_rounds):
        _, sign = wf.log_amplitudes(configs)
        bad = np.nonzero(sign == 0)[0]
        if len(bad) == 0:
            return configs, resampled
        resampled += len(bad)
        configs[bad] = source.draw(len(bad), rng)
    raise ZeroAmplitudeError("could not draw nonzero-amplitude initial states from the source")


def _run_block(wf, mixer, spec, source, n, cfg: ChainConfig, rng, checkpoints, snapshots,
               record_energy):
    configs, resampled = _screen_initial(wf, source, n, rng)
    walkers = wf.walkers(configs)
    ck = {s: k for k, s in enumerate(checkpoints)}
    e_sum = np.zeros(len(checkpoints))
    e_sq = np.zeros(len(checkpoints))
    acc = np.zeros(cfg.chain_length)
    moves = np.zeros(cfg.chain_length)
    snaps = {}
    energies = None

    def record(s):
        nonlocal energies
        if s in ck and record_energy:
            e = walkers.local_energy(spec)
            e_sum[ck[s]] += e.sum()
            e_sq[ck[s]] += (e**2).sum()
            energies = e
        if s in snapshots:
            snaps[s] = walkers.configs.copy()

    record(0)
    for s in range(1, cfg.chain_length + 1):
        p, q, valid = mixer.propose_batch(walkers.configs, rng)
        r = walkers.ratio(p, q, valid)
        u = rng.random(n)
        accept = valid & (u < np.minimum(1.0, r * r))
        walkers.accept(p, q, accept)
        acc[s - 1] = accept.sum()
        moves[s - 1] = valid.sum()
        if cfg.check_every and s % cfg.check_every == 0:
            _check_cache(wf, walkers)
        record(s)
    return dict(e_sum=e_sum, e_sq=e_sq, acc=acc, moves=moves, final=walkers.configs.copy(),
                resampled=resampled, snaps=snaps, energies=energies)


def _check_cache(wf, walkers, tol: float = 1e-8):
    fresh, _ = wf.log_amplitudes(walkers.configs)
    drift = np.abs(fresh - walkers.log_abs)
    if np.any(drift > tol):
        logger.info("walker cache drift %.2e; refreshing", drift.max())
        walkers.refresh()


def run(config: ChainConfig, wf, mixer: Mixer, spec: HamiltonianSpec, source,
        snapshots: tuple[int, ...] = (), record_energy: bool = True) -> RunResult:
    """Run ``config.n_chains`` independent chains from ``source`` targeting |wf|^2.

    Chains are processed in blocks; block k draws from its own stream spawned
    from ``SeedSequence(config.seed)``.
    """
    checkpoints = config.checkpoints()
    n_blocks = -(-config.n_chains // config.block_size)
    streams = np.random.SeedSequence(config.seed).spawn(n_blocks)
    e_sum = np.zeros(len(checkpoints))
    e_sq = np.zeros(len(checkpoints))
    acc = np.zeros(config.chain_length)
    moves = np.zeros(config.chain_length)
    finals, energies, resampled = [], [], 0
    snaps: dict[int, list] = {s: [] for s in snapshots}
    for b in range(n_blocks):
        n = min(config.block_size, config.n_chains - b * config.block_size)
        out = _run_block(wf, mixer, spec, source, n, config, np.random.default_rng(streams[b]),
                         checkpoints, set(snapshots), record_energy)
        e_sum += out["e_sum"]
        e_sq += out["e_sq"]
        acc += out["acc"]
        moves += out["moves"]
        finals.append(out["final"])
        resampled += out["resampled"]
        if out["energies"] is not None:
            energies.append(out["energies"])
        for s, c in out["snaps"].items():
            snaps[s].append(c)
    N = config.n_chains
    mean = e_sum / N
    var = np.maximum(e_sq / N - mean**2, 0.0)
    sem = np.sqrt(var / max(N - 1, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        step_acc = np.where(moves > 0, acc / np.maximum(moves, 1), 0.0)
    self_loops = 1.0 - moves / N
    ck_acc = np.array([step_acc[s - 1] if s > 0 else np.nan for s in checkpoints])
    if resampled:
        logger.info("resampled %d zero-amplitude initial states", resampled)
    if not record_energy:
        mean[:] = np.nan
        sem[:] = np.nan
    return RunResult(
        steps=np.array(checkpoints),
        mean_energy=mean,
        sem=sem,
        acceptance=ck_acc,
        step_acceptance=step_acc,
        self_loop_fraction=self_loops,
        final=np.concatenate(finals),
        n_resampled=resampled,
        snapshots={s: np.concatenate(v) for s, v in snaps.items()},
        final_energies=np.concatenate(energies) if energies else None,
    )


def acceptance_curve(result: RunResult) -> np.ndarray:
    """Per-step mean acceptance over chains, self-loops excluded."""
    return result.step_acceptance.copy()
