"""Classically evaluable trial states.

Each wavefunction exposes scalar evaluation on :class:`BasisState` (used by the
reference single-chain code and the exact analysis) and a ``walkers`` factory
returning a batched cache object for the vectorised chain engine.  Walker
objects share one duck-typed interface::

    walkers.configs            (B, width) uint8
    walkers.log_abs, .sign     (B,)
    walkers.ratio(p, q, valid) psi(y)/psi(x) for flips of bit p (and q)
    walkers.accept(p, q, mask)
    walkers.local_energy(spec) (B,)
    walkers.refresh()
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import (
    BasisState,
    HamiltonianSpec,
    LatticeSpec,
    ModelKind,
    SectorBasis,
    double_occupancy,
    jw_sign,
    pack_bits,
)

# determinant magnitudes below this are treated as exact zeros
DET_ZERO = 1e-13


class ZeroAmplitudeError(ValueError):
    pass


def log2cosh(t: np.ndarray) -> np.ndarray:
    a = np.abs(t)
    return a + np.log1p(np.exp(-2.0 * a))


# --------------------------------------------------------------------------- Slater


def hopping_matrix(lattice: LatticeSpec) -> np.ndarray:
    L = lattice.n_sites
    T = np.zeros((L, L))
    for i, j in lattice.bonds():
        T[i, j] = T[j, i] = -1.0
    return T


def _fix_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v) > np.abs(v).max() * (1 - 1e-9)))
    return v if v[k] > 0 else -v


def _canonical_shell(vecs: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(vecs).

    Projected unit vectors e_0, e_1, ... are Gram-Schmidt orthonormalised until
    the span is covered; the result is ordered by the index of each vector's
    largest-magnitude component.
    """
    d = vecs.shape[1]
    if d == 1:
        return _fix_sign(vecs[:, 0])[:, None]
    P = vecs @ vecs.T
    basis: list[np.ndarray] = []
    for k in range(P.shape[0]):
        u = P[:, k].copy()
        for b in basis:
            u -= (b @ u) * b
        nrm = np.linalg.norm(u)
        if nrm > 1e-8:
            basis.append(u / nrm)
        if len(basis) == d:
            break
    basis = [_fix_sign(b) for b in basis]
    basis.sort(key=lambda b: int(np.argmax(np.abs(b) > np.abs(b).max() * (1 - 1e-9))))
    return np.stack(basis, axis=1)


def hopping_orbitals(lattice: LatticeSpec, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of the hopping matrix with canonicalised degenerate shells."""
    energies, vecs = np.linalg.eigh(hopping_matrix(lattice))
    out = np.empty_like(vecs)
    start = 0
    while start < len(energies):
        stop = start + 1
        while stop < len(energies) and energies[stop] - energies[start] < tol:
            stop += 1
        out[:, start:stop] = _canonical_shell(vecs[:, start:stop])
        start = stop
    return energies, out


@dataclass(frozen=True, eq=False)
class SlaterDeterminant:
    orbitals_up: np.ndarray
    orbitals_down: np.ndarray

    @classmethod
    def ground_state(cls, lattice: LatticeSpec, n_up: int | None = None,
                     n_down: int | None = None) -> "SlaterDeterminant":
        """Lowest hopping orbitals; ``n_up``/``n_down`` default to half filling."""
        L = lattice.n_sites
        n_up = L // 2 if n_up is None else n_up
        n_down = L // 2 if n_down is None else n_down
        _, orbs = hopping_orbitals(lattice)
        return cls(orbs[:, :n_up].copy(), orbs[:, :n_down].copy())

    @property
    def n_sites(self) -> int:
        return self.orbitals_up.shape[0]

    @property
    def n_up(self) -> int:
        return self.orbitals_up.shape[1]

    @property
    def n_down(self) -> int:
        return self.orbitals_down.shape[1]

    def sectors(self):
        return (self.orbitals_up, self.orbitals_down)

    def amplitude(self, x: BasisState) -> float:
        L = self.n_sites
        out = 1.0
        for s, phi in enumerate(self.sectors()):
            occ = [i for i in range(L) if x.bit(s * L + i)]
            if len(occ) != phi.shape[1]:
                return 0.0
            out *= np.linalg.det(phi[occ]) if occ else 1.0
        return float(out)

    def amplitudes(self, basis: SectorBasis) -> np.ndarray:
        bits = basis.bits()
        L = self.n_sites
        out = np.ones(basis.dim)
        for s, phi in enumerate(self.sectors()):
            out *= _batched_dets(phi, bits[:, s * L:(s + 1) * L])
        return out

    def projector_diagonal(self) -> tuple[np.ndarray, np.ndarray]:
        """Site occupation expectations <n_i,sigma> = (Phi Phi^T)_ii."""
        return tuple((phi**2).sum(axis=1) for phi in self.sectors())


def _occupied_sites(sector_bits: np.ndarray, n: int) -> np.ndarray:
    counts = sector_bits.sum(axis=1)
    if np.any(counts != n):
        raise ValueError(f"configurations must hold exactly {n} particles per sector")
    return np.nonzero(sector_bits)[1].reshape(len(sector_bits), n)


def _batched_dets(phi: np.ndarray, sector_bits: np.ndarray) -> np.ndarray:
    n = phi.shape[1]
    if n == 0:
        return np.ones(len(sector_bits))
    occ = _occupied_sites(sector_bits, n)
    return np.linalg.det(phi[occ])


def slater_distribution(sd: SlaterDeterminant, basis: SectorBasis) -> np.ndarray:
    """Exact normalised |<x|SD>|^2 over an enumerable sector."""
    p = sd.amplitudes(basis) ** 2
    return p / p.sum()


def _sample_projection_dpp(phi: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws from the projection DPP with kernel phi phi^T; returns (n, L) occupations."""
    L, k = phi.shape
    occ = np.zeros((n, L), dtype=np.uint8)
    if k == 0:
        return occ
    V = np.broadcast_to(phi, (n, L, k)).copy()
    rows = np.arange(n)
    for t in range(k):
        w = np.einsum("blk,blk->bl", V, V)
        w[occ.astype(bool)] = 0.0
        np.clip(w, 0.0, None, out=w)
        cdf = np.cumsum(w, axis=1)
        while True:
            u = rng.random(n) * cdf[:, -1]
            site = np.minimum((cdf < u[:, None]).sum(axis=1), L - 1)
            norm = np.sqrt(w[rows, site])
            bad = norm < 1e-12
            if not bad.any():
                break
            # resample guard for zero-probability branches hit through rounding
            w_bad = w[bad]
            if np.any(w_bad.sum(axis=1) <= 0):
                raise ValueError("projection DPP lost rank during sequential sampling")
        vec = V[rows, site] / norm[:, None]
        V -= np.einsum("blk,bk->bl", V, vec)[:, :, None] * vec[:, None, :]
        occ[rows, site] = 1
    return occ


def sample_slater(sd: SlaterDeterminant, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact direct sampling of |SD|^2 by sequential conditioning, per spin sector."""
    ups = _sample_projection_dpp(sd.orbitals_up, n, rng)
    downs = _sample_projection_dpp(sd.orbitals_down, n, rng)
    return np.concatenate([ups, downs], axis=1)


# --------------------------------------------------------------------------- Gutzwiller


@dataclass(frozen=True, eq=False)
class GutzwillerWF:
    """exp(-c D(x)) times the Slater determinant amplitude, unnormalised."""

    c: float
    slater: SlaterDeterminant

    model = ModelKind.HUBBARD

    @property
    def n_sites(self) -> int:
        return self.slater.n_sites

    def log_amplitude(self, x: BasisState) -> tuple[float, int]:
        L = self.n_sites
        logabs = -self.c * double_occupancy(x, L)
        sign = 1
        for s, phi in enumerate(self.slater.sectors()):
            occ = [i for i in range(L) if x.bit(s * L + i)]
            if len(occ) != phi.shape[1]:
                return -math.inf, 0
            if not occ:
                continue
            sg, ld = np.linalg.slogdet(phi[occ])
            if sg == 0 or ld < math.log(DET_ZERO):
                return -math.inf, 0
            logabs += ld
            sign *= int(sg)
        return float(logabs), sign

    def amplitudes(self, basis: SectorBasis) -> np.ndarray:
        L = self.n_sites
        D = np.bitwise_count((basis.states & ((1 << L) - 1)) & (basis.states >> L))
        bits = basis.bits()
        amp = np.exp(-self.c * D)
        for s, phi in enumerate(self.slater.sectors()):
            det = _batched_dets(phi, bits[:, s * L:(s + 1) * L])
            amp *= np.where(np.abs(det) < DET_ZERO, 0.0, det)
        return amp

    def log_amplitudes(self, configs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        L = self.n_sites
        configs = np.asarray(configs, dtype=np.uint8)
        logabs = -self.c * (configs[:, :L] & configs[:, L:]).sum(axis=1).astype(float)
        sign = np.ones(len(configs))
        for s, phi in enumerate(self.slater.sectors()):
            if phi.shape[1] == 0:
                continue
            occ = _occupied_sites(configs[:, s * L:(s + 1) * L], phi.shape[1])
            sg, ld = np.linalg.slogdet(phi[occ])
            zero = (sg == 0) | (ld < math.log(DET_ZERO))
            logabs += np.where(zero, -np.inf, ld)
            sign *= np.where(zero, 0.0, sg)
        return logabs, sign

    def walkers(self, configs: np.ndarray) -> "GutzwillerWalkers":
        return GutzwillerWalkers(self, configs)


def _perm_parity(occ: np.ndarray) -> np.ndarray:
    """Parity of the permutation sorting each row of ``occ``."""
    n = occ.shape[1]
    inv = np.zeros(len(occ), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            inv += occ[:, i] > occ[:, j]
    return inv & 1


class GutzwillerWalkers:
    """Batched determinant caches.

    Row order of each cached matrix follows ``occ`` (not necessarily sorted);
    the permutation sign to sorted order is folded into ``sign``.  Inverses are
    recomputed after every accepted move for small lattices and updated by
    Sherman-Morrison otherwise, with a full refresh every ``refresh_every``
    accepted moves per chain.
    """

    RECOMPUTE_MAX_SITES = 12

    def __init__(self, wf: GutzwillerWF, configs: np.ndarray, refresh_every: int = 200):
        self.wf = wf
        self.L = wf.n_sites
        self.phi = wf.slater.sectors()
        self.configs = np.array(configs, dtype=np.uint8)
        self.B = len(self.configs)
        self.refresh_every = refresh_every
        self.recompute = self.L <= self.RECOMPUTE_MAX_SITES
        self.refresh()

    def refresh(self, which: np.ndarray | None = None):
        L = self.L
        if which is None:
            which = np.arange(self.B)
            self.occ = [None, None]
            self.inv = [None, None]
            self.logdet = np.zeros((2, self.B))
            self.sgn = np.ones((2, self.B))
            self.since_refresh = np.zeros(self.B, dtype=np.int64)
        if len(which) == 0:
            return
        for s, phi in enumerate(self.phi):
            n = phi.shape[1]
            occ = _occupied_sites(self.configs[which, s * L:(s + 1) * L], n)
            if self.occ[s] is None:
                self.occ[s] = np.zeros((self.B, n), dtype=np.int64)
                self.inv[s] = np.zeros((self.B, n, n))
            self.occ[s][which] = occ
            if n == 0:
                continue
            A = phi[occ]
            sg, ld = np.linalg.slogdet(A)
            if np.any(np.abs(np.linalg.det(A)) < DET_ZERO):
                raise ZeroAmplitudeError("walker placed on a zero-amplitude configuration")
            self.inv[s][which] = np.linalg.inv(A)
            self.logdet[s, which] = ld
            self.sgn[s, which] = sg
        self.since_refresh[which] = 0

    @property
    def double_occ(self) -> np.ndarray:
        L = self.L
        return (self.configs[:, :L] & self.configs[:, L:]).sum(axis=1, dtype=np.int64)

    @property
    def log_abs(self) -> np.ndarray:
        return self.logdet.sum(axis=0) - self.wf.c * self.double_occ

    @property
    def sign(self) -> np.ndarray:
        par = np.zeros(self.B, dtype=np.int64)
        for s in range(2):
            if self.occ[s].shape[1]:
                par += _perm_parity(self.occ[s])
        return self.sgn.prod(axis=0) * (1 - 2 * (par & 1))

    def _hop_terms(self, idx, sector, src, dst):
        """Signed ratio pieces for chains ``idx`` moving a sector electron src -> dst."""
        L = self.L
        phi = self.phi[sector]
        occ = self.occ[sector][idx]
        r = np.argmax(occ == src[:, None], axis=1)
        det_ratio = np.einsum("bk,bk->b", phi[dst], self.inv[sector][idx, :, r])
        cfg = self.configs[idx, sector * L:(sector + 1) * L]
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        sites = np.arange(L)
        between = (cfg * ((sites > lo[:, None]) & (sites < hi[:, None]))).sum(axis=1, dtype=np.int64)
        perm = 1 - 2 * (between & 1)
        other = self.configs[idx, (1 - sector) * L:(2 - sector) * L]
        dD = other[np.arange(len(idx)), dst].astype(float) - other[np.arange(len(idx)), src]
        return det_ratio, perm, r, dD

    def _split(self, p, q, valid):
        L = self.L
        out = []
        for s in (0, 1):
            idx = np.nonzero(valid & (p // L == s))[0]
            i, j = p[idx] % L, q[idx] % L
            occ_i = self.configs[idx, s * L + i].astype(bool)
            src = np.where(occ_i, i, j)
            dst = np.where(occ_i, j, i)
            out.append((s, idx, src, dst))
        return out

    def ratio(self, p: np.ndarray, q: np.ndarray, valid: np.ndarray) -> np.ndarray:
        out = np.ones(self.B)
        for s, idx, src, dst in self._split(p, q, valid):
            if len(idx) == 0:
                continue
            det_ratio, perm, _, dD = self._hop_terms(idx, s, src, dst)
            det_ratio = np.where(np.abs(det_ratio) < DET_ZERO, 0.0, det_ratio)
            out[idx] = perm * det_ratio * np.exp(-self.wf.c * dD)
        return out

    def accept(self, p: np.ndarray, q: np.ndarray, mask: np.ndarray):
        L = self.L
        to_refresh = []
        for s, idx, src, dst in self._split(p, q, mask):
            if len(idx) == 0:
                continue
            det_ratio, _, r, _ = self._hop_terms(idx, s, src, dst)
            self.configs[idx, s * L + src] = 0
            self.configs[idx, s * L + dst] = 1
            self.occ[s][idx, r] = dst
            self.since_refresh[idx] += 1
            if self.recompute:
                to_refresh.append(idx)
                continue
            phi = self.phi[s]
            inv = self.inv[s][idx]
            col = inv[np.arange(len(idx)), :, r]
            urow = np.einsum("bk,bkj->bj", phi[dst], inv)
            urow[np.arange(len(idx)), r] -= 1.0
            inv -= col[:, :, None] * urow[:, None, :] / det_ratio[:, None, None]
            self.inv[s][idx] = inv
            self.logdet[s, idx] += np.log(np.abs(det_ratio))
            self.sgn[s, idx] *= np.sign(det_ratio)
            # row r was overwritten in place: the row order changes, sign fixed up by `sign`
            to_refresh.append(idx[self.since_refresh[idx] >= self.refresh_every])
        if to_refresh:
            self._refresh_rows(np.unique(np.concatenate(to_refresh)))

    def _refresh_rows(self, idx: np.ndarray):
        if len(idx) == 0:
            return
        L = self.L
        for s, phi in enumerate(self.phi):
            n = phi.shape[1]
            if n == 0:
                continue
            A = phi[self.occ[s][idx]]
            sg, ld = np.linalg.slogdet(A)
            self.inv[s][idx] = np.linalg.inv(A)
            self.logdet[s, idx] = ld
            self.sgn[s, idx] = sg
        self.since_refresh[idx] = 0

    def local_energy(self, spec: HamiltonianSpec) -> np.ndarray:
        L = self.L
        e = spec.U * self.double_occ.astype(float)
        bonds = spec.lattice.bonds()
        for s, phi in enumerate(self.phi):
            if phi.shape[1] == 0:
                continue
            G = np.einsum("lk,bkr->blr", phi, self.inv[s])
            pos = np.zeros((self.B, L), dtype=np.int64)
            np.put_along_axis(pos, self.occ[s], np.arange(phi.shape[1])[None, :].repeat(self.B, 0), axis=1)
            cfg = self.configs[:, s * L:(s + 1) * L]
            other = self.configs[:, (1 - s) * L:(2 - s) * L].astype(float)
            sites = np.arange(L)
            for i, j in bonds:
                idx = np.nonzero(cfg[:, i] != cfg[:, j])[0]
                if len(idx) == 0:
                    continue
                occ_i = cfg[idx, i].astype(bool)
                src = np.where(occ_i, i, j)
                dst = np.where(occ_i, j, i)
                det_ratio = G[idx, dst, pos[idx, src]]
                between = cfg[idx][:, (sites > i) & (sites < j)].sum(axis=1, dtype=np.int64)
                sgn = 1 - 2 * (between & 1)
                dD = other[idx, dst] - other[idx, src]
                ratio = sgn * det_ratio * np.exp(-self.wf.c * dD)
                # matrix element -(-1)^between, same parity as the reordering sign
                e[idx] += -sgn * ratio
        return e


# --------------------------------------------------------------------------- NQS


NQS_MAGIC = b"QEVMC-NQS v1\n"


@dataclass(eq=False)
class NqsWF:
    """Real RBM with the hidden layer traced out.

    ``W`` has shape (M, N); the flat parameter vector is a | b | W row-major.
    """

    a: np.ndarray
    b: np.ndarray
    W: np.ndarray

    model = ModelKind.TFI

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.W = np.asarray(self.W, dtype=float).reshape(len(self.b), len(self.a))

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int) -> "NqsWF":
        return cls(np.zeros(n_visible), np.zeros(n_hidden), np.zeros((n_hidden, n_visible)))

    @classmethod
    def random(cls, n_visible: int, alpha: int = 1, seed=0, std: float = 0.01) -> "NqsWF":
        rng = np.random.default_rng(seed)
        M = alpha * n_visible
        return cls(rng.normal(0, std, n_visible), rng.normal(0, std, M),
                   rng.normal(0, std, (M, n_visible)))

    @property
    def n_visible(self) -> int:
        return len(self.a)

    @property
    def n_hidden(self) -> int:
        return len(self.b)

    @property
    def alpha(self) -> float:
        return self.n_hidden / self.n_visible

    @property
    def n_params(self) -> int:
        return self.n_visible + self.n_hidden + self.n_visible * self.n_hidden

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.a, self.b, self.W.ravel()])

    def with_params(self, flat: np.ndarray) -> "NqsWF":
        N, M = self.n_visible, self.n_hidden
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        return NqsWF(flat[:N].copy(), flat[N:N + M].copy(), flat[N + M:].reshape(M, N).copy())

    @staticmethod
    def _spins(configs) -> np.ndarray:
        return 1.0 - 2.0 * np.asarray(configs, dtype=float)

    def log_amplitude(self, x: BasisState) -> tuple[float, int]:
        sigma = self._spins(x.to_array())
        theta = self.b + self.W @ sigma
        return float(self.a @ sigma + log2cosh(theta).sum()), 1

    def log_amplitudes(self, configs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sigma = self._spins(configs)
        theta = sigma @ self.W.T + self.b
        return sigma @ self.a + log2cosh(theta).sum(axis=1), np.ones(len(sigma))

    def amplitudes(self, basis: SectorBasis) -> np.ndarray:
        out = np.empty(basis.dim)
        chunk = 1 << 16
        for start in range(0, basis.dim, chunk):
            la, _ = self.log_amplitudes(basis.bits()[start:start + chunk])
            out[start:start + chunk] = la
        return np.exp(out - out.max())

    def log_derivatives(self, x: BasisState) -> np.ndarray:
        return self.log_derivatives_batch(x.to_array()[None, :])[0]

    def log_derivatives_batch(self, configs: np.ndarray) -> np.ndarray:
        sigma = self._spins(configs)
        t = np.tanh(sigma @ self.W.T + self.b)
        dW = (t[:, :, None] * sigma[:, None, :]).reshape(len(sigma), -1)
        return np.concatenate([sigma, t, dW], axis=1)

    def walkers(self, configs: np.ndarray) -> "NqsWalkers":
        return NqsWalkers(self, configs)

    def save(self, path: str | Path):
        header = (
            f"N={self.n_visible}\nM={self.n_hidden}\n"
            "ordering=a|b|W row-major (W is M x N)\ndtype=float64 little-endian\n\n"
        ).encode()
        with open(path, "wb") as fh:
            fh.write(NQS_MAGIC + header)
            fh.write(self.params.astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "NqsWF":
        data = Path(path).read_bytes()
        if not data.startswith(NQS_MAGIC):
            raise ValueError(f"{path}: not an NQS weight file")
        end = data.find(b"\n\n", len(NQS_MAGIC) - 1)
        if end < 0:
            raise ValueError(f"{path}: unterminated header")
        fields = dict(line.split("=", 1) for line in data[len(NQS_MAGIC):end].decode().splitlines() if line)
        N, M = int(fields["N"]), int(fields["M"])
        flat = np.frombuffer(data[end + 2:], dtype="<f8")
        if len(flat) != N + M + N * M:
            raise ValueError(f"{path}: expected {N + M + N * M} weights, found {len(flat)}")
        return cls.zeros(N, M).with_params(flat.astype(float))


class NqsWalkers:
    CHUNK = 2048

    def __init__(self, wf: NqsWF, configs: np.ndarray):
        self.wf = wf
        self.configs = np.array(configs, dtype=np.uint8)
        self.B = len(self.configs)
        self.refresh()

    def refresh(self):
        self.sigma = 1.0 - 2.0 * self.configs.astype(float)
        self.theta = self.sigma @ self.wf.W.T + self.wf.b
        self.log_abs = self.sigma @ self.wf.a + log2cosh(self.theta).sum(axis=1)
        self.sign = np.ones(self.B)

    def _log_ratio(self, p):
        rows = np.arange(self.B)
        s = self.sigma[rows, p]
        new_theta = self.theta - 2.0 * s[:, None] * self.wf.W[:, p].T
        lr = -2.0 * self.wf.a[p] * s + (log2cosh(new_theta) - log2cosh(self.theta)).sum(axis=1)
        return lr, new_theta

    def ratio(self, p, q=None, valid=None):
        lr, _ = self._log_ratio(p)
        out = np.exp(lr)
        if valid is not None:
            out = np.where(valid, out, 1.0)
        return out

    def accept(self, p, q, mask):
        idx = np.nonzero(mask)[0]
        if len(idx) == 0:
            return
        lr, new_theta = self._log_ratio(p)
        pi = p[idx]
        self.theta[idx] = new_theta[idx]
        self.log_abs[idx] += lr[idx]
        self.sigma[idx, pi] *= -1.0
        self.configs[idx, pi] ^= 1

    def local_energy(self, spec: HamiltonianSpec) -> np.ndarray:
        W, a = self.wf.W, self.wf.a
        e = np.zeros(self.B)
        for i, j in spec.lattice.bonds():
            e -= spec.J * self.sigma[:, i] * self.sigma[:, j]
        for start in range(0, self.B, self.CHUNK):
            sl = slice(start, start + self.CHUNK)
            sig, th = self.sigma[sl], self.theta[sl]
            # theta after flipping spin j: theta - 2 sigma_j W[:, j]
            flipped = th[:, None, :] - 2.0 * sig[:, :, None] * W.T[None, :, :]
            lr = -2.0 * a[None, :] * sig + (log2cosh(flipped) - log2cosh(th)[:, None, :]).sum(axis=2)
            e[sl] -= spec.h * np.exp(lr).sum(axis=1)
        return e

    def log_derivatives(self) -> np.ndarray:
        t = np.tanh(self.theta)
        dW = (t[:, :, None] * self.sigma[:, None, :]).reshape(self.B, -1)
        return np.concatenate([self.sigma, t, dW], axis=1)


# --------------------------------------------------------------------------- tabulated


@dataclass(frozen=True, eq=False)
class TabulatedWF:
    """Explicit amplitude vector over an enumerable sector (e.g. an exact eigenstate)."""

    basis: SectorBasis
    values: np.ndarray

    @property
    def model(self) -> ModelKind:
        return self.basis.model

    def log_amplitude(self, x: BasisState) -> tuple[float, int]:
        v = float(np.real(self.values[self.basis.index(x)]))
        if v == 0:
            return -math.inf, 0
        return math.log(abs(v)), 1 if v > 0 else -1

    def amplitudes(self, basis: SectorBasis) -> np.ndarray:
        return np.real(np.asarray(self.values))

    def log_amplitudes(self, configs):
        v = np.real(self.values[self.basis.index_array(pack_bits(configs))])
        with np.errstate(divide="ignore"):
            return np.log(np.abs(v)), np.sign(v)

    def walkers(self, configs):
        return TabulatedWalkers(self, configs)


class TabulatedWalkers:
    def __init__(self, wf: TabulatedWF, configs):
        self.wf = wf
        self.configs = np.array(configs, dtype=np.uint8)
        self.B = len(self.configs)
        self.refresh()

    def refresh(self):
        self.index = self.wf.basis.index_array(pack_bits(self.configs))
        v = np.real(self.wf.values[self.index])
        if np.any(v == 0):
            raise ZeroAmplitudeError("walker placed on a zero-amplitude configuration")
        self.log_abs, self.sign = np.log(np.abs(v)), np.sign(v)

    def _targets(self, p, q, valid):
        mask = np.int64(1) << p.astype(np.int64)
        if q is not None:
            mask = mask | np.where(valid, np.int64(1) << q.astype(np.int64), 0)
        states = self.wf.basis.states[self.index] ^ np.where(valid, mask, 0)
        return self.wf.basis.index_array(states)

    def ratio(self, p, q=None, valid=None):
        valid = np.ones(self.B, dtype=bool) if valid is None else valid
        tgt = self._targets(p, q, valid)
        vals = np.real(self.wf.values)
        return np.where(valid, vals[tgt] / vals[self.index], 1.0)

    def accept(self, p, q, mask):
        idx = np.nonzero(mask)[0]
        rows = idx
        self.configs[rows, p[idx]] ^= 1
        if q is not None:
            self.configs[rows, q[idx]] ^= 1
        self.refresh()

    def local_energy(self, spec: HamiltonianSpec) -> np.ndarray:
        from .models import build_hamiltonian

        H = build_hamiltonian(spec, self.wf.basis)
        vals = np.real(self.wf.values)
        return (H @ vals)[self.index] / vals[self.index]


# --------------------------------------------------------------------------- scalar API


def log_amplitude(wf, x: BasisState) -> tuple[float, int]:
    """``(log|psi(x)|, sign psi(x))``; ``(-inf, 0)`` for a zero amplitude."""
    return wf.log_amplitude(x)


def ratio(wf, x: BasisState, y: BasisState) -> float:
    lx, sx = wf.log_amplitude(x)
    if sx == 0:
        raise ZeroAmplitudeError(f"psi({x}) = 0")
    if x == y:
        return 1.0
    ly, sy = wf.log_amplitude(y)
    if sy == 0:
        return 0.0
    return sx * sy * math.exp(ly - lx)


def connected_states(spec: HamiltonianSpec, x: BasisState) -> list[tuple[BasisState, float]]:
    """Off-diagonal row of H at x as ``(y, H_xy)`` pairs."""
    out = []
    if spec.model is ModelKind.HUBBARD:
        L = spec.n_sites
        for s in (0, 1):
            for i, j in spec.lattice.bonds():
                p, q = s * L + i, s * L + j
                if x.bit(p) != x.bit(q):
                    out.append((x.flip(p, q), -float(jw_sign(x.bits, p, q))))
    else:
        for j in range(spec.n_sites):
            out.append((x.flip(j), -spec.h))
    return out


def diagonal_energy(spec: HamiltonianSpec, x: BasisState) -> float:
    if spec.model is ModelKind.HUBBARD:
        return spec.U * double_occupancy(x, spec.n_sites)
    s = x.spins()
    return float(-spec.J * sum(s[i] * s[j] for i, j in spec.lattice.bonds()))


def local_energy(wf, spec: HamiltonianSpec, x: BasisState) -> float:
    """sum_y H_xy psi(y)/psi(x)."""
    _, sx = wf.log_amplitude(x)
    if sx == 0:
        raise ZeroAmplitudeError(f"psi({x}) = 0")
    e = diagonal_energy(spec, x)
    for y, h in connected_states(spec, x):
        e += h * ratio(wf, x, y)
    return e


def log_derivatives(wf: NqsWF, x: BasisState) -> np.ndarray:
    if not isinstance(wf, NqsWF):
        raise TypeError("log-derivatives are only defined for the NQS ansatz")
    return wf.log_derivatives(x)


def exact_energy(wf, spec: HamiltonianSpec, basis: SectorBasis) -> float:
    """<psi|H|psi>/<psi|psi> by full enumeration."""
    from .models import build_hamiltonian

    psi = wf.amplitudes(basis)
    H = build_hamiltonian(spec, basis)
    return float(psi @ (H @ psi) / (psi @ psi))


def gutzwiller_energy_curve(spec: HamiltonianSpec, basis: SectorBasis, cs: np.ndarray,
                            slater: SlaterDeterminant | None = None) -> np.ndarray:
    """Exact variational energy of the Gutzwiller state for every c in ``cs``."""
    from .models import build_hamiltonian

    if slater is None:
        c0 = basis.constraint
        slater = SlaterDeterminant.ground_state(spec.lattice, c0.n_up, c0.n_down)
    base = GutzwillerWF(0.0, slater).amplitudes(basis)
    L = spec.n_sites
    D = np.bitwise_count((basis.states & ((1 << L) - 1)) & (basis.states >> L))
    H = build_hamiltonian(spec, basis)
    out = np.empty(len(cs))
    for k, c in enumerate(np.asarray(cs, dtype=float)):
        psi = base * np.exp(-c * D)
        out[k] = psi @ (H @ psi) / (psi @ psi)
    return out


def optimal_gutzwiller(spec: HamiltonianSpec, basis: SectorBasis, step: float = 1e-3,
                       c_max: float = 3.0) -> tuple[float, float]:
    """Grid minimiser ``(c*, E(c*))`` over c in [0, c_max]."""
    cs = np.round(np.arange(0.0, c_max + step / 2, step), 12)
    e = gutzwiller_energy_curve(spec, basis, cs)
    k = int(np.argmin(e))
    return float(cs[k]), float(e[k])
