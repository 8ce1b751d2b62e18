"""Sparse linear-algebra kernel: ground states, exp(-i theta H) actions, expectations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .models import SectorBasis

DENSE_LIMIT = 4096
KRYLOV_DIM = 30
KRYLOV_TOL = 1e-9


class ConvergenceError(RuntimeError):
    pass


@dataclass
class StateVector:
    amplitudes: np.ndarray
    basis: SectorBasis | None = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)

    @property
    def dim(self) -> int:
        return len(self.amplitudes)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return p / p.sum()


class DiagonalOperator:
    """Operator stored by its diagonal; avoids a CSR copy at large dims."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.shape = (len(self.values), len(self.values))

    def __matmul__(self, v):
        return self.values * v if v.ndim == 1 else self.values[:, None] * v

    def tocsr(self):
        return sp.diags(self.values).tocsr()


class SpinFlipField:
    """``coeff * sum_j X_j`` on the full 2^n spin space (index = packed bits)."""

    def __init__(self, n_spins: int, coeff: float = 1.0):
        self.n_spins = n_spins
        self.coeff = float(coeff)
        self.shape = (2**n_spins, 2**n_spins)

    def __matmul__(self, v):
        out = np.zeros_like(v, dtype=np.result_type(v, float))
        idx = np.arange(self.shape[0])
        for j in range(self.n_spins):
            out += v[idx ^ (1 << j)]
        return self.coeff * out

    def tocsr(self):
        n = self.shape[0]
        idx = np.arange(n)
        rows = np.concatenate([idx ^ (1 << j) for j in range(self.n_spins)])
        cols = np.tile(idx, self.n_spins)
        return sp.csr_matrix((np.full(len(rows), self.coeff), (rows, cols)), shape=self.shape)


Operator = Union[sp.spmatrix, sp.sparray, DiagonalOperator, SpinFlipField, spla.LinearOperator, np.ndarray]


def _as_vector(vec) -> np.ndarray:
    return vec.amplitudes if isinstance(vec, StateVector) else np.asarray(vec)


def _matvec(op: Operator, v: np.ndarray) -> np.ndarray:
    if isinstance(op, spla.LinearOperator):
        return op.matvec(v)
    return op @ v


def _to_dense(op: Operator) -> np.ndarray:
    if isinstance(op, np.ndarray):
        return op
    if isinstance(op, (DiagonalOperator, SpinFlipField)) or sp.issparse(op):
        m = op.tocsr() if not sp.issparse(op) else op
        return m.toarray()
    return op @ np.eye(op.shape[0])


def _canonical_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v) > np.abs(v).max() * (1 - 1e-9)))
    return v * (abs(v[k]) / v[k])


def ground_state(op: Operator, tol: float = 1e-8, maxiter: int | None = None) -> tuple[float, StateVector]:
    """Lowest eigenpair; dense below ``DENSE_LIMIT``, Lanczos (ARPACK) above."""
    dim = op.shape[0]
    if dim <= DENSE_LIMIT:
        w, v = np.linalg.eigh(_to_dense(op))
        energy, vec = float(w[0]), v[:, 0]
    else:
        if isinstance(op, (DiagonalOperator, SpinFlipField)):
            op = spla.LinearOperator(op.shape, matvec=lambda x, o=op: o @ x, dtype=float)
        try:
            w, v = spla.eigsh(op, k=1, which="SA", tol=1e-12, maxiter=maxiter or 20 * dim)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError("Lanczos did not converge") from exc
        energy, vec = float(w[0]), v[:, 0]
    vec = _canonical_phase(vec / np.linalg.norm(vec))
    residual = np.linalg.norm(_matvec(op, vec) - energy * vec)
    if residual > tol * max(1.0, abs(energy)):
        raise ConvergenceError(f"ground-state residual {residual:.2e} above {tol:.0e}")
    return energy, StateVector(vec)


def expectation(op: Operator, vec) -> float:
    v = _as_vector(vec)
    if op.shape[0] != len(v):
        raise ValueError(f"dimension mismatch: operator {op.shape[0]}, vector {len(v)}")
    val = np.vdot(v, _matvec(op, v))
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}; operator not Hermitian?")
    return float(val.real)


class Propagator:
    """Prepared action of exp(-i theta op) for repeated use with different theta.

    Diagonal operators and direct sums of disjoint 2x2 blocks are exponentiated
    elementwise; ``SpinFlipField`` factorises into single-spin rotations; any
    other Hermitian operator falls back to a restarted Lanczos propagator.
    """

    def __init__(self, op: Operator, krylov_dim: int = KRYLOV_DIM, tol: float = KRYLOV_TOL):
        self.op = op
        self.dim = op.shape[0]
        self.krylov_dim = krylov_dim
        self.tol = tol
        self.kind = "krylov"
        if isinstance(op, DiagonalOperator):
            self.kind, self.diag = "diagonal", op.values
            self._levels()
        elif isinstance(op, SpinFlipField):
            self.kind = "spin-flip"
        elif sp.issparse(op):
            self._classify(sp.csr_matrix(op))

    def _classify(self, m: sp.csr_matrix):
        diag = m.diagonal().real.astype(float)
        off = (m - sp.diags(m.diagonal())).tocsr()
        off.eliminate_zeros()
        if off.nnz == 0:
            self.kind, self.diag = "diagonal", diag
            self._levels()
            return
        counts = np.diff(off.indptr)
        if counts.max() > 1:
            return
        rows = np.nonzero(counts)[0]
        partner = off.indices[off.indptr[rows]]
        pmap = np.full(self.dim, -1)
        pmap[rows] = partner
        if np.all(pmap[partner] == rows):
            self.kind = "pairs"
            lo = rows[rows < partner]
            hi = pmap[lo]
            self.pairs = (lo, hi)
            self.pair_coupling = np.asarray(off[lo, hi]).ravel()
            self.diag = diag

    def _levels(self):
        # few distinct diagonal values (ZZ sums, onsite counts): exponentiate those only
        levels, inverse = np.unique(self.diag, return_inverse=True)
        self.levels = (levels, inverse) if len(levels) <= 1024 else None

    def apply(self, theta: float, vec) -> np.ndarray:
        v = np.asarray(_as_vector(vec), dtype=np.complex128)
        if theta == 0:
            return v.copy()
        if self.kind == "diagonal":
            if self.levels is not None:
                levels, inverse = self.levels
                return np.exp(-1j * theta * levels)[inverse] * v
            return np.exp(-1j * theta * self.diag) * v
        if self.kind == "spin-flip":
            return _rotate_all_spins(v, self.op.n_spins, theta * self.op.coeff)
        if self.kind == "pairs":
            return self._apply_pairs(theta, v)
        return krylov_expm(lambda x: _matvec(self.op, x), theta, v, self.krylov_dim, self.tol)

    def _apply_pairs(self, theta: float, v: np.ndarray) -> np.ndarray:
        out = np.exp(-1j * theta * self.diag) * v
        lo, hi = self.pairs
        d1, d2, a = self.diag[lo], self.diag[hi], self.pair_coupling
        mean, half = 0.5 * (d1 + d2), 0.5 * (d1 - d2)
        r = np.hypot(half, np.abs(a))
        c = np.cos(theta * r)
        s = np.where(r > 0, np.sin(theta * r) / np.where(r > 0, r, 1.0), theta)
        phase = np.exp(-1j * theta * mean)
        x, y = v[lo], v[hi]
        out[lo] = phase * ((c - 1j * s * half) * x - 1j * s * a * y)
        out[hi] = phase * (-1j * s * np.conj(a) * x + (c + 1j * s * half) * y)
        return out


ROTATION_GROUP = 4


def _rotate_all_spins(v: np.ndarray, n_spins: int, angle: float) -> np.ndarray:
    """Apply prod_j exp(-i angle X_j); index bit j is spin j."""
    r1 = np.array([[np.cos(angle), -1j * np.sin(angle)], [-1j * np.sin(angle), np.cos(angle)]])
    return apply_each_spin(v, n_spins, r1)


def apply_each_spin(v: np.ndarray, n_spins: int, gate: np.ndarray) -> np.ndarray:
    """Apply the same 2x2 ``gate`` to every spin.

    Spins are handled in groups of up to ``ROTATION_GROUP`` with the Kronecker
    power of the gate, one small matmul per group."""
    out = np.array(v, dtype=np.complex128)
    lo = 0
    while lo < n_spins:
        k = min(ROTATION_GROUP, n_spins - lo)
        R = gate
        for _ in range(k - 1):
            R = np.kron(R, gate)
        if lo == 0:
            out = (out.reshape(-1, 1 << k) @ R.T).reshape(-1)
        else:
            out = np.matmul(R, out.reshape(-1, 1 << k, 1 << lo)).reshape(-1)
        lo += k
    return out


def krylov_expm(matvec, theta: float, v: np.ndarray, m: int = KRYLOV_DIM,
                tol: float = KRYLOV_TOL, max_substeps: int = 100000) -> np.ndarray:
    """exp(-i theta H) v for Hermitian H via restarted Lanczos with step control."""
    w = np.array(v, dtype=np.complex128)
    total = float(theta)
    done = 0.0
    dt = total
    substeps = 0
    while abs(total - done) > 1e-15 * max(1.0, abs(total)):
        beta0 = np.linalg.norm(w)
        if beta0 == 0:
            return w
        V = np.zeros((m + 1, len(w)), dtype=np.complex128)
        alpha = np.zeros(m)
        beta = np.zeros(m)
        V[0] = w / beta0
        k_used = m
        for k in range(m):
            u = matvec(V[k])
            alpha[k] = np.vdot(V[k], u).real
            u = u - alpha[k] * V[k] - (beta[k - 1] * V[k - 1] if k else 0)
            # full reorthogonalisation; m is small
            u -= V[: k + 1].T @ (V[: k + 1].conj() @ u)
            beta[k] = np.linalg.norm(u)
            if beta[k] < 1e-13 * beta0:
                k_used = k + 1
                break
            V[k + 1] = u / beta[k]
        T_evals, T_evecs = sla.eigh_tridiagonal(alpha[:k_used], beta[: k_used - 1])
        happy = k_used < m
        remaining = total - done
        if abs(dt) > abs(remaining):
            dt = remaining
        while True:
            y = T_evecs @ (np.exp(-1j * dt * T_evals) * T_evecs[0].conj())
            err = 0.0 if happy else beta0 * beta[k_used - 1] * abs(y[k_used - 1])
            if err <= tol * abs(dt) / max(abs(total), 1e-300) or abs(dt) < 1e-12:
                break
            dt *= 0.5
        w = beta0 * (V[:k_used].T @ y)
        done += dt
        substeps += 1
        if substeps > max_substeps:
            raise ConvergenceError("Krylov propagation exceeded the substep cap")
        if err < 0.1 * tol * abs(dt) / max(abs(total), 1e-300):
            dt *= 2.0
    return w


def evolve(op: Operator, theta: float, vec: StateVector) -> StateVector:
    """exp(-i theta op) |vec>."""
    basis = vec.basis if isinstance(vec, StateVector) else None
    return StateVector(Propagator(op).apply(theta, vec), basis)
