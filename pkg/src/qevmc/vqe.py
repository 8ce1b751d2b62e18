"""Classical simulation of the Hamiltonian variational ansatz (HVA).

One TFI layer applies exp(-i t1 H_even_zz), exp(-i t2 H_odd_zz), exp(-i t3 H_field)
in that order, starting from the all-plus state.  One Hubbard layer applies the
onsite term, then even-bond and odd-bond hopping, starting from the Slater
determinant ground state of the hopping part.  A bond is "even" when its lower
site index is even.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .exact_engine import (
    DiagonalOperator,
    Propagator,
    SpinFlipField,
    StateVector,
    apply_each_spin,
    expectation,
)
from .models import (
    HamiltonianSpec,
    ModelKind,
    SectorBasis,
    enumerate_sector,
    hopping_operator,
    onsite_diagonal,
    pack_bits,
    zz_diagonal,
)
from .samples import SampleStore
from .trial_wavefunctions import SlaterDeterminant

logger = logging.getLogger(__name__)

MAX_TFI_SPINS = 24
MAX_HUBBARD_DIM = 2**24
FD_STEP = 1e-5
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)


class SizeLimitExceeded(ValueError):
    pass


@dataclass
class VqeAnsatz:
    model: ModelKind
    layers: int
    theta: np.ndarray = None

    def __post_init__(self):
        self.model = ModelKind(self.model)
        if self.layers < 0:
            raise ValueError("layers must be non-negative")
        self.theta = np.zeros(3 * self.layers) if self.theta is None else np.asarray(self.theta, float)
        if self.theta.shape != (3 * self.layers,):
            raise ValueError(f"{self.layers} layers need {3 * self.layers} parameters")


class HvaCircuit:
    """Precomputed layer generators and initial state for one Hamiltonian."""

    def __init__(self, spec: HamiltonianSpec, basis: SectorBasis | None = None):
        self.spec = spec
        if spec.model is ModelKind.TFI and spec.n_sites > MAX_TFI_SPINS:
            raise SizeLimitExceeded(f"TFI simulation limited to {MAX_TFI_SPINS} spins")
        self.basis = enumerate_sector(spec) if basis is None else basis
        if spec.model is ModelKind.HUBBARD and self.basis.dim > MAX_HUBBARD_DIM:
            raise SizeLimitExceeded(f"Hubbard sector limited to {MAX_HUBBARD_DIM} states")
        bonds = spec.lattice.bonds()
        even = [b for b in bonds if b[0] % 2 == 0]
        odd = [b for b in bonds if b[0] % 2 == 1]
        if spec.model is ModelKind.TFI:
            self.parts = [
                DiagonalOperator(zz_diagonal(spec, self.basis, even)),
                DiagonalOperator(zz_diagonal(spec, self.basis, odd)),
                SpinFlipField(spec.n_sites, -spec.h),
            ]
            dim = self.basis.dim
            self.initial = np.full(dim, 1.0 / np.sqrt(dim), dtype=np.complex128)
        else:
            self.parts = [
                DiagonalOperator(onsite_diagonal(spec, self.basis)),
                hopping_operator(spec, self.basis, even),
                hopping_operator(spec, self.basis, odd),
            ]
            lattice = spec.lattice
            c = self.basis.constraint
            sd = SlaterDeterminant.ground_state(lattice, c.n_up, c.n_down)
            amp = sd.amplitudes(self.basis)
            self.initial = (amp / np.linalg.norm(amp)).astype(np.complex128)
        self.propagators = [Propagator(op) for op in self.parts]
        self._hamiltonian = None
        self._x_weights = None

    @property
    def hamiltonian(self):
        if self._hamiltonian is None:
            from .models import build_hamiltonian

            if self.spec.model is ModelKind.TFI and self.spec.n_sites > 16:
                diag = self.parts[0].values + self.parts[1].values
                self._hamiltonian = _DiagPlusField(diag, self.parts[2])
            else:
                self._hamiltonian = build_hamiltonian(self.spec, self.basis)
        return self._hamiltonian

    def prepare(self, theta: np.ndarray) -> StateVector:
        theta = np.asarray(theta, dtype=float)
        v = self.initial.copy()
        for layer in range(len(theta) // 3):
            for k in range(3):
                v = self.propagators[k].apply(theta[3 * layer + k], v)
        return StateVector(v, self.basis)

    def energy(self, theta: np.ndarray) -> float:
        vec = self.prepare(theta)
        if self.spec.model is ModelKind.TFI:
            return self._tfi_energy(vec.amplitudes)
        return expectation(self.hamiltonian, vec)

    def _field_matvec(self, v: np.ndarray) -> np.ndarray:
        hv = apply_each_spin(v, self.spec.n_sites, HADAMARD)
        return apply_each_spin(self._x_weights * hv, self.spec.n_sites, HADAMARD)

    def _part_matvec(self, k: int, v: np.ndarray) -> np.ndarray:
        if self.spec.model is ModelKind.TFI and k == 2:
            return self._field_matvec(v)
        return self.parts[k] @ v

    def _h_matvec(self, v: np.ndarray) -> np.ndarray:
        if self.spec.model is ModelKind.TFI:
            return self._zz * v + self._field_matvec(v)
        return self.hamiltonian @ v

    def energy_and_gradient(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """Exact gradient by reverse-mode (adjoint) differentiation of the circuit.

        With psi_k the state after gate k and lam_k = U_K^+ ... U_{k+1}^+ H psi_K,
        dE/dtheta_k = 2 Im <lam_k| G_k |psi_k>."""
        theta = np.asarray(theta, dtype=float)
        if self.spec.model is ModelKind.TFI:
            self._tfi_energy(self.initial)  # builds the cached weights
        psi = self.prepare(theta).amplitudes
        lam = self._h_matvec(psi)
        energy = float(np.vdot(psi, lam).real)
        grad = np.zeros(len(theta))
        for g in range(len(theta) - 1, -1, -1):
            k = g % 3
            grad[g] = 2.0 * np.vdot(lam, self._part_matvec(k, psi)).imag
            psi = self.propagators[k].apply(-theta[g], psi)
            lam = self.propagators[k].apply(-theta[g], lam)
        return energy, grad

    def _tfi_energy(self, v: np.ndarray) -> float:
        # sum_j <X_j> is sum_j <Z_j> after a Hadamard on every spin
        if self._x_weights is None:
            n = self.spec.n_sites
            ones = np.bitwise_count(self.basis.states).astype(float)
            self._x_weights = (n - 2.0 * ones) * self.parts[2].coeff
            self._zz = self.parts[0].values + self.parts[1].values
        hv = apply_each_spin(v, self.spec.n_sites, HADAMARD)
        return float(self._zz @ (np.abs(v) ** 2) + self._x_weights @ (np.abs(hv) ** 2))


class _DiagPlusField:
    """Matrix-free diag + field operator for large spin systems."""

    def __init__(self, diag: np.ndarray, field: SpinFlipField):
        self.diag = diag
        self.field = field
        self.shape = field.shape

    def __matmul__(self, v):
        out = self.diag * v
        n = self.field.n_spins
        for j in range(n):
            t = v.reshape(-1, 2, 1 << j)
            o = out.reshape(-1, 2, 1 << j)
            o[:, 0, :] += self.field.coeff * t[:, 1, :]
            o[:, 1, :] += self.field.coeff * t[:, 0, :]
        return out


def prepare_state(ansatz: VqeAnsatz, spec: HamiltonianSpec, circuit: HvaCircuit | None = None) -> StateVector:
    if ansatz.model is not spec.model:
        raise ValueError("ansatz and Hamiltonian describe different models")
    circuit = HvaCircuit(spec) if circuit is None else circuit
    return circuit.prepare(ansatz.theta)


def fd_gradient(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = step
        g[k] = (f(x + e) - f(x - e)) / (2 * step)
    return g


@dataclass
class VqeResult:
    ansatz: VqeAnsatz
    energy: float
    initial_energy: float
    restart_energies: list[float] = field(default_factory=list)


def optimize(spec: HamiltonianSpec, layers: int, restarts: int = 10, seed=0,
             circuit: HvaCircuit | None = None, init_scale: float = 0.5,
             x0: np.ndarray | None = None, gradient: str = "fd") -> VqeResult:
    """BFGS, best of ``restarts``.

    ``gradient`` is "fd" (central finite differences, step ``FD_STEP``) or
    "adjoint" (exact reverse-mode gradient, about six times cheaper).  Starting
    points are uniform in [-init_scale, init_scale]; ``x0`` (if given) replaces
    the first one.  The returned energy never exceeds the theta = 0 energy.
    """
    if gradient not in ("fd", "adjoint"):
        raise ValueError(f"unknown gradient method {gradient!r}")
    if layers > 4:
        logger.warning("optimising %d layers; studies stop at four", layers)
    circuit = HvaCircuit(spec) if circuit is None else circuit
    n = 3 * layers
    zero = np.zeros(n)
    e0 = circuit.energy(zero)
    best_theta, best_e = zero, e0
    rng = np.random.default_rng(seed)
    starts = [rng.uniform(-init_scale, init_scale, n) for _ in range(restarts)]
    if x0 is not None and restarts:
        starts[0] = np.asarray(x0, float)
    energies = []
    for k, start in enumerate(starts):
        if n == 0:
            break
        try:
            if gradient == "fd":
                res = minimize(circuit.energy, start, jac=lambda x: fd_gradient(circuit.energy, x),
                               method="BFGS", options={"gtol": 1e-6, "maxiter": 500})
            else:
                res = minimize(circuit.energy_and_gradient, start, jac=True,
                               method="BFGS", options={"gtol": 1e-6, "maxiter": 500})
        except (FloatingPointError, ValueError) as exc:
            logger.info("restart %d discarded: %s", k, exc)
            continue
        if not np.isfinite(res.fun):
            logger.info("restart %d discarded: non-finite energy", k)
            continue
        energies.append(float(res.fun))
        logger.debug("restart %d: E = %.10f (%d its)", k, res.fun, res.nit)
        if res.fun < best_e:
            best_theta, best_e = res.x, float(res.fun)
    return VqeResult(VqeAnsatz(spec.model, layers, best_theta), best_e, e0, energies)


class AliasTable:
    """Walker's alias method for O(1) draws from a fixed discrete distribution."""

    def __init__(self, p: np.ndarray):
        p = np.asarray(p, dtype=float)
        n = len(p)
        scaled = p * n / p.sum()
        self.prob = np.ones(n)
        self.alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        k = rng.integers(0, len(self.prob), size=n)
        keep = rng.random(n) < self.prob[k]
        return np.where(keep, k, self.alias[k])


def draw_indices(p: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn from ``p``: inverse CDF, or an alias table when n exceeds len(p)."""
    if n > len(p) and len(p) <= 1 << 20:
        return AliasTable(p).draw(n, rng)
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(p) - 1)


def sample_state(vec: StateVector, n: int, seed, spec: HamiltonianSpec | None = None,
                 layers: int | None = None, source: str = "vqe-sim") -> SampleStore:
    """``n`` independent computational-basis measurements of ``vec``."""
    if n < 1:
        raise ValueError("need at least one sample")
    basis = vec.basis
    if basis is None:
        raise ValueError("state vector carries no basis")
    rng = np.random.default_rng(seed)
    idx = draw_indices(vec.probabilities(), n, rng)
    states = basis.states[idx]
    configs = ((states[:, None] >> np.arange(basis.width, dtype=np.int64)) & 1).astype(np.uint8)
    shape = spec.lattice.shape if spec is not None else (1, basis.n_sites)
    return SampleStore(basis.model, shape, basis.constraint, configs, source,
                       seed if isinstance(seed, (int, np.integer)) else None, layers)


def exact_distribution(vec: StateVector) -> np.ndarray:
    return vec.probabilities()


def state_index_of(store: SampleStore, basis: SectorBasis) -> np.ndarray:
    return basis.index_array(pack_bits(store.samples))
