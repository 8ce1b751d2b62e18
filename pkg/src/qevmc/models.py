"""Lattices, Hamiltonians and symmetry-sector bases.

Bit conventions
---------------
Hubbard: bits ``0..L-1`` hold the spin-up occupation of sites ``0..L-1`` and
bits ``L..2L-1`` the spin-down occupation.  Fermionic operators are ordered
up-sector first, so a hop inside one sector picks up the parity of the occupied
orbitals strictly between the two sites.

TFI: bit ``j`` is spin ``j``; bit value 1 means sigma^z = -1.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

MAX_SECTOR_SIZE = 2**27


class Boundary(str, Enum):
    OPEN = "open"
    PERIODIC = "periodic"


class ModelKind(str, Enum):
    HUBBARD = "hubbard"
    TFI = "tfi"


class SectorTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    shape: tuple[int, int]
    boundary: Boundary = Boundary.OPEN
    model: ModelKind = ModelKind.HUBBARD

    def __post_init__(self):
        rows, cols = self.shape
        object.__setattr__(self, "shape", (int(rows), int(cols)))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "model", ModelKind(self.model))
        if rows < 1 or cols < 1 or rows * cols < 2:
            raise ValueError(f"lattice shape {self.shape} needs at least two sites")
        if self.boundary is Boundary.PERIODIC and rows > 1:
            raise ValueError("periodic boundaries are only supported for 1D chains")

    @property
    def n_sites(self) -> int:
        return self.shape[0] * self.shape[1]

    def bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour bonds ``(i, j)`` with ``i < j``, row-major site labels."""
        rows, cols = self.shape
        out = []
        for r in range(rows):
            for c in range(cols):
                s = r * cols + c
                if c + 1 < cols:
                    out.append((s, s + 1))
                if r + 1 < rows:
                    out.append((s, s + cols))
        if self.boundary is Boundary.PERIODIC and cols > 2:
            out.append((0, cols - 1))
        return sorted(out)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Model parameters.  The hopping amplitude is fixed at 1."""

    lattice: LatticeSpec
    U: float = 4.0
    J: float = 1.0
    h: float = 1.0

    @property
    def model(self) -> ModelKind:
        return self.lattice.model

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def n_bits(self) -> int:
        L = self.lattice.n_sites
        return 2 * L if self.model is ModelKind.HUBBARD else L


def hubbard(rows: int, cols: int, U: float = 4.0, boundary=Boundary.OPEN) -> HamiltonianSpec:
    return HamiltonianSpec(LatticeSpec((rows, cols), boundary, ModelKind.HUBBARD), U=U)


def tfi(n: int, h: float = 1.0, J: float = 1.0, boundary=Boundary.OPEN) -> HamiltonianSpec:
    return HamiltonianSpec(LatticeSpec((1, n), boundary, ModelKind.TFI), J=J, h=h)


@dataclass(frozen=True)
class BasisState:
    """A computational-basis configuration packed into a Python int."""

    bits: int
    width: int

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.width:
            raise ValueError(f"bits {self.bits:#x} do not fit in width {self.width}")

    def bit(self, k: int) -> int:
        return (self.bits >> k) & 1

    def to_array(self) -> np.ndarray:
        return np.array([(self.bits >> k) & 1 for k in range(self.width)], dtype=np.uint8)

    @classmethod
    def from_array(cls, arr: Sequence[int]) -> "BasisState":
        bits = 0
        for k, b in enumerate(arr):
            if b:
                bits |= 1 << k
        return cls(bits, len(arr))

    @classmethod
    def from_occupations(cls, up: Sequence[int], down: Sequence[int], n_sites: int) -> "BasisState":
        bits = 0
        for i in up:
            bits |= 1 << i
        for i in down:
            bits |= 1 << (n_sites + i)
        return cls(bits, 2 * n_sites)

    @classmethod
    def from_spins(cls, spins: Sequence[int]) -> "BasisState":
        return cls.from_array([0 if s > 0 else 1 for s in spins])

    def spins(self) -> np.ndarray:
        return 1 - 2 * self.to_array().astype(np.int64)

    def flip(self, *positions: int) -> "BasisState":
        bits = self.bits
        for p in positions:
            bits ^= 1 << p
        return BasisState(bits, self.width)

    def popcount(self) -> int:
        return self.bits.bit_count()

    def sector_counts(self, n_sites: int) -> tuple[int, int]:
        mask = (1 << n_sites) - 1
        return (self.bits & mask).bit_count(), (self.bits >> n_sites).bit_count()

    def __str__(self) -> str:
        return "".join(str(self.bit(k)) for k in range(self.width))


@dataclass(frozen=True)
class FixedFill:
    n_up: int
    n_down: int


@dataclass(frozen=True)
class AllSpins:
    pass


Constraint = FixedFill | AllSpins


def half_filling(n_sites: int) -> FixedFill:
    if n_sites % 2:
        raise ValueError("half filling needs an even number of sites")
    return FixedFill(n_sites // 2, n_sites // 2)


def popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(np.asarray(a, dtype=np.int64)).astype(np.int64)


def unpack_bits(states: np.ndarray, width: int) -> np.ndarray:
    """Packed int64 states -> ``(n, width)`` uint8 array, column k = bit k."""
    states = np.asarray(states, dtype=np.int64)
    return ((states[:, None] >> np.arange(width, dtype=np.int64)) & 1).astype(np.uint8)


def pack_bits(configs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`unpack_bits`; only valid for widths below 63."""
    configs = np.asarray(configs)
    width = configs.shape[-1]
    if width > 62:
        raise ValueError("configurations wider than 62 bits cannot be packed into int64")
    weights = np.int64(1) << np.arange(width, dtype=np.int64)
    return (configs.astype(np.int64) * weights).sum(axis=-1)


def combinations_gosper(n: int, k: int) -> Iterator[int]:
    """All n-bit words with k bits set, ascending (Gosper's hack)."""
    if k == 0:
        yield 0
        return
    x = (1 << k) - 1
    limit = 1 << n
    while x < limit:
        yield x
        lowest = x & -x
        ripple = x + lowest
        x = (((ripple ^ x) >> 2) // lowest) | ripple


@dataclass(frozen=True, eq=False)
class SectorBasis:
    states: np.ndarray
    constraint: Constraint
    width: int
    n_sites: int
    model: ModelKind
    _bits: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, state: BasisState | int) -> int:
        value = state.bits if isinstance(state, BasisState) else int(state)
        k = int(np.searchsorted(self.states, value))
        if k >= len(self.states) or int(self.states[k]) != value:
            raise KeyError(f"state {value:#x} is not in the sector")
        return k

    def index_array(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.int64)
        if isinstance(self.constraint, AllSpins):
            return values.copy()
        k = np.searchsorted(self.states, values)
        k = np.minimum(k, len(self.states) - 1)
        if not np.array_equal(self.states[k], values):
            raise KeyError("some states are not in the sector")
        return k

    def contains(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.int64)
        k = np.minimum(np.searchsorted(self.states, values), len(self.states) - 1)
        return self.states[k] == values

    def state(self, k: int) -> BasisState:
        return BasisState(int(self.states[k]), self.width)

    def bits(self) -> np.ndarray:
        """``(dim, width)`` uint8 table of all configurations (cached)."""
        if self._bits is None:
            object.__setattr__(self, "_bits", unpack_bits(self.states, self.width))
        return self._bits


def sector_size(spec: HamiltonianSpec, constraint: Constraint) -> int:
    L = spec.n_sites
    if isinstance(constraint, AllSpins):
        return 2**spec.n_bits
    return math.comb(L, constraint.n_up) * math.comb(L, constraint.n_down)


def default_constraint(spec: HamiltonianSpec) -> Constraint:
    if spec.model is ModelKind.HUBBARD:
        return half_filling(spec.n_sites)
    return AllSpins()


def enumerate_sector(spec: HamiltonianSpec, constraint: Constraint | None = None) -> SectorBasis:
    if constraint is None:
        constraint = default_constraint(spec)
    L = spec.n_sites
    if isinstance(constraint, FixedFill):
        if spec.model is not ModelKind.HUBBARD:
            raise ValueError("fixed-fill sectors only apply to the Hubbard model")
        if not (0 <= constraint.n_up <= L and 0 <= constraint.n_down <= L):
            raise ValueError(f"inconsistent constraint {constraint} for {L} sites")
    size = sector_size(spec, constraint)
    if size > MAX_SECTOR_SIZE:
        raise SectorTooLarge(f"sector has {size} states (limit {MAX_SECTOR_SIZE})")

    if isinstance(constraint, AllSpins):
        states = np.arange(size, dtype=np.int64)
    else:
        ups = np.fromiter(combinations_gosper(L, constraint.n_up), dtype=np.int64)
        downs = np.fromiter(combinations_gosper(L, constraint.n_down), dtype=np.int64)
        # down word sits in the high bits, so this outer product is already sorted
        states = ((downs[:, None] << L) | ups[None, :]).ravel()
    return SectorBasis(states, constraint, spec.n_bits, L, spec.model)


def double_occupancy(x: BasisState | int, n_sites: int) -> int:
    bits = x.bits if isinstance(x, BasisState) else int(x)
    mask = (1 << n_sites) - 1
    return ((bits & mask) & (bits >> n_sites)).bit_count()


def _between_mask(p: int, q: int) -> int:
    lo, hi = min(p, q), max(p, q)
    return ((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1)


def jw_sign(bits: int, p: int, q: int) -> int:
    """(-1)^(number of occupied orbitals strictly between bit positions p and q)."""
    return -1 if (bits & _between_mask(p, q)).bit_count() & 1 else 1


def _check_basis(spec: HamiltonianSpec, basis: SectorBasis):
    if basis.model is not spec.model or basis.width != spec.n_bits:
        raise ValueError("basis does not match the Hamiltonian spec")


def _csr(rows, cols, vals, dim) -> sp.csr_matrix:
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    m = sp.coo_matrix((v, (r, c)), shape=(dim, dim)).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    return m


def hopping_operator(spec: HamiltonianSpec, basis: SectorBasis,
                     bonds: Sequence[tuple[int, int]] | None = None) -> sp.csr_matrix:
    """-sum_{<ij>,sigma} (c^dag_i c_j + h.c.) restricted to ``bonds``."""
    _check_basis(spec, basis)
    L = spec.n_sites
    bonds = spec.lattice.bonds() if bonds is None else bonds
    states = basis.states
    rows, cols, vals = [], [], []
    for s in (0, 1):
        for i, j in bonds:
            p, q = s * L + i, s * L + j
            differ = ((states >> p) & 1) != ((states >> q) & 1)
            src = np.nonzero(differ)[0]
            if len(src) == 0:
                continue
            x = states[src]
            parity = popcount(x & _between_mask(p, q)) & 1
            y = x ^ ((1 << p) | (1 << q))
            rows.append(basis.index_array(y))
            cols.append(src)
            vals.append(-(1.0 - 2.0 * parity))
    return _csr(rows, cols, vals, basis.dim)


def onsite_diagonal(spec: HamiltonianSpec, basis: SectorBasis) -> np.ndarray:
    _check_basis(spec, basis)
    L = spec.n_sites
    s = basis.states
    return spec.U * popcount((s & ((1 << L) - 1)) & (s >> L)).astype(float)


def zz_diagonal(spec: HamiltonianSpec, basis: SectorBasis,
                bonds: Sequence[tuple[int, int]] | None = None) -> np.ndarray:
    """-J sum_{<ij>} s_i s_j over ``bonds``."""
    _check_basis(spec, basis)
    bonds = spec.lattice.bonds() if bonds is None else bonds
    s = basis.states
    out = np.zeros(basis.dim)
    for i, j in bonds:
        anti = ((s >> i) ^ (s >> j)) & 1
        out -= spec.J * (1.0 - 2.0 * anti)
    return out


def field_operator(spec: HamiltonianSpec, basis: SectorBasis) -> sp.csr_matrix:
    """-h sum_j X_j."""
    _check_basis(spec, basis)
    rows, cols, vals = [], [], []
    src = np.arange(basis.dim)
    for j in range(spec.n_sites):
        rows.append(basis.index_array(basis.states ^ (1 << j)))
        cols.append(src)
        vals.append(np.full(basis.dim, -spec.h))
    return _csr(rows, cols, vals, basis.dim)


def build_hamiltonian(spec: HamiltonianSpec, basis: SectorBasis) -> sp.csr_matrix:
    _check_basis(spec, basis)
    if spec.model is ModelKind.HUBBARD:
        if not isinstance(basis.constraint, FixedFill):
            raise ValueError("Hubbard Hamiltonians need a fixed-fill basis")
        H = hopping_operator(spec, basis) + sp.diags(onsite_diagonal(spec, basis))
    else:
        if not isinstance(basis.constraint, AllSpins):
            raise ValueError("TFI Hamiltonians need the all-spins basis")
        H = field_operator(spec, basis) + sp.diags(zz_diagonal(spec, basis))
    H = H.tocsr()
    H.eliminate_zeros()
    return H
