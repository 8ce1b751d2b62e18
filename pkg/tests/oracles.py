"""Brute-force reference implementations used only by the tests.

These deliberately avoid the package's fast paths: Hamiltonians are built by
acting with creation/annihilation operators one state at a time, circuits by
dense matrix exponentials.
"""
import itertools

import numpy as np
from scipy.linalg import expm


def annihilate(state: int, mode: int):
    """c_mode |state>; returns (sign, new_state) or None. Sign counts occupied modes below."""
    if not (state >> mode) & 1:
        return None
    sign = (-1) ** bin(state & ((1 << mode) - 1)).count("1")
    return sign, state ^ (1 << mode)


def create(state: int, mode: int):
    if (state >> mode) & 1:
        return None
    sign = (-1) ** bin(state & ((1 << mode) - 1)).count("1")
    return sign, state | (1 << mode)


def hubbard_dense(n_sites: int, bonds, U: float, n_up: int, n_down: int):
    """Dense sector Hamiltonian and the sorted state list; modes 0..L-1 up, L..2L-1 down."""
    L = n_sites
    states = sorted(
        sum(1 << i for i in up) | sum(1 << (L + i) for i in dn)
        for up in itertools.combinations(range(L), n_up)
        for dn in itertools.combinations(range(L), n_down)
    )
    index = {s: k for k, s in enumerate(states)}
    H = np.zeros((len(states), len(states)))
    for k, s in enumerate(states):
        for i in range(L):
            H[k, k] += U * (((s >> i) & 1) and ((s >> (L + i)) & 1))
        for off in (0, L):
            for i, j in bonds:
                for a, b in ((i, j), (j, i)):
                    r1 = annihilate(s, off + b)
                    if r1 is None:
                        continue
                    r2 = create(r1[1], off + a)
                    if r2 is None:
                        continue
                    H[index[r2[1]], k] -= r1[0] * r2[0]
    return H, np.array(states)


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.diag([1.0, -1.0]).astype(complex)


def site_operator(op, j: int, n: int):
    """op acting on spin j, where spin j is bit j of the basis index."""
    out = np.eye(1, dtype=complex)
    for k in reversed(range(n)):
        out = np.kron(out, op if k == j else np.eye(2))
    return out


def tfi_dense(n: int, J: float, h: float, periodic: bool = False):
    bonds = [(i, i + 1) for i in range(n - 1)] + ([(n - 1, 0)] if periodic and n > 2 else [])
    H = np.zeros((2**n, 2**n), dtype=complex)
    for i, j in bonds:
        H -= J * site_operator(PAULI_Z, i, n) @ site_operator(PAULI_Z, j, n)
    for j in range(n):
        H -= h * site_operator(PAULI_X, j, n)
    return H.real, bonds


def hva_tfi_dense(n: int, theta, J: float = 1.0, h: float = 1.0):
    """Dense HVA state: layers of exp(-i t ZZ_even), exp(-i t ZZ_odd), exp(-i t (-h X))."""
    bonds = [(i, i + 1) for i in range(n - 1)]
    even = sum((-J * site_operator(PAULI_Z, i, n) @ site_operator(PAULI_Z, j, n)
                for i, j in bonds if i % 2 == 0), np.zeros((2**n, 2**n), complex))
    odd = sum((-J * site_operator(PAULI_Z, i, n) @ site_operator(PAULI_Z, j, n)
               for i, j in bonds if i % 2 == 1), np.zeros((2**n, 2**n), complex))
    field = sum(-h * site_operator(PAULI_X, j, n) for j in range(n))
    v = np.full(2**n, 2 ** (-n / 2), dtype=complex)
    for layer in range(len(theta) // 3):
        for k, G in enumerate((even, odd, field)):
            v = expm(-1j * theta[3 * layer + k] * G) @ v
    return v


def matrix_power_distribution(M: np.ndarray, nu0: np.ndarray, n: int) -> np.ndarray:
    return nu0 @ np.linalg.matrix_power(M, n)
