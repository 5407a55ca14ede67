"""Fast trapped-ion gates built from cached eigenstructure.

The collective rotation ``Cxy`` and the Mølmer–Sørensen gate ``MS`` share
the eigenvectors of ``H(phi) = Sx cos(phi) + Sy sin(phi)``. Writing those
eigenvectors as a phase part times a real sign matrix turns each gate into

    U(theta, phi) = exp(i phi C) ⊙ sum_k exp(-i s lambda_k theta) D_k

where ``C[i, j] = b(i) - b(j)`` with ``b`` the Hamming weight of the basis
index, ``D_k`` are real projectors onto the degenerate eigenspaces of
``H(0)`` and ``s`` is 1/2 (Cxy) or 1/4 (MS). Only the scalar coefficients
change per call; the projectors are built once per qubit count.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linalg import SIGMA_X, SIGMA_Y, SIGMA_Z, collective, embed, expm_hermitian_generator

MAX_QUBITS = 12

CXY_SCALE = 0.5
MS_SCALE = 0.25


@dataclass(frozen=True)
class Gate:
    """A gate kind: ``MS``, ``CXY`` or ``Z`` on a 1-based qubit."""

    kind: str
    qubit: int = 0

    def __post_init__(self):
        if self.kind not in ("MS", "CXY", "Z"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "Z" and self.qubit < 1:
            raise ValueError("Z gate needs a qubit index >= 1")
        if self.kind != "Z" and self.qubit != 0:
            raise ValueError(f"{self.kind} acts on the whole register")

    @property
    def arity(self):
        return 1 if self.kind == "Z" else 2

    @property
    def label(self):
        return f"Z{self.qubit}" if self.kind == "Z" else self.kind

    @classmethod
    def parse(cls, label):
        label = label.strip().upper()
        if label in ("MS", "CXY"):
            return cls(label)
        if label.startswith("Z") and label[1:].isdigit():
            return cls("Z", int(label[1:]))
        raise ValueError(f"cannot parse gate label {label!r}")

    def __str__(self):
        return self.label


MS = Gate("MS")
CXY = Gate("CXY")


def Z(j):
    return Gate("Z", j)


def action_set(n):
    """Gate set in action order: MS, CXY, Z1..Zn."""
    return [MS, CXY] + [Z(j) for j in range(1, n + 1)]


def hamming_weights(n):
    idx = np.arange(2**n)
    return np.array([bin(i).count("1") for i in idx], dtype=np.int64)


def sign_matrix(n):
    """``(I + i sigma_y)^{⊗n}``: real, entries ±1, columns are eigenvectors."""
    s1 = np.array([[1.0, 1.0], [-1.0, 1.0]])
    out = np.ones((1, 1))
    for _ in range(n):
        out = np.kron(out, s1)
    return out


@dataclass(frozen=True, eq=False)
class GateTables:
    """Immutable per-qubit-count cache used by every gate construction."""

    n: int
    hamming: np.ndarray
    xy_eigenvalues: np.ndarray
    xy_projectors: np.ndarray
    phase_exponents: np.ndarray
    z_signs: np.ndarray

    @property
    def dim(self):
        return 2**self.n

    @cached_property
    def ms_eigenvalues(self):
        half = self.n // 2
        return np.array([(self.n - 2 * i) ** 2 for i in range(half + 1)], dtype=float)

    @cached_property
    def ms_projectors(self):
        # lambda_i and lambda_{n-i} square to the same value; the middle
        # projector of even n pairs with itself and is counted once.
        n = self.n
        out = []
        for i in range(n // 2 + 1):
            p = self.xy_projectors[i].copy()
            if i != n - i:
                p += self.xy_projectors[n - i]
            out.append(p)
        arr = np.array(out)
        arr.setflags(write=False)
        return arr

    @cached_property
    def _phase_index(self):
        idx = (self.phase_exponents + self.n).astype(np.intp)
        idx.setflags(write=False)
        return idx

    @cached_property
    def _entry_index(self):
        # every projector entry depends on (i, j) only through the Hamming
        # distance of i and j, and the phase only through b(i) - b(j), so a
        # gate has at most (2n+1)(n+1) distinct entries
        d = self.dim
        idx = np.arange(d)
        dist = hamming_weights(self.n)[idx[:, None] ^ idx[None, :]]
        flat = (self.phase_exponents + self.n).astype(np.intp) * (self.n + 1) + dist
        flat.setflags(write=False)
        return flat

    @cached_property
    def _distance_columns(self):
        # column (2^h - 1) sits at Hamming distance h from row 0
        return (1 << np.arange(self.n + 1)) - 1

    def entry_values(self, stack, coeffs):
        """Distinct entries of ``sum_k coeffs_k stack_k`` by Hamming distance."""
        return coeffs @ stack[:, 0, self._distance_columns]

    def phase_matrix(self, phi):
        """``exp(i phi C)`` from the 2n+1 distinct values of ``C``."""
        table = np.exp(1j * phi * np.arange(-self.n, self.n + 1))
        return table[self._phase_index]


def build_tables(n):
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"qubit count {n} outside 1..{MAX_QUBITS}")
    d = 2**n
    b = hamming_weights(n)
    s = sign_matrix(n)
    projectors = np.empty((n + 1, d, d))
    for k in range(n + 1):
        cols = s[:, b == k]
        projectors[k] = cols @ cols.T / d
    phase = (b[:, None] - b[None, :]).astype(np.int8)
    bits = (np.arange(d)[None, :] >> (n - 1 - np.arange(n))[:, None]) & 1
    z_signs = 1.0 - 2.0 * bits  # +1 where qubit j is |0>
    for arr in (b, projectors, phase, z_signs):
        arr.setflags(write=False)
    xy_eigs = 2.0 * np.arange(n + 1) - n
    xy_eigs.setflags(write=False)
    return GateTables(n, b, xy_eigs, projectors, phase, z_signs)


_TABLE_CACHE = {}


def get_tables(n):
    """Shared tables for ``n`` qubits, built on first use."""
    if n not in _TABLE_CACHE:
        _TABLE_CACHE[n] = build_tables(n)
    return _TABLE_CACHE[n]


def _spectral_sum(stack, coeffs):
    flat = stack.reshape(len(stack), -1)
    re = coeffs.real @ flat
    im = coeffs.imag @ flat
    return (re + 1j * im).reshape(stack.shape[1:])


def _collective(t, stack, eigs, scale, theta, phi, grad):
    phase = t.phase_matrix(phi)
    expo = np.exp(-1j * scale * theta * eigs)
    u = phase * _spectral_sum(stack, expo)
    if not grad:
        return u
    du_dtheta = phase * _spectral_sum(stack, -1j * scale * eigs * expo)
    du_dphi = 1j * t.phase_exponents * u
    return u, du_dtheta, du_dphi


def _gathered(t, stack, eigs, scale, theta, phi):
    values = t.entry_values(stack, np.exp(-1j * scale * theta * eigs))
    phases = np.exp(1j * phi * np.arange(-t.n, t.n + 1))
    return np.outer(phases, values).ravel()[t._entry_index]


def cxy_unitary(t, theta, phi):
    """``exp(-i theta/2 (Sx cos phi + Sy sin phi))``."""
    return _gathered(t, t.xy_projectors, t.xy_eigenvalues, CXY_SCALE, theta, phi)


def ms_unitary(t, theta, phi):
    """``exp(-i theta/4 (Sx cos phi + Sy sin phi)^2)``."""
    return _gathered(t, t.ms_projectors, t.ms_eigenvalues, MS_SCALE, theta, phi)


def cxy_unitary_dense(t, theta, phi):
    """Same gate from the full projector sum (reference for the gather)."""
    return _collective(t, t.xy_projectors, t.xy_eigenvalues, CXY_SCALE, theta, phi, False)


def ms_unitary_dense(t, theta, phi):
    return _collective(t, t.ms_projectors, t.ms_eigenvalues, MS_SCALE, theta, phi, False)


def cxy_grad(t, theta, phi):
    """Partials ``(dU/dtheta, dU/dphi)`` of the Cxy gate."""
    _, dth, dph = _collective(
        t, t.xy_projectors, t.xy_eigenvalues, CXY_SCALE, theta, phi, True
    )
    return dth, dph


def ms_grad(t, theta, phi):
    _, dth, dph = _collective(
        t, t.ms_projectors, t.ms_eigenvalues, MS_SCALE, theta, phi, True
    )
    return dth, dph


def z_diagonal(n, j, theta):
    if not 1 <= j <= n:
        raise ValueError(f"Z qubit index {j} outside 1..{n}")
    bits = (np.arange(2**n) >> (n - j)) & 1
    return np.exp(-0.5j * theta * (1.0 - 2.0 * bits))


def z_unitary(n, j, theta):
    """``exp(-i theta/2 sigma_z^(j))`` built directly as a diagonal."""
    return np.diag(z_diagonal(n, j, theta))


def gate_unitary(t, gate, params):
    if gate.kind == "MS":
        return ms_unitary(t, *params)
    if gate.kind == "CXY":
        return cxy_unitary(t, *params)
    return z_unitary(t.n, gate.qubit, params[0])


# Reference generators for the slow exponentiation path.


def xy_hamiltonian(n, phi):
    return np.cos(phi) * collective(SIGMA_X, n) + np.sin(phi) * collective(SIGMA_Y, n)


def ms_hamiltonian(n, phi):
    h = xy_hamiltonian(n, phi)
    return h @ h


def z_hamiltonian(n, j):
    return embed(SIGMA_Z, j, n)


def oracle_unitary(n, gate, params):
    """Slow path: exponentiate the gate Hamiltonian directly."""
    if gate.kind == "MS":
        theta, phi = params
        return expm_hermitian_generator(ms_hamiltonian(n, phi), MS_SCALE * theta)
    if gate.kind == "CXY":
        theta, phi = params
        return expm_hermitian_generator(xy_hamiltonian(n, phi), CXY_SCALE * theta)
    return expm_hermitian_generator(z_hamiltonian(n, gate.qubit), 0.5 * params[0])
