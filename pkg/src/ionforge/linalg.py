"""Dense complex linear algebra and the reference matrix exponential.

Matrices are plain 2-d ``numpy`` arrays of dtype ``complex128``. The
exponential here is deliberately simple (one Hermitian eigendecomposition)
because every fast gate construction is checked against it.
"""

import numpy as np

UNITARY_TOL = 1e-10
HERMITIAN_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class LinalgError(ValueError):
    pass


def as_matrix(a):
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise LinalgError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def kron(a, b):
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(*ops):
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def embed(op, site, n):
    """Place a single-qubit operator on qubit ``site`` (1-based) of ``n``.

    Qubit 1 is the most significant bit of the computational basis index.
    """
    if not 1 <= site <= n:
        raise LinalgError(f"qubit index {site} outside 1..{n}")
    return kron_all(*[op if k == site else I2 for k in range(1, n + 1)])


def collective(op, n):
    """Sum of ``op`` acting on each qubit, e.g. ``S_x = sum_i sigma_x^(i)``."""
    return sum(embed(op, k, n) for k in range(1, n + 1))


def is_unitary(u, tol=UNITARY_TOL):
    u = as_matrix(u)
    if u.shape[0] != u.shape[1]:
        return False
    return np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) <= tol


def is_hermitian(h, tol=HERMITIAN_TOL):
    h = as_matrix(h)
    return h.shape[0] == h.shape[1] and np.max(np.abs(h - h.conj().T)) <= tol


def expm_hermitian_generator(h, scale):
    """Return ``exp(-i * scale * h)`` for Hermitian ``h`` via ``eigh``."""
    h = as_matrix(h)
    if not is_hermitian(h):
        raise LinalgError("generator is not Hermitian")
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise LinalgError(f"eigendecomposition failed: {exc}") from exc
    return (v * np.exp(-1j * scale * w)) @ v.conj().T


def hadamard_product(a, b):
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise LinalgError(f"shape mismatch {a.shape} vs {b.shape}")
    return a * b


def gate_fidelity(u, v):
    """Phase-insensitive overlap ``|tr(V U^dagger)|^2 / d^2``."""
    u, v = as_matrix(u), as_matrix(v)
    if u.shape != v.shape or u.shape[0] != u.shape[1]:
        raise LinalgError(f"shape mismatch {u.shape} vs {v.shape}")
    d = u.shape[0]
    overlap = np.vdot(u, v)  # sum conj(u_ij) v_ij = tr(V U^dagger)
    return float(min(1.0, abs(overlap) ** 2 / d**2))
