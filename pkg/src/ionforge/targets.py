"""Target unitaries, the layered rotation ansatz and exhaustive layer search."""

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .circuit import Circuit, cost_function, fidelity_cost
from .gatekit import CXY, MS, Z
from .linalg import (
    I2,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    LinalgError,
    embed,
    expm_hermitian_generator,
    is_unitary,
    kron_all,
)
from .optimizer import OptConfig, restart_minimize

log = logging.getLogger(__name__)

TARGET_KINDS = ("identity", "toffoli", "ucc", "xxz", "matrix_file")


def toffoli(n=3):
    """Toffoli on qubits 1-3 (controls 1, 2), identity on the rest."""
    if n < 3:
        raise ValueError("Toffoli needs at least 3 qubits")
    t = np.eye(8, dtype=complex)
    t[[6, 7]] = t[[7, 6]]
    return np.kron(t, np.eye(2 ** (n - 3), dtype=complex))


def ucc_generator(n):
    """``prod_i (sigma_x - i sigma_y)^(i) + h.c.`` = ``2^n (|1..1><0..0| + h.c.)``."""
    lower = SIGMA_X - 1j * SIGMA_Y
    g = kron_all(*[lower] * n)
    return g + g.conj().T


def ucc_unitary(n, beta_ucc):
    """``exp(i beta_ucc G)`` for the UCC-type generator ``G``.

    ``G`` lives on span{|0..0>, |1..1>} with eigenvalues ``±2^n``, so the
    target is ``cos(2^n beta) I + i sin(2^n beta) X`` there and the identity
    elsewhere. Some ``(n, beta)`` pairs therefore give the identity.
    """
    if n < 2:
        raise ValueError("UCC target needs n >= 2")
    return expm_hermitian_generator(ucc_generator(n), -beta_ucc)


def xxz_hamiltonian(n, h, j, delta):
    if n < 2:
        raise ValueError("XXZ chain needs n >= 2")
    d = 2**n
    ham = -2 * h * sum(embed(SIGMA_Z, i, n) for i in range(1, n + 1))
    for i in range(1, n):
        xx = embed(SIGMA_X, i, n) @ embed(SIGMA_X, i + 1, n)
        yy = embed(SIGMA_Y, i, n) @ embed(SIGMA_Y, i + 1, n)
        zz = embed(SIGMA_Z, i, n) @ embed(SIGMA_Z, i + 1, n)
        ham = ham - j * (xx + yy + delta * (zz - 0.25 * np.eye(d)))
    return ham


def xxz_unitary(n, h, j, delta, tau):
    """``exp(-i H tau)`` for the open XXZ chain."""
    return expm_hermitian_generator(xxz_hamiltonian(n, h, j, delta), tau)


def save_matrix(path, u):
    u = np.asarray(u, dtype=complex)
    with open(path, "w") as fh:
        for row in u:
            fh.write(" ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row) + "\n")


def load_matrix(path, tol=1e-10):
    """Read a row-major ``re,im`` unitary; rejects non-unitary input."""
    with open(path) as fh:
        tokens = fh.read().split()
    try:
        values = [complex(float(re), float(im)) for re, im in (t.split(",") for t in tokens)]
    except ValueError as exc:
        raise LinalgError(f"{path}: malformed entry ({exc})") from exc
    d = math.isqrt(len(values))
    if d * d != len(values) or d < 2 or d & (d - 1):
        raise LinalgError(f"{path}: {len(values)} entries is not a 2^n x 2^n matrix")
    u = np.array(values).reshape(d, d)
    if not is_unitary(u, tol):
        raise LinalgError(f"{path}: matrix is not unitary to {tol}")
    return u


@dataclass(frozen=True)
class TargetSpec:
    kind: str
    n: int
    params: dict = field(default_factory=dict)
    path: str = ""

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind == "toffoli" and self.n < 3:
            raise ValueError("Toffoli target needs n >= 3")
        if self.kind in ("ucc", "xxz") and self.n < 2:
            raise ValueError(f"{self.kind} target needs n >= 2")
        if self.kind == "matrix_file" and not self.path:
            raise ValueError("matrix_file target needs a path")


def build_target(spec):
    p = spec.params
    if spec.kind == "identity":
        return np.eye(2**spec.n, dtype=complex)
    if spec.kind == "toffoli":
        return toffoli(spec.n)
    if spec.kind == "ucc":
        return ucc_unitary(spec.n, p.get("beta_ucc", math.pi / 2 ** (spec.n + 1)))
    if spec.kind == "xxz":
        return xxz_unitary(
            spec.n, p.get("h", 0.0), p.get("J", 0.5), p.get("delta", 0.5), p.get("tau", 0.25)
        )
    u = load_matrix(spec.path)
    if u.shape[0] != 2**spec.n:
        raise LinalgError(f"{spec.path}: dimension {u.shape[0]} does not match n={spec.n}")
    return u


# Layered ansatz: R_0 MS R_1 MS ... MS R_L with R = Cxy Z_1 .. Z_n Cxy.


@dataclass(frozen=True)
class LayerLayout:
    rotation_gates: int
    rotation_params: int
    params_per_layer: int


def rotation_layer_params(n):
    if n < 1:
        raise ValueError("n must be >= 1")
    return LayerLayout(n + 2, n + 4, n + 6)


def rotation_block(n):
    return [CXY] + [Z(j) for j in range(1, n + 1)] + [CXY]


def layer_circuit(n, n_layers):
    """``n_layers`` MS gates, each followed by a rotation block."""
    gates = []
    for _ in range(n_layers):
        gates += [MS] + rotation_block(n)
    return Circuit(n, gates)


def sandwich_circuit(n, n_ms):
    """Rotation blocks on both sides of every MS gate: (n+2)(n_ms+1) rotations."""
    gates = rotation_block(n)
    for _ in range(n_ms):
        gates += [MS] + rotation_block(n)
    return Circuit(n, gates)


def combinations_count(n, l_ms):
    """Closed-form count of zeroing patterns, exact rational then rounded."""
    if n < 1 or l_ms < 1:
        raise ValueError("n and l_ms must be >= 1")
    num = Fraction(2 ** ((n + 2) * (l_ms + 1)) - 1)
    den = 1 - Fraction(1, 4) ** (n + 2)
    value = num / den - l_ms**2
    return round(value)


def layer_configurations(n, n_ms):
    """Zeroed rotation subsets for one layer count, most-zeroed first.

    ``k`` runs from all ``(n+2)(n_ms+1)`` rotations down to 1; subsets of
    equal size come in lexicographic order. There are ``2^K - 1`` in total.
    """
    k_total = (n + 2) * (n_ms + 1)
    for k in range(k_total, 0, -1):
        yield from itertools.combinations(range(k_total), k)


def enumeration_size(n, l_ms_max):
    return sum(2 ** ((n + 2) * (l + 1)) - 1 for l in range(1, l_ms_max + 1))


class BudgetExceeded(RuntimeError):
    def __init__(self, size, budget, estimate):
        super().__init__(
            f"layer search needs {size} configurations (closed-form estimate "
            f"{estimate}, ~2^{math.log2(max(estimate, 1)):.1f}), budget is {budget}"
        )
        self.size = size
        self.estimate = estimate


@dataclass
class LayerSearchResult:
    circuit: Circuit
    params: np.ndarray
    cost: float
    n_ms: int
    zeroed: tuple
    configurations_tried: int

    @property
    def active_gates(self):
        rot = [i for i, g in enumerate(self.circuit.gates) if g.kind != "MS"]
        dead = {rot[k] for k in self.zeroed}
        return [g for i, g in enumerate(self.circuit.gates) if i not in dead]


def _frozen_cost(c, target, frozen_gates):
    full = cost_function(c, target)
    mask = np.ones(c.n_params, dtype=bool)
    for gi in frozen_gates:
        mask[c.param_slice(gi)] = False
    free = np.flatnonzero(mask)

    def expand(x):
        a = np.zeros(c.n_params)
        a[free] = x
        return a

    def f(x):
        cost, grad = full(expand(x))
        return cost, grad[free]

    return f, expand, len(free)


def layer_search(target, n, l_ms_max, eps, cfg=OptConfig(), budget=100_000):
    """Exhaustive zeroing search over growing layered circuits.

    Returns the first configuration whose optimized cost is ``<= eps``, or
    ``None``. Raises ``BudgetExceeded`` before doing any work if the full
    enumeration is larger than ``budget``.
    """
    size = enumeration_size(n, l_ms_max)
    if size > budget:
        raise BudgetExceeded(size, budget, combinations_count(n, l_ms_max))
    rng = np.random.default_rng(cfg.seed)
    tried = 0
    for n_ms in range(1, l_ms_max + 1):
        c = sandwich_circuit(n, n_ms)
        rot = [i for i, g in enumerate(c.gates) if g.kind != "MS"]
        for zeroed in layer_configurations(n, n_ms):
            tried += 1
            f, expand, m = _frozen_cost(c, target, [rot[k] for k in zeroed])
            res = restart_minimize(f, m, cfg, rng)
            if res.best_cost <= eps:
                a = expand(res.best_params)
                cost = fidelity_cost(c, a, target)
                log.info("layer search hit: %d MS, %d zeroed, cost %.3g", n_ms, len(zeroed), cost)
                return LayerSearchResult(c, a, cost, n_ms, zeroed, tried)
    return None
