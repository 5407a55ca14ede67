"""Circuit representation, evaluation and the recursive fidelity gradient.

Product convention: gate 1 acts first, so ``V = V_L ... V_2 V_1``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import _kernel
from .gatekit import Gate, get_tables
from .linalg import LinalgError, as_matrix

_KIND_CODES = {"MS": _kernel.KIND_MS, "CXY": _kernel.KIND_CXY, "Z": _kernel.KIND_Z}


@dataclass(frozen=True)
class Circuit:
    """Ordered gates on ``n`` qubits with no two equal neighbours."""

    n: int
    gates: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if g.kind == "Z" and g.qubit > self.n:
                raise ValueError(f"{g} outside a {self.n}-qubit register")
        for a, b in zip(self.gates, self.gates[1:]):
            if a == b:
                raise ValueError(f"consecutive duplicate gate {a} (merge it)")

    def __len__(self):
        return len(self.gates)

    @cached_property
    def offsets(self):
        arities = [g.arity for g in self.gates]
        return np.concatenate([[0], np.cumsum(arities)]).astype(np.int64)

    @property
    def n_params(self):
        return int(self.offsets[-1])

    def param_slice(self, index):
        return slice(int(self.offsets[index]), int(self.offsets[index + 1]))

    @cached_property
    def _encoded(self):
        kinds = np.array([_KIND_CODES[g.kind] for g in self.gates], dtype=np.int64)
        qubits = np.array([g.qubit for g in self.gates], dtype=np.int64)
        return kinds, qubits, np.ascontiguousarray(self.offsets[:-1])

    def append(self, gate):
        """Append ``gate``; a repeat of the last gate is merged away."""
        if self.gates and self.gates[-1] == gate:
            return self
        return Circuit(self.n, self.gates + (gate,))

    def to_text(self):
        return " ".join(g.label for g in self.gates)

    @classmethod
    def from_text(cls, n, text):
        return cls(n, tuple(Gate.parse(tok) for tok in text.split()))

    def __str__(self):
        return self.to_text() or "(empty)"


def append_gate(c, g):
    return c.append(g)


class GradResult(NamedTuple):
    cost: float
    gradient: np.ndarray


_ARGS_CACHE = {}


def _table_args(n):
    if n not in _ARGS_CACHE:
        t = get_tables(n)
        _ARGS_CACHE[n] = (
            np.ascontiguousarray(t.xy_projectors),
            np.ascontiguousarray(t.xy_eigenvalues),
            np.ascontiguousarray(t.ms_projectors),
            np.ascontiguousarray(t.ms_eigenvalues),
            np.ascontiguousarray((t.phase_exponents + n).astype(np.intp)),
            np.ascontiguousarray(t.z_signs),
        )
    return _ARGS_CACHE[n]


def _check_params(c, a):
    a = np.ascontiguousarray(a, dtype=float)
    if a.shape != (c.n_params,):
        raise ValueError(f"expected {c.n_params} parameters, got shape {a.shape}")
    return a


def _check_target(c, target):
    target = np.ascontiguousarray(as_matrix(target))
    d = 2**c.n
    if target.shape != (d, d):
        raise LinalgError(f"target shape {target.shape} does not match d={d}")
    return target


def circuit_unitary(c, a, tables=None):
    """``V(a) = V_L ... V_1``; the empty circuit is the identity."""
    a = _check_params(c, a)
    kinds, qubits, offsets = c._encoded
    return _kernel.forward(kinds, qubits, offsets, a, *_table_args(c.n))


def fidelity_cost(c, a, target):
    """``1 - |tr(V(a) U^dagger)|^2 / d^2``."""
    target = _check_target(c, target)
    cost, _ = _kernel.overlap_cost(circuit_unitary(c, a), target)
    return float(min(1.0, max(0.0, cost)))


def grape_gradient(c, a, target, tables=None):
    """Cost and its gradient from cached prefix and suffix products."""
    a = _check_params(c, a)
    target = _check_target(c, target)
    kinds, qubits, offsets = c._encoded
    cost, grad = _kernel.cost_and_grad(
        kinds, qubits, offsets, c.n_params, a, target, *_table_args(c.n)
    )
    return GradResult(float(min(1.0, max(0.0, cost))), grad)


class CircuitObjective:
    """Callable ``a -> (cost, gradient)`` for the optimizer.

    ``minimize`` runs the same L-BFGS iteration inside the compiled kernel,
    which removes the per-evaluation interpreter overhead.
    """

    def __init__(self, c, target):
        self.circuit = c
        self.target = _check_target(c, target)
        self._args = c._encoded + (c.n_params,)
        self._tables = _table_args(c.n)

    def __call__(self, a):
        kinds, qubits, offsets, m = self._args
        return _kernel.cost_and_grad(
            kinds, qubits, offsets, m, np.ascontiguousarray(a, dtype=float),
            self.target, *self._tables
        )

    def minimize(self, x0, cfg, c1, backtrack, max_backtracks):
        kinds, qubits, offsets, m = self._args
        return _kernel.lbfgs(
            kinds, qubits, offsets, m, np.ascontiguousarray(x0, dtype=float),
            self.target, *self._tables, cfg.max_iterations, cfg.grad_tolerance,
            cfg.memory_pairs, cfg.ftol, c1, backtrack, max_backtracks
        )


def cost_function(c, target):
    return CircuitObjective(c, target)


def format_params(a):
    return " ".join(repr(float(x)) for x in a)


def parse_params(text):
    return np.array([float(tok) for tok in text.split()], dtype=float)
