"""Hilbert-Schmidt-test cost and parameter-shift gradient estimators.

Every rule sees only a scalar callable ``cost_at(value)`` that returns the
cost with one parameter set to ``value``; nothing else about the circuit is
visible, which is what makes the rules usable against a black-box target.

The ``*_printed`` rules reproduce the published shift formulas literally,
re-centred on the current parameter value. Some of them do not compute a
derivative (see ``validate_rules``), so the evaluation path below picks, per
rule family, either a validated rule or a central finite difference.
"""

import math
from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, circuit_unitary, fidelity_cost, grape_gradient
from .gatekit import action_set
from .optimizer import sample_initial_angles

FD_STEP = 1e-6
VALIDATION_TOL = 1e-6


@dataclass(frozen=True)
class ShiftRule:
    """Shift offsets and coefficients: ``sum_k c_k C(x + s_k)``."""

    name: str
    shifts: tuple
    coefficients: tuple

    def __post_init__(self):
        if not self.shifts or len(self.shifts) != len(self.coefficients):
            raise ValueError("a rule needs matching, non-empty shifts and coefficients")
        if not all(math.isfinite(c) for c in self.coefficients):
            raise ValueError(f"rule {self.name} has non-finite coefficients")

    @property
    def n_evaluations(self):
        return len(self.shifts)

    def apply(self, cost_at, x):
        return math.fsum(c * cost_at(x + s) for s, c in zip(self.shifts, self.coefficients))


def hst_cost(c, a, target):
    """Hilbert-Schmidt-test cost.

    The test's success probability equals the gate fidelity, so the cost is
    evaluated classically as ``1 - F`` rather than by simulating the doubled
    2n-qubit test circuit.
    """
    return fidelity_cost(c, a, target)


# Rule constructors. Z: frequencies {1} in theta, so a half-difference at
# +-pi/2 is exact.


def z_rule():
    return ShiftRule("Z-theta", (math.pi / 2, -math.pi / 2), (0.5, -0.5))


def z_rule_printed():
    return ShiftRule("Z-theta printed", (math.pi / 2, -math.pi / 2), (1.0, -1.0))


def cxy_theta_rule_printed(n):
    shifts, coefs = [], []
    for l in range(1, 2 * n + 1):
        x = (2 * l - 1) * math.pi / (2 * n)
        shifts.append(x)
        coefs.append((-1) ** (l - 1) / (2 * math.sin(x)))
    return ShiftRule(f"Cxy-theta printed (n={n})", tuple(shifts), tuple(coefs))


def ms_theta_rule_printed(n):
    # the Kronecker-like factor in the published rule has no bound index
    # and is taken as 1
    if n < 2:
        raise ValueError("MS theta rule needs n >= 2")
    denom = math.floor(n / 2 + 1)
    shifts, coefs = [], []
    for l in range(1, 2 * math.ceil(n / 2) + 1):
        x = (2 * l - 1) * math.pi / denom
        shifts.append(x)
        coefs.append((-1) ** (l - 1) / (2 * math.sin(x)))
    return ShiftRule(f"MS-theta printed (n={n})", tuple(shifts), tuple(coefs))


def phi_rule_printed():
    r2 = 1 / math.sqrt(2)
    return ShiftRule(
        "phi printed",
        (math.pi / 4, -math.pi / 4, -math.pi / 2, math.pi / 2),
        (1.0, -1.0, r2 - 0.5, r2 + 0.5),
    )


def equidistant_rule(max_frequency, name=None):
    """Exact first-derivative rule for integer frequencies ``1..R``.

    Uses ``2R`` shifts ``x_mu = (2 mu - 1) pi / (2R)`` with coefficients
    ``(-1)^(mu-1) / (4 R sin^2(x_mu / 2))``.
    """
    r = int(max_frequency)
    if r < 1:
        raise ValueError("max_frequency must be >= 1")
    shifts, coefs = [], []
    for mu in range(1, 2 * r + 1):
        x = (2 * mu - 1) * math.pi / (2 * r)
        shifts.append(x)
        coefs.append((-1) ** (mu - 1) / (4 * r * math.sin(x / 2) ** 2))
    return ShiftRule(name or f"equidistant R={r}", tuple(shifts), tuple(coefs))


def cxy_theta_frequency(n):
    return n


def ms_theta_frequency(n):
    # eigenphase gaps ((n-2i)^2 - (n-2j)^2) / 4 are integers up to floor(n^2/4)
    return max(1, n * n // 4)


def phi_frequency(n):
    return 2 * n


# Scalar entry points.


def shift_grad_z(cost_at, theta):
    return z_rule().apply(cost_at, theta)


def shift_grad_z_printed(cost_at, theta):
    return z_rule_printed().apply(cost_at, theta)


def shift_grad_theta_cxy(cost_at, theta, n):
    return cxy_theta_rule_printed(n).apply(cost_at, theta)


def shift_grad_theta_ms(cost_at, theta, n):
    return ms_theta_rule_printed(n).apply(cost_at, theta)


def shift_grad_phi(cost_at, phi):
    return phi_rule_printed().apply(cost_at, phi)


def finite_difference(cost_at, x, step=FD_STEP):
    return (cost_at(x + step) - cost_at(x - step)) / (2 * step)


# Circuit-level helpers.


def parameter_cost(c, a, target, index):
    """Scalar cost as a function of parameter ``index`` alone."""
    base = np.array(a, dtype=float)

    def cost_at(value):
        trial = base.copy()
        trial[index] = value
        return fidelity_cost(c, trial, target)

    return cost_at


def parameter_family(c, index):
    """Which rule family governs flat parameter ``index``."""
    for g, (lo, hi) in enumerate(zip(c.offsets[:-1], c.offsets[1:])):
        if lo <= index < hi:
            gate = c.gates[g]
            if gate.kind == "Z":
                return "Z-theta"
            if index == lo:
                return f"{gate.kind.replace('CXY', 'Cxy')}-theta"
            return "phi"
    raise IndexError(index)


def printed_rule(family, n):
    if family == "Z-theta":
        return z_rule()
    if family == "Cxy-theta":
        return cxy_theta_rule_printed(n)
    if family == "MS-theta":
        return ms_theta_rule_printed(n)
    if family == "phi":
        return phi_rule_printed()
    raise KeyError(family)


def equidistant_rule_for(family, n):
    freq = {
        "Z-theta": 1,
        "Cxy-theta": cxy_theta_frequency(n),
        "MS-theta": ms_theta_frequency(n),
        "phi": phi_frequency(n),
    }[family]
    return equidistant_rule(freq, f"{family} equidistant R={freq}")


def shift_gradient(c, a, target, validated=None, fallback="finite-difference"):
    """Gradient from cost evaluations only.

    ``validated`` maps a rule family to True when its rule passed
    validation; other families use ``fallback``, either central finite
    differences or the equidistant rule for the family's frequency bound.
    Returns ``(gradient, methods)`` with the method used per parameter.
    """
    if fallback not in ("finite-difference", "equidistant"):
        raise ValueError(f"unknown fallback {fallback!r}")
    validated = validated or {}
    grad = np.empty(c.n_params)
    methods = []
    for i in range(c.n_params):
        family = parameter_family(c, i)
        cost_at = parameter_cost(c, a, target, i)
        if validated.get(family, False):
            rule = printed_rule(family, c.n)
            grad[i] = rule.apply(cost_at, a[i])
            methods.append(rule.name)
        elif fallback == "equidistant":
            rule = equidistant_rule_for(family, c.n)
            grad[i] = rule.apply(cost_at, a[i])
            methods.append(rule.name)
        else:
            grad[i] = finite_difference(cost_at, a[i])
            methods.append("finite-difference")
    return grad, methods


# Validation against the analytic gradient.

FAMILIES = ("Z-theta", "Cxy-theta", "MS-theta", "phi")


@dataclass
class RuleCheck:
    family: str
    rule: str
    max_error: float
    passed: bool
    n_evaluations: int
    fallback: str = ""
    fallback_error: float = float("nan")
    equidistant_error: float = float("nan")


@dataclass
class GradCheckReport:
    n: int
    length: int
    trials: int
    seed: int
    grape_fd_error: float
    rules: dict

    @property
    def validated(self):
        return {f: r.passed for f, r in self.rules.items()}

    @property
    def ok(self):
        z = self.rules["Z-theta"]
        return self.grape_fd_error <= VALIDATION_TOL and z.passed

    def lines(self):
        out = [
            f"gradient check: n={self.n} length={self.length} trials={self.trials} seed={self.seed}",
            f"GRAPE vs finite differences: max error {self.grape_fd_error:.3e} "
            f"[{'pass' if self.grape_fd_error <= VALIDATION_TOL else 'FAIL'}]",
        ]
        for fam in FAMILIES:
            r = self.rules[fam]
            line = (f"{fam:10s} {r.rule:28s} evals={r.n_evaluations:<3d} "
                    f"max error {r.max_error:.3e} [{'pass' if r.passed else 'fail'}]")
            if not r.passed and r.fallback:
                line += f" -> {r.fallback} max error {r.fallback_error:.3e}"
            if r.n_evaluations:
                line += f" (equidistant rule {r.equidistant_error:.1e})"
            out.append(line)
        return out


def random_check_circuit(n, length, rng):
    """Random circuit that starts with one gate of every kind available."""
    acts = action_set(n)
    first = [acts[1], acts[2]] + ([acts[0]] if n >= 2 else [])
    gates = first[: max(length, len(first))]
    while len(gates) < length:
        g = acts[rng.integers(len(acts))]
        if g != gates[-1]:
            gates.append(g)
    return Circuit(n, gates)


def validate_rules(n, length=6, trials=5, seed=0, tol=VALIDATION_TOL):
    """Compare finite differences and every printed rule with GRAPE."""
    rng = np.random.default_rng(seed)
    fd_err = 0.0
    err = {f: 0.0 for f in FAMILIES}
    fb_err = {f: 0.0 for f in FAMILIES}
    eq_err = {f: 0.0 for f in FAMILIES}
    seen = {f: False for f in FAMILIES}
    for _ in range(trials):
        c = random_check_circuit(n, length, rng)
        a = sample_initial_angles(c.n_params, rng)
        # random target from a second random circuit so the cost is generic
        t_circ = random_check_circuit(n, length, rng)
        target = circuit_unitary(t_circ, sample_initial_angles(t_circ.n_params, rng))
        grad = grape_gradient(c, a, target).gradient
        for i in range(c.n_params):
            fam = parameter_family(c, i)
            cost_at = parameter_cost(c, a, target, i)
            fd = finite_difference(cost_at, a[i])
            fd_err = max(fd_err, abs(fd - grad[i]))
            if fam == "MS-theta" and n < 2:
                continue
            seen[fam] = True
            err[fam] = max(err[fam], abs(printed_rule(fam, n).apply(cost_at, a[i]) - grad[i]))
            fb_err[fam] = max(fb_err[fam], abs(fd - grad[i]))
            eq = equidistant_rule_for(fam, n).apply(cost_at, a[i])
            eq_err[fam] = max(eq_err[fam], abs(eq - grad[i]))
    rules = {}
    for fam in FAMILIES:
        if not seen[fam]:
            rules[fam] = RuleCheck(fam, "n/a", float("nan"), False, 0)
            continue
        rule = printed_rule(fam, n)
        passed = err[fam] <= tol
        rules[fam] = RuleCheck(
            fam, rule.name, err[fam], passed, rule.n_evaluations,
            "" if passed else "finite-difference", fb_err[fam], eq_err[fam],
        )
    return GradCheckReport(n, length, trials, seed, fd_err, rules)
