"""Limited-memory quasi-Newton minimization with random restarts."""

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 40


class OptimizationError(RuntimeError):
    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


@dataclass(frozen=True)
class OptConfig:
    max_iterations: int = 100
    n_restarts: int = 10
    grad_tolerance: float = 1e-8
    memory_pairs: int = 10
    seed: int = 0
    # relative per-iteration decrease below which a run stops; 0 disables
    ftol: float = 0.0
    # stop the restart loop once a restart reaches this cost; None disables
    stop_cost: float | None = None
    # objectives exposing a compiled ``minimize`` (circuit costs) use it
    compiled: bool = True

    def __post_init__(self):
        for name in ("max_iterations", "n_restarts", "memory_pairs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.grad_tolerance <= 0:
            raise ValueError("grad_tolerance must be positive")
        if self.ftol < 0:
            raise ValueError("ftol must be non-negative")


@dataclass
class OptResult:
    best_params: np.ndarray
    best_cost: float
    iterations_used: int
    restart_index: int
    converged: bool
    n_evaluations: int = 0
    diagnostics: list = field(default_factory=list)


def sample_initial_angles(m, rng):
    """Each angle drawn as ``2 pi * N(0, 1)``."""
    return 2 * np.pi * rng.standard_normal(m)


def wrap_angles(a):
    """Map angles into ``(-2 pi, 2 pi]`` for reporting."""
    w = np.fmod(np.asarray(a, dtype=float), 4 * np.pi)
    w = np.where(w > 2 * np.pi, w - 4 * np.pi, w)
    return np.where(w <= -2 * np.pi, w + 4 * np.pi, w)


def _two_loop(grad, s_hist, y_hist, rho_hist):
    q = grad.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        alpha = rho * (s @ q)
        q -= alpha * y
        alphas.append(alpha)
    if s_hist:
        q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
    for (s, y, rho), alpha in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
        beta = rho * (y @ q)
        q += (alpha - beta) * s
    return -q


def minimize(cost_and_grad, x0, cfg=OptConfig()):
    """Minimize from ``x0`` with two-loop L-BFGS and Armijo backtracking.

    Accepted steps never increase the cost, so the result is no worse than
    ``x0``. Objectives with a ``minimize`` method run the identical
    iteration in compiled code unless ``cfg.compiled`` is off. Raises ``FloatingPointError`` if the cost or gradient is not
    finite at an accepted point.
    """
    x = np.array(x0, dtype=float)
    if cfg.compiled and hasattr(cost_and_grad, "minimize"):
        return _compiled_minimize(cost_and_grad, x, cfg)
    f, g = cost_and_grad(x)
    n_eval = 1
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise FloatingPointError("non-finite cost or gradient at the start point")
    if x.size == 0:
        return OptResult(x, float(f), 0, 0, True, n_eval)
    s_hist, y_hist, rho_hist = [], [], []
    converged = bool(np.max(np.abs(g)) <= cfg.grad_tolerance)
    it = 0
    while not converged and it < cfg.max_iterations:
        it += 1
        d = _two_loop(g, s_hist, y_hist, rho_hist)
        slope = g @ d
        if not slope < 0:
            s_hist.clear(), y_hist.clear(), rho_hist.clear()
            d = -g
            slope = -(g @ g)
        step = 1.0 if s_hist else min(1.0, 1.0 / np.max(np.abs(g)))
        for _ in range(MAX_BACKTRACKS):
            x_new = x + step * d
            f_new, g_new = cost_and_grad(x_new)
            n_eval += 1
            if np.isfinite(f_new) and f_new <= f + ARMIJO_C1 * step * slope:
                break
            step *= BACKTRACK
        else:
            log.debug("line search failed at iteration %d", it)
            break
        if not np.all(np.isfinite(g_new)):
            raise FloatingPointError(f"non-finite gradient at iteration {it}")
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            s_hist.append(s), y_hist.append(y), rho_hist.append(1.0 / sy)
            if len(s_hist) > cfg.memory_pairs:
                s_hist.pop(0), y_hist.pop(0), rho_hist.pop(0)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        if np.max(np.abs(g)) <= cfg.grad_tolerance:
            converged = True
        elif cfg.ftol and decrease <= cfg.ftol * max(abs(f), 1.0):
            break
    return OptResult(x, float(f), it, 0, converged, n_eval)


def _compiled_minimize(objective, x0, cfg):
    x, f, it, n_eval, converged, status = objective.minimize(
        x0, cfg, ARMIJO_C1, BACKTRACK, MAX_BACKTRACKS
    )
    if status == 1:
        raise FloatingPointError("non-finite cost or gradient at the start point")
    if status == 2:
        raise FloatingPointError(f"non-finite gradient at iteration {it}")
    return OptResult(x, float(f), int(it), 0, bool(converged), int(n_eval))


def restart_minimize(cost_and_grad, m, cfg=OptConfig(), rng=None):
    """Best of ``cfg.n_restarts`` runs from random ``2 pi N(0, 1)`` starts.

    Start points come from ``rng`` if given, else from ``cfg.seed``; ties in
    cost go to the earlier restart.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    best = None
    diagnostics = []
    n_eval = 0
    for r in range(cfg.n_restarts):
        x0 = sample_initial_angles(m, rng)
        try:
            res = minimize(cost_and_grad, x0, cfg)
        except FloatingPointError as exc:
            diagnostics.append(f"restart {r}: {exc}")
            log.warning("restart %d aborted: %s", r, exc)
            continue
        n_eval += res.n_evaluations
        res.restart_index = r
        if best is None or res.best_cost < best.best_cost:
            best = res
        if cfg.stop_cost is not None and best.best_cost <= cfg.stop_cost:
            break
    if best is None:
        raise OptimizationError("all restarts failed", diagnostics)
    best.n_evaluations = n_eval
    best.diagnostics = diagnostics
    return best
