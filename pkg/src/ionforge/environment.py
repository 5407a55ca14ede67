"""Gate-placement environment with per-step re-optimization and a curriculum.

Each step appends one gate, re-optimizes every angle of the circuit from
fresh random starts and rewards the agent against a moving threshold
``eps_t`` that is lowered toward ``eps_min`` as the agent keeps crossing it.
"""

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .agent import PsAgent, PsConfig, beta_at
from .circuit import Circuit, cost_function, fidelity_cost, format_params, parse_params
from .gatekit import MS, action_set
from .linalg import as_matrix
from .optimizer import OptConfig, restart_minimize

log = logging.getLogger(__name__)

VARIANTS = ("free-placement", "layer-restricted")
LOG_HEADER = "# ionforge-log v1"
LOG_COLUMNS = (
    "agent", "episode", "step", "action", "circuit_len",
    "best_cost", "reward", "eps_t", "elapsed_ms",
)


@dataclass(frozen=True)
class EnvConfig:
    n: int
    target: np.ndarray = field(compare=False, repr=False)
    l_max: int = 20
    e_max: int = 100
    eps_min: float = 1e-2
    curriculum_window: int = 500
    reward_mid: float = 2.0
    reward_full: float = 10.0
    variant: str = "free-placement"
    # agent steps per layer in the layer-restricted variant; None means n + 1
    layer_size: int | None = None
    opt: OptConfig = OptConfig()
    record_timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "target", as_matrix(self.target))
        if self.target.shape != (2**self.n, 2**self.n):
            raise ValueError(f"target shape {self.target.shape} does not match n={self.n}")
        if not 0 < self.eps_min < 1:
            raise ValueError("eps_min must lie in (0, 1)")
        if self.l_max < 1 or self.e_max < 0 or self.curriculum_window < 1:
            raise ValueError("l_max and curriculum_window must be >= 1, e_max >= 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.layer_size is not None and self.layer_size < 1:
            raise ValueError("layer_size must be >= 1")

    @property
    def steps_per_layer(self):
        return self.layer_size or self.n + 1


@dataclass(frozen=True)
class CurriculumState:
    eps_t: float = 1.0
    crossings_since_update: int = 0


def update_curriculum(cs, cfg):
    """Halve the distance from ``eps_t`` to ``eps_min`` and reset the counter."""
    if cs.crossings_since_update < cfg.curriculum_window:
        raise ValueError("curriculum window not yet filled")
    eps = cfg.eps_min + 0.5 * (cs.eps_t - cfg.eps_min)
    return CurriculumState(min(1.0, max(cfg.eps_min, eps)), 0)


def reward_for(cost, eps_t, cfg):
    if cost <= cfg.eps_min:
        return cfg.reward_full
    if cost <= eps_t:
        return cfg.reward_mid
    return 0.0


@dataclass
class StepRecord:
    action: str
    circuit_len: int
    best_cost: float
    reward: float
    eps_t: float
    elapsed_ms: float | None = None


@dataclass
class EpisodeLog:
    episode: int
    steps: list = field(default_factory=list)
    terminal: bool = False
    reason: str = ""

    @property
    def total_reward(self):
        return sum(s.reward for s in self.steps)


class CompileEnv:
    """One environment per agent; all randomness comes from ``rng``."""

    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.rng = rng
        self.curriculum = CurriculumState()
        self.gates = action_set(cfg.n)
        if cfg.variant == "layer-restricted":
            self.allowed = tuple(range(1, cfg.n + 2))
        else:
            self.allowed = tuple(range(cfg.n + 2))
        self.reset()

    @property
    def n_actions(self):
        return len(self.gates)

    def reset(self):
        self.circuit = Circuit(self.cfg.n)
        self.percept = ()
        self.t = 0
        self.done = False
        self.params = np.zeros(0)
        self.cost = fidelity_cost(self.circuit, self.params, self.cfg.target)
        return self.percept

    def _maybe_insert_ms(self):
        # room is kept for the agent's own gate so the length cap holds
        if self.t % self.cfg.steps_per_layer == 0 and len(self.circuit) + 2 <= self.cfg.l_max:
            self.circuit = self.circuit.append(MS)

    def step(self, action):
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        if action not in self.allowed:
            raise ValueError(f"action {action} not in {self.allowed}")
        cfg = self.cfg
        start = time.perf_counter()
        if cfg.variant == "layer-restricted":
            self._maybe_insert_ms()
        self.circuit = self.circuit.append(self.gates[action])
        self.percept = self.percept + (action,)
        self.t += 1
        info = restart_minimize(
            cost_function(self.circuit, cfg.target), self.circuit.n_params, cfg.opt, self.rng
        )
        self.params = info.best_params
        self.cost = min(1.0, max(0.0, info.best_cost))
        eps_t = self.curriculum.eps_t
        reward = reward_for(self.cost, eps_t, cfg)
        if self.cost <= eps_t:
            self.curriculum = replace(
                self.curriculum,
                crossings_since_update=self.curriculum.crossings_since_update + 1,
            )
        self.done = self.cost <= eps_t or self.t >= cfg.l_max or len(self.circuit) >= cfg.l_max
        elapsed = (time.perf_counter() - start) * 1e3 if cfg.record_timing else None
        self.last_record = StepRecord(
            self.gates[action].label, len(self.circuit), self.cost, reward, eps_t, elapsed
        )
        return self.percept, reward, self.done, info

    def end_episode(self):
        if self.curriculum.crossings_since_update >= self.cfg.curriculum_window:
            self.curriculum = update_curriculum(self.curriculum, self.cfg)
            log.info("curriculum threshold lowered to %.6g", self.curriculum.eps_t)

    def layer_restricted_actions(self):
        return layer_restricted_actions(self)


def layer_restricted_actions(env):
    if env.cfg.variant != "layer-restricted":
        raise ValueError("layer_restricted_actions needs the layer-restricted variant")
    return [env.gates[a] for a in env.allowed]


@dataclass
class TrainingResult:
    circuit: Circuit | None
    params: np.ndarray | None
    cost: float
    logs: list
    curriculum_history: list
    agent_index: int = 0

    @property
    def found(self):
        return self.circuit is not None


def _better(length, cost, best):
    # shorter first, then lower cost; equal keeps the earlier discovery
    return best is None or (length, cost) < (best[0], best[1])


def run_training(env, agent, agent_index=0):
    """Run ``e_max`` episodes and keep the shortest solution under ``eps_min``."""
    cfg = env.cfg
    ps_cfg = replace(agent.cfg, total_episodes=max(cfg.e_max - 1, 0))
    best = None
    env.reset()
    if env.cost <= cfg.eps_min:
        best = (0, env.cost, env.circuit, env.params.copy())
    logs, history = [], [env.curriculum.eps_t]
    for e in range(cfg.e_max):
        percept = env.reset()
        beta = beta_at(e, ps_cfg)
        ep = EpisodeLog(e)
        done = False
        while not done:
            a = agent.act(percept, beta, env.allowed)
            percept, reward, done, _ = env.step(a)
            agent.learn(reward)
            ep.steps.append(env.last_record)
            if env.cost <= cfg.eps_min and _better(len(env.circuit), env.cost, best):
                best = (len(env.circuit), env.cost, env.circuit, env.params.copy())
        ep.terminal = True
        ep.reason = "threshold" if env.cost <= env.last_record.eps_t else "l_max"
        agent.end_episode()
        env.end_episode()
        history.append(env.curriculum.eps_t)
        logs.append(ep)
    if best is None:
        return TrainingResult(None, None, float("nan"), logs, history, agent_index)
    return TrainingResult(best[2], best[3], best[1], logs, history, agent_index)


# Ensembles: each member gets its own child seed, so results do not depend
# on the worker count or on completion order.


def _member_rngs(seed, index):
    child = np.random.SeedSequence(seed).spawn(index + 1)[index]
    env_seq, agent_seq = child.spawn(2)
    return np.random.default_rng(env_seq), np.random.default_rng(agent_seq)


def run_member(env_cfg, ps_cfg, seed, index):
    env_rng, agent_rng = _member_rngs(seed, index)
    env = CompileEnv(env_cfg, env_rng)
    agent = PsAgent(env.n_actions, ps_cfg, agent_rng)
    return run_training(env, agent, index)


def run_ensemble(env_cfg, ps_cfg=PsConfig(), n_agents=1, seed=0, workers=1):
    """Train ``n_agents`` independent pairs; results ordered by agent index."""
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")
    args = [(env_cfg, ps_cfg, seed, i) for i in range(n_agents)]
    if workers <= 1 or n_agents == 1:
        return [run_member(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_member, *a) for a in args]
        return [f.result() for f in futures]


def best_of(results):
    best = None
    for r in results:
        if r.found and (best is None or (len(r.circuit), r.cost) < (len(best.circuit), best.cost)):
            best = r
    return best


def _fmt(x):
    return "" if x is None else repr(float(x))


def write_episodes_csv(path, results):
    with open(path, "w", newline="") as fh:
        fh.write(LOG_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in sorted(results, key=lambda r: r.agent_index):
            for ep in r.logs:
                for t, s in enumerate(ep.steps, start=1):
                    w.writerow([
                        r.agent_index, ep.episode, t, s.action, s.circuit_len,
                        _fmt(s.best_cost), _fmt(s.reward), _fmt(s.eps_t), _fmt(s.elapsed_ms),
                    ])


def read_episodes_csv(path):
    """Rows as dicts with numeric fields converted; checks the version line."""
    with open(path, newline="") as fh:
        if fh.readline().strip() != LOG_HEADER:
            raise ValueError(f"{path}: missing '{LOG_HEADER}' header")
        rows = []
        for row in csv.DictReader(fh):
            for k in ("agent", "episode", "step", "circuit_len"):
                row[k] = int(row[k])
            for k in ("best_cost", "reward", "eps_t"):
                row[k] = float(row[k])
            row["elapsed_ms"] = float(row["elapsed_ms"]) if row["elapsed_ms"] else None
            rows.append(row)
    return rows


def summary_dict(results, env_cfg, provenance=None):
    best = best_of(results)
    out = {
        "n": env_cfg.n,
        "eps_min": env_cfg.eps_min,
        "found": best is not None,
        "agents": [
            {
                "agent": r.agent_index,
                "found": r.found,
                "best_length": len(r.circuit) if r.found else None,
                "best_cost": r.cost if r.found else None,
                "final_eps_t": r.curriculum_history[-1],
            }
            for r in results
        ],
    }
    if best is not None:
        out.update(
            best_agent=best.agent_index,
            best_circuit=best.circuit.to_text(),
            best_length=len(best.circuit),
            best_cost=best.cost,
            best_params=[float(x) for x in best.params],
        )
    if provenance:
        out["provenance"] = dict(provenance)
    return out


def write_summary(path, results, env_cfg, provenance=None):
    with open(path, "w") as fh:
        json.dump(summary_dict(results, env_cfg, provenance), fh, indent=2)
        fh.write("\n")


def write_best_circuit(path, result, n):
    """Two lines: gate labels, then the angles in repr form."""
    with open(path, "w") as fh:
        fh.write(result.circuit.to_text() + "\n")
        fh.write(format_params(result.params) + "\n")


def read_best_circuit(path, n):
    with open(path) as fh:
        lines = fh.read().split("\n")
    return Circuit.from_text(n, lines[0]), parse_params(lines[1] if len(lines) > 1 else "")


def moving_average(x, window):
    x = np.asarray(x, dtype=float)
    if len(x) < window:
        return np.array([])
    c = np.cumsum(np.concatenate([[0.0], x]))
    return (c[window:] - c[:-window]) / window

