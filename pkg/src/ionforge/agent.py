"""Tabular projective-simulation agent.

The episodic memory maps a percept (the tuple of actions taken so far in
the episode) to one h-value and one glow value per action. Percepts are
stored on first use; unseen ones behave as ``h = 1, g = 0``.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PsConfig:
    gamma: float = 0.001
    eta: float = 0.1
    beta_start: float = 1e-3
    beta_end: float = 1.0
    total_episodes: int = 1

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if self.beta_start > self.beta_end:
            raise ValueError("beta_start must not exceed beta_end")
        if self.total_episodes < 0:
            raise ValueError("total_episodes must be non-negative")


def beta_at(episode, cfg):
    """Inverse temperature on a linear schedule over ``0..total_episodes``."""
    if not 0 <= episode <= cfg.total_episodes:
        raise ValueError(f"episode {episode} outside 0..{cfg.total_episodes}")
    if cfg.total_episodes == 0:
        return cfg.beta_end
    frac = episode / cfg.total_episodes
    return cfg.beta_start + (cfg.beta_end - cfg.beta_start) * frac


def softmax(x):
    z = x - np.max(x)
    e = np.exp(z)
    return e / e.sum()


class Ecm:
    """Percept -> per-action (h, g) table backed by two growing arrays."""

    def __init__(self, n_actions):
        self.n_actions = int(n_actions)
        self._rows = {}
        self._h = np.ones((16, self.n_actions))
        self._g = np.zeros((16, self.n_actions))

    def __len__(self):
        return len(self._rows)

    def __contains__(self, percept):
        return tuple(percept) in self._rows

    def percepts(self):
        return list(self._rows)

    def _row(self, percept, create):
        key = tuple(percept)
        row = self._rows.get(key)
        if row is None and create:
            row = len(self._rows)
            if row == len(self._h):
                self._h = np.vstack([self._h, np.ones_like(self._h)])
                self._g = np.vstack([self._g, np.zeros_like(self._g)])
            self._rows[key] = row
        return row

    def h(self, percept):
        row = self._row(percept, False)
        if row is None:
            return np.ones(self.n_actions)
        return self._h[row].copy()

    def g(self, percept):
        row = self._row(percept, False)
        if row is None:
            return np.zeros(self.n_actions)
        return self._g[row].copy()

    def set_edge(self, percept, action, h=None, g=None):
        row = self._row(percept, True)
        if h is not None:
            self._h[row, action] = h
        if g is not None:
            self._g[row, action] = g

    def clear_glow(self):
        self._g[:] = 0.0

    def stored(self):
        n = len(self._rows)
        return self._h[:n], self._g[:n]

    # snapshot format: one row per stored edge, floats in repr form so a
    # reload reproduces the table bit for bit

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"# ionforge-ecm v1 n_actions={self.n_actions}\n")
            fh.write("percept\taction\th\tg\n")
            for key, row in self._rows.items():
                label = ".".join(map(str, key)) or "-"
                for a in range(self.n_actions):
                    h, g = float(self._h[row, a]), float(self._g[row, a])
                    fh.write(f"{label}\t{a}\t{h!r}\t{g!r}\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().split()
            if header[:3] != ["#", "ionforge-ecm", "v1"]:
                raise ValueError(f"{path}: not an ECM snapshot")
            n_actions = int(header[3].split("=")[1])
            ecm = cls(n_actions)
            fh.readline()
            for lineno, line in enumerate(fh, start=3):
                try:
                    label, action, h, g = line.rstrip("\n").split("\t")
                    key = () if label == "-" else tuple(int(x) for x in label.split("."))
                    ecm.set_edge(key, int(action), float(h), float(g))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
        return ecm


def policy(ecm, percept, beta):
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return softmax(beta * ecm.h(percept))


def sample_action(ecm, percept, beta, rng, allowed=None):
    """Draw an action index; ``allowed`` restricts to a subset of indices."""
    p = policy(ecm, percept, beta)
    if allowed is not None:
        mask = np.zeros_like(p)
        mask[list(allowed)] = 1.0
        p = p * mask
        p /= p.sum()
    cdf = np.cumsum(p)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, len(p) - 1)


def mark_traversed(ecm, percept, action):
    ecm.set_edge(percept, action, g=1.0)


def update(ecm, reward, cfg):
    """One learning step over every stored edge.

    ``h <- h - gamma (h - 1) + g R`` using the current glow, then every
    glow decays by ``1 - eta``. Edges traversed next are marked afterwards.
    """
    h, g = ecm.stored()
    h -= cfg.gamma * (h - 1.0)
    if reward:
        h += g * reward
    g *= 1.0 - cfg.eta


class PsAgent:
    """Agent wrapper: one memory, one config, one RNG stream."""

    def __init__(self, n_actions, cfg, rng):
        self.ecm = Ecm(n_actions)
        self.cfg = cfg
        self.rng = rng

    def act(self, percept, beta, allowed=None):
        a = sample_action(self.ecm, percept, beta, self.rng, allowed)
        mark_traversed(self.ecm, percept, a)
        return a

    def learn(self, reward):
        update(self.ecm, reward, self.cfg)

    def end_episode(self):
        """Glow does not carry across episodes."""
        self.ecm.clear_glow()
