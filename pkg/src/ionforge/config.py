"""Experiment files: TOML with one table per component.

Schema (every key optional except ``target.kind`` and ``target.n``)::

    [target]        kind, n, beta_ucc, h, J, delta, tau, path
    [environment]   l_max, e_max, eps_min, curriculum_window, reward_mid,
                    reward_full, variant, layer_size, record_timing
    [agent]         gamma, eta, beta_start, beta_end
    [optimizer]     max_iterations, n_restarts, grad_tolerance, memory_pairs,
                    seed, ftol, stop_cost
    [run]           n_agents, seed, workers, out
    [layer_search]  l_ms_max, eps, budget
    [provenance]    free-form; recorded in summaries, never read

Unknown tables or keys are errors, reported with their line number.
"""

import os
import re
import sys
from dataclasses import dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agent import PsConfig
from .environment import EnvConfig
from .optimizer import OptConfig
from .targets import TargetSpec, build_target

OUT_ENV_VAR = "IONFORGE_OUT"
DEFAULT_OUT = "runs"

_TARGET_PARAMS = ("beta_ucc", "h", "J", "delta", "tau")
_ENV_KEYS = (
    "l_max", "e_max", "eps_min", "curriculum_window", "reward_mid",
    "reward_full", "variant", "layer_size", "record_timing",
)
_SECTIONS = {
    "target": ("kind", "n", "path") + _TARGET_PARAMS,
    "environment": _ENV_KEYS,
    "agent": tuple(f.name for f in fields(PsConfig) if f.name != "total_episodes"),
    "optimizer": tuple(f.name for f in fields(OptConfig)),
    "run": ("n_agents", "seed", "workers", "out"),
    "layer_search": ("l_ms_max", "eps", "budget"),
    "provenance": None,
}


class ConfigError(ValueError):
    def __init__(self, message, path="<config>", line=None):
        where = f"{path}:{line}" if line else path
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class LayerSearchConfig:
    l_ms_max: int = 3
    eps: float = 1e-2
    budget: int = 100_000


@dataclass(frozen=True)
class RunConfig:
    target: TargetSpec
    env: dict
    agent: PsConfig = PsConfig()
    opt: OptConfig = OptConfig()
    n_agents: int = 1
    seed: int = 0
    workers: int = 1
    out: str = ""
    layer_search: LayerSearchConfig = LayerSearchConfig()
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_agents < 1 or self.workers < 1:
            raise ValueError("n_agents and workers must be >= 1")

    def env_config(self):
        return EnvConfig(self.target.n, build_target(self.target), opt=self.opt, **self.env)

    def out_dir(self, override=None):
        return override or self.out or os.environ.get(OUT_ENV_VAR, DEFAULT_OUT)


def _line_of(text, section, key=None):
    """Best-effort line number of a table header or of a key inside it."""
    lines = text.splitlines()
    start = None
    for i, line in enumerate(lines):
        if re.match(rf"\s*\[{re.escape(section)}\]\s*(#.*)?$", line):
            start = i
            if key is None:
                return i + 1
            continue
        if start is not None and key is not None:
            if re.match(r"\s*\[", line):
                break
            if re.match(rf"\s*{re.escape(key)}\s*=", line):
                return i + 1
    return start + 1 if start is not None else None


def parse_config(text, path="<config>"):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc), path) from exc
    for section, value in raw.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown table [{section}]", path, _line_of(text, section))
        if not isinstance(value, dict):
            raise ConfigError(f"'{section}' must be a table", path)
        allowed = _SECTIONS[section]
        if allowed is None:
            continue
        for key in value:
            if key not in allowed:
                raise ConfigError(
                    f"unknown key '{key}' in [{section}]", path, _line_of(text, section, key)
                )
    if "target" not in raw or "kind" not in raw["target"] or "n" not in raw["target"]:
        raise ConfigError("[target] needs 'kind' and 'n'", path, _line_of(text, "target"))

    def build(section, fn):
        try:
            return fn(raw.get(section, {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}", path, _line_of(text, section)) from exc

    def target(t):
        params = {k: float(t[k]) for k in _TARGET_PARAMS if k in t}
        return TargetSpec(t["kind"], int(t["n"]), params, t.get("path", ""))

    run = raw.get("run", {})
    return RunConfig(
        target=build("target", target),
        env=build("environment", dict),
        agent=build("agent", lambda d: PsConfig(**d)),
        opt=build("optimizer", lambda d: OptConfig(**d)),
        n_agents=int(run.get("n_agents", 1)),
        seed=int(run.get("seed", 0)),
        workers=int(run.get("workers", 1)),
        out=str(run.get("out", "")),
        layer_search=build("layer_search", lambda d: LayerSearchConfig(**d)),
        provenance=dict(raw.get("provenance", {})),
    )


def load_config(path):
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode()
    except OSError as exc:
        raise ConfigError(str(exc), str(path)) from exc
    cfg = parse_config(text, str(path))
    if cfg.target.path and not os.path.isabs(cfg.target.path):
        # matrix files are looked up next to the config file
        full = os.path.join(os.path.dirname(os.path.abspath(path)), cfg.target.path)
        cfg = replace(cfg, target=replace(cfg.target, path=full))
    # environment values are only checked once the target is built
    try:
        cfg.env_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), str(path), _line_of(text, "environment")) from exc
    return cfg
