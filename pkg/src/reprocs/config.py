"""Experiment configuration: a YAML file with ``model``, ``algorithm`` and
``run`` sections.

Unknown keys are rejected, required keys must be present and every default is
written back into the resolved configuration so a run can be reproduced from
that file alone. ``gamma_tiers`` is a list of ``[gamma, count]`` pairs giving
the coefficient magnitude profile of the ``r0`` initial directions.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import yaml

from .model import ConfigError

__all__ = [
    "ConfigError",
    "ModelConfig",
    "AlgorithmConfig",
    "RunConfig",
    "ExperimentConfig",
    "load_config",
    "dump_config",
]

REQUIRED = object()


def _req():
    return field(default=REQUIRED)


def _build(cls, raw, section):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in raw:
            kwargs[f.name] = raw[f.name]
        elif f.default is REQUIRED:
            raise ConfigError(f"missing required key '{section}.{f.name}'")
    return cls(**kwargs)


@dataclass
class ModelConfig:
    n: int = _req()
    t_train: int = _req()
    t_max: int = _req()
    r0: int = _req()
    change_times: list = _req()
    c_new: list = _req()
    gamma_tiers: list = _req()
    gamma_star: float = _req()
    gamma_new: float = _req()
    ramp_v: float = _req()
    ramp_alpha: int = _req()
    s: int = _req()
    delta: int | None = _req()
    c_old: list | None = None
    delete_columns: list | None = None
    ramp_steps: list | None = None
    mag_range: list = field(default_factory=lambda: [2.0, 3.0])
    support_mode: str = "correlated"
    noise_amp: float = 1e-3

    def __post_init__(self):
        for key in ("n", "t_train", "t_max", "r0", "ramp_alpha", "s"):
            setattr(self, key, int(getattr(self, key)))
        for key in ("gamma_star", "gamma_new", "ramp_v", "noise_amp"):
            setattr(self, key, float(getattr(self, key)))
        self.change_times = [int(t) for t in self.change_times]
        self.c_new = [int(c) for c in self.c_new]
        J = len(self.change_times)
        if self.c_old is None:
            self.c_old = [0] * J
        if self.delete_columns is None:
            self.delete_columns = [[] for _ in range(J)]
        self.c_old = [int(c) for c in self.c_old]
        self.delete_columns = [[int(i) for i in cols] for cols in self.delete_columns]
        if self.ramp_steps is not None:
            self.ramp_steps = [int(k) for k in self.ramp_steps]
        if self.delta is not None:
            self.delta = int(self.delta)
        self.mag_range = [float(v) for v in self.mag_range]
        tiers = []
        for pair in self.gamma_tiers:
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ConfigError("gamma_tiers entries must be [gamma, count] pairs")
            tiers.append([float(pair[0]), int(pair[1])])
        self.gamma_tiers = tiers
        if sum(c for _, c in tiers) != self.r0:
            raise ConfigError(f"gamma_tiers counts sum to {sum(c for _, c in tiers)}, r0={self.r0}")
        for key in ("c_new", "c_old", "delete_columns"):
            if len(getattr(self, key)) != J:
                raise ConfigError(f"model.{key} needs one entry per change time ({J})")
        if self.t_max <= self.t_train:
            raise ConfigError("t_max must exceed t_train")
        if any(t > self.t_max for t in self.change_times):
            raise ConfigError("change times must not exceed t_max")

    def gamma_profile(self):
        return [g for g, c in self.gamma_tiers for _ in range(c)]

    @property
    def ranks(self):
        r = [self.r0]
        for cn, co in zip(self.c_new, self.c_old):
            r.append(r[-1] + cn - co)
        return r


@dataclass
class AlgorithmConfig:
    xi: float = _req()
    omega: float = _req()
    alpha: int = _req()
    K: int = _req()
    variant: str = "reprocs"
    alpha_tilde: int | None = None
    cluster_sizes: list | None = None
    tol: float = 1e-8
    max_iter: int = 5000
    max_outer: int = 60

    def __post_init__(self):
        self.xi = float(self.xi)
        self.omega = float(self.omega)
        self.alpha = int(self.alpha)
        self.K = int(self.K)
        self.tol = float(self.tol)
        self.max_iter = int(self.max_iter)
        self.max_outer = int(self.max_outer)
        if self.variant not in ("reprocs", "reprocs-cpca"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.alpha_tilde is not None:
            self.alpha_tilde = int(self.alpha_tilde)
        if self.cluster_sizes is not None:
            self.cluster_sizes = [[int(c) for c in sizes] for sizes in self.cluster_sizes]


@dataclass
class RunConfig:
    seeds: list = field(default_factory=lambda: [0])
    out: str = "out"
    slow: bool = False
    workers: int = 1
    quantiles: list = field(default_factory=lambda: [0.1, 0.5, 0.9])

    def __post_init__(self):
        if isinstance(self.seeds, int):
            self.seeds = list(range(self.seeds))
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ConfigError("need at least one seed")
        self.workers = max(1, int(self.workers))
        self.slow = bool(self.slow)
        self.quantiles = [float(q) for q in self.quantiles]


@dataclass
class ExperimentConfig:
    model: ModelConfig
    algorithm: AlgorithmConfig
    run: RunConfig = field(default_factory=RunConfig)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a mapping")
        unknown = sorted(set(raw) - {"model", "algorithm", "run"})
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
        for key in ("model", "algorithm"):
            if key not in raw:
                raise ConfigError(f"missing required key '{key}'")
        try:
            cfg = cls(
                model=_build(ModelConfig, raw["model"], "model"),
                algorithm=_build(AlgorithmConfig, raw["algorithm"], "algorithm"),
                run=_build(RunConfig, raw.get("run"), "run"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self):
        m, a = self.model, self.algorithm
        if a.variant == "reprocs-cpca":
            if a.alpha_tilde is None or a.cluster_sizes is None:
                raise ConfigError("variant reprocs-cpca needs algorithm.alpha_tilde and algorithm.cluster_sizes")
            ranks = m.ranks
            for j, sizes in enumerate(a.cluster_sizes, start=1):
                if sum(sizes) != ranks[j]:
                    raise ConfigError(f"cluster_sizes[{j - 1}] sums to {sum(sizes)} but r_{j} = {ranks[j]}")
        return self

    def params(self):
        """The :class:`reprocs.subspace.ReprocsParams` for this experiment."""
        from .subspace import ReprocsParams

        a = self.algorithm
        return ReprocsParams(
            xi=a.xi,
            omega=a.omega,
            alpha=a.alpha,
            K=a.K,
            change_times=self.model.change_times,
            c_new=self.model.c_new,
            alpha_tilde=a.alpha_tilde,
            cluster_sizes=a.cluster_sizes,
            tol=a.tol,
            max_iter=a.max_iter,
            max_outer=a.max_outer,
        )

    def to_dict(self):
        return {
            "model": dataclasses.asdict(self.model),
            "algorithm": dataclasses.asdict(self.algorithm),
            "run": dataclasses.asdict(self.run),
        }

    def replace(self, **sections):
        """Copy with per-section overrides, e.g. ``replace(model={'delta': None})``."""
        raw = self.to_dict()
        for key, upd in sections.items():
            raw[key].update(upd)
        return ExperimentConfig.from_dict(raw)


def load_config(path):
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return ExperimentConfig.from_dict(raw)


def dump_config(cfg, path):
    """Write the fully resolved configuration (all defaults filled in)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False, default_flow_style=None)
    os.replace(tmp, path)
