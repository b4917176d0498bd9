"""Experiment configuration: one JSON document, every field optional."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from spect_bayes.bayes.nuts import NutsConfig
from spect_bayes.iterative import IterativeConfig

EXPERIMENTS = ("point_source_sweep", "algorithm_comparison", "shepp_logan", "custom")
BUDGET_MODES = ("matched", "fixed")
PHANTOMS = ("point_source", "uniform", "shepp_logan")

DEFAULT_SAMPLER = {"num_samples": 500, "num_warmup": 500}


class ConfigError(ValueError):
    """Configuration is malformed or inconsistent; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one experiment run.

    ``step_angles_deg`` drives the point-source sweep; the single
    ``step_angle_deg`` is used by the comparison, Shepp-Logan and custom runs.
    ``budget_mode="matched"`` gives MLEM and MAP one iteration per
    log-density gradient the sampler evaluated (each costs one forward and one
    adjoint pass); ``"fixed"`` uses ``iterative.max_iters``. ``phantom`` only
    applies to the custom experiment. ``phantom_scale`` multiplies the
    Shepp-Logan intensities (activity units are arbitrary; 1 keeps the
    canonical table).
    """

    experiment: str = "point_source_sweep"
    dims: tuple[int, int, int] = (8, 8, 8)
    pitch_mm: float = 1.0
    step_angles_deg: tuple[float, ...] = (10.0, 5.0, 2.0)
    step_angle_deg: float = 5.0
    coverage_deg: float = 180.0
    comparison_dims: tuple[tuple[int, int, int], ...] = ((4, 4, 4), (8, 8, 8), (16, 16, 16))
    budget_mode: str = "matched"
    phantom: str = "point_source"
    point_value: float = 10.0
    phantom_scale: float = 1.0
    sigma_like: float = 1.0
    prior_mu: float = 1.0
    prior_sigma: float = 5.0
    num_chains: int = 2
    num_bins: int = 50
    sampler: NutsConfig = field(default_factory=lambda: NutsConfig(**DEFAULT_SAMPLER))
    iterative: IterativeConfig = field(default_factory=IterativeConfig)
    output_dir: str = "runs/default"

    @property
    def seed(self) -> int:
        return self.sampler.seed

    def with_overrides(self, experiment=None, seed=None, output_dir=None) -> "ExperimentConfig":
        cfg = self
        if experiment is not None:
            cfg = replace(cfg, experiment=experiment)
        if seed is not None:
            cfg = replace(cfg, sampler=replace(cfg.sampler, seed=int(seed)))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        validate(cfg)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["step_angles_deg"] = list(self.step_angles_deg)
        d["comparison_dims"] = [list(x) for x in self.comparison_dims]
        return d


def _triple(v, name, errors):
    try:
        t = tuple(int(x) for x in v)
    except (TypeError, ValueError):
        errors.append(f"{name} must be three integers")
        return None
    if len(t) != 3 or any(float(a) != float(b) for a, b in zip(t, v)):
        errors.append(f"{name} must be three integers")
        return None
    if any(x < 1 for x in t):
        errors.append(f"{name} entries must be >= 1, got {list(t)}")
    return t


def _sub(cls, raw, name, base, errors):
    if raw is None:
        return base
    if not isinstance(raw, dict):
        errors.append(f"{name} must be an object")
        return base
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        errors.append(f"unknown {name} fields: {unknown}")
        return base
    try:
        return replace(base, **raw)
    except (TypeError, ValueError) as e:
        errors.append(f"{name}: {e}")
        return base


def from_dict(data: dict) -> ExperimentConfig:
    """Build and validate a config; raises ``ConfigError`` listing every problem."""
    if not isinstance(data, dict):
        raise ConfigError(["config must be a JSON object"])
    errors: list[str] = []
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        errors.append(f"unknown fields: {unknown}")
    base = ExperimentConfig()
    kw = {k: v for k, v in data.items() if k in known and k not in ("sampler", "iterative")}
    if "dims" in kw:
        kw["dims"] = _triple(kw["dims"], "dims", errors)
    if "comparison_dims" in kw:
        raw = kw["comparison_dims"]
        if not isinstance(raw, list) or not raw:
            errors.append("comparison_dims must be a non-empty list")
            kw.pop("comparison_dims")
        else:
            kw["comparison_dims"] = tuple(_triple(d, "comparison_dims entry", errors) for d in raw)
    if "step_angles_deg" in kw:
        raw = kw["step_angles_deg"]
        if not isinstance(raw, list) or not raw:
            errors.append("step_angles_deg must be a non-empty list")
            kw.pop("step_angles_deg")
        else:
            kw["step_angles_deg"] = tuple(float(a) for a in raw)
    kw["sampler"] = _sub(NutsConfig, data.get("sampler"), "sampler", base.sampler, errors)
    kw["iterative"] = _sub(IterativeConfig, data.get("iterative"), "iterative", base.iterative, errors)
    if errors:
        raise ConfigError(errors)
    try:
        cfg = replace(base, **kw)
    except TypeError as e:
        raise ConfigError([str(e)]) from None
    validate(cfg)
    return cfg


def load(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError([f"{path}: invalid JSON ({e})"]) from None
    return from_dict(data)


def _writable(path: Path) -> bool:
    p = path
    while not p.exists():
        if p.parent == p:
            return False
        p = p.parent
    return p.is_dir() and os.access(p, os.W_OK)


def validate(cfg: ExperimentConfig) -> None:
    errors = []
    if cfg.experiment not in EXPERIMENTS:
        errors.append(f"experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    for name, dims in [("dims", cfg.dims)] + [("comparison_dims", d) for d in cfg.comparison_dims]:
        if dims is None or len(dims) != 3 or any(int(x) < 1 for x in dims):
            errors.append(f"{name} entries must be >= 1, got {dims}")
    uses_sl = cfg.experiment == "shepp_logan" or (cfg.experiment == "custom" and cfg.phantom == "shepp_logan")
    if uses_sl and cfg.dims and min(cfg.dims) < 8:
        errors.append("the Shepp-Logan phantom needs dims >= 8 on every axis")
    if not cfg.pitch_mm > 0:
        errors.append("pitch_mm must be positive")
    for a in (*cfg.step_angles_deg, cfg.step_angle_deg):
        if not 0 < a <= cfg.coverage_deg:
            errors.append(f"step angle {a} must lie in (0, coverage_deg]")
    if not 0 < cfg.coverage_deg <= 360:
        errors.append("coverage_deg must lie in (0, 360]")
    if cfg.phantom not in PHANTOMS:
        errors.append(f"phantom must be one of {PHANTOMS}")
    if cfg.budget_mode not in BUDGET_MODES:
        errors.append(f"budget_mode must be one of {BUDGET_MODES}")
    for name in ("point_value", "phantom_scale", "sigma_like", "prior_mu", "prior_sigma"):
        if not getattr(cfg, name) > 0:
            errors.append(f"{name} must be positive")
    if cfg.num_chains < 1:
        errors.append("num_chains must be >= 1")
    if cfg.num_bins < 1:
        errors.append("num_bins must be >= 1")
    if cfg.sampler.num_samples * cfg.num_chains < 2:
        errors.append("need at least two posterior draws in total for variances")
    if not _writable(Path(cfg.output_dir)):
        errors.append(f"output_dir {cfg.output_dir!r} is not writable")
    if errors:
        raise ConfigError(errors)
