"""No-U-Turn sampler with multinomial trajectory sampling and dual-averaging warmup.

Targets expose ``dim``, ``initial_point()``, ``logp_and_grad(x)`` on the
unconstrained scale and ``constrain(x)`` to map draws back to the quantity of
interest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from spect_bayes import io
from spect_bayes.bayes.hmc import ChainState, leapfrog

log = logging.getLogger(__name__)

MAX_ENERGY_ERROR = 1000.0


class SamplerError(RuntimeError):
    """Sampling could not proceed; ``diagnostics`` carries the details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class NutsConfig:
    num_samples: int = 1000
    num_warmup: int = 1000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0
    initial_step_size: float | str = "auto"

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.num_warmup < 1:
            raise ValueError("num_warmup must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be >= 1")
        if self.initial_step_size != "auto" and not float(self.initial_step_size) > 0:
            raise ValueError("initial_step_size must be positive or 'auto'")


@dataclass
class SampleChain:
    samples: np.ndarray
    step_size_trace: np.ndarray
    divergence_count: int
    accept_stat_mean: float
    seed: int = 0
    step_size: float = float("nan")
    warmup_divergences: int = 0
    tree_depths: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    num_leapfrog: int = 0
    averaged_step_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    warmup_leapfrog: int = 0

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_voxels(self) -> int:
        return self.samples.shape[1]

    def save(self, path: str | Path):
        stem = Path(path).with_suffix("")
        raw, side = io.write_raw(
            stem,
            self.samples,
            {
                "num_samples": self.num_samples,
                "num_voxels": self.num_voxels,
                "seed": self.seed,
                "divergence_count": self.divergence_count,
                "accept_stat_mean": self.accept_stat_mean,
                "step_size": self.step_size,
                "order": "sample-major",
            },
        )
        avg = self.averaged_step_trace
        if avg.size != self.step_size_trace.size:
            avg = np.full(self.step_size_trace.size, np.nan)
        trace = io.write_csv(
            stem.parent / f"{stem.name}_step_size.csv",
            ["warmup_iteration", "step_size", "averaged_step_size"],
            zip(range(self.step_size_trace.size), self.step_size_trace.tolist(), avg.tolist()),
        )
        return raw, side, trace

    @classmethod
    def load(cls, path: str | Path) -> "SampleChain":
        values, meta = io.read_raw(path)
        stem = Path(path).with_suffix("")
        _, rows = io.read_csv(stem.parent / f"{stem.name}_step_size.csv")
        return cls(
            samples=values.reshape(meta["num_samples"], meta["num_voxels"]),
            step_size_trace=np.array([float(r[1]) for r in rows]),
            averaged_step_trace=np.array([float(r[2]) for r in rows]),
            divergence_count=meta["divergence_count"],
            accept_stat_mean=meta["accept_stat_mean"],
            seed=meta["seed"],
            step_size=meta.get("step_size", float("nan")),
        )


class DualAveraging:
    """Nesterov dual averaging of ``log(step_size)`` toward a target acceptance statistic."""

    def __init__(self, step_size: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * step_size)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.t = 0
        self.h_bar = 0.0
        self.log_step = math.log(step_size)
        self.log_step_avg = 0.0

    def update(self, accept_stat: float) -> float:
        self.t += 1
        t = self.t
        w = 1.0 / (t + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_stat)
        self.log_step = self.mu - math.sqrt(t) / self.gamma * self.h_bar
        eta = t ** (-self.kappa)
        self.log_step_avg = eta * self.log_step + (1.0 - eta) * self.log_step_avg
        return math.exp(self.log_step)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_step_avg)


def find_reasonable_step_size(state: ChainState, grad_fn, rng: np.random.Generator, start: float = 1.0) -> float:
    """Double or halve the step until one leapfrog step's acceptance crosses 1/2."""
    eps = start
    p = rng.standard_normal(state.position.shape)
    s0 = ChainState(state.position, p, state.log_density, state.gradient)
    h0 = s0.hamiltonian

    def log_ratio(e):
        s1 = leapfrog(s0, e, grad_fn)
        return h0 - s1.hamiltonian if s1.finite else -np.inf

    lr = log_ratio(eps)
    direction = 1.0 if lr > math.log(0.5) else -1.0
    for _ in range(100):
        if direction * lr <= direction * math.log(0.5):
            break
        eps *= 2.0**direction
        lr = log_ratio(eps)
    return eps


@dataclass
class _Tree:
    first: ChainState  # end adjacent to the existing trajectory
    last: ChainState  # outermost end
    proposal: ChainState
    log_weight: float
    turning: bool
    diverging: bool
    accept_sum: float
    n_leapfrog: int


def _no_u_turn(minus: ChainState, plus: ChainState) -> bool:
    dx = plus.position - minus.position
    return bool(dx @ minus.momentum >= 0 and dx @ plus.momentum >= 0)


def _ends(tree_a_state: ChainState, tree_b_state: ChainState, direction: int):
    # returns (minus, plus) in trajectory time for a span from a to b built in ``direction``
    return (tree_b_state, tree_a_state) if direction < 0 else (tree_a_state, tree_b_state)


class _Builder:
    def __init__(self, grad_fn, step_size: float, h0: float, rng: np.random.Generator):
        self.grad_fn = grad_fn
        self.step_size = step_size
        self.h0 = h0
        self.rng = rng

    def build(self, state: ChainState, direction: int, depth: int) -> _Tree:
        if depth == 0:
            new = leapfrog(state, direction * self.step_size, self.grad_fn)
            if new.finite:
                delta = new.hamiltonian - self.h0
                diverging = not np.isfinite(delta) or delta > MAX_ENERGY_ERROR
            else:
                delta, diverging = np.inf, True
            accept = 0.0 if diverging and not np.isfinite(delta) else min(1.0, math.exp(min(0.0, -delta)))
            return _Tree(new, new, new, -delta, False, diverging, accept, 1)

        inner = self.build(state, direction, depth - 1)
        if inner.turning or inner.diverging:
            return inner
        outer = self.build(inner.last, direction, depth - 1)
        log_w = np.logaddexp(inner.log_weight, outer.log_weight)
        tree = _Tree(
            first=inner.first,
            last=outer.last,
            proposal=inner.proposal,
            log_weight=log_w,
            turning=outer.turning,
            diverging=outer.diverging,
            accept_sum=inner.accept_sum + outer.accept_sum,
            n_leapfrog=inner.n_leapfrog + outer.n_leapfrog,
        )
        if outer.turning or outer.diverging:
            return tree
        if self.rng.random() < math.exp(outer.log_weight - log_w):
            tree.proposal = outer.proposal
        minus, plus = _ends(tree.first, tree.last, direction)
        tree.turning = not _no_u_turn(minus, plus)
        return tree


def nuts_transition(state: ChainState, step_size: float, grad_fn, rng: np.random.Generator, max_depth: int):
    """One NUTS iteration from ``state`` (momentum is resampled).

    Returns ``(new_state, accept_stat, diverged, depth, n_leapfrog)``.
    """
    p0 = rng.standard_normal(state.position.shape)
    start = ChainState(state.position, p0, state.log_density, state.gradient)
    h0 = start.hamiltonian
    builder = _Builder(grad_fn, step_size, h0, rng)
    minus = plus = start
    sample = start
    log_w = 0.0
    accept_sum, n_leap = 0.0, 0
    diverged = False
    depth = 0
    while depth < max_depth:
        direction = 1 if rng.random() < 0.5 else -1
        edge = plus if direction > 0 else minus
        sub = builder.build(edge, direction, depth)
        accept_sum += sub.accept_sum
        n_leap += sub.n_leapfrog
        depth += 1
        if sub.diverging:
            diverged = True
            break
        if sub.turning:
            break
        # biased progressive sampling favours the newer subtree
        if rng.random() < math.exp(min(0.0, sub.log_weight - log_w)):
            sample = sub.proposal
        log_w = np.logaddexp(log_w, sub.log_weight)
        if direction > 0:
            plus = sub.last
        else:
            minus = sub.last
        if not _no_u_turn(minus, plus):
            break
    return sample, accept_sum / max(n_leap, 1), diverged, depth, n_leap


def nuts_sample(model, config: NutsConfig, init=None) -> SampleChain:
    """Adapt the step size for ``num_warmup`` iterations, then draw ``num_samples``.

    Warmup draws are discarded. Samples are returned on the constrained scale
    via ``model.constrain``.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _sample(model, config, init)


def _sample(model, config: NutsConfig, init) -> SampleChain:
    rng = np.random.default_rng(config.seed)
    grad_fn = model.logp_and_grad
    x0 = model.initial_point() if init is None else np.asarray(init, dtype=np.float64)
    logp, grad = grad_fn(x0)
    if not (np.isfinite(logp) and np.all(np.isfinite(grad))):
        raise ValueError("initial point has non-finite log density or gradient")
    state = ChainState(x0.copy(), np.zeros_like(x0), float(logp), grad)

    if config.initial_step_size == "auto":
        step = find_reasonable_step_size(state, grad_fn, rng)
    else:
        step = float(config.initial_step_size)
    adapt = DualAveraging(step, config.target_accept)

    trace = np.empty(config.num_warmup)
    avg_trace = np.empty(config.num_warmup)
    warm_div, warm_leap = 0, 0
    for i in range(config.num_warmup):
        trace[i] = step
        state, acc, div, _, n_leap = nuts_transition(state, step, grad_fn, rng, config.max_tree_depth)
        warm_div += div
        warm_leap += n_leap
        step = adapt.update(acc)
        avg_trace[i] = adapt.final_step_size
    if warm_div == config.num_warmup:
        raise SamplerError(
            "every warmup iteration diverged",
            {"warmup_divergences": warm_div, "last_step_size": step, "log_density": state.log_density},
        )
    step = adapt.final_step_size

    draws = np.empty((config.num_samples, x0.size))
    depths = np.empty(config.num_samples, dtype=np.int64)
    divs, acc_total, n_total = 0, 0.0, 0
    for i in range(config.num_samples):
        state, acc, div, depth, n_leap = nuts_transition(state, step, grad_fn, rng, config.max_tree_depth)
        draws[i] = model.constrain(state.position)
        depths[i] = depth
        divs += div
        acc_total += acc
        n_total += n_leap
    if divs:
        log.warning("%d divergent transitions after warmup (seed %d)", divs, config.seed)
    return SampleChain(
        samples=draws,
        step_size_trace=trace,
        divergence_count=divs,
        accept_stat_mean=acc_total / config.num_samples,
        seed=config.seed,
        step_size=step,
        warmup_divergences=warm_div,
        tree_depths=depths,
        num_leapfrog=n_total,
        averaged_step_trace=avg_trace,
        warmup_leapfrog=warm_leap,
    )


def config_dict(config: NutsConfig) -> dict:
    return asdict(config)
