"""Independent chains, optionally spread over worker processes."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from spect_bayes.bayes.nuts import NutsConfig, SampleChain, nuts_sample

THREADS_ENV = "SPECT_BAYES_THREADS"


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_one(args):
    model, config = args
    return nuts_sample(model, config)


def run_chains(model, config: NutsConfig, num_chains: int, max_workers: int | None = None) -> list[SampleChain]:
    """Chain ``k`` uses seed ``config.seed + k``; output does not depend on worker count."""
    if num_chains < 1:
        raise ValueError("num_chains must be >= 1")
    jobs = [(model, replace(config, seed=config.seed + k)) for k in range(num_chains)]
    workers = min(worker_count(max_workers), num_chains)
    if workers == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))
