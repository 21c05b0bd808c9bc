"""The seeded mixed-kind corpus used by the acceptance suite and calibration."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import RunConfig
from .pipeline import RunMetrics, run_pipeline

FORCED_FRACTION = 0.3
MAX_N = 4000


def _forced(rng: np.random.Generator, seed: int) -> RunConfig:
    pick = rng.random()
    if pick < 0.45:
        size = int(rng.choice([64, 96, 128, 192, 256]))
        blobs = int(rng.integers(2, min(6, MAX_N // size) + 1))
        inst = {"blobs": blobs, "size": size, "ext": float(rng.choice([0, 4, 8, 12, 16, 24])),
                "p_in": float(rng.choice([0.97, 0.98, 0.99, 1.0])),
                "sparse": int(rng.choice([0, 100, 400])), "sparse_p": float(rng.uniform(0.01, 0.05))}
        return RunConfig(seed=seed, kind="clique-blobs", instance=inst, forced_phase=True)
    if pick < 0.7:
        # non-cabal regime: external degree 2ℓ at |K| = 128
        inst = {"blobs": int(rng.integers(2, 7)), "size": 128, "ext": 16.0, "p_in": 0.99,
                "sparse": int(rng.choice([0, 200]))}
        return RunConfig(seed=seed, kind="clique-blobs", instance=inst, forced_phase=True)
    n = int(rng.integers(500, 3001))
    return RunConfig(seed=seed, kind="gnp", instance={"n": n, "p": float(rng.uniform(40, 120) / n)},
                     forced_phase=True)


def _plain(rng: np.random.Generator, seed: int) -> RunConfig:
    kind = rng.choice(["gnp", "gnp", "gnp", "cycle", "path", "power", "clusters", "lb-gadget"])
    if kind == "gnp":
        n = int(rng.integers(10, MAX_N + 1))
        inst = {"n": n, "p": float(rng.uniform(1, 24) / max(n, 2))}
    elif kind in ("cycle", "path"):
        inst = {"n": int(rng.integers(3, MAX_N + 1))}
    elif kind == "power":
        if rng.random() < 0.5:
            inst = {"base": "cycle", "n": int(rng.integers(6, 400)), "t": int(rng.integers(2, 4))}
        else:
            n = int(rng.integers(20, 300))
            inst = {"base": "gnp", "n": n, "p": float(rng.uniform(2, 5) / n), "t": int(rng.integers(2, 4))}
    elif kind == "clusters":
        n = int(rng.integers(100, 1500))
        inst = {"n": n, "clusters": int(rng.integers(5, max(6, n // 8))), "p": float(rng.uniform(1, 4) / n)}
    else:
        inst = {"k": int(rng.choice([1, 2, 4, 8, 16]))}
    return RunConfig(seed=seed, kind=str(kind), instance=inst)


def corpus_configs(count: int = 1000, base_seed: int = 0) -> list[RunConfig]:
    """``count`` configurations; exactly ``round(0.3·count)`` of them run forced-phase."""
    rng = np.random.default_rng([base_seed, 0xC0])
    forced = np.zeros(count, dtype=bool)
    forced[rng.permutation(count)[: round(FORCED_FRACTION * count)]] = True
    out = []
    for i in range(count):
        seed = base_seed * 100003 + i
        out.append(_forced(rng, seed) if forced[i] else _plain(rng, seed))
    return out


def _run(cfg: RunConfig) -> RunMetrics:
    return run_pipeline(cfg)


def run_corpus(configs: list[RunConfig], workers: int | None = None) -> list[RunMetrics]:
    workers = workers or min(len(configs), os.cpu_count() or 1)
    if workers <= 1:
        return [run_pipeline(c) for c in configs]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(_run, configs, chunksize=4))
