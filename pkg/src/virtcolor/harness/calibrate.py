"""Monte Carlo passes that freeze the measured constants into the calibration file.

Calibration seeds are disjoint from the acceptance corpus, so the suite
checks the constants out of sample.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .. import calibration
from .config import RunConfig
from .corpus import corpus_configs
from .pipeline import run_pipeline

SCHEMA = "virtcolor.calibration/1"
BASE_SEED = 7919
MARGIN = 1.25      # safety factor on upper-tail constants
QUANTILE = 0.99


def _round_up(x: float, digits: int = 3) -> float:
    if x <= 0:
        return 0.0
    e = math.floor(math.log10(x)) - digits + 1
    return math.ceil(x / 10 ** e) * 10 ** e


def _round_down(x: float, digits: int = 3) -> float:
    if x <= 0:
        return 0.0
    e = math.floor(math.log10(x)) - digits + 1
    return math.floor(x / 10 ** e) * 10 ** e


def fast_path_configs(count: int, base_seed: int) -> list[RunConfig]:
    rng = np.random.default_rng([base_seed, 0xFA])
    out = []
    for i in range(count):
        n = int(rng.integers(300, 3001))
        out.append(RunConfig(seed=base_seed * 7 + i, kind="gnp",
                             instance={"n": n, "p": float(rng.uniform(1.5, 4.0) / n)},
                             overrides={"fast_path": True}))
    return out


def calibrate(runs: int = 400, fast_runs: int = 80, base_seed: int = BASE_SEED, progress=None) -> dict:
    """Measure every calibrated constant; returns the JSON document to write."""
    acct, sct, comp, fast = [], [], [], []
    failed = 0
    for i, cfg in enumerate(corpus_configs(runs, base_seed)):
        m = run_pipeline(cfg)
        failed += not m.passed
        acct += m.samples.get("accounting-ratio", [])
        sct += m.samples.get("sct:leftover-excess", [])
        comp += m.samples.get("shatter:component-ratio", [])
        if progress:
            progress(i + 1, runs)
    for cfg in fast_path_configs(fast_runs, base_seed):
        m = run_pipeline(cfg)
        failed += not m.passed
        low = m.low_degree
        if low.get("fast_path") and low.get("fast_budget"):
            fast.append(low["rounds"] / low["fast_budget"] * calibration.get("fast_path_c"))
    constants = {
        # a lower tail: keep 99% of checkpoints above, then shave a margin
        "gamma_acct": _round_down(float(np.quantile(acct, 1 - QUANTILE)) / MARGIN) if acct else 0.0,
        "sct_c": _round_up(max(0.0, float(np.quantile(sct, QUANTILE))) * MARGIN) if sct else 0.0,
        "component_c": _round_up(float(np.quantile(comp, QUANTILE)) * MARGIN) if comp else 1.0,
        "fast_path_c": _round_up(float(max(fast)) * MARGIN) if fast else 1.0,
    }

    def summary(v):
        return {"count": len(v), "min": float(min(v)), "max": float(max(v)),
                "q01": float(np.quantile(v, 0.01)), "q99": float(np.quantile(v, 0.99))} if v else {"count": 0}

    return {
        "schema": SCHEMA,
        "constants": constants,
        "measured": {"accounting-ratio": summary(acct), "sct:leftover-excess": summary(sct),
                     "shatter:component-ratio": summary(comp), "fast-path:rounds-per-budget": summary(fast)},
        "procedure": {"corpus_runs": runs, "fast_path_runs": fast_runs, "base_seed": base_seed,
                      "quantile": QUANTILE, "margin": MARGIN, "failed_runs": failed,
                      "defaults": dict(calibration.DEFAULTS)},
    }


def write(doc: dict, path: str | Path | None = None) -> Path:
    out = Path(path) if path else calibration.path()
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    calibration.clear_cache()
    return out
