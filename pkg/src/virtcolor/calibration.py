"""Constants measured by ``virtcolor calibrate`` and consumed as defaults.

The file named by ``VIRTCOLOR_CALIBRATION`` wins over the packaged
``data/calibration.json``; missing keys fall back to ``DEFAULTS``.
"""

from __future__ import annotations

import json
import os
from functools import lru_cache
from pathlib import Path

ENV = "VIRTCOLOR_CALIBRATION"
PACKAGED = Path(__file__).with_name("data") / "calibration.json"

DEFAULTS = {
    "gamma_acct": 0.0,      # floor of |L(v) ∩ L(K)| / (e_K + a_K) at non-cabal checkpoints
    "sct_c": 4.0,           # additive log n slack of the SCT leftover bound
    "component_c": 1.0,     # shattered components <= c · Δ̄² · log n
    "fast_path_c": 1.0,     # fast-path rounds <= c · budget
}


def path() -> Path:
    env = os.environ.get(ENV)
    return Path(env) if env else PACKAGED


@lru_cache(maxsize=8)
def _load(p: str) -> dict:
    f = Path(p)
    if not f.exists():
        return {}
    return json.loads(f.read_text())


def load() -> dict:
    """Merged constants plus the metadata block written by the calibration pass."""
    out = dict(DEFAULTS)
    data = _load(str(path()))
    out.update({k: float(v) for k, v in data.get("constants", {}).items() if k in DEFAULTS})
    return out


def get(name: str) -> float:
    return load()[name]


def clear_cache() -> None:
    _load.cache_clear()
