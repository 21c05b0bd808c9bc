"""Compiled kernels against the pure-Python fallback.

Runs the sketch kernels directly, and times whole pipeline runs in two
subprocesses (one with ``VIRTCOLOR_PURE_PYTHON=1``) so the tree-charging
path of the round engine is compared too.

    python3 benchmarks/bench_backends.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from virtcolor import sketches
from virtcolor.sketches import _fallback

PIPELINE_SNIPPET = """
import json, time
from virtcolor import sketches
from virtcolor.harness import RunConfig, run_pipeline
cfgs = [RunConfig(kind="gnp", seed=1, instance={"n": 3000, "p": 0.004}),
        RunConfig(kind="clique-blobs", seed=2, forced_phase=True,
                  instance={"blobs": 3, "size": 128, "ext": 16, "p_in": 0.99})]
best = {}
for cfg in cfgs:
    times = []
    for _ in range(%d):
        t = time.perf_counter()
        m = run_pipeline(cfg)
        times.append(time.perf_counter() - t)
        assert m.passed
    best[cfg.kind] = min(times)
print(json.dumps({"backend": sketches.BACKEND, "best": best}))
"""


def _best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(repeat: int) -> list[tuple[str, float, float]]:
    if sketches.BACKEND != "compiled":
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    from virtcolor.sketches import _kernels as K

    rng = np.random.default_rng(0)
    ids = rng.integers(0, 2 ** 40, size=2000)
    t = 1024
    sizes = rng.integers(1, 40, size=400)
    ptr = np.concatenate([[0], np.cumsum(sizes)])
    members = rng.integers(0, 2 ** 40, size=int(ptr[-1]))
    Y = sketches.sample_max_law(rng, 500, 2000, t)
    leaf = K.geometric_matrix(3, ids, t)
    rows = rng.integers(0, ids.size, size=int(ptr[-1]))
    q = sketches.quota(t)
    cases = [
        ("geometric_matrix 2000 x 1024", lambda m: m.geometric_matrix(3, ids, t)),
        ("fingerprint_max 400 sets", lambda m: m.fingerprint_max(3, ptr, members, t)),
        ("estimate_rows 2000 x 1024", lambda m: m.estimate_rows(Y, q)),
        ("max_combine 400 sets", lambda m: m.max_combine(leaf, rows, ptr)),
    ]
    return [(name, _best(lambda: f(K), repeat), _best(lambda: f(_fallback), repeat)) for name, f in cases]


def pipeline_table(repeat: int) -> dict:
    out = {}
    for label, extra in (("compiled", {}), ("python", {"VIRTCOLOR_PURE_PYTHON": "1"})):
        r = subprocess.run([sys.executable, "-c", PIPELINE_SNIPPET % repeat], env={**os.environ, **extra},
                           capture_output=True, text=True, check=True)
        out[label] = json.loads(r.stdout)
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':32s} {'compiled':>10s} {'python':>10s} {'speedup':>8s}")
    for name, c, p in kernel_table(args.repeat):
        print(f"{name:32s} {c * 1e3:9.2f}ms {p * 1e3:9.2f}ms {p / c:7.1f}x")
    pipe = pipeline_table(max(1, args.repeat // 2))
    print(f"\n{'pipeline run':32s} {'compiled':>10s} {'python':>10s} {'speedup':>8s}")
    for kind in pipe["compiled"]["best"]:
        c, p = pipe["compiled"]["best"][kind], pipe["python"]["best"][kind]
        print(f"{kind:32s} {c:9.3f}s  {p:9.3f}s  {p / c:7.1f}x")


if __name__ == "__main__":
    main()
