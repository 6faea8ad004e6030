#!/usr/bin/env python3
"""Smoke test for the codedsketch_py extension module.

Builds the cdylib with cargo if needed, imports it, and exercises the main
surface: threshold arithmetic, the end-to-end approximate product, a
straggler round, and plain count-sketch recovery.
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_and_import():
    subprocess.run(
        ["cargo", "build", "-p", "codedsketch-py"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "debug" / "libcodedsketch_py.so"
    if not lib.exists():  # macOS fallback
        lib = ROOT / "target" / "debug" / "libcodedsketch_py.dylib"
    staging = Path(tempfile.mkdtemp(prefix="codedsketch_py_"))
    shutil.copy(lib, staging / "codedsketch_py.so")
    sys.path.insert(0, str(staging))
    import codedsketch_py

    return codedsketch_py


def exact_product(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    assert len(a[0]) == inner
    return [
        [sum(a[i][k] * b[k][j] for k in range(inner)) for j in range(cols)]
        for i in range(rows)
    ]


def frobenius(m):
    return math.sqrt(sum(v * v for row in m for v in row))


def max_abs_diff(x, y):
    return max(abs(a - b) for rx, ry in zip(x, y) for a, b in zip(rx, ry))


def main():
    cs = build_and_import()

    # threshold arithmetic from the worked example and the large-scale regime
    assert cs.threshold_cs(4, 2, 3) == 75
    assert cs.threshold_exact(1000, 1000, 1000) == 1_000_000_999
    assert cs.accuracy_bound(0.1, 0.02, 1000) == 6_599_988
    assert cs.derive_sketch_dims(0.5, 0.125) == (12, 3)
    print("PASS threshold arithmetic")

    params = cs.SchemeParams(2, 2, 2, 12, 3)
    assert params.threshold() == (2 * 2 * 12 - 1) * (2 * 3 - 1)
    assert params.workers == params.threshold()
    derived = cs.SchemeParams.from_accuracy(2, 2, 2, 0.5, 0.125)
    assert (derived.bprime, derived.d) == (12, 3)
    print("PASS scheme parameters")

    import random

    rng = random.Random(7)
    a = [[rng.uniform(-1, 1) for _ in range(8)] for _ in range(8)]
    b = [[rng.uniform(-1, 1) for _ in range(8)] for _ in range(8)]
    small = cs.SchemeParams(2, 2, 2, 12, 3)
    c_exact = exact_product(a, b)
    scale = frobenius(c_exact)

    approx = cs.approximate_multiply(a, b, small, seed=1)
    err = max_abs_diff(approx, c_exact) / scale
    assert err < 0.5, f"approximation error {err}"
    again = cs.approximate_multiply(a, b, small, seed=1)
    assert max_abs_diff(approx, again) == 0.0, "same seed must reproduce bitwise"
    print(f"PASS approximate multiply (relative error {err:.3f})")

    zeros = [[0.0] * 8 for _ in range(8)]
    approx0 = cs.approximate_multiply(a, zeros, small, seed=2)
    assert max(abs(v) for row in approx0 for v in row) < 1e-12
    print("PASS zero product is exactly zero")

    # a round that drops five late workers still decodes
    wide = cs.SchemeParams(2, 2, 2, 12, 3, workers=small.threshold() + 5)
    est, wall = cs.simulate_round(a, b, wide, seed=3, drop=[0, 9, 17, 33, 50])
    err = max_abs_diff(est, c_exact) / scale
    assert err < 0.5, f"straggler-round error {err}"
    assert wall > 0.0
    print(f"PASS straggler round (error {err:.3f}, wall clock {wall:.2f})")

    # plain count-sketch: a sparse vector recovers well with wide buckets
    vec = [0.0] * 64
    vec[3], vec[17], vec[42] = 1.5, -2.0, 0.75
    recovered = cs.sketch_and_recover(vec, d=7, bprime=36, seed=4)
    worst = max(abs(x - y) for x, y in zip(recovered, vec))
    assert worst < 1e-9, f"sparse recovery deviation {worst}"
    print("PASS count-sketch sparse recovery")

    assert abs(cs.tail_norm([3.0, -4.0, 1.0], 1) - math.sqrt(10)) < 1e-12
    assert cs.tail_norm([3.0, -4.0, 1.0], 3) == 0.0
    print("PASS tail norm")

    try:
        cs.SchemeParams(4, 2, 2, 2, 3, workers=10)
    except ValueError:
        print("PASS threshold validation raises ValueError")
    else:
        raise AssertionError("expected ValueError for too few workers")

    print("smoke test: all checks passed")


if __name__ == "__main__":
    main()
