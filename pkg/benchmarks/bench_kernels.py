"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Also times one full trigger render + poison pass through each path by
re-running itself with FLUORPOISON_DISABLE_NUMBA set.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from fluorpoison import kernels
from fluorpoison.fluorender import HEART


def best_of(fn, repeat):
    fn()  # warm-up, also triggers JIT compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases():
    rng = np.random.default_rng(0)
    xs, ys = HEART.curve()
    xs, ys = xs * 128, ys * 128
    orig = rng.integers(0, 256, (128, 128, 3)).astype(np.uint8)
    rgb = rng.uniform(0, 255, (128, 128, 3))
    a = rng.uniform(0, 1, (128, 128))
    arr = rng.uniform(0, 1, (128, 128, 4))
    return {
        "polygon_coverage 128px x4": (
            lambda: kernels.polygon_coverage_numpy(xs, ys, 128, 4),
            lambda: kernels.polygon_coverage_numba(xs, ys, 128, 4),
        ),
        "composite 128px": (
            lambda: kernels.composite_numpy(orig, rgb, a, 0.9),
            lambda: kernels.composite_numba(orig, rgb, a, 0.9),
        ),
        "box_blur 128px r3": (
            lambda: kernels.box_blur_numpy(arr, 3),
            lambda: kernels.box_blur_numba(arr, 3),
        ),
    }


def pipeline_pass():
    # render a trigger set and poison 200 synthetic images with it
    from fluorpoison.data import SyntheticSignSpec, generate_synthetic
    from fluorpoison.fluorender import DEFAULT_KEYFRAMES, build_trigger_set
    from fluorpoison.poisongen import AttackGoal, PoisonSpec, poison_dataset

    samples = generate_synthetic(SyntheticSignSpec(num_classes=10, images_per_class=20))
    triggers = build_trigger_set(DEFAULT_KEYFRAMES, 2, 64)
    poison_dataset(samples, PoisonSpec(AttackGoal("hiding"), triggers, poison_ratio=1.0))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--pipeline-only", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.pipeline_only:
        print(json.dumps({"seconds": best_of(pipeline_pass, 3)}))
        return

    print(f"{'kernel':<28}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, (np_fn, nb_fn) in kernel_cases().items():
        t_np, t_nb = best_of(np_fn, args.repeat), best_of(nb_fn, args.repeat)
        print(f"{name:<28}{1e3 * t_np:>10.2f}{1e3 * t_nb:>10.2f}{t_np / t_nb:>8.1f}x")

    times = {}
    for label, disabled in (("numpy", "1"), ("numba", "")):
        env = dict(os.environ, FLUORPOISON_DISABLE_NUMBA=disabled)
        out = subprocess.run([sys.executable, __file__, "--pipeline-only"], env=env, check=True,
                             capture_output=True, text=True).stdout
        times[label] = json.loads(out)["seconds"]
    print(f"{'render + poison 200 images':<28}{times['numpy'] * 1e3:>10.0f}{times['numba'] * 1e3:>10.0f}"
          f"{times['numpy'] / times['numba']:>8.1f}x")


if __name__ == "__main__":
    main()
