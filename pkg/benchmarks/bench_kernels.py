"""Compare the compiled and numpy sub-sampling kernels.

    python benchmarks/bench_kernels.py [--size 512] [--stride 5] [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from rsgdenoise import _cellkernels_py, kernels
from rsgdenoise.sampling import make_rsg_plan


def bench(impl, img, perms, stride, repeat):
    split = min(timeit.repeat(lambda: impl.split_cells(img, perms, stride), number=1, repeat=repeat))
    subs = impl.split_cells(img, perms, stride)
    merge = min(timeit.repeat(lambda: impl.merge_cells(subs, perms, stride), number=1, repeat=repeat))
    return split, merge


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--size", type=int, default=500)
    ap.add_argument("--channels", type=int, default=3)
    ap.add_argument("--stride", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    s = args.stride
    side = args.size - args.size % s
    img = rng.random((side, side, args.channels)).astype(np.float32)
    perms = make_rsg_plan(s, (side // s, side // s), rng).cell_perms

    impls = {"numpy": _cellkernels_py}
    if kernels.BACKEND == "cython":
        from rsgdenoise import _cellkernels
        impls["cython"] = _cellkernels
    else:
        print("compiled extension not loaded (not built, or RSGDENOISE_PURE_PYTHON set); numpy only")

    print(f"{side}x{side}x{args.channels} float32, stride {s}, best of {args.repeat}")
    results = {name: bench(m, img, perms, s, args.repeat) for name, m in impls.items()}
    for name, (sp, mg) in results.items():
        print(f"  {name:7s} split {sp * 1e3:8.3f} ms   merge {mg * 1e3:8.3f} ms")
    if "cython" in results:
        (ns, nm), (cs, cm) = results["numpy"], results["cython"]
        print(f"  speed-up split {ns / cs:.1f}x, merge {nm / cm:.1f}x")


if __name__ == "__main__":
    main()
