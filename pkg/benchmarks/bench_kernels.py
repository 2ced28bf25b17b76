"""Time the compiled interior kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--h 1/64] [--repeat 50]
"""
import argparse
import timeit
from fractions import Fraction

import numpy as np

from mixhess import _pykernels
from mixhess import grid as gr

try:
    from mixhess import _ckernels
except ImportError:
    _ckernels = None


def setup_case(h):
    g = gr.build_grid(gr.DomainSpec.disk(1.0), h)
    rng = np.random.default_rng(0)
    w = 0.6 * g.x ** 2 + 0.4 * g.y ** 2 + 1e-4 * rng.standard_normal(g.n)
    m = len(g.interior)
    return g, w, np.full(m, 0.5), np.full(m, 0.25)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", default="1/64")
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args(argv)
    h = float(Fraction(args.h))
    g, w, a0, a1 = setup_case(h)
    inv_h2 = 1.0 / h ** 2
    backends = {"numpy": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    print(f"grid h={args.h}: {g.n} unknowns, {len(g.interior)} interior nodes, {args.repeat} repeats")
    times = {}
    for name, mod in backends.items():
        calls = {
            "residual": lambda: mod.interior_residual(w, g.nbr, inv_h2, a0, a1, 0.0),
            "jacobian": lambda: mod.interior_jacobian(w, g.nbr, inv_h2, a0, a1),
        }
        for kind, fn in calls.items():
            fn()
            best = min(timeit.repeat(fn, number=args.repeat, repeat=3)) / args.repeat
            times[name, kind] = best
            print(f"{name:7s} {kind:9s} {best * 1e6:10.1f} us/call")
    if "cython" in backends:
        for kind in ("residual", "jacobian"):
            print(f"speedup {kind}: {times['numpy', kind] / times['cython', kind]:.1f}x")
    else:
        print("compiled extension not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
