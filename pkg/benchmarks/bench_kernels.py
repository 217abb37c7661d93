"""Time the compiled and numpy loss kernels on training-sized batches.

    python3 benchmarks/bench_kernels.py [--repeat 50]

Also checks that both backends agree before timing them.
"""
import argparse
import timeit

import numpy as np

from cvcl.kernels import available_backends


def make_inputs(m, K, dtype, seed=0):
    rng = np.random.default_rng(seed)
    H = rng.dirichlet(np.ones(K), size=m).astype(dtype)
    G = rng.normal(size=(m, K)).astype(dtype)
    B = rng.dirichlet(np.ones(K), size=m).astype(dtype)
    return H, G, B


def cases(mod, H, G, B):
    return {
        "target_distribution": lambda: mod.target_distribution(H, 1e-12),
        "target_backward": lambda: mod.target_distribution_backward(H, G, 1e-12),
        "contrastive_pair": lambda: mod.contrastive_pair(H, B, 0.5, True),
        "consistency": lambda: mod.consistency(H, 1e-12),
    }


def check_agreement(backends, H, G, B):
    if len(backends) < 2:
        return
    ref, other = backends["python"], backends["cython"]
    a, b = ref.contrastive_pair(H, B, 0.5, True), other.contrastive_pair(H, B, 0.5, True)
    tol = 1e-10 if H.dtype == np.float64 else 1e-4
    assert abs(a[0] - b[0]) <= tol * max(1.0, abs(a[0]))
    np.testing.assert_allclose(a[1], b[1], rtol=tol, atol=tol)
    np.testing.assert_allclose(ref.target_distribution(H, 1e-12), other.target_distribution(H, 1e-12),
                               rtol=tol, atol=tol)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"{'kernel':<22}{'dtype':<9}{'m':>5}{'K':>4}" + "".join(f"{n:>12}" for n in backends) + "   speedup")
    for dtype in (np.float64, np.float32):
        for m, K in ((128, 3), (128, 10), (256, 20), (1024, 10)):
            H, G, B = make_inputs(m, K, dtype)
            check_agreement(backends, H, G, B)
            per_backend = {name: cases(mod, H, G, B) for name, mod in backends.items()}
            for kernel in per_backend["python"]:
                times = {
                    name: min(timeit.repeat(fns[kernel], number=args.repeat, repeat=3)) / args.repeat
                    for name, fns in per_backend.items()
                }
                cols = "".join(f"{times[n] * 1e6:10.1f}us" for n in backends)
                speed = f"{times['python'] / times['cython']:8.2f}x" if "cython" in times else ""
                print(f"{kernel:<22}{np.dtype(dtype).name:<9}{m:>5}{K:>4}{cols}   {speed}")


if __name__ == "__main__":
    main()
