"""Time the numba and numpy kernel backends on the sampler's hot paths.

    python3 benchmarks/bench_kernels.py [--epochs 300] [--k 10] [--T 100]
"""
import argparse
import timeit

import numpy as np

from lumedbn import kernels
from lumedbn.model import McmcConfig, Priors
from lumedbn.sampler import chain_rng, run_lume_dbn
from lumedbn.synth import GeneratorConfig, make_dataset


def kernel_timings(kern, values, cells, adj, w, rng, repeat=5):
    k = values.shape[1]
    G = kern.lagged_gram(values)
    idx = np.array([0, 1, 3, 5], dtype=np.int64)
    mu = np.zeros(4)
    args = (adj, np.zeros(k), w, np.ones(k), np.zeros(k), np.ones(k))
    z = rng.standard_normal(len(cells))
    work = values.copy()
    cases = {
        "lagged_gram": lambda: kern.lagged_gram(values),
        "conjugate_terms": lambda: kern.conjugate_terms(G, idx, 1 + k, mu, 1.0),
        "gibbs_sweep": lambda: kern.gibbs_sweep(work, cells, *args, z),
    }
    out = {}
    for name, fn in cases.items():
        fn()  # warm-up, includes JIT compilation
        number = 200 if name == "conjugate_terms" else 20
        out[name] = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--T", type=int, default=100)
    ap.add_argument("--rate", type=float, default=0.3)
    args = ap.parse_args()

    gen = GeneratorConfig(k=args.k, T=args.T, seed=2026)
    truth, _, d = make_dataset(gen, args.rate, 0)
    cfg = McmcConfig(epochs=args.epochs, burn_in=1, thinning=1, chains=1, missing_update_interval=10)
    rng = np.random.default_rng(0)
    adj = truth.adjacency
    w = truth.params.weights
    cells = d.missing_cells

    backends = [("numpy", kernels.numpy_backend)]
    if kernels.numba_backend is not None:
        backends.append(("numba", kernels.numba_backend))

    print(f"k={args.k} T={args.T} missing={len(cells)} cells")
    print(f"{'backend':8} {'gram':>10} {'conj':>10} {'sweep':>10} {'ms/epoch':>10}")
    for name, kern in backends:
        t = kernel_timings(kern, d.values.copy() if d.mask.all() else np.nan_to_num(d.values), cells, adj, w, rng)
        run_lume_dbn(d, Priors(args.k), McmcConfig(epochs=3, burn_in=1, thinning=1, chains=1),
                     chain_rng(0), kern=kern)  # warm-up
        start = timeit.default_timer()
        run_lume_dbn(d, Priors(args.k), cfg, chain_rng(0), kern=kern)
        per_epoch = (timeit.default_timer() - start) / args.epochs
        print(f"{name:8} {t['lagged_gram'] * 1e6:9.1f}us {t['conjugate_terms'] * 1e6:9.1f}us "
              f"{t['gibbs_sweep'] * 1e6:9.1f}us {per_epoch * 1e3:9.3f}")


if __name__ == "__main__":
    main()
