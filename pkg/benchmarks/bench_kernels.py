"""Time the compiled and pure-Python replica kernels on the same workload.

    python3 benchmarks/bench_kernels.py [--replicas N] [--repeat R]

Both backends consume identical random streams, so the script also checks
that their outputs agree before reporting throughput.
"""
import argparse
import time

import numpy as np

from ipslab import _backend
from ipslab.engine import RngStream, evolve_block
from ipslab.instances import toy_model

WORKLOADS = {
    "sep a=2, L=16": (toy_model(-1, 2, L=16), 8),
    "sip a=1.5, L=16": (toy_model(1, 1.5, L=16), 8),
    "rtp, L=16": (toy_model(0, L=16, kappa=1.0, lam=0.8), 8),
    "sep a=1, 2d L=8": (toy_model(-1, 1, d=2, L=8, layers=1), 16),
}


def run_once(model, n_particles, replicas, backend):
    gen = np.random.default_rng(0)
    rep_ptr = np.arange(replicas + 1, dtype=np.int64) * n_particles
    cap = int(model.alpha) if model.kind == -1 else n_particles
    pos0 = np.concatenate([np.repeat(np.arange(model.num_sites), cap)[gen.permutation(model.num_sites * cap)]
                           [:n_particles] for _ in range(replicas)]).astype(np.int64)
    start = time.perf_counter()
    out, (events, _) = evolve_block(model, rep_ptr, pos0, [0.5, 1.0], RngStream(1).bit_generator(), backend=backend)
    return time.perf_counter() - start, events, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--replicas", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    backends = [b for b in ("python", "cython") if b in _backend.BACKENDS]
    print(f"backends available: {', '.join(backends)}; replicas={args.replicas}, best of {args.repeat}")
    print(f"{'workload':<20}{'backend':>8}{'seconds':>10}{'events/s':>14}{'speedup':>9}")
    for name, (model, n) in WORKLOADS.items():
        best, outputs = {}, {}
        for b in backends:
            times = []
            for _ in range(args.repeat):
                dt, events, out = run_once(model, n, args.replicas, b)
                times.append(dt)
            best[b] = (min(times), events)
            outputs[b] = out
        if len(outputs) == 2:
            assert np.array_equal(outputs["python"], outputs["cython"]), "backends disagree"
        for b in backends:
            dt, events = best[b]
            speed = best["python"][0] / dt
            print(f"{name:<20}{b:>8}{dt:>10.3f}{events / dt:>14,.0f}{speed:>8.1f}x")


if __name__ == "__main__":
    main()
