"""Compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--steps 20000] [--repeat 3]

Times one CartPole rollout buffer with a (4, 64, 64, 1) policy and the
backward discounting pass used by returns and GAE.
"""

import argparse
import timeit

import numpy as np

from armpg import envs, kernels
from armpg.advantage import RolloutBatch
from armpg.nn import init, mlp_sizes
from armpg.sampling import RngStream


def rollout(impl, steps):
    spec = envs.make_spec("cartpole")
    sizes = mlp_sizes(spec.obs_dim)
    flat = init(sizes, RngStream(0, 0)).flat
    sizes = np.array(sizes, dtype=np.int64)
    consts = spec.constants_vector()
    b = RolloutBatch.allocate(steps, spec.obs_dim)
    b.u[:] = RngStream(0, 3).uniform_open(steps)
    reset_rng = RngStream(0, 2)

    def run():
        phys = envs.reset(spec, reset_rng).values.copy()
        t, elapsed = 0, 0
        while t < steps:
            t, elapsed, ended = impl.rollout_segment(
                spec.code, consts, sizes, flat, phys, elapsed, spec.horizon, b.u, t, steps, b.states,
                b.next_states, b.logits, b.prob_one, b.actions, b.pseudo_actions, b.rewards, b.terminal,
                b.truncated,
            )
            if ended:
                phys[:] = envs.reset(spec, reset_rng).values
                elapsed = 0

    return run


def discount(impl, steps):
    rng = RngStream(0, 9)
    vals = rng.normal(steps)
    seg_end = (rng.uniform_open(steps) < 0.01).astype(np.int8)
    seg_end[-1] = 1
    tail = rng.normal(steps)
    return lambda: impl.discounted_backward(vals, 0.99 * 0.95, seg_end, tail)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the Python fallback only")
    print(f"{'kernel':<20} {'backend':<8} {'best s':>9} {'us/step':>9} {'speedup':>8}")
    for label, make in (("rollout_segment", rollout), ("discounted_backward", discount)):
        times = {}
        for name, impl in sorted(backends.items()):
            fn = make(impl, args.steps)
            times[name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        base = times["python"]
        for name, t in sorted(times.items()):
            print(f"{label:<20} {name:<8} {t:9.4f} {1e6 * t / args.steps:9.2f} {base / t:7.1f}x")


if __name__ == "__main__":
    main()
