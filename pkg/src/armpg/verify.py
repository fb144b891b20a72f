"""Verification suites shared by ``armpg verify`` and the acceptance tests."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import bernoulli, kernels, oracle
from .advantage import RolloutBatch, a2c_advantage, gae, td_errors
from .nn import backward_batch, forward_batch, init
from .sampling import RngStream, prob_actions_differ, sample_coupled_array


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    rows: list = field(default_factory=list)
    header: tuple = ()


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_bernoulli(instances=50, samples=100_000, seed=0, z_max=3.0) -> SuiteResult:
    """ARM and REINFORCE means against the enumerated gradient on random instances."""
    rng = RngStream(seed, 0)
    rows, worst = [], 0.0
    for k in range(instances):
        phis, f = bernoulli.random_instance(rng, max_dim=3)
        exact = bernoulli.exact_grad_bruteforce(phis, f)
        for name in ("arm", "reinforce"):
            probe = bernoulli.variance_probe(phis, f, name, samples, RngStream(seed, 1 + 2 * k + (name == "reinforce")))
            z = (probe.mean - exact) / probe.stderr
            worst = max(worst, float(np.max(np.abs(z))))
            for i in range(f.dim):
                rows.append((k, name, i, exact[i], probe.mean[i], probe.stderr[i], probe.var[i], z[i]))
    return SuiteResult(
        "bernoulli_arm", worst < z_max, f"{instances} instances, max |z| = {worst:.2f} (limit {z_max})",
        rows=rows, header=("instance", "estimator", "component", "oracle", "mean", "stderr", "variance", "z"),
    )


UNBIASED = ("arm", "a2c", "expected")


@_timed
def check_unbiasedness(num_batches=200_000, seed=0, logits=(0.4, -0.8), z_max=3.0, z_bias=5.0) -> SuiteResult:
    """Tabular two-state chain: unbiased estimators within ``z_max``; resampled A2C beyond ``z_bias``."""
    mdp = oracle.two_state_chain()
    rows, ok, notes = [], True, []
    for k, name in enumerate(UNBIASED + ("resampled_a2c",)):
        at = np.zeros(2) if name == "resampled_a2c" else np.asarray(logits)
        rep = oracle.estimator_bias_report(mdp, at, name, num_batches, RngStream(seed, 10 + k))
        z = rep.z
        for i in range(len(z)):
            rows.append((name, i, rep.oracle[i], rep.mean[i], rep.stderr[i], z[i]))
        if name == "resampled_a2c":
            good = rep.max_abs_z > z_bias
            notes.append(f"{name} max|z|={rep.max_abs_z:.1f} (> {z_bias})")
        else:
            good = rep.max_abs_z < z_max
            notes.append(f"{name} max|z|={rep.max_abs_z:.2f}")
        ok &= good
    return SuiteResult("policy_gradient_oracle", ok, "; ".join(notes), rows=rows,
                       header=("estimator", "param", "oracle", "mean", "stderr", "z"))


VARIANCE_GRID = np.round(np.arange(-4.0, 4.0 + 1e-9, 0.05), 10)


@_timed
def check_variance_bound(rewards=(1.0, 0.0), bound=16 / 25, tol=1e-9) -> SuiteResult:
    """Pointwise ``Var(ARM) / Var(standard) <= 16/25`` over the logit grid."""
    table = oracle.bandit_variance_ratio(VARIANCE_GRID, rewards)
    r = table.ratio
    ok = bool(np.all(r[~np.isnan(r)] <= bound + tol))
    rows = [(p, va, vs, q) for p, va, vs, q in zip(table.phis, table.var_arm, table.var_standard, r)]
    return SuiteResult(
        "variance_bound", ok,
        f"rewards {rewards}: max pointwise ratio {table.max_ratio:.4f}, sup ratio {table.sup_ratio:.4f} (bound {bound})",
        rows=rows, header=("phi", "var_arm", "var_standard", "ratio"),
    )


def finite_difference_grad(params, state, h=1e-6) -> np.ndarray:
    """Central differences of the scalar network output, one parameter at a time."""
    sizes = np.array(params.sizes, dtype=np.int64)
    flat = params.flat
    out = np.empty_like(flat)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = kernels.mlp_logit(sizes, flat, state)
        flat[i] = keep - h
        down = kernels.mlp_logit(sizes, flat, state)
        flat[i] = keep
        out[i] = (up - down) / (2.0 * h)
    return out


def gradient_rel_error(g, fd, floor=1e-4) -> float:
    """Max relative error over components with magnitude above ``floor``.

    Smaller components are compared absolutely against ``1e-9`` and reported
    as 0 or inf.
    """
    scale = np.maximum(np.abs(g), np.abs(fd))
    big = scale >= floor
    rel = np.zeros_like(g)
    rel[big] = np.abs(g - fd)[big] / scale[big]
    small_bad = (~big) & (np.abs(g - fd) > 1e-9)
    rel[small_bad] = np.inf
    return float(rel.max())


@_timed
def check_gradients(cases=20, rtol=1e-5, seed=0, shapes=((4, 64, 64, 1), (3, 64, 64, 1))) -> SuiteResult:
    """Backprop against central finite differences for the policy and critic shapes."""
    rows, worst = [], 0.0
    for si, sizes in enumerate(shapes):
        rng = RngStream(seed, 100 + si)
        done = 0
        while done < cases:
            params = init(sizes, rng)
            params.flat[:] += 0.1 * rng.normal(params.flat.size)
            state = rng.normal(sizes[0])
            _, cache = forward_batch(params, state[None, :])
            if any(np.min(np.abs(z)) < 1e-4 for z in cache.pre):
                continue  # too close to a ReLU kink for differencing
            g = backward_batch(params, cache, [1.0])
            err = gradient_rel_error(g, finite_difference_grad(params, state))
            worst = max(worst, err)
            rows.append((str(sizes), done, err))
            done += 1
    return SuiteResult("mlp_gradients", worst <= rtol, f"max rel error {worst:.2e} (limit {rtol})",
                       rows=rows, header=("shape", "case", "rel_error"))


def random_batch(rng: RngStream, size=64, obs_dim=3, p_terminal=0.08, p_truncated=0.06) -> RolloutBatch:
    """Random batch with terminal and truncated segment ends mixed in."""
    batch = RolloutBatch.allocate(size, obs_dim)
    batch.states[:] = rng.normal((size, obs_dim))
    batch.next_states[:] = rng.normal((size, obs_dim))
    batch.rewards[:] = rng.normal(size)
    r = rng.uniform_open(size)
    batch.terminal[:] = r < p_terminal
    batch.truncated[:] = (r >= p_terminal) & (r < p_terminal + p_truncated)
    values = rng.normal(size)
    next_values = rng.normal(size)
    # inside a segment the next state is the following step's state
    inner = ~batch.segment_end
    idx = np.flatnonzero(inner)
    batch.next_states[idx] = batch.states[idx + 1]
    next_values[idx] = values[idx + 1]
    batch.values, batch.next_values = values, next_values
    return batch


@_timed
def check_advantage_identities(batches=200, seed=0, tol=1e-12) -> SuiteResult:
    """GAE(1) equals the A2C advantage and GAE(0) equals the TD error."""
    rng = RngStream(seed, 200)
    worst1 = worst0 = 0.0
    for _ in range(batches):
        b = random_batch(rng, size=int(rng.integers(1, 200)))
        gamma = float(rng.uniform(0.5, 1.0))
        worst1 = max(worst1, float(np.max(np.abs(gae(b, None, gamma, 1.0).values - a2c_advantage(b, None, gamma).values))))
        worst0 = max(worst0, float(np.max(np.abs(gae(b, None, gamma, 0.0).values - td_errors(b, None, gamma)))))
    ok = worst1 <= tol and worst0 <= tol
    return SuiteResult("advantage_identities", ok,
                       f"|GAE(1)-A2C| max {worst1:.1e}, |GAE(0)-TD| max {worst0:.1e} (limit {tol})")


@_timed
def check_coupled_law(phis=(0.0, 1.0, 2.0, 4.0), n=100_000, seed=0, z_max=3.0) -> SuiteResult:
    """Empirical ``P(a != a_s)`` against ``2 sigma(-|phi|)``."""
    rows, worst = [], 0.0
    for k, phi in enumerate(phis):
        u = RngStream(seed, 300 + k).uniform_open(n)
        a, s, _ = sample_coupled_array(np.full(n, phi), u)
        d = (a != s).astype(np.float64)
        exact = prob_actions_differ(phi)
        se = np.sqrt(exact * (1.0 - exact) / n) if 0 < exact < 1 else d.std(ddof=1) / np.sqrt(n)
        z = (d.mean() - exact) / se if se > 0 else (0.0 if d.mean() == exact else np.inf)
        worst = max(worst, abs(z))
        rows.append((phi, exact, d.mean(), se, z))
    return SuiteResult("coupled_sampling", worst < z_max, f"max |z| = {worst:.2f} (limit {z_max})",
                       rows=rows, header=("phi", "exact", "empirical", "stderr", "z"))


SUITES = {
    "oracle": check_unbiasedness,
    "variance": check_variance_bound,
    "bernoulli": check_bernoulli,
    "gradients": check_gradients,
    "advantage": check_advantage_identities,
    "coupled": check_coupled_law,
}


def run_all(names=None, quick=False):
    out = []
    for name in names or SUITES:
        fn = SUITES[name]
        if quick and name == "bernoulli":
            out.append(fn(instances=10, samples=20_000))
        elif quick and name == "oracle":
            out.append(fn(num_batches=50_000))
        elif quick and name == "gradients":
            out.append(fn(cases=3))
        else:
            out.append(fn())
    return out
