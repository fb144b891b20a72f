"""Training loop: rollout with coupled sampling, critic fit, estimator, Adam ascent."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .advantage import RolloutBatch, critic_values, estimate_advantages, fit_critic, mc_returns
from .envs import ENV_IDS, EnvSpec, make_spec, reset
from .estimators import ESTIMATORS, TAG, estimator_coefficients, logit_gradient
from .nn import AdamState, MlpParams, adam_step, clip_norm, init, mlp_sizes, save_checkpoint
from .sampling import RngStream, Stream

log = logging.getLogger(__name__)

ADVANTAGE_METHODS = ("a2c", "gae")
METRIC_COLUMNS = (
    "iter", "env_steps", "mean_return", "min_return", "max_return", "action_diff_rate",
    "zero_grad_frac", "grad_norm", "critic_loss", "wallclock_s",
)
OUTPUT_ROOT_ENV = "ARMPG_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    env: str = "cartpole"
    horizon: int | None = None
    estimator: str = "arm"
    advantage: str = "gae"
    batch_size: int = 2048
    total_steps: int = 1_000_000
    policy_lr: float = 3e-4
    critic_lr: float | None = None
    gamma: float = 0.99
    lam: float = 0.95
    seed: int = 0
    clip: float | None = None
    critic_epochs: int = 5
    critic_minibatch: int = 64
    critic_first: bool = True
    normalize_advantages: bool = False
    hidden: str = "64,64"
    out_dir: str | None = None

    def __post_init__(self):
        if self.env not in ENV_IDS:
            raise ConfigError(f"env must be one of {', '.join(ENV_IDS)}; got {self.env!r}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {', '.join(ESTIMATORS)}; got {self.estimator!r}")
        if self.advantage not in ADVANTAGE_METHODS:
            raise ConfigError(f"advantage must be one of {', '.join(ADVANTAGE_METHODS)}; got {self.advantage!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.total_steps < self.batch_size:
            raise ConfigError("total_steps must be >= batch_size")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ConfigError("gamma and lam must lie in [0, 1]")
        if self.policy_lr <= 0 or (self.critic_lr is not None and self.critic_lr <= 0):
            raise ConfigError("learning rates must be positive")
        self.hidden_sizes  # validates

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        try:
            sizes = tuple(int(h) for h in str(self.hidden).split(",") if h.strip())
        except ValueError as exc:
            raise ConfigError(f"hidden must be comma-separated integers, got {self.hidden!r}") from exc
        if any(h < 1 for h in sizes):
            raise ConfigError("hidden sizes must be positive")
        return sizes

    @property
    def iterations(self) -> int:
        # never exceed the step budget
        return self.total_steps // self.batch_size

    def env_spec(self) -> EnvSpec:
        return make_spec(self.env, self.horizon)

    def resolved(self) -> "TrainConfig":
        """Copy with ``horizon`` and ``critic_lr`` defaults filled in."""
        return dataclasses.replace(
            self,
            horizon=self.env_spec().horizon,
            critic_lr=self.policy_lr if self.critic_lr is None else self.critic_lr,
        )

    # flat ``key = value`` text; '#' starts a comment, 'none' is the null value
    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {'none' if v is None else (repr(v) if isinstance(v, float) else v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "TrainConfig":
        values = parse_config_text(text)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = set(values) - set(kinds)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**{k: _coerce(k, kinds[k], v) for k, v in values.items()})


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _coerce(name, kind, value):
    if not isinstance(value, str):
        return value
    if value.lower() == "none":
        if "None" not in str(kind):
            raise ConfigError(f"{name} cannot be none")
        return None
    try:
        if "bool" in str(kind):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("true", "1", "yes")
        if "int" in str(kind):
            return int(float(value)) if "e" in value.lower() else int(value)
        if "float" in str(kind):
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc
    return value


@dataclass
class IterationMetrics:
    iter: int
    env_steps: int
    mean_return: float
    min_return: float
    max_return: float
    action_diff_rate: float
    zero_grad_frac: float
    grad_norm: float
    critic_loss: float
    wallclock_s: float

    def row(self) -> list:
        return [getattr(self, c) for c in METRIC_COLUMNS]


class EnvRunner:
    """Keeps one environment running across batches (episodes may span batches)."""

    def __init__(self, spec: EnvSpec, rng: RngStream):
        self.spec = spec
        self.rng = rng
        self.consts = spec.constants_vector()
        self._new_episode()

    def _new_episode(self):
        st = reset(self.spec, self.rng)
        self.phys = st.values.copy()
        self.elapsed = 0
        self.episode_return = 0.0

    def collect(self, policy: MlpParams, size: int, noise: RngStream):
        """Fill a batch of ``size`` steps; also returns finished-episode returns."""
        batch = RolloutBatch.allocate(size, self.spec.obs_dim)
        batch.u[:] = noise.uniform_open(size)
        sizes = np.array(policy.sizes, dtype=np.int64)
        finished = []
        t = 0
        while t < size:
            t_end, self.elapsed, ended = kernels.rollout_segment(
                self.spec.code, self.consts, sizes, policy.flat, self.phys, self.elapsed,
                self.spec.horizon, batch.u, t, size, batch.states, batch.next_states, batch.logits,
                batch.prob_one, batch.actions, batch.pseudo_actions, batch.rewards,
                batch.terminal, batch.truncated,
            )
            for r in batch.rewards[t:t_end]:
                self.episode_return += float(r)
            t = t_end
            if ended:
                finished.append(self.episode_return)
                self._new_episode()
        return batch, finished


def collect_rollout(env: EnvRunner, policy: MlpParams, size: int, rng: RngStream) -> RolloutBatch:
    return env.collect(policy, size, rng)[0]


@dataclass
class TrainResult:
    config: TrainConfig
    metrics: list = field(default_factory=list)
    policy: MlpParams | None = None
    critic: MlpParams | None = None
    out_dir: Path | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.metrics], dtype=np.float64)


def final_window_return(metrics, window: int) -> float:
    vals = np.array([m.mean_return for m in metrics[-window:]], dtype=np.float64)
    vals = vals[~np.isnan(vals)]  # iterations where no episode finished
    return float(vals.mean()) if len(vals) else float("nan")


def steps_to_threshold(metrics, threshold: float, window: int = 10) -> float:
    """Env steps at the first iteration whose trailing ``window``-iteration mean
    return reaches ``threshold``; ``inf`` if it never does."""
    rets = np.array([m.mean_return for m in metrics], dtype=np.float64)
    for i in range(window - 1, len(rets)):
        if np.nanmean(rets[i - window + 1 : i + 1]) >= threshold:
            return float(metrics[i].env_steps)
    return math.inf


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def train(config: TrainConfig, *, out_dir=None, progress: bool = False) -> TrainResult:
    cfg = config.resolved()
    spec = cfg.env_spec()
    sizes = mlp_sizes(spec.obs_dim, cfg.hidden_sizes)
    policy = init(sizes, RngStream(cfg.seed, Stream.POLICY_INIT))
    critic = init(sizes, RngStream(cfg.seed, Stream.CRITIC_INIT))
    popt = AdamState.for_params(policy, cfg.policy_lr)
    copt = AdamState.for_params(critic, cfg.critic_lr)
    runner = EnvRunner(spec, RngStream(cfg.seed, Stream.ENV))
    noise = RngStream(cfg.seed, Stream.ACTION_NOISE)
    shuffle = RngStream(cfg.seed, Stream.CRITIC_SHUFFLE)
    resample = RngStream(cfg.seed, Stream.RESAMPLE)

    out = Path(out_dir or cfg.out_dir) if (out_dir or cfg.out_dir) else None
    writer = fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.to_text())
        fh = open(out / "metrics.csv", "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)

    result = TrainResult(cfg, [], policy, critic, out)
    t0 = time.perf_counter()
    steps = 0
    try:
        for it in range(cfg.iterations):
            batch, finished = runner.collect(policy, cfg.batch_size, noise)
            steps += cfg.batch_size
            _, next_v = critic_values(batch, critic)
            targets = mc_returns(batch, cfg.gamma, next_v)
            closs = float("nan")
            if cfg.critic_first:
                closs = fit_critic(batch, critic, copt, cfg.critic_epochs, cfg.critic_minibatch,
                                   shuffle, targets=targets, max_norm=cfg.clip)
            batch.values, batch.next_values = critic_values(batch, critic)
            adv = estimate_advantages(batch, None, cfg.advantage, cfg.gamma, cfg.lam).values
            if cfg.normalize_advantages:
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            coeffs = estimator_coefficients(cfg.estimator, batch, adv, gamma=cfg.gamma, rng=resample)
            grad = logit_gradient(policy, batch.states, coeffs, TAG[cfg.estimator])
            gnorm = grad.norm()
            if not math.isfinite(gnorm):
                raise TrainingDiverged(f"iteration {it}: non-finite policy gradient")
            adam_step(policy, popt, clip_norm(grad.values, cfg.clip), maximize=True)
            if not cfg.critic_first:
                closs = fit_critic(batch, critic, copt, cfg.critic_epochs, cfg.critic_minibatch,
                                   shuffle, targets=targets, max_norm=cfg.clip)
            rets = np.array(finished) if finished else np.array([np.nan])
            m = IterationMetrics(
                iter=it,
                env_steps=steps,
                mean_return=float(np.mean(rets)),
                min_return=float(np.min(rets)),
                max_return=float(np.max(rets)),
                action_diff_rate=float(np.mean(batch.actions != batch.pseudo_actions)),
                zero_grad_frac=float(np.mean(coeffs == 0.0)),
                grad_norm=gnorm,
                critic_loss=closs,
                wallclock_s=time.perf_counter() - t0,
            )
            result.metrics.append(m)
            if writer is not None:
                writer.writerow([_fmt(v) for v in m.row()])
            if progress and (it % 10 == 0 or it == cfg.iterations - 1):
                log.info("iter %d steps %d return %.1f diff %.3f", it, steps, m.mean_return, m.action_diff_rate)
    except (FloatingPointError, TrainingDiverged) as exc:
        if writer is not None:
            writer.writerow([f"# aborted: {exc}"])
        raise TrainingDiverged(str(exc)) from exc
    finally:
        if fh is not None:
            fh.close()
    if out is not None:
        save_checkpoint(policy, out / "policy.ckpt")
        save_checkpoint(critic, out / "critic.ckpt")
    return result


def read_metrics(path) -> list[IterationMetrics]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            if rec["iter"].startswith("#"):
                continue
            rows.append(IterationMetrics(
                int(rec["iter"]), int(rec["env_steps"]),
                *(float(rec[c]) for c in METRIC_COLUMNS[2:]),
            ))
    return rows


# -- sweeps -----------------------------------------------------------------------

SWEEP_ITERATIONS = 488  # int(1e6 / 2048)
BATCH_SIZES = (256, 512, 1024, 2048)


def sweep_points(template: TrainConfig, axis: str, *, sizes=BATCH_SIZES, seeds=range(5),
                 lr_draws: int = 30, lr_log10_range=(-6.0, -3.0), iterations=SWEEP_ITERATIONS):
    """Expand a sweep into ``(label, config)`` pairs (estimator left as in ``template``)."""
    points = []
    if axis == "batch":
        for b in sizes:
            for s in seeds:
                cfg = dataclasses.replace(template, batch_size=int(b), total_steps=int(b) * iterations, seed=int(s))
                points.append((f"B={b}", cfg))
    elif axis == "lr":
        rng = RngStream(template.seed, 1000)
        exps = rng.uniform(lr_log10_range[0], lr_log10_range[1], size=lr_draws)
        seed_pool = list(seeds)
        picks = rng.integers(0, len(seed_pool), size=lr_draws)
        for k, (x, j) in enumerate(zip(exps, picks)):
            cfg = dataclasses.replace(template, policy_lr=float(10.0**x), critic_lr=None, seed=int(seed_pool[j]))
            points.append((f"cfg{k:02d}", cfg))
    elif axis == "seeds":
        for s in seeds:
            points.append((f"seed={s}", dataclasses.replace(template, seed=int(s))))
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected batch, lr or seeds")
    return points


def _run_point(args):
    label, cfg, run_dir, window = args
    try:
        res = train(cfg, out_dir=run_dir)
        return label, cfg, final_window_return(res.metrics, window), "ok"
    except Exception as exc:  # individual failures are recorded, the sweep goes on
        return label, cfg, float("nan"), f"failed: {exc}"


def sweep(template: TrainConfig, axis: str, out_dir, *, estimators=None, jobs: int = 1, **kw):
    """Run every grid point for every estimator; writes runs.csv and aggregate.csv
    (plus quantiles.csv for the learning-rate study).  Returns the run rows."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    window = 50 if axis == "lr" else 10
    tasks = []
    for name in estimators or [template.estimator]:
        base = dataclasses.replace(template, estimator=name)
        for label, cfg in sweep_points(base, axis, **kw):
            tasks.append((label, cfg, out / name / label, window))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = []
        for t in tasks:
            log.info("sweep run %s %s", t[1].estimator, t[0])
            results.append(_run_point(t))

    rows = []
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "point", "batch_size", "policy_lr", "seed", "final_return", "status"])
        for label, cfg, score, status in results:
            w.writerow([cfg.estimator, label, cfg.batch_size, repr(cfg.policy_lr), cfg.seed, repr(score), status])
            rows.append({"estimator": cfg.estimator, "point": label, "batch_size": cfg.batch_size,
                         "policy_lr": cfg.policy_lr, "seed": cfg.seed, "final_return": score, "status": status})

    groups: dict = {}
    for r in rows:
        key = (r["estimator"], "all" if axis == "lr" else r["point"])
        groups.setdefault(key, []).append(r["final_return"])
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "point", "n_runs", "mean_final_return", "std_final_return"])
        for (name, point), vals in groups.items():
            v = np.array(vals, dtype=np.float64)
            ok = v[~np.isnan(v)]
            w.writerow([name, point, len(ok), repr(float(ok.mean())) if len(ok) else "nan",
                        repr(float(ok.std())) if len(ok) else "nan"])
    if axis == "lr":
        with open(out / "quantiles.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["estimator", "min", "q25", "q50", "q75", "max"])
            for (name, _), vals in groups.items():
                v = np.array(vals, dtype=np.float64)
                v = v[~np.isnan(v)]
                qs = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0]) if len(v) else [np.nan] * 5
                w.writerow([name, *(repr(float(q)) for q in qs)])
    return rows


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
