"""Ensemble estimators: event probabilities, survival decay, stationarity,
ergodic averages and the exponential-martingale check.

Paths are split into fixed chunks of :data:`CHUNK` consecutive indices and
run on a thread pool; every per-path quantity depends only on
``(model, cfg, x0, path_index)`` and reductions run in path order, so
results do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from . import engine
from .errors import AllAbsorbed, DomainError, NonFiniteState, TooFewSurvivors
from .model import ModelSpec
from .simulate import SimConfig, _check_model, ga_setup, pack_model

CHUNK = 256
Z95 = 1.959963984540054
MIN_SURVIVORS = 30


def config_hash(m: ModelSpec, cfg: SimConfig, **extra) -> str:
    blob = json.dumps({"model": m.to_config(), "sim": cfg.to_config(), **extra},
                      sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class McEstimate:
    quantity: str
    n: int
    mean: float
    stderr: float
    ci95: tuple
    seed: int
    config_hash: str

    def row(self):
        return (self.quantity, self.n, repr(self.mean), repr(self.stderr),
                repr(self.ci95[0]), repr(self.ci95[1]), self.seed, self.config_hash)


def wilson(k: int, n: int, z: float = Z95) -> tuple:
    if n == 0:
        return (0.0, 1.0)
    ph = k / n
    den = 1 + z * z / n
    centre = (ph + z * z / (2 * n)) / den
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return (lo, hi)


def proportion(quantity, hits: np.ndarray, seed, chash) -> McEstimate:
    n = int(hits.size)
    k = int(np.count_nonzero(hits))
    ph = k / n
    se = math.sqrt(ph * (1 - ph) / (n - 1)) if n > 1 else math.nan
    return McEstimate(quantity, n, ph, se, wilson(k, n), seed, chash)


def sample_mean(quantity, values: np.ndarray, seed, chash) -> McEstimate:
    n = int(values.size)
    mean = float(np.mean(values)) if n else math.nan
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return McEstimate(quantity, n, mean, se, (mean - Z95 * se, mean + Z95 * se), seed, chash)


RESULT_COLUMNS = ("quantity", "n", "mean", "stderr", "ci_lo", "ci_hi", "seed", "config_hash")


def results_csv(estimates: Sequence[McEstimate], header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for e in estimates:
        w.writerow(e.row())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# ensemble runner


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function: ``indicator`` of the open interval (lo, hi) or ``clip`` of x to [lo, hi]."""

    __test__ = False  # keeps pytest from collecting it

    kind: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in ("indicator", "clip"):
            raise DomainError(f"unknown test function {self.kind!r}")
        if not self.lo < self.hi:
            raise DomainError("test function needs lo < hi")
        if self.kind == "clip" and not math.isfinite(self.hi):
            raise DomainError("clip needs a finite upper bound")

    @property
    def code(self):
        return engine.F_INDICATOR if self.kind == "indicator" else engine.F_CLIP

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "indicator":
            return ((x > self.lo) & (x < self.hi)).astype(float)
        return np.clip(x, self.lo, self.hi)


class Ensemble(NamedTuple):
    outcome: np.ndarray
    t_out: np.ndarray
    occupation: np.ndarray
    t_lower: np.ndarray
    t_upper: np.ndarray
    x_end: np.ndarray
    obs: np.ndarray


def run_ensemble(m: ModelSpec, cfg: SimConfig, x0: float, n: int, t_end: float,
                 obs_times: Sequence[float] = (), lower: float = -math.inf, upper: float = math.inf,
                 stop_lower: bool = False, stop_upper: bool = False, f: TestFunction | None = None,
                 ga=None, workers: int = 1, acknowledge_invalid: bool = False) -> Ensemble:
    """Simulate paths 0..n-1 to ``t_end`` and collect per-path summaries.

    ``ga`` is a :class:`GaSetup`; when given, ``obs`` holds the martingale
    values X^(1-a) exp(int G_a) instead of states.
    """
    if not x0 >= 0 or not math.isfinite(x0):
        raise DomainError("x0 must be finite and >= 0")
    if n < 1:
        raise DomainError("n must be >= 1")
    if workers < 1:
        raise DomainError("workers must be >= 1")
    _check_model(m, acknowledge_invalid)
    n_steps = cfg.step_index(t_end)
    obs_steps = np.array([cfg.step_index(t) for t in obs_times], dtype=np.int64)
    if obs_steps.size and np.any(np.diff(obs_steps) < 0):
        raise DomainError("observation times must be non-decreasing")
    if obs_steps.size and obs_steps[-1] > n_steps:
        raise DomainError("observation time beyond t_end")
    pk = pack_model(m)
    empty = np.zeros(1)
    if ga is None:
        ga_args = (False, 2.0, 0.0, engine.IA_NONE, empty, empty, empty, empty)
    else:
        ga_args = (True, ga.a, ga.cat_factor, ga.ia_mode, ga.ia_z, ga.ia_w, ga.ia_lx, ga.ia_v)
    f_args = (engine.F_NONE, 0.0, 0.0) if f is None else (f.code, float(f.lo), float(f.hi))
    seed = np.uint64(cfg.seed)

    def chunk(start):
        stop = min(start + CHUNK, n)
        size = stop - start
        outs = (np.zeros(size, dtype=np.int64), np.zeros(size), np.zeros(size, dtype=np.int64),
                np.zeros(size), np.zeros(size), np.zeros(size), np.zeros(size))
        obs = np.zeros((size, obs_steps.size))
        bad = engine.run_chunk(start, stop, seed, float(x0), *pk,
                               cfg.dt, cfg.refine, n_steps, cfg.x_abs, cfg.x_max, cfg.rate_cap_factor,
                               obs_steps, obs, float(lower), float(upper), stop_lower, stop_upper,
                               *f_args, *ga_args, *outs)
        return outs, obs, bad, start

    starts = range(0, n, CHUNK)
    if workers == 1:
        parts = [chunk(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(chunk, starts))
    for outs, _, bad, start in parts:
        if bad >= 0:
            code = outs[2][bad]
            why = ("state became non-finite" if code == engine.ERR_NONFINITE
                   else "event rate too large to resolve by halving the step")
            raise NonFiniteState(f"{why} at t={outs[1][bad]!r}", start + int(bad))
    cat = [np.concatenate([p[0][i] for p in parts]) for i in range(7)]
    obs = np.concatenate([p[1] for p in parts], axis=0)
    return Ensemble(cat[0], cat[1], cat[3], cat[4], cat[5], cat[6], obs)


def _absorbed_by(ens: Ensemble, t: float) -> np.ndarray:
    return (ens.outcome == engine.OUT_ABSORBED) & (ens.t_out <= t)


def _exploded_by(ens: Ensemble, t: float) -> np.ndarray:
    return (ens.outcome == engine.OUT_EXPLODED) & (ens.t_out <= t)


EVENTS = ("absorbed-by", "exploded-by", "survives-at")


def event_indicators(ens: Ensemble, event: str, t: float) -> np.ndarray:
    """Per-path indicator; the three events partition the ensemble at every t."""
    if event == "absorbed-by":
        return _absorbed_by(ens, t)
    if event == "exploded-by":
        return _exploded_by(ens, t)
    if event == "survives-at":
        return ~(_absorbed_by(ens, t) | _exploded_by(ens, t))
    raise DomainError(f"unknown event {event!r}; expected one of {EVENTS}")


def estimate_event_prob(m: ModelSpec, cfg: SimConfig, x0: float, event: str, t: float, n: int,
                        workers: int = 1, acknowledge_invalid: bool = False) -> McEstimate:
    """Fraction of n paths realising ``event`` at time t, with a Wilson interval."""
    if n < 100:
        raise DomainError("n must be >= 100")
    if event not in EVENTS:
        raise DomainError(f"unknown event {event!r}; expected one of {EVENTS}")
    if t > cfg.t_max * (1 + 1e-12):
        raise DomainError("t exceeds cfg.t_max")
    ens = run_ensemble(m, cfg, x0, n, t, workers=workers, acknowledge_invalid=acknowledge_invalid)
    chash = config_hash(m, cfg, x0=x0, event=event, t=t, n=n)
    return proportion(f"{event}({t!r})", event_indicators(ens, event, t), cfg.seed, chash)


@dataclass(frozen=True)
class ThresholdCheck:
    base: McEstimate
    tenth: McEstimate
    passed: bool


def threshold_sensitivity(m: ModelSpec, cfg: SimConfig, x0: float, t: float, n: int,
                          workers: int = 1) -> ThresholdCheck:
    """Absorbed-by(t) at x_abs and x_abs/10; they must differ by less than 2 (se_a + se_b)."""
    a = estimate_event_prob(m, cfg, x0, "absorbed-by", t, n, workers)
    b = estimate_event_prob(m, replace(cfg, x_abs=cfg.x_abs / 10), x0, "absorbed-by", t, n, workers)
    diff = abs(a.mean - b.mean)
    return ThresholdCheck(a, b, diff < 2 * (a.stderr + b.stderr) or diff == 0.0)


# ---------------------------------------------------------------------------
# survival decay


@dataclass(frozen=True)
class SurvivalCurve:
    times: np.ndarray
    n: int
    n_alive: np.ndarray
    p_hat: np.ndarray
    stderr: np.ndarray

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "n_alive", "p_hat", "stderr"))
        for row in zip(self.times, self.n_alive, self.p_hat, self.stderr):
            w.writerow((repr(float(row[0])), int(row[1]), repr(float(row[2])), repr(float(row[3]))))
        return buf.getvalue()


def survival_curve(m: ModelSpec, cfg: SimConfig, x0: float, times: Sequence[float], n: int,
                   workers: int = 1) -> SurvivalCurve:
    """P(X_t > 0) on ``times`` from one ensemble (exploded paths count as alive)."""
    times = np.asarray(times, dtype=float)
    ens = run_ensemble(m, cfg, x0, n, float(times.max()), workers=workers)
    alive = np.array([np.count_nonzero(~_absorbed_by(ens, t)) for t in times])
    ph = alive / n
    se = np.sqrt(ph * (1 - ph) / max(n - 1, 1))
    return SurvivalCurve(times, n, alive, ph, se)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of ln P(X_t > 0) - poly_power ln t = intercept + slope t.

    Only times with at least ``MIN_SURVIVORS`` surviving paths enter the fit.
    """

    times: np.ndarray
    log_survival: np.ndarray
    poly_power: float
    slope: float
    intercept: float
    slope_ci: tuple
    curve: SurvivalCurve

    def respects_bound(self, exponent: float, tol: float) -> bool:
        """One-sided comparison with an upper-envelope decay exponent."""
        return self.slope <= exponent + tol


def fit_decay(curve: SurvivalCurve, poly_power: float) -> DecayFit:
    keep = curve.n_alive >= MIN_SURVIVORS
    if np.count_nonzero(keep) < 4:
        raise TooFewSurvivors(f"only {int(np.count_nonzero(keep))} time points with >= "
                              f"{MIN_SURVIVORS} survivors; need 4")
    t = curve.times[keep]
    y = np.log(curve.p_hat[keep]) - poly_power * np.log(t)
    if np.ptp(y) == 0.0:
        slope, intercept, se = 0.0, float(y[0]), 0.0
    else:
        lr = stats.linregress(t, y)
        slope, intercept, se = float(lr.slope), float(lr.intercept), float(lr.stderr)
    q = float(stats.t.ppf(0.975, t.size - 2))
    return DecayFit(t, np.log(curve.p_hat[keep]), poly_power, slope, intercept,
                    (slope - q * se, slope + q * se), curve)


def survival_decay_fit(m: ModelSpec, cfg: SimConfig, x0: float, times: Sequence[float],
                       poly_power: float, n: int, workers: int = 1) -> DecayFit:
    times = np.asarray(times, dtype=float)
    if times.size < 4 or np.any(np.diff(times) <= 0):
        raise DomainError("times must be increasing with at least 4 points")
    if not np.all(times > 0):
        raise DomainError("times must be > 0")
    return fit_decay(survival_curve(m, cfg, x0, times, n, workers), poly_power)


# ---------------------------------------------------------------------------
# stationarity and ergodicity


@dataclass(frozen=True)
class StationaryResult:
    """Snapshot statistics of surviving paths at ``t_end``.

    ``ratio`` is E[X^2]/E[X] with a delta-method standard error; ``residual``
    is the mean of g(X) - X r(X) (1 - E Theta), which vanishes for the
    stationary law; ``ks`` is the two-sample KS statistic between the
    snapshots at t_end and 1.5 t_end of the same paths. ``estimates`` also
    carries the mean at t_burn, for judging how far the burn-in has settled.
    """

    t_end: float
    n_survivors: int
    mean: McEstimate
    second_moment: McEstimate
    ratio: float
    ratio_stderr: float
    residual: McEstimate
    ks: float
    snapshot: np.ndarray = field(repr=False)
    estimates: tuple = field(default=(), repr=False)
    states: np.ndarray = field(default=None, repr=False)

    def ensemble_mean(self, f: TestFunction) -> McEstimate:
        """E[f(X_t_end)] over all paths (absorbed ones contribute f(0))."""
        vals = np.asarray(f(self.states))
        return sample_mean(f"E[{f.kind}(X_{self.t_end!r})]", vals, self.mean.seed, self.mean.config_hash)


def stationary_estimate(m: ModelSpec, cfg: SimConfig, x0: float, t_burn: float, t_end: float, n: int,
                        workers: int = 1, check_regime: bool = True) -> StationaryResult:
    from .criteria import kernel_moment

    if not 0 <= t_burn < t_end:
        raise DomainError("need 0 <= t_burn < t_end")
    if check_regime:
        from .regimes import classify
        summ = classify(m)
        if not any(c.statement.startswith("convergence in law") for c in summ.conclusions):
            warnings.warn("model is not classified as converging in law on the default grids",
                          RuntimeWarning, stacklevel=2)
    t_late = cfg.dt * round(1.5 * t_end / cfg.dt)
    sim_cfg = cfg if cfg.t_max >= t_late else replace(cfg, t_max=t_late)
    ens = run_ensemble(m, sim_cfg, x0, n, t_late, obs_times=(t_burn, t_end, t_late), workers=workers)
    x_end = ens.obs[:, 1]
    alive = np.isfinite(x_end) & (x_end > 0)
    if not np.any(alive):
        raise AllAbsorbed(f"no path survives to t={t_end!r}")
    xs = x_end[alive]
    chash = config_hash(m, cfg, x0=x0, t_burn=t_burn, t_end=t_end, n=n)
    mean = sample_mean("E[X]", xs, cfg.seed, chash)
    sec = sample_mean("E[X^2]", xs * xs, cfg.seed, chash)
    ratio = sec.mean / mean.mean
    # delta method for a ratio of correlated means
    k = xs.size
    if k > 1:
        cov = np.cov(np.vstack([xs * xs, xs]), ddof=1) / k
        grad = np.array([1 / mean.mean, -sec.mean / mean.mean ** 2])
        ratio_se = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    else:
        ratio_se = math.nan
    one_minus = 1.0 - kernel_moment(m.kappa, 1.0)
    resid_vals = np.asarray(m.g(xs)) - xs * np.asarray(m.r(xs)) * one_minus
    resid = sample_mean("stationarity_residual", np.atleast_1d(resid_vals), cfg.seed, chash)
    late = ens.obs[:, 2]
    late = late[np.isfinite(late) & (late > 0)]
    ks = float(stats.ks_2samp(xs, late).statistic) if late.size else 1.0
    ratio_est = McEstimate("E[X^2]/E[X]", k, ratio, ratio_se,
                           (ratio - Z95 * ratio_se, ratio + Z95 * ratio_se), cfg.seed, chash)
    burn = ens.obs[:, 0]
    burn = burn[np.isfinite(burn) & (burn > 0)]
    burn_est = sample_mean("E[X] at t_burn", burn, cfg.seed, chash)
    ks_est = McEstimate("ks(t_end,1.5t_end)", k, ks, math.nan, (math.nan, math.nan), cfg.seed, chash)
    return StationaryResult(t_end, k, mean, sec, ratio, ratio_se, resid, ks, xs,
                            (burn_est, mean, sec, ratio_est, resid, ks_est), x_end)


@dataclass(frozen=True)
class ErgodicResult:
    value: float
    complete: bool
    outcome: str
    t_covered: float


def ergodic_average(m: ModelSpec, cfg: SimConfig, x0: float, f: TestFunction, t_end: float,
                    path_index: int = 0) -> ErgodicResult:
    """Time average of f along one path by left Riemann sums on the full stream.

    A path that is absorbed or explodes first yields the average over the
    covered window with ``complete=False``.
    """
    from .simulate import OUTCOMES

    if not x0 >= 0 or not math.isfinite(x0):
        raise DomainError("x0 must be finite and >= 0")
    _check_model(m, False)
    sim_cfg = cfg if cfg.t_max >= t_end else replace(cfg, t_max=t_end)
    ens = _single(m, sim_cfg, x0, path_index, t_end, f)
    out = int(ens.outcome[0])
    covered = float(ens.t_out[0]) if out != engine.OUT_HORIZON else t_end
    value = float(ens.occupation[0]) / covered if covered > 0 else math.nan
    return ErgodicResult(value, out == engine.OUT_HORIZON, OUTCOMES[out], covered)


def _single(m, cfg, x0, path_index, t_end, f):
    pk = pack_model(m)
    empty = np.zeros(1)
    outs = (np.zeros(1, dtype=np.int64), np.zeros(1), np.zeros(1, dtype=np.int64),
            np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1))
    engine.run_chunk(path_index, path_index + 1, np.uint64(cfg.seed), float(x0), *pk,
                     cfg.dt, cfg.refine, cfg.step_index(t_end), cfg.x_abs, cfg.x_max, cfg.rate_cap_factor,
                     np.zeros(0, dtype=np.int64), np.zeros((1, 0)), -np.inf, np.inf, False, False,
                     f.code, float(f.lo), float(f.hi),
                     False, 2.0, 0.0, engine.IA_NONE, empty, empty, empty, empty, *outs)
    if outs[2][0] != engine.ERR_NONE:
        raise NonFiniteState("state became non-finite", path_index)
    return Ensemble(outs[0], outs[1], outs[3], outs[4], outs[5], outs[6], np.zeros((1, 0)))


def ensemble_mean_f(m: ModelSpec, cfg: SimConfig, x0: float, f: TestFunction, t: float, n: int,
                    workers: int = 1) -> McEstimate:
    """E[f(X_t)] over the ensemble (absorbed paths contribute f(0))."""
    ens = run_ensemble(m, cfg, x0, n, t, obs_times=(t,), workers=workers)
    vals = np.asarray(f(ens.obs[:, 0]))
    return sample_mean(f"E[{f.kind}(X_{t!r})]", vals, cfg.seed, config_hash(m, cfg, x0=x0, t=t, n=n))


# ---------------------------------------------------------------------------
# martingale check and running-minimum surrogate


@dataclass(frozen=True)
class MartingaleRow:
    t: float
    estimate: McEstimate
    target: float
    deviation: float
    allowed: float
    flagged: bool


@dataclass(frozen=True)
class MartingaleReport:
    a: float
    c: float
    b: float
    rows: tuple

    @property
    def passed(self) -> bool:
        return not any(r.flagged for r in self.rows)

    def to_text(self) -> str:
        lines = [f"martingale check a={self.a!r} band=({self.c!r}, {self.b!r})"]
        for r in self.rows:
            lines.append(f"t={r.t!r} mean={r.estimate.mean!r} stderr={r.estimate.stderr!r} "
                         f"target={r.target!r} deviation={r.deviation!r} allowed={r.allowed!r} "
                         f"{'FLAG' if r.flagged else 'ok'}")
        return "\n".join(lines) + "\n"


def martingale_check(m: ModelSpec, cfg: SimConfig, x0: float, a: float, c: float, b: float,
                     checkpoints: Sequence[float], n: int, budget: float = 0.02,
                     workers: int = 1) -> MartingaleReport:
    """MC means of X_{t^T}^(1-a) exp(int_0^{t^T} G_a) against x0^(1-a), T the exit time of (c, b)."""
    if not 0 < c < x0 < b:
        raise DomainError("need 0 < c < x0 < b")
    ga = ga_setup(m, a, c, b)  # DomainError at a = 1, InfiniteMoment outside the admissible set
    cps = np.asarray(checkpoints, dtype=float)
    order = np.argsort(cps, kind="stable")
    t_end = float(cps.max())
    sim_cfg = cfg if cfg.t_max >= t_end else replace(cfg, t_max=max(t_end, 2 * cfg.dt))
    ens = run_ensemble(m, sim_cfg, x0, n, t_end, obs_times=cps[order], lower=c, upper=b,
                       stop_lower=True, stop_upper=True, ga=ga, workers=workers)
    target = x0 ** (1.0 - a)
    chash = config_hash(m, cfg, x0=x0, a=a, c=c, b=b, n=n)
    rows = []
    for j, idx in enumerate(order):
        t = float(cps[idx])
        est = sample_mean(f"Z({t!r})", ens.obs[:, j], cfg.seed, chash)
        dev = abs(est.mean - target)
        se = est.stderr if math.isfinite(est.stderr) else 0.0
        allowed = 3 * se + budget
        rows.append((idx, MartingaleRow(t, est, target, dev, allowed, not dev <= allowed)))
    rows.sort(key=lambda r: r[0])
    return MartingaleReport(a, c, b, tuple(r for _, r in rows))


def running_minimum_fraction(m: ModelSpec, cfg: SimConfig, x0: float, level_fraction: float,
                             horizon: float, n: int, workers: int = 1) -> McEstimate:
    """Fraction of paths whose running minimum drops below level_fraction * x0 by ``horizon``.

    Finite-horizon surrogate for liminf X_t = 0.
    """
    lower = level_fraction * x0
    sim_cfg = cfg if cfg.t_max >= horizon else replace(cfg, t_max=horizon)
    ens = run_ensemble(m, sim_cfg, x0, n, horizon, lower=lower, stop_lower=True, workers=workers)
    hit = ens.t_lower <= horizon
    return proportion(f"running-min<{lower!r} by {horizon!r}", hit, cfg.seed,
                      config_hash(m, cfg, x0=x0, level=lower, horizon=horizon, n=n))
