"""Path generation for the jump diffusion with catastrophes.

The numerical work happens in :mod:`branchcat.engine`; this module packs a
:class:`ModelSpec` into flat arrays, checks inputs, and turns engine output
into :class:`PathRecord` objects.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import engine
from .criteria import catastrophe_factor, eval_I_a, jump_functionals
from .errors import DomainError, ModelError, NonFiniteState
from .model import ModelSpec, validate_assumptions
from .rng import STREAM_ID

_COEF_CODES = {"zero": 0, "linear": 1, "power": 2, "affine": 3, "logistic": 4, "table": 5}
_KERNEL_CODES = {"atom": 0, "discrete": 1, "uniform": 2, "beta": 3}
_JUMP_CODES = {"zero": 0, "atoms": 1, "exponential": 2, "truncated-power": 3}

VALIDATION_GRID = np.logspace(-8, 4, 61)
# log-spaced nodes for interpolating I_a(x) of density jump measures
IA_TABLE_POINTS = 2001


@dataclass(frozen=True)
class SimConfig:
    """Discretisation parameters.

    ``refine`` splits every step of length ``dt`` into ``2**refine`` pieces
    driven by the same Brownian path and event clocks; ``refine=1`` is the
    coupled "half dt" run of a ``refine=0`` run. ``decimation`` keeps every
    k-th sub-step in a :class:`PathRecord` (events are always kept).
    """

    t_max: float
    dt: float = 1e-3
    x_abs: float = 1e-9
    x_max: float = 1e12
    rate_cap_factor: float = 0.1
    seed: int = 0
    refine: int = 0
    decimation: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ModelError("dt must be > 0", "sim.dt")
        if not self.t_max > self.dt:
            raise ModelError("t_max must exceed dt", "sim.t_max")
        if not 0 <= self.x_abs < self.x_max:
            raise ModelError("need 0 <= x_abs < x_max", "sim.x_abs")
        if not self.rate_cap_factor > 0:
            raise ModelError("rate_cap_factor must be > 0", "sim.rate_cap_factor")
        if not 0 <= self.seed < 2 ** 64:
            raise ModelError("seed must be an unsigned 64-bit integer", "sim.seed")
        if not 0 <= self.refine <= 20:
            raise ModelError("refine must lie in [0, 20]", "sim.refine")
        if self.decimation < 1:
            raise ModelError("decimation must be >= 1", "sim.decimation")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def step_index(self, t: float) -> int:
        """Base-step index of an observation time, which must lie on the dt grid."""
        if t < 0 or t > self.t_max * (1 + 1e-12):
            raise DomainError(f"time {t!r} outside [0, t_max={self.t_max!r}]")
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, t):
            raise DomainError(f"time {t!r} is not a multiple of dt={self.dt!r}")
        return k

    def to_config(self) -> dict:
        return {"dt": self.dt, "t_max": self.t_max, "x_abs": self.x_abs, "x_max": self.x_max,
                "rate_cap_factor": self.rate_cap_factor, "seed": self.seed,
                "refine": self.refine, "decimation": self.decimation}


class Packed(NamedTuple):
    ccode: np.ndarray
    cpar: np.ndarray
    tab_x: np.ndarray
    tab_y: np.ndarray
    tab_off: np.ndarray
    kcode: int
    kpar: np.ndarray
    kval: np.ndarray
    kcum: np.ndarray
    jcode: int
    jpar: np.ndarray
    jval: np.ndarray
    jcum: np.ndarray
    m0: float
    m1: float


def pack_model(m: ModelSpec) -> Packed:
    ccode = np.zeros(4, dtype=np.int64)
    cpar = np.zeros((4, 2))
    tab_off = np.zeros((4, 2), dtype=np.int64)
    xs_all, ys_all = [], []
    for i, fn in enumerate((m.g, m.sigma2, m.p, m.r)):
        ccode[i] = _COEF_CODES[fn.family]
        if fn.family == "table":
            tab_off[i] = (len(xs_all), len(xs_all) + len(fn.params[0]))
            xs_all += list(fn.params[0])
            ys_all += list(fn.params[1])
        else:
            cpar[i, :len(fn.params)] = fn.params
    kap = m.kappa
    kpar = np.zeros(2)
    kval = np.ones(1)
    kcum = np.ones(1)
    at = kap.atoms()
    if at is not None:
        kval = at[0].astype(float)
        kcum = np.cumsum(at[1])
        kcum[-1] = 1.0
    elif kap.family == "beta":
        kpar[:] = kap.params
    pi = m.pi
    jf = jump_functionals(pi)
    jpar = np.zeros(4)
    jval = np.zeros(1)
    jcum = np.ones(1)
    if pi.family == "atoms":
        zs, w = pi.atom_view()
        jval = zs.astype(float)
        jcum = np.cumsum(w) / w.sum() if w.sum() > 0 else np.ones_like(w)
        jcum[-1] = 1.0
    elif pi.family != "zero":
        jpar[:len(pi.params)] = pi.params
    return Packed(ccode, cpar, np.array(xs_all, dtype=float), np.array(ys_all, dtype=float), tab_off,
                  _KERNEL_CODES[kap.family], kpar, kval, kcum,
                  _JUMP_CODES[pi.family], jpar, jval, jcum, float(jf.m0), float(jf.m1))


class GaSetup(NamedTuple):
    a: float
    cat_factor: float
    ia_mode: int
    ia_z: np.ndarray
    ia_w: np.ndarray
    ia_lx: np.ndarray
    ia_v: np.ndarray


def ga_setup(m: ModelSpec, a: float, lo: float, hi: float) -> GaSetup:
    """Engine inputs for accumulating G_a on [lo, hi].

    Atomic jump measures are summed exactly inside the engine; density
    families use I_a tabulated on a log grid over [lo, hi].
    """
    if a == 1 or abs(a - 1) < 1e-6:
        raise DomainError("a = 1 is excluded from G_a")
    if not a > 0:
        raise DomainError("a must be > 0")
    cat = catastrophe_factor(m.kappa, a)
    empty = np.zeros(1)
    if m.p.family == "zero" or m.pi.total_mass == 0:
        return GaSetup(a, cat, engine.IA_NONE, empty, empty, empty, empty)
    at = m.pi.atom_view()
    if at is not None:
        return GaSetup(a, cat, engine.IA_ATOMS, at[0].astype(float), at[1].astype(float), empty, empty)
    if not (0 < lo < hi and math.isfinite(hi)):
        raise DomainError("G_a accumulation with a density jump measure needs a finite window 0 < lo < hi")
    lx = np.linspace(math.log(lo), math.log(hi), IA_TABLE_POINTS)
    v = np.array([eval_I_a(m.pi, math.exp(u), a) for u in lx])
    return GaSetup(a, cat, engine.IA_TABLE, empty, empty, lx, v)


OUTCOMES = {engine.OUT_HORIZON: "ran-to-horizon", engine.OUT_ABSORBED: "absorbed",
            engine.OUT_EXPLODED: "exploded", engine.OUT_STOPPED: "stopped"}
EVENT_KINDS = {engine.EV_JUMP: "posjump", engine.EV_CATASTROPHE: "catastrophe"}


@dataclass
class PathRecord:
    """One simulated trajectory.

    ``times``/``states`` hold the decimated record (every k-th sub-step plus
    every event). ``events`` rows are ``(t, kind, magnitude, x_before, x_after)``
    with kind 1 = positive jump of size z, 2 = catastrophe with factor theta.
    ``lows``/``highs`` are the full-resolution ladder points (each new running
    minimum / maximum with its time), which is all hitting times need.
    """

    times: np.ndarray
    states: np.ndarray
    events: np.ndarray
    outcome: str
    outcome_time: float
    lows: np.ndarray
    highs: np.ndarray
    path_index: int = 0
    seed: int = 0
    ga_integral: dict = field(default_factory=dict)

    def event_list(self):
        return [(float(t), EVENT_KINDS[int(k)], float(mag)) for t, k, mag, _, _ in self.events]


def _check_model(m: ModelSpec, acknowledge_invalid: bool):
    if acknowledge_invalid:
        return
    rep = validate_assumptions(m, VALIDATION_GRID)
    if not rep.passed:
        failed = [c.name for c in rep.clauses if c.status not in ("pass", "heuristic-pass")]
        raise DomainError("model fails standing assumptions (" + "; ".join(failed)
                          + "); pass acknowledge_invalid=True to simulate anyway")


def simulate_path(m: ModelSpec, cfg: SimConfig, x0: float, path_index: int = 0,
                  acknowledge_invalid: bool = False) -> PathRecord:
    """Simulate path ``path_index`` of the ensemble keyed by ``cfg.seed``."""
    if not x0 >= 0 or not math.isfinite(x0):
        raise DomainError("x0 must be finite and >= 0")
    if path_index < 0 or path_index >= 2 ** 32:
        raise DomainError("path_index must fit in 32 bits")
    _check_model(m, acknowledge_invalid)
    pk = pack_model(m)
    empty = np.zeros(1)
    caps = [min(cfg.n_steps * 2 ** cfg.refine // cfg.decimation + 64, 1 << 20), 1024, 4096, 4096]
    while True:
        rec, events, lows, highs = (np.empty((caps[0], 2)), np.empty((caps[1], 5)),
                                    np.empty((caps[2], 2)), np.empty((caps[3], 2)))
        res = engine.run_path(path_index, np.uint64(cfg.seed), float(x0), *pk,
                              cfg.dt, cfg.refine, cfg.n_steps, cfg.x_abs, cfg.x_max, cfg.rate_cap_factor,
                              np.zeros(0, dtype=np.int64), np.zeros(0),
                              -np.inf, np.inf, False, False,
                              engine.F_NONE, 0.0, 0.0,
                              False, 2.0, 0.0, engine.IA_NONE, empty, empty, empty, empty,
                              True, cfg.decimation, rec, events, lows, highs)
        outcome, t_out, err, _, _, _, _, n_rec, n_ev, n_lows, n_highs = res
        if err != engine.ERR_BUFFER:
            break
        # the path is a pure function of its inputs, so a rerun reproduces it
        full = [n_rec >= caps[0], n_ev >= caps[1], n_lows >= caps[2], n_highs >= caps[3]]
        caps = [c * 4 if f else c for c, f in zip(caps, full)]
    if err == engine.ERR_NONFINITE:
        raise NonFiniteState(f"state became non-finite at t={t_out!r}", path_index)
    if err == engine.ERR_RATE:
        raise NonFiniteState("event rate too large to resolve by halving the step", path_index)
    return PathRecord(rec[:n_rec, 0].copy(), rec[:n_rec, 1].copy(), events[:n_ev].copy(),
                      OUTCOMES[outcome], float(t_out), lows[:n_lows].copy(), highs[:n_highs].copy(),
                      path_index, cfg.seed)


class HittingTimes(NamedTuple):
    tau_minus: float
    tau_plus: float


def hitting_times(rec: PathRecord, lower: float | None = None, upper: float | None = None) -> HittingTimes:
    """First times the full-resolution path goes strictly below ``lower`` / above ``upper``.

    ``inf`` when the level is never crossed. An exploded path crosses every
    upper level at the latest at its explosion time.
    """
    tm = tp = math.inf
    if lower is not None:
        if not lower > 0:
            raise DomainError("lower must be > 0")
        hit = np.nonzero(rec.lows[:, 1] < lower)[0]
        if hit.size:
            tm = float(rec.lows[hit[0], 0])
    if upper is not None:
        if not upper > 0:
            raise DomainError("upper must be > 0")
        hit = np.nonzero(rec.highs[:, 1] > upper)[0]
        if hit.size:
            tp = float(rec.highs[hit[0], 0])
        elif rec.outcome == "exploded":
            tp = rec.outcome_time
    return HittingTimes(tm, tp)


def accumulate_Ga(m: ModelSpec, rec: PathRecord, a: float, checkpoints, stop_time: float = math.inf):
    """Left Riemann sums of G_a along the stored path, one per checkpoint.

    The sum for checkpoint t covers [0, min(t, stop_time)]. Stored states
    are treated as held constant until the next stored time, so the sum is
    exact for piecewise-constant paths and uses the full stream when
    ``decimation == 1``.
    """
    from .criteria import eval_G_a

    ga_setup(m, a, 1.0, 2.0)  # parameter checks
    cps = np.asarray(checkpoints, dtype=float)
    t = rec.times
    x = rec.states
    out = np.zeros(cps.size)
    for j, cp in enumerate(cps):
        end = min(cp, stop_time)
        total = 0.0
        for i in range(t.size):
            if t[i] >= end:
                break
            nxt = t[i + 1] if i + 1 < t.size else end
            w = min(nxt, end) - t[i]
            if w <= 0:
                continue
            if not x[i] > 0:
                raise DomainError(f"state {x[i]!r} <= 0 at t={t[i]!r} inside the accumulation window")
            total += eval_G_a(m, float(x[i]), a).value * w
        out[j] = total
    rec.ga_integral[a] = out
    return out


def _header(lines) -> str:
    return "".join(f"# {line}\n" for line in lines)


def path_csv(rec: PathRecord, header_lines=()) -> str:
    buf = io.StringIO()
    buf.write(_header([*header_lines, f"stream {STREAM_ID}", f"path_index {rec.path_index}",
                       f"outcome {rec.outcome} {rec.outcome_time!r}"]))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("t", "x"))
    for t, x in zip(rec.times, rec.states):
        w.writerow((repr(float(t)), repr(float(x))))
    return buf.getvalue()


def events_csv(rec: PathRecord, header_lines=()) -> str:
    buf = io.StringIO()
    buf.write(_header([*header_lines, f"stream {STREAM_ID}", f"path_index {rec.path_index}"]))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("t", "kind", "magnitude", "x_before", "x_after"))
    for t, k, mag, xb, xa in rec.events:
        w.writerow((repr(float(t)), EVENT_KINDS[int(k)], repr(float(mag)), repr(float(xb)), repr(float(xa))))
    return buf.getvalue()
