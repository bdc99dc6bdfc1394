"""Grid surrogates for the absorption, explosion and long-time growth conditions.

Every condition is asymptotic or universally quantified over x; here each is
evaluated on a finite user grid and the verdict is labelled as a numeric
surrogate. Margins are signed so that ``margin >= 0`` means satisfied.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .criteria import (catastrophe_factor, eval_H, eval_I, eval_I_a, gvfg_jump_integral, in_A,
                       kernel_log_moment, kernel_moment)
from .errors import DomainError, NoRoot
from .model import ModelSpec

CAVEAT = "numeric surrogate of an asymptotic condition"
DEFAULT_A_SCAN = (0.25, 0.5, 0.75, 1.25, 1.5, 2.0)
DEFAULT_SLACK = 0.1
DEFAULT_ETA = 0.1
DEFAULT_GROWTH_ETA = 0.01
DEFAULT_NEAR_GRID = np.logspace(-8, -2, 61)
DEFAULT_LARGE_GRID = np.logspace(2, 8, 61)

BISECT_TOL = 1e-12
BISECT_MAXITER = 200
BISECT_HI = 1.0 - 1e-12


class ConditionId(str, Enum):
    SN0 = "SN0"
    LN0 = "LN0"
    SN_INF = "SN_INF"
    LN_INF = "LN_INF"
    LSG = "LSG"
    LFG = "LFG"
    GSG = "GSG"
    GFG = "GFG"
    GVFG = "GVFG"


SATISFIED = "satisfied-on-grid"
VIOLATED = "violated-on-grid"


@dataclass(frozen=True)
class RegimeReport:
    condition: ConditionId
    params: dict
    grid: tuple
    margin: tuple
    verdict: str
    rejected: tuple = ()
    caveat: str = CAVEAT

    @property
    def satisfied(self) -> bool:
        return self.verdict == SATISFIED

    @property
    def min_margin(self) -> float:
        return min(self.margin) if self.margin else math.nan


def _verdict(margins) -> str:
    return SATISFIED if margins and min(margins) >= 0 else VIOLATED


def _noise_expr(m: ModelSpec, x: float, a: float) -> float:
    """g/x - a sigma2/x^2 - p I_a: the part of G_a/(a-1) without catastrophes."""
    px = m.p(x)
    jump = px * eval_I_a(m.pi, x, a) if px != 0 else 0.0
    return m.g(x) / x - a * m.sigma2(x) / (x * x) - jump


def _noise_expr_inf(m: ModelSpec, x: float, a: float) -> float:
    return _noise_expr(m, x, a) - m.r(x) * catastrophe_factor(m.kappa, a)


def _ratio(m: ModelSpec, x: float) -> float:
    """g(x)/(x r(x)); 0/0 is read as 0 (no growth and no catastrophes)."""
    gx, rx = m.g(x) / x, m.r(x)
    if rx == 0:
        return 0.0 if gx == 0 else math.copysign(math.inf, gx)
    return gx / rx


def _growth_margins(m, c, eta, grid, rate_floor):
    elog = kernel_log_moment(m.kappa, 0.0)
    out = []
    for x in grid:
        rx = m.r(x)
        s = _ratio(m, x) + elog
        if c == ConditionId.GVFG:
            if rx == 0:
                extra = 0.0 if (m.sigma2(x) == 0 and m.p(x) == 0) else math.inf
            else:
                px = m.p(x)
                jump = px / rx * gvfg_jump_integral(m.pi, x) if px != 0 else 0.0
                extra = 2.0 * m.sigma2(x) / (x * x * rx) + jump
            s -= extra
        margin = -eta - s if c == ConditionId.GSG else s - eta
        if rate_floor is not None and rx < rate_floor:
            margin = min(margin, rx - rate_floor)
        out.append(margin)
    return out


def _extreme_decade(grid, low: bool):
    grid = np.asarray(grid, dtype=float)
    if low:
        return grid[grid <= grid[0] * 10.0]
    return grid[grid >= grid[-1] / 10.0]


def check_condition(m: ModelSpec, c, params: Mapping | None = None,
                    grid: Sequence[float] = ()) -> RegimeReport:
    """Evaluate one named condition on a grid.

    params: ``a`` (SN/LN), ``slack`` (SN, default 0.1), ``eta``, ``x0``/``x1``,
    ``rate_floor`` (global growth conditions; when given, grid points with
    r(x) < rate_floor carry the shortfall as their margin).
    """
    c = ConditionId(c)
    params = dict(params or {})
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be non-empty, positive and strictly increasing")

    rejected = []
    xs, margins = [], []
    if c in (ConditionId.SN0, ConditionId.SN_INF):
        a = params.get("a")
        if a is None:
            raise DomainError(f"{c.value} needs the exponent a")
        if c == ConditionId.SN0 and not in_A(m.kappa, a):
            raise DomainError(f"SN0 needs a > 1 with E[Theta^(1-a)] finite; got a = {a}")
        if c == ConditionId.SN_INF and not 0 < a < 1:
            raise DomainError(f"SN_INF needs a in (0, 1); got a = {a}")
        slack = params.setdefault("slack", DEFAULT_SLACK)
        for x in _extreme_decade(grid, low=c == ConditionId.SN0):
            bound = slack * abs(math.log(x))
            if c == ConditionId.SN0:
                # a non-negative part is allowed; only the negative excursion is bounded
                margins.append(_noise_expr(m, x, a) + bound)
            else:
                margins.append(bound - _noise_expr_inf(m, x, a))
            xs.append(float(x))
    elif c in (ConditionId.LN0, ConditionId.LN_INF):
        a = params.get("a")
        if a is None:
            raise DomainError(f"{c.value} needs the exponent a")
        if c == ConditionId.LN0 and not 0 < a < 1:
            raise DomainError(f"LN0 needs a in (0, 1); got a = {a}")
        if c == ConditionId.LN_INF and not in_A(m.kappa, a):
            raise DomainError(f"LN_INF needs a > 1 with E[Theta^(1-a)] finite; got a = {a}")
        eta = params.setdefault("eta", DEFAULT_ETA)
        if not eta > 0:
            raise DomainError("eta must be > 0")
        low = c == ConditionId.LN0
        x0 = params.setdefault("x0", float(grid[-1] if low else grid[0]))
        for x in grid:
            if (low and x > x0) or (not low and x < x0):
                continue
            lx = math.log(1.0 / x) if low else math.log(x)
            if lx <= 0 or math.log(lx) < 0:
                rejected.append((float(x), "ln ln bound is not real here"))
                continue
            bound = lx * math.log(lx) ** (1.0 + eta)
            if low:
                margins.append(-bound - _noise_expr(m, x, a))
            else:
                margins.append(_noise_expr_inf(m, x, a) - bound)
            xs.append(float(x))
    elif c in (ConditionId.LSG, ConditionId.LFG):
        eta = params.setdefault("eta", DEFAULT_GROWTH_ETA)
        if not eta > 0:
            raise DomainError("eta must be > 0")
        if c == ConditionId.LSG:
            x0 = params.setdefault("x0", float(grid[0]))
            sel = [x for x in grid if x >= x0]
        else:
            x1 = params.setdefault("x1", float(grid[-1]))
            sel = [x for x in grid if x <= x1]
        for x in sel:
            h = eval_H(m, x).value
            margins.append(-eta - h if c == ConditionId.LSG else h - eta)
            xs.append(float(x))
    else:
        eta = params.setdefault("eta", DEFAULT_GROWTH_ETA)
        if c == ConditionId.GFG and not eta > 0:
            raise DomainError("GFG needs eta > 0")
        if eta < 0:
            raise DomainError("eta must be >= 0")
        rate_floor = params.get("rate_floor")
        xs = [float(x) for x in grid]
        margins = _growth_margins(m, c, eta, grid, rate_floor)

    return RegimeReport(c, params, tuple(xs), tuple(float(v) for v in margins),
                        _verdict(margins), tuple(rejected))


def reports_csv(reports: Iterable[RegimeReport], header_lines: Iterable[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("condition", "params", "x", "margin"))
    for rep in reports:
        ptxt = ";".join(f"{k}={v!r}" for k, v in sorted(rep.params.items()))
        for x, mg in zip(rep.grid, rep.margin):
            w.writerow((rep.condition.value, ptxt, repr(x), repr(mg)))
    return buf.getvalue()


# ---------------------------------------------------------------------------
# decay-rate bounds


@dataclass(frozen=True)
class RateBound:
    case: str  # "sub" | "critical" | "weak" | "eta-zero"
    exponent: float
    poly_power: float
    tau: float | None = None
    residual: float | None = None
    vacuous: bool = False
    notes: tuple = ()


def _bisect_tau(phi, lo=0.0, hi=BISECT_HI):
    flo, fhi = phi(lo), phi(hi)
    if fhi <= 0:
        raise NoRoot(f"phi(1-) = {fhi!r} <= 0: no root in [0, 1)")
    if flo >= 0:
        return lo
    for _ in range(BISECT_MAXITER):
        mid = 0.5 * (lo + hi)
        fm = phi(mid)
        if fm < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= BISECT_TOL:
            break
    # pick the bracket end with the smaller residual
    return lo if abs(phi(lo)) <= abs(phi(hi)) else hi


def decay_rate_bounds(m: ModelSpec, eta: float, rate_floor: float,
                      grid: Sequence[float] | None = None) -> RateBound:
    """Exponent and polynomial power of the survival-probability upper bound.

    ``P(X_t > 0) = O(t^poly_power * exp(exponent * t))`` under the slow-growth
    condition with (eta, rate_floor). When ``grid`` is given the condition is
    checked there and a warning is emitted if it fails.
    """
    if eta < 0 or not rate_floor > 0:
        raise DomainError("need eta >= 0 and rate_floor > 0")
    notes = []
    if grid is not None:
        rep = check_condition(m, ConditionId.GSG, {"eta": eta, "rate_floor": rate_floor}, grid)
        if not rep.satisfied:
            warnings.warn(f"GSG(eta={eta}, rate_floor={rate_floor}) is violated on the grid; "
                          "the bound is not supported", RuntimeWarning, stacklevel=2)
            notes.append("GSG violated-on-grid")
        xs = np.asarray(grid, dtype=float)
        if not np.min(m.sigma2(xs) / xs) > 0:
            notes.append("inf sigma2(x)/x > 0 fails on the grid")
    if eta == 0:
        return RateBound("eta-zero", 0.0, -0.5, notes=tuple(notes))
    e_log = kernel_log_moment(m.kappa, 0.0)
    e_inv = -e_log  # E[ln 1/Theta]
    d = kernel_log_moment(m.kappa, 1.0) - e_log  # E[(Theta - 1) ln Theta]
    if math.isclose(d, eta, rel_tol=1e-12, abs_tol=1e-15):
        exponent = rate_floor * (e_inv - eta - 0.5)
        return RateBound("critical", exponent, -0.5, vacuous=exponent >= 0, notes=tuple(notes))
    if d < eta:
        exponent = rate_floor * (e_inv - eta - 0.5)
        return RateBound("sub", exponent, 0.0, vacuous=exponent >= 0, notes=tuple(notes))

    def phi(tau):
        return e_inv - eta + kernel_log_moment(m.kappa, tau)

    tau = _bisect_tau(phi)
    exponent = rate_floor * (e_inv - eta + kernel_moment(m.kappa, tau) - 1.0)
    if exponent >= 0:
        notes.append("bound is vacuous for these parameters")
    return RateBound("weak", exponent, -1.5, tau=tau, residual=phi(tau), vacuous=exponent >= 0,
                     notes=tuple(notes))


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class Conclusion:
    statement: str
    hypotheses: tuple
    caveat: str = CAVEAT


@dataclass
class Summary:
    conclusions: list = field(default_factory=list)
    inconclusive: list = field(default_factory=list)
    reports: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = []
        for c in self.conclusions:
            lines.append(f"{c.statement} (hypotheses satisfied-on-grid: {', '.join(c.hypotheses)})")
        for topic in self.inconclusive:
            lines.append(f"{topic}: inconclusive on supplied grids")
        lines.append(f"caveat: every verdict is a {CAVEAT}")
        return "\n".join(lines) + "\n"

    def statements(self) -> list[str]:
        return [c.statement for c in self.conclusions]


def _bounded_on_grids(fn, near, large, factor=2.0) -> bool:
    """Surrogate for boundedness: no growth by more than ``factor`` across either extreme decade."""
    for grid, low in ((near, True), (large, False)):
        dec = _extreme_decade(grid, low)
        v_end, v_in = float(fn(dec[0] if low else dec[-1])), float(fn(dec[-1] if low else dec[0]))
        if not math.isfinite(v_end) or v_end > factor * max(v_in, 0.0) and v_end > 0:
            return False
    return True


def _tag(rep) -> str:
    """Condition label with its parameters; a list of reports differing only in ``a`` is merged."""
    reps = rep if isinstance(rep, list) else [rep]
    first = reps[0]
    keys = [k for k in ("a", "eta", "slack", "rate_floor") if k in first.params]
    parts = []
    for k in keys:
        if k == "a" and len(reps) > 1:
            parts.append("a in {" + ", ".join(repr(r.params["a"]) for r in reps) + "}")
        else:
            parts.append(f"{k}={first.params[k]!r}")
    return first.condition.value + "(" + ", ".join(parts) + ")"


def classify(m: ModelSpec, params: Mapping | None = None,
             grids: tuple[Sequence[float], Sequence[float]] | None = None) -> Summary:
    """Run every condition check on a near-zero and a large-x grid and state what follows.

    params: ``a_scan``, ``slack``, ``eta_ln`` (LN0/LN_INF), ``eta_local``
    (LSG/LFG), ``eta_global`` (GSG/GFG/GVFG), ``rate_floor`` (defaults to the
    smallest r on the grids). ``grids`` defaults to log grids on
    [1e-8, 1e-2] and [1e2, 1e8]. Every scanned exponent that satisfies a
    condition is listed in the conclusion.
    """
    params = dict(params or {})
    if grids is None:
        grids = (DEFAULT_NEAR_GRID, DEFAULT_LARGE_GRID)
    near, large = (np.asarray(g, dtype=float) for g in grids)
    a_scan = params.get("a_scan", DEFAULT_A_SCAN)
    slack = params.get("slack", DEFAULT_SLACK)
    eta_ln = params.get("eta_ln", DEFAULT_ETA)
    eta_loc = params.get("eta_local", DEFAULT_GROWTH_ETA)
    eta_glob = params.get("eta_global", DEFAULT_GROWTH_ETA)
    both = np.concatenate([near, large])
    r_min = float(np.min(m.r(both)))
    rate_floor = params.get("rate_floor", r_min)
    out = Summary()

    def first_ok(cond, a_values, grid, extra):
        hits = []
        for a in a_values:
            rep = check_condition(m, cond, dict(extra, a=a), grid)
            out.reports.append(rep)
            if rep.satisfied:
                hits.append(rep)
        return hits or None

    a_big = [a for a in a_scan if in_A(m.kappa, a)]
    a_small = [a for a in a_scan if 0 < a < 1]
    sn0 = first_ok(ConditionId.SN0, a_big, near, {"slack": slack})
    ln0 = first_ok(ConditionId.LN0, a_small, near, {"eta": eta_ln})
    sninf = first_ok(ConditionId.SN_INF, a_small, large, {"slack": slack})
    lninf = first_ok(ConditionId.LN_INF, a_big, large, {"eta": eta_ln})

    def run(cond, grid, extra):
        rep = check_condition(m, cond, extra, grid)
        out.reports.append(rep)
        return rep

    lsg = run(ConditionId.LSG, large, {"eta": eta_loc})
    lfg = run(ConditionId.LFG, near, {"eta": eta_loc})
    floor_ok = rate_floor > 0
    gkw = {"rate_floor": rate_floor} if floor_ok else {}
    gsg = run(ConditionId.GSG, both, dict(gkw, eta=eta_glob))
    gsg0 = run(ConditionId.GSG, both, dict(gkw, eta=0.0))
    gfg = run(ConditionId.GFG, both, dict(gkw, eta=eta_glob))
    gvfg = run(ConditionId.GVFG, both, dict(gkw, eta=eta_glob))
    gvfg0 = run(ConditionId.GVFG, both, dict(gkw, eta=0.0))

    r_pos = bool(np.all(m.r(both) > 0))
    sp_pos = bool(np.all((m.sigma2(both) + m.p(both)) > 0))
    p_pos = bool(np.all(m.p(both) > 0))
    add = lambda s, *h: out.conclusions.append(Conclusion(s, tuple(h)))

    # the GVFG ladder: GVFG => GFG with the same eta, and GVFG => no absorption
    if gvfg.satisfied and not gfg.satisfied:
        raise AssertionError("GVFG satisfied but GFG violated: margin ordering broken")

    absorption = False
    if sn0 is not None:
        add("no absorption: P_x(reach 0 in finite time) = 0 for all x > 0", _tag(sn0))
        absorption = True
    elif floor_ok and gvfg.satisfied:
        add("no absorption (implied by GVFG)", _tag(gvfg))
        absorption = True
    if ln0 is not None:
        if r_pos:
            add("absorption possible: P_x(reach 0 in finite time) > 0 for every x > 0",
                _tag(ln0), "r > 0 on grids")
        else:
            add("absorption possible: P_x(reach 0 in finite time) > 0 for small x", _tag(ln0))
        absorption = True
    if not absorption:
        out.inconclusive.append("absorption")

    explosion = False
    if sninf is not None:
        add("no explosion: P_x(reach infinity in finite time) = 0 for all x > 0", _tag(sninf))
        explosion = True
    if lninf is not None:
        if sp_pos:
            add("explosion possible: P_x(reach infinity in finite time) > 0 for every x > 0",
                _tag(lninf), "sigma + p > 0 on grids")
        else:
            add("explosion possible: P_x(reach infinity in finite time) > 0 for large x", _tag(lninf))
        explosion = True
    if not explosion:
        out.inconclusive.append("explosion")

    long_time = False
    if sn0 is not None and sninf is not None and (lsg.satisfied or lfg.satisfied):
        which = lsg if lsg.satisfied else lfg
        add("convergence in law to a unique stationary X_inf with E[g(X) - X r(X)(1 - E Theta)] = 0; "
            "ergodic time averages", _tag(sn0), _tag(sninf), _tag(which))
        long_time = True
    if sninf is not None and ln0 is not None and lsg.satisfied and r_pos:
        add("a.s. extinction: P_x(exists t, X_t = 0) = 1", _tag(sninf), _tag(ln0), _tag(lsg),
            "r > 0 on grids")
        long_time = True
    if sn0 is not None and lninf is not None and lfg.satisfied and p_pos:
        add("a.s. explosion: P_x(exists t, X_t = inf) = 1", _tag(sn0), _tag(lninf), _tag(lfg),
            "p > 0 on grids")
        long_time = True
    if floor_ok:
        if gsg.satisfied and eta_glob > 0:
            add("X_t -> 0 almost surely", _tag(gsg))
            long_time = True
        elif gsg0.satisfied:
            add("liminf X_t = 0 almost surely", _tag(gsg0))
            long_time = True
        if gvfg.satisfied and eta_glob > 0:
            add("X_t -> infinity almost surely", _tag(gvfg))
            long_time = True
        elif gvfg0.satisfied:
            add("limsup X_t = infinity almost surely", _tag(gvfg0))
            long_time = True
        if gfg.satisfied and _bounded_on_grids(lambda x: (m.sigma2(x) + m.p(x)) / x, near, large):
            add("P_x(liminf X_t > 0) > 0", _tag(gfg), "(sigma2 + p)/x bounded on grids")
            long_time = True
    if not long_time:
        out.inconclusive.append("long-time behaviour")
    return out
