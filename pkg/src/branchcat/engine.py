"""Compiled single-path integrator.

One call advances one path from ``x0`` over ``n_steps`` base steps of length
``dt``. Each base step is refined dyadically: to level ``refine`` always, and
further while ``(p m0 + r) h > rate_cap``. The Brownian increment of every
dyadic piece comes from a Brownian-bridge split of its parent, so a path is
the same Brownian path whatever the refinement. Jumps and catastrophes fire
when their integrated hazard crosses an exponential clock; clocks and marks
are indexed by event number. All randomness comes from :mod:`branchcat.rng`.

Per sub-step of length h with increment D ~ N(0, h), evaluated at x+ = max(x, 0):

    x <- x + (g - p m1) h + sqrt(2 sigma2) D     drift + diffusion (m1-compensated jumps)
    x <- x + z        if the jump clock fires     z ~ pi / m0
    x <- theta x      if the catastrophe clock fires, theta ~ kappa
    x <- max(x, 0)
"""

import math

import numpy as np
from numba import njit

from .rng import PURPOSE_BROWNIAN, PURPOSE_CATASTROPHE, PURPOSE_JUMP, normal, uniform_pair

MAX_LEVEL = 40

OUT_HORIZON = 0
OUT_ABSORBED = 1
OUT_EXPLODED = 2
OUT_STOPPED = 3

ERR_NONE = 0
ERR_NONFINITE = 1
ERR_RATE = 2
ERR_BUFFER = 3

EV_JUMP = 1
EV_CATASTROPHE = 2

F_NONE = 0
F_INDICATOR = 1
F_CLIP = 2

IA_NONE = 0
IA_ATOMS = 1
IA_TABLE = 2

# coefficient slots
G, S2, P, R = 0, 1, 2, 3
TABLE = 5


@njit(cache=True, nogil=True)
def coef(i, x, ccode, cpar):
    """Closed-form families. Tables are handled by the caller (see :func:`coef_at`)."""
    c = ccode[i]
    if c == 0:
        return 0.0
    if c == 1:
        return cpar[i, 0] * x
    if c == 2:
        return cpar[i, 0] * x ** cpar[i, 1]
    if c == 3:
        return cpar[i, 0] + cpar[i, 1] * x
    return cpar[i, 0] * x * (1.0 - x / cpar[i, 1])


@njit(cache=True, nogil=True)
def coef_at(i, x, ccode, cpar, tab_x, tab_y, tab_off):
    # Table lookups loop, which stops inlining; keeping them out of coef keeps
    # the per-step calls free of array reference counting.
    if ccode[i] == TABLE:
        return _interp(x, tab_x, tab_y, tab_off[i, 0], tab_off[i, 1])
    return coef(i, x, ccode, cpar)


@njit(cache=True, nogil=True)
def _interp(x, xs, ys, lo, hi):
    """np.interp on xs[lo:hi] without slicing (slices keep coef from inlining)."""
    if x <= xs[lo]:
        return ys[lo]
    if x >= xs[hi - 1]:
        return ys[hi - 1]
    i = lo
    j = hi - 1
    while j - i > 1:
        mid = (i + j) // 2
        if xs[mid] <= x:
            i = mid
        else:
            j = mid
    return ys[i] + (ys[j] - ys[i]) * (x - xs[i]) / (xs[j] - xs[i])


@njit(cache=True, nogil=True)
def ia_scalar(y, a):
    """Scalar twin of criteria.ia_integrand."""
    if y < 1e-3:
        s = 0.0
        c = 1.0
        yk = y
        for k in range(2, 9):
            yk *= y
            if k == 2:
                c = a / 2.0
            else:
                c *= (a + k - 2) / k
            if k % 2 == 0:
                s += c * yk
            else:
                s -= c * yk
        return s
    L = math.log1p(y)
    if a == 1.0:
        return y - L
    b = 1.0 - a
    return y - math.expm1(b * L) / b


@njit(cache=True, nogil=True)
def _gamma(shape, seed, path, purpose, n, level):
    """Marsaglia-Tsang gamma(shape, 1) from counter draws (level selects the sub-stream)."""
    boost = 1.0
    if shape < 1.0:
        u, _ = uniform_pair(seed, path, purpose, level + 2, n, 0)
        boost = (1.0 - u) ** (1.0 / shape)
        shape += 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    j = 0
    while True:
        z = normal(seed, path, purpose, level, n, 2 * j + 1)
        u, _ = uniform_pair(seed, path, purpose, level, n, 2 * j + 2)
        j += 1
        v = 1.0 + c * z
        if v <= 0.0:
            continue
        v = v * v * v
        if math.log(1.0 - u) < 0.5 * z * z + d - d * v + d * math.log(v):
            return d * v * boost


@njit(cache=True, nogil=True)
def sample_theta(u, kcode, kpar, kval, kcum, seed, path, n):
    if kcode == 0:
        return kval[0]
    if kcode == 1:
        i = np.searchsorted(kcum, u, side="right")
        if i >= kval.size:
            i = kval.size - 1
        return kval[i]
    if kcode == 2:
        return 1.0 - u
    ga = _gamma(kpar[0], seed, path, PURPOSE_CATASTROPHE, n, 1)
    gb = _gamma(kpar[1], seed, path, PURPOSE_CATASTROPHE, n, 2)
    th = ga / (ga + gb)
    if th <= 0.0:
        th = 5e-324
    return th


@njit(cache=True, nogil=True)
def sample_z(u, jcode, jpar, jval, jcum):
    if jcode == 1:
        i = np.searchsorted(jcum, u, side="right")
        if i >= jval.size:
            i = jval.size - 1
        return jval[i]
    if jcode == 2:
        return -math.log1p(-u) / jpar[1]
    s = jpar[1]
    lo = jpar[2]
    hi = jpar[3]
    if s == 1.0:
        return lo * math.exp(u * math.log(hi / lo))
    e = 1.0 - s
    if math.isinf(hi):
        return lo * (1.0 - u) ** (1.0 / e)
    a = lo ** e
    return (a + u * (hi ** e - a)) ** (1.0 / e)


@njit(cache=True, nogil=True)
def _obs_value(x, ga_mode, a, ga_int):
    if ga_mode:
        return x ** (1.0 - a) * math.exp(ga_int)
    return x


@njit(cache=True, nogil=True)
def run_path(path, seed, x0,
             ccode, cpar, tab_x, tab_y, tab_off,
             kcode, kpar, kval, kcum,
             jcode, jpar, jval, jcum, m0, m1,
             dt, refine, n_steps, x_abs, x_max, rate_cap,
             obs_steps, obs_out,
             lower, upper, stop_lower, stop_upper,
             f_kind, f_lo, f_hi,
             ga_mode, a, cat_factor, ia_mode, ia_z, ia_w, ia_lx, ia_v,
             record, rec_every, rec, events, lows, highs):
    """Simulate one path. Observations go to ``obs_out``; the rest is returned.

    Returns ``(outcome, t_out, err, occupation, t_lower, t_upper, x_end,
    n_rec, n_ev, n_lows, n_highs)``. When ``record`` is true the buffers
    ``rec`` (t, x), ``events`` (t, kind, magnitude, x_before, x_after),
    ``lows`` and ``highs`` (t, x) are filled; if one is too small the run
    ends with ``ERR_BUFFER`` and the caller retries with larger buffers.
    Buffers are never re-bound inside the loop, which keeps it free of
    reference counting.
    """
    n_obs = obs_steps.size
    oi = 0
    x = x0
    t = 0.0
    outcome = OUT_HORIZON
    err = ERR_NONE
    t_out = n_steps * dt
    t_lower = np.inf
    t_upper = np.inf
    occupation = 0.0
    ga_int = 0.0

    n_rec = 0
    n_ev = 0
    n_lows = 0
    n_highs = 0
    if record:
        rec[0, 0] = 0.0
        rec[0, 1] = x
        n_rec = 1
        lows[0, 0] = 0.0
        lows[0, 1] = x
        highs[0, 0] = 0.0
        highs[0, 1] = x
        n_lows = 1
        n_highs = 1
    run_min = x
    run_max = x

    jump_on = m0 > 0.0 and ccode[P] != 0
    cat_on = ccode[R] != 0
    jn = 0
    cn = 0
    lam_j = 0.0
    lam_c = 0.0
    ej = 0.0
    uj = 0.0
    ec = 0.0
    uc = 0.0
    if jump_on:
        u1, uj = uniform_pair(seed, path, PURPOSE_JUMP, 0, jn, 0)
        ej = -math.log1p(-u1)
    if cat_on:
        u1, uc = uniform_pair(seed, path, PURPOSE_CATASTROPHE, 0, cn, 0)
        ec = -math.log1p(-u1)

    done = False
    if x <= x_abs:
        x = 0.0
        outcome = OUT_ABSORBED
        t_out = 0.0
        done = True
    elif x >= x_max:
        outcome = OUT_EXPLODED
        t_out = 0.0
        done = True
    if not done and x < lower:
        t_lower = 0.0
    if not done and x > upper:
        t_upper = 0.0
    if not done and ((stop_lower and t_lower == 0.0) or (stop_upper and t_upper == 0.0)):
        outcome = OUT_STOPPED
        t_out = 0.0
        done = True
    while oi < n_obs and obs_steps[oi] == 0:
        obs_out[oi] = _obs_value(x, ga_mode, a, ga_int)
        oi += 1

    st_lev = np.empty(MAX_LEVEL + 2, dtype=np.int64)
    st_idx = np.empty(MAX_LEVEL + 2, dtype=np.int64)
    st_inc = np.empty(MAX_LEVEL + 2)
    sqdt = math.sqrt(dt)
    n_sub = 0

    k = 0
    while k < n_steps and not done:
        sp = 0
        st_lev[0] = 0
        st_idx[0] = 0
        st_inc[0] = sqdt * normal(seed, path, PURPOSE_BROWNIAN, 0, k, 0)
        sp = 1
        while sp > 0:
            sp -= 1
            lev = st_lev[sp]
            idx = st_idx[sp]
            dw = st_inc[sp]
            h = dt / (2.0 ** lev)
            xp = x if x > 0.0 else 0.0
            pr = (coef(P, xp, ccode, cpar) if ccode[P] != TABLE
                  else _interp(xp, tab_x, tab_y, tab_off[P, 0], tab_off[P, 1]))
            rr = (coef(R, xp, ccode, cpar) if ccode[R] != TABLE
                  else _interp(xp, tab_x, tab_y, tab_off[R, 0], tab_off[R, 1]))
            rate = pr * m0 + rr
            if lev < refine or rate * h > rate_cap:
                if lev >= MAX_LEVEL:
                    err = ERR_RATE
                    done = True
                    break
                zb = normal(seed, path, PURPOSE_BROWNIAN, lev + 1, k, idx)
                s = math.sqrt(0.25 * h) * zb
                st_lev[sp] = lev + 1
                st_idx[sp] = 2 * idx + 1
                st_inc[sp] = 0.5 * dw - s
                st_lev[sp + 1] = lev + 1
                st_idx[sp + 1] = 2 * idx
                st_inc[sp + 1] = 0.5 * dw + s
                sp += 2
                continue

            gg = (coef(G, xp, ccode, cpar) if ccode[G] != TABLE
                  else _interp(xp, tab_x, tab_y, tab_off[G, 0], tab_off[G, 1]))
            s2 = (coef(S2, xp, ccode, cpar) if ccode[S2] != TABLE
                  else _interp(xp, tab_x, tab_y, tab_off[S2, 0], tab_off[S2, 1]))
            t1 = k * dt + (idx + 1) * h

            # left-endpoint integrals
            if f_kind == F_INDICATOR:
                if x > f_lo and x < f_hi:
                    occupation += h
            elif f_kind == F_CLIP:
                occupation += min(max(x, f_lo), f_hi) * h
            if ga_mode:
                ia = 0.0
                if ia_mode == IA_ATOMS:
                    for q in range(ia_z.size):
                        ia += ia_w[q] * ia_scalar(ia_z[q] / x, a)
                elif ia_mode == IA_TABLE:
                    ia = _interp(math.log(x), ia_lx, ia_v, 0, ia_lx.size)
                ga_int += (a - 1.0) * (gg / x - a * s2 / (x * x) - rr * cat_factor - pr * ia) * h

            xn = x + (gg - pr * m1) * h + math.sqrt(2.0 * s2) * dw
            event = False
            if jump_on and pr > 0.0:
                lam_j += pr * m0 * h
                if lam_j >= ej:
                    z = sample_z(uj, jcode, jpar, jval, jcum)
                    if record:
                        if n_ev >= events.shape[0]:
                            err = ERR_BUFFER
                            done = True
                            break
                        events[n_ev, 0] = t1
                        events[n_ev, 1] = EV_JUMP
                        events[n_ev, 2] = z
                        events[n_ev, 3] = xn
                        events[n_ev, 4] = xn + z
                        n_ev += 1
                    xn = xn + z
                    event = True
                    jn += 1
                    lam_j = 0.0
                    u1, uj = uniform_pair(seed, path, PURPOSE_JUMP, 0, jn, 0)
                    ej = -math.log1p(-u1)
            if cat_on and rr > 0.0:
                lam_c += rr * h
                if lam_c >= ec:
                    th = sample_theta(uc, kcode, kpar, kval, kcum, seed, path, cn)
                    if record:
                        if n_ev >= events.shape[0]:
                            err = ERR_BUFFER
                            done = True
                            break
                        events[n_ev, 0] = t1
                        events[n_ev, 1] = EV_CATASTROPHE
                        events[n_ev, 2] = th
                        events[n_ev, 3] = xn
                        events[n_ev, 4] = th * xn
                        n_ev += 1
                    xn = th * xn
                    event = True
                    cn += 1
                    lam_c = 0.0
                    u1, uc = uniform_pair(seed, path, PURPOSE_CATASTROPHE, 0, cn, 0)
                    ec = -math.log1p(-u1)
            if xn < 0.0:
                xn = 0.0
            if not math.isfinite(xn):
                err = ERR_NONFINITE
                done = True
                t_out = t1
                break
            x = xn
            t = t1
            n_sub += 1

            if x < lower and t_lower == np.inf:
                t_lower = t
            if x > upper and t_upper == np.inf:
                t_upper = t
            stop = (stop_lower and t_lower < np.inf) or (stop_upper and t_upper < np.inf)
            if stop and ga_mode:
                # Z frozen at the exit state, before any absorption reset
                for q in range(oi, n_obs):
                    obs_out[q] = _obs_value(x, ga_mode, a, ga_int)
                oi = n_obs
            if x <= x_abs:
                x = 0.0
                outcome = OUT_ABSORBED
                t_out = t
                done = True
            elif x >= x_max:
                outcome = OUT_EXPLODED
                t_out = t
                done = True
            elif stop:
                outcome = OUT_STOPPED
                t_out = t
                done = True

            if record:
                if x < run_min:
                    run_min = x
                    if n_lows >= lows.shape[0]:
                        err = ERR_BUFFER
                        done = True
                        break
                    lows[n_lows, 0] = t
                    lows[n_lows, 1] = x
                    n_lows += 1
                if x > run_max:
                    run_max = x
                    if n_highs >= highs.shape[0]:
                        err = ERR_BUFFER
                        done = True
                        break
                    highs[n_highs, 0] = t
                    highs[n_highs, 1] = x
                    n_highs += 1
                if event or done or n_sub % rec_every == 0:
                    if n_rec >= rec.shape[0]:
                        err = ERR_BUFFER
                        done = True
                        break
                    rec[n_rec, 0] = t
                    rec[n_rec, 1] = x
                    n_rec += 1
            if done:
                break
        if done:
            break
        k += 1
        while oi < n_obs and obs_steps[oi] == k:
            obs_out[oi] = _obs_value(x, ga_mode, a, ga_int)
            oi += 1

    # observations after the path ended
    if err == ERR_NONE:
        if outcome == OUT_ABSORBED:
            fill = 0.0
        elif outcome == OUT_EXPLODED:
            fill = np.inf
        else:
            fill = np.nan
        for q in range(oi, n_obs):
            obs_out[q] = fill

    return (outcome, t_out, err, occupation, t_lower, t_upper, x,
            n_rec, n_ev, n_lows, n_highs)


@njit(cache=True, nogil=True)
def run_chunk(start, stop, seed, x0,
              ccode, cpar, tab_x, tab_y, tab_off,
              kcode, kpar, kval, kcum,
              jcode, jpar, jval, jcum, m0, m1,
              dt, refine, n_steps, x_abs, x_max, rate_cap,
              obs_steps, obs,
              lower, upper, stop_lower, stop_upper,
              f_kind, f_lo, f_hi,
              ga_mode, a, cat_factor, ia_mode, ia_z, ia_w, ia_lx, ia_v,
              outcome, t_out, err, occupation, t_lower, t_upper, x_end):
    """Paths ``start..stop-1``; row ``i - start`` of each output array belongs to path i."""
    nobuf = np.empty((1, 5))
    for i in range(start, stop):
        j = i - start
        res = run_path(i, seed, x0,
                       ccode, cpar, tab_x, tab_y, tab_off,
                       kcode, kpar, kval, kcum,
                       jcode, jpar, jval, jcum, m0, m1,
                       dt, refine, n_steps, x_abs, x_max, rate_cap,
                       obs_steps, obs[j],
                       lower, upper, stop_lower, stop_upper,
                       f_kind, f_lo, f_hi,
                       ga_mode, a, cat_factor, ia_mode, ia_z, ia_w, ia_lx, ia_v,
                       False, 1, nobuf, nobuf, nobuf, nobuf)
        outcome[j] = res[0]
        t_out[j] = res[1]
        err[j] = res[2]
        occupation[j] = res[3]
        t_lower[j] = res[4]
        t_upper[j] = res[5]
        x_end[j] = res[6]
        if res[2] != ERR_NONE:
            return j
    return -1
