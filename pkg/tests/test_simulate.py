import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchcat.criteria import eval_G_a
from branchcat.errors import DomainError, ModelError, NonFiniteState
from branchcat.model import CoefficientFn as C, FragmentationKernel as K, JumpMeasure as J, ModelSpec
from branchcat.simulate import (PathRecord, SimConfig, accumulate_Ga, events_csv, hitting_times,
                                path_csv, simulate_path)

from conftest import m1, m3, mg, zero

PURE_CAT = ModelSpec(r=C.affine(1, 0), kappa=K.atom(0.5))


def test_zero_model_constant():
    rec = simulate_path(zero(), SimConfig(t_max=2.0, dt=0.01), 0.7)
    assert np.all(rec.states == 0.7) and rec.outcome == "ran-to-horizon"
    assert rec.events.shape[0] == 0 and rec.outcome_time == 2.0
    assert rec.times[0] == 0.0 and rec.times[-1] == pytest.approx(2.0)


def test_ode_growth_matches_exponential():
    cfg = SimConfig(t_max=2.0, dt=1e-3)
    rec = simulate_path(ModelSpec(g=C.linear(1)), cfg, 1.0)
    assert abs(rec.states[-1] / math.e ** 2 - 1) <= 5 * cfg.dt


def test_catastrophe_mean():
    from branchcat.montecarlo import run_ensemble
    cfg = SimConfig(t_max=1.0, dt=1e-2, seed=3)
    m = ModelSpec(r=C.affine(2, 0), kappa=K.atom(0.5))
    ens = run_ensemble(m, cfg, 1.0, 10000, 1.0)
    mean = ens.x_end.mean()
    se = ens.x_end.std(ddof=1) / math.sqrt(ens.x_end.size)
    assert abs(mean - math.exp(-1)) <= 3 * se


def test_catastrophes_scale_state_exactly():
    rec = simulate_path(PURE_CAT, SimConfig(t_max=5.0, dt=1e-2, seed=2), 1.0)
    assert rec.events.shape[0] > 0
    for t, kind, mag, xb, xa in rec.events:
        assert kind == 2 and mag == 0.5 and xa == 0.5 * xb
    assert rec.states[-1] == 0.5 ** rec.events.shape[0]
    ht = hitting_times(rec, lower=0.6)
    assert ht.tau_minus == rec.events[0, 0] and ht.tau_plus == math.inf


def test_constant_path_never_crosses():
    rec = simulate_path(zero(), SimConfig(t_max=1.0, dt=0.01), 1.0)
    assert hitting_times(rec, lower=0.5, upper=2.0) == (math.inf, math.inf)


def test_catastrophes_alone_do_not_absorb_from_above():
    cfg = SimConfig(t_max=5.0, dt=1e-2, seed=6)
    n_abs = 0
    for i in range(50):
        rec = simulate_path(PURE_CAT, cfg, 1e-8, i)
        if rec.outcome == "absorbed":
            n_abs += 1
            last = rec.events[-1]
            assert last[1] == 2 and last[3] <= cfg.x_abs / 0.5
    assert n_abs > 0


def test_hitting_time_on_explosion():
    cfg = SimConfig(t_max=2.0, dt=1e-3, x_max=1e6)
    rec = simulate_path(ModelSpec(g=C.power(1, 2)), cfg, 1.0, acknowledge_invalid=True)
    assert rec.outcome == "exploded" and 0.99 < rec.outcome_time < 1.02
    assert hitting_times(rec, upper=1e9).tau_plus == rec.outcome_time
    with pytest.raises(DomainError):
        hitting_times(rec, lower=0.0)


def test_determinism_and_nonnegativity():
    cfg = SimConfig(t_max=3.0, dt=1e-3, seed=9)
    a = simulate_path(m1(), cfg, 1.0, 4)
    b = simulate_path(m1(), cfg, 1.0, 4)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.events, b.events)
    c = simulate_path(m1(), cfg, 1.0, 5)
    assert not np.array_equal(a.states[:100], c.states[:100])
    for i in range(20):
        r = simulate_path(m1(), cfg, 0.2, i)
        assert np.all(r.states >= 0)
        if r.outcome == "absorbed":
            assert r.states[-1] == 0.0


def test_decimation_keeps_events():
    base = SimConfig(t_max=3.0, dt=1e-3, seed=4)
    full = simulate_path(m1(), base, 1.0)
    dec = simulate_path(m1(), SimConfig(t_max=3.0, dt=1e-3, seed=4, decimation=10), 1.0)
    assert np.array_equal(full.events, dec.events)
    assert dec.states.size < full.states.size
    assert np.array_equal(full.lows, dec.lows)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 5))
def test_paths_nonnegative_property(idx, x0):
    r = simulate_path(m3(), SimConfig(t_max=1.0, dt=1e-2, seed=7, x_abs=1e-30), x0, idx)
    assert np.all(r.states >= 0) and np.all(np.isfinite(r.states))


def test_accumulate_Ga_constant_rate():
    cfg = SimConfig(t_max=1.0, dt=1e-3, seed=1)
    rec = simulate_path(mg(), cfg, 1.0)
    cps = [0.0, 0.25, 0.5, 1.0]
    out = accumulate_Ga(mg(), rec, 2.0, cps)
    assert out[0] == 0.0
    assert np.allclose(out, [-c for c in cps], rtol=0, atol=1e-12)
    assert np.array_equal(rec.ga_integral[2.0], out)
    with pytest.raises(DomainError):
        accumulate_Ga(mg(), rec, 1.0, cps)


def test_accumulate_Ga_piecewise_constant_exact():
    m = m1()
    rec = PathRecord(np.array([0.0, 1.0, 3.0]), np.array([1.0, 2.0, 4.0]), np.zeros((0, 5)),
                     "ran-to-horizon", 3.5, np.zeros((0, 2)), np.zeros((0, 2)))
    g = [eval_G_a(m, x, 0.5).value for x in (1.0, 2.0, 4.0)]
    out = accumulate_Ga(m, rec, 0.5, [0.5, 2.0, 3.5])
    assert out[0] == g[0] * 0.5
    assert out[1] == g[0] * 1.0 + g[1] * 1.0
    assert out[2] == g[0] * 1.0 + g[1] * 2.0 + g[2] * 0.5
    rec0 = PathRecord(np.array([0.0, 1.0]), np.array([1.0, 0.0]), np.zeros((0, 5)),
                      "absorbed", 1.0, np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(DomainError):
        accumulate_Ga(m, rec0, 0.5, [2.0])


def test_csv_headers():
    rec = simulate_path(PURE_CAT, SimConfig(t_max=1.0, dt=0.1, seed=2), 1.0)
    p = path_csv(rec, ["tool x"]).splitlines()
    assert p[0] == "# tool x" and "stream philox4x32-10" in p[1]
    assert "t,x" in p
    e = events_csv(rec).splitlines()
    assert "t,kind,magnitude,x_before,x_after" in e


def test_rate_too_large_raises():
    m = ModelSpec(r=C.affine(1e20, 0), kappa=K.atom(0.5))
    with pytest.raises(NonFiniteState):
        simulate_path(m, SimConfig(t_max=1.0, dt=1e-3), 1.0, acknowledge_invalid=True)


def test_invalid_inputs():
    with pytest.raises(ModelError):
        SimConfig(t_max=1.0, dt=0.0)
    with pytest.raises(DomainError):
        SimConfig(t_max=1.0, dt=0.1).step_index(0.55)
    with pytest.raises(DomainError):
        simulate_path(ModelSpec(kappa=K.atom(1.0), p=C.linear(-1)), SimConfig(t_max=1.0), 1.0)
    with pytest.raises(DomainError):
        simulate_path(m1(), SimConfig(t_max=1.0), -1.0)


def test_positive_jumps_recorded():
    m = ModelSpec(p=C.linear(2), pi=J.exponential(1.0, 1.0))
    rec = simulate_path(m, SimConfig(t_max=5.0, dt=1e-2, seed=1), 1.0)
    kinds = {k for _, k, _ in rec.event_list()}
    assert kinds == {"posjump"}
    for t, kind, mag, xb, xa in rec.events:
        assert xa == pytest.approx(xb + mag)
