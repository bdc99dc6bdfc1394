import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from branchcat.criteria import (SWEEP_COLUMNS, eval_G_a, eval_H, eval_I, eval_I_a, eval_I_a_double,
                                ia_integrand, in_A, jump_functionals, kernel_log_moment, kernel_moment,
                                second_moment, sweep, sweep_csv)
from branchcat.errors import DomainError, InfiniteMoment
from branchcat.model import CoefficientFn as C, FragmentationKernel as K, JumpMeasure as J, ModelSpec

from conftest import m1, mg

UNIT = J.atoms([1.0], [1.0])
EXP = J.exponential(1.0, 1.0)
TP = J.truncated_power(2.0, 1.5, 0.05, 20.0)
MEASURES = [UNIT, EXP, J.exponential(0.7, 3.0), TP, J.atoms([0.2, 3.0], [0.5, 1.5])]


# ---- kernel functionals

def test_kernel_moment_examples():
    assert kernel_moment(K.atom(0.5), -1) == 2.0
    assert kernel_moment(K.uniform(), 0.5) == pytest.approx(2 / 3, rel=1e-15)
    with pytest.raises(InfiniteMoment):
        kernel_moment(K.beta(2, 1), -3)
    with pytest.raises(InfiniteMoment):
        kernel_moment(K.uniform(), -1)


def test_beta_moment_against_mpmath():
    a, b, u = 2.5, 1.5, 0.7
    ref = mp.quad(lambda t: t ** u * t ** (a - 1) * (1 - t) ** (b - 1), [0, 1]) / mp.beta(a, b)
    assert kernel_moment(K.beta(a, b), u) == pytest.approx(float(ref), rel=1e-12)


def test_kernel_log_moment_examples():
    assert kernel_log_moment(K.atom(0.5), 0) == pytest.approx(-math.log(2), rel=1e-15)
    assert kernel_log_moment(K.uniform(), 0) == -1.0
    assert kernel_log_moment(K.atom(math.exp(-2)), math.log(2) / 2) == pytest.approx(-1.0, rel=1e-14)


def test_beta_log_moment_against_mpmath():
    a, b, tau = 1.7, 2.2, 0.4
    ref = mp.quad(lambda t: t ** tau * mp.log(t) * t ** (a - 1) * (1 - t) ** (b - 1), [0, 1]) / mp.beta(a, b)
    assert kernel_log_moment(K.beta(a, b), tau) == pytest.approx(float(ref), rel=1e-10)


def test_in_A():
    assert in_A(K.atom(0.5), 2.0)
    assert not in_A(K.atom(0.5), 1.0)
    assert not in_A(K.uniform(), 2.5)
    assert in_A(K.beta(3, 1), 2.5)


kernels = st.one_of(st.floats(0.01, 1).map(K.atom), st.just(K.uniform()),
                    st.tuples(st.floats(0.1, 5), st.floats(0.1, 5)).map(lambda t: K.beta(*t)))


@settings(max_examples=60, deadline=None)
@given(kernels)
def test_moment_non_increasing_in_u(kappa):
    vals = [kernel_moment(kappa, u) for u in np.linspace(0, 5, 26)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


# ---- jump functionals

def test_jump_functionals_examples():
    assert tuple(jump_functionals(J.zero())) == (0, 0, 0, 0)
    f = jump_functionals(UNIT)
    assert (f.m0, f.m1, f.m2) == (1, 1, 1) and f.mlog == pytest.approx(math.log(2), rel=1e-15)
    f = jump_functionals(EXP)
    assert f.m1 == 1 and f.m2 == 2


@pytest.mark.parametrize("pi", [J.exponential(1.3, 0.8), TP])
def test_jump_functionals_against_mpmath(pi):
    lo, hi = pi.support()
    dens = lambda z: mp.mpf(float(pi.density(float(z))))
    f = jump_functionals(pi)
    for val, h in ((f.m0, lambda z: 1), (f.m1, lambda z: z), (f.m2, lambda z: z * z),
                   (f.mlog, lambda z: mp.log(1 + z))):
        ref = mp.quad(lambda z: h(z) * dens(z), [lo, 1, hi])
        assert val == pytest.approx(float(ref), rel=1e-9)


def test_second_moment_diverges():
    with pytest.raises(InfiniteMoment):
        second_moment(J.truncated_power(1.0, 2.5, 1.0))


# ---- I_a and I

def test_I_a_examples():
    assert eval_I_a(UNIT, 1.0, 2.0) == pytest.approx(0.5, rel=1e-14)
    assert eval_I_a_double(UNIT, 1.0, 2.0) == pytest.approx(0.5, rel=1e-10)
    assert eval_I_a(J.zero(), 3.0, 2.0) == 0.0
    assert abs(eval_I_a(UNIT, 1.0, 1.001) - (1 - math.log(2))) <= 1e-3


def test_I_examples():
    assert eval_I(UNIT, 1.0) == pytest.approx(1 - math.log(2), rel=1e-14)
    assert eval_I(UNIT, 2.0) == pytest.approx(0.5 - math.log(1.5), rel=1e-14)
    assert eval_I(J.zero(), 1.0) == 0.0


@pytest.mark.parametrize("pi", MEASURES)
@pytest.mark.parametrize("x", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("a", [0.5, 2.0, 3.5])
def test_closed_form_matches_double_integral(pi, x, a):
    assert eval_I_a(pi, x, a) == pytest.approx(eval_I_a_double(pi, x, a), rel=1e-7, abs=1e-13)


@pytest.mark.parametrize("x", [0.3, 1.0, 7.0])
@pytest.mark.parametrize("a", [0.5, 2.0])
def test_closed_form_against_mpmath(x, a):
    pi = J.exponential(1.3, 0.8)
    ref = mp.quad(lambda z: (z / x + (1 - (1 + z / x) ** (1 - a)) / (1 - a)) * 1.3 * 0.8 * mp.exp(-0.8 * z),
                  [0, 1, mp.inf])
    assert eval_I_a(pi, x, a) == pytest.approx(float(ref), rel=1e-9)


def test_integrand_series_branch_continuous():
    for a in (0.5, 1.0, 2.0, 3.0):
        lo = ia_integrand(np.nextafter(1e-3, 0), a)
        y = 1e-3
        exact = float(mp.mpf(y) + ((1 - (1 + mp.mpf(y)) ** (1 - a)) / (1 - a) if a != 1
                                   else -mp.log(1 + mp.mpf(y))))
        assert lo == pytest.approx(exact, rel=1e-9)
        assert ia_integrand(y, a) == pytest.approx(exact, rel=1e-12)


def test_domain_errors():
    with pytest.raises(DomainError):
        eval_I_a(UNIT, 0.0, 2.0)
    with pytest.raises(DomainError):
        eval_I_a(UNIT, 1.0, 1.0)
    with pytest.raises(DomainError):
        eval_G_a(m1(), 1.0, 1.0 + 1e-8)


@pytest.mark.parametrize("pi", MEASURES)
@pytest.mark.parametrize("x", [0.1, 1.0, 10.0])
def test_limit_consistency(pi, x):
    m2 = jump_functionals(pi).m2
    ref = eval_I(pi, x)
    errs = [abs(eval_I_a(pi, x, 1 + eps) - ref) for eps in (0.1, 0.01, 0.001)]
    assert errs[0] > errs[1] > errs[2]
    for eps, err in zip((0.1, 0.01, 0.001), errs):
        assert err <= 10 * eps * m2 / x ** 2


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(MEASURES), st.floats(1e-3, 1e3), st.floats(0.05, 6))
def test_sign(pi, x, a):
    assert eval_I(pi, x) >= 0
    if abs(a - 1) > 1e-9:
        assert eval_I_a(pi, x, a) >= 0


# ---- G_a and H

@pytest.mark.parametrize("x", [0.01, 0.5, 1.0, 37.0])
def test_G2_of_MG_is_minus_one(x):
    pt = eval_G_a(mg(), x, 2.0)
    assert pt.value == pytest.approx(-1.0, abs=1e-12)
    # term-by-term: growth 2, diffusion -2, catastrophe -1
    assert pt.terms["growth"] == pytest.approx(2.0)
    assert pt.terms["diffusion"] == pytest.approx(-2.0)
    assert pt.terms["catastrophe"] == pytest.approx(-1.0)


def test_G_a_trivial_examples():
    m = ModelSpec(g=C.linear(1), r=C.affine(1, 0), kappa=K.atom(1.0))
    for a in (0.5, 2.0, 4.0):
        assert eval_G_a(m, 2.0, a).terms["catastrophe"] == 0.0
    assert eval_G_a(ModelSpec(g=C.linear(1)), 5.0, 3.0).value == 2.0


def test_H_examples():
    assert eval_H(m1(), 10.0).value == pytest.approx(-math.log(2), rel=1e-14)
    g = 0.3
    m = ModelSpec(g=C.linear(g), sigma2=C.power(0.2, 1.5), r=C.affine(1, 0), kappa=K.uniform())
    for x in (0.5, 2.0):
        assert eval_H(m, x).value == pytest.approx(g - 1.0 - 0.2 * x ** 1.5 / x ** 2, rel=1e-14)
    assert eval_H(ModelSpec(g=C.power(2, 1.5)), 4.0).value == pytest.approx(4.0)


@pytest.mark.parametrize("x", [0.2, 1.0, 5.0])
def test_value_is_sum_of_terms(x):
    m = ModelSpec(g=C.logistic(1, 10), sigma2=C.linear(0.5), p=C.linear(0.3), r=C.affine(0.5, 0.2),
                  pi=EXP, kappa=K.beta(2, 2))
    for pt in (eval_G_a(m, x, 2.0), eval_G_a(m, x, 0.5), eval_H(m, x)):
        t = pt.terms
        assert pt.value == t["growth"] + t["diffusion"] + t["catastrophe"] + t["jump"]


@pytest.mark.parametrize("x", [0.3, 1.0, 8.0])
def test_linearisation(x):
    m = ModelSpec(g=C.linear(0.7), sigma2=C.linear(0.4), p=C.linear(0.5), r=C.affine(1, 0.1),
                  pi=J.exponential(1.0, 2.0), kappa=K.atom(0.4))
    h = eval_H(m, x).value
    for a in (1 - 1e-4, 1 + 1e-4):
        assert eval_G_a(m, x, a).value / (a - 1) == pytest.approx(h, rel=1e-3)


@pytest.mark.parametrize("pi,discrete", [
    (J.exponential(1.5, 2.0), "laguerre"),
    (J.truncated_power(1.0, 1.5, 0.01, 10.0), "log-legendre"),
])
def test_atoms_reproduce_density(pi, discrete):
    if discrete == "laguerre":
        t, w = np.polynomial.laguerre.laggauss(120)
        at = J.atoms(t / pi.params[1], pi.params[0] * w)
    else:
        u, w = np.polynomial.legendre.leggauss(150)
        lo, hi = np.log(pi.params[2]), np.log(pi.params[3])
        z = np.exp((u + 1) / 2 * (hi - lo) + lo)
        at = J.atoms(z, w * (hi - lo) / 2 * z * pi.density(z))
    for x in (0.5, 1.0, 10.0):
        assert eval_I(at, x) == pytest.approx(eval_I(pi, x), rel=1e-6)
        for a in (0.5, 2.0):
            assert eval_I_a(at, x, a) == pytest.approx(eval_I_a(pi, x, a), rel=1e-6)


def test_sweep_csv():
    pts = sweep(mg(), [0.5, 2.0], [1.0, 2.0])
    assert len(pts) == 4 and pts[0].a == 1.0
    text = sweep_csv(pts, ["tool x"])
    lines = text.splitlines()
    assert lines[0] == "# tool x"
    assert tuple(lines[1].split(",")) == SWEEP_COLUMNS
    assert float(lines[-1].split(",")[2]) == -1.0


@pytest.mark.parametrize("a", [0.5, 1.5, 2.0])
@pytest.mark.parametrize("x", [0.3, 2.0])
def test_G_a_factored_form(a, x):
    m = ModelSpec(g=C.linear(0.7), sigma2=C.linear(1.3), p=C.linear(0.4), r=C.affine(1, 0.5),
                  pi=J.exponential(1.0, 2.0), kappa=K.atom(0.5))
    pt = eval_G_a(m, x, a)
    growth, diffusion = 0.7, a * 1.3 * x / x ** 2
    catastrophe = (1 + 0.5 * x) * (0.5 ** (1 - a) - 1) / (a - 1)
    jump = 0.4 * x * eval_I_a(m.pi, x, a)
    expected = (a - 1) * (growth - diffusion - catastrophe - jump)
    assert pt.value == pytest.approx(expected, rel=1e-12, abs=1e-12)
