"""Kernel and jump-measure functionals, and the criterion functions G_a, I_a, I, H.

All functions are pure. Atomic measures are summed exactly; density
families go through adaptive quadrature (:func:`integrate`), which raises
instead of returning an unconverged value.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple

import numpy as np
from scipy import integrate as _sci_integrate
from scipy import special

from .errors import DomainError, InfiniteMoment, QuadratureError
from .model import FragmentationKernel, JumpMeasure, ModelSpec, _power_integral

QUAD_RTOL = 1e-10
QUAD_ATOL = 1e-14
QUAD_LIMIT = 10_000
# |a - 1| below which G_a is refused in favour of H
A_ONE_GUARD = 1e-6


def integrate(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Adaptive Gauss-Kronrod quadrature with an explicit convergence contract."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _sci_integrate.IntegrationWarning)
        out = _sci_integrate.quad(f, lo, hi, epsabs=QUAD_ATOL, epsrel=QUAD_RTOL,
                                  limit=QUAD_LIMIT, full_output=1)
    value, abserr = out[0], out[1]
    if len(out) > 3 and abserr > max(QUAD_ATOL, QUAD_RTOL * abs(value)):
        raise QuadratureError(f"quadrature on [{lo}, {hi}] did not converge: "
                              f"value {value!r}, error estimate {abserr!r} ({out[3].splitlines()[0]})")
    return value


# ---------------------------------------------------------------------------
# fragmentation kernel


def kernel_moment(kappa: FragmentationKernel, u: float) -> float:
    """E[Theta**u]; raises :class:`InfiniteMoment` when it diverges."""
    at = kappa.atoms()
    if at is not None:
        thetas, w = at
        return float(np.dot(w, thetas ** u))
    if kappa.family == "uniform":
        if u <= -1:
            raise InfiniteMoment(f"E[Theta^{u}] diverges for the uniform kernel (needs u > -1)")
        return 1.0 / (u + 1.0)
    alpha, beta = kappa.params
    if alpha + u <= 0:
        raise InfiniteMoment(f"E[Theta^{u}] diverges for beta({alpha}, {beta}) (needs alpha + u > 0)")
    return float(np.exp(special.betaln(alpha + u, beta) - special.betaln(alpha, beta)))


def kernel_log_moment(kappa: FragmentationKernel, tau: float) -> float:
    """E[Theta**tau * ln Theta] for tau >= 0."""
    if tau < 0:
        raise DomainError("tau must be >= 0")
    at = kappa.atoms()
    if at is not None:
        thetas, w = at
        return float(np.dot(w, thetas ** tau * np.log(thetas)))
    if kappa.family == "uniform":
        return -1.0 / (tau + 1.0) ** 2
    alpha, beta = kappa.params
    # derivative of the moment in u
    return kernel_moment(kappa, tau) * float(special.digamma(alpha + tau) - special.digamma(alpha + tau + beta))


def in_A(kappa: FragmentationKernel, a: float) -> bool:
    """Membership of a > 1 in the admissible exponent set (finite E[Theta^(1-a)])."""
    if a <= 1:
        return False
    try:
        return math.isfinite(kernel_moment(kappa, 1.0 - a))
    except InfiniteMoment:
        return False


# ---------------------------------------------------------------------------
# jump measure


class JumpFunctionals(NamedTuple):
    m0: float
    m1: float
    m2: float
    mlog: float


def jump_functionals(pi: JumpMeasure) -> JumpFunctionals:
    """Total mass and the z, z^2 and ln(1+z) integrals of pi.

    ``m2`` is ``inf`` when the tail makes it diverge; callers that need it go
    through :func:`second_moment`, which raises.
    """
    at = pi.atom_view()
    if at is not None:
        zs, w = at
        return JumpFunctionals(float(w.sum()), float(np.dot(w, zs)), float(np.dot(w, zs * zs)),
                               float(np.dot(w, np.log1p(zs))))
    if pi.family == "exponential":
        mass, lam = pi.params
        mlog = mass * float(special.exp1(lam)) * math.exp(lam) if lam < 700 else mass / lam
        return JumpFunctionals(mass, mass / lam, 2.0 * mass / lam ** 2, mlog)
    mass, s, lo, hi = pi.params
    norm = mass / _power_integral(-s, lo, hi)
    m1 = norm * _power_integral(1.0 - s, lo, hi)
    m2 = norm * _power_integral(2.0 - s, lo, hi)
    mlog = integrate(lambda z: math.log1p(z) * norm * z ** -s, lo, hi) if mass > 0 else 0.0
    return JumpFunctionals(mass, m1, m2, mlog)


def second_moment(pi: JumpMeasure) -> float:
    m2 = jump_functionals(pi).m2
    if not math.isfinite(m2):
        raise InfiniteMoment("int z^2 pi(dz) diverges for this jump measure")
    return m2


def _pi_integral(pi: JumpMeasure, h: Callable) -> float:
    """Integral of h(z) against pi; h must accept numpy arrays."""
    at = pi.atom_view()
    if at is not None:
        zs, w = at
        return float(np.dot(w, h(zs))) if zs.size else 0.0
    if pi.total_mass == 0:
        return 0.0
    lo, hi = pi.support()
    dens = pi.density
    return integrate(lambda z: float(h(np.float64(z)) * dens(z)), lo, hi)


# ---------------------------------------------------------------------------
# I_a, I and their integrand


def ia_integrand(y, a: float):
    """y + (1 - (1+y)^(1-a))/(1-a), with its a -> 1 limit y - ln(1+y).

    A Taylor series replaces the closed form for y < 1e-3, where the closed
    form cancels catastrophically.
    """
    y = np.asarray(y, dtype=float)
    small = y < 1e-3
    ys = np.where(small, y, 0.0)
    # sum_{k>=2} (-1)^k a(a+1)...(a+k-2)/k! y^k, seven terms
    series = np.zeros_like(ys)
    coef = 1.0
    for k in range(2, 9):
        coef *= (a + k - 2) / k if k > 2 else a / 2.0
        series += (-1) ** k * coef * ys ** k
    yl = np.where(small, 1.0, y)
    L = np.log1p(yl)
    if a == 1:
        big = yl - L
    else:
        b = 1.0 - a
        big = yl - np.expm1(b * L) / b
    out = np.where(small, series, big)
    return out if out.ndim else float(out)


def _check_x(x):
    if not x > 0:
        raise DomainError(f"x must be > 0, got {x!r}")


def _pi_of(m) -> JumpMeasure:
    return m.pi if isinstance(m, ModelSpec) else m


def eval_I_a(m, x: float, a: float) -> float:
    """I_a(x) = int (z/x + (1 - (1+z/x)^(1-a))/(1-a)) pi(dz); accepts a model or a jump measure."""
    _check_x(x)
    if a == 1:
        raise DomainError("a = 1 is excluded; use eval_I")
    if not a > 0:
        raise DomainError("a must be > 0")
    return _pi_integral(_pi_of(m), lambda z: ia_integrand(z / x, a))


def eval_I(m, x: float) -> float:
    """I(x) = -int [ln(1 + z/x) - z/x] pi(dz) >= 0."""
    _check_x(x)
    return _pi_integral(_pi_of(m), lambda z: ia_integrand(z / x, 1.0))


def eval_I_a_double(pi: JumpMeasure, x: float, a: float) -> float:
    """Reference value of I_a from its (v, z) double-integral definition.

    a x^-2 int z^2 int_0^1 (1 + z v / x)^(-1-a) (1 - v) dv pi(dz). Slow; kept
    as an independent check of :func:`eval_I_a`.
    """
    def inner(z):
        with warnings.catch_warnings():
            # tolerances sit near roundoff on purpose; the best estimate is kept
            warnings.simplefilter("ignore", _sci_integrate.IntegrationWarning)
            val, _ = _sci_integrate.quad(lambda v: (1.0 + z * v / x) ** (-1.0 - a) * (1.0 - v), 0.0, 1.0,
                                         epsabs=1e-15, epsrel=1e-12, limit=200)
        return a * z * z / (x * x) * val

    at = pi.atom_view()
    if at is not None:
        return float(sum(w * inner(z) for z, w in zip(*at)))
    lo, hi = pi.support()
    val, _ = _sci_integrate.quad(lambda z: inner(z) * float(pi.density(z)), lo, hi,
                                 epsabs=1e-15, epsrel=1e-11, limit=500)
    return val


def gvfg_jump_integral(pi: JumpMeasure, x: float) -> float:
    """int (z/x)^2 / (1 + z/x) pi(dz)."""
    _check_x(x)
    return _pi_integral(pi, lambda z: (z / x) ** 2 / (1.0 + z / x))


# ---------------------------------------------------------------------------
# G_a and H


@dataclass(frozen=True)
class CriterionPoint:
    """Criterion value at one state with its signed per-mechanism contributions.

    ``value == growth + diffusion + catastrophe + jump``. For G_a every term
    already carries the factor (a - 1). ``a == 1`` marks an H evaluation.
    """

    x: float
    a: float
    value: float
    terms: dict = field(default_factory=dict)


TERM_NAMES = ("growth", "diffusion", "catastrophe", "jump")


def catastrophe_factor(kappa: FragmentationKernel, a: float) -> float:
    """(1 - E[Theta^(1-a)]) / (1 - a)."""
    return (1.0 - kernel_moment(kappa, 1.0 - a)) / (1.0 - a)


def eval_G_a(m: ModelSpec, x: float, a: float) -> CriterionPoint:
    _check_x(x)
    if abs(a - 1.0) < A_ONE_GUARD:
        raise DomainError(f"a = {a!r} is within {A_ONE_GUARD} of 1; use eval_H for the linearisation")
    if not a > 0:
        raise DomainError("a must be > 0")
    cat = catastrophe_factor(m.kappa, a)
    k = a - 1.0
    growth = k * (m.g(x) / x)
    diffusion = -k * a * m.sigma2(x) / (x * x)
    catastrophe = -k * m.r(x) * cat
    px = m.p(x)
    jump = -k * px * eval_I_a(m.pi, x, a) if px != 0 else 0.0
    terms = dict(growth=growth, diffusion=diffusion, catastrophe=catastrophe, jump=jump)
    return CriterionPoint(x, a, growth + diffusion + catastrophe + jump, terms)


def eval_H(m: ModelSpec, x: float) -> CriterionPoint:
    _check_x(x)
    elog = kernel_log_moment(m.kappa, 0.0)
    if not math.isfinite(elog):
        raise InfiniteMoment("E|ln Theta| is infinite")
    growth = m.g(x) / x
    diffusion = -m.sigma2(x) / (x * x)
    catastrophe = m.r(x) * elog
    px = m.p(x)
    jump = -px * eval_I(m.pi, x) if px != 0 else 0.0
    terms = dict(growth=growth, diffusion=diffusion, catastrophe=catastrophe, jump=jump)
    return CriterionPoint(x, 1.0, growth + diffusion + catastrophe + jump, terms)


SWEEP_COLUMNS = ("x", "a", "value", "term_growth", "term_diffusion", "term_catastrophe", "term_jump")


def sweep(m: ModelSpec, xs: Iterable[float], a_values: Iterable[float]) -> list[CriterionPoint]:
    """G_a on every (x, a) pair; ``a == 1`` entries evaluate H."""
    out = []
    for a in a_values:
        for x in xs:
            out.append(eval_H(m, x) if a == 1 else eval_G_a(m, x, a))
    return out


def sweep_csv(points: Iterable[CriterionPoint], header_lines: Iterable[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for pt in points:
        w.writerow([repr(float(pt.x)), repr(float(pt.a)), repr(float(pt.value))]
                   + [repr(float(pt.terms[t])) for t in TERM_NAMES])
    return buf.getvalue()
