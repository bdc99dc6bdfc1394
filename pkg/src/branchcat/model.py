"""Process definition: coefficient families, catastrophe kernel, jump measure.

A model is the tuple ``(g, sigma2, p, r, pi, kappa)`` of the jump diffusion

    dX = g(X) dt + sqrt(2 sigma2(X)) dB + compensated jumps of size z at rate p(X) pi(dz)
         + catastrophes X -> Theta X at rate r(X), Theta ~ kappa.

Everything is immutable and built from closed-form families so that every
moment needed downstream is decidable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from .errors import ModelError

COEFFICIENT_FAMILIES = {
    "zero": (),
    "linear": ("c",),
    "power": ("c", "beta"),
    "affine": ("c0", "c1"),
    "logistic": ("c", "k"),
    "table": ("xs", "ys"),
}
KERNEL_FAMILIES = {
    "atom": ("theta",),
    "discrete": ("thetas", "weights"),
    "uniform": (),
    "beta": ("alpha", "beta"),
}
JUMP_FAMILIES = {
    "zero": (),
    "atoms": ("zs", "weights"),
    "exponential": ("mass", "rate"),
    "truncated-power": ("mass", "exponent", "z_min", "z_max"),
}
LIST_PARAMS = {"xs", "ys", "thetas", "weights", "zs"}
COEFFICIENT_NAMES = ("g", "sigma2", "p", "r")


def _as_float(value: Any, key: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ModelError(f"expected a number, got {value!r}", key) from None


def _as_floats(value: Any, key: str) -> tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split()]
    try:
        items = list(value)
    except TypeError:
        items = [value]
    return tuple(_as_float(v, key) for v in items)


@dataclass(frozen=True)
class CoefficientFn:
    """One of the closed-form families mapping population size x >= 0 to a real.

    ``zero``: 0; ``linear(c)``: c x; ``power(c, beta)``: c x**beta;
    ``affine(c0, c1)``: c0 + c1 x; ``logistic(c, k)``: c x (1 - x/k);
    ``table(xs, ys)``: piecewise-linear interpolation, constant beyond ``xs[-1]``.
    """

    family: str = "zero"
    params: tuple = ()

    def __post_init__(self):
        _check_coefficient(self.family, self.params, "coefficient")

    @classmethod
    def zero(cls):
        return cls("zero", ())

    @classmethod
    def linear(cls, c):
        return cls("linear", (float(c),))

    @classmethod
    def power(cls, c, beta):
        return cls("power", (float(c), float(beta)))

    @classmethod
    def affine(cls, c0, c1):
        return cls("affine", (float(c0), float(c1)))

    @classmethod
    def logistic(cls, c, k):
        return cls("logistic", (float(c), float(k)))

    @classmethod
    def table(cls, xs, ys):
        return cls("table", (tuple(float(v) for v in xs), tuple(float(v) for v in ys)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        f, prm = self.family, self.params
        if f == "zero":
            out = np.zeros_like(x)
        elif f == "linear":
            out = prm[0] * x
        elif f == "power":
            out = prm[0] * np.power(x, prm[1])
        elif f == "affine":
            out = prm[0] + prm[1] * x
        elif f == "logistic":
            out = prm[0] * x * (1.0 - x / prm[1])
        else:
            out = np.interp(x, prm[0], prm[1])
        return out if out.ndim else float(out)

    def nonnegative(self) -> bool:
        """Exact check of f(x) >= 0 for every x >= 0."""
        f, prm = self.family, self.params
        if f == "zero":
            return True
        if f in ("linear", "power"):
            return prm[0] >= 0
        if f == "affine":
            return prm[0] >= 0 and prm[1] >= 0
        if f == "logistic":
            return prm[0] == 0
        return min(prm[1]) >= 0

    def nondecreasing(self) -> bool:
        """Exact monotonicity check on [0, inf)."""
        f, prm = self.family, self.params
        if f == "zero":
            return True
        if f in ("linear", "power"):
            return prm[0] >= 0
        if f == "affine":
            return prm[1] >= 0
        if f == "logistic":
            return prm[0] == 0
        return bool(np.all(np.diff(prm[1]) >= 0))

    def to_config(self, name: str) -> dict:
        out = {name: self.family}
        for pname, value in zip(COEFFICIENT_FAMILIES[self.family], self.params):
            out[f"{name}.{pname}"] = value
        return out


def _check_coefficient(family, params, key):
    if family not in COEFFICIENT_FAMILIES:
        raise ModelError(f"unknown coefficient family {family!r}", key)
    if len(params) != len(COEFFICIENT_FAMILIES[family]):
        raise ModelError(f"family {family!r} takes parameters {COEFFICIENT_FAMILIES[family]}", key)
    if family == "table":
        xs, ys = (np.asarray(v, dtype=float) for v in params)
        if xs.size < 2 or xs.size != ys.size:
            raise ModelError("table needs matching xs/ys with at least two nodes", key)
        if xs[0] != 0.0 or np.any(np.diff(xs) <= 0):
            raise ModelError("table xs must start at 0 and increase strictly", key)
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ModelError("table values must be finite", key)
        return
    if not all(math.isfinite(v) for v in params):
        raise ModelError("parameters must be finite", key)
    if family == "power" and params[1] < 0:
        raise ModelError("power exponent must be >= 0 (finite at x = 0)", f"{key}.beta")
    if family == "logistic" and params[1] <= 0:
        raise ModelError("logistic capacity k must be > 0", f"{key}.k")


@dataclass(frozen=True)
class FragmentationKernel:
    """Law of the surviving fraction Theta in (0, 1] at a catastrophe."""

    family: str = "atom"
    params: tuple = (1.0,)

    def __post_init__(self):
        _check_kernel(self.family, self.params, "kappa")

    @classmethod
    def atom(cls, theta):
        return cls("atom", (float(theta),))

    @classmethod
    def discrete(cls, thetas, weights):
        return cls("discrete", (tuple(float(t) for t in thetas), tuple(float(w) for w in weights)))

    @classmethod
    def uniform(cls):
        return cls("uniform", ())

    @classmethod
    def beta(cls, alpha, beta):
        return cls("beta", (float(alpha), float(beta)))

    def atoms(self):
        """``(thetas, weights)`` for atomic families, else ``None``."""
        if self.family == "atom":
            return np.array([self.params[0]]), np.array([1.0])
        if self.family == "discrete":
            return np.array(self.params[0]), np.array(self.params[1])
        return None

    def min_support(self) -> float:
        at = self.atoms()
        return float(at[0].min()) if at is not None else 0.0

    def to_config(self, name: str = "kappa") -> dict:
        out = {name: self.family}
        for pname, value in zip(KERNEL_FAMILIES[self.family], self.params):
            out[f"{name}.{pname}"] = value
        return out


def _check_kernel(family, params, key):
    if family not in KERNEL_FAMILIES:
        raise ModelError(f"unknown kernel family {family!r}", key)
    if len(params) != len(KERNEL_FAMILIES[family]):
        raise ModelError(f"family {family!r} takes parameters {KERNEL_FAMILIES[family]}", key)
    if family == "atom":
        if not 0.0 < params[0] <= 1.0:
            raise ModelError(f"atom {params[0]!r} outside (0, 1]", f"{key}.theta")
    elif family == "discrete":
        thetas, weights = params
        if len(thetas) == 0 or len(thetas) != len(weights):
            raise ModelError("thetas and weights must be non-empty and of equal length", key)
        if any(not 0.0 < t <= 1.0 for t in thetas):
            raise ModelError("atoms must lie in (0, 1]", f"{key}.thetas")
        if any(w < 0 for w in weights):
            raise ModelError("weights must be non-negative", f"{key}.weights")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ModelError("weights must sum to 1", f"{key}.weights")
    elif family == "beta":
        if not all(math.isfinite(v) and v > 0 for v in params):
            raise ModelError("beta parameters must be positive", key)


@dataclass(frozen=True)
class JumpMeasure:
    """Finite-activity measure of positive jump sizes.

    ``atoms(zs, weights)`` puts mass ``w_i`` at ``z_i``; ``exponential(mass, rate)``
    has density ``mass * rate * exp(-rate z)``; ``truncated-power`` has density
    proportional to ``z**-exponent`` on ``[z_min, z_max]`` (``z_max`` may be inf)
    with total mass ``mass``. Infinite-activity laws must be truncated at z_min > 0.
    """

    family: str = "zero"
    params: tuple = ()

    def __post_init__(self):
        _check_jumps(self.family, self.params, "pi")

    @classmethod
    def zero(cls):
        return cls("zero", ())

    @classmethod
    def atoms(cls, zs, weights):
        return cls("atoms", (tuple(float(z) for z in zs), tuple(float(w) for w in weights)))

    @classmethod
    def exponential(cls, mass, rate):
        return cls("exponential", (float(mass), float(rate)))

    @classmethod
    def truncated_power(cls, mass, exponent, z_min, z_max=math.inf):
        return cls("truncated-power", (float(mass), float(exponent), float(z_min), float(z_max)))

    @property
    def total_mass(self) -> float:
        if self.family == "zero":
            return 0.0
        if self.family == "atoms":
            return math.fsum(self.params[1])
        return self.params[0]

    def atom_view(self):
        """``(zs, weights)`` when the measure is atomic (including zero), else ``None``."""
        if self.family == "zero":
            return np.zeros(0), np.zeros(0)
        if self.family == "atoms":
            return np.array(self.params[0]), np.array(self.params[1])
        return None

    def support(self) -> tuple[float, float]:
        if self.family == "exponential":
            return 0.0, math.inf
        if self.family == "truncated-power":
            return self.params[2], self.params[3]
        raise ValueError("support() is for density families")

    def density(self, z):
        z = np.asarray(z, dtype=float)
        if self.family == "exponential":
            mass, rate = self.params
            return mass * rate * np.exp(-rate * z)
        if self.family == "truncated-power":
            mass, s, lo, hi = self.params
            inside = (z >= lo) & (z <= hi)
            return np.where(inside, mass / _power_integral(-s, lo, hi) * np.power(z, -s), 0.0)
        raise ValueError("density() is for density families")

    def to_config(self, name: str = "pi") -> dict:
        out = {name: self.family}
        for pname, value in zip(JUMP_FAMILIES[self.family], self.params):
            out[f"{name}.{pname}"] = value
        return out


def _power_integral(k: float, lo: float, hi: float) -> float:
    """Integral of z**k over [lo, hi], lo > 0; inf when it diverges."""
    if math.isinf(hi):
        return -lo ** (k + 1) / (k + 1) if k < -1 else math.inf
    if k == -1:
        return math.log(hi / lo)
    return (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)


def _check_jumps(family, params, key):
    if family not in JUMP_FAMILIES:
        raise ModelError(f"unknown jump family {family!r}", key)
    if len(params) != len(JUMP_FAMILIES[family]):
        raise ModelError(f"family {family!r} takes parameters {JUMP_FAMILIES[family]}", key)
    if family == "atoms":
        zs, ws = params
        if len(zs) != len(ws):
            raise ModelError("zs and weights must have equal length", key)
        if any(not (z > 0 and math.isfinite(z)) for z in zs):
            raise ModelError("jump sizes must be positive and finite", f"{key}.zs")
        if any(not (w >= 0 and math.isfinite(w)) for w in ws):
            raise ModelError("weights must be non-negative and finite", f"{key}.weights")
    elif family == "exponential":
        mass, rate = params
        if not (mass >= 0 and math.isfinite(mass)):
            raise ModelError("mass must be finite and >= 0", f"{key}.mass")
        if not (rate > 0 and math.isfinite(rate)):
            raise ModelError("rate must be > 0", f"{key}.rate")
    elif family == "truncated-power":
        mass, s, lo, hi = params
        if not (mass >= 0 and math.isfinite(mass)):
            raise ModelError("mass must be finite and >= 0", f"{key}.mass")
        if not (lo > 0 and math.isfinite(lo)):
            raise ModelError("z_min must be > 0 (finite activity)", f"{key}.z_min")
        if not hi > lo:
            raise ModelError("z_max must exceed z_min", f"{key}.z_max")
        if not math.isfinite(s):
            raise ModelError("exponent must be finite", f"{key}.exponent")
        if math.isinf(hi) and s <= 2:
            raise ModelError("exponent must be > 2 for an unbounded support "
                             "(integrability of z against pi)", f"{key}.exponent")


@dataclass(frozen=True)
class ModelSpec:
    g: CoefficientFn = field(default_factory=CoefficientFn.zero)
    sigma2: CoefficientFn = field(default_factory=CoefficientFn.zero)
    p: CoefficientFn = field(default_factory=CoefficientFn.zero)
    r: CoefficientFn = field(default_factory=CoefficientFn.zero)
    pi: JumpMeasure = field(default_factory=JumpMeasure.zero)
    kappa: FragmentationKernel = field(default_factory=lambda: FragmentationKernel.atom(1.0))

    def to_config(self) -> dict:
        """Canonical flat form: one key per family parameter."""
        out = {}
        for name in COEFFICIENT_NAMES:
            out.update(getattr(self, name).to_config(name))
        out.update(self.pi.to_config("pi"))
        out.update(self.kappa.to_config("kappa"))
        return out


def build_model(config: Mapping[str, Any]) -> ModelSpec:
    """Build a :class:`ModelSpec` from the canonical flat mapping.

    ``{"g": "linear", "g.c": 0.1, ..., "kappa": "atom", "kappa.theta": 0.5}``.
    List parameters accept sequences or comma/space separated strings.
    Raises :class:`ModelError` naming the offending key.
    """
    families = {"g": COEFFICIENT_FAMILIES, "sigma2": COEFFICIENT_FAMILIES,
                "p": COEFFICIENT_FAMILIES, "r": COEFFICIENT_FAMILIES,
                "pi": JUMP_FAMILIES, "kappa": KERNEL_FAMILIES}
    for key in config:
        head = key.split(".", 1)[0]
        if head not in families:
            raise ModelError("unknown model key", key)
    parts = {}
    for name, table in families.items():
        if name not in config:
            raise ModelError("missing family", name)
        family = str(config[name]).strip()
        if family not in table:
            raise ModelError(f"unknown family {family!r}; expected one of {sorted(table)}", name)
        expected = table[family]
        for key in config:
            if key.startswith(name + ".") and key[len(name) + 1:] not in expected:
                raise ModelError(f"parameter not used by family {family!r}", key)
        params = []
        for pname in expected:
            key = f"{name}.{pname}"
            if key not in config:
                raise ModelError("missing parameter", key)
            conv = _as_floats if pname in LIST_PARAMS else _as_float
            params.append(conv(config[key], key))
        parts[name] = (family, tuple(params))

    checks = {CoefficientFn: _check_coefficient, JumpMeasure: _check_jumps,
              FragmentationKernel: _check_kernel}

    def make(cls, name):
        family, params = parts[name]
        checks[cls](family, params, name)
        return cls(family, params)

    return ModelSpec(
        g=make(CoefficientFn, "g"), sigma2=make(CoefficientFn, "sigma2"),
        p=make(CoefficientFn, "p"), r=make(CoefficientFn, "r"),
        pi=make(JumpMeasure, "pi"), kappa=make(FragmentationKernel, "kappa"),
    )


# ---------------------------------------------------------------------------
# Assumption checks

PASS, FAIL, HPASS, HFAIL = "pass", "fail", "heuristic-pass", "heuristic-fail"


@dataclass(frozen=True)
class Clause:
    name: str
    status: str
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    clauses: tuple[Clause, ...]
    notes: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return all(c.status in (PASS, HPASS) for c in self.clauses)

    def __getitem__(self, name: str) -> Clause:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [f"{c.status:15s} {c.name}" + (f"  [{c.detail}]" if c.detail else "")
                 for c in self.clauses]
        lines += [f"note: {n}" for n in self.notes]
        lines.append("overall: " + ("pass" if self.passed else "fail"))
        return "\n".join(lines) + "\n"


def _phi_modulus(d):
    d = np.asarray(d, dtype=float)
    small = np.minimum(d, 1.0)
    return np.where(d <= 1.0, small * (1.0 - np.log(np.where(small > 0, small, 1.0))), 1.0)


def _blowup_slope(xs, quotients) -> float | None:
    """Log-log slope of a difference quotient against x on the part of the grid below 1.

    A clearly negative slope means the quotient grows without bound as x -> 0,
    the grid signature of a failed modulus-of-continuity bound.
    """
    mask = (xs > 0) & (xs <= 1.0) & (quotients > 0) & np.isfinite(quotients)
    if mask.sum() < 3:
        return None
    lx, lq = np.log(xs[mask]), np.log(quotients[mask])
    if np.ptp(lx) == 0:
        return None
    return float(np.polyfit(lx, lq, 1)[0])


_SLOPE_TOL = -0.05


def _modulus_clause(name, fn, grid, modulus) -> Clause:
    xs = np.concatenate([[0.0], grid]) if grid[0] > 0 else np.asarray(grid, dtype=float)
    vals = fn(xs)
    if not np.all(np.isfinite(vals)):
        return Clause(name, HFAIL, "non-finite values on grid")
    dq = np.abs(np.diff(vals)) / modulus(np.diff(xs))
    # quotient measured from the origin as well as between neighbours
    q0 = np.abs(vals[1:] - vals[0]) / modulus(xs[1:] - xs[0])
    q = np.maximum(dq, q0)
    slope = _blowup_slope(xs[1:], q)
    if slope is None:
        return Clause(name, HPASS, f"max quotient {q.max():.3g}; too few points below 1 for trend")
    if slope < _SLOPE_TOL:
        return Clause(name, HFAIL, f"quotient grows like x^{slope:.3f} as x -> 0 (max {q.max():.3g})")
    return Clause(name, HPASS, f"max quotient {q.max():.3g}, log-log slope {slope:.3f}")


def validate_assumptions(m: ModelSpec, grid: Sequence[float]) -> ValidationReport:
    """Check the well-posedness assumptions; failures are reported, never raised.

    Boundary values are exact; monotonicity and signs are exact per family;
    Lipschitz/Hoelder/phi-modulus clauses are grid difference-quotient
    heuristics; jump-measure integrability is analytic per family.
    """
    from .criteria import jump_functionals, kernel_log_moment

    grid = np.asarray(grid, dtype=float)
    clauses = []
    if grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) <= 0):
        return ValidationReport((Clause("grid", FAIL, "grid must be non-empty, increasing, >= 0"),))

    def exact(name, ok, detail=""):
        clauses.append(Clause(name, PASS if ok else FAIL, detail))

    exact("g(0) = 0", m.g(0.0) == 0.0, f"g(0) = {m.g(0.0)!r}")
    exact("sigma(0) = 0", m.sigma2(0.0) == 0.0, f"sigma2(0) = {m.sigma2(0.0)!r}")
    exact("p(0) = 0", m.p(0.0) == 0.0, f"p(0) = {m.p(0.0)!r}")
    exact("r(0) < inf", math.isfinite(m.r(0.0)), f"r(0) = {m.r(0.0)!r}")
    exact("sigma2 >= 0", m.sigma2.nonnegative())
    exact("p >= 0", m.p.nonnegative())
    exact("r >= 0", m.r.nonnegative())
    exact("p is non-decreasing", m.p.nondecreasing())
    clauses.append(_modulus_clause("r is locally Lipschitz", m.r, grid, lambda d: d))
    clauses.append(_modulus_clause("p is locally Lipschitz", m.p, grid, lambda d: d))
    clauses.append(_modulus_clause("g has modulus x(1 - ln x)", m.g, grid, _phi_modulus))
    sigma = lambda x: np.sqrt(np.maximum(m.sigma2(x), 0.0))
    clauses.append(_modulus_clause("sigma is Hoelder continuous with index 1/2", sigma, grid, np.sqrt))

    jf = jump_functionals(m.pi)
    # z ^ z^2 <= z
    exact("int (z ^ z^2) pi(dz) < inf", math.isfinite(jf.m1), f"bounded by m1 = {jf.m1!r}")
    exact("int ln(1+z) pi(dz) < inf", math.isfinite(jf.mlog), f"mlog = {jf.mlog!r}")
    elog = kernel_log_moment(m.kappa, 0.0)
    exact("E|ln Theta| < inf", math.isfinite(elog), f"E[ln Theta] = {elog!r}")

    notes = []
    if m.pi.family == "truncated-power":
        notes.append(f"jump measure truncated at z_min = {m.pi.params[2]!r}; "
                     "small jumps below it are not represented")
    return ValidationReport(tuple(clauses), tuple(notes))
