import math

import pytest

from branchcat.model import CoefficientFn as C, FragmentationKernel as K, JumpMeasure as J, ModelSpec


def m1():
    return ModelSpec(g=C.linear(0.1), sigma2=C.linear(1), r=C.affine(1, 0), kappa=K.atom(0.5))


def m2():
    return ModelSpec(g=C.linear(5), sigma2=C.power(0.5, 2), r=C.affine(1, 0), kappa=K.atom(0.5))


def m3():
    return ModelSpec(g=C.linear(2), sigma2=C.power(1, 2), r=C.affine(1, 1), kappa=K.atom(0.5))


def mg():
    return ModelSpec(g=C.linear(2), sigma2=C.power(1, 2), r=C.affine(1, 0), kappa=K.atom(0.5))


def eta0():
    return ModelSpec(g=C.linear(math.log(2)), sigma2=C.linear(1), r=C.affine(1, 0), kappa=K.atom(0.5))


def feller():
    return ModelSpec(sigma2=C.linear(1))


def zero():
    return ModelSpec()


@pytest.fixture
def models():
    return dict(m1=m1(), m2=m2(), m3=m3(), mg=mg(), eta0=eta0(), feller=feller(), zero=zero())


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
