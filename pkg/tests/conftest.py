import numpy as np
import pytest

from flowpinn import autodiff as ad
from flowpinn.problems import make_problem


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


@pytest.fixture()
def peak():
    return make_problem("peak2d", r_c=0.5)


class ResidualStub:
    """Analytic stand-in whose residual against `problem` is a chosen function.

    Wraps the problem's exact solution but offsets the Laplacian so that
    for the poisson operator (L = -lap) the residual becomes offset(X),
    while boundary values still match the exact solution. Built from tape
    ops so the offset can be differentiated through sampled inputs, in
    which case `offset` itself must be tape-friendly.
    """

    def __init__(self, problem, offset):
        self.problem = problem
        self.offset = offset

    def exact(self, X):
        return self.problem.exact(X)

    def exact_grad(self, X):
        if isinstance(X, ad.Var):
            return None  # poisson ignores the gradient
        return self.problem.exact_grad(X)

    def exact_lap(self, X):
        a, d = self.problem.amplitude, self.problem.dim
        total = None
        for c in self.problem.centers:
            dx = X - c
            rho2 = ad.asum(dx * dx, axis=1)
            term = ad.exp(-a * rho2) * (4.0 * a * a * rho2 - 2.0 * a * d)
            total = term if total is None else total + term
        return total + self.offset(X)


def residual_stub(problem, offset):
    if problem.operator_kind != "poisson":
        raise ValueError("stub only supports the poisson operator")
    return ResidualStub(problem, lambda X: -offset(X))


class ShiftStub:
    """Stand-in equal to the exact solution plus a constant; for the poisson
    operator the residual vanishes while the boundary mismatch is the shift."""

    def __init__(self, problem, beta):
        self.problem = problem
        self.beta = beta

    def exact(self, X):
        return self.problem.exact(X) + self.beta

    def exact_grad(self, X):
        return self.problem.exact_grad(X)

    def exact_lap(self, X):
        return self.problem.exact_lap(X)
