"""Benchmark elliptic problems with manufactured solutions.

Each problem carries a closed-form exact solution u, a source s derived
by hand so that L(u) = s, and Dirichlet data g = u restricted to the box
boundary. The closed forms are written against the dispatching math in
`autodiff`, so they evaluate on numpy arrays and on tape Vars alike
(residuals need a tape path when gradients flow through the points).

Operators, with lap = Laplacian and grad = spatial gradient:
  poisson            L u = -lap(u)
  drift_diffusion_2d L u = lap(u) - 2 x . grad(u) - 4 u
  nonlinear_cubic    L u = -lap(u) + u - u^3
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractViolation
from .nets import SurrogateNet, mlp_jets

PROBLEM_NAMES = ("peak2d", "twopeak2d", "linear_hd", "nonlinear_hd")


@dataclass(frozen=True)
class PdeProblem:
    name: str
    dim: int
    box: np.ndarray  # (d, 2) per-axis lo/hi
    operator_kind: str  # poisson | drift_diffusion_2d | nonlinear_cubic
    amplitude: float  # Gaussian sharpness a in exp(-a * rho^2)
    centers: np.ndarray = field(default=None)  # (n_bumps, d)

    @property
    def volume(self) -> float:
        return float(np.prod(self.box[:, 1] - self.box[:, 0]))

    # -- closed forms (numpy or Var input of shape (n, d)) ------------------

    def _bumps(self, X):
        """List of exp(-a * |x - c|^2), one per center."""
        out = []
        for c in self.centers:
            dx = X - c
            rho2 = ad.asum(dx * dx, axis=1)
            out.append(ad.exp(-self.amplitude * rho2))
        return out

    def exact(self, X):
        parts = self._bumps(X)
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return total

    def exact_grad(self, X: np.ndarray) -> np.ndarray:
        a = self.amplitude
        g = np.zeros_like(np.asarray(X, dtype=np.float64))
        for c, G in zip(self.centers, self._bumps(np.asarray(X))):
            g += -2.0 * a * (X - c) * G[:, None]
        return g

    def exact_lap(self, X: np.ndarray) -> np.ndarray:
        a, d = self.amplitude, self.dim
        out = np.zeros(np.asarray(X).shape[0])
        for c, G in zip(self.centers, self._bumps(np.asarray(X))):
            rho2 = np.sum((X - c) ** 2, axis=1)
            out += G * (4.0 * a * a * rho2 - 2.0 * a * d)
        return out

    def source(self, X):
        """s with L(exact) = s, expanded by hand per operator."""
        a, d = self.amplitude, self.dim
        kind = self.operator_kind
        total = None
        for c in self.centers:
            dx = X - c
            rho2 = ad.asum(dx * dx, axis=1)
            G = ad.exp(-a * rho2)
            if kind == "poisson":
                term = G * (2.0 * a * d - 4.0 * a * a * rho2)
            elif kind == "drift_diffusion_2d":
                xdot = ad.asum(X * dx, axis=1)  # x . (x - c)
                term = G * ((4.0 * a * a * rho2 - 2.0 * a * d) + 4.0 * a * xdot - 4.0)
            elif kind == "nonlinear_cubic":
                term = G * (2.0 * a * d - 4.0 * a * a * rho2)
            else:
                raise ConfigError(f"unknown operator kind {kind!r}")
            total = term if total is None else total + term
        if kind == "nonlinear_cubic":
            u = self.exact(X)
            total = total + u - u * u * u
        return total

    def boundary_value(self, X):
        return self.exact(X)

    def apply_operator(self, u, grad, lap, X):
        """L applied to any field given its value, gradient, and Laplacian at X."""
        kind = self.operator_kind
        if kind == "poisson":
            return -lap
        if kind == "drift_diffusion_2d":
            return lap - 2.0 * ad.asum(X * grad, axis=1) - 4.0 * u
        if kind == "nonlinear_cubic":
            return -lap + u - u * u * u
        raise ConfigError(f"unknown operator kind {kind!r}")

    def exact_residual(self, X: np.ndarray) -> np.ndarray:
        """L(exact) - s from the analytic derivative formulas; ~0 by construction."""
        X = np.asarray(X, dtype=np.float64)
        u = np.asarray(self.exact(X))
        lu = self.apply_operator(u, self.exact_grad(X), self.exact_lap(X), X)
        return lu - np.asarray(self.source(X))

    # -- containment helpers -------------------------------------------------

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        return np.all((X >= self.box[:, 0]) & (X <= self.box[:, 1]), axis=-1)

    def on_boundary(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if not bool(self.contains(x)):
            return False
        return bool(np.any((x == self.box[:, 0]) | (x == self.box[:, 1])))


def make_problem(name: str, dim: int | None = None, r_c: float | None = None,
                 box=None) -> PdeProblem:
    if name not in PROBLEM_NAMES:
        raise ConfigError(f"unknown problem {name!r}, expected one of {list(PROBLEM_NAMES)}")
    if name in ("peak2d", "twopeak2d"):
        if dim not in (None, 2):
            raise ConfigError(f"{name} is two-dimensional")
        dim = 2
    else:
        dim = 5 if dim is None else int(dim)
        if dim < 1:
            raise ConfigError("dim must be positive")
    box = np.array([[-1.0, 1.0]] * dim) if box is None else np.asarray(box, dtype=np.float64)
    if box.shape != (dim, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise ConfigError(f"invalid box for dimension {dim}: {box.tolist()}")
    if name == "peak2d":
        rc = 0.5 if r_c is None else float(r_c)
        return PdeProblem(name, 2, box, "poisson", 1000.0, np.array([[rc, rc]]))
    if name == "twopeak2d":
        rc = 0.5 if r_c is None else float(r_c)
        centers = np.array([[rc, rc], [-rc, -rc]])
        return PdeProblem(name, 2, box, "drift_diffusion_2d", 1000.0, centers)
    if r_c is not None:
        raise ConfigError(f"r_c does not apply to {name}")
    kind = "poisson" if name == "linear_hd" else "nonlinear_cubic"
    return PdeProblem(name, dim, box, kind, 10.0, np.zeros((1, dim)))


# ---------------------------------------------------------------------------
# residual and boundary mismatch


def residual_batch(problem: PdeProblem, net: SurrogateNet, X):
    """r = L u(x; theta) - s(x) for a batch; X may be a Var for tape mode.

    `net` may be a SurrogateNet, a list of (W, b) layers, or any object
    with exact/exact_grad/exact_lap (an analytic stand-in such as the
    problem itself), in which case the derivatives are taken in closed
    form rather than from network jets."""
    if hasattr(net, "exact_lap"):
        if isinstance(X, ad.Var):  # keep the tape path differentiable
            u = net.exact(X)
            return problem.apply_operator(u, net.exact_grad(X), net.exact_lap(X), X) \
                - problem.source(X)
        Xa = np.asarray(X, dtype=np.float64)
        u = np.asarray(net.exact(Xa))
        lu = problem.apply_operator(u, net.exact_grad(Xa), net.exact_lap(Xa), Xa)
        return lu - np.asarray(problem.source(Xa))
    layers = net if isinstance(net, list) else net.layer_arrays()
    u, G, lap = mlp_jets(layers, X)
    return problem.apply_operator(u, G, lap, X) - problem.source(X)


def residual(problem: PdeProblem, net: SurrogateNet, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if not np.all(np.isfinite(x)):
        raise ContractViolation("interior point has non-finite coordinates")
    return float(np.asarray(residual_batch(problem, net, x))[0])


def boundary_mismatch(problem: PdeProblem, net: SurrogateNet, x) -> float:
    from .nets import eval_net

    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if not problem.on_boundary(x):
        raise ContractViolation(f"point {x.tolist()} is not on the domain boundary")
    if hasattr(net, "exact"):  # analytic stand-in, as in residual_batch
        u = float(np.asarray(net.exact(x.reshape(1, -1)))[0])
    else:
        u = eval_net(net, x)
    return u - float(np.asarray(problem.boundary_value(x.reshape(1, -1)))[0])


def exact_at(problem: PdeProblem, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(np.asarray(problem.exact(x))[0])


# ---------------------------------------------------------------------------
# collocation samplers


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_interior(problem: PdeProblem, n: int, seed) -> np.ndarray:
    if n <= 0:
        raise ContractViolation("sample count must be positive")
    rng = _as_rng(seed)
    lo, hi = problem.box[:, 0], problem.box[:, 1]
    return rng.uniform(lo, hi, size=(n, problem.dim))


def sample_boundary(problem: PdeProblem, n: int, seed) -> np.ndarray:
    """Uniform on the boundary: face weighted by its measure, then uniform in-face."""
    if n <= 0:
        raise ContractViolation("sample count must be positive")
    rng = _as_rng(seed)
    d = problem.dim
    lo, hi = problem.box[:, 0], problem.box[:, 1]
    ext = hi - lo
    if d == 1:
        face_measure = np.ones(2)
    else:
        per_axis = np.array([np.prod(np.delete(ext, i)) for i in range(d)])
        face_measure = np.repeat(per_axis, 2)
    probs = face_measure / face_measure.sum()
    faces = rng.choice(2 * d, size=n, p=probs)
    pts = rng.uniform(lo, hi, size=(n, d))
    axis = faces // 2
    side = faces % 2
    pts[np.arange(n), axis] = np.where(side == 0, lo[axis], hi[axis])
    return pts
