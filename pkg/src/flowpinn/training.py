"""Training objectives and loops for the surrogate and the flow.

The surrogate minimizes mean squared residual plus a weighted boundary
penalty; in importance mode the interior term is reweighted by stored
proposal densities. The flow minimizes either an importance-sampled
cross entropy against the squared-residual target or a reverse KL with
gradients through the sampling path. Both loops use the same from-
scratch Adam and deterministic without-replacement minibatching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .errors import ContractViolation, TrainingError
from .flows import CutoffFn, FlowModel
from .nets import SurrogateNet, eval_batch, mlp_forward
from .problems import PdeProblem, residual_batch


@dataclass
class TrainingSet:
    """Interior and boundary collocation points at adaptivity stage k."""

    interior: np.ndarray
    boundary: np.ndarray
    stage: int = 0
    proposal_density: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.interior = np.asarray(self.interior, dtype=np.float64)
        self.boundary = np.asarray(self.boundary, dtype=np.float64)
        if self.proposal_density is not None:
            self.proposal_density = np.asarray(self.proposal_density, dtype=np.float64)
            if self.proposal_density.shape != (self.interior.shape[0],):
                raise ContractViolation("one proposal density per interior point required")
            if np.any(self.proposal_density <= 0.0):
                raise ContractViolation("proposal densities must be strictly positive")

    def check_against(self, problem: PdeProblem) -> None:
        if not np.all(problem.contains(self.interior)):
            raise ContractViolation("interior point outside the closed domain box")
        for x in self.boundary:
            if not problem.on_boundary(x):
                raise ContractViolation("boundary point not on the domain boundary")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(n_params: int, lr: float) -> OptimizerState:
    return OptimizerState(np.zeros(n_params), np.zeros(n_params), 0, float(lr))


def adam_step(state: OptimizerState, params: np.ndarray, grads: np.ndarray):
    """One bias-corrected Adam update; returns (new params, new state)."""
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ContractViolation("parameter/gradient/state length mismatch")
    if not np.all(np.isfinite(grads)):
        raise TrainingError("non-finite gradient")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


# ---------------------------------------------------------------------------
# surrogate objectives


def _boundary_values(problem: PdeProblem, net: SurrogateNet, Xb: np.ndarray):
    if hasattr(net, "exact"):  # analytic stand-in accepted, as in residual_batch
        u = np.asarray(net.exact(Xb))
    else:
        u = eval_batch(net, Xb)
    return u - np.asarray(problem.boundary_value(Xb))


def empirical_loss(net: SurrogateNet, problem: PdeProblem, batch_interior,
                   batch_boundary, gamma_hat: float = 1.0) -> float:
    Xi = np.asarray(batch_interior, dtype=np.float64)
    Xb = np.asarray(batch_boundary, dtype=np.float64)
    if Xi.shape[0] == 0 or Xb.shape[0] == 0:
        raise ContractViolation("empty batch")
    r = np.asarray(residual_batch(problem, net, Xi))
    b = _boundary_values(problem, net, Xb)
    return float(np.mean(r * r) + gamma_hat * np.mean(b * b))


def is_loss(net: SurrogateNet, problem: PdeProblem, batch_interior, densities,
            batch_boundary) -> float:
    """Importance-weighted interior term; the boundary term stays unweighted."""
    Xi = np.asarray(batch_interior, dtype=np.float64)
    Xb = np.asarray(batch_boundary, dtype=np.float64)
    q = np.asarray(densities, dtype=np.float64)
    if Xi.shape[0] == 0 or Xb.shape[0] == 0:
        raise ContractViolation("empty batch")
    if q.shape != (Xi.shape[0],) or np.any(q <= 0.0):
        raise ContractViolation("proposal densities must be present and strictly positive")
    r = np.asarray(residual_batch(problem, net, Xi))
    b = _boundary_values(problem, net, Xb)
    return float(np.mean(r * r / q) + np.mean(b * b))


def _surrogate_loss_vars(tape: ad.Tape, net: SurrogateNet, problem: PdeProblem,
                         Xi: np.ndarray, Xb: np.ndarray, gamma_hat: float,
                         inv_density: np.ndarray | None):
    layers = net.layer_vars(tape, trainable=True)
    r = residual_batch(problem, layers, Xi)
    if inv_density is None:
        interior = (r * r).mean()
    else:
        interior = (r * r * inv_density).mean()
    u_b = mlp_forward(layers, Xb)
    b = u_b - np.asarray(problem.boundary_value(Xb))
    bter = (b * b).mean()
    if inv_density is None:
        return interior + gamma_hat * bter
    return interior + bter


class _BatchCycler:
    """Without-replacement minibatch stream; reshuffles when exhausted."""

    def __init__(self, n: int, batch: int, rng: np.random.Generator) -> None:
        self.n = n
        self.batch = min(batch, n)
        self.rng = rng
        self.perm = rng.permutation(n)
        self.pos = 0

    def next_idx(self) -> np.ndarray:
        if self.pos + self.batch > self.n:
            self.perm = self.rng.permutation(self.n)
            self.pos = 0
        out = self.perm[self.pos : self.pos + self.batch]
        self.pos += self.batch
        return out


def train_surrogate(net: SurrogateNet, problem: PdeProblem, tset: TrainingSet,
                    epochs: int, batch: int, mode: str = "plain",
                    state: OptimizerState | None = None, lr: float = 1e-4,
                    gamma_hat: float = 1.0, rng: np.random.Generator | None = None,
                    epoch_callback=None):
    """N_e epochs of minibatch Adam on the PDE loss; returns (net, trace, state)."""
    if mode not in ("plain", "importance"):
        raise ContractViolation(f"unknown training mode {mode!r}")
    if tset.interior.shape[0] == 0 or tset.boundary.shape[0] == 0:
        raise ContractViolation("training set must have interior and boundary points")
    if mode == "importance" and tset.proposal_density is None:
        raise ContractViolation("importance mode needs proposal densities")
    rng = np.random.default_rng(0) if rng is None else rng
    state = init_adam(net.n_params, lr) if state is None else state
    inv_q = None if mode == "plain" else 1.0 / tset.proposal_density
    n = tset.interior.shape[0]
    steps = max(1, math.ceil(n / batch))
    b_cycle = _BatchCycler(tset.boundary.shape[0], min(batch, tset.boundary.shape[0]), rng)
    trace: list[float] = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for j in range(steps):
            idx = perm[j * batch : (j + 1) * batch]
            if idx.size == 0:
                idx = perm[:batch]
            bidx = b_cycle.next_idx()
            tape = ad.Tape()
            loss = _surrogate_loss_vars(
                tape, net, problem, tset.interior[idx], tset.boundary[bidx],
                gamma_hat, None if inv_q is None else inv_q[idx])
            grads = ad.grad_params(tape, loss, net.n_params)
            net.params, state = adam_step(state, net.params, grads)
            total += float(loss.value)
        trace.append(total / steps)
        if epoch_callback is not None:
            epoch_callback(epoch, net, trace[-1])
    return net, trace, state


# ---------------------------------------------------------------------------
# flow objectives


def ce_weights(net: SurrogateNet, problem: PdeProblem, cf: CutoffFn,
               X: np.ndarray, proposal_density: np.ndarray) -> np.ndarray:
    """Importance weights r^2(x) h(x) / q(x) for the cross-entropy estimator."""
    q = np.asarray(proposal_density, dtype=np.float64)
    if np.any(q <= 0.0):
        raise ContractViolation("proposal density must be strictly positive")
    r = np.asarray(residual_batch(problem, net, X))
    return r * r * np.asarray(cf(X)) / q


def cross_entropy_is(flow: FlowModel, net: SurrogateNet, problem: PdeProblem,
                     cf: CutoffFn, X, proposal_density) -> float:
    """-(1/N) sum w_i log p_hat(x_i), w_i = r^2 h / q."""
    X = np.asarray(X, dtype=np.float64)
    w = ce_weights(net, problem, cf, X, proposal_density)
    return float(-np.mean(w * np.asarray(flow.log_density(X))))


def reverse_kl(flow: FlowModel, net: SurrogateNet, problem: PdeProblem,
               cf: CutoffFn, Z, nets=None, floor: float = 1e-30):
    """(1/N) sum [log p_hat(x) - log(r^2 h + floor)] at x drawn through the
    inverse map from latent Z; differentiable through the sampling path."""
    X, logdet = flow.inverse_transform(Z, nets=nets)
    logp = flow.prior_logpdf(Z) + logdet
    r = residual_batch(problem, net, X)
    target = r * r * cf(X) + floor
    return ad.amean(logp - ad.log(target))


def train_flow(flow: FlowModel, net: SurrogateNet, problem: PdeProblem, cf: CutoffFn,
               data, epochs: int, batch: int, objective: str,
               state: OptimizerState | None = None, lr: float = 1e-4,
               rng: np.random.Generator | None = None):
    """N_e epochs of Adam on the chosen flow objective; returns (flow, trace, state).

    For ce_is, `data` is (points, proposal_densities): a fixed sample pool
    whose importance weights are computed once against the current net.
    For reverse_kl, `data` is the nominal pool size; each step resamples
    `batch` latent points through the flow.
    """
    if objective not in ("ce_is", "reverse_kl"):
        raise ContractViolation(f"unknown flow objective {objective!r}")
    rng = np.random.default_rng(0) if rng is None else rng
    state = init_adam(flow.n_params, lr) if state is None else state
    trace: list[float] = []
    if objective == "ce_is":
        X_pool, q_pool = data
        X_pool = np.asarray(X_pool, dtype=np.float64)
        w_pool = ce_weights(net, problem, cf, X_pool, q_pool)
        n = X_pool.shape[0]
        steps = max(1, math.ceil(n / batch))
        for _ in range(epochs):
            perm = rng.permutation(n)
            total = 0.0
            for j in range(steps):
                idx = perm[j * batch : (j + 1) * batch]
                if idx.size == 0:
                    idx = perm[:batch]
                tape = ad.Tape()
                nets = flow.layer_nets(tape, trainable=True)
                logp = flow.log_density(X_pool[idx], nets=nets)
                loss = -ad.amean(w_pool[idx] * logp)
                grads = ad.grad_params(tape, loss, flow.n_params)
                flow.params, state = adam_step(state, flow.params, grads)
                total += float(loss.value)
            trace.append(total / steps)
    else:
        pool_size = int(data) if data is not None else batch
        steps = max(1, math.ceil(pool_size / batch))
        for _ in range(epochs):
            total = 0.0
            for _ in range(steps):
                Z = rng.standard_normal((batch, flow.dim))
                tape = ad.Tape()
                nets = flow.layer_nets(tape, trainable=True)
                loss = reverse_kl(flow, net, problem, cf, tape.constant(Z), nets=nets)
                grads = ad.grad_params(tape, loss, flow.n_params)
                flow.params, state = adam_step(state, flow.params, grads)
                total += float(loss.value)
            trace.append(total / steps)
    return flow, trace, state
