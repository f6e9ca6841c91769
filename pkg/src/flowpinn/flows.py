"""Invertible density model on a padded box B around the domain.

The model composes, per axis, an affine rescale of the physical box to
the reference cube [-1/2, 1/2]^d, a logarithmic map l stretching the
padded reference box B = (-(1+delta)/2, (1+delta)/2)^d onto R^d, and a
stack of affine coupling layers. Densities come from the change of
variables against a standard Gaussian prior; sampling runs the stack in
reverse. A K-block schedule freezes trailing coordinates after each
block of layers, giving the triangular-transport flavor of the map.

All transform code is written against the dispatching math in
`autodiff`, so the same functions run on numpy arrays (sampling,
density evaluation) and on tape Vars (training either through density
evaluation or through the sampling path).
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractViolation

LOG_2PI = math.log(2.0 * math.pi)


class BoundedMap:
    """Per-axis bijection between the padded physical box B and R^d."""

    def __init__(self, box, delta: float = 0.01, scale: float = 2.0) -> None:
        self.box = np.asarray(box, dtype=np.float64)
        if self.box.ndim != 2 or self.box.shape[1] != 2 or np.any(self.box[:, 1] <= self.box[:, 0]):
            raise ConfigError(f"invalid box {self.box.tolist()}")
        if delta <= 0 or scale <= 0:
            raise ConfigError("delta and scale must be positive")
        self.delta = float(delta)
        self.scale = float(scale)
        self.mid = (self.box[:, 0] + self.box[:, 1]) / 2.0
        self.ext = self.box[:, 1] - self.box[:, 0]
        self.ref_half = (1.0 + self.delta) / 2.0

    @property
    def dim(self) -> int:
        return self.box.shape[0]

    def b_bounds(self) -> np.ndarray:
        """Physical bounds of the padded box B, shape (d, 2)."""
        return np.stack([self.mid - self.ext * self.ref_half,
                         self.mid + self.ext * self.ref_half], axis=1)

    def affine_logjac(self) -> float:
        """log |d x_ref / d x_phys|, a constant."""
        return float(-np.sum(np.log(self.ext)))

    def to_ref(self, X):
        return (X - self.mid) * (1.0 / self.ext)

    def from_ref(self, U):
        return U * self.ext + self.mid

    def check_inside(self, U: np.ndarray) -> None:
        if np.any(np.abs(np.asarray(U)) >= self.ref_half):
            raise ContractViolation("point lies on or outside the padded box B")

    def log_map(self, U):
        """y_i = s * atanh(2 u_i / (1 + delta)), the padded-box-to-R^d stretch."""
        return self.scale * ad.atanh(U * (2.0 / (1.0 + self.delta)))

    def inv_log_map(self, Y):
        t = ad.tanh(Y * (1.0 / self.scale))
        # pin one ulp inside the edge: saturated tails otherwise land exactly
        # on |u| = ref_half where the stretch-map Jacobian degenerates
        c = float(np.nextafter(1.0, 0.0))
        return self.ref_half * ad.minimum(ad.maximum(t, -c), c)

    def logjac_ref(self, U):
        """Row sums of log l'(u); U in reference coords, shape (n, d)."""
        w = U * (2.0 / (1.0 + self.delta))
        per_axis = math.log(2.0 * self.scale / (1.0 + self.delta)) - ad.log(1.0 - w * w)
        return ad.asum(per_axis, axis=1)


class CutoffFn:
    """Product of per-axis piecewise-linear tapers: 1 on the domain, 0 outside B."""

    def __init__(self, bounded_map: BoundedMap) -> None:
        self.bm = bounded_map
        self.delta = bounded_map.delta

    def __call__(self, X):
        U = self.bm.to_ref(X)
        inv = 1.0 / self.delta
        left = (2.0 * U + (1.0 + self.delta)) * inv
        right = ((1.0 + self.delta) - 2.0 * U) * inv
        ramp = ad.maximum(ad.minimum(ad.minimum(left, right), 1.0), 0.0)
        n, d = ad.value_of(U).shape
        total = None
        for i in range(d):
            col = ad.reshape(ad.gather_cols(ramp, [i]), (n,))
            total = col if total is None else total * col
        return total


def cutoff(cf: CutoffFn, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(np.asarray(cf(x))[0])


def project(box, x):
    """Entry-wise clamp onto the closed physical box."""
    box = np.asarray(box, dtype=np.float64)
    return np.clip(np.asarray(x, dtype=np.float64), box[:, 0], box[:, 1])


def partition_samples(box, points):
    """Split candidate points into in-domain points and clamped boundary points."""
    box = np.asarray(box, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    inside = np.all((points >= box[:, 0]) & (points <= box[:, 1]), axis=1)
    return points[inside], project(box, points[~inside])


# ---------------------------------------------------------------------------
# coupling layers


def _subnet_shapes(n_in: int, width: int, n_out: int):
    return [(n_in, width), (width, width), (width, n_out)]


def _subnet_param_count(n_in: int, width: int, n_out: int) -> int:
    return sum(a * b + b for a, b in _subnet_shapes(n_in, width, n_out))


def _subnet_forward(layers, X):
    """Two ReLU hidden layers, linear output; numpy or Var operands."""
    h = X
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        h = ad.matmul(h, W) + b
        if i < last:
            h = ad.relu(h)
    return h


class _LayerMask:
    def __init__(self, cond, trans, frozen) -> None:
        self.cond = np.asarray(cond, dtype=np.intp)
        self.trans = np.asarray(trans, dtype=np.intp)
        self.frozen = np.asarray(frozen, dtype=np.intp)


def build_masks(d: int, L: int, K: int) -> list[_LayerMask]:
    """Alternating coupling masks; after each of the first K-1 blocks the
    trailing floor(d/K) coordinates are frozen (at least 2 stay active)."""
    if d < 2:
        return []
    if K < 1 or K > d:
        raise ConfigError(f"block count K={K} out of range for dimension {d}")
    per_block = [L // K + (1 if j < L % K else 0) for j in range(K)]
    freeze = d // K if K > 1 else 0
    masks: list[_LayerMask] = []
    n_active = d
    for j, n_layers in enumerate(per_block):
        active = np.arange(n_active)
        frozen = np.arange(n_active, d)
        for i in range(n_layers):
            cond, trans = active[i % 2 :: 2], active[(i + 1) % 2 :: 2]
            masks.append(_LayerMask(cond, trans, frozen))
        if j < K - 1:
            n_active = max(2, n_active - freeze)
    return masks


class FlowModel:
    """Coupling-flow density model over the padded box B."""

    def __init__(self, bounded_map: BoundedMap, masks: list[_LayerMask], width: int,
                 params: np.ndarray, K: int, seed: int = 0, clamp: float = 5.0) -> None:
        self.bm = bounded_map
        self.masks = masks
        self.width = int(width)
        self.K = int(K)
        self.seed = int(seed)
        self.clamp = float(clamp)
        self.offsets: list[tuple[int, int]] = []  # (scale_net_start, shift_net_start) per layer
        pos = 0
        for m in self.masks:
            n_sub = _subnet_param_count(len(m.cond), self.width, len(m.trans))
            self.offsets.append((pos, pos + n_sub))
            pos += 2 * n_sub
        self.n_params = pos
        params = np.asarray(params, dtype=np.float64).ravel()
        if params.size != self.n_params:
            raise ConfigError(f"expected {self.n_params} flow parameters, got {params.size}")
        self.params = params.copy()

    @property
    def dim(self) -> int:
        return self.bm.dim

    @property
    def n_layers(self) -> int:
        return len(self.masks)

    # -- parameter views -----------------------------------------------------

    def _subnet_slices(self, layer: int, which: int):
        """(start, stop, shape) triples for one subnet's tensors."""
        m = self.masks[layer]
        start = self.offsets[layer][which]
        out = []
        for shape in _subnet_shapes(len(m.cond), self.width, len(m.trans)):
            w_sz = shape[0] * shape[1]
            out.append((start, start + w_sz, shape))
            out.append((start + w_sz, start + w_sz + shape[1], (shape[1],)))
            start += w_sz + shape[1]
        return out

    def _subnet_arrays(self, layer: int, which: int):
        out = []
        sl = self._subnet_slices(layer, which)
        for i in range(0, len(sl), 2):
            w0, w1, shape = sl[i]
            b0, b1, _ = sl[i + 1]
            out.append((self.params[w0:w1].reshape(shape), self.params[b0:b1]))
        return out

    def _subnet_vars(self, tape: ad.Tape, layer: int, which: int, trainable: bool):
        out = []
        sl = self._subnet_slices(layer, which)
        for i in range(0, len(sl), 2):
            w0, w1, shape = sl[i]
            b0, b1, _ = sl[i + 1]
            W = self.params[w0:w1].reshape(shape)
            b = self.params[b0:b1]
            if trainable:
                out.append((tape.parameter(W, w0, w1), tape.parameter(b, b0, b1)))
            else:
                out.append((tape.constant(W), tape.constant(b)))
        return out

    def layer_nets(self, tape: ad.Tape | None = None, trainable: bool = True):
        """Per layer: (scale_net, shift_net) as arrays, or tape leaves if a tape is given."""
        out = []
        for i in range(self.n_layers):
            if tape is None:
                out.append((self._subnet_arrays(i, 0), self._subnet_arrays(i, 1)))
            else:
                out.append((self._subnet_vars(tape, i, 0, trainable),
                            self._subnet_vars(tape, i, 1, trainable)))
        return out

    # -- transforms -----------------------------------------------------------

    def _couple(self, nets, mask: _LayerMask, Y, inverse: bool):
        """One coupling layer; returns (out, forward-direction logdet rows)."""
        scale_net, shift_net = nets
        n = ad.value_of(Y).shape[0]
        xc = ad.gather_cols(Y, mask.cond)
        xt = ad.gather_cols(Y, mask.trans)
        ls = ad.tanh(_subnet_forward(scale_net, xc) * (1.0 / self.clamp)) * self.clamp
        shift = _subnet_forward(shift_net, xc)
        if inverse:
            yt = (xt - shift) * ad.exp(-ls)
        else:
            yt = xt * ad.exp(ls) + shift
        ld = ad.asum(ls, axis=1)
        parts = [xc, yt]
        groups = [mask.cond, mask.trans]
        if len(mask.frozen):
            parts.append(ad.gather_cols(Y, mask.frozen))
            groups.append(mask.frozen)
        out = ad.assemble_cols(parts, groups, self.dim)
        return ad.reshape(ld, (n,)), out

    def transform(self, X, nets=None):
        """Physical points -> latent, with log |det d latent / d x|."""
        U = self.bm.to_ref(X)
        if not isinstance(U, ad.Var):
            self.bm.check_inside(U)
        Y = self.bm.log_map(U)
        logdet = self.bm.logjac_ref(U) + self.bm.affine_logjac()
        nets = self.layer_nets() if nets is None else nets
        for layer_nets, mask in zip(nets, self.masks):
            ld, Y = self._couple(layer_nets, mask, Y, inverse=False)
            logdet = logdet + ld
        return Y, logdet

    def inverse_transform(self, Z, nets=None):
        """Latent -> physical, with the forward-direction logdet at the result."""
        nets = self.layer_nets() if nets is None else nets
        Y = Z
        logdet = None
        for layer_nets, mask in zip(reversed(nets), reversed(self.masks)):
            ld, Y = self._couple(layer_nets, mask, Y, inverse=True)
            logdet = ld if logdet is None else logdet + ld
        U = self.bm.inv_log_map(Y)
        X = self.bm.from_ref(U)
        jac = self.bm.logjac_ref(U) + self.bm.affine_logjac()
        logdet = jac if logdet is None else logdet + jac
        return X, logdet

    def prior_logpdf(self, Z):
        return -0.5 * ad.asum(Z * Z, axis=1) - 0.5 * self.dim * LOG_2PI

    def log_density(self, X, nets=None):
        Z, logdet = self.transform(X, nets=nets)
        return self.prior_logpdf(Z) + logdet


def flow_forward(fm: FlowModel, x):
    """Single-point transform; returns (z vector, logdet)."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    Z, ld = fm.transform(x)
    return np.asarray(Z)[0], float(np.asarray(ld)[0])


def flow_inverse(fm: FlowModel, z):
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    X, ld = fm.inverse_transform(z)
    return np.asarray(X)[0], float(np.asarray(ld)[0])


def density(fm: FlowModel, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(np.exp(np.asarray(fm.log_density(x))[0]))


def density_batch(fm: FlowModel, X) -> np.ndarray:
    return np.exp(np.asarray(fm.log_density(np.asarray(X, dtype=np.float64))))


def sample(fm: FlowModel, n: int, seed) -> np.ndarray:
    X, _ = sample_with_density(fm, n, seed)
    return X


def sample_with_density(fm: FlowModel, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw n points on B and their model densities in one inverse pass."""
    if n <= 0:
        raise ContractViolation("sample count must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    Z = rng.standard_normal((n, fm.dim))
    X, logdet = fm.inverse_transform(Z)
    logp = np.asarray(fm.prior_logpdf(Z)) + np.asarray(logdet)
    return np.asarray(X), np.exp(logp)


def init_flow(box, n_layers: int, width: int, seed: int, K: int = 1,
              delta: float = 0.01, scale: float = 2.0, clamp: float = 5.0) -> FlowModel:
    """Identity-initialized flow: hidden subnet weights ~ N(0, 1/fan_in),
    final subnet layers zero, so the starting density is the log-map
    pushforward of the Gaussian prior."""
    bm = BoundedMap(box, delta=delta, scale=scale)
    masks = build_masks(bm.dim, n_layers, K)
    probe = FlowModel(bm, masks, width, np.zeros(_flow_param_count(masks, width)), K, seed, clamp)
    rng = np.random.default_rng(seed)
    params = np.zeros(probe.n_params)
    for layer in range(probe.n_layers):
        for which in range(2):
            sl = probe._subnet_slices(layer, which)
            # hidden tensors only: the last weight/bias pair stays zero
            for i in range(0, len(sl) - 2, 2):
                w0, w1, shape = sl[i]
                params[w0:w1] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=w1 - w0)
    return FlowModel(bm, masks, width, params, K, seed, clamp)


def _flow_param_count(masks, width: int) -> int:
    return sum(2 * _subnet_param_count(len(m.cond), width, len(m.trans)) for m in masks)


# ---------------------------------------------------------------------------
# checkpointing


def save_flow(fm: FlowModel, path) -> None:
    layer_params = []
    for (start, _), m in zip(fm.offsets, fm.masks):
        n_sub = _subnet_param_count(len(m.cond), fm.width, len(m.trans))
        chunk = fm.params[start : start + 2 * n_sub]
        layer_params.append([float(f"{p:.17g}") for p in chunk])
    doc = {
        "d": fm.dim,
        "K": fm.K,
        "L": fm.n_layers,
        "masks": [{"cond": m.cond.tolist(), "trans": m.trans.tolist(),
                   "frozen": m.frozen.tolist()} for m in fm.masks],
        "delta": fm.bm.delta,
        "s": fm.bm.scale,
        "box": fm.bm.box.tolist(),
        "width": fm.width,
        "clamp": fm.clamp,
        "seed": fm.seed,
        "params": layer_params,
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_flow(path) -> FlowModel:
    with open(path) as fh:
        doc = json.load(fh)
    bm = BoundedMap(np.array(doc["box"]), delta=doc["delta"], scale=doc["s"])
    masks = [_LayerMask(m["cond"], m["trans"], m["frozen"]) for m in doc["masks"]]
    params = np.concatenate([np.array(p) for p in doc["params"]]) if doc["params"] else np.zeros(0)
    return FlowModel(bm, masks, doc["width"], params, doc["K"], doc["seed"], doc["clamp"])
