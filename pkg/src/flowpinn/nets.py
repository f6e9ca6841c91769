"""Fully connected tanh surrogate u(x; theta) and its parameter lifecycle.

Parameters live in one flat float64 vector, ordered weights-then-bias per
layer. The same forward code serves three modes via the dispatching math
in `autodiff`: plain numpy evaluation, tape evaluation with parameter
leaves (training), and tape evaluation with the input as a leaf
(derivatives through the sampling path).
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractViolation


class SurrogateNet:
    """MLP with tanh hidden activations and a linear scalar output."""

    def __init__(self, layer_sizes: Sequence[int], params: np.ndarray, seed: int = 0) -> None:
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ConfigError(f"invalid layer sizes {sizes}")
        if sizes[-1] != 1:
            raise ConfigError(f"output layer must have width 1, got {sizes[-1]}")
        self.layer_sizes = sizes
        self.seed = int(seed)
        self.shapes = list(zip(sizes[:-1], sizes[1:]))
        self.offsets: list[tuple[int, int, int]] = []  # (w_start, b_start, end) per layer
        pos = 0
        for n_in, n_out in self.shapes:
            self.offsets.append((pos, pos + n_in * n_out, pos + n_in * n_out + n_out))
            pos = self.offsets[-1][2]
        self.n_params = pos
        params = np.asarray(params, dtype=np.float64).ravel()
        if params.size != self.n_params:
            raise ConfigError(f"expected {self.n_params} parameters, got {params.size}")
        self.params = params.copy()

    @property
    def dim(self) -> int:
        return self.layer_sizes[0]

    def layer_arrays(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        for (n_in, n_out), (w0, b0, end) in zip(self.shapes, self.offsets):
            out.append((self.params[w0:b0].reshape(n_in, n_out), self.params[b0:end]))
        return out

    def layer_vars(self, tape: ad.Tape, trainable: bool = True) -> list[tuple]:
        """Layer tensors as tape leaves: param leaves if trainable, else constants."""
        out = []
        for (n_in, n_out), (w0, b0, end) in zip(self.shapes, self.offsets):
            W = self.params[w0:b0].reshape(n_in, n_out)
            b = self.params[b0:end]
            if trainable:
                out.append((tape.parameter(W, w0, b0), tape.parameter(b, b0, end)))
            else:
                out.append((tape.constant(W), tape.constant(b)))
        return out


def init_net(layer_sizes: Sequence[int], seed: int) -> SurrogateNet:
    """Weights ~ N(0, 1/fan_in), biases zero; deterministic per seed."""
    probe = SurrogateNet(layer_sizes, np.zeros(_param_count(layer_sizes)), seed)
    rng = np.random.default_rng(seed)
    params = np.zeros(probe.n_params)
    for (n_in, n_out), (w0, b0, _) in zip(probe.shapes, probe.offsets):
        params[w0:b0] = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=n_in * n_out)
    return SurrogateNet(layer_sizes, params, seed)


def _param_count(layer_sizes: Sequence[int]) -> int:
    sizes = [int(s) for s in layer_sizes]
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def mlp_forward(layers, X):
    """Forward pass; operands may be numpy arrays or tape Vars."""
    h = X
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        h = ad.matmul(h, W) + b
        if i < last:
            h = ad.tanh(h)
    n = ad.value_of(X).shape[0]
    return ad.reshape(h, (n,))


def mlp_jets(layers, X):
    """Value, input gradient, and Laplacian for a batch, via one jet pass per axis.

    Returns (u, G, lap) with shapes (n,), (n, d), (n,). Works on numpy
    arrays or tape Vars. Direction jets are carried as (n*d, width)
    matrices so each layer costs three matrix products.
    """
    n, d = ad.value_of(X).shape
    h = X
    D = np.tile(np.eye(d), (n, 1))
    S = np.zeros((n * d, d))
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = ad.matmul(h, W) + b
        Dz = ad.matmul(D, W)
        Sz = ad.matmul(S, W)
        if i < last:
            w_out = ad.value_of(z).shape[1]
            t = ad.tanh(z)
            f1 = 1.0 - t * t
            f1e = ad.reshape(f1, (n, 1, w_out))
            te = ad.reshape(t, (n, 1, w_out))
            Dz3 = ad.reshape(Dz, (n, d, w_out))
            Sz3 = ad.reshape(Sz, (n, d, w_out))
            D3 = f1e * Dz3
            S3 = f1e * Sz3 - (2.0 * te * f1e) * (Dz3 * Dz3)
            h = t
            D = ad.reshape(D3, (n * d, w_out))
            S = ad.reshape(S3, (n * d, w_out))
        else:
            u = ad.reshape(z, (n,))
            G = ad.reshape(Dz, (n, d))
            lap = ad.asum(ad.reshape(Sz, (n, d)), axis=1)
            return u, G, lap
    raise AssertionError("unreachable")


def eval_batch(net: SurrogateNet, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.dim:
        raise ContractViolation(f"expected points of dimension {net.dim}, got shape {X.shape}")
    return np.asarray(mlp_forward(net.layer_arrays(), X))


def eval_net(net: SurrogateNet, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != net.dim:
        raise ContractViolation(f"expected a {net.dim}-dimensional point, got {x.size}")
    return float(eval_batch(net, x.reshape(1, -1))[0])


def save_net(net: SurrogateNet, path) -> None:
    doc = {
        "layer_sizes": net.layer_sizes,
        "seed": net.seed,
        "params": [float(f"{p:.17g}") for p in net.params],
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_net(path) -> SurrogateNet:
    with open(path) as fh:
        doc = json.load(fh)
    return SurrogateNet(doc["layer_sizes"], np.array(doc["params"]), doc["seed"])
