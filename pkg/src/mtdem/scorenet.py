"""A small fully-connected score network with hand-rolled backprop.

Three affine layers with Softplus activations between them; optionally
time-conditioned, in which case the diffusion time is appended to the
input vector.  Forward, backward, and the exact input Jacobian are all
plain numpy, which keeps training bit-reproducible under a fixed seed and
lets gradient checks compare against finite differences without any
framework in the way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x), stable on both tails
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class MlpScoreNet:
    """Weights of an affine/Softplus/affine/Softplus/affine score model.

    ``layer_dims`` lists the data-path widths, e.g. [25, 128, 128, 25];
    when ``time_conditioned`` the first weight matrix has one extra input
    column for t.  Weight matrices are stored (out, in).
    """

    layer_dims: list[int]
    time_conditioned: bool = False
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "MlpScoreNet":
        return MlpScoreNet(
            layer_dims=list(self.layer_dims),
            time_conditioned=self.time_conditioned,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_mlp(
    layer_dims: list[int],
    time_conditioned: bool = False,
    seed: int = 0,
) -> MlpScoreNet:
    """Fan-in scaled uniform initialization, fully seed-determined."""
    if len(layer_dims) < 2:
        raise ValueError("need at least input and output dims")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n, (din, dout) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
        if n == 0 and time_conditioned:
            din += 1
        bound = 1.0 / np.sqrt(din)
        weights.append(rng.uniform(-bound, bound, size=(dout, din)))
        biases.append(rng.uniform(-bound, bound, size=dout))
    return MlpScoreNet(list(layer_dims), time_conditioned, weights, biases)


def _augment(net: MlpScoreNet, x: np.ndarray, t) -> np.ndarray:
    if not net.time_conditioned:
        if t is not None:
            raise ValueError("net is not time-conditioned; do not pass t")
        return x
    if t is None:
        raise ValueError("time-conditioned net needs t")
    tcol = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    return np.concatenate([x, tcol[:, None]], axis=1)


def forward(net: MlpScoreNet, x: np.ndarray, t=None, cache: list | None = None) -> np.ndarray:
    """Evaluate the score on a batch (B, d) or a single vector (d,).

    Pass a list as ``cache`` to record the layer inputs and pre-activations
    needed by ``backward``.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != net.layer_dims[0]:
        raise ValueError(f"input width {x.shape[1]} != {net.layer_dims[0]}")
    h = _augment(net, x, t)
    last = len(net.weights) - 1
    for n, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        if cache is not None:
            cache.append((h, z))
        h = z if n == last else softplus(z)
    return h[0] if single else h


def backward(net: MlpScoreNet, cache: list, dout: np.ndarray):
    """Backpropagate dLoss/dOutput through a cached forward pass.

    Returns (weight grads, bias grads, dLoss/dInput); the input gradient
    covers the augmented input (time column included when conditioned).
    """
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    delta = np.asarray(dout, dtype=np.float64)
    for n in range(len(net.weights) - 1, -1, -1):
        h, z = cache[n]
        if n != len(net.weights) - 1:
            delta = delta * sigmoid(z)
        grads_w[n] = delta.T @ h
        grads_b[n] = delta.sum(axis=0)
        delta = delta @ net.weights[n]
    return grads_w, grads_b, delta


def input_jacobian(net: MlpScoreNet, x: np.ndarray, t=None) -> np.ndarray:
    """Exact Jacobian of the score with respect to the data input, shape
    (d_out, d_in); the time column is excluded for conditioned nets."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("input_jacobian works on a single vector")
    cache: list = []
    forward(net, x, t, cache=cache)
    jac = net.weights[-1].copy()
    for n in range(len(net.weights) - 2, -1, -1):
        _, z = cache[n]
        jac = (jac * sigmoid(z[0])[None, :]) @ net.weights[n]
    if net.time_conditioned:
        jac = jac[:, :-1]
    return jac
