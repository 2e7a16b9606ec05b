"""Dense feed-forward networks used as ODE right-hand sides.

The networks are plain numpy: a stack of affine layers with an elementwise
activation between them and no activation after the last layer.  Besides
the forward map, the module provides exact reverse-mode contractions
(vector-Jacobian products) against the input and against the parameters;
those are the only derivatives the adjoint machinery needs.

Inputs may be single vectors ``(n,)`` or batches ``(B, n)``.  When a
network is time-conditioned, the scalar time is appended as one extra
input coordinate and its cotangent slot is dropped again on the way back.
"""

from dataclasses import dataclass, replace

import numpy as np


def _tanh(z):
    return np.tanh(z)


def _tanh_deriv(z):
    c = np.cosh(z)
    return 1.0 / (c * c)


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_deriv(z):
    return (z > 0.0).astype(float)


def _hardtanh(z):
    return np.clip(z, -1.0, 1.0)


def _hardtanh_deriv(z):
    # Subgradient 0 exactly at |z| = 1, matching the clipped forward value.
    return (np.abs(z) < 1.0).astype(float)


ACTIVATIONS = {
    "tanh": (_tanh, _tanh_deriv),
    "relu": (_relu, _relu_deriv),
    "hardtanh": (_hardtanh, _hardtanh_deriv),
}


@dataclass
class FieldNet:
    """A dense network ``f(h, t)`` with explicit weights and biases.

    ``weights[l]`` has shape ``(out_l, in_l)``; consecutive layers must
    chain.  ``activation`` applies to every layer except the last.
    """

    weights: list
    biases: list
    activation: str = "tanh"
    time_conditioned: bool = True

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty parallel lists")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError(f"layer {l}: weight/bias shapes are inconsistent")
            if l > 0 and W.shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"layer {l}: input width does not chain")

    @property
    def in_dim(self) -> int:
        """First-layer input width, including the time slot if present."""
        return self.weights[0].shape[1]

    @property
    def state_dim(self) -> int:
        """Width of the state input ``h`` (time slot excluded)."""
        return self.in_dim - (1 if self.time_conditioned else 0)

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_params(self) -> int:
        return sum(W.size for W in self.weights) + sum(b.size for b in self.biases)


def init_field(
    state_dim: int,
    hidden: tuple,
    out_dim: int,
    activation: str = "tanh",
    time_conditioned: bool = True,
    seed: int = 0,
) -> FieldNet:
    """Build a field with weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    widths = [state_dim + (1 if time_conditioned else 0), *hidden, out_dim]
    weights = []
    biases = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return FieldNet(weights, biases, activation=activation, time_conditioned=time_conditioned)


def _augment(net: FieldNet, h: np.ndarray, t: float) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    squeeze = h.ndim == 1
    u = h.reshape(1, -1) if squeeze else h
    if u.shape[1] != net.state_dim:
        raise ValueError(f"input width {u.shape[1]} != expected {net.state_dim}")
    if net.time_conditioned:
        col = np.full((u.shape[0], 1), float(t))
        u = np.concatenate([u, col], axis=1)
    return u, squeeze


def eval_cached(net: FieldNet, h: np.ndarray, t: float):
    """Forward pass returning ``(f, cache)`` for later VJP sweeps."""
    u, squeeze = _augment(net, h, t)
    act, _ = ACTIVATIONS[net.activation]
    last = len(net.weights) - 1
    layer_in = [u]
    pre = []
    x = u
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = x @ W.T + b
        pre.append(z)
        if l < last:
            x = act(z)
            layer_in.append(x)
        else:
            x = z
    out = x[0] if squeeze else x
    return out, (layer_in, pre, squeeze)


def vjp_from_cache(net: FieldNet, cache, a: np.ndarray, need_input=True, need_params=True):
    """Reverse sweep: returns ``(a^T df/dh, a^T df/dtheta)`` for cotangent ``a``.

    Either output may be requested alone; the other comes back as None.
    The parameter contraction is summed over the batch and flattened in
    :func:`params_to_vec` order.
    """
    layer_in, pre, squeeze = cache
    _, dact = ACTIVATIONS[net.activation]
    g = np.asarray(a, dtype=float)
    if g.ndim == 1:
        g = g.reshape(1, -1)
    if g.shape != (layer_in[0].shape[0], net.out_dim):
        raise ValueError("cotangent shape does not match the cached forward pass")
    grads_W = [None] * len(net.weights) if need_params else None
    grads_b = [None] * len(net.weights) if need_params else None
    for l in range(len(net.weights) - 1, -1, -1):
        if need_params:
            grads_W[l] = g.T @ layer_in[l]
            grads_b[l] = g.sum(axis=0)
        g = g @ net.weights[l]
        if l > 0:
            g = g * dact(pre[l - 1])
    grad_h = None
    if need_input:
        grad_h = g[:, : net.state_dim] if net.time_conditioned else g
        if squeeze:
            grad_h = grad_h[0]
    grad_theta = None
    if need_params:
        grad_theta = np.concatenate(
            [W.ravel() for W in grads_W] + [b for b in grads_b]
        )
    return grad_h, grad_theta


def forward(net: FieldNet, h: np.ndarray, t: float) -> np.ndarray:
    """Evaluate ``f(h, t)``."""
    out, _ = eval_cached(net, h, t)
    return out


def vjp_input(net: FieldNet, h: np.ndarray, t: float, a: np.ndarray) -> np.ndarray:
    """Contraction ``a^T df/dh`` at ``(h, t)``; time slot dropped."""
    _, cache = eval_cached(net, h, t)
    grad_h, _ = vjp_from_cache(net, cache, a, need_input=True, need_params=False)
    return grad_h


def vjp_params(net: FieldNet, h: np.ndarray, t: float, a: np.ndarray) -> np.ndarray:
    """Contraction ``a^T df/dtheta`` at ``(h, t)`` as a flat vector."""
    _, cache = eval_cached(net, h, t)
    _, grad_theta = vjp_from_cache(net, cache, a, need_input=False, need_params=True)
    return grad_theta


def params_to_vec(net: FieldNet) -> np.ndarray:
    """Flatten all parameters: every weight matrix in layer order, then every bias."""
    return np.concatenate([W.ravel() for W in net.weights] + [b.copy() for b in net.biases])


def vec_to_params(net: FieldNet, vec: np.ndarray) -> FieldNet:
    """Rebuild a field of ``net``'s shape from a flat parameter vector."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (net.n_params,):
        raise ValueError(f"expected {net.n_params} parameters, got {vec.shape}")
    weights = []
    biases = []
    pos = 0
    for W in net.weights:
        weights.append(vec[pos : pos + W.size].reshape(W.shape).copy())
        pos += W.size
    for b in net.biases:
        biases.append(vec[pos : pos + b.size].copy())
        pos += b.size
    return replace(net, weights=weights, biases=biases)


@dataclass
class LinearStateMap:
    """Optional learned map from the initial state to an auxiliary block.

    ``apply`` computes ``W h + b`` (squared elementwise when
    ``square_output`` is set, which keeps the image non-negative).  Used
    for learned initial momentum or second-moment blocks; off by default
    everywhere.
    """

    W: np.ndarray
    b: np.ndarray
    square_output: bool = False

    def apply(self, h: np.ndarray) -> np.ndarray:
        y = h @ self.W.T + self.b
        return y * y if self.square_output else y

    def vjp(self, h: np.ndarray, a: np.ndarray):
        """Returns ``(a^T dout/dh, flat a^T dout/dparams)`` summed over any batch."""
        h2 = h.reshape(1, -1) if h.ndim == 1 else h
        a2 = a.reshape(1, -1) if a.ndim == 1 else a
        if self.square_output:
            a2 = 2.0 * (h2 @ self.W.T + self.b) * a2
        grad_h = a2 @ self.W
        grad_W = a2.T @ h2
        grad_b = a2.sum(axis=0)
        if h.ndim == 1:
            grad_h = grad_h[0]
        return grad_h, np.concatenate([grad_W.ravel(), grad_b])

    @property
    def n_params(self) -> int:
        return self.W.size + self.b.size
