"""Minimal dense/convolutional neural toolkit with reverse-mode gradients.

Tensors wrap float64 numpy arrays and record a backward closure per op; calling
``backward()`` on a scalar loss walks the graph in reverse topological order.
Only the ops the models need are provided: linear algebra, a fused
conv1d+max-pool, the usual activations, dropout, fused softmax cross-entropy,
and Adam. Everything is deterministic given (input, params, seed).
"""

import numpy as np

from .errors import ContractViolation

__all__ = [
    "Tensor",
    "Parameter",
    "tensor",
    "linear",
    "relu",
    "softsign",
    "softplus",
    "sigmoid",
    "softmax",
    "dropout",
    "log",
    "concat",
    "conv1d_maxpool",
    "cross_entropy",
    "softmax_cross_entropy",
    "AdamState",
    "adam_step",
    "glorot_uniform",
]


class Tensor:
    """A float64 array plus the backward closure that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph walking --------------------------------------------------

    def backward(self):
        """Accumulate gradients of this scalar into every reachable tensor."""
        if self.data.ndim != 0:
            raise ContractViolation("backward() requires a scalar tensor")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)

        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor(self.data + other.data, parents=(self, other), backward_fn=back)

    __radd__ = __add__

    def __neg__(self):
        def back(g):
            if self.requires_grad:
                self._accumulate(-g)

        return Tensor(-self.data, parents=(self,), backward_fn=back)

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other)

        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor(self.data * other.data, parents=(self, other), backward_fn=back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)

        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
                )

        return Tensor(self.data / other.data, parents=(self, other), backward_fn=back)

    def __matmul__(self, other):
        other = _as_tensor(other)
        a, b = self.data, other.data

        def back(g):
            if a.ndim == 1 and b.ndim == 1:  # dot -> scalar
                ga, gb = g * b, g * a
            elif a.ndim == 2 and b.ndim == 1:  # matrix @ vector
                ga, gb = np.outer(g, b), a.T @ g
            elif a.ndim == 1 and b.ndim == 2:  # vector @ matrix
                ga, gb = b @ g, np.outer(a, g)
            else:  # matrix @ matrix
                ga, gb = g @ b.T, a.T @ g
            if self.requires_grad:
                self._accumulate(ga)
            if other.requires_grad:
                other._accumulate(gb)

        return Tensor(a @ b, parents=(self, other), backward_fn=back)

    def sum(self):
        def back(g):
            if self.requires_grad:
                self._accumulate(np.full_like(self.data, g))

        return Tensor(self.data.sum(), parents=(self,), backward_fn=back)

    def mean(self):
        n = self.data.size

        def back(g):
            if self.requires_grad:
                self._accumulate(np.full_like(self.data, g / n))

        return Tensor(self.data.mean(), parents=(self,), backward_fn=back)


class Parameter(Tensor):
    """A named trainable tensor; models keep these in insertion-ordered dicts."""

    __slots__ = ("name",)

    def __init__(self, name, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def tensor(data):
    """Wrap raw data as a constant (no-grad) tensor."""
    return Tensor(data)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# -- layers and activations ---------------------------------------------


def linear(x, W, b):
    """W @ x + b with gradients for all three operands."""
    if W.data.shape[-1] != x.data.shape[0]:
        raise ContractViolation(
            f"linear: weight inner dim {W.data.shape[-1]} != input dim {x.data.shape[0]}"
        )
    return (W @ x) + b


def relu(x):
    x = _as_tensor(x)
    gate = x.data > 0

    def back(g):
        if x.requires_grad:
            x._accumulate(g * gate)

    return Tensor(np.where(gate, x.data, 0.0), parents=(x,), backward_fn=back)


def softsign(x):
    """x / (1 + |x|), the squash used by the reply-link scorer."""
    x = _as_tensor(x)
    denom = 1.0 + np.abs(x.data)

    def back(g):
        if x.requires_grad:
            x._accumulate(g / (denom * denom))

    return Tensor(x.data / denom, parents=(x,), backward_fn=back)


def sigmoid(x):
    x = _as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.data))

    def back(g):
        if x.requires_grad:
            x._accumulate(g * y * (1.0 - y))

    return Tensor(y, parents=(x,), backward_fn=back)


def softplus(x):
    """log(1 + e^x) computed stably; gradient is sigmoid(x)."""
    x = _as_tensor(x)
    y = np.logaddexp(0.0, x.data)
    sig = 1.0 / (1.0 + np.exp(-np.clip(x.data, -500, 500)))

    def back(g):
        if x.requires_grad:
            x._accumulate(g * sig)

    return Tensor(y, parents=(x,), backward_fn=back)


def softmax(x):
    """Row-wise softmax over the last axis."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        if x.requires_grad:
            inner = (g * y).sum(axis=-1, keepdims=True)
            x._accumulate(y * (g - inner))

    return Tensor(y, parents=(x,), backward_fn=back)


def log(x):
    x = _as_tensor(x)

    def back(g):
        if x.requires_grad:
            x._accumulate(g / x.data)

    return Tensor(np.log(x.data), parents=(x,), backward_fn=back)


def dropout(x, p, rng, training=True):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    Identity when not training or p == 0. The mask comes from ``rng`` so a
    seeded generator makes the whole training run reproducible.
    """
    if not 0.0 <= p < 1.0:
        raise ContractViolation(f"dropout probability must be in [0, 1), got {p}")
    x = _as_tensor(x)
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)

    def back(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return Tensor(x.data * mask, parents=(x,), backward_fn=back)


def concat(parts):
    """Concatenate 1-D tensors; gradient slices back into each part."""
    parts = [_as_tensor(p) for p in parts]
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if part.requires_grad:
                part._accumulate(g[lo:hi])

    return Tensor(np.concatenate([p.data for p in parts]), parents=tuple(parts), backward_fn=back)


def conv1d_maxpool(x, kernels, bias):
    """One convolution-pooling stage: ReLU(w . x[t:t+h]) then max over t.

    ``x`` is a length-n sequence of scalars, ``kernels`` an (m, h) matrix and
    ``bias`` an (m,) vector; the output is the (m,) vector of per-kernel
    pooled maxima. Ties at the max go to the first maximal position.
    """
    x, kernels, bias = _as_tensor(x), _as_tensor(kernels), _as_tensor(bias)
    n = x.data.shape[0]
    m, h = kernels.data.shape
    if n < h:
        raise ContractViolation(f"conv1d_maxpool: sequence length {n} < kernel size {h}")
    windows = np.lib.stride_tricks.sliding_window_view(x.data, h)  # (n-h+1, h)
    pre = windows @ kernels.data.T + bias.data  # (n-h+1, m)
    act = np.maximum(pre, 0.0)
    win_idx = act.argmax(axis=0)  # first maximal index per kernel
    cols = np.arange(m)
    out = act[win_idx, cols]

    def back(g):
        gate = pre[win_idx, cols] > 0.0
        gk = g * gate  # (m,)
        if kernels.requires_grad:
            kernels._accumulate(gk[:, None] * windows[win_idx])
        if bias.requires_grad:
            bias._accumulate(gk)
        if x.requires_grad:
            gx = np.zeros(n)
            contrib = gk[:, None] * kernels.data  # (m, h)
            starts = win_idx[:, None] + np.arange(h)[None, :]
            np.add.at(gx, starts, contrib)
            x._accumulate(gx)

    return Tensor(out, parents=(x, kernels, bias), backward_fn=back)


# -- losses --------------------------------------------------------------

_CE_CLAMP = 1e-12


def cross_entropy(pred, label):
    """-log pred[label] on a probability row, clamped at 1e-12. Plain float."""
    pred = pred.data if isinstance(pred, Tensor) else np.asarray(pred, dtype=np.float64)
    return float(-np.log(max(float(pred[label]), _CE_CLAMP)))


def softmax_cross_entropy(logits, label):
    """Fused softmax + cross-entropy; gradient on logits is (p - onehot)."""
    logits = _as_tensor(logits)
    shifted = logits.data - logits.data.max()
    e = np.exp(shifted)
    p = e / e.sum()
    loss = -np.log(max(float(p[label]), _CE_CLAMP))

    def back(g):
        if logits.requires_grad:
            grad = p.copy()
            grad[label] -= 1.0
            logits._accumulate(g * grad)

    return Tensor(loss, parents=(logits,), backward_fn=back)


# -- optimisation --------------------------------------------------------


class AdamState:
    """Per-parameter Adam moments plus the shared step counter."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step = 0
        self.m = {}
        self.v = {}


def adam_step(params, state):
    """Bias-corrected Adam update over named parameters; zeroes grads after."""
    state.step += 1
    t = state.step
    for p in params.values() if isinstance(params, dict) else params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.get(p.name)
        v = state.v.get(p.name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[p.name] = m
        state.v[p.name] = v
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        p.grad = None


def zero_grads(params):
    for p in params.values() if isinstance(params, dict) else params:
        p.grad = None


def glorot_uniform(rng, shape, fan_in, fan_out):
    """Seeded uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
