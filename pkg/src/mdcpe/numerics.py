"""Dense float64 arithmetic shared by both learners.

Activations, softmax cross-entropy, affine layers, plain SGD, seeded
randomness and a central-difference gradient checker.  Everything is 64-bit
and deterministic given a SeededRng.
"""

import numpy as np

from .errors import InvalidClass, InvalidConfig, ShapeError

PROB_CLAMP = 1e-12


class SeededRng:
    """Deterministic random stream.

    Backed by numpy's PCG64 generator: the same seed and the same call
    sequence produce bit-identical outputs on every platform.
    """

    def __init__(self, seed):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low, high, shape):
        return self._gen.uniform(low, high, size=shape).astype(np.float64)

    def normal(self, loc, scale, shape):
        return self._gen.normal(loc, scale, size=shape).astype(np.float64)

    def random(self, shape=None):
        return self._gen.random(size=shape)

    def integers(self, low, high, shape=None):
        if shape is None:
            return int(self._gen.integers(low, high))
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]


class ParamStore:
    """Named parameter tensors, each paired with a same-shape gradient buffer."""

    def __init__(self):
        self._values = {}
        self._grads = {}

    def add(self, name, value):
        if name in self._values:
            raise InvalidConfig(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=np.float64)
        self._values[name] = arr
        self._grads[name] = np.zeros_like(arr)

    def value(self, name):
        return self._values[name]

    def grad(self, name):
        return self._grads[name]

    def names(self):
        return list(self._values)

    def zero_grad(self):
        for g in self._grads.values():
            g[...] = 0.0

    def copy(self):
        out = ParamStore()
        for name, v in self._values.items():
            out.add(name, v.copy())
            out._grads[name][...] = self._grads[name]
        return out

    def load_values(self, other):
        """Copy values from another store with identical names/shapes."""
        for name in self._values:
            self._values[name][...] = other.value(name)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh_act(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def cross_entropy(probs, target):
    """Loss -log p[target] and its gradient w.r.t. the logits (probs - onehot)."""
    probs = np.asarray(probs, dtype=np.float64)
    k = probs.shape[0]
    if not (0 <= target < k):
        raise InvalidClass(f"target {target} outside [0, {k})")
    loss = -np.log(np.clip(probs[target], PROB_CLAMP, 1.0))
    dlogits = probs.copy()
    dlogits[target] -= 1.0
    return loss, dlogits


def linear(x, weights, bias):
    """Affine map weights @ x + bias for a 1-D input."""
    x = np.asarray(x, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise ShapeError(
            f"linear: weights {weights.shape} does not accept input {x.shape}")
    if bias.shape[0] != weights.shape[0]:
        raise ShapeError(f"linear: bias {bias.shape} vs weights {weights.shape}")
    return weights @ x + bias


def linear_backward(x, weights, dy):
    """Gradients of an affine map: returns (dx, dweights, dbias)."""
    dx = weights.T @ dy
    dw = np.outer(dy, x)
    return dx, dw, dy.copy()


def sgd_step(params, learning_rate):
    """value <- value - lr * grad for every entry, then zero the gradients."""
    if learning_rate <= 0:
        raise InvalidConfig(f"learning rate must be positive, got {learning_rate}")
    for name in params.names():
        params.value(name)[...] -= learning_rate * params.grad(name)
    params.zero_grad()


def gradient_check(forward, params, epsilon=1e-5):
    """Max relative error between stored analytic grads and central differences.

    `forward(params)` must be a deterministic scalar function of the current
    parameter values; the analytic gradients are read from the store.
    """
    max_err = 0.0
    for name in params.names():
        flat_v = params.value(name).ravel()
        flat_g = params.grad(name).ravel()
        for i in range(flat_v.size):
            orig = flat_v[i]
            flat_v[i] = orig + epsilon
            fp = forward(params)
            flat_v[i] = orig - epsilon
            fm = forward(params)
            flat_v[i] = orig
            numeric = (fp - fm) / (2.0 * epsilon)
            analytic = flat_g[i]
            denom = max(abs(analytic), abs(numeric), 1e-8)
            err = abs(analytic - numeric) / denom
            if err > max_err:
                max_err = err
    return max_err
