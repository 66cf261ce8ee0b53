"""GRU-based spectral sequence classifier (the spectral view, F1).

Gates follow the bias-free recurrence
    z = sigmoid(Wz x + Uz h),  r = sigmoid(Wr x + Ur h),
    hc = tanh(W x + r * (U h)),  h' = z * h + (1 - z) * hc
with a tanh FC1 and a linear FC2 head; FC2 logits double as the feature
vector.  Backward is full BPTT.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InternalError, InvalidInput, ShapeError
from .numerics import (ParamStore, cross_entropy, sgd_step, sigmoid, softmax,
                       tanh_act)
from .preprocess import spectrum_to_sequence

GRU_NAMES = ("wz", "uz", "wr", "ur", "w", "u")


@dataclass
class RnnModel:
    group: int
    hidden: int
    fc1_size: int
    k: int
    params: ParamStore


def _uniform_init(rng, shape, fan_in):
    s = np.sqrt(1.0 / fan_in)
    return rng.uniform(-s, s, shape)


def init_rnn(group, hidden, fc1_size, k, rng):
    p = ParamStore()
    for name in ("wz", "wr", "w"):
        p.add(name, _uniform_init(rng, (hidden, group), group))
    for name in ("uz", "ur", "u"):
        p.add(name, _uniform_init(rng, (hidden, hidden), hidden))
    p.add("fc1_w", _uniform_init(rng, (fc1_size, hidden), hidden))
    p.add("fc1_b", np.zeros(fc1_size))
    p.add("fc2_w", _uniform_init(rng, (k, fc1_size), fc1_size))
    p.add("fc2_b", np.zeros(k))
    return RnnModel(group=group, hidden=hidden, fc1_size=fc1_size, k=k, params=p)


def gru_step(x_t, h_prev, params):
    """One recurrence step; returns (h_t, cache of gate values for backward)."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape[0] != params.value("wz").shape[1]:
        raise ShapeError(
            f"gru_step: input length {x_t.shape[0]} != group "
            f"{params.value('wz').shape[1]}")
    if h_prev.shape[0] != params.value("uz").shape[0]:
        raise ShapeError("gru_step: hidden state size mismatch")
    z = sigmoid(params.value("wz") @ x_t + params.value("uz") @ h_prev)
    r = sigmoid(params.value("wr") @ x_t + params.value("ur") @ h_prev)
    uh = params.value("u") @ h_prev
    hc = tanh_act(params.value("w") @ x_t + r * uh)
    h_t = z * h_prev + (1.0 - z) * hc
    return h_t, (x_t, h_prev, z, r, hc, uh)


def rnn_forward(sequence, model):
    """Run the GRU over all steps and the FC head; returns (logits, caches)."""
    if len(sequence) == 0:
        raise InvalidInput("rnn_forward: empty sequence")
    p = model.params
    h = np.zeros(model.hidden)
    step_caches = []
    for x_t in sequence:
        h, cache = gru_step(x_t, h, p)
        step_caches.append(cache)
    a1 = p.value("fc1_w") @ h + p.value("fc1_b")
    t1 = tanh_act(a1)
    logits = p.value("fc2_w") @ t1 + p.value("fc2_b")
    return logits, (step_caches, h, t1)


def rnn_backward(model, caches, dlogits):
    """BPTT; accumulates gradients into the model's ParamStore."""
    if caches is None:
        raise InternalError("rnn_backward: missing forward caches")
    p = model.params
    step_caches, h_last, t1 = caches

    p.grad("fc2_w")[...] += np.outer(dlogits, t1)
    p.grad("fc2_b")[...] += dlogits
    dt1 = p.value("fc2_w").T @ dlogits
    da1 = dt1 * (1.0 - t1 ** 2)
    p.grad("fc1_w")[...] += np.outer(da1, h_last)
    p.grad("fc1_b")[...] += da1
    dh = p.value("fc1_w").T @ da1

    u = p.value("u")
    uz = p.value("uz")
    ur = p.value("ur")
    for x_t, h_prev, z, r, hc, uh in reversed(step_caches):
        dz = dh * (h_prev - hc)
        dhc = dh * (1.0 - z)
        dh_prev = dh * z

        da = dhc * (1.0 - hc ** 2)
        p.grad("w")[...] += np.outer(da, x_t)
        dr = da * uh
        duh = da * r
        p.grad("u")[...] += np.outer(duh, h_prev)
        dh_prev += u.T @ duh

        dzpre = dz * z * (1.0 - z)
        p.grad("wz")[...] += np.outer(dzpre, x_t)
        p.grad("uz")[...] += np.outer(dzpre, h_prev)
        dh_prev += uz.T @ dzpre

        drpre = dr * r * (1.0 - r)
        p.grad("wr")[...] += np.outer(drpre, x_t)
        p.grad("ur")[...] += np.outer(drpre, h_prev)
        dh_prev += ur.T @ drpre

        dh = dh_prev


def rnn_features(spectrum, model):
    """FC2 pre-softmax activations of a pixel spectrum (the F1 feature)."""
    seq = spectrum_to_sequence(spectrum, model.group)
    logits, _ = rnn_forward(seq, model)
    return logits


def rnn_predict(spectrum, model):
    return softmax(rnn_features(spectrum, model))


def rnn_train(model, spectra, labels, epochs, learning_rate, batch_size, rng):
    """Mini-batch SGD over shuffled samples; returns per-epoch mean losses."""
    n = len(spectra)
    if n == 0:
        raise InvalidInput("rnn_train: empty labeled set")
    sequences = [spectrum_to_sequence(s, model.group) for s in spectra]
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            model.params.zero_grad()
            for i in batch:
                logits, caches = rnn_forward(sequences[i], model)
                loss, dlogits = cross_entropy(softmax(logits), labels[i])
                total += loss
                rnn_backward(model, caches, dlogits / len(batch))
            if learning_rate > 0:
                sgd_step(model.params, learning_rate)
            else:
                model.params.zero_grad()
        history.append(total / n)
    return history
