"""3-D convolutional spatial classifier over PCA-reduced patches (F2 view).

Two sigmoid conv blocks (valid cross-correlation, 2x2x2 max pooling with
partial trailing windows), a 1024-unit sigmoid FC1 with inverted dropout,
and a linear FC2 head whose logits double as the spatial feature.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InternalError, InvalidInput, ShapeError
from .numerics import (ParamStore, cross_entropy, sgd_step, sigmoid, softmax)


@dataclass
class CnnModel:
    patch_size: int
    in_depth: int      # PCA component count p
    k: int
    c1_maps: int
    c2_maps: int
    fc1_size: int
    params: ParamStore


def _conv_out(extent, kernel):
    return extent - kernel + 1


def _pool_out(extent):
    return -(-extent // 2)


def cnn_shape_plan(patch_size, in_depth, c1_maps=8, c2_maps=16):
    """Kernel extents and layer output shapes; the spectral kernel depth is
    clamped to the available depth (PCA leaves only 3-4 channels)."""
    k1 = (5, 5, min(5, in_depth))
    s1 = (c1_maps, _conv_out(patch_size, 5), _conv_out(patch_size, 5),
          _conv_out(in_depth, k1[2]))
    p1 = (c1_maps, _pool_out(s1[1]), _pool_out(s1[2]), _pool_out(s1[3]))
    k2 = (3, 3, min(3, p1[3]))
    s2 = (c2_maps, _conv_out(p1[1], 3), _conv_out(p1[2], 3),
          _conv_out(p1[3], k2[2]))
    p2 = (c2_maps, _pool_out(s2[1]), _pool_out(s2[2]), _pool_out(s2[3]))
    if min(s1[1:]) < 1 or min(s2[1:]) < 1:
        raise ShapeError(
            f"patch {patch_size}x{patch_size}x{in_depth} too small for the "
            "two conv blocks")
    return k1, k2, p2


def init_cnn(patch_size, in_depth, k, rng, c1_maps=8, c2_maps=16, fc1_size=1024):
    k1, k2, p2 = cnn_shape_plan(patch_size, in_depth, c1_maps, c2_maps)
    flat = int(np.prod(p2))
    p = ParamStore()
    fan1 = 1 * k1[0] * k1[1] * k1[2]
    s = np.sqrt(1.0 / fan1)
    p.add("c1_k", rng.uniform(-s, s, (c1_maps, 1) + k1))
    p.add("c1_b", np.zeros(c1_maps))
    fan2 = c1_maps * k2[0] * k2[1] * k2[2]
    s = np.sqrt(1.0 / fan2)
    p.add("c2_k", rng.uniform(-s, s, (c2_maps, c1_maps) + k2))
    p.add("c2_b", np.zeros(c2_maps))
    s = np.sqrt(1.0 / flat)
    p.add("fc1_w", rng.uniform(-s, s, (fc1_size, flat)))
    p.add("fc1_b", np.zeros(fc1_size))
    s = np.sqrt(1.0 / fc1_size)
    p.add("fc2_w", rng.uniform(-s, s, (k, fc1_size)))
    p.add("fc2_b", np.zeros(k))
    return CnnModel(patch_size=patch_size, in_depth=in_depth, k=k,
                    c1_maps=c1_maps, c2_maps=c2_maps, fc1_size=fc1_size,
                    params=p)


def conv3d_forward(volume, kernels, bias):
    """Valid 3-D cross-correlation followed by sigmoid.

    volume: (in_maps, X, Y, Z); kernels: (out_maps, in_maps, kh, kl, kd).
    Returns (activations, cache).
    """
    volume = np.asarray(volume, dtype=np.float64)
    out_maps, in_maps, kh, kl, kd = kernels.shape
    if volume.ndim != 4 or volume.shape[0] != in_maps:
        raise ShapeError(
            f"conv3d: volume {volume.shape} does not match kernels {kernels.shape}")
    if (volume.shape[1] < kh or volume.shape[2] < kl or volume.shape[3] < kd):
        raise ShapeError(
            f"conv3d: input extents {volume.shape[1:]} smaller than kernel "
            f"({kh},{kl},{kd})")
    windows = sliding_window_view(volume, (kh, kl, kd), axis=(1, 2, 3))
    pre = np.einsum("mxyzhld,omhld->oxyz", windows, kernels, optimize=True)
    pre += bias[:, None, None, None]
    act = sigmoid(pre)
    return act, (volume, act)


def conv3d_backward(dact, cache, kernels):
    """Returns (dvolume, dkernels, dbias) through the sigmoid and the window sum."""
    volume, act = cache
    dpre = dact * act * (1.0 - act)
    out_maps, in_maps, kh, kl, kd = kernels.shape
    ox, oy, oz = dpre.shape[1:]
    windows = sliding_window_view(volume, (kh, kl, kd), axis=(1, 2, 3))
    dkern = np.einsum("mxyzhld,oxyz->omhld", windows, dpre, optimize=True)
    dbias = dpre.sum(axis=(1, 2, 3))
    dvolume = np.zeros_like(volume)
    for h in range(kh):
        for l in range(kl):
            for d in range(kd):
                dvolume[:, h:h + ox, l:l + oy, d:d + oz] += np.tensordot(
                    kernels[:, :, h, l, d], dpre, axes=([0], [0]))
    return dvolume, dkern, dbias


def maxpool3d(volume):
    """Non-overlapping 2x2x2 max pooling; partial trailing windows pool over
    their actual elements.  Returns (pooled, argmax cache)."""
    volume = np.asarray(volume, dtype=np.float64)
    maps, x, y, z = volume.shape
    ox, oy, oz = _pool_out(x), _pool_out(y), _pool_out(z)
    pooled = np.empty((maps, ox, oy, oz))
    argmax = np.empty((maps, ox, oy, oz, 3), dtype=np.int64)
    for i in range(ox):
        for j in range(oy):
            for l in range(oz):
                win = volume[:, 2 * i:2 * i + 2, 2 * j:2 * j + 2,
                             2 * l:2 * l + 2]
                flat = win.reshape(maps, -1)
                idx = flat.argmax(axis=1)
                pooled[:, i, j, l] = flat[np.arange(maps), idx]
                sub = np.array(np.unravel_index(idx, win.shape[1:])).T
                argmax[:, i, j, l, 0] = 2 * i + sub[:, 0]
                argmax[:, i, j, l, 1] = 2 * j + sub[:, 1]
                argmax[:, i, j, l, 2] = 2 * l + sub[:, 2]
    return pooled, (argmax, volume.shape)


def maxpool3d_backward(dpooled, cache):
    """Routes each output gradient to the argmax position of its window."""
    argmax, in_shape = cache
    dvolume = np.zeros(in_shape)
    maps = in_shape[0]
    _, ox, oy, oz, _ = argmax.shape
    for i in range(ox):
        for j in range(oy):
            for l in range(oz):
                pos = argmax[:, i, j, l]
                dvolume[np.arange(maps), pos[:, 0], pos[:, 1], pos[:, 2]] += \
                    dpooled[:, i, j, l]
    return dvolume


def cnn_forward(patch, model, training_mode=False, rng=None, dropout_rate=0.0):
    """C1 -> P1 -> C2 -> P2 -> FC1(sigmoid) -> dropout -> FC2 logits."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape != (model.patch_size, model.patch_size, model.in_depth):
        raise ShapeError(
            f"cnn_forward: patch {patch.shape} does not match configured "
            f"({model.patch_size},{model.patch_size},{model.in_depth})")
    p = model.params
    volume = patch[None, :, :, :]
    a1, c1_cache = conv3d_forward(volume, p.value("c1_k"), p.value("c1_b"))
    p1, p1_cache = maxpool3d(a1)
    a2, c2_cache = conv3d_forward(p1, p.value("c2_k"), p.value("c2_b"))
    p2, p2_cache = maxpool3d(a2)
    flat = p2.ravel()
    f1 = sigmoid(p.value("fc1_w") @ flat + p.value("fc1_b"))
    if training_mode and dropout_rate > 0.0:
        mask = (rng.random(f1.shape[0]) >= dropout_rate) / (1.0 - dropout_rate)
    else:
        mask = None
    f1d = f1 if mask is None else f1 * mask
    logits = p.value("fc2_w") @ f1d + p.value("fc2_b")
    caches = (c1_cache, p1_cache, c2_cache, p2_cache, p2.shape, flat, f1,
              mask, f1d)
    return logits, caches


def cnn_backward(model, caches, dlogits):
    """Accumulates gradients for every parameter into the model's ParamStore."""
    if caches is None:
        raise InternalError("cnn_backward: missing forward caches")
    p = model.params
    c1_cache, p1_cache, c2_cache, p2_cache, p2_shape, flat, f1, mask, f1d = caches

    p.grad("fc2_w")[...] += np.outer(dlogits, f1d)
    p.grad("fc2_b")[...] += dlogits
    df1d = p.value("fc2_w").T @ dlogits
    df1 = df1d if mask is None else df1d * mask
    dfc1_pre = df1 * f1 * (1.0 - f1)
    p.grad("fc1_w")[...] += np.outer(dfc1_pre, flat)
    p.grad("fc1_b")[...] += dfc1_pre
    dflat = p.value("fc1_w").T @ dfc1_pre

    dp2 = dflat.reshape(p2_shape)
    da2 = maxpool3d_backward(dp2, p2_cache)
    dp1, dk2, db2 = conv3d_backward(da2, c2_cache, p.value("c2_k"))
    p.grad("c2_k")[...] += dk2
    p.grad("c2_b")[...] += db2
    da1 = maxpool3d_backward(dp1, p1_cache)
    _, dk1, db1 = conv3d_backward(da1, c1_cache, p.value("c1_k"))
    p.grad("c1_k")[...] += dk1
    p.grad("c1_b")[...] += db1


def cnn_features(patch, model):
    """FC2 pre-softmax activations with dropout disabled (the F2 feature)."""
    logits, _ = cnn_forward(patch, model, training_mode=False)
    return logits


def cnn_predict(patch, model):
    return softmax(cnn_features(patch, model))


def cnn_train(model, patches, labels, epochs, learning_rate, batch_size,
              dropout_rate, rng):
    """Mini-batch SGD with a fresh dropout mask per sample per step."""
    n = len(patches)
    if n == 0:
        raise InvalidInput("cnn_train: empty labeled set")
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            model.params.zero_grad()
            for i in batch:
                logits, caches = cnn_forward(
                    patches[i], model, training_mode=True, rng=rng,
                    dropout_rate=dropout_rate)
                loss, dlogits = cross_entropy(softmax(logits), labels[i])
                total += loss
                cnn_backward(model, caches, dlogits / len(batch))
            if learning_rate > 0:
                sgd_step(model.params, learning_rate)
            else:
                model.params.zero_grad()
        history.append(total / n)
    return history
