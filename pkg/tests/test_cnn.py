import math

import numpy as np
import pytest

from mdcpe.cnn import (cnn_backward, cnn_features, cnn_forward, cnn_predict,
                       cnn_shape_plan, cnn_train, conv3d_backward,
                       conv3d_forward, init_cnn, maxpool3d, maxpool3d_backward)
from mdcpe.errors import InvalidInput, ShapeError
from mdcpe.numerics import SeededRng, cross_entropy, gradient_check, softmax


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def _conv_oracle(volume, kernels, bias):
    # five-deep nested loops straight from the summation definition
    out_maps, in_maps, kh, kl, kd = kernels.shape
    ox = volume.shape[1] - kh + 1
    oy = volume.shape[2] - kl + 1
    oz = volume.shape[3] - kd + 1
    out = np.zeros((out_maps, ox, oy, oz))
    for o in range(out_maps):
        for x in range(ox):
            for y in range(oy):
                for z in range(oz):
                    acc = bias[o]
                    for m in range(in_maps):
                        for h in range(kh):
                            for l in range(kl):
                                for d in range(kd):
                                    acc += kernels[o, m, h, l, d] * \
                                        volume[m, x + h, y + l, z + d]
                    out[o, x, y, z] = _sig(acc)
    return out


def _pool_oracle(volume):
    maps, x, y, z = volume.shape
    ox, oy, oz = -(-x // 2), -(-y // 2), -(-z // 2)
    out = np.empty((maps, ox, oy, oz))
    for m in range(maps):
        for i in range(ox):
            for j in range(oy):
                for l in range(oz):
                    out[m, i, j, l] = volume[m, 2 * i:2 * i + 2,
                                             2 * j:2 * j + 2,
                                             2 * l:2 * l + 2].max()
    return out


def test_conv_identity_kernel():
    rng = SeededRng(1)
    volume = rng.uniform(-2, 2, (1, 3, 3, 3))
    kernels = np.ones((1, 1, 1, 1, 1))
    act, _ = conv3d_forward(volume, kernels, np.zeros(1))
    assert np.allclose(act, _sig(volume), atol=1e-15)


def test_conv_zero_kernels():
    volume = SeededRng(2).uniform(-1, 1, (2, 4, 4, 4))
    kernels = np.zeros((3, 2, 3, 3, 3))
    act, _ = conv3d_forward(volume, kernels, np.zeros(3))
    assert np.allclose(act, 0.5, atol=0)


def test_conv_matches_nested_loop_oracle():
    rng = SeededRng(3)
    volume = rng.uniform(-1, 1, (1, 8, 8, 8))
    kernels = rng.uniform(-1, 1, (2, 1, 3, 3, 3))
    bias = rng.uniform(-1, 1, 2)
    act, _ = conv3d_forward(volume, kernels, bias)
    assert act.shape == (2, 6, 6, 6)
    assert np.max(np.abs(act - _conv_oracle(volume, kernels, bias))) < 1e-12


def test_conv_random_configurations_match_oracle():
    rng = SeededRng(4)
    for trial in range(50):
        maps_in = 1 + trial % 3
        maps_out = 1 + (trial // 3) % 3
        kern = (1, 3, 5)[trial % 3]
        size = kern + 1 + trial % 3
        volume = rng.uniform(-1, 1, (maps_in, size, size, size))
        kernels = rng.uniform(-1, 1, (maps_out, maps_in, kern, kern, kern))
        bias = rng.uniform(-1, 1, maps_out)
        act, _ = conv3d_forward(volume, kernels, bias)
        assert np.max(np.abs(act - _conv_oracle(volume, kernels, bias))) < 1e-12


def test_conv_rejects_small_input():
    with pytest.raises(ShapeError):
        conv3d_forward(np.zeros((1, 2, 2, 2)), np.zeros((1, 1, 3, 3, 3)),
                       np.zeros(1))


def test_maxpool_constant_volume():
    volume = np.full((2, 4, 4, 4), 3.5)
    pooled, _ = maxpool3d(volume)
    assert np.allclose(pooled, 3.5, atol=0)
    assert pooled.shape == (2, 2, 2, 2)


def test_maxpool_single_window():
    volume = np.zeros((1, 2, 2, 2))
    volume[0, 1, 0, 1] = 9.0
    pooled, _ = maxpool3d(volume)
    assert pooled.shape == (1, 1, 1, 1)
    assert pooled[0, 0, 0, 0] == 9.0


def test_maxpool_partial_windows_match_oracle():
    volume = SeededRng(5).uniform(-1, 1, (2, 5, 5, 4))
    pooled, _ = maxpool3d(volume)
    assert pooled.shape == (2, 3, 3, 2)
    assert np.array_equal(pooled, _pool_oracle(volume))


def test_maxpool_gradient_conservation():
    rng = SeededRng(6)
    volume = rng.uniform(-1, 1, (2, 5, 4, 3))
    pooled, cache = maxpool3d(volume)
    upstream = rng.uniform(-1, 1, pooled.shape)
    routed = maxpool3d_backward(upstream, cache)
    assert abs(routed.sum() - upstream.sum()) < 1e-12


def test_shape_plan_for_accepted_patch_sizes():
    # conv shrinks an axis by kernel-1, pooling maps n to ceil(n/2)
    for size in (15, 19, 23, 27):
        for p in (3, 4):
            k1, k2, p2 = cnn_shape_plan(size, p)
            s1 = size - 5 + 1
            d1 = p - k1[2] + 1
            q1 = -(-s1 // 2)
            e1 = -(-d1 // 2)
            s2 = q1 - 3 + 1
            d2 = e1 - k2[2] + 1
            assert p2 == (16, -(-s2 // 2), -(-s2 // 2), -(-d2 // 2))


def test_forward_inference_deterministic():
    rng = SeededRng(7)
    model = init_cnn(9, 3, 2, rng, c1_maps=2, c2_maps=2, fc1_size=8)
    patch = rng.uniform(0, 1, (9, 9, 3))
    a, _ = cnn_forward(patch, model)
    b, _ = cnn_forward(patch, model)
    assert np.array_equal(a, b)


def test_forward_dropout_rate_zero_matches_inference():
    rng = SeededRng(8)
    model = init_cnn(9, 3, 2, rng, c1_maps=2, c2_maps=2, fc1_size=8)
    patch = rng.uniform(0, 1, (9, 9, 3))
    inference, _ = cnn_forward(patch, model)
    training, _ = cnn_forward(patch, model, training_mode=True,
                              rng=SeededRng(9), dropout_rate=0.0)
    assert np.array_equal(inference, training)


def test_dropout_mask_reproducible_and_binomially_sized():
    rng = SeededRng(10)
    model = init_cnn(15, 3, 2, rng)
    patch = rng.uniform(0, 1, (15, 15, 3))
    _, caches_a = cnn_forward(patch, model, training_mode=True,
                              rng=SeededRng(11), dropout_rate=0.3)
    _, caches_b = cnn_forward(patch, model, training_mode=True,
                              rng=SeededRng(11), dropout_rate=0.3)
    mask_a, mask_b = caches_a[7], caches_b[7]
    assert np.array_equal(mask_a, mask_b)
    zeroed = int((mask_a == 0).sum())
    # binomial(1024, 0.3): 3 sigma around 307 is +-44
    assert 307 - 44 <= zeroed <= 307 + 44


def test_backward_zero_upstream_gradient():
    rng = SeededRng(12)
    model = init_cnn(9, 3, 2, rng, c1_maps=2, c2_maps=2, fc1_size=8)
    patch = rng.uniform(0, 1, (9, 9, 3))
    _, caches = cnn_forward(patch, model, training_mode=True,
                            rng=SeededRng(13), dropout_rate=0.2)
    model.params.zero_grad()
    cnn_backward(model, caches, np.zeros(2))
    for name in model.params.names():
        assert np.array_equal(model.params.grad(name),
                              np.zeros_like(model.params.grad(name)))


def test_single_conv_layer_gradient_check():
    # 1 map, 3x3x3 kernel, 6x6x6 input through a scalar loss
    rng = SeededRng(14)
    from mdcpe.numerics import ParamStore
    params = ParamStore()
    params.add("k", rng.uniform(-0.5, 0.5, (1, 1, 3, 3, 3)))
    params.add("b", rng.uniform(-0.5, 0.5, 1))
    volume = rng.uniform(-1, 1, (1, 6, 6, 6))
    weights = rng.uniform(-1, 1, (1, 4, 4, 4))

    def forward(p):
        act, _ = conv3d_forward(volume, p.value("k"), p.value("b"))
        return float((act * weights).sum())

    act, cache = conv3d_forward(volume, params.value("k"), params.value("b"))
    _, dk, db = conv3d_backward(weights, cache, params.value("k"))
    params.grad("k")[...] = dk
    params.grad("b")[...] = db
    assert gradient_check(forward, params, 1e-5) < 1e-4


def test_full_model_gradient_check():
    rng = SeededRng(15)
    model = init_cnn(9, 3, 3, rng, c1_maps=2, c2_maps=2, fc1_size=8)
    patch = rng.uniform(0, 1, (9, 9, 3))
    target = 1

    def loss_fn(_):
        logits, _ = cnn_forward(patch, model)
        loss, _ = cross_entropy(softmax(logits), target)
        return loss

    logits, caches = cnn_forward(patch, model, training_mode=True,
                                 rng=SeededRng(16), dropout_rate=0.0)
    _, dlogits = cross_entropy(softmax(logits), target)
    model.params.zero_grad()
    cnn_backward(model, caches, dlogits)
    assert gradient_check(loss_fn, model.params, 1e-5) < 1e-4


def test_predict_and_features_consistent():
    rng = SeededRng(17)
    model = init_cnn(9, 3, 4, rng, c1_maps=2, c2_maps=2, fc1_size=8)
    patch = rng.uniform(0, 1, (9, 9, 3))
    probs = cnn_predict(patch, model)
    feats = cnn_features(patch, model)
    assert abs(probs.sum() - 1.0) < 1e-12
    assert np.max(np.abs(softmax(feats) - probs)) < 1e-12


def test_all_zero_model_uniform():
    model = init_cnn(9, 3, 4, SeededRng(18), c1_maps=2, c2_maps=2, fc1_size=8)
    for name in model.params.names():
        model.params.value(name)[...] = 0.0
    probs = cnn_predict(np.zeros((9, 9, 3)), model)
    assert np.allclose(probs, 0.25, atol=0)


def test_forward_rejects_wrong_patch_shape():
    model = init_cnn(9, 3, 2, SeededRng(19), c1_maps=2, c2_maps=2, fc1_size=8)
    with pytest.raises(ShapeError):
        cnn_forward(np.zeros((7, 7, 3)), model)


def test_train_zero_learning_rate_is_noop():
    rng = SeededRng(20)
    model = init_cnn(9, 3, 2, rng, c1_maps=2, c2_maps=2, fc1_size=8)
    before = {n: model.params.value(n).copy() for n in model.params.names()}
    cnn_train(model, [rng.uniform(0, 1, (9, 9, 3))], [0], 3, 0.0, 4, 0.3,
              SeededRng(21))
    for name in model.params.names():
        assert np.array_equal(model.params.value(name), before[name])


def test_train_rejects_empty_set():
    model = init_cnn(9, 3, 2, SeededRng(22), c1_maps=2, c2_maps=2, fc1_size=8)
    with pytest.raises(InvalidInput):
        cnn_train(model, [], [], 1, 0.1, 4, 0.0, SeededRng(23))


def test_train_separable_textures_to_perfect_accuracy():
    rng = SeededRng(24)
    patches, labels = [], []
    for i in range(8):
        high = np.full((9, 9, 3), 1.0) + rng.normal(0, 0.02, (9, 9, 3))
        low = np.full((9, 9, 3), 0.0) + rng.normal(0, 0.02, (9, 9, 3))
        patches += [high, low]
        labels += [0, 1]
    model = init_cnn(9, 3, 2, rng, c1_maps=2, c2_maps=2, fc1_size=16)
    cnn_train(model, patches, labels, 200, 0.2, 8, 0.0, SeededRng(25))
    correct = sum(int(np.argmax(cnn_predict(p, model)) == y)
                  for p, y in zip(patches, labels))
    assert correct == len(patches)


def test_train_determinism():
    rng = SeededRng(26)
    patches = [rng.uniform(0, 1, (9, 9, 3)) for _ in range(6)]
    labels = [i % 2 for i in range(6)]

    def run():
        model = init_cnn(9, 3, 2, SeededRng(27), c1_maps=2, c2_maps=2,
                         fc1_size=8)
        cnn_train(model, patches, labels, 5, 0.1, 4, 0.3, SeededRng(28))
        return model

    a, b = run(), run()
    for name in a.params.names():
        assert np.array_equal(a.params.value(name), b.params.value(name))
