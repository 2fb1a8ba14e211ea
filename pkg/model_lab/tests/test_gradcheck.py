"""Backpropagated gradients agree with central finite differences.

A three-layer reduction of the block classifier (two valid tanh convs and
a softmax dense, no batch norm) is rebuilt in float64 so the quadrature
noise stays far below the tolerance. Every parameter is perturbed.
"""

import numpy as np
import tensorflow as tf
from tensorflow import keras

REL_TOL = 1e-4
STEP = 1e-6


def _reduced_segm_model():
    # per-layer dtype only; switching the global float policy would leak
    # float64 defaults into models built by later tests
    tf.keras.utils.set_random_seed(5)
    L = keras.layers
    inputs = keras.Input((5, 5, 2), dtype="float64")
    x = L.Conv2D(3, 3, activation="tanh", dtype="float64")(inputs)
    x = L.Conv2D(4, 3, activation="tanh", dtype="float64")(x)
    x = L.Flatten(dtype="float64")(x)
    outputs = L.Dense(3, activation="softmax", dtype="float64")(x)
    return keras.Model(inputs, outputs)


def test_gradients_match_finite_differences():
    model = _reduced_segm_model()
    assert len(model.trainable_weights) == 6  # three layers, kernel + bias

    rng = np.random.default_rng(7)
    x = tf.constant(rng.normal(size=(4, 5, 5, 2)))
    y = tf.constant(np.eye(3)[rng.integers(0, 3, size=4)])

    def loss_tensor():
        probs = model(x, training=False)
        return -tf.reduce_mean(tf.reduce_sum(y * tf.math.log(probs + 1e-12), axis=1))

    with tf.GradientTape() as tape:
        loss = loss_tensor()
    grads = tape.gradient(loss, model.trainable_weights)
    assert loss.dtype == tf.float64

    checked = 0
    worst = 0.0
    for var, grad in zip(model.trainable_weights, grads):
        flat = var.numpy().ravel()
        analytic = grad.numpy().ravel()
        for i in range(flat.size):
            origin = flat[i]
            flat[i] = origin + STEP
            var.assign(flat.reshape(var.shape))
            up = float(loss_tensor())
            flat[i] = origin - STEP
            var.assign(flat.reshape(var.shape))
            down = float(loss_tensor())
            flat[i] = origin
            var.assign(flat.reshape(var.shape))

            numeric = (up - down) / (2 * STEP)
            scale = max(abs(numeric), abs(analytic[i]), 1e-8)
            worst = max(worst, abs(numeric - analytic[i]) / scale)
            checked += 1

    assert checked == sum(int(tf.size(w)) for w in model.trainable_weights)
    assert checked == 184
    assert worst <= REL_TOL, f"worst relative error {worst:.3e}"
