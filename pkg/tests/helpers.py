"""Small builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from bandxai.classifier import LayerSpec, Network, NetworkSpec, init_network
from bandxai.hypercube import BandStats, GroundTruth, HyperCube, Patch


def dense_spec(sizes, seed=0, input_dims=None):
    """Flatten then dense/ReLU stack ``sizes[0] -> ... -> sizes[-1]`` with softmax."""
    layers = [LayerSpec("flatten")]
    for i, width in enumerate(sizes[1:]):
        layers.append(LayerSpec("dense", width=width))
        if i < len(sizes) - 2:
            layers.append(LayerSpec("relu"))
    layers.append(LayerSpec("softmax"))
    return NetworkSpec(input_dims or (1, 1, sizes[0]), tuple(layers), sizes[-1], seed)


def dense_net(sizes, seed=0, bias_scale=0.0, input_dims=None) -> Network:
    net = init_network(dense_spec(sizes, seed, input_dims))
    rng = np.random.default_rng(seed + 1000)
    for p in net.params:
        if "bias" in p:
            p["bias"] = bias_scale * rng.normal(size=p["bias"].shape)
    return net


def identity_stats(b, mean=None) -> BandStats:
    return BandStats(np.zeros(b) if mean is None else np.asarray(mean, dtype=float), np.ones(b))


class LinearBandModel:
    """Duck-typed model: class scores linear in the spatial band means.

    Column ``j`` of the output is ``bias[j] + mean_xy(x) @ weights[:, j]``;
    values are not normalized, which the perturbation explainers allow.
    """

    def __init__(self, weights, bias=None):
        self.weights = np.atleast_2d(np.asarray(weights, dtype=float))
        if self.weights.shape[0] == 1 and self.weights.shape[1] > 1:
            self.weights = self.weights.T
        self.bias = np.zeros(self.weights.shape[1]) if bias is None else np.asarray(bias, dtype=float)

    @property
    def class_count(self):
        return self.weights.shape[1]

    def predict_proba(self, values):
        return np.asarray(values, dtype=float).mean(axis=(1, 2)) @ self.weights + self.bias


def make_patch(values, label=1, pid=0) -> Patch:
    values = np.asarray(values, dtype=np.float32)
    return Patch(pid, (values.shape[0] // 2, values.shape[1] // 2), label, values)


def tiny_cube(h=5, w=5, b=3, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.random((h, w, b)).astype(np.float32)
    return HyperCube(data, np.linspace(0.4, 0.4 + 0.1 * (b - 1), b), name="tiny")


def labels(h, w, classes=2, fill=None, seed=0):
    if fill is not None:
        return GroundTruth(np.full((h, w), fill, dtype=np.int64), classes)
    rng = np.random.default_rng(seed)
    return GroundTruth(rng.integers(1, classes + 1, size=(h, w)), classes)
