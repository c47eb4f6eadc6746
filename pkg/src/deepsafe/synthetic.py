"""Synthetic fixtures: interleaved-band toy data, a 5-dim five-label
benchmark with discrete trailing dimensions, and random tiny networks.

All generators are deterministic given their seed, which lets tests pin
exact expected values.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset
from .network import IDENTITY, RELU, Layer, Network


def make_band_dataset(
    n_per_band: int = 40,
    bands: int = 4,
    band_height: float = 0.6,
    band_gap: float = 1.0,
    width: float = 4.0,
    seed: int = 7,
) -> Dataset:
    """Two-label 2-D data in horizontal bands with alternating labels.

    Proximity alone groups neighbouring bands of different labels into
    the same cluster, which is exactly the situation the label-guided
    recursion has to untangle.
    """
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for band in range(bands):
        y0 = band * band_gap
        xs = rng.uniform(0.0, width, size=n_per_band)
        ys = rng.uniform(y0, y0 + band_height, size=n_per_band)
        rows.append(np.column_stack([xs, ys]))
        labels.append(np.full(n_per_band, band % 2, dtype=int))
    return Dataset(np.vstack(rows), np.concatenate(labels), 2)


def make_sliceable_benchmark(
    n_per_label: int = 40,
    seed: int = 11,
    anchor_scale: float = 0.6,
    noise: float = 0.15,
    model_shift: float = 0.3,
) -> tuple[Dataset, Network]:
    """Five-label, 5-dim benchmark with three discrete trailing dims.

    Points are blobs around five anchor vectors; the last three
    coordinates only take a few values per label so plane slicing has
    meaningful modal tuples. The returned network routes the input
    through paired ReLUs (x = relu(x) - relu(-x)) and then scores each
    label by proximity to its anchor, so its argmax is the nearest
    anchor. The network's anchors are shifted by ``model_shift`` from
    the data anchors, which plants genuine misclassification regions
    near blob borders while keeping most of each blob correct.
    """
    rng = np.random.default_rng(seed)
    anchors = rng.uniform(-anchor_scale, anchor_scale, size=(5, 5)).round(2)
    rows, labels = [], []
    jitter = np.array([-0.05, 0.0, 0.05])
    for label in range(5):
        lead = anchors[label, :2] + rng.normal(0.0, noise, size=(n_per_label, 2))
        trail = anchors[label, 2:] + rng.choice(jitter, size=(n_per_label, 3))
        rows.append(np.column_stack([lead, trail]))
        labels.append(np.full(n_per_label, label, dtype=int))
    ds = Dataset(np.vstack(rows), np.concatenate(labels), 5)

    drift = rng.normal(0.0, 1.0, size=(5, 5))
    drift *= model_shift / np.linalg.norm(drift, axis=1, keepdims=True)
    model_anchors = anchors + drift
    eye = np.eye(5)
    hidden = Layer(np.vstack([eye, -eye]), np.zeros(10), RELU)
    w_out = np.hstack([2.0 * model_anchors, -2.0 * model_anchors])
    b_out = -np.sum(model_anchors * model_anchors, axis=1)
    out = Layer(w_out, b_out, IDENTITY)
    net = Network(5, [hidden, out], np.array([[-2.0, 2.0]] * 5))
    return ds, net


def random_relu_network(
    seed: int,
    input_dim: int = 2,
    hidden: int = 8,
    labels: int = 3,
    weight_scale: float = 1.0,
    input_bound: float = 1.0e6,
) -> Network:
    """One-hidden-layer ReLU net with weights uniform in [-scale, scale]."""
    rng = np.random.default_rng(seed)
    w1 = rng.uniform(-weight_scale, weight_scale, size=(hidden, input_dim))
    b1 = rng.uniform(-weight_scale, weight_scale, size=hidden)
    w2 = rng.uniform(-weight_scale, weight_scale, size=(labels, hidden))
    b2 = rng.uniform(-weight_scale, weight_scale, size=labels)
    return Network(
        input_dim,
        [Layer(w1, b1, RELU), Layer(w2, b2, IDENTITY)],
        np.array([[-input_bound, input_bound]] * input_dim),
    )
