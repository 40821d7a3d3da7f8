"""Node classifier: degree-normalized graph convolutions over the learned
adjacency, followed by a fully connected head."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import graph_learning as gl
from .autodiff import Tensor
from .errors import DimensionError


@dataclass
class GCNParams:
    """Per-layer graph-convolution weights (no bias) and the FC head."""

    gc_weights: list[Tensor]
    fc_weight: Tensor
    fc_bias: Tensor

    def tensors(self) -> list[Tensor]:
        return [*self.gc_weights, self.fc_weight, self.fc_bias]


@dataclass
class ModelParams:
    """Every trainable tensor of the model.

    ``embedder`` and ``edge`` are None for the static-graph variant that
    trains over a fixed adjacency instead of learning one.
    """

    embedder: gl.EmbedderParams | None
    edge: gl.EdgeParams | None
    gcn: GCNParams

    def tensors(self) -> list[Tensor]:
        out: list[Tensor] = []
        if self.embedder is not None:
            out.extend(self.embedder.tensors())
        if self.edge is not None:
            out.extend(self.edge.tensors())
        out.extend(self.gcn.tensors())
        return out


def init_model(features: np.ndarray, n_classes: int, *,
               embed_hidden: Sequence[int] = (64,), embed_dim: int = 16,
               gc_widths: Sequence[int] = (16, 8),
               rng: np.random.Generator, learn_graph: bool = True) -> ModelParams:
    """Initialize all parameters for an N x d feature matrix.

    The edge scalars are calibrated on the embedding of ``features``
    under the freshly initialized embedder, so the initial graph starts
    with a sensible mix of strong and weak edges.
    """
    features = np.asarray(features, dtype=np.float64)
    n_features = features.shape[1]
    embedder = None
    edge = None
    if learn_graph:
        embedder = gl.init_embedder([n_features, *embed_hidden, embed_dim], rng)
        edge = gl.init_edge_params(gl.embed(features, embedder))
    gc_weights = []
    width_in = n_features
    for width_out in gc_widths:
        gc_weights.append(ad.parameter(gl.glorot_uniform(rng, width_in, width_out)))
        width_in = width_out
    fc_weight = ad.parameter(gl.glorot_uniform(rng, width_in, n_classes))
    fc_bias = ad.parameter(np.zeros((1, n_classes)))
    return ModelParams(embedder=embedder, edge=edge,
                       gcn=GCNParams(gc_weights, fc_weight, fc_bias))


def gc_layer(adjacency, features, weight) -> Tensor:
    """One spatial graph convolution: degree-normalized neighbor average
    of the feature rows, then a linear map.

    Output row i is (sum_j a_ij * h_j / sum_j a_ij) @ W; rows of the
    normalized adjacency sum to 1, so constant features are preserved
    when W is the identity.
    """
    a = ad.as_tensor(adjacency)
    h = ad.as_tensor(features)
    w = ad.as_tensor(weight)
    if a.values.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"adjacency must be square, got {a.shape}")
    if a.shape[1] != h.shape[0]:
        raise DimensionError(
            f"adjacency {a.shape} does not match features {h.shape}")
    return ad.matmul(ad.matmul(ad.row_normalize(a), h), w)


def forward(features, params: ModelParams, adjacency=None) -> Tensor:
    """Logits for every node.

    Pipeline: embed -> soft adjacency -> stacked graph convolutions with
    ReLU after each -> linear FC head. One adjacency is computed per
    forward pass and shared by all layers. Passing ``adjacency``
    short-circuits the graph-learning stage (static-graph baseline).
    """
    x = ad.as_tensor(features)
    if adjacency is None:
        if params.embedder is None or params.edge is None:
            raise DimensionError(
                "model has no graph-learning parameters; pass an adjacency")
        embedding = gl.embed(x, params.embedder)
        a = gl.soft_adjacency(embedding, params.edge)
    else:
        a = ad.as_tensor(adjacency)
    h = x
    for w in params.gcn.gc_weights:
        h = ad.relu(gc_layer(a, h, w))
    return ad.add(ad.matmul(h, params.gcn.fc_weight), params.gcn.fc_bias)


def predict(logits) -> np.ndarray:
    """Row-wise argmax; ties break toward the lowest class index."""
    values = logits.values if isinstance(logits, Tensor) else np.asarray(logits)
    return np.argmax(values, axis=1)
