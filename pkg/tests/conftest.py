import csv

import numpy as np
import pytest

from latentgraph.data_io import TabularDataset


def make_blobs(n_per_class=20, n_classes=2, n_features=5, separation=6.0, seed=0):
    """Well-separated Gaussian blobs; linearly separable by construction."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_classes, n_features))
    centers = separation * centers / np.linalg.norm(centers, axis=1, keepdims=True)
    rows, labels = [], []
    for cls in range(n_classes):
        rows.append(centers[cls] + rng.normal(size=(n_per_class, n_features)))
        labels.extend([cls] * n_per_class)
    x = np.vstack(rows)
    y = np.array(labels, dtype=np.intp)
    order = rng.permutation(len(y))
    x, y = x[order], y[order]
    return TabularDataset(
        node_ids=[f"n{i:03d}" for i in range(len(y))],
        X=x, y=y,
        class_names=[f"c{c}" for c in range(n_classes)],
        feature_names=[f"f{j}" for j in range(n_features)],
    )


def write_dataset_csv(path, dataset, label_col="dx", fmt=".17g"):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", label_col, *dataset.feature_names])
        for i in range(dataset.n_nodes):
            writer.writerow([dataset.node_ids[i],
                             dataset.class_names[dataset.y[i]],
                             *(format(v, fmt) for v in dataset.X[i])])


@pytest.fixture
def blobs():
    return make_blobs()
