"""End-to-end optimization, cross-validation, metrics, and baselines.

Training is full batch: every step embeds the nodes, rebuilds the soft
adjacency, runs the graph convolutions, and backpropagates the masked
cross-entropy through the whole pipeline, adjacency included. Adam with
a piecewise-constant learning-rate decay drives the updates.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from . import gcn
from .autodiff import Tensor
from .errors import ContractError, DataError, DimensionError, NumericalError
from .graph_learning import pairwise_distances

WORKERS_ENV_VAR = "LATENTGRAPH_WORKERS"


@dataclass
class TrainConfig:
    """Optimizer schedule, CV protocol, and architecture widths.

    The learning rate starts at ``lr0`` and is multiplied by
    ``(lr_min / lr0) ** (1 / lr_decay_steps)`` every ``lr_step`` epochs,
    reaching ``lr_min`` (and staying there) after ``lr_decay_steps``
    decays; with the defaults that is 0.01 decaying to 0.0001 by epoch
    500 of 600.
    """

    epochs: int = 600
    lr0: float = 0.01
    lr_min: float = 0.0001
    lr_step: int = 100
    lr_decay_steps: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    folds: int = 10
    embed_hidden: tuple[int, ...] = (64,)
    embed_dim: int = 16
    gc_widths: tuple[int, ...] = (16, 8)

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ContractError("epochs must be non-negative")
        if not (0.0 < self.lr_min <= self.lr0):
            raise ContractError("need 0 < lr_min <= lr0")
        if self.folds < 2:
            raise ContractError("fold count must be at least 2")
        if self.lr_step < 1 or self.lr_decay_steps < 1:
            raise ContractError("lr_step and lr_decay_steps must be positive")


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Piecewise-constant geometric decay, clamped below at ``lr_min``."""
    factor = (cfg.lr_min / cfg.lr0) ** (1.0 / cfg.lr_decay_steps)
    return max(cfg.lr_min, cfg.lr0 * factor ** (epoch // cfg.lr_step))


class AdamState:
    """First/second moment buffers and step counter for a parameter list."""

    def __init__(self, params: Sequence[Tensor]):
        self.m = [np.zeros_like(p.values) for p in params]
        self.v = [np.zeros_like(p.values) for p in params]
        self.step = 0


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray],
              state: AdamState, lr: float, *, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Standard bias-corrected Adam update, applied in place."""
    if len(params) != len(state.m):
        raise ContractError("optimizer state does not match parameter list")
    state.step += 1
    t = state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.values.shape:
            raise ContractError(
                f"gradient shape {g.shape} does not match parameter {p.values.shape}")
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * (g * g)
        m_hat = state.m[i] / (1.0 - beta1 ** t)
        v_hat = state.v[i] / (1.0 - beta2 ** t)
        p.values -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class FoldSplit:
    """Per-fold train/test index arrays; folds partition all indices."""

    train_indices: list[np.ndarray]
    test_indices: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.test_indices)


def stratified_kfold(labels, k: int, seed: int = 0) -> FoldSplit:
    """Deterministic stratified k-fold split.

    Within each class the (seeded) shuffled indices are dealt round-robin
    across folds, so per-class counts across folds differ by at most one.
    Classes with fewer than k members are rejected.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if k < 2:
        raise ContractError("fold count must be at least 2")
    rng = np.random.default_rng(seed)
    fold_members: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if members.size < k:
            raise DataError(
                f"class {cls} has only {members.size} members, need >= {k} "
                f"for {k}-fold stratification")
        rng.shuffle(members)
        for j, idx in enumerate(members):
            fold_members[j % k].append(int(idx))
    all_indices = np.arange(n)
    test_indices = [np.sort(np.array(f, dtype=np.intp)) for f in fold_members]
    train_indices = [np.setdiff1d(all_indices, t) for t in test_indices]
    return FoldSplit(train_indices=train_indices, test_indices=test_indices)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    train_acc: float
    val_acc: Optional[float] = None


def _as_index_array(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape[0] != n:
            raise DimensionError(f"boolean mask length {mask.shape[0]} != {n} nodes")
        return np.flatnonzero(mask)
    return mask.astype(np.intp)


def train(dataset, cfg: TrainConfig, train_mask=None, val_mask=None,
          adjacency: Optional[np.ndarray] = None):
    """Full-batch training loop.

    ``dataset`` needs ``X`` (N x d) and ``y`` (N integer labels); the loss
    only sees rows selected by ``train_mask`` (default: all). Returns the
    final parameters and the per-epoch history. Deterministic given
    ``cfg.seed``. A non-finite loss aborts with diagnostics.
    """
    x = np.asarray(dataset.X, dtype=np.float64)
    y = np.asarray(dataset.y)
    n = x.shape[0]
    train_idx = np.arange(n) if train_mask is None else _as_index_array(train_mask, n)
    val_idx = None if val_mask is None else _as_index_array(val_mask, n)
    if np.unique(y[train_idx]).size < 2:
        raise ContractError("training mask must contain at least 2 classes")
    rng = np.random.default_rng(cfg.seed)
    params = gcn.init_model(
        x[train_idx], int(y.max()) + 1, embed_hidden=cfg.embed_hidden,
        embed_dim=cfg.embed_dim, gc_widths=cfg.gc_widths, rng=rng,
        learn_graph=adjacency is None)
    tensors = params.tensors()
    state = AdamState(tensors)
    history: list[EpochRecord] = []
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg)
        logits = gcn.forward(x, params, adjacency=adjacency)
        loss = ad.row_softmax_cross_entropy(logits, y, train_idx)
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            norms = ", ".join(f"{np.linalg.norm(t.values):.3e}" for t in tensors)
            raise NumericalError(
                f"non-finite loss at epoch {epoch}; parameter norms: [{norms}]")
        ad.backward(loss)
        adam_step(tensors, [t.grad for t in tensors], state, lr,
                  beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
        preds = gcn.predict(logits)
        train_acc = float(np.mean(preds[train_idx] == y[train_idx]))
        val_acc = None
        if val_idx is not None:
            val_acc = float(np.mean(preds[val_idx] == y[val_idx]))
        history.append(EpochRecord(epoch, lr, loss_value, train_acc, val_acc))
    return params, history


# ---------------------------------------------------------------------------
# metrics


@dataclass
class Metrics:
    """Accuracy and macro one-vs-rest AUC for one evaluation.

    ``auc`` is None when no class has both positives and negatives among
    the evaluated rows (e.g. a single-class mask).
    """

    accuracy: float
    auc: Optional[float]


@dataclass
class CVMetrics:
    """Per-fold metrics plus their mean and (population) std."""

    folds: list[Metrics]
    accuracy_mean: float = field(init=False)
    accuracy_std: float = field(init=False)
    auc_mean: Optional[float] = field(init=False)
    auc_std: Optional[float] = field(init=False)

    def __post_init__(self) -> None:
        accs = np.array([m.accuracy for m in self.folds])
        self.accuracy_mean = float(accs.mean())
        self.accuracy_std = float(accs.std())
        aucs = [m.auc for m in self.folds if m.auc is not None]
        if aucs:
            arr = np.array(aucs)
            self.auc_mean = float(arr.mean())
            self.auc_std = float(arr.std())
        else:
            self.auc_mean = None
            self.auc_std = None

    def summary(self) -> str:
        line = f"accuracy: {self.accuracy_mean:.4f} ± {self.accuracy_std:.4f}"
        if self.auc_mean is not None:
            line += f", auc: {self.auc_mean:.4f} ± {self.auc_std:.4f}"
        else:
            line += ", auc: undefined"
        return line


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the average rank."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def binary_auc(scores, positives) -> Optional[float]:
    """ROC AUC by the rank-statistic (Mann-Whitney) formulation.

    Equivalent to pair counting with ties earning 0.5 credit. Returns
    None when either class is empty.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(scores)
    rank_sum = ranks[positives].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def macro_ovr_auc(scores: np.ndarray, labels: np.ndarray) -> Optional[float]:
    """Macro average of per-class one-vs-rest AUCs.

    Classes without both positives and negatives among the evaluated rows
    are skipped; returns None if every class is skipped.
    """
    per_class = []
    for cls in range(scores.shape[1]):
        auc = binary_auc(scores[:, cls], labels == cls)
        if auc is not None:
            per_class.append(auc)
    if not per_class:
        return None
    return float(np.mean(per_class))


def evaluate(params: gcn.ModelParams, dataset, mask,
             adjacency: Optional[np.ndarray] = None) -> Metrics:
    """Accuracy and macro OvR AUC (from softmax probabilities) on ``mask``."""
    x = np.asarray(dataset.X, dtype=np.float64)
    y = np.asarray(dataset.y)
    idx = _as_index_array(mask, x.shape[0])
    if idx.size == 0:
        raise ContractError("evaluation mask must be non-empty")
    logits = gcn.forward(x, params, adjacency=adjacency)
    probs = ad.softmax_rows(logits.values)
    preds = gcn.predict(logits)
    accuracy = float(np.mean(preds[idx] == y[idx]))
    auc = macro_ovr_auc(probs[idx], y[idx])
    return Metrics(accuracy=accuracy, auc=auc)


# ---------------------------------------------------------------------------
# cross-validation and inference


def _workers_from_env() -> int:
    raw = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _run_cv_fold(args):
    dataset, cfg, train_idx, test_idx, adjacency = args
    params, _ = train(dataset, cfg, train_mask=train_idx, adjacency=adjacency)
    return evaluate(params, dataset, test_idx, adjacency=adjacency)


def cross_validate(dataset, cfg: TrainConfig,
                   adjacency: Optional[np.ndarray] = None,
                   n_workers: Optional[int] = None) -> CVMetrics:
    """Stratified k-fold CV of the full model (transductive protocol).

    Every fold trains on the whole graph with only its train rows
    labeled, then scores the held-out rows. Fold jobs are independent;
    set the LATENTGRAPH_WORKERS environment variable (or ``n_workers``)
    to run them in parallel processes.
    """
    split = stratified_kfold(dataset.y, cfg.folds, cfg.seed)
    jobs = [(dataset, cfg, tr, te, adjacency)
            for tr, te in zip(split.train_indices, split.test_indices)]
    workers = _workers_from_env() if n_workers is None else max(1, n_workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fold_metrics = list(pool.map(_run_cv_fold, jobs))
    else:
        fold_metrics = [_run_cv_fold(job) for job in jobs]
    return CVMetrics(folds=fold_metrics)


def inductive_infer(params: gcn.ModelParams, train_X, test_X) -> np.ndarray:
    """Predict labels for unseen nodes with frozen parameters.

    The union of training and test rows is embedded, the adjacency is
    built over that union, and predictions are returned for the test rows
    only, so unseen nodes receive messages from the training population.
    """
    train_X = np.asarray(train_X, dtype=np.float64)
    test_X = np.asarray(test_X, dtype=np.float64)
    if train_X.shape[1] != test_X.shape[1]:
        raise DimensionError(
            f"test features have width {test_X.shape[1]}, expected {train_X.shape[1]}")
    full = ad.concat_rows(ad.as_tensor(train_X), ad.as_tensor(test_X))
    logits = gcn.forward(full, params)
    return gcn.predict(logits)[train_X.shape[0]:]


# ---------------------------------------------------------------------------
# baselines


def ridge_fit(features: np.ndarray, labels: np.ndarray, n_classes: int,
              ridge_lambda: float = 1.0) -> np.ndarray:
    """One-vs-rest ridge weights by the regularized normal equations.

    Features are augmented with a constant column; the regularizer keeps
    the system nonsingular for any input.
    """
    x = np.hstack([features, np.ones((features.shape[0], 1))])
    targets = np.zeros((x.shape[0], n_classes))
    targets[np.arange(x.shape[0]), labels] = 1.0
    gram = x.T @ x + ridge_lambda * np.eye(x.shape[1])
    return np.linalg.solve(gram, x.T @ targets)


def ridge_scores(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    x = np.hstack([features, np.ones((features.shape[0], 1))])
    return x @ weights


def linear_baseline(dataset, folds: FoldSplit, ridge_lambda: float = 1.0) -> CVMetrics:
    """Ridge-regression classifier under the same CV protocol."""
    x = np.asarray(dataset.X, dtype=np.float64)
    y = np.asarray(dataset.y)
    n_classes = int(y.max()) + 1
    fold_metrics = []
    for tr, te in zip(folds.train_indices, folds.test_indices):
        weights = ridge_fit(x[tr], y[tr], n_classes, ridge_lambda)
        scores = ridge_scores(weights, x[te])
        accuracy = float(np.mean(np.argmax(scores, axis=1) == y[te]))
        auc = macro_ovr_auc(scores, y[te])
        fold_metrics.append(Metrics(accuracy=accuracy, auc=auc))
    return CVMetrics(folds=fold_metrics)


def knn_adjacency(features: np.ndarray, k_neighbors: int) -> np.ndarray:
    """Symmetrized binary kNN graph on raw feature distances."""
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if not (0 < k_neighbors < n):
        raise ContractError(f"need 0 < k_neighbors < {n}, got {k_neighbors}")
    dists = pairwise_distances(features)
    np.fill_diagonal(dists, np.inf)
    adjacency = np.zeros((n, n))
    neighbor_cols = np.argsort(dists, axis=1, kind="stable")[:, :k_neighbors]
    rows = np.repeat(np.arange(n), k_neighbors)
    adjacency[rows, neighbor_cols.ravel()] = 1.0
    return np.maximum(adjacency, adjacency.T)


def knn_graph_baseline(dataset, k_neighbors: int, folds: FoldSplit,
                       cfg: TrainConfig) -> CVMetrics:
    """GCN trained on a fixed kNN graph built once from raw features.

    Same trainer and protocol as the full model; the only difference is
    that the graph is never learned.
    """
    adjacency = knn_adjacency(np.asarray(dataset.X, dtype=np.float64), k_neighbors)
    fold_metrics = []
    for tr, te in zip(folds.train_indices, folds.test_indices):
        params, _ = train(dataset, cfg, train_mask=tr, adjacency=adjacency)
        fold_metrics.append(evaluate(params, dataset, te, adjacency=adjacency))
    return CVMetrics(folds=fold_metrics)
