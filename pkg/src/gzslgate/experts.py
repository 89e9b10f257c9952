"""Per-route classifiers: the linear seen expert, the 1-NN experts over
attribute latents, and the no-gating union baseline.

Tie-breaking is lowest class id everywhere (bank rows are sorted by id,
so taking the first minimum suffices).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .autoencoder import TwoStreamAE
from .errors import ConfigError, DataError
from .gating import ROUTE_NOGATE, ROUTE_SEEN, ROUTE_UNSEEN, ReferenceBanks
from .nn import AdamState, adam_step, as_matrix, pairwise_l2, rng_from_seed


@dataclass
class Prediction:
    class_id: int
    route: str            # "seen" | "unseen" | "nogate"
    score: float          # classifier logit or negative distance


@dataclass
class SeenClassifier:
    """One linear layer over raw visual features, softmax-trained."""

    W: np.ndarray               # (dim_v, n_classes)
    b: np.ndarray               # (n_classes,)
    class_ids: np.ndarray       # global class id per output column

    @property
    def n_classes(self) -> int:
        return self.W.shape[1]

    def logits(self, X) -> np.ndarray:
        X = as_matrix("classifier input", X)
        if X.shape[1] != self.W.shape[0]:
            raise ConfigError(
                f"classifier input width {X.shape[1]} != {self.W.shape[0]}")
        return X @ self.W + self.b


@dataclass
class ClassifierConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    l2: float = 0.0
    min_improve: float = 1e-5
    patience: int = 5
    seed: int = 0


def train_seen_classifier(X_train, labels, cfg: ClassifierConfig = None,
                          class_ids=None) -> SeenClassifier:
    """Softmax cross-entropy training with Adam and seeded shuffling.

    `labels` are local column indices 0..K-1; `class_ids` maps columns to
    global class ids (identity when omitted). Stops early once the epoch
    loss has improved by less than cfg.min_improve for cfg.patience
    consecutive epochs.
    """
    cfg = cfg or ClassifierConfig()
    X = as_matrix("X_train", X_train)
    y = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise DataError("empty classifier training set")
    if y.shape != (n,):
        raise ConfigError("labels must be one index per training row")
    K = int(y.max()) + 1 if class_ids is None else len(class_ids)
    if y.min() < 0 or y.max() >= K:
        raise ConfigError(f"labels outside 0..{K - 1}")
    for k in range(K):
        if not np.any(y == k):
            warnings.warn(f"class {k} has no training samples; it stays in "
                          f"the output space", stacklevel=2)

    rng = rng_from_seed(cfg.seed)
    params = {"W": np.zeros((X.shape[1], K)), "b": np.zeros(K)}
    state = AdamState.for_params(params, cfg.lr)

    best = np.inf
    stale = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Xb, yb = X[idx], y[idx]
            logits = Xb @ params["W"] + params["b"]
            shifted = logits - logits.max(axis=1, keepdims=True)
            logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            loss = -logp[np.arange(idx.size), yb].mean()
            if cfg.l2 > 0:
                loss += 0.5 * cfg.l2 * float((params["W"] ** 2).sum())
            dlogits = np.exp(logp)
            dlogits[np.arange(idx.size), yb] -= 1.0
            dlogits /= idx.size
            grads = {"W": Xb.T @ dlogits, "b": dlogits.sum(axis=0)}
            if cfg.l2 > 0:
                grads["W"] = grads["W"] + cfg.l2 * params["W"]
            adam_step(params, grads, state)
            total += loss * idx.size
        epoch_loss = total / n
        if best - epoch_loss < cfg.min_improve:
            stale += 1
            if stale >= cfg.patience:
                break
        else:
            stale = 0
        best = min(best, epoch_loss)

    if class_ids is None:
        class_ids = np.arange(K)
    return SeenClassifier(W=params["W"], b=params["b"],
                          class_ids=np.asarray(class_ids, dtype=np.int64))


def predict_seen(clf: SeenClassifier, x) -> Prediction:
    """Argmax logit over the seen classes (first maximum wins ties)."""
    x = np.asarray(x, dtype=np.float64)
    logits = clf.logits(x[None, :])[0]
    k = int(np.argmax(logits))
    return Prediction(class_id=int(clf.class_ids[k]), route=ROUTE_SEEN,
                      score=float(logits[k]))


def _nearest(Z_query, Z_bank, class_ids) -> tuple[np.ndarray, np.ndarray]:
    D = pairwise_l2(Z_query, Z_bank)
    k = D.argmin(axis=1)
    return class_ids[k], D[np.arange(D.shape[0]), k]


def predict_unseen_1nn(ae: TwoStreamAE, banks: ReferenceBanks, x) -> Prediction:
    """Class of the nearest unseen attribute latent."""
    if banks.n_unseen == 0:
        raise ConfigError("unseen bank is empty")
    x = np.asarray(x, dtype=np.float64)
    ids, dist = _nearest(ae.encode_vision(x[None, :]), banks.Z_U,
                         banks.unseen_class_ids)
    return Prediction(class_id=int(ids[0]), route=ROUTE_UNSEEN,
                      score=-float(dist[0]))


def predict_seen_1nn(ae: TwoStreamAE, banks: ReferenceBanks, x) -> Prediction:
    """1-NN over the seen attribute latents (the swap-in seen expert)."""
    if banks.n_seen == 0:
        raise ConfigError("seen bank is empty")
    x = np.asarray(x, dtype=np.float64)
    ids, dist = _nearest(ae.encode_vision(x[None, :]), banks.Z_S,
                         banks.seen_class_ids)
    return Prediction(class_id=int(ids[0]), route=ROUTE_SEEN,
                      score=-float(dist[0]))


def _union_bank(banks: ReferenceBanks) -> tuple[np.ndarray, np.ndarray]:
    ids = np.concatenate([banks.seen_class_ids, banks.unseen_class_ids])
    Z = np.concatenate([banks.Z_S, banks.Z_U], axis=0)
    order = np.argsort(ids, kind="stable")   # lowest-id tie-break needs sorted rows
    return Z[order], ids[order]

def predict_no_gating(ae: TwoStreamAE, banks: ReferenceBanks, x) -> Prediction:
    """1-NN over the union of seen and unseen latents: the ungated baseline
    that predicts among all N_S + N_U classes at once."""
    if banks.n_seen + banks.n_unseen == 0:
        raise ConfigError("both banks are empty")
    x = np.asarray(x, dtype=np.float64)
    Z, ids = _union_bank(banks)
    got, dist = _nearest(ae.encode_vision(x[None, :]), Z, ids)
    return Prediction(class_id=int(got[0]), route=ROUTE_NOGATE,
                      score=-float(dist[0]))


# Batched variants used by evaluation (same semantics, one pass).

def predict_seen_batch(clf: SeenClassifier, X) -> np.ndarray:
    logits = clf.logits(X)
    return clf.class_ids[logits.argmax(axis=1)]


def predict_unseen_1nn_batch(ae, banks, X) -> np.ndarray:
    if banks.n_unseen == 0:
        raise ConfigError("unseen bank is empty")
    ids, _ = _nearest(ae.encode_vision(X), banks.Z_U, banks.unseen_class_ids)
    return ids


def predict_seen_1nn_batch(ae, banks, X) -> np.ndarray:
    if banks.n_seen == 0:
        raise ConfigError("seen bank is empty")
    ids, _ = _nearest(ae.encode_vision(X), banks.Z_S, banks.seen_class_ids)
    return ids


def predict_no_gating_batch(ae, banks, X) -> np.ndarray:
    if banks.n_seen + banks.n_unseen == 0:
        raise ConfigError("both banks are empty")
    Z, ids = _union_bank(banks)
    got, _ = _nearest(ae.encode_vision(X), Z, ids)
    return got
