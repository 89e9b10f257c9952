"""End-to-end protocol: alpha/beta/tau search on the validation split,
retraining on train plus validation, and the final gated predictor.

During tuning, the classes listed in val_unseen_classes play the unseen
role: their samples never enter tuning-phase training, the remaining
seen classes form the temporary seen world, and validation queries are
scored, gated, and routed exactly like test queries. After the grids are
swept, everything is retrained from scratch on train plus validation
with the winning hyperparameters, against the real seen/unseen split.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autoencoder import SeenAttributeBank, TrainConfig, train_two_stream
from .data import DatasetBundle
from .errors import ConfigError, DataError
from .experts import (
    ClassifierConfig,
    Prediction,
    SeenClassifier,
    predict_no_gating_batch,
    predict_seen,
    predict_seen_1nn_batch,
    predict_seen_batch,
    predict_unseen_1nn,
    predict_unseen_1nn_batch,
    train_seen_classifier,
)
from .gating import (
    GateConfig,
    ReferenceBanks,
    ROUTE_NOGATE,
    ROUTE_SEEN,
    ROUTE_UNSEEN,
    build_banks,
    combine_features,
    distance_features,
    gate,
    score_query,
)
from .metrics import harmonic_mean, per_class_top1

SEEN_EXPERTS = ("linear", "1nn")

DEFAULT_BETA_GRID = (0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0)
DEFAULT_ALPHA_GRID = tuple(round(0.01 * k, 2) for k in range(1, 11))


@dataclass
class TuneGrids:
    """Search grids. tau defaults to the 1%..99% empirical quantiles of
    the unseen-class score over the validation queries, which covers
    every achievable routing split at any score scale; an explicit taus
    list overrides that."""

    alphas: tuple = DEFAULT_ALPHA_GRID
    betas: tuple = DEFAULT_BETA_GRID
    tau_percentiles: tuple = tuple(range(1, 100))
    taus: tuple | None = None

    def validate(self) -> None:
        if not self.alphas or not self.betas:
            raise ConfigError("alpha and beta grids must be non-empty")
        if self.taus is not None and not self.taus:
            raise ConfigError("explicit tau grid must be non-empty")
        if self.taus is None and not self.tau_percentiles:
            raise ConfigError("tau percentile grid must be non-empty")

    @property
    def n_taus(self) -> int:
        return len(self.taus) if self.taus is not None else len(self.tau_percentiles)


@dataclass
class TraceRow:
    alpha: float
    beta: float
    tau: float
    seen_acc: float
    unseen_acc: float
    harmonic: float


@dataclass
class TuneResult:
    best_alpha: float
    best_beta: float
    best_tau: float
    val_harmonic: float
    trace: list = field(default_factory=list)

    def trace_tsv(self) -> str:
        lines = ["alpha\tbeta\ttau\tS_val\tU_val\tH_val"]
        for r in self.trace:
            lines.append(f"{r.alpha!r}\t{r.beta!r}\t{r.tau!r}\t"
                         f"{r.seen_acc!r}\t{r.unseen_acc!r}\t{r.harmonic!r}")
        return "\n".join(lines) + "\n"


@dataclass
class PredictionRows:
    """Vectorized per-query outputs of a gated predictor."""

    class_ids: np.ndarray
    routes: np.ndarray
    gate_values: np.ndarray      # the score the gate thresholds
    scores: list                 # GateScores per query


@dataclass
class GatedPredictor:
    """Frozen model, reference banks, seen expert, and the gate settings."""

    ae: object
    banks: ReferenceBanks
    seen_clf: SeenClassifier
    gate_cfg: GateConfig
    score_feature: str = "all"
    seen_expert: str = "linear"
    no_gating: bool = False

    def validate(self) -> None:
        self.gate_cfg.validate()
        if self.seen_expert not in SEEN_EXPERTS:
            raise ConfigError(f"seen_expert must be one of {SEEN_EXPERTS}")

    def _seen_ids(self, X) -> np.ndarray:
        if self.seen_expert == "1nn":
            return predict_seen_1nn_batch(self.ae, self.banks, X)
        return predict_seen_batch(self.seen_clf, X)

    def predict_rows(self, X) -> PredictionRows:
        self.validate()
        feats = distance_features(self.ae, X, self.banks)
        scores = combine_features(feats, self.gate_cfg.beta)
        values = np.array([s.feature(self.score_feature) for s in scores])
        if self.no_gating:
            ids = predict_no_gating_batch(self.ae, self.banks, X)
            routes = np.array([ROUTE_NOGATE] * len(ids))
        else:
            unseen_routed = values >= self.gate_cfg.tau
            ids = np.where(unseen_routed,
                           predict_unseen_1nn_batch(self.ae, self.banks, X),
                           self._seen_ids(X))
            routes = np.where(unseen_routed, ROUTE_UNSEEN, ROUTE_SEEN)
        return PredictionRows(class_ids=ids, routes=routes,
                              gate_values=values, scores=scores)


def predict(pred: GatedPredictor, x) -> Prediction:
    """Score one query, gate it, and route it to the chosen expert."""
    pred.validate()
    if pred.no_gating:
        from .experts import predict_no_gating
        return predict_no_gating(pred.ae, pred.banks, x)
    scores = score_query(pred.ae, x, pred.banks, pred.gate_cfg.beta)
    route = gate(scores, pred.gate_cfg.tau, pred.score_feature)
    if route == ROUTE_UNSEEN:
        return predict_unseen_1nn(pred.ae, pred.banks, x)
    if pred.seen_expert == "1nn":
        from .experts import predict_seen_1nn
        return predict_seen_1nn(pred.ae, pred.banks, x)
    return predict_seen(pred.seen_clf, x)


def _local_indices(labels: np.ndarray, classes: np.ndarray) -> np.ndarray:
    lookup = {int(c): i for i, c in enumerate(classes)}
    return np.array([lookup[int(c)] for c in labels], dtype=np.int64)


@dataclass
class _TunePhase:
    """Materialized tuning data: everything tune() may touch.

    Slicing up front is the protocol-hygiene guarantee; the test
    partitions are never read during tuning.
    """

    X_train: np.ndarray
    train_local: np.ndarray          # indices into tune_seen
    X_val: np.ndarray
    val_labels: np.ndarray           # global ids
    val_is_unseen: np.ndarray        # role during tuning
    tune_seen: np.ndarray            # global ids, sorted
    val_unseen: np.ndarray           # global ids, sorted


def _build_tune_phase(bundle: DatasetBundle, holdout_frac: float) -> _TunePhase:
    s = bundle.splits
    val_unseen = np.asarray(sorted(s.val_unseen_classes), dtype=np.int64)
    if val_unseen.size == 0:
        raise DataError("tuning needs val_unseen_classes in the splits")
    if s.val_idx.size == 0:
        raise DataError("tuning needs a validation index list")
    seen = np.asarray(sorted(s.seen_classes), dtype=np.int64)
    tune_seen = np.setdiff1d(seen, val_unseen)
    if tune_seen.size == 0:
        raise DataError("every seen class is validation-unseen; nothing to train on")

    train_labels = bundle.y[s.train_idx]
    keep = np.isin(train_labels, tune_seen)
    train_rows = s.train_idx[keep]

    val_rows = np.asarray(s.val_idx)
    val_labels = bundle.y[val_rows]
    val_is_unseen = np.isin(val_labels, val_unseen)

    if not (~val_is_unseen).any():
        # No seen-role validation queries in the split files: hold out a
        # deterministic slice of each training class to play that role.
        held = []
        for c in tune_seen:
            rows_c = train_rows[bundle.y[train_rows] == c]
            n_hold = max(1, int(holdout_frac * rows_c.size)) if rows_c.size > 1 else 0
            held.append(rows_c[:n_hold])
        held = np.concatenate(held) if held else np.zeros(0, dtype=np.int64)
        train_rows = np.setdiff1d(train_rows, held)
        val_rows = np.concatenate([val_rows, held])
        val_labels = bundle.y[val_rows]
        val_is_unseen = np.isin(val_labels, val_unseen)
    if not val_is_unseen.any():
        raise DataError("validation set has no samples of the val-unseen classes")
    if train_rows.size == 0:
        raise DataError("tuning-phase training set is empty")

    return _TunePhase(
        X_train=bundle.X[train_rows],
        train_local=_local_indices(bundle.y[train_rows], tune_seen),
        X_val=bundle.X[val_rows],
        val_labels=val_labels,
        val_is_unseen=val_is_unseen,
        tune_seen=tune_seen,
        val_unseen=val_unseen,
    )


def tune(bundle: DatasetBundle, grids: TuneGrids,
         train_cfg: TrainConfig = None, clf_cfg: ClassifierConfig = None,
         score_feature: str = "all", holdout_frac: float = 0.2) -> TuneResult:
    """Grid search over (alpha, beta, tau) maximizing the validation
    harmonic mean; ties go to the lexicographically smallest tuple.

    One autoencoder is trained per alpha; the seen expert does not depend
    on any of the three hyperparameters and is trained once.
    """
    grids.validate()
    train_cfg = train_cfg or TrainConfig()
    clf_cfg = clf_cfg or ClassifierConfig()
    phase = _build_tune_phase(bundle, holdout_frac)

    bank = SeenAttributeBank(bundle.A[phase.tune_seen])
    clf = train_seen_classifier(phase.X_train, phase.train_local, clf_cfg,
                                class_ids=phase.tune_seen)
    seen_ids_val = predict_seen_batch(clf, phase.X_val)

    val_seen_mask = ~phase.val_is_unseen
    best = None
    trace = []
    for alpha in sorted(grids.alphas):
        ae, _ = train_two_stream(phase.X_train, phase.train_local, bank,
                                 replace(train_cfg, alpha=alpha))
        banks = build_banks(ae, bundle.A[phase.tune_seen],
                            bundle.A[phase.val_unseen],
                            seen_class_ids=phase.tune_seen,
                            unseen_class_ids=phase.val_unseen)
        feats = distance_features(ae, phase.X_val, banks)
        unseen_ids_val = predict_unseen_1nn_batch(ae, banks, phase.X_val)
        for beta in sorted(grids.betas):
            values = np.array([s.feature(score_feature)
                               for s in combine_features(feats, beta)])
            if grids.taus is not None:
                taus = sorted(grids.taus)
            else:
                taus = np.percentile(values, grids.tau_percentiles)
                tiny = np.finfo(np.float64).tiny
                taus = [float(t) if t > 0 else tiny for t in taus]
            for tau in taus:
                routed_unseen = values >= tau
                preds = np.where(routed_unseen, unseen_ids_val, seen_ids_val)
                S = (per_class_top1(preds[val_seen_mask],
                                    phase.val_labels[val_seen_mask],
                                    phase.tune_seen)
                     if val_seen_mask.any() else 0.0)
                U = per_class_top1(preds[phase.val_is_unseen],
                                   phase.val_labels[phase.val_is_unseen],
                                   phase.val_unseen)
                H = harmonic_mean(S, U)
                trace.append(TraceRow(alpha=alpha, beta=beta, tau=float(tau),
                                      seen_acc=S, unseen_acc=U, harmonic=H))
                if best is None or H > best.harmonic:
                    best = trace[-1]

    return TuneResult(best_alpha=best.alpha, best_beta=best.beta,
                      best_tau=best.tau, val_harmonic=best.harmonic,
                      trace=trace)


def retrain_final(bundle: DatasetBundle, tune_result: TuneResult,
                  train_cfg: TrainConfig = None,
                  clf_cfg: ClassifierConfig = None,
                  score_feature: str = "all",
                  seen_expert: str = "linear") -> GatedPredictor:
    """Retrain from scratch on train plus validation with the chosen alpha,
    rebuild the banks over the real seen/unseen class partition, train the
    seen expert on all seen training rows, and freeze the gate settings."""
    train_cfg = train_cfg or TrainConfig()
    clf_cfg = clf_cfg or ClassifierConfig()
    s = bundle.splits
    rows = np.concatenate([s.train_idx, s.val_idx])
    if rows.size == 0:
        raise DataError("no training rows in the bundle")
    seen = np.asarray(sorted(s.seen_classes), dtype=np.int64)
    unseen = np.asarray(sorted(s.unseen_classes), dtype=np.int64)

    labels_local = _local_indices(bundle.y[rows], seen)
    bank = SeenAttributeBank(bundle.A[seen])
    ae, _ = train_two_stream(bundle.X[rows], labels_local, bank,
                             replace(train_cfg, alpha=tune_result.best_alpha))
    banks = build_banks(ae, bundle.A[seen], bundle.A[unseen],
                        seen_class_ids=seen, unseen_class_ids=unseen)
    clf = train_seen_classifier(bundle.X[rows], labels_local, clf_cfg,
                                class_ids=seen)
    return GatedPredictor(
        ae=ae,
        banks=banks,
        seen_clf=clf,
        gate_cfg=GateConfig(beta=tune_result.best_beta, tau=tune_result.best_tau),
        score_feature=score_feature,
        seen_expert=seen_expert,
    )
