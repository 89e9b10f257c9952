"""Evaluation metrics: per-class top-1 accuracy, harmonic mean, AUROC,
FPR at a target TPR, and the full report over a gated predictor.

"Unseen" is the positive class for the detection metrics: higher scores
mean more unseen-looking, a query is flagged unseen when score >= t.
Accuracies are per-class means (every class weighs the same regardless
of its sample count); classes without test samples are left out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gating import ROUTE_NOGATE, ROUTE_SEEN, ROUTE_UNSEEN


def per_class_top1(preds, truths, class_set) -> float:
    """Mean over classes (with at least one sample) of within-class accuracy."""
    preds = np.asarray(preds)
    truths = np.asarray(truths)
    classes = np.asarray(sorted(set(int(c) for c in class_set)))
    if classes.size == 0:
        raise ConfigError("empty class set")
    if truths.size and not set(np.unique(truths)) <= set(classes):
        raise ConfigError("truth labels outside the class set")
    accs = []
    for c in classes:
        mask = truths == c
        if mask.any():
            accs.append(float((preds[mask] == c).mean()))
    return float(np.mean(accs)) if accs else 0.0


def harmonic_mean(S: float, U: float) -> float:
    """H = 2*S*U / (S + U), with H = 0 when both accuracies vanish."""
    if S < 0 or U < 0:
        raise ConfigError("accuracies must be non-negative")
    if S + U == 0:
        return 0.0
    return 2.0 * S * U / (S + U)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the average rank (sorting-based)."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores_unseen, scores_seen) -> float:
    """Rank-based (Mann-Whitney) AUC with tie correction:
    (#{u > s} + 0.5 #{u == s}) / (n_u * n_s)."""
    u = np.asarray(scores_unseen, dtype=np.float64)
    s = np.asarray(scores_seen, dtype=np.float64)
    if u.size == 0 or s.size == 0:
        raise ConfigError("auroc needs scores on both sides")
    ranks = _average_ranks(np.concatenate([u, s]))
    r_pos = ranks[:u.size].sum()
    return float((r_pos - u.size * (u.size + 1) / 2.0) / (u.size * s.size))


def fpr_at_tpr(scores_unseen, scores_seen, tpr_target: float = 0.95) -> float:
    """FPR at the largest threshold t (rule: flag unseen when score >= t)
    among the observed scores plus +inf such that TPR >= tpr_target."""
    u = np.asarray(scores_unseen, dtype=np.float64)
    s = np.asarray(scores_seen, dtype=np.float64)
    if u.size == 0 or s.size == 0:
        raise ConfigError("fpr_at_tpr needs scores on both sides")
    if not 0.0 < tpr_target <= 1.0:
        raise ConfigError(f"tpr_target must be in (0, 1], got {tpr_target}")
    candidates = np.unique(np.concatenate([u, s]))[::-1]   # descending
    for t in np.concatenate([[np.inf], candidates]):
        tpr = float((u >= t).mean())
        if tpr >= tpr_target:
            return float((s >= t).mean())
    # tpr_target <= 1 is always reached at the smallest observed score
    return 1.0


@dataclass
class EvalReport:
    seen_acc: float
    unseen_acc: float
    harmonic: float
    auc: float
    fpr_at_tpr95: float
    per_class_acc: dict
    routing: dict

    def to_dict(self) -> dict:
        return {
            "seen_acc": self.seen_acc,
            "unseen_acc": self.unseen_acc,
            "harmonic": self.harmonic,
            "auc": self.auc,
            "fpr_at_tpr95": self.fpr_at_tpr95,
            "per_class_acc": {str(k): v for k, v in self.per_class_acc.items()},
            "routing": self.routing,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        """Aligned text table with one-decimal percentages."""
        rows = [
            ("S", 100.0 * self.seen_acc),
            ("U", 100.0 * self.unseen_acc),
            ("H", 100.0 * self.harmonic),
        ]
        lines = ["metric   value", "------   -----"]
        lines += [f"{name:<8} {val:5.1f}" for name, val in rows]
        lines.append(f"{'AUC':<8} {self.auc:5.3f}")
        lines.append(f"{'FPR@95':<8} {self.fpr_at_tpr95:5.3f}")
        return "\n".join(lines) + "\n"


def compute_report(true_labels, pred_labels, is_unseen_truth, routes,
                   detection_scores, seen_classes, unseen_classes) -> EvalReport:
    """Aggregate per-query predictions into the evaluation report.

    `is_unseen_truth` marks queries whose true class is unseen;
    `detection_scores` is the unseen-class score used by the gate;
    `routes` is the chosen route per query.
    """
    true_labels = np.asarray(true_labels)
    pred_labels = np.asarray(pred_labels)
    is_unseen = np.asarray(is_unseen_truth, dtype=bool)
    scores = np.asarray(detection_scores, dtype=np.float64)
    routes = np.asarray(routes)

    S = per_class_top1(pred_labels[~is_unseen], true_labels[~is_unseen],
                       seen_classes) if (~is_unseen).any() else 0.0
    U = per_class_top1(pred_labels[is_unseen], true_labels[is_unseen],
                       unseen_classes) if is_unseen.any() else 0.0

    per_class = {}
    for c in sorted(set(int(c) for c in np.unique(true_labels))):
        mask = true_labels == c
        per_class[c] = float((pred_labels[mask] == c).mean())

    # ungated predictions have no gate route; attribute them to the
    # partition their predicted label belongs to
    unseen_set = set(int(c) for c in unseen_classes)
    eff_routes = np.where(
        routes == ROUTE_NOGATE,
        np.where(np.isin(pred_labels, sorted(unseen_set)),
                 ROUTE_UNSEEN, ROUTE_SEEN),
        routes)
    routing = {}
    for truth, name in ((~is_unseen, "true_seen"), (is_unseen, "true_unseen")):
        for route in (ROUTE_SEEN, ROUTE_UNSEEN):
            routing[f"{name}_routed_{route}"] = int(
                np.sum(truth & (eff_routes == route)))

    return EvalReport(
        seen_acc=S,
        unseen_acc=U,
        harmonic=harmonic_mean(S, U),
        auc=auroc(scores[is_unseen], scores[~is_unseen]),
        fpr_at_tpr95=fpr_at_tpr(scores[is_unseen], scores[~is_unseen]),
        per_class_acc=per_class,
        routing=routing,
    )


def evaluate_gzsl(predictor, bundle) -> EvalReport:
    """Run the predictor over both test partitions and report S/U/H,
    detection AUC and FPR, and the routing confusion counts."""
    s = bundle.splits
    if s.test_seen_idx.size == 0 or s.test_unseen_idx.size == 0:
        raise ConfigError("evaluation needs both test partitions")
    idx = np.concatenate([s.test_seen_idx, s.test_unseen_idx])
    is_unseen = np.concatenate([np.zeros(s.test_seen_idx.size, dtype=bool),
                                np.ones(s.test_unseen_idx.size, dtype=bool)])
    rows = predictor.predict_rows(bundle.X[idx])
    return compute_report(
        true_labels=bundle.y[idx],
        pred_labels=rows.class_ids,
        is_unseen_truth=is_unseen,
        routes=rows.routes,
        detection_scores=rows.gate_values,
        seen_classes=s.seen_classes,
        unseen_classes=s.unseen_classes,
    )
