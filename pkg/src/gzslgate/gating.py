"""Distance features and ratio scores that route queries seen vs unseen.

Given a frozen autoencoder, each class attribute yields two reference
points: its latent f_a(a) and its vision-space cross-reconstruction
g_v(f_a(a)). A query x is scored by its minimum distances to the seen
and unseen reference sets:

    log_d_latent_s = min over seen i   of |f_v(x) - Z_S[i]|_2
    log_d_latent_u = min over unseen j of |f_v(x) - Z_U[j]|_2
    d_cross_s      = min over seen i   of |x - Xhat_S[i]|_1
    d_cross_u      = min over unseen j of |x - Xhat_U[j]|_1

    r_latent = exp(log_d_latent_s - log_d_latent_u)
    r_cross  = d_cross_s / d_cross_u
    r_all    = (d_cross_s + beta * exp(log_d_latent_s))
             / (d_cross_u + beta * exp(log_d_latent_u))

The latent distances enter through exp(), matching how they are used in
the training objective, so they are carried in log domain: exp(min d) =
min exp(d) because exp is monotone, and the ratio exp(dS - dU) never
overflows the way exp(dS) alone would. Large scores mean the query looks
unseen; the gate routes Unseen when the score reaches tau.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autoencoder import TwoStreamAE
from .errors import ConfigError
from .nn import as_matrix, pairwise_l1, pairwise_l2

log = logging.getLogger(__name__)

ROUTE_SEEN = "seen"
ROUTE_UNSEEN = "unseen"
ROUTE_NOGATE = "nogate"

SCORE_FEATURES = ("latent", "cross", "all")

# Evaluate r_all literally while both exp terms stay below this; factor
# exp(min(logS, logU)) out of numerator and denominator beyond it.
_EXP_GUARD = 1e100
_LOG_GUARD = float(np.log(_EXP_GUARD))


@dataclass
class ReferenceBanks:
    """Per-class reference points from one frozen model, rows sorted by
    class id within each partition."""

    Z_S: np.ndarray        # seen attribute latents,   (N_S, dim_z)
    Z_U: np.ndarray        # unseen attribute latents, (N_U, dim_z)
    Xhat_S: np.ndarray     # seen cross-reconstructions,   (N_S, dim_v)
    Xhat_U: np.ndarray     # unseen cross-reconstructions, (N_U, dim_v)
    seen_class_ids: np.ndarray
    unseen_class_ids: np.ndarray

    @property
    def n_seen(self) -> int:
        return self.Z_S.shape[0]

    @property
    def n_unseen(self) -> int:
        return self.Z_U.shape[0]


@dataclass
class GateConfig:
    beta: float
    tau: float

    def validate(self) -> None:
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")


@dataclass
class GateScores:
    """Distance features and ratio scores for one query."""

    log_d_latent_s: float
    log_d_latent_u: float
    d_cross_s: float
    d_cross_u: float
    r_latent: float
    r_cross: float
    r_all: float
    nn_seen_idx: int       # seen class id with the nearest latent
    nn_unseen_idx: int     # unseen class id with the nearest latent

    def feature(self, name: str) -> float:
        if name == "latent":
            return self.r_latent
        if name == "cross":
            return self.r_cross
        if name == "all":
            return self.r_all
        raise ConfigError(f"unknown score feature {name!r}, want one of "
                          f"{SCORE_FEATURES}")


def build_banks(ae: TwoStreamAE, attrs_seen, attrs_unseen,
                seen_class_ids=None, unseen_class_ids=None) -> ReferenceBanks:
    """Encode and cross-reconstruct every class attribute once.

    An empty unseen partition is allowed for pure-seen diagnostics.
    """
    A_S = as_matrix("seen attributes", attrs_seen)
    A_U = (np.zeros((0, ae.dim_a)) if attrs_unseen is None or
           len(attrs_unseen) == 0 else as_matrix("unseen attributes", attrs_unseen))
    Z_S = ae.encode_attr(A_S)
    Z_U = ae.encode_attr(A_U)
    if seen_class_ids is None:
        seen_class_ids = np.arange(A_S.shape[0])
    if unseen_class_ids is None:
        unseen_class_ids = np.arange(A_U.shape[0])
    return ReferenceBanks(
        Z_S=Z_S,
        Z_U=Z_U,
        Xhat_S=ae.decode_vision(Z_S),
        Xhat_U=ae.decode_vision(Z_U),
        seen_class_ids=np.asarray(seen_class_ids, dtype=np.int64),
        unseen_class_ids=np.asarray(unseen_class_ids, dtype=np.int64),
    )


def _safe_ratio(num: float, den: float) -> float:
    """num/den with the degenerate-denominator convention.

    A zero denominator means the query coincides with an unseen reference,
    so the score saturates to +inf (certainly unseen) unless the numerator
    is also zero, which is maximally ambiguous and scored 1.0.
    """
    if den == 0.0:
        if num == 0.0:
            log.warning("0/0 ratio score; treating as maximally ambiguous (1.0)")
            return 1.0
        return float("inf")
    return num / den


def combine_ratios(log_s: float, log_u: float, d_cross_s: float,
                   d_cross_u: float, beta: float) -> tuple[float, float, float]:
    """(r_latent, r_cross, r_all) from the four min distances."""
    if beta < 0:
        raise ConfigError(f"beta must be >= 0, got {beta}")
    r_latent = float(np.exp(log_s - log_u))
    r_cross = _safe_ratio(d_cross_s, d_cross_u)
    if beta == 0.0:
        return r_latent, r_cross, r_cross
    if log_s < _LOG_GUARD and log_u < _LOG_GUARD:
        num = d_cross_s + beta * np.exp(log_s)
        den = d_cross_u + beta * np.exp(log_u)
    else:
        shift = min(log_s, log_u)
        scale = np.exp(-shift)   # shift >= 0, so this only shrinks
        num = d_cross_s * scale + beta * np.exp(log_s - shift)
        den = d_cross_u * scale + beta * np.exp(log_u - shift)
    return r_latent, r_cross, _safe_ratio(float(num), float(den))


@dataclass
class DistFeatures:
    """Per-query minimum distances, before any beta mixing."""

    log_d_latent_s: np.ndarray
    log_d_latent_u: np.ndarray
    d_cross_s: np.ndarray
    d_cross_u: np.ndarray
    nn_seen_idx: np.ndarray     # class ids, latent argmins
    nn_unseen_idx: np.ndarray

    @property
    def n_queries(self) -> int:
        return self.log_d_latent_s.shape[0]


def distance_features(ae: TwoStreamAE, X, banks: ReferenceBanks) -> DistFeatures:
    """Minimum latent-l2 and cross-reconstruction-l1 distances per query."""
    X = as_matrix("queries", X)
    if banks.n_seen == 0 or banks.n_unseen == 0:
        raise ConfigError("scoring needs non-empty seen and unseen banks")
    Zv = ae.encode_vision(X)
    Dlat_s = pairwise_l2(Zv, banks.Z_S)
    Dlat_u = pairwise_l2(Zv, banks.Z_U)
    ks = Dlat_s.argmin(axis=1)              # first minimum = lowest class id
    ku = Dlat_u.argmin(axis=1)
    rows = np.arange(X.shape[0])
    return DistFeatures(
        log_d_latent_s=Dlat_s[rows, ks],
        log_d_latent_u=Dlat_u[rows, ku],
        d_cross_s=pairwise_l1(X, banks.Xhat_S).min(axis=1),
        d_cross_u=pairwise_l1(X, banks.Xhat_U).min(axis=1),
        nn_seen_idx=banks.seen_class_ids[ks],
        nn_unseen_idx=banks.unseen_class_ids[ku],
    )


def combine_features(feats: DistFeatures, beta: float) -> list[GateScores]:
    """Apply the beta mixing to precomputed distance features."""
    out = []
    for i in range(feats.n_queries):
        log_s = float(feats.log_d_latent_s[i])
        log_u = float(feats.log_d_latent_u[i])
        dcs = float(feats.d_cross_s[i])
        dcu = float(feats.d_cross_u[i])
        r_latent, r_cross, r_all = combine_ratios(log_s, log_u, dcs, dcu, beta)
        out.append(GateScores(
            log_d_latent_s=log_s,
            log_d_latent_u=log_u,
            d_cross_s=dcs,
            d_cross_u=dcu,
            r_latent=r_latent,
            r_cross=r_cross,
            r_all=r_all,
            nn_seen_idx=int(feats.nn_seen_idx[i]),
            nn_unseen_idx=int(feats.nn_unseen_idx[i]),
        ))
    return out


def score_queries(ae: TwoStreamAE, X, banks: ReferenceBanks,
                  beta: float) -> list[GateScores]:
    """Score a batch of query rows against the reference banks."""
    return combine_features(distance_features(ae, X, banks), beta)


def score_query(ae: TwoStreamAE, x, banks: ReferenceBanks,
                beta: float) -> GateScores:
    """Score a single query vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigError(f"query must be a vector, got shape {x.shape}")
    return score_queries(ae, x[None, :], banks, beta)[0]


def gate(scores: GateScores, tau: float, score_feature: str = "all") -> str:
    """Route: Seen when the score is below tau, Unseen otherwise
    (the boundary score == tau routes Unseen)."""
    if not tau > 0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    return ROUTE_SEEN if scores.feature(score_feature) < tau else ROUTE_UNSEEN
