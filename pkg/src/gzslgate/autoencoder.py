"""Two-stream autoencoder: a vision stream (f_v, g_v) and an attribute
stream (f_a, g_a) sharing one latent space, trained with three losses.

Per sample (x with class attribute a, batch-meaned):

    recon = |x - g_v(f_v(x))|_1 + |a - g_a(f_a(a))|_1
    cross = |x - g_v(f_a(a))|_1 + |a - g_a(f_v(x))|_1
    cls   = -log softmax_k(-|f_v(x) - f_a(a_k)|_2)[true class]
    total = recon + cross + alpha * cls

The cls term is computed over the attributes of every seen class (the
bank), re-encoded each batch so its gradients stay exact, and evaluated
through a max-shifted log-sum-exp because exp(-d) underflows for large d.

Every loss function returns (value, grads) where grads maps stream name
("f_v", "g_v", "f_a", "g_a") to that network's parameter gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .nn import (
    AdamState,
    Mlp2,
    adam_step,
    as_matrix,
    mlp2_backward,
    mlp2_forward,
    rng_from_seed,
)

STREAMS = ("f_v", "g_v", "f_a", "g_a")


@dataclass
class TwoStreamAE:
    """Four 2-layer MLPs around one shared latent space of width dim_z."""

    f_v: Mlp2   # vision encoder,    dim_v -> h_v -> dim_z
    g_v: Mlp2   # vision decoder,    dim_z -> h_v -> dim_v
    f_a: Mlp2   # attribute encoder, dim_a -> h_a -> dim_z
    g_a: Mlp2   # attribute decoder, dim_z -> h_a -> dim_a

    @classmethod
    def init(cls, dim_v: int, dim_a: int, dim_z: int, hidden_v: int,
             hidden_a: int, rng: np.random.Generator) -> "TwoStreamAE":
        return cls(
            f_v=Mlp2.init(dim_v, hidden_v, dim_z, rng),
            g_v=Mlp2.init(dim_z, hidden_v, dim_v, rng),
            f_a=Mlp2.init(dim_a, hidden_a, dim_z, rng),
            g_a=Mlp2.init(dim_z, hidden_a, dim_a, rng),
        )

    @property
    def dim_v(self) -> int:
        return self.f_v.dim_in

    @property
    def dim_a(self) -> int:
        return self.f_a.dim_in

    @property
    def dim_z(self) -> int:
        return self.f_v.dim_out

    def nets(self) -> dict:
        return {"f_v": self.f_v, "g_v": self.g_v,
                "f_a": self.f_a, "g_a": self.g_a}

    def validate(self) -> None:
        for net in self.nets().values():
            net.validate()
        if self.f_v.dim_out != self.f_a.dim_out:
            raise ConfigError("encoders must share one latent width")
        if self.g_v.dim_in != self.dim_z or self.g_a.dim_in != self.dim_z:
            raise ConfigError("decoder input width must equal the latent width")
        if self.g_v.dim_out != self.dim_v or self.g_a.dim_out != self.dim_a:
            raise ConfigError("decoder output width must match its encoder input")

    # Inference-only forwards (no cache kept).
    def encode_vision(self, X) -> np.ndarray:
        return mlp2_forward(self.f_v, X)[0]

    def encode_attr(self, A) -> np.ndarray:
        return mlp2_forward(self.f_a, A)[0]

    def decode_vision(self, Z) -> np.ndarray:
        return mlp2_forward(self.g_v, Z)[0]

    def decode_attr(self, Z) -> np.ndarray:
        return mlp2_forward(self.g_a, Z)[0]


@dataclass
class TrainConfig:
    alpha: float = 0.05
    lr: float = 1.5e-4
    epochs: int = 100
    batch_size: int = 64
    dim_z: int = 64
    hidden_v: int = 512
    hidden_a: int = 512
    seed: int = 0

    def validate(self) -> None:
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")


@dataclass
class SeenAttributeBank:
    """One attribute row per seen class; row i belongs to local class i."""

    A_S: np.ndarray

    def __post_init__(self):
        self.A_S = as_matrix("attribute bank", self.A_S)

    @property
    def n_classes(self) -> int:
        return self.A_S.shape[0]


def _zero_grads(ae: TwoStreamAE) -> dict:
    return {name: {k: np.zeros_like(p) for k, p in net.params().items()}
            for name, net in ae.nets().items()}


def _accumulate(dst: dict, src: dict, scale: float = 1.0) -> None:
    for k, g in src.items():
        dst[k] += scale * g


def loss_recon(ae: TwoStreamAE, x_batch, a_batch) -> tuple[float, dict]:
    """Same-stream l1 reconstruction error, batch-meaned."""
    X = as_matrix("x_batch", x_batch)
    A = as_matrix("a_batch", a_batch)
    if X.shape[0] != A.shape[0]:
        raise ConfigError("x_batch and a_batch row counts differ")
    n = X.shape[0]

    Zv, c_fv = mlp2_forward(ae.f_v, X)
    Xr, c_gv = mlp2_forward(ae.g_v, Zv)
    Za, c_fa = mlp2_forward(ae.f_a, A)
    Ar, c_ga = mlp2_forward(ae.g_a, Za)

    value = (np.abs(X - Xr).sum() + np.abs(A - Ar).sum()) / n

    grads = _zero_grads(ae)
    # d|u - r|_1 / dr = sign(r - u); sign(0) = 0 by convention
    g_gv, dZv = mlp2_backward(ae.g_v, c_gv, np.sign(Xr - X) / n)
    g_fv, _ = mlp2_backward(ae.f_v, c_fv, dZv)
    g_ga, dZa = mlp2_backward(ae.g_a, c_ga, np.sign(Ar - A) / n)
    g_fa, _ = mlp2_backward(ae.f_a, c_fa, dZa)
    _accumulate(grads["g_v"], g_gv)
    _accumulate(grads["f_v"], g_fv)
    _accumulate(grads["g_a"], g_ga)
    _accumulate(grads["f_a"], g_fa)
    return value, grads


def loss_cross(ae: TwoStreamAE, x_batch, a_batch) -> tuple[float, dict]:
    """Cross-stream l1 reconstruction error (a -> x and x -> a), batch-meaned."""
    X = as_matrix("x_batch", x_batch)
    A = as_matrix("a_batch", a_batch)
    if X.shape[0] != A.shape[0]:
        raise ConfigError("x_batch and a_batch row counts differ")
    n = X.shape[0]

    Za, c_fa = mlp2_forward(ae.f_a, A)
    Xc, c_gv = mlp2_forward(ae.g_v, Za)   # vision rebuilt from the attribute
    Zv, c_fv = mlp2_forward(ae.f_v, X)
    Ac, c_ga = mlp2_forward(ae.g_a, Zv)   # attribute rebuilt from the vision

    value = (np.abs(X - Xc).sum() + np.abs(A - Ac).sum()) / n

    grads = _zero_grads(ae)
    g_gv, dZa = mlp2_backward(ae.g_v, c_gv, np.sign(Xc - X) / n)
    g_fa, _ = mlp2_backward(ae.f_a, c_fa, dZa)
    g_ga, dZv = mlp2_backward(ae.g_a, c_ga, np.sign(Ac - A) / n)
    g_fv, _ = mlp2_backward(ae.f_v, c_fv, dZv)
    _accumulate(grads["g_v"], g_gv)
    _accumulate(grads["f_a"], g_fa)
    _accumulate(grads["g_a"], g_ga)
    _accumulate(grads["f_v"], g_fv)
    return value, grads


def loss_cls(ae: TwoStreamAE, x_batch, class_idx,
             bank: SeenAttributeBank) -> tuple[float, dict]:
    """Distance-softmax cross entropy over the seen-class attribute latents.

    Per sample i with true class y:
        D[i, k] = |f_v(x_i) - f_a(a_k)|_2 over every bank class k
        loss_i  = D[i, y] + log sum_k exp(-D[i, k])

    Gradients flow into f_v and, through every class term, into f_a.
    """
    X = as_matrix("x_batch", x_batch)
    y = np.asarray(class_idx, dtype=np.int64)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ConfigError("class_idx must be one index per batch row")
    if y.size and (y.min() < 0 or y.max() >= bank.n_classes):
        raise ConfigError(
            f"class index out of range [0, {bank.n_classes}): {y.min()}..{y.max()}")
    n = X.shape[0]

    Zv, c_fv = mlp2_forward(ae.f_v, X)
    Zb, c_fa = mlp2_forward(ae.f_a, bank.A_S)

    diff = Zv[:, None, :] - Zb[None, :, :]          # (n, K, dim_z)
    D = np.sqrt(np.einsum("nkz,nkz->nk", diff, diff))

    # log sum_k exp(-D[i,k]), shifted by the row max of -D
    m = -D.min(axis=1)
    lse = m + np.log(np.exp(-D - m[:, None]).sum(axis=1))
    value = float(np.mean(D[np.arange(n), y] + lse))

    P = np.exp(-D - lse[:, None])                    # softmax over -D
    dD = -P / n
    dD[np.arange(n), y] += 1.0 / n
    # d D[i,k] / d Zv[i] = diff / D; take 0 at D == 0 (norm kink)
    with np.errstate(invalid="ignore", divide="ignore"):
        U = np.where(D[:, :, None] > 0.0, diff / D[:, :, None], 0.0)
    dZv = np.einsum("nk,nkz->nz", dD, U)
    dZb = -np.einsum("nk,nkz->kz", dD, U)

    grads = _zero_grads(ae)
    g_fv, _ = mlp2_backward(ae.f_v, c_fv, dZv)
    g_fa, _ = mlp2_backward(ae.f_a, c_fa, dZb)
    _accumulate(grads["f_v"], g_fv)
    _accumulate(grads["f_a"], g_fa)
    return value, grads


def combine_losses(recon: float, cross: float, cls: float, alpha: float) -> float:
    """Total training objective: recon + cross + alpha * cls."""
    if alpha <= 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    return recon + cross + alpha * cls


def loss_all(ae: TwoStreamAE, x_batch, a_batch, class_idx,
             bank: SeenAttributeBank, alpha: float) -> tuple[float, dict]:
    """Weighted sum of the three losses; gradients superpose the same way."""
    v_r, g_r = loss_recon(ae, x_batch, a_batch)
    v_c, g_c = loss_cross(ae, x_batch, a_batch)
    v_k, g_k = loss_cls(ae, x_batch, class_idx, bank)
    value = combine_losses(v_r, v_c, v_k, alpha)
    grads = _zero_grads(ae)
    for name in STREAMS:
        _accumulate(grads[name], g_r[name])
        _accumulate(grads[name], g_c[name])
        _accumulate(grads[name], g_k[name], alpha)
    return value, grads


def train_two_stream(X_train, class_idx, bank: SeenAttributeBank,
                     cfg: TrainConfig) -> tuple[TwoStreamAE, list]:
    """Train on seen-class rows with local class indices into the bank.

    Per epoch: reshuffle with the seeded generator, then walk mini-batches
    of cfg.batch_size (the final partial batch included), one Adam step per
    stream network per batch. Strictly single-threaded, so the result is a
    pure function of (inputs, cfg).

    Returns (model, per-epoch mean loss trace).
    """
    cfg.validate()
    X = as_matrix("X_train", X_train)
    y = np.asarray(class_idx, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise DataError("empty training set")
    if y.shape != (n,):
        raise ConfigError("class_idx must be one index per training row")
    if y.min() < 0 or y.max() >= bank.n_classes:
        raise DataError(
            f"training labels reference class {y.max()} but the bank has "
            f"{bank.n_classes} classes")

    rng = rng_from_seed(cfg.seed)
    ae = TwoStreamAE.init(X.shape[1], bank.A_S.shape[1], cfg.dim_z,
                          cfg.hidden_v, cfg.hidden_a, rng)
    states = {name: AdamState.for_params(net.params(), cfg.lr)
              for name, net in ae.nets().items()}

    trace = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Ab = bank.A_S[y[idx]]
            value, grads = loss_all(ae, X[idx], Ab, y[idx], bank, cfg.alpha)
            for name, net in ae.nets().items():
                adam_step(net.params(), grads[name], states[name])
            total += value * idx.size
        trace.append(float(total) / n)
    return ae, trace


def train(bundle, cfg: TrainConfig) -> tuple[TwoStreamAE, list]:
    """Train on a bundle's training rows against its seen-class attributes."""
    X = bundle.X[bundle.splits.train_idx]
    labels = bundle.y[bundle.splits.train_idx]
    seen = np.asarray(sorted(bundle.splits.seen_classes), dtype=np.int64)
    missing = np.setdiff1d(np.unique(labels), seen)
    if missing.size:
        raise DataError(f"training labels outside the seen classes: {missing}")
    local = {c: i for i, c in enumerate(seen)}
    class_idx = np.array([local[c] for c in labels], dtype=np.int64)
    bank = SeenAttributeBank(bundle.A[seen])
    return train_two_stream(X, class_idx, bank, cfg)
