"""Dense neural-net substrate: 2-layer MLPs with hand-derived gradients,
an Adam optimizer, and pairwise distance kernels.

Conventions used throughout the package:
    - matrices are 2-D float64 ndarrays, row-major, one sample per row
    - vectors (biases, labels) are 1-D ndarrays
    - every public operation leaves only finite values behind
    - randomness always flows through a generator built by ``rng_from_seed``,
      so any computation is a pure function of (inputs, seed)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError


def rng_from_seed(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64): identical seed, identical stream."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def check_finite(name: str, arr) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")


def as_matrix(name: str, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ConfigError(f"{name} must be 2-D, got shape {X.shape}")
    return X


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Glorot/Xavier uniform: entries drawn from +-sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ConfigError(f"glorot_init needs positive dims, got {rows}x{cols}")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class Mlp2:
    """Two linear layers with a ReLU after the first, identity after the second.

        Y = relu(X @ W1 + b1) @ W2 + b2

    Shapes: W1 (in, hidden), b1 (hidden,), W2 (hidden, out), b2 (out,).
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, dim_in: int, dim_hidden: int, dim_out: int,
             rng: np.random.Generator) -> "Mlp2":
        """Glorot-uniform weights, zero biases."""
        return cls(
            W1=glorot_init(dim_in, dim_hidden, rng),
            b1=np.zeros(dim_hidden),
            W2=glorot_init(dim_hidden, dim_out, rng),
            b2=np.zeros(dim_out),
        )

    @property
    def dim_in(self) -> int:
        return self.W1.shape[0]

    @property
    def dim_hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def dim_out(self) -> int:
        return self.W2.shape[1]

    def params(self) -> dict:
        """Live references to the parameter arrays (updated in place)."""
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def validate(self) -> None:
        if self.W1.shape[1] != self.b1.shape[0]:
            raise ConfigError("W1/b1 hidden widths disagree")
        if self.W1.shape[1] != self.W2.shape[0]:
            raise ConfigError("W1/W2 hidden widths disagree")
        if self.W2.shape[1] != self.b2.shape[0]:
            raise ConfigError("W2/b2 output widths disagree")


@dataclass
class Mlp2Cache:
    """Forward-pass activations retained for the backward pass."""

    X: np.ndarray      # layer-1 input
    H: np.ndarray      # layer-1 pre-activations


def mlp2_forward(net: Mlp2, X) -> tuple[np.ndarray, Mlp2Cache]:
    """Forward pass. Returns (output, cache for mlp2_backward)."""
    X = as_matrix("mlp2 input", X)
    if X.shape[1] != net.dim_in:
        raise ConfigError(
            f"mlp2 input width {X.shape[1]} != expected {net.dim_in}")
    H = X @ net.W1 + net.b1
    Y = np.maximum(H, 0.0) @ net.W2 + net.b2
    check_finite("mlp2 output", Y)
    return Y, Mlp2Cache(X=X, H=H)


def mlp2_backward(net: Mlp2, cache: Mlp2Cache, dY) -> tuple[dict, np.ndarray]:
    """Backward pass for the scalar loss whose output-gradient is dY.

    Returns ({"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}, dX).
    The ReLU subgradient at exactly 0 is taken as 0, so the backward pass
    zeroes precisely the coordinates whose pre-activation was <= 0.
    """
    if cache is None:
        raise ConfigError("mlp2_backward needs the cache from mlp2_forward")
    dY = as_matrix("mlp2 output gradient", dY)
    if dY.shape != (cache.X.shape[0], net.dim_out):
        raise ConfigError(
            f"dY shape {dY.shape} != expected {(cache.X.shape[0], net.dim_out)}")
    A = np.maximum(cache.H, 0.0)
    dW2 = A.T @ dY
    db2 = dY.sum(axis=0)
    dH = np.where(cache.H > 0.0, dY @ net.W2.T, 0.0)
    dW1 = cache.X.T @ dH
    db1 = dH.sum(axis=0)
    dX = dH @ net.W1.T
    return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}, dX


@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators plus step count.

    The update is the standard bias-corrected form:
        m <- b1 m + (1-b1) g          mhat = m / (1 - b1^t)
        v <- b2 v + (1-b2) g^2        vhat = v / (1 - b2^t)
        p <- p - lr * mhat / (sqrt(vhat) + eps)
    """

    lr: float
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict, lr: float) -> "AdamState":
        return cls(
            lr=lr,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One Adam update, applied to the parameter arrays in place."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape mismatch for {name}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def pairwise_l2(A, B) -> np.ndarray:
    """Entry (i, j) = euclidean distance between row i of A and row j of B.

    Computed per pair from the actual difference vector (never the expanded
    a^2 + b^2 - 2ab form), so equal rows give exactly 0.
    """
    A = as_matrix("pairwise_l2 A", A)
    B = as_matrix("pairwise_l2 B", B)
    if A.shape[1] != B.shape[1]:
        raise ConfigError(
            f"pairwise_l2 column mismatch: {A.shape[1]} vs {B.shape[1]}")
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        d = B - A[i]
        out[i] = np.sqrt(np.einsum("ij,ij->i", d, d))
    check_finite("pairwise_l2", out)
    return out


def pairwise_l1(A, B) -> np.ndarray:
    """Entry (i, j) = l1 (cityblock) distance between row i of A and row j of B."""
    A = as_matrix("pairwise_l1 A", A)
    B = as_matrix("pairwise_l1 B", B)
    if A.shape[1] != B.shape[1]:
        raise ConfigError(
            f"pairwise_l1 column mismatch: {A.shape[1]} vs {B.shape[1]}")
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        out[i] = np.abs(B - A[i]).sum(axis=1)
    check_finite("pairwise_l1", out)
    return out
