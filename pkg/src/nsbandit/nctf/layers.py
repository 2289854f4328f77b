"""Forward pass of the ReLU-attention transformer used by the constructions.

Tokens are stored row-wise: ``H`` has shape (N, D).  An attention layer maps

    h_i -> h_i + (1/i) * sum_m sum_{j<=i} ReLU(<Q_m h_i, K_m h_j>) V_m h_j

(causal form) or uses all N tokens with a 1/N factor (non-causal form).  An MLP
layer maps h -> h + W2 ReLU(W1 h).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def relu(x):
    return np.maximum(x, 0.0)


@dataclass
class Head:
    """Q and K may be stored with fewer than D rows; the omitted rows are zero."""

    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray


@dataclass
class AttentionLayer:
    heads: list = field(default_factory=list)
    causal: bool = True

    def __call__(self, H: np.ndarray) -> np.ndarray:
        N = H.shape[0]
        out = H.copy()
        if self.causal:
            mask = np.tril(np.ones((N, N)))
            norm = np.arange(1, N + 1)[:, None]
        else:
            mask, norm = 1.0, N
        for h in self.heads:
            scores = relu((H @ h.Q.T) @ (H @ h.K.T).T) * mask
            out += (scores @ (H @ h.V.T)) / norm
        return out


@dataclass
class MLPLayer:
    W1: np.ndarray  # (hidden, D)
    W2: np.ndarray  # (D, hidden)

    def __call__(self, H: np.ndarray) -> np.ndarray:
        return H + relu(H @ self.W1.T) @ self.W2.T

    @property
    def hidden(self):
        return self.W1.shape[0]


@dataclass
class TransformerLayer:
    attn: AttentionLayer | None = None
    mlp: MLPLayer | None = None

    def __call__(self, H):
        if self.attn is not None:
            H = self.attn(H)
        if self.mlp is not None:
            H = self.mlp(H)
        return H


def forward(layers, H: np.ndarray) -> np.ndarray:
    for layer in layers:
        H = layer(H)
    return H


def operator_norm(M: np.ndarray, rtol: float = 1e-8, max_iter: int = 10000, block: int = 8,
                  seed: int = 0) -> float:
    """Largest singular value by block power iteration with Rayleigh-Ritz.

    Iterates on the smaller of M^T M and M M^T.  A block of vectors converges at
    rate sigma_(block+1) / sigma_1, so close top singular values (common in the
    constructions) do not stall the tolerance check."""
    M = np.asarray(M, dtype=float)
    if not M.any():
        return 0.0
    G = M.T @ M if M.shape[1] <= M.shape[0] else M @ M.T
    p = min(block, G.shape[0])
    V, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((G.shape[0], p)))
    prev = 0.0
    for _ in range(max_iter):
        V, _ = np.linalg.qr(G @ V)
        lam = float(np.linalg.eigvalsh(V.T @ G @ V)[-1])
        if abs(lam - prev) <= rtol * lam:
            break
        prev = lam
    return float(np.sqrt(max(lam, 0.0)))


def theta_norm(layers) -> float:
    """max over layers of max_m(||Q_m||, ||K_m||) + sum_m ||V_m|| + ||W1|| + ||W2||."""
    best = 0.0
    for layer in layers:
        total = 0.0
        attn = layer.attn if isinstance(layer, TransformerLayer) else (layer if isinstance(layer, AttentionLayer) else None)
        mlp = layer.mlp if isinstance(layer, TransformerLayer) else (layer if isinstance(layer, MLPLayer) else None)
        if attn is not None and attn.heads:
            total += max(max(operator_norm(h.Q), operator_norm(h.K)) for h in attn.heads)
            total += sum(operator_norm(h.V) for h in attn.heads)
        if mlp is not None:
            total += operator_norm(mlp.W1) + operator_norm(mlp.W2)
        best = max(best, total)
    return best


def policy_softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
