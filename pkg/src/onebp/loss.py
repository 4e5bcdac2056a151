"""InfoNCE over dot-product scores and its analytic gradients.

With scores ``s_0 = u.v_pos`` and ``s_k = u.v_k`` and softmax weights
``p = softmax(s)``, the per-sample loss is ``logsumexp(s) - s_0`` and

    d/dv_pos = -(1 - p_0) u
    d/dv_k   = p_k u
    d/du     = -(1 - p_0) v_pos + sum_k p_k v_k
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ContrastiveSampleGrad:
    loss: float
    grad_user: np.ndarray
    grad_positive: np.ndarray
    grad_negatives: np.ndarray  # (N_s, d)


def _logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(x - m), axis=axis))


def infonce_loss(r_pos: float, r_negs) -> float:
    r_negs = np.atleast_1d(np.asarray(r_negs, dtype=np.float64))
    if r_negs.size == 0:
        raise ValueError("InfoNCE needs at least one negative score")
    s = np.concatenate([[float(r_pos)], r_negs])
    # logsumexp(s) >= s[0]; the clamp only absorbs rounding
    return max(float(_logsumexp(s) - s[0]), 0.0)


def infonce_grads(u, v_pos, v_negs) -> ContrastiveSampleGrad:
    u = np.asarray(u, dtype=np.float64)
    v_pos = np.asarray(v_pos, dtype=np.float64)
    v_negs = np.asarray(v_negs, dtype=np.float64)
    if v_negs.ndim == 1:
        v_negs = v_negs[None, :]
    if v_negs.shape[0] == 0:
        raise ValueError("InfoNCE needs at least one negative")
    if u.ndim != 1 or v_pos.shape != u.shape or v_negs.shape[1:] != u.shape:
        raise ValueError(
            f"dimension mismatch: u {u.shape}, v_pos {v_pos.shape}, v_negs {v_negs.shape}"
        )
    s = np.concatenate([[u @ v_pos], v_negs @ u])
    p = np.exp(s - _logsumexp(s))
    w_pos = -(1.0 - p[0])
    return ContrastiveSampleGrad(
        loss=infonce_loss(s[0], s[1:]),
        grad_user=w_pos * v_pos + p[1:] @ v_negs,
        grad_positive=w_pos * u,
        grad_negatives=np.outer(p[1:], u),
    )


def infonce_coefficients(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample losses and gradient coefficients for a batch.

    ``u`` is ``(B, d)`` and ``v`` is ``(B, 1 + N_s, d)`` with the positive in
    slot 0. Returns ``losses (B,)`` and ``coef (B, 1 + N_s)`` such that the
    gradient w.r.t. ``v[b, s]`` is ``coef[b, s] * u[b]`` and the gradient
    w.r.t. ``u[b]`` is ``sum_s coef[b, s] * v[b, s]``.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    s = np.matmul(v, u[:, :, None])[:, :, 0]
    m = s.max(axis=1, keepdims=True)
    e = np.exp(s - m)
    z = e.sum(axis=1, keepdims=True)
    coef = e / z
    losses = np.maximum(np.log(z[:, 0]) + m[:, 0] - s[:, 0], 0.0)
    coef[:, 0] -= 1.0
    return losses, coef


@dataclass
class BatchGrads:
    """Per-sample gradients for a batch, all float64."""

    losses: np.ndarray          # (B,)
    grad_user: np.ndarray       # (B, d)
    grad_positive: np.ndarray   # (B, d)
    grad_negatives: np.ndarray  # (B, N_s, d)


def infonce_batch(u: np.ndarray, v_pos: np.ndarray, v_negs: np.ndarray) -> BatchGrads:
    """Row-wise :func:`infonce_grads` for ``u (B,d)``, ``v_pos (B,d)``, ``v_negs (B,S,d)``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.concatenate([np.asarray(v_pos, dtype=np.float64)[:, None, :],
                        np.asarray(v_negs, dtype=np.float64)], axis=1)
    losses, coef = infonce_coefficients(u, v)
    return BatchGrads(
        losses=losses,
        grad_user=np.einsum("bs,bsd->bd", coef, v),
        grad_positive=coef[:, :1] * u,
        grad_negatives=coef[:, 1:, None] * u[:, None, :],
    )


def batch_loss(u: np.ndarray, v_pos: np.ndarray, v_negs: np.ndarray) -> float:
    """Summed InfoNCE over a batch."""
    return float(infonce_batch(u, v_pos, v_negs).losses.sum())
