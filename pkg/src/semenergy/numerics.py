"""Numerically stable scalar/vector kernels shared by every other module.

All arithmetic is 64-bit; the gradient checks elsewhere in the package rely
on that headroom.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

# Added to the norm product so zero vectors yield similarity 0 instead of
# dividing by zero (early-training logits can be near zero).
COSINE_EPS = 1e-12


def as_vector(values) -> np.ndarray:
    """Validate and return a nonempty, finite 1-d float64 vector."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"expected a nonempty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DimensionError("vector contains NaN or infinite entries")
    return v


def check_temperature(t: float) -> float:
    t = float(t)
    if not (t > 0.0) or not np.isfinite(t):
        raise ValueError(f"temperature must be a positive finite real, got {t}")
    return t


def logsumexp(v, t: float = 1.0) -> float:
    """log(sum_i exp(v_i / t)), computed with max subtraction.

    Finite for any finite input; never overflows for |v_i| up to 1e8.
    """
    v = as_vector(v)
    t = check_temperature(t)
    w = v / t
    m = float(np.max(w))
    return m + float(np.log(np.sum(np.exp(w - m))))


def logsumexp_rows(a: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Row-wise logsumexp of a (B, n) matrix at temperature t."""
    w = np.asarray(a, dtype=np.float64) / t
    m = np.max(w, axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(w - m), axis=1, keepdims=True)))[:, 0]


def softmax(v, t: float = 1.0) -> np.ndarray:
    """Temperature softmax: p_i = exp(v_i/t) / sum_j exp(v_j/t)."""
    v = as_vector(v)
    t = check_temperature(t)
    w = v / t
    e = np.exp(w - np.max(w))
    return e / np.sum(e)


def softmax_rows(a: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Row-wise temperature softmax of a (B, n) matrix."""
    w = np.asarray(a, dtype=np.float64) / t
    e = np.exp(w - np.max(w, axis=1, keepdims=True))
    return e / np.sum(e, axis=1, keepdims=True)


def cosine_similarity(a, b) -> float:
    """(a.b) / (|a||b| + eps), clamped to [-1, 1]; zero vectors give 0."""
    a = as_vector(a)
    b = as_vector(b)
    if a.size != b.size:
        raise DimensionError(f"dimension mismatch: {a.size} vs {b.size}")
    sim = float(np.dot(a, b)) / (float(np.linalg.norm(a)) * float(np.linalg.norm(b)) + COSINE_EPS)
    return float(np.clip(sim, -1.0, 1.0))


def cosine_similarity_rows(f: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Cosine similarity of every row of f (B, n) against every row of m (R, n).

    Returns a (B, R) matrix, clamped to [-1, 1], with the same eps guard as
    cosine_similarity.
    """
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    num = f @ m.T
    den = np.linalg.norm(f, axis=1, keepdims=True) * np.linalg.norm(m, axis=1)[None, :] + COSINE_EPS
    return np.clip(num / den, -1.0, 1.0)


def cosine_similarity_chain(f: np.ndarray, m: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Accumulate sum_j c[:,j] * d sim(f_row, m_j) / d f_row for every row.

    f is (B, n), m is (R, n), c is (B, R); returns (B, n). Rows of f that are
    exactly zero get a zero gradient (the similarity is constant 0 there).
    """
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    norm_f = np.linalg.norm(f, axis=1, keepdims=True)              # (B, 1)
    norm_m = np.linalg.norm(m, axis=1)[None, :]                    # (1, R)
    den = norm_f * norm_m + COSINE_EPS                             # (B, R)
    dots = f @ m.T                                                 # (B, R)
    grad = (c / den) @ m
    coef = np.sum(c * dots * norm_m / (den * den), axis=1, keepdims=True)
    safe = np.where(norm_f > 0.0, norm_f, 1.0)
    grad -= np.where(norm_f > 0.0, coef * f / safe, 0.0)
    return grad
