"""Gaussian kernel pooling over cosine similarities.

Each kernel k turns a bag of similarities into one soft-count feature

    phi_k(target, context) = sum_j exp(-(cos(target, c_j) - mu_k)^2 / (2 sigma_k^2))

The default bank has one sharp exact-match kernel at mu=1 (sigma=1e-3) and
ten soft kernels with means spread over (-1, 1) at sigma=0.1, so the pooled
vector is a differentiable histogram of the similarity distribution.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import cosine, cosine_backward
from .errors import DataError


@dataclass(frozen=True)
class KernelBank:
    means: np.ndarray  # (K,)
    sigmas: np.ndarray  # (K,) all > 0

    def __post_init__(self) -> None:
        means = np.asarray(self.means, dtype=np.float64)
        sigmas = np.asarray(self.sigmas, dtype=np.float64)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sigmas", sigmas)
        if means.ndim != 1 or means.shape != sigmas.shape:
            raise DataError("kernel means and sigmas must be 1-d arrays of equal length")
        if means.size == 0:
            raise DataError("kernel bank must contain at least one kernel")
        if not np.all(sigmas > 0.0):
            raise DataError("kernel sigmas must be strictly positive")

    @property
    def size(self) -> int:
        return int(self.means.size)


def default_bank() -> KernelBank:
    means = [1.0] + [round(-0.9 + 0.2 * i, 1) for i in range(10)]
    sigmas = [1e-3] + [0.1] * 10
    return KernelBank(means=np.array(means), sigmas=np.array(sigmas))


def gaussian_pool(cos_values: np.ndarray, bank: KernelBank) -> np.ndarray:
    """Kernel activations for an array of cosines; shape (..., K)."""
    c = np.asarray(cos_values, dtype=np.float64)
    diff = c[..., None] - bank.means
    return np.exp(-(diff * diff) / (2.0 * bank.sigmas * bank.sigmas))


def pool_grad_wrt_cos(cos_values: np.ndarray, bank: KernelBank, upstream: np.ndarray) -> np.ndarray:
    """d(upstream . phi)/d cos for each cosine, given upstream (K,) weights."""
    c = np.asarray(cos_values, dtype=np.float64)
    diff = c[..., None] - bank.means
    act = np.exp(-(diff * diff) / (2.0 * bank.sigmas * bank.sigmas))
    return (act * (-diff / (bank.sigmas * bank.sigmas))) @ np.asarray(upstream, dtype=np.float64)


def kernel_features(
    target: np.ndarray, context: Sequence[np.ndarray], bank: KernelBank
) -> np.ndarray:
    """Pooled kernel vector of the target against a context bag (zeros when empty)."""
    if len(context) == 0:
        return np.zeros(bank.size, dtype=np.float64)
    cos_vals = np.array([cosine(target, c) for c in context])
    return gaussian_pool(cos_vals, bank).sum(axis=0)


def kernel_backward(
    target: np.ndarray,
    context: Sequence[np.ndarray],
    bank: KernelBank,
    upstream: np.ndarray,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Exact gradients of ``upstream . kernel_features`` w.r.t. target and context vectors."""
    target = np.asarray(target, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (bank.size,):
        raise ValueError(f"upstream must have shape ({bank.size},), got {upstream.shape}")
    d_target = np.zeros_like(target)
    d_context: list[np.ndarray] = []
    if len(context) == 0:
        return d_target, d_context
    cos_vals = np.array([cosine(target, c) for c in context])
    d_cos = pool_grad_wrt_cos(cos_vals, bank, upstream)
    for c_vec, g in zip(context, d_cos):
        du, dv = cosine_backward(target, np.asarray(c_vec, dtype=np.float64), float(g))
        d_target += du
        d_context.append(dv)
    return d_target, d_context


def bank_to_json(bank: KernelBank) -> dict:
    return {"means": bank.means.tolist(), "sigmas": bank.sigmas.tolist()}


def bank_from_json(obj: dict) -> KernelBank:
    return KernelBank(
        means=np.asarray(obj["means"], dtype=np.float64),
        sigmas=np.asarray(obj["sigmas"], dtype=np.float64),
    )
