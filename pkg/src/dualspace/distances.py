"""Distance functions between token-level distributions.

All six kinds (KL, RKL, JS, SKL, SRKL, AKL) are computed per token position
over tempered distributions and averaged over unmasked positions. Gradients
flow into whichever side carries ``requires_grad``; distillation callers
detach the teacher side themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dualspace.tensor import Tensor

KINDS = ("kl", "rkl", "js", "skl", "srkl", "akl")
DEFAULT_LAMBDA = 0.1
AKL_EPS = 1e-12


@dataclass(frozen=True)
class DistanceKind:
    kind: str
    lam: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distance kind {self.kind!r}; expected one of {KINDS}")
        skewed = self.kind in ("skl", "srkl")
        if skewed and self.lam is None:
            object.__setattr__(self, "lam", DEFAULT_LAMBDA)
        if not skewed and self.lam is not None:
            raise ValueError(f"lambda only applies to skl/srkl, not {self.kind}")
        if skewed and not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")

    @classmethod
    def parse(cls, s: str, lam: float = DEFAULT_LAMBDA) -> "DistanceKind":
        s = s.lower()
        return cls(s, lam if s in ("skl", "srkl") else None)

    def __str__(self):
        return self.kind


@dataclass
class DistributionBatch:
    """Row-stochastic (positions x vocab) distribution with its temperature."""
    probs: Tensor
    tau: float
    log_probs: Tensor = None

    def __post_init__(self):
        if self.log_probs is None:
            self.log_probs = self.probs.log()

    @classmethod
    def from_logits(cls, logits: Tensor, tau: float) -> "DistributionBatch":
        return cls(probs=logits.softmax_rows(tau), tau=tau)

    @property
    def shape(self):
        return self.probs.shape


def _kl_rows(p: Tensor, logp: Tensor, logq: Tensor) -> Tensor:
    return (p * (logp - logq)).sum_rows()


def divergence_rows(kind: DistanceKind, p: DistributionBatch, q: DistributionBatch) -> Tensor:
    """Per-position divergence as an (n, 1) column tensor."""
    if p.shape != q.shape:
        raise ValueError(f"distribution shapes disagree: {p.shape} vs {q.shape}")
    if p.tau != q.tau:
        raise ValueError(f"temperatures disagree: {p.tau} vs {q.tau}")
    k = kind.kind
    if k == "kl":
        return _kl_rows(p.probs, p.log_probs, q.log_probs)
    if k == "rkl":
        return _kl_rows(q.probs, q.log_probs, p.log_probs)
    if k == "js":
        m = (p.probs + q.probs) * 0.5
        logm = m.log()
        return (_kl_rows(p.probs, p.log_probs, logm)
                + _kl_rows(q.probs, q.log_probs, logm)) * 0.5
    if k == "skl":
        mix = p.probs * kind.lam + q.probs * (1.0 - kind.lam)
        return _kl_rows(p.probs, p.log_probs, mix.log())
    if k == "srkl":
        mix = q.probs * kind.lam + p.probs * (1.0 - kind.lam)
        return _kl_rows(q.probs, q.log_probs, mix.log())
    if k == "akl":
        head = (p.probs - q.probs).relu().sum_rows()
        tail = (q.probs - p.probs).relu().sum_rows()
        w = head / (head + tail + AKL_EPS)
        kl = _kl_rows(p.probs, p.log_probs, q.log_probs)
        rkl = _kl_rows(q.probs, q.log_probs, p.log_probs)
        return w * kl + (1.0 - w) * rkl
    raise AssertionError(k)


def divergence(kind: DistanceKind, p: DistributionBatch, q: DistributionBatch,
               mask=None) -> Tensor:
    """Mean over unmasked positions of the per-position divergence."""
    n = p.shape[0]
    if mask is None:
        mask = np.ones(n, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if len(mask) != n:
        raise ValueError(f"{n} positions but {len(mask)} mask entries")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("all positions masked out of the divergence")
    rows = divergence_rows(kind, p, q)
    masked = rows * Tensor(mask.astype(np.float64)[:, None])
    return masked.sum() / count
