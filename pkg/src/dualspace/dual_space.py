"""Dual-space distillation losses.

The teacher's hidden states are projected into the student's representation
space (and vice versa) so that both distillation directions operate through a
shared prediction head. Stop-gradient placement follows the method exactly:
the student head is frozen inside the projected-teacher distribution, and the
projected-teacher distribution is frozen inside the student-space KD term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dualspace.tensor import Tensor
from dualspace.distances import DistanceKind, DistributionBatch, divergence

PROJ_INIT_STD = 0.02


@dataclass
class DskdParams:
    """Trainable projector parameters; the query/value pair is only used in
    cross-model-attention mode."""
    p_t2s: Tensor
    b_t2s: Tensor
    p_s2t: Tensor
    b_s2t: Tensor
    p_q: Tensor
    b_q: Tensor
    p_v: Tensor
    b_v: Tensor

    @classmethod
    def create(cls, d: int, big_d: int, seed: int = 0) -> "DskdParams":
        rng = np.random.default_rng(seed)

        def mat(r, c):
            return Tensor(rng.normal(0.0, PROJ_INIT_STD, (r, c)), requires_grad=True)

        def bias(c):
            return Tensor(np.zeros((1, c)), requires_grad=True)

        return cls(
            p_t2s=mat(big_d, d), b_t2s=bias(d),
            p_s2t=mat(d, big_d), b_s2t=bias(big_d),
            p_q=mat(2 * d, 2 * big_d), b_q=bias(2 * big_d),
            p_v=mat(big_d, d), b_v=bias(d),
        )

    def parameters(self) -> list[Tensor]:
        return [self.p_t2s, self.b_t2s, self.p_s2t, self.b_s2t,
                self.p_q, self.b_q, self.p_v, self.b_v]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


@dataclass
class DskdLossReport:
    l_ce_t2s: float
    l_kd_stu: float
    l_kd_tea: float
    l_dskd: float
    teacher_correct_frac: float


def project_t2s(h_t: Tensor, params: DskdParams) -> Tensor:
    """Teacher hidden states (already detached) into student dimension."""
    return h_t @ params.p_t2s + params.b_t2s


def project_s2t(h_s: Tensor, params: DskdParams) -> Tensor:
    """Student hidden states into teacher dimension; grads reach both the
    student backbone and the projector."""
    return h_s @ params.p_s2t + params.b_s2t


def teacher_dist_in_student_space(h_t2s: Tensor, w_s: Tensor, tau: float) -> DistributionBatch:
    """Projected-teacher distribution through the (frozen) student head."""
    return DistributionBatch.from_logits(h_t2s @ w_s.detach(), tau)


def student_dist_in_teacher_space(h_s2t: Tensor, w_t: Tensor, tau: float) -> DistributionBatch:
    """Projected-student distribution through the (frozen) teacher head."""
    return DistributionBatch.from_logits(h_s2t @ w_t.detach(), tau)


def _masked_mean_neg_log(dist: DistributionBatch, targets, mask) -> Tensor:
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("all positions masked out of the loss")
    logp = dist.log_probs.gather_rows(targets)
    masked = logp * Tensor(mask.astype(np.float64)[:, None])
    return -(masked.sum() / count)


def loss_ce_t2s(p_t2s: DistributionBatch, targets, mask) -> Tensor:
    """Cross-entropy training the projected teacher to hit student targets."""
    return _masked_mean_neg_log(p_t2s, targets, mask)


def detach_dist(dist: DistributionBatch) -> DistributionBatch:
    return DistributionBatch(probs=dist.probs.detach(), tau=dist.tau,
                             log_probs=dist.log_probs.detach())


def loss_kd_student_space(kind: DistanceKind, p_t2s: DistributionBatch,
                          q_student: DistributionBatch, mask) -> Tensor:
    """Student-space KD; the projected-teacher side is detached so the loss
    cannot collapse by dragging the teacher projection toward the student."""
    return divergence(kind, detach_dist(p_t2s), q_student, mask)


def loss_kd_teacher_space(p_teacher: DistributionBatch, q_s2t: DistributionBatch,
                          mask) -> Tensor:
    """Teacher-space KD; the distance here is always KL."""
    return divergence(DistanceKind("kl"), p_teacher, q_s2t, mask)


def teacher_correct_mask(p_t2s: DistributionBatch, targets) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.int64)
    return p_t2s.probs.data.argmax(axis=1) == targets


def dskd_total(kind: DistanceKind,
               p_t2s: DistributionBatch, q_student: DistributionBatch,
               p_teacher: DistributionBatch, q_s2t: DistributionBatch,
               student_targets, mask_s, mask_t,
               cma_mode: bool = False) -> tuple[Tensor, DskdLossReport]:
    """Total dual-space loss; returns the scalar tensor plus a numeric report.

    In cross-model-attention mode the student-space KD term drops positions
    where the projected teacher's argmax misses the target token.
    """
    mask_s = np.asarray(mask_s, dtype=bool)
    mask_t = np.asarray(mask_t, dtype=bool)
    correct = teacher_correct_mask(p_t2s, student_targets)
    n_resp = int(mask_s.sum())
    frac = float((correct & mask_s).sum() / n_resp) if n_resp else 0.0

    l_ce = loss_ce_t2s(p_t2s, student_targets, mask_s)
    kd_mask = (mask_s & correct) if cma_mode else mask_s
    if kd_mask.any():
        l_stu = loss_kd_student_space(kind, p_t2s, q_student, kd_mask)
    else:
        l_stu = Tensor(0.0)
    l_tea = loss_kd_teacher_space(p_teacher, q_s2t, mask_t)
    total = l_stu + l_tea + l_ce
    report = DskdLossReport(
        l_ce_t2s=l_ce.item(), l_kd_stu=l_stu.item(), l_kd_tea=l_tea.item(),
        l_dskd=total.item(), teacher_correct_frac=frac,
    )
    return total, report
