"""Cross-model attention: learned soft alignment between two tokenizations.

Queries come from the student's input and target embeddings; keys and values
from the teacher's embeddings and hidden states, normalized by their scalar
standard deviation. The two attention directions are separate row-stochastic
softmaxes, not transposes of each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dualspace.tensor import Tensor, concat_last_dim
from dualspace.dual_space import DskdParams

STD_FLOOR = 1e-6


def normalize_by_std(x: Tensor) -> Tensor:
    """N(x) = x / std(x), std taken over all elements, floored at 1e-6."""
    s = float(x.data.std())
    if s < STD_FLOOR:
        return x * (1.0 / STD_FLOOR)
    return x / x.std()


@dataclass
class CmaBatch:
    q: Tensor              # (n, 2D)
    k: Tensor              # (m, 2D)
    v: Tensor              # (m, d)
    a_t2s: Tensor          # (n, m)
    a_s2t: Tensor          # (m, n)
    h_t2s_aligned: Tensor  # (n, d)
    h_s2t_aligned: Tensor  # (m, D)


def build_query(e_s_in: Tensor, e_s_tgt: Tensor, params: DskdParams) -> Tensor:
    if e_s_in.shape[0] != e_s_tgt.shape[0]:
        raise ValueError(f"query inputs disagree on length: "
                         f"{e_s_in.shape} vs {e_s_tgt.shape}")
    return concat_last_dim(e_s_in, e_s_tgt) @ params.p_q + params.b_q


def build_key_value(e_t_in: Tensor, e_t_tgt: Tensor, h_t: Tensor,
                    params: DskdParams) -> tuple[Tensor, Tensor]:
    k = normalize_by_std(concat_last_dim(e_t_in, e_t_tgt))
    v = (normalize_by_std(e_t_tgt) + normalize_by_std(h_t)) @ params.p_v + params.b_v
    return k, v


def align_t2s(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """Teacher-to-student alignment: softmax(QK^T / sqrt(2D)) applied to V."""
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"query/key widths disagree: {q.shape} vs {k.shape}")
    scale = 1.0 / np.sqrt(q.shape[1])
    a = (q @ k.transpose() * scale).softmax_rows(1.0)
    return a, a @ v


def align_s2t(q: Tensor, k: Tensor, h_s2t_projected: Tensor) -> tuple[Tensor, Tensor]:
    """Student-to-teacher alignment: a fresh softmax(KQ^T / sqrt(2D)), applied
    to the projected student hidden states."""
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"query/key widths disagree: {q.shape} vs {k.shape}")
    if q.shape[0] != h_s2t_projected.shape[0]:
        raise ValueError(f"projected states disagree with query length: "
                         f"{h_s2t_projected.shape} vs {q.shape}")
    scale = 1.0 / np.sqrt(q.shape[1])
    a = (k @ q.transpose() * scale).softmax_rows(1.0)
    return a, a @ h_s2t_projected


def build_cma_batch(e_s_in: Tensor, e_s_tgt: Tensor,
                    e_t_in: Tensor, e_t_tgt: Tensor, h_t: Tensor,
                    h_s2t_projected: Tensor, params: DskdParams,
                    dump_path=None) -> CmaBatch:
    q = build_query(e_s_in, e_s_tgt, params)
    k, v = build_key_value(e_t_in, e_t_tgt, h_t, params)
    a_t2s, h_t2s = align_t2s(q, k, v)
    a_s2t, h_s2t = align_s2t(q, k, h_s2t_projected)
    if dump_path is not None:
        np.savetxt(dump_path, a_t2s.data, delimiter=",", fmt="%.10g")
    return CmaBatch(q=q, k=k, v=v, a_t2s=a_t2s, a_s2t=a_s2t,
                    h_t2s_aligned=h_t2s, h_s2t_aligned=h_s2t)
