"""Evaluation metrics: Rouge-L and representation-structure distances."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

ROUGE_BETA = 1.2
PROD_FLOOR = 1e-12


def _lcs_length(a, b) -> int:
    """Iterative longest-common-subsequence DP with a rolling row."""
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference, beta: float = ROUGE_BETA) -> float:
    """LCS-based F-measure between token sequences, in [0, 1]."""
    reference = list(reference)
    candidate = list(candidate)
    if not reference:
        raise ValueError("empty reference sequence")
    if not candidate:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    prec = lcs / len(candidate)
    rec = lcs / len(reference)
    b2 = beta * beta
    return (1 + b2) * prec * rec / (rec + b2 * prec)


# ----------------------------------------------------------------------
@dataclass
class StructureMatrix:
    kind: str            # "cosine" | "prod"
    values: np.ndarray   # (n, n)


def structure_matrix(h: np.ndarray, kind: str) -> StructureMatrix:
    """Pairwise similarity of a sequence's hidden states.

    cosine: h_i.h_j / (|h_i||h_j|); prod: h_i.h_j / sum_k h_i.h_k (rows
    normalized by their own denominator, so prod rows sum to 1).
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 2:
        raise ValueError(f"need at least 2 hidden states, got shape {h.shape}")
    gram = h @ h.T
    if kind == "cosine":
        norms = np.linalg.norm(h, axis=1)
        if (norms == 0).any():
            raise ValueError("zero hidden-state row; cosine similarity undefined")
        return StructureMatrix("cosine", gram / np.outer(norms, norms))
    if kind == "prod":
        denom = gram.sum(axis=1, keepdims=True)
        small = np.abs(denom) < PROD_FLOOR
        if small.any():
            logger.warning("prod structure denominator floored on %d rows", int(small.sum()))
            denom = np.where(small, PROD_FLOOR, denom)
        return StructureMatrix("prod", gram / denom)
    raise ValueError(f"unknown structure kind {kind!r}")


def structure_distance(a: StructureMatrix, b: StructureMatrix) -> float:
    """Element-wise L1 distance between two structure matrices."""
    if a.kind != b.kind:
        raise ValueError(f"structure kinds disagree: {a.kind} vs {b.kind}")
    if a.values.shape != b.values.shape:
        raise ValueError(f"sizes disagree: {a.values.shape} vs {b.values.shape}")
    return float(np.abs(a.values - b.values).sum())


def corpus_structure_report(teacher, student, examples, sample_n: int = 1000,
                            seed: int = 0) -> dict:
    """Structure distances between two models on shared tokenizations.

    Hidden states are last-layer, response positions only, pooled over the
    sampled examples. Both models must consume the student tokenization, so
    this is a same-vocabulary diagnostic.
    """
    if teacher.config.vocab_size != student.config.vocab_size:
        raise ValueError("structure comparison needs a shared vocabulary")
    rng = np.random.default_rng(seed)
    pool = [ex for ex in examples if sum(ex.response_mask_s) >= 2]
    if not pool:
        raise ValueError("no examples with at least 2 response positions")
    if len(pool) > sample_n:
        idx = rng.choice(len(pool), size=sample_n, replace=False)
        pool = [pool[i] for i in sorted(idx)]
    # Pool response-position hidden states across the whole sample before
    # building the structure matrices: toy responses are only a handful of
    # tokens, and per-example prod matrices are dominated by near-zero row
    # sums at that size.
    h_t, h_s = [], []
    for ex in pool:
        inputs = ex.student_ids[:-1]
        mask = np.asarray(ex.response_mask_s, dtype=bool)
        h_t.append(teacher.forward(inputs).hidden.data[mask])
        h_s.append(student.forward(inputs).hidden.data[mask])
    h_t = np.concatenate(h_t)
    h_s = np.concatenate(h_s)
    return {
        "d_cosine": structure_distance(structure_matrix(h_t, "cosine"),
                                       structure_matrix(h_s, "cosine")),
        "d_prod": structure_distance(structure_matrix(h_t, "prod"),
                                     structure_matrix(h_s, "prod")),
        "n_samples": len(pool),
        "n_positions": int(len(h_t)),
    }
