"""Templated toy instruction/response corpus.

Character-level tasks (copy, reverse, last-letter, digit addition) that a
slightly bigger transformer genuinely learns better than a small one, so
distillation has a measurable teacher-student gap to transfer.
"""

from __future__ import annotations

import numpy as np

from dualspace.tokenizer import save_jsonl

LETTERS = "abcdefghij"


def _word(rng, lo: int = 3, hi: int = 6) -> str:
    n = int(rng.integers(lo, hi + 1))
    return "".join(LETTERS[i] for i in rng.integers(0, len(LETTERS), n))


def gen_corpus(n: int, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        task = int(rng.integers(0, 4))
        if task == 0:
            w = _word(rng)
            rec = {"instruction": f"copy {w}", "response": w}
        elif task == 1:
            w = _word(rng)
            rec = {"instruction": f"reverse {w}", "response": w[::-1]}
        elif task == 2:
            w = _word(rng)
            rec = {"instruction": f"last of {w}", "response": w[-1]}
        else:
            a, b = int(rng.integers(0, 5)), int(rng.integers(0, 5))
            rec = {"instruction": f"add {a} {b}", "response": str(a + b)}
        records.append(rec)
    return records


def write_corpus(path, n: int, seed: int = 0):
    save_jsonl(path, gen_corpus(n, seed))
