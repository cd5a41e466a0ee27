"""Two deliberately different toy tokenizers plus dataset ingestion.

The student side tokenizes character by character; the teacher side runs a
small BPE on top of the same character inventory, so the same text yields
sequences of different lengths and the cross-tokenizer alignment path is
genuinely exercised.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

PROMPT_TEMPLATE = "### Instruction:\n{instruction}\n### Response:\n"

BOS, EOS, PAD = "<bos>", "<eos>", "<pad>"


@dataclass
class Vocab:
    id_to_token: list[str]
    token_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def bos(self) -> int:
        return self.token_to_id[BOS]

    @property
    def eos(self) -> int:
        return self.token_to_id[EOS]

    @property
    def pad(self) -> int:
        return self.token_to_id[PAD]

    def __len__(self):
        return len(self.id_to_token)


class CharTokenizer:
    """Character-level tokenizer over a fixed inventory."""

    def __init__(self, chars):
        self.vocab = Vocab([PAD, BOS, EOS] + sorted(set(chars)))

    @classmethod
    def from_corpus(cls, lines) -> "CharTokenizer":
        chars = set()
        for line in lines:
            chars.update(line)
        return cls(chars)

    def tokenize(self, text: str) -> list[int]:
        try:
            return [self.vocab.token_to_id[ch] for ch in text]
        except KeyError as e:
            raise ValueError(f"character {e.args[0]!r} not covered by the vocabulary") from None

    def detokenize(self, ids) -> str:
        return "".join(self.vocab.id_to_token[i] for i in ids
                       if self.vocab.id_to_token[i] not in (BOS, EOS, PAD))


def train_bpe(lines, n_merges: int) -> list[tuple[str, str]]:
    """Greedy pair-frequency merging; ties broken by lexicographic pair order."""
    if n_merges < 0:
        raise ValueError(f"n_merges must be >= 0, got {n_merges}")
    lines = list(lines)
    if not lines or all(len(l) == 0 for l in lines):
        raise ValueError("empty corpus")
    seqs = [list(line) for line in lines if line]
    merges: list[tuple[str, str]] = []
    for _ in range(n_merges):
        counts: dict[tuple[str, str], int] = {}
        for seq in seqs:
            for a, b in zip(seq, seq[1:]):
                counts[(a, b)] = counts.get((a, b), 0) + 1
        if not counts:
            break
        top = max(counts.values())
        pair = min(p for p, c in counts.items() if c == top)
        merges.append(pair)
        merged = pair[0] + pair[1]
        for si, seq in enumerate(seqs):
            out = []
            i = 0
            while i < len(seq):
                if i + 1 < len(seq) and seq[i] == pair[0] and seq[i + 1] == pair[1]:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            seqs[si] = out
    return merges


class BpeTokenizer:
    """Character-base BPE; tokens are concatenations of corpus characters."""

    def __init__(self, chars, merges: list[tuple[str, str]]):
        self.merges = list(merges)
        self.rank = {pair: i for i, pair in enumerate(self.merges)}
        tokens = sorted(set(chars)) + [a + b for a, b in self.merges]
        seen = []
        for t in tokens:
            if t not in seen:
                seen.append(t)
        self.vocab = Vocab([PAD, BOS, EOS] + seen)

    @classmethod
    def train(cls, lines, n_merges: int) -> "BpeTokenizer":
        lines = list(lines)
        chars = set()
        for line in lines:
            chars.update(line)
        return cls(chars, train_bpe(lines, n_merges))

    def _apply_merges(self, seq: list[str]) -> list[str]:
        while len(seq) > 1:
            best_rank, best_i = None, None
            for i, pair in enumerate(zip(seq, seq[1:])):
                r = self.rank.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank, best_i = r, i
            if best_i is None:
                break
            seq = seq[:best_i] + [seq[best_i] + seq[best_i + 1]] + seq[best_i + 2:]
        return seq

    def tokenize(self, text: str) -> list[int]:
        if not text:
            return []
        for ch in text:
            if ch not in self.vocab.token_to_id:
                raise ValueError(f"character {ch!r} not covered by the vocabulary")
        pieces = self._apply_merges(list(text))
        return [self.vocab.token_to_id[p] for p in pieces]

    def detokenize(self, ids) -> str:
        return "".join(self.vocab.id_to_token[i] for i in ids
                       if self.vocab.id_to_token[i] not in (BOS, EOS, PAD))


# ----------------------------------------------------------------------
@dataclass
class DualTokenizedExample:
    prompt_text: str
    response_text: str
    student_ids: list[int]        # n inputs + final target (length n+1)
    teacher_ids: list[int]        # m inputs + final target (length m+1)
    student_targets: list[int]    # student_ids shifted by one (length n)
    teacher_targets: list[int]    # teacher_ids shifted by one (length m)
    response_mask_s: list[bool]
    response_mask_t: list[bool]
    skippable: bool = False

    @property
    def n(self) -> int:
        return len(self.student_ids) - 1

    @property
    def m(self) -> int:
        return len(self.teacher_ids) - 1


def _encode_side(tok, prompt: str, response: str, max_seq_len: int):
    # Prompt and response are tokenized separately so the response boundary
    # always falls on a token boundary, even when BPE merges exist.
    p_ids = tok.tokenize(prompt)
    r_ids = tok.tokenize(response)
    ids = [tok.vocab.bos] + p_ids + r_ids + [tok.vocab.eos]
    if len(ids) > max_seq_len + 1:
        logger.warning("example truncated from %d to %d tokens", len(ids), max_seq_len + 1)
        ids = ids[:max_seq_len + 1]
    targets = ids[1:]
    boundary = 1 + len(p_ids)  # first response position in the input sequence
    mask = [bool(response) and (i + 1 >= boundary) for i in range(len(targets))]
    return ids, targets, mask


def make_example(instruction: str, response: str, student_tok, teacher_tok,
                 max_seq_len: int) -> DualTokenizedExample:
    prompt = PROMPT_TEMPLATE.format(instruction=instruction)
    s_ids, s_tgt, s_mask = _encode_side(student_tok, prompt, response, max_seq_len)
    t_ids, t_tgt, t_mask = _encode_side(teacher_tok, prompt, response, max_seq_len)
    return DualTokenizedExample(
        prompt_text=prompt, response_text=response,
        student_ids=s_ids, teacher_ids=t_ids,
        student_targets=s_tgt, teacher_targets=t_tgt,
        response_mask_s=s_mask, response_mask_t=t_mask,
        skippable=not response,
    )


def load_dataset(path, student_tok, teacher_tok, max_seq_len: int) -> list[DualTokenizedExample]:
    """Read line-delimited JSON with "instruction" and "response" fields."""
    examples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                instruction, response = rec["instruction"], rec["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ValueError(f"{path}: malformed record on line {lineno}: {e}") from None
            examples.append(make_example(instruction, response, student_tok,
                                         teacher_tok, max_seq_len))
    return examples


def save_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
