"""Tiny pre-norm causal transformer language model.

Small enough to train on a desk in minutes, but exposes everything the
distillation losses need: input-token embeddings, last-layer hidden states,
and the prediction head that maps hidden states to vocabulary logits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from dualspace.tensor import Tensor, concat_last_dim, to_blob, from_blob

INIT_STD = 0.02
LN_EPS = 1e-5
NEG_INF = -1e9


@dataclass
class LmConfig:
    vocab_size: int
    hidden_size: int
    n_layers: int
    n_heads: int
    max_seq_len: int
    tied_head: bool = False

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.hidden_size % self.n_heads != 0:
            raise ValueError(
                f"hidden_size {self.hidden_size} not divisible by n_heads {self.n_heads}")


@dataclass
class LmOutput:
    hidden: Tensor      # (n, hidden_size) last-layer states, post final norm
    logits: Tensor      # (n, vocab_size)
    embeddings: Tensor  # (n, hidden_size) input-token embeddings


class TinyLm:
    """Causal transformer with learned positional embeddings and a linear head."""

    def __init__(self, config: LmConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        self.params: dict[str, Tensor] = {}

        def mat(name, shape):
            self.params[name] = Tensor(rng.normal(0.0, INIT_STD, shape), requires_grad=True)

        def zeros(name, shape):
            self.params[name] = Tensor(np.zeros(shape), requires_grad=True)

        mat("tok_emb", (c.vocab_size, c.hidden_size))
        mat("pos_emb", (c.max_seq_len, c.hidden_size))
        for i in range(c.n_layers):
            for nm in ("wq", "wk", "wv", "wo"):
                mat(f"l{i}.{nm}", (c.hidden_size, c.hidden_size))
            mat(f"l{i}.w1", (c.hidden_size, 4 * c.hidden_size))
            zeros(f"l{i}.b1", (1, 4 * c.hidden_size))
            mat(f"l{i}.w2", (4 * c.hidden_size, c.hidden_size))
            zeros(f"l{i}.b2", (1, c.hidden_size))
            zeros(f"l{i}.ln1.g", (1, c.hidden_size))
            self.params[f"l{i}.ln1.g"].data += 1.0
            zeros(f"l{i}.ln1.b", (1, c.hidden_size))
            zeros(f"l{i}.ln2.g", (1, c.hidden_size))
            self.params[f"l{i}.ln2.g"].data += 1.0
            zeros(f"l{i}.ln2.b", (1, c.hidden_size))
        zeros("lnf.g", (1, c.hidden_size))
        self.params["lnf.g"].data += 1.0
        zeros("lnf.b", (1, c.hidden_size))
        if not c.tied_head:
            mat("head", (c.hidden_size, c.vocab_size))

    # ------------------------------------------------------------------
    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def head_weight(self) -> Tensor:
        """The (hidden_size, vocab_size) prediction head; a live transpose view
        of the embedding matrix when the head is tied."""
        if self.config.tied_head:
            return self.params["tok_emb"].transpose()
        return self.params["head"]

    def num_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def expected_num_params(self) -> int:
        c = self.config
        h, v = c.hidden_size, c.vocab_size
        per_layer = 4 * h * h + (h * 4 * h + 4 * h) + (4 * h * h + h) + 4 * h
        total = v * h + c.max_seq_len * h + c.n_layers * per_layer + 2 * h
        if not c.tied_head:
            total += h * v
        return total

    # ------------------------------------------------------------------
    def _layer_norm(self, x: Tensor, g: Tensor, b: Tensor) -> Tensor:
        mu = x.mean_rows()
        xc = x - mu
        var = (xc * xc).mean_rows()
        return xc / (var + LN_EPS).sqrt() * g + b

    def _attention(self, x: Tensor, i: int, n: int) -> Tensor:
        c = self.config
        hd = c.hidden_size // c.n_heads
        q = x @ self.params[f"l{i}.wq"]
        k = x @ self.params[f"l{i}.wk"]
        v = x @ self.params[f"l{i}.wv"]
        mask = Tensor(np.triu(np.full((n, n), NEG_INF), k=1))
        outs = []
        for h in range(c.n_heads):
            lo, hi = h * hd, (h + 1) * hd
            qh, kh, vh = q.slice_cols(lo, hi), k.slice_cols(lo, hi), v.slice_cols(lo, hi)
            scores = qh @ kh.transpose() * (1.0 / np.sqrt(hd)) + mask
            probs = scores.softmax_rows(1.0)
            outs.append(probs @ vh)
        o = outs[0]
        for rest in outs[1:]:
            o = concat_last_dim(o, rest)
        return o @ self.params[f"l{i}.wo"]

    def forward(self, token_ids) -> LmOutput:
        c = self.config
        ids = np.asarray(token_ids, dtype=np.int64)
        n = len(ids)
        if n > c.max_seq_len:
            raise ValueError(f"sequence length {n} exceeds max_seq_len {c.max_seq_len}")
        if n == 0:
            raise ValueError("empty token sequence")
        if ids.min() < 0 or ids.max() >= c.vocab_size:
            raise ValueError(
                f"token id out of range [0, {c.vocab_size}): {ids[ids >= c.vocab_size] if ids.max() >= c.vocab_size else ids[ids < 0]}")
        emb = self.params["tok_emb"].take_rows(ids)
        pos = self.params["pos_emb"].take_rows(np.arange(n))
        x = emb + pos
        for i in range(c.n_layers):
            a = self._layer_norm(x, self.params[f"l{i}.ln1.g"], self.params[f"l{i}.ln1.b"])
            x = x + self._attention(a, i, n)
            m = self._layer_norm(x, self.params[f"l{i}.ln2.g"], self.params[f"l{i}.ln2.b"])
            x = x + (m @ self.params[f"l{i}.w1"] + self.params[f"l{i}.b1"]).relu() @ self.params[f"l{i}.w2"] + self.params[f"l{i}.b2"]
        hidden = self._layer_norm(x, self.params["lnf.g"], self.params["lnf.b"])
        logits = hidden @ self.head_weight()
        return LmOutput(hidden=hidden, logits=logits, embeddings=emb)

    # ------------------------------------------------------------------
    def save(self, path):
        with open(path, "wb") as f:
            header = json.dumps(asdict(self.config), sort_keys=True) + "\n"
            f.write(header.encode("utf-8"))
            for name in sorted(self.params):
                blob = to_blob(self.params[name])
                meta = json.dumps({"name": name, "bytes": len(blob)}) + "\n"
                f.write(meta.encode("utf-8"))
                f.write(blob)

    @classmethod
    def load(cls, path) -> "TinyLm":
        with open(path, "rb") as f:
            config = LmConfig(**json.loads(f.readline().decode("utf-8")))
            model = cls(config, seed=0)
            while True:
                line = f.readline()
                if not line:
                    break
                meta = json.loads(line.decode("utf-8"))
                blob = f.read(meta["bytes"])
                t = from_blob(blob)
                model.params[meta["name"]].data = t.data
        return model


# ----------------------------------------------------------------------
def cross_entropy_loss(logits: Tensor, targets, mask=None, reduction: str = "mean") -> Tensor:
    """Causal LM loss: -log softmax(logits)[i, targets[i]] over unmasked positions."""
    targets = np.asarray(targets, dtype=np.int64)
    n = logits.shape[0]
    if len(targets) != n:
        raise ValueError(f"{n} logit rows but {len(targets)} targets")
    if mask is None:
        mask = np.ones(n, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if len(mask) != n:
        raise ValueError(f"{n} logit rows but {len(mask)} mask entries")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("all positions masked out of the loss")
    probs = logits.softmax_rows(1.0)
    logp = probs.log().gather_rows(targets)
    masked = logp * Tensor(mask.astype(np.float64)[:, None])
    if reduction == "mean":
        return -(masked.sum() / count)
    if reduction == "sum":
        return -masked.sum()
    raise ValueError(f"unknown reduction {reduction!r}")


def generate(model: TinyLm, prompt_ids, max_new: int, temperature: float = 1.0,
             top_p: float = 1.0, seed: int = 0, greedy: bool = False,
             eos_id: int | None = None) -> list[int]:
    """Nucleus sampling; deterministic given the seed."""
    if len(prompt_ids) == 0:
        raise ValueError("prompt must be non-empty")
    if not (0.0 < top_p <= 1.0):
        raise ValueError(f"top_p must be in (0, 1], got {top_p}")
    rng = np.random.default_rng(seed)
    ids = list(prompt_ids)
    for _ in range(max_new):
        window = ids[-model.config.max_seq_len:]
        out = model.forward(window)
        row = out.logits.data[-1]
        if greedy:
            nxt = int(row.argmax())
        else:
            z = row / temperature
            z = z - z.max()
            p = np.exp(z)
            p /= p.sum()
            if top_p < 1.0:
                order = np.argsort(-p, kind="stable")
                csum = np.cumsum(p[order])
                cutoff = int(np.searchsorted(csum, top_p) + 1)
                keep = order[:cutoff]
                q = np.zeros_like(p)
                q[keep] = p[keep]
                p = q / q.sum()
            nxt = int(rng.choice(len(p), p=p))
        ids.append(nxt)
        if eos_id is not None and nxt == eos_id:
            break
    return ids
