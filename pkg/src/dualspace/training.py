"""Distillation training loop and experiment orchestration.

Five arms at toy scale: plain fine-tuning, conventional different-space KD,
KD in the student space only, the full dual-space objective, and dual-space
with cross-model attention for mismatched tokenizers.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np

from dualspace import dual_space, cross_attention
from dualspace.distances import DistanceKind, DistributionBatch, divergence
from dualspace.metrics import rouge_l
from dualspace.model import LmConfig, TinyLm, cross_entropy_loss, generate
from dualspace.tokenizer import CharTokenizer, BpeTokenizer, load_dataset

logger = logging.getLogger(__name__)

ARMS = ("sft", "vanilla_kd", "student_space", "teacher_space", "dskd", "dskd_cma")
EVAL_SEEDS = (10, 20, 30, 40, 50)
RUNLOG_HEADER = ["step", "arm", "distance", "lr", "l_total", "l_ce", "l_kd",
                 "l_ce_t2s", "l_kd_stu", "l_kd_tea", "teacher_correct_frac",
                 "grad_norm"]
BPE_MERGES = 200


@dataclass
class TrainConfig:
    arm: str = "sft"
    distance: str = "kl"
    lam: float = 0.1
    tau: float = 2.0
    epochs: int = 2
    batch_size: int = 8
    lr: float = 3e-3
    seed: int = 0
    ce_weight: float = 0.5
    kd_weight: float = 0.5
    dataset: str = "corpus.jsonl"
    out_dir: str = "runs/run"
    teacher_ckpt: str | None = None
    n_train: int = 256
    n_eval: int = 64
    max_steps: int | None = None
    warmup_frac: float = 0.1
    clip_norm: float = 1.0
    student: dict = field(default_factory=lambda: dict(
        hidden_size=64, n_layers=2, n_heads=2, max_seq_len=128))
    teacher: dict = field(default_factory=lambda: dict(
        hidden_size=128, n_layers=4, n_heads=4, max_seq_len=128))

    def __post_init__(self):
        if self.arm not in ARMS:
            raise ValueError(f"unknown arm {self.arm!r}; expected one of {ARMS}")
        if not (0.0 <= self.ce_weight <= 1.0 and 0.0 <= self.kd_weight <= 1.0):
            raise ValueError("loss weights must be in [0, 1]")
        if self.arm != "sft" and self.teacher_ckpt is None:
            raise ValueError(f"arm {self.arm!r} needs a teacher checkpoint")

    @property
    def mismatched_vocab(self) -> bool:
        return self.arm == "dskd_cma"

    def kind(self) -> DistanceKind:
        return DistanceKind.parse(self.distance, self.lam)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path) as f:
            return cls(**json.load(f))

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)


# ----------------------------------------------------------------------
class AdamOptimizer:
    """Adaptive-moment gradient descent with cosine decay and linear warmup."""

    def __init__(self, params, lr: float, total_steps: int,
                 warmup_frac: float = 0.1, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.base_lr = lr
        self.total_steps = max(total_steps, 1)
        self.warmup_steps = max(int(warmup_frac * self.total_steps), 1)
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def current_lr(self) -> float:
        t = self.t
        if t < self.warmup_steps:
            return self.base_lr * (t + 1) / self.warmup_steps
        frac = (t - self.warmup_steps) / max(self.total_steps - self.warmup_steps, 1)
        return self.base_lr * 0.5 * (1.0 + np.cos(np.pi * min(frac, 1.0)))

    def step(self):
        lr = self.current_lr()
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * p.grad
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * p.grad**2
            mh = self.m[i] / (1 - self.b1**self.t)
            vh = self.v[i] / (1 - self.b2**self.t)
            p.data -= lr * mh / (np.sqrt(vh) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def clip_global_norm(params, max_norm: float) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad**2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


# ----------------------------------------------------------------------
def build_tokenizers(corpus_path, mismatched: bool):
    """Student always char-level; teacher char-level or BPE(200 merges)."""
    lines = []
    with open(corpus_path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rec = json.loads(line)
                lines.append(f"### Instruction:\n{rec['instruction']}\n"
                             f"### Response:\n{rec['response']}")
    student_tok = CharTokenizer.from_corpus(lines)
    if mismatched:
        teacher_tok = BpeTokenizer.train(lines, BPE_MERGES)
    else:
        teacher_tok = student_tok
    return student_tok, teacher_tok


def _lm_config(overrides: dict, vocab_size: int) -> LmConfig:
    return LmConfig(vocab_size=vocab_size, **overrides)


def _prompt_len(ex) -> int:
    mask = ex.response_mask_s
    if True not in mask:
        return len(ex.student_ids) - 1
    return mask.index(True) + 1


# ----------------------------------------------------------------------
def example_losses(cfg: TrainConfig, kind: DistanceKind, student: TinyLm,
                   teacher: TinyLm | None, proj: dual_space.DskdParams | None, ex):
    """Per-example loss tensor plus scalar components for the run log."""
    s_inputs = ex.student_ids[:-1]
    s_out = student.forward(s_inputs)
    mask_s = np.asarray(ex.response_mask_s, dtype=bool)
    l_ce = cross_entropy_loss(s_out.logits, ex.student_targets, mask_s)
    parts = {"l_ce": l_ce.item()}
    if cfg.arm == "sft":
        # same ce scaling as the KD arms, so kd_weight=0 reproduces sft exactly
        return cfg.ce_weight * l_ce, parts

    t_inputs = ex.teacher_ids[:-1] if cfg.mismatched_vocab else s_inputs
    t_out = teacher.forward(t_inputs)
    mask_t = np.asarray(ex.response_mask_t if cfg.mismatched_vocab
                        else ex.response_mask_s, dtype=bool)
    q_student = DistributionBatch.from_logits(s_out.logits, cfg.tau)

    if cfg.arm == "vanilla_kd":
        p_teacher = DistributionBatch.from_logits(t_out.logits.detach(), cfg.tau)
        l_kd = divergence(kind, p_teacher, q_student, mask_s)
        parts["l_kd"] = l_kd.item()
        return cfg.ce_weight * l_ce + cfg.kd_weight * l_kd, parts

    h_t = t_out.hidden.detach()
    w_s = student.head_weight()
    if cfg.arm == "student_space":
        h_t2s = dual_space.project_t2s(h_t, proj)
        p1 = dual_space.teacher_dist_in_student_space(h_t2s, w_s, 1.0)
        p_tau = dual_space.teacher_dist_in_student_space(h_t2s, w_s, cfg.tau)
        l_ce_t2s = dual_space.loss_ce_t2s(p1, ex.student_targets, mask_s)
        l_kd_stu = dual_space.loss_kd_student_space(kind, p_tau, q_student, mask_s)
        l_kd = l_kd_stu + l_ce_t2s
        parts.update(l_ce_t2s=l_ce_t2s.item(), l_kd_stu=l_kd_stu.item(),
                     l_kd=l_kd.item())
        return cfg.ce_weight * l_ce + cfg.kd_weight * l_kd, parts

    w_t = teacher.head_weight()
    if cfg.arm == "teacher_space":
        h_s2t = dual_space.project_s2t(s_out.hidden, proj)
        q_s2t = dual_space.student_dist_in_teacher_space(h_s2t, w_t, cfg.tau)
        p_teacher = DistributionBatch.from_logits(t_out.logits.detach(), cfg.tau)
        l_kd = dual_space.loss_kd_teacher_space(p_teacher, q_s2t, mask_s)
        parts.update(l_kd_tea=l_kd.item(), l_kd=l_kd.item())
        return cfg.ce_weight * l_ce + cfg.kd_weight * l_kd, parts

    # dskd / dskd_cma
    p_teacher = DistributionBatch.from_logits(t_out.logits.detach(), cfg.tau)
    h_s2t = dual_space.project_s2t(s_out.hidden, proj)
    if cfg.arm == "dskd":
        h_t2s = dual_space.project_t2s(h_t, proj)
        q_s2t = dual_space.student_dist_in_teacher_space(h_s2t, w_t, cfg.tau)
    else:
        e_s_in = s_out.embeddings
        e_s_tgt = student.params["tok_emb"].take_rows(ex.student_targets)
        e_t_in = t_out.embeddings.detach()
        e_t_tgt = teacher.params["tok_emb"].take_rows(ex.teacher_targets).detach()
        cma = cross_attention.build_cma_batch(
            e_s_in, e_s_tgt, e_t_in, e_t_tgt, h_t, h_s2t, proj)
        h_t2s = cma.h_t2s_aligned
        q_s2t = dual_space.student_dist_in_teacher_space(cma.h_s2t_aligned, w_t, cfg.tau)
    p1 = dual_space.teacher_dist_in_student_space(h_t2s, w_s, 1.0)
    p_tau = dual_space.teacher_dist_in_student_space(h_t2s, w_s, cfg.tau)
    l_ce_t2s = dual_space.loss_ce_t2s(p1, ex.student_targets, mask_s)
    correct = dual_space.teacher_correct_mask(p1, ex.student_targets)
    n_resp = int(mask_s.sum())
    frac = float((correct & mask_s).sum() / n_resp) if n_resp else 0.0
    kd_mask = (mask_s & correct) if cfg.mismatched_vocab else mask_s
    if kd_mask.any():
        l_kd_stu = dual_space.loss_kd_student_space(kind, p_tau, q_student, kd_mask)
    else:
        l_kd_stu = dual_space.Tensor(0.0)
    l_kd_tea = dual_space.loss_kd_teacher_space(p_teacher, q_s2t, mask_t)
    l_kd = l_kd_stu + l_kd_tea + l_ce_t2s
    parts.update(l_ce_t2s=l_ce_t2s.item(), l_kd_stu=l_kd_stu.item(),
                 l_kd_tea=l_kd_tea.item(), l_kd=l_kd.item(),
                 teacher_correct_frac=frac)
    return cfg.ce_weight * l_ce + cfg.kd_weight * l_kd, parts


def eval_loss(model: TinyLm, examples) -> float:
    losses = []
    for ex in examples:
        if ex.skippable:
            continue
        out = model.forward(ex.student_ids[:-1])
        losses.append(cross_entropy_loss(
            out.logits, ex.student_targets, ex.response_mask_s).item())
    return float(np.mean(losses))


# ----------------------------------------------------------------------
def train(cfg: TrainConfig):
    """Run one training arm; writes config.json, runlog.csv, epochlog.csv,
    student.ckpt and eval.json under cfg.out_dir."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.to_json(out / "config.json")

    student_tok, teacher_tok = build_tokenizers(cfg.dataset, cfg.mismatched_vocab)
    max_len = cfg.student["max_seq_len"]
    examples = [ex for ex in load_dataset(cfg.dataset, student_tok, teacher_tok, max_len)
                if not ex.skippable]
    train_ex = examples[:cfg.n_train]
    heldout = examples[cfg.n_train:cfg.n_train + cfg.n_eval]

    student = TinyLm(_lm_config(cfg.student, len(student_tok.vocab)), seed=cfg.seed)
    kind = cfg.kind()
    teacher = None
    teacher_snapshot = None
    proj = None
    params = student.parameters()
    if cfg.arm != "sft":
        if not Path(cfg.teacher_ckpt).exists():
            raise ValueError(f"teacher checkpoint {cfg.teacher_ckpt} not found")
        teacher = TinyLm.load(cfg.teacher_ckpt)
        teacher_snapshot = {k: v.data.copy() for k, v in teacher.params.items()}
        for p in teacher.parameters():
            p.requires_grad = False
    if cfg.arm in ("student_space", "teacher_space", "dskd", "dskd_cma"):
        proj = dual_space.DskdParams.create(
            cfg.student["hidden_size"], cfg.teacher["hidden_size"], seed=cfg.seed)
        params = params + proj.parameters()

    n_batches = max(len(train_ex) // cfg.batch_size, 1)
    total_steps = cfg.epochs * n_batches
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)
    opt = AdamOptimizer(params, cfg.lr, total_steps, cfg.warmup_frac)

    rng = np.random.default_rng(cfg.seed)
    step = 0
    epoch_rows = []
    with open(out / "runlog.csv", "w", newline="") as f:
        log = csv.writer(f)
        log.writerow(RUNLOG_HEADER)
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(train_ex))
            frac_acc = []
            for bi in range(n_batches):
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    break
                batch = [train_ex[i] for i in order[bi * cfg.batch_size:(bi + 1) * cfg.batch_size]]
                opt.zero_grad()
                total = None
                sums: dict[str, float] = {}
                for ex in batch:
                    loss, parts = example_losses(cfg, kind, student, teacher, proj, ex)
                    total = loss if total is None else total + loss
                    for k, v in parts.items():
                        sums[k] = sums.get(k, 0.0) + v
                total = total * (1.0 / len(batch))
                l_total = total.item()
                if not np.isfinite(l_total):
                    raise RuntimeError(f"non-finite loss at step {step}")
                total.backward()
                gnorm = clip_global_norm(params, cfg.clip_norm)
                lr_now = opt.current_lr()
                opt.step()
                means = {k: v / len(batch) for k, v in sums.items()}
                if "teacher_correct_frac" in means:
                    frac_acc.append(means["teacher_correct_frac"])
                log.writerow([step, cfg.arm, cfg.distance, "%.10g" % lr_now,
                              "%.10g" % l_total,
                              "%.10g" % means.get("l_ce", 0.0)]
                             + ["%.10g" % means[k] if k in means else ""
                                for k in ("l_kd", "l_ce_t2s", "l_kd_stu", "l_kd_tea",
                                          "teacher_correct_frac")]
                             + ["%.10g" % gnorm])
                step += 1
            row = {"epoch": epoch, "eval_loss": eval_loss(student, heldout)}
            if frac_acc:
                row["teacher_correct_frac"] = float(np.mean(frac_acc))
            epoch_rows.append(row)

    with open(out / "epochlog.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["epoch", "eval_loss", "teacher_correct_frac"])
        w.writeheader()
        for row in epoch_rows:
            w.writerow({k: ("%.10g" % v if isinstance(v, float) else v)
                        for k, v in row.items()})

    if teacher is not None:
        for k, v in teacher.params.items():
            assert np.array_equal(v.data, teacher_snapshot[k]), \
                f"teacher parameter {k} changed during distillation"

    student.save(out / "student.ckpt")
    result = {
        "arm": cfg.arm, "distance": cfg.distance, "seed": cfg.seed,
        "final_eval_loss": epoch_rows[-1]["eval_loss"],
        "epochs": [r["eval_loss"] for r in epoch_rows],
    }
    with open(out / "eval.json", "w") as f:
        json.dump(result, f, indent=2, sort_keys=True)
    return student, result


# ----------------------------------------------------------------------
def evaluate(model: TinyLm, tokenizer, examples, seeds=EVAL_SEEDS,
             max_new: int = 16) -> dict:
    """Sampled generation scored by Rouge-L, averaged per seed."""
    if not examples:
        raise ValueError("empty evaluation set")
    per_seed = []
    for seed in seeds:
        scores = []
        for i, ex in enumerate(examples):
            prompt = ex.student_ids[:_prompt_len(ex)]
            ids = generate(model, prompt, max_new=max_new, temperature=1.0,
                           top_p=1.0, seed=seed + i, eos_id=tokenizer.vocab.eos)
            text = tokenizer.detokenize(ids[len(prompt):])
            scores.append(rouge_l(text.split(), ex.response_text.split())
                          if ex.response_text.split() else 0.0)
        per_seed.append(float(np.mean(scores)))
    return {
        "rouge_mean": float(np.mean(per_seed)),
        "rouge_std": float(np.std(per_seed)),
        "per_seed": per_seed,
        "eval_loss": eval_loss(model, examples),
    }


def compare_arms(run_dirs, out_csv=None) -> list[dict]:
    """Collect eval.json files into one deterministic comparison table."""
    rows, missing = [], []
    for d in run_dirs:
        d = Path(d)
        try:
            with open(d / "eval.json") as f:
                rows.append(json.load(f))
        except FileNotFoundError:
            missing.append(str(d))
    if missing:
        raise ValueError(f"missing runs: {', '.join(missing)}")
    rows.sort(key=lambda r: (r["arm"], r["distance"], r["seed"]))
    if out_csv is not None:
        with open(out_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["arm", "distance", "seed", "final_eval_loss"])
            for r in rows:
                w.writerow([r["arm"], r["distance"], r["seed"],
                            "%.10g" % r["final_eval_loss"]])
    return rows


def pretrain_teacher(dataset, out_path, teacher_overrides=None, mismatched=False,
                     epochs: int = 4, lr: float = 3e-3, seed: int = 0,
                     n_train: int = 256, batch_size: int = 8):
    """Train the larger model on the corpus with the plain LM objective."""
    overrides = teacher_overrides or dict(hidden_size=128, n_layers=4, n_heads=4,
                                          max_seq_len=128)
    student_tok, teacher_tok = build_tokenizers(dataset, mismatched)
    tok = teacher_tok
    examples = [ex for ex in load_dataset(dataset, student_tok, teacher_tok,
                                          overrides["max_seq_len"])
                if not ex.skippable]
    train_ex = examples[:n_train]
    model = TinyLm(_lm_config(overrides, len(tok.vocab)), seed=seed)
    n_batches = max(len(train_ex) // batch_size, 1)
    opt = AdamOptimizer(model.parameters(), lr, epochs * n_batches)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(len(train_ex))
        for bi in range(n_batches):
            batch = [train_ex[i] for i in order[bi * batch_size:(bi + 1) * batch_size]]
            opt.zero_grad()
            total = None
            for ex in batch:
                ids = ex.teacher_ids if mismatched else ex.student_ids
                mask = ex.response_mask_t if mismatched else ex.response_mask_s
                tgt = ex.teacher_targets if mismatched else ex.student_targets
                out = model.forward(ids[:-1])
                loss = cross_entropy_loss(out.logits, tgt, mask)
                total = loss if total is None else total + loss
            total = total * (1.0 / len(batch))
            total.backward()
            clip_global_norm(model.parameters(), 1.0)
            opt.step()
    model.save(out_path)
    return model
