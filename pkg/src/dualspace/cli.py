"""Command-line entry points."""

from __future__ import annotations

import json
from pathlib import Path

import click

from dualspace.distances import DistanceKind, KINDS
from dualspace.simulation import SimConfig, MODES, emit_run, run_suite
from dualspace import training, data


@click.group()
def main():
    """Dual-space distillation experiments at desk scale."""


@main.command("gen-data")
@click.option("--out", required=True, type=click.Path())
@click.option("--n", default=2000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def gen_data(out, n, seed):
    """Write the templated toy instruction/response corpus."""
    data.write_corpus(out, n, seed)
    click.echo(f"wrote {n} records to {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def train(config_path):
    """Train one arm from a JSON config."""
    cfg = training.TrainConfig.from_json(config_path)
    _, result = training.train(cfg)
    click.echo(json.dumps(result, indent=2, sort_keys=True))


@main.command("pretrain-teacher")
@click.option("--data", "dataset", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--mismatched", is_flag=True, help="Use the BPE teacher tokenizer.")
@click.option("--epochs", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
def pretrain_teacher(dataset, out, mismatched, epochs, seed):
    """Pretrain the teacher model on the corpus."""
    training.pretrain_teacher(dataset, out, mismatched=mismatched,
                              epochs=epochs, seed=seed)
    click.echo(f"teacher checkpoint written to {out}")


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--data", "dataset", required=True, type=click.Path(exists=True))
@click.option("--n-eval", default=64, show_default=True)
@click.option("--max-new", default=16, show_default=True)
def evaluate(ckpt, dataset, n_eval, max_new):
    """Rouge-L and eval loss for a student checkpoint."""
    from dualspace.model import TinyLm
    from dualspace.tokenizer import load_dataset
    student_tok, teacher_tok = training.build_tokenizers(dataset, False)
    model = TinyLm.load(ckpt)
    examples = [ex for ex in load_dataset(dataset, student_tok, teacher_tok,
                                          model.config.max_seq_len)
                if not ex.skippable][:n_eval]
    result = training.evaluate(model, student_tok, examples, max_new=max_new)
    click.echo(json.dumps(result, indent=2, sort_keys=True))


@main.command()
@click.option("--runs", required=True, type=click.Path(exists=True),
              help="Directory containing run subdirectories.")
@click.option("--out", default=None, type=click.Path())
def compare(runs, out):
    """Merge eval.json files from runs into one table."""
    dirs = sorted(p for p in Path(runs).iterdir() if (p / "eval.json").exists())
    rows = training.compare_arms(dirs, out)
    click.echo(json.dumps(rows, indent=2, sort_keys=True))


@main.command()
@click.option("--distance", type=click.Choice(KINDS), default="kl", show_default=True)
@click.option("--mode", type=click.Choice(["different", "shared", *MODES]),
              default="shared", show_default=True)
@click.option("--iters", default=1000, show_default=True)
@click.option("--lr", default=None, type=float)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--suite", is_flag=True,
              help="Run all six distances in both modes and emit a summary.")
@click.option("--repeats", default=100, show_default=True)
def simlab(distance, mode, iters, lr, seed, out, suite, repeats):
    """Head-sharing simulation experiment."""
    mode = {"different": "different_heads", "shared": "shared_head"}.get(mode, mode)
    cfg = SimConfig(distance=DistanceKind.parse(distance), iters=iters,
                    lr=lr, seed=seed, repeats=repeats)
    Path(out).mkdir(parents=True, exist_ok=True)
    if suite:
        summary = run_suite([DistanceKind.parse(k) for k in KINDS], cfg, out)
        click.echo(json.dumps(summary, indent=2, sort_keys=True))
    else:
        res = emit_run(out, cfg, mode)
        click.echo(f"final loss {res.loss_curve[-1]:.6g}" if iters else "done")


if __name__ == "__main__":
    main()
