"""Command line entry points: scatter / curves / bars -> SVG."""

from __future__ import annotations

import click

from plots import figures


@click.group()
def main():
    """Render dualspace CSV artifacts into deterministic SVG figures."""


@main.command()
@click.option("--before", type=click.Path(exists=True),
              help="Point cloud before training (role,x,y).")
@click.option("--after", type=click.Path(exists=True),
              help="Point cloud after training (role,x,y).")
@click.option("--out", required=True, type=click.Path())
def scatter(before, after, out):
    """Hidden-state scatter panels; student red, teacher blue."""
    panels = []
    if before:
        panels.append(("before", before))
    if after:
        panels.append(("after", after))
    if not panels:
        raise click.UsageError("pass --before and/or --after")
    counts = figures.render_scatter(panels, out)
    for title, by_role in counts.items():
        total = sum(by_role.values())
        detail = ", ".join(f"{n} {role}" for role, n in by_role.items())
        click.echo(f"{title}: {total} points ({detail})")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--curve", "curve_specs", multiple=True, required=True,
              metavar="LABEL=PATH", help="Series to draw; repeatable.")
@click.option("--ylabel", default="loss", show_default=True)
@click.option("--out", required=True, type=click.Path())
def curves(curve_specs, ylabel, out):
    """Overlay step,loss curves from one or more run logs."""
    inputs = []
    for spec in curve_specs:
        label, sep, path = spec.partition("=")
        if not sep or not label or not path:
            raise click.UsageError(f"--curve expects LABEL=PATH, got {spec!r}")
        inputs.append((label, path))
    lengths = figures.render_curves(inputs, out, ylabel=ylabel)
    for label, n in lengths.items():
        click.echo(f"{label}: {n} points")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--table", required=True, type=click.Path(exists=True))
@click.option("--label-col", required=True)
@click.option("--value-col", "value_cols", multiple=True, required=True)
@click.option("--out", required=True, type=click.Path())
def bars(table, label_col, value_cols, out):
    """Grouped bar chart from any labeled numeric CSV."""
    info = figures.render_bars(table, label_col, list(value_cols), out)
    click.echo(f"{info['groups']} groups x {info['bars_per_group']} bars")
    click.echo(f"wrote {out}")
