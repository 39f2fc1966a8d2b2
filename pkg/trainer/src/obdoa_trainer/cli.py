"""Training workflows: two stages, weight export, and parity dumps."""

from __future__ import annotations

import click

from .train import (build_model, export_weights, load_checkpoint, parity_dump,
                    save_checkpoint, train_stage)


def _parse_grid(text: str):
    parts = [float(p) for p in text.split(":")]
    if len(parts) != 3:
        raise click.BadParameter("grid must be min:max:step, e.g. -60:60:2")
    return tuple(parts)


@click.group()
def main():
    """Train the unrolled one-bit DOA network."""


@main.command("train-stage1")
@click.option("--dataset", "train_path", required=True,
              type=click.Path(exists=True))
@click.option("--val", "val_path", required=True, type=click.Path(exists=True))
@click.option("--geometry", default="sla18", show_default=True)
@click.option("--grid", "grid_text", default="-60:60:2", show_default=True)
@click.option("--k1", default=4, show_default=True, type=int)
@click.option("--k2", default=2, show_default=True, type=int)
@click.option("--epochs", default=100, show_default=True, type=int)
@click.option("--batch-size", default=64, show_default=True, type=int)
@click.option("--lr", default=1e-3, show_default=True, type=float)
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_stage1(train_path, val_path, geometry, grid_text, k1, k2, epochs,
               batch_size, lr, seed, out_path):
    """Train the spectrum-refinement block from scratch."""
    model = build_model(geometry, _parse_grid(grid_text), k1, k2, seed)
    history, (before, after) = train_stage(
        model, 1, train_path, val_path, epochs, batch_size, lr, seed=seed,
        log=click.echo)
    if before != after:
        raise click.ClickException("frozen block changed during stage 1")
    save_checkpoint(model, geometry, out_path, {"stage1": history})
    click.echo(f"checkpoint written to {out_path}")


@main.command("train-stage2")
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(exists=True))
@click.option("--dataset", "train_path", required=True,
              type=click.Path(exists=True))
@click.option("--val", "val_path", required=True, type=click.Path(exists=True))
@click.option("--epochs", default=100, show_default=True, type=int)
@click.option("--batch-size", default=64, show_default=True, type=int)
@click.option("--lr", default=1e-3, show_default=True, type=float)
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_stage2(ckpt_path, train_path, val_path, epochs, batch_size, lr, seed,
               out_path):
    """Train the gap phases and head with the first block frozen."""
    model, payload = load_checkpoint(ckpt_path)
    history, (before, after) = train_stage(
        model, 2, train_path, val_path, epochs, batch_size, lr, seed=seed,
        log=click.echo)
    if before != after:
        raise click.ClickException("frozen block changed during stage 2")
    merged = dict(payload.get("history", {}))
    merged["stage2"] = history
    save_checkpoint(model, payload["geometry"], out_path, merged)
    click.echo(f"checkpoint written to {out_path}")


@main.command("export")
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_export(ckpt_path, out_path):
    """Write the weight container and architecture sidecar."""
    model, _ = load_checkpoint(ckpt_path)
    export_weights(model, out_path)
    click.echo(f"weights written to {out_path}")


@main.command("parity-dump")
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True))
@click.option("--count", default=100, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_parity(ckpt_path, dataset_path, count, out_path):
    """Dump inference-mode reference outputs for cross-checking."""
    model, _ = load_checkpoint(ckpt_path)
    written = parity_dump(model, dataset_path, out_path, count)
    click.echo(f"{written} reference rows written to {out_path}")


if __name__ == "__main__":
    main()
