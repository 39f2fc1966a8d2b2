"""Command-line workflows: dataset generation, solving, inference, benchmarks.

Every command takes an explicit ``--seed`` (no silent nondeterminism),
writes its artifacts plus a ``manifest.json`` that fully resolves the run,
and exits nonzero unless everything was written.
"""

from __future__ import annotations

import datetime
import json
import pathlib
import subprocess
import sys
from dataclasses import replace

import click
import numpy as np

from . import __version__
from .datafile import DatasetReader, load_snapshot, save_snapshot
from .evaluate import EvalConfig, export_spectrum, extract_doas, run_monte_carlo
from .geometry import GridSpec, build_dictionary, make_geometry
from .network import forward
from .report import render_benchmark_figures, render_spectrum_figure
from .simulate import (DatasetConfig, SourceScene, generate_dataset,
                       simulate_snapshot, snr_to_sigma)
from .solver import SolverConfig, config_from_file, solve, trajectory_to_csv
from .weightfile import load_weights


def _build_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5,
                             cwd=pathlib.Path(__file__).parent)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return f"obdoa-{__version__}"


def _write_manifest(out_dir: pathlib.Path, command: str, config: dict,
                    seed: int, outputs: list[str], started: str):
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "seed": seed,
        "build": _build_describe(),
        "started_utc": started,
        "finished_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": sorted(pathlib.Path(p).name for p in outputs),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _parse_grid(text: str) -> GridSpec:
    parts = [float(p) for p in text.split(":")]
    if len(parts) != 3:
        raise click.BadParameter("grid must be min:max:step, e.g. -60:60:2")
    return GridSpec(parts[0], parts[1], parts[2])


def _parse_snr_set(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _solver_config(config_path, lam, alpha, max_iters, grid) -> SolverConfig:
    cfg = SolverConfig(grid=grid)
    if config_path:
        cfg = config_from_file(config_path, cfg)
    overrides = {}
    if lam is not None:
        overrides["lam"] = lam
    if alpha is not None:
        overrides["alpha"] = alpha
    if max_iters is not None:
        overrides["max_iters"] = max_iters
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


@click.group()
@click.version_option(__version__)
def main():
    """One-bit single-snapshot DOA estimation toolkit."""


@main.command("gen-dataset")
@click.option("--geometry", default="sla18", show_default=True,
              help="Preset name, ula:<N>, or comma-separated positions.")
@click.option("--grid", "grid_text", default="-60:60:2", show_default=True,
              help="Angular grid as min:max:step degrees.")
@click.option("--count", default=100_000, show_default=True, type=int)
@click.option("--sources", default=2, show_default=True, type=int)
@click.option("--snr-set", default="0,5,10,15,20,25,30", show_default=True,
              help="Comma-separated SNR levels in dB.")
@click.option("--split", default=0.9, show_default=True, type=float)
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=pathlib.Path))
def cmd_gen_dataset(geometry, grid_text, count, sources, snr_set, split, jobs,
                    seed, out_dir):
    """Generate labeled train/validation dataset files."""
    started = _now()
    geom = make_geometry(geometry)
    cfg = DatasetConfig(geometry=geom, grid=_parse_grid(grid_text),
                        n_sources=sources, snr_set_db=_parse_snr_set(snr_set),
                        count=count, split=split)
    info = generate_dataset(cfg, seed, out_dir, jobs=jobs)
    outputs = [p for p in (info["train_path"], info["val_path"]) if p]
    _write_manifest(out_dir, "gen-dataset", {
        "geometry": list(geom.positions),
        "grid": grid_text,
        "count": count,
        "sources": sources,
        "snr_set_db": list(_parse_snr_set(snr_set)),
        "split": split,
        "n_train": info["n_train"],
        "n_val": info["n_val"],
    }, seed, outputs, started)
    click.echo(f"wrote {info['n_train']} train / {info['n_val']} val records to {out_dir}")


def _input_snapshot(input_path, simulate, geometry, doas, snr, seed):
    """Resolve the snapshot source for solve/infer, enforcing flag exclusivity."""
    if simulate == (input_path is not None):
        raise click.UsageError("provide exactly one of --input or --simulate")
    if simulate:
        if seed is None:
            raise click.UsageError("--simulate requires --seed")
        geom = make_geometry(geometry)
        doa_list = tuple(float(d) for d in doas.split(","))
        rng = np.random.default_rng([seed, 0])
        re = rng.uniform(0.5, 1.0, size=len(doa_list))
        im = rng.uniform(0.5, 1.0, size=len(doa_list))
        scene = SourceScene(doas=doa_list, coeffs=tuple(re + 1j * im),
                            sigma=snr_to_sigma(snr))
        snap = simulate_snapshot(geom, scene, [seed, 1])
        return snap, geom, scene
    snap, geom = load_snapshot(input_path)
    return snap, geom, None


def _write_spectrum_outputs(est, scene, out_dir, k, with_figures):
    out_dir.mkdir(parents=True, exist_ok=True)
    est.doas = extract_doas(est, k)
    outputs = []
    csv_path = out_dir / "spectrum.csv"
    export_spectrum(est, scene, csv_path)
    outputs.append(str(csv_path))
    if with_figures:
        outputs.append(render_spectrum_figure(est, scene, out_dir / "spectrum.png"))
    return outputs


common_scene_options = [
    click.option("--input", "input_path", type=click.Path(exists=True, path_type=pathlib.Path),
                 help="Stored snapshot file."),
    click.option("--simulate", is_flag=True, help="Simulate the input snapshot."),
    click.option("--geometry", default="sla18", show_default=True),
    click.option("--grid", "grid_text", default="-60:60:2", show_default=True),
    click.option("--doas", default="-10.28,20.56", show_default=True,
                 help="True DOAs for --simulate, comma-separated degrees."),
    click.option("--snr", default=20.0, show_default=True, type=float),
    click.option("--sources", "-K", default=None, type=int,
                 help="Peaks to extract (defaults to the simulated source count)."),
    click.option("--seed", type=int, default=None),
    click.option("--figures/--no-figures", default=True, show_default=True),
    click.option("--out", "out_dir", required=True, type=click.Path(path_type=pathlib.Path)),
]


def _with_options(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn
    return wrap


@main.command("solve")
@_with_options(common_scene_options)
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="Solver key=value config file.")
@click.option("--lambda", "lam", type=float, default=None, help="Prior weight.")
@click.option("--alpha", type=float, default=None, help="Prior exponent.")
@click.option("--max-iters", type=int, default=None)
def cmd_solve(input_path, simulate, geometry, grid_text, doas, snr, sources,
              seed, figures, out_dir, config_path, lam, alpha, max_iters):
    """Run the iterative solver on a stored or simulated snapshot."""
    started = _now()
    grid = _parse_grid(grid_text)
    try:
        cfg = _solver_config(config_path, lam, alpha, max_iters, grid)
    except ValueError as exc:
        raise click.UsageError(f"invalid solver config: {exc}")
    snap, geom, scene = _input_snapshot(input_path, simulate, geometry,
                                        doas, snr, seed)
    pair = build_dictionary(geom, grid)
    k = sources or (scene.n_sources if scene else 2)
    cfg = replace(cfg, n_sources=k)
    state, est = solve(snap, pair, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _write_spectrum_outputs(est, scene, out_dir, k, figures)
    trajectory_to_csv(state, out_dir / "trajectory.csv")
    outputs.append(str(out_dir / "trajectory.csv"))
    if simulate:
        save_snapshot(out_dir / "snapshot.bin", snap, geom)
        outputs.append(str(out_dir / "snapshot.bin"))
    _write_manifest(out_dir, "solve", {
        "geometry": list(geom.positions),
        "grid": grid_text,
        "scene_doas": list(scene.doas) if scene else None,
        "snr_db": snr if simulate else None,
        "solver": {"lambda": cfg.lam, "alpha": cfg.alpha, "eta": cfg.eta,
                   "max_iters": cfg.max_iters, "tol": cfg.tol,
                   "beta_update_start": cfg.beta_update_start},
        "estimated_doas": est.doas,
        "iterations": state.iterations,
    }, seed if seed is not None else -1, outputs, started)
    click.echo(f"estimated DOAs: {', '.join(f'{d:.3f}' for d in est.doas)} deg "
               f"({state.iterations} iterations)")


@main.command("infer")
@_with_options(common_scene_options)
@click.option("--weights", "weights_path", required=True,
              type=click.Path(exists=True, path_type=pathlib.Path))
def cmd_infer(input_path, simulate, geometry, grid_text, doas, snr, sources,
              seed, figures, out_dir, weights_path):
    """Run the unrolled network on a stored or simulated snapshot."""
    started = _now()
    grid = _parse_grid(grid_text)
    bundle = load_weights(weights_path)
    snap, geom, scene = _input_snapshot(input_path, simulate, geometry,
                                        doas, snr, seed)
    pair = build_dictionary(geom, grid)
    est = forward(snap, pair, bundle)
    k = sources or (scene.n_sources if scene else 2)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _write_spectrum_outputs(est, scene, out_dir, k, figures)
    if simulate:
        save_snapshot(out_dir / "snapshot.bin", snap, geom)
        outputs.append(str(out_dir / "snapshot.bin"))
    _write_manifest(out_dir, "infer", {
        "geometry": list(geom.positions),
        "grid": grid_text,
        "weights": str(weights_path),
        "scene_doas": list(scene.doas) if scene else None,
        "snr_db": snr if simulate else None,
        "estimated_doas": est.doas,
    }, seed if seed is not None else -1, outputs, started)
    click.echo(f"estimated DOAs: {', '.join(f'{d:.3f}' for d in est.doas)} deg")


@main.command("benchmark")
@click.option("--method", type=click.Choice(["ogbrim", "unrolled"]), default="ogbrim",
              show_default=True)
@click.option("--geometry", default="sla18", show_default=True)
@click.option("--grid", "grid_text", default="-60:60:2", show_default=True)
@click.option("--doas", default="-10.28,20.56", show_default=True)
@click.option("--trials", default=1024, show_default=True, type=int)
@click.option("--snr-set", default="0,5,10,15,20,25,30", show_default=True)
@click.option("--threshold", default=0.5, show_default=True, type=float)
@click.option("--weights", "weights_path", default=None,
              type=click.Path(exists=True, path_type=pathlib.Path))
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="Solver key=value config file.")
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=pathlib.Path))
def cmd_benchmark(method, geometry, grid_text, doas, trials, snr_set, threshold,
                  weights_path, config_path, jobs, seed, figures, out_dir):
    """Monte Carlo detection-rate / RMSE benchmark over an SNR sweep."""
    started = _now()
    if method == "unrolled" and weights_path is None:
        raise click.UsageError("--method unrolled requires --weights")
    grid = _parse_grid(grid_text)
    solver_cfg = SolverConfig(grid=grid)
    if config_path:
        solver_cfg = config_from_file(config_path, solver_cfg)
    bundle = load_weights(weights_path) if weights_path else None
    cfg = EvalConfig(
        geometry=make_geometry(geometry), grid=grid,
        true_doas=tuple(float(d) for d in doas.split(",")),
        snr_grid_db=_parse_snr_set(snr_set), trials=trials,
        success_threshold_deg=threshold, method=method, seed=seed,
        solver=solver_cfg, weights=bundle, jobs=jobs)
    report = run_monte_carlo(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    report.to_csv(csv_path)
    outputs = [str(csv_path)]
    if figures:
        outputs.extend(render_benchmark_figures(report, out_dir))
    _write_manifest(out_dir, "benchmark", {
        "method": method,
        "geometry": list(cfg.geometry.positions),
        "grid": grid_text,
        "true_doas": list(cfg.true_doas),
        "trials": trials,
        "snr_set_db": list(cfg.snr_grid_db),
        "threshold_deg": threshold,
        "weights": str(weights_path) if weights_path else None,
        "jobs": jobs,
        "wall_time_s": report.wall_time_s,
    }, seed, outputs, started)
    click.echo(report.table())


@main.command("dataset-info")
@click.argument("path", type=click.Path(exists=True))
def cmd_dataset_info(path):
    """Print the header of a dataset file."""
    reader = DatasetReader(path)
    click.echo(f"records: {reader.count}  N={reader.n}  M={reader.m}  K={reader.k}")
    click.echo(f"grid: [{reader.grid.fov_min_deg}, {reader.grid.fov_max_deg}] "
               f"step {reader.grid.step_deg} deg")


if __name__ == "__main__":
    main()
