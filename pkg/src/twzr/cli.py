"""Command-line interface for assembly runs, benchmarks, and data tooling."""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import engine, formats, protocol
from .dataset import generate_samples, write_sample
from .synthesis import SynthesisConfig, TweezerTarget, synthesize_pinned
from .transport import PhysicsParams, survival_csv, survival_curve


def _load_scenario(path: str, overrides) -> engine.Scenario:
    if not os.path.exists(path):
        click.echo(json.dumps({"error": "scenario not found",
                               "path": path}), err=True)
        sys.exit(2)
    with open(path) as f:
        data = json.load(f)
    for item in overrides:
        key, _, value = item.partition("=")
        if not _:
            raise click.BadParameter(f"override {item!r} is not key=value")
        data[key] = json.loads(value)
    try:
        return engine.Scenario.from_dict(data)
    except engine.EngineError as e:
        click.echo(json.dumps({"error": str(e), "path": path}), err=True)
        sys.exit(2)


def _write_report(report: engine.RunReport, out: str | None,
                  frames: str | None, scenario: engine.Scenario):
    text = report.to_json()
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        click.echo(text)
    if frames:
        os.makedirs(frames, exist_ok=True)
        _write_frames(frames, scenario)


def _write_frames(directory: str, scenario: engine.Scenario):
    """Per-step trap-intensity images of one representative trial."""
    from .matching import exact_match
    from .trajectory import plan
    from .transport import load

    target_lat, reservoir_lat, _ = engine._prepare(scenario)
    rng_occ = load(reservoir_lat, scenario.loading_p, [scenario.seed, 0])
    atoms = reservoir_lat.positions[rng_occ]
    targets = target_lat.positions
    n = min(len(atoms), len(targets))
    assignment = exact_match(atoms, targets[:n])
    pl = plan(atoms[assignment.atom_index], targets[:n], np.zeros(n),
              np.zeros(n), scenario.base_steps, scenario.constraints())
    cfg = scenario.synthesis_config()
    for k in range(pl.n_steps + 1):
        img = engine.render_frame(pl.positions[k], cfg.slm_size,
                                  cfg.waist, cfg.oversample)
        with open(os.path.join(directory, f"step_{k:04d}.pgm"), "wb") as f:
            formats.write_pgm(f, img)


@click.group()
def main():
    """Desk-scale rearrangement simulator."""


@main.command()
@click.option("--scenario", "scenario_path", required=True)
@click.option("--out", default=None, help="RunReport JSON path (default stdout)")
@click.option("--frames", default=None, help="directory for per-step PGM frames")
@click.option("--set", "overrides", multiple=True,
              help="override scenario field, key=JSON")
def assemble(scenario_path, out, frames, overrides):
    """Run a 2D assembly scenario."""
    scn = _load_scenario(scenario_path, overrides)
    _write_report(engine.assemble(scn), out, frames, scn)


@main.command()
@click.option("--scenario", "scenario_path", required=True)
@click.option("--out", default=None)
@click.option("--frames", default=None)
@click.option("--planes", default=None,
              help="write per-layer plane verification JSON here")
@click.option("--set", "overrides", multiple=True)
def assemble3d(scenario_path, out, frames, planes, overrides):
    """Run a layered assembly scenario."""
    scn = _load_scenario(scenario_path, overrides)
    _write_report(engine.assemble_3d(scn), out, frames, scn)
    if planes:
        with open(planes, "w") as f:
            json.dump(engine.verify_3d_planes(scn), f, sort_keys=True)


@main.command()
@click.option("--sizes", required=True, help="comma-separated atom counts")
@click.option("--out", default=None, help="CSV path (default stdout)")
@click.option("--repetitions", default=3)
@click.option("--seed", default=0)
def bench(sizes, out, repetitions, seed):
    """Benchmark matching and hologram cost vs atom count."""
    size_list = [int(s) for s in sizes.split(",") if s]
    reports = engine.benchmark_scaling(size_list, repetitions=repetitions,
                                       seed=seed)
    text = engine.benchmark_csv(reports)
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--dr", default="0,0.5,1,2,3,5", help="comma-separated, waists")
@click.option("--dphi", default="0,1,2,3.14159", help="comma-separated, rad")
@click.option("--samples", default=200)
@click.option("--seed", default=0)
@click.option("--out", default=None)
def survival(dr, dphi, samples, seed, out):
    """Single-switch survival probability table."""
    cells = survival_curve([float(v) for v in dr.split(",")],
                           [float(v) for v in dphi.split(",")],
                           samples, PhysicsParams(), seed=seed)
    text = survival_csv(cells)
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--traps", default=25, help="random trap count")
@click.option("--seed", default=0)
@click.option("--slm-size", default=256)
@click.option("--oversample", default=8)
@click.option("--out", required=True, help="TWZF hologram path")
@click.option("--report", "report_path", default=None)
def synth(traps, seed, slm_size, oversample, out, report_path):
    """Synthesize a pinned hologram for a random trap scene."""
    cfg = SynthesisConfig(slm_size=slm_size, oversample=oversample, seed=seed)
    m = cfg.expanded_size
    rng = np.random.default_rng(seed)
    spacing = 4.0 * oversample
    grid = np.arange(0.25 * m, 0.75 * m, spacing)
    sites = np.array([(x, y) for y in grid for x in grid])
    picks = sites[rng.permutation(len(sites))[:traps]]
    picks = picks + rng.uniform(-0.5, 0.5, picks.shape)
    targets = [TweezerTarget(x=p[0], y=p[1],
                             phase=float(rng.uniform(-np.pi, np.pi)))
               for p in picks]
    holo, rep = synthesize_pinned(targets, cfg)
    with open(out, "wb") as f:
        formats.write_phase_grid(f, holo)
    if report_path:
        with open(report_path, "w") as f:
            f.write(rep.to_json())


@main.command()
@click.option("--count", default=10)
@click.option("--seed", default=0)
@click.option("--out", "out_dir", required=True)
@click.option("--slm-size", default=256)
@click.option("--oversample", default=8)
@click.option("--iterations", default=30)
@click.option("--min-traps", default=10)
@click.option("--max-traps", default=200)
def dataset(count, seed, out_dir, slm_size, oversample, iterations,
            min_traps, max_traps):
    """Write TWZS training samples."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = SynthesisConfig(slm_size=slm_size, oversample=oversample,
                          iterations=iterations)
    written = 0
    for i, sample in enumerate(generate_samples(
            count, seed=seed, cfg=cfg, trap_range=(min_traps, max_traps))):
        path = os.path.join(out_dir, f"sample_{i:06d}.twzs")
        with open(path, "wb") as f:
            write_sample(f, sample)
        written += 1
    click.echo(json.dumps({"written": written,
                           "skipped": generate_samples.skipped}))


@main.command("validate-backend")
@click.option("--backend", required=True,
              help="host:port, stdio:CMD, or builtin:{echo,pinned,wgs}")
@click.option("--scenes", default=50)
@click.option("--seed", default=0)
@click.option("--traps", default=100)
@click.option("--slm-size", default=256)
@click.option("--oversample", default=8)
def validate_backend(backend, scenes, seed, traps, slm_size, oversample):
    """Measure a hologram generator's accuracy over random scenes."""
    cfg = SynthesisConfig(slm_size=slm_size, oversample=oversample)
    conn = None
    if backend.startswith("builtin:"):
        name = backend[len("builtin:"):]
        gen = {"echo": lambda: protocol.make_echo_backend(slm_size),
               "pinned": lambda: protocol.make_pinned_backend(cfg),
               "wgs": lambda: protocol.make_wgs_backend(cfg)}.get(name)
        if gen is None:
            click.echo(json.dumps({"error": f"unknown builtin {name!r}"}),
                       err=True)
            sys.exit(2)
        generator = gen()
    else:
        try:
            conn = protocol.connect(backend)
        except OSError as e:
            click.echo(json.dumps({"error": str(e)}), err=True)
            sys.exit(3)
        generator = lambda tw: protocol.request_hologram(conn, tw)
    try:
        metrics = protocol.validate_generator(generator, scenes=scenes,
                                              seed=seed, cfg=cfg,
                                              traps_per_scene=traps)
    finally:
        if conn is not None:
            conn.close()
    click.echo(json.dumps(metrics, sort_keys=True))


if __name__ == "__main__":
    main()
