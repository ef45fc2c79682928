"""Command-line entry points for the workbench."""
from __future__ import annotations

import dataclasses
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .config import (
    RunConfig,
    config_hash,
    config_to_dict,
    load_config,
    load_suite,
)
from .controllers import load_controller
from .controllers.vae import VaeNet
from .dagger import dagger_train
from .flightlog import load_flight_log
from .metrics import distance_before_failure, intervention_rate, mean_distance, welch_t_test
from .nn import load_checkpoint, save_checkpoint
from .render import Frame, load_frame_png, save_frame_png, append_frame_index
from .report import render_report, trajectory_overlay
from .world import generate_world, world_to_json


def _common(config_path, overrides) -> RunConfig:
    return load_config(config_path, list(overrides))


config_option = click.option("--config", "config_path", type=click.Path(exists=True),
                             default=None, help="TOML config file")
set_option = click.option("--set", "overrides", multiple=True,
                          help="dotted config override, e.g. dagger.iterations=2")


@click.group()
def main():
    """Orchard-row vision navigation workbench."""


@main.command("gen-world")
@config_option
@set_option
@click.option("--suite", default=None, help="preset suite to pick the corridor from")
@click.option("--index", default=0, show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--out", "out_path", type=click.Path(), default="world.json")
def gen_world(config_path, overrides, suite, index, seed, out_path):
    """Generate a world and write its versioned JSON document."""
    config = _common(config_path, overrides)
    params = load_suite(suite)[index].world_params if suite else config.world
    if seed is not None:
        params = dataclasses.replace(params, seed=seed)
    world = generate_world(params)
    Path(out_path).write_text(world_to_json(world))
    click.echo(f"wrote {out_path}: {len(world.trees)} trees, "
               f"{len(world.corridor_centerlines)} corridor(s)")


@main.command("collect-vae-data")
@config_option
@set_option
@click.option("--frames", "n_frames", default=None, type=int)
@click.option("--suite", default="train", show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def collect_vae_data(config_path, overrides, n_frames, suite, out_dir):
    """Oracle-piloted multi-palette sweeps; saves PNG frames + JSONL index."""
    from .experiments import collect_vae_dataset

    config = _common(config_path, overrides)
    n = n_frames or config.vae_data.frames
    images = collect_vae_dataset(config, load_suite(suite), n, config.seed)
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    index = out / "index.jsonl"
    index.unlink(missing_ok=True)
    for i, pixels in enumerate(images):
        path = out / "frames" / f"{i:06d}.png"
        frame = Frame(pixels=pixels.astype(np.float32) / 255.0, timestamp=i / 30.0)
        save_frame_png(frame, path)
        append_frame_index(index, str(path), frame, config.world.palette_id)
    click.echo(f"wrote {len(images)} frames to {out}")


@main.command("train-vae")
@config_option
@set_option
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def train_vae_cmd(config_path, overrides, data_dir, out_dir):
    """Train the VAE on a collected frame directory; writes checkpoint + curve."""
    from .controllers.vae import TrainHyper, train_vae

    config = _common(config_path, overrides)
    paths = sorted((Path(data_dir) / "frames").glob("*.png"))
    if not paths:
        raise click.ClickException(f"no PNG frames under {data_dir}/frames")
    images = np.stack([(load_frame_png(p).pixels * 255 + 0.5).astype(np.uint8)
                       for p in paths])
    hyper = TrainHyper(epochs=config.vae_data.epochs,
                       batch_size=config.vae_data.batch_size,
                       lr=config.vae_data.lr, seed=config.seed)
    start = time.perf_counter()
    net, history = train_vae(images, config.vae, hyper, aug=config.augment)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "vae.rrnn", net.params)
    (out / "history.json").write_text(json.dumps(history, default=float))
    (out / "config.json").write_text(json.dumps(config_to_dict(config), indent=2,
                                                default=float))
    click.echo(f"trained {hyper.epochs} epochs in {time.perf_counter()-start:.0f}s; "
               f"loss {history['loss'][0]:.1f} -> {history['loss'][-1]:.1f}")


def _load_encoder(config: RunConfig, encoder_dir: str) -> VaeNet:
    return VaeNet(config.vae, params=load_checkpoint(Path(encoder_dir) / "vae.rrnn"))


@main.command()
@config_option
@set_option
@click.option("--expert", type=click.Choice(["oracle", "human"]), default="oracle",
              show_default=True)
@click.option("--iterations", default=None, type=int)
@click.option("--controller", "family_name",
              type=click.Choice(["vae", "baseline1", "baseline2"]), default="vae")
@click.option("--encoder", "encoder_dir", type=click.Path(exists=True), default=None,
              help="VAE checkpoint dir (required for the vae controller)")
@click.option("--suite", default="train", show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--persist-demos", is_flag=True, default=False)
def dagger(config_path, overrides, expert, iterations, family_name, encoder_dir,
           suite, seed, out_dir, persist_demos):
    """Run intervention-based imitation learning (Algorithm-1 loop)."""
    from .controllers import save_controller
    from .experiments import make_family

    config = _common(config_path, overrides)
    if iterations is not None:
        config = dataclasses.replace(
            config, dagger=dataclasses.replace(config.dagger, iterations=iterations))
    seed = config.seed if seed is None else seed

    if expert == "human":
        from .service import run_human_dagger

        run_human_dagger(config, family_name, encoder_dir, suite, seed, out_dir)
        return

    encoder = None
    if family_name == "vae":
        if encoder_dir is None:
            raise click.ClickException("--encoder is required for the vae controller")
        encoder = _load_encoder(config, encoder_dir)
    family = make_family(family_name, config, encoder)
    result = dagger_train(family, load_suite(suite), config.stack, config.expert,
                          i_max=config.dagger.iterations, seed=seed,
                          speed_target=config.dagger.speed_target,
                          max_steps=config.dagger.max_steps,
                          workers=config.dagger.workers)
    out = Path(out_dir)
    save_controller(out / "controller", result.controller)
    records = [
        {
            "iteration_index": r.iteration_index,
            "demos_added": r.demos_added,
            "dataset_size": r.dataset_size,
            "mean_intervention_rate": r.mean_intervention_rate,
            "intervention_rates": r.intervention_rates,
            "terminations": r.terminations,
        }
        for r in result.iterations
    ]
    (out / "iterations.json").write_text(json.dumps(records, indent=2, default=float))
    (out / "config.json").write_text(json.dumps(config_to_dict(config), indent=2,
                                                default=float))
    if persist_demos:
        result.dataset.persist(out / "dataset",
                               {"config_hash": config_hash(config), "seed": seed})
    for r in records:
        click.echo(f"iteration {r['iteration_index']}: rate="
                   f"{r['mean_intervention_rate']:.3f} dataset={r['dataset_size']}")
    click.echo(f"final controller written to {out / 'controller'}")


@main.command()
@config_option
@set_option
@click.option("--suite", default="gen", show_default=True)
@click.option("--controller", "controller_dir", type=click.Path(exists=True),
              required=True)
@click.option("--flights", default=None, type=int)
@click.option("--speed", default=None, type=float)
@click.option("--seed", default=None, type=int)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def evaluate(config_path, overrides, suite, controller_dir, flights, speed, seed,
             out_dir):
    """Judge-only evaluation flights; reports mean distance before failure."""
    from .experiments import evaluate_controller
    from .flightlog import save_flight_log

    config = _common(config_path, overrides)
    controller = load_controller(Path(controller_dir))
    n = flights or config.eval.flights
    speed = speed if speed is not None else config.dagger.speed_target
    seed = config.seed if seed is None else seed
    logs = evaluate_controller(controller, load_suite(suite), config, n, speed, seed,
                               {"controller": controller.kind,
                                "config_hash": config_hash(config)})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    distances = []
    for i, log in enumerate(logs):
        save_flight_log(log, out / f"flight_{i:03d}.jsonl")
        distances.append(distance_before_failure(log))
    summary = {"controller": controller.kind, "suite": suite, "speed": speed,
               "flights": n, "mean_distance_m": float(np.mean(distances)),
               "distances_m": distances,
               "config_hash": config_hash(config)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
    render_report(out / "report",
                  distances={suite: {controller.kind: distances}},
                  trajectory_logs={f"flight0": logs[0]} if logs else None,
                  summary=summary)
    click.echo(f"{n} flights at {speed} m/s: mean distance "
               f"{summary['mean_distance_m']:.1f} m")


@main.command()
@config_option
@set_option
@click.option("--suite", default="gen", show_default=True)
@click.option("--run-dir", "run_dir", type=click.Path(exists=True), required=True,
              help="directory containing dagger/<family>/seed<k>/controller trees")
@click.option("--flights", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def compare(config_path, overrides, suite, run_dir, flights, seed, out_dir):
    """Evaluate every trained controller in a run dir over one suite."""
    from .experiments import evaluate_controller

    config = _common(config_path, overrides)
    n = flights or config.eval.flights
    seed = config.seed if seed is None else seed
    run = Path(run_dir)
    found = sorted(run.glob("dagger/*/seed*/controller"))
    if not found:
        raise click.ClickException(f"no controllers under {run_dir}")
    distances: dict = {suite: {}}
    t_samples: dict = {}
    for ctrl_dir in found:
        family = ctrl_dir.parent.parent.name
        controller = load_controller(ctrl_dir)
        logs = evaluate_controller(controller, load_suite(suite), config, n,
                                   config.dagger.speed_target, seed,
                                   {"controller": family})
        vals = [distance_before_failure(log) for log in logs]
        distances[suite].setdefault(family, []).extend(vals)
        t_samples.setdefault(family, []).append(float(np.mean(vals)))
    tests = {}
    if "vae" in t_samples:
        for other in t_samples:
            if other == "vae" or len(t_samples[other]) < 2 or len(t_samples["vae"]) < 2:
                continue
            result = welch_t_test(t_samples["vae"], t_samples[other], alpha=0.10)
            tests[f"vae_vs_{other}"] = {"t": result.t_score, "p": result.p_value,
                                        "dof": result.dof,
                                        "significant": result.significant}
    summary = {"suite": suite, "flights_per_controller": n,
               "mean_distance_m": {k: float(np.mean(v)) for k, v in distances[suite].items()},
               "welch_tests": tests}
    paths = render_report(Path(out_dir), distances=distances, summary=summary)
    click.echo(json.dumps(summary["mean_distance_m"], indent=2))
    click.echo(f"report: {len(paths)} files under {out_dir}")


@main.command()
@click.argument("log_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None)
def replay(log_path, out_dir):
    """Re-simulate a flight log; verifies bit-identical states."""
    from .experiments import replay_flight

    log = load_flight_log(log_path)
    identical, max_dev = replay_flight(log)
    if out_dir:
        trajectory_overlay(Path(out_dir), log, Path(log_path).stem)
    if identical:
        click.echo(f"bit-identical over {len(log.records)} ticks")
        sys.exit(0)
    click.echo(f"MISMATCH: max position deviation {max_dev:.3e} m")
    sys.exit(1)


@main.command()
@config_option
@set_option
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--encoder", "encoder_dir", type=click.Path(exists=True), default=None)
@click.option("--controller", "controller_dir", type=click.Path(exists=True),
              default=None)
@click.option("--expert", type=click.Choice(["oracle", "human"]), default="human",
              show_default=True)
@click.option("--suite", default="train", show_default=True)
@click.option("--time-scale", default=1.0, show_default=True,
              help="real-time factor; 0 = unlimited")
@click.option("--console-dir", type=click.Path(exists=True), default=None,
              help="serve the built pilot console from this directory at /console")
def serve(config_path, overrides, host, port, encoder_dir, controller_dir, expert,
          suite, time_scale, console_dir):
    """Start the live session service bridging the simulator to consoles."""
    import uvicorn

    from .service import SessionManager, create_app

    config = _common(config_path, overrides)
    controller = load_controller(Path(controller_dir)) if controller_dir else None
    encoder = _load_encoder(config, encoder_dir) if encoder_dir else None
    manager = SessionManager(config, suite=suite, expert_mode=expert,
                             controller=controller, encoder=encoder,
                             time_scale=time_scale)
    app = create_app(manager, console_dir=console_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
