"""Experiment orchestration: VAE data sweeps, DAgger suites, controller
comparisons, speed sweeps, failure-mode scenarios and deterministic replay.

Heavy stages write artifacts under an output directory with the config hash
recorded; a completed stage whose hash matches is loaded instead of re-run.
"""
from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from .config import (
    RunConfig,
    config_hash,
    config_to_dict,
    load_suite,
    stack_from_dict,
    world_params_from_dict,
)
from .controllers import load_controller, save_controller
from .controllers.baseline2 import Baseline2Hyper
from .controllers.policy import PolicyHyper
from .controllers.vae import TrainHyper, VaeNet, train_vae
from .dagger import (
    Baseline1Family,
    Baseline2Family,
    CorridorScenario,
    OracleExpert,
    VaeFamily,
    dagger_train,
    rollout_metadata,
    rollout_with_interventions,
    run_rollouts,
)
from .flightlog import FlightLog, load_flight_log, save_flight_log
from .nn import load_checkpoint, save_checkpoint
from .oracle import WeavingOracle
from .render import PALETTES
from .session import make_session
from .world import generate_world

FAMILY_NAMES = ("vae", "baseline1", "baseline2")


def _stage_done(stage_dir: Path, key: str) -> bool:
    marker = stage_dir / "done.json"
    return marker.exists() and json.loads(marker.read_text()).get("key") == key


def _mark_done(stage_dir: Path, key: str, extra: dict | None = None) -> None:
    doc = {"key": key}
    doc.update(extra or {})
    (stage_dir / "done.json").write_text(json.dumps(doc, indent=2, default=float))


def _partial_hash(config: RunConfig, sections: tuple[str, ...]) -> str:
    """Hash only the config sections a stage actually depends on, so tweaking
    unrelated knobs does not invalidate hours of cached artifacts."""
    import hashlib

    doc = config_to_dict(config)
    payload = {name: doc[name] for name in sections}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


ENCODER_SECTIONS = ("world", "stack", "expert", "vae", "vae_data", "augment", "seed")
DAGGER_SECTIONS = ENCODER_SECTIONS + ("policy_hyper", "baseline2",
                                      "baseline2_hyper", "dagger")
EVAL_SECTIONS = DAGGER_SECTIONS + ("eval",)


# ----------------------------------------------------------- VAE data stage

def collect_vae_dataset(config: RunConfig, scenarios, n_frames: int,
                        seed: int) -> np.ndarray:
    """Oracle-piloted sweeps across corridors and palettes; returns uint8
    frames sampled at a stride along each weaving run."""
    palettes = list(PALETTES)
    per_pass = max(1, n_frames // (len(scenarios) * 2))
    images = []
    pass_index = 0
    while len(images) < n_frames:
        scenario = scenarios[pass_index % len(scenarios)]
        palette = palettes[pass_index % len(palettes)]
        scenario = dataclasses.replace(scenario, palette_id=palette)
        world = generate_world(scenario.world_params)
        session = make_session(world, config.stack, seed + 977 * pass_index,
                               scenario.corridor_index,
                               config.dagger.speed_target, palette)
        expert = WeavingOracle(config.expert, phase=0.9 * pass_index)
        traj = rollout_with_interventions(
            None, expert, session, config.dagger.max_steps,
            corridor_id=scenario.name, iteration_index=0,
            seed=seed + 977 * pass_index)
        ticks = sorted(traj.frames)
        stride = max(1, len(ticks) // per_pass)
        for frame_id in ticks[::stride]:
            images.append(traj.frames[frame_id])
            if len(images) >= n_frames:
                break
        pass_index += 1
    return np.stack(images[:n_frames])


def train_encoder_stage(config: RunConfig, out_dir: Path, seed: int | None = None):
    """Collect frames and train the shared VAE encoder (cached)."""
    seed = config.seed if seed is None else seed
    stage = out_dir / "encoder"
    stage.mkdir(parents=True, exist_ok=True)
    key = config_hash(config) + f":encoder:{seed}"
    if _stage_done(stage, key):
        tensors = load_checkpoint(stage / "vae.rrnn")
        history = json.loads((stage / "history.json").read_text())
        info = json.loads((stage / "done.json").read_text())
        return VaeNet(config.vae, params=tensors), history, info

    scenarios = load_suite("train")
    n = config.vae_data.frames
    images = collect_vae_dataset(config, scenarios, n + max(10, n // 20), seed)
    holdout = images[:10].astype(np.float32) / 255.0
    train_images = images[10:10 + n]

    hyper = TrainHyper(epochs=config.vae_data.epochs,
                       batch_size=config.vae_data.batch_size,
                       lr=config.vae_data.lr, seed=seed)
    train_start = time.perf_counter()
    net, history = train_vae(train_images, config.vae, hyper, aug=config.augment)
    train_seconds = time.perf_counter() - train_start

    mu, _ = net.encode(holdout)
    recon = net.decode(mu)
    holdout_mse = float(np.mean((recon - holdout) ** 2))

    save_checkpoint(stage / "vae.rrnn", net.params)
    (stage / "history.json").write_text(json.dumps(history, default=float))
    info = {"holdout_mse": holdout_mse, "final_loss": history["loss"][-1],
            "train_seconds": train_seconds}
    _mark_done(stage, key, info)
    return net, history, info


# --------------------------------------------------------------- DAgger stage

def make_family(name: str, config: RunConfig, encoder: VaeNet | None):
    if name == "vae":
        return VaeFamily(encoder, config.stack.vehicle.max_yaw_rate,
                         hyper=config.policy_hyper)
    if name == "baseline1":
        return Baseline1Family(resolution=config.stack.camera.width,
                               ridge_lambda=config.dagger.ridge_lambda)
    if name == "baseline2":
        return Baseline2Family(config=config.baseline2, hyper=config.baseline2_hyper,
                               train_stride=config.dagger.baseline2_train_stride)
    raise ValueError(f"unknown controller family {name!r}")


def dagger_stage(config: RunConfig, out_dir: Path, family_name: str, seed: int,
                 encoder: VaeNet | None, suite: str = "train"):
    """One full DAgger run for one family/seed; caches controller + records."""
    stage = out_dir / "dagger" / family_name / f"seed{seed}"
    stage.mkdir(parents=True, exist_ok=True)
    key = config_hash(config) + f":dagger:{family_name}:{seed}"
    if _stage_done(stage, key):
        controller = load_controller(stage / "controller")
        iterations = json.loads((stage / "iterations.json").read_text())
        return controller, iterations

    scenarios = load_suite(suite)
    family = make_family(family_name, config, encoder)
    result = dagger_train(family, scenarios, config.stack, config.expert,
                          i_max=config.dagger.iterations, seed=seed,
                          speed_target=config.dagger.speed_target,
                          max_steps=config.dagger.max_steps,
                          workers=config.dagger.workers)
    save_controller(stage / "controller", result.controller)
    iterations = [
        {
            "iteration_index": r.iteration_index,
            "demos_added": r.demos_added,
            "dataset_size": r.dataset_size,
            "intervention_rates": r.intervention_rates,
            "mean_intervention_rate": r.mean_intervention_rate,
            "terminations": r.terminations,
            "final_train_loss": r.train_losses[-1] if r.train_losses else None,
        }
        for r in result.iterations
    ]
    (stage / "iterations.json").write_text(json.dumps(iterations, indent=2,
                                                      default=float))
    _mark_done(stage, key)
    return result.controller, iterations


# ----------------------------------------------------------- evaluation stage

def evaluate_controller(controller, scenarios, config: RunConfig, n_flights: int,
                        speed: float, seed: int, extra_meta: dict | None = None,
                        workers: int | None = None) -> list[FlightLog]:
    """Judge-only evaluation flights cycling palettes for weather variety."""
    palettes = list(PALETTES)
    jobs = []
    for k in range(n_flights):
        scenario = scenarios[k % len(scenarios)]
        scenario = dataclasses.replace(scenario,
                                       palette_id=palettes[k % len(palettes)])
        jobs.append((scenario, config.stack, config.expert, controller, 0,
                     seed * 4933 + k, speed, config.dagger.max_steps, True, False,
                     0.0, {"speed": speed, **(extra_meta or {})}))
    trajectories = run_rollouts(jobs, workers if workers is not None
                                else config.dagger.workers)
    return [t.log for t in trajectories]


def eval_stage(config: RunConfig, out_dir: Path, family_name: str, seed: int,
               controller, suite: str, speed: float, n_flights: int):
    stage = out_dir / "eval" / family_name / f"seed{seed}" / f"speed{speed:.1f}"
    stage.mkdir(parents=True, exist_ok=True)
    key = config_hash(config) + f":eval:{family_name}:{seed}:{suite}:{speed}:{n_flights}"
    if _stage_done(stage, key):
        return [load_flight_log(p) for p in sorted(stage.glob("flight_*.jsonl"))]

    scenarios = load_suite(suite)
    logs = evaluate_controller(controller, scenarios, config, n_flights, speed,
                               seed, {"controller": family_name,
                                      "config_hash": config_hash(config)})
    for i, log in enumerate(logs):
        save_flight_log(log, stage / f"flight_{i:03d}.jsonl")
    _mark_done(stage, key)
    return logs


# ----------------------------------------------------------------- replay

def replay_flight(log: FlightLog) -> tuple[bool, float]:
    """Re-simulate a logged flight from its embedded config and seeds,
    applying the logged actions; returns (bit_identical, max_position_dev)."""
    meta = log.metadata
    world = generate_world(world_params_from_dict(meta["world_params"]))
    stack = stack_from_dict(meta["stack"])
    session = make_session(world, stack, meta["session_seed"],
                           meta["corridor_index"], meta["speed_target"],
                           meta.get("palette"))
    max_dev = 0.0
    identical = True
    for record in log.records:
        session.apply_policy_tick(record.action)
        pos = tuple(session.sim.truth.position)
        att = tuple(session.sim.truth.attitude)
        if pos != tuple(record.position) or att != tuple(record.attitude):
            identical = False
        max_dev = max(max_dev, float(np.max(np.abs(
            np.asarray(pos) - np.asarray(record.position)))))
        if session.done:
            break
    return identical, max_dev


# ------------------------------------------------------ acceptance pipeline

ACCEPTANCE_SEEDS = (1, 2, 3, 4, 5)


def run_acceptance_pipeline(config: RunConfig, out_dir,
                            seeds=ACCEPTANCE_SEEDS) -> dict:
    """The paper-protocol analog at desk scale, staged and cached:

    A. shared VAE encoder on oracle-collected multi-palette frames
    B. DAgger per controller family per root seed (train suite)
    C. evaluation at the training speed on the generalization suite
    D. speed-generalization evaluations at 0.8 / 1.0 m/s
    E. failure-mode scenario runs + report bundle

    Returns a summary dict the acceptance tests assert against.
    """
    from .metrics import distance_before_failure

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    encoder, history, encoder_info = train_encoder_stage(config, out_dir)

    dagger_records: dict = {}
    controllers: dict = {}
    for family_name in FAMILY_NAMES:
        dagger_records[family_name] = {}
        controllers[family_name] = {}
        for seed in seeds:
            controller, iterations = dagger_stage(
                config, out_dir, family_name, seed,
                encoder if family_name == "vae" else None)
            dagger_records[family_name][seed] = iterations
            controllers[family_name][seed] = controller

    distances: dict = {}
    speed_distances: dict = {}
    for family_name in FAMILY_NAMES:
        distances[family_name] = {}
        speed_distances[family_name] = {}
        for seed in seeds:
            logs = eval_stage(config, out_dir, family_name, seed,
                              controllers[family_name][seed], "gen",
                              config.dagger.speed_target, config.eval.flights)
            distances[family_name][seed] = [distance_before_failure(l) for l in logs]
            speed_distances[family_name][seed] = {}
            for speed in config.eval.speeds:
                if speed == config.dagger.speed_target:
                    continue
                logs = eval_stage(config, out_dir, family_name, seed,
                                  controllers[family_name][seed], "gen", speed,
                                  config.eval.speed_flights)
                speed_distances[family_name][seed][speed] = [
                    distance_before_failure(l) for l in logs]

    failure_summary, failure_logs = failure_scenario_stage(
        config, out_dir, controllers["vae"][seeds[0]], "vae", seeds[0])

    summary = {
        "config_hash": config_hash(config),
        "seeds": list(seeds),
        "encoder": {"history": history, **encoder_info},
        "dagger": dagger_records,
        "distances_gen": distances,
        "distances_speed": speed_distances,
        "failure_scenarios": failure_summary,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2,
                                                     default=float))

    # report bundle (Fig. 8-11 analogs)
    rates_by_controller = {
        fam: {
            rec["iteration_index"]: [
                dagger_records[fam][s][i]["mean_intervention_rate"] for s in seeds]
            for i, rec in enumerate(next(iter(dagger_records[fam].values())))
            if rec["iteration_index"] > 0
        }
        for fam in FAMILY_NAMES
    }
    distance_table = {"gen": {fam: [v for s in seeds for v in distances[fam][s]]
                              for fam in FAMILY_NAMES}}
    speed_table: dict = {}
    for fam in FAMILY_NAMES:
        for speed in config.eval.speeds:
            label = f"{speed:.1f} m/s"
            speed_table.setdefault(label, {})
            if speed == config.dagger.speed_target:
                speed_table[label][fam] = [v for s in seeds for v in distances[fam][s]]
            else:
                speed_table[label][fam] = [
                    v for s in seeds for v in speed_distances[fam][s][speed]]
    render_paths = _acceptance_report(config, out_dir, rates_by_controller,
                                      distance_table, speed_table, controllers,
                                      failure_logs, summary, seeds)
    summary["report_files"] = [str(p) for p in render_paths]
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2,
                                                     default=float))
    return summary


def _acceptance_report(config, out_dir, rates_by_controller, distance_table,
                       speed_table, controllers, failure_logs, summary, seeds):
    from .flightlog import load_flight_log
    from .report import render_report

    # command-distribution panel (Fig. 10 analog): demo actions vs what each
    # trained controller predicts on a fresh expert-driven corridor
    scenario = load_suite("gen")[0]
    jobs = [(scenario, config.stack, config.expert, None, 0, 424242,
             config.dagger.speed_target, config.dagger.max_steps, False, True,
             0.0, {})]
    demo_traj = run_rollouts(jobs, 1)[0]
    demo_actions = [s.action for s in demo_traj.steps]
    frames_by_id = demo_traj.frames
    prediction_sets = {}
    from .render import Frame as RenderFrame

    for fam, by_seed in controllers.items():
        controller = by_seed[seeds[0]]
        preds = []
        prev = None
        for step in demo_traj.steps[:: max(1, len(demo_traj.steps) // 400)]:
            pixels = frames_by_id[step.frame_id].astype(np.float32) / 255.0
            frame = RenderFrame(pixels=pixels)
            preds.append(controller.act(frame, prev if prev is not None else frame,
                                        np.asarray(step.state_vec)))
            prev = frame
        prediction_sets[fam] = preds

    trajectory_logs = {}
    first_eval = sorted((out_dir / "eval" / "vae" / f"seed{seeds[0]}").rglob(
        "flight_000.jsonl"))
    if first_eval:
        trajectory_logs["vae_gen_flight0"] = load_flight_log(first_eval[0])
    for suite_name, log in failure_logs.items():
        trajectory_logs[suite_name] = log

    return render_report(
        out_dir / "report",
        rates_by_controller=rates_by_controller,
        distances=distance_table,
        speed_distances=speed_table,
        demo_actions=demo_actions,
        prediction_sets=prediction_sets,
        trajectory_logs=trajectory_logs,
        summary={k: v for k, v in summary.items() if k != "encoder"})


# ------------------------------------------------------- failure scenarios

def failure_scenario_stage(config: RunConfig, out_dir: Path, controller,
                           family_name: str, seed: int):
    """Runs the missing-trees and end-of-row preset worlds with interventions
    enabled and reports where the expert had to take over."""
    stage = out_dir / "failure" / family_name / f"seed{seed}"
    stage.mkdir(parents=True, exist_ok=True)
    summaries = {}
    logs = {}
    for suite in ("failure_missing_side", "failure_end_of_row"):
        scenario = load_suite(suite)[0]
        world = generate_world(scenario.world_params)
        session = make_session(world, config.stack, seed, scenario.corridor_index,
                               config.dagger.speed_target, scenario.palette_id)
        expert = OracleExpert(config.expert)
        traj = rollout_with_interventions(
            controller, expert, session, config.dagger.max_steps,
            corridor_id=scenario.name, iteration_index=0, seed=seed,
            metadata=rollout_metadata(scenario, config.stack, seed,
                                      config.dagger.speed_target,
                                      {"controller": family_name}))
        save_flight_log(traj.log, stage / f"{suite}.jsonl")
        expert_segments = []
        start = None
        for i, r in enumerate(traj.log.records):
            if r.source == "expert" and start is None:
                start = r.position[0]
            elif r.source != "expert" and start is not None:
                expert_segments.append((start, traj.log.records[i - 1].position[0]))
                start = None
        if start is not None:
            expert_segments.append((start, traj.log.records[-1].position[0]))
        summaries[suite] = {
            "termination": traj.termination,
            "intervention_segments_x": expert_segments,
            "intervention_rate": traj.expert_step_count / max(1, len(traj.steps)),
        }
        logs[suite] = traj.log
    (stage / "summary.json").write_text(json.dumps(summaries, indent=2, default=float))
    return summaries, logs
