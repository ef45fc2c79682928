"""Intervention-based imitation learning: rollouts with expert takeovers,
expert-only data aggregation, and the iterative retraining loop.

Iteration 0 collects pure-expert demonstrations; later iterations roll out
the latest policy, let the expert latch in when the safety envelope is
violated, append only the expert-controlled steps, and retrain from scratch
on the accumulated dataset.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controllers import (
    Baseline1Controller,
    Baseline2Controller,
    VaeController,
    baseline1_features,
    baseline1_fit,
    train_baseline2,
    train_policy,
)
from .controllers.baseline2 import Baseline2Config, Baseline2Hyper
from .controllers.policy import PolicyConfig, PolicyHyper, drone_state_vec
from .controllers.vae import VaeNet, encode_frames
from .flightlog import FlightLog, LogRecord
from .oracle import ExpertConfig, OracleExpert, WeavingOracle, oracle_should_intervene
from .render import Frame, save_frame_png, load_frame_png
from .session import SimStackConfig, make_session
from .world import OrchardParams, generate_world

SOURCE_AGENT = "agent"
SOURCE_EXPERT = "expert"


@dataclass(frozen=True)
class CorridorScenario:
    name: str
    world_params: OrchardParams
    corridor_index: int = 0
    palette_id: str | None = None


@dataclass(frozen=True)
class Demonstration:
    demo_id: int
    frame_id: str
    prev_frame_id: str | None
    state_vec: tuple
    action: float
    source: str
    timestamp: float
    corridor_id: str
    iteration_index: int


@dataclass
class RolloutStep:
    tick: int
    source: str
    action: float
    agent_action: float | None
    state_vec: np.ndarray
    frame_id: str
    prev_frame_id: str | None
    forced_takeover: bool = False


@dataclass
class RolloutTrajectory:
    corridor_id: str
    iteration_index: int
    seed: int
    steps: list[RolloutStep]
    frames: dict  # frame_id -> uint8 (H, W, 3); expert steps + their prev
    log: FlightLog
    termination: str

    @property
    def expert_step_count(self) -> int:
        return sum(1 for s in self.steps if s.source == SOURCE_EXPERT)


class DemoDataset:
    """Append-only expert demonstration store with a frame bank.

    Only source="expert" records may enter; per-iteration counts accumulate
    monotonically; latents are cached per frame id since the encoder stays
    frozen across retraining rounds.
    """

    def __init__(self):
        self.demos: list[Demonstration] = []
        self.frames: dict[str, np.ndarray] = {}
        self.per_iteration: dict[int, int] = {}
        self._latent_cache: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.demos)

    def append(self, demo: Demonstration, frame_u8: np.ndarray,
               prev_frame_u8: np.ndarray | None) -> None:
        if demo.source != SOURCE_EXPERT:
            raise ValueError("dataset accepts only expert-sourced demonstrations")
        self.demos.append(demo)
        self.frames.setdefault(demo.frame_id, frame_u8)
        if demo.prev_frame_id is not None and prev_frame_u8 is not None:
            self.frames.setdefault(demo.prev_frame_id, prev_frame_u8)
        self.per_iteration[demo.iteration_index] = \
            self.per_iteration.get(demo.iteration_index, 0) + 1

    def canonical(self) -> list[Demonstration]:
        return sorted(self.demos, key=lambda d: d.demo_id)

    def audit(self) -> None:
        if any(d.source != SOURCE_EXPERT for d in self.demos):
            raise AssertionError("agent-sourced record found in dataset")
        if sum(self.per_iteration.values()) != len(self.demos):
            raise AssertionError("iteration ledger does not sum to dataset size")

    # ------------------------------------------------------ training views

    def stacked_frames(self, demos=None) -> np.ndarray:
        demos = self.canonical() if demos is None else demos
        return np.stack([self.frames[d.frame_id] for d in demos])

    def latents(self, encoder: VaeNet) -> np.ndarray:
        demos = self.canonical()
        missing = [d.frame_id for d in demos if d.frame_id not in self._latent_cache]
        if missing:
            unique = sorted(set(missing))
            stack = np.stack([self.frames[fid] for fid in unique])
            latent = encode_frames(encoder, stack)
            self._latent_cache.update(dict(zip(unique, latent)))
        return np.stack([self._latent_cache[d.frame_id] for d in demos])

    def training_arrays(self):
        demos = self.canonical()
        states = np.array([d.state_vec for d in demos], dtype=np.float32)
        actions = np.array([d.action for d in demos], dtype=np.float32)
        return demos, states, actions

    # -------------------------------------------------------- persistence

    def persist(self, directory, manifest_extra: dict | None = None) -> None:
        directory = Path(directory)
        (directory / "frames").mkdir(parents=True, exist_ok=True)
        for frame_id, pixels in self.frames.items():
            path = directory / "frames" / (frame_id.replace("/", "_") + ".png")
            save_frame_png(Frame(pixels=pixels.astype(np.float32) / 255.0), path)
        with open(directory / "demos.jsonl", "w") as f:
            for d in self.canonical():
                f.write(json.dumps({
                    "demo_id": d.demo_id, "frame_id": d.frame_id,
                    "prev_frame_id": d.prev_frame_id,
                    "state_vec": list(d.state_vec), "action": d.action,
                    "source": d.source, "timestamp": d.timestamp,
                    "corridor_id": d.corridor_id,
                    "iteration_index": d.iteration_index,
                }) + "\n")
        manifest = {"total": len(self.demos),
                    "per_iteration": {str(k): v for k, v in sorted(self.per_iteration.items())}}
        manifest.update(manifest_extra or {})
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))

    @classmethod
    def load(cls, directory) -> "DemoDataset":
        directory = Path(directory)
        dataset = cls()
        for line in (directory / "demos.jsonl").read_text().splitlines():
            doc = json.loads(line)
            demo = Demonstration(
                demo_id=doc["demo_id"], frame_id=doc["frame_id"],
                prev_frame_id=doc["prev_frame_id"],
                state_vec=tuple(doc["state_vec"]), action=doc["action"],
                source=doc["source"], timestamp=doc["timestamp"],
                corridor_id=doc["corridor_id"],
                iteration_index=doc["iteration_index"])
            frame = prev = None
            path = directory / "frames" / (demo.frame_id.replace("/", "_") + ".png")
            frame = (load_frame_png(path).pixels * 255 + 0.5).astype(np.uint8)
            if demo.prev_frame_id is not None:
                prev_path = directory / "frames" / (demo.prev_frame_id.replace("/", "_") + ".png")
                if prev_path.exists():
                    prev = (load_frame_png(prev_path).pixels * 255 + 0.5).astype(np.uint8)
            dataset.append(demo, frame, prev)
        return dataset


def _to_u8(pixels: np.ndarray) -> np.ndarray:
    return (np.clip(pixels, 0.0, 1.0) * 255 + 0.5).astype(np.uint8)


def rollout_with_interventions(policy, expert: OracleExpert, session, max_steps: int,
                               corridor_id: str, iteration_index: int, seed: int,
                               judge_only: bool = False,
                               metadata: dict | None = None) -> RolloutTrajectory:
    """One 30 Hz rollout. The expert latch updates before the acting source is
    chosen each tick; every step is labeled with its source; non-finite policy
    output forces an expert takeover.

    judge_only: the expert never takes control; the flight ends at the first
    tick it would have intervened (evaluation semantics).
    """
    log = FlightLog(metadata={"corridor_id": corridor_id,
                              "iteration_index": iteration_index,
                              "seed": seed, **(metadata or {})})
    steps: list[RolloutStep] = []
    frames: dict[str, np.ndarray] = {}
    expert.reset()

    prev_frame = None
    prev_frame_id = None
    max_yaw_rate = session.sim.params.max_yaw_rate

    while not session.done:
        tick = session.tick_index
        frame = session.render_frame()
        frame_id = f"{corridor_id}/i{iteration_index}/s{seed}/t{tick}"
        privileged = session.privileged()
        state_vec = drone_state_vec(session.sim.est, max_yaw_rate)

        would_intervene = oracle_should_intervene(privileged, expert.config)
        if judge_only:
            latched = False
        else:
            latched = expert.update_takeover(privileged)

        agent_action = None
        forced = False
        if policy is not None and (not latched):
            agent_action = policy.act(frame, prev_frame if prev_frame is not None else frame,
                                      state_vec)
            if not np.isfinite(agent_action):
                expert.force_takeover()
                latched = True
                agent_action = None
                forced = True

        if latched:
            source = SOURCE_EXPERT
            action = expert.act(privileged)
        else:
            source = SOURCE_AGENT
            action = float(np.clip(agent_action, -1.0, 1.0)) if agent_action is not None \
                else expert.act(privileged)  # policy=None and not latched: oracle drives
            if policy is None:
                source = SOURCE_EXPERT

        if source == SOURCE_EXPERT and not judge_only:
            frames.setdefault(frame_id, _to_u8(frame.pixels))
            if prev_frame_id is not None:
                frames.setdefault(prev_frame_id, _to_u8(prev_frame.pixels))

        steps.append(RolloutStep(tick=tick, source=source, action=action,
                                 agent_action=agent_action, state_vec=state_vec,
                                 frame_id=frame_id, prev_frame_id=prev_frame_id,
                                 forced_takeover=forced))

        session.apply_policy_tick(action, max_ticks=max_steps)
        log.append(LogRecord(
            tick=tick, t=session.sim.time,
            position=tuple(session.sim.truth.position),
            attitude=tuple(session.sim.truth.attitude),
            est_altitude=session.sim.est.altitude,
            est_yaw_rate=float(session.sim.est.body_rates[2]),
            source=source, action=action, agent_action=agent_action,
            collision=session.termination == "collision",
            would_intervene=would_intervene,
        ))

        if judge_only and (would_intervene or session.termination == "collision"):
            if session.termination is None:
                session.termination = "manual_abort"  # judge called the failure
            break

        prev_frame, prev_frame_id = frame, frame_id

    log.termination = session.termination
    return RolloutTrajectory(corridor_id=corridor_id, iteration_index=iteration_index,
                             seed=seed, steps=steps, frames=frames, log=log,
                             termination=session.termination)


def source_runs(trajectory: RolloutTrajectory) -> list[tuple[str, int]]:
    """Contiguous (source, length) segments of a trajectory."""
    runs: list[tuple[str, int]] = []
    for step in trajectory.steps:
        if runs and runs[-1][0] == step.source:
            runs[-1] = (step.source, runs[-1][1] + 1)
        else:
            runs.append((step.source, 1))
    return runs


def check_latching(trajectory: RolloutTrajectory, release_dwell: int) -> bool:
    """Latch property: every expert segment lasts at least the release dwell
    unless it is cut short by the end of the trajectory."""
    runs = source_runs(trajectory)
    for i, (source, length) in enumerate(runs):
        if source == SOURCE_EXPERT and i < len(runs) - 1 and length < release_dwell:
            return False
    return True


def aggregate(trajectories, dataset: DemoDataset) -> int:
    """Append exactly the expert-sourced steps to the dataset."""
    added = 0
    for traj in trajectories:
        for step in traj.steps:
            if step.source != SOURCE_EXPERT:
                continue
            demo = Demonstration(
                demo_id=len(dataset.demos),
                frame_id=step.frame_id,
                prev_frame_id=step.prev_frame_id,
                state_vec=tuple(float(v) for v in step.state_vec),
                action=float(step.action),
                source=SOURCE_EXPERT,
                timestamp=step.tick / 30.0,
                corridor_id=traj.corridor_id,
                iteration_index=traj.iteration_index,
            )
            frame = traj.frames.get(step.frame_id)
            prev = traj.frames.get(step.prev_frame_id) if step.prev_frame_id else None
            dataset.append(demo, frame, prev)
            added += 1
    return added


# ------------------------------------------------------- controller families

class VaeFamily:
    """Frozen encoder + policy MLP head retrained each iteration."""

    name = "vae"

    def __init__(self, encoder: VaeNet, max_yaw_rate: float,
                 hyper: PolicyHyper = PolicyHyper()):
        self.encoder = encoder
        self.max_yaw_rate = max_yaw_rate
        self.hyper = hyper

    def train(self, dataset: DemoDataset, seed: int):
        latents = dataset.latents(self.encoder)
        _, states, actions = dataset.training_arrays()
        config = PolicyConfig(latent_dim=self.encoder.config.latent_dim)
        hyper = PolicyHyper(epochs=self.hyper.epochs, batch_size=self.hyper.batch_size,
                            lr=self.hyper.lr, seed=seed)
        policy, losses = train_policy(latents, states, actions, config, hyper)
        return VaeController(self.encoder, policy, self.max_yaw_rate), losses


class Baseline1Family:
    name = "baseline1"

    def __init__(self, resolution: int = 64, ridge_lambda: float = 10.0):
        self.resolution = resolution
        self.ridge_lambda = ridge_lambda

    def train(self, dataset: DemoDataset, seed: int):
        demos = dataset.canonical()
        feats, actions = [], []
        for d in demos:
            frame = Frame(pixels=dataset.frames[d.frame_id].astype(np.float32) / 255.0)
            prev_id = d.prev_frame_id if d.prev_frame_id in dataset.frames else d.frame_id
            prev = Frame(pixels=dataset.frames[prev_id].astype(np.float32) / 255.0)
            feats.append(baseline1_features(frame, prev))
            actions.append(d.action)
        params = baseline1_fit(np.stack(feats), np.array(actions), self.ridge_lambda)
        residual = float(np.mean((np.clip(np.stack(feats) @ params.weights[:-1]
                                          + params.weights[-1], -1, 1)
                                  - np.array(actions)) ** 2))
        return Baseline1Controller(params, self.resolution), [residual]


class Baseline2Family:
    """End-to-end CNN; trains on a strided subsample to fit the CPU budget."""

    name = "baseline2"

    def __init__(self, config: Baseline2Config = Baseline2Config(),
                 hyper: Baseline2Hyper = Baseline2Hyper(), train_stride: int = 3):
        self.config = config
        self.hyper = hyper
        self.train_stride = train_stride

    def train(self, dataset: DemoDataset, seed: int):
        demos = dataset.canonical()[::max(1, self.train_stride)]
        frames = dataset.stacked_frames(demos)
        actions = np.array([d.action for d in demos], dtype=np.float32)
        hyper = Baseline2Hyper(epochs=self.hyper.epochs, batch_size=self.hyper.batch_size,
                               lr=self.hyper.lr, seed=seed)
        net, losses = train_baseline2(frames, actions, self.config, hyper)
        return Baseline2Controller(net), losses


# ----------------------------------------------------------------- the loop

@dataclass
class IterationRecord:
    iteration_index: int
    demos_added: int
    dataset_size: int
    intervention_rates: dict
    mean_intervention_rate: float
    terminations: dict
    train_losses: list


@dataclass
class DaggerResult:
    controller: object
    iterations: list[IterationRecord]
    dataset: DemoDataset
    logs: list[FlightLog] = field(default_factory=list)


def rollout_metadata(scenario: CorridorScenario, stack: SimStackConfig,
                     seed: int, speed_target: float, extra: dict | None = None) -> dict:
    """Everything replay needs to re-simulate this flight bit-for-bit."""
    from .config import config_to_dict  # local import: config depends on dagger

    meta = {
        "world_params": config_to_dict(scenario.world_params),
        "corridor_index": scenario.corridor_index,
        "palette": scenario.palette_id,
        "stack": config_to_dict(stack),
        "session_seed": seed,
        "speed_target": speed_target,
    }
    meta.update(extra or {})
    return meta


def _rollout_job(args):
    (scenario, stack, expert_config, controller, iteration_index, seed,
     speed_target, max_steps, judge_only, always_expert, weave, metadata) = args
    world = generate_world(scenario.world_params)
    session = make_session(world, stack, seed, scenario.corridor_index,
                           speed_target, scenario.palette_id)
    if always_expert and weave > 0:
        expert = WeavingOracle(expert_config, amplitude=weave, phase=0.61 * seed)
    else:
        expert = OracleExpert(expert_config, always_latched=always_expert)
    meta = rollout_metadata(scenario, stack, seed, speed_target, metadata)
    return rollout_with_interventions(
        controller, expert, session, max_steps,
        corridor_id=scenario.name, iteration_index=iteration_index, seed=seed,
        judge_only=judge_only, metadata=meta)


def run_rollouts(jobs, workers: int = 1):
    """Run rollout jobs, preserving job order regardless of worker count."""
    if workers <= 1 or len(jobs) <= 1:
        return [_rollout_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_rollout_job, jobs))


def dagger_train(family, scenarios, stack: SimStackConfig,
                 expert_config: ExpertConfig, i_max: int, seed: int,
                 speed_target: float = 0.6, max_steps: int = 9000,
                 workers: int = 1, keep_logs: bool = False,
                 init_weave: float = 0.0) -> DaggerResult:
    """Full training loop: initial expert demos, then i_max intervention
    rounds, retraining from scratch on the accumulated dataset each round."""
    if i_max < 1:
        raise ValueError("i_max must be >= 1")
    dataset = DemoDataset()
    records: list[IterationRecord] = []
    all_logs: list[FlightLog] = []

    def batch(iteration, controller, judge_only=False):
        # conditions (spawn, wind) are fixed per corridor across iterations,
        # like reflying the same physical rows: per-iteration rate changes
        # then reflect the policy, not fresh environment draws
        jobs = [
            (scenario, stack, expert_config, controller, iteration,
             seed * 7919 + k * 131, speed_target, max_steps,
             judge_only, controller is None,
             init_weave if controller is None else 0.0,
             {"controller": family.name})
            for k, scenario in enumerate(scenarios)
        ]
        return run_rollouts(jobs, workers)

    # iteration 0: pure expert demonstrations
    trajectories = batch(0, None)
    added = aggregate(trajectories, dataset)
    controller, losses = family.train(dataset, seed=seed * 31)
    records.append(IterationRecord(
        iteration_index=0, demos_added=added, dataset_size=len(dataset),
        intervention_rates={t.corridor_id: 1.0 for t in trajectories},
        mean_intervention_rate=1.0,
        terminations={t.corridor_id: t.termination for t in trajectories},
        train_losses=list(np.asarray(losses, dtype=float))))
    if keep_logs:
        all_logs.extend(t.log for t in trajectories)

    for i in range(1, i_max + 1):
        trajectories = batch(i, controller)
        rates = {
            t.corridor_id: (sum(1 for s in t.steps if s.source == SOURCE_EXPERT)
                            / max(1, len(t.steps)))
            for t in trajectories
        }
        added = aggregate(trajectories, dataset)
        dataset.audit()
        controller, losses = family.train(dataset, seed=seed * 31)
        records.append(IterationRecord(
            iteration_index=i, demos_added=added, dataset_size=len(dataset),
            intervention_rates=rates,
            mean_intervention_rate=float(np.mean(list(rates.values()))),
            terminations={t.corridor_id: t.termination for t in trajectories},
            train_losses=list(np.asarray(losses, dtype=float))))
        if keep_logs:
            all_logs.extend(t.log for t in trajectories)

    return DaggerResult(controller=controller, iterations=records, dataset=dataset,
                        logs=all_logs)
