"""Procedural orchard-row worlds and geometric queries.

Trees sit on parallel lines spaced ``row_spacing`` apart; the flyable
corridors run between adjacent lines. Obstacle primitives are vertical
cylinders (trunks), spheres (canopies) and capsules (branches), all with
exact signed distances so collision and oracle queries are cheap.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .geometry import wrap_angle

WORLD_FORMAT_VERSION = 1

# free knobs with no field-data anchor: young-orchard scale, sized so the
# 64x64 render shows trunks/canopies at several pixels within ~20 m
CANOPY_RADIUS_RANGE = (0.55, 1.10)
BRANCH_LENGTH_RANGE = (0.6, 1.8)
BRANCH_RADIUS_RANGE = (0.05, 0.11)
BRANCH_ELEVATION_RANGE = (-0.15, 0.45)
TREE_COLOR_VARIANTS = 4


class WorldParamError(ValueError):
    """Raised when OrchardParams violates an invariant; names the field."""


@dataclass(frozen=True)
class OrchardParams:
    row_spacing: float = 6.10
    tree_spacing: float = 4.57
    row_length: float = 73.15
    rows_per_world: int = 1
    missing_tree_prob: float = 0.0
    branch_density: float = 1.2
    trunk_radius_range: tuple[float, float] = (0.10, 0.20)
    tree_height_range: tuple[float, float] = (2.2, 3.2)
    palette_id: str = "summer_sunny"
    seed: int = 0
    # deterministically removed (line_index, slot_index) pairs, used by the
    # failure-scenario presets; random removal uses missing_tree_prob
    removed_slots: tuple[tuple[int, int], ...] = ()

    def validate(self) -> None:
        if not self.row_spacing > 0:
            raise WorldParamError("row_spacing must be > 0")
        if not self.tree_spacing > 0:
            raise WorldParamError("tree_spacing must be > 0")
        if not self.row_length > 0:
            raise WorldParamError("row_length must be > 0")
        if self.rows_per_world < 1:
            raise WorldParamError("rows_per_world must be >= 1")
        if not 0.0 <= self.missing_tree_prob <= 1.0:
            raise WorldParamError("missing_tree_prob must be in [0, 1]")
        if self.branch_density < 0:
            raise WorldParamError("branch_density must be >= 0")
        for name in ("trunk_radius_range", "tree_height_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise WorldParamError(f"{name} must satisfy 0 < min <= max")


@dataclass(frozen=True)
class Branch:
    attach_height: float
    direction: tuple[float, float, float]  # unit vector
    length: float
    radius: float


@dataclass(frozen=True)
class TreeInstance:
    base_position: tuple[float, float, float]
    trunk_radius: float
    height: float
    canopy_radius: float
    branches: tuple[Branch, ...]
    color_index: int


@dataclass(eq=False)
class World:
    """Immutable after generation; safe for concurrent reads."""

    params: OrchardParams
    trees: tuple[TreeInstance, ...]
    corridor_centerlines: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    ground_height: float = 0.0

    @cached_property
    def primitives(self) -> dict[str, np.ndarray]:
        """Flat primitive arrays for vectorized distance/render queries.

        trunks:   (n, 4) x, y, radius, height       trunk_tree: (n,) tree idx
        canopies: (n, 4) cx, cy, cz, radius         canopy_tree: (n,)
        branches: (m, 7) ax, ay, az, bx, by, bz, r  branch_tree / branch_idx: (m,)
        """
        trunks, canopies, branches = [], [], []
        trunk_tree, canopy_tree, branch_tree, branch_idx = [], [], [], []
        for ti, tree in enumerate(self.trees):
            x, y, _ = tree.base_position
            trunks.append((x, y, tree.trunk_radius, tree.height))
            trunk_tree.append(ti)
            canopies.append((x, y, tree.height, tree.canopy_radius))
            canopy_tree.append(ti)
            for bi, br in enumerate(tree.branches):
                a = np.array([x, y, br.attach_height])
                b = a + np.asarray(br.direction) * br.length
                branches.append((*a, *b, br.radius))
                branch_tree.append(ti)
                branch_idx.append(bi)
        return {
            "trunks": np.array(trunks, dtype=float).reshape(-1, 4),
            "trunk_tree": np.array(trunk_tree, dtype=int),
            "canopies": np.array(canopies, dtype=float).reshape(-1, 4),
            "canopy_tree": np.array(canopy_tree, dtype=int),
            "branches": np.array(branches, dtype=float).reshape(-1, 7),
            "branch_tree": np.array(branch_tree, dtype=int),
            "branch_idx": np.array(branch_idx, dtype=int),
        }

    def corridor_axis(self, corridor_index: int) -> tuple[np.ndarray, np.ndarray, float]:
        (sx, sy), (ex, ey) = self.corridor_centerlines[corridor_index]
        start = np.array([sx, sy])
        delta = np.array([ex - sx, ey - sy])
        length = float(np.linalg.norm(delta))
        return start, delta / length, length

    def mirrored(self) -> "World":
        """World reflected about y=0 (negates tree y and branch y components)."""
        trees = tuple(
            replace(
                t,
                base_position=(t.base_position[0], -t.base_position[1], t.base_position[2]),
                branches=tuple(
                    replace(b, direction=(b.direction[0], -b.direction[1], b.direction[2]))
                    for b in t.branches
                ),
            )
            for t in self.trees
        )
        lines = tuple(((sx, -sy), (ex, -ey)) for (sx, sy), (ex, ey) in self.corridor_centerlines)
        return World(params=self.params, trees=trees, corridor_centerlines=lines)


@dataclass(frozen=True)
class CenterlineFrame:
    lateral_offset: float  # + = left of the corridor axis
    heading_error: float  # rad, wrapped to (-pi, pi]
    arc_length: float
    remaining: float


def _slot_rng(seed: int, line: int, slot: int) -> np.random.Generator:
    # counter-based stream per (seed, line, slot): editing one parameter
    # never reshuffles unrelated slots
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64((line << 32) | slot)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def generate_world(params: OrchardParams) -> World:
    """Deterministic world from (params, seed); see OrchardParams invariants."""
    params.validate()
    n_lines = params.rows_per_world + 1
    total_width = params.rows_per_world * params.row_spacing
    line_ys = [i * params.row_spacing - total_width / 2 for i in range(n_lines)]
    n_slots = int(math.floor(params.row_length / params.tree_spacing)) + 1
    removed = set(tuple(rs) for rs in params.removed_slots)

    trees: list[TreeInstance] = []
    for li, ly in enumerate(line_ys):
        for k in range(n_slots):
            rng = _slot_rng(params.seed, li, k)
            occupied = rng.uniform() >= params.missing_tree_prob
            if not occupied or (li, k) in removed:
                continue
            trunk_radius = rng.uniform(*params.trunk_radius_range)
            height = rng.uniform(*params.tree_height_range)
            canopy_radius = rng.uniform(*CANOPY_RADIUS_RANGE)
            color_index = int(rng.integers(0, TREE_COLOR_VARIANTS))
            branches = []
            for _ in range(int(rng.poisson(params.branch_density))):
                azimuth = rng.uniform(0.0, 2 * math.pi)
                elevation = rng.uniform(*BRANCH_ELEVATION_RANGE)
                direction = (
                    math.cos(elevation) * math.cos(azimuth),
                    math.cos(elevation) * math.sin(azimuth),
                    math.sin(elevation),
                )
                branches.append(Branch(
                    attach_height=rng.uniform(1.0, max(1.2, height - 0.4)),
                    direction=direction,
                    length=rng.uniform(*BRANCH_LENGTH_RANGE),
                    radius=rng.uniform(*BRANCH_RADIUS_RANGE),
                ))
            trees.append(TreeInstance(
                base_position=(k * params.tree_spacing, ly, 0.0),
                trunk_radius=trunk_radius,
                height=height,
                canopy_radius=canopy_radius,
                branches=tuple(branches),
                color_index=color_index,
            ))

    centerlines = tuple(
        ((0.0, (line_ys[j] + line_ys[j + 1]) / 2), (params.row_length, (line_ys[j] + line_ys[j + 1]) / 2))
        for j in range(params.rows_per_world)
    )
    return World(params=params, trees=tuple(trees), corridor_centerlines=centerlines)


def _signed_distances(world: World, point: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """Signed distance from point to every primitive (ground first)."""
    p = np.asarray(point, dtype=float)
    prim = world.primitives
    dists = [p[2] - world.ground_height]
    ids = ["ground"]

    trunks = prim["trunks"]
    if len(trunks):
        dr = np.hypot(p[0] - trunks[:, 0], p[1] - trunks[:, 1]) - trunks[:, 2]
        dz = np.maximum(-p[2], p[2] - trunks[:, 3])
        outside = np.hypot(np.maximum(dr, 0.0), np.maximum(dz, 0.0))
        d = np.minimum(np.maximum(dr, dz), 0.0) + outside
        dists.extend(d.tolist())
        ids.extend(f"tree{t}:trunk" for t in prim["trunk_tree"])

    canopies = prim["canopies"]
    if len(canopies):
        d = np.linalg.norm(p[None, :] - canopies[:, :3], axis=1) - canopies[:, 3]
        dists.extend(d.tolist())
        ids.extend(f"tree{t}:canopy" for t in prim["canopy_tree"])

    branches = prim["branches"]
    if len(branches):
        a = branches[:, 0:3]
        ab = branches[:, 3:6] - a
        denom = np.einsum("ij,ij->i", ab, ab)
        t = np.clip(np.einsum("ij,ij->i", p[None, :] - a, ab) / np.maximum(denom, 1e-18), 0.0, 1.0)
        closest = a + t[:, None] * ab
        d = np.linalg.norm(p[None, :] - closest, axis=1) - branches[:, 6]
        dists.extend(d.tolist())
        ids.extend(f"tree{t}:branch{b}" for t, b in zip(prim["branch_tree"], prim["branch_idx"]))

    return np.array(dists), ids


def nearest_obstacle(world: World, point) -> tuple[float, str]:
    """Exact minimum signed distance over all primitives and its id."""
    dists, ids = _signed_distances(world, point)
    i = int(np.argmin(dists))
    return float(dists[i]), ids[i]


def nearest_obstacle_info(world: World, point) -> tuple[float, str, np.ndarray]:
    """nearest_obstacle plus the closest surface point (oracle steering input)."""
    p = np.asarray(point, dtype=float)
    dists, ids = _signed_distances(world, point)
    i = int(np.argmin(dists))
    obstacle_id = ids[i]
    prim = world.primitives
    if obstacle_id == "ground":
        surface = np.array([p[0], p[1], world.ground_height])
    elif ":trunk" in obstacle_id:
        tree = int(obstacle_id[4:obstacle_id.index(":")])
        row = prim["trunks"][np.nonzero(prim["trunk_tree"] == tree)[0][0]]
        axis_pt = np.array([row[0], row[1], float(np.clip(p[2], 0.0, row[3]))])
        radial = p - axis_pt
        radial[2] = 0.0
        n = np.linalg.norm(radial)
        direction = radial / n if n > 1e-12 else np.array([1.0, 0.0, 0.0])
        surface = axis_pt + direction * row[2]
    elif ":canopy" in obstacle_id:
        tree = int(obstacle_id[4:obstacle_id.index(":")])
        row = prim["canopies"][np.nonzero(prim["canopy_tree"] == tree)[0][0]]
        center = row[:3]
        delta = p - center
        n = np.linalg.norm(delta)
        direction = delta / n if n > 1e-12 else np.array([0.0, 0.0, 1.0])
        surface = center + direction * row[3]
    else:
        tree = int(obstacle_id[4:obstacle_id.index(":")])
        bi = int(obstacle_id.split("branch")[1])
        mask = (prim["branch_tree"] == tree) & (prim["branch_idx"] == bi)
        row = prim["branches"][np.nonzero(mask)[0][0]]
        a, b = row[0:3], row[3:6]
        ab = b - a
        t = float(np.clip((p - a) @ ab / max(float(ab @ ab), 1e-18), 0.0, 1.0))
        axis_pt = a + t * ab
        delta = p - axis_pt
        n = np.linalg.norm(delta)
        direction = delta / n if n > 1e-12 else np.array([0.0, 0.0, 1.0])
        surface = axis_pt + direction * row[6]
    return float(dists[i]), obstacle_id, surface


def collision_check(world: World, position, body_radius: float) -> tuple[bool, str | None]:
    """True iff the nearest obstacle is strictly closer than body_radius."""
    if body_radius <= 0:
        raise ValueError("body_radius must be > 0")
    dist, obstacle_id = nearest_obstacle(world, position)
    if dist < body_radius:
        return True, obstacle_id
    return False, None


def centerline_frame(world: World, position, yaw: float, corridor_index: int) -> CenterlineFrame:
    start, axis, length = world.corridor_axis(corridor_index)
    p = np.asarray(position, dtype=float)[:2]
    rel = p - start
    along = float(np.clip(rel @ axis, 0.0, length))
    # z-component of axis x rel: positive when left of the axis
    lateral = float(axis[0] * rel[1] - axis[1] * rel[0])
    axis_yaw = math.atan2(axis[1], axis[0])
    return CenterlineFrame(
        lateral_offset=lateral,
        heading_error=wrap_angle(yaw - axis_yaw),
        arc_length=along,
        remaining=length - along,
    )


def world_to_json(world: World) -> str:
    doc = {
        "format_version": WORLD_FORMAT_VERSION,
        "params": {
            **{k: getattr(world.params, k) for k in (
                "row_spacing", "tree_spacing", "row_length", "rows_per_world",
                "missing_tree_prob", "branch_density", "palette_id", "seed")},
            "trunk_radius_range": list(world.params.trunk_radius_range),
            "tree_height_range": list(world.params.tree_height_range),
            "removed_slots": [list(rs) for rs in world.params.removed_slots],
        },
        "ground_height": world.ground_height,
        "corridor_centerlines": [[list(s), list(e)] for s, e in world.corridor_centerlines],
        "trees": [
            {
                "base_position": list(t.base_position),
                "trunk_radius": t.trunk_radius,
                "height": t.height,
                "canopy_radius": t.canopy_radius,
                "color_index": t.color_index,
                "branches": [
                    {
                        "attach_height": b.attach_height,
                        "direction": list(b.direction),
                        "length": b.length,
                        "radius": b.radius,
                    }
                    for b in t.branches
                ],
            }
            for t in world.trees
        ],
    }
    return json.dumps(doc)


def world_from_json(text: str) -> World:
    doc = json.loads(text)
    version = doc.get("format_version")
    if version != WORLD_FORMAT_VERSION:
        raise ValueError(f"unsupported world format_version {version!r}")
    pd = doc["params"]
    params = OrchardParams(
        row_spacing=pd["row_spacing"],
        tree_spacing=pd["tree_spacing"],
        row_length=pd["row_length"],
        rows_per_world=pd["rows_per_world"],
        missing_tree_prob=pd["missing_tree_prob"],
        branch_density=pd["branch_density"],
        trunk_radius_range=tuple(pd["trunk_radius_range"]),
        tree_height_range=tuple(pd["tree_height_range"]),
        palette_id=pd["palette_id"],
        seed=pd["seed"],
        removed_slots=tuple(tuple(rs) for rs in pd.get("removed_slots", [])),
    )
    trees = tuple(
        TreeInstance(
            base_position=tuple(t["base_position"]),
            trunk_radius=t["trunk_radius"],
            height=t["height"],
            canopy_radius=t["canopy_radius"],
            color_index=t["color_index"],
            branches=tuple(
                Branch(
                    attach_height=b["attach_height"],
                    direction=tuple(b["direction"]),
                    length=b["length"],
                    radius=b["radius"],
                )
                for b in t["branches"]
            ),
        )
        for t in doc["trees"]
    )
    centerlines = tuple((tuple(s), tuple(e)) for s, e in doc["corridor_centerlines"])
    return World(params=params, trees=trees, corridor_centerlines=centerlines,
                 ground_height=doc.get("ground_height", 0.0))
