"""Onboard-camera simulation: pinhole ray-cast rendering of orchard worlds.

Flat-shaded primitives over a two-band ground/sky background, with
season/lighting palettes and per-tree color variation. Rendering is a pure
function of (world, pose, camera, palette); frames are float32 HxWx3 in [0,1].
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from PIL import Image

from .geometry import quat_from_axis_angle, quat_multiply, quat_to_matrix
from .world import World

MAX_RENDER_DISTANCE = 38.0


@dataclass(frozen=True)
class CameraModel:
    horizontal_fov: float = 70.0  # degrees
    width: int = 64
    height: int = 64
    mount_translation: tuple[float, float, float] = (0.10, 0.0, 0.0)
    mount_rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    pitch_offset: float = 0.0  # rad, positive tilts the optical axis up

    def __post_init__(self):
        if not 0.0 < self.horizontal_fov < 180.0:
            raise ValueError("horizontal_fov must be in (0, 180)")
        if self.width < 16 or self.height < 16:
            raise ValueError("width and height must be >= 16")


@dataclass(frozen=True)
class Frame:
    pixels: np.ndarray  # (H, W, 3) float32 in [0, 1]
    timestamp: float = 0.0
    # capture pose, kept for replay/debug only; never a controller input
    pose_tag: tuple = ()


@dataclass(frozen=True)
class Palette:
    sky: tuple
    ground: tuple
    trunk_shades: tuple  # 4 RGB variants, indexed by TreeInstance.color_index
    canopy_shades: tuple
    brightness: float = 1.0


def _shades(base, spread=0.06):
    r, g, b = base
    return tuple(
        (min(1, max(0, r + d)), min(1, max(0, g + d)), min(1, max(0, b + d)))
        for d in (-spread, 0.0, spread, 2 * spread)
    )


PALETTES: dict[str, Palette] = {
    "summer_sunny": Palette((0.53, 0.79, 0.95), (0.38, 0.47, 0.26),
                            _shades((0.42, 0.30, 0.19)), _shades((0.18, 0.42, 0.14))),
    "summer_cloudy": Palette((0.72, 0.76, 0.80), (0.34, 0.42, 0.25),
                             _shades((0.38, 0.28, 0.18)), _shades((0.17, 0.38, 0.14)),
                             brightness=0.85),
    "autumn_sunny": Palette((0.60, 0.76, 0.90), (0.50, 0.42, 0.25),
                            _shades((0.40, 0.28, 0.17)), _shades((0.62, 0.42, 0.12))),
    "autumn_cloudy": Palette((0.70, 0.72, 0.76), (0.45, 0.39, 0.25),
                             _shades((0.36, 0.26, 0.16)), _shades((0.55, 0.38, 0.12)),
                             brightness=0.82),
    "winter_sunny": Palette((0.66, 0.80, 0.92), (0.55, 0.52, 0.44),
                            _shades((0.35, 0.28, 0.22)), _shades((0.38, 0.33, 0.26))),
    "winter_cloudy": Palette((0.74, 0.76, 0.79), (0.50, 0.48, 0.42),
                             _shades((0.33, 0.27, 0.22)), _shades((0.35, 0.31, 0.25)),
                             brightness=0.78),
}

_ray_grid_cache: dict[tuple, np.ndarray] = {}


def _camera_ray_grid(camera: CameraModel) -> np.ndarray:
    """Unit ray directions in the body frame, shape (H*W, 3)."""
    key = (camera.horizontal_fov, camera.width, camera.height,
           camera.mount_rotation, camera.pitch_offset)
    cached = _ray_grid_cache.get(key)
    if cached is not None:
        return cached
    half_w = math.tan(math.radians(camera.horizontal_fov) / 2)
    half_h = half_w * camera.height / camera.width
    cols = (np.arange(camera.width) + 0.5 - camera.width / 2) / (camera.width / 2)
    rows = (np.arange(camera.height) + 0.5 - camera.height / 2) / (camera.height / 2)
    u, v = np.meshgrid(cols * half_w, rows * half_h)  # right, down
    # camera (right, down, forward) -> body FLU (forward, left, up)
    dirs = np.stack([np.ones_like(u), -u, -v], axis=-1).reshape(-1, 3)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pitch = quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), -camera.pitch_offset)
    rot = quat_to_matrix(quat_multiply(np.asarray(camera.mount_rotation, dtype=float), pitch))
    dirs = (dirs @ rot.T).astype(np.float32)
    _ray_grid_cache[key] = dirs
    return dirs


def _render_tables(world: World, palette_id: str) -> dict:
    """Per-world primitive color/bound tables, cached on the world object."""
    cache = getattr(world, "_render_tables", None)
    if cache is None:
        cache = {}
        object.__setattr__(world, "_render_tables", cache)
    tables = cache.get(palette_id)
    if tables is not None:
        return tables

    palette = PALETTES[palette_id]
    prim = world.primitives
    trunk_colors = np.array([palette.trunk_shades[world.trees[t].color_index]
                             for t in prim["trunk_tree"]]).reshape(-1, 3)
    canopy_colors = np.array([palette.canopy_shades[world.trees[t].color_index]
                              for t in prim["canopy_tree"]]).reshape(-1, 3)
    branch_colors = np.array([palette.trunk_shades[world.trees[t].color_index]
                              for t in prim["branch_tree"]]).reshape(-1, 3) * 0.85

    trunks = prim["trunks"]
    canopies = prim["canopies"]
    branches = prim["branches"]
    if len(branches):
        seg = branches[:, 3:6] - branches[:, 0:3]
        length = np.linalg.norm(seg, axis=1)
        axis = seg / np.maximum(length, 1e-9)[:, None]
        # packed capsule rows: origin, unit axis, length, radius
        branch_rows = np.concatenate(
            [branches[:, 0:3], axis, length[:, None], branches[:, 6:7]], axis=1)
        branch_mid = (branches[:, 0:3] + branches[:, 3:6]) / 2
        branch_bound = length / 2 + branches[:, 6]
    else:
        branch_rows = np.zeros((0, 8))
        branch_mid = np.zeros((0, 3))
        branch_bound = np.zeros(0)

    tables = {
        "trunk_colors": trunk_colors, "canopy_colors": canopy_colors,
        "branch_colors": branch_colors,
        "trunks": trunks if len(trunks) else np.zeros((0, 4)),
        "canopies": canopies if len(canopies) else np.zeros((0, 4)),
        "branches": branch_rows,
        "branch_mid": branch_mid, "branch_bound": branch_bound,
    }
    # single precision is ample for a 64x64 raster and halves memory traffic
    tables = {k: np.asarray(v, dtype=np.float32) for k, v in tables.items()}
    cache[palette_id] = tables
    return tables


@njit(cache=True)
def _cast_scene(eye, dirs, trunks, canopies, branches, t_best, kind, idx):
    """Nearest-hit scan over culled primitives; writes (t, kind, index) per ray.

    kind: -1 none, 0 trunk, 1 canopy, 2 branch. Scalar loops compile well and
    allow early depth pruning; no temporaries at the 64x64 ray count.
    """
    n = dirs.shape[0]
    for i in range(n):
        t_best[i] = np.inf
        kind[i] = -1
        idx[i] = 0
    for j in range(trunks.shape[0]):
        cx, cy, r, h = trunks[j, 0], trunks[j, 1], trunks[j, 2], trunks[j, 3]
        fx = eye[0] - cx
        fy = eye[1] - cy
        cc = fx * fx + fy * fy - r * r
        for i in range(n):
            dx, dy = dirs[i, 0], dirs[i, 1]
            a = dx * dx + dy * dy
            if a < 1e-12:
                continue
            b = fx * dx + fy * dy
            disc = b * b - a * cc
            if disc < 0:
                continue
            t = (-b - np.sqrt(disc)) / a
            if t <= 1e-6 or t >= t_best[i]:
                continue
            z = eye[2] + t * dirs[i, 2]
            if 0.0 <= z <= h:
                t_best[i] = t
                kind[i] = 0
                idx[i] = j
    for j in range(canopies.shape[0]):
        fx = eye[0] - canopies[j, 0]
        fy = eye[1] - canopies[j, 1]
        fz = eye[2] - canopies[j, 2]
        r = canopies[j, 3]
        cc = fx * fx + fy * fy + fz * fz - r * r
        for i in range(n):
            b = dirs[i, 0] * fx + dirs[i, 1] * fy + dirs[i, 2] * fz
            disc = b * b - cc
            if disc < 0:
                continue
            t = -b - np.sqrt(disc)
            if 1e-6 < t < t_best[i]:
                t_best[i] = t
                kind[i] = 1
                idx[i] = j
    for j in range(branches.shape[0]):
        ux, uy, uz = branches[j, 3], branches[j, 4], branches[j, 5]
        length, r = branches[j, 6], branches[j, 7]
        aox = eye[0] - branches[j, 0]
        aoy = eye[1] - branches[j, 1]
        aoz = eye[2] - branches[j, 2]
        ao_u = aox * ux + aoy * uy + aoz * uz
        ao2 = aox * aox + aoy * aoy + aoz * aoz
        qc0 = ao2 - ao_u * ao_u - r * r
        box = aox - ux * length
        boy = aoy - uy * length
        boz = aoz - uz * length
        bo2 = box * box + boy * boy + boz * boz
        for i in range(n):
            d_u = dirs[i, 0] * ux + dirs[i, 1] * uy + dirs[i, 2] * uz
            qa = 1.0 - d_u * d_u
            d_ao = dirs[i, 0] * aox + dirs[i, 1] * aoy + dirs[i, 2] * aoz
            if qa > 1e-9:
                qb = d_ao - d_u * ao_u
                disc = qb * qb - qa * qc0
                if disc >= 0:
                    t = (-qb - np.sqrt(disc)) / qa
                    if 1e-6 < t < t_best[i]:
                        s = ao_u + t * d_u
                        if 0.0 <= s <= length:
                            t_best[i] = t
                            kind[i] = 2
                            idx[i] = j
            disc = d_ao * d_ao - (ao2 - r * r)
            if disc >= 0:
                t = -d_ao - np.sqrt(disc)
                if 1e-6 < t < t_best[i]:
                    t_best[i] = t
                    kind[i] = 2
                    idx[i] = j
            d_bo = dirs[i, 0] * box + dirs[i, 1] * boy + dirs[i, 2] * boz
            disc = d_bo * d_bo - (bo2 - r * r)
            if disc >= 0:
                t = -d_bo - np.sqrt(disc)
                if 1e-6 < t < t_best[i]:
                    t_best[i] = t
                    kind[i] = 2
                    idx[i] = j


def _cull_xy(eye, forward, centers_xy, bounds) -> np.ndarray:
    if len(centers_xy) == 0:
        return np.zeros(0, dtype=bool)
    rel = centers_xy - eye[:2]
    dist = np.hypot(rel[:, 0], rel[:, 1])
    ahead = rel @ forward[:2]
    return (dist - bounds < MAX_RENDER_DISTANCE) & (ahead > -bounds - 2.0)


def render(world: World, body_pose, camera: CameraModel,
           palette_id: str | None = None, timestamp: float = 0.0) -> Frame:
    """Ray-cast the onboard RGB view from (position, attitude quaternion)."""
    position, attitude = body_pose
    position = np.asarray(position, dtype=float)
    if position[2] <= 0:
        raise ValueError("pose altitude must be > 0")
    palette_id = palette_id or world.params.palette_id
    palette = PALETTES[palette_id]
    tables = _render_tables(world, palette_id)

    rot = quat_to_matrix(np.asarray(attitude, dtype=float))
    eye = (position + rot @ np.asarray(camera.mount_translation)).astype(np.float32)
    dirs = _camera_ray_grid(camera) @ rot.T.astype(np.float32)
    n_rays = len(dirs)
    forward = rot[:, 0].astype(np.float32)

    colors = np.tile(np.asarray(palette.sky, dtype=np.float32), (n_rays, 1))
    dz = dirs[:, 2]
    with np.errstate(divide="ignore"):
        depth = np.where(dz < -1e-9, -eye[2] / dz, np.float32(np.inf))
    colors[np.isfinite(depth)] = np.asarray(palette.ground, dtype=np.float32)

    trunks = tables["trunks"]
    keep_t = _cull_xy(eye, forward, trunks[:, :2], trunks[:, 2] + 4.0)
    canopies = tables["canopies"]
    keep_c = _cull_xy(eye, forward, canopies[:, :2], canopies[:, 3])
    keep_b = _cull_xy(eye, forward, tables["branch_mid"][:, :2], tables["branch_bound"])

    t_best = np.empty(n_rays, dtype=np.float32)
    kind = np.empty(n_rays, dtype=np.int8)
    idx = np.empty(n_rays, dtype=np.int32)
    _cast_scene(eye, dirs, trunks[keep_t], canopies[keep_c],
                tables["branches"][keep_b], t_best, kind, idx)

    hit = t_best < depth
    for k, color_key, keep in ((0, "trunk_colors", keep_t),
                               (1, "canopy_colors", keep_c),
                               (2, "branch_colors", keep_b)):
        mask = hit & (kind == k)
        if mask.any():
            colors[mask] = tables[color_key][keep][idx[mask]]

    pixels = (colors * palette.brightness).reshape(camera.height, camera.width, 3)
    pixels = np.clip(pixels, 0.0, 1.0).astype(np.float32)
    return Frame(pixels=pixels, timestamp=timestamp,
                 pose_tag=(tuple(position), tuple(np.asarray(attitude))))


# ----------------------------------------------------------- augmentation

@dataclass(frozen=True)
class AugmentParams:
    brightness_jitter: float = 0.12
    contrast_jitter: float = 0.25
    saturation_jitter: float = 0.35
    sharpness_jitter: float = 0.5
    flip: bool = True


def hflip(frame: Frame) -> Frame:
    return Frame(pixels=np.ascontiguousarray(frame.pixels[:, ::-1, :]),
                 timestamp=frame.timestamp, pose_tag=frame.pose_tag)


def _box_blur3(x: np.ndarray) -> np.ndarray:
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)), mode="edge")
    acc = np.zeros_like(x)
    for dr in range(3):
        for dc in range(3):
            acc += padded[dr:dr + x.shape[0], dc:dc + x.shape[1]]
    return acc / 9.0


def augment(frame: Frame, aug: AugmentParams, seed: int) -> Frame:
    """Photometric jitter plus random horizontal flip (p=0.5), clamped to [0,1].

    Zero-magnitude jitters are skipped entirely so the zero config is the
    exact identity.
    """
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    out = frame.pixels
    if aug.flip and rng.uniform() < 0.5:
        out = out[:, ::-1, :]
    out = out.astype(np.float32)

    if aug.brightness_jitter > 0:
        out = out + np.float32(rng.uniform(-aug.brightness_jitter, aug.brightness_jitter))
    if aug.contrast_jitter > 0:
        factor = np.float32(1.0 + rng.uniform(-aug.contrast_jitter, aug.contrast_jitter))
        out = (out - np.float32(0.5)) * factor + np.float32(0.5)
    if aug.saturation_jitter > 0:
        factor = np.float32(1.0 + rng.uniform(-aug.saturation_jitter, aug.saturation_jitter))
        luma = (0.299 * out[..., 0] + 0.587 * out[..., 1] + 0.114 * out[..., 2])
        out = luma[..., None] + factor * (out - luma[..., None])
    if aug.sharpness_jitter > 0:
        amount = np.float32(rng.uniform(-aug.sharpness_jitter, aug.sharpness_jitter))
        out = out + amount * (out - _box_blur3(out))

    return Frame(pixels=np.clip(out, 0.0, 1.0).astype(np.float32),
                 timestamp=frame.timestamp, pose_tag=frame.pose_tag)


# ------------------------------------------------------------ persistence

def save_frame_png(frame: Frame, path) -> None:
    data = np.clip(frame.pixels * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def load_frame_png(path, timestamp: float = 0.0) -> Frame:
    data = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return Frame(pixels=data, timestamp=timestamp)


def append_frame_index(index_path, png_path: str, frame: Frame, palette_id: str) -> None:
    record = {
        "path": str(png_path),
        "timestamp": frame.timestamp,
        "pose": [list(map(float, part)) for part in frame.pose_tag] if frame.pose_tag else [],
        "palette": palette_id,
    }
    with open(index_path, "a") as f:
        f.write(json.dumps(record) + "\n")
