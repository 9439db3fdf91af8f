"""Procedural ray-cast scenes: textured planes, boxes and spheres.

World frame: x right, y down, z forward (same handedness as the camera), so
an unrotated camera looks down +z with the floor at positive y. Rays are cast
with direction ``R_cw K^-1 [x 1]^T`` whose camera-frame z component is 1, so
the hit parameter is directly the z-depth.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Intrinsics, Pose
from .util import derive_seed, rng

LAYOUTS = ("room", "corridor", "outdoor-strip")

_DEFAULT_RANGES = {
    "room": (0.2, 12.0),
    "corridor": (0.2, 30.0),
    "outdoor-strip": (0.5, 80.0),
}


@dataclass
class Texture:
    """Solid (3D) procedural texture; view independent by construction."""
    color: np.ndarray
    freqs: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    phases: np.ndarray = field(default_factory=lambda: np.zeros(0))
    checker: float = 0.0
    gradient: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __call__(self, p: np.ndarray) -> np.ndarray:
        pattern = np.zeros(p.shape[0])
        if len(self.freqs):
            pattern += np.sin(p @ self.freqs.T + self.phases).mean(axis=1)
        if self.checker > 0:
            s = np.sin(np.pi * p / self.checker)
            pattern += np.tanh(2.0 * s[:, 0] * s[:, 1] * s[:, 2])
        pattern += np.tanh(p @ self.gradient)
        shade = 0.65 + 0.3 * np.tanh(pattern)
        return shade[:, None] * self.color[None, :]

    @classmethod
    def random(cls, r: np.random.Generator, style: str = "mixed", scale: float = 1.0) -> "Texture":
        color = r.uniform(0.35, 1.0, size=3)
        n = r.integers(2, 5)
        dirs = r.normal(size=(n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        # wavelengths 0.3 m .. 1.5 m
        freqs = dirs * (2 * np.pi / (scale * r.uniform(0.3, 1.5, size=(n, 1))))
        phases = r.uniform(0, 2 * np.pi, size=n)
        checker = scale * r.uniform(0.3, 0.8) if style in ("checker", "mixed") and r.random() < 0.5 else 0.0
        gradient = r.normal(scale=0.15 / scale, size=3) if style in ("gradient", "mixed") else np.zeros(3)
        if style == "checker":
            freqs, phases = freqs[:0], phases[:0]
        return cls(color, freqs, phases, checker, gradient)


class Primitive:
    texture: Texture

    def intersect(self, o: np.ndarray, d: np.ndarray):
        """Hit parameters ``s`` (inf for misses) and unit normals for rays ``o + s d``."""
        raise NotImplementedError


@dataclass
class Plane(Primitive):
    point: np.ndarray
    normal: np.ndarray
    texture: Texture

    def intersect(self, o, d):
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        denom = d @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            s = ((np.asarray(self.point) - o) @ n) / denom
        s = np.where((np.abs(denom) > 1e-12) & (s > 0), s, np.inf)
        normals = np.broadcast_to(n, d.shape)
        # face the normal toward the ray origin
        normals = np.where((d @ n)[:, None] > 0, -normals, normals)
        return s, normals


@dataclass
class Sphere(Primitive):
    center: np.ndarray
    radius: float
    texture: Texture

    def intersect(self, o, d):
        oc = o - np.asarray(self.center)
        a = np.einsum("ij,ij->i", d, d)
        b = 2 * (d @ oc)
        c = oc @ oc - self.radius ** 2
        disc = b * b - 4 * a * c
        sq = np.sqrt(np.maximum(disc, 0))
        s = (-b - sq) / (2 * a)
        s = np.where((disc >= 0) & (s > 0), s, np.inf)
        p = o + np.where(np.isfinite(s), s, 0)[:, None] * d
        normals = (p - self.center) / self.radius
        return s, normals


@dataclass
class Box(Primitive):
    """Box with half extents ``size``, rotated by ``yaw`` about the world y axis.

    ``inside=True`` renders the interior (room walls) instead of the exterior.
    """
    center: np.ndarray
    size: np.ndarray
    texture: Texture
    yaw: float = 0.0
    inside: bool = False

    def _rot(self):
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])

    def intersect(self, o, d):
        R = self._rot()
        ol = (o - np.asarray(self.center)) @ R
        dl = d @ R
        half = np.asarray(self.size, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dl
            t1 = (-half - ol) * inv
            t2 = (half - ol) * inv
        tmin = np.minimum(t1, t2)
        tmax = np.maximum(t1, t2)
        near = np.nanmax(tmin, axis=1)
        far = np.nanmin(tmax, axis=1)
        hit = far >= np.maximum(near, 0)
        if self.inside:
            s = np.where(hit & (far > 0), far, np.inf)
            axis = np.nanargmin(tmax, axis=1)
            sign = -np.sign(dl[np.arange(len(dl)), axis])
        else:
            s = np.where(hit & (near > 0), near, np.inf)
            axis = np.nanargmax(tmin, axis=1)
            sign = -np.sign(dl[np.arange(len(dl)), axis])
        nl = np.zeros_like(dl)
        nl[np.arange(len(dl)), axis] = sign
        return s, nl @ R.T


@dataclass
class Scene:
    primitives: list
    # direction the light travels (downward = +y)
    light: np.ndarray = field(default_factory=lambda: np.array([0.3, 1.0, 0.5]))
    ambient: float = 0.45

    def cast(self, o: np.ndarray, d: np.ndarray):
        best = np.full(d.shape[0], np.inf)
        normals = np.zeros_like(d)
        owner = np.full(d.shape[0], -1)
        for i, prim in enumerate(self.primitives):
            s, n = prim.intersect(o, d)
            closer = s < best
            best = np.where(closer, s, best)
            normals[closer] = n[closer]
            owner[closer] = i
        return best, normals, owner

    def render(self, pose: Pose, K: Intrinsics):
        """Render (image HxWx3 in [0,1], z-depth HxW) for a world-to-camera pose."""
        h, w = K.height, K.width
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        rays = np.stack([(xs - K.cx) / K.fx, (ys - K.cy) / K.fy, np.ones_like(xs)], -1).reshape(-1, 3)
        R_cw = pose.rotation.T
        origin = -R_cw @ pose.translation
        d = rays @ R_cw.T
        depth, normals, owner = self.cast(origin, d)
        if not np.all(np.isfinite(depth)):
            raise RuntimeError("scene does not cover the full field of view")
        p = origin + depth[:, None] * d
        light = self.light / np.linalg.norm(self.light)
        lambert = np.clip(normals @ -light, 0, None)
        image = np.zeros((h * w, 3))
        for i, prim in enumerate(self.primitives):
            sel = owner == i
            if sel.any():
                image[sel] = prim.texture(p[sel])
        image *= (self.ambient + (1 - self.ambient) * lambert)[:, None]
        return np.clip(image, 0, 1).reshape(h, w, 3), depth.reshape(h, w)


@dataclass
class SceneConfig:
    seed: int = 0
    layout: str = "room"
    n_frames: int = 10
    object_count: tuple = (3, 7)
    depth_range: tuple | None = None
    width: int = 160
    height: int = 120
    hfov_deg: float = 60.0
    max_step: float = 0.05
    max_rot_deg: float = 2.0
    texture_style: str = "mixed"

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}; expected one of {LAYOUTS}")
        if self.depth_range is None:
            self.depth_range = _DEFAULT_RANGES[self.layout]
        d_min, d_max = self.depth_range
        if not 0 < d_min < d_max:
            raise ValueError(f"invalid depth range {self.depth_range}")
        if self.n_frames < 3:
            raise ValueError("trajectory needs at least 3 frames")

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics.from_fov(self.width, self.height, self.hfov_deg)


@dataclass
class RenderedFrame:
    image: np.ndarray
    depth: np.ndarray
    pose: Pose
    intrinsics: Intrinsics


@dataclass
class FrameTriplet:
    prev: RenderedFrame
    cur: RenderedFrame
    next: RenderedFrame

    @property
    def pose_prev(self) -> Pose:
        """Relative pose target -> previous camera."""
        return self.prev.pose @ self.cur.pose.inverse()

    @property
    def pose_next(self) -> Pose:
        return self.next.pose @ self.cur.pose.inverse()


def camera_pose(position, yaw: float, pitch: float = 0.0) -> Pose:
    """World-to-camera pose for a camera at ``position`` with yaw/pitch in radians."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    R_cw = Ry @ Rx
    return Pose(R_cw.T, -R_cw.T @ np.asarray(position, dtype=np.float64))


def _room(cfg: SceneConfig, r: np.random.Generator):
    half = np.array([r.uniform(2.5, 4.0), r.uniform(1.3, 1.6), r.uniform(2.5, 4.0)])
    # floor at +half[1]; camera ~1.4 m above floor
    prims = [Box(np.zeros(3), half, Texture.random(r, cfg.texture_style), inside=True)]
    cam_y = half[1] - r.uniform(1.2, 1.6)
    start = np.array([r.uniform(-0.5, 0.5), cam_y, r.uniform(-0.5, 0.5)])
    bounds = np.array([[-1.0, cam_y - 0.1, -1.0], [1.0, cam_y + 0.1, 1.0]])
    n_obj = r.integers(cfg.object_count[0], cfg.object_count[1] + 1)
    for _ in range(n_obj):
        for _try in range(20):
            pos = np.array([r.uniform(-half[0] + 0.4, half[0] - 0.4), 0,
                            r.uniform(-half[2] + 0.4, half[2] - 0.4)])
            if np.hypot(pos[0], pos[2]) > 1.9:
                break
        if r.random() < 0.55:
            size = r.uniform([0.2, 0.2, 0.2], [0.6, 0.8, 0.6])
            pos[1] = half[1] - size[1]
            prims.append(Box(pos, size, Texture.random(r, cfg.texture_style), yaw=r.uniform(0, np.pi)))
        else:
            rad = r.uniform(0.2, 0.5)
            pos[1] = half[1] - rad - r.uniform(0, 0.8)
            prims.append(Sphere(pos, rad, Texture.random(r, cfg.texture_style)))
    return prims, start, bounds, r.uniform(-np.pi, np.pi)


def _corridor(cfg: SceneConfig, r: np.random.Generator):
    half = np.array([r.uniform(1.0, 1.6), r.uniform(1.3, 1.5), 14.0])
    prims = [Box(np.zeros(3), half, Texture.random(r, cfg.texture_style), inside=True)]
    cam_y = half[1] - r.uniform(1.3, 1.6)
    start = np.array([0.0, cam_y, -10.0])
    bounds = np.array([[-0.3, cam_y - 0.1, -11.0], [0.3, cam_y + 0.1, -6.0]])
    n_obj = r.integers(cfg.object_count[0], cfg.object_count[1] + 1)
    for _ in range(n_obj):
        side = r.choice([-1, 1])
        size = r.uniform([0.15, 0.3, 0.2], [0.4, 1.0, 0.8])
        pos = np.array([side * (half[0] - size[0]), half[1] - size[1], r.uniform(-7.0, 12.0)])
        prims.append(Box(pos, size, Texture.random(r, cfg.texture_style)))
    return prims, start, bounds, r.uniform(-0.1, 0.1)


def _outdoor(cfg: SceneConfig, r: np.random.Generator):
    ground_y = r.uniform(1.5, 1.8)
    far = r.uniform(40, 60)
    prims = [Plane(np.array([0, ground_y, 0]), np.array([0, -1.0, 0]), Texture.random(r, cfg.texture_style, 3.0)),
             Plane(np.array([0, 0, far]), np.array([0, 0, -1.0]), Texture.random(r, cfg.texture_style, 12.0))]
    n_obj = r.integers(cfg.object_count[0] + 2, cfg.object_count[1] + 5)
    for _ in range(n_obj):
        side = r.choice([-1, 1])
        size = r.uniform([0.8, 0.7, 1.0], [3.0, 4.0, 5.0])
        pos = np.array([side * r.uniform(3.5, 12.0), ground_y - size[1], r.uniform(4.0, far - 8)])
        prims.append(Box(pos, size, Texture.random(r, cfg.texture_style, 3.0), yaw=r.uniform(-0.3, 0.3)))
    start = np.array([0.0, 0.0, 0.0])
    bounds = np.array([[-1.0, -0.1, -2.0], [1.0, 0.1, 3.0]])
    return prims, start, bounds, r.uniform(-0.1, 0.1)


_BUILDERS = {"room": _room, "corridor": _corridor, "outdoor-strip": _outdoor}


def build_scene(config: SceneConfig):
    """Random scene geometry plus a trajectory (list of world-to-camera poses)."""
    r = rng(config.seed, "scene", config.layout)
    prims, start, bounds, yaw0 = _BUILDERS[config.layout](config, r)
    light = np.array([r.uniform(-0.6, 0.6), 1.0, r.uniform(-0.6, 0.6)])
    scene = Scene(prims, light=light, ambient=r.uniform(0.5, 0.7))

    poses = []
    pos, yaw, pitch = start.copy(), yaw0, 0.0
    vel = np.zeros(3)
    max_rot = np.deg2rad(config.max_rot_deg)
    yaw_range = (yaw0 - np.deg2rad(12), yaw0 + np.deg2rad(12))
    if config.layout == "room":
        yaw_range = (-np.inf, np.inf)
    for _ in range(config.n_frames):
        poses.append(camera_pose(pos, yaw, pitch))
        # bounded random walk with momentum: at most max_step per frame
        step = 0.6 * vel + 0.4 * r.normal(size=3) * config.max_step
        step[1] *= 0.3
        norm = np.linalg.norm(step)
        if norm > config.max_step:
            step *= config.max_step / norm
        step = np.where((pos + step < bounds[0]) | (pos + step > bounds[1]), -step, step)
        vel = step
        pos = pos + step
        yaw = float(np.clip(yaw + r.uniform(-max_rot, max_rot), *yaw_range))
        pitch = float(np.clip(pitch + r.uniform(-0.5, 0.5) * max_rot, -np.deg2rad(5), np.deg2rad(5)))
    return scene, poses


def generate_scene(config: SceneConfig) -> list:
    """Render the configured sequence. Deterministic in ``config.seed``."""
    scene, poses = build_scene(config)
    K = config.intrinsics
    d_min, d_max = config.depth_range
    frames = []
    for pose in poses:
        image, depth = scene.render(pose, K)
        if depth.min() < d_min or depth.max() > d_max:
            raise RuntimeError(
                f"rendered depth [{depth.min():.3f}, {depth.max():.3f}] outside configured "
                f"range {config.depth_range}")
        frames.append(RenderedFrame(image, depth, pose, K))
    return frames


def make_triplets(frames: list) -> list:
    """Sliding window of three consecutive frames."""
    if len(frames) < 3:
        raise ValueError(f"need at least 3 frames for a triplet, got {len(frames)}")
    return [FrameTriplet(frames[i - 1], frames[i], frames[i + 1]) for i in range(1, len(frames) - 1)]


def sequence_seed(seed: int, index: int) -> int:
    return derive_seed(seed, "sequence", index)
