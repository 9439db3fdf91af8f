"""Pinhole camera model, rigid transforms and differentiable image warping.

Tensors follow the torch layout: images are ``(N, C, H, W)``, depth maps
``(N, 1, H, W)``, point clouds ``(N, 3, H, W)`` and pixel coordinates
``(N, 2, H, W)`` with channel 0 = x (column) and channel 1 = y (row).
Pixel centers sit at integer coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

# Front-of-camera cutoff in meters.
EPS_Z = 1e-3


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float = 60.0) -> "Intrinsics":
        f = 0.5 * width / np.tan(np.deg2rad(hfov_deg) / 2)
        return cls(f, f, (width - 1) / 2, (height - 1) / 2, width, height)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def tensor(self, dtype=torch.float64, batch: int = 1) -> torch.Tensor:
        return torch.as_tensor(self.matrix(), dtype=dtype).expand(batch, 3, 3).clone()

    def scaled(self, sx: float, sy: float) -> "Intrinsics":
        """Intrinsics after resizing the image by (sx, sy) with pixel-center alignment."""
        w, h = int(round(self.width * sx)), int(round(self.height * sy))
        return Intrinsics(self.fx * sx, self.fy * sy,
                          (self.cx + 0.5) * sx - 0.5, (self.cy + 0.5) * sy - 0.5, w, h)

    def to_dict(self) -> dict:
        return dict(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy,
                    width=self.width, height=self.height)


@dataclass(frozen=True)
class Pose:
    """Rigid motion ``p -> R p + t``."""
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def tensor(self, dtype=torch.float64) -> torch.Tensor:
        return torch.as_tensor(self.matrix(), dtype=dtype).unsqueeze(0)

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an ``(..., 3)`` array of points."""
        return points @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return dict(rotation=self.rotation.reshape(-1).tolist(),
                    translation=self.translation.tolist())

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(np.reshape(d["rotation"], (3, 3)), np.asarray(d["translation"]))


def pixel_grid(height: int, width: int, dtype=torch.float64, device=None) -> torch.Tensor:
    """Homogeneous pixel coordinates ``(1, 3, H, W)``; row 2 is identically 1."""
    ys, xs = torch.meshgrid(torch.arange(height, dtype=dtype, device=device),
                            torch.arange(width, dtype=dtype, device=device), indexing="ij")
    return torch.stack([xs, ys, torch.ones_like(xs)]).unsqueeze(0)


def backproject(depth: torch.Tensor, K: torch.Tensor) -> torch.Tensor:
    """Lift every pixel to a 3D point ``K^-1 [x 1]^T d(x)`` in the camera frame.

    depth is ``(N, 1, H, W)``, K is ``(N, 3, 3)``; returns ``(N, 3, H, W)``.
    """
    if bool((depth <= 0).any()):
        raise ValueError("backproject requires strictly positive depth")
    n, _, h, w = depth.shape
    grid = pixel_grid(h, w, depth.dtype, depth.device).reshape(1, 3, -1)
    rays = torch.linalg.inv(K.to(depth.dtype)) @ grid
    return rays.reshape(n, 3, h, w) * depth


def transform(pose: torch.Tensor, points: torch.Tensor) -> torch.Tensor:
    """Apply ``(N, 4, 4)`` rigid transforms to ``(N, 3, H, W)`` points."""
    n, _, h, w = points.shape
    pose = pose.to(points.dtype)
    flat = points.reshape(n, 3, -1)
    out = pose[:, :3, :3] @ flat + pose[:, :3, 3:]
    return out.reshape(n, 3, h, w)


def project(points: torch.Tensor, K: torch.Tensor, eps_z: float = EPS_Z):
    """Perspective projection. Returns ``(coords, in_front)``.

    Points with ``Z <= eps_z`` get a false mask; their coordinates are finite
    but meaningless.
    """
    n, _, h, w = points.shape
    K = K.to(points.dtype)
    X, Y, Z = points[:, 0:1], points[:, 1:2], points[:, 2:3]
    in_front = Z > eps_z
    Zs = torch.where(in_front, Z, torch.full_like(Z, eps_z))
    fx = K[:, 0, 0].view(n, 1, 1, 1)
    fy = K[:, 1, 1].view(n, 1, 1, 1)
    cx = K[:, 0, 2].view(n, 1, 1, 1)
    cy = K[:, 1, 2].view(n, 1, 1, 1)
    coords = torch.cat([fx * X / Zs + cx, fy * Y / Zs + cy], dim=1)
    return coords, in_front


def _snap(c: torch.Tensor) -> torch.Tensor:
    # Coordinates a hair off an integer (round-trip noise) are snapped, with a
    # straight-through gradient, so identity warps are exact.
    tol = 1e-7 if c.dtype == torch.float64 else 1e-4
    r = torch.round(c)
    close = (c - r).abs() < tol
    return torch.where(close, c - (c - r).detach(), c)


def bilinear_sample(image: torch.Tensor, coords: torch.Tensor):
    """Sample ``image`` (N, C, H, W) at pixel ``coords`` (N, 2, Ho, Wo).

    Returns ``(values, in_bounds)``. Samples whose bilinear support leaves
    ``[0, W-1] x [0, H-1]`` are zero with a false mask. Differentiable in
    both the image and the coordinates.
    """
    n, c, h, w = image.shape
    ho, wo = coords.shape[-2:]
    x = _snap(coords[:, 0])
    y = _snap(coords[:, 1])
    in_bounds = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)

    x0 = torch.floor(x.detach()).clamp(0, max(w - 2, 0))
    y0 = torch.floor(y.detach()).clamp(0, max(h - 2, 0))
    ax = (x - x0).clamp(0, 1) if w > 1 else torch.zeros_like(x)
    ay = (y - y0).clamp(0, 1) if h > 1 else torch.zeros_like(y)
    x0 = x0.long()
    y0 = y0.long()
    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)

    flat = image.reshape(n, c, h * w)

    def gather(yy, xx):
        idx = (yy * w + xx).reshape(n, 1, -1).expand(n, c, -1)
        return flat.gather(2, idx).reshape(n, c, ho, wo)

    ax = ax.unsqueeze(1)
    ay = ay.unsqueeze(1)
    top = gather(y0, x0) * (1 - ax) + gather(y0, x1) * ax
    bottom = gather(y1, x0) * (1 - ax) + gather(y1, x1) * ax
    values = top * (1 - ay) + bottom * ay
    mask = in_bounds.unsqueeze(1)
    return values * mask.to(values.dtype), mask


def reconstruct(image_tau: torch.Tensor, depth: torch.Tensor, K: torch.Tensor,
                pose: torch.Tensor):
    """Warp the adjacent frame ``image_tau`` into the target view.

    ``pose`` maps target-camera coordinates into the adjacent camera. Returns
    the reconstruction and its validity mask (in front of the camera and
    inside the image).
    """
    points = transform(pose, backproject(depth, K))
    coords, in_front = project(points, K)
    values, in_bounds = bilinear_sample(image_tau, coords)
    valid = in_front & in_bounds
    return values * valid.to(values.dtype), valid


def visibility_mask(depth: torch.Tensor, depth_tau: torch.Tensor, K: torch.Tensor,
                    pose: torch.Tensor, rel_tol: float = 0.02) -> torch.Tensor:
    """Pixels whose warped point is seen unoccluded in the adjacent view.

    A pixel is visible when the transformed point's depth agrees with the
    adjacent frame's depth map, sampled at the projection, within ``rel_tol``.
    Needs ground-truth depth for both frames, so it is an evaluation aid and
    not part of the training losses.
    """
    points = transform(pose, backproject(depth, K))
    coords, in_front = project(points, K)
    sampled, in_bounds = bilinear_sample(depth_tau, coords)
    z = points[:, 2:3]
    return in_front & in_bounds & ((sampled - z).abs() <= rel_tol * z)


def rodrigues(axis_angle: torch.Tensor) -> torch.Tensor:
    """Rotation matrices ``(N, 3, 3)`` from axis-angle vectors ``(N, 3)``."""
    theta2 = (axis_angle ** 2).sum(-1, keepdim=True)
    # Small-angle-safe sin(t)/t and (1-cos t)/t^2.
    small = theta2 < 1e-12
    theta = torch.sqrt(torch.where(small, torch.ones_like(theta2), theta2))
    a = torch.where(small, 1 - theta2 / 6, torch.sin(theta) / theta)
    b = torch.where(small, 0.5 - theta2 / 24, (1 - torch.cos(theta)) / theta ** 2)
    x, y, z = axis_angle.unbind(-1)
    zero = torch.zeros_like(x)
    S = torch.stack([zero, -z, y, z, zero, -x, -y, x, zero], -1).reshape(-1, 3, 3)
    eye = torch.eye(3, dtype=axis_angle.dtype, device=axis_angle.device).expand_as(S)
    return eye + a.unsqueeze(-1) * S + b.unsqueeze(-1) * (S @ S)


def pose_from_vector(vec: torch.Tensor) -> torch.Tensor:
    """``(N, 6)`` [translation, axis-angle] -> ``(N, 4, 4)`` rigid transforms."""
    n = vec.shape[0]
    T = torch.zeros(n, 4, 4, dtype=vec.dtype, device=vec.device)
    T[:, :3, :3] = rodrigues(vec[:, 3:])
    T[:, :3, 3] = vec[:, :3]
    T[:, 3, 3] = 1
    return T
