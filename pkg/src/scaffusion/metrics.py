"""Depth-completion error metrics (MAE/RMSE in mm, iMAE/iRMSE in 1/km) and
error-map export."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from matplotlib import colormaps
from PIL import Image

FIELDS = ("mae", "rmse", "imae", "irmse")

# Colormap for error maps: zero error maps to the lowest viridis color,
# invalid pixels are black.
ERROR_COLORMAP = "viridis"


@dataclass
class MetricSet:
    mae: float
    rmse: float
    imae: float
    irmse: float
    count: int

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(pred, gt, valid=None, depth_range=None) -> MetricSet:
    """Metrics over pixels that are valid and whose ground truth lies in ``depth_range``.

    Depths are in meters.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape}, ground truth {gt.shape}")
    mask = gt > 0 if valid is None else np.asarray(valid, dtype=bool) & (gt > 0)
    if depth_range is not None:
        lo, hi = depth_range
        mask &= (gt >= lo) & (gt <= hi)
    n = int(mask.sum())
    if n == 0:
        raise ValueError("no valid ground-truth pixels to evaluate")
    p, g = pred[mask], gt[mask]
    if np.any(p <= 0):
        raise ValueError("predictions must be positive on evaluated pixels")
    err = np.abs(p - g) * 1000.0
    ierr = np.abs(1.0 / p - 1.0 / g) * 1000.0
    return MetricSet(mae=float(err.mean()), rmse=float(np.sqrt((err ** 2).mean())),
                     imae=float(ierr.mean()), irmse=float(np.sqrt((ierr ** 2).mean())), count=n)


def aggregate(sets) -> MetricSet:
    """Per-frame average, in frame order."""
    sets = list(sets)
    if not sets:
        raise ValueError("nothing to aggregate")
    return MetricSet(*(float(np.mean([getattr(s, f) for s in sets])) for f in FIELDS),
                     count=int(sum(s.count for s in sets)))


def error_map(pred, gt, valid=None, path=None, vmax=None) -> np.ndarray:
    """Colormapped ``|pred - gt|`` as ``(H, W, 3)`` uint8; written as PNG when ``path`` is given."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape}, ground truth {gt.shape}")
    mask = gt > 0 if valid is None else np.asarray(valid, dtype=bool)
    err = np.where(mask, np.abs(pred - gt), 0.0)
    if vmax is None:
        vmax = float(err.max()) if err.max() > 0 else 1.0
    rgb = colormaps[ERROR_COLORMAP](np.clip(err / vmax, 0, 1))[..., :3]
    out = (rgb * 255).round().astype(np.uint8)
    out[~mask] = 0
    if path is not None:
        Image.fromarray(out).save(path)
    return out


def write_metrics(per_frame: dict, out_dir, stem: str = "metrics") -> MetricSet:
    """Write ``{frame_id: MetricSet}`` plus the aggregate to CSV and JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agg = aggregate(per_frame.values())
    with open(out_dir / f"{stem}.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("frame",) + FIELDS + ("count",))
        for key, m in per_frame.items():
            writer.writerow([key] + [f"{getattr(m, k):.6f}" for k in FIELDS] + [m.count])
        writer.writerow(["mean"] + [f"{getattr(agg, k):.6f}" for k in FIELDS] + [agg.count])
    with open(out_dir / f"{stem}.json", "w") as f:
        json.dump({"aggregate": agg.as_dict(),
                   "frames": {k: m.as_dict() for k, m in per_frame.items()}}, f, indent=2)
    return agg
