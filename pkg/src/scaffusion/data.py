"""On-disk dataset format.

Layout of a dataset directory::

    manifest.json
    seq000/image/000000.png     8-bit RGB
    seq000/depth/000000.png     16-bit dense depth, millimeters, 0 = invalid
    seq000/sparse/000000.png    16-bit sparse depth, same encoding
    seq000/pose/000000.json     world-to-camera pose, row-major rotation + translation

Pixel centers are at integer coordinates, matching the warper. Depth above
65.535 m saturates at 65535.
"""
from __future__ import annotations

import hashlib
import json
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import Intrinsics, Pose
from .sampling import SamplingStrategy, make_sparse
from .scenegen import SceneConfig, generate_scene, sequence_seed
from .util import derive_seed

MANIFEST_VERSION = 1
MAX_DEPTH_MM = 65535
CACHE_ENV = "SCAFF_FUSION_CACHE"
# bump when rendering or sampling changes so cached datasets are regenerated
GENERATOR_REVISION = 1


def encode_depth(depth_m: np.ndarray) -> np.ndarray:
    """Meters -> uint16 millimeters (0 stays invalid, large values saturate)."""
    mm = np.rint(np.asarray(depth_m, dtype=np.float64) * 1000.0)
    return np.clip(mm, 0, MAX_DEPTH_MM).astype(np.uint16)


def decode_depth(mm: np.ndarray) -> np.ndarray:
    return np.asarray(mm, dtype=np.float64) / 1000.0


def write_depth_png(path, depth_m: np.ndarray):
    Image.fromarray(encode_depth(depth_m)).save(path)


def read_depth_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return decode_depth(np.array(im, dtype=np.uint16))


def write_image_png(path, image: np.ndarray):
    Image.fromarray(np.clip(np.rint(np.asarray(image) * 255), 0, 255).astype(np.uint8)).save(path)


def read_image_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


@dataclass
class DatasetManifest:
    version: int
    resolution: tuple
    sequences: list
    generator: dict = field(default_factory=dict)
    root: Path | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("root")
        return json.dumps(d, indent=1, sort_keys=True)

    @classmethod
    def load(cls, root) -> "DatasetManifest":
        root = Path(root)
        path = root / "manifest.json"
        if not path.is_file():
            raise FileNotFoundError(f"missing dataset manifest: {path}")
        d = json.loads(path.read_text())
        m = cls(d["version"], tuple(d["resolution"]), d["sequences"], d.get("generator", {}), root)
        m.validate()
        return m

    def validate(self):
        if self.version != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {self.version}")
        for seq in self.sequences:
            for i, frame in enumerate(seq["frames"]):
                for key in ("image", "depth", "sparse", "pose"):
                    if key not in frame:
                        raise ValueError(f"{seq['name']}/frames[{i}] lacks '{key}'")
                    p = self.root / frame[key]
                    if not p.is_file():
                        raise FileNotFoundError(
                            f"manifest entry {seq['name']}/frames[{i}].{key} -> missing file {p}")

    def intrinsics(self, seq_index: int) -> Intrinsics:
        seq = self.sequences[seq_index]
        if "intrinsics" not in seq:
            raise ValueError(f"sequence {seq.get('name', seq_index)} has no intrinsics")
        return Intrinsics(**seq["intrinsics"])

    @property
    def n_frames(self) -> int:
        return sum(len(s["frames"]) for s in self.sequences)


def _render_sequence(args):
    root, index, scene_cfg, strategy, sparse_seed = args
    frames = generate_scene(scene_cfg)
    name = f"seq{index:03d}"
    for sub in ("image", "depth", "sparse", "pose"):
        (root / name / sub).mkdir(parents=True, exist_ok=True)
    entries, densities = [], []
    for i, fr in enumerate(frames):
        stem = f"{i:06d}"
        sparse = make_sparse(fr.depth, fr.image, strategy, derive_seed(sparse_seed, index, i))
        densities.append(sparse.density)
        write_image_png(root / name / "image" / f"{stem}.png", fr.image)
        write_depth_png(root / name / "depth" / f"{stem}.png", fr.depth)
        write_depth_png(root / name / "sparse" / f"{stem}.png", sparse.values)
        (root / name / "pose" / f"{stem}.json").write_text(json.dumps(fr.pose.to_dict()))
        entries.append({k: f"{name}/{k}/{stem}.{'json' if k == 'pose' else 'png'}"
                        for k in ("image", "depth", "sparse", "pose")})
    seq = {"name": name, "layout": scene_cfg.layout, "seed": scene_cfg.seed,
           "intrinsics": scene_cfg.intrinsics.to_dict(),
           "depth_range": list(scene_cfg.depth_range), "frames": entries}
    return seq, densities


def generate_dataset(out_dir, seed: int = 0, layout: str = "room", frames: int = 10,
                     sequences: int = 1, width: int = 160, height: int = 128,
                     strategy: SamplingStrategy | None = None, workers: int = 1,
                     **scene_kwargs) -> DatasetManifest:
    """Render ``sequences`` independent scenes of ``frames`` frames each and write them."""
    if sequences < 1:
        raise ValueError(f"sequences must be >= 1, got {sequences}")
    strategy = strategy or SamplingStrategy("harris-kmeans", n=max(1, round(0.005 * width * height)))
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    if not os.access(root, os.W_OK):
        raise PermissionError(f"output directory {root} is not writable")
    jobs = []
    for s in range(sequences):
        cfg = SceneConfig(seed=sequence_seed(seed, s), layout=layout, n_frames=frames,
                          width=width, height=height, **scene_kwargs)
        jobs.append((root, s, cfg, strategy, derive_seed(seed, "sparse")))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_render_sequence, jobs))
    else:
        results = [_render_sequence(j) for j in jobs]
    densities = np.concatenate([d for _, d in results])
    generator = {"seed": seed, "layout": layout, "frames": frames, "sequences": sequences,
                 "strategy": asdict(strategy),
                 "density": {"mean": float(densities.mean()), "min": float(densities.min()),
                             "max": float(densities.max())},
                 **{k: v for k, v in scene_kwargs.items()}}
    manifest = DatasetManifest(MANIFEST_VERSION, (width, height), [r[0] for r in results],
                               generator, root)
    (root / "manifest.json").write_text(manifest.to_json())
    return manifest


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "scaffusion"))


def cached_dataset(**params) -> Path:
    """Generate (once) a dataset keyed by its parameters under the cache directory."""
    strategy = params.get("strategy")
    key_params = dict(params, strategy=asdict(strategy) if strategy is not None else None,
                      revision=GENERATOR_REVISION)
    key = hashlib.sha256(json.dumps(key_params, sort_keys=True, default=str).encode()).hexdigest()[:16]
    root = cache_dir() / f"{params.get('layout', 'room')}-{key}"
    if not (root / "manifest.json").is_file():
        tmp = root.with_name(root.name + f".tmp{os.getpid()}")
        generate_dataset(tmp, **params)
        if root.exists():
            shutil.rmtree(tmp)
        else:
            tmp.rename(root)
    return root


@dataclass
class Frame:
    image: np.ndarray
    depth: np.ndarray
    sparse: np.ndarray
    pose: Pose
    intrinsics: Intrinsics


class Dataset:
    """Random access to frames and triplets of a generated dataset."""

    def __init__(self, root, preload: bool = True):
        self.manifest = DatasetManifest.load(root)
        self.root = Path(root)
        self.preload = preload
        self._cache = {}
        self.index = [(s, i) for s, seq in enumerate(self.manifest.sequences)
                      for i in range(len(seq["frames"]))]
        self.triplets = [(s, i) for s, seq in enumerate(self.manifest.sequences)
                         for i in range(1, len(seq["frames"]) - 1)]
        if preload:
            for key in self.index:
                self.frame(*key)

    def __len__(self):
        return len(self.index)

    @property
    def resolution(self):
        return tuple(self.manifest.resolution)

    def depth_range(self):
        lo = min(s["depth_range"][0] for s in self.manifest.sequences)
        hi = max(s["depth_range"][1] for s in self.manifest.sequences)
        return lo, hi

    @property
    def sampling_kind(self) -> str:
        return self.manifest.generator.get("strategy", {}).get("kind", "harris-kmeans")

    def frame(self, seq: int, i: int) -> Frame:
        key = (seq, i)
        if key in self._cache:
            return self._cache[key]
        entry = self.manifest.sequences[seq]["frames"][i]
        frame = Frame(
            image=read_image_png(self.root / entry["image"]).astype(np.float32),
            depth=read_depth_png(self.root / entry["depth"]).astype(np.float32),
            sparse=read_depth_png(self.root / entry["sparse"]).astype(np.float32),
            pose=Pose.from_dict(json.loads((self.root / entry["pose"]).read_text())),
            intrinsics=self.manifest.intrinsics(seq))
        if self.preload:
            self._cache[key] = frame
        return frame

    def stacked(self) -> dict:
        """Every frame in index order as stacked arrays: ``image`` (N, H, W, 3),
        ``depth``/``sparse`` (N, H, W), ``K`` (N, 3, 3), ``pose`` (N, 4, 4)."""
        frames = [self.frame(*key) for key in self.index]
        return {"image": np.stack([f.image for f in frames]),
                "depth": np.stack([f.depth for f in frames]),
                "sparse": np.stack([f.sparse for f in frames]),
                "K": np.stack([f.intrinsics.matrix() for f in frames]),
                "pose": np.stack([f.pose.matrix() for f in frames])}

    def triplet(self, seq: int, i: int):
        return self.frame(seq, i - 1), self.frame(seq, i), self.frame(seq, i + 1)
