"""Two-stage training, evaluation, inference and ablations.

Stage 1 fits ScaffNet to dense synthetic depth. Stage 2 freezes it and trains
FusionNet on image triplets with the unsupervised objective. All randomness
(initialization, shuffling, crops, flips) derives from ``config.seed``, and
each step depends only on the step index and the model/optimizer state, so a
run resumed from a checkpoint replays the uninterrupted one exactly.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import losses
from .checkpoint import Checkpoint, module_weights, optimizer_from_arrays, optimizer_to_arrays
from .config import RunConfig, dump_config
from .data import Dataset
from .geometry import reconstruct
from .metrics import MetricSet, aggregate, error_map, evaluate, write_metrics
from .nets import (FusionNet, FusionNetConfig, PoseNet, ScaffNet, ScaffNetConfig,
                   check_resolution, fusionnet_preset, scaffnet_preset)
from .sampling import SamplingStrategy, make_sparse, points_for_density
from .spp import sparse_input
from .util import derive_seed, rng, state_hash

log = logging.getLogger(__name__)

SUITES = ("spp-on-off", "density-sweep", "output-head")
SWEEP_DENSITIES = (0.005, 0.0015, 0.0005)
_MIRROR = torch.diag(torch.tensor([-1.0, 1.0, 1.0, 1.0], dtype=torch.float64))


def _dtype(config: RunConfig):
    return torch.float64 if config.dtype == "float64" else torch.float32


def _seed_torch(config: RunConfig, purpose: str):
    torch.manual_seed(derive_seed(config.seed, purpose))


def build_scaffnet(config: RunConfig) -> ScaffNet:
    _seed_torch(config, "init-scaffnet")
    cfg = scaffnet_preset(config.preset, kernels=config.spp_kernels, use_spp=config.use_spp)
    return ScaffNet(cfg).to(_dtype(config))


def build_fusionnet(config: RunConfig) -> FusionNet:
    _seed_torch(config, "init-fusionnet")
    return FusionNet(fusionnet_preset(config.preset, head=config.head)).to(_dtype(config))


def loss_weights(config: RunConfig, sampling_kind: str = "harris-kmeans") -> losses.LossWeights:
    preset = config.loss_preset
    if preset == "auto":
        preset = "scanline" if sampling_kind == "scanline" else "corner"
    base = losses.LossWeights.scanline() if preset == "scanline" else losses.LossWeights.corner()
    overrides = {k: getattr(config, k) for k in ("w_ph", "w_co", "w_st", "w_sz", "w_sm", "w_tp")
                 if getattr(config, k) is not None}
    return replace(base, **overrides)


def learning_rate(config: RunConfig, epoch: int) -> float:
    """Base rate halved once for every configured halving epoch already reached."""
    return config.lr * 0.5 ** sum(epoch >= e for e in config.lr_halve_epochs)


# -- batches ----------------------------------------------------------------

def _nchw(a: np.ndarray, dtype) -> torch.Tensor:
    t = torch.from_numpy(np.ascontiguousarray(a))
    t = t.permute(0, 3, 1, 2) if t.ndim == 4 else t.unsqueeze(1)
    return t.to(dtype)


def _augment(batch: dict, config: RunConfig, step: int, flip: bool) -> dict:
    """Random crop and (optionally) horizontal flip with matching camera updates."""
    n, _, h, w = batch["z"].shape
    out = dict(batch)
    if config.crop:
        ch, cw = (int(v) for v in config.crop)
        if ch > h or cw > w:
            raise ValueError(f"crop {ch}x{cw} larger than images {h}x{w}")
        r = rng(config.seed, "crop", step)
        ys = r.integers(0, h - ch + 1, n)
        xs = r.integers(0, w - cw + 1, n)
        for key, value in batch.items():
            if value.ndim == 4:
                out[key] = torch.stack([value[i, :, ys[i]:ys[i] + ch, xs[i]:xs[i] + cw]
                                        for i in range(n)])
        if "K" in batch:
            K = batch["K"].clone()
            K[:, 0, 2] -= torch.from_numpy(xs).to(K.dtype)
            K[:, 1, 2] -= torch.from_numpy(ys).to(K.dtype)
            out["K"] = K
        h, w = ch, cw
    if flip:
        mask = torch.from_numpy(rng(config.seed, "flip", step).random(n) < 0.5)
        if mask.any():
            for key, value in out.items():
                if value.ndim == 4:
                    out[key] = torch.where(mask[:, None, None, None], value.flip(-1), value)
            if "K" in out:
                K = out["K"].clone()
                K[mask, 0, 2] = (w - 1) - K[mask, 0, 2]
                out["K"] = K
            for key in ("pose_prev", "pose_next"):
                if key in out:
                    M = _MIRROR.to(out[key].dtype)
                    P = out[key].clone()
                    P[mask] = M @ P[mask] @ M
                    out[key] = P
    return out


class _Frames:
    """Stacked dataset arrays plus triplet bookkeeping."""

    def __init__(self, dataset: Dataset, need_triplets: bool = False):
        if len(dataset) == 0:
            raise ValueError(f"dataset {dataset.root} is empty")
        for s in range(len(dataset.manifest.sequences)):
            dataset.manifest.intrinsics(s)
        self.dataset = dataset
        self.arrays = dataset.stacked()
        self.position = {key: i for i, key in enumerate(dataset.index)}
        if need_triplets:
            if not dataset.triplets:
                raise ValueError(f"dataset {dataset.root} has no frame triplets")
            self.triplets = [(self.position[(s, i - 1)], self.position[(s, i)],
                              self.position[(s, i + 1)]) for s, i in dataset.triplets]
            pose = self.arrays["pose"]
            self.rel_prev = np.stack([pose[p] @ np.linalg.inv(pose[t]) for p, t, _ in self.triplets])
            self.rel_next = np.stack([pose[q] @ np.linalg.inv(pose[t]) for _, t, q in self.triplets])

    def scaffnet_batch(self, idx, dtype) -> dict:
        a = self.arrays
        return {"z": _nchw(a["sparse"][idx], dtype), "gt": _nchw(a["depth"][idx], dtype)}

    def fusion_batch(self, idx, dtype) -> dict:
        a = self.arrays
        t = [self.triplets[i][1] for i in idx]
        return {"image": _nchw(a["image"][t], dtype),
                "image_prev": _nchw(a["image"][[self.triplets[i][0] for i in idx]], dtype),
                "image_next": _nchw(a["image"][[self.triplets[i][2] for i in idx]], dtype),
                "z": _nchw(a["sparse"][t], dtype), "gt": _nchw(a["depth"][t], dtype),
                "K": torch.from_numpy(a["K"][t]).to(dtype),
                "pose_prev": torch.from_numpy(self.rel_prev[idx]).to(dtype),
                "pose_next": torch.from_numpy(self.rel_next[idx]).to(dtype)}


# -- training ---------------------------------------------------------------

@dataclass
class _Run:
    config: RunConfig
    n_samples: int
    out_dir: Path | None
    history: list = field(default_factory=list)
    validation: list = field(default_factory=list)

    @property
    def steps_per_epoch(self) -> int:
        return max(1, self.n_samples // self.config.batch_size)

    @property
    def total_steps(self) -> int:
        return self.config.epochs * self.steps_per_epoch

    @property
    def stop_step(self) -> int:
        return min(self.total_steps, self.config.max_steps) if self.config.max_steps else self.total_steps

    def batch_indices(self, step: int) -> np.ndarray:
        epoch, b = divmod(step, self.steps_per_epoch)
        perm = rng(self.config.seed, "shuffle", epoch).permutation(self.n_samples)
        bs = self.config.batch_size
        return np.sort(perm[b * bs:(b + 1) * bs])

    def write_logs(self):
        if self.out_dir is None:
            return
        for name, rows in (("losses.csv", self.history), ("metrics.csv", self.validation)):
            if rows:
                with open(self.out_dir / name, "w", newline="") as f:
                    writer = csv.DictWriter(f, fieldnames=list(rows[0]))
                    writer.writeheader()
                    writer.writerows(rows)


def _start(config: RunConfig, out_dir):
    if config.deterministic:
        torch.use_deterministic_algorithms(True)
    if out_dir is None:
        return None
    out_dir = Path(out_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(dump_config(config))
    return out_dir


def _adam(params, config: RunConfig):
    return torch.optim.Adam(params, lr=config.lr, betas=(config.beta1, config.beta2))


def _resume(run: _Run, resume: Checkpoint | None, modules: dict, optimizer) -> int:
    if resume is None:
        return 0
    for name, module in modules.items():
        module.load_state_dict(resume.network_state(name))
    if resume.optimizer:
        optimizer_from_arrays(optimizer, resume.optimizer)
    run.history = list(resume.metrics.get("history", []))
    run.validation = list(resume.metrics.get("validation", []))
    return resume.step


def _checkpoint(run: _Run, stage: str, modules: dict, optimizer, step: int,
                networks: dict) -> Checkpoint:
    weights = {}
    for name, module in modules.items():
        weights.update(module_weights(name, module))
    return Checkpoint(stage=stage, config=run.config.to_dict(), networks=networks,
                      weights=weights, optimizer=optimizer_to_arrays(optimizer), step=step,
                      epoch=step // run.steps_per_epoch,
                      rng_state=torch.get_rng_state().numpy().copy(),
                      metrics={"history": run.history, "validation": run.validation})


def _loop(run: _Run, start: int, optimizer, step_fn, end_of_epoch, make_checkpoint) -> Checkpoint:
    for step in range(start, run.stop_step):
        epoch = step // run.steps_per_epoch
        lr = learning_rate(run.config, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        report = step_fn(step, run.batch_indices(step))
        optimizer.zero_grad(set_to_none=True)
        report.total.backward()
        optimizer.step()
        run.history.append({"step": step, "epoch": epoch, "lr": lr, **report.as_dict()})
        if (step + 1) % run.steps_per_epoch == 0:
            metrics = end_of_epoch(epoch)
            if metrics is not None:
                run.validation.append({"epoch": epoch, "step": step + 1, **metrics.as_dict()})
                log.info("epoch %d: val MAE %.1f mm", epoch, metrics.mae)
            if run.out_dir is not None:
                make_checkpoint(step + 1).save(run.out_dir / "checkpoints" / f"epoch_{epoch:03d}.npz")
                run.write_logs()
    ckpt = make_checkpoint(run.stop_step)
    if run.out_dir is not None:
        ckpt.save(run.out_dir / "checkpoints" / "final.npz")
        run.write_logs()
    return ckpt


def _load_dataset(path_or_dataset) -> Dataset:
    if isinstance(path_or_dataset, Dataset):
        return path_or_dataset
    if not path_or_dataset:
        raise ValueError("config.dataset: no dataset path given")
    return Dataset(path_or_dataset, preload=False)


def train_scaffnet(config: RunConfig, dataset=None, val_dataset=None, out_dir=None,
                   resume: Checkpoint | None = None) -> Checkpoint:
    """Fit ScaffNet to dense ground truth with the normalized L1 loss."""
    config = replace(config, stage="scaffnet")
    dataset = _load_dataset(dataset or config.dataset)
    frames = _Frames(dataset)
    val = _load_dataset(val_dataset or config.val_dataset) if (val_dataset or config.val_dataset) else None
    dtype = _dtype(config)
    net = build_scaffnet(config)
    check_resolution(*frames.arrays["depth"].shape[1:], net.config.stride)
    optimizer = _adam(net.parameters(), config)
    run = _Run(config, len(dataset), _start(config, out_dir))
    start = _resume(run, resume, {"scaffnet": net}, optimizer)
    flip = dataset.sampling_kind == "scanline" if config.augment_flip is None else config.augment_flip

    def step_fn(step, idx):
        batch = _augment(frames.scaffnet_batch(idx, dtype), config, step, flip)
        gt = batch["gt"]
        l0 = losses.supervised_l0(net(sparse_input(batch["z"])), gt, gt > 0)
        return losses.LossReport(total=l0, l0=float(l0.detach()))

    def end_of_epoch(epoch):
        return evaluate_model(CompletionModel(net), val, config)[0] if val is not None else None

    networks = {"scaffnet": net.config.to_dict()}
    return _loop(run, start, optimizer, step_fn, end_of_epoch,
                 lambda s: _checkpoint(run, "scaffnet", {"scaffnet": net}, optimizer, s, networks))


def load_scaffnet(checkpoint, dtype=torch.float64) -> ScaffNet:
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else Checkpoint.load(checkpoint)
    if "scaffnet" not in ckpt.networks:
        raise ValueError("checkpoint does not contain a ScaffNet")
    # cast before loading so float64 weights are not truncated
    net = ScaffNet(ScaffNetConfig(**ckpt.networks["scaffnet"])).to(dtype)
    net.load_state_dict(ckpt.network_state("scaffnet"))
    return net


def load_fusionnet(checkpoint, dtype=torch.float64) -> FusionNet:
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else Checkpoint.load(checkpoint)
    if "fusionnet" not in ckpt.networks:
        raise ValueError("checkpoint does not contain a FusionNet")
    net = FusionNet(FusionNetConfig(**ckpt.networks["fusionnet"])).to(dtype)
    net.load_state_dict(ckpt.network_state("fusionnet"))
    return net


def fusion_losses(net: FusionNet, scaffnet: ScaffNet, batch: dict, weights: losses.LossWeights,
                  step: int, tp_start_step: int, posenet: PoseNet | None = None,
                  finetune: bool = False) -> losses.LossReport:
    """The unsupervised objective on one batch of triplets."""
    image, z = batch["image"], sparse_input(batch["z"])
    if finetune:
        d0 = scaffnet(z)
    else:
        with torch.no_grad():
            d0 = scaffnet(z)
    _, _, d = net(image, z, d0)
    adjacent = (batch["image_prev"], batch["image_next"])
    if posenet is not None:
        poses = [posenet(image, other) for other in adjacent]
    else:
        poses = [batch["pose_prev"], batch["pose_next"]]
    K = batch["K"]
    warped = [reconstruct(other, d, K, pose) for other, pose in zip(adjacent, poses)]
    with torch.no_grad():
        warped0 = [reconstruct(other, d0, K, pose.detach()) for other, pose in zip(adjacent, poses)]
    recons, valid = [r for r, _ in warped], [v for _, v in warped]
    W = losses.prior_mask(image, recons, [r for r, _ in warped0], valid, [v for _, v in warped0])
    parts = {"l_ph": losses.photometric_loss(image, recons, valid, weights.w_co, weights.w_st),
             "l_sz": losses.sparse_consistency_loss(d, batch["z"]),
             "l_sm": losses.smoothness_loss(d, image),
             "l_tp": losses.topology_prior_loss(d, d0, W)}
    return losses.total_loss(parts, weights, step, tp_start_step, W.coverage)


def train_fusionnet(config: RunConfig, scaffnet=None, dataset=None, val_dataset=None,
                    out_dir=None, resume: Checkpoint | None = None) -> Checkpoint:
    """Train FusionNet (and the pose regressor when ``pose_source = learned``)
    against a frozen ScaffNet."""
    config = replace(config, stage="fusionnet")
    scaffnet = scaffnet if scaffnet is not None else config.scaffnet_checkpoint
    if not isinstance(scaffnet, Checkpoint) and not scaffnet:
        raise ValueError("config.scaffnet_checkpoint: a trained ScaffNet checkpoint is required")
    dtype = _dtype(config)
    scaff = load_scaffnet(scaffnet, dtype)
    if resume is not None:
        scaff.load_state_dict(resume.network_state("scaffnet"))
    dataset = _load_dataset(dataset or config.dataset)
    frames = _Frames(dataset, need_triplets=True)
    val = _load_dataset(val_dataset or config.val_dataset) if (val_dataset or config.val_dataset) else None
    net = build_fusionnet(config)
    check_resolution(*frames.arrays["depth"].shape[1:], net.config.stride)
    modules = {"fusionnet": net, "scaffnet": scaff}
    params = list(net.parameters())
    posenet = None
    if config.pose_source == "learned":
        _seed_torch(config, "init-posenet")
        posenet = PoseNet().to(dtype)
        modules["posenet"] = posenet
        params += list(posenet.parameters())
    if config.finetune_scaffnet:
        params += list(scaff.parameters())
    else:
        scaff.requires_grad_(False)
    optimizer = _adam(params, config)
    run = _Run(config, len(frames.triplets), _start(config, out_dir))
    start = _resume(run, resume, {k: v for k, v in modules.items() if k != "scaffnet"}, optimizer)
    frozen_hash = state_hash(scaff)
    weights = loss_weights(config, dataset.sampling_kind)
    tp_start = config.tp_start_step if config.tp_start_step >= 0 else int(0.2 * run.total_steps)
    flip = dataset.sampling_kind == "scanline" if config.augment_flip is None else config.augment_flip

    def step_fn(step, idx):
        batch = _augment(frames.fusion_batch(idx, dtype), config, step, flip)
        return fusion_losses(net, scaff, batch, weights, step, tp_start, posenet,
                             config.finetune_scaffnet)

    def end_of_epoch(epoch):
        return evaluate_model(CompletionModel(scaff, net), val, config)[0] if val is not None else None

    networks = {"scaffnet": scaff.config.to_dict(), "fusionnet": net.config.to_dict()}
    ckpt = _loop(run, start, optimizer, step_fn, end_of_epoch,
                 lambda s: _checkpoint(run, "fusionnet", modules, optimizer, s, networks))
    ckpt.metrics["scaffnet_hash"] = {"before": frozen_hash, "after": state_hash(scaff)}
    if not config.finetune_scaffnet and state_hash(scaff) != frozen_hash:
        raise RuntimeError("frozen ScaffNet weights changed during FusionNet training")
    return ckpt


def train(config: RunConfig, out_dir=None, resume: Checkpoint | None = None) -> Checkpoint:
    if config.stage == "scaffnet":
        return train_scaffnet(config, out_dir=out_dir, resume=resume)
    return train_fusionnet(config, out_dir=out_dir, resume=resume)


# -- inference and evaluation -----------------------------------------------

class CompletionModel:
    """ScaffNet, optionally followed by FusionNet, in inference mode."""

    def __init__(self, scaffnet: ScaffNet, fusionnet: FusionNet | None = None):
        self.scaffnet = scaffnet
        self.fusionnet = fusionnet
        self.dtype = next(scaffnet.parameters()).dtype

    @classmethod
    def from_checkpoint(cls, checkpoint, dtype=torch.float64) -> "CompletionModel":
        ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else Checkpoint.load(checkpoint)
        fusion = load_fusionnet(ckpt, dtype) if "fusionnet" in ckpt.networks else None
        return cls(load_scaffnet(ckpt, dtype), fusion)

    @property
    def stride(self) -> int:
        s = self.scaffnet.config.stride
        return max(s, self.fusionnet.config.stride) if self.fusionnet else s

    @torch.no_grad()
    def predict(self, images: np.ndarray, sparse: np.ndarray, batch_size: int = 16):
        """``images`` (N, H, W, 3) in [0, 1], ``sparse`` (N, H, W) meters.

        Returns ``(depth, topology)``, both (N, H, W); depth equals topology
        when there is no FusionNet.
        """
        if images.shape[:3] != sparse.shape:
            raise ValueError(f"image batch {images.shape} does not match sparse depth {sparse.shape}")
        check_resolution(sparse.shape[1], sparse.shape[2], self.stride)
        out_d, out_d0 = [], []
        for i in range(0, len(sparse), batch_size):
            z = sparse_input(_nchw(sparse[i:i + batch_size], self.dtype))
            d0 = self.scaffnet(z)
            d = d0
            if self.fusionnet is not None:
                d = self.fusionnet(_nchw(images[i:i + batch_size], self.dtype), z, d0)[2]
            out_d.append(d[:, 0].numpy())
            out_d0.append(d0[:, 0].numpy())
        return np.concatenate(out_d), np.concatenate(out_d0)


@dataclass
class Inference:
    depth: np.ndarray
    topology: np.ndarray


def infer(image: np.ndarray, sparse: np.ndarray, checkpoint) -> Inference:
    """Complete one frame: ``image`` (H, W, 3), ``sparse`` (H, W) in meters, 0 = missing."""
    model = checkpoint if isinstance(checkpoint, CompletionModel) else CompletionModel.from_checkpoint(checkpoint)
    d, d0 = model.predict(np.asarray(image)[None], np.asarray(sparse)[None])
    return Inference(d[0], d0[0])


def resample_sparse(dataset: Dataset, density: float, seed: int = 0,
                    strategy: SamplingStrategy | None = None) -> np.ndarray:
    """Fresh sparse maps for every frame at ``density``, using the dataset's
    sampling kind unless ``strategy`` is given."""
    if strategy is None:
        params = dict(dataset.manifest.generator.get("strategy", {}))
        params.setdefault("kind", "harris-kmeans")
        params["lines"] = None
        strategy = SamplingStrategy(**params)
    w, h = dataset.resolution
    strategy = replace(strategy, n=points_for_density(density, h, w))
    out = []
    for key in dataset.index:
        f = dataset.frame(*key)
        out.append(make_sparse(f.depth.astype(np.float64), f.image, strategy,
                               derive_seed(seed, "resample", density, *key)).values)
    return np.stack(out).astype(np.float32)


def evaluate_model(model: CompletionModel, dataset, config: RunConfig | None = None,
                   sparse: np.ndarray | None = None, out_dir=None, error_maps: bool = False,
                   which: str = "depth"):
    """Aggregate and per-frame metrics of ``model`` on every frame of ``dataset``.

    ``which`` selects the final depth or the ``topology`` (ScaffNet) output.
    """
    dataset = _load_dataset(dataset)
    arrays = dataset.stacked()
    if sparse is None:
        sparse = arrays["sparse"]
    depth_range = tuple(config.eval_range) if config is not None and config.eval_range else dataset.depth_range()
    d, d0 = model.predict(arrays["image"], sparse)
    pred = d0 if which == "topology" else d
    per_frame = {}
    for i, (s, j) in enumerate(dataset.index):
        name = f"{dataset.manifest.sequences[s]['name']}/{j:06d}"
        per_frame[name] = evaluate(pred[i], arrays["depth"][i], depth_range=depth_range)
    if out_dir is not None:
        out_dir = Path(out_dir)
        agg = write_metrics(per_frame, out_dir)
        if error_maps:
            (out_dir / "error_maps").mkdir(parents=True, exist_ok=True)
            vmax = float(np.percentile(np.abs(pred - arrays["depth"])[arrays["depth"] > 0], 99))
            for i, name in enumerate(per_frame):
                error_map(pred[i], arrays["depth"][i], path=out_dir / "error_maps" /
                          (name.replace("/", "_") + ".png"), vmax=vmax)
        return agg, per_frame
    return aggregate(per_frame.values()), per_frame


def visualize(model: CompletionModel, dataset, out_dir, count: int = 4) -> list:
    """Save image / sparse / topology / depth / error panels for a few frames."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    dataset = _load_dataset(dataset)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    picks = np.linspace(0, len(dataset) - 1, min(count, len(dataset))).round().astype(int)
    paths = []
    for i in picks:
        s, j = dataset.index[i]
        f = dataset.frame(s, j)
        d, d0 = model.predict(f.image[None], f.sparse[None])
        vmax = float(f.depth.max())
        panels = [("image", f.image, {}), ("sparse", np.ma.masked_equal(f.sparse, 0), {"vmax": vmax}),
                  ("topology", d0[0], {"vmax": vmax}), ("depth", d[0], {"vmax": vmax}),
                  ("ground truth", f.depth, {"vmax": vmax}),
                  ("|error|", error_map(d[0], f.depth), {})]
        fig, axes = plt.subplots(1, len(panels), figsize=(3 * len(panels), 2.6))
        for ax, (title, img, kw) in zip(axes, panels):
            ax.imshow(img, cmap=None if img.ndim == 3 else "magma_r", vmin=0, **kw)
            ax.set_title(title, fontsize=9)
            ax.axis("off")
        fig.tight_layout()
        path = out_dir / f"{dataset.manifest.sequences[s]['name']}_{j:06d}.png"
        fig.savefig(path, dpi=80)
        plt.close(fig)
        paths.append(path)
    return paths


# -- ablations ----------------------------------------------------------------

@dataclass
class AblationReport:
    suite: str
    rows: list                      # (variant name, MetricSet)
    checks: list                    # (description, passed)
    notes: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "pass" if all(ok for _, ok in self.checks) else "fail"

    def mae(self, variant: str) -> float:
        return dict(self.rows)[variant].mae

    def to_markdown(self) -> str:
        lines = [f"# Ablation: {self.suite}", "",
                 "| variant | MAE (mm) | RMSE (mm) | iMAE (1/km) | iRMSE (1/km) |",
                 "|---|---:|---:|---:|---:|"]
        for name, m in self.rows:
            lines.append(f"| {name} | {m.mae:.2f} | {m.rmse:.2f} | {m.imae:.3f} | {m.irmse:.3f} |")
        lines += ["", "| check | result |", "|---|---|"]
        lines += [f"| {desc} | {'pass' if ok else 'fail'} |" for desc, ok in self.checks]
        lines += [""] + [f"- {n}" for n in self.notes] + ["", f"**Verdict: {self.verdict}**", ""]
        return "\n".join(lines)

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.md").write_text(self.to_markdown())
        with open(out_dir / "report.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["variant", "mae", "rmse", "imae", "irmse", "count"])
            for name, m in self.rows:
                writer.writerow([name, m.mae, m.rmse, m.imae, m.irmse, m.count])
        return out_dir / "report.md"


def relative_gap(worse: float, better: float) -> float:
    return (worse - better) / worse


def run_ablation(suite: str, config: RunConfig, out_dir=None, scaffnet: Checkpoint | None = None,
                 fusionnet: Checkpoint | None = None) -> AblationReport:
    """Train (tiny) variants as needed and compare them on ``config.val_dataset``."""
    if suite not in SUITES:
        raise ValueError(f"unknown ablation suite {suite!r}; expected one of {SUITES}")
    out_dir = Path(out_dir) if out_dir is not None else None
    sub = (lambda name: out_dir / name) if out_dir is not None else (lambda name: None)
    val = _load_dataset(config.val_dataset or config.dataset)

    def need_scaffnet():
        if scaffnet is not None:
            return scaffnet
        if config.scaffnet_checkpoint:
            return Checkpoint.load(config.scaffnet_checkpoint)
        raise ValueError(f"suite {suite!r} needs config.scaffnet_checkpoint")

    if suite == "spp-on-off":
        rows = []
        for name, use_spp in (("with SPP", True), ("without SPP", False)):
            ckpt = train_scaffnet(replace(config, use_spp=use_spp), out_dir=sub(name.replace(" ", "_")))
            rows.append((name, evaluate_model(CompletionModel.from_checkpoint(ckpt), val, config)[0]))
        gap = relative_gap(rows[1][1].mae, rows[0][1].mae)
        report = AblationReport(suite, rows, [("MAE with SPP < MAE without SPP", rows[0][1].mae < rows[1][1].mae)],
                                [f"relative MAE reduction from SPP: {100 * gap:.1f}%"])
    elif suite == "output-head":
        base = need_scaffnet()
        rows = []
        for name, head in (("alpha-beta", "alpha-beta"), ("direct", "direct")):
            ckpt = train_fusionnet(replace(config, head=head), base, out_dir=sub(head))
            rows.append((name, evaluate_model(CompletionModel.from_checkpoint(ckpt), val, config)[0]))
        report = AblationReport(suite, rows, [("alpha-beta MAE <= direct MAE", rows[0][1].mae <= rows[1][1].mae)])
    else:
        base = need_scaffnet()
        fused = fusionnet if fusionnet is not None else train_fusionnet(config, base, out_dir=sub("fusionnet"))
        model = CompletionModel.from_checkpoint(fused)
        rows, scaff_mae, fusion_mae = [], [], []
        for density in SWEEP_DENSITIES:
            z = resample_sparse(val, density, config.seed)
            for which, maes, label in (("topology", scaff_mae, "ScaffNet"), ("depth", fusion_mae, "FusionNet")):
                m = evaluate_model(model, val, config, sparse=z, which=which)[0]
                maes.append(m.mae)
                rows.append((f"{label} @ {100 * density:.2f}%", m))
        scaff_deg = scaff_mae[-1] / scaff_mae[0] - 1
        fusion_deg = fusion_mae[-1] / fusion_mae[0] - 1
        report = AblationReport(suite, rows, [
            ("ScaffNet MAE increases as density decreases", scaff_mae[0] < scaff_mae[1] < scaff_mae[2]),
            ("FusionNet MAE increases as density decreases", fusion_mae[0] < fusion_mae[1] < fusion_mae[2]),
            ("ScaffNet degrades faster than FusionNet", scaff_deg > fusion_deg)],
            [f"relative MAE increase 0.5% -> 0.05%: ScaffNet {100 * scaff_deg:.1f}%, "
             f"FusionNet {100 * fusion_deg:.1f}%"])
    if out_dir is not None:
        report.write(out_dir)
    return report
