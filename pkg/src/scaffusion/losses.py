"""Training objectives: the supervised normalized L1 for ScaffNet and the
four-term unsupervised objective for FusionNet.

All maps are ``(N, C, H, W)`` tensors; masks are boolean with one channel.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import torch
import torch.nn.functional as F

C1 = 0.01 ** 2
C2 = 0.03 ** 2


@dataclass
class LossWeights:
    w_ph: float = 1.00
    w_co: float = 0.20
    w_st: float = 0.40
    w_sz: float = 0.10
    w_sm: float = 0.01
    w_tp: float = 0.10

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be >= 0, got {value}")

    @classmethod
    def scanline(cls) -> "LossWeights":
        return cls()

    @classmethod
    def corner(cls) -> "LossWeights":
        """Indoor / VIO-corner preset: stronger sparse and smoothness terms."""
        return cls(w_sz=1.00, w_sm=0.40)


@dataclass
class LossReport:
    total: torch.Tensor
    l_ph: float = 0.0
    l_sz: float = 0.0
    l_sm: float = 0.0
    l_tp: float = 0.0
    l0: float | None = None
    w_coverage: float = 0.0
    tp_active: bool = False

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "total"}
        out["total"] = _scalar(self.total)
        return out


@dataclass
class PriorMask:
    W: torch.Tensor
    delta: torch.Tensor
    delta0: torch.Tensor

    @property
    def coverage(self) -> float:
        return float(self.W.float().mean())


def supervised_l0(d0: torch.Tensor, d_gt: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Mean of ``|d0 - d_gt| / d_gt`` over the (optionally masked) pixels."""
    if mask is None:
        if bool((d_gt <= 0).any()):
            raise ValueError("ground-truth depth must be positive everywhere")
        return ((d0 - d_gt).abs() / d_gt).mean()
    mask = mask.to(torch.bool)
    if bool((d_gt[mask] <= 0).any()):
        raise ValueError("ground-truth depth must be positive on the mask")
    gt = torch.where(mask, d_gt, torch.ones_like(d_gt))
    err = ((d0 - gt).abs() / gt) * mask
    return err.sum() / mask.sum().clamp(min=1)


def ssim(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-pixel SSIM with 3x3 mean windows (reflect-padded, same size as input)."""
    a = F.pad(a, (1, 1, 1, 1), mode="reflect")
    b = F.pad(b, (1, 1, 1, 1), mode="reflect")
    mu_a = F.avg_pool2d(a, 3, 1)
    mu_b = F.avg_pool2d(b, 3, 1)
    var_a = F.avg_pool2d(a * a, 3, 1) - mu_a ** 2
    var_b = F.avg_pool2d(b * b, 3, 1) - mu_b ** 2
    cov = F.avg_pool2d(a * b, 3, 1) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a ** 2 + mu_b ** 2 + C1) * (var_a + var_b + C2)
    return num / den


def photometric_loss(image: torch.Tensor, recons, masks, w_co: float = 0.20,
                     w_st: float = 0.40) -> torch.Tensor:
    """Mean over adjacent frames and valid pixels of ``w_co |I^ - I| + w_st (1 - SSIM)``."""
    total = image.new_zeros(())
    count = image.new_zeros(())
    for recon, mask in zip(recons, masks):
        m = mask.to(image.dtype)
        per_pixel = image.new_zeros(m.shape)
        if w_co:
            per_pixel = per_pixel + w_co * (recon - image).abs().mean(1, keepdim=True)
        if w_st:
            per_pixel = per_pixel + w_st * (1 - ssim(recon, image)).mean(1, keepdim=True)
        total = total + (per_pixel * m).sum()
        count = count + m.sum()
    if float(count) == 0:
        raise ValueError("degenerate warp: no valid reconstructed pixels")
    return total / count


def sparse_consistency_loss(depth: torch.Tensor, z: torch.Tensor,
                            validity: torch.Tensor | None = None) -> torch.Tensor:
    """Mean of ``|d - z|`` over the sparse domain."""
    validity = (z > 0) if validity is None else validity.to(torch.bool)
    n = validity.sum()
    if int(n) == 0:
        raise ValueError("sparse depth has no valid measurements")
    return ((depth - z).abs() * validity).sum() / n


def image_gradients(x: torch.Tensor):
    """Forward differences; the last column (x) / row (y) is zero."""
    gx = F.pad(x[..., :, 1:] - x[..., :, :-1], (0, 1, 0, 0))
    gy = F.pad(x[..., 1:, :] - x[..., :-1, :], (0, 0, 0, 1))
    return gx, gy


def smoothness_loss(depth: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
    """Edge-aware L1 on depth gradients, weighted by ``exp(-|image gradient|)``."""
    dx, dy = image_gradients(depth)
    ix, iy = image_gradients(image)
    wx = torch.exp(-ix.abs().mean(1, keepdim=True))
    wy = torch.exp(-iy.abs().mean(1, keepdim=True))
    return (wx * dx.abs() + wy * dy.abs()).mean()


def photometric_discrepancy(image: torch.Tensor, recons) -> torch.Tensor:
    """``|I_t - I^_tau|`` averaged over color channels and adjacent frames."""
    return torch.stack([(image - r).abs().mean(1, keepdim=True) for r in recons]).mean(0)


def prior_mask(image: torch.Tensor, recons, recons0, valid, valid0) -> PriorMask:
    """W = 1 where the refined depth reconstructs the image worse than the prior.

    W is zero wherever any reconstruction (for either depth, either frame) is
    invalid.
    """
    with torch.no_grad():
        delta = photometric_discrepancy(image, recons)
        delta0 = photometric_discrepancy(image, recons0)
        ok = torch.stack([v.to(torch.bool) for v in list(valid) + list(valid0)]).all(0)
        W = (delta > delta0) & ok
    return PriorMask(W, delta, delta0)


def topology_prior_loss(depth: torch.Tensor, d0: torch.Tensor, W) -> torch.Tensor:
    """Masked L1 pull toward the (fixed) prior, normalized by the mask size."""
    if isinstance(W, PriorMask):
        W = W.W
    W = W.to(depth.dtype)
    n = W.sum()
    if float(n) == 0:
        return depth.new_zeros(()) * depth.sum()
    return (W * (depth - d0.detach()).abs()).sum() / n


def total_loss(parts: dict, weights: LossWeights, step: int, tp_start_step: int,
               w_coverage: float = 0.0) -> LossReport:
    """Weighted sum of the four unsupervised terms; the prior joins at ``tp_start_step``."""
    tp_active = step >= tp_start_step
    total = (weights.w_ph * parts["l_ph"] + weights.w_sz * parts["l_sz"]
             + weights.w_sm * parts["l_sm"])
    if tp_active:
        total = total + weights.w_tp * parts["l_tp"]
    return LossReport(total=total if torch.is_tensor(total) else torch.tensor(float(total)),
                      l_ph=_scalar(parts["l_ph"]), l_sz=_scalar(parts["l_sz"]),
                      l_sm=_scalar(parts["l_sm"]), l_tp=_scalar(parts["l_tp"]),
                      w_coverage=w_coverage, tp_active=tp_active)


def _scalar(v) -> float:
    return float(v.detach()) if torch.is_tensor(v) else float(v)
