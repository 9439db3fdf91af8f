"""The geometry behind the unsupervised loss, on one rendered triplet.

Warps the neighbors into the middle frame with ground-truth depth and pose,
then with a perturbed depth, and shows where the topology prior would engage.

    python3 demos/warp_and_prior.py
"""
import tempfile

import numpy as np
import torch

from scaffusion import losses
from scaffusion.data import Dataset, generate_dataset
from scaffusion.geometry import reconstruct, visibility_mask

with tempfile.TemporaryDirectory() as tmp:
    generate_dataset(tmp, seed=5, layout="room", frames=3, width=96, height=64)
    prev, cur, nxt = Dataset(tmp).triplet(0, 1)

t = lambda a: torch.from_numpy(np.asarray(a, dtype=np.float64))
image = t(cur.image).permute(2, 0, 1)[None]
others = [t(f.image).permute(2, 0, 1)[None] for f in (prev, nxt)]
depth = t(cur.depth)[None, None]
K = t(cur.intrinsics.matrix())[None]
# relative pose: target camera -> adjacent camera
poses = [t(f.pose.matrix() @ np.linalg.inv(cur.pose.matrix()))[None] for f in (prev, nxt)]

for name, other, pose, f in zip(("previous", "next"), others, poses, (prev, nxt)):
    recon, valid = reconstruct(other, depth, K, pose)
    seen = valid & visibility_mask(depth, t(f.depth)[None, None], K, pose)
    err = (recon - image).abs().mean(1, keepdim=True)
    print(f"{name:>8} frame: valid {valid.float().mean():.1%}, unoccluded {seen.float().mean():.1%}, "
          f"L1 on unoccluded pixels {err[seen].mean():.4f}")

# a prior that is right on the left half and wrong on the right half
noisy = depth.clone()
noisy[..., 48:] *= 1.3
warp = lambda d: [reconstruct(o, d, K, p) for o, p in zip(others, poses)]
w_gt, w_noisy = warp(depth), warp(noisy)
mask = losses.prior_mask(image, [r for r, _ in w_noisy], [r for r, _ in w_gt],
                         [v for _, v in w_noisy], [v for _, v in w_gt])
W = mask.W[0, 0].numpy()
print(f"prior pulls on {W.mean():.1%} of pixels: left half {W[:, :48].mean():.1%}, "
      f"right half {W[:, 48:].mean():.1%}")
print(f"l_tp toward the correct prior: {losses.topology_prior_loss(noisy, depth, mask):.3f} m")
