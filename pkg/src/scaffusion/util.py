import hashlib

import numpy as np
import torch


def derive_seed(seed: int, *purpose) -> int:
    """Stable 63-bit seed from a root seed and a purpose tag."""
    key = ":".join([str(int(seed))] + [str(p) for p in purpose])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little") >> 1


def rng(seed: int, *purpose) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *purpose))


def state_hash(module: torch.nn.Module) -> str:
    """Digest of every parameter and buffer, bit-exact."""
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
