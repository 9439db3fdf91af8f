"""Training checkpoints as a single ``.npz``: a JSON metadata record plus flat,
named weight and optimizer arrays. Nothing is pickled."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    stage: str
    config: dict
    networks: dict                 # network name -> architecture config dict
    weights: dict                  # "<network>/<parameter name>" -> array
    optimizer: dict | None = None  # {"state": {key: array}, "param_groups": [...]}
    step: int = 0
    epoch: int = 0
    rng_state: np.ndarray | None = None
    metrics: dict = field(default_factory=dict)

    def network_state(self, name: str) -> dict:
        prefix = name + "/"
        state = {k[len(prefix):]: torch.from_numpy(v.copy())
                 for k, v in self.weights.items() if k.startswith(prefix)}
        if not state:
            raise KeyError(f"checkpoint has no weights for network {name!r}")
        return state

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"version": FORMAT_VERSION, "stage": self.stage, "config": self.config,
                "networks": self.networks, "step": self.step, "epoch": self.epoch,
                "metrics": self.metrics,
                "param_groups": self.optimizer["param_groups"] if self.optimizer else None}
        arrays = {f"weights/{k}": v for k, v in self.weights.items()}
        if self.optimizer:
            arrays.update({f"optim/{k}": v for k, v in self.optimizer["state"].items()})
        if self.rng_state is not None:
            arrays["rng_state"] = self.rng_state
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as f:
            np.savez(f, meta=np.array(json.dumps(meta)), **arrays)
        os.replace(tmp, path)
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("version") != FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
            weights = {k[8:]: z[k] for k in z.files if k.startswith("weights/")}
            optim_state = {k[6:]: z[k] for k in z.files if k.startswith("optim/")}
            rng_state = z["rng_state"] if "rng_state" in z.files else None
        optimizer = None
        if meta["param_groups"] is not None:
            optimizer = {"state": optim_state, "param_groups": meta["param_groups"]}
        return cls(meta["stage"], meta["config"], meta["networks"], weights, optimizer,
                   meta["step"], meta["epoch"], rng_state, meta.get("metrics", {}))


def module_weights(name: str, module: torch.nn.Module) -> dict:
    return {f"{name}/{k}": v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def optimizer_to_arrays(optimizer: torch.optim.Optimizer) -> dict:
    sd = optimizer.state_dict()
    state = {f"{idx}/{key}": (v.detach().cpu().numpy().copy() if torch.is_tensor(v) else np.asarray(v))
             for idx, s in sd["state"].items() for key, v in s.items()}
    groups = [{k: (list(v) if isinstance(v, tuple) else v) for k, v in g.items()}
              for g in sd["param_groups"]]
    return {"state": state, "param_groups": groups}


def optimizer_from_arrays(optimizer: torch.optim.Optimizer, saved: dict):
    state = {}
    for key, arr in saved["state"].items():
        idx, name = key.split("/", 1)
        state.setdefault(int(idx), {})[name] = torch.from_numpy(np.array(arr))
    groups = [dict(g, betas=tuple(g["betas"])) if "betas" in g else dict(g)
              for g in saved["param_groups"]]
    optimizer.load_state_dict({"state": state, "param_groups": groups})
