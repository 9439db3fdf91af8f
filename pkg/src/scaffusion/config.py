"""Run configuration and its key-value text format.

One ``key = value`` per line; ``#`` starts a comment. Values are numbers,
``true``/``false``, bare strings, or comma-separated lists (``5,7,9,11``).
Unknown keys and ill-typed values are rejected with the offending key path.
See README.md for the full key list.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

STAGES = ("scaffnet", "fusionnet")
POSE_SOURCES = ("ground-truth", "learned")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    stage: str = "scaffnet"
    dataset: str = ""
    val_dataset: str = ""
    scaffnet_checkpoint: str = ""
    out_dir: str = ""

    preset: str = "tiny"
    use_spp: bool = True
    spp_kernels: tuple = (5, 7, 9, 11, 13)
    head: str = "alpha-beta"

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    lr_halve_epochs: tuple = ()
    batch_size: int = 8
    crop: tuple = ()
    epochs: int = 10
    max_steps: int = 0
    tp_start_step: int = -1
    pose_source: str = "ground-truth"
    finetune_scaffnet: bool = False
    augment_flip: bool | None = None
    seed: int = 0

    loss_preset: str = "auto"
    w_ph: float | None = None
    w_co: float | None = None
    w_st: float | None = None
    w_sz: float | None = None
    w_sm: float | None = None
    w_tp: float | None = None

    eval_range: tuple = ()
    dtype: str = "float32"
    deterministic: bool = True
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(key, msg):
            raise ConfigError(f"config.{key}: {msg}")

        if self.stage not in STAGES:
            bad("stage", f"expected one of {STAGES}, got {self.stage!r}")
        if self.pose_source not in POSE_SOURCES:
            bad("pose_source", f"expected one of {POSE_SOURCES}, got {self.pose_source!r}")
        if self.preset not in ("tiny", "paper"):
            bad("preset", f"expected 'tiny' or 'paper', got {self.preset!r}")
        if self.lr < 0:
            bad("lr", "learning rate must be >= 0")
        if self.epochs < 1:
            bad("epochs", "must be >= 1")
        if self.batch_size < 1:
            bad("batch_size", "must be >= 1")
        if self.crop and len(self.crop) != 2:
            bad("crop", "expected two values: height,width")
        if self.eval_range and len(self.eval_range) != 2:
            bad("eval_range", "expected two values: min,max")
        if self.dtype not in ("float32", "float64"):
            bad("dtype", "expected float32 or float64")
        if self.loss_preset not in ("auto", "scanline", "corner"):
            bad("loss_preset", "expected auto, scanline or corner")
        for name in ("w_ph", "w_co", "w_st", "w_sz", "w_sm", "w_tp"):
            v = getattr(self, name)
            if v is not None and v < 0:
                bad(name, "loss weights must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in d.items():
            if key not in known:
                raise ConfigError(f"config.{key}: unknown key")
            kwargs[key] = _coerce(key, known[key].type, value)
        return cls(**kwargs)

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_dict({**self.to_dict(), **changes})


def _coerce(key, type_name, value):
    def fail(expected):
        raise ConfigError(f"config.{key}: expected {expected}, got {value!r}")

    optional = "None" in str(type_name)
    if value is None or (optional and value in ("", "none", "None", "auto")):
        if optional:
            return None
        fail(type_name)
    t = str(type_name).replace(" | None", "")
    if t == "bool":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
            return value.lower() in ("true", "1", "yes")
        fail("a boolean")
    if t == "int":
        if isinstance(value, bool):
            fail("an integer")
        try:
            f = float(value)
        except (TypeError, ValueError):
            fail("an integer")
        if f != int(f):
            fail("an integer")
        return int(f)
    if t == "float":
        try:
            return float(value)
        except (TypeError, ValueError):
            fail("a number")
    if t == "tuple":
        if isinstance(value, str):
            value = [v for v in value.replace("(", "").replace(")", "").split(",") if v.strip()]
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, (list, tuple)):
            fail("a comma-separated list")
        out = []
        for v in value:
            try:
                f = float(v)
            except (TypeError, ValueError):
                fail("a list of numbers")
            out.append(int(f) if f == int(f) else f)
        return tuple(out)
    return str(value)


def parse_config_text(text: str) -> RunConfig:
    d = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass
        d[key] = value
    return RunConfig.from_dict(d)


def load_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text())


def dump_config(config: RunConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if value is None:
            value = "auto"
        elif isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
