"""Flat declarative key=value configuration with dotted section names.

One file drives every command; unknown keys are rejected so experiment
records stay diff-able and typo-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .data import ValidationError
from .denoiser import DenoiserConfig
from .schedule import NoiseSchedule, make_linear_schedule
from .trainer import TrainConfig

DEFAULTS: dict[str, object] = {
    "seed": 0,
    "schedule.steps": 1000,
    "schedule.beta_start": 1e-4,
    "schedule.beta_end": 0.02,
    "schedule.sigma_mode": "beta",
    "model.image_size": 32,
    "model.base_channels": 32,
    "model.channel_multiples": (1, 2, 4),
    "model.resblocks_per_level": 1,
    "model.context_dim": 64,
    "model.context_tokens": 16,
    "model.condition_weights": (1.0, 1.0, 1.0),
    "model.num_heads": 1,
    "train.learning_rate": 1e-5,
    "train.batch_size": 8,
    "train.w_r": 1.0,
    "train.reg_mix_probability": 0.5,
    "train.freeze_policy": "all_trainable",
    "train.total_steps": 20000,
    "train.shared_reg_draws": True,
    "train.checkpoint_every": 2000,
    "sample.guidance_scale": 7.5,
    "sample.unconditional_caption": "",
    "video.frames": 8,
    "video.anchor_index": -1,  # -1 = middle frame
    "video.shared_initial_noise": True,
    "camera.fx": 40.0,
    "camera.fy": 40.0,
    "camera.cx": 16.0,
    "camera.cy": 16.0,
    "camera.width": 32,
    "camera.height": 32,
    "camera.rotation_wxyz": (0.0, 1.0, 0.0, 0.0),
    "camera.translation": (0.0, 0.0, 0.8),
    "trajectory.frames": 16,
    "trajectory.standoff": 0.25,
    "trajectory.vertical": (0.0, 0.0, 1.0),
    "render.line_width": 2.0,
    "paths.dataset": "",
    "paths.buffer": "",
    "paths.checkpoints": "",
    "paths.output": "",
}


def _coerce(key: str, raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValidationError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ValidationError(f"{key}: expected an integer, got {raw!r}")
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ValidationError(f"{key}: expected a number, got {raw!r}")
    if isinstance(default, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        try:
            elem = type(default[0])
            return tuple(elem(float(p)) if elem is int else elem(p) for p in parts)
        except ValueError:
            raise ValidationError(f"{key}: expected a number list, got {raw!r}")
    return raw


def parse_config_text(text: str) -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValidationError(f"config line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in DEFAULTS:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, DEFAULTS[key])
    return values


@dataclass
class PipelineConfig:
    values: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        merged = dict(DEFAULTS)
        merged.update(self.values)
        self.values = merged

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    def schedule(self) -> NoiseSchedule:
        return make_linear_schedule(int(self["schedule.steps"]),
                                    float(self["schedule.beta_start"]),
                                    float(self["schedule.beta_end"]),
                                    str(self["schedule.sigma_mode"]))

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            image_size=int(self["model.image_size"]),
            base_channels=int(self["model.base_channels"]),
            channel_multiples=tuple(self["model.channel_multiples"]),
            resblocks_per_level=int(self["model.resblocks_per_level"]),
            context_dim=int(self["model.context_dim"]),
            context_tokens=int(self["model.context_tokens"]),
            condition_weights=tuple(self["model.condition_weights"]),
            num_heads=int(self["model.num_heads"]),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=float(self["train.learning_rate"]),
            batch_size=int(self["train.batch_size"]),
            w_r=float(self["train.w_r"]),
            reg_mix_probability=float(self["train.reg_mix_probability"]),
            freeze_policy=str(self["train.freeze_policy"]),
            total_steps=int(self["train.total_steps"]),
            shared_reg_draws=bool(self["train.shared_reg_draws"]),
            checkpoint_every=int(self["train.checkpoint_every"]),
        )

    def path(self, key: str, must_exist: bool = True) -> Path:
        raw = str(self[f"paths.{key}"])
        if not raw:
            raise ValidationError(f"paths.{key} is not set in the config")
        p = Path(raw)
        if must_exist and not p.exists():
            raise ValidationError(f"paths.{key}: {p} does not exist")
        return p

    def to_text(self) -> str:
        lines = []
        for key in DEFAULTS:
            value = self.values[key]
            if isinstance(value, tuple):
                rendered = ", ".join(str(v) for v in value)
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            else:
                rendered = str(value)
            lines.append(f"{key} = {rendered}")
        return "\n".join(lines) + "\n"


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file {path} does not exist")
    return PipelineConfig(parse_config_text(path.read_text()))
