"""Run configuration: strict JSON schema, defaults, digest, and model assembly.

Defaults encode the reference operating point: LoRA rank 32, AdamW at 1e-5,
and sampling with 100 steps, cfg scale 7.5, adjustment weight 0.05 and
threshold 0.8. Loading rejects unknown keys so config drift fails loudly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .backbones import BackboneConfig
from .errors import ConfigError


def _strict(d: dict, path: str, allowed: set[str]) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object, got {type(d).__name__}")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")


@dataclass
class InsertionSettings:
    policy: str = "default"
    stride: int = 4
    blocks: list[int] | None = None


@dataclass
class LoraSettings:
    rank: int = 32
    alpha: float | None = None  # None means alpha = rank (unit scale)
    target: str = r"self_attn\.(q|k|v|out)$"


@dataclass
class DegradationSettings:
    profile: str = "train"
    p_null: float = 0.1
    p_degraded: float = 0.1
    second_order: bool = False


@dataclass
class TrainingSettings:
    lr: float = 1e-5
    batch: int = 16
    steps: int = 1000
    seed: int = 0
    grad_clip: float = 1.0
    T_train: int = 1000


@dataclass
class SamplingSettings:
    steps: int = 100
    cfg: float = 7.5
    rss_w: float = 0.05
    rss_a: float = 0.8
    rss_enabled: bool = True
    sampler: str = "ddim"
    seed: int = 0


@dataclass
class RunConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    codec: str = "identity"
    insertion: InsertionSettings = field(default_factory=InsertionSettings)
    lora: LoraSettings = field(default_factory=LoraSettings)
    degradation: DegradationSettings = field(default_factory=DegradationSettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    sampling: SamplingSettings = field(default_factory=SamplingSettings)

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        _strict(d, "config", {"backbone", "codec", "insertion", "lora", "degradation",
                              "training", "sampling"})
        cfg = RunConfig()
        if "backbone" in d:
            b = d["backbone"]
            _strict(b, "backbone", {f for f in BackboneConfig.__dataclass_fields__})
            if "unet_block_spec" in b:
                b = dict(b)
                b["unet_block_spec"] = tuple((k, m) for k, m in b["unet_block_spec"])
            cfg.backbone = BackboneConfig(**b)
        if "codec" in d:
            if d["codec"] not in ("identity", "patchify2x"):
                raise ConfigError(f"codec: unknown codec {d['codec']!r}")
            cfg.codec = d["codec"]
        for section, cls, attr in (
            ("insertion", InsertionSettings, "insertion"),
            ("lora", LoraSettings, "lora"),
            ("degradation", DegradationSettings, "degradation"),
            ("training", TrainingSettings, "training"),
            ("sampling", SamplingSettings, "sampling"),
        ):
            if section in d:
                _strict(d[section], section, set(cls.__dataclass_fields__))
                setattr(cfg, attr, cls(**d[section]))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.insertion.policy not in ("default", "unet_default", "dit_stride", "explicit", "none"):
            raise ConfigError(f"insertion.policy: unknown policy {self.insertion.policy!r}")
        if self.lora.rank < 0:
            raise ConfigError("lora.rank must be >= 0")
        if self.degradation.profile not in ("train", "eval_mixture", "eval_8x"):
            raise ConfigError(f"degradation.profile: unknown profile {self.degradation.profile!r}")
        if not (0 <= self.degradation.p_null and 0 <= self.degradation.p_degraded
                and self.degradation.p_null + self.degradation.p_degraded <= 1):
            raise ConfigError("degradation: p_null/p_degraded must be probabilities summing to <= 1")
        if self.training.steps < 0 or self.training.batch < 1:
            raise ConfigError("training: steps must be >= 0 and batch >= 1")
        if self.training.T_train < 1:
            raise ConfigError("training.T_train must be >= 1")
        if self.backbone.family == "unet" and self.backbone.ddpm_steps != self.training.T_train:
            raise ConfigError(
                "training.T_train must match backbone.ddpm_steps (the epsilon head's schedule)"
            )
        if self.sampling.sampler not in ("ancestral", "ddim", "stochastic"):
            raise ConfigError(f"sampling.sampler: unknown sampler {self.sampling.sampler!r}")
        if self.sampling.steps < 1:
            raise ConfigError("sampling.steps must be >= 1")
        if not 0 <= self.sampling.rss_a < 1:
            raise ConfigError("sampling.rss_a must lie in [0, 1)")
        if self.sampling.rss_w < 0 or self.sampling.cfg < 0:
            raise ConfigError("sampling.rss_w and sampling.cfg must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backbone"]["unet_block_spec"] = [list(x) for x in self.backbone.unet_block_spec]
        return d

    def digest(self) -> str:
        raw = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(raw).hexdigest()[:16]

    def build_model(self, dtype=None):
        from .model import build_model
        import torch

        policy = None if self.insertion.policy == "none" else self.insertion.policy
        return build_model(
            self.backbone,
            seed=self.training.seed,
            insertion_policy=policy,
            insertion_stride=self.insertion.stride,
            insertion_blocks=self.insertion.blocks,
            lora_rank=self.lora.rank,
            lora_alpha=self.lora.alpha,
            lora_target=self.lora.target if self.lora.rank else None,
            codec_name=self.codec,
            dtype=dtype or torch.float32,
        )


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config root must be a JSON object")
    try:
        return RunConfig.from_dict(raw)
    except TypeError as e:
        raise ConfigError(f"{path}: {e}") from e


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
