"""Training: noise schedules, the two objectives, and the adapter/LoRA optimizer loop.

The backbone stays frozen; only adapter and LoRA parameters receive AdamW
updates. The UNet family trains with the epsilon-prediction objective on a
discrete schedule, the DiT family with conditional flow matching on the
linear interpolation path. All randomness flows through the state's single
generator, so serial trajectories are bit-reproducible and resumable.
"""

from __future__ import annotations

import base64
import math
import time
from dataclasses import dataclass, field

import torch
from torch import nn

from . import checkpoint as ckpt
from .degradation import TrainSample
from .errors import CheckpointShapeError, ConfigError, DomainError, FrozenParameterError
from .model import (
    RestorationModel,
    base_checksum,
    freeze_backbone,
    trainable_parameters,
)
from .rng import make_generator


@dataclass
class NoiseSchedule:
    """Forward-corruption coefficients.

    ``ddpm_linear`` carries per-step betas with their cumulative products;
    ``flow_linear`` is the continuous linear interpolation path and keeps no
    tables.
    """

    kind: str
    T_train: int
    betas: torch.Tensor | None = None
    alphas: torch.Tensor | None = None
    alpha_bars: torch.Tensor | None = None

    def alpha_bar(self, t) -> torch.Tensor:
        """alpha_bar_t for integer t in [0, T_train]; alpha_bar_0 = 1."""
        tt = torch.as_tensor(t, dtype=torch.long)
        if (tt < 0).any() or (tt > self.T_train).any():
            raise DomainError(f"timestep out of range [0, {self.T_train}]")
        padded = torch.cat([torch.ones(1, dtype=torch.float64), self.alpha_bars])
        return padded[tt]


def make_schedule(kind: str, T_train: int = 1000) -> NoiseSchedule:
    if T_train < 1:
        raise DomainError(f"T_train must be >= 1, got {T_train}")
    if kind == "ddpm_linear":
        betas = torch.linspace(1e-4, 0.02, T_train, dtype=torch.float64)
        alphas = 1.0 - betas
        return NoiseSchedule(kind, T_train, betas, alphas, torch.cumprod(alphas, dim=0))
    if kind == "flow_linear":
        return NoiseSchedule(kind, T_train)
    raise ConfigError(f"unknown schedule kind {kind!r}")


def _lq_latent(model, lq: torch.Tensor | None):
    if lq is None or getattr(model, "stem", None) is None:
        return None
    return model.encode_lq(lq)


def _check_finite(loss: torch.Tensor, t, tag: str) -> None:
    if not torch.isfinite(loss):
        raise DomainError(f"{tag} produced a non-finite loss at t={t}; |loss|={loss}")


def ddpm_loss(model, x0: torch.Tensor, lq: torch.Tensor | None, prompt_tokens,
              schedule: NoiseSchedule, rng: torch.Generator,
              t_fixed=None, noise_fixed: torch.Tensor | None = None) -> torch.Tensor:
    """mean || eps_hat(z_t, t, prompt, lq) - eps ||^2 with t ~ U{1..T}.

    ``t_fixed`` / ``noise_fixed`` pin the draws for gradient checking.
    """
    if getattr(model, "prediction", "epsilon") != "epsilon":
        raise ConfigError("ddpm_loss requires an epsilon-prediction model")
    if schedule.kind != "ddpm_linear":
        raise ConfigError("ddpm_loss requires a ddpm schedule")
    b = x0.shape[0]
    if t_fixed is None:
        t = torch.randint(1, schedule.T_train + 1, (b,), generator=rng)
    else:
        t = torch.as_tensor(t_fixed, dtype=torch.long).expand(b).clone()
    eps = torch.randn(x0.shape, generator=rng, dtype=x0.dtype) if noise_fixed is None else noise_fixed
    ab = schedule.alpha_bar(t).to(x0.dtype).view(b, *([1] * (x0.dim() - 1)))
    z_t = torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * eps
    pred = model(z_t, t, prompt_tokens, _lq_latent(model, lq))
    loss = torch.mean((pred - eps) ** 2)
    _check_finite(loss, t.tolist(), "ddpm_loss")
    return loss


def cfm_loss(model, x0: torch.Tensor, lq: torch.Tensor | None, prompt_tokens,
             rng: torch.Generator, t_fixed=None,
             noise_fixed: torch.Tensor | None = None) -> torch.Tensor:
    """Conditional flow matching on the linear path x_t = (1-t) x0 + t eps.

    The regression target is the path velocity eps - x0.
    """
    if getattr(model, "prediction", "velocity") != "velocity":
        raise ConfigError("cfm_loss requires a velocity-prediction model")
    b = x0.shape[0]
    if t_fixed is None:
        t = torch.rand(b, generator=rng, dtype=torch.float64).clamp(1e-6, 1.0 - 1e-6)
    else:
        t = torch.as_tensor(t_fixed, dtype=torch.float64).expand(b).clone()
    eps = torch.randn(x0.shape, generator=rng, dtype=x0.dtype) if noise_fixed is None else noise_fixed
    tb = t.to(x0.dtype).view(b, *([1] * (x0.dim() - 1)))
    x_t = (1.0 - tb) * x0 + tb * eps
    target = eps - x0
    pred = model(x_t, t, prompt_tokens, _lq_latent(model, lq))
    loss = torch.mean((pred - target) ** 2)
    _check_finite(loss, t.tolist(), "cfm_loss")
    return loss


@dataclass
class TrainState:
    model: RestorationModel
    optimizer: torch.optim.AdamW
    schedule: NoiseSchedule
    rng: torch.Generator
    lr: float
    batch_size: int
    grad_clip: float
    step: int = 0
    loss_ema: float | None = None
    base_digest: str = ""
    config_snapshot: dict = field(default_factory=dict)


def make_train_state(model: RestorationModel, *, seed: int, lr: float = 1e-5,
                     batch_size: int = 16, grad_clip: float = 1.0,
                     T_train: int = 1000, config_snapshot: dict | None = None) -> TrainState:
    """Freeze the backbone and set up AdamW over adapter + LoRA parameters."""
    freeze_backbone(model)
    params = [p for _, p in trainable_parameters(model)]
    if not params:
        raise ConfigError("model has no trainable adapter/LoRA parameters")
    optimizer = torch.optim.AdamW(params, lr=lr, betas=(0.9, 0.999), weight_decay=0.01)
    kind = "ddpm_linear" if model.prediction == "epsilon" else "flow_linear"
    return TrainState(
        model=model,
        optimizer=optimizer,
        schedule=make_schedule(kind, T_train),
        rng=make_generator("train", seed),
        lr=lr,
        batch_size=batch_size,
        grad_clip=grad_clip,
        base_digest=base_checksum(model),
        config_snapshot=dict(config_snapshot or {}),
    )


def _to_model_space(img: torch.Tensor) -> torch.Tensor:
    return img * 2.0 - 1.0


def train_step(state: TrainState, batch: list[TrainSample]) -> tuple[TrainState, float]:
    """One AdamW update on the batch; honors each sample's hq/lq target."""
    if not batch:
        raise DomainError("train_step requires a non-empty batch")
    model = state.model
    codec = model.codec
    hq = torch.stack([s.hq for s in batch])
    lq = torch.stack([s.lq for s in batch])
    use_lq_target = torch.tensor([s.target == "lq" for s in batch])
    x0_img = torch.where(use_lq_target.view(-1, 1, 1, 1), lq, hq)
    x0 = codec.encode(_to_model_space(x0_img))
    lq_pm1 = _to_model_space(lq)
    prompts = [s.prompt_tokens for s in batch]

    if model.prediction == "epsilon":
        loss = ddpm_loss(model, x0, lq_pm1, prompts, state.schedule, state.rng)
    else:
        loss = cfm_loss(model, x0, lq_pm1, prompts, state.rng)

    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    if state.grad_clip > 0:
        nn.utils.clip_grad_norm_(
            [p for _, p in trainable_parameters(model)], state.grad_clip
        )
    state.optimizer.step()
    state.step += 1
    val = float(loss.detach())
    state.loss_ema = val if state.loss_ema is None else 0.99 * state.loss_ema + 0.01 * val
    return state, val


def verify_frozen(state: TrainState) -> None:
    if base_checksum(state.model) != state.base_digest:
        raise FrozenParameterError(
            "backbone base parameters changed during training (checksum mismatch)"
        )


def train_loop(state: TrainState, dataset: list[TrainSample], steps: int,
               log_fn=None, frozen_check_every: int = 500) -> TrainState:
    """Run ``steps`` updates with batches drawn from the state's generator."""
    if not dataset:
        raise DomainError("training dataset is empty")
    for _ in range(steps):
        idx = torch.randint(len(dataset), (state.batch_size,), generator=state.rng)
        batch = [dataset[i] for i in idx.tolist()]
        state, loss = train_step(state, batch)
        if log_fn is not None:
            log_fn({"step": state.step, "loss": loss, "loss_ema": state.loss_ema,
                    "lr": state.lr, "timestamp": time.time()})
        if frozen_check_every and state.step % frozen_check_every == 0:
            verify_frozen(state)
    verify_frozen(state)
    return state


def _optimizer_arrays(state: TrainState) -> dict[str, torch.Tensor]:
    arrays: dict[str, torch.Tensor] = {}
    named = trainable_parameters(state.model)
    for name, p in named:
        st = state.optimizer.state.get(p)
        if not st:
            continue
        arrays[f"optim/{name}/step"] = torch.as_tensor(st["step"], dtype=torch.float32).reshape(1)
        arrays[f"optim/{name}/exp_avg"] = st["exp_avg"]
        arrays[f"optim/{name}/exp_avg_sq"] = st["exp_avg_sq"]
    return arrays


def save_train_state(state: TrainState, path) -> None:
    """Write the versioned checkpoint container (params, moments, rng, step)."""
    arrays = {f"param/{n}": p.detach() for n, p in state.model.named_parameters()}
    arrays.update(_optimizer_arrays(state))
    header = {
        "step": state.step,
        "loss_ema": state.loss_ema,
        "lr": state.lr,
        "batch_size": state.batch_size,
        "grad_clip": state.grad_clip,
        "schedule": {"kind": state.schedule.kind, "T_train": state.schedule.T_train},
        "rng_state": base64.b64encode(state.rng.get_state().numpy().tobytes()).decode(),
        "base_digest": state.base_digest,
        "config": state.config_snapshot,
    }
    ckpt.write_container(path, header, arrays)


def load_train_state(path, model: RestorationModel) -> TrainState:
    """Restore a training run into a freshly built model of the same config."""
    header, arrays = ckpt.read_container(path)
    named = dict(model.named_parameters())
    for name in named:
        key = f"param/{name}"
        if key not in arrays:
            raise CheckpointShapeError(f"checkpoint is missing array {key!r}")
    with torch.no_grad():
        for key, value in arrays.items():
            if not key.startswith("param/"):
                continue
            name = key[len("param/"):]
            if name not in named:
                raise CheckpointShapeError(f"checkpoint array {key!r} has no matching parameter")
            if tuple(named[name].shape) != tuple(value.shape):
                raise CheckpointShapeError(
                    f"array {key!r}: checkpoint shape {tuple(value.shape)} != model shape "
                    f"{tuple(named[name].shape)}"
                )
            named[name].copy_(value)

    freeze_backbone(model)
    params = [p for _, p in trainable_parameters(model)]
    optimizer = torch.optim.AdamW(params, lr=header["lr"], betas=(0.9, 0.999), weight_decay=0.01)
    for name, p in trainable_parameters(model):
        step_key = f"optim/{name}/step"
        if step_key in arrays:
            optimizer.state[p] = {
                "step": torch.as_tensor(arrays[step_key].reshape(()), dtype=torch.float32),
                "exp_avg": arrays[f"optim/{name}/exp_avg"].clone(),
                "exp_avg_sq": arrays[f"optim/{name}/exp_avg_sq"].clone(),
            }
    rng = torch.Generator()
    raw = base64.b64decode(header["rng_state"])
    rng.set_state(torch.frombuffer(bytearray(raw), dtype=torch.uint8).clone())
    state = TrainState(
        model=model,
        optimizer=optimizer,
        schedule=make_schedule(header["schedule"]["kind"], header["schedule"]["T_train"]),
        rng=rng,
        lr=header["lr"],
        batch_size=header["batch_size"],
        grad_clip=header["grad_clip"],
        step=header["step"],
        loss_ema=header["loss_ema"],
        base_digest=header["base_digest"],
        config_snapshot=header.get("config", {}),
    )
    if base_checksum(model) != state.base_digest:
        raise FrozenParameterError(
            "restored backbone checksum does not match the checkpoint's record"
        )
    return state
