"""restokit: desk-scale diffusion restoration adapters.

Micro UNet/DiT denoisers with block-inserted restoration adapters, LoRA
fine-tuning of self-attention, a staged synthetic degradation pipeline, and
reverse-process samplers wrapped by a fidelity-preserving per-step adjustment.
"""

from .adapters import (
    AdapterStack,
    InsertionPlan,
    LqEncoder,
    RestorationAdapter,
    build_adapter_stack,
    build_insertion_plan,
    chain_adapters,
)
from .backbones import BackboneConfig, build_backbone, timestep_embedding
from .config import RunConfig, load_config, save_config
from .degradation import (
    DegradationRecipe,
    TrainSample,
    apply_recipe,
    caption_policy,
    compression_sim,
    make_train_sample,
    sample_recipe,
)
from .lora import LoraWeights, inject_lora, lora_forward, merge_lora
from .metrics import psnr, ssim
from .model import (
    RestorationModel,
    base_checksum,
    build_model,
    freeze_backbone,
    param_count,
)
from .sampling import (
    DiffusionState,
    GuidanceParams,
    RssParams,
    cfg_combine,
    g_map,
    rss_adjust,
    run_sampler,
    sample,
    sampler_step,
)
from .training import (
    NoiseSchedule,
    TrainState,
    cfm_loss,
    ddpm_loss,
    load_train_state,
    make_schedule,
    make_train_state,
    save_train_state,
    train_loop,
    train_step,
)

__version__ = "0.1.0"
