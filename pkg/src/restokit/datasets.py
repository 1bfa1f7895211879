"""Corpus synthesis and manifest-driven pair construction.

A dataset manifest is JSON-lines with one record per sample:
``{"hq_path": ..., "caption": ..., "seed": ...}``. Degraded counterparts are
derived from the per-sample seed, so a manifest plus the degradation settings
fully determines every training pair.
"""

from __future__ import annotations

from pathlib import Path

from .config import DegradationSettings
from .degradation import TrainSample, apply_recipe, make_train_sample, sample_recipe
from .imageio import read_png, write_jsonl, write_png
from .rng import derive_seed
from .text import tokenize
from .textures import generate_texture


def synthesize_corpus(out_dir, count: int, seed: int, size: int = 32) -> Path:
    """Write ``count`` procedural HQ textures plus the manifest; returns its path."""
    out = Path(out_dir)
    hq_dir = out / "hq"
    rows = []
    for i in range(count):
        img, caption = generate_texture(seed, i, size)
        name = f"{i:05d}.png"
        write_png(hq_dir / name, img)
        rows.append({
            "hq_path": str(Path("hq") / name),
            "caption": caption,
            "seed": derive_seed(seed, "sample", i),
        })
    manifest = out / "manifest.jsonl"
    write_jsonl(manifest, rows)
    return manifest


def load_manifest(manifest_path) -> list[dict]:
    from .imageio import read_jsonl

    return read_jsonl(manifest_path)


def build_samples(manifest_path, settings: DegradationSettings) -> list[TrainSample]:
    """Materialize (hq, lq, prompt, target) for every manifest row."""
    root = Path(manifest_path).parent
    samples = []
    for row in load_manifest(manifest_path):
        hq = read_png(root / row["hq_path"])
        samples.append(make_train_sample(
            hq,
            tokenize(row["caption"]),
            row["seed"],
            profile=settings.profile,
            p_null=settings.p_null,
            p_degraded=settings.p_degraded,
            second_order=settings.second_order,
        ))
    return samples


def degrade_corpus(manifest_path, out_dir, settings: DegradationSettings) -> None:
    """Write LQ PNGs plus a recipes.jsonl audit next to them."""
    root = Path(manifest_path).parent
    out = Path(out_dir)
    lq_dir = out / "lq"
    audit = []
    for row in load_manifest(manifest_path):
        hq = read_png(root / row["hq_path"])
        recipe = sample_recipe(row["seed"], settings.profile, settings.second_order)
        lq = apply_recipe(hq, recipe)
        name = Path(row["hq_path"]).name
        write_png(lq_dir / name, lq)
        audit.append({"lq_path": str(Path("lq") / name), "hq_path": row["hq_path"],
                      "seed": row["seed"], "recipe": recipe.to_dict()})
    write_jsonl(out / "recipes.jsonl", audit)
