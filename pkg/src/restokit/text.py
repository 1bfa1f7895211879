"""Closed caption vocabulary and tokenization.

Captions are short word sequences over a fixed list: texture family names,
appearance attributes, and the degradation descriptors used by the training
caption policy. Token ids are indices into this list; the model's caption
embedding table must be at least this large.
"""

from __future__ import annotations

from .errors import TokenizationError

VOCAB: tuple[str, ...] = (
    # texture families
    "waves", "blobs", "stripes", "cells", "gradient", "ridges",
    # appearance attributes
    "smooth", "coarse", "fine", "soft", "sharp", "dense", "sparse",
    "bright", "dark", "warm", "cool", "muted", "vivid",
    "red", "green", "blue", "texture", "pattern", "diagonal", "round",
    # degradation descriptors
    "low", "quality", "resolution", "compressed", "noisy", "blurry",
)

_WORD_TO_ID = {w: i for i, w in enumerate(VOCAB)}

NULL_PROMPT: list[int] = []


def tokenize(text: str) -> list[int]:
    """Map a whitespace-separated caption to token ids.

    Raises TokenizationError for words outside the vocabulary; the empty
    string is the null prompt.
    """
    ids = []
    for word in text.lower().split():
        if word not in _WORD_TO_ID:
            raise TokenizationError(f"word {word!r} is not in the caption vocabulary")
        ids.append(_WORD_TO_ID[word])
    return ids


def detokenize(ids: list[int]) -> str:
    return " ".join(VOCAB[i] for i in ids)
