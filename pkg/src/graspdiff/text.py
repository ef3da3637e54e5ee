"""Pluggable text-context providers for the denoiser's cross-attention.

The real system would plug a pretrained sentence encoder in here; the shipped
embedder is a deterministic hash-based stand-in good enough for training and
testing the conditioning pathway.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashTextEmbedder:
    """Maps each lowercase token to a fixed unit Gaussian vector keyed by its
    sha256 digest; captions become zero-padded (max_tokens, context_dim)
    arrays.  The empty caption maps to the all-zero context, which doubles as
    the unconditional guidance branch.
    """

    def __init__(self, context_dim: int = 64, max_tokens: int = 16, seed: int = 0):
        if context_dim < 1 or max_tokens < 1:
            raise ValueError("context_dim and max_tokens must be positive")
        self.context_dim = context_dim
        self.max_tokens = max_tokens
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}:{token}".encode()).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self.context_dim).astype(np.float32)
            vec /= np.linalg.norm(vec)
            self._cache[token] = vec
        return vec

    def embed(self, caption: str) -> np.ndarray:
        """(max_tokens, context_dim) float32 context for one caption."""
        context = np.zeros((self.max_tokens, self.context_dim), dtype=np.float32)
        tokens = _TOKEN_RE.findall(caption.lower())[: self.max_tokens]
        for i, token in enumerate(tokens):
            context[i] = self._token_vector(token)
        return context

    def embed_batch(self, captions: list[str]) -> np.ndarray:
        return np.stack([self.embed(c) for c in captions])
