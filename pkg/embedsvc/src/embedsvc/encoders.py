"""Sentence encoders behind the service.

Two backends: a dependency-free hashed-feature encoder that works anywhere,
and a sentence-transformer wrapper for real neural embeddings when model
weights are available locally. Both return L2-normalized float vectors and are
deterministic for a fixed model version.
"""

from __future__ import annotations

import hashlib
import re
from abc import ABC, abstractmethod

import numpy as np

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)

DEFAULT_HASHED_DIM = 512


class EncoderError(RuntimeError):
    pass


class Encoder(ABC):
    """Text to fixed-dimension unit vectors; deterministic by contract."""

    id: str
    dim: int

    @abstractmethod
    def encode(self, texts: list[str]) -> np.ndarray:
        """Return an (n, dim) array of L2-normalized rows."""


def _bucket_and_sign(feature: str, dim: int) -> tuple[int, float]:
    digest = hashlib.sha256(feature.encode("utf-8")).digest()
    bucket = int.from_bytes(digest[:8], "big") % dim
    sign = 1.0 if digest[8] & 1 else -1.0
    return bucket, sign


class HashedFeatureEncoder(Encoder):
    """Signed feature hashing over word unigrams and character trigrams.

    Word features carry more weight than character features so paraphrases
    (shared vocabulary, different phrasing) land closer than unrelated texts.
    """

    WORD_WEIGHT = 1.0
    CHAR_WEIGHT = 0.4

    def __init__(self, dim: int = DEFAULT_HASHED_DIM):
        if dim < 32:
            raise EncoderError(f"dim must be >= 32, got {dim}")
        self.dim = dim
        self.id = f"hashed-word-trigram-{dim}"

    def _features(self, text: str):
        lowered = text.lower()
        for word in _WORD_RE.findall(lowered):
            yield "w:" + word, self.WORD_WEIGHT
        padded = f" {lowered} "
        for i in range(len(padded) - 2):
            yield "c:" + padded[i : i + 3], self.CHAR_WEIGHT

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for feature, weight in self._features(text):
                bucket, sign = _bucket_and_sign(feature, self.dim)
                out[row, bucket] += sign * weight
            norm = np.linalg.norm(out[row])
            if norm > 0.0:
                out[row] /= norm
        return out


class SentenceTransformerEncoder(Encoder):
    """Wrapper around a locally available sentence-transformers model."""

    def __init__(self, model_name_or_path: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderError(
                "sentence-transformers is not installed; install the 'neural' extra"
            ) from exc
        try:
            self._model = SentenceTransformer(model_name_or_path)
        except Exception as exc:
            raise EncoderError(f"could not load model {model_name_or_path!r}: {exc}") from exc
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self.id = f"sentence-transformer:{model_name_or_path}"

    def encode(self, texts: list[str]) -> np.ndarray:
        vectors = self._model.encode(
            texts, normalize_embeddings=True, show_progress_bar=False
        )
        return np.asarray(vectors, dtype=np.float64)


def make_encoder(spec: str) -> Encoder:
    """Build an encoder from a model spec string.

    ``hashed`` or ``hashed:<dim>`` selects the built-in encoder; anything else
    is treated as a sentence-transformers model name or path.
    """
    spec = spec.strip()
    if spec == "hashed" or not spec:
        return HashedFeatureEncoder()
    if spec.startswith("hashed:"):
        return HashedFeatureEncoder(dim=int(spec.split(":", 1)[1]))
    return SentenceTransformerEncoder(spec)
