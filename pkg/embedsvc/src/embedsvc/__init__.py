"""Minimal sentence-embedding microservice implementing the /embed protocol."""

from .app import app_from_env, create_app
from .encoders import Encoder, HashedFeatureEncoder, SentenceTransformerEncoder, make_encoder

__version__ = "0.1.0"

__all__ = [
    "Encoder",
    "HashedFeatureEncoder",
    "SentenceTransformerEncoder",
    "app_from_env",
    "create_app",
    "make_encoder",
]
