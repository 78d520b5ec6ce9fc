"""HTTP inference shim for sketch fill-in generation and text embeddings."""

__version__ = "0.1.0"
