"""Corpus toolkit for sketch-based text generation and data augmentation."""

__version__ = "0.1.0"
