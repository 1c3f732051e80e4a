"""Stereo catheter segmentation and tip-force regression with a multitask ViT."""

__version__ = "0.1.0"
