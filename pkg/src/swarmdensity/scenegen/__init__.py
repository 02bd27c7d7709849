"""Procedural scenes, rasterized crops and the balanced dataset format."""

from .config import GenConfig, RenderStyle
from .crop import choose_window, crop_biased, near_window_mask, window_weights
from .dataset import (
    Dataset,
    balance_dataset,
    bucket_histogram,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .render import read_ppm, render_scene, write_ppm
from .sample import Sample, annotate, visible_indices
from .scene import sample_scene

__all__ = [
    "GenConfig", "RenderStyle", "Dataset", "Sample", "annotate", "balance_dataset",
    "bucket_histogram", "choose_window", "crop_biased", "generate_dataset",
    "near_window_mask", "read_dataset", "read_ppm", "render_scene", "sample_scene",
    "visible_indices", "window_weights", "write_dataset", "write_ppm",
]
