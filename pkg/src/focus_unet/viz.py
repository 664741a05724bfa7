"""Mask contours, prediction overlays and attention heatmap rendering.

Overlay convention: solid green contour for the ground truth, magenta for
the prediction. Contours come from 4-connectivity border tracing: a mask
pixel is on the border when any of its 4-neighbours (frame edges count as
outside) is background.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

GROUND_TRUTH_COLOR = (0, 255, 0)
PREDICTION_COLOR = (255, 0, 255)

__all__ = [
    "GROUND_TRUTH_COLOR",
    "PREDICTION_COLOR",
    "draw_overlay",
    "mask_border",
    "save_heatmap_png",
    "save_image_png",
    "save_mask_png",
]


def mask_border(mask: np.ndarray) -> np.ndarray:
    """Boolean border of a binary mask under 4-connectivity."""
    m = np.asarray(mask).astype(bool)
    padded = np.pad(m, 1)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:])
    return m & ~interior


def draw_overlay(image: np.ndarray, pred_mask: np.ndarray,
                 true_mask: np.ndarray = None) -> np.ndarray:
    """Paint contours onto a copy of the image (uint8 RGB)."""
    canvas = np.clip(np.asarray(image), 0, 255).astype(np.uint8).copy()
    if canvas.ndim != 3 or canvas.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got {canvas.shape}")
    if true_mask is not None:
        canvas[mask_border(true_mask)] = GROUND_TRUTH_COLOR
    canvas[mask_border(pred_mask)] = PREDICTION_COLOR
    return canvas


def save_mask_png(mask: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(mask).astype(np.uint8) * np.uint8(255), "L").save(path)


def save_heatmap_png(values: np.ndarray, path) -> None:
    """Render a [0,1] coefficient map as grayscale (brighter = higher)."""
    arr = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.rint(arr * 255).astype(np.uint8), "L").save(path)


def save_image_png(image: np.ndarray, path) -> None:
    Image.fromarray(np.clip(np.asarray(image), 0, 255).astype(np.uint8), "RGB").save(path)
