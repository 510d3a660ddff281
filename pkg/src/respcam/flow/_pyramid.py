"""Image pyramid and warping helpers shared by the flow engines."""

from __future__ import annotations

import numpy as np
import scipy.ndimage


def smooth(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img
    return scipy.ndimage.gaussian_filter(img, sigma, mode="nearest")


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample onto a pixel-center-aligned grid, replicate edges."""
    h, w = img.shape
    yy = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xx = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    grid_y, grid_x = np.meshgrid(yy, xx, indexing="ij")
    return scipy.ndimage.map_coordinates(img, [grid_y, grid_x], order=1, mode="nearest")


def pyramid_sizes(h: int, w: int, levels: int, scale: float, min_side: int) -> list[tuple[int, int]]:
    """Fine-to-coarse level sizes, stopping before any side drops below min_side."""
    sizes = [(h, w)]
    for lvl in range(1, levels):
        nh = int(round(h * scale**lvl))
        nw = int(round(w * scale**lvl))
        if min(nh, nw) < min_side:
            break
        sizes.append((nh, nw))
    return sizes


def build_pyramid(img: np.ndarray, sizes: list[tuple[int, int]], scale: float) -> list[np.ndarray]:
    """Anti-aliased image pyramid matching ``sizes`` (fine to coarse)."""
    sigma = 0.5 * np.sqrt(max(1.0 / scale**2 - 1.0, 0.0))
    levels = [img.astype(np.float64)]
    for nh, nw in sizes[1:]:
        levels.append(resize_bilinear(smooth(levels[-1], sigma), nh, nw))
    return levels


def upscale_flow(u: np.ndarray, v: np.ndarray, out_h: int, out_w: int) -> tuple[np.ndarray, np.ndarray]:
    """Resize a flow field and rescale displacements to the new pixel grid."""
    su = out_w / u.shape[1]
    sv = out_h / u.shape[0]
    return resize_bilinear(u, out_h, out_w) * su, resize_bilinear(v, out_h, out_w) * sv


def warp_bilinear(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample ``img`` at (y + v, x + u), replicating the border."""
    h, w = img.shape
    grid_y, grid_x = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return scipy.ndimage.map_coordinates(img, [grid_y + v, grid_x + u], order=1, mode="nearest")
