"""Two-frame dense flow via local polynomial expansion.

Each neighborhood of each frame is approximated by a quadratic polynomial
f(p) ~ p'Ap + b'p + c fitted under a Gaussian applicability window; the
displacement that maps one frame's expansion onto the other's satisfies
A d = -(b2 - b1)/2. Per-pixel equations are pooled over a Gaussian-weighted
neighborhood into 2x2 normal equations, solved in closed form, and refined
iteratively and coarse-to-fine over an image pyramid.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from ._pyramid import build_pyramid, pyramid_sizes, upscale_flow, warp_bilinear

#: Displaced-lookup normal equations with determinants below this relative
#: threshold keep the incoming displacement (aperture problem / no texture).
_DET_GUARD = 1e-12


def _poly_sigma(poly_n: int) -> float:
    # matches the conventional pairing of window size and applicability width
    return 0.5 + 0.3 * (poly_n // 2)


def polynomial_expansion(img: np.ndarray, poly_n: int, sigma: float):
    """Per-pixel quadratic fit coefficients (A11, A12, A22, bx, by).

    Moments are gathered by separable correlation with x^p * gaussian kernels
    (replicate borders); the 6x6 Gram matrix of the basis {1, x, y, x^2, y^2,
    xy} under the Gaussian window is constant, so one precomputed inverse
    turns moments into coefficients everywhere at once.
    """
    r = poly_n // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    g /= g.sum()
    kernels = [g, x * g, x * x * g]

    # Gram matrix of the basis under the separable window
    jx, jy = np.meshgrid(x, x, indexing="xy")
    weights = np.outer(g, g).ravel()
    basis = np.stack(
        [np.ones_like(jx), jx, jy, jx * jx, jy * jy, jx * jy], axis=-1
    ).reshape(-1, 6)
    gram = (basis * weights[:, None]).T @ basis
    gram_inv = np.linalg.inv(gram)

    # moments m[p,q] = sum_j w(j) jx^p jy^q img(.+j), separable passes
    vert = [correlate1d(img, k, axis=0, mode="nearest") for k in kernels]
    m = {}
    for q in range(3):
        for p in range(3 - q):
            m[(p, q)] = correlate1d(vert[q], kernels[p], axis=1, mode="nearest")
    moments = np.stack([m[(0, 0)], m[(1, 0)], m[(0, 1)], m[(2, 0)], m[(0, 2)], m[(1, 1)]])

    coef = np.einsum("ij,jhw->ihw", gram_inv, moments)
    a11, a12, a22 = coef[3], coef[5] / 2.0, coef[4]
    bx, by = coef[1], coef[2]
    return a11, a12, a22, bx, by


def _window_kernel(winsize: int) -> np.ndarray:
    r = winsize // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * (0.3 * max(r, 1)) ** 2))
    return k / k.sum()


def _blur(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    return correlate1d(correlate1d(img, k, axis=0, mode="nearest"), k, axis=1, mode="nearest")


def _refine_level(exp1, exp2, u, v, winsize: int, iterations: int):
    a11_1, a12_1, a22_1, bx_1, by_1 = exp1
    a11_2, a12_2, a22_2, bx_2, by_2 = exp2
    wker = _window_kernel(winsize)

    for _ in range(iterations):
        # sample the second frame's expansion at the continuous displaced
        # position, so the A*d correction below stays consistent with it
        a11 = 0.5 * (a11_1 + warp_bilinear(a11_2, u, v))
        a12 = 0.5 * (a12_1 + warp_bilinear(a12_2, u, v))
        a22 = 0.5 * (a22_1 + warp_bilinear(a22_2, u, v))
        db1 = -0.5 * (warp_bilinear(bx_2, u, v) - bx_1) + (a11 * u + a12 * v)
        db2 = -0.5 * (warp_bilinear(by_2, u, v) - by_1) + (a12 * u + a22 * v)

        # pool A d = db over the window into 2x2 normal equations
        g11 = _blur(a11 * a11 + a12 * a12, wker)
        g12 = _blur(a11 * a12 + a12 * a22, wker)
        g22 = _blur(a12 * a12 + a22 * a22, wker)
        h1 = _blur(a11 * db1 + a12 * db2, wker)
        h2 = _blur(a12 * db1 + a22 * db2, wker)

        det = g11 * g22 - g12 * g12
        solvable = det > _DET_GUARD * (g11 + g22) ** 2 + np.finfo(np.float64).tiny
        safe_det = np.where(solvable, det, 1.0)
        u = np.where(solvable, (g22 * h1 - g12 * h2) / safe_det, u)
        v = np.where(solvable, (g11 * h2 - g12 * h1) / safe_det, v)
    return u, v


def farneback(prev: np.ndarray, next_: np.ndarray, levels: int, scale: float,
              iterations: int, poly_n: int, winsize: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense (u, v) displacement from ``prev`` to ``next_`` (2D luminance)."""
    sigma = _poly_sigma(poly_n)
    sizes = pyramid_sizes(prev.shape[0], prev.shape[1], levels, scale, min_side=max(2 * poly_n + 1, 9))
    pyr1 = build_pyramid(prev, sizes, scale)
    pyr2 = build_pyramid(next_, sizes, scale)

    u = np.zeros(sizes[-1], dtype=np.float64)
    v = np.zeros(sizes[-1], dtype=np.float64)
    for lvl in range(len(sizes) - 1, -1, -1):
        if u.shape != sizes[lvl]:
            u, v = upscale_flow(u, v, *sizes[lvl])
        exp1 = polynomial_expansion(pyr1[lvl], poly_n, sigma)
        exp2 = polynomial_expansion(pyr2[lvl], poly_n, sigma)
        u, v = _refine_level(exp1, exp2, u, v, winsize, iterations)
    return u, v
