"""Duality-based TV-L1 dense optical flow.

Minimizes |grad u1| + |grad u2| + lambda |rho(u)| with rho the linearized
brightness-constancy residual, by alternating a pointwise threshold step on
the data term with a Chambolle-style dual ascent on the total-variation
term, re-linearizing around the current flow on every warp. The inner loops
run as compiled numba kernels; everything is deterministic for a fixed
configuration.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._pyramid import build_pyramid, pyramid_sizes, smooth, upscale_flow

_GRAD_IS_ZERO = 1e-10
_PRESMOOTH_SIGMA = 0.8


@njit(cache=True)
def _sample(img, y, x):
    h, w = img.shape
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    y0 = int(y)
    x0 = int(x)
    y1 = min(y0 + 1, h - 1)
    x1 = min(x0 + 1, w - 1)
    fy = y - y0
    fx = x - x0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


@njit(cache=True)
def _centered_gradient(img, gx, gy):
    h, w = img.shape
    for i in range(h):
        for j in range(w):
            jl = j - 1 if j > 0 else 0
            jr = j + 1 if j < w - 1 else w - 1
            il = i - 1 if i > 0 else 0
            ir = i + 1 if i < h - 1 else h - 1
            gx[i, j] = 0.5 * (img[i, jr] - img[i, jl])
            gy[i, j] = 0.5 * (img[ir, j] - img[il, j])


@njit(cache=True)
def _energy(i0, i1, u1, u2, lam):
    """Primal TV-L1 energy of the flow (data term on the truly warped image)."""
    h, w = i0.shape
    e = 0.0
    for i in range(h):
        for j in range(w):
            ux = u1[i, j + 1] - u1[i, j] if j < w - 1 else 0.0
            uy = u1[i + 1, j] - u1[i, j] if i < h - 1 else 0.0
            vx = u2[i, j + 1] - u2[i, j] if j < w - 1 else 0.0
            vy = u2[i + 1, j] - u2[i, j] if i < h - 1 else 0.0
            e += np.sqrt(ux * ux + uy * uy) + np.sqrt(vx * vx + vy * vy)
            warped = _sample(i1, i + u2[i, j], j + u1[i, j])
            e += lam * abs(warped - i0[i, j])
    return e


@njit(cache=True)
def _tvl1_level(i0, i1, u1, u2, lam, theta, tau, n_warps, n_inner):
    """Warping loop at one pyramid level, in place on (u1, u2).

    Returns the primal energy recorded after each warp. A warp that fails to
    lower the energy is rolled back and iteration stops, so the recorded
    energy trace is non-increasing by construction.
    """
    h, w = i0.shape
    i1x = np.empty_like(i1)
    i1y = np.empty_like(i1)
    _centered_gradient(i1, i1x, i1y)

    i1w = np.empty_like(i0)
    i1wx = np.empty_like(i0)
    i1wy = np.empty_like(i0)
    grad = np.empty_like(i0)
    rho_c = np.empty_like(i0)
    v1 = np.empty_like(i0)
    v2 = np.empty_like(i0)
    p11 = np.zeros_like(i0)
    p12 = np.zeros_like(i0)
    p21 = np.zeros_like(i0)
    p22 = np.zeros_like(i0)

    u1_best = u1.copy()
    u2_best = u2.copy()
    best = np.inf
    energies = np.full(n_warps, np.nan)
    taut = tau / theta
    lt_scale = lam * theta

    for warp in range(n_warps):
        for i in range(h):
            for j in range(w):
                y = i + u2[i, j]
                x = j + u1[i, j]
                i1w[i, j] = _sample(i1, y, x)
                i1wx[i, j] = _sample(i1x, y, x)
                i1wy[i, j] = _sample(i1y, y, x)
                grad[i, j] = i1wx[i, j] * i1wx[i, j] + i1wy[i, j] * i1wy[i, j]
                rho_c[i, j] = (
                    i1w[i, j] - i1wx[i, j] * u1[i, j] - i1wy[i, j] * u2[i, j] - i0[i, j]
                )

        for _ in range(n_inner):
            # data term: pointwise soft threshold of the linearized residual
            for i in range(h):
                for j in range(w):
                    rho = rho_c[i, j] + i1wx[i, j] * u1[i, j] + i1wy[i, j] * u2[i, j]
                    lt = lt_scale * grad[i, j]
                    if rho < -lt:
                        d1 = lt_scale * i1wx[i, j]
                        d2 = lt_scale * i1wy[i, j]
                    elif rho > lt:
                        d1 = -lt_scale * i1wx[i, j]
                        d2 = -lt_scale * i1wy[i, j]
                    elif grad[i, j] > _GRAD_IS_ZERO:
                        d1 = -rho * i1wx[i, j] / grad[i, j]
                        d2 = -rho * i1wy[i, j] / grad[i, j]
                    else:
                        d1 = 0.0
                        d2 = 0.0
                    v1[i, j] = u1[i, j] + d1
                    v2[i, j] = u2[i, j] + d2

            # TV term: u = v + theta div(p), then dual ascent on p
            for i in range(h):
                for j in range(w):
                    div1 = p11[i, j] + p21[i, j]
                    if j > 0:
                        div1 -= p11[i, j - 1]
                    if i > 0:
                        div1 -= p21[i - 1, j]
                    div2 = p12[i, j] + p22[i, j]
                    if j > 0:
                        div2 -= p12[i, j - 1]
                    if i > 0:
                        div2 -= p22[i - 1, j]
                    u1[i, j] = v1[i, j] + theta * div1
                    u2[i, j] = v2[i, j] + theta * div2

            for i in range(h):
                for j in range(w):
                    ux = u1[i, j + 1] - u1[i, j] if j < w - 1 else 0.0
                    uy = u1[i + 1, j] - u1[i, j] if i < h - 1 else 0.0
                    vx = u2[i, j + 1] - u2[i, j] if j < w - 1 else 0.0
                    vy = u2[i + 1, j] - u2[i, j] if i < h - 1 else 0.0
                    ng1 = 1.0 + taut * np.sqrt(ux * ux + uy * uy)
                    ng2 = 1.0 + taut * np.sqrt(vx * vx + vy * vy)
                    p11[i, j] = (p11[i, j] + taut * ux) / ng1
                    p21[i, j] = (p21[i, j] + taut * uy) / ng1
                    p12[i, j] = (p12[i, j] + taut * vx) / ng2
                    p22[i, j] = (p22[i, j] + taut * vy) / ng2

        e = _energy(i0, i1, u1, u2, lam)
        if e > best:
            u1[:, :] = u1_best
            u2[:, :] = u2_best
            break
        best = e
        energies[warp] = e
        u1_best[:, :] = u1
        u2_best[:, :] = u2

    return energies


def _normalize_pair(i0: np.ndarray, i1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Joint rescale to [0, 255] so the data weight is intensity-scale-free."""
    lo = min(i0.min(), i1.min())
    hi = max(i0.max(), i1.max())
    if hi - lo <= 0:
        return i0 - lo, i1 - lo
    s = 255.0 / (hi - lo)
    return (i0 - lo) * s, (i1 - lo) * s


def tvl1(prev: np.ndarray, next_: np.ndarray, levels: int, scale: float, lam: float,
         theta: float, tau: float, warps: int, inner_iterations: int,
         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense (u, v) flow plus the finest level's per-warp energy trace."""
    i0, i1 = _normalize_pair(prev.astype(np.float64), next_.astype(np.float64))
    i0 = smooth(i0, _PRESMOOTH_SIGMA)
    i1 = smooth(i1, _PRESMOOTH_SIGMA)

    sizes = pyramid_sizes(i0.shape[0], i0.shape[1], levels, scale, min_side=16)
    pyr0 = build_pyramid(i0, sizes, scale)
    pyr1 = build_pyramid(i1, sizes, scale)

    u = np.zeros(sizes[-1], dtype=np.float64)
    v = np.zeros(sizes[-1], dtype=np.float64)
    energies = np.full(warps, np.nan)
    for lvl in range(len(sizes) - 1, -1, -1):
        if u.shape != sizes[lvl]:
            u, v = upscale_flow(u, v, *sizes[lvl])
        u = np.ascontiguousarray(u)
        v = np.ascontiguousarray(v)
        energies = _tvl1_level(pyr0[lvl], pyr1[lvl], u, v, lam, theta, tau, warps, inner_iterations)
    return u, v, energies
