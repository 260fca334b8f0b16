"""Masked raster primitives shared by the whole pipeline.

Conventions used throughout the package:

* images and scalar fields are float64 arrays of shape (H, W), intensities
  normalized to [0, 1] on load;
* vector fields are (H, W, 2) with channel order (x, y);
* a position is continuous (x, y) with pixel centers at integer coordinates,
  so position (j, i) is the center of ``field[i, j]``;
* validity masks are boolean (H, W); masked-out pixels never contribute to
  interpolation, differential operators, or statistics.

The discrete gradient uses forward differences with a Neumann condition
across the mask boundary; divergence is its negative adjoint (backward
differences, fields treated as zero outside the mask), which makes the
summation-by-parts identity exact and testable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

# Catmull-Rom taps reproduce constants and affine ramps exactly and are
# interpolating (weight 1 at the node), which the downstream warping relies on.
_TAP_OFFSETS = (-1, 0, 1, 2)


def pixel_grid(height: int, width: int) -> np.ndarray:
    """(H, W, 2) array of pixel-center positions (x, y)."""
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    return np.stack([xs, ys], axis=-1)


def circular_mask(height: int, width: int, center: tuple[float, float],
                  radius: float) -> np.ndarray:
    """Boolean disc of given center (x, y) and radius in pixels."""
    g = pixel_grid(height, width)
    return (g[:, :, 0] - center[0]) ** 2 + (g[:, :, 1] - center[1]) ** 2 <= radius ** 2


def _cubic_weights(f: np.ndarray) -> list[np.ndarray]:
    """Catmull-Rom weights for taps at offsets -1..2, fractional part f."""
    f2 = f * f
    f3 = f2 * f
    return [
        -0.5 * f + f2 - 0.5 * f3,
        1.0 - 2.5 * f2 + 1.5 * f3,
        0.5 * f + 2.0 * f2 - 1.5 * f3,
        -0.5 * f2 + 0.5 * f3,
    ]


def sample_bicubic(field: np.ndarray, pos: np.ndarray,
                   mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample `field` at continuous positions using only in-mask taps.

    Fallback chain per position: full 16-tap bicubic when every tap is valid,
    else bilinear renormalized over the valid inner 2x2 taps, else the nearest
    valid tap of the stencil. Positions whose whole stencil is invalid return
    NaN with a False validity flag.

    Parameters
    ----------
    field : (H, W) or (H, W, C) array
    pos : (..., 2) array of (x, y) positions
    mask : (H, W) boolean validity mask

    Returns
    -------
    values : (...,) or (..., C) array, NaN where invalid
    valid : (...) boolean array
    """
    data = np.asarray(field, dtype=np.float64)
    squeeze = data.ndim == 2
    if squeeze:
        data = data[:, :, None]
    h, w, nc = data.shape
    pos = np.asarray(pos, dtype=np.float64)
    out_shape = pos.shape[:-1]
    x = pos[..., 0].ravel()
    y = pos[..., 1].ravel()
    n = x.size

    finite = np.isfinite(x) & np.isfinite(y)
    x = np.where(finite, x, 0.0)
    y = np.where(finite, y, 0.0)
    ix = np.floor(x).astype(np.int64)
    iy = np.floor(y).astype(np.int64)
    fx = x - ix
    fy = y - iy
    wx = _cubic_weights(fx)
    wy = _cubic_weights(fy)

    cubic_acc = np.zeros((n, nc))
    bilin_acc = np.zeros((n, nc))
    bilin_wsum = np.zeros(n)
    near_val = np.zeros((n, nc))
    near_d2 = np.full(n, np.inf)
    all_valid = np.ones(n, dtype=bool)
    any_valid = np.zeros(n, dtype=bool)

    for a, dy in enumerate(_TAP_OFFSETS):
        r = iy + dy
        rk = np.clip(r, 0, h - 1)
        r_in = (r >= 0) & (r < h)
        for b, dx in enumerate(_TAP_OFFSETS):
            c = ix + dx
            ck = np.clip(c, 0, w - 1)
            ok = r_in & (c >= 0) & (c < w)
            ok &= mask[rk, ck]
            v = data[rk, ck]
            v = np.where(ok[:, None], v, 0.0)
            all_valid &= ok
            any_valid |= ok
            cubic_acc += (wy[a] * wx[b])[:, None] * v
            if dy in (0, 1) and dx in (0, 1):
                bw = (fy if dy == 1 else 1.0 - fy) * (fx if dx == 1 else 1.0 - fx)
                bw = np.where(ok, bw, 0.0)
                bilin_acc += bw[:, None] * v
                bilin_wsum += bw
            d2 = (dx - fx) ** 2 + (dy - fy) ** 2
            closer = ok & (d2 < near_d2)
            near_d2 = np.where(closer, d2, near_d2)
            near_val = np.where(closer[:, None], v, near_val)

    bilin_ok = bilin_wsum > 1e-12
    values = np.where(bilin_ok[:, None],
                      bilin_acc / np.maximum(bilin_wsum, 1e-300)[:, None],
                      near_val)
    values = np.where(all_valid[:, None], cubic_acc, values)
    valid = any_valid & finite
    values = np.where(valid[:, None], values, np.nan)

    values = values.reshape(out_shape + (nc,))
    if squeeze:
        values = values[..., 0]
    return values, valid.reshape(out_shape)


def gradient(field: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Forward-difference gradient, Neumann across mask/image boundary.

    Returns (H, W, 2) with channels (d/dx, d/dy); components vanish wherever
    the forward neighbor leaves the mask.
    """
    f = np.asarray(field, dtype=np.float64)
    g = np.zeros(f.shape + (2,))
    ex, ey = _edge_indicators(mask)
    g[:, :-1, 0] = (f[:, 1:] - f[:, :-1]) * ex[:, :-1]
    g[:-1, :, 1] = (f[1:, :] - f[:-1, :]) * ey[:-1, :]
    return g


def divergence(field: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Backward-difference divergence, the negative adjoint of `gradient`.

    Vector entries on edges leaving the mask are treated as zero (Dirichlet),
    so <grad u, p> + <u, div p> = 0 holds exactly for any u, p.
    """
    p = np.asarray(field, dtype=np.float64)
    ex, ey = _edge_indicators(mask)
    px = p[:, :, 0] * ex
    py = p[:, :, 1] * ey
    div = px.copy()
    div[:, 1:] -= px[:, :-1]
    div += py
    div[1:, :] -= py[:-1, :]
    return div


def _edge_indicators(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boolean maps of x/y forward edges fully inside the mask."""
    m = np.asarray(mask, dtype=bool)
    ex = np.zeros_like(m)
    ey = np.zeros_like(m)
    ex[:, :-1] = m[:, :-1] & m[:, 1:]
    ey[:-1, :] = m[:-1, :] & m[1:, :]
    return ex, ey


def smooth_masked(field: np.ndarray, mask: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian smoothing by normalized convolution over in-mask pixels."""
    m = mask.astype(np.float64)
    num = gaussian_filter(np.asarray(field, dtype=np.float64) * m, sigma)
    den = gaussian_filter(m, sigma)
    out = np.where(mask, num / np.maximum(den, 1e-12), 0.0)
    return out


@dataclass
class Pyramid:
    """Image pyramid, levels ordered coarsest to finest."""

    fields: list[np.ndarray]
    masks: list[np.ndarray]
    scale: float

    @property
    def num_levels(self) -> int:
        return len(self.fields)


def pyramid_shapes(height: int, width: int, levels: int, scale: float,
                   min_width: int) -> list[tuple[int, int]]:
    """Level shapes finest-first, truncated so the coarsest width >= min_width."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if scale <= 1.0:
        raise ValueError("scale must be > 1")
    shapes = [(height, width)]
    while len(shapes) < levels:
        h, w = shapes[-1]
        nh, nw = int(np.ceil(h / scale)), int(np.ceil(w / scale))
        if nw < min_width:
            break
        shapes.append((nh, nw))
    return shapes


def _bin_indices(n_fine: int, n_coarse: int) -> np.ndarray:
    return (np.arange(n_fine, dtype=np.int64) * n_coarse) // n_fine


def downsample_area(field: np.ndarray, mask: np.ndarray,
                    shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Area-average `field` over in-mask pixels onto `shape`; mask via nearest."""
    f = np.asarray(field, dtype=np.float64)
    ch, cw = shape
    fh, fw = mask.shape
    ri = _bin_indices(fh, ch)
    ci = _bin_indices(fw, cw)
    flat_bin = (ri[:, None] * cw + ci[None, :]).ravel()
    mflat = mask.astype(np.float64).ravel()
    cnt = np.bincount(flat_bin, weights=mflat, minlength=ch * cw)

    def avg(channel: np.ndarray) -> np.ndarray:
        s = np.bincount(flat_bin, weights=(channel * mask).ravel(),
                        minlength=ch * cw)
        return (s / np.maximum(cnt, 1.0)).reshape(ch, cw)

    if f.ndim == 2:
        out = avg(f)
    else:
        out = np.stack([avg(f[:, :, k]) for k in range(f.shape[2])], axis=-1)

    # Nearest-neighbor mask, pinned to the fine sample closest to each
    # coarse pixel center.
    rr = np.clip(np.rint((np.arange(ch) + 0.5) * fh / ch - 0.5).astype(np.int64), 0, fh - 1)
    cc = np.clip(np.rint((np.arange(cw) + 0.5) * fw / cw - 0.5).astype(np.int64), 0, fw - 1)
    cmask = mask[rr[:, None], cc[None, :]]
    cmask &= cnt.reshape(ch, cw) > 0
    if f.ndim == 2:
        out = np.where(cmask, out, 0.0)
    else:
        out = np.where(cmask[:, :, None], out, 0.0)
    return out, cmask


def build_pyramid(field: np.ndarray, mask: np.ndarray, levels: int,
                  scale: float, min_width: int = 50) -> Pyramid:
    """Coarse-to-fine pyramid with in-mask area averaging per level."""
    shapes = pyramid_shapes(mask.shape[0], mask.shape[1], levels, scale, min_width)
    fields = [np.asarray(field, dtype=np.float64)]
    masks = [np.asarray(mask, dtype=bool)]
    for shape in shapes[1:]:
        f, m = downsample_area(fields[-1], masks[-1], shape)
        fields.append(f)
        masks.append(m)
    return Pyramid(fields=fields[::-1], masks=masks[::-1], scale=scale)


def upsample_state(u: np.ndarray, w: np.ndarray, mask: np.ndarray,
                   dst_shape: tuple[int, int],
                   dst_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Carry disparity and warp vectors to the next finer pyramid level.

    Values are sampled bicubically from in-mask source pixels only and scaled
    by the per-axis resolution ratio (disparity and warps are in pixel units).
    """
    sh, sw = mask.shape
    dh, dw = dst_shape
    sx = dw / sw
    sy = dh / sh
    g = pixel_grid(dh, dw)
    src_pos = np.stack([(g[:, :, 0] + 0.5) / sx - 0.5,
                        (g[:, :, 1] + 0.5) / sy - 0.5], axis=-1)
    u_f, u_ok = sample_bicubic(u, src_pos, mask)
    w_f, w_ok = sample_bicubic(w, src_pos, mask)
    u_f = np.where(u_ok & dst_mask, u_f, 0.0) * (0.5 * (sx + sy))
    w_f = np.where((w_ok & dst_mask)[:, :, None], w_f, 0.0)
    w_f[:, :, 0] *= sx
    w_f[:, :, 1] *= sy
    return u_f, w_f
