"""Pixel kernels with numba and pure-numpy implementations.

Both paths use the same floating point operation order, so their outputs are
bit-identical; ``tests/test_kernels.py`` holds them to that. The public names
(``polygon_coverage``, ``composite``, ``box_blur``) dispatch on
:data:`fluorpoison._accel.USE_NUMBA`.
"""

import numpy as np

from fluorpoison._accel import HAVE_NUMBA, USE_NUMBA, njit

# ---------------------------------------------------------------------------
# polygon coverage (even-odd ray casting on an oversampled grid)


def polygon_coverage_numpy(xs, ys, size, oversample):
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    m = size * oversample
    centers = (np.arange(m, dtype=np.float64) + 0.5) / oversample
    px, py = np.meshgrid(centers, centers)
    inside = np.zeros((m, m), dtype=np.bool_)
    n = xs.shape[0]
    for i in range(n):
        j = i - 1 if i > 0 else n - 1
        x1, y1, x2, y2 = xs[i], ys[i], xs[j], ys[j]
        if y1 == y2:
            continue
        crosses = (y1 > py) != (y2 > py)
        xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < xint)
    counts = inside.reshape(size, oversample, size, oversample).sum(axis=(1, 3))
    return counts.astype(np.float64) / float(oversample * oversample)


def _polygon_coverage_loops(xs, ys, size, oversample):
    m = size * oversample
    n = xs.shape[0]
    out = np.zeros((size, size), dtype=np.float64)
    for r in range(m):
        py = (r + 0.5) / oversample
        for c in range(m):
            px = (c + 0.5) / oversample
            inside = False
            for i in range(n):
                j = i - 1 if i > 0 else n - 1
                x1 = xs[i]
                y1 = ys[i]
                x2 = xs[j]
                y2 = ys[j]
                if y1 == y2:
                    continue
                if (y1 > py) != (y2 > py):
                    xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
                    if px < xint:
                        inside = not inside
            if inside:
                out[r // oversample, c // oversample] += 1.0
    return out / float(oversample * oversample)


# ---------------------------------------------------------------------------
# alpha compositing: out = w * rgb + (1 - w) * orig, with w = alpha * a


def composite_numpy(orig, rgb, a, alpha):
    w = alpha * np.asarray(a, dtype=np.float64)
    w = w[..., None]
    out = w * np.asarray(rgb, dtype=np.float64) + (1.0 - w) * np.asarray(orig, dtype=np.float64)
    return np.rint(np.clip(out, 0.0, 255.0)).astype(np.uint8)


def _composite_loops(orig, rgb, a, alpha):
    h, w_, ch = orig.shape
    out = np.empty((h, w_, ch), dtype=np.uint8)
    for y in range(h):
        for x in range(w_):
            w = alpha * a[y, x]
            for k in range(ch):
                v = w * rgb[y, x, k] + (1.0 - w) * orig[y, x, k]
                if v < 0.0:
                    v = 0.0
                elif v > 255.0:
                    v = 255.0
                out[y, x, k] = np.uint8(np.rint(v))
    return out


# ---------------------------------------------------------------------------
# separable box blur with edge clamping


def box_blur_numpy(arr, radius):
    arr = np.asarray(arr, dtype=np.float64)
    if radius <= 0:
        return arr.copy()
    norm = float(2 * radius + 1)
    out = arr
    for axis in (1, 0):
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for k in range(-radius, radius + 1):
            idx = np.clip(np.arange(n) + k, 0, n - 1)
            acc = acc + np.take(out, idx, axis=axis)
        out = acc / norm
    return out


def _box_blur_loops(arr, radius):
    h, w, ch = arr.shape
    if radius <= 0:
        return arr.copy()
    norm = float(2 * radius + 1)
    tmp = np.empty_like(arr)
    for y in range(h):
        for x in range(w):
            for c in range(ch):
                acc = 0.0
                for k in range(-radius, radius + 1):
                    xx = min(max(x + k, 0), w - 1)
                    acc = acc + arr[y, xx, c]
                tmp[y, x, c] = acc / norm
    out = np.empty_like(arr)
    for y in range(h):
        for x in range(w):
            for c in range(ch):
                acc = 0.0
                for k in range(-radius, radius + 1):
                    yy = min(max(y + k, 0), h - 1)
                    acc = acc + tmp[yy, x, c]
                out[y, x, c] = acc / norm
    return out


if HAVE_NUMBA:
    polygon_coverage_numba = njit(_polygon_coverage_loops)
    composite_numba_raw = njit(_composite_loops)
    box_blur_numba_raw = njit(_box_blur_loops)

    def composite_numba(orig, rgb, a, alpha):
        return composite_numba_raw(
            np.ascontiguousarray(orig, dtype=np.float64),
            np.ascontiguousarray(rgb, dtype=np.float64),
            np.ascontiguousarray(a, dtype=np.float64),
            float(alpha),
        )

    def box_blur_numba(arr, radius):
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        squeeze = arr.ndim == 2
        if squeeze:
            arr = arr[..., None]
        out = box_blur_numba_raw(arr, int(radius))
        return out[..., 0] if squeeze else out
else:  # pragma: no cover
    polygon_coverage_numba = None
    composite_numba = None
    box_blur_numba = None


def polygon_coverage(xs, ys, size, oversample=4):
    """Fraction of each pixel of a ``size``×``size`` grid covered by a polygon.

    Coverage is estimated on ``oversample``² sub-pixel centers per pixel.
    Vertex coordinates are in pixel units, origin at the top-left corner.
    """
    if USE_NUMBA:
        return polygon_coverage_numba(
            np.ascontiguousarray(xs, dtype=np.float64),
            np.ascontiguousarray(ys, dtype=np.float64),
            int(size),
            int(oversample),
        )
    return polygon_coverage_numpy(xs, ys, int(size), int(oversample))


def composite(orig, rgb, a, alpha):
    """Blend ``rgb`` with per-pixel opacity ``a`` and global ``alpha`` over ``orig``.

    Returns uint8, rounded half-to-even after clipping to [0, 255].
    """
    if USE_NUMBA:
        return composite_numba(orig, rgb, a, alpha)
    return composite_numpy(orig, rgb, a, alpha)


def box_blur(arr, radius):
    if USE_NUMBA:
        return box_blur_numba(arr, radius)
    return box_blur_numpy(arr, radius)
