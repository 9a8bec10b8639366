"""Slow reference implementations used as test oracles.

Nothing here calls into the code paths under test.
"""

import itertools
import math
import struct

import numpy as np


def coords(shape):
    return np.stack(np.meshgrid(*(np.arange(s) for s in shape), indexing="ij"), -1).reshape(-1, 3)


def brute_min_distance(sources, sites, spacing):
    """For every ``sources`` voxel, distance (nm) to the nearest ``sites`` voxel."""
    spacing = np.asarray(spacing, dtype=np.float64)
    a = np.argwhere(sources).astype(np.float64) * spacing
    b = np.argwhere(sites).astype(np.float64) * spacing
    if len(b) == 0:
        return np.full(len(a), np.inf)
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return np.sqrt(d2.min(axis=1))


def brute_sedt(labels, spacing):
    fg = np.asarray(labels) != 0
    out = np.zeros(fg.shape)
    out[fg] = brute_min_distance(fg, ~fg, spacing)
    out[~fg] = -brute_min_distance(~fg, fg, spacing)
    return out


def brute_cleft(pred, truth, spacing):
    """(fpd, fnd, score) with the empty-set conventions of the metric."""
    p, t = np.asarray(pred) != 0, np.asarray(truth) != 0

    def avg(src, dst):
        if not src.any():
            return 0.0
        if not dst.any():
            return math.inf
        return float(brute_min_distance(src, dst, spacing).mean())

    fpd, fnd = avg(p, t), avg(t, p)
    return fpd, fnd, (fpd + fnd) / 2


def reference_chunk_bytes(dtype_code, shape_zyx, values):
    """Hand-packed N5 chunk: header fields then big-endian payload."""
    header = struct.pack(">HH", 0, 3) + b"".join(struct.pack(">I", s) for s in shape_zyx[::-1])
    return header + struct.pack(f">{len(values)}{dtype_code}", *values)


# -- valid U-Net simulation ----------------------------------------------------

def simulate_1d(arch_json, axis, n):
    """Push a length-``n`` line through the network; None if inadmissible."""
    levels = arch_json["levels"]
    stack = []
    for i, level in enumerate(levels):
        for k in level["convs"]:
            n -= k[axis] - 1
            if n < 1:
                return None
        if i < len(levels) - 1:
            f = level["down"][axis]
            if n % f:
                return None
            stack.append(level)
            n //= f
            if n < 1:
                return None
    while stack:
        level = stack.pop()
        n *= level["down"][axis]
        for k in _decoder_convs(level):
            n -= k[axis] - 1
            if n < 1:
                return None
    return n


def _decoder_convs(level):
    return level["decoder_convs"] if level.get("decoder_convs") is not None else level["convs"]


def brute_min_input_1d(arch_json, axis, target, limit=20000):
    for n in range(1, limit):
        out = simulate_1d(arch_json, axis, n)
        if out is not None and out >= target:
            return n, out
    raise AssertionError("no admissible input below limit")


def impulse_receptive_widths(arch_json, axis):
    """Receptive field per conv layer by pushing impulses through a mock net.

    Ones-kernels, sum pooling and repeat upsampling on nonnegative data:
    output voxel o sees input i iff an impulse at i makes o nonzero.
    """
    levels = arch_json["levels"]
    period = 1
    for level in levels[:-1]:
        period *= level["down"][axis]
    n = None
    for cand in range(1, 20000):
        out = simulate_1d(arch_json, axis, cand)
        if out is not None and out >= 2 * period + 1:
            n = cand
            break
    eye = np.eye(n)  # row i = impulse at input i; columns are positions

    def conv(x, k):
        m = x.shape[1] - k + 1
        return sum(x[:, j:j + m] for j in range(k))

    widths = []
    x = eye
    stack = []
    for i, level in enumerate(levels):
        for k in level["convs"]:
            x = conv(x, k[axis])
            widths.append(_support(x))
        if i < len(levels) - 1:
            f = level["down"][axis]
            m = x.shape[1] // f
            x = x[:, : m * f].reshape(n, m, f).sum(-1)
            stack.append(level)
    while stack:
        level = stack.pop()
        x = np.repeat(x, level["down"][axis], axis=1)
        for k in _decoder_convs(level):
            x = conv(x, k[axis])
            widths.append(_support(x))
    return widths


def _support(x):
    best = 0
    for col in range(x.shape[1]):
        rows = np.nonzero(x[:, col])[0]
        best = max(best, rows[-1] - rows[0] + 1)
    return int(best)


# -- convolution --------------------------------------------------------------

def direct_gaussian_blur(data, sigma_vox, truncate=4.0):
    """Direct (non-separable loop) convolution with a truncated, per-axis normalized Gaussian."""
    kernels = []
    for s in sigma_vox:
        r = int(math.ceil(truncate * s))
        x = np.arange(-r, r + 1)
        k = np.exp(-0.5 * (x / s) ** 2)
        kernels.append(k / k.sum())
    kz, ky, kx = kernels
    k3 = kz[:, None, None] * ky[None, :, None] * kx[None, None, :]
    rz, ry, rx = (len(k) // 2 for k in kernels)
    out = np.zeros(data.shape)
    for p in zip(*np.nonzero(data)):
        v = data[p]
        for dz, dy, dx in itertools.product(range(-rz, rz + 1), range(-ry, ry + 1), range(-rx, rx + 1)):
            q = (p[0] + dz, p[1] + dy, p[2] + dx)
            if all(0 <= c < s for c, s in zip(q, data.shape)):
                out[q] += v * k3[dz + rz, dy + ry, dx + rx]
    return out


def box_filter_reference(data, radius):
    """Zero-padded separable box mean via cumulative sums."""
    out = np.asarray(data, dtype=np.float64)
    for axis, r in enumerate(radius):
        if r == 0:
            continue
        pad = [(0, 0)] * 3
        pad[axis] = (r + 1, r)
        c = np.cumsum(np.pad(out, pad), axis=axis)
        n = out.shape[axis]
        hi = np.take(c, np.arange(2 * r + 1, 2 * r + 1 + n), axis=axis)
        lo = np.take(c, np.arange(0, n), axis=axis)
        out = (hi - lo) / (2 * r + 1)
    return out
