"""Numba-compiled hot kernels for 3x3 same-size convolution and 2x2 max-pool.

Accumulation order matches :mod:`wdsm.kernels_numpy` (taps iterated co, ci,
ky, kx with the pixel loop innermost), so forward results agree bitwise with
the fallback.  fastmath stays off: reassociation would break that parity and
run-to-run determinism is part of the training contract.

The input gradient of the convolution is not a separate kernel: callers
feed the padded output gradient and flipped/transposed weights back through
``conv2d_fwd`` (see ``tensor.conv2d``), which keeps every inner loop a
gather with a vectorizable innermost axis.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv2d_fwd(pad, w, b):
    c_out, c_in = w.shape[0], w.shape[1]
    h = pad.shape[1] - 2
    wd = pad.shape[2] - 2
    out = np.zeros((c_out, h, wd), dtype=pad.dtype)
    for co in range(c_out):
        for ci in range(c_in):
            for ky in range(3):
                for kx in range(3):
                    wv = w[co, ci, ky, kx]
                    for y in range(h):
                        for x in range(wd):
                            out[co, y, x] += wv * pad[ci, y + ky, x + kx]
        bv = b[co]
        for y in range(h):
            for x in range(wd):
                out[co, y, x] += bv
    return out


@njit(cache=True)
def conv2d_param_grad(pad, gout):
    # column accumulator keeps the inner loop elementwise (SIMD-friendly);
    # the horizontal sum at the end is a fixed-order, deterministic pass
    c_in = pad.shape[0]
    c_out, h, wd = gout.shape
    gw = np.empty((c_out, c_in, 3, 3), dtype=gout.dtype)
    gb = np.empty(c_out, dtype=gout.dtype)
    accv = np.empty(wd, dtype=gout.dtype)
    for co in range(c_out):
        for x in range(wd):
            accv[x] = 0.0
        for y in range(h):
            for x in range(wd):
                accv[x] += gout[co, y, x]
        acc_b = gout.dtype.type(0.0)
        for x in range(wd):
            acc_b += accv[x]
        gb[co] = acc_b
        for ci in range(c_in):
            for ky in range(3):
                for kx in range(3):
                    for x in range(wd):
                        accv[x] = 0.0
                    for y in range(h):
                        for x in range(wd):
                            accv[x] += gout[co, y, x] * pad[ci, y + ky, x + kx]
                    acc = gout.dtype.type(0.0)
                    for x in range(wd):
                        acc += accv[x]
                    gw[co, ci, ky, kx] = acc
    return gw, gb


@njit(cache=True)
def maxpool2_fwd(x):
    c, h, wd = x.shape
    h2 = h // 2
    w2 = wd // 2
    out = np.empty((c, h2, w2), dtype=x.dtype)
    arg = np.empty((c, h2, w2), dtype=np.uint8)
    for ci in range(c):
        for oy in range(h2):
            for ox in range(w2):
                best = x[ci, 2 * oy, 2 * ox]
                pos = np.uint8(0)
                # strict > keeps the first occurrence in row-major order
                for k in range(1, 4):
                    v = x[ci, 2 * oy + (k >> 1), 2 * ox + (k & 1)]
                    if v > best:
                        best = v
                        pos = np.uint8(k)
                out[ci, oy, ox] = best
                arg[ci, oy, ox] = pos
    return out, arg


@njit(cache=True)
def maxpool2_bwd(gout, arg, h, wd):
    c, h2, w2 = gout.shape
    gx = np.zeros((c, h, wd), dtype=gout.dtype)
    for ci in range(c):
        for oy in range(h2):
            for ox in range(w2):
                k = arg[ci, oy, ox]
                gx[ci, 2 * oy + (k >> 1), 2 * ox + (k & 1)] = gout[ci, oy, ox]
    return gx
