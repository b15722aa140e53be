"""Pure-numpy fallback kernels.

Same call signatures as :mod:`wdsm.kernels_numba`.  The convolution is the
shift-and-add formulation: for each kernel tap, a shifted slice of the padded
input is scaled and accumulated.  The tap loop order (co, ci, ky, kx) matches
the numba kernels so the forward pass is bitwise-identical across backends.
The convolution's input gradient goes through ``conv2d_fwd`` with flipped
weights (see ``tensor.conv2d``); only the parameter gradients live here.
"""

import numpy as np


def conv2d_fwd(pad: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    c_out, c_in = w.shape[0], w.shape[1]
    h = pad.shape[1] - 2
    wd = pad.shape[2] - 2
    out = np.zeros((c_out, h, wd), dtype=pad.dtype)
    for co in range(c_out):
        for ci in range(c_in):
            for ky in range(3):
                for kx in range(3):
                    out[co] += w[co, ci, ky, kx] * pad[ci, ky:ky + h, kx:kx + wd]
        out[co] += b[co]
    return out


def conv2d_param_grad(pad: np.ndarray, gout: np.ndarray):
    c_in = pad.shape[0]
    c_out, h, wd = gout.shape
    gw = np.empty((c_out, c_in, 3, 3), dtype=gout.dtype)
    gb = gout.sum(axis=(1, 2))
    for co in range(c_out):
        g = gout[co]
        for ci in range(c_in):
            for ky in range(3):
                for kx in range(3):
                    gw[co, ci, ky, kx] = (g * pad[ci, ky:ky + h, kx:kx + wd]).sum()
    return gw, gb


def maxpool2_fwd(x: np.ndarray):
    c, h, wd = x.shape
    h2, w2 = h // 2, wd // 2
    # window axis flattened row-major: (0,0),(0,1),(1,0),(1,1)
    win = x.reshape(c, h2, 2, w2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h2, w2, 4)
    arg = win.argmax(axis=-1).astype(np.uint8)  # argmax: first occurrence on ties
    out = np.take_along_axis(win, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2_bwd(gout: np.ndarray, arg: np.ndarray, h: int, wd: int) -> np.ndarray:
    c, h2, w2 = gout.shape
    gx = np.zeros((c, h, wd), dtype=gout.dtype)
    oy, ox = np.meshgrid(np.arange(h2), np.arange(w2), indexing="ij")
    ys = 2 * oy[None] + (arg >> 1)
    xs = 2 * ox[None] + (arg & 1)
    cs = np.arange(c)[:, None, None].repeat(h2, 1).repeat(w2, 2)
    gx[cs.ravel(), ys.ravel(), xs.ravel()] = gout.ravel()
    return gx
