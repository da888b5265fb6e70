"""Pure numpy versions of the compiled loops in ``_core``.

Same signatures, same output layout; selected automatically when the
extension is not built.
"""

import numpy as np


def vol2col(x, cols):
    C, D, H, W = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (1, 1)))
    view = cols.reshape(C, 3, 3, 3, D, H, W)
    for kd in range(3):
        for kh in range(3):
            for kw in range(3):
                view[:, kd, kh, kw] = padded[:, kd:kd + D, kh:kh + H, kw:kw + W]


def col2vol(cols, out):
    C, D, H, W = out.shape
    padded = np.zeros((C, D + 2, H + 2, W + 2), dtype=out.dtype)
    view = cols.reshape(C, 3, 3, 3, D, H, W)
    for kd in range(3):
        for kh in range(3):
            for kw in range(3):
                padded[:, kd:kd + D, kh:kh + H, kw:kw + W] += view[:, kd, kh, kw]
    out += padded[:, 1:-1, 1:-1, 1:-1]


def maxpool_forward(x, out, idx):
    N, C, D, H, W = x.shape
    D2, H2, W2 = out.shape[2:]
    win = x[:, :, :2 * D2, :2 * H2, :2 * W2].reshape(N, C, D2, 2, H2, 2, W2, 2)
    win = win.transpose(0, 1, 2, 4, 6, 3, 5, 7).reshape(N, C, D2, H2, W2, 8)
    # argmax returns the first maximum, which is the first in (d, h, w) scan order
    arg = win.argmax(axis=-1)
    out[...] = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    n, c, od, oh, ow = np.indices(out.shape, sparse=True)
    d = 2 * od + arg // 4
    h = 2 * oh + (arg // 2) % 2
    w = 2 * ow + arg % 2
    idx[...] = (((n * C + c) * D + d) * H + h) * W + w


def maxpool_backward(idx, grad_out, grad_in):
    # windows never overlap, so every index appears at most once
    grad_in[idx] += grad_out
