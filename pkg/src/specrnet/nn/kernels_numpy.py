"""Pure-numpy kernel implementations (BLAS-backed where possible).

Interface shared with kernels_numba:
  conv3x3_forward(xp, w) -> y
  conv3x3_input_grad(dy, w, xp_shape) -> dxp
  conv3x3_weight_grad(dy, xp) -> dw
  maxpool2_forward(x) -> (y, idx)          idx: position 0..3 inside each window
  maxpool2_backward(dy, idx, h, w) -> dx
  gru_forward(gi, wh, bh) -> (h, r, z, n, ghn)
  gru_backward(dh_out, h, r, z, n, ghn, wh) -> (dgi, dwh, dbh)

The 3x3 convolution works on pre-padded input `xp` of shape (B, C, H+2, W+2).
"""

from __future__ import annotations

import numpy as np


def conv3x3_forward(xp: np.ndarray, w: np.ndarray) -> np.ndarray:
    B, C, Hp, Wp = xp.shape
    O = w.shape[0]
    H, W = Hp - 2, Wp - 2
    y = np.zeros((B, O, H * W), dtype=xp.dtype)
    for i in range(3):
        for j in range(3):
            patch = np.ascontiguousarray(xp[:, :, i:i + H, j:j + W]).reshape(B, C, H * W)
            y += np.matmul(w[:, :, i, j], patch)
    return y.reshape(B, O, H, W)


def conv3x3_input_grad(dy: np.ndarray, w: np.ndarray, xp_shape) -> np.ndarray:
    B, O, H, W = dy.shape
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    dym = dy.reshape(B, O, H * W)
    for i in range(3):
        for j in range(3):
            contrib = np.matmul(w[:, :, i, j].T, dym).reshape(B, -1, H, W)
            dxp[:, :, i:i + H, j:j + W] += contrib
    return dxp


def conv3x3_weight_grad(dy: np.ndarray, xp: np.ndarray) -> np.ndarray:
    B, O, H, W = dy.shape
    C = xp.shape[1]
    dw = np.zeros((O, C, 3, 3), dtype=dy.dtype)
    dym = dy.reshape(B, O, H * W)
    for i in range(3):
        for j in range(3):
            patch = np.ascontiguousarray(xp[:, :, i:i + H, j:j + W]).reshape(B, C, H * W)
            dw[:, :, i, j] = np.matmul(dym, patch.transpose(0, 2, 1)).sum(axis=0)
    return dw


def maxpool2_forward(x: np.ndarray):
    B, C, H, W = x.shape
    Ho, Wo = H // 2, W // 2
    v = x[:, :, :2 * Ho, :2 * Wo].reshape(B, C, Ho, 2, Wo, 2)
    windows = v.transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, 4)
    idx = windows.argmax(axis=-1).astype(np.int64)  # argmax: first max wins
    y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2_backward(dy: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    B, C, Ho, Wo = dy.shape
    dx = np.zeros((B, C, h, w), dtype=dy.dtype)
    bb, cc, hh, ww = np.ogrid[:B, :C, :Ho, :Wo]
    rows = 2 * hh + idx // 2
    cols = 2 * ww + idx % 2
    dx[bb, cc, rows, cols] = dy  # window targets are disjoint
    return dx


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_forward(gi: np.ndarray, wh: np.ndarray, bh: np.ndarray):
    """Single-direction GRU scan from h_0 = 0.

    gi: (B, T, 3H) precomputed input-side gate terms (x @ W_i.T + b_i).
    wh: (3H, H) hidden weights, bh: (3H,), gate order (reset, update, candidate).
    Returns the hidden sequence plus the per-step values backward needs.
    """
    B, T, H3 = gi.shape
    H = H3 // 3
    h = np.zeros((B, T, H), dtype=gi.dtype)
    r = np.zeros_like(h)
    z = np.zeros_like(h)
    n = np.zeros_like(h)
    ghn = np.zeros_like(h)
    whT = wh.T
    h_prev = np.zeros((B, H), dtype=gi.dtype)
    for t in range(T):
        gh = h_prev @ whT + bh
        rt = _sigmoid(gi[:, t, :H] + gh[:, :H])
        zt = _sigmoid(gi[:, t, H:2 * H] + gh[:, H:2 * H])
        ghn_t = gh[:, 2 * H:]
        nt = np.tanh(gi[:, t, 2 * H:] + rt * ghn_t)
        h_prev = (1.0 - zt) * nt + zt * h_prev
        r[:, t] = rt
        z[:, t] = zt
        n[:, t] = nt
        ghn[:, t] = ghn_t
        h[:, t] = h_prev
    return h, r, z, n, ghn


def gru_backward(dh_out: np.ndarray, h: np.ndarray, r: np.ndarray, z: np.ndarray,
                 n: np.ndarray, ghn: np.ndarray, wh: np.ndarray):
    """Backward scan matching gru_forward.

    dh_out: (B, T, H) gradient on every emitted hidden state.
    Returns dgi (B, T, 3H), dwh (3H, H), dbh (3H,).
    """
    B, T, H = dh_out.shape
    dgi = np.zeros((B, T, 3 * H), dtype=dh_out.dtype)
    dwh = np.zeros_like(wh)
    dbh = np.zeros(3 * H, dtype=dh_out.dtype)
    dh_carry = np.zeros((B, H), dtype=dh_out.dtype)
    zeros_h0 = np.zeros((B, H), dtype=dh_out.dtype)
    for t in range(T - 1, -1, -1):
        h_prev = h[:, t - 1] if t > 0 else zeros_h0
        dh = dh_out[:, t] + dh_carry
        rt, zt, nt, ghn_t = r[:, t], z[:, t], n[:, t], ghn[:, t]
        dz = dh * (h_prev - nt)
        dn = dh * (1.0 - zt)
        dgn = dn * (1.0 - nt * nt)
        dr = dgn * ghn_t
        dghn = dgn * rt
        dgr = dr * rt * (1.0 - rt)
        dgz = dz * zt * (1.0 - zt)
        dgi[:, t, :H] = dgr
        dgi[:, t, H:2 * H] = dgz
        dgi[:, t, 2 * H:] = dgn
        g3 = np.concatenate([dgr, dgz, dghn], axis=1)  # hidden-side gate grads
        dwh += g3.T @ h_prev
        dbh += g3.sum(axis=0)
        dh_carry = dh * zt + g3 @ wh
    return dgi, dwh, dbh
