"""Numba-compiled kernels; same interface as kernels_numpy.

Each parallel loop owns a disjoint slice of the output and keeps its inner
summation order fixed, so results are bit-deterministic regardless of the
thread count. First use per dtype pays a one-off JIT compile (cached on disk).
"""

from __future__ import annotations

import warnings

import numpy as np

# harmless on hosts whose TBB is too old; numba falls back to workqueue
warnings.filterwarnings("ignore", message=".*TBB.*")

from numba import njit, prange


@njit(cache=True, parallel=True)
def _conv3x3_forward(xp, w, y):
    # shift-and-MAC over the 9 kernel offsets; the inner loops run along
    # contiguous rows so LLVM can vectorize them
    B, C, Hp, Wp = xp.shape
    O = w.shape[0]
    H, W = Hp - 2, Wp - 2
    for bo in prange(B * O):
        b = bo // O
        o = bo % O
        yb = y[b, o]
        for h in range(H):
            for t in range(W):
                yb[h, t] = 0.0
        for c in range(C):
            xc = xp[b, c]
            for i in range(3):
                for j in range(3):
                    coeff = w[o, c, i, j]
                    for h in range(H):
                        row = xc[h + i]
                        out = yb[h]
                        for t in range(W):
                            out[t] += coeff * row[t + j]


def conv3x3_forward(xp: np.ndarray, w: np.ndarray) -> np.ndarray:
    B, C, Hp, Wp = xp.shape
    y = np.empty((B, w.shape[0], Hp - 2, Wp - 2), dtype=xp.dtype)
    _conv3x3_forward(xp, w, y)
    return y


@njit(cache=True, parallel=True)
def _conv3x3_input_grad(dy, w, dxp):
    B, O, H, W = dy.shape
    C = w.shape[1]
    for bc in prange(B * C):
        b = bc // C
        c = bc % C
        dxc = dxp[b, c]
        for h in range(H + 2):
            for t in range(W + 2):
                dxc[h, t] = 0.0
        for o in range(O):
            dyo = dy[b, o]
            for i in range(3):
                for j in range(3):
                    coeff = w[o, c, i, j]
                    for h in range(H):
                        row = dyo[h]
                        out = dxc[h + i]
                        for t in range(W):
                            out[t + j] += coeff * row[t]


def conv3x3_input_grad(dy: np.ndarray, w: np.ndarray, xp_shape) -> np.ndarray:
    dxp = np.empty(xp_shape, dtype=dy.dtype)
    _conv3x3_input_grad(dy, w, dxp)
    return dxp


@njit(cache=True, parallel=True)
def _conv3x3_weight_grad(dy, xp, dw):
    B, O, H, W = dy.shape
    C = xp.shape[1]
    for oc in prange(O * C):
        o = oc // C
        c = oc % C
        for i in range(3):
            for j in range(3):
                acc = dw.dtype.type(0.0)
                for b in range(B):
                    dyo = dy[b, o]
                    xc = xp[b, c]
                    for h in range(H):
                        row_dy = dyo[h]
                        row_x = xc[h + i]
                        dot = dw.dtype.type(0.0)
                        for t in range(W):
                            dot += row_dy[t] * row_x[t + j]
                        acc += dot
                dw[o, c, i, j] = acc


def conv3x3_weight_grad(dy: np.ndarray, xp: np.ndarray) -> np.ndarray:
    dw = np.empty((dy.shape[1], xp.shape[1], 3, 3), dtype=dy.dtype)
    _conv3x3_weight_grad(dy, xp, dw)
    return dw


@njit(cache=True, parallel=True)
def _maxpool2_forward(x, y, idx):
    B, C, H, W = x.shape
    Ho, Wo = H // 2, W // 2
    for bc in prange(B * C):
        b = bc // C
        c = bc % C
        for h in range(Ho):
            for wv in range(Wo):
                best = x[b, c, 2 * h, 2 * wv]
                pos = 0
                k = 1
                for i in range(2):
                    for j in range(2):
                        if i == 0 and j == 0:
                            continue
                        v = x[b, c, 2 * h + i, 2 * wv + j]
                        if v > best:  # strict: first maximum wins
                            best = v
                            pos = k
                        k += 1
                y[b, c, h, wv] = best
                idx[b, c, h, wv] = pos


def maxpool2_forward(x: np.ndarray):
    B, C, H, W = x.shape
    y = np.empty((B, C, H // 2, W // 2), dtype=x.dtype)
    idx = np.empty(y.shape, dtype=np.int64)
    _maxpool2_forward(x, y, idx)
    return y, idx


@njit(cache=True, parallel=True)
def _maxpool2_backward(dy, idx, dx):
    B, C, Ho, Wo = dy.shape
    for bc in prange(B * C):
        b = bc // C
        c = bc % C
        for h in range(Ho):
            for wv in range(Wo):
                p = idx[b, c, h, wv]
                dx[b, c, 2 * h + p // 2, 2 * wv + p % 2] = dy[b, c, h, wv]


def maxpool2_backward(dy: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    dx = np.zeros((dy.shape[0], dy.shape[1], h, w), dtype=dy.dtype)
    _maxpool2_backward(dy, idx, dx)
    return dx


@njit(cache=True, parallel=True)
def _gru_forward(gi, wh, bh, h, r, z, n, ghn):
    B, T, H3 = gi.shape
    H = H3 // 3
    one = gi.dtype.type(1.0)
    for b in prange(B):
        for t in range(T):
            for k in range(3 * H):
                acc = bh[k]
                if t > 0:
                    for j in range(H):
                        acc += wh[k, j] * h[b, t - 1, j]
                if k < H:
                    r[b, t, k] = one / (one + np.exp(-(gi[b, t, k] + acc)))
                elif k < 2 * H:
                    z[b, t, k - H] = one / (one + np.exp(-(gi[b, t, k] + acc)))
                else:
                    ghn[b, t, k - 2 * H] = acc
            for k in range(H):
                nt = np.tanh(gi[b, t, 2 * H + k] + r[b, t, k] * ghn[b, t, k])
                n[b, t, k] = nt
                prev = h[b, t - 1, k] if t > 0 else gi.dtype.type(0.0)
                h[b, t, k] = (one - z[b, t, k]) * nt + z[b, t, k] * prev


def gru_forward(gi: np.ndarray, wh: np.ndarray, bh: np.ndarray):
    B, T, H3 = gi.shape
    H = H3 // 3
    h = np.zeros((B, T, H), dtype=gi.dtype)
    r = np.zeros_like(h)
    z = np.zeros_like(h)
    n = np.zeros_like(h)
    ghn = np.zeros_like(h)
    _gru_forward(gi, wh, bh, h, r, z, n, ghn)
    return h, r, z, n, ghn


@njit(cache=True)
def _gru_backward(dh_out, h, r, z, n, ghn, wh, dgi, dwh, dbh):
    B, T, H = dh_out.shape
    one = dh_out.dtype.type(1.0)
    zero = dh_out.dtype.type(0.0)
    dh_carry = np.zeros((B, H), dtype=dh_out.dtype)
    g3 = np.zeros((B, 3 * H), dtype=dh_out.dtype)
    for t in range(T - 1, -1, -1):
        for b in range(B):
            for k in range(H):
                h_prev = h[b, t - 1, k] if t > 0 else zero
                dh = dh_out[b, t, k] + dh_carry[b, k]
                rt = r[b, t, k]
                zt = z[b, t, k]
                nt = n[b, t, k]
                dz = dh * (h_prev - nt)
                dn = dh * (one - zt)
                dgn = dn * (one - nt * nt)
                dr = dgn * ghn[b, t, k]
                dgr = dr * rt * (one - rt)
                dgz = dz * zt * (one - zt)
                dgi[b, t, k] = dgr
                dgi[b, t, H + k] = dgz
                dgi[b, t, 2 * H + k] = dgn
                g3[b, k] = dgr
                g3[b, H + k] = dgz
                g3[b, 2 * H + k] = dgn * rt
                dh_carry[b, k] = dh * zt
        for k in range(3 * H):
            for b in range(B):
                dbh[k] += g3[b, k]
                if t > 0:
                    for j in range(H):
                        dwh[k, j] += g3[b, k] * h[b, t - 1, j]
        for b in range(B):
            for j in range(H):
                acc = zero
                for k in range(3 * H):
                    acc += g3[b, k] * wh[k, j]
                dh_carry[b, j] += acc


def gru_backward(dh_out: np.ndarray, h: np.ndarray, r: np.ndarray, z: np.ndarray,
                 n: np.ndarray, ghn: np.ndarray, wh: np.ndarray):
    B, T, H = dh_out.shape
    dgi = np.zeros((B, T, 3 * H), dtype=dh_out.dtype)
    dwh = np.zeros_like(wh)
    dbh = np.zeros(3 * H, dtype=dh_out.dtype)
    _gru_backward(dh_out, h, r, z, n, ghn, wh, dgi, dwh, dbh)
    return dgi, dwh, dbh
