"""In-place parameter updates for gradients stored as a sum of outer products.

A weight-matrix gradient over a truncation window is ``A.T @ B`` with one
row of A (gate pre-activation gradients) and B (layer inputs) per time
step. Updating straight from the factors avoids materialising a dense
gradient on every step.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def sgd_lowrank(p, A, B, lr):
    K = A.shape[0]
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            g = 0.0
            for k in range(K):
                g += A[k, i] * B[k, j]
            p[i, j] -= lr * g


@numba.njit(cache=True)
def adam_lowrank(p, m, v, A, B, lr, beta1, beta2, eps):
    K = A.shape[0]
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            g = 0.0
            for k in range(K):
                g += A[k, i] * B[k, j]
            mm = beta1 * m[i, j] + (1.0 - beta1) * g
            vv = beta2 * v[i, j] + (1.0 - beta2) * g * g
            m[i, j] = mm
            v[i, j] = vv
            p[i, j] -= lr * mm / (np.sqrt(vv) + eps)


@numba.njit(cache=True)
def adam_dense(p, m, v, g, lr, beta1, beta2, eps):
    pf = p.reshape(-1)
    mf = m.reshape(-1)
    vf = v.reshape(-1)
    gf = g.reshape(-1)
    for i in range(pf.shape[0]):
        mm = beta1 * mf[i] + (1.0 - beta1) * gf[i]
        vv = beta2 * vf[i] + (1.0 - beta2) * gf[i] * gf[i]
        mf[i] = mm
        vf[i] = vv
        pf[i] -= lr * mm / (np.sqrt(vv) + eps)
