"""Hot numeric loops.

Every kernel exists twice: a loop version compiled with numba and a
vectorised numpy version. The module-level names point at whichever one
``tlbo._accel.USE_NUMBA`` selects; both stay importable for testing and
for ``benchmarks/bench_kernels.py``.
"""

import math

import numpy as np

from tlbo._accel import USE_NUMBA, njit

SQRT5 = math.sqrt(5.0)

# --------------------------------------------------------------------------
# Matérn-5/2 x Hamming covariance
# --------------------------------------------------------------------------


@njit
def cross_cov_nb(xn1, xc1, xn2, xc2, inv_ls, inv_hls, sf2):
    n1 = xn1.shape[0]
    n2 = xn2.shape[0]
    dn = xn1.shape[1]
    dc = xc1.shape[1]
    out = np.empty((n1, n2))
    for i in range(n1):
        for j in range(n2):
            r2 = 0.0
            for d in range(dn):
                t = (xn1[i, d] - xn2[j, d]) * inv_ls[d]
                r2 += t * t
            mism = 0.0
            for c in range(dc):
                if xc1[i, c] != xc2[j, c]:
                    mism += inv_hls[c]
            r = math.sqrt(r2)
            out[i, j] = (
                sf2
                * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2)
                * math.exp(-SQRT5 * r - mism)
            )
    return out


def cross_cov_np(xn1, xc1, xn2, xc2, inv_ls, inv_hls, sf2):
    if xn1.shape[1]:
        diff = (xn1[:, None, :] - xn2[None, :, :]) * inv_ls
        r2 = np.einsum("ijk,ijk->ij", diff, diff)
    else:
        r2 = np.zeros((xn1.shape[0], xn2.shape[0]))
    if xc1.shape[1]:
        mism = ((xc1[:, None, :] != xc2[None, :, :]) * inv_hls).sum(axis=2)
    else:
        mism = 0.0
    r = np.sqrt(r2)
    return sf2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * np.exp(-SQRT5 * r - mism)


# --------------------------------------------------------------------------
# Bootstrap ranking losses (discordant ordered pairs)
# --------------------------------------------------------------------------


@njit
def ranking_losses_nb(preds, y, idx):
    n_samples, m = idx.shape
    n_models = preds.shape[1]
    out = np.zeros((n_samples, n_models), dtype=np.int64)
    for s in range(n_samples):
        for p in range(n_models):
            count = 0
            for j in range(m):
                aj = preds[idx[s, j], p]
                yj = y[idx[s, j]]
                for k in range(m):
                    ak = preds[idx[s, k], p]
                    yk = y[idx[s, k]]
                    if (aj < ak) != (yj < yk):
                        count += 1
            out[s, p] = count
    return out


def ranking_losses_np(preds, y, idx):
    ys = y[idx]
    y_less = ys[:, :, None] < ys[:, None, :]
    out = np.empty((idx.shape[0], preds.shape[1]), dtype=np.int64)
    for p in range(preds.shape[1]):
        a = preds[idx, p]
        out[:, p] = ((a[:, :, None] < a[:, None, :]) ^ y_less).sum(axis=(1, 2))
    return out


# --------------------------------------------------------------------------
# Coordinate descent for (1/M)||y - A w||^2 + alpha * penalty(w)
# --------------------------------------------------------------------------


@njit
def cd_solve_nb(a, y, alpha, l1, positive, max_iter, tol):
    m, p = a.shape
    w = np.zeros(p)
    r = y.copy()
    col_sq = np.zeros(p)
    for i in range(p):
        s = 0.0
        for j in range(m):
            s += a[j, i] * a[j, i]
        col_sq[i] = s / m
    for _ in range(max_iter):
        max_step = 0.0
        max_w = 0.0
        for i in range(p):
            if col_sq[i] == 0.0:
                continue
            old = w[i]
            rho = 0.0
            for j in range(m):
                rho += a[j, i] * r[j]
            rho = rho / m + col_sq[i] * old
            if l1:
                mag = abs(rho) - 0.5 * alpha
                new = 0.0
                if mag > 0.0:
                    new = math.copysign(mag, rho) / col_sq[i]
            else:
                new = rho / (col_sq[i] + alpha)
            if positive and new < 0.0:
                new = 0.0
            step = new - old
            if step != 0.0:
                for j in range(m):
                    r[j] -= step * a[j, i]
                w[i] = new
            if abs(step) > max_step:
                max_step = abs(step)
            if abs(new) > max_w:
                max_w = abs(new)
        if max_step <= tol * max(1.0, max_w):
            break
    return w


def cd_solve_np(a, y, alpha, l1, positive, max_iter, tol):
    m, p = a.shape
    w = np.zeros(p)
    r = y.astype(float).copy()
    col_sq = (a * a).sum(axis=0) / m
    for _ in range(max_iter):
        max_step = 0.0
        for i in range(p):
            if col_sq[i] == 0.0:
                continue
            old = w[i]
            rho = a[:, i] @ r / m + col_sq[i] * old
            if l1:
                new = np.sign(rho) * max(abs(rho) - 0.5 * alpha, 0.0) / col_sq[i]
            else:
                new = rho / (col_sq[i] + alpha)
            if positive and new < 0.0:
                new = 0.0
            step = new - old
            if step != 0.0:
                r -= step * a[:, i]
                w[i] = new
            max_step = max(max_step, abs(step))
        if max_step <= tol * max(1.0, np.abs(w).max()):
            break
    return w


@njit
def bootstrap_cd_nb(a, y, idx, alpha, l1, positive, max_iter, tol):
    n_samples, m = idx.shape
    p = a.shape[1]
    total = np.zeros(p)
    sub_a = np.empty((m, p))
    sub_y = np.empty(m)
    for s in range(n_samples):
        for j in range(m):
            sub_y[j] = y[idx[s, j]]
            for i in range(p):
                sub_a[j, i] = a[idx[s, j], i]
        total += cd_solve_nb(sub_a, sub_y, alpha, l1, positive, max_iter, tol)
    return total / n_samples


def bootstrap_cd_np(a, y, idx, alpha, l1, positive, max_iter, tol):
    total = np.zeros(a.shape[1])
    for rows in idx:
        total += cd_solve_np(a[rows], y[rows], alpha, l1, positive, max_iter, tol)
    return total / idx.shape[0]


# --------------------------------------------------------------------------
# Cartpole rollout
# --------------------------------------------------------------------------
# params = (cart_mass, pole_mass, pole_length, cart_friction, pole_friction, g)
# state  = (s, psi, s_dot, psi_dot), psi measured from upright.


@njit
def cartpole_deriv(state, u, params):
    mc = params[0]
    mp = params[1]
    ln = params[2]
    bc = params[3]
    bp = params[4]
    g = params[5]
    psi = state[1]
    sd = state[2]
    pd = state[3]
    c = math.cos(psi)
    s = math.sin(psi)
    # M(q) qdd = rhs, solved by Cramer's rule
    m11 = mc + mp
    m12 = -mp * ln * c
    m22 = mp * ln * ln
    f1 = u - bc * sd - mp * ln * pd * pd * s
    f2 = mp * g * ln * s - bp * pd
    det = m11 * m22 - m12 * m12
    sdd = (m22 * f1 - m12 * f2) / det
    pdd = (m11 * f2 - m12 * f1) / det
    out = np.empty(4)
    out[0] = sd
    out[1] = pd
    out[2] = sdd
    out[3] = pdd
    return out


@njit
def cartpole_rollout_nb(params, gain, x0, dt, n_steps, blowup):
    x = x0.copy()
    total = 0.0
    for _ in range(n_steps):
        u = -(gain[0] * x[0] + gain[1] * x[1] + gain[2] * x[2] + gain[3] * x[3])
        total += (
            x[0] * x[0]
            + x[1] * x[1]
            + x[2] * x[2]
            + 0.1 * x[3] * x[3]
            + 1e-5 * u * u
        )
        k1 = cartpole_deriv(x, u, params)
        k2 = cartpole_deriv(x + 0.5 * dt * k1, u, params)
        k3 = cartpole_deriv(x + 0.5 * dt * k2, u, params)
        k4 = cartpole_deriv(x + dt * k3, u, params)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for i in range(4):
            if not abs(x[i]) <= blowup:
                return total / n_steps, True, x
    return total / n_steps, False, x


def cartpole_rollout_np(params, gain, x0, dt, n_steps, blowup):
    deriv = cartpole_deriv.py_func
    x = np.array(x0, dtype=float)
    total = 0.0
    for _ in range(n_steps):
        u = -float(gain @ x)
        total += x[0] ** 2 + x[1] ** 2 + x[2] ** 2 + 0.1 * x[3] ** 2 + 1e-5 * u * u
        k1 = deriv(x, u, params)
        k2 = deriv(x + 0.5 * dt * k1, u, params)
        k3 = deriv(x + 0.5 * dt * k2, u, params)
        k4 = deriv(x + dt * k3, u, params)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.abs(x) <= blowup):
            return total / n_steps, True, x
    return total / n_steps, False, x


# --------------------------------------------------------------------------
# Gower distance matrix
# --------------------------------------------------------------------------
# Numeric inputs are pre-divided by their range (zero range -> zeros).


@njit
def gower_matrix_nb(an, ac, bn, bc):
    n = an.shape[0]
    m = bn.shape[0]
    dn = an.shape[1]
    dc = ac.shape[1]
    dims = dn + dc
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            sim = 0.0
            for d in range(dn):
                sim += 1.0 - abs(an[i, d] - bn[j, d])
            for c in range(dc):
                if ac[i, c] == bc[j, c]:
                    sim += 1.0
            v = 1.0 - sim / dims
            out[i, j] = math.sqrt(v) if v > 0.0 else 0.0
    return out


def gower_matrix_np(an, ac, bn, bc):
    dims = an.shape[1] + ac.shape[1]
    sim = np.zeros((an.shape[0], bn.shape[0]))
    if an.shape[1]:
        sim += (1.0 - np.abs(an[:, None, :] - bn[None, :, :])).sum(axis=2)
    if ac.shape[1]:
        sim += (ac[:, None, :] == bc[None, :, :]).sum(axis=2)
    return np.sqrt(np.clip(1.0 - sim / dims, 0.0, None))


if USE_NUMBA:
    cross_cov = cross_cov_nb
    ranking_losses = ranking_losses_nb
    cd_solve = cd_solve_nb
    bootstrap_cd = bootstrap_cd_nb
    cartpole_rollout = cartpole_rollout_nb
    gower_matrix = gower_matrix_nb
else:
    cross_cov = cross_cov_np
    ranking_losses = ranking_losses_np
    cd_solve = cd_solve_np
    bootstrap_cd = bootstrap_cd_np
    cartpole_rollout = cartpole_rollout_np
    gower_matrix = gower_matrix_np
