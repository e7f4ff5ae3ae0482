"""Fused numba time-stepping loop for :func:`ljfuse.simulator.run`.

Mirrors ``edc.consensus_derivatives`` and ``pgf.control_inputs`` step for step;
``tests/test_kernel.py`` checks the two against each other.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_NOT_PD = 2


@njit(cache=True)
def _phi(e, zeta, q, layer):
    a = abs(e)
    if e > 0.0:
        sg = 1.0
    elif e < 0.0:
        sg = -1.0
    else:
        sg = 0.0
    out = (a ** (1.0 - q) + a ** (1.0 + q)) * sg
    if layer > 0.0:
        r = e / layer
        if r > 1.0:
            r = 1.0
        elif r < -1.0:
            r = -1.0
        out += zeta * r
    else:
        out += zeta * sg
    return out


@njit(cache=True)
def _edge_flows(tails, heads, est, kappa, zeta, q, layer, out):
    out[:] = 0.0
    for e in range(tails.shape[0]):
        i = tails[e]
        j = heads[e]
        for c in range(est.shape[1]):
            f = kappa * _phi(est[j, c] - est[i, c], zeta, q, layer)
            out[i, c] += f
            out[j, c] -= f


@njit(cache=True)
def _unpack(packed_row, iu0, iu1, n, M):
    for c in range(iu0.shape[0]):
        M[iu0[c], iu1[c]] = packed_row[c]
        M[iu1[c], iu0[c]] = packed_row[c]


@njit(cache=True)
def _spd_inverse(A, L, Ainv):
    """Cholesky-based inverse; returns False if a pivot is not positive."""
    n = A.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if not s > 0.0:
                    return False
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    # columns of inv(A) by forward/back substitution
    for col in range(n):
        y = np.zeros(n)
        for i in range(n):
            s = 1.0 if i == col else 0.0
            for k in range(i):
                s -= L[i, k] * y[k]
            y[i] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = y[i]
            for k in range(i + 1, n):
                s -= L[k, i] * Ainv[k, col]
            Ainv[i, col] = s / L[i, i]
    return True


@njit(cache=True)
def _controls(t, x, s_hat, q_hat, P_inv, trP, iu0, iu1, mu, kappa_c, eps, t_c, u, M, L, Minv):
    n = P_inv.shape[1]
    N = x.shape[0]
    for i in range(N):
        u[i] = 0.0
    if t < t_c:
        return True
    for i in range(N):
        sh = s_hat[i]
        if sh < 1.0 - eps or sh > 1.0:
            d = (1.0 - eps / 2.0) - sh
            sg = 1.0 if d > 0.0 else (-1.0 if d < 0.0 else 0.0)
            u[i] = kappa_c * x[i] * sg
            continue
        if mu == 0:
            g = -2.0 * x[i] * trP[i]
        else:
            _unpack(q_hat[i], iu0, iu1, n, M)
            if not _spd_inverse(M, L, Minv):
                return False
            acc = 0.0
            if mu == 1:
                for a in range(n):
                    for b in range(n):
                        acc += Minv[a, b] * P_inv[i, a, b]
            else:
                for a in range(n):
                    for b in range(n):
                        mm = 0.0
                        for k in range(n):
                            mm += Minv[a, k] * Minv[k, b]
                        acc += mm * P_inv[i, a, b]
            g = -2.0 * x[i] * acc
        u[i] = -kappa_c * g
    return True


@njit(cache=True)
def integrate(
    x0, P_inv, P_inv_packed, iu0, iu1, tails, heads,
    kappa_s, zeta_s, kappa_q, zeta_q, q, layer,
    mu, kappa_c, eps, t_c,
    dt, n_steps, record_every, tol_cons, sustain, exact=False,
):
    """Euler-integrate the networked system; ``exact=True`` feeds every agent the true averages."""
    N = x0.shape[0]
    n = P_inv.shape[1]
    m = P_inv_packed.shape[1]
    n_rec = n_steps // record_every + 1

    rec_t = np.empty(n_rec)
    rec_x = np.empty((n_rec, N))
    rec_sh = np.empty((n_rec, N))
    rec_es = np.empty(n_rec)
    rec_eq = np.empty(n_rec)
    rec_u = np.empty(n_rec)
    # t_cons, t_cons_q, t_feasible (nan = never), max err after T_c, s_lo, s_hi,
    # max |sum v|, fail time
    stats = np.full(8, np.nan)
    stats[3] = 0.0
    stats[4] = np.inf
    stats[5] = -np.inf
    stats[6] = 0.0

    trP = np.empty(N)
    for i in range(N):
        acc = 0.0
        for a in range(n):
            acc += P_inv[i, a, a]
        trP[i] = acc

    x = x0.copy()
    v = np.zeros(N)
    V = np.zeros((N, m))
    s_hat = np.empty((N, 1))
    q_hat = np.empty((N, m))
    fs = np.empty((N, 1))
    fq = np.empty((N, m))
    u = np.zeros(N)
    M = np.zeros((n, n))
    L = np.zeros((n, n))
    Minv = np.zeros((n, n))
    sh_flat = np.empty(N)

    run_c = 0
    start_c = 0.0
    run_q = 0
    start_q = 0.0
    run_f = 0
    start_f = 0.0
    r = 0
    status = STATUS_OK

    for k in range(n_steps + 1):
        t = k * dt
        s_true = 0.0
        for i in range(N):
            x2 = x[i] * x[i]
            s_hat[i, 0] = x2 - v[i]
            sh_flat[i] = s_hat[i, 0]
            s_true += x2
            for c in range(m):
                q_hat[i, c] = x2 * P_inv_packed[i, c] - V[i, c]
        s_true /= N
        if exact:
            for i in range(N):
                s_hat[i, 0] = s_true
                sh_flat[i] = s_true
            for c in range(m):
                qbar = 0.0
                for i in range(N):
                    qbar += x[i] * x[i] * P_inv_packed[i, c]
                qbar /= N
                for i in range(N):
                    q_hat[i, c] = qbar
        err_s = 0.0
        all_in = True
        for i in range(N):
            d = abs(sh_flat[i] - s_true)
            if d > err_s:
                err_s = d
            if sh_flat[i] < 1.0 - eps or sh_flat[i] > 1.0:
                all_in = False
        err_q = 0.0
        for c in range(m):
            qbar = 0.0
            for i in range(N):
                qbar += x[i] * x[i] * P_inv_packed[i, c]
            qbar /= N
            for i in range(N):
                d = abs(q_hat[i, c] - qbar)
                if d > err_q:
                    err_q = d

        # debounced events
        if math.isnan(stats[0]):
            if err_s < tol_cons:
                if run_c == 0:
                    start_c = t
                run_c += 1
                if run_c >= sustain:
                    stats[0] = start_c
            else:
                run_c = 0
        if math.isnan(stats[1]):
            if err_q < tol_cons:
                if run_q == 0:
                    start_q = t
                run_q += 1
                if run_q >= sustain:
                    stats[1] = start_q
            else:
                run_q = 0
        if t >= t_c:
            if err_s > stats[3]:
                stats[3] = err_s
            if math.isnan(stats[2]):
                if all_in:
                    if run_f == 0:
                        start_f = t
                    run_f += 1
                    if run_f >= sustain:
                        stats[2] = start_f
                else:
                    run_f = 0
            if not math.isnan(stats[2]):
                if s_true < stats[4]:
                    stats[4] = s_true
                if s_true > stats[5]:
                    stats[5] = s_true

        ok = _controls(t, x, sh_flat, q_hat, P_inv, trP, iu0, iu1, mu, kappa_c, eps, t_c, u, M, L, Minv)
        if not ok:
            status = STATUS_NOT_PD
            stats[7] = t
            break

        if k % record_every == 0:
            sv = 0.0
            for i in range(N):
                sv += v[i]
            if abs(sv) > stats[6]:
                stats[6] = abs(sv)
            for c in range(m):
                sv = 0.0
                for i in range(N):
                    sv += V[i, c]
                if abs(sv) > stats[6]:
                    stats[6] = abs(sv)
            rec_t[r] = t
            un = 0.0
            for i in range(N):
                rec_x[r, i] = x[i]
                rec_sh[r, i] = sh_flat[i]
                un += u[i] * u[i]
            rec_es[r] = err_s
            rec_eq[r] = err_q
            rec_u[r] = math.sqrt(un)
            r += 1

        if k == n_steps:
            break
        _edge_flows(tails, heads, s_hat, kappa_s, zeta_s, q, layer, fs)
        _edge_flows(tails, heads, q_hat, kappa_q, zeta_q, q, layer, fq)
        bad = False
        for i in range(N):
            v[i] -= dt * fs[i, 0]
            for c in range(m):
                V[i, c] -= dt * fq[i, c]
            x[i] += dt * u[i]
            if not (abs(x[i]) <= 1e6):
                bad = True
        if bad:
            status = STATUS_DIVERGED
            stats[7] = t
            break

    return (
        status, r, rec_t, rec_x, rec_sh, rec_es, rec_eq, rec_u, stats, x, v, V,
    )
