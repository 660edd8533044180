# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fused loss + gradient kernel.

Same arithmetic as `_kernel_py.eval_loss_grad`, in the same evaluation
order, on C doubles. Scalar buffer layout lives in `_packing.py`; the
indices below are literals and must match it.
"""

from libc.math cimport exp, log, sqrt

BACKEND = "compiled"

DEF MAX_N = 16

# scalar layout (mirrors _packing.py)
DEF S_T_DD = 0
DEF S_T_DP = 1
DEF S_T_DH = 2
DEF S_T_R0 = 3
DEF S_P_DD = 4
DEF S_P_DP = 5
DEF S_P_DH = 6
DEF S_P_R0 = 7
DEF S_EPS = 8
DEF S_WDIFF = 9
DEF S_WSWELL = 10
DEF S_SWTHR = 11
DEF S_REDMAX = 12
DEF S_REDMIN = 13
DEF S_W1 = 14
DEF S_W2 = 15
DEF S_AVM = 16
DEF S_VMAX = 17
DEF S_ABP = 18
DEF S_TMAX = 19
DEF S_GAMMA = 20


def eval_loss_grad(double[::1] theta, double[::1] dd, double[::1] dp, double[::1] dh,
                   double[::1] vm, double[::1] tb,
                   double[::1] role_beta, double[::1] role_tau, double[::1] role_mask,
                   double[::1] scal,
                   double[::1] phi_out, double[::1] grad_out, double[::1] terms_out):
    cdef int n = theta.shape[0]
    if n > MAX_N:
        raise ValueError("kernel supports at most 16 components")

    cdef int i, j, k, base
    cdef double m, z, e
    cdef double md, mp, mh
    cdef double td, tp, th, pd, pp, ph
    cdef double ra_t, ra_p
    cdef double gt_d, gt_p, gt_h, gp_d, gp_p, gp_h
    cdef double dra_t[MAX_N]
    cdef double dra_p[MAX_N]
    cdef double dphi[MAX_N]
    cdef double eps, t_r0, p_r0, red_t, red_p
    cdef double denom, inv_d2, l_ratio, l_diff, l_penalty, l_swell, l_kin, l_ent
    cdef double w_diff, w1, w2, w_swell, a_vm, a_bp, gamma
    cdef double h, c, vbar, tbar, fk, beta, s, lg, dot

    m = theta[0]
    for i in range(1, n):
        if theta[i] > m:
            m = theta[i]
    z = 0.0
    for i in range(n):
        h = theta[i] - m
        if h < -708.0:
            h = -708.0
        e = exp(h)
        phi_out[i] = e
        z += e
    for i in range(n):
        phi_out[i] = phi_out[i] / z

    md = 0.0
    mp = 0.0
    mh = 0.0
    for i in range(n):
        md += phi_out[i] * dd[i]
        mp += phi_out[i] * dp[i]
        mh += phi_out[i] * dh[i]

    td = scal[S_T_DD]; tp = scal[S_T_DP]; th = scal[S_T_DH]
    pd = scal[S_P_DD]; pp = scal[S_P_DP]; ph = scal[S_P_DH]
    ra_t = sqrt(4.0 * (md - td) ** 2 + (mp - tp) ** 2 + (mh - th) ** 2)
    ra_p = sqrt(4.0 * (md - pd) ** 2 + (mp - pp) ** 2 + (mh - ph) ** 2)
    if ra_t > 0.0:
        gt_d = 4.0 * (md - td) / ra_t
        gt_p = (mp - tp) / ra_t
        gt_h = (mh - th) / ra_t
    else:
        gt_d = 0.0; gt_p = 0.0; gt_h = 0.0
    if ra_p > 0.0:
        gp_d = 4.0 * (md - pd) / ra_p
        gp_p = (mp - pp) / ra_p
        gp_h = (mh - ph) / ra_p
    else:
        gp_d = 0.0; gp_p = 0.0; gp_h = 0.0

    for i in range(n):
        dra_t[i] = gt_d * dd[i] + gt_p * dp[i] + gt_h * dh[i]
        dra_p[i] = gp_d * dd[i] + gp_p * dp[i] + gp_h * dh[i]

    eps = scal[S_EPS]
    t_r0 = scal[S_T_R0]
    p_r0 = scal[S_P_R0]
    red_t = ra_t / t_r0
    red_p = ra_p / p_r0

    for i in range(n):
        dphi[i] = 0.0

    denom = ra_p + eps
    l_ratio = ra_t / denom
    inv_d2 = 1.0 / (denom * denom)
    for i in range(n):
        dphi[i] += (dra_t[i] * denom - ra_t * dra_p[i]) * inv_d2

    w_diff = scal[S_WDIFF]
    l_diff = w_diff * (ra_t - ra_p)
    if w_diff != 0.0:
        for i in range(n):
            dphi[i] += w_diff * (dra_t[i] - dra_p[i])

    w1 = scal[S_W1]
    w2 = scal[S_W2]
    l_penalty = 0.0
    h = red_t - scal[S_REDMAX]
    if h > 0.0:
        l_penalty += w1 * h
        c = w1 / t_r0
        for i in range(n):
            dphi[i] += c * dra_t[i]
    h = scal[S_REDMIN] - red_p
    if h > 0.0:
        l_penalty += w2 * h
        c = w2 / p_r0
        for i in range(n):
            dphi[i] -= c * dra_p[i]

    w_swell = scal[S_WSWELL]
    l_swell = 0.0
    h = scal[S_SWTHR] - red_t
    if h > 0.0:
        l_swell = w_swell * h
        c = w_swell / t_r0
        for i in range(n):
            dphi[i] -= c * dra_t[i]

    l_kin = 0.0
    a_vm = scal[S_AVM]
    if a_vm > 0.0:
        vbar = 0.0
        for i in range(n):
            vbar += phi_out[i] * vm[i]
        h = vbar - scal[S_VMAX]
        if h > 0.0:
            l_kin += a_vm * h
            for i in range(n):
                dphi[i] += a_vm * vm[i]
    a_bp = scal[S_ABP]
    if a_bp > 0.0:
        tbar = 0.0
        for i in range(n):
            tbar += phi_out[i] * tb[i]
        h = tbar - scal[S_TMAX]
        if h > 0.0:
            l_kin += a_bp * h
            for i in range(n):
                dphi[i] += a_bp * tb[i]
    for k in range(role_beta.shape[0]):
        beta = role_beta[k]
        if beta == 0.0:
            continue
        fk = 0.0
        base = k * n
        for i in range(n):
            fk += phi_out[i] * role_mask[base + i]
        h = role_tau[k] - fk
        if h > 0.0:
            l_kin += beta * h
            for i in range(n):
                dphi[i] -= beta * role_mask[base + i]

    gamma = scal[S_GAMMA]
    l_ent = 0.0
    if gamma != 0.0:
        s = 0.0
        for i in range(n):
            lg = log(phi_out[i] + eps)
            s += phi_out[i] * lg
            dphi[i] += -gamma * (lg + phi_out[i] / (phi_out[i] + eps))
        l_ent = -gamma * s

    terms_out[0] = l_ratio
    terms_out[1] = l_diff
    terms_out[2] = l_penalty
    terms_out[3] = l_swell
    terms_out[4] = l_kin
    terms_out[5] = l_ent

    dot = 0.0
    for i in range(n):
        dot += dphi[i] * phi_out[i]
    for j in range(n):
        grad_out[j] = phi_out[j] * (dphi[j] - dot)

    return l_ratio + l_diff + l_penalty + l_swell + l_kin + l_ent
