"""Pure-Python fused loss + gradient kernel.

Reference implementation of the mixing-ratio objective. The compiled
kernel in `_ratio_kernel.pyx` follows the same arithmetic in the same
order; `kernels.py` picks one at import time.

Objective over logits theta (phi = softmax(theta)):

    L = L_ratio + L_diff + L_penalty + L_swelling + L_kinetics + L_entropy

    L_ratio    = Ra_t / (Ra_p + eps)
    L_diff     = w_diff * (Ra_t - Ra_p)
    L_penalty  = w1 * max(0, RED_t - red_max) + w2 * max(0, red_min - RED_p)
    L_swelling = w_swell * max(0, swell_thr - RED_t)
    L_kinetics = a_vm * max(0, Vbar - V_max) + a_bp * max(0, Tbar - T_max)
                 + sum_k beta_k * max(0, tau_k - f_k(phi))
    L_entropy  = -gamma * sum_i phi_i * ln(phi_i + eps)

with Ra_t/Ra_p the HSP distances of the phi-mixture to the target and
protect materials, RED = Ra / R0, Vbar/Tbar phi-weighted molar volume and
boiling point, and f_k(phi) the fraction mass tagged with role k. The
gradient is exact through softmax, linear mixing, Ra, and every hinge; at
a hinge kink the inactive-side subgradient (0) is used, and at Ra = 0 the
distance gradient is taken as 0.
"""

from __future__ import annotations

from math import exp, log, sqrt

from ._packing import (
    MAX_COMPONENTS_KERNEL,
    S_ABP, S_AVM, S_EPS, S_GAMMA, S_P_DD, S_P_DH, S_P_DP, S_P_R0,
    S_REDMAX, S_REDMIN, S_SWTHR, S_TMAX, S_T_DD, S_T_DH, S_T_DP, S_T_R0,
    S_VMAX, S_W1, S_W2, S_WDIFF, S_WSWELL,
    TERM_DIFF, TERM_ENTROPY, TERM_KINETICS, TERM_PENALTY, TERM_RATIO,
    TERM_SWELLING,
)

BACKEND = "python"


def eval_loss_grad(theta, dd, dp, dh, vm, tb, role_beta, role_tau, role_mask,
                   scal, phi_out, grad_out, terms_out):
    """Evaluate loss terms and d(loss)/d(theta); returns the total loss.

    All buffers are indexable float sequences (array('d') in practice):
    theta/dd/dp/dh/vm/tb/phi_out/grad_out of length n, role_mask of length
    len(role_beta) * n (row-major), scal per `_packing`, terms_out of
    length 6.
    """
    n = len(theta)
    if n > MAX_COMPONENTS_KERNEL:
        raise ValueError(f"kernel supports at most {MAX_COMPONENTS_KERNEL} components")

    # softmax with max subtraction; exponent floored so no fraction
    # underflows to exact zero
    m = theta[0]
    for i in range(1, n):
        if theta[i] > m:
            m = theta[i]
    z = 0.0
    for i in range(n):
        d = theta[i] - m
        if d < -708.0:
            d = -708.0
        e = exp(d)
        phi_out[i] = e
        z += e
    for i in range(n):
        phi_out[i] = phi_out[i] / z

    # mixture HSP
    md = 0.0
    mp = 0.0
    mh = 0.0
    for i in range(n):
        md += phi_out[i] * dd[i]
        mp += phi_out[i] * dp[i]
        mh += phi_out[i] * dh[i]

    # distances and their gradients w.r.t. the mixture coordinates
    td, tp, th = scal[S_T_DD], scal[S_T_DP], scal[S_T_DH]
    pd, pp, ph = scal[S_P_DD], scal[S_P_DP], scal[S_P_DH]
    ra_t = sqrt(4.0 * (md - td) ** 2 + (mp - tp) ** 2 + (mh - th) ** 2)
    ra_p = sqrt(4.0 * (md - pd) ** 2 + (mp - pp) ** 2 + (mh - ph) ** 2)
    if ra_t > 0.0:
        gt_d = 4.0 * (md - td) / ra_t
        gt_p = (mp - tp) / ra_t
        gt_h = (mh - th) / ra_t
    else:
        gt_d = gt_p = gt_h = 0.0
    if ra_p > 0.0:
        gp_d = 4.0 * (md - pd) / ra_p
        gp_p = (mp - pp) / ra_p
        gp_h = (mh - ph) / ra_p
    else:
        gp_d = gp_p = gp_h = 0.0

    # per-component dRa/dphi_i
    dra_t = [0.0] * n
    dra_p = [0.0] * n
    for i in range(n):
        dra_t[i] = gt_d * dd[i] + gt_p * dp[i] + gt_h * dh[i]
        dra_p[i] = gp_d * dd[i] + gp_p * dp[i] + gp_h * dh[i]

    eps = scal[S_EPS]
    t_r0 = scal[S_T_R0]
    p_r0 = scal[S_P_R0]
    red_t = ra_t / t_r0
    red_p = ra_p / p_r0

    dphi = [0.0] * n

    # L_ratio = Ra_t / (Ra_p + eps)
    denom = ra_p + eps
    l_ratio = ra_t / denom
    inv_d2 = 1.0 / (denom * denom)
    for i in range(n):
        dphi[i] += (dra_t[i] * denom - ra_t * dra_p[i]) * inv_d2

    # L_diff = w_diff * (Ra_t - Ra_p)
    w_diff = scal[S_WDIFF]
    l_diff = w_diff * (ra_t - ra_p)
    if w_diff != 0.0:
        for i in range(n):
            dphi[i] += w_diff * (dra_t[i] - dra_p[i])

    # hinge penalties on RED bounds
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

    # swelling guard: penalize RED_t below the threshold
    w_swell = scal[S_WSWELL]
    l_swell = 0.0
    h = scal[S_SWTHR] - red_t
    if h > 0.0:
        l_swell = w_swell * h
        c = w_swell / t_r0
        for i in range(n):
            dphi[i] -= c * dra_t[i]

    # kinetics proxies: molar volume cap, boiling point cap, role floors
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
    n_roles = len(role_beta)
    for k in range(n_roles):
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

    # entropy sparsity pressure
    gamma = scal[S_GAMMA]
    l_ent = 0.0
    if gamma != 0.0:
        s = 0.0
        for i in range(n):
            lg = log(phi_out[i] + eps)
            s += phi_out[i] * lg
            dphi[i] += -gamma * (lg + phi_out[i] / (phi_out[i] + eps))
        l_ent = -gamma * s

    terms_out[TERM_RATIO] = l_ratio
    terms_out[TERM_DIFF] = l_diff
    terms_out[TERM_PENALTY] = l_penalty
    terms_out[TERM_SWELLING] = l_swell
    terms_out[TERM_KINETICS] = l_kin
    terms_out[TERM_ENTROPY] = l_ent

    # chain through softmax: dL/dtheta_j = phi_j * (dL/dphi_j - sum_i dL/dphi_i * phi_i)
    dot = 0.0
    for i in range(n):
        dot += dphi[i] * phi_out[i]
    for j in range(n):
        grad_out[j] = phi_out[j] * (dphi[j] - dot)

    return l_ratio + l_diff + l_penalty + l_swell + l_kin + l_ent
