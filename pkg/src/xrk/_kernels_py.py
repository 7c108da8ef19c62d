"""Pure-numpy stepping kernels (fallback executor).

Semantics reference for the compiled core: states, work counters and
exception behaviour must match xrk._kernels_c exactly.  Counter layout in
cnt: [f evaluations, jvp calls, M matvecs, cached-matrix matvecs].
"""

from __future__ import annotations

import numpy as np

from .errors import BlowUpError
from .kernels import CORR_NONE, CORR_W2, CORR_W3, CORR_W3T, FAMILY_MVERK, FAMILY_SVERK


def _eval_f(sysd, y, cnt):
    cnt[0] += 1
    return sysd.f(y)


def _eval_jvp(sysd, y, v, cnt):
    cnt[1] += 1
    return sysd.jvp(y, v)


def _matvec(M, v, cnt):
    cnt[2] += 1
    return M @ v


def _mverk_step(plan, sysd, y, h, cnt):
    s, a, b, M = plan.s, plan.a, plan.b, plan.M
    Y = [y] + [None] * (s - 1)
    fs = [None] * s
    gs = [None] * s  # g_j = M Y_j + f(Y_j), built lazily
    for i in range(1, s):
        acc = None
        for j in range(i):
            aij = a[i, j]
            if aij == 0.0:
                continue
            if gs[j] is None:
                fs[j] = _eval_f(sysd, Y[j], cnt)
                gs[j] = _matvec(M, Y[j], cnt) + fs[j]
            acc = aij * gs[j] if acc is None else acc + aij * gs[j]
        Y[i] = y if acc is None else y + h * acc
    upd = None
    for i in range(s):
        bi = b[i]
        if bi == 0.0:
            continue
        if fs[i] is None:
            fs[i] = _eval_f(sysd, Y[i], cnt)
        upd = bi * fs[i] if upd is None else upd + bi * fs[i]
    y1 = plan.E1 @ y
    cnt[3] += 1
    if upd is not None:
        y1 = y1 + h * upd
    if plan.corr != CORR_NONE:
        if fs[0] is None:
            fs[0] = _eval_f(sysd, y, cnt)
        if plan.corr == CORR_W2:
            y1 = y1 + (h * h / 2.0) * _matvec(M, fs[0], cnt)
        else:  # CORR_W3
            if gs[0] is None:
                gs[0] = _matvec(M, y, cnt) + fs[0]
            u = _matvec(M, fs[0], cnt)
            v = _eval_jvp(sysd, y, gs[0], cnt)
            y1 = y1 + (h * h / 6.0) * _matvec(M, 3.0 * fs[0] + h * (u + v), cnt)
    return y1


def _sverk_step(plan, sysd, y, h, cnt):
    s, a, b, M = plan.s, plan.a, plan.b, plan.M
    mats = plan.exp_mats
    prods: dict = {}  # node index -> e^{c h M} y, one matvec per distinct node

    def expy(idx):
        p = prods.get(idx)
        if p is None:
            p = mats[idx] @ y
            cnt[3] += 1
            prods[idx] = p
        return p

    Y = [y] + [None] * (s - 1)
    fs = [None] * s
    for i in range(1, s):
        idx = plan.stage_exp_idx[i]
        base = y if idx < 0 else expy(idx)
        acc = None
        for j in range(i):
            aij = a[i, j]
            if aij == 0.0:
                continue
            if fs[j] is None:
                fs[j] = _eval_f(sysd, Y[j], cnt)
            acc = aij * fs[j] if acc is None else acc + aij * fs[j]
        Y[i] = base if acc is None else base + h * acc
    upd = None
    for i in range(s):
        bi = b[i]
        if bi == 0.0:
            continue
        if fs[i] is None:
            fs[i] = _eval_f(sysd, Y[i], cnt)
        upd = bi * fs[i] if upd is None else upd + bi * fs[i]
    y1 = expy(plan.upd_exp_idx)
    if upd is not None:
        y1 = y1 + h * upd
    if plan.corr != CORR_NONE:
        if fs[0] is None:
            fs[0] = _eval_f(sysd, y, cnt)
        u = _matvec(M, fs[0], cnt)
        if plan.corr == CORR_W2:
            y1 = y1 + (h * h / 2.0) * u
        else:  # CORR_W3T
            mu = _matvec(M, u, cnt)
            ju = _eval_jvp(sysd, y, u, cnt)
            g0 = _matvec(M, y, cnt) + fs[0]
            mjg = _matvec(M, _eval_jvp(sysd, y, g0, cnt), cnt)
            y1 = y1 + (h * h / 2.0) * u + (h**3 / 6.0) * (mu + ju + mjg)
    return y1


def _phi_step(plan, sysd, y, h, cnt):
    s = plan.s
    mats = plan.exp_mats
    prods: dict = {}

    def expy(idx):
        p = prods.get(idx)
        if p is None:
            p = mats[idx] @ y
            cnt[3] += 1
            prods[idx] = p
        return p

    Y = [y] + [None] * (s - 1)
    fs = [None] * s

    def f_of(j):
        if fs[j] is None:
            fs[j] = _eval_f(sysd, Y[j], cnt)
        return fs[j]

    G = plan.grp_target.shape[0]
    pos = 0
    acc: dict = {}
    for g in range(G):
        tgt = plan.grp_target[g]
        vec = None
        for k in range(pos, pos + plan.grp_len[g]):
            c = plan.term_c[k]
            fj = f_of(plan.term_j[k])
            vec = c * fj if vec is None else vec + c * fj
        pos += plan.grp_len[g]
        prod = mats[plan.grp_mat[g]] @ vec
        cnt[3] += 1
        acc[tgt] = prod if tgt not in acc else acc[tgt] + prod
        if tgt < s:  # groups arrive in stage order; finalize the stage
            nxt = plan.grp_target[g + 1] if g + 1 < G else s
            if nxt != tgt:
                idx = plan.stage_exp_idx[tgt]
                base = y if idx < 0 else expy(idx)
                Y[tgt] = base + h * acc[tgt]
    # stages without any group (never happens for shipped baselines, but
    # keep the semantics total)
    for i in range(1, s):
        if Y[i] is None:
            idx = plan.stage_exp_idx[i]
            Y[i] = y if idx < 0 else expy(idx)
    y1 = expy(plan.upd_exp_idx)
    if s in acc:
        y1 = y1 + h * acc[s]
    return y1


def step_once(plan, sysd, t, y, h, cnt):
    if plan.family == FAMILY_MVERK:
        y1 = _mverk_step(plan, sysd, y, h, cnt)
    elif plan.family == FAMILY_SVERK:
        y1 = _sverk_step(plan, sysd, y, h, cnt)
    else:
        y1 = _phi_step(plan, sysd, y, h, cnt)
    if not np.isfinite(y1).all():
        raise BlowUpError(t + h)
    return y1


def run_fixed(plan, sysd, t0, y0, h, n, cnt):
    y = np.array(y0, dtype=float, copy=True)
    for i in range(n):
        try:
            y = step_once(plan, sysd, t0 + i * h, y, h, cnt)
        except BlowUpError as exc:
            exc.step_index = i
            raise
    return y
