# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping kernels (the hot inner loops).

Semantics mirror of xrk._kernels_py: same states to roundoff, identical
work counters, identical exceptions.  Any change here must be mirrored
there; the parity test suite enforces agreement.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite
from scipy.linalg.cython_blas cimport dgemv

from .errors import BlowUpError

cnp.import_array()

DEF MAXS = 4  # stages are at most 3 in the shipped catalog


cdef inline void _gemv(double[:, ::1] A, double* x, double* out,
                       double alpha, double beta) noexcept nogil:
    # out = alpha * A @ x + beta * out for row-major A
    cdef int n = A.shape[0], one = 1
    cdef char trans = b'T'
    dgemv(&trans, &n, &n, &alpha, &A[0, 0], &n, x, &one, &beta, out, &one)


cdef class _Ctx:
    cdef int family, s, corr, d, kind, n_mats, upd_exp_idx
    cdef double[:, ::1] a
    cdef double[::1] b
    cdef double[:, ::1] M
    cdef double[:, ::1] E1
    cdef double[:, :, ::1] exp_mats
    cdef long long[::1] stage_exp_idx
    cdef long long[::1] grp_target, grp_mat, grp_len, term_j
    cdef double[::1] term_c
    cdef object f_py, jvp_py
    cdef double[::1] params
    # scratch
    cdef double[:, ::1] Y, FS, GS, prods
    cdef unsigned char[MAXS] f_have, g_have, y_set
    cdef unsigned char[::1] prod_have
    cdef double[::1] w1, w2, w3, w4

    def __init__(self, plan, sysd):
        self.family = plan.family
        self.s = plan.s
        self.corr = plan.corr
        self.a = plan.a
        self.b = plan.b
        self.M = plan.M
        self.E1 = plan.E1
        self.exp_mats = plan.exp_mats
        self.stage_exp_idx = plan.stage_exp_idx
        self.upd_exp_idx = plan.upd_exp_idx
        self.grp_target = plan.grp_target
        self.grp_mat = plan.grp_mat
        self.grp_len = plan.grp_len
        self.term_j = plan.term_j
        self.term_c = plan.term_c
        self.f_py = sysd.f
        self.jvp_py = sysd.jvp
        self.kind = sysd.kind
        self.params = sysd.params
        self.d = self.M.shape[0]
        self.n_mats = self.exp_mats.shape[0]
        cdef int d = self.d
        self.Y = np.empty((self.s, d))
        self.FS = np.empty((self.s, d))
        self.GS = np.empty((self.s, d))
        self.prods = np.empty((max(self.n_mats, 1), d))
        self.prod_have = np.zeros(max(self.n_mats, 1), dtype=np.uint8)
        self.w1 = np.empty(d)
        self.w2 = np.empty(d)
        self.w3 = np.empty(d)
        self.w4 = np.empty(d)


cdef int _eval_f(_Ctx c, double* y, double* out, long long* cnt) except -1:
    cdef int i, n
    cdef double s, u
    cnt[0] += 1
    if c.kind == 1:  # cubic reaction at offset state u = y + params
        for i in range(c.d):
            u = y[i] + c.params[i]
            out[i] = u - u * u * u
    elif c.kind == 2:  # 2-d averaged-oscillation nonlinearity
        out[0] = y[0] * y[1]
        out[1] = 0.5 * (y[0] * y[0] - y[1] * y[1])
    elif c.kind == 3:  # cubic coupling on stacked (p, q) blocks
        n = c.d // 2
        for i in range(n):
            s = y[i] * y[i] + y[n + i] * y[n + i]
            out[i] = -2.0 * s * y[n + i]
            out[n + i] = 2.0 * s * y[i]
    else:
        _call_py1(c, c.f_py, y, out)
    return 0


cdef int _eval_jvp(_Ctx c, double* y, double* v, double* out, long long* cnt) except -1:
    cdef int i, n
    cdef double s, u
    cnt[1] += 1
    if c.kind == 1:
        for i in range(c.d):
            u = y[i] + c.params[i]
            out[i] = v[i] - 3.0 * u * u * v[i]
    elif c.kind == 2:
        out[0] = y[1] * v[0] + y[0] * v[1]
        out[1] = y[0] * v[0] - y[1] * v[1]
    elif c.kind == 3:
        n = c.d // 2
        for i in range(n):
            s = y[i] * y[i] + y[n + i] * y[n + i]
            out[i] = -4.0 * y[i] * y[n + i] * v[i] \
                - 2.0 * (y[i] * y[i] + 3.0 * y[n + i] * y[n + i]) * v[n + i]
            out[n + i] = 2.0 * (3.0 * y[i] * y[i] + y[n + i] * y[n + i]) * v[i] \
                + 4.0 * y[i] * y[n + i] * v[n + i]
    else:
        _call_py2(c, y, v, out)
    return 0


cdef int _call_py1(_Ctx c, object fn, double* y, double* out) except -1:
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yv = np.empty(c.d)
    cdef int i
    for i in range(c.d):
        yv[i] = y[i]
    res = np.ascontiguousarray(fn(yv), dtype=np.float64)
    cdef double[::1] rv = res
    for i in range(c.d):
        out[i] = rv[i]
    return 0


cdef int _call_py2(_Ctx c, double* y, double* v, double* out) except -1:
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yv = np.empty(c.d)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vv = np.empty(c.d)
    cdef int i
    for i in range(c.d):
        yv[i] = y[i]
        vv[i] = v[i]
    res = np.ascontiguousarray(c.jvp_py(yv, vv), dtype=np.float64)
    cdef double[::1] rv = res
    for i in range(c.d):
        out[i] = rv[i]
    return 0


cdef inline int _ensure_prod(_Ctx c, int idx, double* y, long long* cnt) except -1:
    if not c.prod_have[idx]:
        _gemv(c.exp_mats[idx], y, &c.prods[idx, 0], 1.0, 0.0)
        cnt[3] += 1
        c.prod_have[idx] = 1
    return 0


cdef int _mverk_step(_Ctx c, double* y, double h, long long* cnt, double* y1) except -1:
    cdef int s = c.s, d = c.d, i, j, k
    cdef double aij, bi, haij
    cdef bint any_b = False
    for i in range(s):
        c.f_have[i] = 0
        c.g_have[i] = 0
    for k in range(d):
        c.Y[0, k] = y[k]
    for i in range(1, s):
        for k in range(d):
            c.Y[i, k] = y[k]
        for j in range(i):
            aij = c.a[i, j]
            if aij == 0.0:
                continue
            if not c.g_have[j]:
                if not c.f_have[j]:
                    _eval_f(c, &c.Y[j, 0], &c.FS[j, 0], cnt)
                    c.f_have[j] = 1
                for k in range(d):
                    c.GS[j, k] = c.FS[j, k]
                _gemv(c.M, &c.Y[j, 0], &c.GS[j, 0], 1.0, 1.0)
                cnt[2] += 1
                c.g_have[j] = 1
            haij = h * aij
            for k in range(d):
                c.Y[i, k] += haij * c.GS[j, k]
    _gemv(c.E1, y, y1, 1.0, 0.0)
    cnt[3] += 1
    for i in range(s):
        bi = c.b[i]
        if bi == 0.0:
            continue
        if not c.f_have[i]:
            _eval_f(c, &c.Y[i, 0], &c.FS[i, 0], cnt)
            c.f_have[i] = 1
        if not any_b:
            for k in range(d):
                c.w1[k] = bi * c.FS[i, k]
            any_b = True
        else:
            for k in range(d):
                c.w1[k] += bi * c.FS[i, k]
    if any_b:
        for k in range(d):
            y1[k] += h * c.w1[k]
    if c.corr == 1:  # w2 = (h^2/2) M f0
        if not c.f_have[0]:
            _eval_f(c, y, &c.FS[0, 0], cnt)
            c.f_have[0] = 1
        _gemv(c.M, &c.FS[0, 0], &c.w2[0], 1.0, 0.0)
        cnt[2] += 1
        for k in range(d):
            y1[k] += (h * h / 2.0) * c.w2[k]
    elif c.corr == 2:  # w3 = (h^2/6) M (3 f0 + h (M f0 + f'(y0) g0))
        if not c.f_have[0]:
            _eval_f(c, y, &c.FS[0, 0], cnt)
            c.f_have[0] = 1
        if not c.g_have[0]:
            for k in range(d):
                c.GS[0, k] = c.FS[0, k]
            _gemv(c.M, y, &c.GS[0, 0], 1.0, 1.0)
            cnt[2] += 1
            c.g_have[0] = 1
        _gemv(c.M, &c.FS[0, 0], &c.w2[0], 1.0, 0.0)
        cnt[2] += 1
        _eval_jvp(c, y, &c.GS[0, 0], &c.w3[0], cnt)
        for k in range(d):
            c.w2[k] = 3.0 * c.FS[0, k] + h * (c.w2[k] + c.w3[k])
        _gemv(c.M, &c.w2[0], &c.w3[0], 1.0, 0.0)
        cnt[2] += 1
        for k in range(d):
            y1[k] += (h * h / 6.0) * c.w3[k]
    return 0


cdef int _sverk_step(_Ctx c, double* y, double h, long long* cnt, double* y1) except -1:
    cdef int s = c.s, d = c.d, i, j, k
    cdef long long idx
    cdef double aij, bi, haij
    cdef bint any_b = False
    for i in range(s):
        c.f_have[i] = 0
    for i in range(c.n_mats):
        c.prod_have[i] = 0
    for k in range(d):
        c.Y[0, k] = y[k]
    for i in range(1, s):
        idx = c.stage_exp_idx[i]
        if idx < 0:
            for k in range(d):
                c.Y[i, k] = y[k]
        else:
            _ensure_prod(c, <int> idx, y, cnt)
            for k in range(d):
                c.Y[i, k] = c.prods[idx, k]
        for j in range(i):
            aij = c.a[i, j]
            if aij == 0.0:
                continue
            if not c.f_have[j]:
                _eval_f(c, &c.Y[j, 0], &c.FS[j, 0], cnt)
                c.f_have[j] = 1
            haij = h * aij
            for k in range(d):
                c.Y[i, k] += haij * c.FS[j, k]
    _ensure_prod(c, c.upd_exp_idx, y, cnt)
    for k in range(d):
        y1[k] = c.prods[c.upd_exp_idx, k]
    for i in range(s):
        bi = c.b[i]
        if bi == 0.0:
            continue
        if not c.f_have[i]:
            _eval_f(c, &c.Y[i, 0], &c.FS[i, 0], cnt)
            c.f_have[i] = 1
        if not any_b:
            for k in range(d):
                c.w1[k] = bi * c.FS[i, k]
            any_b = True
        else:
            for k in range(d):
                c.w1[k] += bi * c.FS[i, k]
    if any_b:
        for k in range(d):
            y1[k] += h * c.w1[k]
    if c.corr != 0:
        if not c.f_have[0]:
            _eval_f(c, y, &c.FS[0, 0], cnt)
            c.f_have[0] = 1
        _gemv(c.M, &c.FS[0, 0], &c.w1[0], 1.0, 0.0)  # u = M f0
        cnt[2] += 1
        if c.corr == 1:  # wt2 = (h^2/2) M f0
            for k in range(d):
                y1[k] += (h * h / 2.0) * c.w1[k]
        else:  # wt3 = (h^2/2) u + (h^3/6)(M u + f'(y0) u + M f'(y0) g0)
            _gemv(c.M, &c.w1[0], &c.w2[0], 1.0, 0.0)
            cnt[2] += 1
            _eval_jvp(c, y, &c.w1[0], &c.w3[0], cnt)
            for k in range(d):
                c.w2[k] += c.w3[k]
            for k in range(d):
                c.w3[k] = c.FS[0, k]
            _gemv(c.M, y, &c.w3[0], 1.0, 1.0)  # g0 = M y + f0
            cnt[2] += 1
            _eval_jvp(c, y, &c.w3[0], &c.w4[0], cnt)
            _gemv(c.M, &c.w4[0], &c.w3[0], 1.0, 0.0)
            cnt[2] += 1
            for k in range(d):
                c.w2[k] += c.w3[k]
            for k in range(d):
                y1[k] += (h * h / 2.0) * c.w1[k] + (h * h * h / 6.0) * c.w2[k]
    return 0


cdef int _phi_step(_Ctx c, double* y, double h, long long* cnt, double* y1) except -1:
    cdef int s = c.s, d = c.d, i, k, g, t
    cdef long long tgt, nxt, j, idx
    cdef int G = c.grp_target.shape[0]
    cdef Py_ssize_t pos = 0
    cdef double coef
    cdef bint first, upd_have = False
    cdef int stage_acc_tgt = -1
    for i in range(s):
        c.f_have[i] = 0
        c.y_set[i] = 0
    for i in range(c.n_mats):
        c.prod_have[i] = 0
    for k in range(d):
        c.Y[0, k] = y[k]
    c.y_set[0] = 1
    for g in range(G):
        tgt = c.grp_target[g]
        first = True
        for t in range(c.grp_len[g]):
            j = c.term_j[pos + t]
            if not c.f_have[j]:
                _eval_f(c, &c.Y[j, 0], &c.FS[j, 0], cnt)
                c.f_have[j] = 1
            coef = c.term_c[pos + t]
            if first:
                for k in range(d):
                    c.w3[k] = coef * c.FS[j, k]
                first = False
            else:
                for k in range(d):
                    c.w3[k] += coef * c.FS[j, k]
        pos += c.grp_len[g]
        _gemv(c.exp_mats[c.grp_mat[g]], &c.w3[0], &c.w4[0], 1.0, 0.0)
        cnt[3] += 1
        if tgt == s:
            if not upd_have:
                for k in range(d):
                    c.w2[k] = c.w4[k]
                upd_have = True
            else:
                for k in range(d):
                    c.w2[k] += c.w4[k]
        else:
            if stage_acc_tgt != <int> tgt:
                for k in range(d):
                    c.w1[k] = c.w4[k]
                stage_acc_tgt = <int> tgt
            else:
                for k in range(d):
                    c.w1[k] += c.w4[k]
            nxt = c.grp_target[g + 1] if g + 1 < G else s
            if nxt != tgt:
                idx = c.stage_exp_idx[tgt]
                if idx < 0:
                    for k in range(d):
                        c.Y[tgt, k] = y[k] + h * c.w1[k]
                else:
                    _ensure_prod(c, <int> idx, y, cnt)
                    for k in range(d):
                        c.Y[tgt, k] = c.prods[idx, k] + h * c.w1[k]
                c.y_set[tgt] = 1
    for i in range(1, s):
        if not c.y_set[i]:
            idx = c.stage_exp_idx[i]
            if idx < 0:
                for k in range(d):
                    c.Y[i, k] = y[k]
            else:
                _ensure_prod(c, <int> idx, y, cnt)
                for k in range(d):
                    c.Y[i, k] = c.prods[idx, k]
            c.y_set[i] = 1
    _ensure_prod(c, c.upd_exp_idx, y, cnt)
    for k in range(d):
        y1[k] = c.prods[c.upd_exp_idx, k]
    if upd_have:
        for k in range(d):
            y1[k] += h * c.w2[k]
    return 0


cdef int _step_core(_Ctx c, double* y, double h, long long* cnt, double* y1) except -1:
    if c.family == 0:
        _mverk_step(c, y, h, cnt, y1)
    elif c.family == 1:
        _sverk_step(c, y, h, cnt, y1)
    else:
        _phi_step(c, y, h, cnt, y1)
    return 0


cdef bint _all_finite(double* v, int d) noexcept nogil:
    cdef int k
    for k in range(d):
        if not isfinite(v[k]):
            return False
    return True


def step_once(plan, sysd, double t, y, double h, cnt_buf):
    cdef _Ctx c = _Ctx(plan, sysd)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yin = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(c.d)
    cdef long long[::1] cv = cnt_buf
    _step_core(c, &yin[0], h, &cv[0], &out[0])
    if not _all_finite(&out[0], c.d):
        raise BlowUpError(t + h)
    return out


def run_fixed(plan, sysd, double t0, y0, double h, long long n, cnt_buf):
    cdef _Ctx c = _Ctx(plan, sysd)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.array(y0, dtype=np.float64, copy=True)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yb = np.empty(c.d)
    cdef long long[::1] cv = cnt_buf
    cdef long long i
    cdef double* cur = &ya[0]
    cdef double* nxt = &yb[0]
    cdef double* tmp
    for i in range(n):
        _step_core(c, cur, h, &cv[0], nxt)
        if not _all_finite(nxt, c.d):
            raise BlowUpError(t0 + (i + 1) * h, <int> i)
        tmp = cur
        cur = nxt
        nxt = tmp
    if cur == &ya[0]:
        return ya
    return yb
