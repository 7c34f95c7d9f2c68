# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Operation order mirrors ``_pykernels`` line for line."""

import numpy as np
from libc.math cimport ceil, isfinite

BACKEND = "cython"

cdef enum:
    C_OK = 0
    C_COLLAPSE = 1
    C_NONFINITE = 2

OK = C_OK
COLLAPSE = C_COLLAPSE
NONFINITE = C_NONFINITE


cdef inline Py_ssize_t _n_steps(double span, double step) nogil:
    cdef Py_ssize_t n = <Py_ssize_t>ceil(span / step - 1e-9)
    return n if n > 0 else 1


def shoot(pos, pw, double gy, double by, double length, double v_end, double step):
    cdef double[::1] cpos = np.ascontiguousarray(pos, dtype=np.float64)
    cdef double[::1] cpw = np.ascontiguousarray(pw, dtype=np.float64)
    cdef Py_ssize_t n_inj = cpos.shape[0]
    cdef double v = v_end, w = 0.0, f = 0.0, sv = 1.0, sw = 0.0, x = length
    cdef double target, span, h, f2, v3, va, wa, sva, swa, p
    cdef double k1v, k1w, k1sv, k1sw, k2v, k2w, k2sv, k2sw
    cdef double k3v, k3w, k3sv, k3sw, k4v, k4w, k4sv, k4sw
    cdef Py_ssize_t k, j, n
    with nogil:
        for k in range(n_inj + 1):
            target = cpos[k] if k < n_inj else 0.0
            span = x - target
            if span > 0.0:
                n = _n_steps(span, step)
                h = -span / n
                f2 = f * f
                for j in range(n):
                    v3 = v * v * v
                    k1v = w
                    k1w = f2 / v3
                    k1sv = sw
                    k1sw = -3.0 * f2 / (v3 * v) * sv
                    va = v + 0.5 * h * k1v
                    if va <= 0.0:
                        with gil:
                            return v, 0.0, C_COLLAPSE
                    wa = w + 0.5 * h * k1w
                    sva = sv + 0.5 * h * k1sv
                    swa = sw + 0.5 * h * k1sw
                    v3 = va * va * va
                    k2v = wa
                    k2w = f2 / v3
                    k2sv = swa
                    k2sw = -3.0 * f2 / (v3 * va) * sva
                    va = v + 0.5 * h * k2v
                    if va <= 0.0:
                        with gil:
                            return v, 0.0, C_COLLAPSE
                    wa = w + 0.5 * h * k2w
                    sva = sv + 0.5 * h * k2sv
                    swa = sw + 0.5 * h * k2sw
                    v3 = va * va * va
                    k3v = wa
                    k3w = f2 / v3
                    k3sv = swa
                    k3sw = -3.0 * f2 / (v3 * va) * sva
                    va = v + h * k3v
                    if va <= 0.0:
                        with gil:
                            return v, 0.0, C_COLLAPSE
                    wa = w + h * k3w
                    sva = sv + h * k3sv
                    swa = sw + h * k3sw
                    v3 = va * va * va
                    k4v = wa
                    k4w = f2 / v3
                    k4sv = swa
                    k4sw = -3.0 * f2 / (v3 * va) * sva
                    v = v + h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0
                    w = w + h * (k1w + 2.0 * k2w + 2.0 * k3w + k4w) / 6.0
                    sv = sv + h * (k1sv + 2.0 * k2sv + 2.0 * k3sv + k4sv) / 6.0
                    sw = sw + h * (k1sw + 2.0 * k2sw + 2.0 * k3sw + k4sw) / 6.0
                    if v <= 0.0:
                        with gil:
                            return v, 0.0, C_COLLAPSE
                x = target
            if k < n_inj:
                p = cpw[k]
                w = w + gy * p / v
                sw = sw - gy * p / (v * v) * sv
                f = f + by * p
    return v, sv, C_OK


def shoot_profile(pos, pw, double gy, double by, double length, double v_end, double step):
    cdef double[::1] cpos = np.ascontiguousarray(pos, dtype=np.float64)
    cdef double[::1] cpw = np.ascontiguousarray(pw, dtype=np.float64)
    cdef Py_ssize_t n_inj = cpos.shape[0]
    cdef Py_ssize_t k, j, n, total = 2 + n_inj
    cdef double x = length, target, span
    # exact sample count so the output arrays can be preallocated
    for k in range(n_inj + 1):
        target = cpos[k] if k < n_inj else 0.0
        span = x - target
        if span > 0.0:
            total += _n_steps(span, step)
            x = target
    cdef double[::1] xs = np.empty(total)
    cdef double[::1] vs = np.empty(total)
    cdef double[::1] ts = np.empty(total)
    cdef double[::1] ws = np.empty(total)
    cdef double[::1] fs = np.empty(total)
    cdef double v = v_end, w = 0.0, f = 0.0, th = 0.0, h, f2, va, wa, p
    cdef double k1v, k1w, k1t, k2v, k2w, k2t, k3v, k3w, k3t, k4v, k4w, k4t
    cdef Py_ssize_t m = 0
    cdef int status = C_OK
    x = length
    xs[m] = x; vs[m] = v; ts[m] = th; ws[m] = w; fs[m] = f
    m += 1
    for k in range(n_inj + 1):
        if status != C_OK:
            break
        target = cpos[k] if k < n_inj else 0.0
        span = x - target
        if span > 0.0:
            n = _n_steps(span, step)
            h = -span / n
            f2 = f * f
            for j in range(n):
                k1v = w
                k1w = f2 / (v * v * v)
                k1t = f / (v * v)
                va = v + 0.5 * h * k1v
                if va <= 0.0:
                    status = C_COLLAPSE
                    break
                wa = w + 0.5 * h * k1w
                k2v = wa
                k2w = f2 / (va * va * va)
                k2t = f / (va * va)
                va = v + 0.5 * h * k2v
                if va <= 0.0:
                    status = C_COLLAPSE
                    break
                wa = w + 0.5 * h * k2w
                k3v = wa
                k3w = f2 / (va * va * va)
                k3t = f / (va * va)
                va = v + h * k3v
                if va <= 0.0:
                    status = C_COLLAPSE
                    break
                wa = w + h * k3w
                k4v = wa
                k4w = f2 / (va * va * va)
                k4t = f / (va * va)
                v = v + h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0
                w = w + h * (k1w + 2.0 * k2w + 2.0 * k3w + k4w) / 6.0
                th = th + h * (k1t + 2.0 * k2t + 2.0 * k3t + k4t) / 6.0
                if v <= 0.0:
                    status = C_COLLAPSE
                    break
                if j == n - 1:
                    x = target
                else:
                    x = x + h
                if k < n_inj or j < n - 1:
                    xs[m] = x; vs[m] = v; ts[m] = th; ws[m] = w; fs[m] = f
                    m += 1
            x = target
        if status == C_OK and k < n_inj:
            p = cpw[k]
            w = w + gy * p / v
            f = f + by * p
    if status == C_OK:
        xs[m] = 0.0; vs[m] = v; ts[m] = th; ws[m] = w; fs[m] = f
        m += 1
    return (list(xs[:m]), list(vs[:m]), list(ts[:m]), list(ws[:m]), list(fs[:m]), status)


cdef inline void _derivs(double dw, double xg, double pm, double dp, double lfc,
                         double m, double d, double inv_r, double tg, double tt,
                         double* a, double* b, double* c) nogil:
    a[0] = (dp + pm - d * dw) / m
    b[0] = (lfc - dw * inv_r - xg) / tg
    c[0] = (xg - pm) / tt


cdef inline void _rk4(double* dw, double* xg, double* pm,
                      double dp0, double dp1, double dp2, double l0, double l1, double l2,
                      double m, double d, double inv_r, double tg, double tt, double dt) nogil:
    cdef double a1, b1, c1, a2, b2, c2, a3, b3, c3, a4, b4, c4
    cdef double hd = 0.5 * dt
    _derivs(dw[0], xg[0], pm[0], dp0, l0, m, d, inv_r, tg, tt, &a1, &b1, &c1)
    _derivs(dw[0] + hd * a1, xg[0] + hd * b1, pm[0] + hd * c1, dp1, l1, m, d, inv_r, tg, tt, &a2, &b2, &c2)
    _derivs(dw[0] + hd * a2, xg[0] + hd * b2, pm[0] + hd * c2, dp1, l1, m, d, inv_r, tg, tt, &a3, &b3, &c3)
    _derivs(dw[0] + dt * a3, xg[0] + dt * b3, pm[0] + dt * c3, dp2, l2, m, d, inv_r, tg, tt, &a4, &b4, &c4)
    dw[0] = dw[0] + dt * (a1 + 2.0 * a2 + 2.0 * a3 + a4) / 6.0
    xg[0] = xg[0] + dt * (b1 + 2.0 * b2 + 2.0 * b3 + b4) / 6.0
    pm[0] = pm[0] + dt * (c1 + 2.0 * c2 + 2.0 * c3 + c4) / 6.0


def rk4_freq(double dw, double xg, double pm, double dp0, double dp1, double dp2,
             double l0, double l1, double l2, double m, double d, double inv_r,
             double tg, double tt, double dt):
    _rk4(&dw, &xg, &pm, dp0, dp1, dp2, l0, l1, l2, m, d, inv_r, tg, tt, dt)
    return dw, xg, pm


cdef inline double _droop(double df, double cap_cha, double cap_dis, double df1) nogil:
    if df >= df1:
        return -cap_cha
    if df >= 0.0:
        return -cap_cha * (df / df1)
    if df >= -df1:
        return -cap_dis * (df / df1)
    return cap_dis


def droop(double df, double cap_cha, double cap_dis, double df1):
    return _droop(df, cap_cha, cap_dis, df1)


def advance(Py_ssize_t k0, Py_ssize_t k1, double[::1] fstate, double[::1] params,
            double[::1] exo_dp, double[::1] exo_lfc, double[::1] caps_cha, double[::1] caps_dis,
            double[:, ::1] conv_buf, long[::1] conv_head, double[::1] conv_prev, double[::1] conv_y,
            double[::1] out_df, double[:, ::1] out_ref, double[:, ::1] out_out,
            double[::1] out_ev_w, double[::1] out_ev_pu, double[::1] out_pm):
    cdef double m = params[0], d = params[1], inv_r = params[2], tg = params[3]
    cdef double tt = params[4], dt = params[5], f_nom = params[6], df1 = params[7]
    cdef double keep = params[8], passthrough = params[9], rep = params[10], s_grid = params[11]
    cdef Py_ssize_t n_sta = caps_cha.shape[0]
    cdef Py_ssize_t n_delay = conv_buf.shape[1] if n_sta else 0
    cdef Py_ssize_t head = conv_head[0]
    cdef double gain = 1.0 - keep
    cdef double dw = fstate[0], xg = fstate[1], pm = fstate[2]
    cdef double df, ev, ref, dly, y, ev_pu
    cdef Py_ssize_t k, i, j
    cdef int status = C_OK
    cdef Py_ssize_t done = k1
    with nogil:
        for k in range(k0, k1):
            df = dw * f_nom
            ev = 0.0
            for i in range(n_sta):
                ref = _droop(df, caps_cha[i], caps_dis[i], df1)
                if n_delay > 0:
                    dly = conv_buf[i, head]
                    conv_buf[i, head] = ref
                else:
                    dly = ref
                if passthrough != 0.0:
                    y = dly
                else:
                    y = keep * conv_y[i] + gain * conv_prev[i]
                    conv_prev[i] = dly
                conv_y[i] = y
                out_ref[k, i] = ref
                out_out[k, i] = y
                ev = ev + y
            if n_delay > 0:
                head = head + 1
                if head == n_delay:
                    head = 0
            ev_pu = ev * rep / s_grid
            out_df[k] = df
            out_ev_w[k] = ev
            out_ev_pu[k] = ev_pu
            out_pm[k] = pm
            j = 2 * k
            _rk4(&dw, &xg, &pm,
                 exo_dp[j] + ev_pu, exo_dp[j + 1] + ev_pu, exo_dp[j + 2] + ev_pu,
                 exo_lfc[j], exo_lfc[j + 1], exo_lfc[j + 2],
                 m, d, inv_r, tg, tt, dt)
            if not (isfinite(dw) and isfinite(xg) and isfinite(pm)):
                status = C_NONFINITE
                done = k + 1
                break
    fstate[0] = dw
    fstate[1] = xg
    fstate[2] = pm
    conv_head[0] = head
    return status, done
