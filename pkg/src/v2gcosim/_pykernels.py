"""Pure-Python kernels. Reference implementation and fallback for ``_ckernels``.

Operation order here is mirrored exactly in ``_ckernels.pyx`` so both backends
produce bit-identical results (the extension is compiled without FP contraction).
"""

import math

BACKEND = "python"

# status codes shared with the compiled kernels
OK = 0
COLLAPSE = 1
NONFINITE = 2


def _n_steps(span, step):
    n = int(math.ceil(span / step - 1e-9))
    return n if n > 0 else 1


def shoot(pos, pw, gy, by, length, v_end, step):
    """Integrate the feeder voltage ODE backward from x = L to x = 0.

    ``pos`` holds distinct injection locations in descending order, ``pw`` the
    matching per-unit powers. Terminal state is v = v_end, w = 0, f = 0.
    Returns ``(v0, dv0/dv_end, status)``.
    """
    v = v_end
    w = 0.0
    f = 0.0
    sv = 1.0
    sw = 0.0
    x = length
    n_inj = len(pos)
    for k in range(n_inj + 1):
        target = pos[k] if k < n_inj else 0.0
        span = x - target
        if span > 0.0:
            n = _n_steps(span, step)
            h = -span / n
            f2 = f * f
            for _ in range(n):
                # stage 1
                v3 = v * v * v
                k1v = w
                k1w = f2 / v3
                k1sv = sw
                k1sw = -3.0 * f2 / (v3 * v) * sv
                # stage 2
                va = v + 0.5 * h * k1v
                if va <= 0.0:
                    return v, 0.0, COLLAPSE
                wa = w + 0.5 * h * k1w
                sva = sv + 0.5 * h * k1sv
                swa = sw + 0.5 * h * k1sw
                v3 = va * va * va
                k2v = wa
                k2w = f2 / v3
                k2sv = swa
                k2sw = -3.0 * f2 / (v3 * va) * sva
                # stage 3
                va = v + 0.5 * h * k2v
                if va <= 0.0:
                    return v, 0.0, COLLAPSE
                wa = w + 0.5 * h * k2w
                sva = sv + 0.5 * h * k2sv
                swa = sw + 0.5 * h * k2sw
                v3 = va * va * va
                k3v = wa
                k3w = f2 / v3
                k3sv = swa
                k3sw = -3.0 * f2 / (v3 * va) * sva
                # stage 4
                va = v + h * k3v
                if va <= 0.0:
                    return v, 0.0, COLLAPSE
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
                    return v, 0.0, COLLAPSE
            x = target
        if k < n_inj:
            p = pw[k]
            # crossing the source from the downstream side
            w = w + gy * p / v
            sw = sw - gy * p / (v * v) * sv
            f = f + by * p
    return v, sv, OK


def shoot_profile(pos, pw, gy, by, length, v_end, step):
    """Same integration as :func:`shoot`, returning every sample.

    Returns ``(xs, vs, thetas, ws, fs, status)`` in descending x order. At an
    injection point the recorded gradient and flow are the downstream limits.
    """
    v = v_end
    w = 0.0
    f = 0.0
    th = 0.0
    x = length
    xs = [x]
    vs = [v]
    ts = [th]
    ws = [w]
    fs = [f]
    n_inj = len(pos)
    for k in range(n_inj + 1):
        target = pos[k] if k < n_inj else 0.0
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
                    return xs, vs, ts, ws, fs, COLLAPSE
                wa = w + 0.5 * h * k1w
                k2v = wa
                k2w = f2 / (va * va * va)
                k2t = f / (va * va)
                va = v + 0.5 * h * k2v
                if va <= 0.0:
                    return xs, vs, ts, ws, fs, COLLAPSE
                wa = w + 0.5 * h * k2w
                k3v = wa
                k3w = f2 / (va * va * va)
                k3t = f / (va * va)
                va = v + h * k3v
                if va <= 0.0:
                    return xs, vs, ts, ws, fs, COLLAPSE
                wa = w + h * k3w
                k4v = wa
                k4w = f2 / (va * va * va)
                k4t = f / (va * va)
                v = v + h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0
                w = w + h * (k1w + 2.0 * k2w + 2.0 * k3w + k4w) / 6.0
                th = th + h * (k1t + 2.0 * k2t + 2.0 * k3t + k4t) / 6.0
                if v <= 0.0:
                    return xs, vs, ts, ws, fs, COLLAPSE
                if j == n - 1:
                    x = target
                else:
                    x = x + h
                if k < n_inj or j < n - 1:
                    xs.append(x)
                    vs.append(v)
                    ts.append(th)
                    ws.append(w)
                    fs.append(f)
            x = target
        if k < n_inj:
            p = pw[k]
            w = w + gy * p / v
            f = f + by * p
    xs.append(0.0)
    vs.append(v)
    ts.append(th)
    ws.append(w)
    fs.append(f)
    return xs, vs, ts, ws, fs, OK


def freq_derivs(dw, xg, pm, dp, lfc, m, d, inv_r, tg, tt):
    ddw = (dp + pm - d * dw) / m
    dxg = (lfc - dw * inv_r - xg) / tg
    dpm = (xg - pm) / tt
    return ddw, dxg, dpm


def rk4_freq(dw, xg, pm, dp0, dp1, dp2, l0, l1, l2, m, d, inv_r, tg, tt, dt):
    """One RK4 step of the swing/governor/turbine model.

    Inputs are given at the start (0), midpoint (1) and end (2) of the step.
    """
    a1, b1, c1 = freq_derivs(dw, xg, pm, dp0, l0, m, d, inv_r, tg, tt)
    hd = 0.5 * dt
    a2, b2, c2 = freq_derivs(dw + hd * a1, xg + hd * b1, pm + hd * c1, dp1, l1, m, d, inv_r, tg, tt)
    a3, b3, c3 = freq_derivs(dw + hd * a2, xg + hd * b2, pm + hd * c2, dp1, l1, m, d, inv_r, tg, tt)
    a4, b4, c4 = freq_derivs(dw + dt * a3, xg + dt * b3, pm + dt * c3, dp2, l2, m, d, inv_r, tg, tt)
    dw = dw + dt * (a1 + 2.0 * a2 + 2.0 * a3 + a4) / 6.0
    xg = xg + dt * (b1 + 2.0 * b2 + 2.0 * b3 + b4) / 6.0
    pm = pm + dt * (c1 + 2.0 * c2 + 2.0 * c3 + c4) / 6.0
    return dw, xg, pm


def droop(df, cap_cha, cap_dis, df1):
    if df >= df1:
        return -cap_cha
    if df >= 0.0:
        return -cap_cha * (df / df1)
    if df >= -df1:
        return -cap_dis * (df / df1)
    return cap_dis


def advance(k0, k1, fstate, params, exo_dp, exo_lfc, caps_cha, caps_dis,
            conv_buf, conv_head, conv_prev, conv_y,
            out_df, out_ref, out_out, out_ev_w, out_ev_pu, out_pm):
    """Run engine ticks ``k0 .. k1-1`` in place.

    ``fstate`` = [dw, xg, pm]; ``params`` = [m, d, inv_r, tg, tt, dt, f_nom, df1,
    lag_keep, passthrough, replication, s_grid]; ``conv_head`` is a 1-element
    integer array. Exogenous arrays are sampled on the half-step grid.
    Returns ``(status, k)`` where ``k`` is the first tick not completed.
    """
    m, d, inv_r, tg, tt, dt, f_nom, df1, keep, passthrough, rep, s_grid = params
    n_sta = len(caps_cha)
    n_delay = conv_buf.shape[1] if n_sta else 0
    head = int(conv_head[0])
    gain = 1.0 - keep
    dw, xg, pm = fstate[0], fstate[1], fstate[2]
    for k in range(k0, k1):
        df = dw * f_nom
        ev = 0.0
        for i in range(n_sta):
            ref = droop(df, caps_cha[i], caps_dis[i], df1)
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
        dw, xg, pm = rk4_freq(
            dw, xg, pm,
            exo_dp[j] + ev_pu, exo_dp[j + 1] + ev_pu, exo_dp[j + 2] + ev_pu,
            exo_lfc[j], exo_lfc[j + 1], exo_lfc[j + 2],
            m, d, inv_r, tg, tt, dt,
        )
        if not (math.isfinite(dw) and math.isfinite(xg) and math.isfinite(pm)):
            fstate[0], fstate[1], fstate[2] = dw, xg, pm
            conv_head[0] = head
            return NONFINITE, k + 1
    fstate[0], fstate[1], fstate[2] = dw, xg, pm
    conv_head[0] = head
    return OK, k1
