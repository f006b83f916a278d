"""Compiled path loops shared by the engine.

All kernels take an explicit ``numpy.random.Generator`` and consume it in a
fixed order, so output is a pure function of (generator state, arguments).

Family codes and the layout of the parameter vector ``p``:

=========  ====  =====================
code       name  p
=========  ====  =====================
0          OU    alpha
1          BMD   mu
2          RBMD  mu (Euler only)
3          CIR   a, b, c
4          BESQ  alpha
5          COU   a, b
6          CBM   --
=========  ====  =====================

``radial`` marks a square-root family carried on its squared scale; its
modulus is ``sqrt(state)``. ``normalize`` divides the modulus by
``sqrt(1 + t)`` (normalized complex Brownian maximum).
"""

import math

import numpy as np
from numba import njit

OU, BMD, RBMD, CIR, BESQ, COU, CBM = 0, 1, 2, 3, 4, 5, 6


@njit(cache=True)
def _besq_draw(alpha, x, s, rng):
    # exact BESQ(alpha, x) at time s: Poisson mixture of gammas
    if x > 0.0:
        k = rng.poisson(x / (2.0 * s))
    else:
        k = 0
    return 2.0 * s * rng.standard_gamma(0.5 * alpha + k)


@njit(cache=True)
def step(code, p, x, y, dt, exact, rng):
    """Advance the state (x, y) by dt; y is only used by complex families."""
    if code == OU:
        a = p[0]
        if exact:
            sd = math.sqrt(-math.expm1(-2.0 * a * dt) / (2.0 * a))
            return x * math.exp(-a * dt) + sd * rng.standard_normal(), 0.0
        return x - a * x * dt + math.sqrt(dt) * rng.standard_normal(), 0.0
    if code == BMD:
        return x - p[0] * dt + math.sqrt(dt) * rng.standard_normal(), 0.0
    if code == RBMD:
        s = 0.0
        if x > 0.0:
            s = 1.0
        elif x < 0.0:
            s = -1.0
        return x - p[0] * s * dt + math.sqrt(dt) * rng.standard_normal(), 0.0
    if code == CIR:
        a, b, c = p[0], p[1], p[2]
        if exact:
            rho = c * c * math.expm1(-b * dt) / (-4.0 * b)
            return math.exp(b * dt) * _besq_draw(4.0 * a / (c * c), max(x, 0.0), rho, rng), 0.0
        xp = max(x, 0.0)
        return x + (a + b * xp) * dt + c * math.sqrt(xp * dt) * rng.standard_normal(), 0.0
    if code == BESQ:
        if exact:
            return _besq_draw(p[0], max(x, 0.0), dt, rng), 0.0
        xp = max(x, 0.0)
        return x + p[0] * dt + 2.0 * math.sqrt(xp * dt) * rng.standard_normal(), 0.0
    if code == COU:
        a, b = p[0], p[1]
        z1 = rng.standard_normal()
        z2 = rng.standard_normal()
        if exact:
            e = math.exp(-a * dt)
            cs = math.cos(b * dt)
            sn = math.sin(b * dt)
            sd = math.sqrt(-math.expm1(-2.0 * a * dt) / (2.0 * a))
            return e * (cs * x + sn * y) + sd * z1, e * (cs * y - sn * x) + sd * z2
        h = math.sqrt(dt)
        return x + (-a * x + b * y) * dt + h * z1, y + (-b * x - a * y) * dt + h * z2
    # CBM
    h = math.sqrt(dt)
    return x + h * rng.standard_normal(), y + h * rng.standard_normal()


@njit(cache=True)
def modulus(code, radial, x, y):
    if code == COU or code == CBM:
        return math.hypot(x, y)
    if code == CIR or code == BESQ:
        if radial:
            return math.sqrt(max(x, 0.0))
        return max(x, 0.0)
    return abs(x)


@njit(cache=True)
def _bridge_sigma(code, p, radial):
    # diffusion coefficient of the coordinate used for the bridge maximum
    if code == CIR:
        return 0.5 * p[2]
    return 1.0


@njit(cache=True)
def _bridge_max(u0, u1, var, rng):
    d = u1 - u0
    return 0.5 * (u0 + u1 + math.sqrt(d * d - 2.0 * var * math.log(1.0 - rng.random())))


@njit(cache=True)
def bridge_step_max(code, p, radial, x0, y0, x1, y1, dt, rng):
    """Sample the maximum of |X| inside one step given its endpoints.

    Real families use a two-sided Brownian bridge on the state; square-root
    families use the bridge on the square-root (unit-diffusion) scale;
    complex families use it on the modulus.
    """
    s = _bridge_sigma(code, p, radial)
    var = s * s * dt
    if code == OU or code == BMD or code == RBMD:
        hi = _bridge_max(x0, x1, var, rng)
        lo = -_bridge_max(-x0, -x1, var, rng)
        return max(hi, -lo)
    if code == CIR or code == BESQ:
        r = _bridge_max(math.sqrt(max(x0, 0.0)), math.sqrt(max(x1, 0.0)), var, rng)
        if radial:
            return r
        return r * r
    return _bridge_max(math.hypot(x0, y0), math.hypot(x1, y1), var, rng)


@njit(cache=True)
def value_of(code, radial, x, y):
    """Stored path value: signed state for real families, modulus otherwise."""
    if code == OU or code == BMD:
        return x
    return modulus(code, radial, x, y)


@njit(cache=True)
def fixed_time(code, p, radial, normalize, x0, y0, times, ckpt, n_paths, exact, bridge, rng, out_max, out_val):
    """Running maximum of |X| (and the value) at the checkpoint indices."""
    nt = times.shape[0]
    nk = ckpt.shape[0]
    for i in range(n_paths):
        x = x0
        y = y0
        m = modulus(code, radial, x, y)
        if normalize:
            m = m / math.sqrt(1.0 + times[0])
        k = 0
        while k < nk and ckpt[k] == 0:
            out_max[i, k] = m
            out_val[i, k] = value_of(code, radial, x, y)
            k += 1
        for j in range(1, nt):
            dt = times[j] - times[j - 1]
            xn, yn = step(code, p, x, y, dt, exact, rng)
            v = modulus(code, radial, xn, yn)
            if bridge:
                v = max(v, bridge_step_max(code, p, radial, x, y, xn, yn, dt, rng))
            if normalize:
                v = v / math.sqrt(1.0 + times[j - 1])
            if v > m:
                m = v
            x = xn
            y = yn
            while k < nk and ckpt[k] == j:
                out_max[i, k] = m
                out_val[i, k] = value_of(code, radial, x, y)
                k += 1


@njit(cache=True)
def _midpoint(code, p, radial, x0, y0, x1, y1, dt, rng):
    # one bisection: Brownian-bridge midpoint in the unit-diffusion coordinate
    s = _bridge_sigma(code, p, radial)
    sd = s * math.sqrt(0.25 * dt)
    if code == CIR or code == BESQ:
        r = 0.5 * (math.sqrt(max(x0, 0.0)) + math.sqrt(max(x1, 0.0))) + sd * rng.standard_normal()
        return r * r, 0.0
    if code == COU or code == CBM:
        return (0.5 * (x0 + x1) + sd * rng.standard_normal(), 0.5 * (y0 + y1) + sd * rng.standard_normal())
    return 0.5 * (x0 + x1) + sd * rng.standard_normal(), 0.0


@njit(cache=True)
def hitting(code, p, radial, x0, y0, times, level, n_paths, exact, rng, out_tau, out_xstar, out_hit):
    """First time |X| >= level on the grid, refined by one bisection.

    Paths that never cross are stopped at times[-1] with out_hit = False.
    """
    nt = times.shape[0]
    for i in range(n_paths):
        x = x0
        y = y0
        m = modulus(code, radial, x, y)
        out_hit[i] = False
        out_tau[i] = times[nt - 1]
        if m >= level:
            out_hit[i] = True
            out_tau[i] = 0.0
            out_xstar[i] = m
            continue
        for j in range(1, nt):
            dt = times[j] - times[j - 1]
            xn, yn = step(code, p, x, y, dt, exact, rng)
            v = modulus(code, radial, xn, yn)
            if v >= level:
                xm, ym = _midpoint(code, p, radial, x, y, xn, yn, dt, rng)
                vm = modulus(code, radial, xm, ym)
                out_hit[i] = True
                if vm >= level:
                    out_tau[i] = times[j - 1] + 0.5 * dt
                    m = max(m, vm)
                else:
                    out_tau[i] = times[j]
                    m = max(m, vm, v)
                break
            if v > m:
                m = v
            x = xn
            y = yn
        out_xstar[i] = m


@njit(cache=True)
def full_path(code, p, radial, x0, y0, times, level, exact, rng, out_x, out_y):
    """Store the raw state along the grid, stopping at the first crossing of level.

    Returns (n_stored, refined) where refined is True when the last stored
    point is a bisection midpoint rather than a grid point. A non-positive
    level disables stopping.
    """
    nt = times.shape[0]
    x = x0
    y = y0
    out_x[0] = x
    out_y[0] = y
    if level > 0.0 and modulus(code, radial, x, y) >= level:
        return 1, False
    for j in range(1, nt):
        dt = times[j] - times[j - 1]
        xn, yn = step(code, p, x, y, dt, exact, rng)
        if level > 0.0 and modulus(code, radial, xn, yn) >= level:
            xm, ym = _midpoint(code, p, radial, x, y, xn, yn, dt, rng)
            if modulus(code, radial, xm, ym) >= level:
                out_x[j] = xm
                out_y[j] = ym
                return j + 1, True
            out_x[j] = xn
            out_y[j] = yn
            return j + 1, False
        out_x[j] = xn
        out_y[j] = yn
        x = xn
        y = yn
    return nt, False


@njit(cache=True)
def conformal(kind, times, ckpt_fine, n_paths, rng, out_max, out_norm, out_qv_fine, out_qv_coarse, out_qv_riemann):
    """Conformal martingale M = phi(W) built from a complex Brownian path.

    kind 0: M = W, 1: M = W**2, 2: M = exp(W) - 1. The quadratic variation
    [Re M] is accumulated as the sum of squared increments of Re M on the
    fine grid and on every other point (coarse grid), and as the Riemann sum
    of |phi'(W)|^2 dt. ``out_norm`` tracks max |M_t| / sqrt(1 + [Re M]_t).
    """
    nt = times.shape[0]
    nk = ckpt_fine.shape[0]
    for i in range(n_paths):
        wx = 0.0
        wy = 0.0
        mx = 0.0
        my = 0.0
        mx_c = 0.0
        qf = 0.0
        qc = 0.0
        qr = 0.0
        mmax = 0.0
        nmax = 0.0
        k = 0
        for j in range(1, nt):
            dt = times[j] - times[j - 1]
            # |phi'(W)|^2 at the left endpoint
            if kind == 0:
                d2 = 1.0
            elif kind == 1:
                d2 = 4.0 * (wx * wx + wy * wy)
            else:
                d2 = math.exp(2.0 * wx)
            qr += d2 * dt
            h = math.sqrt(dt)
            wx += h * rng.standard_normal()
            wy += h * rng.standard_normal()
            if kind == 0:
                nx, ny = wx, wy
            elif kind == 1:
                nx, ny = wx * wx - wy * wy, 2.0 * wx * wy
            else:
                e = math.exp(wx)
                nx, ny = e * math.cos(wy) - 1.0, e * math.sin(wy)
            qf += (nx - mx) * (nx - mx)
            if j % 2 == 0:
                qc += (nx - mx_c) * (nx - mx_c)
                mx_c = nx
            mx = nx
            my = ny
            mod = math.hypot(mx, my)
            if mod > mmax:
                mmax = mod
            nv = mod / math.sqrt(1.0 + qf)
            if nv > nmax:
                nmax = nv
            while k < nk and ckpt_fine[k] == j:
                out_max[i, k] = mmax
                out_norm[i, k] = nmax
                out_qv_fine[i, k] = qf
                out_qv_coarse[i, k] = qc
                out_qv_riemann[i, k] = qr
                k += 1


def empty_outputs(n_paths, n_ckpt):
    return np.empty((n_paths, n_ckpt)), np.empty((n_paths, n_ckpt))
