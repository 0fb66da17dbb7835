"""Compiled inner loops: elementary slit maps, chain composition, the SDE stepper.

Every step of a chain is the exact Loewner map for a driving value frozen
over a capacity increment ``dt``::

    w -> W + (w - W) * sqrt(1 + 4 dt / (w - W)**2)

This branch is analytic on H minus the slit and across R minus {W}, and
agrees with the real branch sign(x - W) * sqrt((x - W)**2 + 4 dt) on the axis.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_RUNNING = 0
STATUS_DONE = 1
STATUS_THRESHOLD = 2

# layout of the float parameter vector handed to ``advance``
P_KAPPA, P_T, P_DTMAX, P_DTFLOOR, P_GAMMA, P_DSING, P_COLLIDE = range(7)
# layout of the mutable state vector
S_T, S_W, S_USED, S_CP, S_STATUS, S_STOP, S_NREC, S_NSTEPS = range(8)


@njit(cache=True)
def slit_forward(w, W, dt):
    u = w - W
    if u == 0:
        return W + 2j * math.sqrt(dt), 0j
    s = u * np.sqrt(1.0 + 4.0 * dt / (u * u))
    return W + s, u / s


@njit(cache=True, inline="always")
def slit_step_xy(a, b, dt):
    """Slit map on u = a + ib relative to the driving point, in real arithmetic.

    Returns the new offset and |u| / |s|.  Same branch as :func:`slit_forward`:
    Im s >= 0, and on the real axis s keeps the sign of u.
    """
    x = a * a - b * b + 4.0 * dt
    y = 2.0 * a * b
    r = math.hypot(x, y)
    if x >= 0.0:
        sr = math.sqrt(0.5 * (r + x))
        si = y / (2.0 * sr) if sr > 0.0 else 0.0
    else:
        si = math.copysign(math.sqrt(0.5 * (r - x)), y)
        sr = y / (2.0 * si)
    if si < 0.0 or (si == 0.0 and sr * a < 0.0):
        sr = -sr
        si = -si
    if r == 0.0:
        return sr, si, 0.0
    return sr, si, math.sqrt((a * a + b * b) / r)


@njit(cache=True)
def slit_forward_real(x, W, dt, side):
    u = x - W
    s = math.sqrt(u * u + 4.0 * dt)
    if u > 0 or (u == 0 and side > 0):
        return W + s, abs(u) / s
    return W - s, abs(u) / s


@njit(cache=True)
def slit_inverse(w, W, dt):
    u = w - W
    s = np.sqrt(u * u - 4.0 * dt)
    if s.imag < 0:
        s = -s
    elif s.imag == 0 and s.real * u.real < 0:
        s = -s
    return W + s


@njit(cache=True)
def chain_forward_complex(dts, ws, nsteps, last_dt, z, collide_c):
    """Image and derivative of z under the first ``nsteps`` maps plus a partial one.

    Returns (g, g', swallowed_step) with swallowed_step = -1 when z is never
    inside a slit.  Points on the real line use the collide_c * sqrt(dt)
    tolerance of the real flow.
    """
    g = z + 0j
    d = 1.0 + 0j
    for k in range(nsteps + 1):
        if k < nsteps:
            dt = dts[k]
        else:
            dt = last_dt
            if dt <= 0:
                break
        u = g - ws[k]
        h = 2.0 * math.sqrt(dt)
        if g.imag <= 0.0:
            # boundary point: same tolerance as the real flow
            if abs(u) < collide_c * math.sqrt(dt):
                return g, d, k
        elif abs(u.real) <= 1e-12 * (1.0 + abs(g)) and u.imag < h * (1.0 - 1e-9):
            # strictly inside this step's slit; the slit tip itself maps to W
            return g, d, k
        g, fd = slit_forward(g, ws[k], dt)
        d *= fd
    return g, d, -1


@njit(cache=True)
def chain_forward_real(dts, ws, w_after, nsteps, last_dt, x, side, prime_end, collide_c):
    """Real flow of x.  Returns (g, log g', swallow_step).

    ``w_after[k]`` is the driving value right after step k.  A crossing of the
    driving point counts as a collision; so does coming within collide_c *
    sqrt(dt) of it.  Prime ends (the degenerate 0-/0+) are absorbed into the
    driving point and pushed on, ordinary points report the collision step.
    """
    g = x
    logd = 0.0
    for k in range(nsteps + 1):
        if k < nsteps:
            dt = dts[k]
        else:
            dt = last_dt
            if dt <= 0:
                break
        g, fd = slit_forward_real(g, ws[k], dt, side)
        if fd > 0:
            logd += math.log(fd)
        else:
            logd = -np.inf
        wn = w_after[k]
        gap = (g - wn) * side
        if gap < collide_c * math.sqrt(dt):
            if prime_end:
                if gap < 0:
                    g = wn
            else:
                return g, logd, k
    return g, logd, -1


@njit(cache=True)
def trace_tips(dts, ws, tip_steps):
    """Tips eta(t_j) for the step counts in ``tip_steps`` (each 0..n).

    The tip after j steps is the preimage of the last slit's tip, pulled
    back through the earlier inverse maps in reverse order.
    """
    out = np.empty(tip_steps.size, dtype=np.complex128)
    for idx in range(tip_steps.size):
        j = tip_steps[idx]
        if j == 0:
            out[idx] = ws[0] + 0j if ws.size > 0 else 0j
            continue
        z = ws[j - 1] + 2j * math.sqrt(dts[j - 1])
        for k in range(j - 2, -1, -1):
            z = slit_inverse(z, ws[k], dts[k])
        if z.imag < 0:
            z = complex(z.real, 0.0)
        out[idx] = z
    return out


MAX_SPLIT_DEPTH = 48


@njit(cache=True)
def advance(
    prm,
    fx_order_left,
    fx_order_right,
    frho,
    fdeg,
    fpart,
    fside,
    pside,
    checkpoints,
    normals,
    state,
    V,
    logdV,
    fswallow,
    anchor,
    logsep,
    cp_logsep,
    PV,
    pswallow,
    pnohit,
    Z,
    logdZ,
    cp_W,
    cp_V,
    cp_logdV,
    cp_Z,
    cp_logdZ,
    cp_t,
    rec_t,
    rec_w,
    rec_v,
):
    """Euler-Maruyama for the driving SDE with exact frozen-driving point flows.

    A step whose end lands a real point within ``collide_c * sqrt(dt)`` of W
    (or across it) is not committed; it is split in two by a Brownian-bridge
    midpoint and retried, down to the floor step.  Collisions are therefore
    only declared at the floor step size, where near misses are resolved.

    Collisions with a cluster whose partial weight sum is at least
    kappa/2 - 2 (where the gap is a Bessel-type process of dimension >= 2
    that never reaches 0) are Euler overshoots: W is reflected about the
    innermost point of the cluster and nothing is swallowed.  Clusters below
    that bound are absorbed into W and their points marked swallowed.
    Probes flagged in ``pnohit`` sit in such non-hitting stretches and are
    never marked on a near miss.

    ``logsep[i]`` follows log|V_i - V_anchor[i]| (the anchor is the
    degenerate point on the same side) through the multiplicative update
    (|u_i| + |u_a|) / (s_i + s_a), which keeps full relative precision when
    the two images nearly merge.

    Runs until capacity T, the continuation threshold, or the normals buffer
    runs dry (status stays RUNNING so the caller can refill and resume).
    """
    kappa = prm[P_KAPPA]
    T = prm[P_T]
    dt_max = prm[P_DTMAX]
    dt_floor = prm[P_DTFLOOR]
    gamma = prm[P_GAMMA]
    dsing = prm[P_DSING]
    ccol = prm[P_COLLIDE]
    sqk = math.sqrt(kappa)
    hit_bound = 0.5 * kappa - 2.0
    m = V.size
    npv = PV.size
    nz = Z.size
    ncp = checkpoints.size
    record = rec_t.size > 0

    # complex probes are stepped in real arithmetic; |g'| is kept as a running
    # product (folded into logdZ on exit) to avoid a log per step
    Zr = np.empty(nz)
    Zi = np.empty(nz)
    dZ = np.ones(nz)
    for i in range(nz):
        Zr[i] = Z[i].real
        Zi[i] = Z[i].imag

    stack_dt = np.empty(MAX_SPLIT_DEPTH + 2)
    stack_db = np.empty(MAX_SPLIT_DEPTH + 2)
    sp = 0

    t = state[S_T]
    W = state[S_W]
    used = int(state[S_USED])
    cp = int(state[S_CP])
    nrec = 0
    nsteps = int(state[S_NSTEPS])
    split_floor = dt_floor * (1.0 + 1e-9)

    while t < T:
        if sp == 0:
            if used >= normals.size:
                break
            gap = np.inf
            for i in range(m):
                g = abs(W - V[i])
                if g < gap:
                    gap = g
            dt = dt_max
            if gamma * gap * gap < dt:
                dt = gamma * gap * gap
            if dt < dt_floor:
                dt = dt_floor
            # only T clips a step, so checkpoints never change the path
            if t + dt >= T:
                dt = T - t
            stack_dt[0] = dt
            stack_db[0] = math.sqrt(dt) * normals[used]
            used += 1
            sp = 1
        sp -= 1
        dt = stack_dt[sp]
        db = stack_db[sp]
        sq = math.sqrt(dt)
        dfloor = sq if sq > dsing else dsing

        drift = 0.0
        for i in range(m):
            if frho[i] != 0.0:
                d = W - V[i]
                if abs(d) < dfloor:
                    d = dfloor if fside[i] < 0 else -dfloor
                drift += frho[i] / d
        Wn = W + drift * dt + sqk * db

        tol = ccol * sq
        if dt > 2.0 * split_floor and sp < MAX_SPLIT_DEPTH and used < normals.size:
            close = False
            for i in range(m):
                u = V[i] - W
                s = math.sqrt(u * u + 4.0 * dt)
                vn = W + s if (u > 0 or (u == 0 and fside[i] > 0)) else W - s
                if (vn - Wn) * fside[i] < tol and abs(u) > 0.0:
                    close = True
                    break
            if not close:
                for i in range(npv):
                    if pswallow[i] >= 0:
                        continue
                    u = PV[i] - W
                    s = math.sqrt(u * u + 4.0 * dt)
                    vn = W + s if (u > 0 or (u == 0 and pside[i] > 0)) else W - s
                    if (vn - Wn) * pside[i] < tol:
                        close = True
                        break
            if close:
                # Brownian bridge midpoint: first half gets db/2 + sqrt(dt/4) N
                half = 0.5 * dt
                b1 = 0.5 * db + 0.5 * sq * normals[used]
                used += 1
                stack_dt[sp] = half
                stack_db[sp] = db - b1
                stack_dt[sp + 1] = half
                stack_db[sp + 1] = b1
                sp += 2
                continue

        for i in range(m):
            a = anchor[i]
            if a != i:
                ua = abs(V[i] - W) + abs(V[a] - W)
                sa = math.sqrt((V[i] - W) ** 2 + 4.0 * dt) + math.sqrt((V[a] - W) ** 2 + 4.0 * dt)
                logsep[i] += math.log(ua / sa)
        for i in range(m):
            u = V[i] - W
            s = math.sqrt(u * u + 4.0 * dt)
            if u > 0 or (u == 0 and fside[i] > 0):
                V[i] = W + s
            else:
                V[i] = W - s
            if u != 0:
                logdV[i] += math.log(abs(u) / s)
            else:
                logdV[i] = -np.inf
        for i in range(npv):
            u = PV[i] - W
            s = math.sqrt(u * u + 4.0 * dt)
            if u > 0 or (u == 0 and pside[i] > 0):
                PV[i] = W + s
            else:
                PV[i] = W - s
        for i in range(nz):
            sr, si, ratio = slit_step_xy(Zr[i] - W, Zi[i], dt)
            Zr[i] = W + sr
            Zi[i] = si
            dZ[i] *= ratio

        t += dt
        W = Wn
        nsteps += 1
        if sp == 0 and abs(t - T) <= 1e-12 * (1.0 + T):
            t = T

        stopped = False
        for sd in range(2):
            order = fx_order_left if sd == 0 else fx_order_right
            side = -1.0 if sd == 0 else 1.0
            jmax = -1
            for r in range(order.size):
                i = order[r]
                if (V[i] - W) * side < tol:
                    jmax = r
                else:
                    break
            if jmax < 0:
                continue
            worst = np.inf
            for r in range(jmax + 1):
                if fpart[order[r]] < worst:
                    worst = fpart[order[r]]
            if worst <= -2.0:
                stopped = True
                break
            if fpart[order[jmax]] >= hit_bound:
                i0 = order[0]
                if (V[i0] - W) * side < 0:
                    W = 2.0 * V[i0] - W
                continue
            for r in range(jmax + 1):
                i = order[r]
                if (V[i] - W) * side < 0:
                    V[i] = W
                    # the anchor moved by a jump: re-measure separations to it
                    for k in range(m):
                        if anchor[k] == i and k != i:
                            dk = abs(V[k] - V[i])
                            logsep[k] = math.log(dk) if dk > 0 else -np.inf
                        elif k == i and anchor[k] != k:
                            dk = abs(V[k] - V[anchor[k]])
                            logsep[k] = math.log(dk) if dk > 0 else -np.inf
                if not fdeg[i] and fswallow[i] < 0:
                    fswallow[i] = t
        for i in range(npv):
            gp = (PV[i] - W) * pside[i]
            if gp < tol and not pnohit[i]:
                if gp < 0:
                    PV[i] = W
                if pswallow[i] < 0:
                    pswallow[i] = t

        if record:
            rec_t[nrec] = t
            rec_w[nrec] = W
            for i in range(m):
                rec_v[nrec, i] = V[i]
            nrec += 1

        if stopped:
            state[S_STATUS] = STATUS_THRESHOLD
            state[S_STOP] = t
            break

        if sp == 0:
            while cp < ncp and t >= checkpoints[cp]:
                cp_t[cp] = t
                cp_W[cp] = W
                for i in range(m):
                    cp_V[cp, i] = V[i]
                    cp_logdV[cp, i] = logdV[i]
                    cp_logsep[cp, i] = logsep[i]
                for i in range(nz):
                    cp_Z[cp, i] = complex(Zr[i], Zi[i])
                    cp_logdZ[cp, i] = math.log(dZ[i]) + logdZ[i] if dZ[i] > 0.0 else -np.inf
                cp += 1

    for i in range(nz):
        Z[i] = complex(Zr[i], Zi[i])
        logdZ[i] = logdZ[i] + math.log(dZ[i]) if dZ[i] > 0.0 else -np.inf
    if t >= T and state[S_STATUS] == STATUS_RUNNING:
        state[S_STATUS] = STATUS_DONE
    state[S_T] = t
    state[S_W] = W
    state[S_USED] = used
    state[S_CP] = cp
    state[S_NREC] = nrec
    state[S_NSTEPS] = nsteps
