"""Adaptive Dormand-Prince 5(4) kernel for the model family.

One kernel covers all three model kinds: the plain competitive dynamics
dx/dt = diag(x)(r + A x) correspond to zero discrepancy coefficients, the
enriched dynamics add diag(x)*d_state + diag(|drift|)*d_rate.  Written in a
loop-heavy style so numba can compile it; falls back to plain Python (slow
but identical semantics) when numba is unavailable.

Status codes instead of exceptions so the hot path stays jittable; the
public wrapper in `dynamics` translates them.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(f):
            return f

        return deco


STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_NEGATIVE_STATE = 2
STATUS_NO_SOLUTION = 3

MODE_EXPLICIT = 0
MODE_IMPLICIT = 1

# Dormand-Prince 5(4) tableau.
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (19372.0 / 6561.0, -25360.0 / 2187.0,
                          64448.0 / 6561.0, -212.0 / 729.0)
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0,
                                46732.0 / 5247.0, 49.0 / 176.0,
                                -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)
# 5th-order minus embedded 4th-order weights.
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
# Dense-output coefficients for the quartic interpolant.
_D1, _D3, _D4, _D5, _D6, _D7 = (-12715105075.0 / 11282082432.0,
                                87487479700.0 / 32700410799.0,
                                -10690763975.0 / 1880347072.0,
                                701980252875.0 / 199316789632.0,
                                -1453857185.0 / 822651844.0,
                                69997945.0 / 29380423.0)

_MAX_STEPS = 2_000_000


@njit(cache=True)
def rhs_fill(r, A, d_state, d_rate, mode, x, out):
    """Evaluate the (possibly enriched) right-hand side into ``out``.

    Explicit mode substitutes the undamped drift for |dx/dt|; implicit mode
    solves each component of dx = c + d_rate*|dx| by sign split.
    """
    n = x.shape[0]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += A[i, j] * x[j]
        drift = x[i] * (r[i] + acc)
        if mode == MODE_EXPLICIT:
            out[i] = drift + x[i] * d_state[i] + abs(drift) * d_rate[i]
        else:
            c = drift + x[i] * d_state[i]
            if c >= 0.0:
                out[i] = c / (1.0 - d_rate[i])
            elif d_rate[i] > -1.0:
                out[i] = c / (1.0 + d_rate[i])
            else:
                return STATUS_NO_SOLUTION
    return STATUS_OK


@njit(cache=True)
def integrate_glv(r, A, d_state, d_rate, mode, x0, t_final, obs_times,
                  rtol, atol, max_step, floor):
    """Integrate from t=0 to t_final, interpolating states at obs_times.

    Returns (states, status, accepted, rejected, rhs_evals, t_reached).
    obs_times must be sorted and lie within [0, t_final]; states at
    obs_times are produced by the solver's own quartic interpolant.
    """
    n = x0.shape[0]
    n_obs = obs_times.shape[0]
    states = np.zeros((n_obs, n))

    y = x0.copy()
    t = 0.0
    iobs = 0
    while iobs < n_obs and obs_times[iobs] <= 0.0:
        for i in range(n):
            states[iobs, i] = y[i]
        iobs += 1

    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    ytmp = np.empty(n)
    y5 = np.empty(n)
    rc1 = np.empty(n)
    rc2 = np.empty(n)
    rc3 = np.empty(n)
    rc4 = np.empty(n)
    rc5 = np.empty(n)

    accepted = 0
    rejected = 0
    nfev = 1
    status = rhs_fill(r, A, d_state, d_rate, mode, y, k1)
    if status != STATUS_OK:
        return states, status, accepted, rejected, nfev, t

    # Crude version of the usual starting-step heuristic.
    dn = 0.0
    fn = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y[i])
        dn += (y[i] / sc) ** 2
        fn += (k1[i] / sc) ** 2
    if fn > 0.0 and dn > 0.0:
        h = 0.01 * math.sqrt(dn / fn)
    else:
        h = 1e-4 * t_final
    if h > max_step:
        h = max_step
    if h > t_final:
        h = t_final
    have_fsal = True

    steps_taken = 0
    while t < t_final:
        steps_taken += 1
        if steps_taken > _MAX_STEPS or h < 1e-14 * max(1.0, abs(t)):
            return states, STATUS_STEP_UNDERFLOW, accepted, rejected, nfev, t

        last = t + h >= t_final
        if last:
            h = t_final - t

        if not have_fsal:
            status = rhs_fill(r, A, d_state, d_rate, mode, y, k1)
            nfev += 1
            if status != STATUS_OK:
                return states, status, accepted, rejected, nfev, t
            have_fsal = True

        for i in range(n):
            ytmp[i] = y[i] + h * _A21 * k1[i]
        status = rhs_fill(r, A, d_state, d_rate, mode, ytmp, k2)
        if status != STATUS_OK:
            return states, status, accepted, rejected, nfev, t
        for i in range(n):
            ytmp[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
        status = rhs_fill(r, A, d_state, d_rate, mode, ytmp, k3)
        if status != STATUS_OK:
            return states, status, accepted, rejected, nfev, t
        for i in range(n):
            ytmp[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        status = rhs_fill(r, A, d_state, d_rate, mode, ytmp, k4)
        if status != STATUS_OK:
            return states, status, accepted, rejected, nfev, t
        for i in range(n):
            ytmp[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i]
                                  + _A54 * k4[i])
        status = rhs_fill(r, A, d_state, d_rate, mode, ytmp, k5)
        if status != STATUS_OK:
            return states, status, accepted, rejected, nfev, t
        for i in range(n):
            ytmp[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i]
                                  + _A64 * k4[i] + _A65 * k5[i])
        status = rhs_fill(r, A, d_state, d_rate, mode, ytmp, k6)
        if status != STATUS_OK:
            return states, status, accepted, rejected, nfev, t
        for i in range(n):
            y5[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i]
                                + _B5 * k5[i] + _B6 * k6[i])
        status = rhs_fill(r, A, d_state, d_rate, mode, y5, k7)
        nfev += 6
        if status != STATUS_OK:
            return states, status, accepted, rejected, nfev, t

        err = 0.0
        bad = False
        for i in range(n):
            e = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i]
                     + _E6 * k6[i] + _E7 * k7[i])
            ay = abs(y[i])
            ay5 = abs(y5[i])
            sc = atol + rtol * (ay if ay > ay5 else ay5)
            if not math.isfinite(e):
                bad = True
                break
            err += (e / sc) ** 2
        err = math.sqrt(err / n) if not bad else 10.0

        if err <= 1.0:
            t_new = t_final if last else t + h
            for i in range(n):
                ydiff = y5[i] - y[i]
                bspl = h * k1[i] - ydiff
                rc1[i] = y[i]
                rc2[i] = ydiff
                rc3[i] = bspl
                rc4[i] = ydiff - h * k7[i] - bspl
                rc5[i] = h * (_D1 * k1[i] + _D3 * k3[i] + _D4 * k4[i]
                              + _D5 * k5[i] + _D6 * k6[i] + _D7 * k7[i])
            while iobs < n_obs and obs_times[iobs] <= t_new:
                theta = (obs_times[iobs] - t) / h
                theta1 = 1.0 - theta
                for i in range(n):
                    v = rc1[i] + theta * (rc2[i] + theta1 * (
                        rc3[i] + theta * (rc4[i] + theta1 * rc5[i])))
                    if v < 0.0:
                        if v >= -floor:
                            v = 0.0
                        else:
                            return (states, STATUS_NEGATIVE_STATE, accepted,
                                    rejected, nfev, obs_times[iobs])
                    states[iobs, i] = v
                iobs += 1

            clamped = False
            for i in range(n):
                if y5[i] < 0.0:
                    if y5[i] >= -floor:
                        y5[i] = 0.0
                        clamped = True
                    else:
                        return (states, STATUS_NEGATIVE_STATE, accepted,
                                rejected, nfev, t_new)
                y[i] = y5[i]
            t = t_new
            accepted += 1
            if clamped:
                have_fsal = False
            else:
                for i in range(n):
                    k1[i] = k7[i]

            if err == 0.0:
                factor = 5.0
            else:
                factor = 0.9 * err ** -0.2
                if factor > 5.0:
                    factor = 5.0
                elif factor < 0.2:
                    factor = 0.2
            h *= factor
            if h > max_step:
                h = max_step
        else:
            rejected += 1
            factor = 0.9 * err ** -0.2
            if factor < 0.2:
                factor = 0.2
            elif factor > 1.0:
                factor = 1.0
            h *= factor

    # Floating-point stragglers: anything left coincides with t_final.
    while iobs < n_obs:
        for i in range(n):
            states[iobs, i] = y[i]
        iobs += 1
    return states, STATUS_OK, accepted, rejected, nfev, t


@njit(cache=True)
def integrate_glv_batch(r, A, d_state, d_rate, mode, x0s, t_final, obs_times,
                        rtol, atol, max_step, floor):
    """Integrate one model from many initial conditions (likelihood path).

    Returns (states[k, j, i], status, accepted, rejected, rhs_evals,
    failed_index); failed_index is the first failing row or -1.
    """
    n_sc = x0s.shape[0]
    states = np.zeros((n_sc, obs_times.shape[0], x0s.shape[1]))
    accepted = 0
    rejected = 0
    nfev = 0
    for k in range(n_sc):
        out, status, acc, rej, nf, _t = integrate_glv(
            r, A, d_state, d_rate, mode, x0s[k], t_final, obs_times,
            rtol, atol, max_step, floor)
        accepted += acc
        rejected += rej
        nfev += nf
        if status != STATUS_OK:
            return states, status, accepted, rejected, nfev, k
        states[k] = out
    return states, STATUS_OK, accepted, rejected, nfev, -1
