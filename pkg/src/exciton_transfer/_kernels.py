"""Compiled right-hand sides and an adaptive Dormand-Prince 5(4) stepper.

The density matrix rho = A + iB is carried as one real vector
``y = concat(A.ravel(), B.ravel())``. Two right-hand sides are provided:

* ``structured_rhs`` exploits H = H_el (x) 1 + 1 (x) diag(h_ph)
  + sum_j (g_j/2)|j><j| (x) (a + a^dag) with real H, ladder jumps on the
  mode and site dephasing. A is symmetric and B antisymmetric, so only one
  H-product per part is needed.
* ``csr_rhs`` multiplies by a precomputed real-split sparse generator and
  handles anything else.
"""
import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def _hmul(R, hel, gh, hph, sq, Y):
    n = hel.shape[0]
    k = hph.shape[0]
    d = R.shape[2]
    for i in range(n):
        for m in range(k):
            h = hph[m] + hel[i, i]
            for c in range(d):
                Y[i, m, c] = h * R[i, m, c]
            for j in range(n):
                if j != i:
                    h = hel[i, j]
                    if h != 0.0:
                        for c in range(d):
                            Y[i, m, c] += h * R[j, m, c]
            if m > 0:
                s = gh[i] * sq[m]
                for c in range(d):
                    Y[i, m, c] += s * R[i, m - 1, c]
            if m < k - 1:
                s = gh[i] * sq[m + 1]
                for c in range(d):
                    Y[i, m, c] += s * R[i, m + 1, c]


@njit(cache=True, fastmath=True)
def structured_rhs(params, y, dy):
    hel, gh, hph, sq, G, dn, up, Y1, Y2 = params
    n = hel.shape[0]
    k = hph.shape[0]
    d = n * k
    dd = d * d
    A = y[:dd].reshape(d, d)
    B = y[dd:].reshape(d, d)
    dA = dy[:dd].reshape(d, d)
    dB = dy[dd:].reshape(d, d)
    _hmul(A.reshape(n, k, d), hel, gh, hph, sq, Y1.reshape(n, k, d))
    _hmul(B.reshape(n, k, d), hel, gh, hph, sq, Y2.reshape(n, k, d))
    for r in range(d):
        for c in range(d):
            dA[r, c] = Y2[r, c] + Y2[c, r] + G[r, c] * A[r, c]
            dB[r, c] = Y1[c, r] - Y1[r, c] + G[r, c] * B[r, c]
    for r in range(d - 1):
        s = dn[r]
        if s != 0.0:
            for c in range(d - 1):
                f = s * dn[c]
                dA[r, c] += f * A[r + 1, c + 1]
                dB[r, c] += f * B[r + 1, c + 1]
    for r in range(1, d):
        s = up[r]
        if s != 0.0:
            for c in range(1, d):
                f = s * up[c]
                dA[r, c] += f * A[r - 1, c - 1]
                dB[r, c] += f * B[r - 1, c - 1]


@njit(cache=True, fastmath=True)
def csr_rhs(params, y, dy):
    indptr, indices, data = params
    for r in range(indptr.shape[0] - 1):
        acc = 0.0
        for q in range(indptr[r], indptr[r + 1]):
            acc += data[q] * y[indices[q]]
        dy[r] = acc


# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40


@njit(cache=True, fastmath=True)
def dp5_advance(rhs, params, y, t, t_end, h, rtol, atol, work, ctrl, max_steps):
    """Advance ``y`` in place from ``t`` to ``t_end``.

    ``work`` is an (8, n) scratch array whose row 0 must hold f(t, y) on
    entry and holds f(t_end, y) on exit. ``ctrl`` = [facold, nfev, naccept,
    nreject] is updated in place. Returns (t, h_next, status) where status
    is 0 on success, 1 when max_steps was hit and 2 for a step-size
    underflow or a non-finite state.
    """
    n = y.shape[0]
    k1 = work[0]
    k2 = work[1]
    k3 = work[2]
    k4 = work[3]
    k5 = work[4]
    k6 = work[5]
    k7 = work[6]
    yt = work[7]
    facold = ctrl[0]
    beta = 0.04
    expo1 = 0.2 - beta * 0.75
    safe = 0.9
    last_rejected = False
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            ctrl[0] = facold
            return t, h, 1
        steps += 1
        hs = h
        final = False
        if t + hs >= t_end:
            hs = t_end - t
            final = True
        if hs <= 1e-14 * max(1.0, abs(t)):
            ctrl[0] = facold
            return t, h, 2
        for i in range(n):
            yt[i] = y[i] + hs * A21 * k1[i]
        rhs(params, yt, k2)
        for i in range(n):
            yt[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
        rhs(params, yt, k3)
        for i in range(n):
            yt[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        rhs(params, yt, k4)
        for i in range(n):
            yt[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        rhs(params, yt, k5)
        for i in range(n):
            yt[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        rhs(params, yt, k6)
        for i in range(n):
            yt[i] = y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
        rhs(params, yt, k7)
        ctrl[1] += 6
        acc = 0.0
        for i in range(n):
            e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(yt[i]))
            acc += (e / sc) ** 2
        err = np.sqrt(acc / n)
        if not np.isfinite(err):
            ctrl[0] = facold
            return t, h, 2
        fac11 = err ** expo1
        if err <= 1.0:
            fac = fac11 / facold ** beta
            fac = max(0.1, min(5.0, fac / safe))
            hnew = hs / fac
            facold = max(err, 1e-4)
            for i in range(n):
                y[i] = yt[i]
                k1[i] = k7[i]
            t = t_end if final else t + hs
            ctrl[2] += 1
            if last_rejected:
                hnew = min(hnew, hs)
            last_rejected = False
            # a clipped final step says nothing about the natural step size
            h = max(hnew, h) if final else hnew
        else:
            h = hs / min(5.0, fac11 / safe)
            last_rejected = True
            ctrl[3] += 1
    ctrl[0] = facold
    return t, h, 0
