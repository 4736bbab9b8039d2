"""Compiled inner loops: lasso coordinate descent and the ARMA Kalman filter."""
import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


# ---------------------------------------------------------------------------
# Lasso: minimize ||y - X b||^2 + lam * ||b||_1 on centered X (Fortran order)
# and centered y. The intercept is handled by the caller.

@njit(**_JIT)
def _objective(r, beta, lam):
    s = 0.0
    for i in range(r.size):
        s += r[i] * r[i]
    a = 0.0
    for j in range(beta.size):
        a += abs(beta[j])
    return s + lam * a


@njit(**_JIT)
def _dot(X, j, r):
    s = 0.0
    for i in range(r.size):
        s += X[i, j] * r[i]
    return s


@njit(**_JIT)
def _update(X, r, beta, colsq, j, half):
    bj = beta[j]
    g = _dot(X, j, r) + colsq[j] * bj
    if g > half:
        nb = (g - half) / colsq[j]
    elif g < -half:
        nb = (g + half) / colsq[j]
    else:
        nb = 0.0
    d = nb - bj
    if d != 0.0:
        for i in range(r.size):
            r[i] -= d * X[i, j]
        beta[j] = nb
    return abs(d)


@njit(**_JIT)
def _kkt_ok(X, r, beta, lam, colsq, kkt_tol):
    for j in range(X.shape[1]):
        if colsq[j] == 0.0:
            continue
        g = 2.0 * _dot(X, j, r)
        if beta[j] == 0.0:
            if abs(g) > lam + kkt_tol:
                return False
        elif abs(g - lam * np.sign(beta[j])) > kkt_tol:
            return False
    return True


@njit(**_JIT)
def lasso_cd(X, y, lam, beta, colsq, tol, max_sweeps, kkt_tol, trace):
    """Cyclic coordinate descent with soft-thresholding, warm-started at ``beta``.

    Full sweeps alternate with sweeps over the active set. Stops once the
    largest coefficient change in a full sweep is below ``tol`` and the KKT
    conditions hold to ``kkt_tol``. Returns (sweeps, converged, monotone)
    and fills ``trace`` with the objective after each sweep.
    """
    p = X.shape[1]
    r = y - X @ beta
    half = 0.5 * lam
    prev = _objective(r, beta, lam)
    monotone = True
    sweeps = 0
    ntrace = trace.shape[0]
    while sweeps < max_sweeps:
        # full sweep
        maxd = 0.0
        for j in range(p):
            if colsq[j] > 0.0:
                d = _update(X, r, beta, colsq, j, half)
                if d > maxd:
                    maxd = d
        obj = _objective(r, beta, lam)
        if obj > prev * (1.0 + 1e-12) + 1e-12:
            monotone = False
        prev = obj
        if sweeps < ntrace:
            trace[sweeps] = obj
        sweeps += 1
        if maxd < tol:
            r = y - X @ beta
            if _kkt_ok(X, r, beta, lam, colsq, kkt_tol):
                return sweeps, True, monotone
        # active-set sweeps
        while sweeps < max_sweeps:
            maxd = 0.0
            for j in range(p):
                if beta[j] != 0.0:
                    d = _update(X, r, beta, colsq, j, half)
                    if d > maxd:
                        maxd = d
            obj = _objective(r, beta, lam)
            if obj > prev * (1.0 + 1e-12) + 1e-12:
                monotone = False
            prev = obj
            if sweeps < ntrace:
                trace[sweeps] = obj
            sweeps += 1
            if maxd < tol:
                break
    return sweeps, False, monotone


@njit(**_JIT)
def lasso_path(X, y, lambdas, colsq, tol, max_sweeps, kkt_tol):
    """Warm-started solutions along a decreasing ``lambdas`` grid.

    The path is cut once the fit saturates (RSS below 1e-3 of the total sum
    of squares, as glmnet does) or a grid point fails to converge; the remaining rows repeat
    the last solution. Returns (coefs, number of grid points solved).
    """
    p = X.shape[1]
    out = np.zeros((lambdas.size, p))
    beta = np.zeros(p)
    trace = np.zeros(0)
    tss = y @ y
    solved = 0
    for i in range(lambdas.size):
        _, conv, _ = lasso_cd(X, y, lambdas[i], beta, colsq, tol, max_sweeps, kkt_tol, trace)
        out[i] = beta
        if not conv:
            break
        solved += 1
        r = y - X @ beta
        if r @ r <= 1e-3 * tss:
            break
    for i in range(solved + 1, lambdas.size):
        out[i] = out[solved] if solved < lambdas.size else beta
    return out, solved


@njit(**_JIT)
def _gram_update(G, g, beta, j, half):
    bj = beta[j]
    z = g[j] + G[j, j] * bj
    if z > half:
        nb = (z - half) / G[j, j]
    elif z < -half:
        nb = (z + half) / G[j, j]
    else:
        nb = 0.0
    d = nb - bj
    if d != 0.0:
        for i in range(g.size):
            g[i] -= d * G[i, j]
        beta[j] = nb
    return abs(d)


@njit(**_JIT)
def lasso_cd_gram(G, c, lam, beta, tol, max_sweeps, kkt_tol):
    """Coordinate descent on the Gram matrix G = X'X with c = X'y.

    Same fixed point and stopping rule as ``lasso_cd``; each coordinate
    update costs O(p) instead of O(n), which pays off when n > p.
    """
    p = G.shape[0]
    g = c - G @ beta  # X'r
    half = 0.5 * lam
    sweeps = 0
    while sweeps < max_sweeps:
        maxd = 0.0
        for j in range(p):
            if G[j, j] > 0.0:
                d = _gram_update(G, g, beta, j, half)
                if d > maxd:
                    maxd = d
        sweeps += 1
        if maxd < tol:
            g = c - G @ beta
            ok = True
            for j in range(p):
                if G[j, j] == 0.0:
                    continue
                gj = 2.0 * g[j]
                if beta[j] == 0.0:
                    if abs(gj) > lam + kkt_tol:
                        ok = False
                        break
                elif abs(gj - lam * np.sign(beta[j])) > kkt_tol:
                    ok = False
                    break
            if ok:
                return sweeps, True
        while sweeps < max_sweeps:
            maxd = 0.0
            for j in range(p):
                if beta[j] != 0.0:
                    d = _gram_update(G, g, beta, j, half)
                    if d > maxd:
                        maxd = d
            sweeps += 1
            if maxd < tol:
                break
    return sweeps, False


@njit(**_JIT)
def lasso_path_gram(G, c, yy, lambdas, tol, max_sweeps, kkt_tol):
    """``lasso_path`` on the Gram matrix; ``yy`` is the centered total sum of squares."""
    p = G.shape[0]
    out = np.zeros((lambdas.size, p))
    beta = np.zeros(p)
    solved = 0
    for i in range(lambdas.size):
        _, conv = lasso_cd_gram(G, c, lambdas[i], beta, tol, max_sweeps, kkt_tol)
        out[i] = beta
        if not conv:
            break
        solved += 1
        # RSS = y'y - 2 b'c + b'Gb
        rss = yy - 2.0 * (beta @ c) + beta @ (G @ beta)
        if rss <= 1e-3 * yy:
            break
    for i in range(solved + 1, lambdas.size):
        out[i] = out[solved] if solved < lambdas.size else beta
    return out, solved


# ---------------------------------------------------------------------------
# ARMA exact likelihood (Harvey state-space form, sigma^2 concentrated out)

@njit(**_JIT)
def pacf_to_coef(r):
    """Durbin-Levinson map from partial autocorrelations to AR coefficients."""
    k = r.size
    phi = np.zeros(k)
    tmp = np.zeros(k)
    for m in range(k):
        phi[m] = r[m]
        for j in range(m):
            tmp[j] = phi[j] - r[m] * phi[m - 1 - j]
        for j in range(m):
            phi[j] = tmp[j]
    return phi


@njit(**_JIT)
def _system(ar, ma):
    p, q = ar.size, ma.size
    m = max(p, q + 1)
    T = np.zeros((m, m))
    for i in range(p):
        T[i, 0] = ar[i]
    for i in range(m - 1):
        T[i, i + 1] = 1.0
    R = np.zeros(m)
    R[0] = 1.0
    for j in range(q):
        R[j + 1] = ma[j]
    return T, R


@njit(**_JIT)
def _stationary_cov(T, R):
    m = T.shape[0]
    A = np.eye(m * m) - np.kron(T, T)
    rhs = np.outer(R, R).ravel()
    return np.linalg.solve(A, rhs).reshape((m, m))


@njit(**_JIT)
def kalman(y, mu, ar, ma):
    """Innovations of the ARMA model (unit innovation variance).

    Returns (sum v^2/F, sum log F, predicted state for the step after the
    last observation). T is a companion matrix, so products with it are a
    shift plus the AR column; once P settles the gain is frozen.
    """
    T, R = _system(ar, ma)
    m = T.shape[0]
    p = ar.size
    P = _stationary_cov(T, R)
    P = 0.5 * (P + P.T)
    phi = np.zeros(m)
    phi[:p] = ar
    a = np.zeros(m)
    an = np.zeros(m)
    K = np.zeros(m)
    TP = np.zeros((m, m))
    Pn = np.zeros((m, m))
    ssq = 0.0
    sld = 0.0
    steady = False
    F = 1.0
    logF = 0.0
    for t in range(y.size):
        if not steady:
            F = P[0, 0]
            if F <= 0.0:
                return np.inf, np.inf, a
            logF = np.log(F)
            # TP = T @ P
            for i in range(m):
                for j in range(m):
                    s = phi[i] * P[0, j]
                    if i + 1 < m:
                        s += P[i + 1, j]
                    TP[i, j] = s
            for i in range(m):
                K[i] = TP[i, 0] / F
        v = y[t] - mu - a[0]
        ssq += v * v / F
        sld += logF
        a0 = a[0]
        for i in range(m):
            s = phi[i] * a0
            if i + 1 < m:
                s += a[i + 1]
            an[i] = s + K[i] * v
        for i in range(m):
            a[i] = an[i]
        if not steady:
            # Pn = TP @ T' + RR' - F KK'
            diff = 0.0
            for i in range(m):
                for j in range(m):
                    s = TP[i, 0] * phi[j]
                    if j + 1 < m:
                        s += TP[i, j + 1]
                    s += R[i] * R[j] - F * K[i] * K[j]
                    Pn[i, j] = s
                    d = abs(s - P[i, j])
                    if d > diff:
                        diff = d
            for i in range(m):
                for j in range(m):
                    P[i, j] = Pn[i, j]
            if diff < 1e-10:
                steady = True
    return ssq, sld, a


@njit(**_JIT)
def arma_negloglik(params, y, p, q, ybar, ysd):
    """Concentrated negative log-likelihood in unconstrained parameters."""
    mu = ybar + ysd * params[0]
    ar = pacf_to_coef(np.tanh(params[1:1 + p].copy()))
    ma = -pacf_to_coef(np.tanh(params[1 + p:1 + p + q].copy()))
    ssq, sld, _ = kalman(y, mu, ar, ma)
    if not np.isfinite(ssq):
        return 1e300
    n = y.size
    s2 = ssq / n
    if s2 <= 0.0:
        return 1e300
    return 0.5 * n * (np.log(2.0 * np.pi) + 1.0 + np.log(s2)) + 0.5 * sld
