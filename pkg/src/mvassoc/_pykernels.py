"""Pure-Python implementation of the numerical hot paths.

Mirrors ``_kernels.pyx`` function for function; used when the compiled
extension is unavailable or when ``MVASSOC_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np
from scipy import special

STATUS_OK = 0
STATUS_QUAD_FAIL = 1
STATUS_QUANTILE_FAIL = 2
STATUS_DEGENERATE = 3

MAX_INTERVALS = 1000
MAX_ROOT_ITER = 200

# Kronrod 15-point nodes/weights and the embedded 7-point Gauss weights (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
# abscissae on [-1, 1] in increasing order, with matching weights
_NODES = np.concatenate([-_XGK[:-1], [0.0], _XGK[-2::-1]])
_KW = np.concatenate([_WGK[:-1], [_WGK[-1]], _WGK[-2::-1]])
_GW = np.zeros(15)
_GW[[1, 3, 5]] = _WG[:3]
_GW[7] = _WG[3]
_GW[[13, 11, 9]] = _WG[:3]

_EPS = np.finfo(float).eps
_UFLOW = np.finfo(float).tiny


def liu_params(eigs):
    """Return ``(mean, var, l, delta)`` of the Liu moment-matched chi-square."""
    lam = np.asarray(eigs, dtype=float)
    c1 = float(lam.sum())
    c2 = float((lam ** 2).sum())
    c3 = float((lam ** 3).sum())
    c4 = float((lam ** 4).sum())
    if not c2 > 0.0:
        return None
    s1 = c3 / (c2 * math.sqrt(c2))
    s2 = c4 / (c2 * c2)
    if s1 * s1 > s2 * (1.0 + 1e-12):
        a = 1.0 / (s1 - math.sqrt(s1 * s1 - s2))
        delta = s1 * a ** 3 - a * a
        l = a * a - 2.0 * delta
    else:
        delta = 0.0
        l = 1.0 / (s1 * s1)
    return c1, 2.0 * c2, l, delta


def ncx2_sf(df, nc, x):
    """Upper tail of the noncentral chi-square as a Poisson mixture of central tails."""
    if x <= 0.0:
        return 1.0
    lam = 0.5 * nc
    if lam <= 0.0:
        return float(special.chdtrc(df, x))
    j0 = int(math.floor(lam))
    logw0 = -lam + j0 * math.log(lam) - math.lgamma(j0 + 1.0)
    total = 0.0
    # upward from the Poisson mode; central tails grow with j so weight must vanish
    logw = logw0
    j = j0
    limit = j0 + 2000 + int(50.0 * math.sqrt(lam))
    while j <= limit:
        w = math.exp(logw)
        total += w * special.chdtrc(df + 2.0 * j, x)
        if j > j0 and (w == 0.0 or w < 1e-17 * total):
            break
        j += 1
        logw += math.log(lam) - math.log(j)
    logw = logw0
    j = j0
    while j > 0:
        logw -= math.log(lam) - math.log(j)
        j -= 1
        term = math.exp(logw) * special.chdtrc(df + 2.0 * j, x)
        total += term
        if term < 1e-17 * max(total, _UFLOW):
            break
    return min(max(total, 0.0), 1.0)


def liu_sf(mean, var, l, delta, t):
    """Survival of the quadratic form at ``t`` under the Liu approximation."""
    tstar = (t - mean) / math.sqrt(var)
    x = tstar * math.sqrt(2.0 * (l + 2.0 * delta)) + l + delta
    if x <= 0.0:
        return 1.0
    if delta == 0.0:
        p = float(special.chdtrc(l, x))
    else:
        p = ncx2_sf(l, delta, x)
    return min(max(p, 0.0), 1.0)


def liu_sf_array(mean, var, l, delta, t):
    return np.array([liu_sf(mean, var, l, delta, float(v)) for v in np.ravel(t)])


def _log_gap(mean, var, l, delta, t, logp):
    s = liu_sf(mean, var, l, delta, t)
    if s <= 0.0:
        return -1e300
    return math.log(s) - logp


def liu_isf(mean, var, l, delta, p):
    """Inverse survival of the Liu law; returns ``(t, status)``."""
    if p >= 1.0:
        return 0.0, STATUS_OK
    if p <= 0.0:
        return math.inf, STATUS_OK
    sd = math.sqrt(var)
    if delta == 0.0:
        guess = mean + sd * (float(special.chdtri(l, p)) - l) / math.sqrt(2.0 * l)
        if math.isfinite(guess):
            s = liu_sf(mean, var, l, delta, guess)
            if abs(s - p) <= 1e-12 * p:
                return guess, STATUS_OK
        else:
            guess = mean
    else:
        guess = mean
    return _refine_quantile(mean, var, l, delta, p, max(guess, 0.0))


def _refine_quantile(mean, var, l, delta, p, guess):
    logp = math.log(p)
    sd = math.sqrt(var)

    def g(t):
        return _log_gap(mean, var, l, delta, t, logp)

    g0 = g(guess)
    if g0 == 0.0:
        return guess, STATUS_OK
    step = 1e-6 * max(abs(guess), sd)
    it = 0
    if g0 > 0.0:
        lo, glo = guess, g0
        hi = guess + step
        ghi = g(hi)
        while ghi > 0.0:
            it += 1
            if it > MAX_ROOT_ITER:
                return math.nan, STATUS_QUANTILE_FAIL
            lo, glo = hi, ghi
            step *= 4.0
            hi = hi + step
            ghi = g(hi)
    else:
        hi, ghi = guess, g0
        lo = max(guess - step, 0.0)
        glo = g(lo)
        while glo < 0.0:
            it += 1
            if lo <= 0.0:
                return 0.0, STATUS_OK
            if it > MAX_ROOT_ITER:
                return math.nan, STATUS_QUANTILE_FAIL
            hi, ghi = lo, glo
            step *= 4.0
            lo = max(lo - step, 0.0)
            glo = g(lo)
    return _illinois(g, lo, hi, glo, ghi)


def _illinois(g, lo, hi, glo, ghi):
    """Regula falsi with the Illinois modification and periodic bisection."""
    side = 0
    for it in range(MAX_ROOT_ITER):
        if abs(glo) < 1e250 and abs(ghi) < 1e250 and it % 4 != 3:
            mid = (lo * ghi - hi * glo) / (ghi - glo)
            if not (lo < mid < hi):
                mid = 0.5 * (lo + hi)
        else:
            mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) <= 1e-12 or hi - lo <= 4.0 * _EPS * abs(mid):
            return mid, STATUS_OK
        if gm > 0.0:
            lo, glo = mid, gm
            if side == 1:
                ghi *= 0.5
            side = 1
        else:
            hi, ghi = mid, gm
            if side == -1:
                glo *= 0.5
            side = -1
    return math.nan, STATUS_QUANTILE_FAIL


def chi2_pdf(k, x):
    x = np.asarray(x, dtype=float)
    hk = 0.5 * k
    with np.errstate(divide="ignore"):
        return np.exp((hk - 1.0) * np.log(x) - 0.5 * x - hk * math.log(2.0) - math.lgamma(hk))


class _Integrand:
    def __init__(self, intercepts, slopes, a, b, d, k):
        self.A = np.asarray(intercepts, dtype=float)
        self.s = np.asarray(slopes, dtype=float)
        self.a, self.b, self.d, self.k = a, b, d, k

    def envelope(self, x):
        x = np.atleast_1d(x)
        return np.min(self.A[None, :] + self.s[None, :] * x[:, None], axis=1)

    def __call__(self, x):
        y = self.envelope(x)
        arg = (y - self.b) / self.a
        surv = np.where(arg > 0.0, special.chdtrc(self.d, np.maximum(arg, 0.0)), 1.0)
        return surv * chi2_pdf(self.k, x)


def _gk15(f, lo, hi):
    centr = 0.5 * (lo + hi)
    hlgth = 0.5 * (hi - lo)
    fv = f(centr + hlgth * _NODES)
    resk = float(np.dot(_KW, fv))
    resg = float(np.dot(_GW, fv))
    resabs = float(np.dot(_KW, np.abs(fv)))
    reskh = 0.5 * resk
    resasc = float(np.dot(_KW, np.abs(fv - reskh)))
    result = resk * hlgth
    resabs *= abs(hlgth)
    resasc *= abs(hlgth)
    abserr = abs((resk - resg) * hlgth)
    if resasc != 0.0 and abserr != 0.0:
        abserr = resasc * min(1.0, (200.0 * abserr / resasc) ** 1.5)
    if resabs > _UFLOW / (50.0 * _EPS):
        abserr = max(50.0 * _EPS * resabs, abserr)
    return result, abserr


def adaptive_gk(f, points, tol):
    """Globally adaptive GK15 over consecutive breakpoints; returns ``(value, err, ok)``."""
    ivs = []
    for lo, hi in zip(points[:-1], points[1:]):
        if hi > lo:
            r, e = _gk15(f, lo, hi)
            ivs.append([lo, hi, r, e])
    if not ivs:
        return 0.0, 0.0, True
    while True:
        total_e = sum(iv[3] for iv in ivs)
        if total_e <= tol:
            return sum(iv[2] for iv in ivs), total_e, True
        if len(ivs) >= MAX_INTERVALS:
            return sum(iv[2] for iv in ivs), total_e, False
        i = max(range(len(ivs)), key=lambda j: ivs[j][3])
        lo, hi = ivs[i][0], ivs[i][1]
        mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            return sum(iv[2] for iv in ivs), total_e, False
        r1, e1 = _gk15(f, lo, mid)
        r2, e2 = _gk15(f, mid, hi)
        ivs[i] = [lo, mid, r1, e1]
        ivs.append([mid, hi, r2, e2])


def envelope_kinks(intercepts, slopes, upper):
    """Abscissae in ``(0, upper)`` where the lower envelope of the lines changes line."""
    A = list(intercepts)
    s = list(slopes)
    m = len(A)
    cur = min(range(m), key=lambda g: (A[g], s[g]))
    x = 0.0
    kinks = []
    while True:
        best_x = upper
        nxt = -1
        for g in range(m):
            if s[g] < s[cur]:
                xi = (A[g] - A[cur]) / (s[cur] - s[g])
                if x <= xi < best_x or (xi == best_x and nxt >= 0 and s[g] < s[nxt]):
                    best_x = xi
                    nxt = g
        if nxt < 0 or best_x >= upper:
            break
        if best_x > x:
            kinks.append(best_x)
        x = best_x
        cur = nxt
    return kinks, cur


def ssu_abd(c):
    c = np.asarray(c, dtype=float)
    c1, c2, c3 = float(c.sum()), float((c ** 2).sum()), float((c ** 3).sum())
    if not c3 > 0.0:
        return None
    return c3 / c2, c1 - c2 * c2 / c3, c2 ** 3 / (c3 * c3)


def usat_pvalue(t_usat, params, grid, abd, k, epsabs=1e-12, epsrel=1e-10):
    """Integrated USAT p-value.

    ``params`` holds one ``(mean, var, l, delta)`` tuple per grid weight.
    Returns ``(p, raw, status)``; ``raw`` is the unclamped integral value.
    """
    G = len(grid)
    if t_usat <= 0.0:
        return 0.0, 0.0, STATUS_OK
    if t_usat >= 1.0:
        return 1.0, 1.0, STATUS_OK
    a, b, d = abd
    qs = []
    for g in range(G):
        q, st = liu_isf(*params[g], t_usat)
        if st != STATUS_OK:
            return math.nan, math.nan, st
        qs.append(q)
    i1 = G - 1
    q1 = qs[i1]
    A = [qs[g] / (1.0 - grid[g]) for g in range(G - 1)]
    s = [-grid[g] / (1.0 - grid[g]) for g in range(G - 1)]
    f = _Integrand(A, s, a, b, d, k)

    kinks, _ = envelope_kinks(A, s, q1)
    pts = [0.0] + kinks + [q1]
    # first abscissa where the envelope drops to the SSU support edge b
    upper = q1
    for lo, hi in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (lo + hi)
        g = int(np.argmin(np.asarray(A) + np.asarray(s) * mid))
        ylo = A[g] + s[g] * lo
        yhi = A[g] + s[g] * hi
        if ylo <= b:
            upper = lo
            break
        if yhi <= b:
            upper = lo + (ylo - b) / (ylo - yhi) * (hi - lo)
            break
    pts = [x for x in pts if x < upper] + [upper]

    status = STATUS_OK
    for attempt, tolscale in enumerate((1.0, 1e-2)):
        tol = max(min(epsabs * tolscale, epsrel * tolscale * t_usat), 1e-300)
        integral, _, ok = adaptive_gk(f, pts, tol)
        raw = float(special.chdtrc(k, upper)) + integral
        if not ok:
            status = STATUS_QUAD_FAIL
            break
        if 0.0 <= raw <= 1.0 and math.isfinite(raw):
            break
    if status != STATUS_OK:
        return math.nan, raw, status
    p = min(max(raw, t_usat), min(1.0, G * t_usat))
    return p, raw, STATUS_OK


def usat_core(c, t_m, t_s, grid):
    """Per-variant USAT: returns ``(p_omegas, t_usat, omega_index, p_usat, status)``."""
    c = np.asarray(c, dtype=float)
    k = c.shape[0]
    G = len(grid)
    p_om = np.empty(G)
    abd = ssu_abd(c)
    if abd is None:
        p_om[:] = math.nan
        return p_om, math.nan, -1, math.nan, STATUS_DEGENERATE
    params = []
    for g in range(G):
        w = grid[g]
        pr = liu_params(w + (1.0 - w) * c)
        if pr is None:
            p_om[:] = math.nan
            return p_om, math.nan, -1, math.nan, STATUS_DEGENERATE
        params.append(pr)
        p_om[g] = liu_sf(*pr, w * t_m + (1.0 - w) * t_s)
    gstar = int(np.argmin(p_om))
    t_usat = float(p_om[gstar])
    if k == 1:
        return p_om, t_usat, gstar, float(special.chdtrc(1, t_m)), STATUS_OK
    p, _, st = usat_pvalue(t_usat, params, grid, abd, k)
    return p_om, t_usat, gstar, p, st


def usat_batch(base_eigs, xtx, t_m, t_s, grid):
    """Vector of variants sharing ``base_eigs``; each variant's eigenvalues are ``xtx * base_eigs``."""
    m = len(xtx)
    t_usat = np.empty(m)
    gstar = np.empty(m, dtype=np.int64)
    p_usat = np.empty(m)
    status = np.empty(m, dtype=np.int64)
    base = np.asarray(base_eigs, dtype=float)
    for i in range(m):
        _, t, g, p, st = usat_core(xtx[i] * base, t_m[i], t_s[i], grid)
        t_usat[i], gstar[i], p_usat[i], status[i] = t, g, p, st
    return t_usat, gstar, p_usat, status


def min_p_batch(base_eigs, xtx, t_m, t_s, grid):
    """``t_usat`` only (minimum Liu p over the grid) for many variants."""
    m = len(xtx)
    out = np.empty(m)
    base = np.asarray(base_eigs, dtype=float)
    for i in range(m):
        c = xtx[i] * base
        best = 1.0
        for w in grid:
            pr = liu_params(w + (1.0 - w) * c)
            if pr is None:
                best = math.nan
                break
            best = min(best, liu_sf(*pr, w * t_m[i] + (1.0 - w) * t_s[i]))
        out[i] = best
    return out


_TOKEN_OK = set(b"0123456789.eE+-")


def parse_dosages(tail, n, out):
    """Parse tab-separated dosages (``NA`` = missing) into ``out``.

    Returns the number of missing entries, or a negative code:
    ``-1`` bad token, ``-2`` wrong field count, ``-3`` value outside [0, 2].
    The second return value is the offending field index (or -1).
    """
    fields = tail.rstrip(b"\r\n").split(b"\t")
    if len(fields) != n:
        return -2, len(fields)
    missing = 0
    for i, tok in enumerate(fields):
        if tok == b"NA":
            out[i] = math.nan
            missing += 1
            continue
        if not tok or not set(tok) <= _TOKEN_OK:
            return -1, i
        try:
            v = float(tok)
        except ValueError:
            return -1, i
        if not 0.0 <= v <= 2.0:
            return -3, i
        out[i] = v
    return missing, -1


def chi2_sf_array(df, x):
    return special.chdtrc(df, np.asarray(x, dtype=float))


def chi2_isf_scalar(df, prob):
    return float(special.chdtri(df, prob))
