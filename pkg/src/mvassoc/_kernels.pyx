# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot paths: Liu tails/quantiles, the USAT integral, dosage parsing."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, fabs, floor, pow, INFINITY, NAN, isfinite
from libc.stdlib cimport strtod
from scipy.special.cython_special cimport chdtrc, gammaln, ndtri

cnp.import_array()

DEF MAX_GRID = 64
DEF MAX_INTERVALS = 1000
DEF MAX_ROOT_ITER = 200

STATUS_OK = 0
STATUS_QUAD_FAIL = 1
STATUS_QUANTILE_FAIL = 2
STATUS_DEGENERATE = 3

cdef double EPS = 2.220446049250313e-16
cdef double UFLOW = 2.2250738585072014e-308

cdef double XGK[8]
cdef double WGK[8]
cdef double WG[4]
XGK[:] = [0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
          0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
          0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
          0.207784955007898467600689403773245, 0.0]
WGK[:] = [0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
          0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
          0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
          0.204432940075298892414161999234649, 0.209482141084727828012999174891714]
WG[:] = [0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
         0.381830050505118944950369775488975, 0.417959183673469387755102040816327]


cdef struct LiuParams:
    double mean
    double var
    double l
    double delta


cdef struct Integrand:
    int nlines
    double A[MAX_GRID]
    double s[MAX_GRID]
    double a
    double b
    double d
    double half_k
    double log_norm
    double lg_half_d


cdef double gamma_q(double a, double x, double lg) noexcept nogil:
    """Regularized upper incomplete gamma Q(a, x), with lg = log Gamma(a).

    Series for P below x = a + 1, Lentz continued fraction above. scipy's
    igamc is an order of magnitude slower for a near 1/2 and x in (0.1, 3),
    which is where the USAT integrand spends its time.
    """
    cdef double lpre, ap, term, total, b, c, dd, h, an, delta
    cdef int i
    if x <= 0.0:
        return 1.0
    if a > 100.0:
        return chdtrc(2.0 * a, 2.0 * x)
    lpre = a * log(x) - x - lg
    if x < a + 1.0:
        ap = a
        term = 1.0 / a
        total = term
        for i in range(500):
            ap += 1.0
            term *= x / ap
            total += term
            if term < total * 1e-17:
                break
        return 1.0 - total * exp(lpre)
    if lpre < -745.0:
        return 0.0
    b = x + 1.0 - a
    c = 1e300
    dd = 1.0 / b
    h = dd
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        dd = an * dd + b
        if fabs(dd) < 1e-300:
            dd = 1e-300
        c = b + an / c
        if fabs(c) < 1e-300:
            c = 1e-300
        dd = 1.0 / dd
        delta = dd * c
        h *= delta
        if fabs(delta - 1.0) < 1e-16:
            break
    return exp(lpre) * h


cdef inline double chi2_sf(double df, double x) noexcept nogil:
    return gamma_q(0.5 * df, 0.5 * x, gammaln(0.5 * df))


cdef double chi2_isf(double df, double prob) noexcept nogil:
    """Newton on log Q from a Wilson-Hilferty start, kept inside a bracket."""
    cdef double a = 0.5 * df, lg = gammaln(a), logp = log(prob)
    cdef double h = 2.0 / (9.0 * df), z = -ndtri(prob), x, lo = 0.0, hi = INFINITY
    cdef double q, g, dens, step, xn
    cdef int it
    x = 1.0 - h + z * sqrt(h)
    x = df * x * x * x
    if not x > 0.0:
        x = df * 1e-3
    for it in range(100):
        q = gamma_q(a, 0.5 * x, lg)
        if q <= 0.0:
            hi = x
            x = 0.5 * (lo + hi)
            continue
        g = log(q) - logp
        if fabs(g) <= 1e-14:
            return x
        if g > 0.0:
            lo = x
        else:
            hi = x
        dens = exp((a - 1.0) * log(0.5 * x) - 0.5 * x - lg) * 0.5
        step = g * q / dens
        xn = x + step
        if not (lo < xn < hi):
            xn = 2.0 * x if hi == INFINITY else 0.5 * (lo + hi)
        if fabs(xn - x) <= 4.0 * EPS * x:
            return xn
        x = xn
    return x


cdef int liu_fit_c(const double* lam, int k, LiuParams* out) noexcept nogil:
    cdef double c1 = 0.0, c2 = 0.0, c3 = 0.0, c4 = 0.0, x, x2, s1, s2, a
    cdef int j
    for j in range(k):
        x = lam[j]
        x2 = x * x
        c1 += x
        c2 += x2
        c3 += x2 * x
        c4 += x2 * x2
    if not c2 > 0.0:
        return -1
    s1 = c3 / (c2 * sqrt(c2))
    s2 = c4 / (c2 * c2)
    if s1 * s1 > s2 * (1.0 + 1e-12):
        a = 1.0 / (s1 - sqrt(s1 * s1 - s2))
        out.delta = s1 * a * a * a - a * a
        out.l = a * a - 2.0 * out.delta
    else:
        out.delta = 0.0
        out.l = 1.0 / (s1 * s1)
    out.mean = c1
    out.var = 2.0 * c2
    return 0


cdef double ncx2_sf_c(double df, double nc, double x) noexcept nogil:
    cdef double lam = 0.5 * nc, logw0, logw, w, total = 0.0, term
    cdef long j0, j, limit
    if x <= 0.0:
        return 1.0
    if lam <= 0.0:
        return chdtrc(df, x)
    j0 = <long>floor(lam)
    logw0 = -lam + j0 * log(lam) - gammaln(j0 + 1.0)
    logw = logw0
    j = j0
    limit = j0 + 2000 + <long>(50.0 * sqrt(lam))
    while j <= limit:
        w = exp(logw)
        total += w * chdtrc(df + 2.0 * j, x)
        if j > j0 and (w == 0.0 or w < 1e-17 * total):
            break
        j += 1
        logw += log(lam) - log(<double>j)
    logw = logw0
    j = j0
    while j > 0:
        logw -= log(lam) - log(<double>j)
        j -= 1
        term = exp(logw) * chdtrc(df + 2.0 * j, x)
        total += term
        if term < 1e-17 * (total if total > UFLOW else UFLOW):
            break
    if total < 0.0:
        return 0.0
    if total > 1.0:
        return 1.0
    return total


cdef inline double liu_sf_c(const LiuParams* p, double t) noexcept nogil:
    cdef double x = (t - p.mean) / sqrt(p.var) * sqrt(2.0 * (p.l + 2.0 * p.delta)) + p.l + p.delta
    cdef double s
    if x <= 0.0:
        return 1.0
    if p.delta == 0.0:
        s = chi2_sf(p.l, x)
    else:
        s = ncx2_sf_c(p.l, p.delta, x)
    if s < 0.0:
        return 0.0
    if s > 1.0:
        return 1.0
    return s


cdef inline double log_gap(const LiuParams* p, double t, double logp) noexcept nogil:
    cdef double s = liu_sf_c(p, t)
    if s <= 0.0:
        return -1e300
    return log(s) - logp


cdef int illinois(const LiuParams* p, double logp, double lo, double hi,
                  double glo, double ghi, double* root) noexcept nogil:
    cdef int side = 0, it
    cdef double mid, gm
    for it in range(MAX_ROOT_ITER):
        if fabs(glo) < 1e250 and fabs(ghi) < 1e250 and it % 4 != 3:
            mid = (lo * ghi - hi * glo) / (ghi - glo)
            if not (lo < mid < hi):
                mid = 0.5 * (lo + hi)
        else:
            mid = 0.5 * (lo + hi)
        gm = log_gap(p, mid, logp)
        if fabs(gm) <= 1e-12 or hi - lo <= 4.0 * EPS * fabs(mid):
            root[0] = mid
            return 0
        if gm > 0.0:
            lo = mid
            glo = gm
            if side == 1:
                ghi *= 0.5
            side = 1
        else:
            hi = mid
            ghi = gm
            if side == -1:
                glo *= 0.5
            side = -1
    root[0] = NAN
    return 2


cdef int refine_quantile(const LiuParams* p, double prob, double guess, double* root) noexcept nogil:
    cdef double logp = log(prob), sd = sqrt(p.var)
    cdef double g0, step, lo, hi, glo, ghi
    cdef int it = 0
    g0 = log_gap(p, guess, logp)
    if g0 == 0.0:
        root[0] = guess
        return 0
    step = 1e-6 * (fabs(guess) if fabs(guess) > sd else sd)
    if g0 > 0.0:
        lo = guess
        glo = g0
        hi = guess + step
        ghi = log_gap(p, hi, logp)
        while ghi > 0.0:
            it += 1
            if it > MAX_ROOT_ITER:
                root[0] = NAN
                return 2
            lo = hi
            glo = ghi
            step *= 4.0
            hi = hi + step
            ghi = log_gap(p, hi, logp)
    else:
        hi = guess
        ghi = g0
        lo = guess - step
        if lo < 0.0:
            lo = 0.0
        glo = log_gap(p, lo, logp)
        while glo < 0.0:
            it += 1
            if lo <= 0.0:
                root[0] = 0.0
                return 0
            if it > MAX_ROOT_ITER:
                root[0] = NAN
                return 2
            hi = lo
            ghi = glo
            step *= 4.0
            lo = lo - step
            if lo < 0.0:
                lo = 0.0
            glo = log_gap(p, lo, logp)
    return illinois(p, logp, lo, hi, glo, ghi, root)


cdef int liu_isf_c(const LiuParams* p, double prob, double* root) noexcept nogil:
    cdef double guess, s
    if prob >= 1.0:
        root[0] = 0.0
        return 0
    if prob <= 0.0:
        root[0] = INFINITY
        return 0
    if p.delta == 0.0:
        guess = p.mean + sqrt(p.var) * (chi2_isf(p.l, prob) - p.l) / sqrt(2.0 * p.l)
        if isfinite(guess):
            s = liu_sf_c(p, guess)
            if fabs(s - prob) <= 1e-12 * prob:
                root[0] = guess
                return 0
        else:
            guess = p.mean
    else:
        guess = p.mean
    if guess < 0.0:
        guess = 0.0
    return refine_quantile(p, prob, guess, root)


cdef inline double envelope(const Integrand* f, double x) noexcept nogil:
    cdef double y = f.A[0] + f.s[0] * x, v
    cdef int g
    for g in range(1, f.nlines):
        v = f.A[g] + f.s[g] * x
        if v < y:
            y = v
    return y


cdef inline double integrand(const Integrand* f, double x) noexcept nogil:
    cdef double y = envelope(f, x)
    cdef double arg = (y - f.b) / f.a
    cdef double surv = gamma_q(0.5 * f.d, 0.5 * arg, f.lg_half_d) if arg > 0.0 else 1.0
    cdef double dens
    if x <= 0.0:
        if f.half_k == 1.0:
            dens = 0.5
        elif f.half_k > 1.0:
            dens = 0.0
        else:
            dens = INFINITY
    else:
        dens = exp((f.half_k - 1.0) * log(x) - 0.5 * x - f.log_norm)
    return surv * dens


cdef void gk15(const Integrand* f, double lo, double hi, double* result, double* abserr) noexcept nogil:
    cdef double centr = 0.5 * (lo + hi), hlgth = 0.5 * (hi - lo), dhlgth = fabs(hlgth)
    cdef double fc = integrand(f, centr)
    cdef double resg = fc * WG[3], resk = fc * WGK[7], resabs = fabs(resk)
    cdef double fv1[7]
    cdef double fv2[7]
    cdef double absc, f1, f2, reskh, resasc, err
    cdef int j, jtw, jtwm1
    for j in range(3):
        jtw = 2 * j + 1
        absc = hlgth * XGK[jtw]
        f1 = integrand(f, centr - absc)
        f2 = integrand(f, centr + absc)
        fv1[jtw] = f1
        fv2[jtw] = f2
        resg += WG[j] * (f1 + f2)
        resk += WGK[jtw] * (f1 + f2)
        resabs += WGK[jtw] * (fabs(f1) + fabs(f2))
    for j in range(4):
        jtwm1 = 2 * j
        absc = hlgth * XGK[jtwm1]
        f1 = integrand(f, centr - absc)
        f2 = integrand(f, centr + absc)
        fv1[jtwm1] = f1
        fv2[jtwm1] = f2
        resk += WGK[jtwm1] * (f1 + f2)
        resabs += WGK[jtwm1] * (fabs(f1) + fabs(f2))
    reskh = resk * 0.5
    resasc = WGK[7] * fabs(fc - reskh)
    for j in range(7):
        resasc += WGK[j] * (fabs(fv1[j] - reskh) + fabs(fv2[j] - reskh))
    result[0] = resk * hlgth
    resabs *= dhlgth
    resasc *= dhlgth
    err = fabs((resk - resg) * hlgth)
    if resasc != 0.0 and err != 0.0:
        err = resasc * min(1.0, pow(200.0 * err / resasc, 1.5))
    if resabs > UFLOW / (50.0 * EPS):
        err = max(50.0 * EPS * resabs, err)
    abserr[0] = err


cdef int adaptive_gk(const Integrand* f, const double* pts, int npts, double tol,
                     double* value) noexcept nogil:
    cdef double lo[MAX_INTERVALS]
    cdef double hi[MAX_INTERVALS]
    cdef double r[MAX_INTERVALS]
    cdef double e[MAX_INTERVALS]
    cdef int n = 0, i, imax
    cdef double total_r, total_e, emax, mid
    for i in range(npts - 1):
        if pts[i + 1] > pts[i]:
            lo[n] = pts[i]
            hi[n] = pts[i + 1]
            gk15(f, lo[n], hi[n], &r[n], &e[n])
            n += 1
    if n == 0:
        value[0] = 0.0
        return 0
    while True:
        total_r = 0.0
        total_e = 0.0
        imax = 0
        emax = -1.0
        for i in range(n):
            total_r += r[i]
            total_e += e[i]
            if e[i] > emax:
                emax = e[i]
                imax = i
        value[0] = total_r
        if total_e <= tol:
            return 0
        if n >= MAX_INTERVALS:
            return 1
        mid = 0.5 * (lo[imax] + hi[imax])
        if not (lo[imax] < mid < hi[imax]):
            return 1
        lo[n] = mid
        hi[n] = hi[imax]
        hi[imax] = mid
        gk15(f, lo[imax], hi[imax], &r[imax], &e[imax])
        gk15(f, lo[n], hi[n], &r[n], &e[n])
        n += 1


cdef int envelope_kinks_c(const Integrand* f, double upper, double* kinks) noexcept nogil:
    cdef int m = f.nlines, cur = 0, g, nxt, nk = 0
    cdef double x = 0.0, best_x, xi
    for g in range(1, m):
        if f.A[g] < f.A[cur] or (f.A[g] == f.A[cur] and f.s[g] < f.s[cur]):
            cur = g
    while True:
        best_x = upper
        nxt = -1
        for g in range(m):
            if f.s[g] < f.s[cur]:
                xi = (f.A[g] - f.A[cur]) / (f.s[cur] - f.s[g])
                if (x <= xi < best_x) or (xi == best_x and nxt >= 0 and f.s[g] < f.s[nxt]):
                    best_x = xi
                    nxt = g
        if nxt < 0 or best_x >= upper:
            break
        if best_x > x:
            kinks[nk] = best_x
            nk += 1
        x = best_x
        cur = nxt
    return nk


cdef int usat_pvalue_c(double t_usat, const LiuParams* params, const double* grid, int G,
                       double a, double b, double d, int k, double epsabs, double epsrel,
                       double* p_out, double* raw_out) noexcept nogil:
    cdef Integrand f
    cdef double qs[MAX_GRID]
    cdef double pts[MAX_GRID + 2]
    cdef double kinks[MAX_GRID]
    cdef double q1, upper, ylo, yhi, mid, tol, integral, raw = NAN, hi_clamp
    cdef int g, st, nk, npts, i, attempt, gbest
    cdef double tolscale
    if t_usat <= 0.0:
        p_out[0] = 0.0
        raw_out[0] = 0.0
        return 0
    if t_usat >= 1.0:
        p_out[0] = 1.0
        raw_out[0] = 1.0
        return 0
    for g in range(G):
        st = liu_isf_c(&params[g], t_usat, &qs[g])
        if st != 0:
            p_out[0] = NAN
            raw_out[0] = NAN
            return st
    q1 = qs[G - 1]
    f.nlines = G - 1
    for g in range(G - 1):
        f.A[g] = qs[g] / (1.0 - grid[g])
        f.s[g] = -grid[g] / (1.0 - grid[g])
    f.a = a
    f.b = b
    f.d = d
    f.lg_half_d = gammaln(0.5 * d)
    f.half_k = 0.5 * k
    f.log_norm = f.half_k * log(2.0) + gammaln(f.half_k)

    nk = envelope_kinks_c(&f, q1, kinks)
    pts[0] = 0.0
    for i in range(nk):
        pts[i + 1] = kinks[i]
    pts[nk + 1] = q1
    npts = nk + 2
    upper = q1
    for i in range(npts - 1):
        mid = 0.5 * (pts[i] + pts[i + 1])
        gbest = 0
        for g in range(1, f.nlines):
            if f.A[g] + f.s[g] * mid < f.A[gbest] + f.s[gbest] * mid:
                gbest = g
        ylo = f.A[gbest] + f.s[gbest] * pts[i]
        yhi = f.A[gbest] + f.s[gbest] * pts[i + 1]
        if ylo <= b:
            upper = pts[i]
            break
        if yhi <= b:
            upper = pts[i] + (ylo - b) / (ylo - yhi) * (pts[i + 1] - pts[i])
            break
    i = 0
    while i < npts and pts[i] < upper:
        i += 1
    pts[i] = upper
    npts = i + 1

    st = 0
    for attempt in range(2):
        tolscale = 1.0 if attempt == 0 else 1e-2
        tol = min(epsabs * tolscale, epsrel * tolscale * t_usat)
        if tol < 1e-300:
            tol = 1e-300
        st = adaptive_gk(&f, pts, npts, tol, &integral)
        raw = chdtrc(<double>k, upper) + integral
        if st != 0:
            break
        if raw >= 0.0 and raw <= 1.0 and isfinite(raw):
            break
    raw_out[0] = raw
    if st != 0:
        p_out[0] = NAN
        return 1
    hi_clamp = G * t_usat
    if hi_clamp > 1.0:
        hi_clamp = 1.0
    if raw < t_usat:
        raw = t_usat
    if raw > hi_clamp:
        raw = hi_clamp
    p_out[0] = raw
    return 0


cdef int usat_core_c(const double* c, int k, double t_m, double t_s, const double* grid, int G,
                     double* p_om, double* lam, double* t_out, int* g_out, double* p_out) noexcept nogil:
    cdef LiuParams params[MAX_GRID]
    cdef double c1 = 0.0, c2 = 0.0, c3 = 0.0, a, b, d, w, best, raw
    cdef int j, g, gstar
    for j in range(k):
        c1 += c[j]
        c2 += c[j] * c[j]
        c3 += c[j] * c[j] * c[j]
    if not c3 > 0.0:
        t_out[0] = NAN
        g_out[0] = -1
        p_out[0] = NAN
        return 3
    a = c3 / c2
    b = c1 - c2 * c2 / c3
    d = c2 * c2 * c2 / (c3 * c3)
    gstar = 0
    best = 2.0
    for g in range(G):
        w = grid[g]
        for j in range(k):
            lam[j] = w + (1.0 - w) * c[j]
        if liu_fit_c(lam, k, &params[g]) != 0:
            t_out[0] = NAN
            g_out[0] = -1
            p_out[0] = NAN
            return 3
        p_om[g] = liu_sf_c(&params[g], w * t_m + (1.0 - w) * t_s)
        if p_om[g] < best:
            best = p_om[g]
            gstar = g
    t_out[0] = best
    g_out[0] = gstar
    if k == 1:
        p_out[0] = chdtrc(1.0, t_m)
        return 0
    return usat_pvalue_c(best, params, grid, G, a, b, d, k, 1e-12, 1e-10, p_out, &raw)


# ---------------------------------------------------------------- Python API

def liu_params(eigs):
    cdef double[::1] lam = np.ascontiguousarray(eigs, dtype=np.float64)
    cdef LiuParams p
    if liu_fit_c(&lam[0], lam.shape[0], &p) != 0:
        return None
    return p.mean, p.var, p.l, p.delta


def ncx2_sf(double df, double nc, double x):
    return ncx2_sf_c(df, nc, x)


def liu_sf(double mean, double var, double l, double delta, double t):
    cdef LiuParams p
    p.mean = mean
    p.var = var
    p.l = l
    p.delta = delta
    return liu_sf_c(&p, t)


def liu_isf(double mean, double var, double l, double delta, double prob):
    cdef LiuParams p
    cdef double root
    cdef int st
    p.mean = mean
    p.var = var
    p.l = l
    p.delta = delta
    st = liu_isf_c(&p, prob, &root)
    return root, st


def liu_sf_array(double mean, double var, double l, double delta, t):
    cdef double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    out = np.empty(tv.shape[0])
    cdef double[::1] ov = out
    cdef LiuParams p
    cdef Py_ssize_t i
    p.mean = mean
    p.var = var
    p.l = l
    p.delta = delta
    with nogil:
        for i in range(tv.shape[0]):
            ov[i] = liu_sf_c(&p, tv[i])
    return out


def ssu_abd(c):
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double c1 = 0.0, c2 = 0.0, c3 = 0.0
    cdef Py_ssize_t j
    for j in range(cv.shape[0]):
        c1 += cv[j]
        c2 += cv[j] * cv[j]
        c3 += cv[j] * cv[j] * cv[j]
    if not c3 > 0.0:
        return None
    return c3 / c2, c1 - c2 * c2 / c3, c2 ** 3 / (c3 * c3)


def usat_pvalue(double t_usat, params, grid, abd, int k, double epsabs=1e-12, double epsrel=1e-10):
    cdef double[::1] gv = np.ascontiguousarray(grid, dtype=np.float64)
    cdef int G = gv.shape[0], g, st
    cdef LiuParams ps[MAX_GRID]
    cdef double p, raw
    if G > MAX_GRID:
        raise ValueError("weight grid too large")
    for g in range(G):
        ps[g].mean, ps[g].var, ps[g].l, ps[g].delta = params[g]
    a, b, d = abd
    st = usat_pvalue_c(t_usat, ps, &gv[0], G, a, b, d, k, epsabs, epsrel, &p, &raw)
    return p, raw, st


def usat_core(c, double t_m, double t_s, grid):
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(grid, dtype=np.float64)
    cdef int k = cv.shape[0], G = gv.shape[0], g_out, st
    if G > MAX_GRID:
        raise ValueError("weight grid too large")
    p_om = np.empty(G)
    cdef double[::1] pv = p_om
    cdef double[::1] lam = np.empty(k)
    cdef double t_out, p_out
    st = usat_core_c(&cv[0], k, t_m, t_s, &gv[0], G, &pv[0], &lam[0], &t_out, &g_out, &p_out)
    if st == 3:
        p_om[:] = np.nan
    return p_om, t_out, g_out, p_out, st


def usat_batch(base_eigs, xtx, t_m, t_s, grid):
    cdef double[::1] base = np.ascontiguousarray(base_eigs, dtype=np.float64)
    cdef double[::1] xv = np.ascontiguousarray(xtx, dtype=np.float64)
    cdef double[::1] tm = np.ascontiguousarray(t_m, dtype=np.float64)
    cdef double[::1] ts = np.ascontiguousarray(t_s, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(grid, dtype=np.float64)
    cdef Py_ssize_t m = xv.shape[0], i
    cdef int k = base.shape[0], G = gv.shape[0], j, g_out
    if G > MAX_GRID:
        raise ValueError("weight grid too large")
    t_usat = np.empty(m)
    gstar = np.empty(m, dtype=np.int64)
    p_usat = np.empty(m)
    status = np.empty(m, dtype=np.int64)
    cdef double[::1] tv = t_usat
    cdef long long[::1] gsv = gstar
    cdef double[::1] pv = p_usat
    cdef long long[::1] sv = status
    cdef double[::1] c = np.empty(k)
    cdef double[::1] lam = np.empty(k)
    cdef double[::1] p_om = np.empty(G)
    cdef double t_out, p_out
    with nogil:
        for i in range(m):
            for j in range(k):
                c[j] = xv[i] * base[j]
            sv[i] = usat_core_c(&c[0], k, tm[i], ts[i], &gv[0], G, &p_om[0], &lam[0],
                                &t_out, &g_out, &p_out)
            tv[i] = t_out
            gsv[i] = g_out
            pv[i] = p_out
    return t_usat, gstar, p_usat, status


def min_p_batch(base_eigs, xtx, t_m, t_s, grid):
    cdef double[::1] base = np.ascontiguousarray(base_eigs, dtype=np.float64)
    cdef double[::1] xv = np.ascontiguousarray(xtx, dtype=np.float64)
    cdef double[::1] tm = np.ascontiguousarray(t_m, dtype=np.float64)
    cdef double[::1] ts = np.ascontiguousarray(t_s, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(grid, dtype=np.float64)
    cdef Py_ssize_t m = xv.shape[0], i
    cdef int k = base.shape[0], G = gv.shape[0], j, g
    cdef LiuParams p
    cdef double w, best, s
    out = np.empty(m)
    cdef double[::1] ov = out
    cdef double[::1] lam = np.empty(k)
    with nogil:
        for i in range(m):
            best = 1.0
            for g in range(G):
                w = gv[g]
                for j in range(k):
                    lam[j] = w + (1.0 - w) * xv[i] * base[j]
                if liu_fit_c(&lam[0], k, &p) != 0:
                    best = NAN
                    break
                s = liu_sf_c(&p, w * tm[i] + (1.0 - w) * ts[i])
                if s < best:
                    best = s
            ov[i] = best
    return out


cdef inline bint token_char(char ch) noexcept nogil:
    return (ch >= 48 and ch <= 57) or ch == 46 or ch == 101 or ch == 69 or ch == 43 or ch == 45


def parse_dosages(bytes tail, Py_ssize_t n, double[::1] out):
    """Parse tab-separated dosages into ``out``; same return contract as the Python version."""
    cdef const char* s = tail
    cdef Py_ssize_t length = len(tail), pos = 0, start, field = 0, missing = 0, j
    cdef char* endp
    cdef double v
    cdef Py_ssize_t nfields = 1
    while length > 0 and (s[length - 1] == 10 or s[length - 1] == 13):
        length -= 1
    for j in range(length):
        if s[j] == 9:
            nfields += 1
    if nfields != n:
        return -2, nfields
    while True:
        start = pos
        while pos < length and s[pos] != 9:
            pos += 1
        if pos - start == 2 and s[start] == 78 and s[start + 1] == 65:
            out[field] = NAN
            missing += 1
        else:
            if pos == start:
                return -1, field
            for j in range(start, pos):
                if not token_char(s[j]):
                    return -1, field
            v = strtod(s + start, &endp)
            if endp != s + pos:
                return -1, field
            if not (v >= 0.0 and v <= 2.0):
                return -3, field
            out[field] = v
        field += 1
        if pos >= length:
            break
        pos += 1
    return missing, -1


def chi2_sf_array(double df, x):
    """Chi-square survival function of ``x`` via the in-house incomplete gamma."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = chi2_sf(df, xv[i])
    return out.reshape(np.shape(x))


def chi2_isf_scalar(double df, double prob):
    return chi2_isf(df, prob)
