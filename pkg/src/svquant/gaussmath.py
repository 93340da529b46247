"""Standard normal special functions.

All functions accept scalars or numpy arrays and broadcast. Infinite
arguments are handled exactly; region boundaries of the outermost codewords
are genuinely +/- infinity and are passed through as such.
"""
import numpy as np
from scipy import special

from .errors import DomainError

_SQRT_2PI = np.sqrt(2.0 * np.pi)
_TWO_PI = 2.0 * np.pi

# 20-point Gauss-Legendre rule, positive half (the rule is symmetric).
_gl_x, _gl_w = np.polynomial.legendre.leggauss(20)
_GL_X = _gl_x[_gl_x > 0]
_GL_W = _gl_w[_gl_x > 0]
del _gl_x, _gl_w


def _out(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def normal_pdf(z):
    z = np.asarray(z, dtype=float)
    return _out(np.exp(-0.5 * z * z) / _SQRT_2PI)


def normal_cdf(z):
    """Phi(z), accurate to double precision in both tails (erfc based)."""
    return _out(special.ndtr(np.asarray(z, dtype=float)))


def normal_inv_cdf(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)) or np.any(np.isnan(p)):
        raise DomainError("normal_inv_cdf requires 0 < p < 1")
    return _out(special.ndtri(p))


def lower_partial_expectation(z):
    """E[Z 1{Z < z}] = -phi(z)."""
    return _out(-np.asarray(normal_pdf(z), dtype=float))


def lower_second_moment(z):
    """E[Z^2 1{Z < z}] = Phi(z) - z phi(z)."""
    z = np.asarray(z, dtype=float)
    with np.errstate(invalid="ignore"):
        zpdf = np.where(np.isfinite(z), z * np.asarray(normal_pdf(z)), 0.0)
    return _out(special.ndtr(z) - zpdf)


def _bvn_upper(h, k, r):
    """P(X > h, Y > k) for finite h, k (1-D arrays) and |r| <= 1.

    Genz's refinement of the Drezner-Wesolowsky method.
    """
    out = np.empty_like(h)
    low = np.abs(r) < 0.925

    if np.any(low):
        hl, kl, rl = h[low], k[low], r[low]
        hk = (hl * kl)[:, None]
        hs = ((hl * hl + kl * kl) / 2.0)[:, None]
        asr = (np.arcsin(rl) / 2.0)[:, None]
        total = np.zeros_like(hl)
        for sign in (-1.0, 1.0):
            sn = np.sin(asr * (1.0 + sign * _GL_X))
            total += np.exp((sn * hk - hs) / (1.0 - sn * sn)) @ _GL_W
        out[low] = total * asr[:, 0] / _TWO_PI + special.ndtr(-hl) * special.ndtr(-kl)

    high = ~low
    if np.any(high):
        hh, kh, rh = h[high], k[high].copy(), r[high]
        neg = rh < 0
        kh[neg] = -kh[neg]
        hk = hh * kh
        bvn = np.zeros_like(hh)
        inner = np.abs(rh) < 1.0
        if np.any(inner):
            hi, ki, ri, hki = hh[inner], kh[inner], rh[inner], hk[inner]
            as_ = (1.0 - ri) * (1.0 + ri)
            a = np.sqrt(as_)
            bs = (hi - ki) ** 2
            c = (4.0 - hki) / 8.0
            d = (12.0 - hki) / 80.0
            asr = -(bs / as_ + hki) / 2.0
            val = np.where(
                asr > -100.0,
                a * np.exp(np.maximum(asr, -100.0))
                * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_),
                0.0,
            )
            b = np.sqrt(bs)
            sp = _SQRT_2PI * special.ndtr(-b / a)
            tail = np.exp(-np.minimum(hki, 100.0) / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            val = val - np.where(hki > -100.0, tail, 0.0)

            a2 = (a / 2.0)[:, None]
            nodes = np.concatenate([1.0 - _GL_X, 1.0 + _GL_X])
            weights = np.concatenate([_GL_W, _GL_W])
            xs = (a2 * nodes) ** 2
            rs = np.sqrt(1.0 - xs)
            asr2 = -(bs[:, None] / xs + hki[:, None]) / 2.0
            ok = asr2 > -100.0
            sp2 = 1.0 + c[:, None] * xs * (1.0 + 5.0 * d[:, None] * xs)
            ep = np.exp(-(hki[:, None] / 2.0) * xs / (1.0 + rs) ** 2) / rs
            terms = np.where(ok, np.exp(np.where(ok, asr2, 0.0)) * (sp2 - ep), 0.0)
            bvn[inner] = (a2[:, 0] * (terms @ weights) - val) / _TWO_PI

        pos = rh > 0
        bvn[pos] += special.ndtr(-np.maximum(hh[pos], kh[pos]))
        negs = ~pos
        hn, kn = hh[negs], kh[negs]
        lim = np.where(hn < 0, special.ndtr(kn) - special.ndtr(hn), special.ndtr(-hn) - special.ndtr(-kn))
        bvn[negs] = np.where(hn >= kn, -bvn[negs], lim - bvn[negs])
        out[high] = bvn

    return np.clip(out, 0.0, 1.0)


def bivariate_normal_cdf(x, y, rho):
    """P(X <= x, Y <= y) for standard normals with correlation rho.

    Arguments broadcast against each other; +/-inf are allowed for x and y.
    """
    x, y, rho = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(y, dtype=float), np.asarray(rho, dtype=float)
    )
    if np.any(np.abs(rho) > 1.0) or np.any(np.isnan(rho)):
        raise DomainError("bivariate_normal_cdf requires |rho| <= 1")
    shape = x.shape
    x, y, rho = x.ravel(), y.ravel(), rho.ravel()
    out = np.empty(x.shape)

    dead = (x == -np.inf) | (y == -np.inf)
    x_top = (x == np.inf) & ~dead
    y_top = (y == np.inf) & ~dead & ~x_top
    finite = ~(dead | x_top | y_top)

    out[dead] = 0.0
    out[x_top] = special.ndtr(y[x_top])
    out[y_top] = special.ndtr(x[y_top])
    if np.any(finite):
        out[finite] = _bvn_upper(-x[finite], -y[finite], rho[finite])
    return _out(out.reshape(shape))


def _check_reflection_domain(y, ybar):
    if np.any(y < ybar):
        raise DomainError("reflected functions are defined only for y >= ybar")


def _image(y, ybar):
    # 2*ybar - y, with the convention that the image of +inf is -inf.
    with np.errstate(invalid="ignore"):
        img = 2.0 * ybar - y
    return np.where(np.isnan(img), -np.inf, img)


def reflected_pdf(y, ybar):
    """Density of a standard normal reflected at ybar, on [ybar, inf)."""
    y, ybar = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(ybar, dtype=float))
    _check_reflection_domain(y, ybar)
    return _out(np.asarray(normal_pdf(y)) + np.asarray(normal_pdf(_image(y, ybar))))


def reflected_cdf(y, ybar):
    y, ybar = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(ybar, dtype=float))
    _check_reflection_domain(y, ybar)
    return _out(special.ndtr(y) - special.ndtr(_image(y, ybar)))


def _times(a, b):
    # a * b with 0 * inf := 0
    return np.where(b == 0.0, 0.0, a * np.where(b == 0.0, 1.0, b))


def reflected_lpe(y, ybar):
    """Integral of z times the reflected density over [ybar, y]."""
    y, ybar = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(ybar, dtype=float))
    _check_reflection_domain(y, ybar)
    img = _image(y, ybar)
    value = (
        -np.asarray(normal_pdf(y))
        - np.asarray(normal_pdf(img))
        - _times(2.0 * ybar, special.ndtr(img))
    )
    # subtract the same expression at y = ybar so the integral starts there
    at_start = -2.0 * np.asarray(normal_pdf(ybar)) - _times(2.0 * ybar, special.ndtr(ybar))
    return _out(value - at_start)


def reflected_second_moment(y, ybar):
    """Integral of z^2 times the reflected density over [ybar, y]."""
    y, ybar = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(ybar, dtype=float))
    _check_reflection_domain(y, ybar)
    img = _image(y, ybar)
    direct = np.asarray(lower_second_moment(y)) - np.asarray(lower_second_moment(ybar))
    # image part: integral over w in [img, ybar] of (2 ybar - w)^2 phi(w)
    f0 = special.ndtr(ybar) - special.ndtr(img)
    f1 = np.asarray(normal_pdf(img)) - np.asarray(normal_pdf(ybar))
    f2 = np.asarray(lower_second_moment(ybar)) - np.asarray(lower_second_moment(img))
    image = _times(4.0 * ybar * ybar, f0) - _times(4.0 * ybar, f1) + f2
    return _out(direct + image)
