""" Comparison functions and stability certificates.

Class K functions are strictly increasing and zero at zero; the ones used here
are also unbounded. They enter the quantization conditions as the output
Lipschitz bound alpha, the one-step incremental stability bound beta(., 1),
the input gain gamma, and the Lyapunov data alpha1, alpha2, kappa, lambda,
gamma_hat.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import OpalError

log = logging.getLogger(__name__)

MAX_POWER = 1000


class QuantizationError(OpalError, ValueError):
    pass


class KFunction(object):
    """ Base class; subclasses implement __call__, inverse and to_dict. """

    def __call__(self, r):
        raise NotImplementedError()

    def inverse(self, s):
        raise NotImplementedError()

    def is_contractive(self, upto, samples=1000):
        """ True if k(s) < s on a grid of positive s up to upto """
        s = np.linspace(0.0, max(float(upto), 1.0), samples + 1)[1:]
        return bool(np.all(np.asarray(self(s)) < s))


class LinearK(KFunction):
    """ r -> gain * r. A zero gain is accepted as the degenerate bound. """

    def __init__(self, gain):
        if gain < 0:
            raise ValueError("K-function gain must be nonnegative")
        self.gain = float(gain)

    def __call__(self, r):
        return self.gain * np.asarray(r, dtype=np.float64) if np.ndim(r) else self.gain * float(r)

    def inverse(self, s):
        if self.gain == 0:
            raise ValueError("zero gain is not invertible")
        return s / self.gain

    def to_dict(self):
        return {'type': 'linear', 'gain': self.gain}

    def __repr__(self):
        return "LinearK(%g)" % self.gain


class PowerK(KFunction):
    """ r -> gain * r ** power """

    def __init__(self, gain, power):
        if gain <= 0 or power <= 0:
            raise ValueError("power K-function needs positive gain and power")
        self.gain = float(gain)
        self.power = float(power)

    def __call__(self, r):
        return self.gain * np.power(r, self.power)

    def inverse(self, s):
        return np.power(np.asarray(s, dtype=np.float64) / self.gain, 1.0 / self.power)

    def to_dict(self):
        return {'type': 'power', 'gain': self.gain, 'power': self.power}

    def __repr__(self):
        return "PowerK(%g, %g)" % (self.gain, self.power)


class TableK(KFunction):
    """ Piecewise-linear interpolation of (r, value) breakpoints.

    The table must start at (0, 0) and be strictly increasing in both columns.
    Beyond the last breakpoint the final segment is extended linearly.
    """

    def __init__(self, r, value):
        r = np.asarray(r, dtype=np.float64)
        value = np.asarray(value, dtype=np.float64)
        if r.ndim != 1 or r.shape != value.shape or len(r) < 2:
            raise ValueError("table K-function needs two equal-length columns of >= 2 points")
        if r[0] != 0 or value[0] != 0:
            raise ValueError("table K-function must start at (0, 0)")
        if np.any(np.diff(r) <= 0) or np.any(np.diff(value) <= 0):
            raise ValueError("table K-function must be strictly increasing")
        self.r = r
        self.value = value
        self._slope = (value[-1] - value[-2]) / (r[-1] - r[-2])

    @staticmethod
    def _extend(x, xs, ys, slope):
        x = np.asarray(x, dtype=np.float64)
        out = np.interp(x, xs, ys)
        beyond = x > xs[-1]
        out = np.where(beyond, ys[-1] + slope * (x - xs[-1]), out)
        return float(out) if out.ndim == 0 else out

    def __call__(self, r):
        return self._extend(r, self.r, self.value, self._slope)

    def inverse(self, s):
        return self._extend(s, self.value, self.r, 1.0 / self._slope)

    def to_dict(self):
        return {'type': 'table', 'r': self.r.tolist(), 'value': self.value.tolist()}

    def __repr__(self):
        return "TableK(%d points)" % len(self.r)


def k_function(spec, where="k-function"):
    """ Builds a KFunction from a number (linear gain), a dict or a KFunction.

    Dicts use {"type": "linear", "gain": g}, {"type": "power", "gain": g,
    "power": p} or {"type": "table", "r": [...], "value": [...]}.
    """
    if isinstance(spec, KFunction):
        return spec
    try:
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return LinearK(spec)
        if isinstance(spec, dict):
            kind = spec.get('type', 'linear')
            if kind == 'linear':
                return LinearK(spec['gain'])
            if kind == 'power':
                return PowerK(spec['gain'], spec['power'])
            if kind == 'table':
                return TableK(spec['r'], spec['value'])
            raise ValueError("unknown type '%s'" % kind)
    except KeyError as err:
        raise QuantizationError("%s: missing field %s" % (where, err))
    except ValueError as err:
        raise QuantizationError("%s: %s" % (where, err))
    raise QuantizationError("%s: expected a number or a table" % where)


#-------------------------------------------------------------
# Certificates


@dataclass
class ISSCertificate:
    """ Incremental ISS data: beta1(r) = beta(r, 1) and the input gain gamma. """
    beta1: KFunction
    gamma: KFunction

    def to_dict(self):
        return {'type': 'iss', 'beta1': self.beta1.to_dict(), 'gamma': self.gamma.to_dict()}


@dataclass
class LyapunovCertificate:
    """ Incremental Lyapunov data.

    alpha1(|x - x'|) <= V(x, x') <= alpha2(|x - x'|) and
    V(f(x, u), f(x', u')) <= max{kappa(V(x, x')), lam(|u - u'|)}, with
    gamma_hat bounding V(x, x') - V(x', x'') by |x - x''|. rho and sigma are
    kept as metadata only. P, when given, defines V(x, x') =
    sqrt((x - x')^T P (x - x')) for sampled falsification.
    """
    alpha1: KFunction
    alpha2: KFunction
    kappa: KFunction
    lam: KFunction
    gamma_hat: KFunction
    rho: Optional[KFunction] = None
    sigma: Optional[KFunction] = None
    P: Optional[np.ndarray] = None

    def V(self, x, y):
        if self.P is None:
            raise QuantizationError("Lyapunov certificate has no quadratic form P")
        d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
        return float(np.sqrt(max(d @ self.P @ d, 0.0)))

    def to_dict(self):
        d = {'type': 'lyapunov', 'alpha1': self.alpha1.to_dict(),
             'alpha2': self.alpha2.to_dict(), 'kappa': self.kappa.to_dict(),
             'lambda': self.lam.to_dict(), 'gamma_hat': self.gamma_hat.to_dict()}
        for k in ('rho', 'sigma'):
            if getattr(self, k) is not None:
                d[k] = getattr(self, k).to_dict()
        if self.P is not None:
            d['P'] = np.asarray(self.P).tolist()
        return d


def linear_certificate(A, B, max_power=MAX_POWER):
    """ ISS certificate for x' = A x + B u in the infinity norm.

    beta1(r) = |A| r and gamma(r) = |B| S r, with S an upper bound on the sum
    of |A^m| over m >= 0. The sum is accumulated until the first m* >= 1 with
    |A^m*| < 1; the remainder is bounded geometrically using
    |A^(k m* + i)| <= |A^m*|^k |A^i|.

    Raises QuantizationError if no such m* <= max_power exists.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise QuantizationError("certificate: A must be square with as many rows as B")
    norm = lambda M: float(np.linalg.norm(M, np.inf))
    head = 1.0  # |A^0|
    power = A.copy()
    for m in range(1, max_power + 1):
        rho = norm(power)
        if rho < 1:
            total = head / (1 - rho)
            log.info("linear certificate: m*=%d, |A^m*|=%g, sum bound %g", m, rho, total)
            return ISSCertificate(LinearK(norm(A)), LinearK(norm(B) * total))
        head += rho
        power = power @ A
    raise QuantizationError("summability not certified")
