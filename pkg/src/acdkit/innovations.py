"""Unit-mean innovation families for duration models.

All four families are carried on one generalized-gamma code path with
density

    p(x; a, d, m) = m * x**(d-1) / (a**d * Gamma(d/m)) * exp(-(x/a)**m)

and the scale pinned analytically so that E(X) = 1:

    a = Gamma(d/m) / Gamma((d+1)/m).

Special cases: Weibull has d = m = k (scale 1/Gamma(1+1/k)), the gamma
family has m = 1 (scale 1/d), and the exponential is d = m = 1.  Because
the special cases share the generic path, their reductions are exact in
floating point, not merely close.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from .errors import DomainError, ParameterError

EXPONENTIAL = "exponential"
WEIBULL = "weibull"
GAMMA = "gamma"
GENGAMMA = "gengamma"

_SHAPE_NAMES = {
    EXPONENTIAL: (),
    WEIBULL: ("k",),
    GAMMA: ("d",),
    GENGAMMA: ("d", "m"),
}


@dataclass(frozen=True)
class Innovation:
    """A unit-mean innovation distribution on the positive half-line."""

    variant: str
    d: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        if self.variant not in _SHAPE_NAMES:
            raise ParameterError(f"unknown innovation family {self.variant!r}")
        if not (self.d > 0 and self.m > 0):
            raise ParameterError("shape parameters must be > 0")
        if self.variant == EXPONENTIAL and (self.d != 1.0 or self.m != 1.0):
            raise ParameterError("exponential family has no free shape")
        if self.variant == WEIBULL and self.d != self.m:
            raise ParameterError("weibull family requires d == m")
        if self.variant == GAMMA and self.m != 1.0:
            raise ParameterError("gamma family requires m == 1")

    # constructors

    @classmethod
    def exponential(cls) -> "Innovation":
        return cls(EXPONENTIAL, 1.0, 1.0)

    @classmethod
    def weibull(cls, k: float) -> "Innovation":
        return cls(WEIBULL, float(k), float(k))

    @classmethod
    def gamma(cls, d: float) -> "Innovation":
        return cls(GAMMA, float(d), 1.0)

    @classmethod
    def generalized_gamma(cls, d: float, m: float) -> "Innovation":
        return cls(GENGAMMA, float(d), float(m))

    @classmethod
    def from_shapes(cls, variant: str, shapes: tuple[float, ...]) -> "Innovation":
        names = _SHAPE_NAMES[variant]
        if len(shapes) != len(names):
            raise ParameterError(f"{variant} expects {len(names)} shape value(s)")
        if variant == EXPONENTIAL:
            return cls.exponential()
        if variant == WEIBULL:
            return cls.weibull(shapes[0])
        if variant == GAMMA:
            return cls.gamma(shapes[0])
        return cls.generalized_gamma(*shapes)

    # parameter bookkeeping used by the estimator

    @property
    def shape_names(self) -> tuple[str, ...]:
        return _SHAPE_NAMES[self.variant]

    @property
    def shapes(self) -> tuple[float, ...]:
        if self.variant == EXPONENTIAL:
            return ()
        if self.variant in (WEIBULL, GAMMA):
            return (self.d,)
        return (self.d, self.m)

    @property
    def n_shapes(self) -> int:
        return len(self.shape_names)

    # distribution internals

    @property
    def _gam_arg(self) -> float:
        return self.d / self.m

    @property
    def log_rate(self) -> float:
        """log(1/a) where a is the unit-mean scale."""
        return sp.gammaln((self.d + 1.0) / self.m) - sp.gammaln(self.d / self.m)

    @property
    def rate(self) -> float:
        return math.exp(self.log_rate)

    def log_density(self, x) -> np.ndarray | float:
        """Log density of the unit-mean member at x > 0."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("innovation density is defined for x > 0")
        d, m = self.d, self.m
        u = (self.rate * x) ** m
        return (
            math.log(m)
            + d * self.log_rate
            - sp.gammaln(d / m)
            + (d - 1.0) * np.log(x)
            - u
        )

    def density(self, x):
        return np.exp(self.log_density(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("innovation support is x >= 0")
        return sp.gammainc(self._gam_arg, (self.rate * x) ** self.m)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("innovation support is x >= 0")
        return sp.gammaincc(self._gam_arg, (self.rate * x) ** self.m)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise DomainError("quantile argument must lie in [0, 1]")
        u = sp.gammaincinv(self._gam_arg, q)
        return u ** (1.0 / self.m) / self.rate

    def hazard(self, x):
        """density / survival, with the x = 0 limit handled explicitly."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("hazard is defined for x >= 0")
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.empty_like(x)
        zero = x == 0.0
        if np.any(zero):
            if self.d < 1.0:
                lim = math.inf
            elif self.d == 1.0:
                lim = self.m * self.rate / math.gamma(1.0 / self.m)
            else:
                lim = 0.0
            out[zero] = lim
        pos = ~zero
        if np.any(pos):
            out[pos] = np.exp(self.log_density(x[pos])) / self.survival(x[pos])
        return float(out[0]) if scalar else out

    def mean(self) -> float:
        return 1.0

    def second_moment(self) -> float:
        """E(eps^2) of the unit-mean member."""
        d, m = self.d, self.m
        return math.exp(
            sp.gammaln((d + 2.0) / m) + sp.gammaln(d / m) - 2.0 * sp.gammaln((d + 1.0) / m)
        )

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        """Unit-mean draws: a * G**(1/m) with G ~ Gamma(d/m, 1)."""
        g = rng.gamma(self._gam_arg, size=size)
        return g ** (1.0 / self.m) / self.rate

    # serialization

    def to_dict(self) -> dict:
        out = {"variant": self.variant}
        for name, value in zip(self.shape_names, self.shapes):
            out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Innovation":
        variant = data["variant"]
        shapes = tuple(float(data[name]) for name in _SHAPE_NAMES[variant])
        return cls.from_shapes(variant, shapes)


def log_density_shape_gradient(inn: Innovation, x: np.ndarray) -> np.ndarray:
    """Partials of log density w.r.t. the family's free shapes, at fixed x.

    Returns an array of shape (n_shapes, len(x)).  The unit-mean pinning
    makes the rate a function of the shapes, so digamma terms appear.
    For the Weibull family (d = m = k) the single free shape moves d and
    m together; the partial is the sum of both generalized-gamma
    partials evaluated on the diagonal.
    """
    x = np.asarray(x, dtype=float)
    d, m = inn.d, inn.m
    if inn.variant == EXPONENTIAL:
        return np.empty((0, x.size))
    lr = inn.log_rate
    u = (inn.rate * x) ** m
    psi_d1 = sp.digamma((d + 1.0) / m)
    psi_d0 = sp.digamma(d / m)
    dlr_dd = (psi_d1 - psi_d0) / m
    dlr_dm = -((d + 1.0) * psi_d1 - d * psi_d0) / (m * m)
    logx = np.log(x)
    dlp_dd = lr + d * dlr_dd - psi_d0 / m + logx - u * (m * dlr_dd)
    dlp_dm = (
        1.0 / m
        + d * dlr_dm
        + psi_d0 * d / (m * m)
        - u * (lr + logx + m * dlr_dm)
    )
    if inn.variant == WEIBULL:
        return np.vstack([dlp_dd + dlp_dm])
    if inn.variant == GAMMA:
        return np.vstack([dlp_dd])
    return np.vstack([dlp_dd, dlp_dm])


def log_density_eps_gradient(inn: Innovation, x: np.ndarray) -> np.ndarray:
    """d/dx of the log density: (d-1)/x - m * rate**m * x**(m-1)."""
    x = np.asarray(x, dtype=float)
    return (inn.d - 1.0) / x - inn.m * inn.rate**inn.m * x ** (inn.m - 1.0)
