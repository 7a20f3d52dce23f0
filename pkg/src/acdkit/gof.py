"""Unconditional distribution fitting and EDF goodness-of-fit tests.

Candidate families (exponential, Weibull, gamma, generalized Pareto,
plus the normal used for the reference critical-value table) are fitted
by maximum likelihood; the empirical distribution function statistics
D+, D-, D, V, W^2, U^2 and A^2 are computed from the probability
transforms z_i = F(x_(i)) and referred to Monte-Carlo critical values
obtained by a parametric bootstrap.  By default every bootstrap
replicate re-estimates the parameters before its statistics are
computed (the correct protocol when the null's parameters were
estimated); a literal mode that keeps the original fit is available for
comparison.  D and V are reported sqrt(n)-scaled by default, which
makes their critical values essentially sample-size free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .durations import DurationSeries
from .errors import DomainError, EstimationError, ParameterError, ValidationError

FAMILIES = ("exponential", "weibull", "gamma", "genpareto", "normal")
STAT_NAMES = ("D", "V", "W2", "U2", "A2")
DEFAULT_LEVELS = (0.05, 0.025, 0.01)
_Z_CLAMP = 1e-15


@dataclass(frozen=True)
class NullDistribution:
    """A hypothesized continuous distribution with fitted parameters.

    Parameter layout per family:
      exponential (mu,)            mean
      weibull     (scale, shape)
      gamma       (scale, shape)
      genpareto   (sigma, k)       location theta fixed, never estimated
      normal      (mu, sigma)
    """

    family: str
    params: tuple[float, ...]
    loc: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}")

    @property
    def param_names(self) -> tuple[str, ...]:
        return {
            "exponential": ("mu",),
            "weibull": ("scale", "shape"),
            "gamma": ("scale", "shape"),
            "genpareto": ("sigma", "k"),
            "normal": ("mu", "sigma"),
        }[self.family]

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "exponential":
            (mu,) = self.params
            return -np.expm1(-x / mu)
        if self.family == "weibull":
            scale, shape = self.params
            return -np.expm1(-((x / scale) ** shape))
        if self.family == "gamma":
            scale, shape = self.params
            return special.gammainc(shape, x / scale)
        if self.family == "genpareto":
            sigma, k = self.params
            y = (x - self.loc) / sigma
            if k == 0.0:
                return -np.expm1(-y)
            arg = np.maximum(1.0 + k * y, 0.0)
            out = 1.0 - arg ** (-1.0 / k)
            if k < 0:
                out = np.where(y >= -1.0 / k, 1.0, out)
            return out
        mu, sigma = self.params
        return stats.norm.cdf(x, loc=mu, scale=sigma)

    def loglik(self, x) -> float:
        x = np.asarray(x, dtype=float)
        n = x.size
        if self.family == "exponential":
            (mu,) = self.params
            return float(-n * math.log(mu) - np.sum(x) / mu)
        if self.family == "weibull":
            scale, shape = self.params
            z = x / scale
            return float(
                n * (math.log(shape) - shape * math.log(scale))
                + (shape - 1.0) * np.sum(np.log(x))
                - np.sum(z**shape)
            )
        if self.family == "gamma":
            scale, shape = self.params
            return float(
                (shape - 1.0) * np.sum(np.log(x))
                - np.sum(x) / scale
                - n * (shape * math.log(scale) + special.gammaln(shape))
            )
        if self.family == "genpareto":
            sigma, k = self.params
            y = (x - self.loc) / sigma
            if np.any(y < 0):
                return -math.inf
            if k == 0.0:
                return float(-n * math.log(sigma) - np.sum(y))
            arg = 1.0 + k * y
            if np.any(arg <= 0):
                return -math.inf
            return float(-n * math.log(sigma) - (1.0 + 1.0 / k) * np.sum(np.log(arg)))
        mu, sigma = self.params
        return float(np.sum(stats.norm.logpdf(x, loc=mu, scale=sigma)))

    def rvs(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == "exponential":
            return rng.exponential(self.params[0], size=n)
        if self.family == "weibull":
            scale, shape = self.params
            return scale * rng.weibull(shape, size=n)
        if self.family == "gamma":
            scale, shape = self.params
            return rng.gamma(shape, scale, size=n)
        if self.family == "genpareto":
            sigma, k = self.params
            u = rng.uniform(size=n)
            if k == 0.0:
                y = -np.log1p(-u)
            else:
                y = ((1.0 - u) ** (-k) - 1.0) / k
            return self.loc + sigma * y
        mu, sigma = self.params
        return rng.normal(mu, sigma, size=n)

    def to_dict(self) -> dict:
        out = {"family": self.family, "loc": self.loc}
        out.update(dict(zip(self.param_names, self.params)))
        return out


def _fit_exponential(x: np.ndarray) -> NullDistribution:
    return NullDistribution("exponential", (float(np.mean(x)),))


def _fit_normal(x: np.ndarray) -> NullDistribution:
    # sample mean and (n-1)-denominator standard deviation
    return NullDistribution("normal", (float(np.mean(x)), float(np.std(x, ddof=1))))


def _fit_weibull(x: np.ndarray) -> NullDistribution:
    logx = np.log(x)
    if np.std(logx) == 0.0:
        raise EstimationError("degenerate sample: all values equal")
    y = x / np.max(x)  # y**k stays bounded
    log_max = math.log(np.max(x))
    mean_logx = float(np.mean(logx))

    def profile_eq(k: float) -> float:
        yk = y**k
        ratio = float(np.sum(yk * logx) / np.sum(yk))
        return ratio - 1.0 / k - mean_logx

    k0 = max(1e-3, (math.pi / math.sqrt(6.0)) / float(np.std(logx, ddof=0)))
    lo, hi = k0 / 8.0, k0 * 8.0
    flo, fhi = profile_eq(lo), profile_eq(hi)
    tries = 0
    while flo * fhi > 0 and tries < 60:
        lo /= 2.0
        hi *= 2.0
        flo, fhi = profile_eq(lo), profile_eq(hi)
        tries += 1
    if flo * fhi > 0:
        raise EstimationError("weibull profile equation could not be bracketed")
    k_hat = optimize.brentq(profile_eq, lo, hi, xtol=1e-12, rtol=1e-12)
    scale = float(np.exp(log_max + math.log(np.mean(y**k_hat)) / k_hat))
    return NullDistribution("weibull", (scale, float(k_hat)))


def _fit_gamma(x: np.ndarray) -> NullDistribution:
    mean_x = float(np.mean(x))
    s = math.log(mean_x) - float(np.mean(np.log(x)))
    if s <= 0:
        raise EstimationError("degenerate sample: all values equal")

    def eq(a: float) -> float:
        return math.log(a) - special.digamma(a) - s

    a0 = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    lo, hi = a0 / 8.0, a0 * 8.0
    tries = 0
    while eq(lo) * eq(hi) > 0 and tries < 60:
        lo /= 2.0
        hi *= 2.0
        tries += 1
    if eq(lo) * eq(hi) > 0:
        raise EstimationError("gamma shape equation could not be bracketed")
    shape = optimize.brentq(eq, lo, hi, xtol=1e-12, rtol=1e-12)
    return NullDistribution("gamma", (mean_x / shape, float(shape)))


def _fit_genpareto(x: np.ndarray, loc: float = 0.0) -> NullDistribution:
    """Profile MLE over eta = k/sigma; the shape solves in closed form
    given eta, so only a one-dimensional search is needed."""
    y = x - loc
    if np.any(y < 0):
        raise DomainError("observations below the fixed location")
    n = y.size
    y_max = float(np.max(y))
    mean_y = float(np.mean(y))

    def neg_profile(eta: float) -> float:
        if eta == 0.0:
            return n * math.log(mean_y) + n
        if eta <= -1.0 / y_max:
            return math.inf
        k = float(np.mean(np.log1p(eta * y)))
        if k == 0.0 or k / eta <= 0:
            return math.inf
        return n * math.log(k / eta) + n * k + n

    # search eta on a signed log grid, then refine around the best point
    grid = np.concatenate([
        -np.geomspace(1e-8, 0.999 / y_max, 60)[::-1],
        [0.0],
        np.geomspace(1e-8, 1e4 / mean_y, 80),
    ])
    vals = np.array([neg_profile(e) for e in grid])
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(neg_profile, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    eta = float(res.x) if res.fun <= vals[i] else float(grid[i])
    if eta == 0.0:
        return NullDistribution("genpareto", (mean_y, 0.0), loc=loc)
    k = float(np.mean(np.log1p(eta * y)))
    return NullDistribution("genpareto", (k / eta, k), loc=loc)


def fit_null(sample, family: str, loc: float = 0.0) -> NullDistribution:
    """Maximum-likelihood fit of one candidate family.

    The exponential fit is closed-form (the mean); Weibull and gamma
    reduce to one-dimensional root problems; the generalized Pareto uses
    a one-dimensional profile likelihood with its location held fixed.
    """
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValidationError("empty sample")
    if family != "normal" and np.any(x - (loc if family == "genpareto" else 0.0) <= 0):
        raise DomainError(f"{family} fitting requires strictly positive observations")
    if family == "exponential":
        return _fit_exponential(x)
    if family == "weibull":
        return _fit_weibull(x)
    if family == "gamma":
        return _fit_gamma(x)
    if family == "genpareto":
        return _fit_genpareto(x, loc)
    if family == "normal":
        return _fit_normal(x)
    raise ParameterError(f"unknown family {family!r}")


def null_std_errors(null: NullDistribution, sample) -> dict:
    """Inverse observed-information standard errors at the fitted point."""
    x = np.asarray(sample, dtype=float)
    theta = np.asarray(null.params, dtype=float)
    p = theta.size

    def ll(th):
        return NullDistribution(null.family, tuple(th), loc=null.loc).loglik(x)

    H = np.empty((p, p))
    h = 1e-4 * np.maximum(1.0, np.abs(theta))
    for i in range(p):
        for j in range(p):
            tpp = theta.copy(); tpp[i] += h[i]; tpp[j] += h[j]
            tpm = theta.copy(); tpm[i] += h[i]; tpm[j] -= h[j]
            tmp = theta.copy(); tmp[i] -= h[i]; tmp[j] += h[j]
            tmm = theta.copy(); tmm[i] -= h[i]; tmm[j] -= h[j]
            H[i, j] = (ll(tpp) - ll(tpm) - ll(tmp) + ll(tmm)) / (4.0 * h[i] * h[j])
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("singular information matrix") from exc
    diag = np.clip(np.diag(cov), 0.0, None)
    return dict(zip(null.param_names, np.sqrt(diag)))


@dataclass(frozen=True)
class EdfStatistics:
    """The five EDF statistics; D family carries sqrt(n) when scaled."""

    d_plus: float
    d_minus: float
    D: float
    V: float
    W2: float
    U2: float
    A2: float
    n: int
    scaled: bool = True

    def value(self, name: str) -> float:
        return getattr(self, {"D": "D", "V": "V", "W2": "W2", "U2": "U2", "A2": "A2"}[name])

    def to_dict(self) -> dict:
        return {
            "D_plus": self.d_plus, "D_minus": self.d_minus, "D": self.D,
            "V": self.V, "W2": self.W2, "U2": self.U2, "A2": self.A2,
            "n": self.n, "sqrt_n_scaled": self.scaled,
        }


def edf_statistics_from_z(z_sorted: np.ndarray, scaled: bool = True) -> EdfStatistics:
    """Statistics from already sorted probability transforms."""
    z = np.asarray(z_sorted, dtype=float)
    n = z.size
    if n == 0:
        raise ValidationError("empty sample")
    i = np.arange(1, n + 1)
    d_plus = float(np.max(i / n - z))
    d_minus = float(np.max(z - (i - 1) / n))
    w2 = float(np.sum((z - (2 * i - 1) / (2 * n)) ** 2) + 1.0 / (12 * n))
    u2 = float(w2 - n * (np.mean(z) - 0.5) ** 2)
    zc = np.clip(z, _Z_CLAMP, 1.0 - _Z_CLAMP)
    a2 = float(-np.sum((2 * i - 1) * (np.log(zc) + np.log(1.0 - zc[::-1]))) / n - n)
    factor = math.sqrt(n) if scaled else 1.0
    return EdfStatistics(
        d_plus=factor * d_plus,
        d_minus=factor * d_minus,
        D=factor * max(d_plus, d_minus),
        V=factor * (d_plus + d_minus),
        W2=w2,
        U2=u2,
        A2=a2,
        n=n,
        scaled=scaled,
    )


def edf_statistics(sample, null, scaled: bool = True) -> EdfStatistics:
    """EDF statistics of a sample against a hypothesized distribution.

    ``null`` may be a :class:`NullDistribution` or any callable CDF.
    The sample is sorted ascending and z_i = F(x_(i)) feeds the five
    statistics; D and V are multiplied by sqrt(n) when ``scaled``.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    cdf = null.cdf if isinstance(null, NullDistribution) else null
    z = np.asarray(cdf(x), dtype=float)
    return edf_statistics_from_z(z, scaled=scaled)


@dataclass(frozen=True)
class CriticalValueTable:
    """Upper-tail critical values per statistic and significance level."""

    values: dict  # stat name -> {level: value}
    family: str
    params: tuple[float, ...]
    n: int
    M: int
    seed: int
    levels: tuple[float, ...] = DEFAULT_LEVELS
    reestimated: bool = True
    scaled: bool = True
    loc: float = 0.0

    def critical(self, stat: str, level: float) -> float:
        table = self.values[stat]
        key = min(table.keys(), key=lambda lv: abs(lv - level))
        if abs(key - level) > 1e-9:
            raise ParameterError(f"level {level} not tabulated (have {sorted(table)})")
        return table[key]

    def to_dict(self) -> dict:
        return {
            "values": {s: {str(lv): v for lv, v in t.items()} for s, t in self.values.items()},
            "provenance": {
                "family": self.family,
                "params": list(self.params),
                "loc": self.loc,
                "n": self.n,
                "M": self.M,
                "seed": self.seed,
                "levels": list(self.levels),
                "reestimated": self.reestimated,
                "sqrt_n_scaled": self.scaled,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CriticalValueTable":
        prov = data["provenance"]
        values = {
            s: {float(lv): float(v) for lv, v in t.items()}
            for s, t in data["values"].items()
        }
        return cls(values=values, family=prov["family"], params=tuple(prov["params"]),
                   n=int(prov["n"]), M=int(prov["M"]), seed=int(prov["seed"]),
                   levels=tuple(prov["levels"]), reestimated=bool(prov["reestimated"]),
                   scaled=bool(prov["sqrt_n_scaled"]), loc=float(prov.get("loc", 0.0)))


def _upper_quantile(sorted_stats: np.ndarray, level: float) -> float:
    """Empirical upper-tail critical value: the round(M * (1 - level))-th
    order statistic (1-based)."""
    m = sorted_stats.size
    idx = int(round(m * (1.0 - level)))
    idx = min(max(idx, 1), m)
    return float(sorted_stats[idx - 1])


def mc_critical_values(null: NullDistribution, n: int, M: int = 10_000,
                       levels: tuple[float, ...] = DEFAULT_LEVELS,
                       seed: int = 0, reestimate: bool = True,
                       scaled: bool = True) -> CriticalValueTable:
    """Parametric-bootstrap critical values for the EDF statistics.

    Each replicate draws n points from ``null``; with ``reestimate``
    (the default, required for correct size when the tested parameters
    were themselves estimated) the family is refitted on the replicate
    and the statistics are computed against the refitted CDF, otherwise
    against the original.  Replicates whose refit fails are redrawn, up
    to 10*M attempts.  Deterministic given the seed.
    """
    if n < 20:
        raise ParameterError("critical-value simulation needs n >= 20")
    if M < 1000:
        raise ParameterError("critical-value simulation needs M >= 1000")
    children = np.random.SeedSequence(seed).spawn(10 * M)
    results = np.empty((M, len(STAT_NAMES)))
    done = 0
    attempt = 0
    while done < M:
        if attempt >= 10 * M:
            raise EstimationError("too many failed bootstrap replicates")
        rng = np.random.default_rng(children[attempt])
        attempt += 1
        x = null.rvs(rng, n)
        try:
            dist = fit_null(x, null.family, loc=null.loc) if reestimate else null
            s = edf_statistics(x, dist, scaled=scaled)
        except (EstimationError, DomainError, ValidationError):
            continue
        results[done] = [s.D, s.V, s.W2, s.U2, s.A2]
        done += 1
    values = {}
    for j, name in enumerate(STAT_NAMES):
        col = np.sort(results[:, j])
        values[name] = {lv: _upper_quantile(col, lv) for lv in levels}
    return CriticalValueTable(values=values, family=null.family, params=null.params,
                              n=n, M=M, seed=seed, levels=tuple(levels),
                              reestimated=reestimate, scaled=scaled, loc=null.loc)


@dataclass(frozen=True)
class GofReport:
    """Fit, statistics, criticals and accept/reject decisions."""

    family: str
    null: NullDistribution
    std_errors: dict
    loglik: float
    statistics: EdfStatistics
    table: CriticalValueTable
    level: float
    rejects: dict = field(default_factory=dict)

    @property
    def rejected(self) -> bool:
        return any(self.rejects.values())

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.null.to_dict(),
            "std_errors": self.std_errors,
            "loglik": self.loglik,
            "statistics": self.statistics.to_dict(),
            "criticals": {s: self.table.critical(s, self.level) for s in STAT_NAMES},
            "level": self.level,
            "rejects": self.rejects,
        }


def gof_test(sample, family: str, table: CriticalValueTable | None = None,
             level: float = 0.05, loc: float = 0.0, mc_size: int = 2000,
             seed: int = 0, reestimate: bool = True, scaled: bool = True,
             with_se: bool = True) -> GofReport:
    """Fit ``family`` to the sample and run the upper-tail EDF tests.

    A statistic rejects when it exceeds its critical value.  If no
    critical-value table is supplied one is simulated from the fitted
    null (size ``mc_size``).
    """
    x = np.asarray(sample, dtype=float)
    null = fit_null(x, family, loc=loc)
    if table is None:
        table = mc_critical_values(null, n=x.size, M=mc_size, levels=(level,),
                                   seed=seed, reestimate=reestimate, scaled=scaled)
    elif table.family != family:
        raise ParameterError(
            f"table was generated for {table.family!r}, not {family!r}"
        )
    s = edf_statistics(x, null, scaled=table.scaled)
    rejects = {name: bool(s.value(name) > table.critical(name, level))
               for name in STAT_NAMES}
    se = null_std_errors(null, x) if with_se else {}
    return GofReport(family=family, null=null, std_errors=se,
                     loglik=null.loglik(x), statistics=s, table=table,
                     level=level, rejects=rejects)


@dataclass(frozen=True)
class WithinDayResult:
    family: str
    level: float
    n_days: int
    n_pass: int
    skipped_days: tuple[int, ...]

    @property
    def share(self) -> float:
        return self.n_pass / self.n_days if self.n_days else math.nan

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "level": self.level,
            "N": self.n_days,
            "N0": self.n_pass,
            "share": self.share,
            "skipped_days": list(self.skipped_days),
        }


WITHIN_DAY_STATS = ("D", "W2", "A2")


def within_day_share(series: DurationSeries, family: str, level: float = 0.05,
                     min_obs: int = 20, mc_size: int = 1000, seed: int = 0,
                     reestimate: bool = True) -> WithinDayResult:
    """Day-by-day goodness of fit using D, W^2 and A^2 only.

    A day passes when none of the three statistics rejects at the given
    level; days with fewer than ``min_obs`` observations are skipped and
    reported.  Returns the pass count and its share of tested days.
    """
    n_pass = 0
    n_days = 0
    skipped = []
    for k, seg in enumerate(series.segments):
        x = seg.duration
        if x.size < min_obs:
            skipped.append(seg.day_index)
            continue
        report = gof_test(x, family, level=level, mc_size=mc_size,
                          seed=seed + 7919 * k, reestimate=reestimate)
        n_days += 1
        if not any(report.rejects[s] for s in WITHIN_DAY_STATS):
            n_pass += 1
    return WithinDayResult(family=family, level=level, n_days=n_days,
                           n_pass=n_pass, skipped_days=tuple(skipped))
