"""Maximum-likelihood estimation of conditional-duration models.

The objective is the mean per-observation log-likelihood; mean-equation
parameters are unconstrained (positivity of the conditional mean is
enforced by rejecting infeasible points during line search) while
innovation shapes are optimized on a log scale to stay positive.  The
linear form uses analytic gradients built from the same filter
recursions as the likelihood; the log forms fall back to central
differences with step 1e-5 * max(1, |theta|).  Standard errors are
White-style sandwich estimates H^-1 * OPG * H^-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter, lfiltic

from .durations import DurationSeries
from .errors import (
    AcdkitError,
    EstimationError,
    ParameterError,
    ValidationError,
)
from .innovations import (
    Innovation,
    log_density_eps_gradient,
    log_density_shape_gradient,
)
from .model import (
    INIT_FIRST_WINDOW,
    INIT_UNCONDITIONAL,
    LINEAR,
    AcdSpec,
    filter_psi,
)

_INFEASIBLE = 1e10
_FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class FitOptions:
    """Controls for the numerical maximization."""

    n_starts: int = 5
    jitter: float = 0.2
    seed: int = 0
    max_iter: int = 500
    gtol: float = 1e-8
    min_obs_per_param: int = 10

    def __post_init__(self):
        if self.n_starts < 1:
            raise ParameterError("need at least one start")


@dataclass(frozen=True)
class FitResult:
    """A fitted spec with likelihood, information criterion and errors."""

    spec_at_optimum: AcdSpec
    loglik: float
    bic: float
    std_errors: dict
    robust_cov: np.ndarray
    convergence: str
    n_obs: int
    iterations: int
    normalization_constant: float = 1.0
    best_start: int = 0

    @property
    def param_names(self) -> tuple[str, ...]:
        return _param_names(self.spec_at_optimum)

    @property
    def params(self) -> dict:
        spec = self.spec_at_optimum
        out = {"omega": spec.omega}
        for j, a in enumerate(spec.alpha, start=1):
            out[f"alpha_{j}"] = a
        for j, b in enumerate(spec.beta, start=1):
            out[f"beta_{j}"] = b
        for name, value in zip(spec.innovation.shape_names, spec.innovation.shapes):
            out[name] = value
        return out

    def to_dict(self) -> dict:
        return {
            "spec": self.spec_at_optimum.to_dict(),
            "label": self.spec_at_optimum.label(),
            "params": self.params,
            "std_errors": self.std_errors,
            "loglik": self.loglik,
            "bic": self.bic,
            "convergence": self.convergence,
            "n_obs": self.n_obs,
            "iterations": self.iterations,
            "normalization_constant": self.normalization_constant,
            "best_start": self.best_start,
        }


def normalize(series: DurationSeries) -> tuple[DurationSeries, float]:
    """Divide a strictly positive series by its sample mean.

    Returns the unit-mean series and the mean that was divided out.
    """
    values = series.values()
    if values.size == 0:
        raise ValidationError("cannot normalize an empty series")
    if np.any(values <= 0):
        raise ValidationError("normalization requires strictly positive durations")
    scale = float(np.mean(values))
    segments = tuple(
        replace(seg, duration=seg.duration / scale) for seg in series.segments
    )
    return replace(series, segments=segments), scale


def bic(loglik: float, n_params: int, n_obs: int) -> float:
    """Bayes information criterion: -2 loglik + n_params * ln(n_obs)."""
    if n_obs < 1:
        raise ParameterError("n_obs must be >= 1")
    return -2.0 * loglik + n_params * math.log(n_obs)


def _param_names(spec: AcdSpec) -> tuple[str, ...]:
    names = ["omega"]
    names += [f"alpha_{j}" for j in range(1, spec.m_lags + 1)]
    names += [f"beta_{j}" for j in range(1, spec.q_lags + 1)]
    names += list(spec.innovation.shape_names)
    return tuple(names)


def _pack(spec: AcdSpec) -> np.ndarray:
    """(omega, alpha.., beta.., log shapes..) as the optimizer's vector."""
    shapes = np.log(spec.innovation.shapes) if spec.innovation.n_shapes else []
    return np.concatenate([[spec.omega], spec.alpha, spec.beta, shapes])


def _unpack(theta: np.ndarray, template: AcdSpec) -> AcdSpec:
    m, q = template.m_lags, template.q_lags
    omega = float(theta[0])
    alpha = tuple(theta[1 : 1 + m])
    beta = tuple(theta[1 + m : 1 + m + q])
    shapes = tuple(np.exp(theta[1 + m + q :]))
    innovation = Innovation.from_shapes(template.innovation.variant, shapes)
    return replace(template, omega=omega, alpha=alpha, beta=beta, innovation=innovation)


class _Objective:
    """Mean negative log-likelihood of a fixed series, as a function of
    the packed parameter vector."""

    def __init__(self, series: DurationSeries, template: AcdSpec):
        self.series = series
        self.template = template
        # the set of modeled observations is data-driven, so cache it once
        path = filter_psi(replace(template, omega=1.0, alpha=(0.0,) * template.m_lags,
                                  beta=(0.0,) * template.q_lags, mean_form=LINEAR),
                          series)
        self.offsets = tuple(seg.offset for seg in path.segments)
        self.n_used = path.n_obs
        if self.n_used == 0:
            raise ValidationError("no observations left after initialization windows")

    def spec(self, theta: np.ndarray) -> AcdSpec:
        return _unpack(theta, self.template)

    def loglik_contributions(self, theta: np.ndarray) -> np.ndarray:
        from .model import loglik as model_loglik

        return model_loglik(self.spec(theta), self.series).contributions

    def value(self, theta: np.ndarray) -> float:
        try:
            contrib = self.loglik_contributions(theta)
        except AcdkitError:
            return _INFEASIBLE
        total = float(np.sum(contrib))
        if not np.isfinite(total):
            return _INFEASIBLE
        return -total / self.n_used

    def value_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        if self.template.mean_form == LINEAR:
            try:
                total, grad, _ = _linear_loglik_grad(self.spec(theta), self.series)
            except AcdkitError:
                return _INFEASIBLE, np.zeros_like(theta)
            if not np.isfinite(total) or not np.all(np.isfinite(grad)):
                return _INFEASIBLE, np.zeros_like(theta)
            grad = self._chain_log_shapes(theta, grad)
            return -total / self.n_used, -grad / self.n_used
        f = self.value(theta)
        if f >= _INFEASIBLE:
            return f, np.zeros_like(theta)
        return f, _central_diff(self.value, theta)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return self.value_and_grad(theta)[1]

    def scores(self, theta: np.ndarray) -> np.ndarray:
        """Per-observation score matrix (n_used x p) in natural units
        (shapes, not log shapes)."""
        if self.template.mean_form == LINEAR:
            _, _, scores = _linear_loglik_grad(self.spec(theta), self.series,
                                               want_scores=True)
            return scores
        return _numerical_scores(self.loglik_contributions, theta)

    def _chain_log_shapes(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        k = self.template.innovation.n_shapes
        if k:
            grad = grad.copy()
            grad[-k:] *= np.exp(theta[-k:])
        return grad


def _central_diff(fn, theta: np.ndarray, rel_step: float = _FD_REL_STEP) -> np.ndarray:
    grad = np.empty_like(theta)
    for j in range(theta.size):
        h = rel_step * max(1.0, abs(theta[j]))
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (fn(up) - fn(dn)) / (2.0 * h)
    return grad


def _numerical_scores(contrib_fn, theta: np.ndarray,
                      rel_step: float = _FD_REL_STEP) -> np.ndarray:
    cols = []
    for j in range(theta.size):
        h = rel_step * max(1.0, abs(theta[j]))
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        cols.append((contrib_fn(up) - contrib_fn(dn)) / (2.0 * h))
    return np.column_stack(cols)


def _linear_loglik_grad(spec: AcdSpec, series: DurationSeries,
                        want_scores: bool = False):
    """Total log-likelihood and its gradient for the linear form.

    The conditional-mean sensitivities follow the same rational-filter
    recursion as the mean itself: d psi_i / d theta solves
    x_i + sum_j beta_j d psi_{i-j}, with x the direct derivative and the
    pre-sample sensitivities equal to d(init)/d theta (non-zero only for
    the unconditional-mean initialization).  Gradients are in natural
    units; returns (total, grad, scores or None).
    """
    from .model import _init_value, unconditional_mean

    m, q = spec.m_lags, spec.q_lags
    p_mean = 1 + m + q
    n_shapes = spec.innovation.n_shapes
    p = p_mean + n_shapes

    if spec.init_rule == INIT_UNCONDITIONAL:
        mu = unconditional_mean(spec)
        denom = 1.0 - spec.persistence
        dinit = np.concatenate([[1.0 / denom], np.full(m + q, mu / denom)])
    else:
        dinit = np.zeros(p_mean)

    values = series.values()
    series_mean = float(np.mean(values)) if values.size else 1.0
    a_poly = np.concatenate([[1.0], -np.asarray(spec.beta)])

    total = 0.0
    grad = np.zeros(p)
    score_blocks = [] if want_scores else None

    for seg in series.segments:
        w_all = seg.duration
        if w_all.size == 0:
            continue
        init, offset = _init_value(spec, series_mean, w_all, seg.start)
        w = w_all[offset:]
        n = w.size
        if n == 0:
            continue
        wx = np.concatenate([np.full(m, init), w])
        x = np.full(n, spec.omega)
        for j, a_j in enumerate(spec.alpha, start=1):
            x += a_j * wx[m - j : m - j + n]
        zi = lfiltic([1.0], a_poly, y=np.full(q, init))
        psi, _ = lfilter([1.0], a_poly, x, zi=zi)
        if np.any(psi <= 0):
            raise EstimationError("conditional mean non-positive inside gradient")
        eps = w / psi
        logpdf = spec.innovation.log_density(eps)
        contrib = logpdf - np.log(psi)
        total += float(np.sum(contrib))

        # d l_i / d psi_i
        glp = log_density_eps_gradient(spec.innovation, eps)
        u = -(eps * glp + 1.0) / psi

        # presample w-lag weight: A_i = sum of alpha_j whose lag falls
        # before the sample start, scaling d(init)/d theta
        A = np.zeros(n)
        for j, a_j in enumerate(spec.alpha, start=1):
            if j <= min(m, n):
                A[: min(j, n)] += a_j
        dpsi = np.empty((p_mean, n))
        psi_hat = np.concatenate([np.full(q, init), psi])
        for t in range(p_mean):
            if t == 0:
                direct = np.ones(n) + dinit[0] * A
            elif t <= m:
                k = t
                direct = wx[m - k : m - k + n] + dinit[t] * A
            else:
                k = t - m
                direct = psi_hat[q - k : q - k + n] + dinit[t] * A
            zi_t = lfiltic([1.0], a_poly, y=np.full(q, dinit[t]))
            dpsi[t], _ = lfilter([1.0], a_poly, direct, zi=zi_t)

        mean_scores = u * dpsi  # (p_mean, n)
        grad[:p_mean] += mean_scores.sum(axis=1)
        if n_shapes:
            shape_scores = log_density_shape_gradient(spec.innovation, eps)
            grad[p_mean:] += shape_scores.sum(axis=1)
        if want_scores:
            block = mean_scores if not n_shapes else np.vstack([mean_scores, shape_scores])
            score_blocks.append(block.T)

    scores = np.vstack(score_blocks) if want_scores else None
    return total, grad, scores


def robust_std_errors(series: DurationSeries, spec: AcdSpec,
                      ) -> tuple[dict, np.ndarray]:
    """Sandwich standard errors H^-1 OPG H^-1 at the given parameters.

    H is a central-difference Hessian of the total log-likelihood and
    OPG the sum of outer products of per-observation scores, both in
    natural parameter units.  Raises if the Hessian is singular.
    """
    obj = _Objective(series, spec)
    theta_nat = np.concatenate([[spec.omega], spec.alpha, spec.beta,
                                spec.innovation.shapes])

    def total_loglik_grad_nat(th: np.ndarray) -> np.ndarray:
        sp = _spec_from_natural(th, spec)
        if spec.mean_form == LINEAR:
            _, g, _ = _linear_loglik_grad(sp, series)
            return g
        packed = _pack(sp)
        f, g_packed = obj.value_and_grad(packed)
        g = -g_packed * obj.n_used
        k = spec.innovation.n_shapes
        if k:
            g = g.copy()
            g[-k:] /= np.asarray(sp.innovation.shapes)
        return g

    p = theta_nat.size
    H = np.empty((p, p))
    for j in range(p):
        h = _FD_REL_STEP * max(1.0, abs(theta_nat[j]))
        up = theta_nat.copy()
        dn = theta_nat.copy()
        up[j] += h
        dn[j] -= h
        H[:, j] = (total_loglik_grad_nat(up) - total_loglik_grad_nat(dn)) / (2.0 * h)
    H = 0.5 * (H + H.T)

    if spec.mean_form == LINEAR:
        scores = obj.scores(_pack(spec))
    else:
        def contrib_nat(th):
            return obj.loglik_contributions(_pack(_spec_from_natural(th, spec)))

        scores = _numerical_scores(contrib_nat, theta_nat)
    opg = scores.T @ scores

    try:
        h_inv = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(
            "singular Hessian; consider reducing the model order"
        ) from exc
    cov = h_inv @ opg @ h_inv
    diag = np.diag(cov)
    if np.any(diag < 0) or not np.all(np.isfinite(diag)):
        raise EstimationError("sandwich covariance is not positive; fit may not be an optimum")
    names = _param_names(spec)
    return {name: float(s) for name, s in zip(names, np.sqrt(diag))}, cov


def _spec_from_natural(theta_nat: np.ndarray, template: AcdSpec) -> AcdSpec:
    m, q = template.m_lags, template.q_lags
    shapes = tuple(theta_nat[1 + m + q :])
    innovation = Innovation.from_shapes(template.innovation.variant, shapes)
    return replace(template, omega=float(theta_nat[0]),
                   alpha=tuple(theta_nat[1 : 1 + m]),
                   beta=tuple(theta_nat[1 + m : 1 + m + q]),
                   innovation=innovation)


def default_template(family: str = "exponential", m: int = 1, q: int = 1,
                     mean_level: float = 1.0, mean_form: str = LINEAR,
                     init_rule: str = INIT_FIRST_WINDOW,
                     init_window: float = 900.0) -> AcdSpec:
    """A reasonable starting spec: mild persistence matched to the data
    scale, unit shapes."""
    shapes = {"exponential": (), "weibull": (1.0,), "gamma": (1.0,),
              "gengamma": (1.0, 1.0)}[family]
    innovation = Innovation.from_shapes(family, shapes)
    alpha = tuple([0.1 / m] * m)
    beta = tuple([0.8 / q] * q)
    omega = 0.1 * mean_level
    return AcdSpec(mean_form=mean_form, omega=omega, alpha=alpha, beta=beta,
                   innovation=innovation, init_rule=init_rule, init_window=init_window)


def fit_mle(series: DurationSeries, template: AcdSpec,
            options: FitOptions | None = None,
            normalization_constant: float = 1.0) -> FitResult:
    """Maximize the log-likelihood from jittered multi-starts.

    The template fixes the mean form, orders, innovation family and
    initialization rule and provides the unjittered first start; the
    remaining starts multiply each parameter by (1 + U(-jitter, jitter))
    deterministically from the options seed.  The winner is the best
    local optimum (ties broken by start index); its log-likelihood never
    falls below the template start's value.
    """
    options = options or FitOptions()
    values = series.values()
    if np.any(values <= 0):
        raise ValidationError("fitting requires strictly positive durations (filter first)")
    obj = _Objective(series, template)
    theta0 = _pack(template)
    if obj.n_used < options.min_obs_per_param * theta0.size:
        raise ValidationError(
            f"series too short: {obj.n_used} observations for {theta0.size} parameters"
        )

    rng = np.random.default_rng(options.seed)
    starts = [theta0]
    for _ in range(options.n_starts - 1):
        starts.append(theta0 * (1.0 + options.jitter * rng.uniform(-1.0, 1.0, theta0.size)))

    best = None
    diagnostics = []
    for s_idx, start in enumerate(starts):
        res = minimize(
            obj.value_and_grad, start, jac=True, method="L-BFGS-B",
            options={"maxiter": options.max_iter, "ftol": 1e-12, "gtol": options.gtol},
        )
        diagnostics.append(f"start {s_idx}: f={res.fun:.6g} status={res.status}")
        if not np.isfinite(res.fun) or res.fun >= _INFEASIBLE:
            continue
        key = (res.fun, s_idx)
        if best is None or key < best[0]:
            best = (key, res, s_idx)
    if best is None:
        raise EstimationError("all starts failed: " + "; ".join(diagnostics))

    _, res, best_start = best
    spec_hat = obj.spec(res.x)
    total = -res.fun * obj.n_used
    if res.success:
        convergence = "converged"
    elif res.status == 1:
        convergence = "max_iter"
    else:
        convergence = "line_search_failure"
    std_errors, cov = robust_std_errors(series, spec_hat)
    return FitResult(
        spec_at_optimum=spec_hat,
        loglik=total,
        bic=bic(total, theta0.size, obj.n_used),
        std_errors=std_errors,
        robust_cov=cov,
        convergence=convergence,
        n_obs=obj.n_used,
        iterations=int(res.nit),
        normalization_constant=normalization_constant,
        best_start=best_start,
    )
