"""Log-likelihoods, priors and unconstrained log-posteriors of the three models.

Models, from simplest to richest:

``indep``
    ``N_t ~ Poisson(exp(mu_lambda))``, ``Y ~ GPD(exp(mu_sigma), xi)``.
``shared``
    A standard normal stress ``z_t`` per year scales both the Poisson rate
    ``exp(mu_lambda + alpha z_t)`` and the GPD scale ``exp(mu_sigma + beta z_t)``.
``hag``
    Gumbel-linked innovations ``(w_f, w_s)``, AR(1) stress
    ``z_t = phi z_{t-1} + w_f_t``, Hawkes intensity
    ``exp(mu_lambda + alpha z_t) + eta * sum_{s<t} N_s exp(-kappa (t - s))``
    and severity scale ``exp(mu_sigma + beta_s w_s_t)``.

The free functions (``loglik_*``, ``logprior_*``) take natural-scale parameters
and are written for clarity. The ``*Model`` classes expose the same target on
an unconstrained vector together with its exact gradient, for HMC.
"""
from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np
from scipy import special
from scipy.signal import lfilter

from . import _kernels
from .copula import gumbel_logpdf_l
from .distributions import XI_MAX, XI_MIN, gpd_logpdf
from .panel import PanelDataset

MAX_BRANCHING = 0.95
LOG_2PI = np.log(2.0 * np.pi)


class ParameterError(ValueError):
    """A parameter vector violates its model's constraints."""


@dataclass(frozen=True)
class IndepParams:
    mu_lambda: float
    mu_sigma: float
    xi: float

    def validate(self):
        if not XI_MIN <= self.xi <= XI_MAX:
            raise ParameterError(f"xi={self.xi} outside [{XI_MIN}, {XI_MAX}]")
        return self


@dataclass(frozen=True)
class SharedParams:
    mu_lambda: float
    alpha: float
    mu_sigma: float
    beta: float
    xi: float

    def validate(self):
        if self.alpha < 0:
            raise ParameterError(f"alpha={self.alpha} must be >= 0")
        if self.beta < 0:
            raise ParameterError(f"beta={self.beta} must be >= 0")
        if not XI_MIN <= self.xi <= XI_MAX:
            raise ParameterError(f"xi={self.xi} outside [{XI_MIN}, {XI_MAX}]")
        return self


@dataclass(frozen=True)
class HagParams:
    phi: float
    mu_lambda: float
    alpha: float
    eta: float
    kappa: float
    mu_sigma: float
    beta_s: float
    xi: float
    theta: float

    @property
    def branching_ratio(self) -> float:
        return branching_ratio(self.eta, self.kappa)

    def validate(self):
        if not abs(self.phi) < 1:
            raise ParameterError(f"phi={self.phi} violates |phi| < 1")
        for name in ("alpha", "eta", "beta_s"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name}={getattr(self, name)} must be >= 0")
        if not self.kappa > 0:
            raise ParameterError(f"kappa={self.kappa} must be > 0")
        if not XI_MIN <= self.xi <= XI_MAX:
            raise ParameterError(f"xi={self.xi} outside [{XI_MIN}, {XI_MAX}]")
        if not self.theta >= 1:
            raise ParameterError(f"theta={self.theta} must be >= 1")
        if not self.branching_ratio < MAX_BRANCHING:
            raise ParameterError(
                f"branching ratio {self.branching_ratio:.4f} violates r < {MAX_BRANCHING}"
            )
        return self


# Data-generating values of the simulation study.
TABLE2_PARAMS = HagParams(
    phi=0.70, mu_lambda=3.00, alpha=0.50, eta=0.30, kappa=0.50,
    mu_sigma=13.82, beta_s=0.40, xi=0.70, theta=2.00,
)
TABLE2_THRESHOLD = 5e5


@dataclass
class LatentState:
    """Per-year innovations; ``z`` is derived from ``w_f`` by the AR(1) scan."""

    w_f: np.ndarray
    w_s: np.ndarray
    z: np.ndarray

    @classmethod
    def from_innovations(cls, phi, w_f, w_s):
        w_f = np.asarray(w_f, dtype=float)
        return cls(w_f, np.asarray(w_s, dtype=float), ar1_scan(phi, w_f))


@dataclass(frozen=True)
class PriorSpec:
    phi_a: float = 5.0
    phi_b: float = 2.0
    mu_lambda_loc: float = 3.0
    mu_lambda_scale: float = 1.5
    alpha_scale: float = 1.0
    eta_scale: float = 0.3
    kappa_scale: float = 1.0
    mu_sigma_loc: float = 14.0
    mu_sigma_scale: float = 2.0
    beta_scale: float = 1.0
    xi_loc: float = 0.5
    xi_scale: float = 0.5
    xi_low: float = XI_MIN
    xi_high: float = XI_MAX
    theta_excess_scale: float = 1.5

    def __post_init__(self):
        for f in fields(self):
            if f.name not in ("mu_lambda_loc", "mu_sigma_loc", "xi_loc") and not getattr(self, f.name) > 0:
                raise ValueError(f"prior hyperparameter {f.name} must be positive")
        if not self.xi_low < self.xi_high:
            raise ValueError("xi truncation bounds reversed")

    @property
    def xi_log_norm(self) -> float:
        """Log of the normal mass inside the xi truncation window."""
        a = (self.xi_low - self.xi_loc) / self.xi_scale
        b = (self.xi_high - self.xi_loc) / self.xi_scale
        return float(np.log(special.ndtr(b) - special.ndtr(a)))


DEFAULT_PRIORS = PriorSpec()


# -- scalar building blocks ---------------------------------------------------

def ar1_scan(phi, w_f):
    """``z_0 = w_0``, ``z_t = phi z_{t-1} + w_t``."""
    return lfilter([1.0], [1.0, -phi], np.asarray(w_f, dtype=float))


def branching_ratio(eta, kappa):
    """``eta exp(-kappa) / (1 - exp(-kappa))``."""
    return eta / np.expm1(kappa)


def excitation(counts, kappa) -> float:
    """``sum_s N_s exp(-kappa (t - s))`` over the history ``counts`` (oldest first).

    Accumulated as ``e <- exp(-kappa) (e + N)``, the same recursion the
    simulator runs, so intensities recomputed from a panel match it exactly.
    """
    decay = np.exp(-kappa)
    e = 0.0
    for n in counts:
        e = decay * (e + n)
    return e


def hawkes_intensity(p: HagParams, z_t: float, counts) -> float:
    """Intensity for the year following the history ``counts`` (oldest first).

    ``counts`` holds ``N_1 .. N_{t-1}``; an empty history gives the baseline.
    """
    with np.errstate(over="ignore"):
        lam = np.exp(p.mu_lambda + p.alpha * z_t) + p.eta * excitation(counts, p.kappa)
    if not np.isfinite(lam):
        raise FloatingPointError(f"non-finite Hawkes intensity in year {len(counts) + 1}")
    return float(lam)


def hawkes_intensities(p: HagParams, z, counts) -> np.ndarray:
    counts = np.asarray(counts)
    return np.array([hawkes_intensity(p, z[t], counts[:t]) for t in range(len(z))])


def _poisson_logpmf(n, lam):
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(n > 0, n * np.log(lam), 0.0) - lam - special.gammaln(n + 1.0)
    return out


def _std_normal_logpdf(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * x * x - 0.5 * LOG_2PI


def _halfnormal_logpdf(x, scale):
    if x < 0:
        return -np.inf
    return 0.5 * np.log(2.0 / np.pi) - np.log(scale) - 0.5 * (x / scale) ** 2


def _normal_logpdf(x, loc, scale):
    return -0.5 * ((x - loc) / scale) ** 2 - np.log(scale) - 0.5 * LOG_2PI


def _xi_logprior(xi, pr: PriorSpec):
    if not pr.xi_low <= xi <= pr.xi_high:
        return -np.inf
    return _normal_logpdf(xi, pr.xi_loc, pr.xi_scale) - pr.xi_log_norm


def _severity_loglik(data: PanelDataset, sigma_by_year, xi):
    total = 0.0
    for t, exc in enumerate(data.exceedances):
        if exc.size:
            total += float(np.sum(gpd_logpdf(exc, sigma_by_year[t], xi)))
    return total


# -- natural-scale log-likelihoods and priors --------------------------------

def loglik_indep(p: IndepParams, data: PanelDataset) -> float:
    lam = np.exp(p.mu_lambda)
    freq = float(np.sum(_poisson_logpmf(data.counts, lam)))
    sigma = np.full(data.years, np.exp(p.mu_sigma))
    return freq + _severity_loglik(data, sigma, p.xi)


def loglik_shared(p: SharedParams, z, data: PanelDataset) -> float:
    z = np.asarray(z, dtype=float)
    freq = float(np.sum(_poisson_logpmf(data.counts, np.exp(p.mu_lambda + p.alpha * z))))
    return freq + _severity_loglik(data, np.exp(p.mu_sigma + p.beta * z), p.xi)


def copula_correction(w_f, w_s, theta) -> float:
    """Sum over years of the Gumbel log density at ``(Phi(w_f), Phi(w_s))``."""
    if theta == 1.0:
        return 0.0
    lu = np.maximum(-special.log_ndtr(np.asarray(w_f, dtype=float)), 1e-300)
    lv = np.maximum(-special.log_ndtr(np.asarray(w_s, dtype=float)), 1e-300)
    return float(np.sum(gumbel_logpdf_l(lu, lv, theta)))


def loglik_hag(p: HagParams, lat: LatentState, data: PanelDataset) -> float:
    """Poisson-Hawkes frequency + GPD severity + Gumbel copula correction.

    Returns ``-inf`` when the branching ratio reaches ``MAX_BRANCHING``.
    """
    if not branching_ratio(p.eta, p.kappa) < MAX_BRANCHING:
        return -np.inf
    try:
        lam = hawkes_intensities(p, lat.z, data.counts)
    except FloatingPointError:
        return -np.inf
    freq = float(np.sum(_poisson_logpmf(data.counts, lam)))
    sev = _severity_loglik(data, np.exp(p.mu_sigma + p.beta_s * np.asarray(lat.w_s)), p.xi)
    return freq + sev + copula_correction(lat.w_f, lat.w_s, p.theta)


def logprior_indep(p: IndepParams, pr: PriorSpec = DEFAULT_PRIORS) -> float:
    return float(
        _normal_logpdf(p.mu_lambda, pr.mu_lambda_loc, pr.mu_lambda_scale)
        + _normal_logpdf(p.mu_sigma, pr.mu_sigma_loc, pr.mu_sigma_scale)
        + _xi_logprior(p.xi, pr)
    )


def logprior_shared(p: SharedParams, z, pr: PriorSpec = DEFAULT_PRIORS) -> float:
    return float(
        _normal_logpdf(p.mu_lambda, pr.mu_lambda_loc, pr.mu_lambda_scale)
        + _halfnormal_logpdf(p.alpha, pr.alpha_scale)
        + _normal_logpdf(p.mu_sigma, pr.mu_sigma_loc, pr.mu_sigma_scale)
        + _halfnormal_logpdf(p.beta, pr.beta_scale)
        + _xi_logprior(p.xi, pr)
        + np.sum(_std_normal_logpdf(z))
    )


def logprior_hag(p: HagParams, lat: LatentState, pr: PriorSpec = DEFAULT_PRIORS) -> float:
    if not 0.0 < p.phi < 1.0 or p.theta < 1.0:
        return -np.inf
    if not branching_ratio(p.eta, p.kappa) < MAX_BRANCHING:
        return -np.inf
    log_beta = (
        (pr.phi_a - 1.0) * np.log(p.phi)
        + (pr.phi_b - 1.0) * np.log1p(-p.phi)
        - special.betaln(pr.phi_a, pr.phi_b)
    )
    return float(
        log_beta
        + _normal_logpdf(p.mu_lambda, pr.mu_lambda_loc, pr.mu_lambda_scale)
        + _halfnormal_logpdf(p.alpha, pr.alpha_scale)
        + _halfnormal_logpdf(p.eta, pr.eta_scale)
        + _halfnormal_logpdf(p.kappa, pr.kappa_scale)
        + _normal_logpdf(p.mu_sigma, pr.mu_sigma_loc, pr.mu_sigma_scale)
        + _halfnormal_logpdf(p.beta_s, pr.beta_scale)
        + _xi_logprior(p.xi, pr)
        + _halfnormal_logpdf(p.theta - 1.0, pr.theta_excess_scale)
        + np.sum(_std_normal_logpdf(lat.w_f))
        + np.sum(_std_normal_logpdf(lat.w_s))
    )


# -- unconstrained targets ----------------------------------------------------

def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return special.expit(x)


def _xi_from_raw(x, pr):
    return pr.xi_low + (pr.xi_high - pr.xi_low) * _sigmoid(x)


def _xi_to_raw(xi, pr):
    return special.logit((xi - pr.xi_low) / (pr.xi_high - pr.xi_low))


class _PanelArrays:
    """Data arrays precomputed once per panel."""

    def __init__(self, data: PanelDataset):
        self.data = data
        self.T = data.years
        self.n = data.counts.astype(float)
        self.log_fact = float(np.sum(special.gammaln(self.n + 1.0)))
        self.y = np.ascontiguousarray(data.flat_exceedances, dtype=float)
        self.year_idx = np.ascontiguousarray(data.year_index, dtype=np.int64)


class _Model:
    """Shared plumbing for the unconstrained model targets.

    Subclasses define ``param_names`` (natural-scale structural parameters),
    ``latent_blocks`` and the value/gradient computation.
    """

    name = ""
    param_names: tuple = ()
    params_type = None
    latent_blocks: tuple = ()
    target_accept = 0.90

    def __init__(self, data: PanelDataset, priors: PriorSpec = DEFAULT_PRIORS):
        self.data = data
        self.priors = priors
        self._a = _PanelArrays(data)
        self._hyper = np.array([*astuple(priors), priors.xi_log_norm])

    @property
    def T(self):
        return self._a.T

    @property
    def n_struct(self):
        return len(self.param_names)

    @property
    def dim(self):
        return self.n_struct + len(self.latent_blocks) * self.T

    @property
    def latent_names(self):
        return [f"{b}[{t}]" for b in self.latent_blocks for t in range(self.T)]

    @property
    def column_names(self):
        return list(self.param_names) + self.latent_names

    def logp_and_grad(self, q):
        """Log posterior on the unconstrained scale and its gradient.

        Returns ``(-inf, zeros)`` outside the support (branching ratio at or
        above ``MAX_BRANCHING``, overflowing intensity).
        """
        q = np.ascontiguousarray(q, dtype=float)
        if q.shape != (self.dim,):
            raise ValueError(f"{self.name} expects a vector of length {self.dim}, got {q.shape}")
        a = self._a
        val, grad = self._kernel(q, a.n, a.y, a.year_idx, a.log_fact, self._hyper)
        if np.isfinite(val) and not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"{self.name}: finite log-posterior with non-finite gradient")
        return val, grad

    def logp(self, q) -> float:
        return self.logp_and_grad(q)[0]

    def split(self, q):
        q = np.asarray(q, dtype=float)
        s = self.n_struct
        return q[:s], [q[s + k * self.T : s + (k + 1) * self.T] for k in range(len(self.latent_blocks))]

    def to_natural(self, q) -> np.ndarray:
        """Natural-scale row: structural parameters followed by latents."""
        raw, lats = self.split(q)
        return np.concatenate([self._struct_to_natural(raw), *lats])

    def from_natural(self, params, latents=()) -> np.ndarray:
        raw = self._struct_from_natural(np.asarray(astuple(params), dtype=float))
        return np.concatenate([raw, *[np.asarray(l, dtype=float) for l in latents]])

    def params_from_row(self, row):
        return self.params_type(*[float(v) for v in row[: self.n_struct]])

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        """Prior medians on the unconstrained scale, latents at 0, jittered by U(-0.5, 0.5)."""
        base = np.concatenate([self._prior_median_raw(), np.zeros(self.dim - self.n_struct)])
        return base + rng.uniform(-0.5, 0.5, self.dim)

    def _prior_median_raw(self):
        pr = self.priors
        hn = np.sqrt(2.0) * special.erfinv(0.5)  # HalfNormal(1) median
        med = {
            "phi": special.betaincinv(pr.phi_a, pr.phi_b, 0.5),
            "mu_lambda": pr.mu_lambda_loc,
            "alpha": hn * pr.alpha_scale,
            "eta": hn * pr.eta_scale,
            "kappa": hn * pr.kappa_scale,
            "mu_sigma": pr.mu_sigma_loc,
            "beta": hn * pr.beta_scale,
            "beta_s": hn * pr.beta_scale,
            "xi": pr.xi_loc,
            "theta": 1.0 + hn * pr.theta_excess_scale,
        }
        return self._struct_from_natural(np.array([med[k] for k in self.param_names]))


class IndepModel(_Model):
    name = "indep"
    param_names = ("mu_lambda", "mu_sigma", "xi")
    params_type = IndepParams
    latent_blocks = ()
    _kernel = staticmethod(_kernels.indep_logp_grad)

    def _struct_to_natural(self, raw):
        return np.array([raw[0], raw[1], _xi_from_raw(raw[2], self.priors)])

    def _struct_from_natural(self, nat):
        return np.array([nat[0], nat[1], _xi_to_raw(nat[2], self.priors)])


class SharedModel(_Model):
    name = "shared"
    param_names = ("mu_lambda", "alpha", "mu_sigma", "beta", "xi")
    params_type = SharedParams
    latent_blocks = ("z",)
    _kernel = staticmethod(_kernels.shared_logp_grad)

    def _struct_to_natural(self, raw):
        return np.array([raw[0], np.exp(raw[1]), raw[2], np.exp(raw[3]), _xi_from_raw(raw[4], self.priors)])

    def _struct_from_natural(self, nat):
        with np.errstate(divide="ignore"):
            return np.array([nat[0], np.log(nat[1]), nat[2], np.log(nat[3]), _xi_to_raw(nat[4], self.priors)])


class HagModel(_Model):
    name = "hag"
    param_names = ("phi", "mu_lambda", "alpha", "eta", "kappa", "mu_sigma", "beta_s", "xi", "theta")
    params_type = HagParams
    latent_blocks = ("w_f", "w_s")
    target_accept = 0.98
    _kernel = staticmethod(_kernels.hag_logp_grad)

    def _struct_to_natural(self, raw):
        e = np.exp(raw)
        return np.array([
            _sigmoid(raw[0]), raw[1], e[2], e[3], e[4], raw[5], e[6],
            _xi_from_raw(raw[7], self.priors), 1.0 + e[8],
        ])

    def _struct_from_natural(self, nat):
        with np.errstate(divide="ignore"):
            return np.array([
                special.logit(nat[0]), nat[1], np.log(nat[2]), np.log(nat[3]), np.log(nat[4]),
                nat[5], np.log(nat[6]), _xi_to_raw(nat[7], self.priors), np.log(nat[8] - 1.0),
            ])

    def latent_state(self, q) -> LatentState:
        raw, (w_f, w_s) = self.split(q)
        return LatentState.from_innovations(_sigmoid(raw[0]), w_f, w_s)


MODELS = {"indep": IndepModel, "shared": SharedModel, "hag": HagModel}


def make_model(tag: str, data: PanelDataset, priors: PriorSpec = DEFAULT_PRIORS) -> _Model:
    try:
        return MODELS[tag](data, priors)
    except KeyError:
        raise ValueError(f"unknown model {tag!r}; expected one of {sorted(MODELS)}") from None


def _pack(tag, params, latents):
    if tag == "indep":
        return ()
    if tag == "shared":
        return (latents,)
    return (latents.w_f, latents.w_s)


def logpost(tag: str, params, latents, data: PanelDataset, priors: PriorSpec = DEFAULT_PRIORS) -> float:
    """Unconstrained-scale log posterior (log-Jacobians included) at natural ``params``.

    ``latents`` is ``None`` for ``indep``, the stress vector ``z`` for
    ``shared`` and a ``LatentState`` for ``hag``.
    """
    model = make_model(tag, data, priors)
    if tag == "hag" and not branching_ratio(params.eta, params.kappa) < MAX_BRANCHING:
        return -np.inf
    return model.logp(model.from_natural(params, _pack(tag, params, latents)))


def logpost_grad(tag: str, params, latents, data: PanelDataset, priors: PriorSpec = DEFAULT_PRIORS) -> np.ndarray:
    """Gradient of :func:`logpost` with respect to the unconstrained vector."""
    model = make_model(tag, data, priors)
    return model.logp_and_grad(model.from_natural(params, _pack(tag, params, latents)))[1]


def log_jacobian(tag: str, q, priors: PriorSpec = DEFAULT_PRIORS) -> float:
    """Log-determinant of the unconstrained-to-natural map for the structural block."""
    q = np.asarray(q, dtype=float)
    width = np.log(priors.xi_high - priors.xi_low)
    if tag == "indep":
        x = q[2]
        return float(width + _log_sigmoid(x) + _log_sigmoid(-x))
    if tag == "shared":
        return float(q[1] + q[3] + width + _log_sigmoid(q[4]) + _log_sigmoid(-q[4]))
    return float(
        _log_sigmoid(q[0]) + _log_sigmoid(-q[0]) + q[2] + q[3] + q[4] + q[6]
        + width + _log_sigmoid(q[7]) + _log_sigmoid(-q[7]) + q[8]
    )
