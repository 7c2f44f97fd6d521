"""Score distributions, AUC-targeted class pairs and true-posterior oracles.

Every distribution is sampled by inverse transform through its quantile
function, so results depend only on the uniform stream (and hence the seed).
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, ndtri
from scipy.stats import norm

from .data import LabeledScoreSet
from .errors import DomainError, NumericError

KINDS = ("gld", "normal", "truncated_exponential", "flipped_truncated_exponential")

STANDARDIZE_SAMPLES = 10**6
AUC_GRID = 2048
SHIFT_BRACKET = 20.0
MAX_RATE = 1e4

_INVERT_TOL = 1e-10
_INVERT_MAX_ITER = 200
_LOGIT_MIN = -708.0
_LOGIT_MAX = 36.0


def uniform_open(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniforms strictly inside (0, 1) on the 2**-53 lattice (midpoints)."""
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k + 0.5) * 2.0**-53


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("quantile level must lie in the open interval (0, 1)")
    return u


# ---------------------------------------------------------------------------
# Generalized lambda distribution (Ramberg-Schmeiser form)


@dataclass(frozen=True)
class GldParams:
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float

    def __post_init__(self):
        l2, l3, l4 = self.lambda2, self.lambda3, self.lambda4
        positive = l2 > 0 and l3 > 0 and l4 > 0
        negative = l2 < 0 and l3 < 0 and l4 < 0
        if not (positive or negative):
            raise DomainError(
                f"unsupported GLD sign pattern (lambda2, lambda3, lambda4) = ({l2}, {l3}, {l4})"
            )
        grid = (np.arange(1024) + 0.5) / 1024
        if np.any(np.diff(self.quantile(grid)) < 0):
            raise DomainError("GLD quantile function is not nondecreasing")

    @property
    def bounded(self) -> bool:
        return self.lambda3 > 0

    @property
    def support(self) -> tuple[float, float]:
        if self.bounded:
            return self.lambda1 - 1 / self.lambda2, self.lambda1 + 1 / self.lambda2
        return -math.inf, math.inf

    def shifted(self, c: float) -> GldParams:
        return replace(self, lambda1=self.lambda1 + c)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return self.lambda1 + (u**self.lambda3 - (1 - u) ** self.lambda4) / self.lambda2

    def density_at_level(self, u):
        """Density evaluated at the point Q(u)."""
        u = np.asarray(u, dtype=float)
        dq = self.lambda3 * u ** (self.lambda3 - 1) + self.lambda4 * (1 - u) ** (self.lambda4 - 1)
        return self.lambda2 / dq

    @functools.cached_property
    def _logit_table(self):
        z = np.linspace(_LOGIT_MIN, _LOGIT_MAX, 4097)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return z, self.quantile(expit(z))

    def level_of(self, x):
        """Invert the quantile function: returns u with Q(u) = x.

        Works on z = logit(u), which reaches levels down to ~1e-308 and up to
        1 - 2**-52. A tabulated bracket seeds safeguarded Newton steps, with
        bisection whenever a step leaves the bracket. Points beyond the
        representable tails get the extreme level.
        """
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, np.nan)
        zt, qt = self._logit_table
        out[x <= qt[0]] = expit(zt[0])
        out[x >= qt[-1]] = expit(zt[-1])
        todo = np.flatnonzero(np.isnan(out))
        xs = x.reshape(-1)[todo]
        k = np.clip(np.searchsorted(qt, xs), 1, len(zt) - 1)
        lo, hi = zt[k - 1], zt[k]
        with np.errstate(invalid="ignore"):
            frac = (xs - qt[k - 1]) / (qt[k] - qt[k - 1])
        z = lo + np.where(np.isfinite(frac), np.clip(frac, 0.01, 0.99), 0.5) * (hi - lo)
        res = np.full(xs.shape, np.nan)
        idx = np.arange(xs.size)
        for it in range(_INVERT_MAX_ITER):
            if idx.size == 0:
                break
            u = expit(z)
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                q = self.quantile(u)
                slope = u * (1 - u) / self.density_at_level(u)
            err = q - xs
            # the bracket stops mattering once both ends round to the same level
            hit = ((np.abs(err) <= _INVERT_TOL) | (expit(lo) == expit(hi))
                   | (hi - lo <= 4e-16 * np.maximum(1, np.abs(z))))
            res[idx[hit]] = u[hit]
            below = err < 0
            lo = np.where(below, z, lo)
            hi = np.where(below, hi, z)
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                step = z - err / slope
            # every third step bisects, so the bracket always shrinks
            ok = np.isfinite(step) & (step > lo) & (step < hi) & (it % 3 != 2)
            z_next = np.where(ok, step, 0.5 * (lo + hi))
            # stalled at float resolution: Newton can close in from one side only
            still = ~hit & ok & (np.abs(z_next - z) <= 4e-16 * np.maximum(1, np.abs(z)))
            res[idx[still]] = expit(z_next[still])
            keep = ~(hit | still)
            idx, xs, lo, hi, z = idx[keep], xs[keep], lo[keep], hi[keep], z_next[keep]
        if idx.size:
            raise NumericError(
                f"GLD quantile inversion did not converge for {idx.size} point(s)"
            )
        flat = out.reshape(-1)
        flat[todo] = res
        return flat.reshape(x.shape)


def gld_quantile(params: GldParams, u):
    return params.quantile(_check_u(u))


def gld_density(params: GldParams, x):
    """Density of the GLD at ``x``; zero outside the support."""
    x = np.asarray(x, dtype=float)
    lo, hi = params.support
    inside = (x > lo) & (x < hi)
    out = np.zeros(x.shape)
    if np.any(inside):
        u = params.level_of(x[inside])
        out[inside] = params.density_at_level(u)
    return out


# ---------------------------------------------------------------------------
# Truncated exponentials on [0, 1]


def _te_quantile(rate, u):
    return -np.log1p(u * np.expm1(-rate)) / rate


def _te_logpdf(rate, x):
    x = np.asarray(x, dtype=float)
    inside = (x >= 0) & (x <= 1)
    # log(rate / (1 - exp(-rate))) - rate * x
    lognorm = math.log(rate) - math.log(-math.expm1(-rate))
    with np.errstate(invalid="ignore"):
        return np.where(inside, lognorm - rate * x, -np.inf)


# ---------------------------------------------------------------------------
# DistSpec


@dataclass(frozen=True)
class DistSpec:
    """A score distribution plus the affine standardization applied to it.

    The represented variable is ``(raw - center) / scale`` where ``raw`` follows
    the family given by ``kind`` and ``params``: a :class:`GldParams`,
    ``(mu, sigma)`` for ``normal``, or ``(rate,)`` for the truncated kinds.
    """

    kind: str
    params: GldParams | tuple
    center: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "gld":
            if not isinstance(self.params, GldParams):
                object.__setattr__(self, "params", GldParams(*self.params))
        else:
            params = tuple(float(p) for p in self.params)
            object.__setattr__(self, "params", params)
            if self.kind == "normal":
                if len(params) != 2 or not params[1] > 0:
                    raise DomainError("normal needs (mu, sigma) with sigma > 0")
            elif len(params) != 1 or not params[0] > 0:
                raise DomainError("truncated exponential needs a rate > 0")
        if not (self.scale > 0 and math.isfinite(self.scale) and math.isfinite(self.center)):
            raise DomainError("standardization scale must be positive and finite")

    def raw_quantile(self, u):
        if self.kind == "gld":
            return self.params.quantile(u)
        if self.kind == "normal":
            mu, sigma = self.params
            return mu + sigma * ndtri(u)
        rate = self.params[0]
        if self.kind == "truncated_exponential":
            return _te_quantile(rate, u)
        return 1.0 - _te_quantile(rate, 1.0 - u)

    def raw_logpdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gld":
            with np.errstate(divide="ignore"):
                return np.log(gld_density(self.params, x))
        if self.kind == "normal":
            mu, sigma = self.params
            return norm.logpdf(x, mu, sigma)
        rate = self.params[0]
        if self.kind == "truncated_exponential":
            return _te_logpdf(rate, x)
        return _te_logpdf(rate, 1.0 - x)

    def quantile(self, u):
        return (self.raw_quantile(_check_u(u)) - self.center) / self.scale

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return self.raw_logpdf(self.center + self.scale * x) + math.log(self.scale)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.quantile(uniform_open(rng, size))

    def to_dict(self) -> dict:
        params = self.params
        if isinstance(params, GldParams):
            params = (params.lambda1, params.lambda2, params.lambda3, params.lambda4)
        return {"kind": self.kind, "params": list(params), "center": self.center, "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> DistSpec:
        return cls(d["kind"], tuple(d["params"]), d.get("center", 0.0), d.get("scale", 1.0))


def gld(l1, l2, l3, l4) -> DistSpec:
    return DistSpec("gld", GldParams(l1, l2, l3, l4))


def normal(mu=0.0, sigma=1.0) -> DistSpec:
    return DistSpec("normal", (mu, sigma))


# The four basic shapes: symmetric, left-skewed and right-skewed GLD, normal.
BASIC = {
    "a": gld(0.0, -0.1125, -0.1359, -0.1359),
    "b": gld(0.0, 0.014, 0.009695, 0.0285),
    "c": gld(0.0, 0.014, 0.0285, 0.009695),
    "d": normal(0.0, 1.0),
}

DEFAULT_STANDARDIZE_SEED = 20190731


@functools.lru_cache(maxsize=256)
def standardize(spec: DistSpec, seed: int = DEFAULT_STANDARDIZE_SEED) -> DistSpec:
    """Resolve ``center``/``scale`` so the variable has mean 0 and sd 1.

    Normal specs are standardized exactly from their parameters; every other
    family uses the mean and sd of a 10**6 draw sample at ``seed``. Applied to
    an already standardized spec, the new correction composes with the old one.
    """
    if spec.kind == "normal":
        mu, sigma = spec.params
        return replace(spec, center=mu, scale=sigma)
    x = spec.sample(np.random.default_rng(seed), STANDARDIZE_SAMPLES)
    sd = float(x.std(ddof=1))
    if not sd > 1e-12:
        raise NumericError("degenerate standardization sample (sd <= 1e-12)")
    m = float(x.mean())
    return replace(spec, center=spec.center + spec.scale * m, scale=spec.scale * sd)


# ---------------------------------------------------------------------------
# AUC targeting


def _grid_levels(size=AUC_GRID):
    return (np.arange(size) + 0.5) / size


def grid_auc(q0: np.ndarray, q1: np.ndarray) -> float:
    """Pr(X0 < X1) from two sorted quantile grids, ties counted one half."""
    lo = np.searchsorted(q0, q1, side="left")
    hi = np.searchsorted(q0, q1, side="right")
    return float((lo + 0.5 * (hi - lo)).sum()) / (len(q0) * len(q1))


def shifted_auc(f0: DistSpec, f1: DistSpec, shift: float, grid=AUC_GRID) -> float:
    u = _grid_levels(grid)
    return grid_auc(f0.quantile(u), f1.quantile(u) + shift)


def _bisect(fn, lo, hi, target, iters=200, width=1e-10):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= width * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def _check_target(target_auc):
    if not 0.5 < target_auc < 1:
        raise DomainError("target AUC must lie in (0.5, 1)")


def resolve_shift_for_auc(f0: DistSpec, f1: DistSpec, target_auc: float) -> float:
    """Location offset for ``f1`` that separates it from ``f0`` at ``target_auc``."""
    _check_target(target_auc)
    u = _grid_levels()
    q0 = f0.quantile(u)
    q1 = f1.quantile(u)

    def auc(mu):
        return grid_auc(q0, q1 + mu)

    if not auc(-SHIFT_BRACKET) < target_auc <= auc(SHIFT_BRACKET):
        raise NumericError(f"no shift within +-{SHIFT_BRACKET} reaches AUC {target_auc}")
    mu = _bisect(auc, -SHIFT_BRACKET, SHIFT_BRACKET, target_auc)
    if abs(auc(mu) - target_auc) > 1e-3:
        raise NumericError("shift bisection missed the AUC target")
    return mu


def truncexp_pair_auc(rate: float, grid=AUC_GRID) -> float:
    u = _grid_levels(grid)
    f0 = DistSpec("truncated_exponential", (rate,))
    f1 = DistSpec("flipped_truncated_exponential", (rate,))
    return grid_auc(f0.quantile(u), f1.quantile(u))


def resolve_rate_for_auc_truncexp(target_auc: float) -> float:
    """Common rate of the (truncated, flipped truncated) exponential pair for an AUC."""
    _check_target(target_auc)
    if truncexp_pair_auc(MAX_RATE) < target_auc:
        raise NumericError(f"AUC {target_auc} unreachable with rate <= {MAX_RATE}")
    # AUC is monotone in the rate; bisect on log(rate).
    log_rate = _bisect(
        lambda t: truncexp_pair_auc(math.exp(t)), math.log(1e-8), math.log(MAX_RATE), target_auc
    )
    rate = math.exp(log_rate)
    if abs(truncexp_pair_auc(rate) - target_auc) > 1e-3:
        raise NumericError("rate bisection missed the AUC target")
    return rate


# ---------------------------------------------------------------------------
# Class pairs


@dataclass(frozen=True)
class PairConfig:
    f0: DistSpec
    f1: DistSpec
    target_auc: float
    shift: float = 0.0
    prior_pi: float = 0.5

    def __post_init__(self):
        _check_target(self.target_auc)
        if not 0 <= self.prior_pi <= 1:
            raise DomainError("prior must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "f0": self.f0.to_dict(),
            "f1": self.f1.to_dict(),
            "target_auc": self.target_auc,
            "shift": self.shift,
            "prior_pi": self.prior_pi,
        }

    @classmethod
    def from_dict(cls, d) -> PairConfig:
        return cls(
            DistSpec.from_dict(d["f0"]),
            DistSpec.from_dict(d["f1"]),
            d["target_auc"],
            d.get("shift", 0.0),
            d.get("prior_pi", 0.5),
        )


def make_pair(f0: DistSpec, f1: DistSpec, target_auc: float, seed=DEFAULT_STANDARDIZE_SEED,
              prior_pi=0.5) -> PairConfig:
    """Standardize both class distributions and resolve the class-1 shift."""
    f0 = standardize(f0, seed)
    f1 = standardize(f1, seed)
    return PairConfig(f0, f1, target_auc, resolve_shift_for_auc(f0, f1, target_auc), prior_pi)


def make_truncexp_pair(target_auc: float, prior_pi=0.5) -> PairConfig:
    rate = resolve_rate_for_auc_truncexp(target_auc)
    return PairConfig(
        DistSpec("truncated_exponential", (rate,)),
        DistSpec("flipped_truncated_exponential", (rate,)),
        target_auc,
        0.0,
        prior_pi,
    )


@dataclass(frozen=True)
class MultiConfig:
    """Two correlated scores; ``fij`` is the law of score j under class i."""

    f01: DistSpec
    f02: DistSpec
    f11: DistSpec
    f12: DistSpec
    target_auc: float
    rho: float = 0.0
    shift1: float = 0.0
    shift2: float = 0.0
    prior_pi: float = 0.5

    def __post_init__(self):
        _check_target(self.target_auc)
        _check_rho(self.rho)
        if not 0 <= self.prior_pi <= 1:
            raise DomainError("prior must lie in [0, 1]")

    def column_pair(self, j: int) -> PairConfig:
        if j == 0:
            return PairConfig(self.f01, self.f11, self.target_auc, self.shift1, self.prior_pi)
        return PairConfig(self.f02, self.f12, self.target_auc, self.shift2, self.prior_pi)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k).to_dict() for k in ("f01", "f02", "f11", "f12")}
        d.update(target_auc=self.target_auc, rho=self.rho, shift1=self.shift1,
                 shift2=self.shift2, prior_pi=self.prior_pi)
        return d

    @classmethod
    def from_dict(cls, d) -> MultiConfig:
        dists = [DistSpec.from_dict(d[k]) for k in ("f01", "f02", "f11", "f12")]
        return cls(*dists, d["target_auc"], d.get("rho", 0.0), d.get("shift1", 0.0),
                   d.get("shift2", 0.0), d.get("prior_pi", 0.5))


def _check_rho(rho):
    if not 0 <= rho < 1:
        raise DomainError("rho must lie in [0, 1)")


def make_multi(f01, f02, f11, f12, target_auc, rho, seed=DEFAULT_STANDARDIZE_SEED,
               prior_pi=0.5) -> MultiConfig:
    p1 = make_pair(f01, f11, target_auc, seed)
    p2 = make_pair(f02, f12, target_auc, seed)
    return MultiConfig(p1.f0, p2.f0, p1.f1, p2.f1, target_auc, rho, p1.shift, p2.shift, prior_pi)


def sample_pair(config: PairConfig, n0: int, n1: int, seed: int) -> LabeledScoreSet:
    if n0 < 1 or n1 < 1:
        raise DomainError("need at least one draw per class")
    rng = np.random.default_rng(seed)
    h0 = config.f0.sample(rng, n0)
    h1 = config.f1.sample(rng, n1) + config.shift
    labels = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    return LabeledScoreSet(np.r_[h0, h1][:, None], labels)


def correlate(v1, v2, rho: float):
    """Map independent (v1, v2) to (h1, h2) with correlation ``rho``."""
    _check_rho(rho)
    v1 = np.asarray(v1, dtype=float)
    return v1, rho * v1 + math.sqrt(1 - rho * rho) * np.asarray(v2, dtype=float)


def sample_correlated_pair(config: MultiConfig, n0: int, n1: int, seed: int) -> LabeledScoreSet:
    if n0 < 1 or n1 < 1:
        raise DomainError("need at least one draw per class")
    _check_rho(config.rho)
    rng = np.random.default_rng(seed)
    cols = []
    for n, fa, fb, sa, sb in (
        (n0, config.f01, config.f02, 0.0, 0.0),
        (n1, config.f11, config.f12, config.shift1, config.shift2),
    ):
        v1 = fa.sample(rng, n) + sa
        v2 = fb.sample(rng, n) + sb
        cols.append(np.column_stack(correlate(v1, v2, config.rho)))
    labels = np.r_[np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    return LabeledScoreSet(np.vstack(cols), labels)


# ---------------------------------------------------------------------------
# Posterior oracles


def posterior_from_log_lr(log_lr, prior_pi: float):
    """p = 1 / (1 + L^-1 (1 - pi) / pi), evaluated in the log domain."""
    log_lr = np.asarray(log_lr, dtype=float)
    if np.any(np.isnan(log_lr)):
        raise DomainError("likelihood ratio undefined: both class densities vanish")
    if prior_pi >= 1:
        return np.ones_like(log_lr)
    if prior_pi <= 0:
        return np.zeros_like(log_lr)
    return expit(log_lr + math.log(prior_pi) - math.log1p(-prior_pi))


def _pair_log_lr(config: PairConfig, h):
    h = np.asarray(h, dtype=float)
    with np.errstate(invalid="ignore"):
        return config.f1.logpdf(h - config.shift) - config.f0.logpdf(h)


def _multi_log_density(fa, fb, sa, sb, rho, h1, h2):
    c = math.sqrt(1 - rho * rho)
    return fa.logpdf(h1 - sa) + fb.logpdf((h2 - rho * h1) / c - sb) - math.log(c)


def _multi_log_lr(config: MultiConfig, h1, h2):
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    # v2 = (h2 - rho h1)/c, and the class-1 shift applies to v2 before the transform
    with np.errstate(invalid="ignore"):
        l1 = _multi_log_density(config.f11, config.f12, config.shift1, config.shift2,
                                config.rho, h1, h2)
        l0 = _multi_log_density(config.f01, config.f02, 0.0, 0.0, config.rho, h1, h2)
        return l1 - l0


@dataclass(frozen=True)
class _MixtureDensity:
    """Tabulated log-density of rho * A + sqrt(1 - rho^2) * B for independent A, B."""

    grid: np.ndarray
    logpdf_values: np.ndarray

    @classmethod
    def build(cls, fa: DistSpec, sa: float, fb: DistSpec, sb: float, rho: float,
              size=4096, quad=2048):
        c = math.sqrt(1 - rho * rho)
        u = _grid_levels(quad)
        a = fa.quantile(u) + sa
        # B's density tabulated along its own quantile grid (no inversion needed)
        ub = np.r_[np.geomspace(1e-12, 1e-4, 64), _grid_levels(8192), 1 - np.geomspace(1e-4, 1e-12, 64)]
        ub = np.unique(ub[(ub > 0) & (ub < 1)])
        xb = fb.quantile(ub) + sb
        fbx = fb.pdf(xb - sb)
        keep = np.r_[True, np.diff(xb) > 0]
        xb, fbx = xb[keep], fbx[keep]
        lo_q, hi_q = 1e-7, 1 - 1e-7
        lo = rho * float(fa.quantile(lo_q) + sa) + c * float(fb.quantile(lo_q) + sb)
        hi = rho * float(fa.quantile(hi_q) + sa) + c * float(fb.quantile(hi_q) + sb)
        grid = np.linspace(lo, hi, size)
        dens = np.empty(size)
        for i in range(0, size, 256):
            block = grid[i:i + 256]
            arg = (block[:, None] - rho * a[None, :]) / c
            dens[i:i + 256] = np.interp(arg, xb, fbx, left=0.0, right=0.0).mean(axis=1) / c
        # the quadrature can underflow in the far tails; keep the ratio defined there
        return cls(grid, np.log(np.maximum(dens, 1e-300)))

    def logpdf(self, x):
        return np.interp(x, self.grid, self.logpdf_values)


@functools.lru_cache(maxsize=64)
def _second_score_mixtures(config: MultiConfig):
    return (
        _MixtureDensity.build(config.f01, 0.0, config.f02, 0.0, config.rho),
        _MixtureDensity.build(config.f11, config.shift1, config.f12, config.shift2, config.rho),
    )


class PosteriorOracle:
    """Evaluates the true posterior Pr(class 1 | scores) for a simulation config.

    ``columns`` restricts a :class:`MultiConfig` oracle to the marginal
    posterior given one score column, e.g. ``columns=(1,)``.
    """

    def __init__(self, config: PairConfig | MultiConfig, columns: tuple[int, ...] | None = None):
        self.config = config
        multi = isinstance(config, MultiConfig)
        if columns is None:
            columns = (0, 1) if multi else (0,)
        self.columns = tuple(columns)
        if not multi and self.columns != (0,):
            raise DomainError("single-score oracle has one column")
        self._mixtures = None
        if multi and self.columns == (1,) and config.rho > 0:
            self._mixtures = _second_score_mixtures(config)

    @property
    def dim(self) -> int:
        return len(self.columns)

    @property
    def prior_pi(self) -> float:
        return self.config.prior_pi

    def log_lr(self, scores):
        scores = np.asarray(scores, dtype=float)
        if scores.ndim == 1:
            scores = scores[:, None]
        if scores.shape[1] != self.dim:
            raise DomainError(f"oracle expects {self.dim} score column(s)")
        cfg = self.config
        if isinstance(cfg, PairConfig):
            return _pair_log_lr(cfg, scores[:, 0])
        if self.columns == (0, 1):
            return _multi_log_lr(cfg, scores[:, 0], scores[:, 1])
        j = self.columns[0]
        if self._mixtures is None:
            return _pair_log_lr(cfg.column_pair(j), scores[:, 0])
        m0, m1 = self._mixtures
        with np.errstate(invalid="ignore"):
            return m1.logpdf(scores[:, 0]) - m0.logpdf(scores[:, 0])

    def __call__(self, scores):
        return posterior_from_log_lr(self.log_lr(scores), self.prior_pi)


def true_posterior_single(oracle: PosteriorOracle, h):
    scalar = np.ndim(h) == 0
    p = oracle(np.atleast_1d(np.asarray(h, dtype=float))[:, None])
    return float(p[0]) if scalar else p


def true_posterior_multi(oracle: PosteriorOracle, h1, h2):
    scalar = np.ndim(h1) == 0 and np.ndim(h2) == 0
    h1, h2 = np.broadcast_arrays(np.atleast_1d(h1), np.atleast_1d(h2))
    if oracle.dim != 2:
        raise DomainError("oracle is not a two-score oracle")
    p = oracle(np.column_stack([h1, h2]).astype(float))
    return float(p[0]) if scalar else p
