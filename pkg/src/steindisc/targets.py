"""Target distributions: log-densities, scores, and tail diagnostics.

Log-densities are kept up to an additive constant except where a normalized
density is available (the built-in 1-d families), since score-based
discrepancies never need normalizing constants.  Tail conditions that hold
"for all x" are checked numerically on spheres of increasing radius; the
resulting certificates are grid evidence, not proofs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .util import generator

__all__ = [
    "Target",
    "GaussianTarget",
    "GaussianMixtureTarget",
    "StudentTTarget",
    "CauchyTarget",
    "CustomTarget",
    "DissipativityParams",
    "DissipativityReport",
    "ScoreGrowthReport",
    "score",
    "check_dissipativity",
    "score_growth_probe",
    "target_from_spec",
]


@dataclass(frozen=True)
class DissipativityParams:
    """Parameters of the inward-drift growth condition

        -<s(x), x> - r0 ||s(x)||_1 >= r1 ||x||^(2u) - r2   for all x,

    with rate u > 1/2 and r0, r1, r2 > 0.
    """

    u: float
    r0: float
    r1: float
    r2: float

    def __post_init__(self):
        if not self.u > 0.5:
            raise ValueError("dissipativity rate u must exceed 1/2")
        if min(self.r0, self.r1, self.r2) <= 0:
            raise ValueError("r0, r1, r2 must be positive")


class Target:
    """An unnormalized target density with a score oracle."""

    family: str = "custom"

    def __init__(self, dim: int, dissipativity: DissipativityParams | None = None):
        if dim < 1:
            raise ValueError("dim must be a positive integer")
        self.dim = int(dim)
        self.dissipativity = dissipativity

    def log_density(self, X: np.ndarray) -> np.ndarray:
        """log p(x), possibly up to an additive constant; shape (...)."""
        raise NotImplementedError

    def score(self, X: np.ndarray) -> np.ndarray:
        """Gradient of log p; shape (..., d)."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError(f"{self.family} targets do not provide a sampler")

    @property
    def has_sampler(self) -> bool:
        try:
            self.sample(generator(0), 1)
        except NotImplementedError:
            return False
        return True

    @property
    def normalized(self) -> bool:
        """Whether log_density includes the normalizing constant."""
        return False

    def density(self, X: np.ndarray) -> np.ndarray:
        if not self.normalized:
            raise NotImplementedError(f"{self.family} target has no normalized density")
        return np.exp(self.log_density(X))

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dim:
            raise ValueError(f"point has dimension {X.shape[-1]}, target expects {self.dim}")
        return X

    def spec(self) -> dict:
        raise NotImplementedError("custom targets are not serializable")


def _as_vector(v, dim, name):
    arr = np.asarray(v, dtype=float) * np.ones(dim)
    if arr.shape != (dim,):
        raise ValueError(f"{name} must broadcast to dimension {dim}")
    return arr


class GaussianTarget(Target):
    """Gaussian with diagonal covariance.

    Ships a conservative dissipativity certificate with rate u = 1: with
    m = max_i |mean_i|, s2max = max variance, s2min = min variance,

        r0 = 1,  r1 = 1/(2 s2max),  r2 = (1 + m)^2 d s2max / (2 s2min^2)

    makes the margin a nonnegative quadratic in ||x|| (discriminant <= 0).
    """

    family = "gaussian"

    def __init__(self, mean, cov_diag, dim: int | None = None):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        dim = int(dim) if dim is not None else mean.shape[0]
        self.mean = _as_vector(mean, dim, "mean")
        self.cov_diag = _as_vector(cov_diag, dim, "cov_diag")
        if np.any(self.cov_diag <= 0.0):
            raise ValueError("variances must be positive")
        s2max = float(self.cov_diag.max())
        s2min = float(self.cov_diag.min())
        m = float(np.abs(self.mean).max())
        cert = DissipativityParams(
            u=1.0, r0=1.0, r1=0.5 / s2max, r2=(1.0 + m) ** 2 * dim * s2max / (2.0 * s2min**2)
        )
        super().__init__(dim, dissipativity=cert)
        self._log_norm = -0.5 * float(np.sum(np.log(2.0 * math.pi * self.cov_diag)))

    @property
    def normalized(self):
        return True

    def log_density(self, X):
        X = self._check(X)
        z = (X - self.mean) ** 2 / self.cov_diag
        return self._log_norm - 0.5 * z.sum(axis=-1)

    def score(self, X):
        X = self._check(X)
        return -(X - self.mean) / self.cov_diag

    def sample(self, rng, n):
        z = rng.standard_normal((n, self.dim))
        return self.mean + np.sqrt(self.cov_diag) * z

    def cdf(self, x):
        if self.dim != 1:
            raise NotImplementedError("cdf is only available for 1-d targets")
        return stats.norm.cdf(x, loc=self.mean[0], scale=math.sqrt(self.cov_diag[0]))

    def spec(self):
        return {"family": "gaussian", "mean": self.mean.tolist(), "cov_diag": self.cov_diag.tolist()}


class GaussianMixtureTarget(Target):
    """Finite mixture of diagonal-covariance Gaussians."""

    family = "gaussian_mixture"

    def __init__(self, weights, means, cov_diags):
        weights = np.asarray(weights, dtype=float)
        means = np.asarray(means, dtype=float)
        cov_diags = np.asarray(cov_diags, dtype=float)
        if means.ndim != 2 or cov_diags.shape != means.shape:
            raise ValueError("means and cov_diags must be (n_components, d) arrays")
        if weights.shape != (means.shape[0],) or np.any(weights <= 0):
            raise ValueError("weights must be positive, one per component")
        if np.any(cov_diags <= 0):
            raise ValueError("variances must be positive")
        super().__init__(means.shape[1])
        self.weights = weights / weights.sum()
        self.means = means
        self.cov_diags = cov_diags
        self._log_norms = -0.5 * np.sum(np.log(2.0 * math.pi * cov_diags), axis=1)

    @property
    def normalized(self):
        return True

    def _component_logpdf(self, X):
        # (..., n_components)
        X = self._check(X)[..., None, :]
        z = (X - self.means) ** 2 / self.cov_diags
        return self._log_norms + np.log(self.weights) - 0.5 * z.sum(axis=-1)

    def log_density(self, X):
        lp = self._component_logpdf(X)
        m = lp.max(axis=-1, keepdims=True)
        return (m + np.log(np.exp(lp - m).sum(axis=-1, keepdims=True)))[..., 0]

    def score(self, X):
        X = self._check(X)
        lp = self._component_logpdf(X)
        m = lp.max(axis=-1, keepdims=True)
        resp = np.exp(lp - m)
        resp /= resp.sum(axis=-1, keepdims=True)
        comp_scores = -(X[..., None, :] - self.means) / self.cov_diags
        return np.einsum("...k,...kd->...d", resp, comp_scores)

    def sample(self, rng, n):
        idx = rng.choice(self.weights.size, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        return self.means[idx] + np.sqrt(self.cov_diags[idx]) * z

    def spec(self):
        return {
            "family": "gaussian_mixture",
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "cov_diags": self.cov_diags.tolist(),
        }


class StudentTTarget(Target):
    """Product of independent Student-t coordinates with df nu, loc, scale.

    Heavy tailed: the score decays like -(nu + 1)/x, so no dissipativity
    certificate is attached.
    """

    family = "student_t"

    def __init__(self, df: float, loc=0.0, scale=1.0, dim: int = 1):
        if df <= 0:
            raise ValueError("degrees of freedom must be positive")
        super().__init__(dim)
        self.df = float(df)
        self.loc = _as_vector(loc, dim, "loc")
        self.scale = _as_vector(scale, dim, "scale")
        if np.any(self.scale <= 0):
            raise ValueError("scales must be positive")
        lg = math.lgamma
        self._log_norm = dim * (
            lg((self.df + 1.0) / 2.0) - lg(self.df / 2.0) - 0.5 * math.log(self.df * math.pi)
        ) - float(np.sum(np.log(self.scale)))

    @property
    def normalized(self):
        return True

    def log_density(self, X):
        X = self._check(X)
        z = (X - self.loc) / self.scale
        return self._log_norm - 0.5 * (self.df + 1.0) * np.log1p(z * z / self.df).sum(axis=-1)

    def score(self, X):
        X = self._check(X)
        z = (X - self.loc) / self.scale
        return -(self.df + 1.0) / self.df * z / (1.0 + z * z / self.df) / self.scale

    def sample(self, rng, n):
        return self.loc + self.scale * rng.standard_t(self.df, size=(n, self.dim))

    def cdf(self, x):
        if self.dim != 1:
            raise NotImplementedError("cdf is only available for 1-d targets")
        return stats.t.cdf(x, self.df, loc=self.loc[0], scale=self.scale[0])

    def spec(self):
        return {
            "family": "student_t",
            "df": self.df,
            "loc": self.loc.tolist(),
            "scale": self.scale.tolist(),
        }


class CauchyTarget(StudentTTarget):
    """Cauchy target, i.e. Student-t with one degree of freedom."""

    family = "cauchy"

    def __init__(self, loc=0.0, scale=1.0, dim: int = 1):
        super().__init__(1.0, loc, scale, dim)

    def spec(self):
        return {"family": "cauchy", "loc": self.loc.tolist(), "scale": self.scale.tolist()}


class CustomTarget(Target):
    """Target from user closures; only constructible programmatically."""

    family = "custom"

    def __init__(self, dim, log_density, score, sampler=None, dissipativity=None):
        super().__init__(dim, dissipativity)
        self._log_density = log_density
        self._score = score
        self._sampler = sampler

    def log_density(self, X):
        X = self._check(X)
        out = np.asarray(self._log_density(X), dtype=float)
        if not np.all(np.isfinite(out)):
            raise ValueError("log-density must be finite at queried points")
        return out

    def score(self, X):
        X = self._check(X)
        return np.asarray(self._score(X), dtype=float)

    def sample(self, rng, n):
        if self._sampler is None:
            raise NotImplementedError("custom target has no sampler")
        return np.asarray(self._sampler(rng, n), dtype=float)


def score(target: Target, x: np.ndarray) -> np.ndarray:
    """Score of the target at a single point x, shape (d,)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lp = target.log_density(x)
    if not np.all(np.isfinite(lp)):
        raise ValueError("log-density is not finite at x")
    return np.asarray(target.score(x), dtype=float)


# ---------------------------------------------------------------------------
# sphere-sampled tail certificates


def sphere_points(dim: int, radius: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n points on the sphere of the given radius (the pair {-r, +r} in 1-d)."""
    if dim == 1:
        signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        return (radius * signs)[:, None]
    z = rng.standard_normal((n, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return radius * z


@dataclass(frozen=True)
class DissipativityReport:
    holds: bool
    worst_margin: float
    worst_point: np.ndarray
    #: smallest grid radius from which -<s(x), x> >= 0 held at every sampled
    #: point outward; None if no such radius was found on the grid
    inward_from_radius: float | None
    radii: np.ndarray
    min_margin_per_radius: np.ndarray

    def to_json(self) -> dict:
        return {
            "holds": bool(self.holds),
            "worst_margin": float(self.worst_margin),
            "worst_point": [float(v) for v in self.worst_point],
            "inward_from_radius": None
            if self.inward_from_radius is None
            else float(self.inward_from_radius),
            "radii": [float(r) for r in self.radii],
            "min_margin_per_radius": [float(v) for v in self.min_margin_per_radius],
        }


def check_dissipativity(
    target: Target,
    params: DissipativityParams,
    radii: Sequence[float],
    directions_per_radius: int = 64,
    seed: int = 0,
) -> DissipativityReport:
    """Grid certificate for the dissipativity inequality.

    Evaluates the margin -<s(x), x> - r0 ||s||_1 - r1 ||x||^(2u) + r2 at
    ``directions_per_radius`` sphere points per radius; ``holds`` means every
    sampled margin was nonnegative.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0:
        raise ValueError("radii grid must be nonempty")
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if directions_per_radius < 1:
        raise ValueError("directions_per_radius must be >= 1")
    rng = generator(seed)
    worst = math.inf
    worst_point = None
    min_margins = np.empty(radii.size)
    inward_ok = np.empty(radii.size, dtype=bool)
    for i, r in enumerate(radii):
        pts = sphere_points(target.dim, float(r), directions_per_radius, rng)
        s = target.score(pts)
        inner = np.einsum("nd,nd->n", s, pts)
        margin = -inner - params.r0 * np.abs(s).sum(axis=1) - params.r1 * r ** (2.0 * params.u) + params.r2
        min_margins[i] = margin.min()
        inward_ok[i] = bool(np.all(-inner >= 0.0))
        j = int(np.argmin(margin))
        if margin[j] < worst:
            worst = float(margin[j])
            worst_point = pts[j].copy()
    inward_from = None
    for i in range(radii.size):
        if inward_ok[i:].all():
            inward_from = float(radii[i])
            break
    return DissipativityReport(
        holds=bool(worst >= 0.0),
        worst_margin=worst,
        worst_point=worst_point,
        inward_from_radius=inward_from,
        radii=radii,
        min_margin_per_radius=min_margins,
    )


@dataclass(frozen=True)
class ScoreGrowthReport:
    radii: np.ndarray
    #: max over sphere points of ||s(x)|| / exp(sum_i sqrt(|x_i|))
    max_ratio_per_radius: np.ndarray
    #: max over sphere points of ||s(x)||
    max_norm_per_radius: np.ndarray

    @property
    def score_decaying(self) -> bool:
        """Heuristic: the score norm shrinks toward the largest radius."""
        m = self.max_norm_per_radius
        return bool(m[-1] < m[0] and m[-1] <= 0.5 * m.max())

    def to_json(self) -> dict:
        return {
            "radii": [float(r) for r in self.radii],
            "max_ratio_per_radius": [float(v) for v in self.max_ratio_per_radius],
            "max_norm_per_radius": [float(v) for v in self.max_norm_per_radius],
            "score_decaying": self.score_decaying,
        }


def score_growth_probe(
    target: Target,
    radii: Sequence[float],
    directions_per_radius: int = 64,
    seed: int = 0,
) -> ScoreGrowthReport:
    """Probe whether the score norm stays below root-exponential growth.

    A bounded ``max_ratio_per_radius`` sequence is evidence that ||s(x)||
    grows no faster than exp(c sum_i sqrt(|x_i|)).
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0 or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be positive and increasing")
    rng = generator(seed)
    ratios = np.empty(radii.size)
    norms = np.empty(radii.size)
    for i, r in enumerate(radii):
        pts = sphere_points(target.dim, float(r), directions_per_radius, rng)
        sn = np.linalg.norm(target.score(pts), axis=1)
        envelope = np.exp(np.sqrt(np.abs(pts)).sum(axis=1))
        ratios[i] = float((sn / envelope).max())
        norms[i] = float(sn.max())
    return ScoreGrowthReport(radii=radii, max_ratio_per_radius=ratios, max_norm_per_radius=norms)


# ---------------------------------------------------------------------------
# JSON specs


def target_from_spec(spec: dict) -> Target:
    """Build a target from its JSON object form."""
    if not isinstance(spec, dict):
        raise ValueError("target spec must be a JSON object")
    family = spec.get("family")
    if family == "gaussian":
        return GaussianTarget(spec.get("mean", 0.0), spec.get("cov_diag", 1.0), spec.get("dim"))
    if family == "gaussian_mixture":
        return GaussianMixtureTarget(spec["weights"], spec["means"], spec["cov_diags"])
    if family == "student_t":
        return StudentTTarget(
            spec["df"], spec.get("loc", 0.0), spec.get("scale", 1.0), int(spec.get("dim", 1))
        )
    if family == "cauchy":
        return CauchyTarget(spec.get("loc", 0.0), spec.get("scale", 1.0), int(spec.get("dim", 1)))
    raise ValueError(f"unknown target family: {family!r}")
