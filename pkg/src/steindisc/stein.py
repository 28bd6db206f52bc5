"""Langevin Stein kernels and the constructions that keep them well behaved.

Applying the Langevin operator ``v -> <s, v> + div v`` in both arguments of
a base kernel K yields the scalar Stein kernel

    k_p(x, y) = sum_i [ d2 K_ii / dx^i dy^i
                        + s_i(x) dK_ii/dy^i + s_i(y) dK_ii/dx^i
                        + s_i(x) s_i(y) K_ii(x, y) ],

which for a scalar base (K = k Id) collapses to the familiar four-term
formula with full gradients.  Everything here evaluates that expansion from
the analytic derivative oracles of :mod:`steindisc.kernels`; no numerical
differentiation is involved.

Matrix bases are restricted to diagonal form (optionally tilted by scalar
functions), which covers every construction this library provides.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .kernels import ScalarFunction, ScalarKernel, radial_decay
from .targets import Target, sphere_points
from .util import generator

__all__ = [
    "DiagonalBase",
    "ScalarAsDiagonal",
    "BoundedTiltBase",
    "ScalarTiltedBase",
    "SteinKernel",
    "VectorField",
    "stein_kernel",
    "apply_stein_operator",
    "bounded_stein_base",
    "score_tilted_base",
    "centered_kernel",
    "CenteredKernel",
    "coercive_stein_function",
    "stein_from_spec",
    "DEFAULT_CHECK_RADII",
]

#: default radii for numeric verification grids (sphere-sampled)
DEFAULT_CHECK_RADII = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0)
_CHECK_POINTS_PER_RADIUS = 512


class DiagonalBase:
    """Diagonal matrix-valued base kernel K = diag(e_1, ..., e_d).

    Each entry is a scalar bivariate function on R^d x R^d; only the i-th
    coordinate partial derivatives of the i-th entry are needed by the Stein
    kernel, so that is all the interface exposes.
    """

    dim: int
    bounded: bool = True
    characteristic: bool = True

    def entry(self, i: int, X: np.ndarray, Y: np.ndarray):
        """Return (value, d/dx^i, d/dy^i, d2/dx^i dy^i) of entry i, each (...)."""
        raise NotImplementedError

    def entry_value(self, i: int, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return self.entry(i, X, Y)[0]

    def spec(self) -> dict:
        raise NotImplementedError


class ScalarAsDiagonal(DiagonalBase):
    """A scalar kernel promoted to k * Id."""

    def __init__(self, k: ScalarKernel):
        self.k = k
        self.dim = k.dim
        self.bounded = k.bounded
        self.characteristic = k.characteristic

    def entry(self, i, X, Y):
        out = self.k.derivatives(X, Y)
        return out.value, out.grad_x[..., i], out.grad_y[..., i], out.mixed_diag[..., i]

    def spec(self):
        return self.k.spec()


class BoundedTiltBase(DiagonalBase):
    """The bounded metrizing construction

        K_ii(x, y) = a(||x||) (x^i y^i + k(x, y)) a(||y||),
        a(r) = (c^2 + r^2)^(-gamma).

    The linear part keeps coordinate projections reachable after tilting,
    while the decay of ``a`` caps the Stein kernel diagonal; with gamma at
    most the target's dissipativity rate the construction controls weak
    convergence, and it stays bounded whenever ||s(x)|| ||x|| is dominated
    by (c^2 + ||x||^2)^gamma.
    """

    def __init__(self, k: ScalarKernel, c: float, gamma: float):
        if c <= 0:
            raise ValueError("tilt requires c > 0")
        self.k = k
        self.c = float(c)
        self.gamma = float(gamma)
        self.dim = k.dim
        self.bounded = True
        self.characteristic = k.characteristic
        self._a = radial_decay(self.c, self.gamma)

    def _tilt(self, X):
        X = np.asarray(X, dtype=float)
        a = self._a.value(X)
        return a, self._a.grad(X)

    def entry(self, i, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        k = self.k.derivatives(X, Y)
        ax, gax = self._tilt(X)
        ay, gay = self._tilt(Y)
        xi = np.broadcast_to(X[..., i], k.value.shape)
        yi = np.broadcast_to(Y[..., i], k.value.shape)
        g = xi * yi + k.value
        dg_x = yi + k.grad_x[..., i]
        dg_y = xi + k.grad_y[..., i]
        dg_xy = 1.0 + k.mixed_diag[..., i]
        gax_i = np.broadcast_to(gax[..., i], k.value.shape)
        gay_i = np.broadcast_to(gay[..., i], k.value.shape)
        value = ax * g * ay
        dxi = (gax_i * g + ax * dg_x) * ay
        dyi = ax * (gay_i * g + ay * dg_y)
        dxiyi = (gax_i * dg_y + ax * dg_xy) * ay + (gax_i * g + ax * dg_x) * gay_i
        return value, dxi, dyi, dxiyi

    def spec(self):
        return {"bounded_tilt": {"c": self.c, "gamma": self.gamma}, "base": self.k.spec()}


class ScalarTiltedBase(DiagonalBase):
    """Entrywise scalar tilt t(x) K_ii(x, y) t(y) of a diagonal base."""

    def __init__(self, inner: DiagonalBase, t: ScalarFunction):
        self.inner = inner
        self.t = t
        self.dim = inner.dim
        self.bounded = inner.bounded
        self.characteristic = inner.characteristic

    def _tilt(self, X):
        X = np.asarray(X, dtype=float)
        t = np.asarray(self.t.value(X), dtype=float)
        if np.any(t <= 0.0):
            raise ValueError("tilt must be strictly positive at queried points")
        return t, np.asarray(self.t.grad(X), dtype=float)

    def entry(self, i, X, Y):
        value, dxi, dyi, dxiyi = self.inner.entry(i, X, Y)
        tx, gtx = self._tilt(X)
        ty, gty = self._tilt(Y)
        tx = np.broadcast_to(tx, value.shape)
        ty = np.broadcast_to(ty, value.shape)
        gtx_i = np.broadcast_to(gtx[..., i], value.shape)
        gty_i = np.broadcast_to(gty[..., i], value.shape)
        new_value = tx * value * ty
        new_dxi = (gtx_i * value + tx * dxi) * ty
        new_dyi = tx * (gty_i * value + ty * dyi)
        new_dxiyi = (gtx_i * dyi + tx * dxiyi) * ty + (gtx_i * value + tx * dxi) * gty_i
        return new_value, new_dxi, new_dyi, new_dxiyi


def _as_diagonal(base) -> DiagonalBase:
    if isinstance(base, DiagonalBase):
        return base
    if isinstance(base, ScalarKernel):
        return ScalarAsDiagonal(base)
    raise TypeError("base must be a ScalarKernel or a DiagonalBase")


class SteinKernel:
    """The scalar kernel obtained by applying the Langevin operator of a
    target in both arguments of a base kernel."""

    def __init__(self, base, target: Target):
        diag = _as_diagonal(base)
        if diag.dim != target.dim:
            raise ValueError(f"base dimension {diag.dim} != target dimension {target.dim}")
        self.base = base
        self._diag = diag
        self.target = target
        self.dim = target.dim
        # scalar bases evaluate in one vectorized pass over all coordinates
        self._scalar = base if isinstance(base, ScalarKernel) else None

    def __call__(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """k_p at broadcastable (..., d) point arrays; returns (...)."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        sx = self.target.score(X)
        sy = self.target.score(Y)
        if self._scalar is not None:
            k = self._scalar.derivatives(X, Y)
            return (
                k.mixed
                + np.einsum("...d,...d->...", sx, k.grad_y)
                + np.einsum("...d,...d->...", sy, k.grad_x)
                + np.einsum("...d,...d->...", sx, sy) * k.value
            )
        total = None
        for i in range(self.dim):
            value, dxi, dyi, dxiyi = self._diag.entry(i, X, Y)
            sxi = np.broadcast_to(sx[..., i], value.shape)
            syi = np.broadcast_to(sy[..., i], value.shape)
            term = dxiyi + sxi * dyi + syi * dxi + sxi * syi * value
            total = term if total is None else total + term
        return total

    def scalar(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return float(self(x, y))

    def pairwise(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Gram block k_p(x_i, y_j), shape (n, m)."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        return self(X[:, None, :], Y[None, :, :])

    def gram(self, X: np.ndarray) -> np.ndarray:
        return self.pairwise(X, X)

    def diagonal(self, X: np.ndarray) -> np.ndarray:
        """k_p(x_i, x_i) for each row of X, shape (n,)."""
        X = np.asarray(X, dtype=float)
        return self(X, X)

    def spec(self) -> dict:
        out = {"target": self.target.spec()}
        base_spec = self._diag.spec()
        if "bounded_tilt" in base_spec:
            out["base"] = base_spec["base"]
            out["tilt"] = base_spec["bounded_tilt"]
        else:
            out["base"] = base_spec
        return out


def stein_kernel(base, target: Target) -> SteinKernel:
    """Build the Stein kernel for a scalar or diagonal base and a target."""
    return SteinKernel(base, target)


@dataclass(frozen=True)
class VectorField:
    """A vector field with a divergence oracle.

    ``value(x) -> (d,)`` and ``divergence(x) -> float`` at a single point.
    """

    value: Callable[[np.ndarray], np.ndarray]
    divergence: Callable[[np.ndarray], float]


def apply_stein_operator(target: Target, v: VectorField, x: np.ndarray) -> float:
    """The Langevin operator <s(x), v(x)> + (div v)(x) at a point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = target.score(x)
    if not np.all(np.isfinite(s)):
        raise ValueError("score is not finite at x")
    val = np.atleast_1d(np.asarray(v.value(x), dtype=float))
    return float(s @ val + v.divergence(x))


def bounded_stein_base(
    k: ScalarKernel,
    c: float = 1.0,
    gamma: float = 1.0,
    target: Target | None = None,
    check_radii: Sequence[float] = DEFAULT_CHECK_RADII,
) -> BoundedTiltBase:
    """Construct the tilted diagonal base diag(a(||x||)(x^i y^i + k) a(||y||)).

    If a target with a dissipativity certificate is supplied, warns when
    gamma exceeds the certified rate u or when ||s(x)|| ||x|| exceeds
    (c^2 + ||x||^2)^gamma on the verification grid (the boundedness
    condition); the construction is returned either way.
    """
    base = BoundedTiltBase(k, c, gamma)
    if target is not None:
        if target.dissipativity is not None and gamma > target.dissipativity.u:
            warnings.warn(
                f"tilt exponent gamma={gamma} exceeds the certified dissipativity "
                f"rate u={target.dissipativity.u}; convergence control is not certified",
                stacklevel=2,
            )
        rng = generator(0)
        for r in check_radii:
            pts = sphere_points(target.dim, float(r), _CHECK_POINTS_PER_RADIUS, rng)
            lhs = np.linalg.norm(target.score(pts), axis=1) * r
            rhs = (c**2 + r**2) ** gamma
            if np.any(lhs > rhs):
                warnings.warn(
                    f"||s(x)|| ||x|| exceeds (c^2+||x||^2)^gamma at radius {r}; "
                    "the Stein kernel may be unbounded",
                    stacklevel=2,
                )
                break
    return base


def score_tilted_base(
    K,
    theta: ScalarFunction,
    target: Target | None = None,
    check_radii: Sequence[float] = DEFAULT_CHECK_RADII,
    points_per_radius: int = _CHECK_POINTS_PER_RADIUS,
) -> ScalarTiltedBase:
    """Tilt a base kernel to K(x, y) / (theta(x) theta(y)).

    theta should dominate the score norm; that is verified on a fixed
    sphere-sampled grid (radii x points, seeded) and a warning is emitted on
    violation.  theta <= 0 anywhere on the grid is an error.
    """
    inner = _as_diagonal(K)
    dim = inner.dim
    rng = generator(0)
    violated = False
    for r in check_radii:
        pts = sphere_points(dim, float(r), points_per_radius, rng)
        tv = np.asarray(theta.value(pts), dtype=float)
        if np.any(tv <= 0.0):
            raise ValueError(f"theta must be positive; found nonpositive value at radius {r}")
        if target is not None and not violated:
            sn = np.linalg.norm(target.score(pts), axis=1)
            if np.any(tv < sn):
                warnings.warn(
                    f"theta falls below ||s(x)|| at radius {r}; the tilted Stein "
                    "kernel may be unbounded",
                    stacklevel=2,
                )
                violated = True
    inv = ScalarFunction(
        value=lambda X: 1.0 / np.asarray(theta.value(X), dtype=float),
        grad=lambda X: -np.asarray(theta.grad(X), dtype=float)
        / np.asarray(theta.value(X), dtype=float)[..., None] ** 2,
    )
    return ScalarTiltedBase(inner, inv)


# ---------------------------------------------------------------------------
# centered kernels


class CenteredKernel:
    """k centered at a reference measure:

        k_c(x, y) = k(x, y) - m(x) - m(y) + mm,

    with m the reference embedding of k and mm its double integral.  Its
    Gram over the reference sample has vanishing row sums by construction.
    """

    def __init__(self, k: ScalarKernel, embed: Callable[[np.ndarray], np.ndarray], double: float):
        self.k = k
        self.dim = k.dim
        self._embed = embed
        self._double = float(double)

    def value(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        return self.k.value(X, Y) - self._embed(X) - self._embed(Y) + self._double

    def pairwise(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        return self.value(X[:, None, :], Y[None, :, :])

    def gram(self, X):
        return self.pairwise(X, X)

    def __call__(self, x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return float(self.value(x, y))


def centered_kernel(k: ScalarKernel, reference, domain: tuple[float, float] = (-12.0, 12.0)) -> CenteredKernel:
    """Center a kernel at an empirical sample or a 1-d target by quadrature.

    ``reference`` is either a weighted sample (used exactly) or a normalized
    1-d target, in which case the embeddings are adaptive quadratures over
    ``domain``.
    """
    from .discrepancy import SampleSet  # local import to avoid a cycle

    if isinstance(reference, SampleSet):
        if reference.points.shape[1] != k.dim:
            raise ValueError("reference sample dimension does not match the kernel")
        pts = reference.points
        w = reference.weights

        def embed(X):
            X = np.asarray(X, dtype=float)
            vals = k.value(X[..., None, :], pts)
            return np.einsum("...n,n->...", vals, w)

        double = float(np.einsum("i,ij,j->", w, k.gram(pts), w))
        return CenteredKernel(k, embed, double)

    if isinstance(reference, Target):
        if reference.dim != 1 or k.dim != 1:
            raise ValueError("quadrature centering requires a 1-d kernel and target")
        density = reference.density
        lo, hi = domain

        def embed_scalar(x):
            val, _ = integrate.quad(
                lambda z: k.value(np.array([x]), np.array([z])) * density(np.array([z]))[()],
                lo,
                hi,
                epsabs=1e-10,
                epsrel=1e-10,
                limit=200,
            )
            return val

        def embed(X):
            X = np.asarray(X, dtype=float)
            flat = X.reshape(-1, 1)
            out = np.array([embed_scalar(float(v[0])) for v in flat])
            return out.reshape(X.shape[:-1])

        double, _ = integrate.quad(
            lambda x: embed_scalar(x) * density(np.array([x]))[()],
            lo,
            hi,
            epsabs=1e-10,
            epsrel=1e-10,
            limit=200,
        )
        return CenteredKernel(k, embed, double)

    raise TypeError("reference must be a SampleSet or a (1-d, normalized) Target")


# ---------------------------------------------------------------------------
# coercive Stein function


def coercive_stein_function(
    target: Target,
    a: float,
    alpha: float,
    x: np.ndarray,
    u: float | None = None,
    gamma: float | None = None,
) -> float:
    """The Langevin operator applied to g_j(x) = -x_j (a^2 + ||x||^2)^(alpha-1):

        -<s(x), x> (a^2+||x||^2)^(alpha-1) - d (a^2+||x||^2)^(alpha-1)
            + 2 (1-alpha) ||x||^2 (a^2+||x||^2)^(alpha-2).

    For a dissipative target this is coercive and bounded below when alpha
    lies in (1-u, (1-gamma)/2) for the certified rate u and base-kernel decay
    gamma; out-of-range alpha triggers a warning, not an error.
    """
    if a <= 0:
        raise ValueError("a must be > 0")
    if u is None and target.dissipativity is not None:
        u = target.dissipativity.u
    if u is not None:
        hi = 0.5 * (1.0 - gamma) if gamma is not None else 0.5
        if not (1.0 - u < alpha < hi):
            warnings.warn(
                f"alpha={alpha} outside the coercivity range ({1.0 - u}, {hi}); "
                "the function may fail to be coercive",
                stacklevel=2,
            )
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = target.score(x)
    if not np.all(np.isfinite(s)):
        raise ValueError("score is not finite at x")
    r2 = float(x @ x)
    base = a * a + r2
    d = target.dim
    return float(
        -(s @ x) * base ** (alpha - 1.0)
        - d * base ** (alpha - 1.0)
        + 2.0 * (1.0 - alpha) * r2 * base ** (alpha - 2.0)
    )


# ---------------------------------------------------------------------------
# JSON specs


def stein_from_spec(spec: dict) -> SteinKernel:
    """Build a Stein kernel from {"base": ..., "target": ..., "tilt": {...}?}.

    The optional "tilt" entry selects the bounded metrizing construction
    with parameters c and gamma applied to the base kernel.
    """
    from .kernels import kernel_from_spec
    from .targets import target_from_spec

    if not isinstance(spec, dict) or "base" not in spec or "target" not in spec:
        raise ValueError('stein spec must contain "base" and "target"')
    k = kernel_from_spec(spec["base"])
    target = target_from_spec(spec["target"])
    if "tilt" in spec and spec["tilt"] is not None:
        t = spec["tilt"]
        base = bounded_stein_base(k, float(t["c"]), float(t["gamma"]), target=target)
        return SteinKernel(base, target)
    return SteinKernel(k, target)
