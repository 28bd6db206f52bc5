"""Shared independent oracles: finite differences and eigenvalue checks.

These are deliberately dumb implementations used to validate the analytic
code paths; they never call the derivative oracles they are checking.
"""

import numpy as np
import pytest


def fd_gradient(f, x, h=1e-5):
    """Central-difference gradient of a scalar function of a point."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_mixed_sum(f, x, y, h=1e-5):
    """Central-difference sum_i d^2 f / dx^i dy^i of a bivariate scalar function."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    total = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        total += (
            f(x + e, y + e) - f(x + e, y - e) - f(x - e, y + e) + f(x - e, y - e)
        ) / (4 * h * h)
    return total


def fd_stein_kernel(kernel, target, x, y, h=1e-4):
    """Finite-difference Stein kernel from the density form.

    Differentiates g(x', y') = p(x') k(x', y') p(y') / (p(x) p(y)), whose
    mixed-derivative trace at (x, y) is the Stein kernel value.  Densities
    enter through exp of the (possibly unnormalized) log-density; the
    rescaling makes the computation well conditioned and the constant
    cancels exactly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lpx = float(target.log_density(x))
    lpy = float(target.log_density(y))

    def g(xx, yy):
        return float(
            np.exp(target.log_density(xx) - lpx + target.log_density(yy) - lpy)
            * kernel.value(xx, yy)
        )

    return fd_mixed_sum(g, x, y, h=h)


def min_eig_ratio(G):
    """Smallest eigenvalue of a symmetric matrix relative to its trace."""
    sym = 0.5 * (G + G.T)
    trace = float(np.trace(sym))
    lam = float(np.linalg.eigvalsh(sym)[0])
    return lam / max(trace, 1e-300)


def assert_gram_psd(G, tol=1e-8):
    assert min_eig_ratio(G) >= -tol, f"Gram matrix has eigenvalue ratio {min_eig_ratio(G)}"


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240801))
