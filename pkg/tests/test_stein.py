"""Stein kernels: oracle equivalence, zero mean, bounded constructions."""

import math
import warnings

import numpy as np
import pytest
from scipy import integrate

import steindisc as sd
from steindisc.stein import stein_from_spec

from conftest import assert_gram_psd, fd_stein_kernel


def oracle_matrix():
    kernels = {
        "gaussian": lambda d: sd.GaussianKernel(1.0, d),
        "imq": lambda d: sd.IMQKernel(1.0, 0.5, d),
        "matern32": lambda d: sd.Matern32Kernel(1.0, d),
    }
    targets = {
        "std_normal": sd.GaussianTarget([0.0], [1.0]),
        "std_normal_3d": sd.GaussianTarget([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]),
        "cauchy": sd.CauchyTarget(),
        "mixture": sd.GaussianMixtureTarget([0.4, 0.6], [[-1.5], [2.0]], [[1.0], [0.49]]),
    }
    return kernels, targets


def test_stein_kernel_matches_density_form_oracle(rng):
    kernels, targets = oracle_matrix()
    for tname, target in targets.items():
        for kname, make in kernels.items():
            sk = sd.stein_kernel(make(target.dim), target)
            X = rng.normal(size=(12, target.dim))
            Y = X + 0.5 * rng.normal(size=(12, target.dim))
            for i in range(X.shape[0]):
                analytic = sk.scalar(X[i], Y[i])
                oracle = fd_stein_kernel(make(target.dim), target, X[i], Y[i])
                assert analytic == pytest.approx(oracle, rel=1e-4, abs=1e-6), (tname, kname)


def test_stein_kernel_symmetry(rng):
    _, targets = oracle_matrix()
    for target in targets.values():
        sk = sd.stein_kernel(sd.IMQKernel(1.0, 0.5, target.dim), target)
        X = rng.normal(size=(20, target.dim))
        G = sk.gram(X)
        np.testing.assert_allclose(G, G.T, atol=1e-12)


def test_stein_gram_psd(rng):
    kernels, targets = oracle_matrix()
    for target in targets.values():
        for make in kernels.values():
            sk = sd.stein_kernel(make(target.dim), target)
            X = rng.normal(size=(30, target.dim))
            assert_gram_psd(sk.gram(X))


def test_stein_kernel_diag_nonnegative(rng):
    _, targets = oracle_matrix()
    for target in targets.values():
        sk = sd.stein_kernel(sd.GaussianKernel(1.0, target.dim), target)
        X = rng.normal(scale=3.0, size=(50, target.dim))
        diag = sk.diagonal(X)
        assert np.all(diag >= -1e-8 * np.maximum(1.0, np.abs(diag)))


def test_standard_normal_gaussian_base_closed_form():
    # k_p(x, x) = 1/l^2 + x^2 for P = N(0,1) and a gaussian base in 1-d
    t = sd.GaussianTarget([0.0], [1.0])
    sk = sd.stein_kernel(sd.GaussianKernel(1.0, 1), t)
    assert sk.scalar(0.0, 0.0) == pytest.approx(1.0, abs=1e-12)
    for x in [0.5, 1.0, 3.0]:
        assert sk.scalar(x, x) == pytest.approx(1.0 + x * x, rel=1e-12)


def test_stein_zero_mean_quadrature():
    # for each base family, the double integral of k_p under P vanishes
    t = sd.GaussianTarget([0.0], [1.0])
    bases = [
        sd.GaussianKernel(1.0, 1),
        sd.IMQKernel(1.0, 0.5, 1),
        sd.Matern32Kernel(1.0, 1),
        sd.InverseLogKernel(1.0, 1),
        sd.SechKernel(1.0, 1),
        sd.LinearKernel(1),
    ]
    for base in bases:
        sk = sd.stein_kernel(base, t)
        with warnings.catch_warnings():
            # a zero integral confuses quadpack's convergence heuristic
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.dblquad(
            lambda y, x: sk.scalar(x, y)
            * float(t.density(np.array([x])))
            * float(t.density(np.array([y]))),
                -12.0,
                12.0,
                -12.0,
                12.0,
                epsabs=1e-9,
                epsrel=1e-7,
            )
        assert abs(val) <= 1e-6, base.family


def test_missing_custom_derivative_oracle():
    k = sd.CustomKernel(1, lambda X, Y: np.ones(np.broadcast(X[..., 0], Y[..., 0]).shape), None, None, None)
    sk = sd.stein_kernel(k, sd.GaussianTarget([0.0], [1.0]))
    with pytest.raises(TypeError):
        sk.scalar(0.0, 0.0)


# ---------------------------------------------------------------------------
# Stein operator


def test_stein_operator_constant_field():
    t = sd.GaussianTarget([0.0], [1.0])
    v = sd.VectorField(lambda x: np.ones(1), lambda x: 0.0)
    assert sd.apply_stein_operator(t, v, [2.0]) == pytest.approx(-2.0)


def test_stein_operator_linear_field():
    t = sd.GaussianTarget([0.0], [1.0])
    v = sd.VectorField(lambda x: x, lambda x: 1.0)
    assert sd.apply_stein_operator(t, v, [0.0]) == pytest.approx(1.0)


def test_stein_operator_has_zero_target_mean():
    t = sd.GaussianTarget([0.0], [1.0])
    v = sd.VectorField(lambda x: x, lambda x: 1.0)
    val, _ = integrate.quad(
        lambda x: sd.apply_stein_operator(t, v, [x]) * float(t.density(np.array([x]))),
        -10.0,
        10.0,
        epsabs=1e-10,
    )
    assert abs(val) <= 1e-6


# ---------------------------------------------------------------------------
# bounded constructions


def test_bounded_base_entry_value_at_origin():
    k = sd.GaussianKernel(1.0, 1)
    base = sd.bounded_stein_base(k, c=1.0, gamma=1.0)
    value, _, _, _ = base.entry(0, np.zeros(1), np.zeros(1))
    assert float(value) == pytest.approx(1.0)


def test_bounded_base_caps_diagonal():
    t = sd.GaussianTarget([0.0], [1.0])
    k = sd.GaussianKernel(1.0, 1)
    base = sd.bounded_stein_base(k, c=1.0, gamma=1.0, target=t)
    sk = sd.stein_kernel(base, t)
    xs = np.linspace(-50, 50, 201)[:, None]
    diag = sk.diagonal(xs)
    near = diag[np.abs(xs[:, 0]) <= 5.0]
    assert diag.max() <= 10.0 * near.max()
    # closed form for this configuration: (x^2 + 2) / (x^2 + 1)
    np.testing.assert_allclose(diag, (xs[:, 0] ** 2 + 2) / (xs[:, 0] ** 2 + 1), rtol=1e-10)


def test_plain_base_diagonal_grows():
    t = sd.GaussianTarget([0.0], [1.0])
    sk = sd.stein_kernel(sd.GaussianKernel(1.0, 1), t)
    assert sk.scalar(50.0, 50.0) > 100.0 * sk.scalar(0.0, 0.0)


def test_boundedness_dichotomy():
    t = sd.GaussianTarget([0.0], [1.0])
    k = sd.GaussianKernel(1.0, 1)
    grid50 = np.linspace(-50, 50, 401)[:, None]
    grid10 = np.linspace(-10, 10, 81)[:, None]
    tilted = sd.stein_kernel(sd.bounded_stein_base(k, 1.0, 1.0, target=t), t)
    assert tilted.diagonal(grid50).max() <= 2.0 * tilted.diagonal(grid10).max()
    plain = sd.stein_kernel(k, t)
    assert plain.diagonal(grid50).max() >= 10.0 * plain.diagonal(grid10).max()


def test_bounded_base_oracle_equivalence(rng):
    # product-rule assembly of the tilted entries matches the density form
    t = sd.GaussianTarget([0.0], [1.0])
    base = sd.bounded_stein_base(sd.GaussianKernel(1.0, 1), c=1.0, gamma=1.0, target=t)
    sk = sd.stein_kernel(base, t)

    class EntryKernel:
        def value(self, X, Y):
            X = np.asarray(X, dtype=float)
            Y = np.asarray(Y, dtype=float)
            return base.entry_value(0, X, Y)

    X = rng.normal(size=(10, 1))
    Y = X + 0.4 * rng.normal(size=(10, 1))
    for i in range(10):
        oracle = fd_stein_kernel(EntryKernel(), t, X[i], Y[i])
        assert sk.scalar(X[i], Y[i]) == pytest.approx(oracle, rel=1e-4, abs=1e-6)


def test_bounded_base_gram_psd(rng):
    t = sd.GaussianTarget([0.0], [1.0])
    base = sd.bounded_stein_base(sd.IMQKernel(1.0, 0.5, 1), c=1.0, gamma=1.0, target=t)
    sk = sd.stein_kernel(base, t)
    X = rng.normal(size=(40, 1))
    assert_gram_psd(sk.gram(X))

    # block Gram of the diagonal base itself: entries on the block diagonal
    n, d = 15, 1
    pts = rng.normal(size=(n, d))
    block = np.zeros((n * d, n * d))
    for i in range(d):
        vals = base.entry_value(i, pts[:, None, :], pts[None, :, :])
        block[i::d, i::d] = vals
    assert_gram_psd(block)


def test_bounded_base_warns_when_gamma_exceeds_rate():
    t = sd.GaussianTarget([0.0], [1.0])
    with pytest.warns(UserWarning, match="gamma"):
        sd.bounded_stein_base(sd.GaussianKernel(1.0, 1), c=1.0, gamma=2.0, target=t)


def test_score_tilt_identity(rng):
    t = sd.GaussianTarget([0.0], [1.0])
    one = sd.ScalarFunction(
        lambda X: np.ones(np.asarray(X).shape[:-1]), lambda X: np.zeros_like(np.asarray(X))
    )
    k = sd.GaussianKernel(1.0, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")  # theta == 1 < ||s|| far out should warn, so no target
        tilted = sd.score_tilted_base(k, one)
    sk_plain = sd.stein_kernel(k, t)
    sk_tilted = sd.stein_kernel(tilted, t)
    X = rng.normal(size=(10, 1))
    Y = rng.normal(size=(10, 1))
    np.testing.assert_allclose(sk_tilted(X, Y), sk_plain(X, Y), rtol=1e-12)


def test_score_tilt_bounds_diagonal():
    t = sd.GaussianTarget([0.0], [1.0])
    theta = sd.ScalarFunction(
        lambda X: 1.0 + np.abs(np.asarray(X)[..., 0]),
        lambda X: np.sign(np.asarray(X)),
    )
    tilted = sd.score_tilted_base(sd.GaussianKernel(1.0, 1), theta, target=t)
    sk = sd.stein_kernel(tilted, t)
    xs = np.linspace(-50, 50, 501)[:, None]
    diag = sk.diagonal(xs)
    assert diag.max() / diag.min() <= 100.0


def test_score_tilt_warns_on_violation():
    t = sd.GaussianTarget([0.0], [1.0])
    small = sd.ScalarFunction(
        lambda X: np.full(np.asarray(X).shape[:-1], 0.5),
        lambda X: np.zeros_like(np.asarray(X)),
    )
    with pytest.warns(UserWarning, match="theta"):
        base = sd.score_tilted_base(sd.GaussianKernel(1.0, 1), small, target=t)
    assert base is not None  # construction still returned


def test_score_tilt_rejects_nonpositive_theta():
    t = sd.GaussianTarget([0.0], [1.0])
    bad = sd.ScalarFunction(
        lambda X: -np.ones(np.asarray(X).shape[:-1]), lambda X: np.zeros_like(np.asarray(X))
    )
    with pytest.raises(ValueError, match="positive"):
        sd.score_tilted_base(sd.GaussianKernel(1.0, 1), bad, target=t)


# ---------------------------------------------------------------------------
# centered kernels


def test_centered_kernel_single_point():
    k = sd.GaussianKernel(1.0, 1)
    ref = sd.SampleSet(np.array([[0.7]]))
    ck = sd.centered_kernel(k, ref)
    assert ck(np.array([0.7]), np.array([0.7])) == pytest.approx(0.0, abs=1e-14)


def test_centered_kernel_mean_zero_over_reference(rng):
    k = sd.IMQKernel(1.0, 0.5, 2)
    pts = rng.normal(size=(30, 2))
    ck = sd.centered_kernel(k, sd.SampleSet(pts))
    G = ck.gram(pts)
    assert abs(G.mean()) <= 1e-10
    np.testing.assert_allclose(G.sum(axis=1) / 30, 0.0, atol=1e-10)


def test_centered_kernel_quadrature_matches_closed_form():
    # for a gaussian kernel and standard normal reference:
    # E k(0, Z) = 1/sqrt(2), E k(Z, Z') = 1/sqrt(3)
    k = sd.GaussianKernel(1.0, 1)
    t = sd.GaussianTarget([0.0], [1.0])
    ck = sd.centered_kernel(k, t)
    expected = 1.0 - 2.0 / math.sqrt(2.0) + 1.0 / math.sqrt(3.0)
    assert ck(np.zeros(1), np.zeros(1)) == pytest.approx(expected, abs=1e-6)


def test_centered_kernel_bad_reference():
    k = sd.GaussianKernel(1.0, 1)
    with pytest.raises(TypeError):
        sd.centered_kernel(k, "not a reference")
    with pytest.raises(ValueError):
        sd.centered_kernel(k, sd.CauchyTarget(dim=2))


# ---------------------------------------------------------------------------
# coercive Stein function


def test_coercive_function_at_origin():
    t = sd.GaussianTarget([0.0], [1.0])
    # only the -d (a^2)^(alpha-1) term survives at the origin
    assert sd.coercive_stein_function(t, a=1.0, alpha=0.25, x=[0.0]) == pytest.approx(-1.0)


def test_coercive_function_matches_operator_form(rng):
    # the closed form equals <s, g> + div g for g(x) = -x (a^2 + |x|^2)^(alpha - 1)
    t = sd.GaussianTarget([0.0, 0.0], [1.0, 1.0])
    a, alpha = 1.3, 0.2

    def g(x):
        return -x * (a**2 + x @ x) ** (alpha - 1.0)

    def div_g(x):
        r2 = x @ x
        return -t.dim * (a**2 + r2) ** (alpha - 1.0) - 2.0 * (alpha - 1.0) * r2 * (
            a**2 + r2
        ) ** (alpha - 2.0)

    v = sd.VectorField(g, div_g)
    for _ in range(10):
        x = rng.normal(scale=2.0, size=2)
        direct = sd.coercive_stein_function(t, a, alpha, x)
        via_operator = sd.apply_stein_operator(t, v, x)
        assert direct == pytest.approx(via_operator, rel=1e-12)


def test_coercive_function_increases_with_radius():
    t = sd.GaussianTarget([0.0], [1.0])
    vals = [sd.coercive_stein_function(t, 1.0, 0.25, [r]) for r in (5.0, 10.0, 20.0)]
    assert vals[0] < vals[1] < vals[2]


def test_coercive_function_bounded_below():
    t = sd.GaussianTarget([0.0], [1.0])
    grid = np.linspace(-20, 20, 401)
    vals = [sd.coercive_stein_function(t, 1.0, 0.25, [x]) for x in grid]
    assert min(vals) >= -2.0


def test_coercive_function_warns_out_of_range():
    t = sd.GaussianTarget([0.0], [1.0])
    with pytest.warns(UserWarning, match="alpha"):
        sd.coercive_stein_function(t, 1.0, 0.9, [1.0], u=1.0, gamma=0.5)


# ---------------------------------------------------------------------------
# JSON specs


def test_stein_spec_roundtrip():
    spec = {
        "base": {"family": "gaussian", "params": {"lengthscale": 1.0}, "dim": 1},
        "target": {"family": "gaussian", "mean": [0.0], "cov_diag": [1.0]},
    }
    sk = stein_from_spec(spec)
    assert sk.scalar(0.0, 0.0) == pytest.approx(1.0)
    got = sk.spec()
    assert got["base"]["family"] == "gaussian"
    assert got["target"]["family"] == "gaussian"

    spec["tilt"] = {"c": 1.0, "gamma": 1.0}
    sk = stein_from_spec(spec)
    assert sk.scalar(0.0, 0.0) == pytest.approx(2.0)
    assert sk.spec()["tilt"] == {"c": 1.0, "gamma": 1.0}

    with pytest.raises(ValueError):
        stein_from_spec({"base": spec["base"]})
