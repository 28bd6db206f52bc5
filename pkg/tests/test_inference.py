"""GOF testing, SVGD, and sample ranking."""

import math

import numpy as np
import pytest

import steindisc as sd
from steindisc.util import generator


STD_NORMAL = sd.GaussianTarget([0.0], [1.0])


def imq_stein():
    return sd.stein_kernel(sd.IMQKernel(1.0, 0.5, 1), STD_NORMAL)


# ---------------------------------------------------------------------------
# gof_test


def test_gof_preconditions():
    sk = imq_stein()
    tiny = sd.SampleSet(np.zeros((5, 1)))
    with pytest.raises(ValueError, match="10 points"):
        sd.gof_test(sk, tiny)
    ok = sd.SampleSet(STD_NORMAL.sample(generator(0), 50))
    with pytest.raises(ValueError, match="bootstrap"):
        sd.gof_test(sk, ok, n_bootstrap=50)


def test_gof_deterministic_given_seed():
    sk = imq_stein()
    q = sd.SampleSet(STD_NORMAL.sample(generator(5), 100))
    a = sd.gof_test(sk, q, seed=11, n_bootstrap=200)
    b = sd.gof_test(sk, q, seed=11, n_bootstrap=200)
    assert a == b
    c = sd.gof_test(sk, q, seed=12, n_bootstrap=200)
    assert c.p_value != a.p_value or c.statistic == a.statistic


def test_gof_result_invariants():
    sk = imq_stein()
    q = sd.SampleSet(STD_NORMAL.sample(generator(1), 100))
    res = sd.gof_test(sk, q, alpha=0.05, n_bootstrap=200, seed=0)
    assert 0.0 <= res.p_value <= 1.0
    assert res.reject == (res.p_value <= res.alpha)
    assert res.statistic == pytest.approx(
        100 * sd.ksd_u_stat(sk, q).squared_value, rel=1e-10
    )


def test_gof_level_small_sim():
    sk = imq_stein()
    rejects = []
    for rep in range(60):
        X = STD_NORMAL.sample(generator(40_000 + rep), 200)
        rejects.append(sd.gof_test(sk, sd.SampleSet(X), n_bootstrap=200, seed=rep).reject)
    assert 0.0 <= np.mean(rejects) <= 0.15


def test_gof_rejects_shifted_alternative():
    sk = imq_stein()
    alt = sd.GaussianTarget([1.0], [1.0])
    X = alt.sample(generator(77), 200)
    res = sd.gof_test(sk, sd.SampleSet(X), n_bootstrap=200, seed=0)
    assert res.reject


def test_gof_pvalues_near_uniform_under_null():
    sk = imq_stein()
    pvals = []
    for rep in range(200):
        X = STD_NORMAL.sample(generator(60_000 + rep), 200)
        pvals.append(sd.gof_test(sk, sd.SampleSet(X), n_bootstrap=200, seed=rep).p_value)
    ps = np.sort(pvals)
    n = len(ps)
    ks = max(
        float(np.abs(ps - np.arange(1, n + 1) / n).max()),
        float(np.abs(ps - np.arange(n) / n).max()),
    )
    assert ks <= 0.15


# ---------------------------------------------------------------------------
# svgd_run


def test_svgd_config_validation():
    with pytest.raises(ValueError):
        sd.SVGDConfig(step_size=0.0, iterations=1)
    with pytest.raises(ValueError):
        sd.SVGDConfig(step_size=0.1, iterations=-1)
    with pytest.raises(ValueError):
        sd.SVGDConfig(step_size=0.1, iterations=1, kernel_choice="bogus")


def test_svgd_zero_iterations_is_identity():
    rng = generator(3)
    init = sd.SampleSet(rng.standard_normal((20, 1)))
    out = sd.svgd_run(STD_NORMAL, sd.SVGDConfig(0.05, 0), init, sd.GaussianKernel(1.0, 1))
    np.testing.assert_array_equal(out.points, init.points)


def test_svgd_symmetric_pair_is_fixed_point():
    # +/- x* with 3 exp(-2 x*^2) = 1 zeroes the update direction exactly
    xstar = math.sqrt(math.log(3.0) / 2.0)
    init = sd.SampleSet(np.array([[xstar], [-xstar]]))
    out = sd.svgd_run(
        STD_NORMAL, sd.SVGDConfig(0.1, 50), init, sd.GaussianKernel(1.0, 1)
    )
    np.testing.assert_allclose(out.points, init.points, atol=1e-12)


def test_svgd_converges_to_standard_normal():
    rng = generator(42)
    init = sd.SampleSet(3.0 + 0.5 * rng.standard_normal((100, 1)))
    out = sd.svgd_run(
        STD_NORMAL,
        sd.SVGDConfig(step_size=0.05, iterations=500, seed=42),
        init,
        sd.GaussianKernel(1.0, 1),
    )
    assert abs(out.points.mean()) <= 0.1
    assert abs(out.points.var() - 1.0) <= 0.15


def test_svgd_translation_equivariance():
    rng = generator(9)
    init = sd.SampleSet(rng.standard_normal((50, 1)) + 2.0)
    cfg = sd.SVGDConfig(step_size=0.05, iterations=100)
    k = sd.GaussianKernel(1.0, 1)
    out0 = sd.svgd_run(STD_NORMAL, cfg, init, k)
    mu = 1.5
    shifted = sd.GaussianTarget([mu], [1.0])
    out1 = sd.svgd_run(shifted, cfg, sd.SampleSet(init.points + mu), k)
    np.testing.assert_allclose(out1.points, out0.points + mu, atol=1e-8)


def test_svgd_bounded_construction_driver():
    t = STD_NORMAL
    base = sd.bounded_stein_base(sd.GaussianKernel(1.0, 1), 1.0, 1.0, target=t)
    rng = generator(4)
    init = sd.SampleSet(2.0 + 0.5 * rng.standard_normal((50, 1)))
    cfg = sd.SVGDConfig(0.05, 300, kernel_choice="bounded_stein_construction")
    out = sd.svgd_run(t, cfg, init, base)
    # moves toward the target mode
    assert abs(out.points.mean()) < abs(init.points.mean())
    with pytest.raises(TypeError):
        sd.svgd_run(t, cfg, init, sd.GaussianKernel(1.0, 1))


def test_svgd_divergence_reports_iteration():
    cfg = sd.SVGDConfig(step_size=1e8, iterations=100)
    init = sd.SampleSet(np.array([[10.0], [-10.0], [5.0]]))
    with pytest.raises(sd.SvgdDiverged) as err:
        sd.svgd_run(STD_NORMAL, cfg, init, sd.GaussianKernel(1.0, 1))
    assert err.value.iteration >= 0


def test_svgd_trace_called_each_iteration():
    rng = generator(1)
    init = sd.SampleSet(rng.standard_normal((10, 1)))
    seen = []
    sd.svgd_run(
        STD_NORMAL,
        sd.SVGDConfig(0.05, 7),
        init,
        sd.GaussianKernel(1.0, 1),
        trace=lambda it, pts: seen.append(it),
    )
    assert seen == list(range(1, 8))


# ---------------------------------------------------------------------------
# rank_samples


def test_rank_samples_orders_by_discrepancy():
    sk = imq_stein()
    wins = 0
    for rep in range(100):
        on = sd.SampleSet(STD_NORMAL.sample(generator(rep), 500))
        off = sd.SampleSet(sd.GaussianTarget([2.0], [1.0]).sample(generator(10_000 + rep), 500))
        ranked = sd.rank_samples(sk, [off, on])
        if ranked[0].index == 1:
            wins += 1
    assert wins >= 95


def test_rank_samples_single_candidate():
    sk = imq_stein()
    q = sd.SampleSet(STD_NORMAL.sample(generator(0), 50))
    ranked = sd.rank_samples(sk, [q])
    assert len(ranked) == 1 and ranked[0].index == 0


def test_rank_samples_stable_ties():
    sk = imq_stein()
    q = sd.SampleSet(STD_NORMAL.sample(generator(0), 50))
    ranked = sd.rank_samples(sk, [q, q, q])
    assert [r.index for r in ranked] == [0, 1, 2]


def test_rank_samples_empty_errors():
    with pytest.raises(ValueError):
        sd.rank_samples(imq_stein(), [])
