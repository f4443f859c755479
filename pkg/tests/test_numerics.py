import numpy as np
import pytest

from app.core import numerics
from app.core.numerics import RngStream


def test_std_normal_cdf_reference_values():
    assert numerics.std_normal_cdf(0.0) == 0.5
    assert numerics.std_normal_cdf(-1.41421356) == pytest.approx(0.0786496035, abs=1e-9)
    assert numerics.std_normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-12)


def test_std_normal_cdf_stays_inside_unit_interval():
    p = numerics.std_normal_cdf(np.array([-40.0, 40.0]))
    assert 0.0 < p[0] < 1e-300
    assert p[1] < 1.0
    assert np.all(np.isfinite(np.log(p))) and np.all(np.isfinite(np.log1p(-p)))


def test_std_normal_cdf_vectorized_matches_scalar():
    x = np.linspace(-8, 8, 33)
    vec = numerics.std_normal_cdf(x)
    assert np.allclose(vec, [numerics.std_normal_cdf(v) for v in x], rtol=0, atol=0)


def test_pdf_and_quantile():
    assert numerics.std_normal_pdf(0.0) == pytest.approx(1.0 / np.sqrt(2 * np.pi))
    assert numerics.std_normal_quantile(numerics.std_normal_cdf(1.3)) == pytest.approx(1.3, abs=1e-12)
    assert numerics.std_normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)


def test_expit_values_and_saturation():
    assert numerics.expit(0.0) == 0.5
    assert abs(numerics.expit(40.0) - 1.0) <= 1e-15
    assert numerics.expit(-3.0) == pytest.approx(0.04742587317756678, abs=1e-15)
    assert 0.0 <= numerics.expit(-700.0) < 1e-300
    assert numerics.expit(700.0) == 1.0


def test_logit_inverts_expit():
    x = np.array([-5.0, -0.3, 0.0, 2.5])
    assert np.allclose(numerics.logit(numerics.expit(x)), x, atol=1e-12)


def test_streams_are_reproducible():
    a = numerics.draw_std_normal(RngStream(123, 7), 50)
    b = numerics.draw_std_normal(RngStream(123, 7), 50)
    assert np.array_equal(a, b)


def test_streams_differ_by_index_and_seed():
    base = numerics.draw_std_normal(RngStream(123, 0), 50)
    assert not np.array_equal(base, numerics.draw_std_normal(RngStream(123, 1), 50))
    assert not np.array_equal(base, numerics.draw_std_normal(RngStream(124, 0), 50))


def test_draw_counts():
    assert numerics.draw_std_normal(RngStream(1, 0), 0).shape == (0,)
    with pytest.raises(ValueError):
        numerics.draw_uniform_open(RngStream(1, 0), -1)
    with pytest.raises(ValueError):
        numerics.draw_std_normal(RngStream(1, 0), -3)


def test_uniforms_are_in_open_interval():
    u = numerics.draw_uniform_open(RngStream(5, 3), 100_000)
    assert u.min() > 0.0 and u.max() < 1.0
    assert u.mean() == pytest.approx(0.5, abs=0.005)


def test_normal_moments():
    z = numerics.draw_std_normal(RngStream(2024, 11), 200_000)
    assert np.all(np.isfinite(z))
    assert abs(z.mean()) < 0.01
    assert z.var() == pytest.approx(1.0, abs=0.015)


@pytest.mark.parametrize("seed,index", [(-1, 0), (2**64, 0), (0, -1)])
def test_rng_stream_rejects_bad_arguments(seed, index):
    with pytest.raises(ValueError):
        RngStream(seed, index)
