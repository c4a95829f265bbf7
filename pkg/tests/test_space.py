import numpy as np
import pytest
from scipy import stats

from ttsense.errors import DomainError, RangeError
from ttsense.space import (
    AxisGrid,
    Distribution,
    ModelSpace,
    build_axis,
    index_to_point,
    nearest_index,
    uniform_space,
)


def test_uniform_midpoints():
    ax = build_axis(Distribution("uniform", (0, 1)), 4)
    np.testing.assert_allclose(ax.nodes, [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(ax.weights, 0.25)


def test_normal_quantiles_match_scipy():
    ax = build_axis(Distribution("normal", (1.0, 2.0)), 7)
    u = (np.arange(7) + 0.5) / 7
    np.testing.assert_allclose(ax.nodes, stats.norm(1.0, 2.0).ppf(u), rtol=1e-13)


def test_lognormal_and_scaled():
    u = (np.arange(5) + 0.5) / 5
    ax = build_axis(Distribution("lognormal", (0.3, 0.5)), 5)
    np.testing.assert_allclose(ax.nodes, stats.lognorm(0.5, scale=np.exp(0.3)).ppf(u), rtol=1e-12)
    ax2 = build_axis(Distribution("scaled_lognormal", (3.0, 0.3, 0.5)), 5)
    np.testing.assert_allclose(ax2.nodes, 3.0 * ax.nodes, rtol=1e-13)


def test_truncated_normal_matches_scipy():
    d = Distribution("normal", (0.0, 1.0), (-1.0, 2.0))
    ax = build_axis(d, 9)
    u = (np.arange(9) + 0.5) / 9
    np.testing.assert_allclose(ax.nodes, stats.truncnorm(-1.0, 2.0).ppf(u), rtol=1e-10)
    assert ax.nodes.min() > -1.0 and ax.nodes.max() < 2.0


def test_one_sided_truncation():
    d = Distribution("lognormal", (0.0, 1.0), (None, 2.0))
    assert build_axis(d, 20).nodes.max() < 2.0


def test_truncated_mean():
    d = Distribution("normal", (0.0, 1.0), (0.0, None))
    assert d.mean() == pytest.approx(np.sqrt(2 / np.pi), rel=1e-8)


@pytest.mark.parametrize(
    "kind,params,trunc",
    [
        ("uniform", (1, 1), None),
        ("normal", (0, -1), None),
        ("weibull", (1, 1), None),
        ("normal", (0, 1, 2), None),
        ("normal", (0, 1), (2, 1)),
        ("normal", (0, 1), (40, 50)),
        ("scaled_lognormal", (-1, 0, 1), None),
    ],
)
def test_invalid_distributions(kind, params, trunc):
    with pytest.raises(DomainError):
        Distribution(kind, params, trunc)


def test_axis_validation():
    with pytest.raises(DomainError):
        AxisGrid([0.0, 0.0], [0.5, 0.5])
    with pytest.raises(DomainError):
        AxisGrid([0.0, 1.0], [0.5, 0.6])
    with pytest.raises(DomainError):
        build_axis(Distribution("uniform", (0, 1)), 0)


def test_space_points_and_errors():
    sp = uniform_space(3, 4, names=["a", "b", "c"])
    assert sp.mode_sizes == (4, 4, 4)
    assert index_to_point(sp, [0, 3, 1]) == [0.125, 0.875, 0.375]
    with pytest.raises(RangeError):
        index_to_point(sp, [0, 4, 1])
    with pytest.raises(RangeError):
        index_to_point(sp, [0, 1])
    assert nearest_index(sp, [0.1, 0.9, 0.4]) == [0, 3, 1]
    with pytest.raises(DomainError):
        ModelSpace((sp.axes[0], sp.axes[1]), ("a", "a"))


def test_default_names():
    assert uniform_space(2, 3).names == ("x1", "x2")


def test_sample_maps_unit_cube():
    sp = ModelSpace((build_axis(Distribution("uniform", (2, 4)), 3),
                     build_axis(Distribution("normal", (0, 1)), 3)))
    X = sp.sample(np.array([[0.5, 0.5], [0.25, 0.975]]))
    np.testing.assert_allclose(X, [[3.0, 0.0], [2.5, stats.norm.ppf(0.975)]], rtol=1e-12)
