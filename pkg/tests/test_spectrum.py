import numpy as np
import pytest

from ptbands.model import BlochModel, Coefficient, HarmonicTerm, build_paper_model, periodic_distance
from ptbands.spectrum import bz_axis, min_gap, sample_gap_map

PI = np.pi
NODES = [(0, PI / 2), (0, -PI / 2), (PI, PI / 2), (PI, -PI / 2)]


def test_grid_is_endpoint_exclusive():
    axis = bz_axis(8)
    assert axis[0] == -PI
    assert axis[-1] < PI
    np.testing.assert_allclose(np.diff(axis), 2 * PI / 8)


def test_doubled_grid_contains_original_bitwise():
    assert np.array_equal(bz_axis(40), bz_axis(80)[::2])


def test_grid_minima_at_cells_nearest_nodes(paper):
    gm = sample_gap_map(paper, None, 81, 81)
    minima = gm.local_minima(threshold=0.5 * np.median(gm.gap))
    # kx = 0 falls midway between two cells on an odd grid, so each node can own two tied cells
    assert 4 <= len(minima) <= 8
    spacing = 2 * PI / 81
    for i, j in minima:
        k = (gm.kx_values[i], gm.ky_values[j])
        assert min(periodic_distance(k, n) for n in NODES) < spacing
    for n in NODES:
        assert min(periodic_distance((gm.kx_values[i], gm.ky_values[j]), n) for i, j in minima) < spacing


def test_insulating_map_is_positive_with_minimum_near_ky_pi():
    gm = sample_gap_map(build_paper_model(1.5), None, 40, 40)
    assert gm.gap.min() > 0
    k, _ = gm.argmin()
    assert abs(abs(k.ky) - PI) < 1e-12


def test_flat_bands():
    model = BlochModel((), (), (HarmonicTerm(0, 0, "cos", Coefficient(2.0)),), 10.0)
    gm = sample_gap_map(model, None, 5, 7, store_bands=True)
    assert gm.gap.shape == (5, 7)
    np.testing.assert_array_equal(gm.gap, 20.0)
    np.testing.assert_array_equal(gm.bands_high - gm.bands_low, gm.gap)


def test_store_bands_consistency(paper):
    gm = sample_gap_map(paper, {"eta": 0.3}, 16, 12, store_bands=True)
    np.testing.assert_allclose(gm.bands_high - gm.bands_low, gm.gap, atol=1e-14)
    assert np.all(gm.gap >= 0)


def test_row_major_ordering(paper):
    gm = sample_gap_map(paper, None, 6, 5)
    i, j = 4, 2
    expected = 10 * np.hypot(np.sin(gm.kx_values[i]), np.cos(gm.ky_values[j]))
    assert gm.gap[i, j] == pytest.approx(expected, rel=1e-14)


def test_grid_minimum_monotone_under_refinement(paper):
    for params in [None, {"lambda": 0.3}, {"lambda": 1.2, "eta": 0.2}, {"epsilon": 0.4}]:
        prev = np.inf
        for n in (10, 20, 40, 80):
            current = sample_gap_map(paper, params, n, n).gap.min()
            assert current <= prev
            prev = current


def test_inversion_symmetry_of_base_map(paper):
    gm = sample_gap_map(paper, None, 32, 32)
    # index i <-> -k lives at (-i) mod n on this grid
    flipped = np.roll(gm.gap[::-1, ::-1], 1, axis=(0, 1))
    np.testing.assert_allclose(gm.gap, flipped, atol=1e-13)


def test_min_gap_semimetal(paper):
    _, gap = min_gap(paper)
    assert gap == pytest.approx(0.0, abs=1e-8)


def test_min_gap_insulator_against_line_scan():
    model = build_paper_model(1.5)
    ky = np.linspace(-PI, PI, 2001)
    oracle = 10 * np.abs(1.5 + np.cos(ky)).min()
    assert oracle == pytest.approx(5.0, abs=1e-12)
    k, gap = min_gap(model)
    assert gap == pytest.approx(oracle, abs=1e-6)
    assert abs(abs(k.ky) - PI) < 1e-6


def test_min_gap_pt_broken():
    _, gap = min_gap(build_paper_model(0, 0, 0.5))
    assert gap == pytest.approx(5.0, abs=1e-6)


def test_min_gap_bounded_by_map(paper):
    for params in [{"lambda": 1.3}, {"lambda": -1.7, "eta": 0.4}, {"epsilon": 0.2, "lambda": 0.5}]:
        _, gap = min_gap(paper, params)
        assert gap <= sample_gap_map(paper, params, 50, 50).gap.min() + 1e-12


def test_min_gap_grid_too_small(paper):
    with pytest.raises(ValueError):
        min_gap(paper, seed_grid_n=8)
