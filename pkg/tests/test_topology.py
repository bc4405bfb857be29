import itertools
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptbands.errors import ConvergenceError, DegeneracyError, NodalLineError, NodeIsolationError
from ptbands.model import BlochModel, Coefficient, HarmonicTerm, build_paper_model, pauli_matrix, periodic_distance, wrap_angle
from ptbands.topology import (
    WindingUndefinedError,
    annotate_nodes,
    berry_phase,
    capsule_loop,
    circle_loop,
    ellipse_loop,
    find_nodes,
    lambda_scan,
    loop_charge,
    quantization_residue,
    refine_node,
    winding_number,
    z2_charge,
)

from conftest import random_model

PI = np.pi
NODES_L0 = [(0, PI / 2), (0, -PI / 2), (PI, PI / 2), (PI, -PI / 2)]


# -- independent oracles -------------------------------------------------------


def wilson_oracle(model, params, loop):
    """Berry phase with eigh eigenvectors (an unrelated gauge) and an explicit product."""
    g = model.bloch_vector(loop[:, 0], loop[:, 1], params)
    _, vecs = np.linalg.eigh(pauli_matrix(g))
    lower = vecs[..., :, 0]
    prod = 1.0 + 0j
    for j in range(len(loop)):
        prod *= np.vdot(lower[j], lower[(j + 1) % len(loop)])
    return -np.angle(prod)


def crossing_oracle(model, params, loop):
    """Signed crossings of the positive g3 axis by (g3, g2): a ray-casting winding count."""
    g = model.bloch_vector(loop[:, 0], loop[:, 1], params)
    x, y = g[:, 2], g[:, 1]
    total = 0
    for j in range(len(loop)):
        x0, y0, x1, y1 = x[j], y[j], x[(j + 1) % len(loop)], y[(j + 1) % len(loop)]
        if (y0 <= 0 < y1) or (y1 <= 0 < y0):
            xc = x0 + (x1 - x0) * (0 - y0) / (y1 - y0)
            if xc > 0:
                total += 1 if y1 > y0 else -1
    return total


def phase_close(a, b, tol):
    return abs(wrap_angle(a - b)) < tol


# -- refine_node ------------------------------------------------------------------


def test_refine_dirac_node(paper):
    k, r = refine_node(paper, None, (0.1, 1.5))
    assert periodic_distance(k, (0, PI / 2)) < 1e-10
    assert r < 1e-10


def test_refine_merging_point(paper):
    k, r = refine_node(paper, {"lambda": 1}, (0.1, 3.0))
    assert periodic_distance(k, (0, PI)) < 1e-6
    assert r < 1e-8


def test_refine_uses_minimisation_when_jacobian_singular(paper, caplog):
    with caplog.at_level(logging.DEBUG, logger="ptbands.topology"):
        k, _ = refine_node(paper, {"lambda": 1}, (0.05, PI))
    assert "minimize" in caplog.text
    assert periodic_distance(k, (0, PI)) < 1e-6


def test_refine_gapped_region_fails(paper):
    with pytest.raises(ConvergenceError) as info:
        refine_node(paper, {"lambda": 1.5}, (0.1, 3.0))
    assert info.value.residual >= 0.5 - 1e-12
    assert info.value.best is not None


def test_refine_without_pt_uses_least_squares():
    # g = (sin ky, sin kx, cos ky - 1): PT broken but crossings remain at (0, 0) and (pi, 0)
    model = BlochModel(
        (HarmonicTerm(0, 1, "sin", Coefficient(1.0)),),
        (HarmonicTerm(1, 0, "sin", Coefficient(1.0)),),
        (HarmonicTerm(0, 0, "cos", Coefficient(-1.0)), HarmonicTerm(0, 1, "cos", Coefficient(1.0))),
    )
    k, r = refine_node(model, None, (0.2, 0.2))
    assert periodic_distance(k, (0, 0)) < 1e-6
    assert r < 1e-8


# -- find_nodes -------------------------------------------------------------------


@pytest.mark.parametrize("grid_n", [32, 61, 64, 97])
def test_find_four_nodes(paper, grid_n):
    nodes = find_nodes(paper, None, grid_n)
    assert len(nodes) == 4
    for target in NODES_L0:
        assert min(periodic_distance(n.k, target) for n in nodes) < 1e-6
    assert [tuple(n.k) for n in nodes] == sorted(tuple(n.k) for n in nodes)


def test_find_merged_nodes(paper):
    nodes = find_nodes(paper, {"lambda": 1})
    assert len(nodes) == 2
    for target in [(0, PI), (PI, PI)]:
        assert min(periodic_distance(n.k, target) for n in nodes) < 1e-6


def test_find_shifted_nodes(paper):
    nodes = find_nodes(paper, {"eta": 0.5})
    assert len(nodes) == 4
    for kx, ky in itertools.product([-PI / 6, -5 * PI / 6], [PI / 2, -PI / 2]):
        assert min(periodic_distance(n.k, (kx, ky)) for n in nodes) < 1e-6


@pytest.mark.parametrize("params", [{"lambda": 1.5}, {"epsilon": 0.5}, {"lambda": -1.2}])
def test_find_no_nodes(paper, params):
    assert find_nodes(paper, params) == []


def test_nodal_line_guard():
    model = BlochModel((), (), (HarmonicTerm(0, 1, "cos", Coefficient(1.0)),))
    with pytest.raises(NodalLineError):
        find_nodes(model)


def test_find_nodes_grid_too_small(paper):
    with pytest.raises(ValueError):
        find_nodes(paper, None, 16)


# -- Berry phase and winding ------------------------------------------------------


def test_berry_phase_around_single_node(paper):
    phase = berry_phase(paper, None, circle_loop((0, PI / 2), 0.3, 256))
    assert quantization_residue(phase) < 1e-6
    assert phase_close(phase, PI, 1e-6)


def test_berry_phase_trivial_loop(paper):
    phase = berry_phase(paper, None, circle_loop((PI / 2, 0), 0.3, 256))
    assert phase_close(phase, 0.0, 1e-6)


def test_berry_phase_around_pair(paper):
    loop = ellipse_loop((0, 0), (0.5, 2.2), 1024)
    phase = berry_phase(paper, None, loop)
    assert phase_close(phase, 0.0, 1e-6)
    w_up = crossing_oracle(paper, None, circle_loop((0, PI / 2), 0.3))
    w_down = crossing_oracle(paper, None, circle_loop((0, -PI / 2), 0.3))
    assert abs(w_up) + abs(w_down) == 2
    assert crossing_oracle(paper, None, loop) == w_up + w_down
    assert winding_number(paper, None, loop) == w_up + w_down


def test_berry_phase_accepts_explicitly_closed_loop(paper):
    loop = circle_loop((0, PI / 2), 0.3, 64)
    closed = np.vstack([loop, loop[:1]])
    assert berry_phase(paper, None, closed) == berry_phase(paper, None, loop)


def test_berry_phase_in_half_open_range(paper):
    phase = berry_phase(paper, None, circle_loop((PI, -PI / 2), 0.3, 128))
    assert -PI < phase <= PI


def test_berry_phase_rejects_degenerate_loop(paper):
    loop = circle_loop((0, PI / 2 + 0.3), 0.3, 128)  # passes through the node
    loop[0] = (0, PI / 2)
    with pytest.raises(DegeneracyError) as info:
        berry_phase(paper, None, loop)
    assert periodic_distance(info.value.k, (0, PI / 2)) < 1e-12


def test_berry_phase_rejects_short_loop(paper):
    with pytest.raises(ValueError):
        berry_phase(paper, None, circle_loop((0, 0), 0.3, 8))


def test_berry_phase_rejects_coarse_loop(paper):
    # two antipodal points around a node, repeated: neighbouring lower-band states are orthogonal
    loop = circle_loop((0, PI / 2), 1e-3, 16)[::8]
    loop = np.repeat(loop, 8, axis=0)
    with pytest.raises(DegeneracyError, match="finer loop"):
        berry_phase(paper, None, loop)


@pytest.mark.parametrize("seed", range(8))
def test_berry_phase_matches_eigh_oracle(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, pt_symmetric=bool(seed % 2))
    loop = circle_loop(rng.uniform(-PI, PI, 2), rng.uniform(0.05, 0.5), 512)
    g = model.bloch_vector(loop[:, 0], loop[:, 1])
    if np.linalg.norm(g, axis=-1).min() < 1e-3:
        pytest.skip("loop too close to a crossing")
    assert phase_close(berry_phase(model, None, loop), wilson_oracle(model, None, loop), 1e-9)


def test_winding_signs(paper):
    w = winding_number(paper, None, circle_loop((0, PI / 2), 0.3))
    assert w in (1, -1)
    assert w == crossing_oracle(paper, None, circle_loop((0, PI / 2), 0.3))


def test_winding_undefined_without_pt(paper):
    with pytest.raises(WindingUndefinedError, match="without PT"):
        winding_number(paper, {"epsilon": 0.5}, circle_loop((0, PI / 2), 0.3))


def test_winding_merged_node_even(paper):
    assert winding_number(paper, {"lambda": 1}, circle_loop((0, PI), 0.3)) == 0


# -- z2 charges -------------------------------------------------------------------


def test_charges_at_lambda_zero(paper):
    nodes = annotate_nodes(paper, None, find_nodes(paper))
    assert [n.z2_charge for n in nodes] == [1, 1, 1, 1]
    for n in nodes:
        assert n.quantization_residue < 1e-6
        assert n.winding % 2 == 1
        assert n.loop_radius == 0.3


def test_merged_node_charge_zero(paper):
    report = z2_charge(paper, {"lambda": 1}, (0, PI))
    assert report.z2_charge == 0
    assert report.winding == 0
    assert phase_close(report.berry_phase, 0, 1e-6)


@pytest.mark.parametrize("eta", [0.1, 0.25, 0.5])
def test_shifted_nodes_keep_charge(paper, eta):
    params = {"eta": eta}
    nodes = annotate_nodes(paper, params, find_nodes(paper, params))
    assert len(nodes) == 4
    assert all(n.z2_charge == 1 for n in nodes)


def test_z2_charge_detects_nodes_itself(paper):
    report = z2_charge(paper, None, (0, PI / 2))
    assert report.z2_charge == 1


def test_z2_charge_shrinks_loop_for_close_neighbours(paper):
    params = {"lambda": 0.995}
    nodes = find_nodes(paper, params)
    assert len(nodes) == 4
    ky = np.arccos(-0.995)
    assert 2 * (PI - ky) < 0.3
    report = z2_charge(paper, params, nodes[-1].k, nodes=nodes)
    assert report.loop_radius < 0.3
    assert report.z2_charge == 1


def test_z2_charge_cannot_isolate(paper):
    with pytest.raises(NodeIsolationError) as info:
        z2_charge(paper, None, (0, PI / 2), nodes=[(0.01, PI / 2)])
    assert len(info.value.interfering) == 1


def test_homotopy_invariance(paper):
    small = z2_charge(paper, None, (PI, PI / 2), radius=0.1, nodes=NODES_L0)
    large = z2_charge(paper, None, (PI, PI / 2), radius=0.4, nodes=NODES_L0)
    assert small.loop_radius == 0.1 and large.loop_radius == 0.4
    assert small.z2_charge == large.z2_charge == 1
    assert phase_close(small.berry_phase, large.berry_phase, 1e-6)


@pytest.mark.parametrize("a,b", list(itertools.combinations(NODES_L0, 2)))
def test_charges_add_mod_two(paper, a, b):
    loop = capsule_loop(a, b, 0.3, 2048)
    charge = loop_charge(paper, None, loop)
    individual = [z2_charge(paper, None, k, nodes=NODES_L0).z2_charge for k in (a, b)]
    assert charge == sum(individual) % 2 == 0
    assert crossing_oracle(paper, None, loop) % 2 == 0


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 2**32 - 1),
    st.floats(-PI, PI),
    st.floats(-PI, PI),
    st.floats(0.05, 0.5),
    st.sampled_from([64, 256, 1024]),
)
def test_quantisation_and_oracle_agreement(seed, cx, cy, radius, n_points):
    model = random_model(np.random.default_rng(seed))
    loop = circle_loop((cx, cy), radius, n_points)
    g = model.bloch_vector(loop[:, 0], loop[:, 1])
    theta = np.arctan2(g[:, 1], g[:, 2])
    steps = wrap_angle(np.roll(theta, -1) - theta)
    if np.linalg.norm(g, axis=-1).min() < 1e-3 or np.abs(steps).max() > PI / 2:
        return  # too close to a crossing for this resolution
    phase = berry_phase(model, None, loop)
    w = winding_number(model, None, loop)
    assert quantization_residue(phase) < 1e-6
    assert phase_close(phase, PI * (w % 2), 1e-6)
    assert w == crossing_oracle(model, None, loop)


# -- scans ------------------------------------------------------------------------


def test_scan_counts(paper):
    diagram = lambda_scan(paper, [0, 0.5, 1, 1.5])
    assert diagram.node_counts == [4, 4, 2, 0]
    ky = [abs(t.node.k.ky) for t in diagram.node_trajectories[1]]
    np.testing.assert_allclose(ky, 2 * PI / 3, atol=1e-6)
    charges = [[t.node.z2_charge for t in step] for step in diagram.node_trajectories]
    assert charges == [[1] * 4, [1] * 4, [0, 0], []]


def test_scan_gap_law(paper):
    values = np.linspace(0, 2, 41)
    diagram = lambda_scan(paper, values)
    expected = 10 * np.maximum(0, values - 1)
    np.testing.assert_allclose(diagram.min_gaps, expected, atol=1e-6)
    for count, gap in zip(diagram.node_counts, diagram.min_gaps):
        assert count in (0, 2, 4)
        if count:
            assert gap < 1e-8


def test_scan_negative_lambda_symmetric(paper):
    diagram = lambda_scan(paper, [-1.5, -0.5, 0.5, 1.5])
    assert diagram.node_counts == [0, 4, 4, 0]
    assert diagram.min_gaps[0] == pytest.approx(5.0, abs=1e-6)


def test_trajectories_track_nodes(paper):
    diagram = lambda_scan(paper, [0, 0.1, 0.2, 0.3])
    first = {t.node_id: t.node.k for t in diagram.node_trajectories[0]}
    last = {t.node_id: t.node.k for t in diagram.node_trajectories[-1]}
    assert set(first) == set(last) == {0, 1, 2, 3}
    for node_id, k in first.items():
        assert np.sign(k.ky) == np.sign(last[node_id].ky)
        assert periodic_distance(k, last[node_id]) < 0.4
    rows = diagram.trajectory_rows()
    assert len(rows) == 16 and rows[0][0] == 0


def test_scan_requires_sorted(paper):
    with pytest.raises(ValueError):
        lambda_scan(paper, [1, 0])


def test_robustness_against_pt_breaking(paper):
    for eps in (0.1, 0.25, 0.5):
        diagram = lambda_scan(paper, [0.0], params={"epsilon": eps})
        assert diagram.node_counts == [0]
        assert diagram.min_gaps[0] == pytest.approx(10 * eps, abs=1e-6)
