"""Band-crossing detection, Z2 charges, and parameter scans across the node-merging transition.

The Z2 charge of a node is read off the Berry phase of the lower band around a
small loop: with PT acting as sigma_3 K the Hamiltonian can be made real, the
Wilson-loop product is real, and the phase is quantised to 0 or pi.  When
g1 vanishes on the loop the same parity is available independently as the
winding of the planar vector (g3, g2).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from collections.abc import Sequence

import numpy as np

from .errors import (
    ConsistencyError,
    ConvergenceError,
    DegeneracyError,
    NodalLineError,
    NodeIsolationError,
    PTBandsError,
)
from .model import BlochModel, Momentum, band_states, canonical, periodic_distance, wrap_angle
from .spectrum import grid_local_minima, min_gap, sample_gap_map, _refine_minimum

log = logging.getLogger(__name__)

NODE_TOL = 1e-8
NEWTON_TOL = 1e-10
NEWTON_STEP_TOL = 1e-9
MAX_COND = 1e8
MERGE_RADIUS = 1e-4
MAX_NODES = 32
LOOP_POINTS = 1024
DEFAULT_RADIUS = 0.3
LOOP_GAP_MIN = 1e-6
ISOLATION_GAP_MIN = 1e-4
G1_TOL = 1e-10


class WindingUndefinedError(PTBandsError, ValueError):
    pass


@dataclass
class NodeReport:
    k: Momentum
    residual: float
    z2_charge: int | None = None
    berry_phase: float | None = None
    quantization_residue: float | None = None
    winding: int | None = None
    loop_radius: float | None = None

    def to_dict(self) -> dict:
        return {
            "kx": float(self.k[0]),
            "ky": float(self.k[1]),
            "residual": self.residual,
            "z2_charge": self.z2_charge,
            "berry_phase": self.berry_phase,
            "quantization_residue": self.quantization_residue,
            "winding": self.winding,
            "loop_radius": self.loop_radius,
        }


# -- loops -------------------------------------------------------------------


def circle_loop(center, radius: float, n_points: int = LOOP_POINTS) -> np.ndarray:
    """Counter-clockwise circle, ``n_points`` distinct points; closure is implicit."""
    return ellipse_loop(center, (radius, radius), n_points)


def ellipse_loop(center, radii, n_points: int = LOOP_POINTS) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(n_points) / n_points
    cx, cy = center
    rx, ry = radii
    return np.column_stack([cx + rx * np.cos(t), cy + ry * np.sin(t)])


def capsule_loop(a, b, half_width: float, n_points: int = LOOP_POINTS) -> np.ndarray:
    """Counter-clockwise stadium around the segment from ``a`` to the nearest image of ``b``."""
    a = np.asarray(a, dtype=float)
    d = wrap_angle(np.asarray(b, dtype=float) - a)
    length = float(np.hypot(*d))
    u = d / length
    v = np.array([-u[1], u[0]])
    perimeter = 2.0 * length + 2.0 * np.pi * half_width
    s = perimeter * np.arange(n_points) / n_points
    pts = np.empty((n_points, 2))
    arc = np.pi * half_width
    for idx, si in enumerate(s):
        if si < length:  # right side, a -> b
            p = a + si * u - half_width * v
        elif si < length + arc:  # cap around b
            phi = -np.pi / 2 + (si - length) / half_width
            p = a + d + half_width * (np.cos(phi) * u + np.sin(phi) * v)
        elif si < 2 * length + arc:  # left side, b -> a
            p = a + d - (si - length - arc) * u + half_width * v
        else:  # cap around a
            phi = np.pi / 2 + (si - 2 * length - arc) / half_width
            p = a + half_width * (np.cos(phi) * u + np.sin(phi) * v)
        pts[idx] = p
    return pts


def _open_loop(loop) -> np.ndarray:
    pts = np.asarray(loop, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("loop must be a sequence of (kx, ky) points")
    if len(pts) > 1 and np.allclose(pts[0], pts[-1], rtol=0, atol=1e-14):
        pts = pts[:-1]
    if len(pts) < 16:
        raise ValueError(f"loop needs at least 16 points, got {len(pts)}")
    return pts


def _loop_vectors(model: BlochModel, params, pts: np.ndarray, min_norm: float) -> np.ndarray:
    g = model.bloch_vector(pts[:, 0], pts[:, 1], params)
    norm = np.linalg.norm(g, axis=-1)
    bad = int(np.argmin(norm))
    if norm[bad] <= min_norm:
        k = Momentum(float(pts[bad, 0]), float(pts[bad, 1]))
        raise DegeneracyError(f"loop passes within |g| = {norm[bad]:.3g} of a band crossing at k = {tuple(k)}", k=k)
    return g


# -- invariants --------------------------------------------------------------


def berry_phase(model: BlochModel, params, loop) -> float:
    """Lower-band Berry phase ``-arg prod <u_j|u_j+1>`` around a closed loop, in (-pi, pi]."""
    pts = _open_loop(loop)
    g = _loop_vectors(model, params, pts, LOOP_GAP_MIN)
    lower, _ = band_states(g)
    overlaps = np.einsum("ji,ji->j", lower.conj(), np.roll(lower, -1, axis=0))
    weakest = int(np.argmin(np.abs(overlaps)))
    if abs(overlaps[weakest]) < 1e-8:
        raise DegeneracyError(
            f"vanishing overlap between neighbouring loop points near k = {tuple(pts[weakest])}; use a finer loop",
            k=Momentum(*map(float, pts[weakest])),
        )
    phase = wrap_angle(-np.sum(np.angle(overlaps)))
    return np.pi if phase == -np.pi else phase


def quantization_residue(phase: float) -> float:
    """Distance of ``phase`` from the nearer of {0, pi}, modulo 2 pi."""
    return float(min(abs(wrap_angle(phase)), abs(wrap_angle(phase - np.pi))))


def phase_to_charge(phase: float) -> int:
    return int(abs(wrap_angle(phase - np.pi)) < abs(wrap_angle(phase)))


def winding_number(model: BlochModel, params, loop, g1_tol: float = G1_TOL) -> int:
    """Net turns of (g3, g2) along the loop; only defined where g1 vanishes."""
    pts = _open_loop(loop)
    g = _loop_vectors(model, params, pts, LOOP_GAP_MIN)
    if np.max(np.abs(g[:, 0])) > g1_tol:
        raise WindingUndefinedError("winding undefined without PT: g1 is nonzero on the loop")
    theta = np.arctan2(g[:, 1], g[:, 2])
    steps = wrap_angle(np.roll(theta, -1) - theta)
    turns = float(np.sum(steps)) / (2.0 * np.pi)
    nearest = round(turns)
    if abs(turns - nearest) > 1e-6:
        raise ConsistencyError(f"winding {turns!r} is not an integer; loop is under-resolved")
    return int(nearest)


def loop_charge(model: BlochModel, params, loop) -> int:
    return phase_to_charge(berry_phase(model, params, loop))


# -- node search ------------------------------------------------------------


def refine_node(model: BlochModel, params, k0, tol: float = NODE_TOL, max_iter: int = 100) -> tuple[Momentum, float]:
    """Polish an approximate band crossing.

    With g1 structurally zero this is Newton's method on (g2, g3) with the
    analytic Jacobian.  An ill-conditioned Jacobian (the quadratic direction at a
    merging point) or a model with g1 present switches to Levenberg-Marquardt
    minimisation of |g|^2.
    """
    k = np.asarray(k0, dtype=float).copy()
    best_k, best_r = k.copy(), float(np.linalg.norm(model.bloch_vector(k[0], k[1], params)))
    path = "minimize"

    if model.component_vanishes(0, params):
        path = "newton"
        for _ in range(max_iter):
            g = model.bloch_vector(k[0], k[1], params)
            r = float(np.linalg.norm(g))
            if r < best_r:
                best_k, best_r = k.copy(), r
            if r == 0.0:
                break
            jac = model.jacobian(k[0], k[1], params)[1:, :]
            cond = np.linalg.cond(jac)
            if not np.isfinite(cond) or cond > MAX_COND:
                path = "newton+minimize"
                break
            step = np.linalg.solve(jac, -g[1:])
            size = float(np.linalg.norm(step))
            if size > 1.0:
                step /= size
            k = k + step
            if size < 1e-12 or (r < NEWTON_TOL and size < NEWTON_STEP_TOL):
                r_new = float(np.linalg.norm(model.bloch_vector(k[0], k[1], params)))
                if r_new <= best_r:
                    best_k, best_r = k.copy(), r_new
                break
        else:
            path = "newton+minimize"

    if path != "newton":
        cand, r = _refine_minimum(model, params, best_k)
        if r <= best_r:
            best_k, best_r = cand, r

    log.debug("refine_node from %s via %s -> residual %.3g", tuple(k0), path, best_r)
    if best_r >= tol:
        raise ConvergenceError(
            f"no band crossing near {tuple(k0)} (best |g| = {best_r:.3g})",
            best=canonical(best_k),
            residual=best_r,
        )
    return canonical(best_k), best_r


def find_nodes(model: BlochModel, params=None, seed_grid_n: int = 64, tol: float = NODE_TOL) -> list[NodeReport]:
    """All band crossings in the BZ, positions only; sorted by (kx, ky)."""
    if seed_grid_n < 32:
        raise ValueError("seed_grid_n must be at least 32")
    grid = sample_gap_map(model, params, seed_grid_n, seed_grid_n)
    norm = grid.gap / model.omega
    threshold = 0.5 * float(np.median(norm))
    seeds = grid_local_minima(norm, threshold)
    seeds.sort(key=lambda ij: (norm[ij], ij))

    nodes: list[NodeReport] = []
    for i, j in seeds:
        try:
            k, r = refine_node(model, params, (grid.kx_values[i], grid.ky_values[j]), tol=tol)
        except ConvergenceError:
            continue
        if any(periodic_distance(k, n.k) < MERGE_RADIUS for n in nodes):
            continue
        nodes.append(NodeReport(k, r))
        if len(nodes) > MAX_NODES:
            raise NodalLineError(f"more than {MAX_NODES} crossings found; the model likely has a nodal line")
    nodes.sort(key=lambda n: (n.k[0], n.k[1]))
    return nodes


def z2_charge(
    model: BlochModel,
    params,
    node_k,
    radius: float = DEFAULT_RADIUS,
    nodes: Sequence | None = None,
    n_points: int = LOOP_POINTS,
    max_attempts: int = 6,
) -> NodeReport:
    """Charge of the crossing at ``node_k`` from a circular loop, shrinking the loop until it isolates the node.

    ``nodes`` lists the other known crossings (momenta or NodeReports); if
    omitted they are detected with :func:`find_nodes`.
    """
    node_k = canonical(node_k)
    if nodes is None:
        nodes = find_nodes(model, params)
    others = []
    for n in nodes:
        k = n.k if isinstance(n, NodeReport) else n
        if periodic_distance(k, node_k) > MERGE_RADIUS:
            others.append(canonical(k))

    r = radius
    for _ in range(max_attempts):
        interfering = [k for k in others if periodic_distance(k, node_k) < 1.5 * r]
        loop = circle_loop(node_k, r, n_points)
        g = model.bloch_vector(loop[:, 0], loop[:, 1], params)
        if not interfering and np.min(np.linalg.norm(g, axis=-1)) > ISOLATION_GAP_MIN:
            break
        r *= 0.5
    else:
        raise NodeIsolationError(
            f"cannot isolate node at {tuple(node_k)}; interfering nodes: {interfering}", interfering
        )

    phase = berry_phase(model, params, loop)
    charge = phase_to_charge(phase)
    winding = None
    if np.max(np.abs(g[:, 0])) <= G1_TOL:
        winding = winding_number(model, params, loop)
        if winding % 2 != charge:
            raise ConsistencyError(
                f"Berry phase {phase:.6g} and winding {winding} disagree at {tuple(node_k)}"
            )
    residual = float(np.linalg.norm(model.bloch_vector(node_k[0], node_k[1], params)))
    return NodeReport(node_k, residual, charge, phase, quantization_residue(phase), winding, r)


def annotate_nodes(model: BlochModel, params, nodes: Sequence[NodeReport], radius: float = DEFAULT_RADIUS) -> list[NodeReport]:
    return [z2_charge(model, params, n.k, radius, nodes=nodes) for n in nodes]


# -- parameter scans ---------------------------------------------------------


@dataclass
class TrackedNode:
    node_id: int
    node: NodeReport


@dataclass
class PhaseDiagram:
    parameter: str
    lambda_values: list[float]
    node_counts: list[int] = field(default_factory=list)
    min_gaps: list[float] = field(default_factory=list)
    min_gap_locations: list[Momentum] = field(default_factory=list)
    node_trajectories: list[list[TrackedNode]] = field(default_factory=list)

    def trajectory_rows(self) -> list[tuple[float, int, float, float, int | None]]:
        rows = []
        for value, tracked in zip(self.lambda_values, self.node_trajectories):
            for t in tracked:
                rows.append((value, t.node_id, float(t.node.k[0]), float(t.node.k[1]), t.node.z2_charge))
        return rows

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "values": list(self.lambda_values),
            "node_counts": list(self.node_counts),
            "min_gaps_mhz": list(self.min_gaps),
            "min_gap_locations": [list(map(float, k)) for k in self.min_gap_locations],
            "nodes": [
                [dict(t.node.to_dict(), node_id=t.node_id) for t in tracked] for tracked in self.node_trajectories
            ],
        }


def _match(previous: list[TrackedNode], current: list[NodeReport], next_id: int) -> tuple[list[TrackedNode], int]:
    """Greedy nearest-neighbour assignment of node identities between scan steps."""
    pairs = sorted(
        (periodic_distance(p.node.k, c.k), a, b) for a, p in enumerate(previous) for b, c in enumerate(current)
    )
    ids: dict[int, int] = {}
    used = set()
    for _, a, b in pairs:
        if a in used or b in ids:
            continue
        ids[b] = previous[a].node_id
        used.add(a)
    out = []
    for b, node in enumerate(current):
        if b not in ids:
            ids[b] = next_id
            next_id += 1
        out.append(TrackedNode(ids[b], node))
    return out, next_id


def lambda_scan(
    model: BlochModel,
    lambda_values: Sequence[float],
    seed_grid_n: int = 64,
    parameter: str = "lambda",
    params=None,
    radius: float = DEFAULT_RADIUS,
) -> PhaseDiagram:
    """Nodes, charges and minimum gap for each value of ``parameter`` (other parameters from ``params``)."""
    values = [float(v) for v in lambda_values]
    if not all(np.isfinite(values)):
        raise ValueError("scan values must be finite")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError("scan values must be sorted")

    diagram = PhaseDiagram(parameter, values)
    previous: list[TrackedNode] = []
    next_id = 0
    for value in values:
        p = dict(params or {})
        p[parameter] = value
        nodes = annotate_nodes(model, p, find_nodes(model, p, seed_grid_n), radius)
        k_min, gap = min_gap(model, p, max(seed_grid_n, 16))
        for n in nodes:
            if model.omega * n.residual < gap:
                k_min, gap = n.k, model.omega * n.residual
        tracked, next_id = _match(previous, nodes, next_id)
        diagram.node_counts.append(len(nodes))
        diagram.min_gaps.append(gap)
        diagram.min_gap_locations.append(k_min)
        diagram.node_trajectories.append(tracked)
        previous = tracked
    return diagram
