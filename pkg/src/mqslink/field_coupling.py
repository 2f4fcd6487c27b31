"""Magnetic coupling between posed filament coils.

Fields come from the exact finite straight-segment kernel, flux from
per-turn disk quadrature, and mutual inductance from either the Neumann
double line integral (default) or the flux route; the two routes
cross-validate each other. A closed-form coaxial-loop formula built on
AGM elliptic integrals is the analytic reference for the kernel.

Self-inductance is deliberately not computed here (the filament limit
is singular); the lumped module owns it. The wire radius enters only as
an exclusion zone around each filament.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .constants import MU0
from .geometry import FilamentCoil

NEUMANN = "neumann"
FLUX = "flux"

# pair-evaluation budget per vectorized chunk; bounds temporaries to
# ~100 MB and fixes the summation order regardless of problem size
_CHUNK_PAIRS = 2_000_000

# quadrature ladder for flux disks: (radial Gauss-Legendre nodes,
# uniform angular nodes), each level doubling the previous
_FLUX_LEVELS = ((8, 16), (16, 32), (32, 64), (64, 128))

# Neumann refinement ladder: sub-chords per polyline segment
_NEUMANN_LEVELS = (1, 2, 4, 8)


class SingularEvaluationError(Exception):
    """Field requested inside a wire's exclusion zone."""


class SeparationError(Exception):
    """Coils too close together for the filament model to hold."""


class ConvergenceError(Exception):
    """Refinement cap reached without meeting tolerance.

    Carries the last estimate so callers can decide whether to accept
    it anyway.
    """

    def __init__(self, message: str, value: float, estimate: float):
        super().__init__(message)
        self.value = value
        self.estimate = estimate


@dataclass(frozen=True)
class FieldSample:
    """One field evaluation: position (m) and B (tesla), or a masked slot.

    b is None when the sample fell inside a wire's exclusion zone and
    was masked rather than evaluated.
    """

    position: Tuple[float, float, float]
    b: Optional[Tuple[float, float, float]]

    @property
    def masked(self) -> bool:
        return self.b is None


@dataclass(frozen=True)
class CouplingResult:
    """Mutual inductance (signed, H) with its convergence evidence.

    k is filled by coupling_coefficient when lumped inductances are
    known; it stays None straight out of mutual_inductance.
    """

    m: float
    method: str
    convergence_estimate: float
    k: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.m):
            raise ValueError(f"m must be finite, got {self.m!r}")
        if self.method not in (NEUMANN, FLUX):
            raise ValueError(f"method must be {NEUMANN!r} or {FLUX!r}, got {self.method!r}")
        if not (0.0 <= self.convergence_estimate < math.inf):
            raise ValueError(
                f"convergence_estimate must be finite and >= 0, got {self.convergence_estimate!r}"
            )
        if self.k is not None and not (0.0 <= self.k < 1.0):
            raise ValueError(f"k must lie in [0, 1), got {self.k!r}")


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned planar sampling grid.

    plane names the two in-plane coordinates ("xy", "xz", or "yz");
    offset fixes the remaining coordinate. axis1 is the first letter's
    range, axis2 the second's; samples run row-major with axis1 as the
    slow index.
    """

    plane: str
    offset: float
    axis1_start: float
    axis1_stop: float
    axis1_points: int
    axis2_start: float
    axis2_stop: float
    axis2_points: int

    def __post_init__(self):
        if self.plane not in ("xy", "xz", "yz"):
            raise ValueError(f"plane must be one of 'xy', 'xz', 'yz', got {self.plane!r}")
        for name in ("axis1", "axis2"):
            start = getattr(self, name + "_start")
            stop = getattr(self, name + "_stop")
            n = getattr(self, name + "_points")
            if not isinstance(n, int) or n < 2:
                raise ValueError(f"{name}_points must be an int >= 2, got {n!r}")
            if not start < stop:
                raise ValueError(f"{name} range must satisfy start < stop, got [{start!r}, {stop!r}]")

    def points(self) -> np.ndarray:
        """All sample positions, shape (axis1_points*axis2_points, 3)."""
        a1 = np.linspace(self.axis1_start, self.axis1_stop, self.axis1_points)
        a2 = np.linspace(self.axis2_start, self.axis2_stop, self.axis2_points)
        g1, g2 = np.meshgrid(a1, a2, indexing="ij")
        cols = {self.plane[0]: g1.ravel(), self.plane[1]: g2.ravel()}
        normal = ({"x", "y", "z"} - set(self.plane)).pop()
        cols[normal] = np.full(g1.size, float(self.offset))
        return np.column_stack([cols["x"], cols["y"], cols["z"]])


def _segment_field(points: np.ndarray, starts: np.ndarray, ends: np.ndarray,
                   current: float) -> np.ndarray:
    # exact B of straight segments, summed; stable near-collinear form
    seg = ends - starts
    seg_len_sq = np.sum(seg * seg, axis=1)
    out = np.zeros_like(points)
    rows = max(1, _CHUNK_PAIRS // max(1, len(starts)))
    for i0 in range(0, len(points), rows):
        p = points[i0:i0 + rows]
        r1 = p[:, None, :] - starts[None, :, :]
        r2 = p[:, None, :] - ends[None, :, :]
        l1 = np.sqrt(np.sum(r1 * r1, axis=2))
        l2 = np.sqrt(np.sum(r2 * r2, axis=2))
        lsum = l1 + l2
        denom = l1 * l2 * (lsum * lsum - seg_len_sq[None, :])
        scale = 2.0 * lsum / denom
        out[i0:i0 + rows] = np.sum(np.cross(r1, r2) * scale[..., None], axis=1)
    return MU0 * current / (4.0 * math.pi) * out


def _distance_to_segments(points: np.ndarray, starts: np.ndarray,
                          ends: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest polyline segment."""
    seg = ends - starts
    seg_len_sq = np.maximum(np.sum(seg * seg, axis=1), 1e-300)
    out = np.empty(len(points))
    rows = max(1, _CHUNK_PAIRS // max(1, len(starts)))
    for i0 in range(0, len(points), rows):
        p = points[i0:i0 + rows]
        w = p[:, None, :] - starts[None, :, :]
        t = np.clip(np.sum(w * seg[None, :, :], axis=2) / seg_len_sq[None, :], 0.0, 1.0)
        closest = starts[None, :, :] + t[..., None] * seg[None, :, :]
        d = np.sqrt(np.sum((p[:, None, :] - closest) ** 2, axis=2))
        out[i0:i0 + rows] = d.min(axis=1)
    return out


def b_field(coil: FilamentCoil, current: float, point) -> np.ndarray:
    """Magnetic flux density of the coil carrying `current`, in tesla.

    point may be a single 3-vector or an (n, 3) array; the result
    matches its shape. Evaluation within half a wire diameter of any
    segment raises SingularEvaluationError.
    """
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"point must be a 3-vector or (n, 3) array, got shape {np.shape(point)}")
    exclusion = coil.wire_diameter / 2.0
    dist = _distance_to_segments(pts, coil.segment_starts, coil.segment_ends)
    if np.any(dist <= exclusion):
        worst = float(dist.min())
        raise SingularEvaluationError(
            f"evaluation point within {worst:.3e} m of the filament "
            f"(exclusion zone {exclusion:.3e} m)"
        )
    b = _segment_field(pts, coil.segment_starts, coil.segment_ends, float(current))
    return b[0] if np.ndim(point) == 1 else b


def field_map(coil: FilamentCoil, current: float, grid: GridSpec) -> Tuple[FieldSample, ...]:
    """Sample B on a planar grid, row-major, masking singular points.

    Points inside the wire's exclusion zone become masked samples (b is
    None) rather than aborting the map.
    """
    pts = grid.points()
    exclusion = coil.wire_diameter / 2.0
    dist = _distance_to_segments(pts, coil.segment_starts, coil.segment_ends)
    valid = dist > exclusion
    b = np.zeros_like(pts)
    if np.any(valid):
        b[valid] = _segment_field(pts[valid], coil.segment_starts,
                                  coil.segment_ends, float(current))
    samples = []
    for i in range(len(pts)):
        pos = (float(pts[i, 0]), float(pts[i, 1]), float(pts[i, 2]))
        if valid[i]:
            samples.append(FieldSample(pos, (float(b[i, 0]), float(b[i, 1]), float(b[i, 2]))))
        else:
            samples.append(FieldSample(pos, None))
    return tuple(samples)


def _coupling_floor(tx: FilamentCoil, rx: FilamentCoil) -> float:
    # dipole-scale coupling magnitude; the convergence denominator so
    # symmetry nulls (M -> 0) are not chased to relative precision
    d = float(np.linalg.norm(rx.turn_centers.mean(axis=0) - tx.turn_centers.mean(axis=0)))
    reach = max(float(tx.turn_radii.max()), float(rx.turn_radii.max()))
    d_eff = max(d, reach)
    s_tx = float(np.sum(tx.turn_radii**2))
    s_rx = float(np.sum(rx.turn_radii**2))
    return MU0 * math.pi * s_tx * s_rx / (2.0 * d_eff**3)


def _check_separation(tx: FilamentCoil, rx: FilamentCoil) -> None:
    # polylines sampled at vertices + midpoints against the other
    # coil's segments; filament model needs clearance beyond the
    # mean wire diameter
    threshold = (tx.wire_diameter + rx.wire_diameter) / 2.0
    for a, b in ((tx, rx), (rx, tx)):
        probes = np.vstack([a.points, (a.segment_starts + a.segment_ends) / 2.0])
        d = _distance_to_segments(probes, b.segment_starts, b.segment_ends)
        if float(d.min()) <= threshold:
            raise SeparationError(
                f"coil separation {float(d.min()):.3e} m is within the combined "
                f"wire exclusion {threshold:.3e} m; filament model invalid"
            )


def _turn_groups(coil: FilamentCoil):
    # vertex index ranges of each turn; the builder keeps a fixed
    # vertex count per turn
    n_turns = len(coil.turn_radii)
    per_turn = coil.n_segments // n_turns
    for i in range(n_turns):
        yield coil.points[i * per_turn:(i + 1) * per_turn + 1]


def _disk_frames(coil: FilamentCoil):
    """Per-turn (center, radius, e1, e2) for flat spanning disks.

    The disk radius is the mean perpendicular distance of that turn's
    vertices from the coil axis, which tracks the winding's actual
    in-plane growth; normals share the coil axis.
    """
    n = coil.axis
    helper = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(n, helper)
    e1 = e1 / np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    frames = []
    for center, verts in zip(coil.turn_centers, _turn_groups(coil)):
        rel = verts - center
        radial = rel - np.outer(rel @ n, n)
        radius = float(np.sqrt(np.sum(radial * radial, axis=1)).mean())
        frames.append((center, radius, e1, e2))
    return frames


def flux_through(tx: FilamentCoil, rx: FilamentCoil, current: float,
                 tolerance: float = 1e-3) -> float:
    """Total flux (Wb) of the tx coil's field linked by every rx turn.

    Each rx turn spans a flat disk at its center, normal along the rx
    axis; B.n is integrated by radial Gauss-Legendre x uniform-angle
    quadrature, refined until successive estimates agree within
    tolerance (judged against a dipole-scale floor near nulls).
    """
    if tolerance <= 0:
        raise ValueError(f"tolerance must be > 0, got {tolerance!r}")
    _check_separation(tx, rx)
    frames = _disk_frames(rx)
    normal = rx.axis
    floor = _coupling_floor(tx, rx) * abs(float(current))
    exclusion = tx.wire_diameter / 2.0

    prev = None
    estimate = math.inf
    for n_r, n_t in _FLUX_LEVELS:
        nodes, weights = np.polynomial.legendre.leggauss(n_r)
        x = (nodes + 1.0) / 2.0            # radial fraction on (0, 1)
        w = weights / 2.0
        theta = 2.0 * math.pi * np.arange(n_t) / n_t
        cos_t, sin_t = np.cos(theta), np.sin(theta)

        pts = []
        areas = []
        for center, radius, e1, e2 in frames:
            ring = (np.outer(cos_t, e1) + np.outer(sin_t, e2))    # (n_t, 3)
            p = center + radius * x[:, None, None] * ring[None, :, :]
            pts.append(p.reshape(-1, 3))
            # r dr dtheta weights for this disk
            areas.append(np.repeat(radius**2 * w * x, n_t) * (2.0 * math.pi / n_t))
        pts = np.vstack(pts)
        areas = np.concatenate(areas)

        d = _distance_to_segments(pts, tx.segment_starts, tx.segment_ends)
        if float(d.min()) <= exclusion:
            raise SeparationError(
                "receiver spanning surface enters the transmitter wire's "
                f"exclusion zone (closest approach {float(d.min()):.3e} m)"
            )
        b = _segment_field(pts, tx.segment_starts, tx.segment_ends, float(current))
        phi = float(np.sum((b @ normal) * areas))

        if prev is not None:
            estimate = abs(phi - prev) / max(abs(phi), floor) if max(abs(phi), floor) > 0 else 0.0
            if estimate <= tolerance:
                return phi
        prev = phi
    raise ConvergenceError(
        f"flux quadrature did not reach tolerance {tolerance:g} "
        f"(last relative change {estimate:.3e})",
        value=prev, estimate=estimate,
    )


def _sub_chords(coil: FilamentCoil, sub: int):
    a = coil.segment_starts
    step = (coil.segment_ends - a) / sub
    frac = (np.arange(sub) + 0.5)[None, :, None]
    mids = a[:, None, :] + step[:, None, :] * frac
    dl = np.broadcast_to(step[:, None, :], mids.shape)
    return mids.reshape(-1, 3), dl.reshape(-1, 3)


def _neumann_sum(m1: np.ndarray, d1: np.ndarray, m2: np.ndarray, d2: np.ndarray) -> float:
    total = 0.0
    rows = max(1, _CHUNK_PAIRS // len(m2))
    for i0 in range(0, len(m1), rows):
        p = m1[i0:i0 + rows]
        dv = d1[i0:i0 + rows]
        diff = p[:, None, :] - m2[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        dots = np.sum(dv[:, None, :] * d2[None, :, :], axis=2)
        total += float(np.sum(dots / dist))
    return MU0 / (4.0 * math.pi) * total


def mutual_inductance(tx: FilamentCoil, rx: FilamentCoil, method: str = NEUMANN,
                      tolerance: float = 1e-3) -> CouplingResult:
    """Mutual inductance between two posed coils, signed by orientation.

    neumann: midpoint-rule double line integral over all segment pairs,
    refined by chord doubling until the change falls below tolerance.
    flux: linked flux per unit current via flux_through. The two agree
    within about 1% on non-pathological geometries; neumann is the
    default and the more accurate of the pair.
    """
    if method not in (NEUMANN, FLUX):
        raise ValueError(f"method must be {NEUMANN!r} or {FLUX!r}, got {method!r}")
    if tolerance <= 0:
        raise ValueError(f"tolerance must be > 0, got {tolerance!r}")

    if method == FLUX:
        phi = flux_through(tx, rx, current=1.0, tolerance=tolerance)
        return CouplingResult(m=phi, method=FLUX, convergence_estimate=tolerance)

    _check_separation(tx, rx)
    floor = _coupling_floor(tx, rx)
    prev = None
    estimate = math.inf
    for sub in _NEUMANN_LEVELS:
        m1, d1 = _sub_chords(tx, sub)
        m2, d2 = _sub_chords(rx, sub)
        m = _neumann_sum(m1, d1, m2, d2)
        if prev is not None:
            estimate = abs(m - prev) / max(abs(m), floor)
            if estimate <= tolerance:
                return CouplingResult(m=m, method=NEUMANN, convergence_estimate=estimate)
        prev = m
    raise ConvergenceError(
        f"Neumann refinement did not reach tolerance {tolerance:g} "
        f"(last relative change {estimate:.3e})",
        value=prev, estimate=estimate,
    )


def coupling_coefficient(m: float, l_tx: float, l_rx: float) -> float:
    """k = |M|/sqrt(L_tx*L_rx); |k| >= 1 signals inconsistent inputs."""
    if l_tx <= 0 or l_rx <= 0:
        raise ValueError("inductances must be > 0")
    k = abs(m) / math.sqrt(l_tx * l_rx)
    if k >= 1.0:
        raise ValueError(
            f"|k| = {k:.6g} >= 1: mutual inductance inconsistent with the coil inductances"
        )
    return k


def _ellipke(k: float) -> Tuple[float, float]:
    # complete elliptic integrals K(k), E(k) by AGM; k is the modulus
    a, b = 1.0, math.sqrt(1.0 - k * k)
    c = k
    csum = 0.5 * c * c
    n = 0
    while abs(c) > 1e-16 and n < 60:
        a, b, c = (a + b) / 2.0, math.sqrt(a * b), (a - b) / 2.0
        n += 1
        csum += 2.0 ** (n - 1) * c * c
    big_k = math.pi / (2.0 * a)
    return big_k, big_k * (1.0 - csum)


def coaxial_mutual_oracle(r1: float, r2: float, z: float) -> float:
    """Closed-form M (H) of two coaxial circular loops separated by z.

    Maxwell's formula: with k^2 = 4 r1 r2/((r1+r2)^2 + z^2),
    M = mu0 sqrt(r1 r2) ((2/k - k) K(k) - (2/k) E(k)). The elliptic
    integrals come from the AGM iteration, accurate to ~1e-15, so this
    serves as the analytic reference for the numerical integrators.
    """
    if r1 <= 0 or r2 <= 0:
        raise ValueError("loop radii must be > 0")
    k_sq = 4.0 * r1 * r2 / ((r1 + r2) ** 2 + z * z)
    if k_sq >= 1.0 - 1e-15:
        raise SingularEvaluationError(
            "coincident coaxial loops (r1 = r2, z = 0): M diverges in the filament limit"
        )
    k = math.sqrt(k_sq)
    big_k, big_e = _ellipke(k)
    return MU0 * math.sqrt(r1 * r2) * ((2.0 / k - k) * big_k - (2.0 / k) * big_e)
