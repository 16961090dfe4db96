"""2D world model: walls, mirroring, specular ray tracing and RSP/wall/VA conversions.

Points are plain length-2 numpy arrays; tuples are accepted everywhere.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFitError, InsufficientDataError, InvalidGeometryError, InvalidMeasurementError

SPEED_OF_LIGHT = 299_792_458.0
MIN_WALL_LENGTH = 1e-9
GRAZE_TOL = 1e-9


def as_point(p):
    p = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(p)):
        raise InvalidGeometryError(f"non-finite point {p}")
    return p


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    if isinstance(a, (float, int, np.floating)):
        if -math.pi < a <= math.pi:
            return float(a)  # already wrapped: keep it bit-exact
        w = math.fmod(float(a) + math.pi, 2.0 * math.pi)
        w = (w + 2.0 * math.pi if w < 0 else w) - math.pi
        return math.pi if w == -math.pi else w
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    w = np.where((a > -np.pi) & (a <= np.pi), a, w)
    return w if w.ndim else float(w)


def bearing(frm, to):
    d = np.asarray(to, dtype=float) - np.asarray(frm, dtype=float)
    return float(np.arctan2(d[1], d[0]))


@dataclass(frozen=True)
class WallSegment:
    a: np.ndarray
    b: np.ndarray
    id: str = "wall"
    loss_db: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "a", as_point(self.a))
        object.__setattr__(self, "b", as_point(self.b))

    @property
    def length(self):
        return float(np.linalg.norm(self.b - self.a))

    @property
    def tangent(self):
        d = self.b - self.a
        n = np.linalg.norm(d)
        if n <= MIN_WALL_LENGTH:
            raise InvalidGeometryError(f"wall {self.id!r} is degenerate (length {n:g} m)")
        return d / n

    @property
    def normal(self):
        t = self.tangent
        return np.array([-t[1], t[0]])

    def line_params(self):
        """Normal angle and offset (alpha, rho) with x cos(alpha) + y sin(alpha) = rho."""
        n = self.normal
        return float(np.arctan2(n[1], n[0])), float(n @ self.a)

    def signed_distance(self, p):
        return float(self.normal @ (np.asarray(p, dtype=float) - self.a))


@dataclass(frozen=True)
class VirtualAnchor:
    position: np.ndarray
    pa_id: str
    wall_id: str


@dataclass
class Environment:
    walls: list = field(default_factory=list)
    pas: dict = field(default_factory=dict)
    scatterers: dict = field(default_factory=dict)
    bounds: tuple = (0.0, 0.0, 10.0, 10.0)

    def __post_init__(self):
        self.pas = {k: as_point(v) for k, v in self.pas.items()}
        self.scatterers = {k: as_point(v) for k, v in self.scatterers.items()}
        self.bounds = tuple(float(v) for v in self.bounds)

    def contains(self, p, tol=1e-9):
        x0, y0, x1, y1 = self.bounds
        return x0 - tol <= p[0] <= x1 + tol and y0 - tol <= p[1] <= y1 + tol

    @property
    def diagonal(self):
        x0, y0, x1, y1 = self.bounds
        return float(np.hypot(x1 - x0, y1 - y0))

    def wall(self, wall_id):
        for w in self.walls:
            if w.id == wall_id:
                return w
        raise KeyError(wall_id)

    def virtual_anchors(self):
        return [VirtualAnchor(mirror_point(pa, w), pa_id, w.id)
                for pa_id, pa in self.pas.items() for w in self.walls]

    def translated(self, t):
        t = as_point(t)
        walls = [WallSegment(w.a + t, w.b + t, w.id, w.loss_db) for w in self.walls]
        x0, y0, x1, y1 = self.bounds
        return Environment(walls, {k: v + t for k, v in self.pas.items()},
                           {k: v + t for k, v in self.scatterers.items()},
                           (x0 + t[0], y0 + t[1], x1 + t[0], y1 + t[1]))


def mirror_point(p, w):
    p = as_point(p)
    n = w.normal
    return p - 2.0 * (n @ (p - w.a)) * n


def mirror_across_line(p, alpha, rho):
    """Mirror ``p`` across the line x cos(alpha) + y sin(alpha) = rho."""
    n = np.array([np.cos(alpha), np.sin(alpha)])
    p = np.asarray(p, dtype=float)
    return p - 2.0 * (n @ p - rho) * n


def _segments_cross(p, q, a, b, tol=GRAZE_TOL):
    """True when segment p-q strictly crosses segment a-b (grazing endpoints do not count)."""
    r = q - p
    s = b - a
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < 1e-15:
        return False
    ap = a - p
    t = (ap[0] * s[1] - ap[1] * s[0]) / denom
    u = (ap[0] * r[1] - ap[1] * r[0]) / denom
    lr = np.linalg.norm(r)
    ls = np.linalg.norm(s)
    et = tol / lr if lr > 0 else 0.0
    es = tol / ls if ls > 0 else 0.0
    return (et < t < 1.0 - et) and (es < u < 1.0 - es)


def segment_blocked(p, q, walls, exclude=()):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    for w in walls:
        if w.id in exclude:
            continue
        if _segments_cross(p, q, w.a, w.b):
            return True
    return False


def trace_specular_path(ue, pa, w, obstacles=()):
    """Single-bounce specular path from ``pa`` to ``ue`` off wall ``w``.

    Returns ``(reflection_point, path_length)`` or ``None`` when the bounce
    point falls outside the segment, the endpoints sit on opposite sides (or
    on the line), or a leg is blocked by another wall in ``obstacles``.
    """
    ue = as_point(ue)
    pa = as_point(pa)
    su = w.signed_distance(ue)
    sp = w.signed_distance(pa)
    if abs(su) <= GRAZE_TOL or abs(sp) <= GRAZE_TOL or su * sp < 0:
        return None
    va = mirror_point(pa, w)
    # bounce point: where ue->va crosses the wall line
    frac = su / (su - w.signed_distance(va))
    refl = ue + frac * (va - ue)
    s = w.tangent @ (refl - w.a)
    if s < -GRAZE_TOL or s > w.length + GRAZE_TOL:
        return None
    if obstacles:
        if segment_blocked(ue, refl, obstacles, exclude=(w.id,)) or \
                segment_blocked(refl, pa, obstacles, exclude=(w.id,)):
            return None
    length = float(np.linalg.norm(refl - ue) + np.linalg.norm(pa - refl))
    return refl, length


def rsp_from_echo(ue, beam_azimuth, round_trip_time):
    if not round_trip_time > 0:
        raise InvalidMeasurementError(f"round trip time must be positive, got {round_trip_time}")
    ue = as_point(ue)
    d = SPEED_OF_LIGHT * round_trip_time / 2.0
    return ue + d * np.array([np.cos(beam_azimuth), np.sin(beam_azimuth)])


def fit_line(points):
    """Total-least-squares line through ``points``.

    Returns ``(alpha, rho, tangent, centroid, eigvals)``.
    """
    pts = np.asarray(points, dtype=float)
    c = pts.mean(axis=0)
    d = pts - c
    scatter = d.T @ d
    evals, evecs = np.linalg.eigh(scatter)  # ascending
    n = evecs[:, 0]
    # canonical orientation so alpha is continuous: normal points away from origin side
    rho = float(n @ c)
    if rho < 0 or (abs(rho) < 1e-12 and n[0] < 0):
        n = -n
        rho = -rho
    t = np.array([-n[1], n[0]])
    return float(np.arctan2(n[1], n[0])), rho, t, c, evals


def wall_from_rsps(rsps, covariances=None, wall_id="fitted"):
    """Fit a wall segment through reflective surface points.

    ``covariances`` is a sequence of 2x2 matrices (one per point); when given,
    the returned 2x2 ``line_covariance`` is the first-order covariance of the
    (normal angle, offset) line parameters as given by ``wall.line_params()``.
    """
    pts = np.asarray(rsps, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise InsufficientDataError(f"need at least 2 RSPs, got {len(pts)}")
    alpha, rho, t, c, evals = fit_line(pts)
    s = (pts - c) @ t
    if s.max() - s.min() < 1e-6:
        raise DegenerateFitError("RSP spread below 1e-6 m")
    n = np.array([np.cos(alpha), np.sin(alpha)])
    foot = rho * n
    s_abs = pts @ t
    # run the segment along -t so its normal is n and wall.line_params() is (alpha, rho),
    # the parametrisation line_covariance refers to
    a = foot + s_abs.max() * t
    b = foot + s_abs.min() * t
    wall = WallSegment(a, b, wall_id)

    cov = np.zeros((2, 2))
    if covariances is not None:
        lam_gap = evals[1] - evals[0]
        if lam_gap <= 1e-15:
            raise DegenerateFitError("isotropic RSP cloud, line direction undefined")
        resid = (pts - c) @ n
        m = len(pts)
        for i in range(m):
            # perturbation of the TLS normal angle and offset w.r.t. point i
            d_alpha = -(s[i] * n + resid[i] * t) / lam_gap
            d_rho = (t @ c) * d_alpha + n / m
            J = np.vstack([d_alpha, d_rho])
            cov += J @ np.asarray(covariances[i], dtype=float) @ J.T
        cov = 0.5 * (cov + cov.T)
    return wall, cov
