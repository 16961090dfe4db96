"""Monostatic echo simulation, RSP estimation and RSP -> virtual anchor conversion."""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, InsufficientDataError
from .geometry import SPEED_OF_LIGHT, mirror_across_line, rsp_from_echo, wall_from_rsps
from .measurement import BeamCodebook, free_space_loss_db

log = logging.getLogger(__name__)

MIN_ECHO_RANGE = 0.5  # m, self-interference blanking
ECHO_SNR_MIN_DB = 10.0
COV_JITTER = 1e-12


@dataclass
class RspEstimate:
    point: np.ndarray
    covariance: np.ndarray
    beam_index: int
    snr: float


@dataclass
class VaPrior:
    mean: np.ndarray
    covariance: np.ndarray
    wall_id: str
    source: str = "active"
    pa_id: str = ""


def default_echo_codebook():
    return BeamCodebook(n_beams=36, sector=2.0 * np.pi, beamwidth=np.deg2rad(10.0))


def _ray_hit(origin, direction, walls):
    """Distance to the nearest wall along a ray, or None."""
    best = None
    for w in walls:
        s = w.b - w.a
        denom = direction[0] * s[1] - direction[1] * s[0]
        if abs(denom) < 1e-15:
            continue
        ap = w.a - origin
        t = (ap[0] * s[1] - ap[1] * s[0]) / denom
        u = (ap[0] * direction[1] - ap[1] * direction[0]) / denom
        if t > 0 and -1e-12 <= u <= 1.0 + 1e-12 and (best is None or t < best):
            best = t
    return best


def simulate_echo(env, ue, cb, noise, rng, min_range=MIN_ECHO_RANGE):
    """Round-trip echoes along every beam boresight that hits a wall.

    Returns a list of ``(beam_index, round_trip_time, snr_db)``.
    """
    out = []
    centers = cb.centers
    u = rng.random(len(centers))
    eps = rng.standard_normal(len(centers))
    for i, c in enumerate(centers):
        az = ue.orientation + c
        d = _ray_hit(ue.position, np.array([np.cos(az), np.sin(az)]), env.walls)
        if d is None or d < min_range:
            continue
        # a specular wall echo behaves like an image source at 2d
        snr = noise.tx_power_dbm - free_space_loss_db(2.0 * d) - noise.reflection_loss_db - noise.noise_floor_dbm
        p_det = noise.detection_prob
        if snr < ECHO_SNR_MIN_DB:
            p_det *= 10.0 ** ((snr - ECHO_SNR_MIN_DB) / 10.0)
        if u[i] >= p_det:
            continue
        tau = 2.0 * d / SPEED_OF_LIGHT + noise.toa_std * eps[i]
        out.append((i, float(tau), float(snr)))
    return out


def estimate_rsps(echoes, ue, cb, noise):
    """Map echoes to reflective surface points with first-order covariances.

    ``ue`` is the UE's own (estimated) state; its orientation rotates the
    beam centers into the global frame.
    """
    centers = cb.centers
    sig_r = SPEED_OF_LIGHT * noise.toa_std / 2.0
    sig_phi = cb.beamwidth / np.sqrt(12.0)
    out = []
    dropped = 0
    for beam, tau, snr in echoes:
        if not tau > 0:
            dropped += 1
            continue
        az = ue.orientation + centers[beam]
        p = rsp_from_echo(ue.position, az, tau)
        d = SPEED_OF_LIGHT * tau / 2.0
        rot = np.array([[np.cos(az), -np.sin(az)], [np.sin(az), np.cos(az)]])
        cov = rot @ np.diag([sig_r ** 2, (d * sig_phi) ** 2]) @ rot.T
        out.append(RspEstimate(p, cov, int(beam), float(snr)))
    if dropped:
        log.warning("dropped %d echo(es) with non-positive round-trip time", dropped)
    return out


def _max_dev(points):
    if len(points) < 3:
        return 0.0, 0
    c = points.mean(axis=0)
    d = points - c
    _, evecs = np.linalg.eigh(d.T @ d)
    res = np.abs(d @ evecs[:, 0])
    k = int(np.argmax(res))
    return float(res[k]), k


def cluster_rsps(rsps, threshold=0.3):
    """Split-and-merge grouping of RSPs (in beam order) into collinear runs."""
    order = sorted(range(len(rsps)), key=lambda i: rsps[i].beam_index)
    pts = np.array([rsps[i].point for i in order]) if order else np.zeros((0, 2))

    def split(lo, hi):
        seg = pts[lo:hi]
        dev, k = _max_dev(seg)
        if dev <= threshold or hi - lo < 3:
            return [(lo, hi)]
        k = min(max(k, 1), hi - lo - 2)
        return split(lo, lo + k + 1) + split(lo + k + 1, hi)

    runs = split(0, len(pts)) if len(pts) else []
    merged = True
    while merged and len(runs) > 1:
        merged = False
        for j in range(len(runs) - 1):
            lo, _ = runs[j]
            _, hi = runs[j + 1]
            if _max_dev(pts[lo:hi])[0] <= threshold:
                runs[j:j + 2] = [(lo, hi)]
                merged = True
                break
    clusters = [[order[i] for i in range(lo, hi)] for lo, hi in runs]
    # beams wrap around a full circle: first and last run may be one wall
    if len(clusters) > 2:
        joined = clusters[-1] + clusters[0]
        if _max_dev(np.array([rsps[i].point for i in joined]))[0] <= threshold:
            clusters = [joined] + clusters[1:-1]
    clusters = _trim_ends(clusters, rsps, threshold)
    # one wall seen through a gap (corner, missed echo) can leave separate runs
    j = 0
    while j < len(clusters):
        for k in range(j + 1, len(clusters)):
            joined = clusters[j] + clusters[k]
            if len(clusters[j]) >= 2 and len(clusters[k]) >= 2 and \
                    _max_dev(np.array([rsps[i].point for i in joined]))[0] <= threshold:
                clusters[j] = joined
                del clusters[k]
                break
        else:
            j += 1
    return clusters


def _line_dist(points, q):
    """Distance from ``q`` to the TLS line through ``points``."""
    c = points.mean(axis=0)
    _, evecs = np.linalg.eigh((points - c).T @ (points - c))
    return float(abs((q - c) @ evecs[:, 0]))


def _trim_ends(clusters, rsps, threshold):
    """Detach run ends that only fit because the line tilted to absorb them (corner beams)."""
    pts = lambda idx: np.array([rsps[i].point for i in idx])
    loose = []
    changed = True
    while changed:
        changed = False
        for c in clusters:
            for pos in (0, -1):
                if len(c) >= 4 and _line_dist(pts(c[1:] if pos == 0 else c[:-1]), rsps[c[pos]].point) > threshold:
                    loose.append(c.pop(pos))
                    changed = True
    for i in loose:
        fits = [(_line_dist(pts(c), rsps[i].point), k) for k, c in enumerate(clusters) if len(c) >= 3]
        best = min(fits, default=None)
        if best is not None and best[0] <= threshold:
            clusters[best[1]].append(i)
        else:
            clusters.append([i])
    return clusters


def fit_walls(rsps, threshold=0.3):
    """Fitted walls ``[(WallSegment, line_cov, member_indices)]`` from RSP clusters."""
    walls = []
    for j, members in enumerate(cluster_rsps(rsps, threshold)):
        if len(members) < 2:
            continue
        try:
            wall, cov = wall_from_rsps([rsps[i].point for i in members],
                                       [rsps[i].covariance for i in members], wall_id=f"fit{j}")
        except (DegenerateFitError, InsufficientDataError):
            continue
        walls.append((wall, cov, members))
    return walls


def mirror_with_covariance(pa, pa_cov, alpha, rho, line_cov):
    n = np.array([np.cos(alpha), np.sin(alpha)])
    t = np.array([-n[1], n[0]])
    va = mirror_across_line(pa, alpha, rho)
    off = n @ pa - rho
    j_line = np.column_stack([-2.0 * (t @ pa) * n - 2.0 * off * t, 2.0 * n])
    j_pa = np.eye(2) - 2.0 * np.outer(n, n)
    cov = j_line @ line_cov @ j_line.T + j_pa @ pa_cov @ j_pa.T
    return va, 0.5 * (cov + cov.T) + COV_JITTER * np.eye(2)


def rsps_to_va_priors(rsps, pa_hypotheses, threshold=0.3, ue=None):
    """Convert RSPs to virtual-anchor priors, one per (fitted wall, PA hypothesis).

    ``pa_hypotheses`` holds ``(pa_id, position, covariance)`` tuples.  When the
    UE position is given, walls separating the UE from the PA are skipped.
    """
    priors = []
    for wall, line_cov, _ in fit_walls(rsps, threshold):
        alpha, rho = wall.line_params()
        for pa_id, pa, pa_cov in pa_hypotheses:
            pa = np.asarray(pa, dtype=float)
            if ue is not None:
                su = wall.signed_distance(ue)
                sp = wall.signed_distance(pa)
                if su * sp <= 0:
                    continue
            va, cov = mirror_with_covariance(pa, np.asarray(pa_cov, dtype=float), alpha, rho, line_cov)
            priors.append(VaPrior(va, cov, wall.id, "active", pa_id))
    return priors
