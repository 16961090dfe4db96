"""Beam management: successive-cancellation path extraction, map-predicted beam candidates, tracking switch."""
from dataclasses import dataclass, field

import numpy as np

from .geometry import wrap_angle
from .slam import ITH, IX, IY, pa_estimate, predict_measurement

MAX_PATHS = 5
MASK_RADIUS = 1


@dataclass
class PathEstimate:
    aod: float  # global departure angle at the transmitter
    aoa: float  # arrival angle in the UE body frame
    strength: float  # dBm at the peak beam pair
    tx_beam: int
    rx_beam: int


def _refine(values_db, idx):
    """Sub-beam offset (in beam units) from a parabola through the peak and its neighbours."""
    n = len(values_db)
    if idx == 0 or idx == n - 1:
        return 0.0  # clamped at the sector edge
    ym, y0, yp = values_db[idx - 1], values_db[idx], values_db[idx + 1]
    den = ym - 2.0 * y0 + yp
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (ym - yp) / den, -0.5, 0.5))


def successive_cancellation(m, tx_cb, rx_cb, stop_threshold_db=10.0, max_paths=MAX_PATHS,
                            leakage_margin_db=6.0, contrast_db=3.0):
    """Extract up to ``max_paths`` (AOD, AOA) pairs from a beam-pair RSRP matrix.

    Peaks are taken strongest first.  A peak is accepted when it clears the
    noise floor by ``stop_threshold_db`` and also clears the sidelobe leakage
    that the already accepted paths put on that entry by
    ``leakage_margin_db``; otherwise it is masked and the search goes on.
    A path from behind one of the arrays lights up a whole row (or column)
    at sidelobe level, so a peak must also stand ``contrast_db`` above the
    median of its row and of its column.  The search stops once nothing
    left clears the noise threshold.
    """
    vals = np.asarray(m.values, dtype=float)
    if vals.shape != (tx_cb.n_beams, rx_cb.n_beams):
        raise ValueError(f"matrix shape {vals.shape} does not match codebooks "
                         f"({tx_cb.n_beams}, {rx_cb.n_beams})")
    noise_lin = 10.0 ** (m.noise_floor_dbm / 10.0)
    floor_thr = noise_lin * 10.0 ** (stop_threshold_db / 10.0)
    leak = np.zeros_like(vals)
    masked = np.zeros(vals.shape, dtype=bool)
    lin = 10.0 ** (vals / 10.0)
    # flat backgrounds (paths from behind one array) skew the interpolation;
    # remove the per-row / per-column medians before refining
    tiny = noise_lin * 1e-3
    row_bg = np.median(lin, axis=1)
    col_bg = np.median(lin, axis=0)
    out = []
    while len(out) < max_paths and not masked.all():
        cand = np.where(masked, -np.inf, vals)
        i, j = np.unravel_index(int(np.argmax(cand)), vals.shape)
        if lin[i, j] < floor_thr:
            break
        if min(vals[i, j] - np.median(vals[i, :]), vals[i, j] - np.median(vals[:, j])) < contrast_db:
            masked[i, j] = True  # not directional in one of the two domains
            continue
        lo_i, hi_i = max(i - MASK_RADIUS, 0), i + MASK_RADIUS + 1
        lo_j, hi_j = max(j - MASK_RADIUS, 0), j + MASK_RADIUS + 1
        masked[lo_i:hi_i, lo_j:hi_j] = True
        if lin[i, j] < floor_thr + leak[i, j] * 10.0 ** (leakage_margin_db / 10.0):
            continue
        di = _refine(10.0 * np.log10(np.maximum(lin[:, j] - row_bg, tiny)), i)
        dj = _refine(10.0 * np.log10(np.maximum(lin[i, :] - col_bg, tiny)), j)
        aod_rel = tx_cb.centers[i] + di * tx_cb.spacing
        aoa_rel = rx_cb.centers[j] + dj * rx_cb.spacing
        out.append(PathEstimate(float(wrap_angle(m.tx_orientation + aod_rel)),
                                float(wrap_angle(m.rx_orientation + aoa_rel)),
                                float(vals[i, j]), int(i), int(j)))
        # leakage of this path onto every entry, from the codebook patterns at
        # the refined angles, scaled to the measured peak
        g_tx = tx_cb.gains(aod_rel)
        g_rx = rx_cb.gains(aoa_rel)
        leak += lin[i, j] * np.outer(g_tx / max(g_tx[i], 1e-12), g_rx / max(g_rx[j], 1e-12))
    return out


def all_pairs(tx_cb, rx_cb):
    return {(i, j) for i in range(tx_cb.n_beams) for j in range(rx_cb.n_beams)}


def _beam_window(cb, rel_angle, half_width):
    """Beam indices whose centres lie within ``half_width`` of ``rel_angle`` (at least nearest +-1)."""
    k = cb.nearest(rel_angle)
    span = max(MASK_RADIUS, int(np.ceil(half_width / cb.spacing - 1e-9)))
    return range(max(k - span, 0), min(k + span, cb.n_beams - 1) + 1)


def predict_beams(features, ue_mean, ue_cov, tx_cb, rx_cb, tx_orientation=0.0, rx_orientation=0.0,
                  gate_sigma=2.0, existence=0.5):
    """Candidate (tx, rx) beam pairs around the paths the map predicts.

    ``ue_mean``/``ue_cov`` are the predicted UE state moments.  PA features
    map to the LOS direction, VA features to the reflected path.  Features
    predicted outside either sector are skipped.  Without a usable feature
    the full set is returned (escalation to a sweep).
    """
    pa = pa_estimate(features)
    pos_std = float(np.sqrt(max(np.trace(np.asarray(ue_cov)[np.ix_([IX, IY], [IX, IY])]), 0.0)))
    th_std = float(np.sqrt(max(ue_cov[ITH, ITH], 0.0)))
    out = set()
    for f in features:
        if f.existence <= existence or f.kind not in ("PA", "VA"):
            continue
        h = predict_measurement(ue_mean[None, :], f.mean, f.kind, pa, ("aoa", "aod"))[0]
        if not np.all(np.isfinite(h)):
            continue
        aod_rel = wrap_angle(h[1] - tx_orientation)
        aoa_rel = wrap_angle(h[0] - rx_orientation)
        if not (tx_cb.in_sector(aod_rel - np.sign(aod_rel) * 0.5 * tx_cb.spacing)
                and rx_cb.in_sector(aoa_rel - np.sign(aoa_rel) * 0.5 * rx_cb.spacing)):
            continue
        r_ue = max(np.linalg.norm(f.mean - ue_mean[:2]), 0.5)
        src = pa if (f.kind == "VA" and pa is not None) else f.mean
        r_tx = max(np.linalg.norm(src - ue_mean[:2]), 0.5)
        tol_rx = gate_sigma * np.hypot(pos_std / r_ue, th_std)
        tol_tx = gate_sigma * pos_std / r_tx
        for i in _beam_window(tx_cb, aod_rel, tol_tx):
            for j in _beam_window(rx_cb, aoa_rel, tol_rx):
                out.add((i, j))
    return out if out else all_pairs(tx_cb, rx_cb)


@dataclass
class TrackingConfig:
    miss_db: float = 6.0
    misses_to_sweep: int = 2
    window: int = 5


@dataclass
class TrackingState:
    mode: str = "full_sweep"  # "full_sweep" | "tracking"
    candidate_beams: set = field(default_factory=set)
    misses: int = 0
    recent: list = field(default_factory=list)  # recent best RSRPs (dBm)


def tracking_step(state, rsrp, candidates=None, force_full=False, cfg=TrackingConfig()):
    """One epoch of the beam switch.

    In tracking mode only ``candidates`` are measured; a best RSRP more than
    ``miss_db`` below the running median counts as a miss, and
    ``misses_to_sweep`` consecutive misses schedule a full sweep for the
    next epoch.  Returns ``(new_state, chosen_pair, overhead)``.
    """
    vals = np.asarray(rsrp.values, dtype=float)
    n_tx, n_rx = vals.shape
    full = force_full or state.mode == "full_sweep" or not candidates
    pairs = sorted({(i, j) for i in range(n_tx) for j in range(n_rx)} if full else candidates)
    scores = np.array([vals[i, j] for i, j in pairs])
    k = int(np.argmax(scores))
    chosen, best = pairs[k], float(scores[k])
    if full:
        new = TrackingState("tracking", set(candidates or ()), 0, [best])
        return new, chosen, len(pairs)
    recent = list(state.recent)
    miss = bool(recent) and best < float(np.median(recent)) - cfg.miss_db
    misses = state.misses + 1 if miss else 0
    if not miss:
        recent = (recent + [best])[-cfg.window:]
    mode = "full_sweep" if misses >= cfg.misses_to_sweep else "tracking"
    if mode == "full_sweep":
        misses = 0
    return TrackingState(mode, set(candidates), misses, recent), chosen, len(pairs)


def imu_odometry(track, noise_std, drift_std, rng):
    """Per-epoch displacement estimates: truth + white noise + a random-walk bias."""
    track = np.asarray(track, dtype=float)
    steps = np.diff(track, axis=0)
    n = len(steps)
    white = rng.standard_normal((n, 2)) * noise_std
    bias = np.cumsum(rng.standard_normal((n, 2)) * drift_std, axis=0)
    return steps + white + bias
