"""Multipath measurement synthesis: AOA/AOD/TOA/RSRP with biases, misses and clutter."""
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    SPEED_OF_LIGHT,
    as_point,
    bearing,
    mirror_point,
    segment_blocked,
    trace_specular_path,
    wrap_angle,
)

CARRIER_HZ = 28e9
SIDELOBE_DB = -20.0


@dataclass
class UEState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    clock_bias: float = 0.0  # seconds
    orientation: float = 0.0  # radians, body frame w.r.t. global

    def __post_init__(self):
        self.position = as_point(self.position)
        self.velocity = as_point(self.velocity)
        self.orientation = wrap_angle(self.orientation)


@dataclass
class NoiseProfile:
    aoa_std: float = np.deg2rad(2.0)
    aod_std: float = np.deg2rad(2.0)
    toa_std: float = 1e-9
    rsrp_std: float = 1.0
    detection_prob: float = 0.95
    clutter_rate: float = 1.0
    tx_power_dbm: float = 20.0
    noise_floor_dbm: float = -110.0
    reflection_loss_db: float = 10.0
    scatter_loss_db: float = 20.0

    def violations(self, prefix="noise"):
        out = []
        for name in ("aoa_std", "aod_std", "toa_std", "rsrp_std", "clutter_rate"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                out.append(f"{prefix}.{name} must be >= 0 (got {v})")
        if not 0.0 <= self.detection_prob <= 1.0:
            out.append(f"{prefix}.detection_prob must be in [0, 1] (got {self.detection_prob})")
        return out


@dataclass(frozen=True)
class GroundTruthPath:
    kind: str  # "LOS" | "NLOS" | "scatter"
    tag: str
    aoa: float  # global arrival azimuth at the UE
    aod: float  # global departure azimuth at the PA
    toa: float  # seconds, unbiased
    rsrp: float  # dBm
    source: np.ndarray  # PA, VA or scatterer position the UE "sees"
    pa_id: str = ""


@dataclass(frozen=True)
class Measurement:
    aoa: float  # UE body frame
    aod: float  # global frame at the anchor
    toa: float
    rsrp: float
    truth_tag: str
    epoch: int = 0


def free_space_loss_db(distance, freq=CARRIER_HZ):
    return 20.0 * np.log10(4.0 * np.pi * max(distance, 1e-3) * freq / SPEED_OF_LIGHT)


def enumerate_paths(env, ue, noise=None):
    """Every geometric LOS, single-bounce specular and single-scatter path to ``ue``."""
    noise = noise or NoiseProfile()
    p = ue.position if isinstance(ue, UEState) else as_point(ue)
    paths = []
    for pa_id, pa in env.pas.items():
        if not segment_blocked(pa, p, env.walls):
            d = float(np.linalg.norm(p - pa))
            paths.append(GroundTruthPath(
                "LOS", f"LOS:{pa_id}", bearing(p, pa), bearing(pa, p), d / SPEED_OF_LIGHT,
                noise.tx_power_dbm - free_space_loss_db(d), pa.copy(), pa_id))
        for w in env.walls:
            hit = trace_specular_path(p, pa, w, env.walls)
            if hit is None:
                continue
            refl, length = hit
            va = mirror_point(pa, w)
            paths.append(GroundTruthPath(
                "NLOS", f"NLOS:{pa_id}|{w.id}", bearing(p, va), bearing(pa, refl),
                length / SPEED_OF_LIGHT,
                noise.tx_power_dbm - free_space_loss_db(length) - w.loss_db, va, pa_id))
        for s_id, s in env.scatterers.items():
            if segment_blocked(pa, s, env.walls) or segment_blocked(s, p, env.walls):
                continue
            d = float(np.linalg.norm(s - pa) + np.linalg.norm(p - s))
            paths.append(GroundTruthPath(
                "scatter", f"scatter:{s_id}", bearing(p, s), bearing(pa, s), d / SPEED_OF_LIGHT,
                noise.tx_power_dbm - free_space_loss_db(d) - noise.scatter_loss_db, s.copy(), pa_id))
    return paths


def observe(paths, ue, noise, rng, epoch=0, toa_window=1e-7):
    """Noisy, biased, possibly missed observations of ``paths`` plus Poisson clutter.

    Random draws happen in a fixed order (detections, path noise, clutter) so a
    given generator state always produces the same list.
    """
    n = len(paths)
    detected = rng.random(n) < noise.detection_prob
    eps = rng.standard_normal((n, 4))
    out = []
    for k, path in enumerate(paths):
        if not detected[k]:
            continue
        aoa = wrap_angle(wrap_angle(path.aoa - ue.orientation) + noise.aoa_std * eps[k, 0])
        aod = wrap_angle(path.aod + noise.aod_std * eps[k, 1])
        toa = path.toa + ue.clock_bias + noise.toa_std * eps[k, 2]
        rsrp = path.rsrp + noise.rsrp_std * eps[k, 3]
        out.append(Measurement(float(aoa), float(aod), float(toa), float(rsrp), path.tag, epoch))
    n_clutter = rng.poisson(noise.clutter_rate) if noise.clutter_rate > 0 else 0
    if n_clutter:
        u = rng.random((n_clutter, 3))
        for row in u:
            aoa = wrap_angle(np.pi - 2.0 * np.pi * row[0])
            aod = wrap_angle(np.pi - 2.0 * np.pi * row[1])
            out.append(Measurement(float(aoa), float(aod), float(row[2] * toa_window),
                                   noise.noise_floor_dbm + 3.0, "clutter", epoch))
    return out


@dataclass
class BeamCodebook:
    n_beams: int = 8
    sector: float = np.deg2rad(100.0)
    beamwidth: float = np.deg2rad(12.5)

    def __post_init__(self):
        if self.n_beams < 2:
            raise ValueError("a codebook needs at least 2 beams")

    @property
    def centers(self):
        """Beam boresights relative to the array boresight, evenly spread over the sector."""
        step = self.sector / self.n_beams
        return -self.sector / 2.0 + step * (np.arange(self.n_beams) + 0.5)

    @property
    def spacing(self):
        return self.sector / self.n_beams

    def gains(self, angle):
        """Linear power gain of every beam toward ``angle`` (array frame, radians)."""
        delta = np.abs(wrap_angle(np.asarray(angle, dtype=float)[..., None] - self.centers))
        main = np.where(delta < self.beamwidth, np.cos(np.pi * delta / (2.0 * self.beamwidth)) ** 2, 0.0)
        return np.maximum(main, 10.0 ** (SIDELOBE_DB / 10.0))

    def nearest(self, angle):
        return int(np.argmin(np.abs(wrap_angle(angle - self.centers))))

    def in_sector(self, angle):
        return abs(wrap_angle(angle)) <= self.sector / 2.0


@dataclass
class RSRPMatrix:
    values: np.ndarray  # n_tx x n_rx, dBm
    tx_orientation: float = 0.0
    rx_orientation: float = 0.0
    noise_floor_dbm: float = -110.0


def beam_power_grid(paths, ue, tx_cb, rx_cb, tx_orientation=0.0, rx_orientation=0.0, path_offsets_db=None):
    """Noise-free linear power per beam pair (mW), summed over ``paths``."""
    grid = np.zeros((tx_cb.n_beams, rx_cb.n_beams))
    for k, path in enumerate(paths):
        p_dbm = path.rsrp + (path_offsets_db[k] if path_offsets_db is not None else 0.0)
        g_tx = tx_cb.gains(wrap_angle(path.aod - tx_orientation))
        g_rx = rx_cb.gains(wrap_angle(path.aoa - ue.orientation - rx_orientation))
        grid += 10.0 ** (p_dbm / 10.0) * np.outer(g_tx, g_rx)
    return grid


def sweep_rsrp(env, ue, tx_cb, rx_cb, noise, rng, tx_orientation=0.0, rx_orientation=0.0,
               paths=None, path_offsets_db=None):
    """Exhaustive bidirectional beam sweep: one RSRP per (tx beam, rx beam)."""
    if paths is None:
        paths = enumerate_paths(env, ue, noise)
    grid = beam_power_grid(paths, ue, tx_cb, rx_cb, tx_orientation, rx_orientation, path_offsets_db)
    grid += 10.0 ** (noise.noise_floor_dbm / 10.0)
    values = 10.0 * np.log10(grid) + noise.rsrp_std * rng.standard_normal(grid.shape)
    return RSRPMatrix(values, tx_orientation, rx_orientation, noise.noise_floor_dbm)
