"""Per-UE ground truth, prior draws and SLAM engine bootstrap shared by the experiment drivers."""
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .active_sensing import default_echo_codebook, estimate_rsps, fit_walls, rsps_to_va_priors, simulate_echo
from .geometry import SPEED_OF_LIGHT
from .measurement import UEState, enumerate_paths, observe
from .slam import MeasurementModel, SlamEngine, hypothesize_pa, init_hybrid, init_particles


@dataclass
class PriorSpec:
    """Spread of the true per-UE biases and of the filter's initial belief."""
    position_std: float = 0.3  # m
    velocity_std: float = 0.05  # m / epoch
    clock_std: float = 1e-9  # s, prior uncertainty of the clock bias
    orientation_std: float = np.deg2rad(1.0)  # rad, prior uncertainty of the orientation bias
    true_clock_std: float = 1e-9  # s, spread of the true clock biases
    true_orientation_std: float = np.deg2rad(3.0)
    center_position: bool = True  # prior position mean = true start (it then fixes the map frame)

    def violations(self, prefix="prior"):
        out = []
        for name in ("position_std", "velocity_std", "clock_std", "orientation_std",
                     "true_clock_std", "true_orientation_std"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                out.append(f"{prefix}.{name} must be >= 0 (got {v})")
        return out


@dataclass
class UeTruth:
    ue_id: int
    track: np.ndarray  # (n_epochs, 2), row k = position at epoch k
    clock_bias: float  # s
    orientation: float  # rad

    def state(self, k):
        k1 = min(k + 1, len(self.track) - 1)
        k0 = k1 - 1
        return UEState(self.track[k], self.track[k1] - self.track[k0], self.clock_bias, self.orientation)


def draw_truth(track, prior, seed, ue_id):
    g = rngmod.stream(seed, ue_id, 0, "truth")
    cb = float(g.normal(0.0, prior.true_clock_std)) if prior.true_clock_std > 0 else 0.0
    th = float(g.normal(0.0, prior.true_orientation_std)) if prior.true_orientation_std > 0 else 0.0
    return UeTruth(ue_id, np.asarray(track, dtype=float), cb, th)


def prior_belief(truth, prior, seed, epoch):
    """Initial mean and std of the UE state.

    Clock and orientation means are off by a draw from their stds.  The
    position mean is the true start when ``prior.center_position`` is set
    (the start then defines the map frame), otherwise it is drawn as well.
    """
    s = truth.state(epoch)
    std = np.array([prior.position_std, prior.position_std, prior.velocity_std, prior.velocity_std,
                    prior.clock_std * SPEED_OF_LIGHT, prior.orientation_std])
    g = rngmod.stream(seed, truth.ue_id, epoch, "prior")
    off = std * g.standard_normal(6)
    off[2:4] = 0.0
    if prior.center_position:
        off[:2] = 0.0
    mean = np.r_[s.position, s.velocity, s.clock_bias * SPEED_OF_LIGHT, s.orientation] + off
    return mean, std


def observe_epoch(env, truth, noise, seed, epoch, toa_window):
    ue = truth.state(epoch)
    return observe(enumerate_paths(env, ue, noise), ue, noise,
                   rngmod.stream(seed, truth.ue_id, epoch, "obs"), epoch, toa_window)


def start_engine(env, truth, noise, cfg, model, prior, seed, epoch, first_meas, known_pa=None, extra=None):
    """SLAM engine for one UE entering at ``epoch``.

    ``passive_known_pa`` starts from the true PA; ``hybrid`` runs one active
    sensing sweep, fits walls, hypothesises the PA from ``first_meas`` and
    seeds the map with mirrored VA priors.  ``extra`` (e.g. a downloaded
    crowd map) is merged in afterwards.  Returns ``(engine, info)``.
    """
    mean0, std0 = prior_belief(truth, prior, seed, epoch)
    ps = init_particles(mean0, std0, cfg.n_particles, rngmod.stream(seed, truth.ue_id, epoch, "init"))
    info = {"n_walls": 0, "pa_hypothesis": None}
    if cfg.mode == "passive_known_pa":
        pa = known_pa if known_pa is not None else next(iter(env.pas.values()))
        feats = init_hybrid([], (pa, None), "passive_known_pa", epoch=epoch)
    else:
        believed = UEState(mean0[:2], mean0[2:4], mean0[4] / SPEED_OF_LIGHT, mean0[5])
        cb = default_echo_codebook()
        echoes = simulate_echo(env, truth.state(epoch), cb, noise, rngmod.stream(seed, truth.ue_id, epoch, "echo"))
        rsps = estimate_rsps(echoes, believed, cb, noise)
        walls = fit_walls(rsps)
        info["n_walls"] = len(walls)
        pa = hypothesize_pa(first_meas, believed, walls, model, cfg.pa_consensus_tol)
        info["pa_hypothesis"] = pa
        if pa is None:
            feats = init_hybrid([], None, "hybrid", epoch=epoch)
        else:
            pa_cov = cfg.pa_prior_std ** 2 * np.eye(2)
            priors = rsps_to_va_priors(rsps, [("pa", pa, pa_cov)], ue=believed.position)
            feats = init_hybrid(priors, (pa, pa_cov), "hybrid", epoch=epoch)
    eng = SlamEngine(cfg, model, ps, feats)
    if extra:
        eng.add_features(extra)
    return eng, info


def measurement_model(env, noise, cfg):
    return MeasurementModel.from_noise(noise, cfg, 2.0 * env.diagonal)


def toa_window(env):
    return 2.0 * env.diagonal / SPEED_OF_LIGHT


def loop_track(center, radii, n_points, omega=0.15, phase=0.0):
    """Elliptical loop sampled once per epoch; row k is the position at epoch k."""
    t = np.arange(n_points)
    return np.column_stack([center[0] + radii[0] * np.cos(omega * t + phase),
                            center[1] + radii[1] * np.sin(omega * t + phase)])


def cohort_loops(n_ues, room=(0.0, 0.0, 12.0, 10.0)):
    """Loop parameters ``(center, radii, omega, phase)`` spread over the lower part of the room (ids 1..n_ues)."""
    x0, y0, x1, y1 = room
    w, h = x1 - x0, y1 - y0
    out = {}
    for i in range(n_ues):
        a = 2.0 * np.pi * i / n_ues
        center = (x0 + 0.5 * w + 0.1 * w * np.cos(a), y0 + 0.34 * h + 0.05 * h * np.sin(a))
        radii = (0.25 * w - 0.01 * w * (i % 3), 0.16 * h - 0.01 * h * (i % 2))
        out[i + 1] = (center, radii, 0.15 * (1 if i % 2 == 0 else -1), a)
    return out


def cohort_tracks(n_ues, n_points, room=(0.0, 0.0, 12.0, 10.0)):
    return {u: loop_track(c, r, n_points, om, ph) for u, (c, r, om, ph) in cohort_loops(n_ues, room).items()}


def visible_map(env, positions, include_scatterers=True):
    """True map points actually seen along ``positions``: PAs, VAs with a valid bounce, scatterers."""
    seen = {}
    for p in np.asarray(positions, dtype=float):
        for path in enumerate_paths(env, p):
            if path.kind == "scatter" and not include_scatterers:
                continue
            seen.setdefault(path.tag.replace("LOS:", "PA:"), path.source)
    for pa_id, pa in env.pas.items():
        seen.setdefault(f"PA:{pa_id}", pa)
    return np.array([seen[k] for k in sorted(seen)]).reshape(-1, 2)
