"""Particle-based belief-propagation SLAM over the UE state and a PA/VA feature map.

The UE posterior is carried by particles with state
``[x, y, vx, vy, clock_bias_m, orientation]`` (clock bias kept in meters,
i.e. multiplied by c).  The map is one Gaussian per feature, conditioned on
the weighted-mean UE state, with a Bernoulli existence probability.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import chi2

from .geometry import SPEED_OF_LIGHT, mirror_across_line, wrap_angle
from .measurement import UEState

log = logging.getLogger(__name__)

STATE_DIM = 6
IX, IY, IVX, IVY, IB, ITH = range(STATE_DIM)
ANGULAR = {"aoa": True, "aod": True, "toa": False}
KNOWN_PA_COV = 1e-6
CLUTTER_FLOOR = 1e-6
FD_STEP = 1e-6
A0_FLOOR = 1e-12


@dataclass
class Feature:
    id: int
    kind: str  # "PA" | "VA" | "scatterer"
    mean: np.ndarray
    covariance: np.ndarray
    existence: float
    birth_epoch: int = 0
    last_seen: int = 0
    hits: int = 0

    def copy(self):
        return Feature(self.id, self.kind, self.mean.copy(), self.covariance.copy(), self.existence,
                       self.birth_epoch, self.last_seen, self.hits)


@dataclass
class ParticleSet:
    states: np.ndarray  # (N, 6)
    weights: np.ndarray  # (N,)

    def __len__(self):
        return len(self.weights)

    def copy(self):
        return ParticleSet(self.states.copy(), self.weights.copy())

    def moments(self):
        return state_moments(self.states, self.weights)

    def ue_state(self):
        m, _ = self.moments()
        return UEState(m[:2], m[2:4], m[IB] / SPEED_OF_LIGHT, m[ITH])

    def ess(self):
        return 1.0 / np.sum(self.weights ** 2)


@dataclass
class SlamConfig:
    n_particles: int = 2000
    accel_std: float = 0.1  # m / epoch^2
    clock_drift_std: float = 0.0  # s per epoch
    orientation_drift_std: float = 0.0  # rad per epoch
    control_std: float = 0.05  # m per epoch, IMU displacement noise seen by the filter
    gate_prob: float = 0.999  # chi-square gate; 13.8 for 2 dof
    birth_threshold: float = 0.5
    prune_threshold: float = 1e-3
    missed_decay: float = 0.97
    birth_intensity: float = 2.0
    birth_existence: float = 0.5
    tentative_timeout: int = 3
    confirm_hits: int = 3
    merge_gate: float = 1.0
    mode: str = "passive_known_pa"  # or "hybrid"
    measurements: tuple = ("aoa", "toa")
    fov: float = 2.0 * np.pi
    min_angle_std: float = 1e-5
    min_toa_std: float = 1e-13
    refine_iterations: int = 10
    pa_prior_std: float = 1.0
    pa_consensus_tol: float = 1.5
    report_existence: float = 0.5

    def violations(self, prefix="slam"):
        out = []
        if self.n_particles < 1:
            out.append(f"{prefix}.n_particles must be >= 1 (got {self.n_particles})")
        for name in ("gate_prob", "birth_threshold", "prune_threshold", "missed_decay", "birth_intensity",
                     "birth_existence", "fov", "pa_prior_std", "pa_consensus_tol"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                out.append(f"{prefix}.{name} must be positive (got {v})")
        for name in ("accel_std", "clock_drift_std", "orientation_drift_std", "control_std"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                out.append(f"{prefix}.{name} must be >= 0 (got {v})")
        if self.mode not in ("passive_known_pa", "hybrid"):
            out.append(f"{prefix}.mode must be passive_known_pa or hybrid (got {self.mode!r})")
        bad = [m for m in self.measurements if m not in ANGULAR]
        if bad or not self.measurements or "aoa" not in self.measurements:
            out.append(f"{prefix}.measurements must include aoa and be a subset of aoa/aod/toa "
                       f"(got {list(self.measurements)})")
        return out


@dataclass
class MeasurementModel:
    """Filter-side view of the sensor: which components, their noise, clutter density."""
    components: tuple
    stds: np.ndarray
    detection_prob: float
    clutter_rate: float
    toa_window_m: float

    @classmethod
    def from_noise(cls, noise, cfg, toa_window_m):
        stds = []
        for c in cfg.measurements:
            if c == "aoa":
                stds.append(max(noise.aoa_std, cfg.min_angle_std))
            elif c == "aod":
                stds.append(max(noise.aod_std, cfg.min_angle_std))
            else:
                stds.append(max(noise.toa_std, cfg.min_toa_std) * SPEED_OF_LIGHT)
        return cls(tuple(cfg.measurements), np.array(stds), noise.detection_prob,
                   max(noise.clutter_rate, CLUTTER_FLOOR), float(toa_window_m))

    @property
    def angular(self):
        return np.array([ANGULAR[c] for c in self.components])

    def vector(self, meas):
        out = []
        for c in self.components:
            if c == "toa":
                out.append(meas.toa * SPEED_OF_LIGHT)
            else:
                out.append(getattr(meas, c))
        return np.array(out)

    def uniform_density(self):
        return np.array([1.0 / self.toa_window_m if c == "toa" else 1.0 / (2.0 * np.pi)
                         for c in self.components])

    def residual(self, a, b):
        d = np.asarray(a, dtype=float) - b
        ang = self.angular
        if ang.any():
            d = d.copy()
            d[..., ang] = wrap_angle(d[..., ang])
        return d


@lru_cache(maxsize=64)
def _chi2_quantile(prob, dof):
    return float(chi2.ppf(prob, dof))


def state_moments(states, weights):
    ref = states[0, ITH]
    th = ref + wrap_angle(states[:, ITH] - ref)
    x = states.copy()
    x[:, ITH] = th
    mean = weights @ x
    d = x - mean
    cov = (d * weights[:, None]).T @ d
    mean[ITH] = wrap_angle(mean[ITH])
    return mean, 0.5 * (cov + cov.T)


def predict_measurement(states, f, kind, pa, components):
    """Predicted measurement components for every state row; NaN where undefined."""
    x = states[:, IX]
    y = states[:, IY]
    dx = f[0] - x
    dy = f[1] - y
    cols = []
    for c in components:
        if c == "aoa":
            cols.append(wrap_angle(np.arctan2(dy, dx) - states[:, ITH]))
        elif c == "toa":
            r = np.hypot(dx, dy)
            if kind == "scatterer" and pa is not None:
                r = r + np.hypot(f[0] - pa[0], f[1] - pa[1])
            cols.append(r + states[:, IB])
        else:
            if kind == "PA":
                cols.append(np.arctan2(-dy, -dx))
            elif pa is None:
                cols.append(np.full(len(x), np.nan))
            elif kind == "VA":
                a = 2.0 * np.arctan2(f[1] - pa[1], f[0] - pa[0]) + np.pi
                cols.append(wrap_angle(a - np.arctan2(-dy, -dx)))
            else:
                cols.append(np.full(len(x), np.arctan2(f[1] - pa[1], f[0] - pa[0])))
    return np.column_stack(cols)


def _jacobians(state, f, kind, pa, model):
    """Analytic Jacobians of the measurement w.r.t. the UE state and the feature position."""
    dx = f[0] - state[IX]
    dy = f[1] - state[IY]
    r2 = max(dx * dx + dy * dy, 1e-18)
    r = np.sqrt(r2)
    m = len(model.components)
    hx = np.zeros((m, STATE_DIM))
    hf = np.zeros((m, 2))
    for i, c in enumerate(model.components):
        if c == "aoa":
            hx[i, IX], hx[i, IY], hx[i, ITH] = dy / r2, -dx / r2, -1.0
            hf[i] = -dy / r2, dx / r2
        elif c == "toa":
            hx[i, IX], hx[i, IY], hx[i, IB] = -dx / r, -dy / r, 1.0
            hf[i] = dx / r, dy / r
            if kind == "scatterer" and pa is not None:
                g = f - pa
                hf[i] += g / max(np.hypot(g[0], g[1]), 1e-9)
        else:
            if kind == "PA":
                hx[i, IX], hx[i, IY] = dy / r2, -dx / r2
                hf[i] = -dy / r2, dx / r2
            elif pa is None:
                hx[i] = np.nan
                hf[i] = np.nan
            else:
                g = f - pa
                g2 = max(g @ g, 1e-18)
                if kind == "VA":
                    hx[i, IX], hx[i, IY] = -dy / r2, dx / r2
                    hf[i] = -2.0 * g[1] / g2 + dy / r2, 2.0 * g[0] / g2 - dx / r2
                else:
                    hf[i] = -g[1] / g2, g[0] / g2
    return hx, hf


def _fd_jacobians(state, f, kind, pa, model):
    """Central-difference reference for :func:`_jacobians` (used by the tests)."""
    pts = np.repeat(state[None, :], 2 * STATE_DIM, axis=0)
    for j in range(STATE_DIM):
        pts[2 * j, j] += FD_STEP
        pts[2 * j + 1, j] -= FD_STEP
    h = predict_measurement(pts, f, kind, pa, model.components)
    hx = model.residual(h[0::2], h[1::2]).T / (2 * FD_STEP)
    fs = np.array([f + [FD_STEP, 0], f - [FD_STEP, 0], f + [0, FD_STEP], f - [0, FD_STEP]])
    hf = np.empty((len(model.components), 2))
    for j in range(2):
        hp = predict_measurement(state[None, :], fs[2 * j], kind, pa, model.components)[0]
        hm = predict_measurement(state[None, :], fs[2 * j + 1], kind, pa, model.components)[0]
        hf[:, j] = model.residual(hp, hm) / (2 * FD_STEP)
    return hx, hf


def pa_estimate(features):
    pas = [f for f in features if f.kind == "PA"]
    if not pas:
        return None
    return max(pas, key=lambda f: f.existence).mean


def in_fov(state, f, fov):
    if fov >= 2.0 * np.pi:
        return True
    az = wrap_angle(np.arctan2(f[1] - state[IY], f[0] - state[IX]) - state[ITH])
    return abs(az) <= fov / 2.0


# --------------------------------------------------------------------------- prediction

def init_particles(mean, std, n, rng):
    mean = np.asarray(mean, dtype=float)
    states = mean + rng.standard_normal((n, STATE_DIM)) * np.asarray(std, dtype=float)
    states[:, ITH] = wrap_angle(states[:, ITH])
    return ParticleSet(states, np.full(n, 1.0 / n))


def predict(particles, dt, cfg, rng, control=None):
    """Constant-velocity propagation (or IMU displacement when ``control`` is given)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = len(particles)
    s = particles.states.copy()
    acc = rng.standard_normal((n, 2)) * cfg.accel_std
    if control is None:
        s[:, IX:IY + 1] += s[:, IVX:IVY + 1] * dt + 0.5 * acc * dt ** 2
        s[:, IVX:IVY + 1] += acc * dt
    else:
        step = np.asarray(control, dtype=float) + rng.standard_normal((n, 2)) * cfg.control_std
        s[:, IX:IY + 1] += step
        s[:, IVX:IVY + 1] = step / dt
    s[:, IB] += rng.standard_normal(n) * cfg.clock_drift_std * SPEED_OF_LIGHT * np.sqrt(dt)
    s[:, ITH] = wrap_angle(s[:, ITH] + rng.standard_normal(n) * cfg.orientation_drift_std * np.sqrt(dt))
    return ParticleSet(s, particles.weights.copy())


# --------------------------------------------------------------------------- association

@dataclass
class Association:
    rows: np.ndarray  # (M, K + 2): features..., clutter, new
    feature_marginals: np.ndarray  # (K, M + 1): missed, measurements...
    messages: np.ndarray  # (M, K) measurement -> feature
    gate: np.ndarray  # (K, M) bool
    usable: list  # per feature, indices of usable components
    s_feature: list  # per feature, measurement covariance without particle spread
    detect_ratio: np.ndarray  # (K,) likelihood ratio of "detected" evidence
    in_view: np.ndarray  # (K,) bool
    xi: np.ndarray  # (M,)
    iterations: int = 0

    @property
    def new_mass(self):
        return self.rows[:, -1]


def _gauss(res, s_inv, logdet):
    d = res.shape[-1]
    maha = np.einsum("...i,ij,...j->...", res, s_inv, res)
    return maha, np.exp(-0.5 * maha - 0.5 * logdet - 0.5 * d * np.log(2.0 * np.pi))


def associate(particles, features, measurements, model, cfg):
    """Soft one-to-one data association by loopy belief propagation."""
    k_n, m_n = len(features), len(measurements)
    mean, _ = particles.moments()
    w = particles.weights
    pa = pa_estimate(features)
    z = np.array([model.vector(m) for m in measurements]).reshape(m_n, len(model.components))
    u = model.uniform_density()
    mu_c = model.clutter_rate
    xi = np.full(m_n, 1.0 + cfg.birth_intensity / mu_c)
    a = np.zeros((k_n, m_n))
    a0 = np.ones(k_n)
    detect = np.zeros((k_n, m_n))
    gate = np.zeros((k_n, m_n), dtype=bool)
    usable, s_feat, in_view = [], [], np.zeros(k_n, dtype=bool)
    for k, f in enumerate(features):
        ref = predict_measurement(mean[None, :], f.mean, f.kind, pa, model.components)[0]
        idx = np.flatnonzero(np.isfinite(ref))
        usable.append(idx)
        hx, hf = _jacobians(mean, f.mean, f.kind, pa, model)
        hf = hf[idx]
        sf = np.diag(model.stds[idx] ** 2) + hf @ f.covariance @ hf.T
        s_feat.append(sf)
        in_view[k] = in_fov(mean, f.mean, cfg.fov)
        pd = model.detection_prob if in_view[k] else 0.0
        r = f.existence
        a0[k] = max(1.0 - r * pd, A0_FLOOR)
        if m_n == 0 or pd == 0.0 or len(idx) == 0:
            continue
        pred = predict_measurement(particles.states, f.mean, f.kind, pa, model.components)[:, idx]
        sub = _Sub(model, idx)
        dev = sub.residual(pred, ref)
        dmean = w @ dev
        dd = dev - dmean
        spread = (dd * w[:, None]).T @ dd
        mu = sub.residual(ref + dmean, 0.0)
        s = sf + spread
        s_inv = np.linalg.inv(s)
        _, logdet = np.linalg.slogdet(s)
        res = sub.residual(z[:, idx], mu)
        maha, dens = _gauss(res, s_inv, logdet)
        thr = _chi2_quantile(cfg.gate_prob, len(idx))
        gate[k] = maha <= thr
        ratio = np.where(gate[k], dens / np.prod(u[idx]), 0.0)
        detect[k] = pd * ratio / mu_c
        a[k] = r * detect[k]

    # loopy BP over the bipartite association graph
    nu = np.ones((m_n, k_n)) / xi[:, None] if m_n else np.zeros((0, k_n))
    phi = np.zeros((k_n, m_n))
    it = 0
    # sums "over all others" are formed explicitly to avoid cancellation
    excl_m = np.ones((m_n, m_n)) - np.eye(m_n)
    excl_k = np.ones((k_n, k_n)) - np.eye(k_n)
    for it in range(1, 21):
        phi_new = a / (a0[:, None] + (a * nu.T) @ excl_m)
        nu_new = (1.0 / (xi[None, :] + excl_k @ phi_new)).T
        delta = np.max(np.abs(nu_new - nu)) if nu.size else 0.0
        phi, nu = phi_new, nu_new
        if delta < 1e-6:
            break

    rows = np.zeros((m_n, k_n + 2))
    if m_n:
        rows[:, :k_n] = phi.T
        rows[:, k_n] = 1.0
        rows[:, k_n + 1] = xi - 1.0
        rows /= rows.sum(axis=1, keepdims=True)
    fm = np.zeros((k_n, m_n + 1))
    fm[:, 0] = a0
    fm[:, 1:] = a * nu.T
    fm /= np.maximum(fm.sum(axis=1, keepdims=True), 1e-300)
    lam = np.sum(detect * nu.T, axis=1) if m_n else np.zeros(k_n)
    return Association(rows, fm, nu, gate, usable, s_feat, lam, in_view, xi, it)


class _Sub:
    """Residual helper restricted to a subset of measurement components."""

    def __init__(self, model, idx):
        self.ang = model.angular[idx]

    def residual(self, a, b):
        d = np.asarray(a, dtype=float) - b
        if self.ang.any():
            d = np.array(d, dtype=float, copy=True)
            d[..., self.ang] = wrap_angle(d[..., self.ang])
        return d


# --------------------------------------------------------------------------- update

@dataclass
class UpdateDiagnostics:
    weights_reset: bool = False
    resampled: bool = False
    refined: bool = False
    ess: float = 0.0


def systematic_resample(weights, rng):
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions)


def _refine_ue(prior_mean, prior_cov, start, pairs, model, iterations=10):
    """Iterated EKF update of the UE state against soft-assigned measurement pairs."""
    x = start.copy()
    post_cov = prior_cov
    for _ in range(iterations):
        zs, hs, Hs, Rs = [], [], [], []
        for f, kind, pa, idx, zv, r_pair in pairs:
            h = predict_measurement(x[None, :], f, kind, pa, model.components)[0][idx]
            hx, _ = _jacobians(x, f, kind, pa, model)
            zs.append(_Sub(model, idx).residual(zv[idx], h))
            Hs.append(hx[idx])
            Rs.append(r_pair)
        H = np.vstack(Hs)
        R = _block_diag(Rs)
        innov = np.concatenate(zs) - H @ _state_diff(prior_mean, x)
        S = H @ prior_cov @ H.T + R
        K = np.linalg.solve(S, H @ prior_cov).T
        x_new = prior_mean + K @ innov
        x_new[ITH] = wrap_angle(x_new[ITH])
        step = np.max(np.abs(_state_diff(x_new, x)))
        x = x_new
        ikh = np.eye(STATE_DIM) - K @ H
        post_cov = ikh @ prior_cov @ ikh.T + K @ R @ K.T
        if step < 1e-10:
            break
    return x, 0.5 * (post_cov + post_cov.T)


def _state_diff(a, b):
    d = a - b
    d[ITH] = wrap_angle(d[ITH])
    return d


def _block_diag(blocks):
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i:i + k, i:i + k] = b
        i += k
    return out


def _reshape_cloud(particles, target_mean, target_cov, rng):
    """Affinely map the cloud onto the refined moments; redraw it when it has collapsed."""
    mean, cov = particles.moments()
    n = len(particles)
    jitter = 1e-12 * np.eye(STATE_DIM)
    l_t = np.linalg.cholesky(target_cov + jitter)
    dev = particles.states - mean
    dev[:, ITH] = wrap_angle(dev[:, ITH])
    var_ok = np.diag(cov) >= 0.25 * np.diag(target_cov)
    if np.all(var_ok):
        l_c = np.linalg.cholesky(cov + jitter)
        A = l_t @ np.linalg.inv(l_c)
        states = target_mean + dev @ A.T
        weights = particles.weights.copy()
    else:
        states = target_mean + rng.standard_normal((n, STATE_DIM)) @ l_t.T
        weights = np.full(n, 1.0 / n)
    states[:, ITH] = wrap_angle(states[:, ITH])
    return ParticleSet(states, weights)


def update(particles, features, measurements, assoc, model, cfg, rng, epoch=0):
    """Reweight particles, refine UE and features, update existence.

    Returns ``(particles, features, log_likelihood, diagnostics)``.
    """
    diag = UpdateDiagnostics()
    k_n, m_n = len(features), len(measurements)
    pa = pa_estimate(features)
    prior_mean, prior_cov = particles.moments()
    z = [model.vector(m) for m in measurements]
    u = model.uniform_density()

    logw = np.log(np.maximum(particles.weights, 1e-300))
    for k, f in enumerate(features):
        idx = assoc.usable[k]
        if not assoc.in_view[k] or m_n == 0 or len(idx) == 0 or not assoc.gate[k].any():
            continue
        sub = _Sub(model, idx)
        s = assoc.s_feature[k]
        s_inv = np.linalg.inv(s)
        _, logdet = np.linalg.slogdet(s)
        pred = predict_measurement(particles.states, f.mean, f.kind, pa, model.components)[:, idx]
        acc = np.full(len(particles), max(1.0 - f.existence * model.detection_prob, A0_FLOOR))
        for m in np.flatnonzero(assoc.gate[k]):
            _, dens = _gauss(sub.residual(z[m][idx], pred), s_inv, logdet)
            acc += f.existence * model.detection_prob * dens / np.prod(u[idx]) / model.clutter_rate \
                * assoc.messages[m, k]
        with np.errstate(divide="ignore"):
            logw += np.log(acc)
    finite = np.isfinite(logw)
    if not finite.any():
        diag.weights_reset = True
        w = np.full(len(particles), 1.0 / len(particles))
        loglik = -np.inf
    else:
        mx = np.max(logw[finite])
        w = np.where(finite, np.exp(logw - mx), 0.0)
        tot = w.sum()
        loglik = float(mx + np.log(tot))
        w /= tot
        if not np.isfinite(w).all() or tot <= 0:
            diag.weights_reset = True
            w = np.full(len(particles), 1.0 / len(particles))
    w /= w.sum()
    post = ParticleSet(particles.states.copy(), w)
    diag.ess = float(post.ess())

    # refine the UE state against the soft-assigned measurements
    pairs = []
    for m in range(m_n):
        for k, f in enumerate(features):
            p = assoc.rows[m, k]
            if p < 1e-3 or len(assoc.usable[k]) == 0:
                continue
            pairs.append((f.mean, f.kind, pa, assoc.usable[k], z[m], assoc.s_feature[k] / p))
    w_mean, _ = post.moments()
    if pairs:
        x_ref, p_ref = _refine_ue(prior_mean, prior_cov, w_mean, pairs, model, cfg.refine_iterations)
        diag.refined = True
    if post.ess() < len(post) / 2.0:
        idx = systematic_resample(post.weights, rng)
        post = ParticleSet(post.states[idx], np.full(len(post), 1.0 / len(post)))
        diag.resampled = True
    if pairs:
        post = _reshape_cloud(post, x_ref, p_ref, rng)
    ue_mean, ue_cov = post.moments()

    # features: EKF against their soft-assigned measurements, then existence
    new_features = []
    for k, f in enumerate(features):
        f = f.copy()
        idx = assoc.usable[k]
        if m_n and len(idx):
            sub = _Sub(model, idx)
            for m in np.flatnonzero(assoc.feature_marginals[k, 1:] >= 1e-3):
                p = assoc.feature_marginals[k, 1 + m]
                h = predict_measurement(ue_mean[None, :], f.mean, f.kind, pa, model.components)[0][idx]
                hx, hf = _jacobians(ue_mean, f.mean, f.kind, pa, model)
                hx, hf = hx[idx], hf[idx]
                r_eff = (np.diag(model.stds[idx] ** 2) + hx @ ue_cov @ hx.T) / p
                S = hf @ f.covariance @ hf.T + r_eff
                K = np.linalg.solve(S, hf @ f.covariance).T
                f.mean = f.mean + K @ sub.residual(z[m][idx], h)
                ikh = np.eye(2) - K @ hf
                f.covariance = ikh @ f.covariance @ ikh.T + K @ r_eff @ K.T
                f.covariance = 0.5 * (f.covariance + f.covariance.T)
        f.existence = _existence(f.existence, assoc.detect_ratio[k], assoc.in_view[k],
                                 model.detection_prob, cfg.missed_decay)
        if assoc.feature_marginals[k, 1:].sum() > 0.5:
            f.last_seen = epoch
            f.hits += 1
        new_features.append(f)
    return post, new_features, loglik, diag


def _existence(r, lam, visible, pd, beta):
    """Bernoulli existence update: Bayes odds boost when detected, geometric decay when missed."""
    if not visible:
        return r
    detected = r * lam / (r * lam + r * (1.0 - pd) + (1.0 - r)) if lam > 0 else 0.0
    den = r * lam + 1.0 - r
    r_hit = r * lam / den if lam > 0 and den > 0 else r
    out = detected * r_hit + (1.0 - detected) * beta * r
    return float(min(max(out, 0.0), 1.0))


# --------------------------------------------------------------------------- birth / prune

def _back_project(state, zv, components, pa):
    """Feature position implied by one measurement from ``state`` (or None)."""
    comp = list(components)
    az = zv[comp.index("aoa")] + state[ITH]
    u = np.array([np.cos(az), np.sin(az)])
    p = state[:2]
    if "toa" in comp:
        rng_m = zv[comp.index("toa")] - state[IB]
        if rng_m <= 0:
            return None
        return p + rng_m * u
    if "aod" in comp and pa is not None:
        aod = zv[comp.index("aod")]
        v = np.array([np.cos(aod), np.sin(aod)])
        A = np.column_stack([u, -v])
        if abs(np.linalg.det(A)) < np.sin(np.deg2rad(2.0)):
            return None
        s, t = np.linalg.solve(A, pa - p)
        if s <= 0 or t <= 0:
            return None
        bounce = p + s * u
        return p + (s + np.linalg.norm(bounce - pa)) * u
    return None


def _birth_covariance(state, ue_cov, zv, model, pa):
    base = _back_project(state, zv, model.components, pa)
    jx = np.zeros((2, STATE_DIM))
    for j in range(STATE_DIM):
        d = np.zeros(STATE_DIM)
        d[j] = FD_STEP
        hp = _back_project(state + d, zv, model.components, pa)
        hm = _back_project(state - d, zv, model.components, pa)
        if hp is None or hm is None:
            return None
        jx[:, j] = (hp - hm) / (2 * FD_STEP)
    jz = np.zeros((2, len(zv)))
    for j in range(len(zv)):
        d = np.zeros(len(zv))
        d[j] = FD_STEP
        hp = _back_project(state, zv + d, model.components, pa)
        hm = _back_project(state, zv - d, model.components, pa)
        if hp is None or hm is None:
            return None
        jz[:, j] = (hp - hm) / (2 * FD_STEP)
    cov = jx @ ue_cov @ jx.T + jz @ np.diag(model.stds ** 2) @ jz.T
    return base, 0.5 * (cov + cov.T) + 1e-9 * np.eye(2)


@dataclass
class PendingBearing:
    epoch: int
    origin: np.ndarray
    azimuth: float
    mass: float


def _triangulate(b1, b2, min_angle=np.deg2rad(2.0)):
    u1 = np.array([np.cos(b1.azimuth), np.sin(b1.azimuth)])
    u2 = np.array([np.cos(b2.azimuth), np.sin(b2.azimuth)])
    A = np.column_stack([u1, -u2])
    if abs(np.linalg.det(A)) < np.sin(min_angle):
        return None
    s, t = np.linalg.solve(A, b2.origin - b1.origin)
    if s <= 0 or t <= 0:
        return None
    return b1.origin + s * u1


def birth_and_prune(features, measurements, assoc, particles, model, cfg, epoch=0, next_id=0,
                    pending=None):
    """Spawn features from unexplained measurements and drop unreliable ones.

    Returns ``(features, next_id, pending)`` where ``pending`` carries
    bearing-only detections waiting for a second epoch to triangulate.
    """
    pa = pa_estimate(features)
    ue_mean, ue_cov = particles.moments()
    out = [f.copy() for f in features]
    pending = list(pending or [])
    fresh = []
    for m, meas in enumerate(measurements):
        q_new = assoc.new_mass[m] if len(assoc.rows) else 0.0
        if q_new <= cfg.birth_threshold:
            continue
        zv = model.vector(meas)
        born = _birth_covariance(ue_mean, ue_cov, zv, model, pa)
        if born is None and "toa" not in model.components:
            b = PendingBearing(epoch, ue_mean[:2].copy(), float(zv[0] + ue_mean[ITH]), float(q_new))
            for old in pending:
                if old.epoch >= epoch:
                    continue
                pt = _triangulate(old, b)
                if pt is not None:
                    cov = np.eye(2) * (np.linalg.norm(pt - b.origin) * model.stds[0]) ** 2 * 4.0 \
                        + ue_cov[:2, :2]
                    born = (pt, cov)
                    pending.remove(old)
                    break
            else:
                fresh.append(b)
        if born is None:
            continue
        mean, cov = born
        out.append(Feature(next_id, "VA", mean, cov, float(cfg.birth_existence * q_new), epoch, epoch, 0))
        next_id += 1
    pending = [b for b in pending if epoch - b.epoch < 2] + fresh

    # drop tentative features: too few hits and not seen for a while
    out = [f for f in out if f.kind == "PA" or f.hits >= cfg.confirm_hits
           or epoch - f.last_seen < cfg.tentative_timeout]
    out = _merge_duplicates(out, cfg.merge_gate)
    out = [f for f in out if f.existence >= cfg.prune_threshold]
    return out, next_id, pending


def _merge_duplicates(features, gate):
    keep = []
    for f in sorted(features, key=lambda g: (-g.existence, g.id)):
        dup = False
        for g in keep:
            if g.kind != f.kind:
                continue
            d = f.mean - g.mean
            if d @ np.linalg.solve(f.covariance + g.covariance, d) < gate:
                dup = True
                break
        if not dup:
            keep.append(f)
    return sorted(keep, key=lambda g: g.id)


# --------------------------------------------------------------------------- initialisation

def init_hybrid(va_priors, pa_prior, mode="hybrid", next_id=0, epoch=0):
    """Initial map: active-sensing VA priors plus the PA belief.

    ``pa_prior`` is ``(position, covariance)`` or None.  In
    ``passive_known_pa`` mode the PA position is taken as known and the VA
    priors are ignored.
    """
    feats = []
    if mode == "passive_known_pa":
        if pa_prior is not None:
            feats.append(Feature(next_id, "PA", np.asarray(pa_prior[0], dtype=float).copy(),
                                 KNOWN_PA_COV * np.eye(2), 1.0, epoch, epoch, 1))
        return feats
    if not va_priors and pa_prior is None:
        log.warning("hybrid start without active-sensing priors: empty map (cold start)")
        return feats
    for v in va_priors:
        feats.append(Feature(next_id + len(feats), "VA", np.asarray(v.mean, dtype=float).copy(),
                             np.asarray(v.covariance, dtype=float).copy(), 0.5, epoch, epoch, 1))
    if pa_prior is not None:
        feats.append(Feature(next_id + len(feats), "PA", np.asarray(pa_prior[0], dtype=float).copy(),
                             np.asarray(pa_prior[1], dtype=float).copy(), 0.5, epoch, epoch, 1))
    return feats


def hypothesize_pa(measurements, ue, walls, model, tol=1.5):
    """PA position most consistent with first-epoch passive paths and the fitted walls.

    Each measurement is back-projected from the UE's believed state; the
    LOS point coincides with the PA and every NLOS point mirrors back onto it
    across its wall.  Returns the best-supported position or None.
    """
    state = np.array([ue.position[0], ue.position[1], 0.0, 0.0,
                      ue.clock_bias * SPEED_OF_LIGHT, ue.orientation])
    pts = []
    for meas in measurements:
        p = _back_project(state, model.vector(meas), model.components, None)
        if p is not None:
            pts.append(p)
    if not pts:
        return None
    lines = [w.line_params() for w, _, _ in walls]
    images = []  # per measurement: candidate PA positions it implies
    for p in pts:
        images.append([p] + [mirror_across_line(p, a, r) for a, r in lines])
    best, best_support = None, 1
    for i, cands in enumerate(images):
        for cand in cands:
            support = []
            for j, other in enumerate(images):
                d = [np.linalg.norm(o - cand) for o in other]
                jj = int(np.argmin(d))
                if d[jj] <= tol:
                    support.append(other[jj])
            if len(support) > best_support:
                best_support = len(support)
                best = np.mean(support, axis=0)
    return best


# --------------------------------------------------------------------------- engine

@dataclass
class EpochEstimate:
    epoch: int
    mean: np.ndarray
    covariance: np.ndarray
    n_features: int
    log_likelihood: float
    diagnostics: UpdateDiagnostics


class SlamEngine:
    """One UE's SLAM instance: owns its particles, map and birth bookkeeping."""

    def __init__(self, cfg, model, particles, features=(), next_id=None):
        self.cfg = cfg
        self.model = model
        self.particles = particles
        self.features = [f.copy() for f in features]
        self.next_id = next_id if next_id is not None else (max((f.id for f in self.features), default=-1) + 1)
        self.pending = []
        self.history = []
        self.started = False

    def add_features(self, features, gate=None):
        """Insert external features (e.g. a downloaded map) that are not already mapped."""
        gate = _chi2_quantile(0.99, 2) if gate is None else gate
        for f in features:
            dup = False
            for g in self.features:
                if g.kind != f.kind:
                    continue
                d = f.mean - g.mean
                if d @ np.linalg.solve(f.covariance + g.covariance, d) <= gate:
                    dup = True
                    break
            if not dup:
                g = f.copy()
                g.id = self.next_id
                g.hits = max(g.hits, 1)
                self.next_id += 1
                self.features.append(g)

    def step(self, measurements, epoch, rng, control=None, dt=1.0):
        if self.started:
            self.particles = predict(self.particles, dt, self.cfg, rng, control)
        self.started = True
        assoc = associate(self.particles, self.features, measurements, self.model, self.cfg)
        self.particles, feats, loglik, diag = update(self.particles, self.features, measurements, assoc,
                                                     self.model, self.cfg, rng, epoch)
        self.features, self.next_id, self.pending = birth_and_prune(
            feats, measurements, assoc, self.particles, self.model, self.cfg, epoch, self.next_id, self.pending)
        mean, cov = self.particles.moments()
        est = EpochEstimate(epoch, mean, cov, len(self.features), loglik, diag)
        self.history.append(est)
        return est

    def confirmed_features(self, threshold=None):
        """Features reported as map: likely to exist and seen often enough to rule out a clutter fluke."""
        thr = self.cfg.report_existence if threshold is None else threshold
        return [f for f in self.features
                if f.existence > thr and (f.hits >= self.cfg.confirm_hits or f.kind == "PA")]

    def map_points(self, threshold=None):
        return np.array([f.mean for f in self.confirmed_features(threshold)]).reshape(-1, 2)
