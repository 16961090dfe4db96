"""Multi-UE cooperation: per-UE local maps, a cloud-fused map, and the frame schedule driving them."""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .metrics import OspaParams, ospa
from .slam import Feature, _chi2_quantile
from .sim import PriorSpec, draw_truth, measurement_model, observe_epoch, start_engine, toa_window

log = logging.getLogger(__name__)

SERVE_THRESHOLD = 0.3


@dataclass
class FeatureRecord:
    feature: Feature
    reporter: int
    report_epoch: int
    confidence: float

    @property
    def key(self):
        return (self.reporter, self.feature.id)


@dataclass
class FusedFeature:
    id: int
    kind: str
    mean: np.ndarray
    covariance: np.ndarray
    confidence: float
    contributions: dict = field(default_factory=dict)  # (reporter, local id) -> FeatureRecord

    @property
    def contributors(self):
        return sorted({k[0] for k in self.contributions})

    def refuse(self):
        """Information-form fusion of the current contributions (order independent)."""
        info = np.zeros((2, 2))
        vec = np.zeros(2)
        for key in sorted(self.contributions):
            rec = self.contributions[key]
            w = np.linalg.inv(rec.feature.covariance)
            info += w
            vec += w @ rec.feature.mean
        cov = np.linalg.inv(info)
        self.covariance = 0.5 * (cov + cov.T)
        self.mean = self.covariance @ vec
        self.confidence = max(r.confidence for r in self.contributions.values())

    def copy(self):
        return FusedFeature(self.id, self.kind, self.mean.copy(), self.covariance.copy(), self.confidence,
                            dict(self.contributions))


@dataclass
class ORFMap:
    records: list = field(default_factory=list)
    version: int = 0
    next_id: int = 0
    rejected: int = 0

    def copy(self):
        return ORFMap([r.copy() for r in self.records], self.version, self.next_id, self.rejected)


@dataclass
class FrameSchedule:
    entering_time: dict  # ue_id -> epoch (>= 1)
    upload_period: float = 5.0
    download_on_entry: bool = True

    def violations(self, prefix="schedule"):
        out = []
        for ue, t in sorted(self.entering_time.items()):
            if int(t) != t or t < 1:
                out.append(f"{prefix}.entering_time[{ue}] must be an integer >= 1 (got {t})")
        if not self.upload_period > 0:
            out.append(f"{prefix}.upload_period must be positive (got {self.upload_period})")
        return out

    def uploads_at(self, epoch):
        return np.isfinite(self.upload_period) and epoch % int(self.upload_period) == 0


def _valid_cov(c):
    c = np.asarray(c, dtype=float)
    if c.shape != (2, 2) or not np.all(np.isfinite(c)) or abs(c[0, 1] - c[1, 0]) > 1e-9 * max(1.0, abs(c).max()):
        return False
    try:
        np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        return False
    return True


def _maha(a_mean, a_cov, b_mean, b_cov):
    d = a_mean - b_mean
    return float(d @ np.linalg.solve(a_cov + b_cov, d))


def upload(orf, lrf, gate_prob=0.99):
    """Fuse one batch of LRF records into a copy of ``orf``.

    A record replaces any earlier contribution with the same (reporter,
    local feature id), so a feature uploaded every period is counted once.
    """
    out = orf.copy()
    gate = _chi2_quantile(gate_prob, 2)
    good = []
    for rec in lrf:
        if _valid_cov(rec.feature.covariance) and np.all(np.isfinite(rec.feature.mean)):
            good.append(rec)
        else:
            out.rejected += 1
    keys = {r.key for r in good}
    for fused in out.records:
        stale = [k for k in fused.contributions if k in keys]
        for k in stale:
            del fused.contributions[k]
        if stale and fused.contributions:
            fused.refuse()
    out.records = [f for f in out.records if f.contributions]

    pairs = []
    for i, rec in enumerate(good):
        for j, fused in enumerate(out.records):
            if fused.kind != rec.feature.kind:
                continue
            d = _maha(rec.feature.mean, rec.feature.covariance, fused.mean, fused.covariance)
            if d <= gate:
                pairs.append((d, i, j))
    pairs.sort()
    used_rec, used_fused = set(), set()
    for _, i, j in pairs:
        if i in used_rec or j in used_fused:
            continue
        used_rec.add(i)
        used_fused.add(j)
        out.records[j].contributions[good[i].key] = good[i]
        out.records[j].refuse()
    for i, rec in enumerate(good):
        if i in used_rec:
            continue
        f = rec.feature
        out.records.append(FusedFeature(out.next_id, f.kind, f.mean.copy(), f.covariance.copy(), rec.confidence,
                                        {rec.key: rec}))
        out.next_id += 1
    out.records = _merge_pass(out.records, gate)
    out.version += 1
    return out


def _merge_pass(records, gate):
    """Merge fused features that ended up within the gate of each other."""
    records = list(records)
    merged = True
    while merged:
        merged = False
        best = None
        for a in range(len(records)):
            for b in range(a + 1, len(records)):
                ra, rb = records[a], records[b]
                if ra.kind != rb.kind:
                    continue
                d = _maha(ra.mean, ra.covariance, rb.mean, rb.covariance)
                if d <= gate and (best is None or d < best[0]):
                    best = (d, a, b)
        if best is not None:
            _, a, b = best
            keep, gone = records[a], records[b]
            for k, rec in gone.contributions.items():
                if k not in keep.contributions or keep.contributions[k].report_epoch < rec.report_epoch:
                    keep.contributions[k] = rec
            keep.refuse()
            del records[b]
            merged = True
    return records


def download(orf, region=None, threshold=SERVE_THRESHOLD):
    """Fused features above ``threshold`` (inside ``region`` = (x0, y0, x1, y1) if given), best first."""
    out = []
    for f in orf.records:
        if f.confidence <= threshold:
            continue
        if region is not None:
            x0, y0, x1, y1 = region
            if not (x0 <= f.mean[0] <= x1 and y0 <= f.mean[1] <= y1):
                continue
        out.append(Feature(f.id, f.kind, f.mean.copy(), f.covariance.copy(), float(f.confidence),
                           hits=len(f.contributors)))
    out.sort(key=lambda g: (-g.existence, g.id))
    return out


def lrf_records(engine, ue_id, epoch, orientation_std=0.0):
    """Confirmed features of one UE as upload records.

    Map covariances are conditioned on the UE's mean pose, so they ignore
    the reporter's own pose error (including the unobservable rotation of
    its whole map).  The reported covariance adds that error back: the UE
    position covariance plus an isotropic ``(orientation_std * range)**2``.
    """
    mean, cov = engine.particles.moments()
    p_cov = cov[:2, :2]
    out = []
    for f in engine.confirmed_features():
        g = f.copy()
        rng_m = float(np.linalg.norm(g.mean - mean[:2]))
        g.covariance = g.covariance + p_cov + (orientation_std * rng_m) ** 2 * np.eye(2)
        g.covariance = 0.5 * (g.covariance + g.covariance.T)
        out.append(FeatureRecord(g, ue_id, epoch, float(f.existence)))
    return out


def snapshot_records(orf):
    """Plain-dict rows of the ORF map (for structured-text export)."""
    return [{"id": f.id, "kind": f.kind, "mean": [float(v) for v in f.mean],
             "covariance": [[float(v) for v in row] for row in f.covariance],
             "confidence": float(f.confidence), "contributors": f.contributors}
            for f in orf.records]


@dataclass
class CohortResult:
    position_error: dict  # ue_id -> array over epochs (nan before entry)
    map_ospa: dict  # ue_id -> array over epochs
    orf_history: list  # (epoch, version, snapshot rows)
    epochs: np.ndarray


def run_cohort(env, schedule, tracks, noise, cfg, seed, horizon, crowdsourcing=True, prior=None,
               map_truth=None, ospa_params=OspaParams()):
    """Run every UE of the cohort from its entering time to ``horizon``.

    ``tracks`` maps ue_id to an array of positions indexed by epoch
    (rows 0..horizon).  With ``crowdsourcing`` off no upload or download
    happens, which makes each UE an independent single-user run.
    """
    prior = prior or PriorSpec()
    for ue, t in schedule.entering_time.items():
        if ue not in tracks:
            raise ValueError(f"no track for ue {ue}")
        if len(tracks[ue]) < horizon + 1:
            raise ValueError(f"track of ue {ue} has {len(tracks[ue])} points, horizon {horizon} needs {horizon + 1}")
    model = measurement_model(env, noise, cfg)
    window = toa_window(env)
    truth_pts = map_truth if map_truth is not None else \
        np.array(list(env.pas.values()) + [v.position for v in env.virtual_anchors()])
    ues = sorted(schedule.entering_time)
    truths = {u: draw_truth(tracks[u], prior, seed, u) for u in ues}
    engines = {}
    epochs = np.arange(1, horizon + 1)
    err = {u: np.full(horizon, np.nan) for u in ues}
    osp = {u: np.full(horizon, np.nan) for u in ues}
    orf = ORFMap()
    history = []
    for k in epochs:
        for u in ues:
            if k < schedule.entering_time[u]:
                continue
            meas = observe_epoch(env, truths[u], noise, seed, k, window)
            if u not in engines:
                extra = download(orf) if crowdsourcing and schedule.download_on_entry else None
                engines[u], _ = start_engine(env, truths[u], noise, cfg, model, prior, seed, k, meas, extra=extra)
            est = engines[u].step(meas, k, rngmod.stream(seed, u, k, "slam"))
            err[u][k - 1] = float(np.linalg.norm(est.mean[:2] - truths[u].track[k]))
            osp[u][k - 1] = ospa(engines[u].map_points(), truth_pts, ospa_params)
        if crowdsourcing and schedule.uploads_at(k):
            for u in ues:
                if u in engines:
                    orf = upload(orf, lrf_records(engines[u], u, k, prior.orientation_std))
            history.append((int(k), orf.version, snapshot_records(orf)))
    return CohortResult(err, osp, history, epochs)
