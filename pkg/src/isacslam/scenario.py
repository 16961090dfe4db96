"""Scenario files: TOML in, TOML out, plus a validator that reports every problem at once.

Angles are stored in degrees in files (keys ending in ``_deg``) and in
radians in memory.  Degrees are written with 12 significant digits, so
``emit(parse(text)) == text`` for any emitted text and two scenarios
compare equal when their file representations do.
"""
import math
import re
from dataclasses import dataclass, field, fields, replace
from importlib import resources

import numpy as np
import tomli
import tomli_w

from .crowdsourcing import FrameSchedule
from .errors import ConfigError
from .geometry import Environment, WallSegment
from .measurement import BeamCodebook, NoiseProfile
from .metrics import OspaParams
from .sim import PriorSpec, loop_track
from .slam import SlamConfig

PRESETS = ("hybrid_fig5ab", "crowd_fig5cd", "sweep_fig6", "beamtrack", "custom")
BUNDLED = {"default": "default.toml", "hybrid_fig5ab": "hybrid.toml", "crowd_fig5cd": "crowd.toml",
           "sweep_fig6": "fig6.toml", "beamtrack": "beamtrack.toml", "custom": "default.toml"}

# fields held in radians (written as <name>_deg)
ANGLE_FIELDS = {
    "noise": ("aoa_std", "aod_std"),
    "slam": ("orientation_drift_std", "fov", "min_angle_std"),
    "prior": ("orientation_std", "true_orientation_std"),
    "codebook": ("sector", "beamwidth", "orientation"),
    "track": ("omega", "phase"),
}


@dataclass
class CodebookSpec:
    n_beams: int = 8
    sector: float = np.deg2rad(100.0)
    beamwidth: float = np.deg2rad(12.5)
    orientation: float = 0.0  # array boresight, global frame (tx) or UE body frame (rx)

    def codebook(self):
        return BeamCodebook(self.n_beams, self.sector, self.beamwidth)

    def violations(self, prefix):
        out = []
        if int(self.n_beams) != self.n_beams or self.n_beams < 2:
            out.append(f"{prefix}.n_beams must be an integer >= 2 (got {self.n_beams})")
        if not 0.0 < self.sector <= 2.0 * np.pi + 1e-12:
            out.append(f"{prefix}.sector_deg must be in (0, 360] (got {np.rad2deg(self.sector):g})")
        if not self.beamwidth > 0:
            out.append(f"{prefix}.beamwidth_deg must be positive (got {np.rad2deg(self.beamwidth):g})")
        return out


@dataclass
class OspaSpec:
    cutoff: float = 5.0
    order: float = 1.0
    include_scatterers: bool = True

    def params(self):
        return OspaParams(self.cutoff, self.order)

    def violations(self, prefix="ospa"):
        out = []
        if not self.cutoff > 0:
            out.append(f"{prefix}.cutoff must be positive (got {self.cutoff})")
        if not self.order >= 1:
            out.append(f"{prefix}.order must be >= 1 (got {self.order})")
        return out


@dataclass
class TrackSpec:
    """A UE track: explicit points, an elliptical loop, or a serpentine grid.

    Row k of :meth:`positions` is the position at epoch k.  Point and grid
    tracks stand at their first waypoint at epoch 0, visit waypoint k-1 at
    epoch k and hold the last one afterwards.
    """
    kind: str = "loop"  # "loop" | "points" | "grid"
    center: tuple = (6.0, 4.0)
    radii: tuple = (3.0, 2.5)
    omega: float = 0.15  # rad per epoch
    phase: float = 0.0
    points: list = field(default_factory=list)
    spacing: float = 0.5  # grid
    shape: tuple = (5, 5)  # grid (nx, ny)

    def waypoints(self):
        if self.kind == "grid":
            nx, ny = int(self.shape[0]), int(self.shape[1])
            xs = self.center[0] + self.spacing * (np.arange(nx) - (nx - 1) / 2.0)
            ys = self.center[1] + self.spacing * (np.arange(ny) - (ny - 1) / 2.0)
            return np.array([(x, y) for j, y in enumerate(ys) for x in (xs if j % 2 == 0 else xs[::-1])])
        if self.kind == "points":
            return np.asarray(self.points, dtype=float).reshape(-1, 2)
        raise ValueError("loop tracks have no waypoint list")

    def positions(self, n):
        if self.kind == "loop":
            return loop_track(self.center, self.radii, n, self.omega, self.phase)
        w = self.waypoints()
        return w[np.clip(np.arange(n) - 1, 0, len(w) - 1)]

    def violations(self, prefix):
        out = []
        if self.kind not in ("loop", "points", "grid"):
            return [f"{prefix}.kind must be loop, points or grid (got {self.kind!r})"]
        if self.kind == "points" and len(self.points) == 0:
            out.append(f"{prefix}.points must not be empty")
        if self.kind == "grid" and (min(self.shape) < 1 or not self.spacing > 0):
            out.append(f"{prefix}: grid needs shape >= 1 and spacing > 0")
        return out


@dataclass
class SweepSpec:
    """Beam-sweep experiment: (UE array, PA array) boresight pairs swept at every grid point."""
    orientations: list = field(default_factory=lambda: [(np.deg2rad(60.0), np.deg2rad(-120.0))])
    stop_threshold_db: float = 10.0
    leakage_margin_db: float = 6.0
    contrast_db: float = 3.0

    def violations(self, prefix="sweep"):
        out = []
        if not self.orientations:
            out.append(f"{prefix}.orientations_deg must list at least one (ue, pa) pair")
        for i, o in enumerate(self.orientations):
            if len(o) != 2 or not all(np.isfinite(o)):
                out.append(f"{prefix}.orientations_deg[{i}] must be a finite (ue, pa) pair")
        return out


@dataclass
class TrackingSpec:
    miss_db: float = 6.0
    misses_to_sweep: int = 2
    window: int = 5
    gate_sigma: float = 2.0
    blockage_start: int = 30
    blockage_epochs: int = 3
    blockage_db: float = 30.0

    def violations(self, prefix="tracking"):
        out = []
        if not self.miss_db > 0:
            out.append(f"{prefix}.miss_db must be positive (got {self.miss_db})")
        for name in ("misses_to_sweep", "window"):
            if getattr(self, name) < 1:
                out.append(f"{prefix}.{name} must be >= 1 (got {getattr(self, name)})")
        if self.blockage_epochs < 0 or self.blockage_start < 0:
            out.append(f"{prefix}.blockage_start / blockage_epochs must be >= 0")
        if not self.gate_sigma > 0:
            out.append(f"{prefix}.gate_sigma must be positive (got {self.gate_sigma})")
        return out


@dataclass
class Scenario:
    name: str = "default"
    note: str = ""
    horizon: int = 60
    seeds: int = 1
    master_seed: int = 0
    environment: Environment = field(default_factory=Environment)
    tracks: dict = field(default_factory=lambda: {1: TrackSpec()})
    noise: NoiseProfile = field(default_factory=NoiseProfile)
    slam: SlamConfig = field(default_factory=SlamConfig)
    prior: PriorSpec = field(default_factory=PriorSpec)
    schedule: FrameSchedule = field(default_factory=lambda: FrameSchedule({1: 1}))
    tx_codebook: CodebookSpec = field(default_factory=CodebookSpec)
    rx_codebook: CodebookSpec = field(default_factory=CodebookSpec)
    ospa: OspaSpec = field(default_factory=OspaSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    tracking: TrackingSpec = field(default_factory=TrackingSpec)

    def __eq__(self, other):
        return isinstance(other, Scenario) and to_dict(self) == to_dict(other)

    def seed_list(self, n=None):
        return [self.master_seed + i for i in range(self.seeds if n is None else n)]

    def track_positions(self, ue, n=None):
        return self.tracks[ue].positions(self.horizon + 1 if n is None else n)


# --------------------------------------------------------------------------- dict <-> objects

def _deg(v):
    return float(f"{math.degrees(v):.12g}")


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (tuple, list, np.ndarray)):
        return [_plain(x) for x in v]
    return v


def _section(obj, angles=(), skip=()):
    out = {}
    for f in fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        if f.name in angles:
            out[f.name + "_deg"] = _deg(v)
        else:
            out[f.name] = _plain(v)
    return out


def to_dict(sc):
    env = sc.environment
    d = {"name": sc.name, "note": sc.note, "horizon": int(sc.horizon), "seeds": int(sc.seeds),
         "master_seed": int(sc.master_seed)}
    d["environment"] = {
        "bounds": _plain(env.bounds),
        "pas": {k: _plain(v) for k, v in env.pas.items()},
        "scatterers": {k: _plain(v) for k, v in env.scatterers.items()},
        "walls": [{"id": w.id, "a": _plain(w.a), "b": _plain(w.b), "loss_db": float(w.loss_db)} for w in env.walls],
    }
    d["noise"] = _section(sc.noise, ANGLE_FIELDS["noise"])
    d["slam"] = _section(sc.slam, ANGLE_FIELDS["slam"])
    d["prior"] = _section(sc.prior, ANGLE_FIELDS["prior"])
    d["schedule"] = {"upload_period": _plain(sc.schedule.upload_period),
                     "download_on_entry": bool(sc.schedule.download_on_entry),
                     "entering_time": {str(k): int(v) for k, v in sorted(sc.schedule.entering_time.items())}}
    d["codebook"] = {"tx": _section(sc.tx_codebook, ANGLE_FIELDS["codebook"]),
                     "rx": _section(sc.rx_codebook, ANGLE_FIELDS["codebook"])}
    d["ospa"] = _section(sc.ospa)
    tracks = {}
    for ue, t in sorted(sc.tracks.items()):
        if t.kind == "loop":
            keep = ("kind", "center", "radii", "omega", "phase")
        elif t.kind == "grid":
            keep = ("kind", "center", "spacing", "shape")
        else:
            keep = ("kind", "points")
        tracks[str(ue)] = _section(t, ANGLE_FIELDS["track"], skip=[f.name for f in fields(t) if f.name not in keep])
    d["tracks"] = tracks
    d["sweep"] = _section(sc.sweep, skip=("orientations",))
    d["sweep"]["orientations_deg"] = [[_deg(a), _deg(b)] for a, b in sc.sweep.orientations]
    d["tracking"] = _section(sc.tracking)
    return d


_FLAT_ARRAY = re.compile(r"\[\n((?:[ ]+(?:[^\n\[\]]+|\[[^\n\[\]]*\]),\n)+)[ ]*\]")


def compact_toml(text):
    """Put arrays of scalars (and arrays of such arrays) on one line."""
    while True:
        new = _FLAT_ARRAY.sub(lambda m: "[" + ", ".join(x.strip()[:-1] for x in m.group(1).splitlines()) + "]", text)
        if new == text:
            return text
        text = new


def emit(sc):
    return compact_toml(tomli_w.dumps(to_dict(sc)))


class _Reader:
    """Pulls typed values out of nested dicts, collecting problems instead of raising."""

    def __init__(self):
        self.problems = []

    def fill(self, cls, data, prefix, angles=(), base=None, special=None):
        obj = base if base is not None else cls()
        special = special or {}
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, val in (data or {}).items():
            name = key[:-4] if key.endswith("_deg") and key[:-4] in angles else key
            if key in special:
                continue
            if name not in known or (name in angles) != key.endswith("_deg"):
                self.problems.append(f"{prefix}.{key}: unknown key")
                continue
            cur = getattr(obj, name)
            try:
                kw[name] = self._coerce(cur, val, name in angles)
            except (TypeError, ValueError):
                self.problems.append(f"{prefix}.{key}: bad value {val!r}")
        return replace(obj, **kw)

    @staticmethod
    def _coerce(cur, val, angle):
        if isinstance(cur, bool):
            if not isinstance(val, bool):
                raise TypeError
            return val
        if isinstance(cur, (int, np.integer)) and not isinstance(cur, bool):
            if isinstance(val, bool) or not isinstance(val, (int, float)) or int(val) != val:
                raise TypeError
            return int(val)
        if isinstance(cur, (float, np.floating)):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise TypeError
            return math.radians(val) if angle else float(val)
        if isinstance(cur, str):
            if not isinstance(val, str):
                raise TypeError
            return val
        if isinstance(cur, tuple):
            return tuple(x if isinstance(x, (str, int)) and not isinstance(x, bool) else float(x) for x in val)
        if isinstance(cur, list):
            return list(val)
        return val

    def point(self, v, where):
        try:
            p = [float(x) for x in v]
            if len(p) != 2:
                raise ValueError
            return p
        except (TypeError, ValueError):
            self.problems.append(f"{where}: expected an [x, y] pair (got {v!r})")
            return None


def from_dict(d):
    """Build a :class:`Scenario`; raises :class:`ConfigError` listing every structural problem."""
    r = _Reader()
    top = {k: v for k, v in d.items() if not isinstance(v, dict)}
    sc = r.fill(Scenario, top, "scenario")
    for key in d:
        if isinstance(d[key], dict) and key not in ("environment", "noise", "slam", "prior", "schedule", "codebook",
                                                   "ospa", "tracks", "sweep", "tracking"):
            r.problems.append(f"scenario.{key}: unknown section")

    e = d.get("environment", {})
    walls = []
    for i, w in enumerate(e.get("walls", [])):
        extra = set(w) - {"id", "a", "b", "loss_db"}
        if extra:
            r.problems.append(f"environment.walls[{i}]: unknown key(s) {sorted(extra)}")
        a = r.point(w.get("a"), f"environment.walls[{i}].a")
        b = r.point(w.get("b"), f"environment.walls[{i}].b")
        if a is None or b is None or not all(np.isfinite(a + b)):
            continue
        walls.append(WallSegment(a, b, str(w.get("id", f"wall{i}")), float(w.get("loss_db", 10.0))))
    pas = {k: p for k, v in e.get("pas", {}).items() if (p := r.point(v, f"environment.pas.{k}")) is not None}
    scat = {k: p for k, v in e.get("scatterers", {}).items()
            if (p := r.point(v, f"environment.scatterers.{k}")) is not None}
    bounds = e.get("bounds", [0.0, 0.0, 10.0, 10.0])
    try:
        bounds = tuple(float(x) for x in bounds)
        if len(bounds) != 4:
            raise ValueError
    except (TypeError, ValueError):
        r.problems.append(f"environment.bounds: expected [x0, y0, x1, y1] (got {bounds!r})")
        bounds = (0.0, 0.0, 10.0, 10.0)
    for k in set(e) - {"bounds", "pas", "scatterers", "walls"}:
        r.problems.append(f"environment.{k}: unknown key")
    env = Environment(walls, {k: v for k, v in pas.items() if np.all(np.isfinite(v))},
                      {k: v for k, v in scat.items() if np.all(np.isfinite(v))}, bounds)

    noise = r.fill(NoiseProfile, d.get("noise"), "noise", ANGLE_FIELDS["noise"])
    slam = r.fill(SlamConfig, d.get("slam"), "slam", ANGLE_FIELDS["slam"])
    slam = replace(slam, measurements=tuple(slam.measurements))
    prior = r.fill(PriorSpec, d.get("prior"), "prior", ANGLE_FIELDS["prior"])

    s = d.get("schedule", {})
    entering = {}
    for k, v in s.get("entering_time", {}).items():
        try:
            entering[int(k)] = v
        except ValueError:
            r.problems.append(f"schedule.entering_time.{k}: ue ids must be integers")
    sched = r.fill(FrameSchedule, {k: v for k, v in s.items() if k != "entering_time"}, "schedule",
                   base=FrameSchedule(entering))

    cbs = d.get("codebook", {})
    tx = r.fill(CodebookSpec, cbs.get("tx"), "codebook.tx", ANGLE_FIELDS["codebook"])
    rx = r.fill(CodebookSpec, cbs.get("rx"), "codebook.rx", ANGLE_FIELDS["codebook"])
    for k in set(cbs) - {"tx", "rx"}:
        r.problems.append(f"codebook.{k}: unknown key")
    ospa_spec = r.fill(OspaSpec, d.get("ospa"), "ospa")

    tracks = {}
    for k, t in d.get("tracks", {}).items():
        try:
            ue = int(k)
        except ValueError:
            r.problems.append(f"tracks.{k}: ue ids must be integers")
            continue
        tracks[ue] = r.fill(TrackSpec, t, f"tracks.{k}", ANGLE_FIELDS["track"])
        tracks[ue] = replace(tracks[ue], points=[list(map(float, p)) for p in tracks[ue].points])

    sw = dict(d.get("sweep", {}))
    orients = sw.pop("orientations_deg", None)
    sweep = r.fill(SweepSpec, sw, "sweep")
    if orients is not None:
        try:
            sweep = replace(sweep, orientations=[(math.radians(a), math.radians(b)) for a, b in orients])
        except (TypeError, ValueError):
            r.problems.append(f"sweep.orientations_deg: expected [[ue_deg, pa_deg], ...] (got {orients!r})")
    tracking = r.fill(TrackingSpec, d.get("tracking"), "tracking")

    if r.problems:
        raise ConfigError(r.problems)
    return replace(sc, environment=env, tracks=tracks or {}, noise=noise, slam=slam, prior=prior,
                   schedule=sched, tx_codebook=tx, rx_codebook=rx, ospa=ospa_spec, sweep=sweep, tracking=tracking)


def parse(text):
    try:
        d = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from exc
    return from_dict(d)


def load(path):
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse(text), text


def bundled_text(name="default"):
    fname = BUNDLED.get(name, name if name.endswith(".toml") else name + ".toml")
    return resources.files("isacslam").joinpath("data", fname).read_text(encoding="utf-8")


def bundled(name="default"):
    return parse(bundled_text(name))


# --------------------------------------------------------------------------- validation

def validate(sc):
    """Every violated constraint of ``sc`` as a list of messages (empty when valid).  Never mutates."""
    out = []
    if int(sc.horizon) != sc.horizon or sc.horizon < 1:
        out.append(f"horizon must be an integer >= 1 (got {sc.horizon})")
    if sc.seeds < 1:
        out.append(f"seeds must be >= 1 (got {sc.seeds})")
    env = sc.environment
    x0, y0, x1, y1 = env.bounds
    if not (x1 > x0 and y1 > y0):
        out.append(f"environment.bounds must have x1 > x0 and y1 > y0 (got {list(env.bounds)})")
    if not env.pas:
        out.append("environment.pas must define at least one PA")
    for k, p in env.pas.items():
        if not env.contains(p):
            out.append(f"environment.pas.{k} at {list(map(float, p))} is outside the bounds")
    for k, p in env.scatterers.items():
        if not env.contains(p):
            out.append(f"environment.scatterers.{k} at {list(map(float, p))} is outside the bounds")
    ids = [w.id for w in env.walls]
    for w in env.walls:
        if ids.count(w.id) > 1:
            out.append(f"environment.walls: duplicate id {w.id!r}")
        if w.length <= 1e-9:
            out.append(f"environment.walls.{w.id} is degenerate (zero length)")
    out += _in_degrees(sc.noise.violations("noise"), "noise")
    out += _in_degrees(sc.slam.violations("slam"), "slam")
    out += _in_degrees(sc.prior.violations("prior"), "prior")
    out += sc.schedule.violations("schedule")
    out += sc.tx_codebook.violations("codebook.tx")
    out += sc.rx_codebook.violations("codebook.rx")
    out += sc.ospa.violations("ospa")
    out += sc.sweep.violations("sweep")
    out += sc.tracking.violations("tracking")
    if not sc.tracks:
        out.append("tracks must define at least one UE track")
    for ue in sorted(sc.schedule.entering_time):
        if ue not in sc.tracks:
            out.append(f"schedule.entering_time[{ue}] refers to ue {ue} which has no track")
        elif sc.schedule.entering_time[ue] > sc.horizon:
            out.append(f"schedule.entering_time[{ue}] = {sc.schedule.entering_time[ue]} is after the horizon")
    n = max(int(sc.horizon), 1) + 1
    for ue, t in sorted(sc.tracks.items()):
        tv = t.violations(f"tracks.{ue}")
        out += tv
        if tv:
            continue
        pos = t.positions(n)
        bad = [k for k, p in enumerate(pos) if not (np.all(np.isfinite(p)) and env.contains(p))]
        for lo, hi in _runs(bad):
            p = pos[lo]
            span = f"epoch {lo}" if lo == hi else f"epochs {lo}-{hi}"
            out.append(f"tracks.{ue}: ue {ue} is outside the bounds at {span} (first at ({p[0]:g}, {p[1]:g}))")
    return out


def _runs(idx):
    out = []
    for k in idx:
        if out and k == out[-1][1] + 1:
            out[-1][1] = k
        else:
            out.append([k, k])
    return out


_GOT = re.compile(r"\(got ([^)]*)\)")


def _in_degrees(msgs, section):
    """Rewrite messages about radian fields to name the ``_deg`` key and show degrees."""
    out = []
    for m in msgs:
        for name in ANGLE_FIELDS[section]:
            key = f"{section}.{name} "
            if m.startswith(key):
                m = f"{section}.{name}_deg " + m[len(key):]
                m = _GOT.sub(lambda g: f"(got {math.degrees(float(g.group(1))):g})", m)
        out.append(m)
    return out


def check(sc):
    problems = validate(sc)
    if problems:
        raise ConfigError(problems)
    return sc
