"""Seeded experiment presets and their reports (CSV series, TOML snapshots)."""
import csv
import io
import logging
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
import tomli_w

from . import rng as rngmod
from .beam import TrackingConfig, TrackingState, predict_beams, successive_cancellation, tracking_step
from .crowdsourcing import run_cohort, snapshot_records
from .errors import ConfigError
from .geometry import wrap_angle
from .measurement import Measurement, beam_power_grid, enumerate_paths, observe, sweep_rsrp
from .metrics import ospa
from .scenario import PRESETS, emit, validate
from .sim import UeTruth, draw_truth, measurement_model, observe_epoch, start_engine, toa_window, visible_map

log = logging.getLogger(__name__)

SERIES_HEADER = ("experiment", "mechanism", "seed", "ue", "epoch", "error_m", "ospa_m", "x_m", "y_m",
                 "pos_cov_trace", "n_features")
AGG_HEADER = ("experiment", "mechanism", "ue", "epoch", "mae_m", "mospa_m", "n_runs")


@dataclass
class RunReport:
    preset: str
    seeds: list
    tables: dict  # name -> (header, rows)
    snapshot: dict
    summary: dict
    config_echo: str
    runtime: float = 0.0

    def csv_text(self, name):
        header, rows = self.tables[name]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def write(self, out_dir):
        """Write every table as CSV plus the TOML snapshot / summary / config echo.  Returns the paths."""
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for name in sorted(self.tables):
            paths.append(_write(out_dir, f"{name}.csv", self.csv_text(name)))
        paths.append(_write(out_dir, "map_snapshot.toml", tomli_w.dumps(_plain(self.snapshot))))
        paths.append(_write(out_dir, "summary.toml", tomli_w.dumps(_plain(
            {"preset": self.preset, "seeds": list(self.seeds), "summary": self.summary}))))
        paths.append(_write(out_dir, "config.toml", self.config_echo))
        # the only output allowed to differ between identical runs
        paths.append(_write(out_dir, "runtime.txt", f"{self.runtime:.3f}\n"))
        return paths


def _write(d, name, text):
    p = os.path.join(d, name)
    with open(p, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return p


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else f"{float(v):.10g}"
    return str(v)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(f"{float(v):.10g}")
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def _features(features):
    return [{"id": int(f.id), "kind": f.kind, "mean": [float(x) for x in f.mean],
             "covariance": [[float(x) for x in row] for row in f.covariance],
             "existence": float(f.existence), "hits": int(f.hits)} for f in features]


def _aggregate(experiment, series):
    """Per (mechanism, ue, epoch) means over seeds, in sorted key order."""
    acc = {}
    for r in series:
        key = (r[1], r[3], r[4])
        acc.setdefault(key, []).append((r[5], r[6]))
    rows = []
    for (mech, ue, k) in sorted(acc):
        v = np.array(acc[(mech, ue, k)], dtype=float)
        ok = ~np.isnan(v[:, 0])
        if not ok.any():
            continue
        rows.append((experiment, mech, ue, k, float(v[ok, 0].mean()), float(v[ok, 1].mean()), int(ok.sum())))
    return rows


def first_epoch_below(epochs, values, level):
    idx = np.flatnonzero(np.asarray(values) < level)
    return int(epochs[idx[0]]) if len(idx) else -1


# --------------------------------------------------------------------------- single-UE runs

def run_single(env, truth, noise, cfg, prior, seed, horizon, map_truth, ospa_params, known_pa=None):
    """One UE from epoch 1 to ``horizon``; returns per-epoch arrays and the engine."""
    model = measurement_model(env, noise, cfg)
    window = toa_window(env)
    eng = None
    out = {k: np.zeros(horizon) for k in ("error", "ospa", "x", "y", "cov", "nf")}
    for k in range(1, horizon + 1):
        meas = observe_epoch(env, truth, noise, seed, k, window)
        if eng is None:
            eng, _ = start_engine(env, truth, noise, cfg, model, prior, seed, k, meas, known_pa=known_pa)
        est = eng.step(meas, k, rngmod.stream(seed, truth.ue_id, k, "slam"))
        pts = eng.map_points()
        out["error"][k - 1] = np.linalg.norm(est.mean[:2] - truth.track[k])
        out["ospa"][k - 1] = ospa(pts, map_truth, ospa_params)
        out["x"][k - 1], out["y"][k - 1] = est.mean[:2]
        out["cov"][k - 1] = np.trace(est.covariance[:2, :2])
        out["nf"][k - 1] = len(pts)
    return out, eng


def _series_rows(experiment, mech, seed, ue, res, epochs):
    return [(experiment, mech, seed, ue, int(k), res["error"][i], res["ospa"][i], res["x"][i], res["y"][i],
             res["cov"][i], int(res["nf"][i])) for i, k in enumerate(epochs)]


def _hybrid(sc, seeds, progress):
    ue = sorted(sc.tracks)[0]
    track = sc.track_positions(ue)
    env = sc.environment
    truth_map = visible_map(env, track[1:], sc.ospa.include_scatterers)
    epochs = np.arange(1, sc.horizon + 1)
    series, snap, summ = [], {}, {}
    for mech, mode in (("hybrid", "hybrid"), ("known_pa", "passive_known_pa")):
        cfg = replace(sc.slam, mode=mode)
        errs, osps = [], []
        for seed in seeds:
            truth = draw_truth(track, sc.prior, seed, ue)
            res, eng = run_single(env, truth, sc.noise, cfg, sc.prior, seed, sc.horizon, truth_map, sc.ospa.params())
            series += _series_rows("hybrid_fig5ab", mech, seed, ue, res, epochs)
            errs.append(res["error"])
            osps.append(res["ospa"])
            if seed == seeds[0]:
                snap[mech] = {"seed": seed, "features": _features(eng.confirmed_features())}
            progress(f"{mech} seed {seed}")
        mae_k = np.mean(errs, axis=0)
        mospa_k = np.mean(osps, axis=0)
        summ[mech] = {"final_mae_m": float(mae_k[-1]), "track_mae_m": float(np.mean(errs)),
                      "final_mospa_m": float(mospa_k[-1]),
                      "epochs_to_mospa_below_1m": first_epoch_below(epochs, mospa_k, 1.0)}
    h, b = summ["hybrid"], summ["known_pa"]
    summ["comparison"] = {
        "hybrid_converges_no_later": bool(0 < h["epochs_to_mospa_below_1m"] and (
            b["epochs_to_mospa_below_1m"] < 0 or h["epochs_to_mospa_below_1m"] <= b["epochs_to_mospa_below_1m"])),
        "final_mae_ratio": h["final_mae_m"] / b["final_mae_m"] if b["final_mae_m"] > 0 else float("inf"),
    }
    tables = {"series": (SERIES_HEADER, series), "aggregate": (AGG_HEADER, _aggregate("hybrid_fig5ab", series))}
    return tables, snap, summ


def _custom(sc, seeds, progress):
    env = sc.environment
    series, snap = [], {}
    epochs = np.arange(1, sc.horizon + 1)
    mech = sc.slam.mode
    for ue in sorted(sc.tracks):
        track = sc.track_positions(ue)
        truth_map = visible_map(env, track[1:], sc.ospa.include_scatterers)
        for seed in seeds:
            truth = draw_truth(track, sc.prior, seed, ue)
            res, eng = run_single(env, truth, sc.noise, sc.slam, sc.prior, seed, sc.horizon, truth_map,
                                  sc.ospa.params())
            series += _series_rows("custom", mech, seed, ue, res, epochs)
            if seed == seeds[0]:
                snap[f"ue{ue}"] = {"seed": seed, "features": _features(eng.confirmed_features())}
            progress(f"ue {ue} seed {seed}")
    agg = _aggregate("custom", series)
    summ = {f"ue{ue}": {"final_mae_m": float(np.mean([r[5] for r in series if r[3] == ue and r[4] == sc.horizon])),
                        "final_mospa_m": float(np.mean([r[6] for r in series if r[3] == ue and r[4] == sc.horizon]))}
            for ue in sorted(sc.tracks)}
    return {"series": (SERIES_HEADER, series), "aggregate": (AGG_HEADER, agg)}, snap, summ


# --------------------------------------------------------------------------- crowd cohort

def _crowd(sc, seeds, progress):
    env = sc.environment
    ues = sorted(sc.schedule.entering_time)
    tracks = {u: sc.track_positions(u) for u in ues}
    truth_map = visible_map(env, np.vstack([t[1:] for t in tracks.values()]), sc.ospa.include_scatterers)
    epochs = np.arange(1, sc.horizon + 1)
    series, snap, orf_rows = [], {}, []
    for mech, crowd in (("crowd", True), ("solo", False)):
        for seed in seeds:
            r = run_cohort(env, sc.schedule, tracks, sc.noise, sc.slam, seed, sc.horizon, crowd, prior=sc.prior,
                           map_truth=truth_map, ospa_params=sc.ospa.params())
            for u in ues:
                for i, k in enumerate(epochs):
                    e = r.position_error[u][i]
                    if np.isnan(e):
                        continue
                    series.append(("crowd_fig5cd", mech, seed, u, int(k), e, r.map_ospa[u][i], np.nan, np.nan,
                                   np.nan, -1))
            if crowd and seed == seeds[0] and r.orf_history:
                k, version, rows = r.orf_history[-1]
                snap["orf"] = {"seed": seed, "epoch": k, "version": version, "features": rows}
                for k, version, rows in r.orf_history:
                    for f in rows:
                        orf_rows.append((seed, k, version, f["id"], f["kind"], f["mean"][0], f["mean"][1],
                                         f["confidence"], " ".join(str(c) for c in f["contributors"])))
            progress(f"{mech} seed {seed}")
    # the focus UE is the last one to enter (UE 8 in the bundled cohort)
    focus = max(ues, key=lambda u: (sc.schedule.entering_time[u], u))
    summ = {"focus_ue": int(focus)}
    for mech in ("crowd", "solo"):
        per_seed = {}
        last = {}
        for r in series:
            if r[1] == mech and r[3] == focus:
                per_seed.setdefault(r[2], []).append(r[5])
                if r[4] == sc.horizon:
                    last[r[2]] = r[6]
        summ[mech] = {"focus_avg_mae_m": float(np.mean([np.mean(v) for v in per_seed.values()])),
                      "focus_mospa_at_horizon_m": float(np.mean(list(last.values())))}
    c, s = summ["crowd"], summ["solo"]
    summ["improvement"] = {
        "mae": 1.0 - c["focus_avg_mae_m"] / s["focus_avg_mae_m"],
        "mospa": 1.0 - c["focus_mospa_at_horizon_m"] / s["focus_mospa_at_horizon_m"],
    }
    tables = {"series": (SERIES_HEADER, series), "aggregate": (AGG_HEADER, _aggregate("crowd_fig5cd", series)),
              "orf": (("seed", "epoch", "version", "id", "kind", "x_m", "y_m", "confidence", "contributors"),
                      orf_rows)}
    return tables, snap, summ


# --------------------------------------------------------------------------- beam sweep (grid experiment)

def _in_sectors(path, tx_cb, rx_cb, tx_or, rx_or, ue_orientation):
    return tx_cb.in_sector(wrap_angle(path.aod - tx_or)) and \
        rx_cb.in_sector(wrap_angle(path.aoa - ue_orientation - rx_or))


def sweep_epoch(env, ue, sc, seed, ue_id, epoch, rsrp_rows=None, path_rows=None):
    """Sweep every orientation pair at one grid point and extract paths.

    Returns ``(measurements, recovery)`` where ``recovery`` lists
    ``(tag, aod_err, aoa_err)`` for every in-sector LOS / wall path
    (errors in radians, NaN when not recovered) plus the spurious count.
    """
    tx_cb, rx_cb = sc.tx_codebook.codebook(), sc.rx_codebook.codebook()
    paths = [p for p in enumerate_paths(env, ue, sc.noise) if p.kind in ("LOS", "NLOS")]
    all_paths = enumerate_paths(env, ue, sc.noise)
    meas, recovery, spurious = [], [], 0
    bw = min(tx_cb.beamwidth, rx_cb.beamwidth)
    for c, (rx_or, tx_or) in enumerate(sc.sweep.orientations):
        g = rngmod.stream(seed, ue_id, epoch, f"rsrp{c}")
        m = sweep_rsrp(env, ue, tx_cb, rx_cb, sc.noise, g, tx_or, rx_or, paths=all_paths)
        if rsrp_rows is not None:
            for i in range(tx_cb.n_beams):
                for j in range(rx_cb.n_beams):
                    rsrp_rows.append((seed, epoch, c, i, j, float(m.values[i, j])))
        est = successive_cancellation(m, tx_cb, rx_cb, sc.sweep.stop_threshold_db,
                                      leakage_margin_db=sc.sweep.leakage_margin_db, contrast_db=sc.sweep.contrast_db)
        matched = set()
        for p in paths:
            if not _in_sectors(p, tx_cb, rx_cb, tx_or, rx_or, ue.orientation):
                continue
            best, err = None, (np.nan, np.nan)
            for n, e in enumerate(est):
                da = abs(wrap_angle(e.aod - p.aod))
                dr = abs(wrap_angle(e.aoa - wrap_angle(p.aoa - ue.orientation)))
                if da <= bw and dr <= bw and (best is None or max(da, dr) < max(err)):
                    best, err = n, (da, dr)
            if best is not None:
                matched.add(best)
            recovery.append((p.tag, err[0], err[1]))
        spurious += len(est) - len(matched)
        for n, e in enumerate(est):
            if path_rows is not None:
                path_rows.append((seed, epoch, c, np.rad2deg(e.aod), np.rad2deg(e.aoa), e.strength, e.tx_beam,
                                  e.rx_beam, int(n in matched)))
            # the same path seen in two orientation pairs is kept once (strongest first)
            if any(abs(wrap_angle(q.aoa - e.aoa)) < bw and abs(wrap_angle(q.aod - e.aod)) < bw for q in meas):
                continue
            meas.append(Measurement(e.aoa, e.aod, 0.0, e.strength, f"sweep{c}", epoch))
    return meas, recovery, spurious


def _sweep(sc, seeds, progress):
    env = sc.environment
    ue_id = sorted(sc.tracks)[0]
    n = len(sc.tracks[ue_id].waypoints())
    horizon = min(sc.horizon, n)
    track = sc.track_positions(ue_id, horizon + 2)
    cfg = replace(sc.slam, mode="passive_known_pa")
    model = measurement_model(env, sc.noise, cfg)
    tx_cb, rx_cb = sc.tx_codebook.codebook(), sc.rx_codebook.codebook()
    series, rsrp_rows, path_rows, snap = [], [], [], {}
    me_loc, me_map, rec_all, spur_all = [], [], [], 0
    for seed in seeds:
        truth = draw_truth(track, sc.prior, seed, ue_id)
        truth = UeTruth(ue_id, truth.track, 0.0, truth.orientation)
        # truth map: PA plus every path source that some orientation pair can see
        seen = {}
        for k in range(1, horizon + 1):
            ue = truth.state(k)
            for p in enumerate_paths(env, ue, sc.noise):
                if p.kind in ("LOS", "NLOS") and any(_in_sectors(p, tx_cb, rx_cb, t, r, ue.orientation)
                                                    for r, t in sc.sweep.orientations):
                    seen.setdefault(p.tag, p.source)
        for pa_id, pa in env.pas.items():
            seen.setdefault(f"LOS:{pa_id}", pa)
        truth_map = np.array([seen[t] for t in sorted(seen)]).reshape(-1, 2)
        eng = None
        errs = []
        for k in range(1, horizon + 1):
            ue = truth.state(k)
            meas, rec, spur = sweep_epoch(env, ue, sc, seed, ue_id, k, rsrp_rows, path_rows)
            rec_all += rec
            spur_all += spur
            if eng is None:
                eng, _ = start_engine(env, truth, sc.noise, cfg, model, sc.prior, seed, k, meas)
                control = None
            else:
                control = truth.track[k] - truth.track[k - 1]  # commanded grid step
            est = eng.step(meas, k, rngmod.stream(seed, ue_id, k, "slam"), control=control)
            errs.append(float(np.linalg.norm(est.mean[:2] - truth.track[k])))
            pts = eng.map_points()
            series.append(("sweep_fig6", "sweep_slam", seed, ue_id, k, errs[-1], ospa(pts, truth_map, sc.ospa.params()),
                           est.mean[0], est.mean[1], np.trace(est.covariance[:2, :2]), len(pts)))
        final_map = series[-1][6]
        me_loc.append(float(np.mean(errs)))
        me_map.append(final_map)
        if seed == seeds[0]:
            snap["sweep_slam"] = {"seed": seed, "features": _features(eng.confirmed_features()),
                                  "truth": [[float(x) for x in p] for p in truth_map]}
        progress(f"sweep seed {seed}")
    errs = np.array([[a, b] for _, a, b in rec_all], dtype=float).reshape(-1, 2)
    found = ~np.isnan(errs[:, 0])
    bw = min(tx_cb.beamwidth, rx_cb.beamwidth)
    summ = {"me_loc_m": float(np.mean(me_loc)), "me_map_m": float(np.mean(me_map)),
            "me_loc_max_m": float(np.max(me_loc)), "me_map_max_m": float(np.max(me_map)),
            "n_true_paths": int(len(errs)), "n_recovered": int(found.sum()),
            "recovery_rate": float(found.mean()) if len(errs) else 0.0,
            "max_aod_error_deg": float(np.rad2deg(errs[found, 0].max())) if found.any() else float("nan"),
            "max_aoa_error_deg": float(np.rad2deg(errs[found, 1].max())) if found.any() else float("nan"),
            "beamwidth_deg": float(np.rad2deg(bw)), "n_spurious": int(spur_all),
            "matrices_per_point": len(sc.sweep.orientations), "entries_per_matrix": tx_cb.n_beams * rx_cb.n_beams}
    tables = {"series": (SERIES_HEADER, series), "aggregate": (AGG_HEADER, _aggregate("sweep_fig6", series)),
              "rsrp": (("seed", "epoch", "orientation", "tx_beam", "rx_beam", "rsrp_dbm"), rsrp_rows),
              "paths": (("seed", "epoch", "orientation", "aod_deg", "aoa_deg", "strength_dbm", "tx_beam", "rx_beam",
                         "matched"), path_rows)}
    return tables, snap, summ


# --------------------------------------------------------------------------- beam tracking

def _dominant_path(paths, ue, tx_cb, rx_cb, tx_or, rx_or, pair, offsets):
    best, tag = -np.inf, ""
    for p, off in zip(paths, offsets):
        g = beam_power_grid([p], ue, tx_cb, rx_cb, tx_or, rx_or, [off])[pair]
        if g > best:
            best, tag = g, p.kind
    return tag


def _beamtrack(sc, seeds, progress):
    env = sc.environment
    ue_id = sorted(sc.tracks)[0]
    track = sc.track_positions(ue_id)
    tx_cb, rx_cb = sc.tx_codebook.codebook(), sc.rx_codebook.codebook()
    tx_or, rx_or = sc.tx_codebook.orientation, sc.rx_codebook.orientation
    ts = sc.tracking
    tcfg = TrackingConfig(ts.miss_db, ts.misses_to_sweep, ts.window)
    cfg = sc.slam
    model = measurement_model(env, sc.noise, cfg)
    window = toa_window(env)
    truth_map = visible_map(env, track[1:], sc.ospa.include_scatterers)
    b0, b1 = ts.blockage_start, ts.blockage_start + ts.blockage_epochs
    log_rows, series = [], []
    fractions, losses, delays, reacq, snap = [], [], [], [], {}
    n_pairs = tx_cb.n_beams * rx_cb.n_beams
    for seed in seeds:
        truth = draw_truth(track, sc.prior, seed, ue_id)
        state, eng = TrackingState(), None
        delay = -1
        for k in range(1, sc.horizon + 1):
            ue = truth.state(k)
            paths = enumerate_paths(env, ue, sc.noise)
            blocked = b0 <= k < b1
            offs = [-ts.blockage_db if (blocked and p.kind == "LOS") else 0.0 for p in paths]
            m = sweep_rsrp(env, ue, tx_cb, rx_cb, sc.noise, rngmod.stream(seed, ue_id, k, "rsrp"), tx_or, rx_or,
                           paths=paths, path_offsets_db=offs)
            cands = None
            if eng is not None:
                mean, cov = eng.particles.moments()
                pred = mean.copy()
                pred[:2] += mean[2:4]
                cov = cov.copy()
                cov[:2, :2] += cfg.accel_std ** 2 * np.eye(2)
                cands = predict_beams(eng.features, pred, cov, tx_cb, rx_cb, tx_or, rx_or, ts.gate_sigma)
            mode = state.mode
            state, chosen, overhead = tracking_step(state, m, cands, cfg=tcfg)
            best = float(m.values.max())
            achieved = float(m.values[chosen])
            if mode == "tracking":
                fractions.append(overhead / n_pairs)
                losses.append(best - achieved)
            elif k >= b0 and delay < 0 and ts.blockage_epochs > 0 and eng is not None:
                delay = k - b0
                reacq.append(_dominant_path(paths, ue, tx_cb, rx_cb, tx_or, rx_or, chosen, offs))
            log_rows.append((seed, k, mode, overhead, chosen[0], chosen[1], achieved, best, int(blocked)))
            visible = [p for p in paths if not (blocked and p.kind == "LOS")]
            meas = observe(visible, ue, sc.noise, rngmod.stream(seed, ue_id, k, "obs"), k, window)
            if eng is None:
                eng, _ = start_engine(env, truth, sc.noise, cfg, model, sc.prior, seed, k, meas)
            est = eng.step(meas, k, rngmod.stream(seed, ue_id, k, "slam"))
            pts = eng.map_points()
            series.append(("beamtrack", "slam_tracking", seed, ue_id, k,
                           float(np.linalg.norm(est.mean[:2] - truth.track[k])), ospa(pts, truth_map, sc.ospa.params()),
                           est.mean[0], est.mean[1], np.trace(est.covariance[:2, :2]), len(pts)))
        delays.append(delay)
        if seed == seeds[0]:
            snap["slam_tracking"] = {"seed": seed, "features": _features(eng.confirmed_features())}
        progress(f"beamtrack seed {seed}")
    summ = {"n_pairs": n_pairs,
            "tracking_fraction_mean": float(np.mean(fractions)) if fractions else float("nan"),
            "tracking_fraction_max": float(np.max(fractions)) if fractions else float("nan"),
            "median_rsrp_loss_db": float(np.median(losses)) if losses else float("nan"),
            "sweep_delay_max_epochs": int(max(delays)) if min(delays) >= 0 else -1,
            "reacquired": sorted(set(reacq))}
    tables = {"series": (SERIES_HEADER, series), "aggregate": (AGG_HEADER, _aggregate("beamtrack", series)),
              "tracking": (("seed", "epoch", "mode", "overhead", "tx_beam", "rx_beam", "achieved_rsrp_dbm",
                            "exhaustive_best_rsrp_dbm", "blocked"), log_rows)}
    return tables, snap, summ


_RUNNERS = {"hybrid_fig5ab": _hybrid, "crowd_fig5cd": _crowd, "sweep_fig6": _sweep, "beamtrack": _beamtrack,
            "custom": _custom}


def run_experiment(scenario, preset, seeds=None, config_text=None, progress=None):
    """Run ``preset`` on ``scenario`` for ``seeds`` runs (default: the scenario's count).

    ``config_text`` is echoed verbatim into the report (defaults to the
    emitted scenario).  Raises :class:`ConfigError` listing every violation.
    """
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
    problems = validate(scenario)
    if seeds is not None and seeds < 1:
        problems.append(f"seeds must be >= 1 (got {seeds})")
    if problems:
        raise ConfigError(problems)
    seed_list = scenario.seed_list(seeds)
    t0 = time.perf_counter()
    tables, snap, summ = _RUNNERS[preset](scenario, seed_list, progress or (lambda msg: log.debug(msg)))
    return RunReport(preset, seed_list, tables, snap, summ,
                     config_text if config_text is not None else emit(scenario), time.perf_counter() - t0)
