import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isacslam.crowdsourcing import (
    FeatureRecord,
    FrameSchedule,
    ORFMap,
    download,
    lrf_records,
    run_cohort,
    upload,
)
from isacslam.geometry import Environment
from isacslam.measurement import NoiseProfile
from isacslam.sim import PriorSpec, cohort_tracks, loop_track
from isacslam.slam import Feature, SlamConfig

from conftest import PA, box_walls


def rec(mean, cov, reporter=1, fid=0, kind="VA", conf=0.9, epoch=5):
    return FeatureRecord(Feature(fid, kind, np.asarray(mean, float), np.asarray(cov, float), conf), reporter, epoch, conf)


def test_empty_plus_three():
    orf = upload(ORFMap(), [rec((0, 0), np.eye(2), fid=0), rec((5, 0), np.eye(2), fid=1), rec((0, 5), np.eye(2), fid=2)])
    assert len(orf.records) == 3 and orf.version == 1


def test_equal_weight_fusion():
    orf = upload(ORFMap(), [rec((1, 0), np.eye(2), reporter=1)])
    orf = upload(orf, [rec((0, 1), np.eye(2), reporter=2)])
    (f,) = orf.records
    assert np.allclose(f.mean, (0.5, 0.5)) and np.allclose(f.covariance, 0.5 * np.eye(2))
    assert f.contributors == [1, 2] and orf.version == 2


def test_far_report_is_inserted():
    s = 0.1
    orf = upload(ORFMap(), [rec((0, 0), s ** 2 * np.eye(2), reporter=1)])
    orf = upload(orf, [rec((10 * s * 2, 0), s ** 2 * np.eye(2), reporter=2)])
    assert len(orf.records) == 2


def test_kind_must_match():
    orf = upload(ORFMap(), [rec((0, 0), np.eye(2), reporter=1, kind="PA")])
    orf = upload(orf, [rec((0, 0), np.eye(2), reporter=2, kind="VA")])
    assert len(orf.records) == 2


def test_malformed_covariance_rejected():
    orf = upload(ORFMap(), [rec((0, 0), [[1, 0], [0, -1]]), rec((1, 1), [[np.nan, 0], [0, 1]], fid=1),
                            rec((2, 2), np.eye(2), fid=2)])
    assert orf.rejected == 2 and len(orf.records) == 1


def test_reupload_replaces_own_contribution():
    orf = upload(ORFMap(), [rec((0, 0), np.eye(2), reporter=1)])
    orf = upload(orf, [rec((0.2, 0), 0.5 * np.eye(2), reporter=1, epoch=10)])
    (f,) = orf.records
    assert np.allclose(f.mean, (0.2, 0)) and np.allclose(f.covariance, 0.5 * np.eye(2))


def test_download_filters_and_sorts():
    assert download(ORFMap()) == []
    orf = ORFMap()
    for i, (p, c) in enumerate([((1, 1), 0.9), ((2, 2), 0.5), ((8, 8), 0.95), ((3, 3), 0.2), ((20, 1), 0.99)]):
        orf = upload(orf, [rec(p, 0.01 * np.eye(2), reporter=i, conf=c)])
    got = download(orf, region=(0, 0, 5, 5))
    assert [tuple(f.mean) for f in got] == [(1, 1), (2, 2)]
    assert download(orf, region=(50, 50, 60, 60)) == []


spd = st.tuples(st.floats(0.05, 2), st.floats(0.05, 2), st.floats(-0.9, 0.9)).map(
    lambda t: np.array([[t[0] ** 2, t[2] * t[0] * t[1]], [t[2] * t[0] * t[1], t[1] ** 2]]))
vec = st.tuples(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))


@settings(max_examples=100, deadline=None)
@given(vec, spd, vec, spd)
def test_fusion_commutative_and_informative(m1, c1, m2, c2):
    a, b = rec(m1, c1, reporter=1), rec(m2, c2, reporter=2)
    ab = upload(upload(ORFMap(), [a]), [b])
    ba = upload(upload(ORFMap(), [b]), [a])
    assert len(ab.records) == len(ba.records)
    if len(ab.records) == 1:
        assert np.allclose(ab.records[0].mean, ba.records[0].mean, atol=1e-9)
        assert np.allclose(ab.records[0].covariance, ba.records[0].covariance, atol=1e-9)
        assert np.trace(ab.records[0].covariance) <= min(np.trace(c1), np.trace(c2)) + 1e-12
        # oracle: information-form combination
        info = np.linalg.inv(c1) + np.linalg.inv(c2)
        cov = np.linalg.inv(info)
        assert np.allclose(ab.records[0].covariance, cov, atol=1e-9)
        assert np.allclose(ab.records[0].mean, cov @ (np.linalg.solve(c1, m1) + np.linalg.solve(c2, m2)), atol=1e-9)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=8))
def test_version_strictly_increases(sizes):
    orf, last = ORFMap(), 0
    for i, n in enumerate(sizes):
        orf = upload(orf, [rec((j, i), np.eye(2), reporter=i, fid=j) for j in range(n)])
        assert orf.version == last + 1
        last = orf.version


def _env():
    return Environment(box_walls(0, 0, 12, 10), {"pa": PA}, {}, (0, 0, 12, 10))


def _cohort(schedule, crowd, horizon=8, n_ues=2, seed=4):
    cfg = SlamConfig(n_particles=100)
    tracks = cohort_tracks(n_ues, horizon + 1)
    return run_cohort(_env(), schedule, tracks, NoiseProfile(), cfg, seed, horizon, crowdsourcing=crowd,
                      prior=PriorSpec(center_position=False))


def test_single_ue_crowd_on_off_identical():
    sched = FrameSchedule({1: 1}, upload_period=3)
    a, b = _cohort(sched, True, n_ues=1), _cohort(sched, False, n_ues=1)
    assert np.array_equal(a.position_error[1], b.position_error[1])
    assert np.array_equal(a.map_ospa[1], b.map_ospa[1])


def test_baseline_equivalence_without_exchange():
    silent = FrameSchedule({1: 1, 2: 3}, upload_period=float("inf"), download_on_entry=False)
    a = _cohort(silent, True)
    b = _cohort(FrameSchedule({1: 1, 2: 3}), False)
    for u in (1, 2):
        assert np.array_equal(a.position_error[u], b.position_error[u], equal_nan=True)
        assert np.array_equal(a.map_ospa[u], b.map_ospa[u], equal_nan=True)
    assert a.orf_history == []


def test_late_ue_nan_before_entry():
    res = _cohort(FrameSchedule({1: 1, 2: 5}, upload_period=2), True)
    assert np.all(np.isnan(res.position_error[2][:4])) and np.all(np.isfinite(res.position_error[2][4:]))
    versions = [v for _, v, _ in res.orf_history]
    assert versions and np.all(np.diff(versions) > 0)


def test_short_track_rejected():
    with pytest.raises(ValueError):
        run_cohort(_env(), FrameSchedule({1: 1}), {1: loop_track((6, 4), (3, 2), 5)}, NoiseProfile(),
                   SlamConfig(n_particles=10), 0, 10)


def test_two_ues_same_va_fused_trace_not_larger():
    from isacslam.experiments import run_single
    from isacslam.sim import draw_truth, visible_map
    from isacslam.metrics import OspaParams
    noise = NoiseProfile()
    cfg = SlamConfig(n_particles=200)
    env = _env()
    prior = PriorSpec()
    records = []
    for u, track in cohort_tracks(2, 13).items():
        truth = draw_truth(track, prior, 2, u)
        _, eng = run_single(env, truth, noise, cfg, prior, 2, 12, visible_map(env, track), OspaParams(),
                            known_pa=env.pas["pa"])
        records.append(lrf_records(eng, u, 12))
    orf = upload(upload(ORFMap(), records[0]), records[1])
    shared = [f for f in orf.records if len(f.contributors) == 2]
    assert shared
    for f in shared:
        contrib = [r.feature.covariance for r in f.contributions.values()]
        expect = np.linalg.inv(sum(np.linalg.inv(c) for c in contrib))
        assert np.allclose(f.covariance, expect, atol=1e-12)
        assert np.trace(f.covariance) <= min(np.trace(c) for c in contrib) + 1e-15


def test_lrf_records_inflate_by_pose_uncertainty():
    from isacslam.slam import MeasurementModel, SlamEngine, init_particles
    cfg = SlamConfig()
    model = MeasurementModel.from_noise(NoiseProfile(), cfg, 40.0)
    ps = init_particles(np.zeros(6), np.r_[0.2, 0.2, 0, 0, 0, 0], 2000, np.random.default_rng(0))
    f = Feature(1, "VA", np.array([3.0, 4.0]), 0.01 * np.eye(2), 0.9, 0, 0, 5)
    eng = SlamEngine(cfg, model, ps, [f])
    (r,) = lrf_records(eng, 7, 3, orientation_std=0.01)
    p_cov = eng.particles.moments()[1][:2, :2]
    rng_m = np.linalg.norm(f.mean - eng.particles.moments()[0][:2])
    assert np.allclose(r.feature.covariance, f.covariance + p_cov + (0.01 * rng_m) ** 2 * np.eye(2))
    assert r.reporter == 7 and r.report_epoch == 3 and r.confidence == 0.9
