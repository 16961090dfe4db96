from dataclasses import replace

import numpy as np
import pytest

from isacslam.errors import ConfigError
from isacslam.experiments import first_epoch_below, run_experiment
from isacslam.scenario import bundled, bundled_text, parse


def _short(name, horizon, **kw):
    return replace(bundled(name), horizon=horizon, **kw)


def test_first_epoch_below():
    assert first_epoch_below([1, 2, 3, 4], [3.0, 1.5, 0.9, 0.2], 1.0) == 3
    assert first_epoch_below([1, 2], [3.0, 2.0], 1.0) == -1


def test_sweep_rsrp_table_layout():
    sc = _short("sweep_fig6", 3)
    rep = run_experiment(sc, "sweep_fig6", seeds=1)
    s = rep.summary
    assert s["matrices_per_point"] == 4 and s["entries_per_matrix"] == 64
    _, rows = rep.tables["rsrp"]
    assert len(rows) == 3 * 4 * 64
    per_point = {}
    for r in rows:
        per_point.setdefault(r[1], set()).add((r[2], r[3], r[4]))
    assert all(len(v) == 256 for v in per_point.values())


def test_crowd_entering_times():
    sc = _short("crowd_fig5cd", 30)
    rep = run_experiment(sc, "crowd_fig5cd", seeds=1)
    first = {}
    for r in rep.tables["series"][1]:
        if r[1] == "crowd":
            first[r[3]] = min(first.get(r[3], 99), r[4])
    assert first == {1: 1, 2: 1, 3: 1, 4: 5, 5: 10, 6: 15, 7: 20, 8: 25}
    assert rep.summary["focus_ue"] == 8


def test_config_echo_verbatim(tmp_path):
    text = bundled_text("beamtrack")
    rep = run_experiment(parse(text), "beamtrack", seeds=1, config_text=text)
    rep.write(tmp_path)
    assert (tmp_path / "config.toml").read_text(encoding="utf-8") == text


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "runtime.txt"}


@pytest.mark.parametrize("preset,name,horizon", [("hybrid_fig5ab", "hybrid_fig5ab", 10),
                                                 ("sweep_fig6", "sweep_fig6", 2),
                                                 ("beamtrack", "beamtrack", 20)])
def test_same_seed_same_bytes(tmp_path, preset, name, horizon):
    sc = _short(name, horizon)
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(sc, preset, seeds=2).write(a)
    run_experiment(sc, preset, seeds=2).write(b)
    fa, fb = _files(a), _files(b)
    assert fa.keys() == fb.keys() and "series.csv" in fa
    assert fa == fb


def test_different_seed_differs():
    sc = _short("hybrid_fig5ab", 5)
    a = run_experiment(sc, "hybrid_fig5ab", seeds=1)
    b = run_experiment(replace(sc, master_seed=7), "hybrid_fig5ab", seeds=1)
    assert a.csv_text("series") != b.csv_text("series")


def test_custom_preset_runs_every_ue():
    sc = _short("default", 6, slam=replace(bundled("default").slam, n_particles=200))
    rep = run_experiment(sc, "custom", seeds=1)
    ues = {r[3] for r in rep.tables["series"][1]}
    assert ues == set(sc.tracks)
    assert all(np.isfinite(r[5]) for r in rep.tables["series"][1])


def test_bad_inputs_collected():
    sc = replace(bundled("default"), horizon=0)
    with pytest.raises(ConfigError) as ei:
        run_experiment(sc, "custom", seeds=0)
    v = ei.value.violations
    assert any("horizon" in m for m in v) and any("seeds" in m for m in v)
    with pytest.raises(ConfigError):
        run_experiment(bundled("default"), "nope")
