"""An exhaustive 8x8 beam sweep and the paths pulled back out of it."""
import numpy as np

from isacslam import rng as rngmod
from isacslam.beam import successive_cancellation
from isacslam.measurement import UEState, enumerate_paths, sweep_rsrp
from isacslam.scenario import bundled

sc = bundled("sweep_fig6")
env = sc.environment
tx_cb, rx_cb = sc.tx_codebook.codebook(), sc.rx_codebook.codebook()
ue = UEState((4.0, 2.5), orientation=0.0)

np.set_printoptions(precision=0, suppress=True, linewidth=120)
for rx_or, tx_or in sc.sweep.orientations:
    m = sweep_rsrp(env, ue, tx_cb, rx_cb, sc.noise, rngmod.stream(0, 1, 0, "demo"), tx_or, rx_or)
    est = successive_cancellation(m, tx_cb, rx_cb, sc.sweep.stop_threshold_db,
                                  leakage_margin_db=sc.sweep.leakage_margin_db, contrast_db=sc.sweep.contrast_db)
    print(f"UE array at {np.rad2deg(rx_or):5.0f} deg, PA array at {np.rad2deg(tx_or):5.0f} deg")
    print(m.values)
    for e in est:
        print(f"   path  aod {np.rad2deg(e.aod):7.1f}  aoa {np.rad2deg(e.aoa):7.1f}  {e.strength:6.1f} dBm")

print("\ntrue LOS / reflection angles")
for p in enumerate_paths(env, ue, sc.noise):
    if p.kind != "scatter":
        print(f"   {p.tag:10s} aod {np.rad2deg(p.aod):7.1f}  aoa {np.rad2deg(p.aoa):7.1f}")
