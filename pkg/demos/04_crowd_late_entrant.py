"""A late UE downloading the crowdsourced map against the same UE mapping alone."""
import sys

from isacslam.experiments import run_experiment
from isacslam.scenario import bundled

n = int(sys.argv[1]) if len(sys.argv) > 1 else 3
rep = run_experiment(bundled("crowd_fig5cd"), "crowd_fig5cd", seeds=n)
s = rep.summary
u = s["focus_ue"]
for mech in ("crowd", "solo"):
    print(f"{mech:5s}  UE {u}: average error {s[mech]['focus_avg_mae_m']:.3f} m, "
          f"map OSPA at the end {s[mech]['focus_mospa_at_horizon_m']:.3f} m")
print(f"gain: error {s['improvement']['mae']:.0%}, map {s['improvement']['mospa']:.0%}  ({n} seeds, {rep.runtime:.0f} s)")
