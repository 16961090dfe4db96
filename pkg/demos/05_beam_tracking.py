"""Map-aided beam tracking with a short LOS blockage, printed epoch by epoch for one seed."""
from isacslam.experiments import run_experiment
from isacslam.scenario import bundled

sc = bundled("beamtrack")
rep = run_experiment(sc, "beamtrack", seeds=1)
print("epoch  mode         pairs  chosen   loss dB  blocked")
for seed, k, mode, overhead, i, j, got, best, blocked in rep.tables["tracking"][1]:
    if k <= 5 or sc.tracking.blockage_start - 2 <= k <= sc.tracking.blockage_start + sc.tracking.blockage_epochs + 2:
        print(f"{k:5d}  {mode:11s}  {overhead:5d}  ({i},{j})  {best - got:7.2f}  {'yes' if blocked else ''}")
print(rep.summary)
