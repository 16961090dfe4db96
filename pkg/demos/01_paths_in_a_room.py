"""Multipath in a rectangular room: each wall reflection seen as a virtual anchor.

Prints every path from the access point to one UE position, then checks that
the reflected path length equals the straight distance to the mirrored anchor.
"""
import numpy as np

from isacslam.geometry import mirror_point, trace_specular_path
from isacslam.measurement import UEState, enumerate_paths
from isacslam.scenario import bundled

sc = bundled("default")
env = sc.environment
pa = env.pas["pa"]
ue = UEState((3.0, 2.5), orientation=np.deg2rad(30))

print(f"PA at {pa}, UE at {ue.position}")
for p in enumerate_paths(env, ue, sc.noise):
    print(f"  {p.kind:5s} {p.tag:10s} aoa {np.rad2deg(p.aoa):7.1f} deg  aod {np.rad2deg(p.aod):7.1f} deg  "
          f"range {p.toa * 299792458:6.2f} m  {p.rsrp:6.1f} dBm")

print("\nvirtual anchors")
for w in env.walls:
    va = mirror_point(pa, w)
    hit = trace_specular_path(ue.position, pa, w, env.walls)
    if hit is None:
        print(f"  wall {w.id}: no specular point on the segment")
        continue
    bounce, length = hit
    print(f"  wall {w.id}: VA {np.round(va, 3)}  path {length:.4f} m  |UE-VA| {np.linalg.norm(va - ue.position):.4f} m")
