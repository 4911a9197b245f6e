# Contour scan following the curved face, 100 um inside the material.
#
# The track is an arc of radius 1.1 mm about the cylinder axis. As the laser
# moves along it, the point-source field pushes heat out through the nearby
# curved face; the correction field cancels that loss. The ratio of the
# remaining (net) loss to the uncorrected loss measures how well the
# adiabatic condition is restored. Takes about a minute.

from pathlib import Path

from saiga.config import parse_config
from saiga.timestepper import run_simulation

cfg = parse_config("contour_scan")
out = Path("contour_scan_out")
res = run_simulation(cfg, out)
s = res.stats
print(f"{s.n_dofs} DOFs, l_e {s.l_e:.2f}, {len(res.profiles)} profiles, {res.wall_time:.0f} s")
print("timings:", {k: round(v, 2) for k, v in res.timings.items()})

print("\n  t [ms]   I_net [W/m]   I_ana [W/m]   ratio")
for t, i_net, i_ana, ratio in res.metrics:
    print(f"{t * 1e3:7.2f} {i_net:13.1f} {i_ana:13.1f} {100 * ratio:7.2f}%")

# where along the face is the loss concentrated?
prof = res.profiles[max(res.profiles)]
k = abs(prof.q_tilde).argmax()
print(f"\nat t = {max(res.profiles) * 1e3:.1f} ms the uncorrected loss peaks at "
      f"s = {prof.s[k] * 1e3:.3f} mm (angle {prof.theta[k]:.3f} rad): "
      f"q_tilde {prof.q_tilde[k]:.3e}, q_net {prof.q_net[k]:.3e} W/m^2")
print("profiles, fields and probes written to", out.resolve())
