# Closed-form temperature of discretized laser exposures.
#
# Each exposure step of length dt becomes an instantaneous point source of
# energy E = A P dt. Its start is shifted back by r^2 / (8 alpha) so that at
# activation the field already has the width of the laser spot.

import math

import numpy as np

from saiga.analytic import TI6AL4V, LaserSpec, ScanPath, discretize_scan, superpose

mat = TI6AL4V
laser = LaserSpec(power=82.5, speed=0.5, spot_radius=20e-6, absorptivity=0.77)

print(f"diffusivity      {mat.alpha:.4e} m^2/s")
print(f"energy / source  {laser.energy:.4e} J")
print(f"source spacing   {laser.spacing * 1e6:.1f} um")
print(f"start shift      {laser.tau_shift(mat):.4e} s")

# -------------------------------
# One pulse: peak value and energy content
# -------------------------------
pulse = discretize_scan(ScanPath([[0.0, 0.0]]), laser, mat)
for t in (1e-9, 1e-5, 1e-4):
    T, _ = superpose(pulse, mat, np.zeros(3), t)
    print(f"t = {t:.0e} s   T(source) = {T:9.2f} C")

# integrate rho c T over a box 10 sigma wide; should give back E
t = 5e-5
sigma = math.sqrt(2 * mat.alpha * (t - pulse.tau[0]))
g, w = np.polynomial.legendre.leggauss(40)
g, w = g * 10 * sigma, w * 10 * sigma
Z, Y, X = np.meshgrid(g, g, g, indexing="ij")
T, _ = superpose(pulse, mat, np.column_stack([X.ravel(), Y.ravel(), Z.ravel()]), t)
E = mat.rho_cp * np.einsum("i,j,k->ijk", w, w, w).ravel() @ T
print(f"energy in the field at t = {t:.0e} s: {E:.5e} J")

# -------------------------------
# A 1 mm line: temperature along the track
# -------------------------------
line = discretize_scan(ScanPath([[0.0, 0.0], [1e-3, 0.0]]), laser, mat)
t = 1.5e-3
xs = np.linspace(-0.2e-3, 1.2e-3, 15)
T, G = superpose(line, mat, np.column_stack([xs, np.zeros_like(xs), np.zeros_like(xs)]), t)
print(f"\n{len(line)} sources; laser at x = {min(laser.speed * t, 1e-3) * 1e3:.2f} mm when t = {t:.1e} s")
for x, v in zip(xs, T):
    print(f"  x = {x * 1e3:5.2f} mm   T = {v:8.1f} C")
