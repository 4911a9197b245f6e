# The quarter-cylinder test part as a single NURBS patch.
#
# A 2 mm cube with a 1 mm quarter cylinder removed along one vertical edge.
# The curved face is exact: quadratic in xi with weights cos(pi/8) on the
# off-corner control points. Refinement only inserts knots, so the geometry
# never changes; degree elevation brings eta and zeta to quadratic.

import math

import numpy as np

from saiga.discretization import build_mesh, mesh_stats, refine_to_size
from saiga.splines import FaceId, elevate_degree, face_normal, quarter_cylinder_part

part = quarter_cylinder_part()
print("degrees", part.degrees, "control grid", part.shape)
print("xi knots", part.knots[0].values)

# points on the curved face at the top edge
xi = np.column_stack([np.linspace(0, 1, 7), np.zeros(7), np.ones(7)])
x, *_ = part.evaluate(xi)
for u, p in zip(xi[:, 0], x):
    r = math.hypot(p[0] - 2e-3, p[1])
    print(f"xi = {u:.3f}  x = ({p[0] * 1e3:.4f}, {p[1] * 1e3:.4f}) mm  distance to axis {r * 1e3:.15f} mm")

n, _ = face_normal(part, FaceId.ETAMIN, [0.5, 0.5])
print("outward normal of the curved face at its middle:", np.round(n, 6))

V = build_mesh(part, 8).volume_measure()
print(f"volume {V:.12e} m^3 (exact {(4 - math.pi / 4) * 2e-9:.12e})")

# -------------------------------
# Meshes graded towards point A (top of the curved face, 45 degrees)
# -------------------------------
p2 = elevate_degree(part, (2, 2, 2))
print("\n  l_e   DOFs  elements   l_min [um]")
for le in (5.0, 3.4, 2.5, 1.2):
    vol = refine_to_size(p2, le * 20e-6, anchor=(0.5, 0.0, 1.0), ratio=1.1)
    s = mesh_stats(build_mesh(vol), FaceId.ETAMIN, 20e-6)
    print(f"{s.l_e:5.2f} {s.n_dofs:6d} {s.n_elements:9d} {s.l_min * 1e6:11.2f}")
