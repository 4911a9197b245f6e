"""Semi-analytical thermal model of laser scans on single-patch NURBS parts.

The temperature is the sum of a closed-form point-source field and a spline
correction field that restores the part's boundary conditions.
"""

from .analytic import (TI6AL4V, LaserSpec, Material, PointSource, ScanPath, SourceSet,
                       discretize_scan, superpose)
from .config import RunConfig, dump_config, parse_config
from .splines import FaceId, NurbsVolume, quarter_cylinder_part
from .timestepper import Simulation, run_simulation

__version__ = "0.1.0"
