"""Numerical calculus of spacelike surfaces in double-null coordinates.

Charts supply metric data (Ω, b, γ) with derivatives; the connection module
turns that into Christoffel symbols, curvature and structure coefficients;
the surface module builds null frames and second fundamental forms of
graph-parametrized spacelike surfaces; the finder locates marginal spheres;
the tube module classifies hypersurfaces and verifies that a tube all of
whose spacelike sections are marginal must be null.
"""

from .charts import (ChartPoint, DoubleNullChart, MetricSample, assemble_metric,
                     builtin_charts, eval_chart, load_chart, make_chart,
                     verify_eikonal)
from .connection import (christoffel, lie_b_residual, raychaudhuri_residual,
                         ricci, scacs_residuals, structure_coefficients)
from .surface import (SurfaceGraph, induced_metric, oracle_second_forms,
                      pi_coefficients, second_fundamental_forms,
                      solve_null_frame, specialization_case1,
                      specialization_case2, tangent_frame)
from .finder import MarginalSection, expansion_profile, find_marginal_on_cone
from .tube import (SectionSpec, TubeGraph, classify_tube, implicit_reparametrize,
                   marginality_scan, section_from_tube, tangency_identity_residual)

__version__ = "0.1.0"
