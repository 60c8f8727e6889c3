"""kinlub: discrete-velocity kinetic solvers for rarefied-gas lubrication.

Submodules
----------
velocity      Gauss quadrature for L2(M dv), kernel projections
collision     linearized collision operator L = nu I + K and the bilinear form
slab          1D kinetic slab problems with diffuse-reflection walls
coefficients  transport coefficient A(rho), its derivative, and the primitive G
reynolds      generalized Reynolds equation via the Kirchhoff transform
hilbert       expansion terms g1, g2 over the planar density field
remainder     thin-domain remainder solve and hydrodynamic-limit studies
cli           batch pipeline and command-line interface
"""

from .velocity import (VelocityGrid, FluidMoments, build_velocity_grid,
                       inner_product, project_kernel, orthogonal_part)
from .collision import (CollisionModel, collision_frequency, apply_L,
                        apply_Gamma, spectral_gap, load_plugin_kernel)
from .slab import (SlabField, SlabOptions, SlabSolveReport, transport_sweep,
                   solve_diffuse, assemble_direct, moment_profiles,
                   uniform_zgrid)
from .coefficients import CoefficientTable, compute_A, compute_Aprime, tabulate
from .reynolds import (PlanarDomain, DensityField, harmonic_solve,
                       solve_reynolds, solve_reynolds_profile,
                       reynolds_residual, classical_reynolds_reference)
from .hilbert import (ExpansionField, build_g1, build_g2,
                      mass_flux_divergence, boundary_traces)
from .remainder import (ThinDomainField, IterationReport, RemainderOptions,
                        rescale_to_thin, assemble_sources,
                        solve_linear_remainder, picard_solve,
                        convergence_study)
from .errors import (ConvergenceError, DivergenceError, ModelViolationError,
                     SolvabilityError, TableRangeError)

__version__ = "0.1.0"
