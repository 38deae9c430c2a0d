"""Coarse-to-fine global optimisation for multi-marginal optimal transport with
Coulomb cost under the pairwise Monge ansatz."""

from .assembly import (ProblemData, apply_B, apply_B_adjoint, assemble, block_gradient, comp_violation,
                       cost_coefficient, cost_matrix, energy, penalized_energy)
from .densities import DensitySpec, builtin, from_expression
from .diagnostics import avg_error, kkt_certificate, seidl_maps_1d, transport_maps
from .ggr import GgrConfig, beta_for, eps_outer_for, ggr_run
from .grinit import gr_init
from .mesh import Mesh, RefinementMap, build_quadtree_mesh_2d, partition_equal_mass_1d, refine
from .multistart import MultistartConfig, multistart_solve, random_feasible_start
from .pbcd import PbcdConfig, SolveReport, feasibility, kkt_violation, pbcd_solve
from .projection import project_onto_S

__version__ = "0.1.0"
