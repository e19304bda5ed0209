"""Dimension theory of self-affine iterated function systems.

Library layout:

* ``linalg``     -- singular spectra, the singular value function, IFS validation
* ``words``      -- symbolic words, wedges, the coding map
* ``measures``   -- cylinder measures, scaling exponents, kernel potentials
* ``pressure``   -- partition sums, affinity dimension, exceptional-set bounds
* ``capacity``   -- r-capacities by convex energy minimization
* ``projection`` -- Monte-Carlo projection experiments and box dimensions
* ``orthproj``   -- random subspaces and the smoothed-ball-mass criterion
* ``cli``        -- config-driven batch commands with CSV outputs
"""

__version__ = "0.1.0"

from .linalg import AffineIFS, SingularSpectrum, log_phi, phi, singular_values
from .measures import (
    BernoulliMeasure,
    ExampleOneMeasure,
    MarkovMeasure,
    ScaleGrid,
    UniformSftMeasure,
    VariableProductMeasure,
    cylinder_exponent,
    cylinder_exponent_trace,
    essential_exponent_bounds,
    example_one_system,
    kernel_potential,
    log_kernel_potential,
    potential_dim_trace,
    transversality_kernel,
)
from .pressure import SftSpec, affinity_dim, exceptional_bound, norm_ratio_exponent, partition_sum
from .capacity import DepthTree, capacity_dims, energy, min_energy, tree_for_radius
from .projection import (
    PointCloud,
    box_count,
    box_dim_fit,
    covering_check,
    local_dim_estimate,
    project_cloud,
    sample_translation,
    sweep_experiment,
)
from .orthproj import Subspace, exact_dim_criterion, random_subspace, smoothed_ball_mass
from .words import CodedPoint, Word, coding_point, wedge
