"""Hard-sphere dynamics, partition combinatorics and kinetic solvers."""

from .collisions import (InvalidImpactVector, Restitution, apply_elastic_collision,
                         apply_inelastic_collision_1d, energy_loss_1d, pair_collision_time,
                         precollision_momenta_1d)
from .config import ConfigError, RunConfig, load_config, parse_config
from .dynamics import (CollisionEvent, PathologicalStateError, evolve_by, evolve_to,
                       forward_reverse, reverse_momenta, scattering_apply)
from .estimation import (Binning, GradedHistogram, InitialStateSpec, PairCorrelationTable,
                         chaos_metric, dispersion_of_additive_observable, estimate_correlations,
                         estimate_reduced_density, sample_chaos_configuration,
                         sample_correlated_configuration)
from .experiments import (Histogram1D, SweepReport, compare_distributions,
                          run_boltzmann_grad_sweep, run_correlation_propagation,
                          run_granular_cooling)
from .io import read_snapshot, write_snapshot
from .kinetic import (GridDensity1D, KineticEnsemble, dsmc_collide, dsmc_stream,
                      granular_boltzmann_rhs, granular_friction_step, h_functional)
from .partitions import (GradedSequence, SetPartition, bell, cluster_forward, cluster_invert,
                         cumulant_bound_check, delta_identity_check, enumerate_set_partitions,
                         exp_star, ln_star, mobius_weight, reduced_cumulant_coefficients,
                         star_product, stirling2)
from .phase import (BoxSpec, HardSphereSystem, PhasePoint, ScalingPoint, conserved_quantities,
                    is_allowed_configuration, minimum_image_displacement, scaling_sequence)
from .rng import RngStream, derive_stream

__version__ = "0.1.0"
