"""Plug-and-play distributed state estimation with guaranteed error sets."""

from .analysis import (CertifiedSum, NecessaryCheck, SmallGainReport,
                       coupling_gain, disturbance_gain, is_schur,
                       lumped_disturbance, necessary_condition, small_gain_report,
                       spectral_radius)
from .bench import MassArrayConfig, build_benchmark, build_extension, discretize_zoh
from .estimator import (DisturbancePolicy, EstimatorNetwork, InputSchedule, Trace,
                        dist_uniform, dist_vertices, dist_zero, input_constant,
                        input_series, input_sine, input_zero)
from .model import (CrossGain, GainSet, ParentData, PlantGraph, Subsystem,
                    assemble_collective, validate_graph, zero_gains)
from .pnp import PnpResult, PnpTransaction, plug_in, unplug
from .rpi import InvarianceReport, RpiSet, mrpi_outer, verify_invariance
from .synthesis import (Infeasible, LseDesign, SynthesisOptions, attenuate_coupling,
                        design_lse, local_gain, search_qr, solve_dare)
from .zonotope import (Zonotope, contains_point, contains_zonotope, from_box,
                       generator_membership, linear_image, minkowski_concat,
                       pseudo_inverse, support)

__version__ = "0.1.0"
