"""SIS epidemics on time-varying networks: exact chain, mean field, noise, stability checks."""

__version__ = "0.1.0"

from .chain2n import (ChainOptions, build_generator, integrate_chain, marginals,
                      point_mass_from_bits, state_bits)
from .errors import (InvalidInputError, NumericalFailure, PreconditionError, ScenarioError,
                     SisnetError, SizeCapError)
from .meanfield import VirusParams, aggregate_sis, integrate_mf, mf_rhs, ndfe_complete_analytic
from .netgraph import (ConstantDrift, GraphTrajectory, QuarantinePolicy, ReflectingDrift,
                       apply_quarantine, proximity_weights, static_topology, step_mobility)
from .scenario import Scenario, dump_scenario, parse_scenario
from .stochastic import (GenericNoise, ItoNoise, almost_sure_convergence_check,
                         simulate_generic_noise, simulate_ito)
