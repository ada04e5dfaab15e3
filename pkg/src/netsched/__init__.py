"""Probabilistic scheduling logics and state-feedback design for control loops sharing a capacity-limited network."""

__version__ = "0.1.0"

from .certify import StabilityCertificate, find_certificate, verify_certificate
from .mjls import expected_cost_exact, iid_stability_test, second_moment_operator
from .model import NcsConfig, PlantModel, check_assumptions, closed_loop_matrix, generate_random_ncs
from .params import Partition, ProbabilityVector, ScheduleParameters
from .scheduler import generate_schedule_exact, generate_schedule_iid, mode_signal
from .search import search_schedule_parameters, search_with_synthesis
from .sim import estimate_stochastic_stability, simulate_ncs, simulate_plant
from .synthesis import synthesize_controllers
