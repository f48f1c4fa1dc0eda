"""Multi-attribute client selection for over-the-air federated learning."""

from .domain import (
    ClientProfile,
    RoundRecord,
    SelectionHistory,
    SelectionMask,
    SelectionTiming,
    SystemConfig,
    validate_fleet,
)
from .fitness import FitnessContext, FitnessWeights, feasibility, fitness_value
from .gwo import GwoConfig, optimize
from .scenario import GeneratorSpec, ScenarioConfig, generate_scenario, load_scenario, save_scenario
from .fl_sim import DataConfig, TrainerConfig, run_experiment

__version__ = "0.1.0"
