from .base import Box, DomainError, ProcessEnv, StepResult, load_env_config, make_env
from .cstr import CstrEnv, CstrParams, cstr_dynamics, solve_cstr_operating_point
from .extraction import (
    ExtractionEnv,
    ExtractionParams,
    extraction_dynamics,
    solve_extraction_steady_state,
)
from .fourtank import FourTankEnv, FourTankParams, fourtank_dynamics, solve_fourtank_operating_point
from .linear import LinearEnv, LinearParams

__all__ = [
    "Box", "DomainError", "ProcessEnv", "StepResult", "load_env_config", "make_env",
    "CstrEnv", "CstrParams", "cstr_dynamics", "solve_cstr_operating_point",
    "ExtractionEnv", "ExtractionParams", "extraction_dynamics", "solve_extraction_steady_state",
    "FourTankEnv", "FourTankParams", "fourtank_dynamics", "solve_fourtank_operating_point",
    "LinearEnv", "LinearParams",
]
