"""Pilot-wave dynamics in boxes: equilibrium relaxation, entangled-pair
signalling, and frozen non-equilibrium residues.

The package is organized as wavefunctions (``states``), trajectory
integration (``trajectories``), ensemble and density machinery
(``ensembles``), the three packaged numerical experiments
(``experiments``), and file output plus the command-line front end
(``reporting``, ``cli``).
"""

from .states import (BoxGeometry, EntangledState, ExpandingBoxState,
                     ModeSuperposition, ModeSuperposition2D, WaveEvaluation,
                     born_density, eval_state, mode_energy, velocity,
                     wall_expansion_coefficients)
from .trajectories import (IntegratorConfig, TrajectoryPath, backtrack,
                           integrate)

__version__ = "0.1.0"

__all__ = [
    "BoxGeometry", "EntangledState", "ExpandingBoxState", "ModeSuperposition",
    "ModeSuperposition2D", "WaveEvaluation", "born_density", "eval_state",
    "mode_energy", "velocity", "wall_expansion_coefficients",
    "IntegratorConfig", "TrajectoryPath", "backtrack", "integrate",
    "__version__",
]
