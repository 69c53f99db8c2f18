"""Simulation laboratory for the parabolic Anderson model (PAM)
in dynamic random environments.

The lattice PDE  du/dt = kappa * Lap(u) + xi * u  is solved on a finite
torus, with the random potential xi generated by interacting particle
systems or independent Markov chains.  The package also provides the
Feynman-Kac Monte Carlo route, Lyapunov-exponent estimation, space-time
block diagnostics and level-set percolation analysis.
"""

from pamlab.lattice import LatticeTorus, FieldSnapshot, laplacian_apply, neighbors
from pamlab.environments import EnvModelSpec, EnvTrace, sample_env
from pamlab.solver import SolverConfig, SolutionTrace, solve_pam, compare_solutions
from pamlab.feynman_kac import WalkPath, MCEstimate, sample_walk, path_functional, fk_estimate, fk_forward_estimate
from pamlab.lyapunov import LyapunovPoint, quenched_estimate, annealed_estimate, kappa_sweep, volatility_statistic
from pamlab.percolation import ComponentReport, level_set_components, percolation_profile
from pamlab.blocks import (
    BlockSpec, BlockId, JumpPathFamily, RegularityFamily,
    classify_block, count_bad_blocks, xi_psi_for_path, sup_xi_psi,
    mixing_event_frequency, tail_condition_check, classify_sufficient,
    regularity_statistic,
)

__version__ = "0.1.0"
