"""Capacity optimization for a two-hop MIMO AF relay whose relay node is
powered by power-splitting energy harvesting."""

from .channel import (ChannelPair, EigenSystem, SnrPair, SystemParams,
                      dbm_to_mw, decompose, generate_channel_pair,
                      load_channel_file, snr_pair)
from .errors import (DegenerateBudgetError, DualBracketError,
                     InfeasibleSubproblemError)
from .fixed_q import (FixedQOptions, FixedQProblem, FixedQSolution,
                      build_relay_precoder, dual_root_fixed_q,
                      energy_residual, eps_update_fixed_q, matrix_rate_fixed_q,
                      optimal_x, scalar_rate_fixed_q, solve_fixed_q,
                      x_stationarity_residuals)
from .joint import (JointOptions, JointProblem, JointSolution,
                    build_joint_matrices, d_stationarity_residuals,
                    dual_decomposition_q, dual_root_joint, eps_update_joint,
                    harvest_residual, matrix_rate_joint, optimal_d, optimal_q,
                    power_residual, q_stationarity_residuals,
                    scalar_rate_joint, solve_joint, subproblem_a)
from .oracle import (GridSpec, OracleFixedQResult, OracleJointResult,
                     oracle_fixed_q, oracle_joint)

__version__ = "0.1.0"

__all__ = [
    "ChannelPair", "EigenSystem", "SnrPair", "SystemParams", "dbm_to_mw",
    "decompose", "generate_channel_pair", "load_channel_file", "snr_pair",
    "DegenerateBudgetError", "DualBracketError", "InfeasibleSubproblemError",
    "FixedQOptions", "FixedQProblem", "FixedQSolution", "build_relay_precoder",
    "dual_root_fixed_q", "energy_residual", "eps_update_fixed_q",
    "matrix_rate_fixed_q", "optimal_x", "scalar_rate_fixed_q", "solve_fixed_q",
    "x_stationarity_residuals",
    "JointOptions", "JointProblem", "JointSolution", "build_joint_matrices",
    "d_stationarity_residuals", "dual_decomposition_q", "dual_root_joint",
    "eps_update_joint", "harvest_residual", "matrix_rate_joint", "optimal_d",
    "optimal_q", "power_residual", "q_stationarity_residuals",
    "scalar_rate_joint", "solve_joint", "subproblem_a",
    "GridSpec", "OracleFixedQResult", "OracleJointResult", "oracle_fixed_q",
    "oracle_joint",
    "__version__",
]
