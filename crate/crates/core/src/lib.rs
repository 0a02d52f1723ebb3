//! Two agents track a hidden Markov chain through noisy private channels
//! and decide at every step whether to pay for sharing their observation.
//!
//! The crate provides exact belief filtering and mutual-information
//! rewards ([`model`], [`reward`]), Constrained Grim Trigger strategies on a
//! discretized belief simplex ([`strategy`]), best-response solving
//! ([`solver`]), computation of the maximal cooperation-equilibrium region
//! ([`equilibrium`]) and simulation-based checks ([`sim`]).

pub mod equilibrium;
pub mod error;
pub mod model;
pub mod reward;
pub mod sim;
pub mod solver;
pub mod strategy;

pub use equilibrium::{
    absorbing_box, corollary_dependence_check, is_equilibrium_region, itra, oracle_o,
    AbsorbingReport, EquilibriumCheck, EquilibriumSolver, ItraReport, OracleOutcome,
};
pub use error::{Error, Result};
pub use model::{
    belief_update, bsc, conditional_mutual_information, signal_likelihood, validate_model, Action,
    Agent, Belief, MarkovModel, Signal,
};
pub use reward::{
    cgt_reward, expected_reception_gain, stage_reward, GameParams, InformationReward,
    MutualInformation,
};
pub use sim::{
    deviation_test, estimate_value, finite_horizon_bruteforce, simulate, CgtProfile,
    DeviationReport, TrajectoryRecord, ValueEstimate, Verdict,
};
pub use solver::{
    greedy_region, pomcp_plan, punishment_q, q_values, solve_best_response, BestResponseProblem,
    PomcpConfig, PomcpResult, QValues, ValueTable,
};
pub use strategy::{cgt_action, flag_update, Region, SharingFlag, SimplexGrid};
