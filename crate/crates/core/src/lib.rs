//! Approximate equilibria of atomic splittable polymatroid congestion games.
//!
//! Demands are cut into packets of an exact rational size `k`; an exact
//! equilibrium of the resulting `k`-integral game is computed by incremental
//! packet dynamics, and a continuous best-response check certifies how far
//! any player could still improve. A multimarket Cournot front-end reduces
//! oligopolies to the same solver.

pub mod cli;
pub mod cournot;
pub mod error;
mod flow;
pub mod game;
pub mod instance;

pub mod integral;
pub mod poly;
pub mod rational;
pub mod verify;

pub use error::{Error, Result};
pub use game::{CostFunction, Game, Loads, MarginalDown, Player, Profile};
pub use integral::{
    best_response_k, local_violation, packet_size, solve_approx, solve_integral, EquilibriumResult,
    PacketSchedule,
};
pub use poly::{rho_gcd, Polymatroid, RankOracle};
pub use rational::Rational;
pub use verify::{continuous_best_response, epsilon_gap, GapCertificate, Transshipment};
