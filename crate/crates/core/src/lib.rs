//! Grid approximation of the probability that CTMC paths are accepted by a
//! multi-clock deterministic timed automaton.
//!
//! Typical use: load a [`Model`] with [`io::parse_model`], wrap it in an
//! [`Analyzer`] and call [`Analyzer::approximate`].

pub mod dynamics;
pub mod graph;
pub mod io;
pub mod mc;
pub mod models;
pub mod rational;
pub mod region;
pub mod scheme;
pub mod solver;

pub use graph::{build_graph, ProductGraph, VertexClass};
pub use models::{Ctmc, Dta, Guard, Model, ModelConstants};
pub use rational::Rational;
pub use region::{Ceilings, ClockValuation, RegionCode};
pub use scheme::{assemble_gamma_double, assemble_gamma_prime, build_grid, Grid, SchemeSystem};
pub use solver::{
    solve, Analyzer, ApproxOptions, Approximation, ErrorReport, Resolution, SolveOptions,
};
