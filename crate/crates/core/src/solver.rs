//! Solving the grid systems, the theoretical error report and the
//! end-to-end approximation workflow.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    build_graph, contraction_constant, ContractionConstant, ProductGraph, VertexClass,
};
use crate::models::{Model, ModelConstants};
use crate::rational::{to_f64, Rational};
use crate::region::ClockValuation;
use crate::scheme::{
    assemble_gamma_prime, build_grid, scaled_error_constants, ErrorConstants, Grid, SchemeSystem,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} sweeps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("system is singular at row {row}; uniqueness is only guaranteed for m > 2|V|^2 = {threshold}")]
    Singular { row: usize, threshold: u64 },
    #[error("initial vector has {got} entries, system has {expected} unknowns")]
    InitialLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    /// Gauss-Seidel sweeps with dense elimination as fallback for small systems.
    Auto,
    Iterative,
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest system for which dense elimination is attempted.
    pub dense_limit: usize,
    pub method: SolveMethod,
    pub initial: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 100_000,
            dense_limit: 2_000,
            method: SolveMethod::Auto,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Raw solver output, not clamped.
    pub values: Vec<f64>,
    /// `max_i |µ_i − (Cµ + d)_i|`.
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

impl Solution {
    /// Report copy clamped to `[0, 1]`.
    pub fn clamped(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.clamp(0.0, 1.0)).collect()
    }
}

/// `max_i |x_i − (Σ_j c_ij x_j + d_i)|`.
pub fn residual(sys: &SchemeSystem, x: &[f64]) -> f64 {
    sys.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let rhs: f64 = row.entries().iter().map(|(j, c)| c * x[*j]).sum::<f64>() + row.constant;
            (x[i] - rhs).abs()
        })
        .fold(0.0, f64::max)
}

fn threshold(sys: &SchemeSystem) -> u64 {
    // recover 2|V|^2 only for the message; the flag itself lives on the system
    if sys.below_threshold {
        sys.m
    } else {
        0
    }
}

/// Solves `µ = Cµ + d` (or `µ = Aµ + b`).
///
/// Sweeps visit unknowns by increasing `N_v`, so on one-clock models every
/// `v ⊕ ρ` value is final before `v` is updated and a single sweep is exact.
pub fn solve(sys: &SchemeSystem, opts: &SolveOptions) -> Result<Solution, SolveError> {
    let n = sys.len();
    if let Some(init) = &opts.initial {
        if init.len() != n {
            return Err(SolveError::InitialLength {
                expected: n,
                got: init.len(),
            });
        }
    }
    if n == 0 {
        return Ok(Solution {
            values: Vec::new(),
            residual: 0.0,
            iterations: 0,
            method: opts.method,
        });
    }
    match opts.method {
        SolveMethod::Direct => solve_dense(sys),
        SolveMethod::Iterative => gauss_seidel(sys, opts),
        SolveMethod::Auto => match gauss_seidel(sys, opts) {
            Err(SolveError::NonConvergence { .. }) if n <= opts.dense_limit => solve_dense(sys),
            other => other,
        },
    }
}

fn gauss_seidel(sys: &SchemeSystem, opts: &SolveOptions) -> Result<Solution, SolveError> {
    let n = sys.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (sys.horizons[i], i));

    // off-diagonal entries and 1 − c_ii per row
    let mut off: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut pivot: Vec<f64> = Vec::with_capacity(n);
    for (i, row) in sys.rows.iter().enumerate() {
        let entries = row.entries();
        let diag: f64 = entries.iter().filter(|(j, _)| *j == i).map(|e| e.1).sum();
        if 1.0 - diag <= 1e-14 {
            return Err(SolveError::Singular {
                row: i,
                threshold: threshold(sys),
            });
        }
        pivot.push(1.0 - diag);
        off.push(entries.into_iter().filter(|(j, _)| *j != i).collect());
    }

    let mut x = opts.initial.clone().unwrap_or_else(|| vec![0.0; n]);
    let mut res = f64::INFINITY;
    for sweep in 1..=opts.max_iter {
        for &i in &order {
            let s: f64 = off[i].iter().map(|(j, c)| c * x[*j]).sum::<f64>() + sys.rows[i].constant;
            x[i] = s / pivot[i];
        }
        res = residual(sys, &x);
        if !res.is_finite() {
            break;
        }
        if res < opts.tol {
            return Ok(Solution {
                values: x,
                residual: res,
                iterations: sweep,
                method: SolveMethod::Iterative,
            });
        }
    }
    Err(SolveError::NonConvergence {
        iterations: opts.max_iter,
        residual: res,
    })
}

/// Gaussian elimination with partial pivoting on `(I − C)µ = d`.
fn solve_dense(sys: &SchemeSystem) -> Result<Solution, SolveError> {
    let n = sys.len();
    let mut a = vec![vec![0.0f64; n + 1]; n];
    for (i, row) in sys.rows.iter().enumerate() {
        a[i][i] = 1.0;
        for (j, c) in row.entries() {
            a[i][j] -= c;
        }
        a[i][n] = row.constant;
    }
    for col in 0..n {
        let p = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))
            .unwrap();
        if a[p][col].abs() < 1e-13 {
            return Err(SolveError::Singular {
                row: col,
                threshold: threshold(sys),
            });
        }
        a.swap(col, p);
        let (head, tail) = a.split_at_mut(col + 1);
        let pivot_row = &head[col];
        for row in tail.iter_mut() {
            let f = row[col] / pivot_row[col];
            if f != 0.0 {
                for k in col..=n {
                    row[k] -= f * pivot_row[k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (a[i][n] - s) / a[i][i];
    }
    let res = residual(sys, &x);
    Ok(Solution {
        values: x,
        residual: res,
        iterations: 1,
        method: SolveMethod::Direct,
    })
}

/// Constants and the theoretical bound `|V|·𝔠^{−|V|}·M3·ρ` for a grid resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub m: u64,
    pub rho: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub contraction: f64,
    pub vertex_count: usize,
    /// `None` when the bound exceeds the f64 range.
    pub theoretical_bound: Option<f64>,
    /// `None` when the bound is exactly zero.
    pub theoretical_bound_log10: Option<f64>,
    pub m_min: u64,
    pub below_threshold: bool,
    /// Heuristic: from comparing the `m` and `2m` solutions.
    pub empirical_estimate: Option<f64>,
}

/// `ln(|V|·𝔠^{−|V|}·M3)`, the bound without the `ρ` factor; `None` if `M3 = 0`.
fn ln_bound_coefficient(
    vertex_count: usize,
    c: &ContractionConstant,
    e: &ErrorConstants,
) -> Option<f64> {
    if e.m3 == 0.0 {
        return None;
    }
    let v = vertex_count as f64;
    Some(v.ln() - v * c.ln_value + e.m3.ln())
}

pub fn error_report(graph: &ProductGraph, k: &ModelConstants, m: u64) -> ErrorReport {
    let c = contraction_constant(graph, k);
    let e = scaled_error_constants(k);
    let v = graph.vertex_count();
    let (bound, log10) = match ln_bound_coefficient(v, &c, &e) {
        None => (Some(0.0), None),
        Some(ln_coef) => {
            let ln_bound = ln_coef - (m as f64).ln();
            let direct = (v as f64) * c.value.powf(-(v as f64)) * e.m3;
            let coef = if direct.is_finite() && c.value > 0.0 {
                // a few ulps up for the rounding of powf and the products
                Some(direct * (1.0 + 8.0 * f64::EPSILON))
            } else {
                None
            };
            (
                coef.map(|k| k / m as f64),
                Some(ln_bound / std::f64::consts::LN_10),
            )
        }
    };
    ErrorReport {
        m,
        rho: 1.0 / m as f64,
        m1: e.m1,
        m2: e.m2,
        m3: e.m3,
        contraction: c.value,
        vertex_count: v,
        theoretical_bound: bound,
        theoretical_bound_log10: log10,
        m_min: c.m_min,
        below_threshold: m < c.m_min,
        empirical_estimate: None,
    }
}

/// A solved grid: every point of `D_m` has a value.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub grid: Grid,
    pub system: SchemeSystem,
    pub solution: Solution,
}

impl GridSolution {
    /// 1 on final points, 0 on dead points, the clamped solution on `B_m`.
    pub fn value(&self, id: usize) -> f64 {
        match self.grid.class(id) {
            VertexClass::Final => 1.0,
            VertexClass::Dead => 0.0,
            VertexClass::Alive => {
                let i = self.grid.unknown_of(id).unwrap();
                self.solution.values[i].clamp(0.0, 1.0)
            }
        }
    }

    pub fn value_at(&self, state: usize, location: usize, eta: &ClockValuation) -> Option<f64> {
        self.grid
            .id_of_valuation(state, location, eta)
            .map(|id| self.value(id))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApproxError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("valuation has {got} clocks, the automaton has {expected}")]
    ClockCount { expected: usize, got: usize },
    #[error("unknown state #{0}")]
    UnknownState(usize),
    #[error("unknown location #{0}")]
    UnknownLocation(usize),
    #[error(
        "the theoretical bound needs m >= {m_required}, beyond the grid budget; \
         force empirical sizing to choose m by the empirical estimate"
    )]
    InfeasibleBound {
        m_required: String,
        log10_m_required: f64,
    },
    #[error("empirical estimate did not reach epsilon {epsilon} within the grid budget (last m = {m}, estimate {estimate:e})")]
    EmpiricalNotReached { epsilon: f64, m: u64, estimate: f64 },
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("grid resolution must be positive")]
    ZeroGrid,
    #[error("initial distribution must be non-negative and sum to 1 (sums to {0})")]
    NotNormalized(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution {
    Grid(u64),
    Epsilon { epsilon: f64, force_empirical: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxOptions {
    pub resolution: Resolution,
    /// Also solve on `2m` to report an empirical error estimate.
    pub empirical: bool,
    /// Upper limit on `|D_m|` when sizing `m` from epsilon.
    pub max_grid_points: usize,
}

impl ApproxOptions {
    pub fn grid(m: u64) -> Self {
        ApproxOptions {
            resolution: Resolution::Grid(m),
            empirical: false,
            max_grid_points: 4_000_000,
        }
    }

    pub fn epsilon(epsilon: f64, force_empirical: bool) -> Self {
        ApproxOptions {
            resolution: Resolution::Epsilon {
                epsilon,
                force_empirical,
            },
            empirical: false,
            max_grid_points: 4_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Approximation {
    pub probability: f64,
    /// True when the answer is exact (final location or dead vertex).
    pub exact: bool,
    pub m: u64,
    pub report: ErrorReport,
    /// Grid point the query was snapped to.
    pub snapped: ClockValuation,
    /// `M1·‖(η ⊕ 0) − snapped‖∞`.
    pub snap_slack: f64,
    /// Theoretical bound plus snap slack; zero when exact, `None` on overflow.
    pub error_bound: Option<f64>,
    pub grid_size: usize,
    pub residual: f64,
    pub iterations: usize,
}

/// A validated model with its product graph; caches grid solutions by `m`.
pub struct Analyzer {
    pub model: Model,
    pub graph: ProductGraph,
    pub constants: ModelConstants,
    solve_options: SolveOptions,
    cache: Mutex<HashMap<u64, Arc<GridSolution>>>,
}

impl Analyzer {
    pub fn new(model: Model) -> Self {
        Self::with_solve_options(model, SolveOptions::default())
    }

    pub fn with_solve_options(model: Model, solve_options: SolveOptions) -> Self {
        let graph = build_graph(&model);
        let constants = model.constants();
        Analyzer {
            model,
            graph,
            constants,
            solve_options,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn grid(&self, m: u64) -> Grid {
        build_grid(&self.model, &self.graph, m)
    }

    pub fn grid_size(&self, m: u64) -> usize {
        let block: usize = self
            .model
            .ceilings()
            .as_slice()
            .iter()
            .map(|t| (m * t + 1) as usize)
            .product();
        block * self.model.ctmc.state_count() * self.model.dta.locations.len()
    }

    pub fn error_report(&self, m: u64) -> ErrorReport {
        error_report(&self.graph, &self.constants, m)
    }

    pub fn contraction(&self) -> ContractionConstant {
        contraction_constant(&self.graph, &self.constants)
    }

    pub fn error_constants(&self) -> ErrorConstants {
        scaled_error_constants(&self.constants)
    }

    /// Builds, assembles and solves `Γ′_m`, reusing earlier solves.
    pub fn solve_grid(&self, m: u64) -> Result<Arc<GridSolution>, SolveError> {
        if let Some(hit) = self.cache.lock().unwrap().get(&m) {
            return Ok(Arc::clone(hit));
        }
        let grid = self.grid(m);
        let system = assemble_gamma_prime(&self.model, &grid);
        let solution = solve(&system, &self.solve_options)?;
        log::debug!(
            "m={m}: {} unknowns, {:?} in {} sweeps, residual {:e}",
            system.len(),
            solution.method,
            solution.iterations,
            solution.residual
        );
        let solved = Arc::new(GridSolution {
            grid,
            system,
            solution,
        });
        self.cache.lock().unwrap().insert(m, Arc::clone(&solved));
        Ok(solved)
    }

    /// Nearest grid point of `η ⊕ 0`, ties toward zero.
    pub fn snap(&self, eta: &ClockValuation, m: u64) -> ClockValuation {
        let ceilings = self.model.ceilings();
        let clamped = eta.clamp_delay(&Rational::zero(), ceilings);
        let scale = Rational::from_integer(m as i128);
        let half = Rational::new(1, 2);
        ClockValuation::new(
            clamped
                .values()
                .iter()
                .map(|v| {
                    let scaled = v * scale;
                    let lower = scaled.floor();
                    let k = if scaled - lower > half {
                        lower + 1
                    } else {
                        lower
                    };
                    k / scale
                })
                .collect(),
        )
    }

    fn check_query(&self, s: usize, q: usize, eta: &ClockValuation) -> Result<(), ApproxError> {
        if s >= self.model.ctmc.state_count() {
            return Err(ApproxError::UnknownState(s));
        }
        if q >= self.model.dta.locations.len() {
            return Err(ApproxError::UnknownLocation(q));
        }
        if eta.len() != self.model.dta.clock_count() {
            return Err(ApproxError::ClockCount {
                expected: self.model.dta.clock_count(),
                got: eta.len(),
            });
        }
        Ok(())
    }

    /// Approximates `prob(s, q, η)` on the grid chosen by `opts`.
    pub fn approximate(
        &self,
        s: usize,
        q: usize,
        eta: &ClockValuation,
        opts: &ApproxOptions,
    ) -> Result<Approximation, ApproxError> {
        self.check_query(s, q, eta)?;
        let exact = if self.model.dta.is_final(q) {
            Some(1.0)
        } else if self.graph.class_of(&self.model, s, q, eta) == VertexClass::Dead {
            Some(0.0)
        } else {
            None
        };
        let m = match (exact, opts.resolution) {
            (_, Resolution::Grid(0)) => return Err(ApproxError::ZeroGrid),
            (_, Resolution::Grid(m)) => m,
            (Some(_), Resolution::Epsilon { .. }) => self.contraction().m_min,
            (
                None,
                Resolution::Epsilon {
                    epsilon,
                    force_empirical,
                },
            ) => {
                self.size_for_epsilon(s, q, eta, epsilon, force_empirical, opts.max_grid_points)?
            }
        };
        let mut report = self.error_report(m);
        let snapped = self.snap(eta, m);

        if let Some(p) = exact {
            return Ok(Approximation {
                probability: p,
                exact: true,
                m,
                report,
                snapped,
                snap_slack: 0.0,
                error_bound: Some(0.0),
                grid_size: self.grid_size(m),
                residual: 0.0,
                iterations: 0,
            });
        }

        let solved = self.solve_grid(m)?;
        let probability = solved
            .value_at(s, q, &snapped)
            .expect("snapped point is on the grid");
        let clamped = eta.clamp_delay(&Rational::zero(), self.model.ceilings());
        let snap_slack = (report.m1 * to_f64(&clamped.max_distance(&snapped)))
            .next_up()
            .max(0.0);
        let snap_slack = if clamped == snapped { 0.0 } else { snap_slack };
        if opts.empirical {
            let finer = self.solve_grid(2 * m)?;
            let p2 = finer
                .value_at(s, q, &snapped)
                .expect("m-grid points lie on the 2m-grid");
            report.empirical_estimate = Some(2.0 * (probability - p2).abs());
        }
        let error_bound = report.theoretical_bound.map(|b| b + snap_slack);
        Ok(Approximation {
            probability,
            exact: false,
            m,
            report,
            snapped,
            snap_slack,
            error_bound,
            grid_size: solved.grid.size(),
            residual: solved.solution.residual,
            iterations: solved.solution.iterations,
        })
    }

    /// Smallest `m` for which the theoretical bound plus snap slack is below
    /// `epsilon`, or, with `force_empirical`, the first doubling of `m` whose
    /// empirical estimate is.
    fn size_for_epsilon(
        &self,
        s: usize,
        q: usize,
        eta: &ClockValuation,
        epsilon: f64,
        force_empirical: bool,
        max_grid_points: usize,
    ) -> Result<u64, ApproxError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(ApproxError::BadEpsilon(epsilon));
        }
        let c = self.contraction();
        let e = self.error_constants();
        let v = self.graph.vertex_count();
        // K/m < ε/2 and M1·ρ/2 < ε/2
        let ln_needed = match ln_bound_coefficient(v, &c, &e) {
            Some(ln_k) => (ln_k + (2.0 / epsilon).ln()).max((e.m1 / epsilon).ln()),
            None => (e.m1 / epsilon).max(1.0).ln(),
        };
        let m_bound = ln_needed.exp().floor() + 1.0;
        let m_required = m_bound.max(c.m_min as f64);
        if m_required.is_finite()
            && m_required < 1e15
            && self.grid_size(m_required as u64) <= max_grid_points
        {
            return Ok(m_required as u64);
        }
        if !force_empirical {
            let log10 = ln_needed.max((c.m_min as f64).ln()) / std::f64::consts::LN_10;
            let shown = if m_required.is_finite() {
                format!("{m_required:.3e}")
            } else {
                format!("1e{log10:.0}")
            };
            return Err(ApproxError::InfeasibleBound {
                m_required: shown,
                log10_m_required: log10,
            });
        }
        let mut m = 8u64;
        let mut last = f64::INFINITY;
        while self.grid_size(2 * m) <= max_grid_points {
            let snapped = self.snap(eta, 2 * m);
            let coarse = self.solve_grid(m)?;
            let fine = self.solve_grid(2 * m)?;
            let a = coarse.value_at(s, q, &self.snap(eta, m)).unwrap();
            let b = fine.value_at(s, q, &snapped).unwrap();
            let clamped = eta.clamp_delay(&Rational::zero(), self.model.ceilings());
            last = (a - b).abs() + e.m1 * to_f64(&clamped.max_distance(&snapped));
            if last < epsilon {
                return Ok(2 * m);
            }
            m *= 2;
        }
        Err(ApproxError::EmpiricalNotReached {
            epsilon,
            m,
            estimate: last,
        })
    }

    /// `Σ_s Θ(s)·prob(s, q, η)`; the bound is the largest per-state bound.
    pub fn prob_from_distribution(
        &self,
        theta: &[Rational],
        q: usize,
        eta: &ClockValuation,
        opts: &ApproxOptions,
    ) -> Result<(f64, Option<f64>), ApproxError> {
        let total: Rational = theta.iter().sum();
        if theta.len() != self.model.ctmc.state_count()
            || theta.iter().any(|p| *p < Rational::zero())
            || total != Rational::from_integer(1)
        {
            return Err(ApproxError::NotNormalized(
                crate::rational::format_rational(&total),
            ));
        }
        let mut value = 0.0;
        let mut bound: Option<f64> = Some(0.0);
        for (s, w) in theta.iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            let a = self.approximate(s, q, eta, opts)?;
            value += to_f64(w) * a.probability;
            bound = match (bound, a.error_bound) {
                (Some(x), Some(y)) => Some(x.max(y)),
                _ => None,
            };
        }
        Ok((value, bound))
    }
}
