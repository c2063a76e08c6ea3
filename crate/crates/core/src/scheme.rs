//! The `m`-grid over `∏_x [0, T_x]` and assembly of the finite-difference
//! systems `µ = Cµ + d` (one row per alive non-final grid point, forward
//! difference along the diagonal) and its unfolded form `µ = Aµ + b`.

use std::collections::BTreeMap;

use num_traits::One;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::select_rule;
use crate::graph::{ProductGraph, VertexClass};
use crate::models::{Model, ModelConstants};
use crate::rational::{to_f64, Rational};
use crate::region::{plus_representative, Ceilings, ClockValuation};

/// A grid point: CTMC state, DTA location and the valuation `ticks / m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridPoint {
    pub state: usize,
    pub location: usize,
    pub ticks: Vec<u64>,
}

impl GridPoint {
    pub fn valuation(&self, m: u64) -> ClockValuation {
        ClockValuation::new(
            self.ticks
                .iter()
                .map(|&k| Rational::new(k as i128, m as i128))
                .collect(),
        )
    }
}

/// `D_m` with the classification of every point and the unknown set `B_m`.
#[derive(Debug, Clone)]
pub struct Grid {
    pub m: u64,
    ceilings: Ceilings,
    /// `m·T_x + 1` per clock; clock 0 is the most significant digit.
    radix: Vec<u64>,
    block: usize,
    locations: usize,
    classes: Vec<VertexClass>,
    unknown_of: Vec<Option<usize>>,
    unknowns: Vec<usize>,
    horizons: Vec<u64>,
    vertex_count: usize,
}

impl Grid {
    /// `|D_m|`.
    pub fn size(&self) -> usize {
        self.classes.len()
    }

    pub fn ceilings(&self) -> &Ceilings {
        &self.ceilings
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn point(&self, id: usize) -> GridPoint {
        let mut rest = id % self.block;
        let sq = id / self.block;
        let mut ticks = vec![0u64; self.radix.len()];
        for x in (0..self.radix.len()).rev() {
            ticks[x] = (rest as u64) % self.radix[x];
            rest /= self.radix[x] as usize;
        }
        GridPoint {
            state: sq / self.locations,
            location: sq % self.locations,
            ticks,
        }
    }

    pub fn id_of(&self, state: usize, location: usize, ticks: &[u64]) -> usize {
        let mut lin = 0usize;
        for (x, &k) in ticks.iter().enumerate() {
            debug_assert!(k < self.radix[x]);
            lin = lin * self.radix[x] as usize + k as usize;
        }
        (state * self.locations + location) * self.block + lin
    }

    /// Grid id of an on-grid valuation, or `None` when some value is off the grid or outside the box.
    pub fn id_of_valuation(
        &self,
        state: usize,
        location: usize,
        eta: &ClockValuation,
    ) -> Option<usize> {
        let m = Rational::from_integer(self.m as i128);
        let mut ticks = Vec::with_capacity(eta.len());
        for (x, v) in eta.values().iter().enumerate() {
            let scaled = v * m;
            if !scaled.is_integer()
                || scaled.to_integer() < 0
                || scaled.to_integer() as u64 >= self.radix[x]
            {
                return None;
            }
            ticks.push(scaled.to_integer() as u64);
        }
        Some(self.id_of(state, location, &ticks))
    }

    pub fn valuation(&self, id: usize) -> ClockValuation {
        self.point(id).valuation(self.m)
    }

    pub fn class(&self, id: usize) -> VertexClass {
        self.classes[id]
    }

    /// Grid points of `B_m`, in id order (state, location, lexicographic valuation).
    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    pub fn unknown_of(&self, id: usize) -> Option<usize> {
        self.unknown_of[id]
    }

    /// Whether every clock sits at its ceiling.
    pub fn is_at_max(&self, id: usize) -> bool {
        let p = self.point(id);
        p.ticks.iter().zip(&self.radix).all(|(k, r)| *k + 1 == *r)
    }

    /// Whether the point belongs to `B_m^max`.
    pub fn is_boundary_max(&self, id: usize) -> bool {
        self.unknown_of[id].is_some() && self.is_at_max(id)
    }

    /// `v ⊕ ρ`.
    pub fn delay_step(&self, id: usize) -> usize {
        let p = self.point(id);
        let ticks: Vec<u64> = p
            .ticks
            .iter()
            .zip(&self.radix)
            .map(|(k, r)| (*k + 1).min(r - 1))
            .collect();
        self.id_of(p.state, p.location, &ticks)
    }

    /// `N_v` for a point of `B_m`; zero for points outside it.
    pub fn horizon(&self, id: usize) -> u64 {
        self.horizons[id]
    }

    /// `v⁺_u` for every `u` with `P(s, u) > 0`: the rule is chosen at `η⁺`
    /// but its reset is applied to `η`, so the target stays on the grid.
    pub fn jump_successors(&self, model: &Model, id: usize) -> Vec<(usize, Rational, usize)> {
        let p = self.point(id);
        let eta = p.valuation(self.m);
        let eta_plus = plus_representative(&eta, &self.ceilings);
        let rule = select_rule(
            &model.dta,
            p.location,
            model.signature_of_state(p.state),
            &eta_plus,
        )
        .expect("validated DTA is deterministic and total");
        let mut ticks = p.ticks.clone();
        for &x in &rule.resets {
            ticks[x] = 0;
        }
        model
            .ctmc
            .successors(p.state)
            .map(|(u, prob)| (u, *prob, self.id_of(u, rule.to, &ticks)))
            .collect()
    }
}

/// Builds `D_m`, classifies each point through its region vertex and
/// computes `B_m`, `B_m^max` and the horizons `N_v`.
pub fn build_grid(model: &Model, graph: &ProductGraph, m: u64) -> Grid {
    assert!(m >= 1, "grid resolution must be positive");
    let ceilings = model.ceilings().clone();
    let radix: Vec<u64> = ceilings.as_slice().iter().map(|t| m * t + 1).collect();
    let block: usize = radix.iter().map(|r| *r as usize).product();
    let (n_s, n_q) = (model.ctmc.state_count(), model.dta.locations.len());
    let size = n_s * n_q * block;

    let mut grid = Grid {
        m,
        ceilings,
        radix,
        block,
        locations: n_q,
        classes: Vec::new(),
        unknown_of: vec![None; size],
        unknowns: Vec::new(),
        horizons: vec![0; size],
        vertex_count: graph.vertex_count(),
    };
    grid.classes = (0..size)
        .into_par_iter()
        .map(|id| {
            let p = grid.point(id);
            graph.class_of(model, p.state, p.location, &p.valuation(m))
        })
        .collect();
    for id in 0..size {
        if grid.classes[id] == VertexClass::Alive {
            grid.unknown_of[id] = Some(grid.unknowns.len());
            grid.unknowns.push(id);
        }
    }
    // v ⊕ ρ has a larger id unless v is at the maximum, so a descending pass sees successors first.
    for id in (0..size).rev() {
        if grid.classes[id] != VertexClass::Alive || grid.is_at_max(id) {
            continue;
        }
        let next = grid.delay_step(id);
        grid.horizons[id] = match grid.classes[next] {
            VertexClass::Dead => 1,
            _ if grid.is_at_max(next) => 1,
            _ => 1 + grid.horizons[next],
        };
    }
    grid
}

/// Forward scan for `N_v`, independent of the cached horizons.
pub fn horizon(grid: &Grid, id: usize) -> u64 {
    let mut cur = id;
    let mut n = 0;
    while !(grid.is_boundary_max(cur) || grid.class(cur) == VertexClass::Dead) {
        cur = grid.delay_step(cur);
        n += 1;
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeKind {
    /// `µ = Cµ + d`
    Prime,
    /// `µ = Aµ + b`
    Unfolded,
}

/// One row: `µ_i = delay + Σ jumps + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemeRow {
    /// Coefficient on the unknown at `v ⊕ ρ`, when that point is in `B_m`.
    pub delay: Option<(usize, f64)>,
    /// Coefficients on unknowns reached by jumps, one entry per column.
    pub jumps: Vec<(usize, f64)>,
    /// Contribution of final (value 1) points.
    pub constant: f64,
}

impl SchemeRow {
    /// All `(column, coefficient)` pairs with duplicate columns merged.
    pub fn entries(&self) -> Vec<(usize, f64)> {
        let mut out = self.jumps.clone();
        if let Some((c, a)) = self.delay {
            match out.iter_mut().find(|(col, _)| *col == c) {
                Some(e) => e.1 += a,
                None => out.push((c, a)),
            }
        }
        out
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.jumps.iter().map(|e| e.1).sum::<f64>() + self.delay.map_or(0.0, |d| d.1)
    }
}

#[derive(Debug, Clone)]
pub struct SchemeSystem {
    pub kind: SchemeKind,
    pub m: u64,
    pub rho: f64,
    pub rows: Vec<SchemeRow>,
    /// `N_v` per unknown.
    pub horizons: Vec<u64>,
    /// Whether the unknown lies in `B_m^max`.
    pub boundary_max: Vec<bool>,
    /// `m ≤ 2|V|²`: uniqueness of the solution is not guaranteed.
    pub below_threshold: bool,
}

impl SchemeSystem {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn push_jump(row: &mut SchemeRow, grid: &Grid, target: usize, coef: f64) {
    match grid.class(target) {
        VertexClass::Final => row.constant += coef,
        VertexClass::Dead => {}
        VertexClass::Alive => {
            let col = grid.unknown_of(target).expect("alive point is an unknown");
            match row.jumps.iter_mut().find(|(c, _)| *c == col) {
                Some(e) => e.1 += coef,
                None => row.jumps.push((col, coef)),
            }
        }
    }
}

fn threshold_flag(grid: &Grid) -> bool {
    let v = grid.vertex_count() as u64;
    grid.m <= 2 * v * v
}

/// Assembles `µ = Cµ + d`: for `v ∉ B_m^max`
/// `h[v] = 1/(1+ρλ)·h[v⊕ρ] + ρλ/(1+ρλ)·Σ_u P(s,u)·h[v⁺_u]`,
/// and `h[v] = Σ_u P(s,u)·h[v⁺_u]` on `B_m^max`.
pub fn assemble_gamma_prime(model: &Model, grid: &Grid) -> SchemeSystem {
    let m = Rational::from_integer(grid.m as i128);
    let rows: Vec<SchemeRow> = grid
        .unknowns()
        .par_iter()
        .map(|&id| {
            let p = grid.point(id);
            let lambda = model.ctmc.exit_rates[p.state];
            let mut row = SchemeRow::default();
            let jump_scale = if grid.is_at_max(id) {
                Rational::one()
            } else {
                // 1/(1+ρλ) = m/(m+λ), ρλ/(1+ρλ) = λ/(m+λ)
                let stay = m / (m + lambda);
                let next = grid.delay_step(id);
                match grid.class(next) {
                    VertexClass::Alive => {
                        row.delay = Some((grid.unknown_of(next).unwrap(), to_f64(&stay)))
                    }
                    VertexClass::Final => row.constant += to_f64(&stay),
                    VertexClass::Dead => {}
                }
                lambda / (m + lambda)
            };
            for (_, prob, target) in grid.jump_successors(model, id) {
                push_jump(&mut row, grid, target, to_f64(&(jump_scale * prob)));
            }
            row
        })
        .collect();
    let horizons = grid.unknowns().iter().map(|&id| grid.horizon(id)).collect();
    let boundary_max = grid
        .unknowns()
        .iter()
        .map(|&id| grid.is_at_max(id))
        .collect();
    SchemeSystem {
        kind: SchemeKind::Prime,
        m: grid.m,
        rho: 1.0 / grid.m as f64,
        rows,
        horizons,
        boundary_max,
        below_threshold: threshold_flag(grid),
    }
}

/// Assembles `µ = Aµ + b` by unfolding each `C` row along its `v ⊕ ρ`
/// chain until the chain reaches `B_m^max` (whose row supplies the tail
/// `f(v)`) or a dead point (tail 0).
pub fn assemble_gamma_double(model: &Model, grid: &Grid) -> SchemeSystem {
    unfold(&assemble_gamma_prime(model, grid))
}

pub fn unfold(prime: &SchemeSystem) -> SchemeSystem {
    assert_eq!(prime.kind, SchemeKind::Prime);
    let rows: Vec<SchemeRow> = (0..prime.len())
        .into_par_iter()
        .map(|i| {
            if prime.boundary_max[i] {
                return prime.rows[i].clone();
            }
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            let mut constant = 0.0;
            let mut weight = 1.0;
            let mut cur = i;
            loop {
                let row = &prime.rows[cur];
                for &(c, a) in &row.jumps {
                    *acc.entry(c).or_insert(0.0) += weight * a;
                }
                constant += weight * row.constant;
                match row.delay {
                    Some((next, a)) => {
                        weight *= a;
                        cur = next;
                    }
                    None => break,
                }
            }
            SchemeRow {
                delay: None,
                jumps: acc.into_iter().collect(),
                constant,
            }
        })
        .collect();
    SchemeSystem {
        kind: SchemeKind::Unfolded,
        rows,
        ..prime.clone()
    }
}

/// `M1 = |X|·λmax·Tmax·e^{λmax·Tmax}`, `M2 = 2λmax·M1`, `M3 = Tmax·M2`,
/// each rounded up by one ulp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorConstants {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

pub fn scaled_error_constants(k: &ModelConstants) -> ErrorConstants {
    let lambda_max = to_f64(&k.lambda_max);
    let t_max = k.t_max as f64;
    let m1 = (k.clock_count as f64 * lambda_max * t_max * (lambda_max * t_max).exp()).next_up();
    let m2 = (2.0 * lambda_max * m1).next_up();
    let m3 = (t_max * m2).next_up();
    let fix = |x: f64| if x == f64::from_bits(1) { 0.0 } else { x };
    // next_up(0) is the smallest subnormal; keep exact zeros exact
    ErrorConstants {
        m1: fix(m1),
        m2: fix(m2),
        m3: fix(m3),
    }
}
