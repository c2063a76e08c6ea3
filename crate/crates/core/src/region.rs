//! Clock valuations and the region algebra over them.
//!
//! Valuations are exact rational vectors indexed by the automaton's clock
//! order. A region (an equivalence class of `~`) is identified by its
//! [`RegionCode`]: per clock either "above the ceiling" or the integral part
//! plus a zero-fraction flag, together with the weak order of the non-zero
//! fractional parts of the clocks that are still at or below their ceiling.

use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{Guard, Relation};
use crate::rational::{format_rational, frac_part, int_part, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegionError {
    #[error("guard refers to clock #{clock} but the valuation has {clocks} clocks")]
    UnknownClock { clock: usize, clocks: usize },
    #[error("backtracking requires every clock to be positive, got {0}")]
    NotPositive(ClockValuation),
    #[error("negative delay {0}")]
    NegativeDelay(String),
}

/// Largest guard constant `T_x` per clock.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ceilings(Vec<u64>);

impl Ceilings {
    pub fn new(values: Vec<u64>) -> Self {
        Ceilings(values)
    }

    pub fn get(&self, clock: usize) -> u64 {
        self.0[clock]
    }

    pub fn as_rational(&self, clock: usize) -> Rational {
        Rational::from_integer(self.0[clock] as i128)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    /// `T_max`; zero for a clockless automaton.
    pub fn t_max(&self) -> u64 {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

/// A clock valuation: one non-negative rational per clock.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClockValuation(Vec<Rational>);

impl ClockValuation {
    /// Panics if some entry is negative.
    pub fn new(values: Vec<Rational>) -> Self {
        assert!(
            values.iter().all(|v| *v >= Rational::zero()),
            "clock values must be non-negative"
        );
        ClockValuation(values)
    }

    pub fn zeros(clocks: usize) -> Self {
        ClockValuation(vec![Rational::zero(); clocks])
    }

    pub fn from_ratios(values: &[(i128, i128)]) -> Self {
        Self::new(values.iter().map(|&(n, d)| Rational::new(n, d)).collect())
    }

    pub fn get(&self, clock: usize) -> &Rational {
        &self.0[clock]
    }

    pub fn values(&self) -> &[Rational] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `η + t`.
    pub fn delay(&self, t: &Rational) -> ClockValuation {
        debug_assert!(*t >= Rational::zero());
        ClockValuation(self.0.iter().map(|v| v + t).collect())
    }

    /// `η - t`, defined only when every clock is at least `t`.
    pub fn backtrack(&self, t: &Rational) -> Option<ClockValuation> {
        if self.0.iter().any(|v| v < t) {
            return None;
        }
        Some(ClockValuation(self.0.iter().map(|v| v - t).collect()))
    }

    /// `η[X := 0]`.
    pub fn reset(&self, clocks: &[usize]) -> ClockValuation {
        let mut values = self.0.clone();
        for &x in clocks {
            values[x] = Rational::zero();
        }
        ClockValuation(values)
    }

    /// `η ⊕ t`: delay clamped per clock at its ceiling.
    pub fn clamp_delay(&self, t: &Rational, ceilings: &Ceilings) -> ClockValuation {
        ClockValuation(
            self.0
                .iter()
                .enumerate()
                .map(|(x, v)| (v + t).min(ceilings.as_rational(x)))
                .collect(),
        )
    }

    /// Replaces every above-ceiling value with `T_x + 1`; the result is
    /// bound-equivalent to `self`.
    pub fn normalize_above(&self, ceilings: &Ceilings) -> ClockValuation {
        ClockValuation(
            self.0
                .iter()
                .enumerate()
                .map(|(x, v)| {
                    let t = ceilings.as_rational(x);
                    if *v > t {
                        t + Rational::one()
                    } else {
                        *v
                    }
                })
                .collect(),
        )
    }

    /// `‖η − η′‖∞`.
    pub fn max_distance(&self, other: &ClockValuation) -> Rational {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| if a > b { a - b } else { b - a })
            .max()
            .unwrap_or_else(Rational::zero)
    }

    pub fn display_with(&self, names: &[String]) -> String {
        self.0
            .iter()
            .zip(names)
            .map(|(v, n)| format!("{n}={}", format_rational(v)))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for ClockValuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<_> = self.0.iter().map(format_rational).collect();
        write!(f, "({})", parts.join(", "))
    }
}

pub fn delay(eta: &ClockValuation, t: &Rational) -> Result<ClockValuation, RegionError> {
    if *t < Rational::zero() {
        return Err(RegionError::NegativeDelay(format_rational(t)));
    }
    Ok(eta.delay(t))
}

pub fn reset(eta: &ClockValuation, clocks: &[usize]) -> ClockValuation {
    eta.reset(clocks)
}

pub fn clamp_delay(
    eta: &ClockValuation,
    t: &Rational,
    ceilings: &Ceilings,
) -> Result<ClockValuation, RegionError> {
    if *t < Rational::zero() {
        return Err(RegionError::NegativeDelay(format_rational(t)));
    }
    Ok(eta.clamp_delay(t, ceilings))
}

/// Exact `η ⊨ g`, rejecting guards over clocks the valuation does not have.
pub fn guard_sat(eta: &ClockValuation, guard: &Guard) -> Result<bool, RegionError> {
    for c in guard.conjuncts() {
        if c.clock >= eta.len() {
            return Err(RegionError::UnknownClock {
                clock: c.clock,
                clocks: eta.len(),
            });
        }
    }
    Ok(guard.is_satisfied_by(eta))
}

pub(crate) fn relation_holds(value: &Rational, rel: Relation, bound: u64) -> bool {
    let c = Rational::from_integer(bound as i128);
    match rel {
        Relation::Lt => *value < c,
        Relation::Le => *value <= c,
        Relation::Gt => *value > c,
        Relation::Ge => *value >= c,
    }
}

/// Per-clock component of a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClockRegion {
    /// `η(x) > T_x`.
    Above,
    /// `η(x) ≤ T_x` with the given integral part and whether the fraction is zero.
    Within { int: u64, zero_frac: bool },
}

/// Canonical code of a region `[η]~`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionCode {
    pub clocks: Vec<ClockRegion>,
    /// Ordered partition of the clocks with `η(x) ≤ T_x` and non-zero
    /// fraction, by increasing fractional part. Blocks hold tied clocks in
    /// index order.
    pub frac_order: Vec<Vec<usize>>,
}

impl RegionCode {
    pub fn is_marginal(&self) -> bool {
        is_marginal(self)
    }

    pub fn all_above(&self) -> bool {
        self.clocks.iter().all(|c| matches!(c, ClockRegion::Above))
    }
}

impl fmt::Display for RegionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .clocks
            .iter()
            .map(|c| match c {
                ClockRegion::Above => ">T".to_string(),
                ClockRegion::Within {
                    int,
                    zero_frac: true,
                } => format!("{int}"),
                ClockRegion::Within {
                    int,
                    zero_frac: false,
                } => format!("({int},{})", int + 1),
            })
            .collect();
        write!(f, "[{}]", parts.join(","))?;
        if !self.frac_order.is_empty() {
            let blocks: Vec<String> = self
                .frac_order
                .iter()
                .map(|b| {
                    b.iter()
                        .map(|x| format!("x{x}"))
                        .collect::<Vec<_>>()
                        .join("=")
                })
                .collect();
            write!(f, "{{{}}}", blocks.join("<"))?;
        }
        Ok(())
    }
}

pub fn region_of(eta: &ClockValuation, ceilings: &Ceilings) -> RegionCode {
    let mut clocks = Vec::with_capacity(eta.len());
    let mut fractional: Vec<(Rational, usize)> = Vec::new();
    for (x, v) in eta.values().iter().enumerate() {
        if *v > ceilings.as_rational(x) {
            clocks.push(ClockRegion::Above);
            continue;
        }
        let f = frac_part(v);
        let zero_frac = f.is_zero();
        clocks.push(ClockRegion::Within {
            int: int_part(v) as u64,
            zero_frac,
        });
        if !zero_frac {
            fractional.push((f, x));
        }
    }
    fractional.sort();
    let mut frac_order: Vec<Vec<usize>> = Vec::new();
    let mut last: Option<Rational> = None;
    for (f, x) in fractional {
        match (&last, frac_order.last_mut()) {
            (Some(prev), Some(block)) if *prev == f => block.push(x),
            _ => frac_order.push(vec![x]),
        }
        last = Some(f);
    }
    RegionCode { clocks, frac_order }
}

/// The definitional predicate `η ~ η′`, evaluated clause by clause.
pub fn region_equivalent(a: &ClockValuation, b: &ClockValuation, ceilings: &Ceilings) -> bool {
    if !equiv_g(a, b, ceilings) {
        return false;
    }
    let n = a.len();
    let within = |x: usize| {
        let t = ceilings.as_rational(x);
        *a.get(x) <= t && *b.get(x) <= t
    };
    for x in 0..n {
        for y in 0..n {
            if !(within(x) && within(y)) {
                continue;
            }
            let oa = frac_part(a.get(x)).cmp(&frac_part(a.get(y)));
            let ob = frac_part(b.get(x)).cmp(&frac_part(b.get(y)));
            if oa != ob {
                return false;
            }
        }
    }
    true
}

/// Guard equivalence `η ≡g η′`.
pub fn equiv_g(a: &ClockValuation, b: &ClockValuation, ceilings: &Ceilings) -> bool {
    (0..a.len()).all(|x| {
        let t = ceilings.as_rational(x);
        let (va, vb) = (a.get(x), b.get(x));
        if (*va > t) != (*vb > t) {
            return false;
        }
        if *va <= t && *vb <= t {
            int_part(va) == int_part(vb) && frac_part(va).is_zero() == frac_part(vb).is_zero()
        } else {
            true
        }
    })
}

/// Bound equivalence `η ≡b η′`.
pub fn equiv_b(a: &ClockValuation, b: &ClockValuation, ceilings: &Ceilings) -> bool {
    (0..a.len()).all(|x| {
        let t = ceilings.as_rational(x);
        (*a.get(x) > t && *b.get(x) > t) || a.get(x) == b.get(x)
    })
}

/// A region is marginal when some clock at or below its ceiling has zero fraction.
pub fn is_marginal(region: &RegionCode) -> bool {
    region.clocks.iter().any(|c| {
        matches!(
            c,
            ClockRegion::Within {
                zero_frac: true,
                ..
            }
        )
    })
}

/// `ℛ_η = {0, 1} ∪ {frac(η(x)) | η(x) ≤ T_x}`, sorted ascending.
pub fn frac_set(eta: &ClockValuation, ceilings: &Ceilings) -> Vec<Rational> {
    let mut set = vec![Rational::zero(), Rational::one()];
    for (x, v) in eta.values().iter().enumerate() {
        if *v <= ceilings.as_rational(x) {
            set.push(frac_part(v));
        }
    }
    set.sort();
    set.dedup();
    set
}

/// Length `t1` of the open interval `(0, t1)` over which `[η + t]~` is constant.
/// All-above valuations have no upper limit; 1 is used.
pub fn right_stable_length(eta: &ClockValuation, ceilings: &Ceilings) -> Rational {
    let c1 = eta
        .values()
        .iter()
        .enumerate()
        .filter(|(x, v)| **v <= ceilings.as_rational(*x))
        .map(|(_, v)| frac_part(v))
        .max();
    match c1 {
        Some(c1) => Rational::one() - c1,
        None => Rational::one(),
    }
}

/// `η⁺ = η + t1/2`.
pub fn plus_representative(eta: &ClockValuation, ceilings: &Ceilings) -> ClockValuation {
    let t1 = right_stable_length(eta, ceilings);
    eta.delay(&(t1 / Rational::from_integer(2)))
}

/// Length `t2` of the open interval `(0, t2)` over which `[η − t]~` is constant.
pub fn left_stable_length(
    eta: &ClockValuation,
    ceilings: &Ceilings,
) -> Result<Rational, RegionError> {
    if eta.values().iter().any(|v| v.is_zero()) {
        return Err(RegionError::NotPositive(eta.clone()));
    }
    let mut above_gaps: Vec<Rational> = Vec::new();
    let mut fracs: Vec<Rational> = Vec::new();
    for (x, v) in eta.values().iter().enumerate() {
        let t = ceilings.as_rational(x);
        if *v > t {
            above_gaps.push(v - t);
        } else {
            fracs.push(frac_part(v));
        }
    }
    let min_gap = above_gaps.iter().min().copied();
    let with_gap = |candidate: Rational| match min_gap {
        Some(g) => candidate.min(g),
        None => candidate,
    };
    if fracs.is_empty() {
        return Ok(min_gap.expect("at least one clock"));
    }
    fracs.sort();
    fracs.dedup();
    let c2 = fracs[0];
    if !c2.is_zero() {
        return Ok(with_gap(c2));
    }
    match fracs.get(1) {
        None => Ok(with_gap(Rational::one())),
        Some(second) => Ok(with_gap(*second)),
    }
}

/// `η⁻ = η − t2/2`; requires every clock to be positive.
pub fn minus_representative(
    eta: &ClockValuation,
    ceilings: &Ceilings,
) -> Result<ClockValuation, RegionError> {
    let t2 = left_stable_length(eta, ceilings)?;
    Ok(eta
        .backtrack(&(t2 / Rational::from_integer(2)))
        .expect("t2/2 is below every clock value"))
}

/// Delay representatives, one per interval of the cluster induced by `ℛ_η`,
/// in increasing order. Midpoints of the bounded intervals, then
/// `T_max + 1/2` for the unbounded one.
pub fn delay_representatives(eta: &ClockValuation, ceilings: &Ceilings) -> Vec<Rational> {
    let fracs = frac_set(eta, ceilings);
    let two = Rational::from_integer(2);
    let mut out = Vec::new();
    for n in 0..ceilings.t_max() {
        let base = Rational::from_integer(n as i128 + 1);
        // `w` descending: boundaries n+1-w ascending
        for pair in fracs.windows(2).rev() {
            let (lo, hi) = (base - pair[1], base - pair[0]);
            out.push((lo + hi) / two);
        }
    }
    out.push(Rational::from_integer(ceilings.t_max() as i128) + Rational::new(1, 2));
    out
}

/// Every region for the given ceilings, each with one representative valuation.
pub fn enumerate_regions(ceilings: &Ceilings) -> Vec<(RegionCode, ClockValuation)> {
    #[derive(Clone, Copy)]
    enum Kind {
        Above,
        Integer(u64),
        Open(u64),
    }
    let n = ceilings.len();
    let mut per_clock: Vec<Vec<Kind>> = Vec::with_capacity(n);
    for x in 0..n {
        let t = ceilings.get(x);
        let mut kinds = Vec::new();
        for k in 0..=t {
            kinds.push(Kind::Integer(k));
            if k < t {
                kinds.push(Kind::Open(k));
            }
        }
        kinds.push(Kind::Above);
        per_clock.push(kinds);
    }

    let mut out = Vec::new();
    let mut choice = vec![0usize; n];
    loop {
        let kinds: Vec<Kind> = (0..n).map(|x| per_clock[x][choice[x]]).collect();
        let open: Vec<usize> = (0..n)
            .filter(|&x| matches!(kinds[x], Kind::Open(_)))
            .collect();
        for ranks in ordered_partitions(open.len()) {
            let blocks = ranks.iter().copied().max().map_or(0, |m| m + 1);
            let values: Vec<Rational> = (0..n)
                .map(|x| match kinds[x] {
                    Kind::Above => ceilings.as_rational(x) + Rational::one(),
                    Kind::Integer(k) => Rational::from_integer(k as i128),
                    Kind::Open(k) => {
                        let pos = open.iter().position(|&y| y == x).unwrap();
                        Rational::from_integer(k as i128)
                            + Rational::new(ranks[pos] as i128 + 1, blocks as i128 + 1)
                    }
                })
                .collect();
            let eta = ClockValuation::new(values);
            out.push((region_of(&eta, ceilings), eta));
        }
        // advance the mixed-radix counter
        let mut x = 0;
        loop {
            if x == n {
                return out;
            }
            choice[x] += 1;
            if choice[x] < per_clock[x].len() {
                break;
            }
            choice[x] = 0;
            x += 1;
        }
    }
}

/// All surjections `{0..k} → {0..p}` for some `p`, i.e. ordered set partitions
/// written as rank vectors.
fn ordered_partitions(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut ranks = vec![0usize; k];
    loop {
        let max = *ranks.iter().max().unwrap();
        if (0..=max).all(|r| ranks.contains(&r)) {
            out.push(ranks.clone());
        }
        let mut i = 0;
        loop {
            if i == k {
                return out;
            }
            ranks[i] += 1;
            if ranks[i] < k {
                break;
            }
            ranks[i] = 0;
            i += 1;
        }
    }
}
