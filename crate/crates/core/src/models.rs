//! CTMC and DTA model types, their structural validation and the derived
//! model constants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{format_rational, Rational};
use crate::region::{enumerate_regions, relation_holds, Ceilings, ClockValuation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("transition matrix must be {n}x{n}, row {row} has {len} entries")]
    MatrixShape { n: usize, row: usize, len: usize },
    #[error("expected {expected} {what}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("state {state} has unknown label #{label}")]
    UnknownLabel { state: String, label: usize },
    #[error("rule {rule} references unknown {what} #{index}")]
    RuleIndex {
        rule: usize,
        what: &'static str,
        index: usize,
    },
    #[error("DTA alphabet {alphabet:?} differs from CTMC label set {labels:?}")]
    AlphabetMismatch {
        alphabet: Vec<String>,
        labels: Vec<String>,
    },
    #[error("duplicate {what} name {name:?}")]
    DuplicateName { what: &'static str, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Ge => ">=",
        }
    }
}

/// Single-clock constraint `x ⋈ c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Constraint {
    pub clock: usize,
    pub rel: Relation,
    pub bound: u64,
}

/// Conjunction of single-clock constraints; the empty guard is `true`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Guard {
    conjuncts: Vec<Constraint>,
}

impl Guard {
    pub fn new(conjuncts: Vec<Constraint>) -> Self {
        Guard { conjuncts }
    }

    pub fn always() -> Self {
        Guard::default()
    }

    pub fn conjuncts(&self) -> &[Constraint] {
        &self.conjuncts
    }

    /// Exact satisfaction; clock indices must be in range.
    pub fn is_satisfied_by(&self, eta: &ClockValuation) -> bool {
        self.conjuncts
            .iter()
            .all(|c| relation_holds(eta.get(c.clock), c.rel, c.bound))
    }

    /// Feasible set per clock as an interval over `[0, ∞)`.
    fn intervals(&self, clocks: usize) -> Vec<Interval> {
        let mut out = vec![Interval::full(); clocks];
        for c in &self.conjuncts {
            out[c.clock].restrict(c.rel, c.bound);
        }
        out
    }

    pub fn display_with(&self, clocks: &[String]) -> String {
        if self.conjuncts.is_empty() {
            return "true".to_string();
        }
        self.conjuncts
            .iter()
            .map(|c| format!("{}{}{}", clocks[c.clock], c.rel.symbol(), c.bound))
            .collect::<Vec<_>>()
            .join(" & ")
    }
}

/// Interval over non-negative reals with open/closed ends; `hi = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Interval {
    lo: u64,
    lo_strict: bool,
    hi: Option<u64>,
    hi_strict: bool,
}

impl Interval {
    fn full() -> Self {
        Interval {
            lo: 0,
            lo_strict: false,
            hi: None,
            hi_strict: false,
        }
    }

    fn restrict(&mut self, rel: Relation, c: u64) {
        match rel {
            Relation::Gt | Relation::Ge => {
                let strict = rel == Relation::Gt;
                if c > self.lo || (c == self.lo && strict) {
                    self.lo = c;
                    self.lo_strict = strict;
                }
            }
            Relation::Lt | Relation::Le => {
                let strict = rel == Relation::Lt;
                match self.hi {
                    Some(h) if c > h || (c == h && !strict) => {}
                    _ => {
                        self.hi = Some(c);
                        self.hi_strict = strict;
                    }
                }
            }
        }
    }

    fn intersect(&self, other: &Interval) -> Interval {
        let mut out = *self;
        out.restrict(
            if other.lo_strict {
                Relation::Gt
            } else {
                Relation::Ge
            },
            other.lo,
        );
        if let Some(h) = other.hi {
            out.restrict(
                if other.hi_strict {
                    Relation::Lt
                } else {
                    Relation::Le
                },
                h,
            );
        }
        out
    }

    fn witness(&self) -> Option<Rational> {
        let lo = Rational::from_integer(self.lo as i128);
        match self.hi {
            None => Some(if self.lo_strict {
                lo + Rational::new(1, 2)
            } else {
                lo
            }),
            Some(h) => {
                let hi = Rational::from_integer(h as i128);
                if lo < hi {
                    Some((lo + hi) / Rational::from_integer(2))
                } else if lo == hi && !self.lo_strict && !self.hi_strict {
                    Some(lo)
                } else {
                    None
                }
            }
        }
    }
}

/// Continuous-time Markov chain `(S, L, P, λ, ℒ)` with exact rational entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ctmc {
    pub states: Vec<String>,
    pub labels: Vec<String>,
    /// Dense `|S| × |S|` jump matrix.
    pub transitions: Vec<Vec<Rational>>,
    pub exit_rates: Vec<Rational>,
    /// Label index per state.
    pub labeling: Vec<usize>,
}

impl Ctmc {
    /// Checks dimensions only; stochasticity is checked by [`validate_ctmc`].
    pub fn new(
        states: Vec<String>,
        labels: Vec<String>,
        transitions: Vec<Vec<Rational>>,
        exit_rates: Vec<Rational>,
        labeling: Vec<usize>,
    ) -> Result<Self, ModelError> {
        let n = states.len();
        check_unique("state", &states)?;
        check_unique("label", &labels)?;
        if transitions.len() != n {
            return Err(ModelError::Length {
                what: "matrix rows",
                expected: n,
                got: transitions.len(),
            });
        }
        for (row, r) in transitions.iter().enumerate() {
            if r.len() != n {
                return Err(ModelError::MatrixShape {
                    n,
                    row,
                    len: r.len(),
                });
            }
        }
        if exit_rates.len() != n {
            return Err(ModelError::Length {
                what: "exit rates",
                expected: n,
                got: exit_rates.len(),
            });
        }
        if labeling.len() != n {
            return Err(ModelError::Length {
                what: "state labels",
                expected: n,
                got: labeling.len(),
            });
        }
        for (s, &l) in labeling.iter().enumerate() {
            if l >= labels.len() {
                return Err(ModelError::UnknownLabel {
                    state: states[s].clone(),
                    label: l,
                });
            }
        }
        Ok(Ctmc {
            states,
            labels,
            transitions,
            exit_rates,
            labeling,
        })
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Positive-probability successors of `s`.
    pub fn successors(&self, s: usize) -> impl Iterator<Item = (usize, &Rational)> {
        self.transitions[s]
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > Rational::zero())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rule {
    pub from: usize,
    pub signature: usize,
    pub guard: Guard,
    /// Sorted, duplicate-free clock indices to reset.
    pub resets: Vec<usize>,
    pub to: usize,
}

/// Deterministic timed automaton `(Q, Σ, X, Δ, F)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dta {
    pub locations: Vec<String>,
    pub final_locations: Vec<bool>,
    pub alphabet: Vec<String>,
    pub clocks: Vec<String>,
    pub rules: Vec<Rule>,
    ceilings: Ceilings,
}

impl Dta {
    pub fn new(
        locations: Vec<String>,
        final_locations: Vec<bool>,
        alphabet: Vec<String>,
        clocks: Vec<String>,
        mut rules: Vec<Rule>,
    ) -> Result<Self, ModelError> {
        check_unique("location", &locations)?;
        check_unique("signature", &alphabet)?;
        check_unique("clock", &clocks)?;
        if final_locations.len() != locations.len() {
            return Err(ModelError::Length {
                what: "final flags",
                expected: locations.len(),
                got: final_locations.len(),
            });
        }
        let mut ceilings = vec![0u64; clocks.len()];
        for (i, rule) in rules.iter_mut().enumerate() {
            let bad = |what, index| ModelError::RuleIndex {
                rule: i,
                what,
                index,
            };
            if rule.from >= locations.len() {
                return Err(bad("location", rule.from));
            }
            if rule.to >= locations.len() {
                return Err(bad("location", rule.to));
            }
            if rule.signature >= alphabet.len() {
                return Err(bad("signature", rule.signature));
            }
            for c in rule.guard.conjuncts() {
                if c.clock >= clocks.len() {
                    return Err(bad("clock", c.clock));
                }
                ceilings[c.clock] = ceilings[c.clock].max(c.bound);
            }
            for &x in &rule.resets {
                if x >= clocks.len() {
                    return Err(bad("clock", x));
                }
            }
            rule.resets.sort_unstable();
            rule.resets.dedup();
        }
        Ok(Dta {
            locations,
            final_locations,
            alphabet,
            clocks,
            rules,
            ceilings: Ceilings::new(ceilings),
        })
    }

    /// Per-clock ceilings `T_x`.
    pub fn ceilings(&self) -> &Ceilings {
        &self.ceilings
    }

    pub fn is_final(&self, q: usize) -> bool {
        self.final_locations[q]
    }

    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l == name)
    }

    pub fn clock_count(&self) -> usize {
        self.clocks.len()
    }

    pub fn rules_for(&self, q: usize, a: usize) -> impl Iterator<Item = (usize, &Rule)> {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.from == q && r.signature == a)
    }
}

fn check_unique(what: &'static str, names: &[String]) -> Result<(), ModelError> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(ModelError::DuplicateName {
                what,
                name: n.clone(),
            });
        }
    }
    Ok(())
}

/// A CTMC paired with a DTA over the same alphabet (`Σ = L`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub ctmc: Ctmc,
    pub dta: Dta,
    /// DTA signature index read when leaving each CTMC state.
    signature_of_state: Vec<usize>,
}

impl Model {
    pub fn pair(ctmc: Ctmc, dta: Dta) -> Result<Self, ModelError> {
        let labels: BTreeSet<&String> = ctmc.labels.iter().collect();
        let alphabet: BTreeSet<&String> = dta.alphabet.iter().collect();
        if labels != alphabet {
            return Err(ModelError::AlphabetMismatch {
                alphabet: dta.alphabet.clone(),
                labels: ctmc.labels.clone(),
            });
        }
        let signature_of_state = ctmc
            .labeling
            .iter()
            .map(|&l| {
                let name = &ctmc.labels[l];
                dta.alphabet.iter().position(|a| a == name).unwrap()
            })
            .collect();
        Ok(Model {
            ctmc,
            dta,
            signature_of_state,
        })
    }

    pub fn signature_of_state(&self, s: usize) -> usize {
        self.signature_of_state[s]
    }

    pub fn ceilings(&self) -> &Ceilings {
        self.dta.ceilings()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = validate_ctmc(&self.ctmc);
        report.issues.extend(validate_dta(&self.dta).issues);
        report
    }

    pub fn constants(&self) -> ModelConstants {
        model_constants(&self.ctmc, &self.dta)
    }
}

/// One structural violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Issue {
    RowSum {
        state: String,
        sum: Rational,
    },
    NegativeProbability {
        from: String,
        to: String,
        value: Rational,
    },
    NonPositiveRate {
        state: String,
        rate: Rational,
    },
    Overlap {
        location: String,
        signature: String,
        first: usize,
        second: usize,
        witness: String,
    },
    Uncovered {
        location: String,
        signature: String,
        witness: String,
    },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::RowSum { state, sum } => {
                write!(f, "row {state} sums to {}", format_rational(sum))
            }
            Issue::NegativeProbability { from, to, value } => {
                write!(f, "P({from},{to}) = {} is negative", format_rational(value))
            }
            Issue::NonPositiveRate { state, rate } => {
                write!(
                    f,
                    "state {state}: rate must be positive (got {})",
                    format_rational(rate)
                )
            }
            Issue::Overlap {
                location,
                signature,
                first,
                second,
                witness,
            } => write!(
                f,
                "rules {first} and {second} on ({location},{signature}) overlap, witness {witness}"
            ),
            Issue::Uncovered {
                location,
                signature,
                witness,
            } => {
                write!(
                    f,
                    "no rule on ({location},{signature}) is enabled at {witness}"
                )
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "valid");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

pub fn validate_ctmc(c: &Ctmc) -> ValidationReport {
    let mut issues = Vec::new();
    for (s, row) in c.transitions.iter().enumerate() {
        for (u, p) in row.iter().enumerate() {
            if *p < Rational::zero() {
                issues.push(Issue::NegativeProbability {
                    from: c.states[s].clone(),
                    to: c.states[u].clone(),
                    value: *p,
                });
            }
        }
        let sum: Rational = row.iter().sum();
        if sum != Rational::one() {
            issues.push(Issue::RowSum {
                state: c.states[s].clone(),
                sum,
            });
        }
        if c.exit_rates[s] <= Rational::zero() {
            issues.push(Issue::NonPositiveRate {
                state: c.states[s].clone(),
                rate: c.exit_rates[s],
            });
        }
    }
    ValidationReport { issues }
}

/// Turns every zero-rate state into an absorbing state with rate `rate`.
pub fn deadlock_repair(c: &Ctmc, rate: Rational) -> Ctmc {
    let mut out = c.clone();
    for s in 0..out.states.len() {
        if out.exit_rates[s].is_zero() {
            out.exit_rates[s] = rate;
            for (u, p) in out.transitions[s].iter_mut().enumerate() {
                *p = if u == s {
                    Rational::one()
                } else {
                    Rational::zero()
                };
            }
        }
    }
    out
}

/// Checks determinism (pairwise guard intersection per `(q, a)`) and totality
/// (every region representative enables some rule per `(q, a)`).
pub fn validate_dta(d: &Dta) -> ValidationReport {
    let mut issues = Vec::new();
    let n = d.clocks.len();
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in d.rules.iter().enumerate() {
        groups.entry((r.from, r.signature)).or_default().push(i);
    }

    for (&(q, a), members) in &groups {
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                let (ri, rj) = (&d.rules[i], &d.rules[j]);
                if ri.guard == rj.guard && ri.resets == rj.resets && ri.to == rj.to {
                    continue;
                }
                let gi = ri.guard.intervals(n);
                let gj = rj.guard.intervals(n);
                let witness: Option<Vec<Rational>> = gi
                    .iter()
                    .zip(&gj)
                    .map(|(x, y)| x.intersect(y).witness())
                    .collect();
                if let Some(w) = witness {
                    issues.push(Issue::Overlap {
                        location: d.locations[q].clone(),
                        signature: d.alphabet[a].clone(),
                        first: i,
                        second: j,
                        witness: ClockValuation::new(w).display_with(&d.clocks),
                    });
                }
            }
        }
    }

    let regions = enumerate_regions(d.ceilings());
    for q in 0..d.locations.len() {
        for a in 0..d.alphabet.len() {
            let rules: Vec<&Rule> = groups
                .get(&(q, a))
                .map(|m| m.iter().map(|&i| &d.rules[i]).collect())
                .unwrap_or_default();
            for (_, eta) in &regions {
                if !rules.iter().any(|r| r.guard.is_satisfied_by(eta)) {
                    issues.push(Issue::Uncovered {
                        location: d.locations[q].clone(),
                        signature: d.alphabet[a].clone(),
                        witness: eta.display_with(&d.clocks),
                    });
                    // one witness per (q, a) is enough
                    break;
                }
            }
        }
    }
    ValidationReport { issues }
}

/// Exact scalar constants of a model pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub lambda_max: Rational,
    pub lambda_min: Rational,
    pub p_min: Rational,
    pub t_max: u64,
    pub clock_count: usize,
}

pub fn model_constants(c: &Ctmc, d: &Dta) -> ModelConstants {
    let lambda_max = c
        .exit_rates
        .iter()
        .max()
        .copied()
        .unwrap_or_else(Rational::zero);
    let lambda_min = c
        .exit_rates
        .iter()
        .min()
        .copied()
        .unwrap_or_else(Rational::zero);
    let p_min = c
        .transitions
        .iter()
        .flatten()
        .filter(|p| **p > Rational::zero())
        .min()
        .copied()
        .unwrap_or_else(Rational::one);
    ModelConstants {
        lambda_max,
        lambda_min,
        p_min,
        t_max: d.ceilings().t_max(),
        clock_count: d.clock_count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn two_state(p: [[Rational; 2]; 2], rates: [Rational; 2]) -> Ctmc {
        Ctmc::new(
            names(&["s", "g"]),
            names(&["a", "b"]),
            p.iter().map(|row| row.to_vec()).collect(),
            rates.to_vec(),
            vec![0, 1],
        )
        .unwrap()
    }

    fn c(clock: usize, rel: Relation, bound: u64) -> Constraint {
        Constraint { clock, rel, bound }
    }

    fn rule(from: usize, sig: usize, guard: Vec<Constraint>, to: usize) -> Rule {
        Rule {
            from,
            signature: sig,
            guard: Guard::new(guard),
            resets: vec![],
            to,
        }
    }

    #[test]
    fn valid_ctmc_passes() {
        let m = two_state([[r(0, 1), r(1, 1)], [r(0, 1), r(1, 1)]], [r(1, 1), r(1, 1)]);
        assert!(validate_ctmc(&m).is_valid());
    }

    #[test]
    fn row_sum_violation_is_reported() {
        let m = two_state(
            [[r(0, 1), r(9, 10)], [r(0, 1), r(1, 1)]],
            [r(1, 1), r(1, 1)],
        );
        let report = validate_ctmc(&m);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].to_string(), "row s sums to 9/10");
    }

    #[test]
    fn zero_rate_is_reported_and_repaired() {
        let m = two_state([[r(0, 1), r(1, 1)], [r(0, 1), r(1, 1)]], [r(1, 1), r(0, 1)]);
        let report = validate_ctmc(&m);
        assert!(report.issues[0]
            .to_string()
            .contains("rate must be positive"));

        let fixed = deadlock_repair(&m, Rational::one());
        assert_eq!(fixed.exit_rates[1], r(1, 1));
        assert_eq!(fixed.transitions[1], vec![r(0, 1), r(1, 1)]);
        assert!(validate_ctmc(&fixed).is_valid());
    }

    #[test]
    fn repair_is_identity_without_deadlocks() {
        let m = two_state([[r(1, 2), r(1, 2)], [r(0, 1), r(1, 1)]], [r(2, 1), r(1, 1)]);
        assert_eq!(deadlock_repair(&m, Rational::one()), m);
    }

    #[test]
    fn repair_handles_two_deadlocks_independently() {
        let m = two_state([[r(1, 2), r(1, 2)], [r(1, 3), r(2, 3)]], [r(0, 1), r(0, 1)]);
        let fixed = deadlock_repair(&m, r(3, 1));
        assert_eq!(fixed.exit_rates, vec![r(3, 1), r(3, 1)]);
        assert_eq!(
            fixed.transitions,
            vec![vec![r(1, 1), r(0, 1)], vec![r(0, 1), r(1, 1)]]
        );
    }

    fn one_clock_dta(rules: Vec<Rule>) -> Dta {
        Dta::new(
            names(&["q0", "q1", "q2"]),
            vec![false, true, false],
            names(&["a"]),
            names(&["x"]),
            rules,
        )
        .unwrap()
    }

    fn complete(mut rules: Vec<Rule>) -> Vec<Rule> {
        rules.push(rule(1, 0, vec![], 1));
        rules.push(rule(2, 0, vec![], 2));
        rules
    }

    #[test]
    fn complementary_guards_are_valid() {
        let d = one_clock_dta(complete(vec![
            rule(0, 0, vec![c(0, Relation::Lt, 1)], 1),
            rule(0, 0, vec![c(0, Relation::Ge, 1)], 2),
        ]));
        let report = validate_dta(&d);
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn overlapping_guards_report_witness() {
        let d = one_clock_dta(complete(vec![
            rule(0, 0, vec![c(0, Relation::Lt, 2)], 1),
            rule(0, 0, vec![c(0, Relation::Gt, 1)], 2),
        ]));
        let report = validate_dta(&d);
        let overlap = report
            .issues
            .iter()
            .find_map(|i| match i {
                Issue::Overlap { witness, .. } => Some(witness.clone()),
                _ => None,
            })
            .expect("overlap reported");
        assert_eq!(overlap, "x=3/2");
    }

    #[test]
    fn boundary_touching_guards_overlap_only_when_closed() {
        let closed = one_clock_dta(complete(vec![
            rule(0, 0, vec![c(0, Relation::Le, 1)], 1),
            rule(0, 0, vec![c(0, Relation::Ge, 1)], 2),
        ]));
        assert!(validate_dta(&closed)
            .issues
            .iter()
            .any(|i| matches!(i, Issue::Overlap { witness, .. } if witness == "x=1")));
    }

    #[test]
    fn missing_rule_is_a_totality_violation() {
        let d = one_clock_dta(vec![rule(0, 0, vec![], 1), rule(2, 0, vec![], 2)]);
        let report = validate_dta(&d);
        assert_eq!(report.issues.len(), 1);
        assert!(matches!(&report.issues[0], Issue::Uncovered { location, .. } if location == "q1"));
    }

    #[test]
    fn gap_between_guards_is_uncovered() {
        let d = one_clock_dta(complete(vec![
            rule(0, 0, vec![c(0, Relation::Lt, 1)], 1),
            rule(0, 0, vec![c(0, Relation::Gt, 1)], 2),
        ]));
        let report = validate_dta(&d);
        assert!(
            matches!(&report.issues[..], [Issue::Uncovered { witness, .. }] if witness == "x=1")
        );
    }

    #[test]
    fn ceilings_and_constants() {
        let d = Dta::new(
            names(&["q"]),
            vec![true],
            names(&["a"]),
            names(&["x", "y"]),
            vec![rule(
                0,
                0,
                vec![c(0, Relation::Lt, 2), c(1, Relation::Le, 3)],
                0,
            )],
        )
        .unwrap();
        assert_eq!(d.ceilings().as_slice(), &[2, 3]);
        assert_eq!(d.ceilings().t_max(), 3);

        let m = Ctmc::new(
            names(&["s", "g"]),
            names(&["a"]),
            vec![vec![r(0, 1), r(1, 1)], vec![r(0, 1), r(1, 1)]],
            vec![r(1, 1), r(1, 1)],
            vec![0, 0],
        )
        .unwrap();
        let k = model_constants(&m, &d);
        assert_eq!(k.lambda_max, k.lambda_min);
        assert_eq!(k.p_min, r(1, 1));
        assert_eq!(k.t_max, 3);
        assert_eq!(k.clock_count, 2);
    }

    #[test]
    fn pairing_requires_equal_alphabets() {
        let m = two_state([[r(0, 1), r(1, 1)], [r(0, 1), r(1, 1)]], [r(1, 1), r(1, 1)]);
        let d = one_clock_dta(complete(vec![rule(0, 0, vec![], 1)]));
        assert!(matches!(
            Model::pair(m, d),
            Err(ModelError::AlphabetMismatch { .. })
        ));
    }

    #[test]
    fn rule_with_unknown_clock_is_rejected() {
        let err = Dta::new(
            names(&["q"]),
            vec![false],
            names(&["a"]),
            names(&["x"]),
            vec![rule(0, 0, vec![c(4, Relation::Lt, 1)], 0)],
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModelError::RuleIndex {
                rule: 0,
                what: "clock",
                index: 4
            }
        );
    }
}
