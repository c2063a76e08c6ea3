//! DTA execution: rule selection, the one-step transition function and
//! bounded acceptance of timed words.

use thiserror::Error;

use crate::models::{Dta, Rule};
use crate::rational::{format_rational, Rational};
use crate::region::ClockValuation;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DynamicsError {
    #[error("no rule enabled at ({location}, {signature}) for valuation {valuation}")]
    NoRule {
        location: String,
        signature: String,
        valuation: ClockValuation,
    },
    #[error("rules {rules:?} all enabled at ({location}, {signature}) for valuation {valuation}")]
    Ambiguous {
        location: String,
        signature: String,
        valuation: ClockValuation,
        rules: Vec<usize>,
    },
    #[error("negative sojourn {0}")]
    NegativeSojourn(String),
    #[error("timed word has {len} signatures, at least {k} required")]
    WordTooShort { len: usize, k: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub location: usize,
    pub valuation: ClockValuation,
}

impl Configuration {
    pub fn new(location: usize, valuation: ClockValuation) -> Self {
        Configuration {
            location,
            valuation,
        }
    }
}

/// The unique rule of `(q, a)` whose guard holds at `η`.
pub fn select_rule<'a>(
    dta: &'a Dta,
    q: usize,
    a: usize,
    eta: &ClockValuation,
) -> Result<&'a Rule, DynamicsError> {
    let mut found: Option<(usize, &Rule)> = None;
    let mut extra = Vec::new();
    for (i, r) in dta.rules_for(q, a) {
        if !r.guard.is_satisfied_by(eta) {
            continue;
        }
        match found {
            None => found = Some((i, r)),
            // identical duplicates are harmless
            Some((_, f)) if f.guard == r.guard && f.resets == r.resets && f.to == r.to => {}
            Some(_) => extra.push(i),
        }
    }
    match found {
        None => Err(DynamicsError::NoRule {
            location: dta.locations[q].clone(),
            signature: dta.alphabet[a].clone(),
            valuation: eta.clone(),
        }),
        Some((_, r)) if extra.is_empty() => Ok(r),
        Some((i, _)) => {
            let mut rules = vec![i];
            rules.extend(extra);
            Err(DynamicsError::Ambiguous {
                location: dta.locations[q].clone(),
                signature: dta.alphabet[a].clone(),
                valuation: eta.clone(),
                rules,
            })
        }
    }
}

/// `κ((q, η), (a, t)) = (q′, (η + t)[X′ := 0])`.
pub fn kappa(
    dta: &Dta,
    config: &Configuration,
    signature: usize,
    sojourn: &Rational,
) -> Result<Configuration, DynamicsError> {
    if *sojourn < Rational::from_integer(0) {
        return Err(DynamicsError::NegativeSojourn(format_rational(sojourn)));
    }
    let delayed = config.valuation.delay(sojourn);
    let rule = select_rule(dta, config.location, signature, &delayed)?;
    Ok(Configuration {
        location: rule.to,
        valuation: delayed.reset(&rule.resets),
    })
}

/// Lazily evaluated run of a DTA over a finite timed word.
pub struct Run<'a> {
    dta: &'a Dta,
    current: Option<Configuration>,
    word: std::slice::Iter<'a, (usize, Rational)>,
}

impl<'a> Run<'a> {
    pub fn new(dta: &'a Dta, start: Configuration, word: &'a [(usize, Rational)]) -> Self {
        Run {
            dta,
            current: Some(start),
            word: word.iter(),
        }
    }
}

impl Iterator for Run<'_> {
    type Item = Result<Configuration, DynamicsError>;

    fn next(&mut self) -> Option<Self::Item> {
        let current = self.current.take()?;
        if let Some((a, t)) = self.word.next() {
            match kappa(self.dta, &current, *a, t) {
                Ok(next) => self.current = Some(next),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(current))
    }
}

/// Whether the run from `start` visits a final location within `k` steps
/// (step 0 is the initial configuration).
pub fn accepted_within(
    dta: &Dta,
    start: &Configuration,
    word: &[(usize, Rational)],
    k: usize,
) -> Result<bool, DynamicsError> {
    if word.len() < k {
        return Err(DynamicsError::WordTooShort { len: word.len(), k });
    }
    for config in Run::new(dta, start.clone(), word).take(k + 1) {
        if dta.is_final(config?.location) {
            return Ok(true);
        }
    }
    Ok(false)
}
