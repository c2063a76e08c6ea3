//! JSON model documents, result documents and the convergence table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{
    deadlock_repair, Constraint, Ctmc, Dta, Guard, Model, ModelError, Relation, Rule,
    ValidationReport,
};
use crate::rational::{format_rational, parse_rational, Rational, RationalParseError};
use crate::region::ClockValuation;
use crate::solver::{Analyzer, Approximation};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{context}: {source}")]
    Rational {
        context: String,
        source: RationalParseError,
    },
    #[error("rule {rule}: guard {guard:?}, column {column}: {message}")]
    Guard {
        rule: usize,
        guard: String,
        column: usize,
        message: String,
    },
    #[error("rule {rule}: {message}")]
    Rule { rule: usize, message: String },
    #[error("{0}")]
    Reference(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model is invalid:\n{0}")]
    Validation(ValidationReport),
    #[error("bad valuation {text:?}: {message}")]
    Valuation { text: String, message: String },
}

/// A rational written as a string (`"1/3"`, `"0.25"`) or a JSON integer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RationalText {
    Text(String),
    Int(i64),
}

impl RationalText {
    fn parse(&self, context: impl FnOnce() -> String) -> Result<Rational, IoError> {
        match self {
            RationalText::Int(i) => Ok(Rational::from_integer(*i as i128)),
            RationalText::Text(s) => parse_rational(s).map_err(|source| IoError::Rational {
                context: context(),
                source,
            }),
        }
    }
}

impl From<&Rational> for RationalText {
    fn from(r: &Rational) -> Self {
        RationalText::Text(format_rational(r))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDocument {
    pub name: String,
    pub rate: RationalText,
    pub label: String,
    #[serde(default)]
    pub transitions: BTreeMap<String, RationalText>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtmcDocument {
    pub states: Vec<StateDocument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDocument {
    pub from: String,
    pub signature: String,
    #[serde(default)]
    pub guard: String,
    #[serde(default)]
    pub resets: Vec<String>,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtaDocument {
    pub clocks: Vec<String>,
    pub locations: Vec<String>,
    #[serde(rename = "final")]
    pub final_locations: Vec<String>,
    pub rules: Vec<RuleDocument>,
    /// Defaults to the CTMC label set in order of first use.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub ctmc: CtmcDocument,
    pub dta: DtaDocument,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOptions {
    /// Make zero-rate states absorbing with this rate before validating.
    pub repair_deadlocks: Option<Rational>,
    /// Skip validation (for inspecting broken models).
    pub skip_validation: bool,
}

pub fn parse_model(path: impl AsRef<Path>) -> Result<Model, IoError> {
    parse_model_with(path, &ParseOptions::default())
}

pub fn parse_model_with(path: impl AsRef<Path>, opts: &ParseOptions) -> Result<Model, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_model_str_with(&text, opts)
}

pub fn parse_model_str(text: &str) -> Result<Model, IoError> {
    parse_model_str_with(text, &ParseOptions::default())
}

pub fn parse_model_str_with(text: &str, opts: &ParseOptions) -> Result<Model, IoError> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| IoError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut model = document_to_model(&doc)?;
    if let Some(rate) = opts.repair_deadlocks {
        model.ctmc = deadlock_repair(&model.ctmc, rate);
    }
    if !opts.skip_validation {
        let report = model.validate();
        if !report.is_valid() {
            return Err(IoError::Validation(report));
        }
    }
    Ok(model)
}

fn position(names: &[String], name: &str) -> Option<usize> {
    names.iter().position(|n| n == name)
}

pub fn document_to_model(doc: &ModelDocument) -> Result<Model, IoError> {
    let states: Vec<String> = doc.ctmc.states.iter().map(|s| s.name.clone()).collect();
    let mut labels: Vec<String> = Vec::new();
    for s in &doc.ctmc.states {
        if !labels.contains(&s.label) {
            labels.push(s.label.clone());
        }
    }
    let n = states.len();
    let mut transitions = vec![vec![Rational::from_integer(0); n]; n];
    let mut rates = Vec::with_capacity(n);
    let mut labeling = Vec::with_capacity(n);
    for (i, s) in doc.ctmc.states.iter().enumerate() {
        rates.push(s.rate.parse(|| format!("rate of state {}", s.name))?);
        labeling.push(position(&labels, &s.label).unwrap());
        for (target, p) in &s.transitions {
            let j = position(&states, target).ok_or_else(|| {
                IoError::Reference(format!(
                    "state {}: transition to unknown state {target:?}",
                    s.name
                ))
            })?;
            transitions[i][j] = p.parse(|| format!("P({},{target})", s.name))?;
        }
    }
    let ctmc = Ctmc::new(states, labels.clone(), transitions, rates, labeling)?;

    let d = &doc.dta;
    let alphabet = d.alphabet.clone().unwrap_or(labels);
    let mut finals = vec![false; d.locations.len()];
    for f in &d.final_locations {
        let q = position(&d.locations, f)
            .ok_or_else(|| IoError::Reference(format!("final location {f:?} is not a location")))?;
        finals[q] = true;
    }
    let mut rules = Vec::with_capacity(d.rules.len());
    for (i, r) in d.rules.iter().enumerate() {
        let loc = |name: &str| {
            position(&d.locations, name).ok_or_else(|| IoError::Rule {
                rule: i,
                message: format!("unknown location {name:?}"),
            })
        };
        let signature = position(&alphabet, &r.signature).ok_or_else(|| IoError::Rule {
            rule: i,
            message: format!("unknown signature {:?}", r.signature),
        })?;
        let guard =
            parse_guard(&r.guard, &d.clocks).map_err(|(column, message)| IoError::Guard {
                rule: i,
                guard: r.guard.clone(),
                column,
                message,
            })?;
        let resets = r
            .resets
            .iter()
            .map(|c| {
                position(&d.clocks, c).ok_or_else(|| IoError::Rule {
                    rule: i,
                    message: format!("reset of unknown clock {c:?}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rules.push(Rule {
            from: loc(&r.from)?,
            signature,
            guard,
            resets,
            to: loc(&r.to)?,
        });
    }
    let dta = Dta::new(
        d.locations.clone(),
        finals,
        alphabet,
        d.clocks.clone(),
        rules,
    )?;
    Ok(Model::pair(ctmc, dta)?)
}

/// Parses `clock REL nat (& clock REL nat)*`; empty text or `true` is the
/// trivial guard. Errors carry a 1-based column.
pub fn parse_guard(text: &str, clocks: &[String]) -> Result<Guard, (usize, String)> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "true" {
        return Ok(Guard::always());
    }
    let chars: Vec<char> = text.chars().collect();
    let mut pos = 0;
    let skip_ws = |pos: &mut usize| {
        while *pos < chars.len() && chars[*pos].is_whitespace() {
            *pos += 1;
        }
    };
    let mut conjuncts = Vec::new();
    loop {
        skip_ws(&mut pos);
        let start = pos;
        while pos < chars.len() && (chars[pos].is_alphanumeric() || chars[pos] == '_') {
            pos += 1;
        }
        if start == pos {
            return Err((pos + 1, "expected a clock name".into()));
        }
        let name: String = chars[start..pos].iter().collect();
        let clock =
            position(clocks, &name).ok_or((start + 1, format!("unknown clock {name:?}")))?;
        skip_ws(&mut pos);
        let rel = match (chars.get(pos), chars.get(pos + 1)) {
            (Some('<'), Some('=')) => Relation::Le,
            (Some('>'), Some('=')) => Relation::Ge,
            (Some('<'), _) => Relation::Lt,
            (Some('>'), _) => Relation::Gt,
            _ => return Err((pos + 1, "expected one of <, <=, >, >=".into())),
        };
        pos += rel.symbol().len();
        skip_ws(&mut pos);
        let start = pos;
        while pos < chars.len() && chars[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err((pos + 1, "expected a natural number".into()));
        }
        let digits: String = chars[start..pos].iter().collect();
        let bound: u64 = digits
            .parse()
            .map_err(|_| (start + 1, format!("constant {digits} is too large")))?;
        conjuncts.push(Constraint { clock, rel, bound });
        skip_ws(&mut pos);
        match chars.get(pos) {
            None => break,
            Some('&') => pos += 1,
            Some(c) => return Err((pos + 1, format!("unexpected {c:?}, expected '&'"))),
        }
    }
    Ok(Guard::new(conjuncts))
}

/// Inverse of [`document_to_model`].
pub fn model_to_document(model: &Model) -> ModelDocument {
    let c = &model.ctmc;
    let states = (0..c.state_count())
        .map(|s| StateDocument {
            name: c.states[s].clone(),
            rate: (&c.exit_rates[s]).into(),
            label: c.labels[c.labeling[s]].clone(),
            transitions: c
                .successors(s)
                .map(|(u, p)| (c.states[u].clone(), p.into()))
                .collect(),
        })
        .collect();
    let d = &model.dta;
    let rules = d
        .rules
        .iter()
        .map(|r| RuleDocument {
            from: d.locations[r.from].clone(),
            signature: d.alphabet[r.signature].clone(),
            guard: r.guard.display_with(&d.clocks),
            resets: r.resets.iter().map(|&x| d.clocks[x].clone()).collect(),
            to: d.locations[r.to].clone(),
        })
        .collect();
    ModelDocument {
        ctmc: CtmcDocument { states },
        dta: DtaDocument {
            clocks: d.clocks.clone(),
            locations: d.locations.clone(),
            final_locations: d
                .locations
                .iter()
                .zip(&d.final_locations)
                .filter(|(_, f)| **f)
                .map(|(q, _)| q.clone())
                .collect(),
            rules,
            alphabet: Some(d.alphabet.clone()),
        },
    }
}

/// Parses `"x=0,y=1/2"`; every clock must be given exactly once.
pub fn parse_valuation(text: &str, clocks: &[String]) -> Result<ClockValuation, IoError> {
    let err = |message: String| IoError::Valuation {
        text: text.to_string(),
        message,
    };
    let mut values: Vec<Option<Rational>> = vec![None; clocks.len()];
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| err(format!("{part:?} is not clock=value")))?;
        let x = position(clocks, name.trim())
            .ok_or_else(|| err(format!("unknown clock {:?}", name.trim())))?;
        let v = parse_rational(value.trim()).map_err(|e| err(e.to_string()))?;
        if v < Rational::from_integer(0) {
            return Err(err(format!("clock {} is negative", clocks[x])));
        }
        if values[x].replace(v).is_some() {
            return Err(err(format!("clock {} given twice", clocks[x])));
        }
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(x, v)| v.ok_or_else(|| err(format!("missing clock {}", clocks[x]))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ClockValuation::new(values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

/// Result of a `solve` query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub state: String,
    pub location: String,
    pub valuation: String,
    pub probability: f64,
    pub exact: bool,
    /// `None` when the bound does not fit in an f64.
    pub theoretical_bound: Option<f64>,
    pub theoretical_bound_log10: Option<f64>,
    /// Theoretical bound plus snapping slack.
    pub error_bound: Option<f64>,
    /// Heuristic `2|µ_m − µ_2m|`; not a guarantee.
    pub empirical_error_estimate: Option<f64>,
    pub m: u64,
    pub rho: f64,
    pub grid_size: usize,
    #[serde(rename = "|V|")]
    pub vertex_count: usize,
    #[serde(rename = "𝔠")]
    pub contraction: f64,
    #[serde(rename = "M1")]
    pub m1: f64,
    #[serde(rename = "M2")]
    pub m2: f64,
    #[serde(rename = "M3")]
    pub m3: f64,
    pub m_min: u64,
    pub below_threshold: bool,
    pub snapped_valuation: String,
    pub snap_slack: f64,
    pub residual: f64,
    pub iterations: usize,
    pub timing: Timing,
}

impl ResultDocument {
    pub fn new(
        analyzer: &Analyzer,
        s: usize,
        q: usize,
        eta: &ClockValuation,
        a: &Approximation,
        seconds: f64,
    ) -> Self {
        let model = &analyzer.model;
        let r = &a.report;
        ResultDocument {
            state: model.ctmc.states[s].clone(),
            location: model.dta.locations[q].clone(),
            valuation: eta.display_with(&model.dta.clocks),
            probability: a.probability,
            exact: a.exact,
            theoretical_bound: r.theoretical_bound,
            theoretical_bound_log10: r.theoretical_bound_log10,
            error_bound: a.error_bound,
            empirical_error_estimate: r.empirical_estimate,
            m: a.m,
            rho: r.rho,
            grid_size: a.grid_size,
            vertex_count: r.vertex_count,
            contraction: r.contraction,
            m1: r.m1,
            m2: r.m2,
            m3: r.m3,
            m_min: r.m_min,
            below_threshold: r.below_threshold,
            snapped_valuation: a.snapped.display_with(&model.dta.clocks),
            snap_slack: a.snap_slack,
            residual: a.residual,
            iterations: a.iterations,
            timing: Timing { seconds },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result documents always serialize")
    }
}

/// One row of the convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub m: u64,
    pub value: f64,
    /// Against the exact value if known, otherwise the previous row.
    pub error: Option<f64>,
}

pub fn convergence_rows(values: &[(u64, f64)], exact: Option<f64>) -> Vec<ConvergenceRow> {
    values
        .iter()
        .enumerate()
        .map(|(i, &(m, value))| {
            let error = match exact {
                Some(e) => Some((value - e).abs()),
                None if i > 0 => Some((value - values[i - 1].1).abs()),
                None => None,
            };
            ConvergenceRow { m, value, error }
        })
        .collect()
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("m,rho,value,abs_error_vs_exact_or_prev\n");
    for r in rows {
        let err = r.error.map(|e| format!("{e:e}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:e},{},{}", r.m, 1.0 / r.m as f64, r.value, err);
    }
    out
}
