//! Monte Carlo estimation of acceptance probabilities.
//!
//! Each trial runs on its own ChaCha stream `(seed, trial index)`, so results
//! do not depend on thread scheduling. Sojourns are rounded to the dyadic grid
//! `2^-32` to keep the DTA arithmetic exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dynamics::{kappa, Configuration};
use crate::graph::{ProductGraph, VertexClass};
use crate::models::Model;
use crate::rational::{from_f64_dyadic, to_f64, Rational};
use crate::region::ClockValuation;

const SOJOURN_BITS: u32 = 32;

/// Inverse CDF of the exponential distribution: `−ln(u)/rate`.
pub fn sojourn_from_uniform(u: f64, rate: f64) -> f64 {
    -u.ln() / rate
}

/// Exponential sojourn with the given rate, `U` drawn from `(0, 1)`.
pub fn sample_sojourn<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    // gen::<f64>() is in [0, 1); 1 − U is in (0, 1]
    let u = 1.0 - rng.gen::<f64>();
    sojourn_from_uniform(u, rate)
}

/// Reproducible per-trial generator.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOptions {
    pub samples: usize,
    /// Step horizon; `None` picks [`default_k_max`].
    pub k_max: Option<usize>,
    pub seed: u64,
    /// Two-sided confidence level of the reported half-width.
    pub level: f64,
    /// Stop a trial as soon as it enters a dead product vertex.
    pub absorption: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            samples: 100_000,
            k_max: None,
            seed: 0,
            level: 0.99,
            absorption: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p_hat: f64,
    /// Accepted runs only.
    pub p_low: f64,
    /// Accepted plus censored runs.
    pub p_high: f64,
    pub n: usize,
    pub half_width: f64,
    pub level: f64,
    pub accepted: usize,
    pub absorbed: usize,
    pub censored: usize,
    pub k_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Accepted,
    Absorbed,
    Censored,
    Rejected,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    accepted: usize,
    absorbed: usize,
    censored: usize,
}

impl Tally {
    fn add(mut self, o: Outcome) -> Self {
        match o {
            Outcome::Accepted => self.accepted += 1,
            Outcome::Absorbed => self.absorbed += 1,
            Outcome::Censored => self.censored += 1,
            Outcome::Rejected => {}
        }
        self
    }

    fn merge(self, other: Tally) -> Tally {
        Tally {
            accepted: self.accepted + other.accepted,
            absorbed: self.absorbed + other.absorbed,
            censored: self.censored + other.censored,
        }
    }
}

/// `16·⌈λmax·Tmax⌉·|V|`, at least 16.
pub fn default_k_max(model: &Model, graph: &ProductGraph) -> usize {
    let k = model.constants();
    let scale = (k.lambda_max * Rational::from_integer(k.t_max as i128))
        .ceil()
        .to_integer()
        .max(1) as usize;
    16 * scale * graph.vertex_count().max(1)
}

fn pick_successor(model: &Model, s: usize, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = s;
    for (t, p) in model.ctmc.successors(s) {
        acc += to_f64(p);
        last = t;
        if u < acc {
            return t;
        }
    }
    last
}

struct Trial<'a> {
    model: &'a Model,
    graph: Option<&'a ProductGraph>,
    rates: &'a [f64],
}

impl Trial<'_> {
    fn run(&self, s0: usize, start: &Configuration, k: usize, rng: &mut ChaCha8Rng) -> Outcome {
        let ceilings = self.model.ceilings();
        let mut s = s0;
        let mut config =
            Configuration::new(start.location, start.valuation.normalize_above(ceilings));
        for step in 0..=k {
            if self.model.dta.is_final(config.location) {
                return Outcome::Accepted;
            }
            if let Some(g) = self.graph {
                if g.class_of(self.model, s, config.location, &config.valuation)
                    == VertexClass::Dead
                {
                    return Outcome::Absorbed;
                }
            }
            if step == k {
                break;
            }
            let t = from_f64_dyadic(sample_sojourn(self.rates[s], rng), SOJOURN_BITS);
            let next = kappa(
                &self.model.dta,
                &config,
                self.model.signature_of_state(s),
                &t,
            )
            .expect("validated DTA is deterministic and total");
            // values above a ceiling are interchangeable; keep them small
            config = Configuration::new(next.location, next.valuation.normalize_above(ceilings));
            s = pick_successor(self.model, s, rng.gen::<f64>());
        }
        if self.graph.is_some() {
            Outcome::Censored
        } else {
            Outcome::Rejected
        }
    }
}

fn run_trials(
    model: &Model,
    graph: Option<&ProductGraph>,
    s: usize,
    start: &Configuration,
    k: usize,
    opts: &McOptions,
) -> Tally {
    let rates: Vec<f64> = model.ctmc.exit_rates.iter().map(to_f64).collect();
    let trial = Trial {
        model,
        graph,
        rates: &rates,
    };
    let seed = opts.seed;
    (0..opts.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            Tally::default().add(trial.run(s, start, k, &mut rng))
        })
        .reduce(Tally::default, Tally::merge)
}

fn summarize(t: Tally, n: usize, k: usize, level: f64) -> Estimate {
    let nf = n.max(1) as f64;
    let p_hat = t.accepted as f64 / nf;
    let z = Normal::new(0.0, 1.0)
        .unwrap()
        .inverse_cdf(0.5 + level / 2.0);
    let half_width = if n == 0 {
        f64::INFINITY
    } else {
        z * (p_hat * (1.0 - p_hat) / nf).sqrt()
    };
    Estimate {
        p_hat,
        p_low: p_hat,
        p_high: (t.accepted + t.censored) as f64 / nf,
        n,
        half_width,
        level,
        accepted: t.accepted,
        absorbed: t.absorbed,
        censored: t.censored,
        k_max: k,
    }
}

/// Estimates `prob(s, q, η)`; runs still undecided after `k_max` jumps are censored.
pub fn estimate(
    model: &Model,
    graph: &ProductGraph,
    s: usize,
    q: usize,
    eta: &ClockValuation,
    opts: &McOptions,
) -> Estimate {
    let k = opts.k_max.unwrap_or_else(|| default_k_max(model, graph));
    let start = Configuration::new(q, eta.clone());
    if opts.absorption {
        let t = run_trials(model, Some(graph), s, &start, k, opts);
        summarize(t, opts.samples, k, opts.level)
    } else {
        // without absorption every non-accepted run is censored
        let t = run_trials(model, None, s, &start, k, opts);
        let censored = opts.samples - t.accepted;
        summarize(Tally { censored, ..t }, opts.samples, k, opts.level)
    }
}

/// Estimates `prob_k(s, q, η)`: acceptance within `k` jumps, no shortcuts.
/// `k_max` and `absorption` in `opts` are ignored.
pub fn estimate_k(
    model: &Model,
    s: usize,
    q: usize,
    eta: &ClockValuation,
    k: usize,
    opts: &McOptions,
) -> Estimate {
    let t = run_trials(model, None, s, &Configuration::new(q, eta.clone()), k, opts);
    summarize(t, opts.samples, k, opts.level)
}
