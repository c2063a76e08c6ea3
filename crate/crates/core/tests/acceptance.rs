//! Acceptance checks. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line; exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use ctmc_dta::dynamics::{accepted_within, Configuration, Run};
use ctmc_dta::graph::contraction_constant;
use ctmc_dta::io::parse_model_str;
use ctmc_dta::mc::{estimate, McOptions};
use ctmc_dta::models::{Constraint, Guard, Relation};
use ctmc_dta::region::{
    equiv_b, plus_representative, region_equivalent, region_of, right_stable_length, Ceilings,
};
use ctmc_dta::scheme::{assemble_gamma_double, assemble_gamma_prime, scaled_error_constants};
use ctmc_dta::solver::{residual, solve, SolveMethod};
use ctmc_dta::{
    Analyzer, ApproxOptions, ClockValuation, Grid, Model, Rational, SolveOptions, VertexClass,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXP1: &str = include_str!("fixtures/exp1.json");
const TWO_CLOCK: &str = include_str!("fixtures/two_clock.json");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn exact_exp1() -> f64 {
    1.0 - (-1.0f64).exp()
}

/// Hand solution of the one-clock recurrence at the origin.
fn closed_form(m: u64) -> f64 {
    1.0 - (1.0 + 1.0 / m as f64).powf(-(m as f64))
}

fn origin(n: usize) -> ClockValuation {
    ClockValuation::zeros(n)
}

fn exp1() -> Analyzer {
    Analyzer::new(parse_model_str(EXP1).unwrap())
}

fn two_clock() -> Analyzer {
    Analyzer::new(parse_model_str(TWO_CLOCK).unwrap())
}

fn value_at(a: &Analyzer, s: usize, q: usize, eta: &ClockValuation, m: u64) -> f64 {
    a.approximate(s, q, eta, &ApproxOptions::grid(m))
        .unwrap()
        .probability
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let a = exp1();
    let mut worst_closed: f64 = 0.0;
    let mut fails = Vec::new();
    for m in [1u64, 2, 4, 8, 16, 40, 64, 100, 128] {
        let v = value_at(&a, 0, 0, &origin(1), m);
        worst_closed = worst_closed.max((v - closed_form(m)).abs());
        let err = (v - exact_exp1()).abs();
        if (m >= 8 && err > 0.05) || (m >= 40 && err > 0.01) {
            fails.push(format!("m={m} err={err:.4}"));
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_closed <= 1e-12 && fails.is_empty() && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "max |value - closed form| = {worst_closed:.1e}, tolerance violations {fails:?}, runtime {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let a = exp1();
    let mut ratios = Vec::new();
    for m in [8u64, 16, 32, 64] {
        let e1 = (value_at(&a, 0, 0, &origin(1), m) - exact_exp1()).abs();
        let e2 = (value_at(&a, 0, 0, &origin(1), 2 * m) - exact_exp1()).abs();
        ratios.push(e1 / e2);
    }
    let elapsed = start.elapsed();
    let pass = ratios.iter().all(|r| (1.6..=2.4).contains(r)) && elapsed < Duration::from_secs(5);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.4}")).collect();
    outcome(
        pass,
        format!(
            "error ratios m/2m for m=8,16,32,64: [{}], runtime {:.3}s",
            shown.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

/// Rule chosen at `η⁺`, reset applied to the on-grid `η`; returns the target ticks and location.
fn jump_target(model: &Model, q: usize, s: usize, ticks: &[u64], m: u64) -> (usize, Vec<u64>) {
    let eta = ClockValuation::new(
        ticks
            .iter()
            .map(|&k| Rational::new(k as i128, m as i128))
            .collect(),
    );
    let plus = plus_representative(&eta, model.ceilings());
    let sig = model.signature_of_state(s);
    let enabled: Vec<_> = model
        .dta
        .rules
        .iter()
        .filter(|r| r.from == q && r.signature == sig && r.guard.is_satisfied_by(&plus))
        .collect();
    assert_eq!(
        enabled.len(),
        1,
        "fixture automata are deterministic and total"
    );
    let mut out = ticks.to_vec();
    for &x in &enabled[0].resets {
        out[x] = 0;
    }
    (enabled[0].to, out)
}

/// Straight transcription of the unfolded scheme: for `v` outside `B_max`
/// with horizon `N`,
/// `h[v] = Σ_{l<N} w^l·b·Σ_u P(s,u)·h[(v⊕lρ)⁺_u] + w^N·f(v)`
/// with `w = 1/(1+ρλ)`, `b = ρλ/(1+ρλ)` and `f(v)` the `B_max` sum at
/// `v⊕Nρ` (0 when that point is dead). Solved by plain fixed-point sweeps.
type Sink<'a> = dyn FnMut(f64, usize, usize, &[u64]) + 'a;

fn direct_unfolded_solution(model: &Model, grid: &Grid) -> HashMap<usize, f64> {
    let m = grid.m;
    let caps: Vec<u64> = model.ceilings().as_slice().iter().map(|t| t * m).collect();
    let at_max = |t: &[u64]| t.iter().zip(&caps).all(|(k, c)| k == c);
    let class = |s: usize, q: usize, t: &[u64]| {
        let eta = ClockValuation::new(
            t.iter()
                .map(|&k| Rational::new(k as i128, m as i128))
                .collect(),
        );
        if model.dta.is_final(q) {
            VertexClass::Final
        } else {
            grid.class(grid.id_of_valuation(s, q, &eta).unwrap())
        }
    };
    let unknowns: Vec<usize> = grid.unknowns().to_vec();
    let col: HashMap<usize, usize> = unknowns
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();

    // rows as (coefficients, constant)
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(unknowns.len());
    for &id in &unknowns {
        let p = grid.point(id);
        let lambda = model.ctmc.exit_rates[p.state];
        let lam = lambda.numer().to_owned() as f64 / *lambda.denom() as f64;
        let w = m as f64 / (m as f64 + lam);
        let b = lam / (m as f64 + lam);
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        let mut constant = 0.0;
        let mut add = |coef: f64, s2: usize, q2: usize, t2: &[u64]| match class(s2, q2, t2) {
            VertexClass::Final => constant += coef,
            VertexClass::Dead => {}
            VertexClass::Alive => {
                let eta = ClockValuation::new(
                    t2.iter()
                        .map(|&k| Rational::new(k as i128, m as i128))
                        .collect(),
                );
                coeffs.push((col[&grid.id_of_valuation(s2, q2, &eta).unwrap()], coef));
            }
        };
        let jump_sum = |weight: f64, t: &[u64], add: &mut Sink| {
            let (q2, t2) = jump_target(model, p.location, p.state, t, m);
            for (u, pr) in model.ctmc.transitions[p.state].iter().enumerate() {
                if *pr > Rational::from_integer(0) {
                    let pf = *pr.numer() as f64 / *pr.denom() as f64;
                    add(weight * pf, u, q2, &t2);
                }
            }
        };
        if at_max(&p.ticks) {
            jump_sum(1.0, &p.ticks, &mut add);
        } else {
            let mut t = p.ticks.clone();
            let mut wl = 1.0;
            loop {
                jump_sum(wl * b, &t, &mut add);
                wl *= w;
                let next: Vec<u64> = t.iter().zip(&caps).map(|(k, c)| (k + 1).min(*c)).collect();
                match class(p.state, p.location, &next) {
                    VertexClass::Dead => break,
                    _ if at_max(&next) => {
                        jump_sum(wl, &next, &mut add);
                        break;
                    }
                    _ => t = next,
                }
            }
        }
        rows.push((coeffs, constant));
    }

    let mut x = vec![0.0; rows.len()];
    for _ in 0..1_000_000 {
        let mut change: f64 = 0.0;
        for i in 0..rows.len() {
            let v: f64 = rows[i].0.iter().map(|(j, c)| c * x[*j]).sum::<f64>() + rows[i].1;
            change = change.max((v - x[i]).abs());
            x[i] = v;
        }
        if change < 1e-14 {
            break;
        }
    }
    unknowns.into_iter().zip(x).collect()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_shared: f64 = 0.0;
    for a in [exp1(), two_clock()] {
        for m in [4u64, 8, 16] {
            let grid = a.grid(m);
            let prime = assemble_gamma_prime(&a.model, &grid);
            let sol = solve(
                &prime,
                &SolveOptions {
                    tol: 1e-13,
                    ..SolveOptions::default()
                },
            )
            .unwrap();
            let direct = direct_unfolded_solution(&a.model, &grid);
            let unfolded = assemble_gamma_double(&a.model, &grid);
            let sol2 = solve(
                &unfolded,
                &SolveOptions {
                    tol: 1e-13,
                    ..SolveOptions::default()
                },
            )
            .unwrap();
            for (i, &id) in grid.unknowns().iter().enumerate() {
                worst = worst.max((sol.values[i] - direct[&id]).abs());
                worst_shared = worst_shared.max((sol.values[i] - sol2.values[i]).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-8 && worst_shared <= 1e-8 && elapsed < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "max |Γ′ − direct unfolded| = {worst:.1e}, max |Γ′ − library unfolded| = {worst_shared:.1e}, runtime {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let a = two_clock();
    let eta = origin(2);
    let v64 = value_at(&a, 0, 0, &eta, 64);
    let v32 = value_at(&a, 0, 0, &eta, 32);
    let opts = McOptions {
        samples: 100_000,
        k_max: None,
        seed: 20_240_611,
        level: 0.99,
        absorption: true,
    };
    let e = estimate(&a.model, &a.graph, 0, 0, &eta, &opts);
    let tol = e.half_width + (v64 - v32).abs();
    let diff = (v64 - e.p_hat).abs();
    let elapsed = start.elapsed();
    let pass = diff <= tol && e.censored == 0 && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "grid m=64 {v64:.5}, MC {:.5} (censored {}), |diff| {diff:.5} <= {tol:.5}, runtime {:.2}s",
            e.p_hat,
            e.censored,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut checked = 0usize;
    let mut bad = Vec::new();
    for a in [exp1(), two_clock()] {
        let grid = a.grid(16);
        let solved = a.solve_grid(16).unwrap();
        for id in 0..grid.size() {
            let p = grid.point(id);
            let eta = p.valuation(16);
            let class = grid.class(id);
            let expected = if a.model.dta.is_final(p.location) {
                Some(1.0)
            } else if class == VertexClass::Dead {
                Some(0.0)
            } else {
                None
            };
            let Some(expected) = expected else { continue };
            checked += 1;
            let q = a
                .approximate(p.state, p.location, &eta, &ApproxOptions::grid(16))
                .unwrap();
            if q.probability != expected
                || solved.value(id) != expected
                || q.error_bound != Some(0.0)
            {
                bad.push(format!(
                    "{}@{}",
                    a.graph.vertex_label(
                        &a.model,
                        a.graph.vertex_of(&a.model, p.state, p.location, &eta)
                    ),
                    eta
                ));
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "{checked} dead/final grid points checked, {} mismatches {:?}",
            bad.len(),
            bad.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn random_frac(rng: &mut ChaCha8Rng) -> Rational {
    let d = [2i128, 3, 4, 8, 16][rng.gen_range(0..5)];
    Rational::new(rng.gen_range(1..d), d)
}

fn random_valuation(rng: &mut ChaCha8Rng, ceilings: &Ceilings) -> ClockValuation {
    let mut shared: Vec<Rational> = Vec::new();
    let values = (0..ceilings.len())
        .map(|x| {
            let t = ceilings.get(x) as i128;
            match rng.gen_range(0..4) {
                0 => {
                    Rational::from_integer(t)
                        + random_frac(rng)
                        + Rational::from_integer(rng.gen_range(0..3))
                }
                1 => Rational::from_integer(rng.gen_range(0..=t)),
                _ if t == 0 => Rational::from_integer(0),
                _ => {
                    // reuse a fraction now and then to create ties
                    let f = if !shared.is_empty() && rng.gen_bool(0.3) {
                        shared[rng.gen_range(0..shared.len())]
                    } else {
                        random_frac(rng)
                    };
                    shared.push(f);
                    Rational::from_integer(rng.gen_range(0..t)) + f
                }
            }
        })
        .collect();
    ClockValuation::new(values)
}

/// A different valuation in the same region: fractions remapped monotonically, above values redrawn.
fn region_twin(rng: &mut ChaCha8Rng, eta: &ClockValuation, ceilings: &Ceilings) -> ClockValuation {
    let mut fracs: Vec<Rational> = Vec::new();
    for (x, v) in eta.values().iter().enumerate() {
        if *v <= ceilings.as_rational(x) && !v.is_integer() {
            fracs.push(v.fract());
        }
    }
    fracs.sort();
    fracs.dedup();
    let mut fresh: Vec<Rational> = Vec::new();
    while fresh.len() < fracs.len() {
        let f = Rational::new(rng.gen_range(1..1024), 1024);
        if !fresh.contains(&f) {
            fresh.push(f);
        }
    }
    fresh.sort();
    let values = eta
        .values()
        .iter()
        .enumerate()
        .map(|(x, v)| {
            let t = ceilings.as_rational(x);
            if *v > t {
                t + Rational::new(rng.gen_range(1..4096), 1024)
            } else if v.is_integer() {
                *v
            } else {
                let i = fracs.iter().position(|f| *f == v.fract()).unwrap();
                v.trunc() + fresh[i]
            }
        })
        .collect();
    ClockValuation::new(values)
}

fn random_guard(rng: &mut ChaCha8Rng, ceilings: &Ceilings) -> Guard {
    let rels = [Relation::Lt, Relation::Le, Relation::Gt, Relation::Ge];
    let n = rng.gen_range(1..=3);
    Guard::new(
        (0..n)
            .map(|_| {
                let clock = rng.gen_range(0..ceilings.len());
                Constraint {
                    clock,
                    rel: rels[rng.gen_range(0..4)],
                    bound: rng.gen_range(0..=ceilings.get(clock)),
                }
            })
            .collect(),
    )
}

fn criterion_6() -> Outcome {
    const TRIALS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = parse_model_str(TWO_CLOCK).unwrap();
    let ceilings_list = [
        Ceilings::new(vec![1, 1]),
        Ceilings::new(vec![2, 1, 3]),
        Ceilings::new(vec![3]),
    ];
    let mut failures: HashMap<&str, usize> = HashMap::new();
    let mut fail = |name: &'static str| *failures.entry(name).or_insert(0) += 1;

    for i in 0..TRIALS {
        let ceilings = &ceilings_list[i % ceilings_list.len()];
        let eta = random_valuation(&mut rng, ceilings);
        let twin = region_twin(&mut rng, &eta, ceilings);
        if !region_equivalent(&eta, &twin, ceilings)
            || region_of(&eta, ceilings) != region_of(&twin, ceilings)
        {
            fail("twin construction");
        }

        // guard agreement under ~
        let g = random_guard(&mut rng, ceilings);
        if g.is_satisfied_by(&eta) != g.is_satisfied_by(&twin) {
            fail("guard agreement");
        }

        // reset closure
        let resets: Vec<usize> = (0..ceilings.len()).filter(|_| rng.gen_bool(0.5)).collect();
        if !region_equivalent(&eta.reset(&resets), &twin.reset(&resets), ceilings) {
            fail("reset closure");
        }

        // η⁺ stability: the region is constant on (η, η + t1)
        let t1 = right_stable_length(&eta, ceilings);
        let plus = plus_representative(&eta, ceilings);
        let t = t1 * Rational::new(rng.gen_range(1..1024), 1024);
        if region_of(&eta.delay(&t), ceilings) != region_of(&plus, ceilings) {
            fail("plus stability");
        }
        if region_of(&plus, ceilings).is_marginal() {
            fail("plus non-marginal");
        }

        // non-marginal fixpoint
        let r = region_of(&eta, ceilings);
        if !r.is_marginal() && region_of(&plus, ceilings) != r {
            fail("non-marginal fixpoint");
        }

        // ≡b acceptance congruence on the two-clock automaton
        let two = Ceilings::new(vec![1, 1]);
        let a = random_valuation(&mut rng, &two);
        let b = ClockValuation::new(
            a.values()
                .iter()
                .map(|v| {
                    if *v > Rational::from_integer(1) {
                        Rational::new(rng.gen_range(1025..8192), 1024)
                    } else {
                        *v
                    }
                })
                .collect(),
        );
        if !equiv_b(&a, &b, &two) {
            fail("≡b construction");
        }
        let word: Vec<(usize, Rational)> = (0..6)
            .map(|_| {
                (
                    rng.gen_range(0..model.dta.alphabet.len()),
                    Rational::new(rng.gen_range(0..2048), 1024),
                )
            })
            .collect();
        let q = rng.gen_range(0..model.dta.locations.len());
        let sa = Configuration::new(q, a.clone());
        let sb = Configuration::new(q, b.clone());
        let la: Vec<usize> = Run::new(&model.dta, sa.clone(), &word)
            .map(|c| c.unwrap().location)
            .collect();
        let lb: Vec<usize> = Run::new(&model.dta, sb.clone(), &word)
            .map(|c| c.unwrap().location)
            .collect();
        if la != lb
            || accepted_within(&model.dta, &sa, &word, 6).unwrap()
                != accepted_within(&model.dta, &sb, &word, 6).unwrap()
        {
            fail("≡b congruence");
        }
    }
    let total: usize = failures.values().sum();
    outcome(
        total == 0,
        format!("{TRIALS} trials x 6 properties, failures {failures:?}"),
    )
}

fn criterion_7() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, a) in [("exp1", exp1()), ("two-clock", two_clock())] {
        let m = 32u64;
        let coarse = a.solve_grid(m).unwrap();
        let fine = a.solve_grid(2 * m).unwrap();
        let grid = &coarse.grid;
        // Richardson-style estimate 2|µ_m − µ_2m|, worst over the grid
        let mut emp: f64 = 0.0;
        for id in 0..grid.size() {
            let p = grid.point(id);
            let f = fine.value_at(p.state, p.location, &p.valuation(m)).unwrap();
            emp = emp.max(2.0 * (coarse.value(id) - f).abs());
        }
        let m1 = scaled_error_constants(&a.constants).m1;
        let bound = m1 / m as f64 + 2.0 * emp;
        let mut worst: f64 = 0.0;
        let clocks = a.model.dta.clock_count();
        for &id in grid.unknowns() {
            let p = grid.point(id);
            for x in 0..clocks {
                let mut t = p.ticks.clone();
                t[x] += 1;
                if t[x] > a.model.ceilings().get(x) * m {
                    continue;
                }
                let nb = grid.id_of(p.state, p.location, &t);
                if grid.unknown_of(nb).is_some() {
                    worst = worst.max((coarse.value(id) - coarse.value(nb)).abs());
                }
            }
        }
        pass &= worst <= bound;
        details.push(format!(
            "{name}: max adjacent diff {worst:.4} <= M1·ρ + 2·emp = {bound:.4}"
        ));
    }
    outcome(pass, details.join("; "))
}

fn criterion_8() -> Outcome {
    let a = exp1();
    let c = contraction_constant(&a.graph, &a.constants);
    let e = scaled_error_constants(&a.constants);
    // |X|·λmax·Tmax·e^{λmax·Tmax} with |X| = λ = T = 1
    let e1 = 1f64.exp();
    let checks = [
        ("M1", e.m1, e1),
        ("M2", e.m2, 2.0 * e1),
        ("M3", e.m3, 2.0 * e1),
        ("|V|", a.graph.vertex_count() as f64, 2.0 * 3.0 * 4.0),
        ("m_min", c.m_min as f64, 2.0 * 24.0 * 24.0 + 1.0),
        ("𝔠", c.value, (-1f64).exp() / 1153.0),
    ];
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| ((got - want) / want).abs() > 1e-12)
        .map(|(n, got, want)| format!("{n}: {got} vs {want}"))
        .collect();
    let shown: Vec<String> = checks
        .iter()
        .map(|(n, got, _)| format!("{n}={got:.6}"))
        .collect();
    outcome(bad.is_empty(), format!("{} {:?}", shown.join(" "), bad))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut max_res: f64 = 0.0;
    for a in [exp1(), two_clock()] {
        let grid = a.grid(16);
        let sys = assemble_gamma_prime(&a.model, &grid);
        let runs: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let init: Vec<f64> = (0..sys.len()).map(|_| rng.gen_range(-1.0..2.0)).collect();
                let opts = SolveOptions {
                    tol: 1e-12,
                    method: SolveMethod::Iterative,
                    initial: Some(init),
                    ..SolveOptions::default()
                };
                let s = solve(&sys, &opts).unwrap();
                max_res = max_res.max(residual(&sys, &s.values));
                s.values
            })
            .collect();
        for r in &runs[1..] {
            for (x, y) in r.iter().zip(&runs[0]) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    outcome(
        worst <= 1e-9,
        format!(
            "max componentwise spread over 5 random starts {worst:.1e}, max residual {max_res:.1e}"
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("closed-form correctness", criterion_1),
        ("first-order convergence", criterion_2),
        ("unfolded scheme equivalence", criterion_3),
        ("Monte Carlo cross-validation", criterion_4),
        ("zero/one boundary exactness", criterion_5),
        ("region-algebra properties", criterion_6),
        ("Lipschitz grid consistency", criterion_7),
        ("constants audit", criterion_8),
        ("solver robustness", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{}] {name}: {}", i + 1, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
