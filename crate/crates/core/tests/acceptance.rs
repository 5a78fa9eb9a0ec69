//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any failure.

mod common;

use std::path::Path;
use std::time::Instant;

use common::*;
use discounted_oco::baselines::{l2_regularized_ogd_step, Domain, LinearFtrl, OgdLearner, StepRule};
use discounted_oco::environments::{rademacher_stream, StreamKind, StreamSpec};
use discounted_oco::harness::{run_experiment, Algorithm, ExperimentConfig, ExperimentReport};
use discounted_oco::metrics::RunLedger;
use discounted_oco::scalar::{magnitude_regret_bound, MagnitudeBoundInputs};
use discounted_oco::schedules::forgetting_multiplier;
use discounted_oco::special::erfi;
use discounted_oco::{DiscountSchedule, ScalarLearner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const SUITE_STREAMS: u64 = 1000;
const SUITE_HORIZON: usize = 500;
const SUITE_LAMBDA: f64 = 0.99;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn discounted_predictions(gs: &[f64], lambda: f64) -> Vec<f64> {
    let mut learner = ScalarLearner::discounted(1.0).unwrap();
    gs.iter().map(|g| learner.update(*g, lambda, None).unwrap().x).collect()
}

fn undiscounted_predictions(gs: &[f64]) -> Vec<f64> {
    let mut learner = ScalarLearner::undiscounted(1.0).unwrap();
    gs.iter().map(|g| learner.update(*g, 1.0, None).unwrap().x).collect()
}

fn oracle_predictions(gs: &[f64]) -> Vec<f64> {
    let mut oracle = MagnitudeOracle::new(1.0);
    gs.iter().map(|g| oracle.step(*g, 1.0, true).x).collect()
}

fn worst_relative(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn rescaling_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for &lambda in &[0.9f64, 0.95, 0.99] {
        for seed in 0..100 {
            let gs = uniform_stream(1_000 + seed, 200);
            let surrogate: Vec<f64> = gs.iter().enumerate().map(|(t, g)| g / lambda.powi(t as i32)).collect();
            let discounted = discounted_predictions(&gs, lambda);
            let reference = oracle_predictions(&surrogate);
            worst = worst.max(worst_relative(&discounted, &reference, 1.0));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(worst <= 1e-9 && elapsed < 5.0, format!("max rel diff {worst:.2e}, {elapsed:.2} s"))
}

fn unit_schedule_reduction() -> Outcome {
    let mut worst_oracle = 0.0f64;
    let mut worst_variant = 0.0f64;
    for seed in 0..100 {
        let gs = suite_stream(2_000 + seed, 1000);
        let discounted = discounted_predictions(&gs, 1.0);
        worst_oracle = worst_oracle.max(worst_relative(&discounted, &oracle_predictions(&gs), 1.0));
        worst_variant = worst_variant.max(worst_relative(&discounted, &undiscounted_predictions(&gs), 1.0));
    }
    check(
        worst_oracle <= 1e-12 && worst_variant <= 1e-12,
        format!("vs oracle {worst_oracle:.2e}, vs undiscounted variant {worst_variant:.2e}"),
    )
}

fn scale_freeness() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let gs = suite_stream(3_000 + seed, 1000);
        let base = undiscounted_predictions(&gs);
        for &c in &[1e-3, 1e3] {
            let scaled: Vec<f64> = gs.iter().map(|g| c * g).collect();
            worst = worst.max(worst_relative(&base, &undiscounted_predictions(&scaled), 1.0));
        }
    }
    check(worst <= 1e-9, format!("max rel diff {worst:.2e}"))
}

fn comparator_grid() -> Vec<f64> {
    (0..=10).map(|i| -1.0 + 0.2 * i as f64).collect()
}

fn ogd_suite(rule: StepRule, bound: impl Fn(&[f64]) -> f64) -> (usize, usize, f64) {
    let mut violations = 0;
    let mut checks = 0;
    let mut tightest = f64::INFINITY;
    for seed in 0..SUITE_STREAMS {
        let gs = suite_stream(seed, SUITE_HORIZON);
        let mut learner = OgdLearner::new(vec![0.0], Domain::interval(-1.0, 1.0), rule).unwrap();
        let xs: Vec<f64> = gs
            .iter()
            .map(|g| {
                let x = learner.predict()[0];
                learner.step(&[*g], SUITE_LAMBDA).unwrap();
                x
            })
            .collect();
        let b = bound(&gs);
        for u in comparator_grid() {
            let regret = linear_regret(&gs, &xs, u, SUITE_LAMBDA);
            checks += 1;
            if regret > b {
                violations += 1;
            }
            tightest = tightest.min(b - regret);
        }
    }
    (violations, checks, tightest)
}

fn horizon_ogd_bound() -> Outcome {
    let h = horizon_closed_form(SUITE_LAMBDA, SUITE_HORIZON);
    let (violations, checks, slack) = ogd_suite(StepRule::Horizon { d: 2.0, g: 1.0 }, |_| 1.5 * 2.0 * h.sqrt());
    check(violations == 0, format!("{violations}/{checks} violations, min slack {slack:.3}"))
}

fn adagrad_bound() -> Outcome {
    let (violations, checks, slack) =
        ogd_suite(StepRule::AdaGrad { d: 2.0 }, |gs| 1.5 * 2.0 * variance_direct(gs, SUITE_LAMBDA).sqrt());
    check(violations == 0, format!("{violations}/{checks} violations, min slack {slack:.3}"))
}

fn magnitude_bound() -> Outcome {
    let lambda = SUITE_LAMBDA;
    let horizon = SUITE_HORIZON;
    let mut violations = 0;
    let mut checks = 0;
    let mut tightest = f64::INFINITY;
    for seed in 0..SUITE_STREAMS {
        let gs = suite_stream(seed, horizon);
        let xs = discounted_predictions(&gs, lambda);
        let variance = variance_direct(&gs, lambda);
        let lipschitz = lipschitz_direct(&gs, lambda);
        for &u in &[0.0, 0.5, 1.0, 2.0, 5.0] {
            let regret = linear_regret(&gs, &xs, u, lambda);
            for &tau in &[1usize, 50, 500] {
                let split = horizon - tau;
                let max = |xs: &[f64]| xs.iter().cloned().fold(0.0, f64::max);
                let inputs = MagnitudeBoundInputs {
                    variance,
                    lipschitz,
                    comparator: u,
                    eps: 1.0,
                    recent_max_x: max(&xs[split..]),
                    forgetting: lambda.powi(tau as i32),
                    old_max_x: max(&xs[..split]),
                    old_lipschitz: lipschitz_direct(&gs[..split], lambda),
                };
                let bound = magnitude_regret_bound(&inputs).unwrap();
                checks += 1;
                if regret > bound {
                    violations += 1;
                }
                tightest = tightest.min(bound - regret);
            }
        }
    }
    check(violations == 0, format!("{violations}/{checks} violations, min slack {tightest:.3}"))
}

fn rademacher_lower_bound() -> Outcome {
    let start = Instant::now();
    let horizon = SUITE_HORIZON;
    let lambda = SUITE_LAMBDA;
    let schedule = DiscountSchedule::constant(lambda);
    let seeds = 10_000u64;
    let v = horizon_closed_form(lambda, horizon);
    let target = (v / 2.0).sqrt();
    let learners: [(&str, fn() -> Box<dyn FnMut(f64) -> f64>); 3] = [
        ("zero", || Box::new(|_| 0.0)),
        ("horizon_ogd", || {
            let mut l = OgdLearner::new(vec![0.0], Domain::interval(-1.0, 1.0), StepRule::Horizon { d: 2.0, g: 1.0 })
                .unwrap();
            Box::new(move |g| {
                let x = l.predict()[0];
                l.step(&[g], SUITE_LAMBDA).unwrap();
                x
            })
        }),
        ("magl_d", || {
            let mut l = ScalarLearner::discounted(1.0).unwrap();
            Box::new(move |g| l.update(g, SUITE_LAMBDA, None).unwrap().x)
        }),
    ];
    let mut details = Vec::new();
    let mut ok = true;
    for (name, make) in learners {
        let mut samples = Vec::with_capacity(seeds as usize);
        for seed in 0..seeds {
            let spec = StreamSpec {
                kind: StreamKind::Rademacher { u: vec![1.0], budget: Some(v), lipschitz: 1.0 },
                seed,
                horizon,
            };
            let gs: Vec<f64> = rademacher_stream(&spec, &schedule).unwrap().into_iter().map(|g| g[0]).collect();
            let mut learner = make();
            let xs: Vec<f64> = gs.iter().map(|g| learner(*g)).collect();
            samples.push(linear_regret(&gs, &xs, 1.0, lambda).max(linear_regret(&gs, &xs, -1.0, lambda)));
        }
        let mean = samples.iter().sum::<f64>() / seeds as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        let se = (var / seeds as f64).sqrt();
        ok &= mean > target - 2.0 * se;
        details.push(format!("{name} {mean:.3}±{se:.3}"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        ok && elapsed < 60.0,
        format!("{} vs √(V/2) = {target:.3}, {elapsed:.1} s", details.join(", ")),
    )
}

fn ocp_report() -> ExperimentReport {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/ocp_sudden.toml");
    let config = ExperimentConfig::load(&path).unwrap();
    assert_eq!(config.alpha, 0.1);
    assert_eq!(config.trials, 10);
    assert_eq!(config.environment.horizon, 6011);
    run_experiment(&config).unwrap()
}

fn conformal_ledgers(report: &ExperimentReport) -> Vec<(&RunLedger, bool)> {
    report
        .outcomes
        .iter()
        .filter_map(|o| match o.ledger.meta.learner.algorithm {
            Algorithm::Acp { eps } if eps == 1.0 => Some((&o.ledger, false)),
            Algorithm::AcpUndiscounted { eps } if eps == 1.0 => Some((&o.ledger, true)),
            _ => None,
        })
        .collect()
}

fn ocp_coverage(report: &ExperimentReport) -> Outcome {
    let alpha = 0.1;
    let mut ok = true;
    let mut details = Vec::new();
    for undiscounted in [false, true] {
        let ledgers: Vec<&RunLedger> =
            conformal_ledgers(report).into_iter().filter(|(_, u)| *u == undiscounted).map(|(l, _)| l).collect();
        let mut coverage = 0.0;
        let mut lce = 0.0;
        for ledger in &ledgers {
            if !undiscounted {
                assert!(ledger.rounds.iter().all(|r| r.lambda_prev == 0.999));
            }
            let err: Vec<u8> = ledger.rounds.iter().map(|r| u8::from(r.x[0] <= r.r_star.unwrap())).collect();
            coverage += 1.0 - err.iter().map(|e| *e as f64).sum::<f64>() / err.len() as f64;
            lce += lce_brute_force(&err, 100, alpha);
        }
        let n = ledgers.len() as f64;
        let (coverage, lce) = (coverage / n, lce / n);
        ok &= ledgers.len() == 10 && (0.85..=0.93).contains(&coverage) && lce <= 0.15;
        let name = if undiscounted { "undiscounted" } else { "discounted" };
        details.push(format!("{name} coverage {coverage:.4} lce {lce:.4}"));
    }
    check(ok, details.join(", "))
}

fn ocp_coverage_bound(report: &ExperimentReport) -> Outcome {
    let alpha = 0.1;
    let mut violations = 0;
    let mut zeroed = 0;
    let mut checks = 0;
    let mut recorded_firings = 0;
    let mut worst_ratio = 0.0f64;
    for (ledger, undiscounted) in conformal_ledgers(report) {
        let d = ledger.meta.hidden_ceiling.unwrap();
        assert_eq!(d, ledger.rounds.iter().map(|r| r.r_star.unwrap()).fold(0.0, f64::max));
        recorded_firings += ledger.meta.guard_firings;
        let factor = 1.0 + (1.0 + 2.0 * d).ln().sqrt();
        let mut oracle = MagnitudeOracle::new(1.0);
        let mut s_star = 0.0;
        for r in &ledger.rounds {
            let lambda = if undiscounted { 1.0 } else { r.lambda_prev };
            let g = if r.x[0] > r.r_star.unwrap() { alpha } else { alpha - 1.0 };
            assert_eq!(g, r.g[0]);
            if oracle.step(g, lambda, false).zeroed {
                zeroed += 1;
            }
            s_star = lambda * s_star - g;
            let bound = 2.0 * oracle.v.sqrt() * factor + 15.0 * oracle.h * factor * factor;
            checks += 1;
            if s_star.abs() > bound {
                violations += 1;
            }
            worst_ratio = worst_ratio.max(s_star.abs() / bound);
        }
    }
    check(
        violations == 0 && zeroed == 0 && recorded_firings == 0,
        format!(
            "{violations}/{checks} violations (max |S*|/bound {worst_ratio:.3}), guard fired {zeroed} times (ledgers report {recorded_firings})"
        ),
    )
}

fn ftrl_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dim = rng.random_range(1..=5);
        let lambda: f64 = rng.random_range(0.5..1.0);
        let c: f64 = rng.random_range(0.01..1.0);
        let gamma = (1.0 - lambda) / c;
        let mut ogd = vec![0.0; dim];
        let mut ftrl = LinearFtrl::new(dim, lambda, c);
        let mut history: Vec<Vec<f64>> = Vec::new();
        for _ in 0..500 {
            let g: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            history.push(g.clone());
            ogd = l2_regularized_ogd_step(&ogd, &g, c, gamma);
            let f = ftrl.step(&g);
            for j in 0..dim {
                let column: Vec<f64> = history.iter().map(|g| g[j]).collect();
                let direct = -c * discounted_total(&column, lambda);
                let scale = direct.abs().max(1.0);
                worst = worst.max((ogd[j] - f[j]).abs() / scale).max((f[j] - direct).abs() / scale);
            }
        }
    }
    check(worst <= 1e-12, format!("max diff {worst:.2e}"))
}

fn erfi_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..=500 {
        let x = i as f64 / 100.0;
        let reference = erfi_quadrature(x);
        worst = worst.max((erfi(x).unwrap() - reference).abs() / reference.abs().max(1.0));
    }
    let at_one = erfi(1.0).unwrap();
    check(
        worst <= 1e-10 && (at_one - 1.462652).abs() <= 1e-6,
        format!("max rel diff {worst:.2e}, erfi(1) = {at_one:.9}"),
    )
}

fn forgetting_windows() -> Outcome {
    let mut grid: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
    grid.extend([0.9999, 0.99999, 1.0 - 1e-6]);
    let inv_e = (-1.0f64).exp();
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for &lambda in &grid {
        let exact = lambda.powf(1.0 / (1.0 - lambda));
        worst = worst.max(exact - inv_e);
        ok &= exact <= inv_e;
        let window = (1.0 / (1.0 - lambda)).ceil() as usize;
        let multiplier = forgetting_multiplier(&DiscountSchedule::constant(lambda), 0, window).unwrap();
        ok &= multiplier <= inv_e;
    }
    let near_one = (1.0 - 1e-6f64).powf(1e6);
    ok &= (near_one - inv_e).abs() <= 1e-5;
    let example = forgetting_multiplier(&DiscountSchedule::constant(0.99), 0, 700).unwrap();
    ok &= example < 1e-3;
    check(
        ok,
        format!("max λ^(1/(1-λ)) - 1/e = {worst:.2e} over {} values, 0.99^700 = {example:.3e}", grid.len()),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 rescaling equivalence", rescaling_equivalence()),
        ("2 unit-schedule reduction", unit_schedule_reduction()),
        ("3 scale-freeness", scale_freeness()),
        ("4 horizon OGD bound", horizon_ogd_bound()),
        ("5 discounted AdaGrad bound", adagrad_bound()),
        ("6 magnitude learner bound", magnitude_bound()),
        ("7 Rademacher lower bound", rademacher_lower_bound()),
    ];
    let report = ocp_report();
    results.push(("8 conformal coverage", ocp_coverage(&report)));
    results.push(("9 coverage bound and guard", ocp_coverage_bound(&report)));
    results.push(("10 L2-OGD equals linear FTRL", ftrl_equivalence()));
    results.push(("11 erfi against quadrature", erfi_oracle()));
    results.push(("12 forgetting windows", forgetting_windows()));

    let mut failures = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failures} failed", results.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
