use std::convert::Infallible;

use kfat::ga::{ga_minimize, ga_minimize_with_history, GaConfig, GaError};
use kfat::tsbo::{BoxSpace, Scale};
use kfat::tuning::Stage;

fn unit(d: usize) -> BoxSpace {
    BoxSpace::new(vec![0.0; d], vec![1.0; d], vec![Scale::Linear; d]).unwrap()
}

fn quadratic(u: &[f64]) -> Result<f64, Infallible> {
    Ok(u.iter().map(|v| (v - 0.5) * (v - 0.5)).sum())
}

#[test]
fn full_budget_is_spent() {
    let r = ga_minimize(quadratic, &unit(3), &GaConfig::default()).unwrap();
    assert_eq!(r.evaluations(), 225);
    assert_eq!(r.stage_counts[&Stage::Genetic], 225);
    assert!(r.trace.iter().all(|e| e.af.is_none()));
    assert_eq!(r.refits, 0);
}

#[test]
fn quadratic_optimum_with_conventional_elitism() {
    let cfg = GaConfig { elite_fraction: 0.05, ..GaConfig::default() };
    assert_eq!(cfg.elite_count(), 1);
    let r = ga_minimize(quadratic, &unit(3), &cfg).unwrap();
    assert!(r.best_j.sqrt() <= 0.05, "distance {}", r.best_j.sqrt());
}

#[test]
fn default_elitism_improves_on_the_initial_population() {
    let cfg = GaConfig::default();
    let (r, history) = ga_minimize_with_history(quadratic, &unit(3), &cfg).unwrap();
    assert!(r.best_j < history[0].fitness[0]);
    assert!(r.best_j.sqrt() <= 0.1, "distance {}", r.best_j.sqrt());
}

#[test]
fn elites_survive_unchanged() {
    let cfg = GaConfig::default();
    let (_, history) = ga_minimize_with_history(quadratic, &unit(3), &cfg).unwrap();
    assert_eq!(history.len(), cfg.max_generations);
    let k = cfg.elite_count();
    for pair in history.windows(2) {
        for elite in &pair[0].individuals[..k] {
            assert!(pair[1].individuals.iter().any(|x| x == elite), "elite {elite:?} lost");
        }
        assert!(pair[1].fitness[0] <= pair[0].fitness[0]);
    }
}

#[test]
fn individuals_stay_in_the_cube() {
    let edge = |u: &[f64]| -> Result<f64, Infallible> { Ok(-u.iter().sum::<f64>()) };
    let cfg = GaConfig { mutation_std: 0.8, ..GaConfig::default() };
    let (r, history) = ga_minimize_with_history(edge, &unit(2), &cfg).unwrap();
    for g in &history {
        for x in &g.individuals {
            assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
    assert!(r.best_j >= -2.0);
}

#[test]
fn same_seed_same_history() {
    let space = BoxSpace::process_noise();
    let f = |q: &[f64]| -> Result<f64, Infallible> { Ok(q.iter().map(|v| (v.log10() + 4.0).powi(2)).sum()) };
    let cfg = GaConfig { seed: 11, ..GaConfig::default() };
    let a = ga_minimize_with_history(f, &space, &cfg).unwrap();
    let b = ga_minimize_with_history(f, &space, &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    let c = ga_minimize(f, &space, &GaConfig { seed: 12, ..GaConfig::default() }).unwrap();
    assert_ne!(a.0.trace, c.trace);
}

#[test]
fn objective_failure_keeps_the_partial_trace() {
    let mut calls = 0;
    let f = |u: &[f64]| -> Result<f64, std::io::Error> {
        calls += 1;
        if calls > 20 {
            Err(std::io::Error::other("boom"))
        } else {
            Ok(quadratic(u).unwrap())
        }
    };
    match ga_minimize(f, &unit(2), &GaConfig::default()) {
        Err(GaError::Objective(failure)) => assert_eq!(failure.partial.evaluations(), 20),
        other => panic!("expected an objective failure, got {other:?}"),
    }
}
