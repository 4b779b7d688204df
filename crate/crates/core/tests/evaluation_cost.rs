use kfat::evaluation::{
    cost, cost_breakdown, evaluate_set, kpi, set_errors, trace_errors, CostBreakdown, CostWeights, FilterContext,
    NONLINEAR_AY,
};
use kfat::scenario::{self, generate, Manoeuvre, ManoeuvreKind, ScenarioConfig};
use kfat::ukf::EstimateTrace;
use kfat::vehicle::{measurement_model, VehicleParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn short_set() -> Vec<Manoeuvre> {
    let p = VehicleParams::default();
    [(ManoeuvreKind::Slalom, 3), (ManoeuvreKind::JTurn, 4), (ManoeuvreKind::Skidpad, 5)]
        .iter()
        .map(|&(kind, seed)| {
            let cfg = ScenarioConfig::new(kind, 4.0, 20.0, scenario::steady_state_steer(&p, 20.0, 5.0), seed);
            generate(&cfg, &p).unwrap()
        })
        .collect()
}

/// A trace that reproduces the stored ground truth and measurements exactly.
fn oracle_trace(man: &Manoeuvre) -> EstimateTrace {
    let p = VehicleParams::default();
    let mut trace = EstimateTrace::default();
    for s in &man.samples {
        let mut m = measurement_model(&s.true_state(), &s.input(), &p).unwrap();
        m.ay = s.meas_ay;
        m.yaw_rate = s.meas_yawrate;
        trace.t.push(s.t);
        trace.states.push(s.true_state());
        trace.measurements.push(m);
        trace.sideslip.push(s.true_beta);
        trace.cov_diag.push([0.0; 3]);
    }
    trace
}

fn with_sideslip(man: &Manoeuvre, error_deg: impl Fn(usize) -> f64) -> EstimateTrace {
    let mut trace = oracle_trace(man);
    for (i, b) in trace.sideslip.iter_mut().enumerate() {
        *b += error_deg(i).to_radians();
    }
    trace
}

#[test]
fn perfect_estimator_has_zero_cost() {
    let set = short_set();
    let errors: Vec<_> = set.iter().map(|m| trace_errors(&oracle_trace(m), m).unwrap()).collect();
    let b = CostBreakdown::from_errors(&errors, &CostWeights::default()).unwrap();
    assert_eq!(b.total, 0.0);
}

#[test]
fn cost_ignores_manoeuvre_order() {
    let set = short_set();
    let ctx = FilterContext::default();
    let q = [1e-4, 1e-3, 1e-5];
    let forward = cost(&q, &set, &CostWeights::default(), &ctx).unwrap();
    let mut reversed = set.clone();
    reversed.reverse();
    let backward = cost(&q, &reversed, &CostWeights::default(), &ctx).unwrap();
    assert!((forward - backward).abs() <= 1e-12 * forward);
}

#[test]
fn cost_is_linear_in_weights_on_real_runs() {
    let set = short_set();
    let ctx = FilterContext::default();
    let q = [1e-3, 1e-4, 1e-6];
    let j = |w: [f64; 3]| cost(&q, &set, &CostWeights::new(w[0], w[1], w[2]).unwrap(), &ctx).unwrap();
    let (a, b) = ([1.0, 0.5, 0.0], [2.0, 0.0, 3.0]);
    assert!((j([3.0, 0.5, 3.0]) - j(a) - j(b)).abs() < 1e-12);
}

#[test]
fn cost_is_deterministic_across_thread_counts() {
    let set = short_set();
    let ctx = FilterContext::default();
    let q = [1e-2, 1e-3, 1e-4];
    let pooled = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| cost_breakdown(&q, &set, &CostWeights::default(), &ctx).unwrap())
    };
    assert_eq!(pooled(1), pooled(3));
}

#[test]
fn zero_reference_channel_is_an_error() {
    let p = VehicleParams::default();
    let mut cfg = ScenarioConfig::new(ManoeuvreKind::Skidpad, 2.0, 20.0, 0.0, 0);
    cfg.sensor_noise = scenario::SensorNoise::zero();
    cfg.mismatch = scenario::Mismatch::none();
    let man = generate(&cfg, &p).unwrap();
    assert!(set_errors(&[1e-4; 3], &[man], &FilterContext::default()).is_err());
}

#[test]
fn kpi_hand_examples() {
    let man = &short_set()[0];
    let zero = kpi(&oracle_trace(man), man).unwrap();
    assert_eq!((zero.rmse, zero.mae), (0.0, 0.0));

    let offset = kpi(&with_sideslip(man, |_| 1.0), man).unwrap();
    assert!((offset.rmse - 1.0).abs() < 1e-9 && (offset.mae - 1.0).abs() < 1e-9);

    // one 2 deg error in the first 100 samples
    let mut first100 = man.clone();
    first100.samples.truncate(100);
    let spike = kpi(&with_sideslip(&first100, |i| if i == 37 { 2.0 } else { 0.0 }), &first100).unwrap();
    assert!((spike.mae - 2.0).abs() < 1e-9, "{}", spike.mae);
    assert!((spike.rmse - 0.2).abs() < 1e-9, "{}", spike.rmse);
}

#[test]
fn nonlinear_kpis_absent_without_qualifying_samples() {
    let p = VehicleParams::default();
    let cfg = ScenarioConfig::new(ManoeuvreKind::Skidpad, 2.0, 15.0, scenario::steady_state_steer(&p, 15.0, 1.0), 1);
    let man = generate(&cfg, &p).unwrap();
    assert!(man.samples.iter().all(|s| s.meas_ay.abs() < NONLINEAR_AY));
    let k = kpi(&with_sideslip(&man, |_| 0.5), &man).unwrap();
    assert_eq!((k.rmse_non, k.mae_non, k.nonlinear_samples), (None, None, 0));
    let json = serde_json::to_value(&k).unwrap();
    assert!(json["rmse_non"].is_null());
}

#[test]
fn kpis_match_brute_force_on_random_traces() {
    let set = short_set();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let man = &set[rng.gen_range(0..set.len())];
        let noise: Vec<f64> = (0..man.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let trace = with_sideslip(man, |i| noise[i]);
        let k = kpi(&trace, man).unwrap();
        let err: Vec<f64> = trace.sideslip.iter().zip(&man.samples).map(|(b, s)| (b - s.true_beta).to_degrees()).collect();
        let rmse = (err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64).sqrt();
        let mae = err.iter().map(|e| e.abs()).fold(0.0, f64::max);
        assert!((k.rmse - rmse).abs() < 1e-12 && (k.mae - mae).abs() < 1e-12);
        assert!(k.mae >= k.rmse / (man.len() as f64).sqrt());
        assert!(k.mae >= k.rmse);
        let masked: Vec<f64> = err
            .iter()
            .zip(&man.samples)
            .filter(|(_, s)| s.meas_ay.abs() >= 4.0)
            .map(|(e, _)| *e)
            .collect();
        if masked.is_empty() {
            assert!(k.rmse_non.is_none());
        } else {
            let rmse_non = (masked.iter().map(|e| e * e).sum::<f64>() / masked.len() as f64).sqrt();
            let mae_non = masked.iter().map(|e| e.abs()).fold(0.0, f64::max);
            assert!((k.rmse_non.unwrap() - rmse_non).abs() < 1e-12);
            assert!((k.mae_non.unwrap() - mae_non).abs() < 1e-12);
        }
    }
}

#[test]
fn report_aggregate_is_mean_of_manoeuvres() {
    let set = short_set();
    let (report, traces) = evaluate_set(&[1e-4, 1e-3, 1e-5], &set, &FilterContext::default()).unwrap();
    assert_eq!(traces.len(), set.len());
    let mean = report.manoeuvres.iter().map(|m| m.rmse).sum::<f64>() / set.len() as f64;
    assert!((report.rmse - mean).abs() < 1e-12);
}

#[test]
fn correct_noise_beats_misscaled_noise_on_noise_only_set() {
    let set = scenario::noise_only_set(0).unwrap();
    let ctx = FilterContext::default();
    let w = CostWeights::default();
    let q = scenario::noise_only_true_q();
    let j_true = cost(&q, &set, &w, &ctx).unwrap();
    let j_big = cost(&q.map(|v| v * 100.0), &set, &w, &ctx).unwrap();
    let j_small = cost(&q.map(|v| v / 100.0), &set, &w, &ctx).unwrap();
    assert!(j_true < j_big, "{j_true} vs {j_big}");
    assert!(j_true < j_small, "{j_true} vs {j_small}");
}
