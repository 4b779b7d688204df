use kfat::scenario::{self, generate, ManoeuvreKind, Mismatch, ScenarioConfig, SensorNoise};
use kfat::ukf::{
    default_initial_cov, predict, run_filter, run_filter_with_initial_cov, update, Belief, NoiseConfig,
    StateSpaceModel, UkfConfig,
};
use kfat::vehicle::VehicleParams;
use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct LinearSystem {
    f: Matrix3<f64>,
    b: Vector3<f64>,
    h: Matrix3<f64>,
}

impl StateSpaceModel<3, 3> for LinearSystem {
    type Input = f64;
    type Error = ();
    fn propagate(&self, x: &Vector3<f64>, u: &f64, _dt: f64) -> Result<Vector3<f64>, ()> {
        Ok(self.f * x + self.b * *u)
    }
    fn observe(&self, x: &Vector3<f64>, _u: &f64) -> Result<Vector3<f64>, ()> {
        Ok(self.h * x)
    }
}

fn linear_system() -> LinearSystem {
    LinearSystem {
        f: Matrix3::new(0.98, 0.05, 0.0, -0.04, 0.95, 0.02, 0.0, 0.01, 0.99),
        b: Vector3::new(0.1, 0.0, 0.05),
        h: Matrix3::new(1.0, 0.0, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 1.0),
    }
}

/// Textbook Kalman filter, written without sigma points.
fn kalman_oracle(
    sys: &LinearSystem,
    mean: Vector3<f64>,
    cov: Matrix3<f64>,
    u: f64,
    z: Vector3<f64>,
    q: Vector3<f64>,
    r: Vector3<f64>,
) -> (Vector3<f64>, Matrix3<f64>) {
    let xp = sys.f * mean + sys.b * u;
    let pp = sys.f * cov * sys.f.transpose() + Matrix3::from_diagonal(&q);
    let s = sys.h * pp * sys.h.transpose() + Matrix3::from_diagonal(&r);
    let k = pp * sys.h.transpose() * s.try_inverse().unwrap();
    let x = xp + k * (z - sys.h * xp);
    let p = (Matrix3::identity() - k * sys.h) * pp;
    (x, (p + p.transpose()) * 0.5)
}

fn simulate_linear(steps: usize, seed: u64) -> (Vec<f64>, Vec<Vector3<f64>>) {
    let sys = linear_system();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = move || -> f64 { StandardNormal.sample(&mut rng) };
    let mut x = Vector3::new(1.0, -0.5, 0.2);
    let mut inputs = Vec::new();
    let mut meas = Vec::new();
    for k in 0..steps {
        let u = (k as f64 * 0.05).sin();
        x = sys.f * x + sys.b * u + Vector3::new(gauss(), gauss(), gauss()) * 0.05;
        inputs.push(u);
        meas.push(sys.h * x + Vector3::new(gauss(), gauss(), gauss()) * 0.1);
    }
    (inputs, meas)
}

#[test]
fn ukf_matches_kalman_filter_on_linear_system() {
    let sys = linear_system();
    let cfg = UkfConfig::default();
    let q = Vector3::new(2.5e-3, 2.5e-3, 2.5e-3);
    let r = Vector3::new(1e-2, 1e-2, 1e-2);
    let (inputs, meas) = simulate_linear(500, 11);
    let mut ukf = Belief { mean: Vector3::zeros(), cov: Matrix3::identity() };
    let (mut kf_mean, mut kf_cov) = (Vector3::zeros(), Matrix3::identity());
    let mut worst: f64 = 0.0;
    for (u, z) in inputs.iter().zip(&meas) {
        let predicted = predict(&sys, &ukf, u, &q, &cfg).unwrap();
        ukf = update(&sys, &predicted, u, z, &r, &cfg).unwrap().0;
        (kf_mean, kf_cov) = kalman_oracle(&sys, kf_mean, kf_cov, *u, *z, q, r);
        let err = (ukf.mean - kf_mean).amax();
        worst = worst.max(err);
        assert!(err < 1e-8, "mean error {err}");
        assert!((ukf.cov - kf_cov).amax() < 1e-8);
    }
    eprintln!("worst linear-system mean deviation {worst:e}");
}

#[test]
fn scaling_all_noise_levels_leaves_linear_means_unchanged() {
    let sys = linear_system();
    let cfg = UkfConfig::default();
    let q = Vector3::new(2.5e-3, 1e-3, 4e-3);
    let r = Vector3::new(1e-2, 2e-2, 5e-3);
    let (inputs, meas) = simulate_linear(200, 5);
    for scale in [1e-3, 7.0, 1e3] {
        let mut a = Belief { mean: Vector3::zeros(), cov: Matrix3::identity() };
        let mut b = Belief { mean: Vector3::zeros(), cov: Matrix3::identity() * scale };
        for (u, z) in inputs.iter().zip(&meas) {
            a = update(&sys, &predict(&sys, &a, u, &q, &cfg).unwrap(), u, z, &r, &cfg).unwrap().0;
            b = update(&sys, &predict(&sys, &b, u, &(q * scale), &cfg).unwrap(), u, z, &(r * scale), &cfg)
                .unwrap()
                .0;
            assert!((a.mean - b.mean).amax() < 1e-8);
        }
    }
}

fn slalom(noise: SensorNoise, mismatch: Mismatch, process_noise: Option<[f64; 3]>) -> scenario::Manoeuvre {
    let p = VehicleParams::default();
    let mut cfg = ScenarioConfig::new(ManoeuvreKind::Slalom, 12.0, 20.0, scenario::steady_state_steer(&p, 20.0, 5.0), 0);
    cfg.sensor_noise = noise;
    cfg.mismatch = mismatch;
    cfg.process_noise = process_noise;
    generate(&cfg, &p).unwrap()
}

#[test]
fn trace_has_manoeuvre_length_and_is_deterministic() {
    let man = slalom(SensorNoise::zero(), Mismatch::none(), None);
    let noise = NoiseConfig::new([1e-4, 1e-4, 1e-5], [1e-4, 1e-4, 1e-6]);
    let p = VehicleParams::default();
    let a = run_filter(&man, &noise, &UkfConfig::default(), &p).unwrap();
    let b = run_filter(&man, &noise, &UkfConfig::default(), &p).unwrap();
    assert_eq!(a.len(), man.len());
    assert_eq!(a, b);
    for d in &a.cov_diag {
        assert!(d.iter().all(|v| *v > 0.0));
    }
}

#[test]
fn degenerate_noise_tracks_straight_line_exactly() {
    let p = VehicleParams::default();
    let mut cfg = ScenarioConfig::new(ManoeuvreKind::Skidpad, 1.0, 20.0, 0.0, 0);
    cfg.sensor_noise = SensorNoise::zero();
    cfg.mismatch = Mismatch::none();
    let man = generate(&cfg, &p).unwrap();
    let noise = NoiseConfig::new([1e-14; 3], [1e-14; 3]);
    let trace = run_filter(&man, &noise, &UkfConfig::default(), &p).unwrap();
    for (s, est) in man.samples.iter().zip(&trace.states) {
        assert!((s.true_vx - est.vx).abs() < 1e-6);
        assert!((s.true_vy - est.vy).abs() < 1e-6);
        assert!((s.true_yawrate - est.yaw_rate).abs() < 1e-6);
    }
}

#[test]
fn true_noise_config_estimates_sideslip_well() {
    let q_std = scenario::NOISE_ONLY_PROCESS_STD;
    let man = slalom(SensorNoise::default(), Mismatch::none(), Some(q_std));
    let noise = NoiseConfig::new(scenario::noise_only_true_q(), SensorNoise::default().variances());
    let trace = run_filter(&man, &noise, &UkfConfig::default(), &VehicleParams::default()).unwrap();
    let mse: f64 = man
        .samples
        .iter()
        .zip(&trace.sideslip)
        .map(|(s, b)| (s.true_beta - b).powi(2))
        .sum::<f64>()
        / man.len() as f64;
    let rmse_deg = mse.sqrt().to_degrees();
    assert!(rmse_deg < 0.5, "sideslip RMSE {rmse_deg} deg");
}

#[test]
fn larger_lateral_process_noise_follows_measurements_more_closely() {
    let p = VehicleParams::default();
    let mut cfg = ScenarioConfig::new(ManoeuvreKind::Skidpad, 15.0, 15.0, scenario::steady_state_steer(&p, 15.0, 6.0), 2);
    cfg.sensor_noise = SensorNoise::default();
    let man = generate(&cfg, &p).unwrap();
    let r = SensorNoise::default().variances();
    let residual = |q_vy: f64| {
        let noise = NoiseConfig::new([1e-4, q_vy, 1e-6], r);
        let trace = run_filter(&man, &noise, &UkfConfig::default(), &p).unwrap();
        man.samples
            .iter()
            .zip(&trace.measurements)
            .map(|(s, m)| (s.meas_ay - m.ay).abs())
            .sum::<f64>()
            / man.len() as f64
    };
    let small = residual(1e-8);
    let large = residual(1e-2);
    assert!(large < small, "ay residual large-q {large} vs small-q {small}");
}

#[test]
fn scaled_initial_cov_and_noise_on_vehicle_model_stay_close() {
    // The vehicle model is nonlinear, so equal scaling only approximately
    // preserves the estimates.
    let man = slalom(SensorNoise::default(), Mismatch::default(), None);
    let p = VehicleParams::default();
    let noise = NoiseConfig::new([1e-4, 1e-4, 1e-5], SensorNoise::default().variances());
    let scaled = NoiseConfig::new(noise.process_noise_diag.map(|v| v * 4.0), noise.observation_noise_diag.map(|v| v * 4.0));
    let a = run_filter(&man, &noise, &UkfConfig::default(), &p).unwrap();
    let b = run_filter_with_initial_cov(&man, &scaled, &UkfConfig::default(), &p, &(default_initial_cov() * 4.0)).unwrap();
    for (x, y) in a.states.iter().zip(&b.states) {
        assert!((x.vy - y.vy).abs() < 1e-3);
    }
}

#[test]
fn trace_csv_has_fixed_columns() {
    let man = slalom(SensorNoise::zero(), Mismatch::none(), None);
    let noise = NoiseConfig::new([1e-4; 3], [1e-4; 3]);
    let trace = run_filter(&man, &noise, &UkfConfig::default(), &VehicleParams::default()).unwrap();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,vx_est,vy_est,yawrate_est,beta_est,p11,p22,p33\n"));
    assert_eq!(text.lines().count(), man.len() + 1);
}

#[test]
fn dt_mismatch_is_rejected() {
    let man = slalom(SensorNoise::zero(), Mismatch::none(), None);
    let cfg = UkfConfig { dt: 0.02, ..UkfConfig::default() };
    let noise = NoiseConfig::new([1e-4; 3], [1e-4; 3]);
    assert!(run_filter(&man, &noise, &cfg, &VehicleParams::default()).is_err());
}
