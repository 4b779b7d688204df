//! Synthetic manoeuvres: ground-truth simulation with model mismatch and
//! sensor noise, the fixed training/test compositions, and CSV I/O.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vehicle::{ControlInput, LoadTransfer, VehicleError, VehicleModel, VehicleParams, VehicleState};

/// Minimum number of samples in a manoeuvre.
pub const MIN_SAMPLES: usize = 100;
/// Speed floor kept by the longitudinal driver model.
pub const MIN_SCENARIO_SPEED: f64 = 5.0;

/// Header of the manoeuvre CSV format.
pub const CSV_HEADER: [&str; 10] = [
    "t",
    "steer_angle",
    "long_accel",
    "meas_vx",
    "meas_ay",
    "meas_yawrate",
    "true_vx",
    "true_vy",
    "true_yawrate",
    "true_beta",
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("simulation failed at sample {sample}: {source}")]
    Simulation { sample: usize, source: VehicleError },
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("manoeuvre invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManoeuvreKind {
    Skidpad,
    Slalom,
    JTurn,
    LaneChange,
    BrakingInTurn,
    Spiral,
    RandomSteer,
    Lap,
}

impl ManoeuvreKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Skidpad => "skidpad",
            Self::Slalom => "slalom",
            Self::JTurn => "j_turn",
            Self::LaneChange => "lane_change",
            Self::BrakingInTurn => "braking_in_turn",
            Self::Spiral => "spiral",
            Self::RandomSteer => "random_steer",
            Self::Lap => "lap",
        }
    }
}

/// Sensor noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorNoise {
    /// m/s
    pub vx: f64,
    /// m/s²
    pub ay: f64,
    /// rad/s
    pub yaw_rate: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self { vx: 0.1, ay: 0.15, yaw_rate: 0.005 }
    }
}

impl SensorNoise {
    pub fn zero() -> Self {
        Self { vx: 0.0, ay: 0.0, yaw_rate: 0.0 }
    }

    /// Variances, the matching filter observation noise.
    pub fn variances(&self) -> [f64; 3] {
        [self.vx * self.vx, self.ay * self.ay, self.yaw_rate * self.yaw_rate]
    }
}

/// How the ground truth departs from the filter's process model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mismatch {
    pub front_stiffness_scale: f64,
    pub rear_stiffness_scale: f64,
    pub load_transfer: Option<LoadTransfer>,
    /// Integration substeps per sample for the truth simulation.
    pub substeps: usize,
}

impl Default for Mismatch {
    fn default() -> Self {
        Self {
            front_stiffness_scale: 0.9,
            rear_stiffness_scale: 1.1,
            load_transfer: Some(LoadTransfer::default()),
            substeps: 10,
        }
    }
}

impl Mismatch {
    /// Truth identical to the filter's process model.
    pub fn none() -> Self {
        Self { front_stiffness_scale: 1.0, rear_stiffness_scale: 1.0, load_transfer: None, substeps: 1 }
    }
}

fn default_dt() -> f64 {
    0.01
}

fn default_brake_decel() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ManoeuvreKind,
    /// s
    pub duration: f64,
    /// Target speed, m/s.
    pub speed: f64,
    /// Peak road-wheel steering angle, rad.
    pub steer_amplitude: f64,
    /// Deceleration for braking manoeuvres, m/s².
    #[serde(default = "default_brake_decel")]
    pub brake_decel: f64,
    #[serde(default)]
    pub sensor_noise: SensorNoise,
    #[serde(default)]
    pub mismatch: Mismatch,
    /// Additive per-sample process noise std-devs on `(vx, vy, yaw_rate)`.
    #[serde(default)]
    pub process_noise: Option<[f64; 3]>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(kind: ManoeuvreKind, duration: f64, speed: f64, steer_amplitude: f64, seed: u64) -> Self {
        Self {
            kind,
            duration,
            speed,
            steer_amplitude,
            brake_decel: default_brake_decel(),
            sensor_noise: SensorNoise::default(),
            mismatch: Mismatch::default(),
            process_noise: None,
            dt: default_dt(),
            seed,
        }
    }

    pub fn sample_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return bad(format!("dt {} outside (0, 0.1]", self.dt));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) || self.sample_count() < MIN_SAMPLES {
            return bad(format!("duration {} s gives fewer than {MIN_SAMPLES} samples", self.duration));
        }
        if !(self.speed.is_finite() && self.speed >= MIN_SCENARIO_SPEED) {
            return bad(format!("speed {} below {MIN_SCENARIO_SPEED} m/s", self.speed));
        }
        if !(self.steer_amplitude.is_finite() && self.steer_amplitude.abs() <= PI / 4.0) {
            return bad(format!("steer amplitude {} outside [-pi/4, pi/4]", self.steer_amplitude));
        }
        let n = &self.sensor_noise;
        if [n.vx, n.ay, n.yaw_rate].iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("sensor noise std-devs must be >= 0".into());
        }
        if let Some(p) = self.process_noise {
            if p.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return bad("process noise std-devs must be >= 0".into());
            }
        }
        let m = &self.mismatch;
        if !(m.front_stiffness_scale > 0.0 && m.rear_stiffness_scale > 0.0) || m.substeps == 0 {
            return bad("stiffness scales must be positive and substeps >= 1".into());
        }
        if !(self.brake_decel.is_finite() && self.brake_decel >= 0.0) {
            return bad("brake_decel must be >= 0".into());
        }
        Ok(())
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Steering waveform of a manoeuvre.
///
/// Random steering is precomputed from the seed, so build once and query by time.
#[derive(Debug, Clone)]
pub struct SteeringProfile {
    kind: ManoeuvreKind,
    amplitude: f64,
    duration: f64,
    dt: f64,
    random: Vec<f64>,
}

/// Slalom frequency, Hz.
pub const SLALOM_FREQ: f64 = 0.5;
const RAMP_START: f64 = 1.0;
const RAMP_TIME: f64 = 0.5;
const LANE_CHANGE_PERIOD: f64 = 3.0;
const RANDOM_CUTOFF_HZ: f64 = 1.0;

impl SteeringProfile {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let random = if cfg.kind == ManoeuvreKind::RandomSteer {
            random_sequence(cfg.seed ^ 0x5EED_57EE, cfg.sample_count() + 1, cfg.dt, cfg.steer_amplitude)
        } else {
            Vec::new()
        };
        Self { kind: cfg.kind, amplitude: cfg.steer_amplitude, duration: cfg.duration, dt: cfg.dt, random }
    }

    pub fn angle(&self, t: f64) -> f64 {
        let a = self.amplitude;
        match self.kind {
            ManoeuvreKind::Skidpad | ManoeuvreKind::BrakingInTurn => a,
            ManoeuvreKind::Slalom => a * (2.0 * PI * SLALOM_FREQ * t).sin(),
            ManoeuvreKind::JTurn => a * smoothstep((t - RAMP_START) / RAMP_TIME),
            ManoeuvreKind::LaneChange => {
                let tau = t - RAMP_START;
                if (0.0..=LANE_CHANGE_PERIOD).contains(&tau) {
                    a * (2.0 * PI * tau / LANE_CHANGE_PERIOD).sin()
                } else {
                    0.0
                }
            }
            ManoeuvreKind::Spiral => a * (t / self.duration).clamp(0.0, 1.0),
            ManoeuvreKind::RandomSteer => {
                let idx = ((t / self.dt).round() as usize).min(self.random.len() - 1);
                self.random[idx]
            }
            ManoeuvreKind::Lap => lap_angle(t, self.duration, a),
        }
    }
}

/// Straight, left turn, straight, slalom, right turn, straight.
fn lap_angle(t: f64, duration: f64, a: f64) -> f64 {
    let seg = duration / 6.0;
    let targets = [0.0, a, 0.0, f64::NAN, -0.8 * a, 0.0];
    let i = ((t / seg).floor() as usize).min(5);
    let local = t - i as f64 * seg;
    let value_at = |j: usize, local: f64| {
        if targets[j].is_nan() {
            0.6 * a * (2.0 * PI * SLALOM_FREQ * local).sin()
        } else {
            targets[j]
        }
    };
    let current = value_at(i, local);
    if i == 0 {
        return current;
    }
    let previous = value_at(i - 1, seg + local);
    let w = smoothstep(local / RAMP_TIME);
    previous + w * (current - previous)
}

fn random_sequence(seed: u64, len: usize, dt: f64, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rc = 1.0 / (2.0 * PI * RANDOM_CUTOFF_HZ);
    let k = dt / (rc + dt);
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let w: f64 = StandardNormal.sample(&mut rng);
        // two cascaded first-order low-pass stages
        s1 += k * (w - s1);
        s2 += k * (s1 - s2);
        out.push(s2);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut out {
            *v *= amplitude / peak;
        }
    }
    out
}

/// Steering angle of a manoeuvre at time `t`.
pub fn steering_profile(cfg: &ScenarioConfig, t: f64) -> f64 {
    SteeringProfile::new(cfg).angle(t)
}

/// One sample of a manoeuvre; field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub steer_angle: f64,
    pub long_accel: f64,
    pub meas_vx: f64,
    pub meas_ay: f64,
    pub meas_yawrate: f64,
    pub true_vx: f64,
    pub true_vy: f64,
    pub true_yawrate: f64,
    pub true_beta: f64,
}

impl Sample {
    pub fn input(&self) -> ControlInput {
        ControlInput::new(self.steer_angle, self.long_accel)
    }

    pub fn true_state(&self) -> VehicleState {
        VehicleState::new(self.true_vx, self.true_vy, self.true_yawrate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manoeuvre {
    pub name: String,
    pub dt: f64,
    pub samples: Vec<Sample>,
}

impl Manoeuvre {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks sample count, uniform sampling and sideslip consistency.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.samples.len() < MIN_SAMPLES {
            return Err(ScenarioError::Invariant(format!(
                "{} samples, at least {MIN_SAMPLES} required",
                self.samples.len()
            )));
        }
        for (k, w) in self.samples.windows(2).enumerate() {
            let step = w[1].t - w[0].t;
            if (step - self.dt).abs() > 1e-9 {
                return Err(ScenarioError::Invariant(format!(
                    "non-uniform sampling between samples {k} and {}: step {step} vs dt {}",
                    k + 1,
                    self.dt
                )));
            }
        }
        for (k, s) in self.samples.iter().enumerate() {
            if !(s.true_vx > 0.0) || ((s.true_vy / s.true_vx).atan() - s.true_beta).abs() > 1e-12 {
                return Err(ScenarioError::Invariant(format!("sample {k}: true_beta inconsistent with true_vy/true_vx")));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ScenarioError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(CSV_HEADER)?;
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the CSV format; `name` is attached to the result.
    pub fn read_csv<R: BufRead>(input: R, name: &str) -> Result<Self, ScenarioError> {
        let parse_err = |line: usize, message: String| ScenarioError::Parse { path: name.to_string(), line, message };
        let mut samples = Vec::new();
        let mut lines = input.lines();
        match lines.next() {
            Some(header) => {
                let header = header?;
                let cols: Vec<&str> = header.trim_end().split(',').collect();
                if cols != CSV_HEADER {
                    return Err(parse_err(1, format!("unexpected header {header:?}")));
                }
            }
            None => return Err(parse_err(1, "empty file".into())),
        }
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != CSV_HEADER.len() {
                return Err(parse_err(
                    line_no,
                    format!("expected {} fields, found {}", CSV_HEADER.len(), fields.len()),
                ));
            }
            let mut v = [0.0; 10];
            for (j, f) in fields.iter().enumerate() {
                v[j] = f
                    .parse::<f64>()
                    .map_err(|e| parse_err(line_no, format!("column {}: {e}", CSV_HEADER[j])))?;
            }
            samples.push(Sample {
                t: v[0],
                steer_angle: v[1],
                long_accel: v[2],
                meas_vx: v[3],
                meas_ay: v[4],
                meas_yawrate: v[5],
                true_vx: v[6],
                true_vy: v[7],
                true_yawrate: v[8],
                true_beta: v[9],
            });
        }
        let dt = if samples.len() >= 2 { samples[1].t - samples[0].t } else { 0.0 };
        let man = Manoeuvre { name: name.to_string(), dt, samples };
        man.validate()?;
        Ok(man)
    }
}

pub fn save(man: &Manoeuvre, path: &Path) -> Result<(), ScenarioError> {
    let file = File::create(path)?;
    man.write_csv(std::io::BufWriter::new(file))
}

pub fn load(path: &Path) -> Result<Manoeuvre, ScenarioError> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("manoeuvre").to_string();
    let file = File::open(path)?;
    Manoeuvre::read_csv(BufReader::new(file), &name).map_err(|e| match e {
        ScenarioError::Parse { line, message, .. } => {
            ScenarioError::Parse { path: path.display().to_string(), line, message }
        }
        other => other,
    })
}

/// The ground-truth vehicle model for a config.
pub fn truth_model(cfg: &ScenarioConfig, params: &VehicleParams) -> VehicleModel {
    let mut p = *params;
    p.cornering_stiffness_front *= cfg.mismatch.front_stiffness_scale;
    p.cornering_stiffness_rear *= cfg.mismatch.rear_stiffness_scale;
    VehicleModel { params: p, load_transfer: cfg.mismatch.load_transfer }
}

/// Advance the truth over one sample interval.
pub fn truth_step(
    model: &VehicleModel,
    state: &VehicleState,
    input: &ControlInput,
    dt: f64,
    substeps: usize,
) -> Result<VehicleState, VehicleError> {
    let h = dt / substeps as f64;
    let mut s = *state;
    for _ in 0..substeps {
        s = model.step(&s, input, h)?;
    }
    Ok(s)
}

/// Longitudinal driver: track the target speed, or brake in the second half
/// of braking manoeuvres while staying above the speed floor.
fn long_accel(cfg: &ScenarioConfig, t: f64, state: &VehicleState) -> f64 {
    let hold = -state.yaw_rate * state.vy;
    if cfg.kind == ManoeuvreKind::BrakingInTurn && t >= 0.4 * cfg.duration {
        if state.vx > MIN_SCENARIO_SPEED + 1.0 {
            return -cfg.brake_decel;
        }
        return hold;
    }
    (cfg.speed - state.vx).clamp(-3.0, 3.0) + hold
}

/// Simulate a manoeuvre.
pub fn generate(cfg: &ScenarioConfig, truth_params: &VehicleParams) -> Result<Manoeuvre, ScenarioError> {
    cfg.validate()?;
    truth_params.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
    let model = truth_model(cfg, truth_params);
    let steering = SteeringProfile::new(cfg);
    let mut sensor_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut process_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let noise = cfg.sensor_noise;

    let n = cfg.sample_count();
    let mut samples = Vec::with_capacity(n);
    let mut state = VehicleState::new(cfg.speed, 0.0, 0.0);
    for k in 0..n {
        let t = k as f64 * cfg.dt;
        let input = ControlInput::new(steering.angle(t), long_accel(cfg, t, &state));
        let sim_err = |source| ScenarioError::Simulation { sample: k, source };
        let m = model.measure(&state, &input).map_err(sim_err)?;
        let mut gauss = |std: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut sensor_rng);
            std * z
        };
        let (nvx, nay, nr) = (gauss(noise.vx), gauss(noise.ay), gauss(noise.yaw_rate));
        samples.push(Sample {
            t,
            steer_angle: input.steer,
            long_accel: input.long_accel,
            meas_vx: m.vx + nvx,
            meas_ay: m.ay + nay,
            meas_yawrate: m.yaw_rate + nr,
            true_vx: state.vx,
            true_vy: state.vy,
            true_yawrate: state.yaw_rate,
            true_beta: (state.vy / state.vx).atan(),
        });
        state = truth_step(&model, &state, &input, cfg.dt, cfg.mismatch.substeps).map_err(sim_err)?;
        if let Some(std) = cfg.process_noise {
            let mut w = [0.0; 3];
            for (wi, s) in w.iter_mut().zip(std) {
                let z: f64 = StandardNormal.sample(&mut process_rng);
                *wi = s * z;
            }
            state = VehicleState::new(state.vx + w[0], state.vy + w[1], state.yaw_rate + w[2]);
        }
        if !(state.vx > MIN_SCENARIO_SPEED * 0.5) || !state.is_finite() {
            return Err(sim_err(VehicleError::NonFinite { quantity: "vx" }));
        }
    }
    let name = format!("{}_{:016x}", cfg.kind.as_str(), cfg.seed);
    Ok(Manoeuvre { name, dt: cfg.dt, samples })
}

/// Training composition: 1 braking-in-turn, 1 skidpad, 2 J-turn, 2 slalom, 2 lane change.
pub const TRAINING_COMPOSITION: [(ManoeuvreKind, usize); 5] = [
    (ManoeuvreKind::BrakingInTurn, 1),
    (ManoeuvreKind::Skidpad, 1),
    (ManoeuvreKind::JTurn, 2),
    (ManoeuvreKind::Slalom, 2),
    (ManoeuvreKind::LaneChange, 2),
];

/// Test composition: 23 manoeuvres.
pub const TEST_COMPOSITION: [(ManoeuvreKind, usize); 8] = [
    (ManoeuvreKind::BrakingInTurn, 2),
    (ManoeuvreKind::Skidpad, 2),
    (ManoeuvreKind::JTurn, 5),
    (ManoeuvreKind::Slalom, 4),
    (ManoeuvreKind::LaneChange, 4),
    (ManoeuvreKind::RandomSteer, 2),
    (ManoeuvreKind::Lap, 1),
    (ManoeuvreKind::Spiral, 3),
];

/// Per-sample process noise std-devs of the noise-only scenario.
pub const NOISE_ONLY_PROCESS_STD: [f64; 3] = [0.01, 0.01, 0.002];

/// Understeer gradient of the nominal model, rad/(m/s²).
fn understeer_gradient(p: &VehicleParams) -> f64 {
    p.mass / p.wheelbase()
        * (p.dist_rear_axle / p.cornering_stiffness_front - p.dist_front_axle / p.cornering_stiffness_rear)
}

/// Steering angle giving steady-state lateral acceleration `ay` at `speed`.
pub fn steady_state_steer(p: &VehicleParams, speed: f64, ay: f64) -> f64 {
    p.wheelbase() * ay / (speed * speed) + understeer_gradient(p) * ay
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of manoeuvre `index` in `set` (0 = training, 1 = test).
pub fn manoeuvre_seed(base: u64, set: u64, index: usize) -> u64 {
    splitmix64(splitmix64(base ^ (set << 62)) ^ index as u64)
}

/// Config for one manoeuvre of a set: duration, speed and steering amplitude
/// drawn from kind-specific ranges.
pub fn kind_config(kind: ManoeuvreKind, seed: u64, params: &VehicleParams) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (duration s, speed range m/s, target |ay| range m/s²)
    let (duration, speed, ay) = match kind {
        ManoeuvreKind::Skidpad => (15.0, (12.0, 18.0), (3.0, 7.0)),
        ManoeuvreKind::Slalom => (12.0, (15.0, 22.0), (3.5, 6.5)),
        ManoeuvreKind::JTurn => (8.0, (15.0, 25.0), (4.0, 7.5)),
        ManoeuvreKind::LaneChange => (8.0, (18.0, 25.0), (3.0, 6.5)),
        ManoeuvreKind::BrakingInTurn => (10.0, (18.0, 22.0), (3.0, 6.0)),
        ManoeuvreKind::Spiral => (15.0, (12.0, 18.0), (6.0, 8.0)),
        ManoeuvreKind::RandomSteer => (20.0, (15.0, 22.0), (2.5, 5.0)),
        ManoeuvreKind::Lap => (40.0, (15.0, 22.0), (4.0, 7.0)),
    };
    let v = rng.gen_range(speed.0..speed.1);
    let a = rng.gen_range(ay.0..ay.1);
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mut cfg = ScenarioConfig::new(kind, duration, v, sign * steady_state_steer(params, v, a), seed);
    if kind == ManoeuvreKind::BrakingInTurn {
        cfg.brake_decel = rng.gen_range(3.0..5.0);
    }
    cfg
}

fn set_configs(composition: &[(ManoeuvreKind, usize)], base: u64, set: u64, params: &VehicleParams) -> Vec<ScenarioConfig> {
    composition
        .iter()
        .flat_map(|&(kind, count)| std::iter::repeat(kind).take(count))
        .enumerate()
        .map(|(i, kind)| kind_config(kind, manoeuvre_seed(base, set, i), params))
        .collect()
}

/// Configs of the 8 training manoeuvres.
pub fn training_configs(seed: u64, params: &VehicleParams) -> Vec<ScenarioConfig> {
    set_configs(&TRAINING_COMPOSITION, seed, 0, params)
}

/// Configs of the 23 test manoeuvres.
pub fn test_configs(seed: u64, params: &VehicleParams) -> Vec<ScenarioConfig> {
    set_configs(&TEST_COMPOSITION, seed, 1, params)
}

/// Training configs with the truth equal to the process model plus known
/// additive process noise [`NOISE_ONLY_PROCESS_STD`].
pub fn noise_only_configs(seed: u64, params: &VehicleParams) -> Vec<ScenarioConfig> {
    training_configs(seed, params)
        .into_iter()
        .map(|mut c| {
            c.mismatch = Mismatch::none();
            c.process_noise = Some(NOISE_ONLY_PROCESS_STD);
            c
        })
        .collect()
}

pub fn generate_all(cfgs: &[ScenarioConfig], params: &VehicleParams) -> Result<Vec<Manoeuvre>, ScenarioError> {
    cfgs.iter().map(|c| generate(c, params)).collect()
}

/// The 8 training manoeuvres of a seed, simulated with `params` as the nominal vehicle.
pub fn training_set(seed: u64) -> Result<Vec<Manoeuvre>, ScenarioError> {
    let p = VehicleParams::default();
    generate_all(&training_configs(seed, &p), &p)
}

/// The 23 test manoeuvres of a seed.
pub fn test_set(seed: u64) -> Result<Vec<Manoeuvre>, ScenarioError> {
    let p = VehicleParams::default();
    generate_all(&test_configs(seed, &p), &p)
}

/// The noise-only training variant; its ideal process noise is known.
pub fn noise_only_set(seed: u64) -> Result<Vec<Manoeuvre>, ScenarioError> {
    let p = VehicleParams::default();
    generate_all(&noise_only_configs(seed, &p), &p)
}

/// Process-noise variances matching [`NOISE_ONLY_PROCESS_STD`].
pub fn noise_only_true_q() -> [f64; 3] {
    NOISE_ONLY_PROCESS_STD.map(|s| s * s)
}
