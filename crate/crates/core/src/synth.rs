//! Synthetic fleets with a known decomposition of the target metric:
//!
//! `total_mpg = base + f(s) + g(a) + skill_k + interaction * f(s) * g(a) + noise`
//!
//! `f` is a frozen random two-layer tanh network plus a linear load penalty
//! on the first environment column, `g(a) = -curvature * |a - a_opt|^2`
//! peaks at a known behavior vector, and `skill_k` is a per-driver offset.
//! One driver's behavior center sits exactly at `a_opt`; every other center
//! is `behavior_radius` away from it, so the driver nearest the optimum is
//! unique and all other drivers share the same expected `g`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::trip_data::{Dataset, DatasetSchema, TripRecord, DEFAULT_TARGET_METRIC};

pub const ENV_NAMES: [&str; 8] = [
    "avg_load",
    "terrain_grade",
    "elevation_gain",
    "ambient_temp",
    "headwind",
    "urban_share",
    "stop_density",
    "vehicle_age",
];

/// Index 3 and 5 are the two over-speed summaries used for 2-D sweeps.
pub const BEHAVIOR_NAMES: [&str; 6] = [
    "overrpm_count",
    "idle_time",
    "hard_brake_count",
    "overspeedtime",
    "cruise_share",
    "overspeedmax",
];

pub const SECONDARY_METRIC: &str = "drive_hours";

const HIDDEN_UNITS: usize = 16;
const BASE_MPG: f64 = 6.0;
const BASE_HOURS: f64 = 8.0;
const LOAD_PENALTY: f64 = 1.0;

fn column_names(prefix: &str, known: &[&str], n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match known.get(i) {
            Some(name) => (*name).to_string(),
            None => format!("{prefix}_{i:02}"),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_drivers: usize,
    pub trips_per_driver: usize,
    pub d_env: usize,
    pub d_behavior: usize,
    pub skill_spacing: f64,
    pub noise_sigma: f64,
    /// Odd-indexed drivers only see environments shifted along the load
    /// column, which the environment effect penalizes.
    pub env_shift_mode: bool,
    pub seed: u64,
    /// All skill offsets zero (no strict skill order).
    pub equal_skills: bool,
    /// Every driver shares the optimal behavior center.
    pub shared_behavior: bool,
    pub interaction: f64,
    pub behavior_noise: f64,
    pub behavior_radius: f64,
    pub curvature: f64,
    pub env_shift: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_drivers: 20,
            trips_per_driver: 100,
            d_env: 8,
            d_behavior: 6,
            skill_spacing: 0.25,
            noise_sigma: 0.05,
            env_shift_mode: false,
            seed: 0,
            equal_skills: false,
            shared_behavior: false,
            interaction: 0.0,
            behavior_noise: 0.4,
            behavior_radius: 2.0,
            curvature: 0.15,
            env_shift: 2.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_drivers < 2 {
            return bad("need ≥ 2 drivers");
        }
        if self.trips_per_driver == 0 {
            return bad("need ≥ 1 trip per driver");
        }
        if self.d_env == 0 || self.d_behavior == 0 {
            return bad("environment and behavior dimensions must be positive");
        }
        if !(self.skill_spacing > 0.0) {
            return bad("skill spacing must be positive");
        }
        if !(self.noise_sigma >= 0.0) || !(self.behavior_noise >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !(self.behavior_radius > 0.0) || !(self.curvature >= 0.0) {
            return bad("behavior radius must be positive and curvature non-negative");
        }
        if !self.interaction.is_finite() || !self.env_shift.is_finite() {
            return bad("interaction and env shift must be finite");
        }
        Ok(())
    }

    pub fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            env_columns: column_names("env", &ENV_NAMES, self.d_env),
            behavior_columns: column_names("beh", &BEHAVIOR_NAMES, self.d_behavior),
            performance_columns: vec![DEFAULT_TARGET_METRIC.into(), SECONDARY_METRIC.into()],
            trip_id_column: "trip_id".into(),
            driver_id_column: "driver_id".into(),
            target_metric: DEFAULT_TARGET_METRIC.into(),
        }
    }
}

/// Frozen environment effect `f(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvEffect {
    pub hidden_weights: Vec<Vec<f64>>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    /// Coefficient of the linear penalty on the first environment column.
    pub load_penalty: f64,
}

impl EnvEffect {
    pub fn eval(&self, s: &[f64]) -> f64 {
        let smooth: f64 = self
            .hidden_weights
            .iter()
            .zip(&self.hidden_bias)
            .zip(&self.output_weights)
            .map(|((w, b), v)| {
                let z: f64 = w.iter().zip(s).map(|(wi, si)| wi * si).sum::<f64>() + b;
                v * z.tanh()
            })
            .sum();
        smooth - self.load_penalty * s[0]
    }
}

/// Concave behavior effect `g(a) = -curvature * |a - optimum|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEffect {
    pub optimum: Vec<f64>,
    pub curvature: f64,
}

impl BehaviorEffect {
    pub fn eval(&self, a: &[f64]) -> f64 {
        -self.curvature
            * a.iter()
                .zip(&self.optimum)
                .map(|(x, o)| (x - o).powi(2))
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub env_effect: EnvEffect,
    pub behavior_effect: BehaviorEffect,
    pub driver_ids: Vec<String>,
    pub driver_skills: Vec<f64>,
    pub driver_behavior_centers: Vec<Vec<f64>>,
    pub shifted_drivers: Vec<bool>,
    pub optimum_behavior: Vec<f64>,
    /// The driver whose behavior center is the optimum, unless all share it.
    pub optimal_driver: Option<String>,
}

impl GroundTruth {
    /// Noise-free `total_mpg` for driver `k`.
    pub fn target(&self, s: &[f64], a: &[f64], k: usize) -> f64 {
        let f = self.env_effect.eval(s);
        let g = self.behavior_effect.eval(a);
        BASE_MPG + f + g + self.driver_skills[k] + self.config.interaction * f * g
    }

    /// Noise-free `drive_hours`.
    pub fn hours(&self, s: &[f64]) -> f64 {
        BASE_HOURS + 0.5 * s[s.len() - 1]
    }

    pub fn driver_position(&self, driver_id: &str) -> Option<usize> {
        self.driver_ids.iter().position(|d| d == driver_id)
    }

    pub fn skill_of(&self, driver_id: &str) -> Option<f64> {
        self.driver_position(driver_id).map(|k| self.driver_skills[k])
    }

    /// Samples one environment from driver `k`'s distribution.
    pub fn sample_env<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        let mut s: Vec<f64> = (0..self.config.d_env).map(|_| rng.random_range(-1.0..1.0)).collect();
        if self.shifted_drivers[k] {
            s[0] += self.config.env_shift;
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        fsio::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_json(path, self)
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate(config: &SynthConfig) -> Result<(Dataset, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.n_drivers;

    let w_scale = 1.0 / (config.d_env as f64).sqrt();
    let v_scale = 0.5 / (HIDDEN_UNITS as f64).sqrt();
    let env_effect = EnvEffect {
        hidden_weights: (0..HIDDEN_UNITS)
            .map(|_| (0..config.d_env).map(|_| gaussian(&mut rng) * w_scale).collect())
            .collect(),
        hidden_bias: (0..HIDDEN_UNITS).map(|_| 0.5 * gaussian(&mut rng)).collect(),
        output_weights: (0..HIDDEN_UNITS).map(|_| v_scale * gaussian(&mut rng)).collect(),
        load_penalty: LOAD_PENALTY,
    };

    let optimum: Vec<f64> = (0..config.d_behavior).map(|_| rng.random_range(-0.5..0.5)).collect();
    let behavior_effect = BehaviorEffect {
        optimum: optimum.clone(),
        curvature: config.curvature,
    };

    let mut ranks: Vec<usize> = (0..k).collect();
    ranks.shuffle(&mut rng);
    let driver_skills: Vec<f64> = if config.equal_skills {
        vec![0.0; k]
    } else {
        let mid = (k as f64 - 1.0) / 2.0;
        ranks.iter().map(|&r| config.skill_spacing * (r as f64 - mid)).collect()
    };

    let optimal_index = (!config.shared_behavior).then(|| rng.random_range(0..k));
    let driver_behavior_centers: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            if config.shared_behavior || Some(i) == optimal_index {
                return optimum.clone();
            }
            let dir: Vec<f64> = (0..config.d_behavior).map(|_| gaussian(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            optimum
                .iter()
                .zip(&dir)
                .map(|(o, d)| o + config.behavior_radius * d / norm)
                .collect()
        })
        .collect();

    let width = format!("{}", k - 1).len().max(3);
    let driver_ids: Vec<String> = (0..k).map(|i| format!("drv{i:0width$}")).collect();
    let truth = GroundTruth {
        config: config.clone(),
        env_effect,
        behavior_effect,
        optimal_driver: optimal_index.map(|i| driver_ids[i].clone()),
        driver_ids,
        driver_skills,
        driver_behavior_centers,
        shifted_drivers: (0..k).map(|i| config.env_shift_mode && i % 2 == 1).collect(),
        optimum_behavior: optimum,
    };

    let mut records = Vec::with_capacity(k * config.trips_per_driver);
    for d in 0..k {
        for j in 0..config.trips_per_driver {
            let env = truth.sample_env(d, &mut rng);
            let behavior: Vec<f64> = truth.driver_behavior_centers[d]
                .iter()
                .map(|c| c + config.behavior_noise * gaussian(&mut rng))
                .collect();
            let mpg = truth.target(&env, &behavior, d) + config.noise_sigma * gaussian(&mut rng);
            let hours = truth.hours(&env) + config.noise_sigma * gaussian(&mut rng);
            records.push(TripRecord {
                trip_id: format!("{}-{j:04}", truth.driver_ids[d]),
                driver_id: truth.driver_ids[d].clone(),
                env,
                behavior,
                performance: vec![mpg, hours],
            });
        }
    }
    let ds = Dataset::new(config.schema(), records)?;
    Ok((ds, truth))
}
