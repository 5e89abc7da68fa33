//! Optimal behavior for an environment and the real driver closest to it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cmaes::{self, CmaesConfig, CmaesResult};
use crate::error::{Error, Result};
use crate::fsio;
use crate::models::AdvantageModel;
use crate::normalization::NormalizationStats;
use crate::trip_data::Dataset;

pub const BUNDLE_PROFILES: &str = "profiles.json";
pub const DEFAULT_SIGMA: f64 = 0.3;
pub const DEFAULT_RUNNER_UPS: usize = 5;
/// Each side of the search box grows by this fraction of the data range.
pub const BOX_MARGIN: f64 = 0.05;
/// Half-width used for dimensions whose training range is (nearly) empty.
pub const FLAT_PAD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverProfile {
    pub driver_id: String,
    pub mean_behavior: Vec<f64>,
    pub trip_count: usize,
}

/// Driver profiles plus what placement needs to know about the behavior space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub profiles: Vec<DriverProfile>,
    /// Normalized per-dimension search bounds.
    pub search_box: Vec<(f64, f64)>,
    /// Behavior dims whose raw training values are all exactly 0 or 1.
    pub binary_dims: Vec<usize>,
}

pub fn build_profiles(ds: &Dataset, stats: &NormalizationStats) -> Result<Vec<DriverProfile>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = stats.layout().behavior;
    ds.driver_index()
        .iter()
        .map(|(id, ix)| {
            let mut sum = vec![0.0; d];
            for &i in ix {
                let a = stats.normalize_behavior(&ds.records()[i].behavior)?;
                sum.iter_mut().zip(&a).for_each(|(s, v)| *s += v);
            }
            let n = ix.len() as f64;
            Ok(DriverProfile {
                driver_id: id.clone(),
                mean_behavior: sum.into_iter().map(|s| s / n).collect(),
                trip_count: ix.len(),
            })
        })
        .collect()
}

/// Normalized behavior range widened by 10% in total.
pub fn search_box(ds: &Dataset, stats: &NormalizationStats) -> Result<Vec<(f64, f64)>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = stats.layout().behavior;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in ds.records() {
        let a = stats.normalize_behavior(&r.behavior)?;
        for j in 0..d {
            lo[j] = lo[j].min(a[j]);
            hi[j] = hi[j].max(a[j]);
        }
    }
    Ok(lo
        .into_iter()
        .zip(hi)
        .map(|(l, h)| {
            let width = h - l;
            if width < 1e-9 {
                (l - FLAT_PAD, h + FLAT_PAD)
            } else {
                (l - BOX_MARGIN * width, h + BOX_MARGIN * width)
            }
        })
        .collect())
}

pub fn binary_dims(ds: &Dataset) -> Vec<usize> {
    let d = ds.schema().behavior_dim();
    (0..d)
        .filter(|&j| ds.records().iter().all(|r| r.behavior[j] == 0.0 || r.behavior[j] == 1.0))
        .collect()
}

impl ProfileSet {
    pub fn from_dataset(ds: &Dataset, stats: &NormalizationStats) -> Result<Self> {
        Ok(ProfileSet {
            profiles: build_profiles(ds, stats)?,
            search_box: search_box(ds, stats)?,
            binary_dims: binary_dims(ds),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        fsio::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_json(path, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDriver {
    pub driver_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverMatch {
    pub driver_id: String,
    pub distance: f64,
    /// Every profile, best match first.
    pub ranked: Vec<RankedDriver>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Nearest profile to `target`. With `invert` the farthest profile wins,
/// which reproduces the literal argmax form of the matching rule.
pub fn match_driver(profiles: &[DriverProfile], target: &[f64], invert: bool) -> Result<DriverMatch> {
    if profiles.is_empty() {
        return Err(Error::EmptyProfiles);
    }
    let mut ranked = profiles
        .iter()
        .map(|p| {
            if p.mean_behavior.len() != target.len() {
                return Err(Error::dims(target.len(), p.mean_behavior.len()));
            }
            Ok(RankedDriver {
                driver_id: p.driver_id.clone(),
                distance: euclidean(&p.mean_behavior, target),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        let by_distance = if invert {
            b.distance.total_cmp(&a.distance)
        } else {
            a.distance.total_cmp(&b.distance)
        };
        by_distance.then_with(|| a.driver_id.cmp(&b.driver_id))
    });
    Ok(DriverMatch {
        driver_id: ranked[0].driver_id.clone(),
        distance: ranked[0].distance,
        ranked,
    })
}

/// Behavior dims held fixed during the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedTemplate {
    /// Full normalized behavior vector; entries at free dims are ignored.
    pub values: Vec<f64>,
    /// Indices searched by the optimizer, ascending.
    pub free: Vec<usize>,
}

impl FixedTemplate {
    pub fn new(values: Vec<f64>, mut free: Vec<usize>) -> Result<Self> {
        free.sort_unstable();
        free.dedup();
        if free.is_empty() {
            return Err(Error::InvalidConfig("template needs at least one free dimension".into()));
        }
        if let Some(&j) = free.iter().find(|&&j| j >= values.len()) {
            return Err(Error::dims(values.len(), j + 1));
        }
        if values.iter().enumerate().any(|(j, v)| !v.is_finite() && free.binary_search(&j).is_err()) {
            return Err(Error::InvalidConfig("fixed template values must be finite".into()));
        }
        Ok(FixedTemplate { values, free })
    }

    fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut a = self.values.clone();
        for (&j, v) in self.free.iter().zip(x) {
            a[j] = *v;
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub sigma: f64,
    pub seed: u64,
    pub max_generations: usize,
    pub population: Option<usize>,
    pub tolerance: f64,
    pub restart: bool,
    pub template: Option<FixedTemplate>,
    pub runner_ups: usize,
    pub invert_match: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            sigma: DEFAULT_SIGMA,
            seed: 0,
            max_generations: 1000,
            population: None,
            tolerance: 1e-12,
            restart: false,
            template: None,
            runner_ups: DEFAULT_RUNNER_UPS,
            invert_match: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorOptimum {
    /// Full normalized behavior vector.
    pub behavior: Vec<f64>,
    pub value: f64,
    pub result: CmaesResult,
}

/// Maximizes the advantage over normalized behavior for a normalized environment.
pub fn optimize_behavior(
    model: &AdvantageModel,
    env: &[f64],
    bounds: &[(f64, f64)],
    opts: &SearchOptions,
) -> Result<BehaviorOptimum> {
    let d = model.stats().layout().behavior;
    if env.len() != model.stats().layout().env {
        return Err(Error::dims(model.stats().layout().env, env.len()));
    }
    if bounds.len() != d {
        return Err(Error::dims(d, bounds.len()));
    }
    let template = match &opts.template {
        Some(t) if t.values.len() != d => return Err(Error::dims(d, t.values.len())),
        Some(t) => t.clone(),
        None => FixedTemplate { values: vec![0.0; d], free: (0..d).collect() },
    };
    let free_bounds: Vec<(f64, f64)> = template.free.iter().map(|&j| bounds[j]).collect();
    // The dataset mean is zero after normalization.
    let mean: Vec<f64> = free_bounds.iter().map(|&(lo, hi)| 0.0f64.clamp(lo, hi)).collect();
    let mut cfg = CmaesConfig::new(mean, opts.sigma);
    cfg.seed = opts.seed;
    cfg.max_generations = opts.max_generations;
    cfg.target_tolerance = opts.tolerance;
    cfg.restart_on_stagnation = opts.restart;
    cfg.bounds = Some(free_bounds);
    cfg.record_trace = true;
    if let Some(p) = opts.population {
        cfg.population = p;
    }
    let objective = |x: &[f64]| {
        model
            .advantage_normalized(env, &template.expand(x))
            .unwrap_or(f64::NAN)
    };
    let result = cmaes::maximize(objective, &cfg)?;
    Ok(BehaviorOptimum {
        behavior: template.expand(&result.best_point),
        value: result.best_fitness,
        result,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub env: Vec<f64>,
    pub env_normalized: Vec<f64>,
    pub optimal_behavior: Vec<f64>,
    pub optimal_behavior_raw: Vec<f64>,
    /// Raw behavior with binary-looking dims rounded to 0 or 1.
    pub optimal_behavior_rounded: Vec<f64>,
    pub optimal_advantage: f64,
    pub optimal_advantage_raw: f64,
    pub matched_driver: String,
    pub match_distance: f64,
    pub runner_ups: Vec<RankedDriver>,
    pub free_dims: Vec<usize>,
    /// Argmax over A and over Q picked the same candidate in every population.
    pub argmax_consistent: bool,
    pub generations: usize,
    pub evaluations: usize,
}

/// Argmax of A and of Q agree on every recorded population.
fn argmax_agrees(
    model: &AdvantageModel,
    env: &[f64],
    template: &FixedTemplate,
    trace: &[Vec<Vec<f64>>],
) -> Result<bool> {
    let first_max = |v: &[f64]| {
        v.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
            .0
    };
    for pop in trace {
        let mut adv = Vec::with_capacity(pop.len());
        let mut q = Vec::with_capacity(pop.len());
        for x in pop {
            let p = model.parts_normalized(env, &template.expand(x))?;
            adv.push(p.advantage);
            q.push(p.q);
        }
        if first_max(&adv) != first_max(&q) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Placement for an environment given in normalized units.
pub fn place_normalized(
    model: &AdvantageModel,
    profiles: &ProfileSet,
    env: &[f64],
    opts: &SearchOptions,
) -> Result<PlacementResult> {
    let stats = model.stats();
    let opt = optimize_behavior(model, env, &profiles.search_box, opts)?;
    let found = match_driver(&profiles.profiles, &opt.behavior, opts.invert_match)?;
    let d = stats.layout().behavior;
    let template = opts
        .template
        .clone()
        .unwrap_or(FixedTemplate { values: vec![0.0; d], free: (0..d).collect() });
    let consistent = argmax_agrees(model, env, &template, opt.result.trace.as_deref().unwrap_or(&[]))?;
    let raw = stats.denormalize_behavior(&opt.behavior)?;
    let mut rounded = raw.clone();
    for &j in &profiles.binary_dims {
        rounded[j] = rounded[j].round().clamp(0.0, 1.0);
    }
    Ok(PlacementResult {
        env: stats.denormalize_range(stats.layout().env_range(), env)?,
        env_normalized: env.to_vec(),
        optimal_behavior_raw: raw,
        optimal_behavior_rounded: rounded,
        optimal_advantage: opt.value,
        optimal_advantage_raw: opt.value * model.raw_scale(),
        optimal_behavior: opt.behavior,
        matched_driver: found.driver_id,
        match_distance: found.distance,
        runner_ups: found.ranked.into_iter().skip(1).take(opts.runner_ups).collect(),
        free_dims: template.free,
        argmax_consistent: consistent,
        generations: opt.result.generations_used,
        evaluations: opt.result.evaluations,
    })
}

/// Placement for an environment given in raw units.
pub fn place(
    model: &AdvantageModel,
    profiles: &ProfileSet,
    env: &[f64],
    opts: &SearchOptions,
) -> Result<PlacementResult> {
    let s = model.stats().normalize_env(env)?;
    place_normalized(model, profiles, &s, opts)
}
