//! Baseline `V(s)`, behavior `Q(s, a)` and their difference, the advantage.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::neural::{Mlp, MlpConfig, TrainOptions, TrainReport, DEFAULT_HIDDEN, HIDDEN_LAYERS};
use crate::normalization::NormalizationStats;
use crate::trip_data::{Dataset, DatasetSchema};

pub const BUNDLE_BASELINE: &str = "baseline.json";
pub const BUNDLE_BEHAVIOR: &str = "behavior.json";
pub const BUNDLE_STATS: &str = "stats.json";
pub const BUNDLE_META: &str = "meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: [usize; HIDDEN_LAYERS],
    /// Weight initialization seed.
    pub init_seed: u64,
    /// Mini-batch shuffle seed.
    pub shuffle_seed: u64,
    /// Fraction of records held out for a validation curve.
    #[serde(default)]
    pub validation_fraction: Option<f64>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        let opts = TrainOptions::default();
        TrainHyper {
            epochs: opts.epochs,
            batch_size: opts.batch_size,
            learning_rate: opts.learning_rate,
            hidden: DEFAULT_HIDDEN,
            init_seed: 0,
            shuffle_seed: 0,
            validation_fraction: None,
        }
    }
}

impl TrainHyper {
    /// Derives independent seeds for the two networks from one master seed.
    pub fn seeded(seed: u64, network: u64) -> Self {
        let base = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(network);
        TrainHyper {
            init_seed: base,
            shuffle_seed: base ^ 0xD1B5_4A32_D192_ED03,
            ..TrainHyper::default()
        }
    }

    fn options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.shuffle_seed,
        }
    }

    fn net(&self, input_dim: usize, output_dim: usize) -> MlpConfig {
        MlpConfig::new(input_dim, output_dim, self.init_seed).with_hidden(self.hidden)
    }
}

fn check_layout(ds: &Dataset, stats: &NormalizationStats) -> Result<()> {
    let l = stats.layout();
    let s = ds.schema();
    if (l.env, l.behavior, l.performance) != (s.env_dim(), s.behavior_dim(), s.performance_dim()) {
        return Err(Error::dims(l.total(), s.env_dim() + s.behavior_dim() + s.performance_dim()));
    }
    Ok(())
}

type Pairs = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Normalized training pairs; `with_behavior` selects `[s; a]` over `s`.
fn training_pairs(
    ds: &Dataset,
    stats: &NormalizationStats,
    with_behavior: bool,
) -> Result<Pairs> {
    check_layout(ds, stats)?;
    let l = stats.layout();
    let mut inputs = Vec::with_capacity(ds.len());
    let mut targets = Vec::with_capacity(ds.len());
    for r in ds.records() {
        let z = stats.normalize(&r.stacked())?;
        let end = if with_behavior { l.behavior_range().end } else { l.env_range().end };
        inputs.push(z[..end].to_vec());
        targets.push(z[l.performance_range()].to_vec());
    }
    Ok((inputs, targets))
}

fn fit(
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    hyper: &TrainHyper,
) -> Result<(Mlp, TrainReport)> {
    let input_dim = inputs[0].len();
    let output_dim = targets[0].len();
    let mut net = Mlp::init(hyper.net(input_dim, output_dim))?;
    let opts = hyper.options();
    let report = match hyper.validation_fraction {
        None => net.train(&inputs, &targets, &opts)?,
        Some(frac) => {
            if !(frac > 0.0 && frac < 1.0) {
                return Err(Error::InvalidConfig("validation fraction must lie in (0, 1)".into()));
            }
            let n = inputs.len();
            let held = ((n as f64) * frac).floor() as usize;
            if held == 0 || held == n {
                return Err(Error::TooFewSamples(n));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(hyper.shuffle_seed.rotate_left(17)));
            let pick = |ix: &[usize], v: &[Vec<f64>]| ix.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
            let (val_ix, train_ix) = order.split_at(held);
            let (tx, ty) = (pick(train_ix, &inputs), pick(train_ix, &targets));
            let (vx, vy) = (pick(val_ix, &inputs), pick(val_ix, &targets));
            net.train_with_validation(&tx, &ty, Some((&vx, &vy)), &opts)?
        }
    };
    Ok((net, report))
}

fn check_net(net: &Mlp, input: usize, output: usize) -> Result<()> {
    let c = net.config();
    if c.input_dim != input {
        return Err(Error::dims(input, c.input_dim));
    }
    if c.output_dim != output {
        return Err(Error::dims(output, c.output_dim));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BaselineModel {
    net: Mlp,
    stats: Arc<NormalizationStats>,
}

impl BaselineModel {
    pub fn new(net: Mlp, stats: Arc<NormalizationStats>) -> Result<Self> {
        let l = stats.layout();
        check_net(&net, l.env, l.performance)?;
        Ok(BaselineModel { net, stats })
    }

    pub fn train(
        ds: &Dataset,
        stats: Arc<NormalizationStats>,
        hyper: &TrainHyper,
    ) -> Result<(Self, TrainReport)> {
        let (x, y) = training_pairs(ds, &stats, false)?;
        let (net, report) = fit(x, y, hyper)?;
        Ok((BaselineModel { net, stats }, report))
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn stats(&self) -> &Arc<NormalizationStats> {
        &self.stats
    }

    /// `V(s)` over the full performance vector, normalized units.
    pub fn value(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.value_normalized(&self.stats.normalize_env(s)?)
    }

    pub fn value_normalized(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(s)
    }
}

#[derive(Debug, Clone)]
pub struct BehaviorModel {
    net: Mlp,
    stats: Arc<NormalizationStats>,
}

impl BehaviorModel {
    pub fn new(net: Mlp, stats: Arc<NormalizationStats>) -> Result<Self> {
        let l = stats.layout();
        check_net(&net, l.env + l.behavior, l.performance)?;
        Ok(BehaviorModel { net, stats })
    }

    pub fn train(
        ds: &Dataset,
        stats: Arc<NormalizationStats>,
        hyper: &TrainHyper,
    ) -> Result<(Self, TrainReport)> {
        let (x, y) = training_pairs(ds, &stats, true)?;
        let (net, report) = fit(x, y, hyper)?;
        Ok((BehaviorModel { net, stats }, report))
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn stats(&self) -> &Arc<NormalizationStats> {
        &self.stats
    }

    pub fn value(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let s = self.stats.normalize_env(s)?;
        let a = self.stats.normalize_behavior(a)?;
        self.value_normalized(&s, &a)
    }

    pub fn value_normalized(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let l = self.stats.layout();
        if s.len() != l.env {
            return Err(Error::dims(l.env, s.len()));
        }
        if a.len() != l.behavior {
            return Err(Error::dims(l.behavior, a.len()));
        }
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        self.net.forward(&x)
    }
}

/// The three numbers behind one advantage evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageParts {
    pub q: f64,
    pub v: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub schema: DatasetSchema,
    pub schema_fingerprint: String,
    pub stats_fingerprint: String,
    pub metric_index: usize,
    pub baseline_hyper: TrainHyper,
    pub behavior_hyper: TrainHyper,
    pub baseline_report: TrainReport,
    pub behavior_report: TrainReport,
}

#[derive(Debug, Clone)]
pub struct AdvantageModel {
    baseline: BaselineModel,
    behavior: BehaviorModel,
    metric_index: usize,
}

impl AdvantageModel {
    pub fn new(baseline: BaselineModel, behavior: BehaviorModel, metric_index: usize) -> Result<Self> {
        let (fb, fq) = (baseline.stats.fingerprint(), behavior.stats.fingerprint());
        if fb != fq {
            return Err(Error::StatsMismatch(fb, fq));
        }
        let dq = baseline.stats.layout().performance;
        if metric_index >= dq {
            return Err(Error::InvalidConfig(format!(
                "metric index {metric_index} outside performance block of {dq}"
            )));
        }
        Ok(AdvantageModel { baseline, behavior, metric_index })
    }

    pub fn baseline(&self) -> &BaselineModel {
        &self.baseline
    }

    pub fn behavior(&self) -> &BehaviorModel {
        &self.behavior
    }

    pub fn metric_index(&self) -> usize {
        self.metric_index
    }

    pub fn stats(&self) -> &NormalizationStats {
        &self.baseline.stats
    }

    /// Multiplier from normalized to raw units of the target metric.
    pub fn raw_scale(&self) -> f64 {
        self.stats().performance_std(self.metric_index)
    }

    /// `Q(s, a) - V(s)` for raw inputs, in normalized target units.
    pub fn advantage(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let s = self.stats().normalize_env(s)?;
        let a = self.stats().normalize_behavior(a)?;
        self.advantage_normalized(&s, &a)
    }

    pub fn advantage_normalized(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.parts_normalized(s, a)?.advantage)
    }

    pub fn parts_normalized(&self, s: &[f64], a: &[f64]) -> Result<AdvantageParts> {
        let q = self.behavior.value_normalized(s, a)?[self.metric_index];
        let v = self.baseline.value_normalized(s)?[self.metric_index];
        Ok(AdvantageParts { q, v, advantage: q - v })
    }

    pub fn save_bundle(&self, dir: &Path, meta: &BundleMeta) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.baseline.net.save(&dir.join(BUNDLE_BASELINE))?;
        self.behavior.net.save(&dir.join(BUNDLE_BEHAVIOR))?;
        self.stats().save(&dir.join(BUNDLE_STATS))?;
        fsio::write_json(&dir.join(BUNDLE_META), meta)
    }

    pub fn load_bundle(dir: &Path) -> Result<(Self, BundleMeta)> {
        let meta: BundleMeta = fsio::read_json(&dir.join(BUNDLE_META))?;
        let stats = Arc::new(NormalizationStats::load(&dir.join(BUNDLE_STATS))?);
        if stats.fingerprint() != meta.stats_fingerprint {
            return Err(Error::StatsMismatch(meta.stats_fingerprint.clone(), stats.fingerprint()));
        }
        let baseline = BaselineModel::new(Mlp::load(&dir.join(BUNDLE_BASELINE))?, stats.clone())?;
        let behavior = BehaviorModel::new(Mlp::load(&dir.join(BUNDLE_BEHAVIOR))?, stats)?;
        Ok((AdvantageModel::new(baseline, behavior, meta.metric_index)?, meta))
    }
}

/// Fits stats and both networks on `ds`.
pub fn train_pipeline(
    ds: &Dataset,
    baseline_hyper: &TrainHyper,
    behavior_hyper: &TrainHyper,
) -> Result<(AdvantageModel, BundleMeta)> {
    let schema = ds.schema();
    let metric_index = schema
        .metric_index()
        .ok_or_else(|| Error::InvalidSchema(format!("unknown target metric {}", schema.target_metric)))?;
    let stats = Arc::new(NormalizationStats::fit(ds)?);
    log::info!("training baseline on {} trips", ds.len());
    let (baseline, baseline_report) = BaselineModel::train(ds, stats.clone(), baseline_hyper)?;
    log::info!("baseline final mse {:.6}", baseline_report.final_loss);
    let (behavior, behavior_report) = BehaviorModel::train(ds, stats.clone(), behavior_hyper)?;
    log::info!("behavior final mse {:.6}", behavior_report.final_loss);
    let meta = BundleMeta {
        schema: schema.clone(),
        schema_fingerprint: schema.fingerprint(),
        stats_fingerprint: stats.fingerprint(),
        metric_index,
        baseline_hyper: *baseline_hyper,
        behavior_hyper: *behavior_hyper,
        baseline_report,
        behavior_report,
    };
    Ok((AdvantageModel::new(baseline, behavior, metric_index)?, meta))
}
