//! Per-trip advantages `q - V(s)` and the per-driver ranking built on them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::models::BaselineModel;
use crate::trip_data::Dataset;

/// Drivers with fewer trips than this get a coverage warning.
pub const DEFAULT_MIN_TRIPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripAdvantage {
    pub trip_id: String,
    pub driver_id: String,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverAssessment {
    pub driver_id: String,
    pub mean_advantage: f64,
    pub std_advantage: f64,
    pub trip_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub entries: Vec<DriverAssessment>,
}

pub fn trip_advantages(
    ds: &Dataset,
    model: &BaselineModel,
    metric_index: usize,
) -> Result<Vec<TripAdvantage>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let stats = model.stats();
    let l = stats.layout();
    let s = ds.schema();
    if (l.env, l.behavior, l.performance) != (s.env_dim(), s.behavior_dim(), s.performance_dim()) {
        return Err(Error::dims(l.total(), s.env_dim() + s.behavior_dim() + s.performance_dim()));
    }
    if metric_index >= l.performance {
        return Err(Error::dims(l.performance, metric_index + 1));
    }
    ds.records()
        .par_iter()
        .map(|r| {
            let q = stats.normalize_performance(&r.performance)?[metric_index];
            let v = model.value(&r.env)?[metric_index];
            Ok(TripAdvantage {
                trip_id: r.trip_id.clone(),
                driver_id: r.driver_id.clone(),
                advantage: q - v,
            })
        })
        .collect()
}

/// Rescales normalized advantages to raw target units.
pub fn scale_advantages(advs: &mut [TripAdvantage], factor: f64) {
    for a in advs {
        a.advantage *= factor;
    }
}

fn mean_std(values: &mut [f64]) -> (f64, f64) {
    // Summing in sorted order makes the result independent of row order.
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

pub fn assess_drivers(advs: &[TripAdvantage]) -> Result<Ranking> {
    if advs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for a in advs {
        groups.entry(&a.driver_id).or_default().push(a.advantage);
    }
    let mut entries: Vec<DriverAssessment> = groups
        .into_iter()
        .map(|(id, mut values)| {
            let (mean, std) = mean_std(&mut values);
            DriverAssessment {
                driver_id: id.to_string(),
                mean_advantage: mean,
                std_advantage: std,
                trip_count: values.len(),
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.mean_advantage
            .total_cmp(&a.mean_advantage)
            .then_with(|| a.driver_id.cmp(&b.driver_id))
    });
    Ok(Ranking { entries })
}

impl Ranking {
    pub fn render(&self) -> String {
        let mut out = String::from("rank  driver  mean_advantage (std)  trips\n");
        for (i, e) in self.entries.iter().enumerate() {
            writeln!(
                out,
                "{}  {}  {:.6} ({:.6})  n={}",
                i + 1,
                e.driver_id,
                e.mean_advantage,
                e.std_advantage,
                e.trip_count
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "driver_id", "mean_advantage", "std_advantage", "trip_count"])?;
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                e.driver_id.clone(),
                format!("{:?}", e.mean_advantage),
                format!("{:?}", e.std_advantage),
                e.trip_count.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, &self.to_csv()?)
    }

    /// Drivers below the trip-count threshold.
    pub fn undersampled(&self, min_trips: usize) -> Vec<&DriverAssessment> {
        self.entries.iter().filter(|e| e.trip_count < min_trips).collect()
    }

    pub fn position(&self, driver_id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.driver_id == driver_id)
    }
}

/// Ranks with ties sharing their average position.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; NaN when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn adv(driver: &str, value: f64) -> TripAdvantage {
        TripAdvantage { trip_id: format!("{driver}-{value}"), driver_id: driver.into(), advantage: value }
    }

    #[test]
    fn two_driver_example() {
        let r = assess_drivers(&[adv("d1", 1.0), adv("d1", -1.0), adv("d2", 2.0)]).unwrap();
        assert_eq!(r.entries[0].driver_id, "d2");
        assert_eq!(r.entries[0].mean_advantage, 2.0);
        assert_eq!(r.entries[0].std_advantage, 0.0);
        assert_eq!(r.entries[0].trip_count, 1);
        assert_eq!(r.entries[1].mean_advantage, 0.0);
        assert!((r.entries[1].std_advantage - 2f64.sqrt()).abs() < 1e-15);
        let text = r.render();
        assert_eq!(text.lines().nth(1).unwrap(), "1  d2  2.000000 (0.000000)  n=1");
        assert_eq!(text.lines().nth(2).unwrap(), "2  d1  0.000000 (1.414214)  n=2");
    }

    #[test]
    fn single_trip() {
        let r = assess_drivers(&[adv("x", 0.5)]).unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!((r.entries[0].mean_advantage, r.entries[0].std_advantage), (0.5, 0.0));
    }

    #[test]
    fn empty_input_and_header_only_render() {
        assert!(matches!(assess_drivers(&[]), Err(Error::EmptyDataset)));
        assert_eq!(Ranking::default().render().lines().count(), 1);
    }

    #[test]
    fn ties_break_by_driver_id() {
        let r = assess_drivers(&[adv("b", 1.0), adv("c", 1.0), adv("a", 1.0)]).unwrap();
        let ids: Vec<&str> = r.entries.iter().map(|e| e.driver_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn csv_layout() {
        let r = assess_drivers(&[adv("d1", 1.0), adv("d1", -1.0), adv("d2", 2.0)]).unwrap();
        let text = String::from_utf8(r.to_csv().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "rank,driver_id,mean_advantage,std_advantage,trip_count");
        assert_eq!(lines[1], "1,d2,2.0,0.0,1");
    }

    #[test]
    fn undersampled_drivers() {
        let mut v: Vec<TripAdvantage> = (0..12).map(|i| adv("many", i as f64)).collect();
        v.push(adv("few", 0.0));
        let r = assess_drivers(&v).unwrap();
        let few: Vec<&str> = r.undersampled(DEFAULT_MIN_TRIPS).iter().map(|e| e.driver_id.as_str()).collect();
        assert_eq!(few, ["few"]);
    }

    #[test]
    fn spearman_reference_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        // Hand-computed: ranks x=[1,2,3,4,5], y=[2,1,4,3,5], sum d^2 = 4.
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]);
        assert!((r - (1.0 - 6.0 * 4.0 / 120.0)).abs() < 1e-12);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            values in prop::collection::vec((0usize..5, -10.0f64..10.0), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let advs: Vec<TripAdvantage> =
                values.iter().map(|(d, v)| adv(&format!("d{d}"), *v)).collect();
            let mut shuffled = advs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(assess_drivers(&advs).unwrap(), assess_drivers(&shuffled).unwrap());
        }

        #[test]
        fn positive_scaling_preserves_order(
            values in prop::collection::vec((0usize..6, -10.0f64..10.0), 1..60),
            factor in 0.01f64..100.0,
        ) {
            let advs: Vec<TripAdvantage> =
                values.iter().map(|(d, v)| adv(&format!("d{d}"), *v)).collect();
            let mut scaled = advs.clone();
            scale_advantages(&mut scaled, factor);
            let a = assess_drivers(&advs).unwrap();
            let b = assess_drivers(&scaled).unwrap();
            for (x, y) in a.entries.iter().zip(&b.entries) {
                prop_assert_eq!(&x.driver_id, &y.driver_id);
                prop_assert!(x.std_advantage >= 0.0);
            }
        }
    }
}
