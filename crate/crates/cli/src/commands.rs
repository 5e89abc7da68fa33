use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use drivadv::assessment::{assess_drivers, scale_advantages, spearman, trip_advantages};
use drivadv::fsio;
use drivadv::models::{train_pipeline, AdvantageModel, BundleMeta, TrainHyper};
use drivadv::neural::TrainReport;
use drivadv::placement::{place_normalized, FixedTemplate, PlacementResult, ProfileSet, SearchOptions, BUNDLE_PROFILES};
use drivadv::synth::{generate, GroundTruth, SynthConfig};
use drivadv::trip_data::{load_dataset, Dataset, DatasetSchema, LoadOptions};
use drivadv::Error;

use crate::manifest::ManifestBuilder;
use crate::{DataArgs, Failure, PlaceArgs, QueryArgs, RankArgs, SurfaceArgs, SynthArgs, TrainArgs, Units};

pub const DATA_FILE: &str = "data.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const TRUTH_FILE: &str = "groundtruth.json";

type CmdResult = Result<(), Failure>;

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::from(Error::Io { path: dir.to_path_buf(), source: e }))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    Ok(fsio::write_atomic(path, text.as_bytes())?)
}

fn schema_path(data: &DataArgs) -> PathBuf {
    data.schema.clone().unwrap_or_else(|| {
        data.data.parent().unwrap_or(Path::new(".")).join(SCHEMA_FILE)
    })
}

fn load_data(data: &DataArgs, schema: &DatasetSchema) -> Result<Dataset, Failure> {
    let ds = load_dataset(&data.data, schema, LoadOptions { lenient: data.lenient })?;
    if !ds.skipped().is_empty() {
        log::warn!("skipped {} malformed rows", ds.skipped().len());
    }
    Ok(ds)
}

fn missing(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{what} not found: {}", path.display())))
    }
}

pub fn synth(a: &SynthArgs, argv: &[String]) -> CmdResult {
    let cfg = SynthConfig {
        n_drivers: a.drivers,
        trips_per_driver: a.trips,
        d_env: a.env_dims,
        d_behavior: a.behavior_dims,
        skill_spacing: a.skill_spacing,
        noise_sigma: a.noise,
        env_shift_mode: a.env_shift,
        seed: a.seed,
        equal_skills: a.equal_skills,
        shared_behavior: a.shared_behavior,
        interaction: a.interaction,
        behavior_noise: a.behavior_noise,
        behavior_radius: a.behavior_radius,
        curvature: a.curvature,
        env_shift: SynthConfig::default().env_shift,
    };
    let mut m = ManifestBuilder::start("synth", argv);
    m.seed("seed", a.seed);
    let (ds, truth) = generate(&cfg)?;
    ensure_dir(&a.out)?;
    let (data, schema, gt) = (a.out.join(DATA_FILE), a.out.join(SCHEMA_FILE), a.out.join(TRUTH_FILE));
    ds.write_csv(&data)?;
    ds.schema().save(&schema)?;
    truth.save(&gt)?;
    m.output(&data).output(&schema).output(&gt);
    m.finish(&a.out)?;
    println!("wrote {} trips for {} drivers to {}", ds.len(), ds.driver_count(), a.out.display());
    Ok(())
}

fn curve_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,mse");
    if report.validation_losses.is_some() {
        out.push_str(",validation_mse");
    }
    out.push('\n');
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        write!(out, "{},{:?}", i + 1, loss).expect("string write");
        if let Some(v) = &report.validation_losses {
            write!(out, ",{:?}", v[i]).expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn train(a: &TrainArgs, argv: &[String]) -> CmdResult {
    let schema_file = schema_path(&a.data);
    missing(&a.data.data, "data file")?;
    missing(&schema_file, "schema file")?;
    let schema = DatasetSchema::load(&schema_file)?;
    let ds = load_data(&a.data, &schema)?;
    let hidden: [usize; 3] = a
        .hidden
        .as_slice()
        .try_into()
        .map_err(|_| Failure::usage("--hidden takes exactly three widths"))?;
    let hyper = |seed: u64| TrainHyper {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        hidden,
        validation_fraction: a.validation_fraction,
        ..TrainHyper::seeded(seed, 0)
    };
    let baseline_seed = a.baseline_seed.unwrap_or(a.seed.wrapping_mul(2));
    let behavior_seed = a.behavior_seed.unwrap_or(a.seed.wrapping_mul(2).wrapping_add(1));
    let mut m = ManifestBuilder::start("train", argv);
    m.seed("baseline", baseline_seed).seed("behavior", behavior_seed);
    m.input(&a.data.data).input(&schema_file);

    let (model, meta) = train_pipeline(&ds, &hyper(baseline_seed), &hyper(behavior_seed))?;
    let profiles = ProfileSet::from_dataset(&ds, model.stats())?;
    ensure_dir(&a.out)?;
    model.save_bundle(&a.out, &meta)?;
    profiles.save(&a.out.join(BUNDLE_PROFILES))?;
    let curves = [
        ("curve_baseline.csv", &meta.baseline_report),
        ("curve_behavior.csv", &meta.behavior_report),
    ];
    for (name, report) in curves {
        let path = a.out.join(name);
        write_text(&path, &curve_csv(report))?;
        m.output(&path);
    }
    m.output(&a.out);
    m.finish(&a.out)?;
    println!(
        "baseline mse {:.6}  behavior mse {:.6}",
        meta.baseline_report.final_loss, meta.behavior_report.final_loss
    );
    Ok(())
}

fn load_bundle(dir: &Path) -> Result<(AdvantageModel, BundleMeta, ProfileSet), Failure> {
    if !dir.is_dir() {
        return Err(Failure::usage(format!("model bundle not found: {}", dir.display())));
    }
    let (model, meta) = AdvantageModel::load_bundle(dir)?;
    let profiles = ProfileSet::load(&dir.join(BUNDLE_PROFILES))?;
    Ok((model, meta, profiles))
}

#[derive(Serialize)]
struct RankEval {
    drivers: usize,
    spearman: f64,
}

pub fn rank(a: &RankArgs, argv: &[String]) -> CmdResult {
    let (model, meta, _) = load_bundle(&a.bundle)?;
    let schema = match &a.data.schema {
        Some(p) => DatasetSchema::load(p)?,
        None => meta.schema.clone(),
    };
    if schema.fingerprint() != meta.schema_fingerprint {
        return Err(Error::InvalidSchema("schema differs from the one the bundle was trained on".into()).into());
    }
    missing(&a.data.data, "data file")?;
    let ds = load_data(&a.data, &schema)?;
    let mut m = ManifestBuilder::start("rank", argv);
    m.input(&a.data.data).input(&a.bundle);

    let mut advs = trip_advantages(&ds, model.baseline(), model.metric_index())?;
    if a.raw_units {
        scale_advantages(&mut advs, model.raw_scale());
    }
    let ranking = assess_drivers(&advs)?;
    for e in ranking.undersampled(a.min_trips) {
        log::warn!("driver {} has only {} trips", e.driver_id, e.trip_count);
    }
    ensure_dir(&a.out)?;
    let text = ranking.render();
    let (txt, csv, trips) = (a.out.join("ranking.txt"), a.out.join("ranking.csv"), a.out.join("trip_advantages.csv"));
    write_text(&txt, &text)?;
    ranking.write_csv(&csv)?;
    let mut trip_csv = String::from("trip_id,driver_id,advantage\n");
    for t in &advs {
        writeln!(trip_csv, "{},{},{:?}", t.trip_id, t.driver_id, t.advantage).expect("string write");
    }
    write_text(&trips, &trip_csv)?;
    m.output(&txt).output(&csv).output(&trips);

    if let Some(truth_path) = &a.truth {
        let truth = GroundTruth::load(truth_path)?;
        let mut recovered = Vec::new();
        let mut skills = Vec::new();
        for e in &ranking.entries {
            let skill = truth
                .skill_of(&e.driver_id)
                .ok_or_else(|| Error::UnknownDriver(e.driver_id.clone()))?;
            recovered.push(e.mean_advantage);
            skills.push(skill);
        }
        let eval = RankEval { drivers: recovered.len(), spearman: spearman(&recovered, &skills) };
        let path = a.out.join("ranking_eval.json");
        fsio::write_json(&path, &eval)?;
        m.input(truth_path).output(&path);
        println!("spearman vs true skill: {:.4}", eval.spearman);
    }
    m.finish(&a.out)?;
    print!("{text}");
    Ok(())
}

/// Environment and template, both converted to normalized units.
struct Query {
    env: Vec<f64>,
    template: Option<FixedTemplate>,
    free_names: Vec<String>,
}

fn read_vector<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    missing(path, "input file")?;
    Ok(fsio::read_json(path)?)
}

fn build_query(q: &QueryArgs, model: &AdvantageModel, schema: &DatasetSchema) -> Result<Query, Failure> {
    let stats = model.stats();
    let env: Vec<f64> = read_vector(&q.env)?;
    let env = match q.units {
        Units::Normalized => {
            if env.len() != schema.env_dim() {
                return Err(Error::dims(schema.env_dim(), env.len()).into());
            }
            env
        }
        Units::Raw => stats.normalize_env(&env)?,
    };

    let mut free: Vec<usize> = q
        .free
        .iter()
        .map(|name| schema.behavior_index(name))
        .collect::<drivadv::Result<_>>()?;
    let template = match &q.fix_template {
        None if free.is_empty() => None,
        None => Some(FixedTemplate::new(vec![0.0; schema.behavior_dim()], free.clone())?),
        Some(path) => {
            let raw: Vec<Option<f64>> = read_vector(path)?;
            if raw.len() != schema.behavior_dim() {
                return Err(Error::dims(schema.behavior_dim(), raw.len()).into());
            }
            let nulls: Vec<usize> = (0..raw.len()).filter(|&j| raw[j].is_none()).collect();
            if free.is_empty() {
                free = nulls.clone();
            }
            if let Some(j) = nulls.iter().find(|j| !free.contains(j)) {
                return Err(Failure::usage(format!(
                    "template leaves {} unset but it is not a free dim",
                    schema.behavior_columns[*j]
                )));
            }
            let values = match q.units {
                Units::Normalized => raw.iter().map(|v| v.unwrap_or(0.0)).collect(),
                Units::Raw => {
                    let means = &stats.mean()[stats.layout().behavior_range()];
                    let filled: Vec<f64> = raw.iter().zip(means).map(|(v, m)| v.unwrap_or(*m)).collect();
                    stats.normalize_behavior(&filled)?
                }
            };
            Some(FixedTemplate::new(values, free.clone())?)
        }
    };
    let free_names = template
        .as_ref()
        .map(|t| t.free.iter().map(|&j| schema.behavior_columns[j].clone()).collect())
        .unwrap_or_else(|| schema.behavior_columns.clone());
    Ok(Query { env, template, free_names })
}

#[derive(Serialize)]
struct PlaceReport<'a> {
    behavior_columns: &'a [String],
    free_dim_names: &'a [String],
    #[serde(flatten)]
    result: &'a PlacementResult,
}

pub fn place(a: &PlaceArgs, argv: &[String]) -> CmdResult {
    let (model, meta, profiles) = load_bundle(&a.query.bundle)?;
    let query = build_query(&a.query, &model, &meta.schema)?;
    let mut m = ManifestBuilder::start("place", argv);
    m.seed("seed", a.seed).input(&a.query.bundle).input(&a.query.env);
    if let Some(t) = &a.query.fix_template {
        m.input(t);
    }
    let opts = SearchOptions {
        sigma: a.sigma,
        seed: a.seed,
        max_generations: a.max_generations,
        population: a.population,
        restart: a.restart,
        template: query.template,
        runner_ups: a.runner_ups,
        invert_match: a.invert_match,
        ..SearchOptions::default()
    };
    let result = place_normalized(&model, &profiles, &query.env, &opts)?;
    if !result.argmax_consistent {
        log::warn!("argmax over advantage and over Q disagreed on some population");
    }
    ensure_dir(&a.out)?;
    let path = a.out.join("placement.json");
    let report = PlaceReport {
        behavior_columns: &meta.schema.behavior_columns,
        free_dim_names: &query.free_names,
        result: &result,
    };
    fsio::write_json(&path, &report)?;
    m.output(&path);
    m.finish(&a.out)?;
    println!(
        "matched driver {} (distance {:.6}, advantage {:.6})",
        result.matched_driver, result.match_distance, result.optimal_advantage
    );
    Ok(())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn surface(a: &SurfaceArgs, argv: &[String]) -> CmdResult {
    if a.query.free.len() != 2 {
        return Err(Failure::usage("--free takes exactly two behavior column names"));
    }
    if a.query.fix_template.is_none() {
        return Err(Failure::usage("--fix-template is required"));
    }
    if a.resolution < 2 {
        return Err(Failure::usage("--resolution must be at least 2"));
    }
    let (model, meta, profiles) = load_bundle(&a.query.bundle)?;
    let query = build_query(&a.query, &model, &meta.schema)?;
    let template = query.template.expect("template present");
    let mut m = ManifestBuilder::start("surface", argv);
    m.input(&a.query.bundle).input(&a.query.env);

    // Columns follow the order given on the command line.
    let dims: Vec<usize> = a
        .query
        .free
        .iter()
        .map(|n| meta.schema.behavior_index(n))
        .collect::<drivadv::Result<_>>()?;
    let (d1, d2) = (dims[0], dims[1]);
    let g1 = linspace(profiles.search_box[d1].0, profiles.search_box[d1].1, a.resolution);
    let g2 = linspace(profiles.search_box[d2].0, profiles.search_box[d2].1, a.resolution);
    let scale = if a.raw_units { model.raw_scale() } else { 1.0 };
    let mut out = format!("{},{},advantage\n", a.query.free[0], a.query.free[1]);
    let mut behavior = template.values.clone();
    for &x in &g1 {
        for &y in &g2 {
            behavior[d1] = x;
            behavior[d2] = y;
            let v = model.advantage_normalized(&query.env, &behavior)? * scale;
            writeln!(out, "{x:?},{y:?},{v:?}").expect("string write");
        }
    }
    ensure_dir(&a.out)?;
    let path = a.out.join("surface.csv");
    write_text(&path, &out)?;
    m.output(&path);
    m.finish(&a.out)?;
    println!("wrote {} grid points to {}", g1.len() * g2.len(), path.display());
    Ok(())
}
