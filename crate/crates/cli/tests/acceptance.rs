//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use drivadv::cmaes::{self, CmaesConfig};
use drivadv::models::AdvantageModel;
use drivadv::neural::{Mlp, MlpConfig};
use drivadv::normalization::NormalizationStats;
use drivadv::placement::ProfileSet;
use drivadv::synth::{generate, SynthConfig};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::*;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_secs as f64, || {
        format!("took {:.1}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

// ---------------------------------------------------------------- 1

/// Pre-activations of every layer, computed independently of the library.
fn pre_activations(net: &Mlp, x: &[f64]) -> Vec<DVector<f64>> {
    let mut h = DVector::from_column_slice(x);
    let mut zs = Vec::new();
    let n = net.layers().len();
    for (i, l) in net.layers().iter().enumerate() {
        let z = &l.weights * &h + &l.bias;
        h = if i + 1 < n { z.map(|v| v.max(0.0)) } else { z.clone() };
        zs.push(z);
    }
    zs
}

fn relu_pattern(net: &Mlp, x: &[f64]) -> Vec<bool> {
    let zs = pre_activations(net, x);
    zs[..zs.len() - 1].iter().flat_map(|z| z.iter().map(|&v| v > 0.0)).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-5;
    let (mut checked, mut skipped, mut worst) = (0usize, 0usize, 0.0f64);
    for k in 0..100u64 {
        let input = rng.random_range(1..6);
        let output = rng.random_range(1..4);
        let hidden = [rng.random_range(1..7), rng.random_range(1..7), rng.random_range(1..7)];
        let mut net = Mlp::init(MlpConfig::new(input, output, k).with_hidden(hidden)).unwrap();
        // Non-zero biases so that units sit away from the origin.
        let mut params = net.parameters();
        for v in params.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
        net.set_parameters(&params).unwrap();
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..output).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grad = net.gradient(&x, &t).unwrap().flatten();
        let base_pattern = relu_pattern(&net, &x);
        for i in 0..params.len() {
            let mut probe = net.clone();
            let mut plus = params.clone();
            plus[i] += h;
            probe.set_parameters(&plus).unwrap();
            let lp = probe.loss(&x, &t).unwrap();
            let pat_p = relu_pattern(&probe, &x);
            let mut minus = params.clone();
            minus[i] -= h;
            probe.set_parameters(&minus).unwrap();
            let lm = probe.loss(&x, &t).unwrap();
            let pat_m = relu_pattern(&probe, &x);
            if pat_p != base_pattern || pat_m != base_pattern {
                skipped += 1;
                continue;
            }
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    check(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    check(checked > 1000, || format!("only {checked} coordinates checked"))?;
    within(start.elapsed(), 30)?;
    Ok(format!(
        "max rel err {worst:.2e} over {checked} params ({skipped} kink coords skipped), {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (mut worst_mean, mut worst_std, mut worst_round) = (0.0f64, 0.0f64, 0.0f64);
    let configs = [
        SynthConfig { n_drivers: 20, trips_per_driver: 100, seed: 1, ..SynthConfig::default() },
        SynthConfig { n_drivers: 2, trips_per_driver: 500, env_shift_mode: true, seed: 2, ..SynthConfig::default() },
        SynthConfig { n_drivers: 5, trips_per_driver: 40, d_env: 29, d_behavior: 62, seed: 3, ..SynthConfig::default() },
        SynthConfig { n_drivers: 3, trips_per_driver: 1, interaction: 0.5, seed: 4, ..SynthConfig::default() },
    ];
    for cfg in &configs {
        let (ds, _) = generate(cfg).unwrap();
        let stats = NormalizationStats::fit(&ds).unwrap();
        let rows: Vec<Vec<f64>> = ds.records().iter().map(|r| r.stacked()).collect();
        let z: Vec<Vec<f64>> = rows.iter().map(|r| stats.normalize(r).unwrap()).collect();
        for j in 0..rows[0].len() {
            let col: Vec<f64> = z.iter().map(|r| r[j]).collect();
            worst_mean = worst_mean.max(mean(&col).abs());
            worst_std = worst_std.max((sample_std(&col) - 1.0).abs());
        }
        for (r, zr) in rows.iter().zip(&z) {
            let back = stats.denormalize(zr).unwrap();
            for (a, b) in r.iter().zip(&back) {
                worst_round = worst_round.max((a - b).abs());
            }
        }
    }
    check(worst_mean < 1e-9, || format!("|mean| {worst_mean:.3e}"))?;
    check(worst_std < 1e-6, || format!("|std - 1| {worst_std:.3e}"))?;
    check(worst_round < 1e-9, || format!("round trip {worst_round:.3e}"))?;
    within(start.elapsed(), 5)?;
    Ok(format!(
        "|mean| {worst_mean:.1e}, |std-1| {worst_std:.1e}, round trip {worst_round:.1e}, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let sphere = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let mut cfg = CmaesConfig::new(vec![3.0; 10], 1.0);
    cfg.max_generations = 5000;
    cfg.stop_fitness = Some(1e-12);
    let s = cmaes::minimize(sphere, &cfg).map_err(|e| e.to_string())?;
    check(s.best_fitness < 1e-8, || format!("sphere reached {:.3e}", s.best_fitness))?;

    let rosen = |x: &[f64]| {
        x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum::<f64>()
    };
    let mut cfg = CmaesConfig::new(vec![0.0; 5], 0.5);
    cfg.max_generations = 10_000;
    cfg.restart_on_stagnation = true;
    let r = cmaes::minimize(rosen, &cfg).map_err(|e| e.to_string())?;
    check(r.best_fitness < 1e-4, || format!("rosenbrock reached {:.3e}", r.best_fitness))?;
    check(r.restarts <= 1, || format!("{} restarts", r.restarts))?;

    // Concave quadratic with a known maximizer.
    let peak = [0.7, -1.3, 2.1];
    let quad = |x: &[f64]| 4.0 - x.iter().zip(&peak).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let q = cmaes::maximize(quad, &CmaesConfig::new(vec![0.0; 3], 1.0)).map_err(|e| e.to_string())?;
    let err = q.best_point.iter().zip(&peak).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(err < 1e-4, || format!("argmax off by {err:.3e}"))?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "sphere {:.1e}, rosenbrock {:.1e} ({} restarts), argmax err {err:.1e}, {:.2}s",
        s.best_fitness,
        r.best_fitness,
        r.restarts,
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 4

const BIAS_SEED: &str = "11";

fn pipeline_bias(root: &Path) -> Result<(f64, f64), String> {
    let (data, bundle, rank) = (root.join("data"), root.join("bundle"), root.join("rank"));
    run_ok(&[
        "synth", "--drivers", "2", "--trips", "500", "--env-shift", "--equal-skills", "--shared-behavior",
        "--seed", BIAS_SEED, "--out", p(&data),
    ])?;
    let csv = data.join("data.csv");
    run_ok(&["train", "--data", p(&csv), "--seed", BIAS_SEED, "--out", p(&bundle)])?;
    run_ok(&["rank", "--data", p(&csv), "--bundle", p(&bundle), "--out", p(&rank)])?;

    let (h, rows) = read_csv(&csv);
    let (d, q) = (column(&h, "driver_id"), column(&h, "total_mpg"));
    let all: Vec<f64> = rows.iter().map(|r| r[q].parse().unwrap()).collect();
    let of = |id: &str| -> Vec<f64> {
        rows.iter().filter(|r| r[d] == id).map(|r| r[q].parse().unwrap()).collect()
    };
    let raw_gap = (mean(&of("drv000")) - mean(&of("drv001"))) / sample_std(&all);
    let means = ranking_means(&rank.join("ranking.csv"));
    Ok((raw_gap, means["drv000"] - means["drv001"]))
}

fn criterion_4(root: &Path) -> Outcome {
    let start = Instant::now();
    let (raw_gap, adv_gap) = pipeline_bias(root)?;
    check(raw_gap.abs() > 0.5, || format!("raw gap only {raw_gap:.3}"))?;
    check(adv_gap.abs() < 0.1, || format!("advantage gap {adv_gap:.4}"))?;
    within(start.elapsed(), 300)?;
    Ok(format!(
        "raw gap {raw_gap:.3}, advantage gap {adv_gap:.4}, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 5

const RANK_SEEDS: [&str; 3] = ["1", "2", "3"];

fn pipeline_rank(root: &Path, seed: &str) -> Result<f64, String> {
    let (data, bundle, rank) = (root.join("data"), root.join("bundle"), root.join("rank"));
    run_ok(&[
        "synth", "--drivers", "20", "--trips", "100", "--skill-spacing", "0.25", "--noise", "0.05",
        "--seed", seed, "--out", p(&data),
    ])?;
    let csv = data.join("data.csv");
    run_ok(&["train", "--data", p(&csv), "--seed", seed, "--out", p(&bundle)])?;
    run_ok(&["rank", "--data", p(&csv), "--bundle", p(&bundle), "--out", p(&rank)])?;
    let truth: Value = serde_json::from_str(&fs::read_to_string(data.join("groundtruth.json")).unwrap()).unwrap();
    let ids = truth["driver_ids"].as_array().unwrap();
    let skills = truth["driver_skills"].as_array().unwrap();
    let means = ranking_means(&rank.join("ranking.csv"));
    let (mut rec, mut true_skill) = (Vec::new(), Vec::new());
    for (id, s) in ids.iter().zip(skills) {
        rec.push(means[id.as_str().unwrap()]);
        true_skill.push(s.as_f64().unwrap());
    }
    Ok(spearman_no_ties(&rec, &true_skill))
}

fn criterion_5(root: &Path) -> Outcome {
    let mut rhos = Vec::new();
    for seed in RANK_SEEDS {
        let start = Instant::now();
        let rho = pipeline_rank(&root.join(format!("seed{seed}")), seed)?;
        check(rho >= 0.95, || format!("seed {seed}: spearman {rho:.4}"))?;
        within(start.elapsed(), 300)?;
        rhos.push(format!("{rho:.4}"));
    }
    Ok(format!("spearman per seed [{}]", rhos.join(", ")))
}

// ---------------------------------------------------------------- 6

const PLACE_SEED: &str = "42";
const PLACE_RUNS: u64 = 20;

struct PlaceOutcome {
    hits: usize,
    consistent: bool,
    cells: (f64, f64),
    surface_agrees: bool,
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn pipeline_place(root: &Path) -> Result<PlaceOutcome, String> {
    let (data, bundle) = (root.join("data"), root.join("bundle"));
    run_ok(&[
        "synth", "--drivers", "20", "--trips", "300", "--equal-skills", "--seed", PLACE_SEED, "--out", p(&data),
    ])?;
    let csv = data.join("data.csv");
    run_ok(&["train", "--data", p(&csv), "--seed", PLACE_SEED, "--out", p(&bundle)])?;
    let truth = read_json(&data.join("groundtruth.json"));
    let want = truth["optimal_driver"].as_str().unwrap().to_string();
    let d_env = truth["config"]["d_env"].as_u64().unwrap() as usize;

    // Environments drawn from the generator's (unshifted) distribution.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let envs: Vec<Vec<f64>> =
        (0..PLACE_RUNS).map(|_| (0..d_env).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let (mut hits, mut consistent) = (0, true);
    for (run, env) in envs.iter().enumerate() {
        let env_file = root.join(format!("env{run:02}.json"));
        write_json_vec(&env_file, env);
        let out = root.join(format!("place{run:02}"));
        let seed = run.to_string();
        run_ok(&["place", "--bundle", p(&bundle), "--env", p(&env_file), "--seed", &seed, "--out", p(&out)])?;
        let r = read_json(&out.join("placement.json"));
        hits += usize::from(r["matched_driver"] == want.as_str());
        consistent &= r["argmax_consistent"].as_bool().unwrap();
    }

    // Two free dims with the rest fixed at the optimal driver's center.
    let k = truth["driver_ids"].as_array().unwrap().iter().position(|d| d == want.as_str()).unwrap();
    let center = floats(&truth["driver_behavior_centers"][k]);
    let template: Vec<Option<f64>> =
        center.iter().enumerate().map(|(j, v)| if j == 3 || j == 5 { None } else { Some(*v) }).collect();
    let tmpl_file = root.join("template.json");
    write_json_vec(&tmpl_file, &template);
    let env_file = root.join("env00.json");
    let out = root.join("constrained");
    let free = "overspeedtime,overspeedmax";
    let profiles = ProfileSet::load(&bundle.join("profiles.json")).map_err(|e| e.to_string())?;
    let (b3, b5) = (profiles.search_box[3], profiles.search_box[5]);
    // Box-scaled step size: a global search over the whole 2-D slice.
    let sigma = format!("{:?}", 0.3 * (b3.1 - b3.0).min(b5.1 - b5.0));
    run_ok(&[
        "place", "--bundle", p(&bundle), "--env", p(&env_file), "--fix-template", p(&tmpl_file), "--free", free,
        "--sigma", &sigma, "--population", "12", "--restart", "--seed", "0", "--out", p(&out),
    ])?;
    let placed = floats(&read_json(&out.join("placement.json"))["optimal_behavior"]);

    // Grid oracle over the same box, evaluated through the library.
    let (model, _) = AdvantageModel::load_bundle(&bundle).map_err(|e| e.to_string())?;
    let stats = model.stats();
    let s = stats.normalize_env(&envs[0]).unwrap();
    let mut a = stats.normalize_behavior(&center).unwrap();
    let n = 201;
    let axis = |b: (f64, f64)| -> Vec<f64> { (0..n).map(|i| b.0 + (b.1 - b.0) * i as f64 / (n - 1) as f64).collect() };
    let (g3, g5) = (axis(b3), axis(b5));
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for (i, &x) in g3.iter().enumerate() {
        for (j, &y) in g5.iter().enumerate() {
            a[3] = x;
            a[5] = y;
            let v = model.advantage_normalized(&s, &a).unwrap();
            if v > best.0 {
                best = (v, i, j);
            }
        }
    }
    let cell3 = (b3.1 - b3.0) / (n - 1) as f64;
    let cell5 = (b5.1 - b5.0) / (n - 1) as f64;
    let cells = ((placed[3] - g3[best.1]).abs() / cell3, (placed[5] - g5[best.2]).abs() / cell5);

    // The surface command on the same grid must peak at the same node.
    let surf = root.join("surface");
    run_ok(&[
        "surface", "--bundle", p(&bundle), "--env", p(&env_file), "--fix-template", p(&tmpl_file), "--free", free,
        "--resolution", "201", "--out", p(&surf),
    ])?;
    let (_, rows) = read_csv(&surf.join("surface.csv"));
    let top = rows
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, r)| {
            let v: f64 = r[2].parse().unwrap();
            if v > acc.1 { (i, v) } else { acc }
        })
        .0;
    let surface_agrees = rows.len() == n * n && top == best.1 * n + best.2;
    Ok(PlaceOutcome { hits, consistent, cells, surface_agrees })
}

fn criterion_6(root: &Path) -> Outcome {
    let start = Instant::now();
    let o = pipeline_place(root)?;
    check(o.hits >= 18, || format!("optimal driver matched {}/20", o.hits))?;
    check(o.consistent, || "argmax over A and Q disagreed".into())?;
    check(o.cells.0 <= 1.0 && o.cells.1 <= 1.0, || {
        format!("constrained optimum {:.2}/{:.2} cells from grid best", o.cells.0, o.cells.1)
    })?;
    check(o.surface_agrees, || "surface grid peak differs from the oracle".into())?;
    within(start.elapsed(), 600)?;
    Ok(format!(
        "matched {}/20, grid offset ({:.2}, {:.2}) cells, {:.1}s",
        o.hits,
        o.cells.0,
        o.cells.1,
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 7

fn criterion_7(bundle: &Path) -> Outcome {
    let start = Instant::now();
    let (model, _) = AdvantageModel::load_bundle(bundle).map_err(|e| e.to_string())?;
    let l = model.stats().layout();
    let m = model.metric_index();
    let q_net = model.behavior().net();
    let v_net = model.baseline().net();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let s: Vec<f64> = (0..l.env).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a1: Vec<f64> = (0..l.behavior).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a2: Vec<f64> = (0..l.behavior).map(|_| rng.random_range(-2.0..2.0)).collect();
        let adv1 = model.advantage_normalized(&s, &a1).unwrap();
        let adv2 = model.advantage_normalized(&s, &a2).unwrap();
        // Q and V straight from the networks, inputs assembled here.
        let q = |a: &[f64]| q_net.forward(&[s.as_slice(), a].concat()).unwrap()[m];
        let v = v_net.forward(&s).unwrap()[m];
        let (q1, q2) = (q(&a1), q(&a2));
        check(adv1.to_bits() == (q1 - v).to_bits(), || "A(s,a1) != Q(s,a1) - V(s)".into())?;
        check(adv2.to_bits() == (q2 - v).to_bits(), || "A(s,a2) != Q(s,a2) - V(s)".into())?;
        check((adv1 - adv2).to_bits() == ((q1 - v) - (q2 - v)).to_bits(), || "difference not bitwise".into())?;
        worst = worst.max(((adv1 - adv2) - (q1 - q2)).abs());
    }
    within(start.elapsed(), 10)?;
    Ok(format!(
        "1000 triples bitwise, |dA - dQ| <= {worst:.1e} after reassociation, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8(root: &Path) -> Outcome {
    let (data, bundle, out) = (root.join("data"), root.join("bundle"), root.join("place"));
    run_ok(&[
        "synth", "--drivers", "5", "--trips", "80", "--env-dims", "29", "--behavior-dims", "62", "--seed", "5",
        "--out", p(&data),
    ])?;
    run_ok(&["train", "--data", p(&data.join("data.csv")), "--seed", "5", "--out", p(&bundle)])?;
    let (env, tmpl) = (fixture("reference_env.json"), fixture("reference_template.json"));
    run_ok(&[
        "place", "--bundle", p(&bundle), "--env", p(&env), "--fix-template", p(&tmpl), "--free",
        "overspeedtime,overspeedmax", "--units", "normalized", "--out", p(&out),
    ])?;
    let r = read_json(&out.join("placement.json"));
    let s_in: Vec<f64> = serde_json::from_str(&fs::read_to_string(&env).unwrap()).unwrap();
    let a0: Vec<Option<f64>> = serde_json::from_str(&fs::read_to_string(&tmpl).unwrap()).unwrap();
    let best = floats(&r["optimal_behavior"]);
    check(s_in.len() == 29 && a0.len() == 62, || "fixture shape".into())?;
    check(floats(&r["env_normalized"]) == s_in, || "environment not echoed".into())?;
    check(best.len() == 62, || format!("behavior length {}", best.len()))?;
    check(
        a0.iter().zip(&best).all(|(t, b)| t.is_none_or(|t| t == *b)),
        || "fixed dims moved".into(),
    )?;
    let free: Vec<&str> = r["free_dim_names"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    check(free == ["overspeedtime", "overspeedmax"], || format!("free dims {free:?}"))?;
    Ok(format!(
        "29-dim s and 62-dim a0 placed, matched {}, free dims {free:?}",
        r["matched_driver"].as_str().unwrap()
    ))
}

// ---------------------------------------------------------------- 9

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let (sa, sb) = (snapshot(a, true), snapshot(b, true));
    check(sa.keys().eq(sb.keys()), || format!("file sets differ under {}", a.display()))?;
    for (k, v) in &sa {
        check(sb[k] == *v, || format!("{} differs", k.display()))?;
    }
    Ok(sa.len())
}

fn criterion_9(first: &Path, second: &Path) -> Outcome {
    pipeline_bias(&second.join("c4"))?;
    for seed in RANK_SEEDS {
        pipeline_rank(&second.join("c5").join(format!("seed{seed}")), seed)?;
    }
    pipeline_place(&second.join("c6"))?;
    let mut files = 0;
    for c in ["c4", "c5", "c6"] {
        files += same_files(&first.join(c), &second.join(c))?;
    }
    Ok(format!("{files} output files bitwise identical across repeated runs"))
}

// ----------------------------------------------------------------

fn report(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(msg)
    });
    match outcome {
        Ok(detail) => {
            println!("criterion {n} {name}: PASS ({detail})");
            true
        }
        Err(detail) => {
            println!("criterion {n} {name}: FAIL ({detail})");
            false
        }
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let first: PathBuf = tmp.path().join("first");
    let second: PathBuf = tmp.path().join("second");
    let results = [
        report(1, "gradient check", criterion_1),
        report(2, "normalization", criterion_2),
        report(3, "cma-es benchmarks", criterion_3),
        report(4, "environment bias removal", || criterion_4(&first.join("c4"))),
        report(5, "ranking recovery", || criterion_5(&first.join("c5"))),
        report(6, "placement", || criterion_6(&first.join("c6"))),
        report(7, "advantage wiring", || criterion_7(&first.join("c6/bundle"))),
        report(8, "reference vectors", || criterion_8(&first.join("c8"))),
        report(9, "determinism", || criterion_9(&first, &second)),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
