//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdmbench::manifest::RunManifest;
use sdmbench::methods::{FittedModel, MethodEntry, Output};
use sdmbench::run::{fit_and_evaluate, run, MethodResult, RunOptions};
use sdmbench::world::{Data, SynthData};
use sdmbench_core::assemblage::{assemble_all, calibrate_constant_k, AssemblageRule};
use sdmbench_core::features::FeatureMatrix;
use sdmbench_core::glm::{poisson_gradient, poisson_objective};
use sdmbench_core::metrics::{macro_species_f1, micro_f1, presence_count_comparison, set_size_errors};
use sdmbench_core::split::{spatial_block_split, Side};
use sdmbench_core::staged::{loss_sigmoid_bce, loss_softmax_ce};
use sdmbench_core::synth::{generate_world, sample_pa, SynthConfig};
use sdmbench_core::{Location, PaSurvey, PredictionSet};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Default world split as a run of the default manifest splits it.
struct DefaultWorld {
    manifest: RunManifest,
    data: Data,
    train: Vec<PaSurvey>,
    test: Vec<PaSurvey>,
}

fn default_world() -> &'static DefaultWorld {
    static WORLD: OnceLock<DefaultWorld> = OnceLock::new();
    WORLD.get_or_init(|| {
        let manifest = RunManifest::default_synthetic(SEED);
        let data = manifest.load_data().expect("default world");
        let (train, test) = split(&data, &manifest);
        DefaultWorld { manifest, data, train, test }
    })
}

fn split(data: &Data, m: &RunManifest) -> (Vec<PaSurvey>, Vec<PaSurvey>) {
    let s = spatial_block_split(&data.pa, m.split.block_size_for(data.crs), m.split.test_fraction, None, m.seed)
        .expect("split");
    s.partition(&data.pa)
}

fn entry(m: &RunManifest, name: &str) -> MethodEntry {
    m.methods.iter().find(|e| e.name == name).cloned().unwrap_or_else(|| panic!("no method {name}"))
}

fn evaluate_on(w: &DefaultWorld, name: &str) -> MethodResult {
    fit_and_evaluate(&entry(&w.manifest, name), &w.data, &w.train, &w.test, w.manifest.seed).expect(name)
}

// ---------------------------------------------------------------------------
// 1. Metric oracle equivalence

fn random_subset(r: &mut ChaCha8Rng, n_species: usize, p: f64) -> Vec<usize> {
    (0..n_species).filter(|_| r.gen::<f64>() < p).collect()
}

/// Per-survey F1, per-species F1 over the species universe, and set sizes,
/// all counted from boolean incidence matrices.
fn brute_force_metrics(truth: &[Vec<bool>], pred: &[Vec<bool>]) -> (f64, f64, f64, f64) {
    let n = truth.len();
    let s = truth[0].len();
    let mut micro = 0.0;
    for i in 0..n {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for k in 0..s {
            match (truth[i][k], pred[i][k]) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        micro += if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    }
    micro /= n as f64;

    let mut macro_sum = 0.0;
    let mut universe = 0;
    for k in 0..s {
        let tp = (0..n).filter(|&i| truth[i][k] && pred[i][k]).count() as f64;
        let fp = (0..n).filter(|&i| !truth[i][k] && pred[i][k]).count() as f64;
        let fn_ = (0..n).filter(|&i| truth[i][k] && !pred[i][k]).count() as f64;
        if tp + fp + fn_ == 0.0 {
            continue;
        }
        universe += 1;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        macro_sum += if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    }
    let macro_f1 = if universe > 0 { macro_sum / universe as f64 } else { 0.0 };

    let (mut abs, mut bias) = (0.0, 0.0);
    for i in 0..n {
        let d = pred[i].iter().filter(|&&b| b).count() as f64 - truth[i].iter().filter(|&&b| b).count() as f64;
        abs += d.abs();
        bias += d;
    }
    (micro, macro_f1, abs / n as f64, bias / n as f64)
}

fn criterion_1() -> Outcome {
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for inst in 0..200 {
        let n_surveys = r.gen_range(1..=30);
        let n_species = r.gen_range(1..=15);
        let density = r.gen_range(0.05..0.9);
        let mut truth = Vec::new();
        let mut preds = Vec::new();
        let mut tm = Vec::new();
        let mut pm = Vec::new();
        for i in 0..n_surveys {
            let mut t = random_subset(&mut r, n_species, density);
            if t.is_empty() {
                t.push(r.gen_range(0..n_species));
            }
            let pd = r.gen_range(0.0..1.0);
            let p = random_subset(&mut r, n_species, pd);
            tm.push((0..n_species).map(|k| t.contains(&k)).collect::<Vec<_>>());
            pm.push((0..n_species).map(|k| p.contains(&k)).collect::<Vec<_>>());
            let id = format!("i{inst}s{i}");
            truth.push(PaSurvey::new(id.clone(), Location::planar(i as f64, 0.0), t, None).unwrap());
            preds.push(PredictionSet::new(id, p));
        }
        // Prediction order must not matter.
        preds.reverse();
        let (micro, macro_f1, abs, bias) = brute_force_metrics(&tm, &pm);
        let ss = set_size_errors(&truth, &preds).unwrap();
        for (a, b) in [
            (micro_f1(&truth, &preds).unwrap(), micro),
            (macro_species_f1(&truth, &preds).unwrap(), macro_f1),
            (ss.abs_error, abs),
            (ss.bias, bias),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-12, format!("200 instances, max deviation {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 2. Hand values

fn criterion_2() -> Outcome {
    let at = Location::planar(0.0, 0.0);
    // a, b, c, d = 0, 1, 2, 3
    let truth = vec![PaSurvey::new("s", at, vec![0, 1, 2], None).unwrap()];
    let pred = vec![PredictionSet::new("s", vec![0, 1, 3])];
    let f1 = micro_f1(&truth, &pred).unwrap();

    let truth2 = vec![
        PaSurvey::new("u", at, vec![0, 1, 2], None).unwrap(),
        PaSurvey::new("v", at, vec![3, 4, 5], None).unwrap(),
    ];
    let pred2 = vec![PredictionSet::new("u", (0..5).collect()), PredictionSet::new("v", (0..7).collect())];
    let ss = set_size_errors(&truth2, &pred2).unwrap();
    let pass = f1 == 2.0 / 3.0 && ss.abs_error == 3.0 && ss.bias == 3.0;
    outcome(pass, format!("micro F1 {f1}, set size abs {} bias {}", ss.abs_error, ss.bias))
}

// ---------------------------------------------------------------------------
// 3. Split soundness

fn criterion_3() -> Outcome {
    let mut r = rng(303);
    let (nx, ny) = (5, 4);
    let mut surveys = Vec::new();
    let mut true_block = BTreeMap::new();
    for bx in 0..nx {
        for by in 0..ny {
            for _ in 0..r.gen_range(1..=25) {
                let x = bx as f64 + r.gen_range(0.05..0.95);
                let y = by as f64 + r.gen_range(0.05..0.95);
                let id = format!("p{}", surveys.len());
                true_block.insert(id.clone(), (bx, by));
                surveys.push(PaSurvey::new(id, Location::planar(x, y), vec![0], None).unwrap());
            }
        }
    }
    let n = surveys.len() as f64;
    let mut per_block: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for b in true_block.values() {
        *per_block.entry(*b).or_default() += 1;
    }
    let max_weight = *per_block.values().max().unwrap() as f64 / n;

    let mut worst_gap: f64 = 0.0;
    let mut straddling = 0;
    for seed in 0..50 {
        let s = spatial_block_split(&surveys, 1.0, 0.8, Some((0.0, 0.0)), seed).unwrap();
        let mut sides: BTreeMap<(i64, i64), Vec<Side>> = BTreeMap::new();
        for sv in &surveys {
            sides.entry(true_block[&sv.survey_id]).or_default().push(s.side_of(&sv.survey_id).unwrap());
        }
        straddling += sides.values().filter(|v| v.iter().any(|&x| x != v[0])).count();
        let test = surveys.iter().filter(|sv| s.side_of(&sv.survey_id) == Some(Side::Test)).count() as f64;
        worst_gap = worst_gap.max((test / n - 0.8).abs());
        if sides.len() != 20 {
            return outcome(false, format!("seed {seed}: {} blocks found", sides.len()));
        }
    }
    outcome(
        straddling == 0 && worst_gap <= max_weight,
        format!("50 seeds: {straddling} straddling blocks, max |fraction - 0.8| {worst_gap:.4} <= block weight {max_weight:.4}"),
    )
}

// ---------------------------------------------------------------------------
// 4. Gradient checks

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    (0..x.len())
        .map(|j| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[j] += h;
            down[j] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let mut r = rng(404);
    let (mut glm, mut ce, mut bce) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let (n, d) = (r.gen_range(5..40), r.gen_range(1..8));
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.gen_range(-2.0..2.0)).collect()).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..n).map(|_| if r.gen::<f64>() < 0.3 { 1.0 } else { 0.0 }).collect();
        let theta: Vec<f64> = (0..=d).map(|_| r.gen_range(-0.7..0.7)).collect();
        let (g0, gb) = poisson_gradient(&x, &y, theta[0], &theta[1..]);
        let analytic: Vec<f64> = std::iter::once(g0).chain(gb).collect();
        let numeric = central_difference(|t| poisson_objective(&x, &y, t[0], &t[1..], 0.0), &theta);
        glm = glm.max(relative_error(&analytic, &numeric));

        let s = r.gen_range(2..30);
        let z: Vec<f64> = (0..s).map(|_| r.gen_range(-4.0..4.0)).collect();
        let label = r.gen_range(0..s);
        let numeric = central_difference(|z| loss_softmax_ce(z, label).0, &z);
        ce = ce.max(relative_error(&loss_softmax_ce(&z, label).1, &numeric));

        let yb: Vec<f64> = (0..s).map(|_| if r.gen::<bool>() { 1.0 } else { 0.0 }).collect();
        let numeric = central_difference(|z| loss_sigmoid_bce(z, &yb).0, &z);
        bce = bce.max(relative_error(&loss_sigmoid_bce(&z, &yb).1, &numeric));
    }
    outcome(
        glm < 1e-5 && ce < 1e-5 && bce < 1e-5,
        format!("max relative error: Poisson {glm:.2e}, softmax CE {ce:.2e}, sigmoid BCE {bce:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// 5. Cloglog calibration

fn criterion_5() -> Outcome {
    let w = default_world();
    let e = entry(&w.manifest, "maxent_all");
    let set = sdmbench::methods::TrainSet {
        grids: &w.data.grids,
        n_species: w.data.species.len(),
        po: &w.data.po,
        pa: &w.train,
    };
    let model = sdmbench::methods::fit(&e.spec, &set, SEED).unwrap();
    let FittedModel::Maxent { bank, .. } = &model else { unreachable!() };
    let locs: Vec<Location> = w.train.iter().map(|s| s.location).collect();
    let Output::Probabilities(p) = model.predict(&w.data.grids, &locs).unwrap() else { unreachable!() };
    let n = w.train.len() as f64;
    let mut worst: f64 = 0.0;
    let mut fitted = 0;
    for (s, entry) in bank.species.iter().enumerate() {
        if entry.model.is_none() {
            continue;
        }
        fitted += 1;
        let sum: f64 = p.iter().map(|v| v.values()[s]).sum();
        let count = w.train.iter().filter(|t| t.contains(s)).count() as f64;
        worst = worst.max((sum - count).abs());
    }
    outcome(
        fitted > 0 && worst <= 1e-6 * n,
        format!("{fitted} fitted species, max |sum p - presences| {worst:.2e} (bound {:.2e})", 1e-6 * n),
    )
}

// ---------------------------------------------------------------------------
// 6. Staged-training ordering

fn criterion_6() -> Outcome {
    let w = default_world();
    let start = Instant::now();
    let f1 = |name: &str| evaluate_on(w, name).report.micro_f1;
    let po = f1("staged_po");
    let pa = f1("staged_pa");
    let po_pa = f1("staged_po_pa");
    let pa_po = f1("staged_pa_po");
    let pa_po_pa = f1("staged_pa_po_pa");
    let elapsed = start.elapsed();
    let pass =
        po + 0.05 < po_pa && pa_po + 0.05 < po_pa && pa_po_pa >= pa - 0.01 && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "{} train / {} test; PO {po:.4}, PA/PO {pa_po:.4}, PA {pa:.4}, PO/PA {po_pa:.4}, PA/PO/PA {pa_po_pa:.4}",
            w.train.len(),
            w.test.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Species filtering

fn criterion_7() -> Outcome {
    let config = SynthConfig { n_rare_species: 30, rare_peak_logit: (-4.0, -2.5), ..SynthConfig::default() };
    let data = SynthData::generate(&config, SEED).unwrap().into_data();
    let m = RunManifest::default_synthetic(SEED);
    let (train, test) = split(&data, &m);
    let n = config.n_species;
    let rare_max = (n - 30..n).map(|s| train.iter().filter(|t| t.contains(s)).count()).max().unwrap();
    let filtered = fit_and_evaluate(&entry(&m, "maxent"), &data, &train, &test, SEED).unwrap().report;
    let all = fit_and_evaluate(&entry(&m, "maxent_all"), &data, &train, &test, SEED).unwrap().report;
    let gain = filtered.micro_f1 - all.micro_f1;
    outcome(
        rare_max < 10 && gain >= 0.03 && filtered.set_size.abs_error < all.set_size.abs_error,
        format!(
            "rare species max {rare_max} train presences; F1 filtered {:.4} vs all {:.4} (gain {gain:+.4}); abs error {:.4} vs {:.4}",
            filtered.micro_f1, all.micro_f1, filtered.set_size.abs_error, all.set_size.abs_error
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. Set-size control

fn criterion_8() -> Outcome {
    let w = default_world();
    let model = evaluate_on(w, "staged_pa_po_pa").model;
    let ids: Vec<String> = w.test.iter().map(|s| s.survey_id.clone()).collect();
    let locs: Vec<Location> = w.test.iter().map(|s| s.location).collect();
    let Output::Probabilities(p) = model.predict(&w.data.grids, &locs).unwrap() else { unreachable!() };
    let abs = |rule: AssemblageRule| set_size_errors(&w.test, &assemble_all(&ids, &p, &rule).unwrap()).unwrap().abs_error;
    let top_s = abs(AssemblageRule::top_s());
    let threshold = abs(AssemblageRule::threshold(0.5));
    outcome(top_s < threshold, format!("abs error top-S {top_s:.4} vs threshold 0.5 {threshold:.4}"))
}

// ---------------------------------------------------------------------------
// 9. KNN-PO over-prediction

fn criterion_9() -> Outcome {
    let w = default_world();
    let po = evaluate_on(w, "knn_po").report.set_size.bias;
    let pa = evaluate_on(w, "knn_pa").report.set_size.bias;
    outcome(po > 0.0 && po > pa, format!("bias knn_po(k=100) {po:.4} vs knn_pa {pa:.4}"))
}

// ---------------------------------------------------------------------------
// 10. Detection-bias diagnostic

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            ranks[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn spearman_of(config: &SynthConfig) -> (f64, f64) {
    let d = SynthData::generate(config, SEED).unwrap().into_data();
    let c = presence_count_comparison(&d.pa, &d.po, 1.0, d.species.len()).unwrap();
    let (a, b): (Vec<f64>, Vec<f64>) =
        c.pa_count.iter().zip(&c.po_count).filter(|(&p, _)| p > 0).map(|(&p, &q)| (p as f64, q as f64)).unzip();
    (c.spearman.unwrap_or(f64::NAN), pearson(&average_ranks(&a), &average_ranks(&b)))
}

fn criterion_10() -> Outcome {
    let (skewed, skewed_oracle) = spearman_of(&SynthConfig::default());
    let (unbiased, unbiased_oracle) = spearman_of(&SynthConfig::unbiased());
    let agree = (skewed - skewed_oracle).abs() < 1e-12 && (unbiased - unbiased_oracle).abs() < 1e-12;
    outcome(
        agree && skewed < 0.5 && unbiased > 0.9,
        format!("Spearman skewed {skewed:.4}, unbiased {unbiased:.4} (rank oracle agrees: {agree})"),
    )
}

// ---------------------------------------------------------------------------
// 11. Constant-K calibration

fn brute_force_constant_k(val: &[PaSurvey], n_species: usize, k_max: usize) -> (usize, f64) {
    let mut freq = vec![0usize; n_species];
    for s in val {
        for &k in s.present() {
            freq[k] += 1;
        }
    }
    let mut ranking: Vec<usize> = (0..n_species).collect();
    ranking.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
    let mut best = (0, f64::NEG_INFINITY);
    for k in 1..=k_max {
        let mut set: Vec<usize> = ranking[..k].to_vec();
        set.sort_unstable();
        let preds: Vec<PredictionSet> = val.iter().map(|s| PredictionSet::new(s.survey_id.clone(), set.clone())).collect();
        let truth: Vec<Vec<bool>> = val.iter().map(|s| (0..n_species).map(|j| s.contains(j)).collect()).collect();
        let pred: Vec<Vec<bool>> = preds.iter().map(|p| (0..n_species).map(|j| p.species().contains(&j)).collect()).collect();
        let score = brute_force_metrics(&truth, &pred).0;
        if score > best.1 {
            best = (k, score);
        }
    }
    best
}

fn criterion_11() -> Outcome {
    let mut mismatches = Vec::new();
    let mut ks = Vec::new();
    for i in 0..20u64 {
        let config = SynthConfig { nx: 24, ny: 24, ..SynthConfig::default() };
        let world = generate_world(&config, 1000 + i).unwrap();
        let val = sample_pa(&world, 20 + 15 * i as usize, 2000 + i).unwrap();
        let (k, score) = brute_force_constant_k(&val, config.n_species, 40);
        let c = calibrate_constant_k(&val, config.n_species, 40).unwrap();
        ks.push(k);
        if c.k != k || (c.score - score).abs() > 1e-12 {
            mismatches.push(format!("set {i}: K {} vs {k}", c.k));
        }
    }
    outcome(mismatches.is_empty(), format!("20 sets, brute-force K = {ks:?} {}", mismatches.join("; ")))
}

// ---------------------------------------------------------------------------
// 12. Determinism

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn criterion_12() -> Outcome {
    let m = RunManifest::default_synthetic(SEED);
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<_> = [(1, "a"), (1, "b"), (4, "c")]
        .iter()
        .map(|&(workers, name)| {
            let dir = tmp.path().join(name);
            run(&m, &dir, &RunOptions { workers: Some(workers), verbose: false }).unwrap();
            files(&dir)
        })
        .collect();
    let submissions = runs[0].keys().filter(|p| p.ends_with("submission.csv")).count();
    let differing: Vec<String> = runs[0]
        .keys()
        .chain(runs[1].keys())
        .chain(runs[2].keys())
        .filter(|p| runs[0].get(*p) != runs[1].get(*p) || runs[0].get(*p) != runs[2].get(*p))
        .map(|p| p.display().to_string())
        .collect();
    let has_board = runs[0].contains_key(Path::new("leaderboard.csv"));
    outcome(
        has_board && submissions == m.methods.len() && differing.is_empty(),
        format!(
            "3 runs (1, 1, 4 workers): {} files each, {submissions} submissions, {} differing {:?}",
            runs[0].len(),
            differing.len(),
            differing
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("metric oracle equivalence", criterion_1),
        ("hand values", criterion_2),
        ("split soundness", criterion_3),
        ("gradient checks", criterion_4),
        ("cloglog calibration", criterion_5),
        ("staged-training ordering", criterion_6),
        ("species filtering", criterion_7),
        ("set-size control", criterion_8),
        ("KNN-PO over-prediction", criterion_9),
        ("detection-bias diagnostic", criterion_10),
        ("constant-K calibration", criterion_11),
        ("determinism", criterion_12),
    ];
    let limits: BTreeMap<usize, Duration> =
        [(1, Duration::from_secs(5)), (4, Duration::from_secs(10)), (6, Duration::from_secs(300))].into();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        let start = Instant::now();
        let result = std::panic::catch_unwind(check);
        let elapsed = start.elapsed();
        let mut o = result.unwrap_or_else(|_| outcome(false, "panicked".into()));
        if let Some(&limit) = limits.get(&n) {
            if elapsed > limit {
                o.pass = false;
                o.detail.push_str(&format!("; over the {limit:?} limit"));
            }
        }
        if !o.pass {
            failed += 1;
        }
        println!("{} {n:>2} {name}: {} [{elapsed:.1?}]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
