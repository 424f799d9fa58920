//! Acceptance suite. Prints one PASS/FAIL line per criterion, plus `INFO`
//! lines with extra measurements, and exits non-zero if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use cgscore::analysis::{self, default_grid, detection_curve, inverse_identity_diagnostic, spearman};
use cgscore::dataset::inject_label_noise;
use cgscore::kernel::{gram, gram_of_rows, relu_kernel, BinaryView, GramMatrix};
use cgscore::linalg::{direct_cg_oracle, invert_spd, loo_inverse, InvertOptions};
use cgscore::multiclass::{score_all, StochasticConfig};
use cgscore::rng::rng_from_seed;
use cgscore::scoring::{cg_all, records_from_inverse, ScoreRecord};
use cgscore::synth::{synth_gaussian, synth_gaussian_multiclass, GaussianBenchmark};
use cgscore::Dataset;
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const CORPUS_SIZE: usize = 50;
const CORPUS_SEED: u64 = 20_240_601;
const SYNTH_SEED: u64 = 0;
const NOISE_FRACTION: f64 = 0.1;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn info(line: String) {
    println!("INFO  {line}");
}

// ---------------------------------------------------------------------------
// random corpus

struct CorpusItem {
    h: GramMatrix,
    y: Vec<f64>,
}

fn corpus() -> Vec<CorpusItem> {
    let mut rng = rng_from_seed(CORPUS_SEED);
    (0..CORPUS_SIZE)
        .map(|_| {
            let n = rng.random_range(5..=200usize);
            let d = rng.random_range(3..=50usize);
            let feats = Array2::from_shape_simple_fn((n, d), || {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            });
            let mut labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..2u32)).collect();
            let flip = rng.random_range(0..n);
            if labels.iter().all(|&l| l == labels[0]) {
                labels[flip] = 1 - labels[0];
            }
            let ds = Dataset::new(feats, labels).unwrap();
            let view = BinaryView::one_vs_rest(&ds, 1).unwrap();
            CorpusItem { h: gram(&ds, &view).unwrap(), y: view.signs().to_vec() }
        })
        .collect()
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn oracle_equivalence(corpus: &[CorpusItem]) -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut checked = 0usize;
    for (k, item) in corpus.iter().enumerate() {
        let records = match cg_all(&item.h, &item.y) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("dataset {k}: {e}"));
                continue;
            }
        };
        for r in &records {
            match direct_cg_oracle(&item.h, &item.y, r.index) {
                Ok(oracle) => {
                    let err = (r.cg - oracle).abs() / (1.0 + oracle.abs());
                    worst = worst.max(err);
                    if err > 1e-6 {
                        failures.push(format!("dataset {k} i={}: {} vs {}", r.index, r.cg, oracle));
                    }
                    checked += 1;
                }
                Err(e) => failures.push(format!("dataset {k} i={}: oracle {e}", r.index)),
            }
        }
    }
    let elapsed = started.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60);
    outcome(
        "oracle equivalence",
        pass,
        format!(
            "{checked} scores, max |cg-oracle|/(1+|oracle|) = {worst:.2e} (tol 1e-6), {} failures{}, {:.1}s (limit 60s)",
            failures.len(),
            failures.first().map(|f| format!(" [first: {f}]")).unwrap_or_default(),
            elapsed.as_secs_f64()
        ),
    )
}

fn schur_identity(corpus: &[CorpusItem]) -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut checked = 0usize;
    for (k, item) in corpus.iter().enumerate() {
        let inv = match invert_spd(&item.h, InvertOptions::default()) {
            Ok(v) => v,
            Err(e) => {
                failures.push(format!("dataset {k}: {e}"));
                continue;
            }
        };
        for i in 0..item.h.size() {
            let schur = loo_inverse(&item.h, &inv, i).unwrap();
            let Some(direct) = to_dmatrix(&item.h.minor(i)).try_inverse() else {
                failures.push(format!("dataset {k} i={i}: minor not invertible"));
                continue;
            };
            let num: f64 = schur.indexed_iter().map(|((a, b), v)| (v - direct[(a, b)]).powi(2)).sum::<f64>().sqrt();
            let rel = num / direct.norm();
            worst = worst.max(rel);
            if rel > 1e-8 {
                failures.push(format!("dataset {k} i={i}: rel {rel:.2e}"));
            }
            checked += 1;
        }
    }
    outcome(
        "schur identity",
        failures.is_empty(),
        format!(
            "{checked} leave-one-out inverses, max relative Frobenius error {worst:.2e} (tol 1e-8), {} failures{}",
            failures.len(),
            failures.first().map(|f| format!(" [first: {f}]")).unwrap_or_default()
        ),
    )
}

fn nonnegativity_and_decomposition(corpus: &[CorpusItem]) -> Outcome {
    let mut min_cg = f64::INFINITY;
    let mut worst_rel = 0.0f64;
    let mut failures = 0usize;
    let mut count = 0usize;
    for item in corpus {
        let Ok(records) = cg_all(&item.h, &item.y) else {
            failures += 1;
            continue;
        };
        for r in records {
            min_cg = min_cg.min(r.cg);
            let sum = r.partial_sq + r.partial_cross + r.partial_diag;
            let rel = (r.cg - sum).abs() / r.cg.abs();
            worst_rel = worst_rel.max(rel);
            if r.cg < -1e-9 || !(rel <= 1e-8) {
                failures += 1;
            }
            count += 1;
        }
    }
    outcome(
        "non-negativity + decomposition",
        failures == 0,
        format!("{count} scores, min cg {min_cg:.3e} (>= -1e-9), max |cg - Σpartials|/|cg| {worst_rel:.2e} (tol 1e-8), {failures} failures"),
    )
}

// ---------------------------------------------------------------------------
// kernel

fn gram_invariants() -> Outcome {
    let mut rng = rng_from_seed(77);
    let mut problems = Vec::new();
    let mut max_diag_err = 0.0f64;
    let mut max_abs = 0.0f64;
    for pair in 0..10_000 {
        let d = rng.random_range(2..=64usize);
        let mut v: Vec<f64> = (0..2 * d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        // every fourth pair is near-parallel or near-antiparallel
        if pair % 4 == 0 {
            let s = if pair % 8 == 0 { 1.0 } else { -1.0 };
            for j in 0..d {
                v[d + j] = s * v[j] + 1e-9 * v[d + j];
            }
        }
        let feats = Array2::from_shape_vec((2, d), v).unwrap();
        let ds = Dataset::new(feats, vec![0, 1]).unwrap();
        let h = match gram_of_rows(ds.features(), &[0, 1]) {
            Ok(h) => h,
            Err(e) => {
                problems.push(format!("pair {pair}: {e}"));
                continue;
            }
        };
        if h.get(0, 1).to_bits() != h.get(1, 0).to_bits() {
            problems.push(format!("pair {pair}: asymmetric"));
        }
        for i in 0..2 {
            max_diag_err = max_diag_err.max((h.get(i, i) - 0.5).abs());
        }
        for &x in h.entries() {
            max_abs = max_abs.max(x.abs());
        }
    }
    let spots = [(1.0, 0.5), (0.0, 0.0), (-1.0, 0.0), (0.5, 1.0 / 6.0)];
    let mut spot_err = 0.0f64;
    for (rho, want) in spots {
        spot_err = spot_err.max((relu_kernel(rho).unwrap() - want).abs());
    }
    let pass = problems.is_empty() && max_diag_err <= 1e-12 && max_abs <= 0.5 && spot_err <= 1e-15;
    outcome(
        "gram invariants",
        pass,
        format!(
            "10000 pairs, {} asymmetric/errors, max |diag-0.5| {max_diag_err:.1e} (tol 1e-12), max |entry| {max_abs} (<= 0.5), spot error {spot_err:.1e}",
            problems.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// synthetic Gaussian benchmark

struct SyntheticRun {
    scale: &'static str,
    clean: Vec<ScoreRecord>,
    noisy: Vec<ScoreRecord>,
    flipped: Vec<bool>,
    abs_x1: Vec<f64>,
    mean_diag: f64,
    ratio: f64,
    elapsed: Duration,
}

fn binary_scores(ds: &Dataset) -> (Vec<ScoreRecord>, cgscore::InverseGram) {
    let view = BinaryView::one_vs_rest(ds, 0).unwrap();
    let h = gram(ds, &view).unwrap();
    let inv = invert_spd(&h, InvertOptions::default()).unwrap();
    let records = records_from_inverse(&h, &inv, view.signs()).unwrap();
    (records, inv)
}

fn synthetic(bench: GaussianBenchmark, scale: &'static str) -> SyntheticRun {
    let started = Instant::now();
    let sample = bench.sample(SYNTH_SEED).unwrap();
    let (clean, inv) = binary_scores(&sample.dataset);
    let diag = inverse_identity_diagnostic(&inv).unwrap();
    let (noisy_ds, mask) = inject_label_noise(&sample.dataset, NOISE_FRACTION, SYNTH_SEED).unwrap();
    let (noisy, _) = binary_scores(&noisy_ds);
    SyntheticRun {
        scale,
        clean,
        noisy,
        flipped: mask.flipped,
        abs_x1: sample.first_coordinate.iter().map(|x| x.abs()).collect(),
        mean_diag: diag.mean_diag,
        ratio: diag.ratio,
        elapsed: started.elapsed(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn cg_of(records: &[ScoreRecord]) -> Vec<f64> {
    records.iter().map(|r| r.cg).collect()
}

struct SyntheticMeasures {
    median_noisy: f64,
    median_clean: f64,
    recall_02: f64,
    boundary_rho: f64,
    noisy_positive: f64,
    clean_negative: f64,
    dominant: f64,
}

fn measure(run: &SyntheticRun) -> SyntheticMeasures {
    let cg = cg_of(&run.noisy);
    let pick = |want: bool| -> Vec<f64> { cg.iter().zip(&run.flipped).filter(|(_, &f)| f == want).map(|(&c, _)| c).collect() };
    let mask = cgscore::NoiseMask {
        flipped: run.flipped.clone(),
        original_labels: vec![0; run.flipped.len()],
    };
    let curve = detection_curve(&cg, &mask, &default_grid()).unwrap();
    let partial: Vec<f64> = run.noisy.iter().map(|r| r.partial_cross).collect();
    let split = analysis::partial_sign_split(&partial, &mask).unwrap();
    let clean_cg = cg_of(&run.clean);
    let clean_cross: Vec<f64> = run.clean.iter().map(|r| r.partial_cross).collect();
    SyntheticMeasures {
        median_noisy: median(pick(true)),
        median_clean: median(pick(false)),
        recall_02: curve.recall_at(0.2).unwrap(),
        boundary_rho: spearman(&clean_cg, &run.abs_x1).unwrap(),
        noisy_positive: split.noisy_positive_rate(),
        clean_negative: split.clean_negative_rate(),
        dominant: spearman(&clean_cg, &clean_cross).unwrap(),
    }
}

fn synthetic_outcomes(run: &SyntheticRun, m: &SyntheticMeasures) -> Vec<Outcome> {
    let a = m.median_noisy > m.median_clean && m.recall_02 >= 0.95;
    let b = m.boundary_rho <= -0.3;
    let c = (1.8..=2.2).contains(&run.mean_diag) && run.ratio <= 0.1;
    let all = a && b && c && run.elapsed < Duration::from_secs(60);
    vec![
        outcome(
            "synthetic gaussian reproduction",
            all,
            format!(
                "{} scale, seed {SYNTH_SEED}: (a) median cg noisy {:.4} vs clean {:.4}, recall(0.2) {:.4} (>= 0.95) [{}]; \
                 (b) spearman(cg,|x1|) {:.4} (<= -0.3) [{}]; (c) mean_diag {:.4} (in [1.8,2.2]), ratio {:.4} (<= 0.1) [{}]; {:.1}s (limit 60s)",
                run.scale,
                m.median_noisy,
                m.median_clean,
                m.recall_02,
                if a { "ok" } else { "miss" },
                m.boundary_rho,
                if b { "ok" } else { "miss" },
                run.mean_diag,
                run.ratio,
                if c { "ok" } else { "miss" },
                run.elapsed.as_secs_f64()
            ),
        ),
        outcome(
            "partial-sign separation",
            m.noisy_positive >= 0.9 && m.clean_negative >= 0.9,
            format!(
                "{} scale: flipped with partial_cross > 0: {:.4} (>= 0.9); clean with partial_cross < 0: {:.4} (>= 0.9)",
                run.scale, m.noisy_positive, m.clean_negative
            ),
        ),
        outcome(
            "dominant-term correlation",
            m.dominant >= 0.9,
            format!("{} scale, clean labels: spearman(cg, partial_cross) {:.4} (>= 0.9)", run.scale, m.dominant),
        ),
    ]
}

fn full_scale_info(run: &SyntheticRun, m: &SyntheticMeasures) {
    info(format!(
        "full scale (1000/class, d=3000, seed {SYNTH_SEED}): median noisy {:.4} clean {:.4}, recall(0.2) {:.4}, \
         spearman(cg,|x1|) {:.4}, mean_diag {:.4}, ratio {:.4}, flipped>0 {:.4}, clean<0 {:.4}, \
         spearman(cg,partial_cross) {:.4}, {:.1}s",
        m.median_noisy,
        m.median_clean,
        m.recall_02,
        m.boundary_rho,
        run.mean_diag,
        run.ratio,
        m.noisy_positive,
        m.clean_negative,
        m.dominant,
        run.elapsed.as_secs_f64()
    ));
}

// ---------------------------------------------------------------------------
// stochastic subsampling

fn stochastic_convergence() -> Outcome {
    // 5 classes of 100: each class sees a pool of 400 negatives, so ratios
    // 1..=4 cover 25%, 50%, 75% and 100% of it.
    let ds = synth_gaussian_multiclass(5, 100, 3000, 1.0, 0.25, SYNTH_SEED).unwrap();
    let full = score_all(&ds, &StochasticConfig::new(4, 1, 0)).unwrap().cg();
    let mut means = Vec::new();
    for ratio in 1..=4usize {
        let mut total = 0.0;
        for seed in 0..5u64 {
            let sub = score_all(&ds, &StochasticConfig::new(ratio, 1, seed)).unwrap().cg();
            total += spearman(&sub, &full).unwrap();
        }
        means.push(total / 5.0);
    }
    let monotone = means.windows(2).all(|w| w[0] <= w[1]);
    let exact = (means[3] - 1.0).abs() <= 1e-12;
    outcome(
        "stochastic convergence",
        monotone && exact,
        format!(
            "mean spearman over 5 seeds at 25/50/75/100% coverage: {:.4} {:.4} {:.4} {:.12} (non-decreasing, last = 1)",
            means[0], means[1], means[2], means[3]
        ),
    )
}

// ---------------------------------------------------------------------------
// determinism and complexity

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_gaussian_multiclass(4, 60, 200, 1.0, 0.25, 5).unwrap();
    let input = dir.path().join("data.csv");
    ds.save_csv(&input).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.path().join(format!("scores_{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_cgscore"))
            .env_remove("CGV_THREADS")
            .args(["--threads", threads, "score", "--input"])
            .arg(&input)
            .args(["--ratio", "1", "--runs", "4", "--seed", "42", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        if !status.success() {
            return outcome("determinism", false, format!("cgscore exited with {status} at --threads {threads}"));
        }
        outputs.push(std::fs::read(&out).unwrap());
    }
    let same = outputs[0] == outputs[1];
    outcome(
        "determinism",
        same,
        format!("score CSV at --threads 1 vs 8: {} ({} bytes)", if same { "byte-identical" } else { "differs" }, outputs[0].len()),
    )
}

fn complexity() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let sizes = [200usize, 400, 800];
    let mut times = Vec::new();
    for &n in &sizes {
        let ds = synth_gaussian(n / 2, 1000, 1.0, 0.25, 3).unwrap();
        let view = BinaryView::one_vs_rest(&ds, 0).unwrap();
        let h = gram(&ds, &view).unwrap();
        let best = (0..3)
            .map(|_| {
                let t = Instant::now();
                pool.install(|| cg_all(&h, view.signs()).unwrap());
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min);
        times.push(best);
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    outcome(
        "complexity",
        (2.5..=3.5).contains(&slope),
        format!(
            "cg_all single-thread min-of-3: n=200 {:.4}s, n=400 {:.4}s, n=800 {:.4}s; log-log exponent {slope:.3} (in [2.5,3.5])",
            times[0], times[1], times[2]
        ),
    )
}

fn main() {
    let mut outcomes = Vec::new();
    let corpus = corpus();
    outcomes.push(oracle_equivalence(&corpus));
    outcomes.push(schur_identity(&corpus));
    outcomes.push(gram_invariants());
    outcomes.push(nonnegativity_and_decomposition(&corpus));

    let reduced = synthetic(GaussianBenchmark::reduced(), "reduced (200/class, d=3000)");
    let reduced_m = measure(&reduced);
    let synth = synthetic_outcomes(&reduced, &reduced_m);
    let mut synth = synth.into_iter();
    outcomes.push(synth.next().unwrap());
    outcomes.push(synth.next().unwrap());
    outcomes.push(stochastic_convergence());
    outcomes.push(synth.next().unwrap());
    outcomes.push(determinism());
    outcomes.push(complexity());

    if std::env::var_os("CGSCORE_SKIP_FULL_SCALE").is_none() {
        let full = synthetic(GaussianBenchmark::default(), "full");
        full_scale_info(&full, &measure(&full));
    }

    let mut failed = 0;
    for (k, o) in outcomes.iter().enumerate() {
        println!("{} [{:>2}] {}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.name, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {} failed", outcomes.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
