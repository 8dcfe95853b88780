//! Acceptance suite. Each test prints one `acceptance NN ...: PASS/FAIL`
//! line and asserts the stated tolerance.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use osr_core::data::{gen_blobs, gen_supplementary_2d, open_split, LabeledDataset};
use osr_core::distributions::{fit_weibull, weibull_loglik, WeibullParams};
use osr_core::eval::{
    abating_check, kl_comparison_study, open_f_measure, open_space_risk, openness, ConfusionTally,
    OpennessSpec,
};
use osr_core::netcore::{
    loss_gradient, mean_loss, Activation, FeedforwardNet, Loss, TrainConfig,
};
use osr_core::openset::{
    calibrate, evaluate, recognize, score, train_bank, BaselineKind,
    CalibratedModel, OvrModelBank, MIN_TAIL,
};

fn report(n: usize, name: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {n:02} {name}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "acceptance {n:02} {name}: {detail}");
}

// ---- shared supplementary-experiment model -------------------------------

struct Supplementary {
    data: LabeledDataset,
    bank: OvrModelBank,
    train_time: Duration,
    head_losses: Vec<f64>,
}

fn supplementary() -> &'static Supplementary {
    static CELL: OnceLock<Supplementary> = OnceLock::new();
    CELL.get_or_init(|| {
        let data = gen_supplementary_2d(42, 50).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 20_000,
            batch_size: 32,
            momentum: 0.9,
            seed: 42,
            target_loss: 8e-4,
        };
        let start = Instant::now();
        let bank = train_bank(&data, &[5], &cfg, BaselineKind::None).unwrap();
        let train_time = start.elapsed();
        let head_losses = bank
            .class_labels
            .iter()
            .zip(&bank.heads)
            .map(|(label, head)| {
                let targets: Vec<Vec<f64>> = data
                    .labels
                    .iter()
                    .map(|l| vec![if l == label { 1.0 } else { 0.0 }])
                    .collect();
                mean_loss(head, &data.features, &targets, Loss::Bce)
            })
            .collect();
        Supplementary {
            data,
            bank,
            train_time,
            head_losses,
        }
    })
}

#[test]
fn acceptance_01_supplementary_experiment() {
    let sup = supplementary();
    let worst = sup.head_losses.iter().cloned().fold(0.0, f64::max);
    let ok = worst <= 1e-3 && sup.train_time < Duration::from_secs(30);
    report(
        1,
        "supplementary 2d heads reach cross-entropy <= 1e-3 in < 30 s",
        ok,
        &format!("worst loss {worst:.2e}, train {:.2?}", sup.train_time),
    );
}

#[test]
fn acceptance_02_openness_arithmetic() {
    let cases = [
        (12, 22, 22, 26.1),
        (12, 72, 72, 59.2),
        (40, 45, 45, 5.7),
        (40, 100, 100, 36.8),
    ];
    let mut worst = 0.0f64;
    for &(t, e, r, expect_pct) in &cases {
        let o = openness(&OpennessSpec {
            nc_train: t,
            nc_eval: e,
            nc_recognize: r,
        })
        .unwrap();
        worst = worst.max((100.0 * o - expect_pct).abs());
    }
    report(
        2,
        "openness values match quoted percentages within 0.1",
        worst <= 0.1,
        &format!("max deviation {worst:.3} pct points"),
    );
}

#[test]
fn acceptance_03_zero_risk_threshold() {
    let sup = supplementary();
    let class = 0;
    let train_points: Vec<Vec<f64>> = sup
        .data
        .indices_of(&sup.bank.class_labels[class])
        .iter()
        .map(|&i| sup.data.features[i].clone())
        .collect();
    let start = Instant::now();
    let below = open_space_risk(
        &sup.bank.heads[class],
        0,
        &train_points,
        0.05,
        0.0,
        0.1,
        128,
        0.5,
    )
    .unwrap();
    let min_score = below.grid.min_train_score;
    let above = open_space_risk(
        &sup.bank.heads[class],
        0,
        &train_points,
        0.05,
        0.0,
        min_score + 1e-9,
        128,
        0.5,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let ok = above.risk == 0.0
        && !above.undefined
        && below.risk > 0.0
        && !below.undefined
        && elapsed < Duration::from_secs(10);
    report(
        3,
        "risk is exactly 0 above the minimum training probability, > 0 below",
        ok,
        &format!(
            "risk above cutoff {}, below {:.4}, grid 128^2 in {:.2?}",
            above.risk, below.risk, elapsed
        ),
    );
}

#[test]
fn acceptance_04_abating_probes() {
    let mut total_checked = 0usize;
    let mut total_violations = 0usize;
    for seed in 0..20u64 {
        let net = FeedforwardNet::new(3, &[6, 4], 2, Activation::Sigmoid, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let probes: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let rep = abating_check(&net, (seed % 2) as usize, &probes, 1e-4).unwrap();
        total_checked += rep.checked;
        total_violations += rep.violations.len();
    }
    report(
        4,
        "no abating violations over 1000 probes on each of 20 nets",
        total_violations == 0,
        &format!("{total_checked} probes checked, {total_violations} violations"),
    );
}

fn sample_weibull(p: &WeibullParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            p.nu + p.lambda * (-(1.0 - u).ln()).powf(1.0 / p.kappa)
        })
        .collect()
}

#[test]
fn acceptance_05_weibull_mle_recovery() {
    let mut ok = true;
    let mut detail = String::new();
    for (i, &kappa) in [0.8, 1.5, 3.0].iter().enumerate() {
        let truth = WeibullParams {
            nu: 0.3,
            lambda: 1.7,
            kappa,
        };
        let data = sample_weibull(&truth, 10_000, 77 + i as u64);
        let fit = fit_weibull(&data, MIN_TAIL).unwrap();
        let lam_err = (fit.params.lambda - truth.lambda).abs() / truth.lambda;
        let kap_err = (fit.params.kappa - truth.kappa).abs() / truth.kappa;
        ok &= fit.converged && lam_err < 0.10 && kap_err < 0.10;
        detail.push_str(&format!(
            "kappa {kappa}: lambda err {lam_err:.3}, kappa err {kap_err:.3}; "
        ));

        // 20x20 grid around the fit must never beat the MLE likelihood.
        for li in 0..20 {
            for ki in 0..20 {
                let cand = WeibullParams {
                    nu: fit.params.nu,
                    lambda: fit.params.lambda * (0.5 + li as f64 / 19.0),
                    kappa: fit.params.kappa * (0.5 + ki as f64 / 19.0),
                };
                let ll = weibull_loglik(&cand, &data).unwrap();
                ok &= ll <= fit.loglik + 1e-9;
            }
        }
    }
    report(
        5,
        "MLE recovers lambda and kappa within 10% and dominates a 20x20 grid",
        ok,
        detail.trim_end_matches("; "),
    );
}

#[test]
fn acceptance_06_calibration_monotonicity_and_rejection() {
    let sup = supplementary();
    let evt = calibrate(&sup.bank, &sup.data, 0.2, MIN_TAIL).unwrap();

    // Monotone membership probability over a dense score grid.
    let mut monotone = true;
    for class_evt in &evt {
        let mut prev = -1.0;
        for i in 0..1000 {
            let s = i as f64 / 999.0;
            let p = osr_core::openset::membership_probability(class_evt, s);
            monotone &= p >= prev && (0.0..=1.0).contains(&p);
            prev = p;
        }
    }

    // Rejection fires exactly when the max probability is under theta.
    let mut model = CalibratedModel {
        bank: sup.bank.clone(),
        evt,
        theta: 0.5,
        alpha: 0.2,
        head_topology: "separate_per_class".into(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut exact = true;
    for _ in 0..10_000 {
        model.theta = rng.random_range(0.001..0.999);
        let x = vec![rng.random_range(-6.0..14.0), rng.random_range(-6.0..14.0)];
        let rec = recognize(&model, &x).unwrap();
        let max = rec
            .per_class
            .iter()
            .map(|(_, p)| *p)
            .fold(f64::NEG_INFINITY, f64::max);
        exact &= rec.label.is_none() == (max < model.theta);
        exact &= (rec.probability - max).abs() == 0.0;
    }
    report(
        6,
        "membership probability nondecreasing; rejection exactly below theta",
        monotone && exact,
        &format!("monotone {monotone}, rejection rule exact {exact}"),
    );
}

fn flat_params(net: &FeedforwardNet) -> Vec<f64> {
    let mut out = Vec::new();
    for l in &net.layers {
        out.extend_from_slice(&l.weights);
        out.extend_from_slice(&l.biases);
    }
    out
}

fn set_flat_params(net: &mut FeedforwardNet, flat: &[f64]) {
    let mut i = 0;
    for l in net.layers.iter_mut() {
        let nw = l.weights.len();
        let nb = l.biases.len();
        l.weights.copy_from_slice(&flat[i..i + nw]);
        i += nw;
        l.biases.copy_from_slice(&flat[i..i + nb]);
        i += nb;
    }
}

#[test]
fn acceptance_07_gradient_finite_difference() {
    let archs: [(usize, &[usize], usize, Activation, Loss); 5] = [
        (2, &[5], 1, Activation::Sigmoid, Loss::Bce),
        (3, &[4, 3], 2, Activation::Sigmoid, Loss::Bce),
        (4, &[], 3, Activation::Softmax, Loss::Ce),
        (2, &[6], 3, Activation::Softmax, Loss::Ce),
        (5, &[3, 3, 3], 1, Activation::Sigmoid, Loss::Bce),
    ];
    let mut worst = 0.0f64;
    let mut count = 0;
    for rep in 0..4u64 {
        for (a, &(din, hidden, dout, act, loss)) in archs.iter().enumerate() {
            let seed = rep * 100 + a as u64;
            let net = FeedforwardNet::new(din, hidden, dout, act, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 7777);
            let inputs: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..din).map(|_| rng.random_range(-1.5..1.5)).collect())
                .collect();
            let targets: Vec<Vec<f64>> = (0..6)
                .map(|_| match loss {
                    Loss::Bce => (0..dout)
                        .map(|_| if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 })
                        .collect(),
                    Loss::Ce => {
                        let hot = rng.random_range(0..dout);
                        (0..dout).map(|j| if j == hot { 1.0 } else { 0.0 }).collect()
                    }
                })
                .collect();
            let (_, grad) = loss_gradient(&net, &inputs, &targets, loss);
            let base = flat_params(&net);
            let base_patterns: Vec<_> = inputs
                .iter()
                .map(|x| net.forward(x).unwrap().pattern)
                .collect();
            let h = 1e-5;
            for j in 0..base.len() {
                let mut plus = base.clone();
                plus[j] += h;
                let mut minus = base.clone();
                minus[j] -= h;
                let mut net_p = net.clone();
                set_flat_params(&mut net_p, &plus);
                let mut net_m = net.clone();
                set_flat_params(&mut net_m, &minus);
                // A parameter step that flips a ReLU unit puts the two
                // evaluation points on different affine pieces; the central
                // quotient is meaningless there.
                let crosses_kink = inputs.iter().zip(&base_patterns).any(|(x, pat)| {
                    net_p.forward(x).unwrap().pattern != *pat
                        || net_m.forward(x).unwrap().pattern != *pat
                });
                if crosses_kink {
                    continue;
                }
                let fd = (mean_loss(&net_p, &inputs, &targets, loss)
                    - mean_loss(&net_m, &inputs, &targets, loss))
                    / (2.0 * h);
                let rel = (grad[j] - fd).abs() / grad[j].abs().max(1.0);
                worst = worst.max(rel);
            }
            count += 1;
        }
    }
    report(
        7,
        "backprop matches central differences across 20 architectures",
        count == 20 && worst < 1e-4,
        &format!("{count} nets, worst relative error {worst:.2e}"),
    );
}

fn rep_by_class(
    data: &LabeledDataset,
    mut f: impl FnMut(&[f64]) -> Vec<f64>,
) -> BTreeMap<String, Vec<Vec<f64>>> {
    let mut out: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (x, label) in data.features.iter().zip(&data.labels) {
        out.entry(label.clone()).or_default().push(f(x));
    }
    out
}

const KL_SEEDS: [u64; 10] = [11, 12, 13, 14, 15, 16, 17, 18, 19, 20];

/// 6 known blobs on a circle of radius 10 (unit variance, features scaled
/// by 0.2), 3 unknown blobs at radius 6 along the rays of knowns 0, 2, 4:
/// deep inside a known's cell the softmax confidence stays as high as on
/// the known itself, while the absolute one-vs-rest score falls away.
/// 150 train + 150 test samples per known, 150 test per unknown.
fn confidence_scenario(seed: u64) -> (LabeledDataset, LabeledDataset, Vec<String>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 150;
    let scale = 0.2;
    let (mut train_f, mut train_l) = (Vec::new(), Vec::new());
    let (mut test_f, mut test_l) = (Vec::new(), Vec::new());
    for k in 0..6 {
        let th = k as f64 * std::f64::consts::PI / 3.0;
        let (cx, cy) = (10.0 * th.cos(), 10.0 * th.sin());
        for i in 0..(2 * n) {
            let p = vec![(cx + gauss(&mut rng)) * scale, (cy + gauss(&mut rng)) * scale];
            if i < n {
                train_f.push(p);
                train_l.push(format!("k{k}"));
            } else {
                test_f.push(p);
                test_l.push(format!("k{k}"));
            }
        }
    }
    for (j, k) in [0usize, 2, 4].iter().enumerate() {
        let th = *k as f64 * std::f64::consts::PI / 3.0;
        let (cx, cy) = (6.0 * th.cos(), 6.0 * th.sin());
        for _ in 0..n {
            test_f.push(vec![(cx + gauss(&mut rng)) * scale, (cy + gauss(&mut rng)) * scale]);
            test_l.push(format!("u{j}"));
        }
    }
    (
        LabeledDataset::new(train_f, train_l).unwrap(),
        LabeledDataset::new(test_f, test_l).unwrap(),
        (0..6).map(|k| format!("k{k}")).collect(),
        (0..3).map(|j| format!("u{j}")).collect(),
    )
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn acceptance_08_kl_separation_claim() {
    let mut wins = 0;
    let mut details = Vec::new();
    for &seed in &KL_SEEDS {
        let (train, test, known, unknown) = confidence_scenario(seed);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 400,
            batch_size: 32,
            momentum: 0.9,
            seed,
            target_loss: 0.02,
        };
        let bank = train_bank(&train, &[8], &cfg, BaselineKind::Softmax).unwrap();
        let baseline = bank.baseline.as_ref().unwrap();
        // The compared representation is the decision statistic each method
        // thresholds: the top one-vs-rest score vs the top softmax output.
        let ovr = rep_by_class(&test, |x| vec![max_of(&score(&bank, x).unwrap())]);
        let soft = rep_by_class(&test, |x| vec![max_of(&baseline.forward(x).unwrap().output)]);
        let report = kl_comparison_study(&ovr, &soft, &known, &unknown, &[5, 10], seed).unwrap();
        let win = report.tests.iter().all(|t| t.p_one_sided < 0.05);
        details.push(format!(
            "seed {seed}: p5={:.3} p10={:.3}",
            report.tests[0].p_one_sided, report.tests[1].p_one_sided
        ));
        if win {
            wins += 1;
        }
    }
    report(
        8,
        "one-vs-rest separates unknowns more than softmax (p < 0.05, k in {5,10})",
        wins >= 8,
        &format!("{wins}/10 seeds; {}", details.join("; ")),
    );
}

fn raw_threshold_tally(
    bank: &OvrModelBank,
    test: &LabeledDataset,
    known: &[String],
    theta: f64,
) -> ConfusionTally {
    let mut tally = ConfusionTally::new(known);
    for (x, truth) in test.features.iter().zip(&test.labels) {
        let s = score(bank, x).unwrap();
        let mut best = 0;
        for (i, v) in s.iter().enumerate().skip(1) {
            if *v > s[best] {
                best = i;
            }
        }
        let pred = if s[best] >= theta {
            Some(bank.class_labels[best].as_str())
        } else {
            None
        };
        tally.record(truth, pred);
    }
    tally
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// 8 known blobs on a 3x3 grid (center removed) with spacing 4*sqrt(2),
/// 4 unknown blobs at the square centers: the minimum centroid separation
/// is exactly 4, attained on every known-unknown diagonal. Unit-variance
/// blobs, features scaled by 0.25 for conditioning. 30 train + 30 test
/// samples per known class, 30 test per unknown class.
fn benchmark_scenario(seed: u64) -> (LabeledDataset, LabeledDataset, Vec<String>) {
    let s = 0.25;
    let g = 4.0 * std::f64::consts::SQRT_2;
    let mut centers: Vec<(String, [f64; 2])> = Vec::new();
    let mut k = 0;
    for i in 0..3 {
        for j in 0..3 {
            if i == 1 && j == 1 {
                continue;
            }
            centers.push((format!("k{k}"), [i as f64 * g, j as f64 * g]));
            k += 1;
        }
    }
    for (u, (i, j)) in [(0.0f64, 0.0f64), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
        .iter()
        .enumerate()
    {
        centers.push((format!("u{u}"), [(i + 0.5) * g, (j + 0.5) * g]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for (label, c) in &centers {
        for _ in 0..60 {
            feats.push(vec![(c[0] + gauss(&mut rng)) * s, (c[1] + gauss(&mut rng)) * s]);
            labels.push(label.clone());
        }
    }
    let data = LabeledDataset::new(feats, labels).unwrap();
    let known: Vec<String> = (0..8).map(|i| format!("k{i}")).collect();
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for label in &data.class_labels {
        let mut idx = data.indices_of(label);
        if label.starts_with('u') {
            test_idx.extend_from_slice(&idx[..30]);
            continue;
        }
        for i in (1..idx.len()).rev() {
            let j = rng.random_range(0..=i);
            idx.swap(i, j);
        }
        train_idx.extend_from_slice(&idx[..30]);
        test_idx.extend_from_slice(&idx[30..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    (
        data.subset(&train_idx).unwrap(),
        data.subset(&test_idx).unwrap(),
        known,
    )
}

#[test]
fn acceptance_09_desk_scale_benchmark() {
    let start = Instant::now();
    let theta_grid: Vec<f64> = (1..=19).map(|i| i as f64 * 0.05).collect();
    let alpha_grid = [0.05, 0.1, 0.2, 0.3, 0.5];
    let (train, test, known) = benchmark_scenario(5);
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 400,
        batch_size: 32,
        momentum: 0.9,
        seed: 5,
        target_loss: 0.05,
    };
    let bank = train_bank(&train, &[16], &cfg, BaselineKind::None).unwrap();

    // Best calibrated cell over the (theta, alpha) grid, against the best
    // raw-score threshold over the same theta grid.
    let mut calibrated_f = 0.0f64;
    let mut picked = (0.0, 0.0);
    for &alpha in &alpha_grid {
        let evt = calibrate(&bank, &train, alpha, MIN_TAIL).unwrap();
        for &theta in &theta_grid {
            let model = CalibratedModel {
                bank: bank.clone(),
                evt: evt.clone(),
                theta,
                alpha,
                head_topology: "separate_per_class".into(),
            };
            let tally = evaluate(&model, &test, &known).unwrap();
            let f = open_f_measure(&tally).unwrap();
            if f > calibrated_f {
                calibrated_f = f;
                picked = (theta, alpha);
            }
        }
    }
    let mut ablation_f = 0.0f64;
    for &theta in &theta_grid {
        let t = raw_threshold_tally(&bank, &test, &known, theta);
        ablation_f = ablation_f.max(open_f_measure(&t).unwrap());
    }
    let elapsed = start.elapsed();
    let ok = calibrated_f >= 0.90 && calibrated_f > ablation_f && elapsed < Duration::from_secs(120);
    report(
        9,
        "calibrated macro F >= 0.90 and beats the raw-score ablation",
        ok,
        &format!(
            "calibrated {calibrated_f:.4} (theta {:.2} alpha {}), ablation best {ablation_f:.4}, {:.2?}",
            picked.0, picked.1, elapsed
        ),
    );
}

fn hash_bytes(b: &[u8]) -> u64 {
    let mut h = std::hash::DefaultHasher::new();
    b.hash(&mut h);
    h.finish()
}

fn pipeline_digest() -> Vec<u64> {
    let data = gen_blobs(3, 6, 2, 3.0, 40).unwrap();
    let split = open_split(&data, 2, 0.75, 3).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 300,
        batch_size: 32,
        momentum: 0.9,
        seed: 3,
        target_loss: 1e-2,
    };
    let bank = train_bank(&split.train, &[6], &cfg, BaselineKind::Softmax).unwrap();
    let evt = calibrate(&bank, &split.train, 0.2, MIN_TAIL).unwrap();
    let model = CalibratedModel {
        bank: bank.clone(),
        evt,
        theta: 0.5,
        alpha: 0.2,
        head_topology: "separate_per_class".into(),
    };
    let tally = evaluate(&model, &split.test, &split.known_labels).unwrap();
    let baseline = bank.baseline.as_ref().unwrap();
    let ovr = rep_by_class(&split.test, |x| score(&bank, x).unwrap());
    let soft = rep_by_class(&split.test, |x| baseline.forward(x).unwrap().output);
    let kl = kl_comparison_study(
        &ovr,
        &soft,
        &split.known_labels,
        &split.unknown_labels,
        &[4],
        3,
    )
    .unwrap();
    let class0_points: Vec<Vec<f64>> = split
        .train
        .indices_of(&bank.class_labels[0])
        .iter()
        .map(|&i| split.train.features[i].clone())
        .collect();
    let risk = open_space_risk(&bank.heads[0], 0, &class0_points, 0.05, 0.0, 0.2, 32, 0.5).unwrap();
    let mut risk_csv = Vec::new();
    risk.grid.write_csv(&mut risk_csv).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("d.csv");
    osr_core::data::save_csv(&data, &csv_path).unwrap();
    let csv = std::fs::read(&csv_path).unwrap();

    vec![
        hash_bytes(&csv),
        hash_bytes(model.to_json().as_bytes()),
        hash_bytes(serde_json::to_string(&tally).unwrap().as_bytes()),
        hash_bytes(serde_json::to_string(&kl).unwrap().as_bytes()),
        hash_bytes(&risk_csv),
    ]
}

#[test]
fn acceptance_10_determinism() {
    let first = pipeline_digest();
    let second = pipeline_digest();
    report(
        10,
        "rerunning every stage yields byte-identical reports",
        first == second,
        &format!("digests {first:x?}"),
    );
}
