//! The open-set recognizer: a bank of one-vs-rest sigmoid heads over a
//! shared feature space, score partitioning, extreme-value calibration of
//! the score tails, the accept/reject recognition rule, and cross-class
//! validation of the probability threshold and tail ratio.

use serde::{Deserialize, Serialize};

use crate::data::{open_split, LabeledDataset};
use crate::distributions::{fit_weibull, weibull_cdf, TailSample, TailSide, WeibullParams};
use crate::error::{Error, Result};
use crate::eval::{open_f_measure, ConfusionTally};
use crate::netcore::{train, Activation, FeedforwardNet, Loss, TrainConfig};
use crate::par;

/// Default minimum number of tail points for a Weibull fit.
pub const MIN_TAIL: usize = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    #[default]
    None,
    /// Softmax head with the same hidden architecture.
    Softmax,
    /// Single sigmoid output layer directly over the features, no hidden
    /// layer.
    SingleSigmoid,
}

/// One sigmoid head per known class, plus an optional baseline head trained
/// on the same features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrModelBank {
    pub heads: Vec<FeedforwardNet>,
    pub class_labels: Vec<String>,
    pub baseline: Option<FeedforwardNet>,
    pub baseline_kind: BaselineKind,
    pub arch: Vec<usize>,
    pub seed: u64,
}

impl OvrModelBank {
    pub fn input_dim(&self) -> usize {
        self.heads[0].input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.heads.len()
    }
}

/// Match / nonmatch score split for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePartition {
    pub class: String,
    pub match_scores: Vec<f64>,
    pub nonmatch_scores: Vec<f64>,
}

/// Calibrated tail CDF for one side. The step form is the fallback for
/// degenerate tails that cannot support a Weibull fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TailModel {
    Weibull(WeibullParams),
    Step { step_at: f64 },
}

impl TailModel {
    pub fn is_fallback(&self) -> bool {
        matches!(self, TailModel::Step { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEvtParams {
    pub class: String,
    /// Weibull over the lower match tail (probability of being a positive).
    pub pos: TailModel,
    /// Weibull fitted to the negated upper nonmatch tail (probability of
    /// not being a negative, evaluated by reflection).
    pub neg: TailModel,
    pub alpha: f64,
    pub tail_counts: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub bank: OvrModelBank,
    pub evt: Vec<ClassEvtParams>,
    pub theta: f64,
    pub alpha: f64,
    /// Per-class heads over shared input features, not a shared trunk.
    pub head_topology: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recognition {
    /// `None` means the sample was rejected as unknown.
    pub label: Option<String>,
    pub probability: f64,
    pub per_class: Vec<(String, f64)>,
}

fn head_seed(base: u64, class: usize) -> u64 {
    base.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(class as u64 + 1))
}

/// A trained bank together with the per-epoch loss history of every head.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedBank {
    pub bank: OvrModelBank,
    /// One loss curve per class head, in class-label order.
    pub head_curves: Vec<Vec<f64>>,
    pub baseline_curve: Option<Vec<f64>>,
}

/// Trains one sigmoid head per class with binary match/nonmatch targets,
/// plus the requested baseline head. Heads train independently and in
/// parallel; each is seeded per class so results do not depend on the
/// thread count.
pub fn train_bank(
    features: &LabeledDataset,
    arch: &[usize],
    cfg: &TrainConfig,
    with_baseline: BaselineKind,
) -> Result<OvrModelBank> {
    Ok(train_bank_traced(features, arch, cfg, with_baseline)?.bank)
}

/// Same as [`train_bank`] but keeps every head's loss curve.
pub fn train_bank_traced(
    features: &LabeledDataset,
    arch: &[usize],
    cfg: &TrainConfig,
    with_baseline: BaselineKind,
) -> Result<TracedBank> {
    cfg.validate()?;
    if features.n_classes() < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    for label in &features.class_labels {
        if features.indices_of(label).len() < 2 {
            return Err(Error::Config(format!("class '{label}' has fewer than 2 samples")));
        }
    }
    let dim = features.dim();
    let results: Vec<Result<(FeedforwardNet, Vec<f64>)>> = par::map_indices(features.n_classes(), |c| {
        let label = &features.class_labels[c];
        let targets: Vec<Vec<f64>> = features
            .labels
            .iter()
            .map(|l| vec![if l == label { 1.0 } else { 0.0 }])
            .collect();
        let seed = head_seed(cfg.seed, c);
        let mut net = FeedforwardNet::new(dim, arch, 1, Activation::Sigmoid, seed);
        let head_cfg = TrainConfig { seed, ..cfg.clone() };
        let curve = train(&mut net, &features.features, &targets, Loss::Bce, &head_cfg)?;
        Ok((net, curve))
    });
    let mut heads = Vec::with_capacity(results.len());
    let mut head_curves = Vec::with_capacity(results.len());
    for r in results {
        let (net, curve) = r?;
        heads.push(net);
        head_curves.push(curve);
    }

    let baseline = match with_baseline {
        BaselineKind::None => None::<(FeedforwardNet, Vec<f64>)>,
        BaselineKind::Softmax => {
            let n = features.n_classes();
            let targets: Vec<Vec<f64>> = features
                .labels
                .iter()
                .map(|l| {
                    let mut t = vec![0.0; n];
                    t[features.class_index(l).unwrap()] = 1.0;
                    t
                })
                .collect();
            let seed = head_seed(cfg.seed, features.n_classes() + 1);
            let mut net = FeedforwardNet::new(dim, arch, n, Activation::Softmax, seed);
            let base_cfg = TrainConfig { seed, ..cfg.clone() };
            let curve = train(&mut net, &features.features, &targets, Loss::Ce, &base_cfg)?;
            Some((net, curve))
        }
        BaselineKind::SingleSigmoid => {
            let n = features.n_classes();
            let targets: Vec<Vec<f64>> = features
                .labels
                .iter()
                .map(|l| {
                    let mut t = vec![0.0; n];
                    t[features.class_index(l).unwrap()] = 1.0;
                    t
                })
                .collect();
            let seed = head_seed(cfg.seed, features.n_classes() + 1);
            let mut net = FeedforwardNet::new(dim, &[], n, Activation::Sigmoid, seed);
            let base_cfg = TrainConfig { seed, ..cfg.clone() };
            let curve = train(&mut net, &features.features, &targets, Loss::Bce, &base_cfg)?;
            Some((net, curve))
        }
    };
    let (baseline, baseline_curve) = match baseline {
        Some((net, curve)) => (Some(net), Some(curve)),
        None => (None, None),
    };

    Ok(TracedBank {
        bank: OvrModelBank {
            heads,
            class_labels: features.class_labels.clone(),
            baseline,
            baseline_kind: with_baseline,
            arch: arch.to_vec(),
            seed: cfg.seed,
        },
        head_curves,
        baseline_curve,
    })
}

/// Per-class sigmoid scores `F_y(x)`.
pub fn score(bank: &OvrModelBank, x: &[f64]) -> Result<Vec<f64>> {
    bank.heads
        .iter()
        .map(|head| Ok(head.forward(x)?.output[0]))
        .collect()
}

/// Splits every sample's score into the match or nonmatch pile of each
/// class, exactly by label.
pub fn partition_scores(
    bank: &OvrModelBank,
    features: &LabeledDataset,
) -> Result<Vec<ScorePartition>> {
    for l in &features.class_labels {
        if !bank.class_labels.contains(l) {
            return Err(Error::Data(format!("dataset label '{l}' unknown to the model bank")));
        }
    }
    let all_scores: Vec<Result<Vec<f64>>> =
        par::map_collect(&features.features, |x| score(bank, x));
    let mut scores = Vec::with_capacity(all_scores.len());
    for s in all_scores {
        scores.push(s?);
    }
    let mut partitions = Vec::with_capacity(bank.n_classes());
    for (c, class) in bank.class_labels.iter().enumerate() {
        let mut matches = Vec::new();
        let mut nonmatches = Vec::new();
        for (label, s) in features.labels.iter().zip(&scores) {
            if label == class {
                matches.push(s[c]);
            } else {
                nonmatches.push(s[c]);
            }
        }
        partitions.push(ScorePartition {
            class: class.clone(),
            match_scores: matches,
            nonmatch_scores: nonmatches,
        });
    }
    Ok(partitions)
}

/// Lower match tail and upper nonmatch tail, each holding
/// `max(min_n, ceil(alpha * n))` values. Stable sort, so ties at the cut
/// keep exactly the computed count.
pub fn extract_tails(
    partition: &ScorePartition,
    alpha: f64,
    min_n: usize,
) -> Result<(TailSample, TailSample)> {
    if !(0.0 < alpha && alpha <= 1.0) {
        return Err(Error::Config("alpha must be in (0,1]".into()));
    }
    if partition.match_scores.len() < min_n {
        return Err(Error::InsufficientTail {
            got: partition.match_scores.len(),
            min: min_n,
        });
    }
    if partition.nonmatch_scores.len() < min_n {
        return Err(Error::InsufficientTail {
            got: partition.nonmatch_scores.len(),
            min: min_n,
        });
    }
    let tail_count = |n: usize| -> usize {
        ((alpha * n as f64).ceil() as usize).max(min_n).min(n)
    };

    let mut matches = partition.match_scores.clone();
    matches.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k_pos = tail_count(matches.len());
    let lower = TailSample {
        values: matches[..k_pos].to_vec(),
        side: TailSide::LowerMatch,
    };

    let mut nonmatches = partition.nonmatch_scores.clone();
    nonmatches.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k_neg = tail_count(nonmatches.len());
    let upper = TailSample {
        values: nonmatches[nonmatches.len() - k_neg..].to_vec(),
        side: TailSide::UpperNonmatch,
    };
    Ok((lower, upper))
}

fn fit_tail(values: &[f64], min_n: usize) -> Result<TailModel> {
    match fit_weibull(values, min_n) {
        Ok(fit) => Ok(TailModel::Weibull(fit.params)),
        Err(Error::DegenerateTail { .. }) => Ok(TailModel::Step { step_at: values[0] }),
        Err(e) => Err(e),
    }
}

/// Fits the per-class extreme-value models from the training-score tails.
pub fn calibrate(
    bank: &OvrModelBank,
    features: &LabeledDataset,
    alpha: f64,
    min_n: usize,
) -> Result<Vec<ClassEvtParams>> {
    let partitions = partition_scores(bank, features)?;
    let fitted: Vec<Result<ClassEvtParams>> = par::map_collect(&partitions, |p| {
        let (lower, upper) = extract_tails(p, alpha, min_n)?;
        let pos = fit_tail(&lower.values, min_n)?;
        // Reverse Weibull realized by negation of the upper tail.
        let negated: Vec<f64> = upper.values.iter().map(|v| -v).collect();
        let neg = match fit_tail(&negated, min_n)? {
            TailModel::Step { step_at } => TailModel::Step { step_at: -step_at },
            w => w,
        };
        Ok(ClassEvtParams {
            class: p.class.clone(),
            pos,
            neg,
            alpha,
            tail_counts: (lower.values.len(), upper.values.len()),
        })
    });
    fitted.into_iter().collect()
}

/// Calibrated class-membership probability: the product of the probability
/// of being a positive and the probability of not being a negative, each
/// clamped to `[0,1]`. Nondecreasing in the raw score.
pub fn membership_probability(evt: &ClassEvtParams, s: f64) -> f64 {
    let p_plus = match &evt.pos {
        TailModel::Weibull(p) => weibull_cdf(p, s),
        TailModel::Step { step_at } => {
            if s >= *step_at {
                1.0
            } else {
                0.0
            }
        }
    };
    let p_minus = match &evt.neg {
        // Fitted on negated scores: survival of the fitted CDF at -s.
        TailModel::Weibull(p) => 1.0 - weibull_cdf(p, -s),
        TailModel::Step { step_at } => {
            if s >= *step_at {
                1.0
            } else {
                0.0
            }
        }
    };
    (p_plus.clamp(0.0, 1.0) * p_minus.clamp(0.0, 1.0)).clamp(0.0, 1.0)
}

/// The multiclass open set recognition rule: argmax class if its
/// probability clears theta, otherwise reject as unknown. Exact ties break
/// to the lowest class index.
pub fn recognize(model: &CalibratedModel, x: &[f64]) -> Result<Recognition> {
    let scores = score(&model.bank, x)?;
    let per_class: Vec<(String, f64)> = model
        .evt
        .iter()
        .zip(&scores)
        .map(|(evt, &s)| (evt.class.clone(), membership_probability(evt, s)))
        .collect();
    let mut best = 0;
    for (i, (_, p)) in per_class.iter().enumerate().skip(1) {
        if *p > per_class[best].1 {
            best = i;
        }
    }
    let (label, probability) = if per_class[best].1 >= model.theta {
        (Some(per_class[best].0.clone()), per_class[best].1)
    } else {
        (None, per_class[best].1)
    };
    Ok(Recognition {
        label,
        probability,
        per_class,
    })
}

/// Runs `recognize` over a test set and tallies open-set confusion counts
/// against the known-class list.
pub fn evaluate(
    model: &CalibratedModel,
    test: &LabeledDataset,
    known_labels: &[String],
) -> Result<ConfusionTally> {
    let recs: Vec<Result<Recognition>> = par::map_collect(&test.features, |x| recognize(model, x));
    let mut tally = ConfusionTally::new(known_labels);
    for (rec, truth) in recs.into_iter().zip(&test.labels) {
        let rec = rec?;
        tally.record(truth, rec.label.as_deref());
    }
    Ok(tally)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCell {
    pub theta: f64,
    pub alpha: f64,
    pub f_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub theta: f64,
    pub alpha: f64,
    pub table: Vec<ValidationCell>,
}

/// Cross-class validation of `(theta, alpha)`: holds out seeded classes as
/// pseudo-unknowns, splits the remaining classes 80/20, trains once, then
/// calibrates per alpha and scores the open-set F-measure for every grid
/// cell. Ties break to the smaller theta, then the smaller alpha.
pub fn cross_class_validate(
    features: &LabeledDataset,
    arch: &[usize],
    cfg: &TrainConfig,
    theta_grid: &[f64],
    alpha_grid: &[f64],
    holdout_classes: usize,
    seed: u64,
) -> Result<ValidationOutcome> {
    if theta_grid.is_empty() || alpha_grid.is_empty() {
        return Err(Error::Config("theta/alpha grids must be nonempty".into()));
    }
    if holdout_classes == 0 || holdout_classes + 1 >= features.n_classes() {
        return Err(Error::Config(format!(
            "holdout_classes {} must leave at least 2 known classes of {}",
            holdout_classes,
            features.n_classes()
        )));
    }
    let split = open_split(features, holdout_classes, 0.8, seed)?;
    let bank = train_bank(&split.train, arch, cfg, BaselineKind::None)?;

    let mut table = Vec::with_capacity(theta_grid.len() * alpha_grid.len());
    for &alpha in alpha_grid {
        let evt = calibrate(&bank, &split.train, alpha, MIN_TAIL)?;
        for &theta in theta_grid {
            let model = CalibratedModel {
                bank: bank.clone(),
                evt: evt.clone(),
                theta,
                alpha,
                head_topology: "separate_per_class".into(),
            };
            let tally = evaluate(&model, &split.test, &split.known_labels)?;
            let f = open_f_measure(&tally)?;
            table.push(ValidationCell {
                theta,
                alpha,
                f_measure: f,
            });
        }
    }
    let mut best = &table[0];
    for cell in &table[1..] {
        let better = cell.f_measure > best.f_measure
            || (cell.f_measure == best.f_measure
                && (cell.theta < best.theta
                    || (cell.theta == best.theta && cell.alpha < best.alpha)));
        if better {
            best = cell;
        }
    }
    Ok(ValidationOutcome {
        theta: best.theta,
        alpha: best.alpha,
        table,
    })
}

impl CalibratedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: CalibratedModel = serde_json::from_str(s)?;
        if model.evt.len() != model.bank.n_classes() {
            return Err(Error::Data("evt does not cover every class".into()));
        }
        if !(0.0..=1.0).contains(&model.theta) {
            return Err(Error::Data("theta out of range".into()));
        }
        Ok(model)
    }
}
