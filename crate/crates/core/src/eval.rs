//! Evaluation machinery: openness, open-set F-measure, K-means discretized
//! KL divergence with a paired t-test, the open-space-risk grid estimator,
//! and the in-region abating check.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distributions::student_t_sf;
use crate::error::{Error, Result};
use crate::netcore::{sigmoid, FeedforwardNet};
use crate::par;

/// Pseudo-count added per discretized area before normalizing, so the KL
/// sum is defined at empty areas.
pub const KL_SMOOTHING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpennessSpec {
    /// Classes used in training.
    pub nc_train: usize,
    /// Classes present at evaluation.
    pub nc_eval: usize,
    /// Classes to be recognized.
    pub nc_recognize: usize,
}

/// `1 - sqrt(2 * NC_T / (NC_E + NC_R))`.
pub fn openness(spec: &OpennessSpec) -> Result<f64> {
    if spec.nc_train == 0 || spec.nc_eval < spec.nc_train {
        return Err(Error::Domain("need nc_eval >= nc_train >= 1".into()));
    }
    if 2 * spec.nc_train > spec.nc_eval + spec.nc_recognize {
        return Err(Error::Domain("2*nc_train must not exceed nc_eval + nc_recognize".into()));
    }
    Ok(1.0 - (2.0 * spec.nc_train as f64 / (spec.nc_eval + spec.nc_recognize) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Open-set confusion counts. A known-class prediction on an unknown sample
/// is a false positive for that class; a rejection of a known-class sample
/// is a false negative for its class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionTally {
    pub per_class: BTreeMap<String, ClassCounts>,
    pub unknown_total: usize,
    pub unknown_rejected: usize,
    pub known_total: usize,
    pub known_rejected: usize,
}

impl ConfusionTally {
    pub fn new(known_labels: &[String]) -> Self {
        ConfusionTally {
            per_class: known_labels
                .iter()
                .map(|l| (l.clone(), ClassCounts::default()))
                .collect(),
            unknown_total: 0,
            unknown_rejected: 0,
            known_total: 0,
            known_rejected: 0,
        }
    }

    /// Records one evaluated sample. `predicted = None` means rejected.
    pub fn record(&mut self, truth: &str, predicted: Option<&str>) {
        let truth_known = self.per_class.contains_key(truth);
        if truth_known {
            self.known_total += 1;
        } else {
            self.unknown_total += 1;
        }
        match (truth_known, predicted) {
            (true, Some(p)) if p == truth => {
                self.per_class.get_mut(truth).unwrap().tp += 1;
            }
            (true, Some(p)) => {
                self.per_class.get_mut(truth).unwrap().fn_ += 1;
                if let Some(c) = self.per_class.get_mut(p) {
                    c.fp += 1;
                }
            }
            (true, None) => {
                self.per_class.get_mut(truth).unwrap().fn_ += 1;
                self.known_rejected += 1;
            }
            (false, Some(p)) => {
                if let Some(c) = self.per_class.get_mut(p) {
                    c.fp += 1;
                }
            }
            (false, None) => {
                self.unknown_rejected += 1;
            }
        }
    }

    pub fn total(&self) -> usize {
        self.known_total + self.unknown_total
    }

    pub fn rejection_rate(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.known_rejected + self.unknown_rejected) as f64 / self.total() as f64
        }
    }
}

fn f1(c: &ClassCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    }
}

/// Macro average of per-class F1 over the known classes. Classes with zero
/// support and zero predictions are excluded from the average.
pub fn open_f_measure(tally: &ConfusionTally) -> Result<f64> {
    if tally.known_total == 0 {
        return Err(Error::Domain("no known-class samples evaluated".into()));
    }
    let active: Vec<&ClassCounts> = tally
        .per_class
        .values()
        .filter(|c| c.tp + c.fp + c.fn_ > 0)
        .collect();
    if active.is_empty() {
        return Err(Error::Domain("no class with support or predictions".into()));
    }
    Ok(active.iter().map(|c| f1(c)).sum::<f64>() / active.len() as f64)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid index; ties break to the lowest index.
pub fn nearest_centroid(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = sq_dist(x, &centroids[0]);
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(x, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Lloyd's algorithm with seeded farthest-point initialization. The
/// within-cluster sum of squares is nonincreasing per iteration.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, iters: usize) -> Result<Vec<Vec<f64>>> {
    use rand::{Rng, SeedableRng};
    if k == 0 || k > points.len() {
        return Err(Error::Config(format!(
            "k={k} must be in 1..={}",
            points.len()
        )));
    }
    let dim = points[0].len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..points.len());
    let mut centroids: Vec<Vec<f64>> = vec![points[first].clone()];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let mut far = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[far] {
                far = i;
            }
        }
        centroids.push(points[far].clone());
        let newest = centroids.last().unwrap();
        for (d, p) in min_d.iter_mut().zip(points) {
            let nd = sq_dist(p, newest);
            if nd < *d {
                *d = nd;
            }
        }
    }

    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..iters {
        let next: Vec<usize> = par::map_collect(points, |p| nearest_centroid(p, &centroids));
        if next == assignment {
            break;
        }
        assignment = next;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (m, s) in centroids[c].iter_mut().zip(&sums[c]) {
                    *m = s / counts[c] as f64;
                }
            }
            // Empty clusters keep their previous centroid.
        }
    }
    Ok(centroids)
}

/// Within-cluster sum of squares for a given centroid set.
pub fn kmeans_objective(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|p| sq_dist(p, &centroids[nearest_centroid(p, centroids)]))
        .sum()
}

/// Area distribution of a point set over fixed centroids, with pseudo-count
/// smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedDistribution {
    pub centroids: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

pub fn discretize(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> DiscretizedDistribution {
    let mut counts = vec![0.0; centroids.len()];
    for p in points {
        counts[nearest_centroid(p, centroids)] += 1.0;
    }
    let total: f64 = points.len() as f64 + KL_SMOOTHING * centroids.len() as f64;
    let q = counts.iter().map(|c| (c + KL_SMOOTHING) / total).collect();
    DiscretizedDistribution {
        centroids: centroids.to_vec(),
        q,
    }
}

/// KL divergence between the smoothed area distributions of `other` and
/// `reference`, with areas from K-means on the reference class.
pub fn kl_discretized(
    reference: &[Vec<f64>],
    other: &[Vec<f64>],
    k: usize,
    seed: u64,
) -> Result<f64> {
    if reference.is_empty() || other.is_empty() {
        return Err(Error::Data("empty point set".into()));
    }
    if reference[0].len() != other[0].len() {
        return Err(Error::DimensionMismatch {
            expected: reference[0].len(),
            got: other[0].len(),
        });
    }
    let centroids = kmeans(reference, k, seed, 100)?;
    let q_ref = discretize(reference, &centroids);
    let q_other = discretize(other, &centroids);
    Ok(kl(&q_other.q, &q_ref.q))
}

/// `sum_i p(i) ln(p(i)/q(i))` for strictly positive distributions.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&pi, &qi)| pi * (pi / qi).ln()).sum()
}

/// Paired one-sided t-test on `a - b`. Zero-variance differences fall back
/// to p = 0 (mean > 0), p = 1 (mean < 0), or p = 0.5 (mean = 0).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Data("need at least 2 pairs".into()));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else if mean < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        });
    }
    let t = mean / (var.sqrt() / n.sqrt());
    Ok((t, student_t_sf(t, a.len() - 1)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlRow {
    pub known: String,
    pub unknown: String,
    pub k: usize,
    pub kl_ovr: f64,
    pub kl_softmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlTest {
    pub k: usize,
    pub t: f64,
    pub p_one_sided: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub rows: Vec<KlRow>,
    pub tests: Vec<KlTest>,
}

/// For every (known, unknown) pair and every k, the discretized KL under
/// both representations, plus a per-k paired t-test that the one-vs-rest
/// representation separates unknowns more.
pub fn kl_comparison_study(
    ovr_by_class: &BTreeMap<String, Vec<Vec<f64>>>,
    softmax_by_class: &BTreeMap<String, Vec<Vec<f64>>>,
    known: &[String],
    unknown: &[String],
    k_list: &[usize],
    seed: u64,
) -> Result<KlReport> {
    for c in known.iter().chain(unknown) {
        if !ovr_by_class.contains_key(c) || !softmax_by_class.contains_key(c) {
            return Err(Error::Data(format!("class '{c}' missing from a feature bank")));
        }
    }
    let mut pairs = Vec::new();
    for ky in known {
        for uy in unknown {
            for &k in k_list {
                pairs.push((ky.clone(), uy.clone(), k));
            }
        }
    }
    let computed: Vec<Result<KlRow>> = par::map_collect(&pairs, |(ky, uy, k)| {
        let kl_ovr = kl_discretized(&ovr_by_class[ky], &ovr_by_class[uy], *k, seed)?;
        let kl_softmax = kl_discretized(&softmax_by_class[ky], &softmax_by_class[uy], *k, seed)?;
        Ok(KlRow {
            known: ky.clone(),
            unknown: uy.clone(),
            k: *k,
            kl_ovr,
            kl_softmax,
        })
    });
    let mut rows = Vec::with_capacity(computed.len());
    for r in computed {
        rows.push(r?);
    }
    let mut tests = Vec::new();
    for &k in k_list {
        let a: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| r.kl_ovr).collect();
        let b: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| r.kl_softmax).collect();
        let (t, p) = paired_t_test(&a, &b)?;
        tests.push(KlTest {
            k,
            t,
            p_one_sided: p,
        });
    }
    Ok(KlReport { rows, tests })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCell {
    pub coords: Vec<f64>,
    pub score: f64,
    pub in_ball: bool,
    pub in_positive_space: bool,
    pub in_plausible: bool,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskGrid {
    pub center: Vec<f64>,
    pub radius: f64,
    pub grid_res: usize,
    pub min_train_score: f64,
    pub cells: Vec<RiskCell>,
}

impl RiskGrid {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let dim = self.center.len();
        for i in 0..dim {
            write!(w, "x{i},")?;
        }
        writeln!(w, "score,in_ball,in_positive_space,in_plausible,positive")?;
        for c in &self.cells {
            for v in &c.coords {
                write!(w, "{v},")?;
            }
            writeln!(
                w,
                "{},{},{},{},{}",
                c.score, c.in_ball as u8, c.in_positive_space as u8, c.in_plausible as u8, c.positive as u8
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskResult {
    pub risk: f64,
    /// Set when no cell is both positively labeled and in the positive
    /// space, leaving the ratio undefined; risk is reported as 0.
    pub undefined: bool,
    pub grid: RiskGrid,
}

/// Grid estimate of open space risk for one class head.
///
/// The bounding ball is the max-distance ball around the training centroid
/// inflated by `ball_margin`. A cell is in the positive space when its
/// sigmoid score exceeds `delta`; it is plausible when its score is within
/// the soft margin `r` of some training point's score; it is positively
/// labeled when its score reaches the cutoff `tau`. The risk is the share
/// of positively labeled positive-space cells that fall in open space.
#[allow(clippy::too_many_arguments)]
pub fn open_space_risk(
    net: &FeedforwardNet,
    class: usize,
    train_points: &[Vec<f64>],
    delta: f64,
    r: f64,
    tau: f64,
    grid_res: usize,
    ball_margin: f64,
) -> Result<RiskResult> {
    let dim = net.input_dim;
    if dim > 3 {
        return Err(Error::Unsupported(format!(
            "risk grid supports dimension <= 3, got {dim}"
        )));
    }
    if grid_res < 16 {
        return Err(Error::Config("grid_res must be at least 16".into()));
    }
    if train_points.is_empty() {
        return Err(Error::Data("no training points".into()));
    }

    let mut center = vec![0.0; dim];
    for p in train_points {
        for (c, v) in center.iter_mut().zip(p) {
            *c += v;
        }
    }
    center.iter_mut().for_each(|c| *c /= train_points.len() as f64);
    let max_d = train_points
        .iter()
        .map(|p| sq_dist(p, &center).sqrt())
        .fold(0.0, f64::max);
    let radius = max_d * (1.0 + ball_margin);

    let class_score = |x: &[f64]| -> Result<f64> {
        let fp = net.forward(x)?;
        Ok(match net.layers.last().unwrap().activation {
            crate::netcore::Activation::Sigmoid => fp.output[class],
            _ => sigmoid(fp.logit[class]),
        })
    };

    let train_scores: Vec<Result<f64>> = par::map_collect(train_points, |p| class_score(p));
    let mut min_train_score = f64::INFINITY;
    for s in train_scores {
        min_train_score = min_train_score.min(s?);
    }

    let n_cells = grid_res.pow(dim as u32);
    let cells: Vec<Result<RiskCell>> = par::map_indices(n_cells, |idx| {
        let mut coords = Vec::with_capacity(dim);
        let mut rest = idx;
        for d in 0..dim {
            let i = rest % grid_res;
            rest /= grid_res;
            // Cell centers across [center - radius, center + radius].
            let frac = (i as f64 + 0.5) / grid_res as f64;
            coords.push(center[d] - radius + 2.0 * radius * frac);
        }
        let score = class_score(&coords)?;
        let in_ball = sq_dist(&coords, &center) <= radius * radius;
        let in_positive_space = score > delta;
        let in_plausible = score >= min_train_score - r;
        let positive = score >= tau;
        Ok(RiskCell {
            coords,
            score,
            in_ball,
            in_positive_space,
            in_plausible,
            positive,
        })
    });
    let mut grid_cells = Vec::with_capacity(n_cells);
    for c in cells {
        grid_cells.push(c?);
    }

    let mut open_positive = 0usize;
    let mut sp_positive = 0usize;
    for c in &grid_cells {
        if !c.in_ball || !c.positive || !c.in_positive_space {
            continue;
        }
        sp_positive += 1;
        if !c.in_plausible {
            open_positive += 1;
        }
    }
    let undefined = sp_positive == 0;
    let risk = if undefined {
        0.0
    } else {
        open_positive as f64 / sp_positive as f64
    };
    Ok(RiskResult {
        risk,
        undefined,
        grid: RiskGrid {
            center,
            radius,
            grid_res,
            min_train_score,
            cells: grid_cells,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbatingReport {
    /// Indices of probes whose score failed to decrease along the negative
    /// region-weight direction.
    pub violations: Vec<usize>,
    pub checked: usize,
    pub skipped: usize,
}

/// Verifies that, within a fixed ReLU region, the class score strictly
/// decreases along the negative region-weight direction. Probes whose
/// stepped point leaves the region, or whose region weights vanish, are
/// skipped.
pub fn abating_check(
    net: &FeedforwardNet,
    class: usize,
    probe_points: &[Vec<f64>],
    step: f64,
) -> Result<AbatingReport> {
    if step <= 0.0 {
        return Err(Error::Config("step must be positive".into()));
    }
    let outcomes: Vec<Result<Option<bool>>> = par::map_collect(probe_points, |x| {
        let fp = net.forward(x)?;
        let (w, _) = net.region_weights(&fp.pattern, class)?;
        let norm: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(None);
        }
        let moved: Vec<f64> = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| xi - step * wi / norm)
            .collect();
        let fp2 = net.forward(&moved)?;
        if fp2.pattern != fp.pattern {
            return Ok(None);
        }
        let s1 = sigmoid(fp.logit[class]);
        let s2 = sigmoid(fp2.logit[class]);
        Ok(Some(s2 < s1))
    });
    let mut violations = Vec::new();
    let mut checked = 0;
    let mut skipped = 0;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o? {
            None => skipped += 1,
            Some(ok) => {
                checked += 1;
                if !ok {
                    violations.push(i);
                }
            }
        }
    }
    Ok(AbatingReport {
        violations,
        checked,
        skipped,
    })
}
