//! Subcommand implementations. Every JSON report embeds the resolved config
//! checksum, the seed, and any flag overrides; all artifacts are
//! byte-deterministic for a fixed config.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use osr_core::data::{
    gen_blobs, gen_supplementary_2d, load_csv, load_osrf, open_split, save_csv, save_osrf,
    LabeledDataset, OpenSetSplit,
};
use osr_core::eval::{
    kl_comparison_study, open_f_measure, open_space_risk, openness, OpennessSpec,
};
use osr_core::openset::{
    calibrate as calibrate_tails, cross_class_validate, evaluate, membership_probability,
    recognize, score, train_bank, train_bank_traced, BaselineKind, CalibratedModel, OvrModelBank,
    MIN_TAIL,
};

use crate::config::{sha256_hex, DatasetSpec, Overrides, ResolvedConfig};
use crate::CliError;

/// Envelope shared by every JSON report.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    config_checksum: &'a str,
    seed: u64,
    overrides: &'a Overrides,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(rc: &ResolvedConfig, path: &Path, body: T) -> Result<(), CliError> {
    let report = Report {
        config_checksum: &rc.checksum,
        seed: rc.cfg.seed,
        overrides: &rc.overrides,
        body,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn out_path(rc: &ResolvedConfig, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&rc.cfg.out_dir)?;
    Ok(rc.cfg.out_dir.join(name))
}

fn resolve_dataset(rc: &ResolvedConfig) -> Result<LabeledDataset, CliError> {
    let data = match &rc.cfg.dataset {
        DatasetSpec::Csv { path } => load_csv(path)?,
        DatasetSpec::Osrf { path } => load_osrf(path)?,
        DatasetSpec::Blobs {
            classes,
            dim,
            separation,
            n_per_class,
        } => gen_blobs(rc.cfg.seed, *classes, *dim, *separation, *n_per_class)?,
        DatasetSpec::Supplementary { n_per_class } => {
            gen_supplementary_2d(rc.cfg.seed, *n_per_class)?
        }
    };
    Ok(data)
}

fn resolve_split(rc: &ResolvedConfig, data: &LabeledDataset) -> Result<OpenSetSplit, CliError> {
    Ok(open_split(
        data,
        rc.cfg.split.n_unknown,
        rc.cfg.split.train_fraction,
        rc.cfg.seed,
    )?)
}

fn load_bank(rc: &ResolvedConfig, model: Option<&Path>) -> Result<OvrModelBank, CliError> {
    let path = model
        .map(PathBuf::from)
        .unwrap_or_else(|| rc.cfg.out_dir.join("model.json"));
    let raw = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| CliError::Usage(format!("invalid model {}: {e}", path.display())))
}

fn load_calibrated(rc: &ResolvedConfig, model: Option<&Path>) -> Result<CalibratedModel, CliError> {
    let path = model
        .map(PathBuf::from)
        .unwrap_or_else(|| rc.cfg.out_dir.join("calibrated_model.json"));
    let raw = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read model {}: {e}", path.display())))?;
    CalibratedModel::from_json(&raw)
        .map_err(|e| CliError::Usage(format!("invalid model {}: {e}", path.display())))
}

// ---- synth ----------------------------------------------------------------

#[derive(Serialize)]
struct SynthManifest<'a> {
    dataset: &'a DatasetSpec,
    rows: usize,
    dim: usize,
    classes: usize,
    csv_path: PathBuf,
    osrf_path: PathBuf,
    csv_sha256: String,
    osrf_sha256: String,
}

pub fn synth(rc: &ResolvedConfig) -> Result<(), CliError> {
    match rc.cfg.dataset {
        DatasetSpec::Csv { .. } | DatasetSpec::Osrf { .. } => {
            return Err(CliError::Usage(
                "synth needs a generator dataset (blobs or supplementary), not a file".into(),
            ))
        }
        _ => {}
    }
    let data = resolve_dataset(rc)?;
    let csv_path = out_path(rc, "dataset.csv")?;
    let osrf_path = out_path(rc, "dataset.osrf")?;
    save_csv(&data, &csv_path)?;
    save_osrf(&data, &osrf_path)?;
    let manifest = SynthManifest {
        dataset: &rc.cfg.dataset,
        rows: data.len(),
        dim: data.dim(),
        classes: data.n_classes(),
        csv_sha256: sha256_hex(&fs::read(&csv_path)?),
        osrf_sha256: sha256_hex(&fs::read(&osrf_path)?),
        csv_path,
        osrf_path,
    };
    write_json(rc, &out_path(rc, "synth_manifest.json")?, manifest)?;
    println!("synth: {} rows -> {}", data.len(), rc.cfg.out_dir.display());
    Ok(())
}

// ---- train ----------------------------------------------------------------

#[derive(Serialize)]
struct TrainReport {
    classes: Vec<String>,
    final_losses: Vec<f64>,
    epochs_run: Vec<usize>,
    baseline: BaselineKind,
    model_path: PathBuf,
    curves_path: PathBuf,
}

pub fn train(rc: &ResolvedConfig) -> Result<(), CliError> {
    let data = resolve_dataset(rc)?;
    let split = resolve_split(rc, &data)?;
    let tc = rc.cfg.train.to_train_config(rc.cfg.seed);
    let traced = train_bank_traced(&split.train, &rc.cfg.arch, &tc, rc.cfg.baseline)?;

    let model_path = out_path(rc, "model.json")?;
    let mut model_json = serde_json::to_string_pretty(&traced.bank)?;
    model_json.push('\n');
    fs::write(&model_path, model_json)?;

    let curves_path = out_path(rc, "loss_curves.csv")?;
    let mut curves: Vec<(&str, &[f64])> = traced
        .bank
        .class_labels
        .iter()
        .zip(&traced.head_curves)
        .map(|(l, c)| (l.as_str(), c.as_slice()))
        .collect();
    if let Some(ref b) = traced.baseline_curve {
        curves.push(("baseline", b.as_slice()));
    }
    let mut w = Vec::new();
    write!(w, "epoch")?;
    for (label, _) in &curves {
        write!(w, ",{label}")?;
    }
    writeln!(w)?;
    let rows = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for e in 0..rows {
        write!(w, "{e}")?;
        for (_, c) in &curves {
            match c.get(e) {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    fs::write(&curves_path, w)?;

    let report = TrainReport {
        classes: traced.bank.class_labels.clone(),
        final_losses: traced
            .head_curves
            .iter()
            .map(|c| *c.last().unwrap_or(&f64::NAN))
            .collect(),
        epochs_run: traced.head_curves.iter().map(|c| c.len()).collect(),
        baseline: rc.cfg.baseline,
        model_path,
        curves_path,
    };
    write_json(rc, &out_path(rc, "train_report.json")?, report)?;
    println!(
        "train: {} heads -> {}",
        traced.bank.n_classes(),
        rc.cfg.out_dir.display()
    );
    Ok(())
}

// ---- calibrate --------------------------------------------------------------

#[derive(Serialize)]
struct CalibrateReport {
    theta: f64,
    alpha: f64,
    table_rows: usize,
    model_path: PathBuf,
    table_path: PathBuf,
}

pub fn calibrate(rc: &ResolvedConfig, model: Option<&Path>) -> Result<(), CliError> {
    let bank = load_bank(rc, model)?;
    let data = resolve_dataset(rc)?;
    let split = resolve_split(rc, &data)?;
    let tc = rc.cfg.train.to_train_config(rc.cfg.seed);
    let outcome = cross_class_validate(
        &split.train,
        &rc.cfg.arch,
        &tc,
        &rc.cfg.theta_grid,
        &rc.cfg.alpha_grid,
        rc.cfg.holdout_classes,
        rc.cfg.seed,
    )?;

    let table_path = out_path(rc, "validation_table.csv")?;
    let mut w = Vec::new();
    writeln!(w, "theta,alpha,f_measure")?;
    for cell in &outcome.table {
        writeln!(w, "{},{},{}", cell.theta, cell.alpha, cell.f_measure)?;
    }
    fs::write(&table_path, w)?;

    let evt = calibrate_tails(&bank, &split.train, outcome.alpha, MIN_TAIL)?;
    let model = CalibratedModel {
        bank,
        evt,
        theta: outcome.theta,
        alpha: outcome.alpha,
        head_topology: "separate_per_class".into(),
    };
    let model_path = out_path(rc, "calibrated_model.json")?;
    let mut model_json = model.to_json();
    model_json.push('\n');
    fs::write(&model_path, model_json)?;

    let report = CalibrateReport {
        theta: outcome.theta,
        alpha: outcome.alpha,
        table_rows: outcome.table.len(),
        model_path,
        table_path,
    };
    write_json(rc, &out_path(rc, "calibrate_report.json")?, report)?;
    println!("calibrate: theta {} alpha {}", outcome.theta, outcome.alpha);
    Ok(())
}

// ---- predict ----------------------------------------------------------------

pub fn predict(rc: &ResolvedConfig, model: Option<&Path>, features: &str) -> Result<(), CliError> {
    let model = load_calibrated(rc, model)?;
    let x: Vec<f64> = features
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("non-numeric feature '{f}'")))
        })
        .collect::<Result<_, _>>()?;
    let rec = recognize(&model, &x)?;
    let report = Report {
        config_checksum: &rc.checksum,
        seed: rc.cfg.seed,
        overrides: &rc.overrides,
        body: rec,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

// ---- eval ----------------------------------------------------------------

#[derive(Serialize)]
struct EvalReport {
    openness: f64,
    macro_f: f64,
    per_class_f: Vec<(String, f64)>,
    rejection_rate: f64,
    confusion: osr_core::eval::ConfusionTally,
}

pub fn eval(rc: &ResolvedConfig, model: Option<&Path>) -> Result<(), CliError> {
    let model = load_calibrated(rc, model)?;
    let data = resolve_dataset(rc)?;
    let split = resolve_split(rc, &data)?;
    // Known means known to the recognizer: test samples outside the model's
    // class list count as unknowns, and a test set with no recognizable
    // class at all is an error, not a zero score.
    let known = model.bank.class_labels.clone();
    let tally = evaluate(&model, &split.test, &known)?;
    let macro_f = open_f_measure(&tally)?;
    let per_class_f: Vec<(String, f64)> = tally
        .per_class
        .iter()
        .map(|(label, c)| {
            let denom = 2 * c.tp + c.fp + c.fn_;
            let f = if denom == 0 {
                0.0
            } else {
                2.0 * c.tp as f64 / denom as f64
            };
            (label.clone(), f)
        })
        .collect();
    let nc_eval = split
        .test
        .class_labels
        .iter()
        .filter(|l| !known.contains(l))
        .count()
        + known.len();
    let spec = OpennessSpec {
        nc_train: known.len(),
        nc_eval,
        nc_recognize: known.len(),
    };
    let report = EvalReport {
        openness: openness(&spec)?,
        macro_f,
        per_class_f,
        rejection_rate: tally.rejection_rate(),
        confusion: tally,
    };
    write_json(rc, &out_path(rc, "metrics.json")?, report)?;

    if !rc.cfg.openness_sweep.is_empty() {
        let tc = rc.cfg.train.to_train_config(rc.cfg.seed);
        let mut w = Vec::new();
        writeln!(w, "n_unknown,openness,f_measure,rejection_rate")?;
        for &n_unknown in &rc.cfg.openness_sweep {
            let sp = open_split(&data, n_unknown, rc.cfg.split.train_fraction, rc.cfg.seed)?;
            let bank = train_bank(&sp.train, &rc.cfg.arch, &tc, BaselineKind::None)?;
            let evt = calibrate_tails(&bank, &sp.train, rc.cfg.alpha, MIN_TAIL)?;
            let m = CalibratedModel {
                bank,
                evt,
                theta: rc.cfg.theta,
                alpha: rc.cfg.alpha,
                head_topology: "separate_per_class".into(),
            };
            let t = evaluate(&m, &sp.test, &sp.known_labels)?;
            let o = openness(&OpennessSpec {
                nc_train: sp.known_labels.len(),
                nc_eval: sp.known_labels.len() + sp.unknown_labels.len(),
                nc_recognize: sp.known_labels.len(),
            })?;
            writeln!(w, "{},{},{},{}", n_unknown, o, open_f_measure(&t)?, t.rejection_rate())?;
        }
        fs::write(out_path(rc, "openness_sweep.csv")?, w)?;
    }
    println!("eval: macro F {macro_f:.4}");
    Ok(())
}

// ---- kl ----------------------------------------------------------------

pub fn kl(rc: &ResolvedConfig, model: Option<&Path>) -> Result<(), CliError> {
    let bank = load_bank(rc, model)?;
    let Some(baseline) = bank.baseline.clone() else {
        return Err(CliError::Usage(
            "kl needs a model trained with a baseline head; set \"baseline\" and retrain".into(),
        ));
    };
    let data = resolve_dataset(rc)?;
    let split = resolve_split(rc, &data)?;
    if split.unknown_labels.is_empty() {
        return Err(CliError::Usage(
            "kl needs held-out unknown classes; set split.n_unknown >= 1".into(),
        ));
    }
    let mut ovr = std::collections::BTreeMap::new();
    let mut soft = std::collections::BTreeMap::new();
    for (x, label) in split.test.features.iter().zip(&split.test.labels) {
        ovr.entry(label.clone())
            .or_insert_with(Vec::new)
            .push(score(&bank, x)?);
        soft.entry(label.clone())
            .or_insert_with(Vec::new)
            .push(baseline.forward(x)?.output);
    }
    let report = kl_comparison_study(
        &ovr,
        &soft,
        &split.known_labels,
        &split.unknown_labels,
        &rc.cfg.k_list,
        rc.cfg.seed,
    )?;

    let mut w = Vec::new();
    writeln!(w, "known,unknown,k,kl_ovr,kl_softmax")?;
    for r in &report.rows {
        writeln!(w, "{},{},{},{},{}", r.known, r.unknown, r.k, r.kl_ovr, r.kl_softmax)?;
    }
    fs::write(out_path(rc, "kl_pairs.csv")?, w)?;
    write_json(rc, &out_path(rc, "kl_tests.json")?, &report)?;
    for t in &report.tests {
        println!("kl: k={} t={:.4} p={:.4}", t.k, t.t, t.p_one_sided);
    }
    Ok(())
}

// ---- riskmap ----------------------------------------------------------------

#[derive(Serialize)]
struct RiskSummary {
    class: String,
    risk: f64,
    undefined: bool,
    delta: f64,
    r: f64,
    tau: f64,
    grid_res: usize,
    ball_margin: f64,
    /// Theorem 2 cutoff: with r = 0, any tau above the minimum training
    /// score zeroes the estimated open space risk.
    zero_risk_tau: f64,
    zero_risk_probability: f64,
}

pub fn riskmap(
    rc: &ResolvedConfig,
    model: Option<&Path>,
    class: Option<&str>,
) -> Result<(), CliError> {
    let model = load_calibrated(rc, model)?;
    let Some(label) = class.or(rc.cfg.risk.class.as_deref()) else {
        return Err(CliError::Usage(
            "riskmap needs a class: pass --class or set risk.class".into(),
        ));
    };
    let Some(c) = model.bank.class_labels.iter().position(|l| l == label) else {
        return Err(CliError::Usage(format!(
            "class '{label}' not in the model (classes: {})",
            model.bank.class_labels.join(", ")
        )));
    };
    let data = resolve_dataset(rc)?;
    let split = resolve_split(rc, &data)?;
    let idx = split.train.indices_of(label);
    if idx.is_empty() {
        return Err(CliError::Usage(format!(
            "class '{label}' has no training samples in the split"
        )));
    }
    let points: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| split.train.features[i].clone())
        .collect();
    let rs = &rc.cfg.risk;
    let result = open_space_risk(
        &model.bank.heads[c],
        0,
        &points,
        rs.delta,
        rs.r,
        rs.tau,
        rs.grid_res,
        rs.ball_margin,
    )?;

    let mut w = Vec::new();
    result.grid.write_csv(&mut w)?;
    fs::write(out_path(rc, "risk_grid.csv")?, w)?;

    let mut w = Vec::new();
    let dim = result.grid.center.len();
    for i in 0..dim {
        write!(w, "x{i},")?;
    }
    writeln!(w, "score,probability")?;
    for cell in &result.grid.cells {
        for v in &cell.coords {
            write!(w, "{v},")?;
        }
        writeln!(w, "{},{}", cell.score, membership_probability(&model.evt[c], cell.score))?;
    }
    fs::write(out_path(rc, "probability_map.csv")?, w)?;

    let summary = RiskSummary {
        class: label.to_string(),
        risk: result.risk,
        undefined: result.undefined,
        delta: rs.delta,
        r: rs.r,
        tau: rs.tau,
        grid_res: rs.grid_res,
        ball_margin: rs.ball_margin,
        zero_risk_tau: result.grid.min_train_score,
        zero_risk_probability: membership_probability(&model.evt[c], result.grid.min_train_score),
    };
    let risk = summary.risk;
    write_json(rc, &out_path(rc, "risk_summary.json")?, summary)?;
    println!("riskmap: class {label} risk {risk:.6}");
    Ok(())
}
