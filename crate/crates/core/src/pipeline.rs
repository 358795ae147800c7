//! End-to-end stages over a data directory and an output directory.
//!
//! A data directory holds `train`, `test` and optionally `calibration`
//! datasets (manifest `<split>.json` plus `<split>.csv`), optional attribute
//! tables `<split>.attributes.csv` and, for generated data, `truth.json`.
//! Every stage reads its inputs from disk and writes deterministic files, so
//! stages can run as separate processes.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::conformal::{calibrate, evaluate, predict_sets, CalibrationRecord, EvaluationReport, ScoreConfig, ScoreVariant};
use crate::data::{load_dataset, read_json, save_feature_matrix, split_calibration, write_json, write_text, AttributeTable, FeatureMatrix, Split};
use crate::error::{Error, Result};
use crate::head::ModelHead;
use crate::hierarchy::{
    build_explanation_graph, order_class_features, static_order_from_train, ExplanationGraph, GraphMode, OrderStrategy,
};
use crate::metrics::{
    contrastiveness, feature_alignment, feature_sparsity, generality, locality5, set_coherence, structural_grounding,
    GroundTruthSim,
};
use crate::qp::{relax_hierarchy, solve, Assignment, QpInstance, RelaxationState};
use crate::scalar::Scalar;
use crate::similarity::SimilarityBundle;
use crate::synth::{generate, recovery_score, PlantedSpec, PlantedTruth};
use crate::transform::{apply_transform, fit_active_means, fit_normalization, predict_logits, TransformedFeatures};

/// Tunables shared by all stages. Read from flat TOML; unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_per_class: usize,
    pub k_features: usize,
    pub rho: f64,
    pub alphas: Vec<f64>,
    pub mip_gap: f64,
    pub lambda_redundancy: f64,
    pub lambda_bias: f64,
    /// Weight of the feature grounding loss during backbone training. Not used
    /// here; kept so configs describe the whole model.
    pub lambda_feat: f64,
    pub score_variant: ScoreVariant,
    /// Calibration samples taken per class from the test split when the data
    /// has no calibration split.
    pub per_class_calibration: usize,
    pub ordering: OrderStrategy,
    pub seed: u64,
    pub skip_pair_constraints: bool,
    pub subtract_min: bool,
    pub randomized_aps: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_per_class: 5,
            k_features: 50,
            rho: 0.5,
            alphas: vec![0.05, 0.1, 0.2],
            mip_gap: 0.01,
            lambda_redundancy: 0.1,
            lambda_bias: 0.1,
            lambda_feat: 3.0,
            score_variant: ScoreVariant::Limited,
            per_class_calibration: 10,
            ordering: OrderStrategy::Dynamic,
            seed: 0,
            skip_pair_constraints: false,
            subtract_min: false,
            randomized_aps: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_per_class == 0 || self.k_features < self.n_per_class {
            return bad(format!(
                "need 1 ≤ n_per_class ≤ k_features, got {} and {}",
                self.n_per_class, self.k_features
            ));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        if self.alphas.is_empty() {
            return bad("alphas must not be empty".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha must lie in (0, 1), got {a}"));
        }
        for (name, v) in [
            ("mip_gap", self.mip_gap),
            ("lambda_redundancy", self.lambda_redundancy),
            ("lambda_bias", self.lambda_bias),
            ("lambda_feat", self.lambda_feat),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

/// Output of fitting a head on a training split.
#[derive(Clone, Debug)]
pub struct FittedHead<T> {
    pub bundle: SimilarityBundle<T>,
    pub initial: Assignment<T>,
    pub relaxed: Assignment<T>,
    pub relaxation: RelaxationState,
    pub head: ModelHead<T>,
}

/// Similarities, exact solve under the pair constraints, relaxation with the
/// selection frozen, then normalization and active means on the training split.
pub fn fit_head<T: Scalar>(train: &FeatureMatrix<T>, cfg: &RunConfig) -> Result<FittedHead<T>> {
    let bundle = SimilarityBundle::from_train(train, T::lit(cfg.rho))?;
    let mut inst = QpInstance::new(
        bundle.clone(),
        cfg.k_features,
        cfg.n_per_class,
        T::lit(cfg.lambda_redundancy),
        T::lit(cfg.lambda_bias),
        T::lit(cfg.mip_gap),
    )?;
    if cfg.skip_pair_constraints {
        inst = inst.with_pairs(BTreeSet::new());
    }
    let initial = solve(&inst)?;
    let (relaxed, relaxation) = relax_hierarchy(&initial, &inst)?;
    let head = head_from_assignment(train, &relaxed)?;
    Ok(FittedHead {
        bundle,
        initial,
        relaxed,
        relaxation,
        head,
    })
}

pub fn head_from_assignment<T: Scalar>(train: &FeatureMatrix<T>, assignment: &Assignment<T>) -> Result<ModelHead<T>> {
    let norm = fit_normalization(train, &assignment.selection)?;
    let k = assignment.selection.len();
    let head = ModelHead::new(
        assignment.selection.clone(),
        train.n_features(),
        assignment.local_rows(),
        norm.mu,
        norm.sigma,
        vec![T::one(); k],
        assignment.n_per_class,
    )?;
    let f = apply_transform(train, &head)?;
    head.with_active_mean(fit_active_means(f.values.view()))
}

/// The splits of a data directory.
#[derive(Clone, Debug)]
pub struct Splits<T> {
    pub train: FeatureMatrix<T>,
    pub calibration: FeatureMatrix<T>,
    pub test: FeatureMatrix<T>,
}

fn manifest(data_dir: &Path, split: Split) -> PathBuf {
    data_dir.join(format!("{}.json", split.as_str()))
}

fn attributes_path(data_dir: &Path, split: Split) -> PathBuf {
    data_dir.join(format!("{}.attributes.csv", split.as_str()))
}

pub fn load_train<T: Scalar>(data_dir: &Path) -> Result<FeatureMatrix<T>> {
    let train: FeatureMatrix<T> = load_dataset(&manifest(data_dir, Split::Train))?;
    if train.split() != Split::Train {
        return Err(Error::WrongSplit {
            expected: Split::Train.to_string(),
            found: train.split().to_string(),
        });
    }
    Ok(train)
}

/// Loads all splits. Without a calibration dataset the first
/// `per_class_calibration` test samples of each class are used.
pub fn load_splits<T: Scalar>(data_dir: &Path, per_class_calibration: usize) -> Result<Splits<T>> {
    let train = load_train(data_dir)?;
    let test: FeatureMatrix<T> = load_dataset(&manifest(data_dir, Split::Test))?;
    let cal_path = manifest(data_dir, Split::Calibration);
    let (calibration, test) = if cal_path.exists() {
        (load_dataset(&cal_path)?, test)
    } else {
        split_calibration(&test, per_class_calibration)?
    };
    Ok(Splits {
        train,
        calibration,
        test,
    })
}

/// Attribute table of a split aligned to its samples, if the file exists.
pub fn load_attributes<T: Scalar>(data_dir: &Path, fm: &FeatureMatrix<T>, split: Split) -> Result<Option<AttributeTable>> {
    let mut path = attributes_path(data_dir, split);
    // a calibration split cut from the test data carries test ids
    if !path.exists() && split == Split::Calibration {
        path = attributes_path(data_dir, Split::Test);
    }
    if !path.exists() {
        return Ok(None);
    }
    AttributeTable::load(&path)?.aligned_to(fm.sample_ids()).map(Some)
}

/// Writes a generated dataset; returns its planted structure.
pub fn generate_dataset(spec: &PlantedSpec, data_dir: &Path) -> Result<PlantedTruth> {
    let data = generate::<f64>(spec)?;
    let splits = [
        (Split::Train, &data.train, &data.attributes[0]),
        (Split::Calibration, &data.calibration, &data.attributes[1]),
        (Split::Test, &data.test, &data.attributes[2]),
    ];
    for (split, fm, attrs) in splits {
        if fm.is_empty() {
            continue;
        }
        save_feature_matrix(fm, data_dir, split.as_str())?;
        attrs.save(&attributes_path(data_dir, split))?;
    }
    write_json(&data_dir.join("spec.json"), spec)?;
    write_json(&data_dir.join("truth.json"), &data.truth)?;
    Ok(data.truth)
}

/// Artifact locations inside an output directory.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn similarity(&self) -> PathBuf {
        self.root.join("similarity.json")
    }

    pub fn assignment(&self) -> PathBuf {
        self.root.join("assignment.json")
    }

    pub fn initial_assignment(&self) -> PathBuf {
        self.root.join("assignment.initial.json")
    }

    pub fn relaxation(&self) -> PathBuf {
        self.root.join("relaxation.json")
    }

    pub fn head(&self) -> PathBuf {
        self.root.join("head.json")
    }

    pub fn transformed(&self, split: Split) -> PathBuf {
        self.root.join("transformed").join(format!("{}.json", split.as_str()))
    }

    pub fn record(&self, variant: ScoreVariant, alpha: f64) -> PathBuf {
        self.root.join("calibration").join(format!("{variant}_{alpha}.json"))
    }

    pub fn predictions(&self, variant: ScoreVariant, alpha: f64) -> PathBuf {
        self.root.join("predictions").join(format!("{variant}_{alpha}.csv"))
    }

    pub fn graph(&self, sample_id: &str, mode: GraphMode, ext: &str) -> PathBuf {
        let mode = match mode {
            GraphMode::Restricted => "restricted",
            GraphMode::Full => "full",
        };
        self.root.join("graphs").join(format!("{sample_id}.{mode}.{ext}"))
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn evaluation_csv(&self) -> PathBuf {
        self.root.join("evaluation.csv")
    }

    pub fn levels_csv(&self) -> PathBuf {
        self.root.join("levels.csv")
    }

    pub fn evaluation_json(&self) -> PathBuf {
        self.root.join("evaluation.json")
    }
}

pub fn run_similarity<T: Scalar>(cfg: &RunConfig, data_dir: &Path, out: &Artifacts) -> Result<SimilarityBundle<T>> {
    let train = load_train::<T>(data_dir)?;
    let bundle = SimilarityBundle::from_train(&train, T::lit(cfg.rho))?;
    bundle.save(&out.similarity())?;
    Ok(bundle)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveSummary {
    pub enforced_pairs: usize,
    pub pairs: usize,
    pub objective: f64,
    pub gap: f64,
    pub relaxation_iterations: usize,
    pub relaxation_converged: bool,
    /// Agreement with the planted assignment, for generated data.
    pub recovery: Option<f64>,
}

pub fn run_solve<T: Scalar>(cfg: &RunConfig, data_dir: &Path, out: &Artifacts) -> Result<SolveSummary> {
    let train = load_train::<T>(data_dir)?;
    let fitted = fit_head(&train, cfg)?;
    fitted.bundle.save(&out.similarity())?;
    fitted.initial.save(&out.initial_assignment())?;
    fitted.relaxed.save(&out.assignment())?;
    write_json(&out.relaxation(), &fitted.relaxation)?;
    fitted.head.save(&out.head())?;
    let truth_path = data_dir.join("truth.json");
    let recovery = if truth_path.exists() {
        let truth: PlantedTruth = read_json(&truth_path)?;
        recovery_score(&fitted.relaxed, &truth).ok()
    } else {
        None
    };
    Ok(SolveSummary {
        enforced_pairs: if cfg.skip_pair_constraints { 0 } else { fitted.bundle.pair_set.len() },
        pairs: fitted.relaxed.pairs.len(),
        objective: fitted.relaxed.objective.to_f64_lossy(),
        gap: fitted.relaxed.gap.to_f64_lossy(),
        relaxation_iterations: fitted.relaxation.iterations,
        relaxation_converged: fitted.relaxation.converged,
        recovery,
    })
}

pub fn load_head<T: Scalar>(out: &Artifacts) -> Result<ModelHead<T>> {
    ModelHead::load(&out.head())
}

pub fn run_transform<T: Scalar>(cfg: &RunConfig, data_dir: &Path, out: &Artifacts) -> Result<()> {
    let head = load_head::<T>(out)?;
    let splits = load_splits::<T>(data_dir, cfg.per_class_calibration)?;
    for (split, fm) in [
        (Split::Train, &splits.train),
        (Split::Calibration, &splits.calibration),
        (Split::Test, &splits.test),
    ] {
        apply_transform(fm, &head)?.save(&out.transformed(split))?;
    }
    Ok(())
}

/// Scoring setup for a config; static ordering is fitted on the training split.
pub fn score_config<T: Scalar>(cfg: &RunConfig, head: &ModelHead<T>, train_f_star: &TransformedFeatures<T>) -> Result<ScoreConfig> {
    let static_order = match cfg.ordering {
        OrderStrategy::Static => Some(static_order_from_train(train_f_star.values.view(), &train_f_star.labels, head)?),
        OrderStrategy::Dynamic => None,
    };
    Ok(ScoreConfig {
        ordering: cfg.ordering,
        static_order,
        subtract_min: cfg.subtract_min,
        aps_seed: cfg.randomized_aps.then_some(cfg.seed),
    })
}

/// Loaded head with transformed splits.
pub struct Prepared<T> {
    pub head: ModelHead<T>,
    pub train: TransformedFeatures<T>,
    pub calibration: TransformedFeatures<T>,
    pub test: TransformedFeatures<T>,
    pub splits: Splits<T>,
    pub scoring: ScoreConfig,
}

pub fn prepare<T: Scalar>(cfg: &RunConfig, data_dir: &Path, out: &Artifacts) -> Result<Prepared<T>> {
    let head = load_head::<T>(out)?;
    let splits = load_splits::<T>(data_dir, cfg.per_class_calibration)?;
    let train = apply_transform(&splits.train, &head)?;
    let calibration = apply_transform(&splits.calibration, &head)?;
    let test = apply_transform(&splits.test, &head)?;
    let scoring = score_config(cfg, &head, &train)?;
    Ok(Prepared {
        head,
        train,
        calibration,
        test,
        splits,
        scoring,
    })
}

pub fn run_calibrate<T: Scalar>(
    cfg: &RunConfig,
    variants: &[ScoreVariant],
    data_dir: &Path,
    out: &Artifacts,
) -> Result<Vec<CalibrationRecord<T>>> {
    let p = prepare::<T>(cfg, data_dir, out)?;
    let mut records = Vec::new();
    for &variant in variants {
        for &alpha in &cfg.alphas {
            let rec = calibrate(p.calibration.values.view(), &p.calibration.labels, &p.head, alpha, variant, &p.scoring)?;
            rec.save(&out.record(variant, alpha))?;
            records.push(rec);
        }
    }
    Ok(records)
}

fn load_record<T: Scalar>(out: &Artifacts, variant: ScoreVariant, alpha: f64) -> Result<CalibrationRecord<T>> {
    CalibrationRecord::load(&out.record(variant, alpha))
}

/// Writes `sample_id,label,predicted,set` rows per calibrated `(variant, α)`;
/// the set is space separated.
pub fn run_predict<T: Scalar>(cfg: &RunConfig, variants: &[ScoreVariant], data_dir: &Path, out: &Artifacts) -> Result<()> {
    let p = prepare::<T>(cfg, data_dir, out)?;
    for &variant in variants {
        for &alpha in &cfg.alphas {
            let rec = load_record::<T>(out, variant, alpha)?;
            let sets = predict_sets(p.test.values.view(), &p.head, &rec)?;
            let mut text = String::from("sample_id,label,predicted,set\n");
            for (i, set) in sets.iter().enumerate() {
                let (_, top) = predict_logits(&p.test.values.row(i).to_vec(), &p.head);
                let members: Vec<String> = set.iter().map(usize::to_string).collect();
                let _ = writeln!(text, "{},{},{},{}", p.test.sample_ids[i], p.test.labels[i], top, members.join(" "));
            }
            write_text(&out.predictions(variant, alpha), &text)?;
        }
    }
    Ok(())
}

fn unknown_sample(id: &str, available: &[String]) -> Error {
    const SHOWN: usize = 50;
    let mut list = available.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if available.len() > SHOWN {
        let _ = write!(list, ", … ({} in total)", available.len());
    }
    Error::invalid(format!("no test sample with id {id:?}; available ids: {list}"))
}

/// Restricted and full graphs, as DOT and JSON, for each requested test
/// sample. The predicted set is the limited-variant set at the first α when
/// that record exists, otherwise the top class alone.
pub fn run_explain<T: Scalar>(cfg: &RunConfig, sample_ids: &[String], data_dir: &Path, out: &Artifacts) -> Result<Vec<ExplanationGraph>> {
    let p = prepare::<T>(cfg, data_dir, out)?;
    let record = cfg
        .alphas
        .first()
        .and_then(|&a| load_record::<T>(out, cfg.score_variant, a).ok());
    let mut graphs = Vec::new();
    for id in sample_ids {
        let i = p
            .test
            .sample_ids
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| unknown_sample(id, &p.test.sample_ids))?;
        let f: Vec<T> = p.test.values.row(i).to_vec();
        let order = order_class_features(&f, &p.head, p.scoring.ordering, p.scoring.static_order.as_ref())?;
        let predicted = match &record {
            Some(rec) => crate::conformal::predict_set(&f, &p.head, rec)?,
            None => vec![predict_logits(&f, &p.head).1],
        };
        for mode in [GraphMode::Restricted, GraphMode::Full] {
            let g = build_explanation_graph(&f, &p.head, &order, &predicted, mode)?;
            write_text(&out.graph(id, mode, "dot"), &g.to_dot())?;
            write_text(&out.graph(id, mode, "json"), &(g.to_json()? + "\n"))?;
            graphs.push(g);
        }
    }
    Ok(graphs)
}

/// Ground-truth class similarity: the planted structure of generated data
/// when present, otherwise computed from the training attributes.
pub fn ground_truth<T: Scalar>(data_dir: &Path, train: &FeatureMatrix<T>) -> Result<Option<Array2<T>>> {
    let truth_path = data_dir.join("truth.json");
    if truth_path.exists() {
        let truth: PlantedTruth = read_json(&truth_path)?;
        return Ok(Some(truth.psi_gt()));
    }
    if let Some(table) = load_attributes(data_dir, train, Split::Train)? {
        let gt = GroundTruthSim::<T>::from_attributes(&table, train.labels(), train.n_classes())?;
        return Ok(Some(gt.psi_gt));
    }
    Ok(None)
}

fn accuracy<T: Scalar>(f: &TransformedFeatures<T>, head: &ModelHead<T>) -> f64 {
    let hits = f
        .values
        .outer_iter()
        .zip(&f.labels)
        .filter(|(row, &y)| predict_logits(&row.to_vec(), head).1 == y)
        .count();
    hits as f64 / f.n_samples().max(1) as f64
}

/// `metric,value` rows on the test split. Metrics whose inputs are missing
/// (attributes, spatial maps, calibration records) are left out.
pub fn run_metrics<T: Scalar>(cfg: &RunConfig, data_dir: &Path, out: &Artifacts) -> Result<Vec<(String, f64)>> {
    let p = prepare::<T>(cfg, data_dir, out)?;
    let f = p.test.values.view();
    let mut rows: Vec<(String, f64)> = vec![
        ("accuracy".into(), 100.0 * accuracy(&p.test, &p.head)),
        ("sparsity".into(), feature_sparsity(f)),
        ("contrastiveness".into(), contrastiveness(f)?),
        ("generality".into(), generality(f, &p.test.labels, p.head.n_classes())?),
        ("pairs".into(), crate::qp::pair_set_of(p.head.rows(), p.head.n_per_class())?.len() as f64),
    ];
    let psi_gt = ground_truth(data_dir, &p.splits.train)?;
    if let Some(psi) = &psi_gt {
        let sg = structural_grounding(p.head.rows(), psi.view(), p.head.n_per_class())?;
        rows.push(("structural_grounding".into(), sg.normalized));
        rows.push(("structural_grounding_unnormalized".into(), sg.literal));
    }
    if let Some(attrs) = load_attributes(data_dir, &p.splits.test, Split::Test)? {
        rows.push(("feature_alignment".into(), feature_alignment(f, attrs.per_sample())?));
    }
    if let Some(maps) = p.splits.test.spatial_maps() {
        rows.push(("locality5".into(), locality5(maps.view(), f, &p.head)?));
    }
    if let (Some(psi), Some(&alpha)) = (&psi_gt, cfg.alphas.first()) {
        if let Ok(rec) = load_record::<T>(out, cfg.score_variant, alpha) {
            let sets = predict_sets(f, &p.head, &rec)?;
            if let Some(coh) = set_coherence(&sets, psi.view()) {
                rows.push((format!("set_coherence_{}_{alpha}", cfg.score_variant), coh));
            }
        }
    }
    let mut text = String::from("metric,value\n");
    for (name, v) in &rows {
        let _ = writeln!(text, "{name},{v}");
    }
    write_text(&out.metrics(), &text)?;
    Ok(rows)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Calibrates every variant at every α and evaluates on the test split.
/// Writes one `evaluation.csv` row per `(variant, α)`, the fixed-depth curve
/// to `levels.csv`, and all reports as JSON.
pub fn run_evaluate<T: Scalar>(cfg: &RunConfig, variants: &[ScoreVariant], data_dir: &Path, out: &Artifacts) -> Result<Vec<EvaluationReport>> {
    let p = prepare::<T>(cfg, data_dir, out)?;
    let psi_gt = ground_truth(data_dir, &p.splits.train)?;
    let mut reports = Vec::new();
    for &variant in variants {
        for &alpha in &cfg.alphas {
            let rec = calibrate(p.calibration.values.view(), &p.calibration.labels, &p.head, alpha, variant, &p.scoring)?;
            reports.push(evaluate(
                p.test.values.view(),
                &p.test.labels,
                &p.head,
                &rec,
                psi_gt.as_ref().map(ArrayView2::from),
            )?);
        }
    }
    let mut csv = String::from("variant,alpha,quantile,n_limit,coverage,mean_size,zero_quantile,coherence\n");
    for r in &reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.variant,
            r.alpha,
            r.quantile,
            r.n_limit.map_or_else(String::new, |n| n.to_string()),
            r.coverage,
            r.mean_size,
            r.zero_quantile,
            opt_cell(r.coherence)
        );
    }
    write_text(&out.evaluation_csv(), &csv)?;
    let mut levels = String::from("depth,coverage,mean_size,coherence\n");
    if let Some(first) = reports.first() {
        for l in &first.levels {
            let _ = writeln!(levels, "{},{},{},{}", l.depth, l.coverage, l.mean_size, opt_cell(l.coherence));
        }
    }
    write_text(&out.levels_csv(), &levels)?;
    write_json(&out.evaluation_json(), &reports)?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!((cfg.n_per_class, cfg.k_features, cfg.rho, cfg.mip_gap), (5, 50, 0.5, 0.01));
        let cfg = RunConfig::from_toml_str("rho = 0.25\nscore_variant = \"aps\"\nordering = \"static\"\nalphas = [0.1]").unwrap();
        assert_eq!((cfg.rho, cfg.score_variant, cfg.ordering), (0.25, ScoreVariant::Aps, OrderStrategy::Static));
        assert!(RunConfig::from_toml_str("alphas = [1.5]").is_err());
        assert!(RunConfig::from_toml_str("unknown = 1").is_err());
        assert!(RunConfig::from_toml_str("k_features = 2\nn_per_class = 3").is_err());
    }

    fn small_cfg() -> RunConfig {
        RunConfig {
            n_per_class: 2,
            k_features: 8,
            mip_gap: 0.0,
            alphas: vec![0.1, 0.2],
            ..RunConfig::default()
        }
    }

    #[test]
    fn stages_on_generated_data() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let out = Artifacts::new(dir.path().join("out"));
        let spec = PlantedSpec {
            seed: 5,
            ..PlantedSpec::default()
        };
        generate_dataset(&spec, &data).unwrap();
        let cfg = small_cfg();
        let summary = run_solve::<f64>(&cfg, &data, &out).unwrap();
        assert!(summary.pairs >= summary.enforced_pairs);
        assert_eq!(summary.recovery, Some(1.0));
        run_transform::<f64>(&cfg, &data, &out).unwrap();
        assert!(out.transformed(Split::Test).exists());
        let recs = run_calibrate::<f64>(&cfg, &ScoreVariant::ALL, &data, &out).unwrap();
        assert_eq!(recs.len(), 10);
        run_predict::<f64>(&cfg, &[ScoreVariant::Limited], &data, &out).unwrap();
        let ids = vec!["test-00003".to_string()];
        let graphs = run_explain::<f64>(&cfg, &ids, &data, &out).unwrap();
        assert_eq!(graphs.len(), 2);
        let err = run_explain::<f64>(&cfg, &["nope".to_string()], &data, &out).unwrap_err();
        assert!(err.to_string().contains("test-00000"));
        let metrics = run_metrics::<f64>(&cfg, &data, &out).unwrap();
        assert!(metrics.iter().any(|(m, _)| m == "structural_grounding"));
        let reports = run_evaluate::<f64>(&cfg, &ScoreVariant::ALL, &data, &out).unwrap();
        assert_eq!(reports.len(), 10);
        let csv = std::fs::read_to_string(out.evaluation_csv()).unwrap();
        assert_eq!(csv.lines().count(), 11);
    }

    #[test]
    fn calibration_cut_from_test() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PlantedSpec {
            calibration_per_class: 0,
            seed: 2,
            ..PlantedSpec::default()
        };
        generate_dataset(&spec, dir.path()).unwrap();
        assert!(!dir.path().join("calibration.json").exists());
        let s = load_splits::<f64>(dir.path(), 10).unwrap();
        assert_eq!((s.calibration.n_samples(), s.test.n_samples()), (80, 320));
        let attrs = load_attributes(dir.path(), &s.calibration, Split::Calibration).unwrap().unwrap();
        assert_eq!(attrs.sample_ids(), s.calibration.sample_ids());
    }
}
