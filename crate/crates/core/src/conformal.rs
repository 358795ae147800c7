//! Split conformal set prediction.
//!
//! The hierarchical scores reward a class for every leading feature it shares
//! with the predicted class; THR and APS work on the softmax of the logits.

use std::fmt;
use std::path::Path;

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_json};
use crate::error::{Error, Result};
use crate::head::ModelHead;
use crate::hierarchy::{fixed_level_set, order_class_features, shared_depth, ClassOrder, OrderStrategy};
use crate::metrics::set_coherence;
use crate::scalar::{extended_real, Scalar};
use crate::transform::{predict_logits, softmax};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreVariant {
    Up,
    Sel,
    Limited,
    Thr,
    Aps,
}

impl ScoreVariant {
    pub const ALL: [ScoreVariant; 5] = [Self::Up, Self::Sel, Self::Limited, Self::Thr, Self::Aps];

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Self::Up | Self::Sel | Self::Limited)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Up => "up",
            Self::Sel => "sel",
            Self::Limited => "limited",
            Self::Thr => "thr",
            Self::Aps => "aps",
        }
    }
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScoreVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown score variant {s:?}; expected one of up, sel, limited, thr, aps")))
    }
}

/// How samples are scored, shared by calibration and prediction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub ordering: OrderStrategy,
    /// Required when `ordering` is static.
    pub static_order: Option<ClassOrder>,
    /// Shift activations so the smallest is zero before scoring, for heads
    /// whose features can be negative.
    pub subtract_min: bool,
    /// Seed for randomized APS; `None` scores APS deterministically.
    pub aps_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CalibrationRecord<T> {
    pub variant: ScoreVariant,
    pub alpha: f64,
    pub n_limit: Option<usize>,
    #[serde(with = "extended_real")]
    pub quantile: T,
    pub cal_scores: Vec<T>,
    pub n_cal: usize,
    /// Calibration error of each fixed level, for the hierarchical variants.
    pub level_errors: Vec<f64>,
    pub config: ScoreConfig,
}

impl<T: Scalar> CalibrationRecord<T> {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Everything the scores of one sample depend on.
#[derive(Clone, Debug)]
pub struct SampleContext<T> {
    pub f_star: Vec<T>,
    pub logits: Vec<T>,
    pub top_class: usize,
    pub order: ClassOrder,
}

impl<T: Scalar> SampleContext<T> {
    pub fn new(f_star: &[T], head: &ModelHead<T>, config: &ScoreConfig) -> Result<Self> {
        let order = order_class_features(f_star, head, config.ordering, config.static_order.as_ref())?;
        let (logits, top_class) = predict_logits(f_star, head);
        let mut f = f_star.to_vec();
        if config.subtract_min {
            let min = f.iter().copied().fold(T::infinity(), T::min);
            if min.is_finite() {
                f.iter_mut().for_each(|v| *v = *v - min);
            }
        }
        Ok(Self {
            f_star: f,
            logits,
            top_class,
            order,
        })
    }

    pub fn level_set(&self, depth: usize) -> Vec<usize> {
        fixed_level_set(&self.order, self.top_class, depth)
    }

    pub fn score(&self, variant: ScoreVariant, class: usize, n_limit: usize, u: T) -> T {
        let (f, o, c_hat) = (&self.f_star, &self.order, self.top_class);
        match variant {
            ScoreVariant::Up => score_up(f, o, class, c_hat),
            ScoreVariant::Sel => score_sel(f, o, class, c_hat),
            ScoreVariant::Limited => score_limited(f, o, class, c_hat, n_limit),
            ScoreVariant::Thr => thr_score(&self.logits, class),
            ScoreVariant::Aps => aps_score_randomized(&self.logits, class, u),
        }
    }
}

/// Negated sum of the activations along the prefix `class` shares with `c_hat`.
pub fn score_up<T: Scalar>(f_star: &[T], order: &ClassOrder, class: usize, c_hat: usize) -> T {
    let d = shared_depth(order, class, c_hat);
    -order.of(class)[..d].iter().map(|&q| f_star[q]).sum::<T>()
}

/// Feature of `class` where its order first leaves that of `c_hat`; the
/// first feature when it never does.
pub fn divergence_feature(order: &ClassOrder, class: usize, c_hat: usize) -> usize {
    let d = shared_depth(order, class, c_hat);
    let row = order.of(class);
    if d < row.len() {
        row[d]
    } else {
        row[0]
    }
}

/// [`score_up`] minus the activation of the divergence feature.
pub fn score_sel<T: Scalar>(f_star: &[T], order: &ClassOrder, class: usize, c_hat: usize) -> T {
    score_up(f_star, order, class, c_hat) - f_star[divergence_feature(order, class, c_hat)]
}

/// Zero unless `class` shares at least `n_limit` leading features with
/// `c_hat`; otherwise the shared activations from depth `n_limit` on plus the
/// divergence feature, negated.
pub fn score_limited<T: Scalar>(f_star: &[T], order: &ClassOrder, class: usize, c_hat: usize, n_limit: usize) -> T {
    let d = shared_depth(order, class, c_hat);
    if d < n_limit {
        return T::zero();
    }
    let shared = order.of(class)[n_limit.max(1) - 1..d].iter().map(|&q| f_star[q]).sum::<T>();
    -shared - f_star[divergence_feature(order, class, c_hat)]
}

pub fn thr_score<T: Scalar>(logits: &[T], class: usize) -> T {
    T::one() - softmax(logits)[class]
}

/// Probability mass of the classes ranked above `class`, plus its own.
/// Ties rank by class index.
pub fn aps_score<T: Scalar>(logits: &[T], class: usize) -> T {
    aps_score_randomized(logits, class, T::one())
}

/// APS with only the fraction `u` of the class's own mass counted.
pub fn aps_score_randomized<T: Scalar>(logits: &[T], class: usize, u: T) -> T {
    let p = softmax(logits);
    let pc = p[class];
    let above: T = p
        .iter()
        .enumerate()
        .filter(|&(j, &pj)| pj > pc || (pj == pc && j < class))
        .map(|(_, &pj)| pj)
        .sum();
    above + u * pc
}

/// The `⌈(n+1)(1−α)⌉`-th smallest score, `+∞` past the end.
pub fn conformal_quantile<T: Scalar>(scores: &[T], alpha: f64) -> T {
    let n = scores.len();
    let rank = ((n as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil().max(1.0) as usize;
    if rank > n {
        return T::infinity();
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sorted[rank - 1]
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_rows<T: Scalar>(f_star: ArrayView2<'_, T>, labels: &[usize], head: &ModelHead<T>) -> Result<()> {
    if f_star.ncols() != head.k_features() {
        return Err(Error::DimensionMismatch {
            what: "transformed features".into(),
            expected: head.k_features(),
            found: f_star.ncols(),
        });
    }
    if labels.len() != f_star.nrows() {
        return Err(Error::DimensionMismatch {
            what: "labels".into(),
            expected: f_star.nrows(),
            found: labels.len(),
        });
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= head.n_classes()) {
        return Err(Error::LabelOutOfRange {
            sample: i,
            label: y,
            n_classes: head.n_classes(),
        });
    }
    Ok(())
}

fn contexts<T: Scalar>(f_star: ArrayView2<'_, T>, head: &ModelHead<T>, config: &ScoreConfig) -> Result<Vec<SampleContext<T>>> {
    f_star
        .outer_iter()
        .map(|row| SampleContext::new(&row.to_vec(), head, config))
        .collect()
}

/// Per-sample APS fractions; all ones when APS is deterministic.
fn aps_draws<T: Scalar>(n: usize, seed: Option<u64>) -> Vec<T> {
    match seed {
        None => vec![T::one(); n],
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..n).map(|_| T::lit(rng.random::<f64>())).collect()
        }
    }
}

/// Fraction of samples whose label is outside the fixed level set, per depth.
pub fn level_errors<T: Scalar>(ctx: &[SampleContext<T>], labels: &[usize], depth: usize) -> Vec<f64> {
    (1..=depth)
        .map(|d| {
            let misses = ctx
                .iter()
                .zip(labels)
                .filter(|(s, &y)| shared_depth(&s.order, y, s.top_class) < d)
                .count();
            misses as f64 / ctx.len().max(1) as f64
        })
        .collect()
}

/// Deepest level whose calibration error is at most `alpha`, or 1.
pub fn select_n_limit(errors: &[f64], alpha: f64) -> usize {
    errors.iter().rposition(|&e| e <= alpha).map_or(1, |i| i + 1)
}

pub fn compute_n_limit<T: Scalar>(
    cal_f_star: ArrayView2<'_, T>,
    labels: &[usize],
    head: &ModelHead<T>,
    alpha: f64,
    config: &ScoreConfig,
) -> Result<usize> {
    check_alpha(alpha)?;
    check_rows(cal_f_star, labels, head)?;
    if labels.is_empty() {
        return Err(Error::invalid("empty calibration set"));
    }
    let ctx = contexts(cal_f_star, head, config)?;
    Ok(select_n_limit(&level_errors(&ctx, labels, head.n_per_class()), alpha))
}

/// Scores the true label of every calibration sample and takes the
/// conservative quantile.
pub fn calibrate<T: Scalar>(
    cal_f_star: ArrayView2<'_, T>,
    labels: &[usize],
    head: &ModelHead<T>,
    alpha: f64,
    variant: ScoreVariant,
    config: &ScoreConfig,
) -> Result<CalibrationRecord<T>> {
    check_alpha(alpha)?;
    check_rows(cal_f_star, labels, head)?;
    if labels.is_empty() {
        return Err(Error::invalid("empty calibration set"));
    }
    let ctx = contexts(cal_f_star, head, config)?;
    let (n_limit, errors) = if variant.is_hierarchical() {
        let errors = level_errors(&ctx, labels, head.n_per_class());
        let n_limit = (variant == ScoreVariant::Limited).then(|| select_n_limit(&errors, alpha));
        (n_limit, errors)
    } else {
        (None, Vec::new())
    };
    let u = aps_draws::<T>(ctx.len(), config.aps_seed);
    let cal_scores: Vec<T> = ctx
        .iter()
        .zip(labels)
        .zip(&u)
        .map(|((s, &y), &u)| s.score(variant, y, n_limit.unwrap_or(1), u))
        .collect();
    Ok(CalibrationRecord {
        variant,
        alpha,
        n_limit,
        quantile: conformal_quantile(&cal_scores, alpha),
        n_cal: cal_scores.len(),
        cal_scores,
        level_errors: errors,
        config: config.clone(),
    })
}

fn set_of<T: Scalar>(ctx: &SampleContext<T>, record: &CalibrationRecord<T>, u: T) -> Vec<usize> {
    let n_limit = record.n_limit.unwrap_or(1);
    (0..ctx.logits.len())
        .filter(|&c| ctx.score(record.variant, c, n_limit, u) <= record.quantile)
        .collect()
}

/// `{c : s(x, c) ≤ q̂}`. Randomized APS counts the full own mass here; use
/// [`predict_set_with_u`] or [`predict_sets`] to draw it.
pub fn predict_set<T: Scalar>(f_star: &[T], head: &ModelHead<T>, record: &CalibrationRecord<T>) -> Result<Vec<usize>> {
    predict_set_with_u(f_star, head, record, T::one())
}

pub fn predict_set_with_u<T: Scalar>(
    f_star: &[T],
    head: &ModelHead<T>,
    record: &CalibrationRecord<T>,
    u: T,
) -> Result<Vec<usize>> {
    let ctx = SampleContext::new(f_star, head, &record.config)?;
    Ok(set_of(&ctx, record, u))
}

/// Prediction sets for every row. Randomized APS draws from a stream
/// independent of the calibration one.
pub fn predict_sets<T: Scalar>(
    f_star: ArrayView2<'_, T>,
    head: &ModelHead<T>,
    record: &CalibrationRecord<T>,
) -> Result<Vec<Vec<usize>>> {
    if f_star.ncols() != head.k_features() {
        return Err(Error::DimensionMismatch {
            what: "transformed features".into(),
            expected: head.k_features(),
            found: f_star.ncols(),
        });
    }
    let ctx = contexts(f_star, head, &record.config)?;
    let u = aps_draws::<T>(ctx.len(), record.config.aps_seed.map(|s| s ^ 0x5bd1_e995_5bd1_e995));
    Ok(ctx.iter().zip(u).map(|(s, u)| set_of(s, record, u)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPoint {
    pub depth: usize,
    pub coverage: f64,
    pub mean_size: f64,
    pub coherence: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub variant: ScoreVariant,
    pub alpha: f64,
    pub quantile: f64,
    pub n_limit: Option<usize>,
    pub n_test: usize,
    pub coverage: f64,
    pub mean_size: f64,
    /// Set when q̂ is exactly zero, which admits every class scored zero.
    pub zero_quantile: bool,
    pub coherence: Option<f64>,
    /// Coverage and size of predicting at each fixed depth.
    pub levels: Vec<LevelPoint>,
}

fn coverage_and_size(sets: &[Vec<usize>], labels: &[usize]) -> (f64, f64) {
    let n = sets.len().max(1) as f64;
    let covered = sets.iter().zip(labels).filter(|(s, y)| s.contains(y)).count();
    let size: usize = sets.iter().map(Vec::len).sum();
    (covered as f64 / n, size as f64 / n)
}

pub fn evaluate<T: Scalar>(
    test_f_star: ArrayView2<'_, T>,
    labels: &[usize],
    head: &ModelHead<T>,
    record: &CalibrationRecord<T>,
    psi_gt: Option<ArrayView2<'_, T>>,
) -> Result<EvaluationReport> {
    check_rows(test_f_star, labels, head)?;
    if labels.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let sets = predict_sets(test_f_star, head, record)?;
    let (coverage, mean_size) = coverage_and_size(&sets, labels);
    let ctx = contexts(test_f_star, head, &record.config)?;
    let levels = (1..=head.n_per_class())
        .map(|d| {
            let level_sets: Vec<Vec<usize>> = ctx.iter().map(|s| s.level_set(d)).collect();
            let (coverage, mean_size) = coverage_and_size(&level_sets, labels);
            LevelPoint {
                depth: d,
                coverage,
                mean_size,
                coherence: psi_gt.and_then(|p| set_coherence(&level_sets, p)),
            }
        })
        .collect();
    Ok(EvaluationReport {
        variant: record.variant,
        alpha: record.alpha,
        quantile: record.quantile.to_f64_lossy(),
        n_limit: record.n_limit,
        n_test: labels.len(),
        coverage,
        mean_size,
        zero_quantile: record.quantile == T::zero(),
        coherence: psi_gt.and_then(|p| set_coherence(&sets, p)),
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const F: [f64; 6] = [0.9, 0.5, 0.2, 0.1, 0.0, 0.0];

    fn running_order() -> ClassOrder {
        // c_hat = 0 uses features [0,1,2]; class 1 uses [0,1,3]
        ClassOrder {
            per_class: vec![vec![0, 1, 2], vec![0, 1, 3], vec![4, 5, 0]],
            strategy: OrderStrategy::Dynamic,
        }
    }

    #[test]
    fn running_example_scores() {
        let o = running_order();
        assert_eq!(score_up(&F, &o, 1, 0), -(0.9 + 0.5));
        assert_eq!(score_up(&F, &o, 0, 0), -(0.9 + 0.5 + 0.2));
        assert_eq!(score_sel(&F, &o, 1, 0), -(0.9 + 0.5) - 0.1);
        assert_eq!(score_sel(&F, &o, 0, 0), -(0.9 + 0.5 + 0.2) - 0.9);
        assert_eq!(score_limited(&F, &o, 1, 0, 2), -0.5 - 0.1);
        assert_eq!(score_limited(&F, &o, 0, 0, 2), -(0.5 + 0.2) - 0.9);
        // boundary n_limit = n
        assert_eq!(score_limited(&F, &o, 1, 0, 3), 0.0);
        assert_eq!(score_limited(&F, &o, 0, 0, 3), -0.2 - 0.9);
    }

    #[test]
    fn scores_without_shared_prefix() {
        let o = running_order();
        assert_eq!(score_up(&F, &o, 2, 0), 0.0);
        assert_eq!(score_limited(&F, &o, 2, 0, 1), 0.0);
        // divergence feature 4 is inactive
        assert_eq!(score_sel(&F, &o, 2, 0), score_up(&F, &o, 2, 0));
        assert_eq!(score_up(&[0.0; 6], &o, 0, 0), 0.0);
    }

    #[test]
    fn n_limit_scan() {
        assert_eq!(select_n_limit(&[0.02, 0.06, 0.12], 0.075), 2);
        assert_eq!(select_n_limit(&[0.2, 0.3, 0.4], 0.1), 1);
        assert_eq!(select_n_limit(&[0.0, 0.0, 0.0], 0.05), 3);
    }

    #[test]
    fn quantile_rule() {
        assert_eq!(conformal_quantile(&[-0.5, -1.6, -1.0, -1.4], 0.25), -0.5);
        assert_eq!(conformal_quantile(&[-0.5, -1.6, -1.0, -1.4], 0.1), f64::INFINITY);
        assert_eq!(conformal_quantile(&[0.3; 10], 0.2), 0.3);
    }

    #[test]
    fn thr_and_aps() {
        let p = [20.0, 0.0, 0.0];
        assert!(thr_score(&p, 0) < 1e-8);
        let logits = [0.3, -1.2, 2.0, 0.5];
        let total: f64 = (0..4).map(|c| thr_score(&logits, c)).sum();
        assert!((total - 3.0).abs() < 1e-12);
        let uniform = [0.0; 4];
        for c in 0..4 {
            assert!((aps_score(&uniform, c) - (c + 1) as f64 / 4.0).abs() < 1e-12);
        }
        assert!((aps_score_randomized(&uniform, 2, 0.5) - 0.625).abs() < 1e-12);
    }

    fn toy_head() -> ModelHead<f64> {
        // features 0..6, three classes, n = 3
        ModelHead::new((0..6).collect(), 6, vec![vec![0, 1, 2], vec![0, 1, 3], vec![3, 4, 5]], vec![0.0; 6], vec![1.0; 6], vec![1.0; 6], 3)
            .unwrap()
    }

    #[test]
    fn calibration_and_prediction() {
        let head = toy_head();
        let cal = array![[0.9, 0.5, 0.2, 0.1, 0.0, 0.0], [0.9, 0.5, 0.1, 0.3, 0.0, 0.0], [0.0, 0.0, 0.0, 0.4, 0.9, 0.8]];
        let labels = [0, 1, 2];
        let cfg = ScoreConfig::default();
        let rec = calibrate(cal.view(), &labels, &head, 0.3, ScoreVariant::Up, &cfg).unwrap();
        assert_eq!(rec.n_cal, 3);
        // ceil(4 * 0.7) = 3rd smallest of {-1.6, -1.7, -2.1}
        assert_eq!(rec.quantile, -(0.9 + 0.5 + 0.2));
        assert!(rec.n_limit.is_none());
        let set = predict_set(&F, &head, &rec).unwrap();
        assert_eq!(set, vec![0]);

        let all = calibrate(cal.view(), &labels, &head, 0.1, ScoreVariant::Sel, &cfg).unwrap();
        assert!(all.quantile.is_infinite());
        assert_eq!(predict_set(&F, &head, &all).unwrap(), vec![0, 1, 2]);
        assert!(calibrate(cal.view(), &labels, &head, 1.0, ScoreVariant::Sel, &cfg).is_err());
        assert!(calibrate(cal.slice(ndarray::s![..0, ..]), &[], &head, 0.1, ScoreVariant::Sel, &cfg).is_err());
    }

    #[test]
    fn limited_sets_stay_inside_the_level() {
        let head = toy_head();
        let cal = array![[0.9, 0.5, 0.2, 0.1, 0.0, 0.0], [0.9, 0.5, 0.1, 0.3, 0.0, 0.0], [0.0, 0.0, 0.0, 0.4, 0.9, 0.8]];
        let cfg = ScoreConfig::default();
        let rec = calibrate(cal.view(), &[0, 1, 2], &head, 0.4, ScoreVariant::Limited, &cfg).unwrap();
        assert_eq!(rec.n_limit, Some(3));
        assert_eq!(rec.level_errors, vec![0.0, 0.0, 0.0]);
        assert!(rec.quantile < 0.0);
        let ctx = SampleContext::new(&F, &head, &cfg).unwrap();
        let set = predict_set(&F, &head, &rec).unwrap();
        let level = ctx.level_set(3);
        assert!(set.iter().all(|c| level.contains(c)));
    }

    #[test]
    fn evaluation_report() {
        let head = toy_head();
        let test = array![[0.9, 0.5, 0.2, 0.1, 0.0, 0.0], [0.0, 0.0, 0.0, 0.4, 0.9, 0.8]];
        let labels = [1, 2];
        let cfg = ScoreConfig::default();
        let rec = CalibrationRecord {
            variant: ScoreVariant::Thr,
            alpha: 0.1,
            n_limit: None,
            quantile: f64::INFINITY,
            cal_scores: vec![],
            n_cal: 0,
            level_errors: vec![],
            config: cfg,
        };
        let r = evaluate(test.view(), &labels, &head, &rec, None).unwrap();
        assert_eq!((r.coverage, r.mean_size), (1.0, 3.0));
        let last = r.levels.last().unwrap();
        // top-1 accuracy is 1/2 and Y^n is a singleton
        assert_eq!((last.coverage, last.mean_size), (0.5, 1.0));
        assert_eq!(r.levels[0].mean_size, 1.5);
    }

    #[test]
    fn record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rec = CalibrationRecord {
            variant: ScoreVariant::Aps,
            alpha: 0.1,
            n_limit: None,
            quantile: f64::INFINITY,
            cal_scores: vec![0.5, 0.25],
            n_cal: 2,
            level_errors: vec![],
            config: ScoreConfig {
                aps_seed: Some(3),
                ..ScoreConfig::default()
            },
        };
        let p = dir.path().join("rec.json");
        rec.save(&p).unwrap();
        assert_eq!(CalibrationRecord::<f64>::load(&p).unwrap(), rec);
    }
}
