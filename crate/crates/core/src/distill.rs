//! Temperature-based knowledge distillation.
//!
//! The student minimises, per example,
//!
//! ```text
//! L = H(p_teacher(T), p_student(T)) + λ · H(onehot(y), p_student(1))
//! ```
//!
//! with `p(T) = softmax(z / T)` and `H(p, q) = −Σ pᵢ ln qᵢ`. The soft term
//! carries no `T²` factor unless [`DistillConfig::rescale_soft_term`] is set.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureDataset, LabeledFeature};
use crate::eval::{evaluate, Distance, EvalReport, ProtocolConfig};
use crate::neural::{init_network, run_training, ExampleLoss, MlpNetwork, MlpSpec, TrainConfig, TrainLog};
use crate::{Error, Result};

/// Entries of a probability vector must sum to one within this tolerance.
const PROBABILITY_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub temperature: f64,
    pub lambda: f64,
    /// Multiply the soft term (and its gradient) by `T²`. Off by default.
    #[serde(default)]
    pub rescale_soft_term: bool,
    pub train: TrainConfig,
}

impl DistillConfig {
    pub fn new(temperature: f64, lambda: f64, train: TrainConfig) -> Self {
        Self {
            temperature,
            lambda,
            rescale_soft_term: false,
            train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 1.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be finite and >= 1, got {}",
                self.temperature
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        self.train.validate()
    }

    fn soft_scale(&self) -> f64 {
        if self.rescale_soft_term {
            self.temperature * self.temperature
        } else {
            1.0
        }
    }
}

/// `exp(zᵢ/T) / Σⱼ exp(zⱼ/T)`, computed after subtracting the max logit.
pub fn tempered_softmax(z: &[f64], temperature: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `ln softmax(z / T)`.
fn log_tempered_softmax(z: &[f64], temperature: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = z.iter().map(|&v| (v - max) / temperature).collect();
    let log_sum = scaled.iter().map(|s| s.exp()).sum::<f64>().ln();
    scaled.into_iter().map(|s| s - log_sum).collect()
}

/// Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(bad) = p.iter().find(|&&x| x.is_nan() || x < 0.0) {
        return Err(Error::Domain(format!("probability {bad} is negative or undefined")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(Error::Domain(format!("probabilities sum to {sum}, not 1")));
    }
    Ok(-p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>())
}

/// The two terms of the student loss for one example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillLoss {
    pub total: f64,
    /// Cross-entropy between tempered teacher and student distributions.
    pub soft: f64,
    /// `λ ·` cross-entropy against the hard label at `T = 1`.
    pub weighted_hard: f64,
}

/// Loss and gradient with respect to the student logits:
/// `(p_s(T) − p_t(T)) / T + λ · (p_s(1) − onehot)`. The teacher
/// distribution is a constant.
pub fn distillation_loss(
    teacher_logits: &[f64],
    student_logits: &[f64],
    label: usize,
    cfg: &DistillConfig,
) -> Result<(DistillLoss, Vec<f64>)> {
    if teacher_logits.len() != student_logits.len() {
        return Err(Error::shape(teacher_logits.len(), student_logits.len()));
    }
    if label >= student_logits.len() {
        return Err(Error::Usage(format!(
            "label {label} out of range for {} classes",
            student_logits.len()
        )));
    }
    let t = cfg.temperature;
    let scale = cfg.soft_scale();
    let p_teacher = tempered_softmax(teacher_logits, t);
    let p_student_t = tempered_softmax(student_logits, t);
    let log_student_t = log_tempered_softmax(student_logits, t);
    let p_student_1 = tempered_softmax(student_logits, 1.0);
    let log_student_1 = log_tempered_softmax(student_logits, 1.0);

    let soft = -scale * p_teacher.iter().zip(&log_student_t).map(|(p, lq)| p * lq).sum::<f64>();
    let weighted_hard = -cfg.lambda * log_student_1[label];
    let grad = (0..student_logits.len())
        .map(|i| {
            let hard = p_student_1[i] - if i == label { 1.0 } else { 0.0 };
            scale * (p_student_t[i] - p_teacher[i]) / t + cfg.lambda * hard
        })
        .collect();
    Ok((
        DistillLoss {
            total: soft + weighted_hard,
            soft,
            weighted_hard,
        },
        grad,
    ))
}

/// Raw teacher logits, one row per training record in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherOutputs {
    logits: DMatrix<f64>,
}

impl TeacherOutputs {
    pub fn len(&self) -> usize {
        self.logits.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.nrows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.logits.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.logits.row(i).iter().copied().collect()
    }

    pub fn logits(&self) -> &DMatrix<f64> {
        &self.logits
    }
}

/// One teacher forward pass; tempering is left to loss time so a single
/// cache serves every temperature.
pub fn cache_teacher_outputs(teacher: &MlpNetwork, inputs: &DMatrix<f64>) -> Result<TeacherOutputs> {
    Ok(TeacherOutputs {
        logits: teacher.logits(inputs)?,
    })
}

/// Training log of a distilled student, with both loss terms traced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillLog {
    pub train: TrainLog,
    /// Mean soft (distillation) term per epoch.
    pub epoch_distill_term: Vec<f64>,
    /// Mean `λ`-weighted cross-entropy term per epoch.
    pub epoch_weighted_ce_term: Vec<f64>,
}

/// Trains a fresh student (initialised from `cfg.train.seed`) on the
/// combined loss. Row `i` of `teacher` must belong to row `i` of `inputs`.
pub fn train_student_with_distillation(
    teacher: &TeacherOutputs,
    student_spec: &MlpSpec,
    inputs: &DMatrix<f64>,
    labels: &[usize],
    cfg: &DistillConfig,
) -> Result<(MlpNetwork, DistillLog)> {
    cfg.validate()?;
    if teacher.len() != inputs.nrows() || teacher.len() != labels.len() {
        return Err(Error::Usage(format!(
            "teacher cache has {} rows for {} training records",
            teacher.len(),
            inputs.nrows()
        )));
    }
    if teacher.num_classes() != student_spec.num_classes {
        return Err(Error::Usage(format!(
            "teacher has {} classes, student {}",
            teacher.num_classes(),
            student_spec.num_classes
        )));
    }
    let mut student = init_network(student_spec, cfg.train.seed)?;
    let out = run_training(&mut student, inputs, labels, &cfg.train, |logits, idx| {
        let (loss, grad) =
            distillation_loss(&teacher.row(idx), logits, labels[idx], cfg).expect("shapes validated before training");
        ExampleLoss {
            total: loss.total,
            parts: [loss.soft, loss.weighted_hard],
            grad,
        }
    })?;
    let log = DistillLog {
        train: out.log,
        epoch_distill_term: out.epoch_parts.iter().map(|p| p[0]).collect(),
        epoch_weighted_ce_term: out.epoch_parts.iter().map(|p| p[1]).collect(),
    };
    Ok((student, log))
}

// ---------------------------------------------------------------------------
// Sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub temperatures: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            temperatures: vec![1.0, 2.0, 3.0, 4.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            lambdas: vec![0.0001, 0.001, 0.01],
            seeds: vec![0],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.temperatures.is_empty() || self.lambdas.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        Ok(())
    }

    pub fn cells_per_seed(&self) -> usize {
        self.temperatures.len() * self.lambdas.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Distilled,
    StudentIndependent,
    Teacher,
}

impl Arm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Distilled => "distilled",
            Arm::StudentIndependent => "student_independent",
            Arm::Teacher => "teacher",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: Option<f64>,
    pub lambda: Option<f64>,
    pub seed: u64,
    pub rank1: f64,
    pub rank5: f64,
    pub map: f64,
    pub arm: Arm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Mean and sample standard deviation of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub arm: Arm,
    pub temperature: Option<f64>,
    pub lambda: Option<f64>,
    pub runs: usize,
    pub rank1: Stat,
    pub rank5: Stat,
    pub map: Stat,
}

pub const SWEEP_CSV_HEADER: &str = "T,lambda,seed,rank1,rank5,map,arm";

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let mut out = format!("{SWEEP_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:?},{:?},{:?},{}\n",
                opt(r.temperature),
                opt(r.lambda),
                r.seed,
                r.rank1,
                r.rank5,
                r.map,
                r.arm.as_str()
            ));
        }
        out
    }

    /// Per-(arm, T, λ) means and standard deviations over seeds, in order of
    /// first appearance.
    pub fn summary(&self) -> Vec<SummaryEntry> {
        let key = |r: &SweepRow| (r.arm, r.temperature.map(f64::to_bits), r.lambda.map(f64::to_bits));
        let mut order = Vec::new();
        let mut groups: BTreeMap<_, Vec<&SweepRow>> = BTreeMap::new();
        for r in &self.rows {
            let k = key(r);
            if !groups.contains_key(&k) {
                order.push(k);
            }
            groups.entry(k).or_default().push(r);
        }
        order
            .into_iter()
            .map(|k| {
                let rows = &groups[&k];
                let pick = |f: fn(&SweepRow) -> f64| Stat::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
                SummaryEntry {
                    arm: rows[0].arm,
                    temperature: rows[0].temperature,
                    lambda: rows[0].lambda,
                    runs: rows.len(),
                    rank1: pick(|r| r.rank1),
                    rank5: pick(|r| r.rank5),
                    map: pick(|r| r.map),
                }
            })
            .collect()
    }

    pub fn save(&self, csv_path: &Path, summary_path: &Path) -> Result<()> {
        fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        let json = serde_json::to_string_pretty(&self.summary())? + "\n";
        fs::write(summary_path, json).map_err(|e| Error::io(summary_path, e))
    }

    pub fn rows_for(&self, arm: Arm) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.arm == arm)
    }
}

/// Replaces each record's vector by the network's feature activations.
pub fn deep_features(net: &MlpNetwork, ds: &FeatureDataset) -> Result<FeatureDataset> {
    let x = ds.to_matrix();
    let f = net.extract_features(&x)?;
    let records = ds
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| LabeledFeature {
            id: r.id,
            camera: r.camera,
            vector: f.row(i).iter().copied().collect(),
        })
        .collect();
    FeatureDataset::new(records)
}

/// Euclidean retrieval on the network's features.
pub fn evaluate_network(
    net: &MlpNetwork,
    query: &FeatureDataset,
    gallery: &FeatureDataset,
    exclude_same_camera_positives: bool,
) -> Result<EvalReport> {
    let protocol = ProtocolConfig {
        exclude_same_camera_positives,
        distance: Distance::Euclidean,
    };
    evaluate(&deep_features(net, query)?, &deep_features(net, gallery)?, &protocol)
}

/// Inputs shared by every sweep cell.
pub struct SweepData<'a> {
    pub teacher: &'a MlpNetwork,
    pub student_spec: &'a MlpSpec,
    pub train_inputs: &'a DMatrix<f64>,
    pub train_labels: &'a [usize],
    pub query: &'a FeatureDataset,
    pub gallery: &'a FeatureDataset,
    pub exclude_same_camera_positives: bool,
}

enum Cell {
    Distilled { t: f64, lambda: f64, seed: u64 },
    Independent { seed: u64 },
    Teacher { seed: u64 },
}

/// Evaluates a distilled student for every `(T, λ, seed)` plus, per seed, an
/// independently trained student and the teacher. Cells run in parallel;
/// rows come out in grid order (per seed: T-major distilled cells, then the
/// two baselines). Each student trains with `train` but seeded by its cell.
pub fn run_sweep(data: &SweepData, sweep: &SweepSpec, train: &TrainConfig) -> Result<SweepReport> {
    sweep.validate()?;
    train.validate()?;
    let cache = cache_teacher_outputs(data.teacher, data.train_inputs)?;
    let mut cells = Vec::new();
    for &seed in &sweep.seeds {
        for &t in &sweep.temperatures {
            for &lambda in &sweep.lambdas {
                cells.push(Cell::Distilled { t, lambda, seed });
            }
        }
        cells.push(Cell::Independent { seed });
        cells.push(Cell::Teacher { seed });
    }
    let eval = |net: &MlpNetwork| evaluate_network(net, data.query, data.gallery, data.exclude_same_camera_positives);
    let rows = cells
        .par_iter()
        .map(|cell| {
            let (temperature, lambda, seed, arm, report) = match *cell {
                Cell::Distilled { t, lambda, seed } => {
                    let cfg = DistillConfig::new(t, lambda, TrainConfig { seed, ..train.clone() });
                    let (student, _) = train_student_with_distillation(
                        &cache,
                        data.student_spec,
                        data.train_inputs,
                        data.train_labels,
                        &cfg,
                    )?;
                    (Some(t), Some(lambda), seed, Arm::Distilled, eval(&student)?)
                }
                Cell::Independent { seed } => {
                    let cfg = TrainConfig { seed, ..train.clone() };
                    let (student, _) =
                        crate::neural::train_classifier(data.student_spec, data.train_inputs, data.train_labels, &cfg)?;
                    (None, None, seed, Arm::StudentIndependent, eval(&student)?)
                }
                Cell::Teacher { seed } => (None, None, seed, Arm::Teacher, eval(data.teacher)?),
            };
            Ok(SweepRow {
                temperature,
                lambda,
                seed,
                rank1: report.rank1,
                rank5: report.rank5,
                map: report.map,
                arm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::softmax;
    use approx::assert_abs_diff_eq;

    fn cfg(t: f64, lambda: f64) -> DistillConfig {
        DistillConfig::new(t, lambda, TrainConfig::default())
    }

    #[test]
    fn tempered_softmax_values() {
        for t in [1.0, 3.0, 30.0] {
            assert_eq!(tempered_softmax(&[0.0, 0.0], t), vec![0.5, 0.5]);
        }
        let p = tempered_softmax(&[2f64.ln(), 0.0], 1.0);
        assert_abs_diff_eq!(p[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 1.0 / 3.0, epsilon = 1e-15);
        let z = [3.0, -1.0, 0.5, 7.25];
        assert_eq!(tempered_softmax(&z, 1.0), softmax(&z));
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(entropy(&[0.25; 4]).unwrap(), 4f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(entropy(&[0.7311, 0.2689]).unwrap(), 0.5822, epsilon = 1e-4);
        assert!(matches!(entropy(&[1.2, -0.2]), Err(Error::Domain(_))));
        assert!(matches!(entropy(&[0.5, 0.4]), Err(Error::Domain(_))));
    }

    #[test]
    fn self_distillation_of_uniform_is_ln2() {
        for t in [1.0, 4.0, 20.0] {
            let (l, _) = distillation_loss(&[0.0, 0.0], &[0.0, 0.0], 0, &cfg(t, 0.0)).unwrap();
            assert_abs_diff_eq!(l.soft, 2f64.ln(), epsilon = 1e-15);
            assert_eq!(l.weighted_hard, 0.0);
        }
    }

    #[test]
    fn hard_term_vanishes_for_confident_student() {
        let z = [60.0, 0.0, 0.0];
        let (l, _) = distillation_loss(&z, &z, 0, &cfg(1.0, 0.01)).unwrap();
        assert!(l.weighted_hard < 1e-20);
    }

    #[test]
    fn loss_matches_direct_evaluation() {
        let zt = [0.3, -1.1, 2.0, 0.7, -0.4];
        let zs = [1.5, 0.2, -0.3, 0.9, 0.0];
        let c = cfg(3.0, 0.001);
        let (l, _) = distillation_loss(&zt, &zs, 2, &c).unwrap();
        // Direct: probabilities from exp without max-subtraction.
        let p = |z: &[f64], t: f64| {
            let e: Vec<f64> = z.iter().map(|v| (v / t).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let (pt, ps, ps1) = (p(&zt, 3.0), p(&zs, 3.0), p(&zs, 1.0));
        let soft: f64 = -(0..5).map(|i| pt[i] * ps[i].ln()).sum::<f64>();
        let direct = soft - 0.001 * ps1[2].ln();
        assert_abs_diff_eq!(l.total, direct, epsilon = 1e-6 * direct.abs());

        let scaled = DistillConfig {
            rescale_soft_term: true,
            ..c
        };
        let (ls, _) = distillation_loss(&zt, &zs, 2, &scaled).unwrap();
        assert_abs_diff_eq!(ls.soft, 9.0 * soft, epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.5, 0.0).validate().is_err());
        assert!(cfg(2.0, f64::NAN).validate().is_err());
        assert!(cfg(1.0, 0.01).validate().is_ok());
        assert!(distillation_loss(&[0.0; 3], &[0.0; 2], 0, &cfg(1.0, 0.0)).is_err());
    }

    #[test]
    fn sweep_row_counts() {
        assert_eq!(SweepSpec::default().cells_per_seed(), 30);
        let s = SweepSpec {
            temperatures: vec![],
            ..SweepSpec::default()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn sweep_csv_and_summary() {
        let report = SweepReport {
            rows: vec![
                SweepRow {
                    temperature: Some(3.0),
                    lambda: Some(0.0001),
                    seed: 0,
                    rank1: 0.5,
                    rank5: 0.75,
                    map: 0.25,
                    arm: Arm::Distilled,
                },
                SweepRow {
                    temperature: Some(3.0),
                    lambda: Some(0.0001),
                    seed: 1,
                    rank1: 0.7,
                    rank5: 0.75,
                    map: 0.35,
                    arm: Arm::Distilled,
                },
                SweepRow {
                    temperature: None,
                    lambda: None,
                    seed: 0,
                    rank1: 0.4,
                    rank5: 0.6,
                    map: 0.2,
                    arm: Arm::Teacher,
                },
            ],
        };
        let csv = report.to_csv();
        assert!(csv.starts_with("T,lambda,seed,rank1,rank5,map,arm\n3.0,0.0001,0,0.5,0.75,0.25,distilled\n"));
        assert!(csv.ends_with(",,0,0.4,0.6,0.2,teacher\n"));
        let s = report.summary();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].runs, 2);
        assert_abs_diff_eq!(s[0].rank1.mean, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(s[0].rank1.std, 0.02f64.sqrt(), epsilon = 1e-12);
    }
}
