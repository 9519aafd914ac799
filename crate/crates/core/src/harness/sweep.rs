use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slicegan_tensor::rng::derive_seed;

use super::dataset::SplitDataset;
use super::metrics::{compute_metrics, mean_metrics, ConfusionMatrix, Metrics};
use super::plan::{plan_augmentation, AugmentationPlan};
use crate::classifier::{make_folds, predict_many, train_classifier, ClassifierTrainConfig, LabeledSample};
use crate::error::{Error, Result};
use crate::gan::{synthesize_stack, GanBank};
use crate::labels::{Label, Provenance};
use crate::volume::resize_stack;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub ratios: Vec<f64>,
    pub folds: usize,
    /// Run k-fold cross-validation over the training pool for every ratio.
    pub cross_validate: bool,
    pub classifier: ClassifierTrainConfig,
}

impl SweepConfig {
    pub fn full() -> Self {
        SweepConfig {
            ratios: vec![0.0, 0.25, 0.5, 0.75, 1.0, 3.0],
            folds: 5,
            cross_validate: true,
            classifier: ClassifierTrainConfig::full(),
        }
    }

    pub fn desk() -> Self {
        SweepConfig {
            classifier: ClassifierTrainConfig::desk(),
            ..SweepConfig::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() {
            return Err(Error::Config("at least one augmentation ratio is required".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Config(format!("augmentation ratio {r} must be non-negative")));
        }
        if self.folds < 2 {
            return Err(Error::Config("cross-validation needs at least 2 folds".into()));
        }
        self.classifier.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub id: String,
    pub label: Label,
    pub provenance: Provenance,
}

impl SampleRef {
    fn of(s: &LabeledSample) -> Self {
        SampleRef {
            id: s.id.clone(),
            label: s.label,
            provenance: s.provenance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub truth: Label,
    pub p_bipolar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub generated_in_train: usize,
    pub validation: Vec<SampleRef>,
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<Prediction>,
}

/// Outcome of one augmentation ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub seed: u64,
    pub plan: AugmentationPlan,
    pub generated_ids: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub cv_metrics: Metrics,
    pub test: Vec<SampleRef>,
    pub test_confusion: ConfusionMatrix,
    pub test_metrics: Metrics,
    pub test_predictions: Vec<Prediction>,
    /// Not part of any reproducibility comparison.
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    /// Ascending by ratio.
    pub rows: Vec<SweepRow>,
}

// Stream tags for seed derivation.
const FOLDS: u64 = 1;
const GENERATE: u64 = 2;
const CLASSIFIER: u64 = 3;

fn evaluate(model: &crate::network::ModelGraph, samples: &[LabeledSample]) -> Result<(ConfusionMatrix, Vec<Prediction>)> {
    let probs = predict_many(model, samples)?;
    let truth: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let predicted: Vec<Label> = probs
        .iter()
        .map(|p| if p[1] > p[0] { Label::Bipolar } else { Label::Normal })
        .collect();
    let predictions = samples
        .iter()
        .zip(&probs)
        .map(|(s, p)| Prediction {
            sample_id: s.id.clone(),
            truth: s.label,
            p_bipolar: p[1],
        })
        .collect();
    Ok((ConfusionMatrix::from_predictions(&truth, &predicted), predictions))
}

fn generate_pool(bank: &GanBank, label: Label, count: usize, side: usize, seed: u64) -> Result<Vec<LabeledSample>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let stack = synthesize_stack(bank, label, derive_seed(seed, &[GENERATE, label.tag(), k as u64]))?;
            LabeledSample::from_stack(format!("gen-{label}-{k:04}"), &resize_stack(&stack, side)?)
        })
        .collect()
}

/// Runs every ratio on the fixed split. Generated samples join the training
/// side of every fold and of the final model; validation folds and the test
/// set hold real subjects only. `on_row` sees each row as it completes.
pub fn run_sweep_with(
    data: &SplitDataset,
    bank: Option<&GanBank>,
    cfg: &SweepConfig,
    seed: u64,
    jobs: usize,
    mut on_row: impl FnMut(&SweepRow) -> Result<()>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut ratios = cfg.ratios.clone();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();
    let train = data.train_samples();
    let test = data.test_samples();
    if let Some(s) = train.iter().chain(&test).find(|s| s.provenance.is_generated()) {
        return Err(Error::contract(format!("generated sample {} in the real split", s.id)));
    }
    let plans = ratios
        .iter()
        .map(|&r| plan_augmentation(r, data.class_totals(), data.train_counts(), data.test_counts()))
        .collect::<Result<Vec<_>>>()?;
    let side = cfg.classifier.arch.side;
    let need = |f: fn(&AugmentationPlan) -> usize| plans.iter().map(f).max().unwrap_or(0);
    let (need_n, need_b) = (need(|p| p.normal.generated_added), need(|p| p.bipolar.generated_added));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let (gen_normal, gen_bipolar) = if need_n + need_b > 0 {
        let bank = bank.ok_or_else(|| Error::contract("augmentation ratios above zero need a GAN bank"))?;
        for label in Label::ALL {
            if !bank.is_complete(label) {
                return Err(Error::contract(format!("GAN bank is incomplete for class {label}")));
            }
        }
        if bank.arch.image_side != 2 * side {
            return Err(Error::Shape(format!(
                "bank generates {0}x{0} slices, the classifier needs {1}x{1} from {2}x{2}",
                bank.arch.image_side,
                side,
                2 * side
            )));
        }
        pool.install(|| -> Result<_> {
            Ok((
                generate_pool(bank, Label::Normal, need_n, side, seed)?,
                generate_pool(bank, Label::Bipolar, need_b, side, seed)?,
            ))
        })?
    } else {
        (Vec::new(), Vec::new())
    };

    let plan = if cfg.cross_validate {
        Some(make_folds(&train, cfg.folds, derive_seed(seed, &[FOLDS]))?)
    } else {
        None
    };
    let test_refs: Vec<SampleRef> = test.iter().map(SampleRef::of).collect();

    let mut rows = Vec::with_capacity(ratios.len());
    for aug in plans {
        let started = Instant::now();
        let generated: Vec<LabeledSample> = gen_normal[..aug.normal.generated_added]
            .iter()
            .chain(&gen_bipolar[..aug.bipolar.generated_added])
            .cloned()
            .collect();
        // Job `k` is the final model; jobs below it are the folds.
        let fold_count = plan.as_ref().map_or(0, |p| p.k);
        let results = pool.install(|| {
            (0..=fold_count)
                .into_par_iter()
                .map(|job| -> Result<(Option<FoldResult>, ConfusionMatrix, Vec<Prediction>)> {
                    let (fit, eval): (Vec<LabeledSample>, Vec<LabeledSample>) = match &plan {
                        Some(p) if job < fold_count => {
                            let (tr, va) = p.split(job);
                            (
                                tr.iter().map(|&i| train[i].clone()).collect(),
                                va.iter().map(|&i| train[i].clone()).collect(),
                            )
                        }
                        _ => (train.clone(), test.clone()),
                    };
                    let real_count = fit.len();
                    let fit: Vec<LabeledSample> = fit.into_iter().chain(generated.iter().cloned()).collect();
                    let cls_cfg = ClassifierTrainConfig {
                        seed: derive_seed(seed, &[CLASSIFIER, job as u64]),
                        ..cfg.classifier.clone()
                    };
                    let model = train_classifier(&fit, &cls_cfg)?;
                    let (confusion, predictions) = evaluate(&model, &eval)?;
                    let fold = (job < fold_count).then(|| FoldResult {
                        fold: job,
                        train_size: fit.len(),
                        generated_in_train: fit.len() - real_count,
                        validation: eval.iter().map(SampleRef::of).collect(),
                        confusion,
                        predictions: predictions.clone(),
                    });
                    Ok((fold, confusion, predictions))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut folds = Vec::new();
        let mut final_result = None;
        for (fold, confusion, predictions) in results {
            match fold {
                Some(f) => folds.push(f),
                None => final_result = Some((confusion, predictions)),
            }
        }
        let (test_confusion, test_predictions) = final_result.expect("final model job always runs");
        let fold_metrics: Vec<Metrics> = folds.iter().map(|f| compute_metrics(&f.confusion)).collect();
        let row = SweepRow {
            ratio: aug.ratio,
            seed,
            generated_ids: generated.iter().map(|s| s.id.clone()).collect(),
            plan: aug,
            cv_metrics: mean_metrics(&fold_metrics),
            folds,
            test: test_refs.clone(),
            test_metrics: compute_metrics(&test_confusion),
            test_confusion,
            test_predictions,
            wall_time_secs: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "ratio {}: test accuracy {:?}",
            row.ratio,
            row.test_metrics.accuracy
        );
        on_row(&row)?;
        rows.push(row);
    }
    Ok(ExperimentReport { seed, rows })
}

pub fn run_sweep(
    data: &SplitDataset,
    bank: Option<&GanBank>,
    cfg: &SweepConfig,
    seed: u64,
    jobs: usize,
) -> Result<ExperimentReport> {
    run_sweep_with(data, bank, cfg, seed, jobs, |_| Ok(()))
}
