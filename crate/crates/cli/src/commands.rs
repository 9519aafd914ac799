use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use slicegan::classifier::{predict_many, train_classifier, ClassifierTrainConfig, LabeledSample};
use slicegan::gan::{loss_log_name, synthesize_stack, train_gan_bank, write_snapshots, GanBank, GanTrainConfig};
use slicegan::harness::{
    compute_metrics, log_line, parse_log, plan_augmentation, reference_test_counts, render_report, run_sweep_with,
    split_dataset, ConfusionMatrix, ExperimentReport, Prediction, ReportFormat, SplitDataset, Subject,
};
use slicegan::network::checkpoint;
use slicegan::volume::manifest::{self, ManifestEntry};
use slicegan::volume::{nifti, pgm, resize_stack, SliceStack};
use slicegan::{Label, Provenance};
use slicegan_tensor::rng::derive_seed;

use crate::config::{write_manifest, RunConfig};
use crate::data::{self, stream, STACK_SUFFIX};

fn parse_label(s: &str) -> Result<Label, String> {
    s.parse().map_err(|_| format!("unknown class {s:?}, expected normal or bipolar"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Middle slice of a stack as a grayscale preview.
fn write_preview(path: &Path, stack: &SliceStack) -> Result<()> {
    let (h, w) = stack.side;
    Ok(pgm::write(path, &stack.slices[stack.len() / 2], h, w)?)
}

fn split(cfg: &RunConfig, subjects: Vec<Subject>) -> Result<SplitDataset> {
    let totals = (
        subjects.iter().filter(|s| s.label == Label::Normal).count(),
        subjects.iter().filter(|s| s.label == Label::Bipolar).count(),
    );
    let data = split_dataset(subjects, reference_test_counts(totals), derive_seed(cfg.seed, &[stream::SPLIT]))?;
    log::info!("split: train {:?}, test {:?}", data.train_counts(), data.test_counts());
    Ok(data)
}

fn gan_config(cfg: &RunConfig) -> GanTrainConfig {
    GanTrainConfig {
        seed: derive_seed(cfg.seed, &[stream::GAN]),
        ..cfg.gan.clone()
    }
}

/// Trains the bank on the training pool and writes checkpoints, snapshots
/// and loss logs under the output directory.
fn build_bank(cfg: &RunConfig, data: &SplitDataset) -> Result<GanBank> {
    let gan = gan_config(cfg);
    log::info!(
        "training {} GAN pairs for {} epochs",
        2 * cfg.geometry.band,
        gan.trained_epochs()
    );
    let bank = train_gan_bank(&data.train_gan_stacks(), &gan, cfg.jobs)?;
    let bank_dir = cfg.out.join("bank");
    bank.save(&bank_dir)?;
    let snap_dir = cfg.out.join("snapshots");
    create_dir(&snap_dir)?;
    for (&(label, d), pair) in &bank.pairs {
        let log = snap_dir.join(loss_log_name(label, d));
        if log.exists() {
            std::fs::remove_file(&log).with_context(|| format!("replacing {}", log.display()))?;
        }
        write_snapshots(pair, &snap_dir)?;
    }
    println!("bank: {}", bank_dir.display());
    println!("snapshots: {}", snap_dir.display());
    Ok(bank)
}

fn load_bank(dir: &Path) -> Result<GanBank> {
    GanBank::load(dir).with_context(|| format!("loading GAN bank {}", dir.display()))
}

fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["sample_id", "true_label", "p_bipolar"])?;
    for p in predictions {
        w.write_record([p.sample_id.as_str(), p.truth.as_str(), &p.p_bipolar.to_string()])?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct PhantomArgs {
    /// Total subjects, divided between the classes in the configured
    /// proportion.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

pub fn phantom(mut cfg: RunConfig, args: &PhantomArgs) -> Result<()> {
    if let Some(count) = args.count {
        let (n, b) = (cfg.dataset.normal as f64, cfg.dataset.bipolar as f64);
        let normal = (count as f64 * n / (n + b)).round() as usize;
        cfg.dataset.normal = normal;
        cfg.dataset.bipolar = count - normal;
    }
    write_manifest(&cfg, "phantom", args)?;
    let dir = cfg.out.join("phantoms");
    create_dir(&dir)?;
    let mut entries = Vec::new();
    for (i, label) in data::phantom_labels(cfg.dataset.normal, cfg.dataset.bipolar).into_iter().enumerate() {
        let volume = data::render_phantom(&cfg, i, label)?;
        let name = format!("{}.nii", data::phantom_id(i));
        write_file(&dir.join(&name), nifti::write_nifti(&volume))?;
        entries.push(ManifestEntry {
            path: name.into(),
            label: Some(label),
            provenance: Provenance::Synthetic,
        });
    }
    let path = dir.join("manifest.tsv");
    manifest::write(&path, &entries)?;
    println!("{} phantoms: {}", entries.len(), path.display());
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct InputArgs {
    /// Dataset listing (path, label, provenance); phantoms when omitted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
}

pub fn preprocess(cfg: RunConfig, args: &InputArgs) -> Result<()> {
    write_manifest(&cfg, "preprocess", args)?;
    let subjects = data::load_subjects(&cfg, args.manifest.as_deref())?;
    let dir = cfg.out.join("stacks");
    create_dir(&dir)?;
    let mut entries = Vec::new();
    for s in &subjects {
        let name = format!("{}{STACK_SUFFIX}", s.id);
        data::write_stack(&dir.join(&name), &s.gan_stack)?;
        write_preview(&dir.join(format!("{}.pgm", s.id)), &s.gan_stack)?;
        entries.push(ManifestEntry {
            path: name.into(),
            label: Some(s.label),
            provenance: s.provenance,
        });
    }
    let path = dir.join("manifest.tsv");
    manifest::write(&path, &entries)?;
    println!("{} stacks: {}", entries.len(), path.display());
    Ok(())
}

pub fn train_gan(cfg: RunConfig, args: &InputArgs) -> Result<()> {
    write_manifest(&cfg, "train-gan", args)?;
    let data = split(&cfg, data::load_subjects(&cfg, args.manifest.as_deref())?)?;
    build_bank(&cfg, &data)?;
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct SynthesizeArgs {
    /// Directory written by train-gan; defaults to `<out>/bank`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank: Option<PathBuf>,
    #[arg(long, value_parser = parse_label)]
    pub class: Label,
    #[arg(long)]
    pub count: usize,
}

pub fn synthesize(cfg: RunConfig, args: &SynthesizeArgs) -> Result<()> {
    write_manifest(&cfg, "synthesize", args)?;
    let bank = load_bank(&args.bank.clone().unwrap_or_else(|| cfg.out.join("bank")))?;
    let dir = cfg.out.join("generated");
    create_dir(&dir)?;
    let mut entries = Vec::new();
    for k in 0..args.count {
        let seed = derive_seed(cfg.seed, &[stream::SYNTHESIZE, args.class.class_index() as u64, k as u64]);
        let stack = synthesize_stack(&bank, args.class, seed)?;
        let id = format!("gen-{}-{k:04}", args.class);
        let name = format!("{id}{STACK_SUFFIX}");
        data::write_stack(&dir.join(&name), &stack)?;
        write_preview(&dir.join(format!("{id}.pgm")), &stack)?;
        entries.push(ManifestEntry {
            path: name.into(),
            label: Some(args.class),
            provenance: Provenance::Generated,
        });
    }
    let path = dir.join("manifest.tsv");
    manifest::write(&path, &entries)?;
    println!("{} generated stacks: {}", entries.len(), path.display());
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct TrainClassifierArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Augmentation ratio; above zero a GAN bank is required.
    #[arg(long, default_value_t = 0.0)]
    pub ratio: f64,
    /// Directory written by train-gan; defaults to `<out>/bank`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank: Option<PathBuf>,
}

#[derive(Serialize)]
struct ClassifierSummary {
    ratio: f64,
    train_size: usize,
    generated_in_train: usize,
    test_confusion: ConfusionMatrix,
    test_metrics: slicegan::harness::Metrics,
}

pub fn train_classifier_cmd(cfg: RunConfig, args: &TrainClassifierArgs) -> Result<()> {
    write_manifest(&cfg, "train-classifier", args)?;
    let data = split(&cfg, data::load_subjects(&cfg, args.input.manifest.as_deref())?)?;
    let plan = plan_augmentation(args.ratio, data.class_totals(), data.train_counts(), data.test_counts())?;
    for w in &plan.warnings {
        log::warn!("{w}");
    }
    let mut fit = data.train_samples();
    let real = fit.len();
    if plan.normal.generated_added + plan.bipolar.generated_added > 0 {
        let bank = load_bank(&args.bank.clone().unwrap_or_else(|| cfg.out.join("bank")))?;
        let side = cfg.geometry.classifier_side;
        for (label, n) in [(Label::Normal, plan.normal.generated_added), (Label::Bipolar, plan.bipolar.generated_added)] {
            for k in 0..n {
                let seed = derive_seed(cfg.seed, &[stream::SYNTHESIZE, label.class_index() as u64, k as u64]);
                let stack = resize_stack(&synthesize_stack(&bank, label, seed)?, side)?;
                fit.push(LabeledSample::from_stack(format!("gen-{label}-{k:04}"), &stack)?);
            }
        }
    }
    let cls = ClassifierTrainConfig {
        seed: derive_seed(cfg.seed, &[stream::CLASSIFIER]),
        ..cfg.sweep.classifier.clone()
    };
    let model = train_classifier(&fit, &cls)?;
    let path = cfg.out.join("classifier.ckpt");
    checkpoint::save(&model, &path)?;

    let test = data.test_samples();
    let probs = predict_many(&model, &test)?;
    let truth: Vec<Label> = test.iter().map(|s| s.label).collect();
    let predicted: Vec<Label> = probs
        .iter()
        .map(|p| if p[1] > p[0] { Label::Bipolar } else { Label::Normal })
        .collect();
    let predictions: Vec<Prediction> = test
        .iter()
        .zip(&probs)
        .map(|(s, p)| Prediction {
            sample_id: s.id.clone(),
            truth: s.label,
            p_bipolar: p[1],
        })
        .collect();
    write_predictions(&cfg.out.join("classifier_predictions.csv"), &predictions)?;
    let confusion = ConfusionMatrix::from_predictions(&truth, &predicted);
    let summary = ClassifierSummary {
        ratio: args.ratio,
        train_size: fit.len(),
        generated_in_train: fit.len() - real,
        test_confusion: confusion,
        test_metrics: compute_metrics(&confusion),
    };
    write_file(&cfg.out.join("classifier_metrics.toml"), toml::to_string(&summary)?)?;
    println!(
        "classifier: {} (test accuracy {})",
        path.display(),
        slicegan::harness::format_percent(summary.test_metrics.accuracy)
    );
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Comma-separated augmentation ratios, e.g. `0,0.25,0.5`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    /// Reuse a bank written by train-gan instead of training one.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank: Option<PathBuf>,
}

fn ratio_file_stem(ratio: f64) -> String {
    format!("ratio-{ratio}")
}

fn write_reports(out: &Path, report: &ExperimentReport) -> Result<()> {
    write_file(&out.join("report.csv"), render_report(report, ReportFormat::Csv)?)?;
    write_file(&out.join("report.md"), render_report(report, ReportFormat::Markdown)?)?;
    Ok(())
}

pub fn sweep(mut cfg: RunConfig, args: &SweepArgs) -> Result<()> {
    if let Some(ratios) = &args.ratios {
        cfg.sweep.ratios = ratios.clone();
        cfg.validate()?;
    }
    write_manifest(&cfg, "sweep", args)?;
    let data = split(&cfg, data::load_subjects(&cfg, args.input.manifest.as_deref())?)?;
    let bank = if cfg.sweep.ratios.iter().any(|&r| r > 0.0) {
        Some(match &args.bank {
            Some(dir) => load_bank(dir)?,
            None => build_bank(&cfg, &data)?,
        })
    } else {
        None
    };
    let log_path = cfg.out.join("experiment.jsonl");
    let mut log_file = std::fs::File::create(&log_path).with_context(|| format!("writing {}", log_path.display()))?;
    let pred_dir = cfg.out.join("predictions");
    create_dir(&pred_dir)?;
    let report = run_sweep_with(&data, bank.as_ref(), &cfg.sweep, cfg.seed, cfg.jobs, |row| {
        for w in &row.plan.warnings {
            log::warn!("{w}");
        }
        log_file.write_all(log_line(row)?.as_bytes())
            .map_err(|e| slicegan::Error::io(&log_path, e))?;
        let stem = ratio_file_stem(row.ratio);
        let dump = |name: String, p: &[Prediction]| {
            write_predictions(&pred_dir.join(name), p).map_err(|e| slicegan::Error::Config(format!("{e:#}")))
        };
        for f in &row.folds {
            dump(format!("{stem}_fold{}.csv", f.fold), &f.predictions)?;
        }
        dump(format!("{stem}_test.csv"), &row.test_predictions)?;
        Ok(())
    })?;
    write_reports(&cfg.out, &report)?;
    println!("{} rows: {}", report.rows.len(), log_path.display());
    println!("report: {}", cfg.out.join("report.md").display());
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// Experiment log written by sweep; defaults to `<out>/experiment.jsonl`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
}

pub fn report(cfg: RunConfig, args: &ReportArgs) -> Result<()> {
    let path = args.log.clone().unwrap_or_else(|| cfg.out.join("experiment.jsonl"));
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report = parse_log(&text).with_context(|| format!("parsing {}", path.display()))?;
    if report.rows.is_empty() {
        bail!("{} holds no experiment rows", path.display());
    }
    write_manifest(&cfg, "report", args)?;
    write_reports(&cfg.out, &report)?;
    print!("{}", render_report(&report, ReportFormat::Markdown)?);
    Ok(())
}
