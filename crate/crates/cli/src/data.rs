//! Subjects from phantoms or a manifest, and the on-disk stack format.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use slicegan::classifier::LabeledSample;
use slicegan::harness::Subject;
use slicegan::volume::{manifest, nifti, resize_stack, Phantom, SliceStack, Volume};
use slicegan::{Label, Provenance};
use slicegan_tensor::rng::derive_seed;

use crate::config::RunConfig;

/// Stream tags for seeds derived from the run seed.
pub mod stream {
    pub const PHANTOM: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const GAN: u64 = 3;
    pub const SYNTHESIZE: u64 = 4;
    pub const CLASSIFIER: u64 = 5;
}

/// Suffix of preprocessed GAN-side stacks, stored as NIfTI volumes.
pub const STACK_SUFFIX: &str = ".stack.nii";

/// Labels of a phantom cohort: normals first, then bipolars.
pub fn phantom_labels(normal: usize, bipolar: usize) -> Vec<Label> {
    std::iter::repeat(Label::Normal)
        .take(normal)
        .chain(std::iter::repeat(Label::Bipolar).take(bipolar))
        .collect()
}

pub fn phantom_id(i: usize) -> String {
    format!("sub-{i:04}")
}

/// Renders subject `i` of the configured phantom cohort.
pub fn render_phantom(cfg: &RunConfig, i: usize, label: Label) -> Result<Volume> {
    let phantom = Phantom::new(cfg.geometry.volume, cfg.phantom.clone())?;
    Ok(phantom.render(derive_seed(cfg.seed, &[stream::PHANTOM, i as u64]), label))
}

/// Every subject of the run: from `manifest` when given, else phantoms.
pub fn load_subjects(cfg: &RunConfig, manifest: Option<&Path>) -> Result<Vec<Subject>> {
    match manifest.or(cfg.dataset.manifest.as_deref()) {
        Some(path) => load_manifest(cfg, path),
        None => phantom_labels(cfg.dataset.normal, cfg.dataset.bipolar)
            .into_iter()
            .enumerate()
            .map(|(i, label)| {
                let volume = render_phantom(cfg, i, label)?;
                Ok(Subject::from_volume(phantom_id(i), &volume, &cfg.geometry)?)
            })
            .collect(),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Decodes a `.nii` file or a `.hdr`/`.img` pair. Synthetic volumes are
/// already on the working scale and are kept as stored; anything else is
/// normalized to `[-1, 1]`.
pub fn read_volume(path: &Path, label: Option<Label>, provenance: Provenance) -> Result<Volume> {
    let raw = if path.extension().is_some_and(|e| e == "hdr") {
        let img = path.with_extension("img");
        nifti::read_nifti_pair(&read_bytes(path)?, &read_bytes(&img)?)
    } else {
        nifti::read_nifti(&read_bytes(path)?)
    }
    .with_context(|| format!("decoding {}", path.display()))?;
    let mut volume = if provenance == Provenance::Real {
        raw.into_volume()
    } else {
        Volume::new(raw.header.dims(), raw.values, None, provenance)?
    };
    volume.label = label;
    volume.provenance = provenance;
    Ok(volume)
}

fn entry_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    for suffix in [STACK_SUFFIX, ".nii", ".hdr"] {
        if let Some(stem) = name.strip_suffix(suffix) {
            return stem.to_string();
        }
    }
    name
}

/// Resolves manifest paths relative to the manifest's directory.
pub fn resolve_entry(manifest_path: &Path, entry: &Path) -> PathBuf {
    if entry.is_absolute() {
        entry.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or(Path::new(".")).join(entry)
    }
}

fn load_manifest(cfg: &RunConfig, path: &Path) -> Result<Vec<Subject>> {
    let entries = manifest::read(path)?;
    if entries.is_empty() {
        bail!("manifest {} lists no subjects", path.display());
    }
    entries
        .iter()
        .map(|e| {
            let file = resolve_entry(path, &e.path);
            let label = e.label.ok_or_else(|| anyhow!("{} has no label in {}", file.display(), path.display()))?;
            if e.provenance.is_generated() {
                bail!("{} is generated; only real or synthetic subjects form the dataset", file.display());
            }
            let id = entry_id(&file);
            if file.to_string_lossy().ends_with(STACK_SUFFIX) {
                let stack = read_stack(&file, label, e.provenance, cfg)?;
                let sample = LabeledSample::from_stack(id.clone(), &resize_stack(&stack, cfg.geometry.classifier_side)?)?;
                Ok(Subject {
                    id,
                    label,
                    provenance: e.provenance,
                    gan_stack: stack,
                    sample,
                })
            } else {
                let volume = read_volume(&file, Some(label), e.provenance)?;
                Subject::from_volume(id, &volume, &cfg.geometry).with_context(|| format!("preprocessing {}", file.display()))
            }
        })
        .collect()
}

/// Band positions of a preprocessed stack under `cfg`'s geometry.
fn band_indices(cfg: &RunConfig) -> Vec<usize> {
    let g = &cfg.geometry;
    let depth = g.volume[2] / g.factor;
    let start = (depth - g.band) / 2;
    (start..start + g.band).collect()
}

/// Stores a stack as a `rows x cols x depth` float32 image.
pub fn write_stack(path: &Path, stack: &SliceStack) -> Result<()> {
    let (h, w) = stack.side;
    let volume = Volume::new([h, w, stack.len()], stack.to_volume_layout(), stack.label, stack.provenance)?;
    std::fs::write(path, nifti::write_nifti(&volume)).with_context(|| format!("writing {}", path.display()))
}

pub fn read_stack(path: &Path, label: Label, provenance: Provenance, cfg: &RunConfig) -> Result<SliceStack> {
    let raw = nifti::read_nifti(&read_bytes(path)?).with_context(|| format!("decoding {}", path.display()))?;
    let [h, w, d] = raw.header.dims();
    let side = cfg.geometry.gan_side();
    if (h, w, d) != (side, side, cfg.geometry.band) {
        bail!(
            "{} holds a {h}x{w}x{d} stack, the geometry needs {side}x{side}x{}",
            path.display(),
            cfg.geometry.band
        );
    }
    let mut stack = SliceStack::from_volume_layout((h, w), d, &raw.values, Some(label), provenance)?;
    stack.depth_indices = band_indices(cfg);
    Ok(stack)
}
