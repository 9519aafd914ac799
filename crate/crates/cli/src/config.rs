//! Run configuration: preset defaults, overridden by a TOML file, overridden
//! by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use slicegan::gan::GanTrainConfig;
use slicegan::harness::SweepConfig;
use slicegan::volume::{Geometry, PhantomParams};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SLICEGAN_OUT";
const DEFAULT_OUT: &str = "slicegan-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-size geometry and architectures.
    Full,
    /// 16x16 slices and small networks; runs in minutes.
    Desk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Phantom subjects per class when no manifest is given.
    pub normal: usize,
    pub bipolar: usize,
    /// Tab-separated listing of volumes or stacks to use instead of phantoms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub dataset: DatasetConfig,
    pub geometry: Geometry,
    pub phantom: PhantomParams,
    pub gan: GanTrainConfig,
    pub sweep: SweepConfig,
}

/// Values given on the command line; each one beats the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let out = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from);
        let (normal, bipolar) = match preset {
            Preset::Full => (123, 49),
            Preset::Desk => (40, 24),
        };
        let (geometry, gan, sweep) = match preset {
            Preset::Full => (Geometry::full(), GanTrainConfig::full(), SweepConfig::full()),
            Preset::Desk => (Geometry::desk(), GanTrainConfig::desk(), SweepConfig::desk()),
        };
        RunConfig {
            preset,
            seed: 0,
            out,
            jobs: 1,
            dataset: DatasetConfig {
                normal,
                bipolar,
                manifest: None,
            },
            geometry,
            phantom: PhantomParams::default(),
            gan,
            sweep,
        }
    }

    /// Preset, then `file`, then `overrides`. The preset may also be chosen
    /// inside the file.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let file_value = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                let value: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
                Some(value)
            }
            None => None,
        };
        let file_preset = match file_value.as_ref().and_then(|t| t.get("preset")) {
            Some(v) => Some(v.clone().try_into::<Preset>().context("config key `preset`")?),
            None => None,
        };
        let preset = overrides.preset.or(file_preset).unwrap_or(Preset::Desk);
        let mut base = toml::Table::try_from(RunConfig::preset(preset)).context("serializing preset")?;
        if let Some(file) = file_value {
            merge(&mut base, file);
        }
        base.insert("preset".into(), toml::Value::try_from(preset)?);
        let mut cfg: RunConfig = toml::Value::Table(base).try_into().map_err(|e| match file {
            Some(p) => anyhow::anyhow!("invalid config {}: {e}", p.display()),
            None => anyhow::anyhow!("invalid config: {e}"),
        })?;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out = out.clone();
        }
        if let Some(jobs) = overrides.jobs {
            cfg.jobs = jobs;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.gan.validate()?;
        self.sweep.validate()?;
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        let g = &self.geometry;
        if self.gan.arch.image_side != g.gan_side() {
            bail!(
                "gan.arch.image_side is {} but the geometry yields {1}x{1} slices",
                self.gan.arch.image_side,
                g.gan_side()
            );
        }
        let arch = &self.sweep.classifier.arch;
        if arch.side != g.classifier_side || arch.depth != g.band {
            bail!(
                "classifier input {}x{}x{} does not match geometry {}x{}x{}",
                arch.side,
                arch.side,
                arch.depth,
                g.classifier_side,
                g.classifier_side,
                g.band
            );
        }
        Ok(())
    }
}

/// Recursive table merge; `top` wins on scalar and array conflicts.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Contents of the per-command reproducibility record.
#[derive(Serialize)]
pub struct RunManifest<'a, O: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub options: &'a O,
    pub config: &'a RunConfig,
}

/// Writes `<out>/<command>.manifest.toml`.
pub fn write_manifest<O: Serialize>(cfg: &RunConfig, command: &str, options: &O) -> Result<PathBuf> {
    let record = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        options,
        config: cfg,
    };
    let text = toml::to_string(&record).context("serializing run manifest")?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let path = cfg.out.join(format!("{command}.manifest.toml"));
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for p in [Preset::Full, Preset::Desk] {
            let cfg = RunConfig::preset(p);
            cfg.validate().unwrap();
            let text = toml::to_string(&cfg).unwrap();
            let back: RunConfig = toml::from_str(&text).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn file_overrides_preset_and_flags_override_file() {
        let f = write_temp("seed = 5\njobs = 3\n[gan]\nmax_epochs = 300\nsnapshot_epochs = [1, 300]\n");
        let cfg = RunConfig::resolve(Some(f.path()), &Overrides::default()).unwrap();
        assert_eq!((cfg.seed, cfg.jobs, cfg.gan.max_epochs), (5, 3, 300));
        assert_eq!(cfg.gan.batch_size, GanTrainConfig::desk().batch_size);
        let flags = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(Some(f.path()), &flags).unwrap();
        assert_eq!((cfg.seed, cfg.jobs), (9, 3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["sede = 1\n", "[gan]\nmax_epoch = 3\n", "[sweep.classifier.arch]\nsides = 8\n"] {
            let f = write_temp(text);
            let err = RunConfig::resolve(Some(f.path()), &Overrides::default()).unwrap_err();
            assert!(format!("{err:#}").contains("unknown field"), "{err:#}");
        }
    }

    #[test]
    fn preset_can_come_from_the_file() {
        let f = write_temp("preset = \"full\"\n");
        let cfg = RunConfig::resolve(Some(f.path()), &Overrides::default()).unwrap();
        assert_eq!(cfg.geometry, Geometry::full());
        let flags = Overrides {
            preset: Some(Preset::Desk),
            ..Overrides::default()
        };
        assert_eq!(RunConfig::resolve(Some(f.path()), &flags).unwrap().geometry, Geometry::desk());
    }

    #[test]
    fn mismatched_geometry_is_rejected() {
        let f = write_temp("[geometry]\nvolume = [128, 128, 176]\nfactor = 4\nband = 22\nclassifier_side = 16\n");
        assert!(RunConfig::resolve(Some(f.path()), &Overrides::default()).is_err());
    }

    #[test]
    fn missing_config_names_the_path() {
        let err = RunConfig::resolve(Some(Path::new("/no/such/c.toml")), &Overrides::default()).unwrap_err();
        assert!(format!("{err:#}").contains("/no/such/c.toml"));
    }
}
