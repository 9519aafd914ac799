use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::pair::GanPair;
use crate::error::{Error, Result};
use crate::labels::Label;
use crate::volume::pgm;

pub fn snapshot_file_name(label: Label, depth: usize, epoch: usize) -> String {
    format!("{label}_d{depth:02}_e{epoch:05}.pgm")
}

pub fn loss_log_name(label: Label, depth: usize) -> String {
    format!("{label}_d{depth:02}_loss.csv")
}

/// Appends `epoch,g_loss,d_loss` lines for the epochs not yet in the log,
/// so the log always holds one line per trained epoch.
pub fn append_loss_log(pair: &GanPair, path: &Path) -> Result<()> {
    let logged = match std::fs::File::open(path) {
        Ok(f) => BufReader::new(f).lines().count(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for (i, (g, d)) in pair.loss_history.iter().enumerate().skip(logged) {
        text.push_str(&format!("{},{g:.6},{d:.6}\n", i + 1));
    }
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes the current fixed-noise generation as a PGM named after the
/// class, depth and epoch, and brings the loss log up to date.
pub fn snapshot_progress(pair: &GanPair, dir: &Path) -> Result<PathBuf> {
    if pair.epoch == 0 {
        return Err(Error::contract("snapshot of an untrained GAN pair"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let side = pair.side();
    let path = dir.join(snapshot_file_name(pair.label, pair.depth_index, pair.epoch));
    pgm::write(&path, &pair.snapshot_image()?, side, side)?;
    append_loss_log(pair, &dir.join(loss_log_name(pair.label, pair.depth_index)))?;
    Ok(path)
}

/// Writes every snapshot recorded during training, plus the loss log.
pub fn write_snapshots(pair: &GanPair, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let side = pair.side();
    let mut written = Vec::new();
    for s in &pair.snapshots {
        let path = dir.join(snapshot_file_name(pair.label, pair.depth_index, s.epoch));
        pgm::write(&path, &s.image, side, side)?;
        written.push(path);
    }
    append_loss_log(pair, &dir.join(loss_log_name(pair.label, pair.depth_index)))?;
    Ok(written)
}
