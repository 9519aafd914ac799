//! One GAN per (class, depth slice): training, progress snapshots, banks of
//! trained pairs and synthesis of complete generated stacks.

mod bank;
mod config;
mod pair;
mod snapshot;

pub use bank::{synthesize_stack, train_gan_bank, GanBank};
pub use config::GanTrainConfig;
pub use pair::{train_slice_gan, GanPair, Snapshot};
pub use snapshot::{append_loss_log, loss_log_name, snapshot_file_name, snapshot_progress, write_snapshots};
