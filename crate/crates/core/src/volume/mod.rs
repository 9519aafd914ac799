//! Volumes, their NIfTI-1 encoding, synthetic phantoms and the reduction
//! chain from full scans down to classifier-sized slice stacks.

pub mod manifest;
pub mod nifti;
mod phantom;
pub mod pgm;
mod preprocess;
mod types;

pub use phantom::{make_phantom, Phantom, PhantomParams};
pub use preprocess::{
    crop_to_multiple, downsample_volume, fit_depth, normalize_unit, preprocess_volume, resize_stack, select_band,
    Geometry,
};
pub use types::{SliceStack, Volume};
