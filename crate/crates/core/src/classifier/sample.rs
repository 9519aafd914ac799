use crate::error::{Error, Result};
use crate::labels::{Label, Provenance};
use crate::volume::SliceStack;

/// One classifier input: a `side x side x depth` grid in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    /// `(rows, cols, depth)`.
    pub dims: [usize; 3],
    /// `[rows, cols, depth]` layout.
    pub values: Vec<f32>,
    pub label: Label,
    pub provenance: Provenance,
}

impl LabeledSample {
    pub fn from_stack(id: impl Into<String>, stack: &SliceStack) -> Result<Self> {
        let id = id.into();
        let label = stack
            .label
            .ok_or_else(|| Error::contract(format!("sample {id} has no label")))?;
        if stack.slices.iter().flatten().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::contract(format!("sample {id} has values outside [-1, 1]")));
        }
        Ok(LabeledSample {
            id,
            dims: [stack.side.0, stack.side.1, stack.len()],
            values: stack.to_volume_layout(),
            label,
            provenance: stack.provenance,
        })
    }
}
