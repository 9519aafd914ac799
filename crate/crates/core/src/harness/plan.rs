use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class counts for one augmentation ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPlan {
    pub base_train: usize,
    /// Train plus test samples of the class.
    pub class_total: usize,
    pub generated_added: usize,
    pub final_train: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub ratio: f64,
    pub normal: ClassPlan,
    pub bipolar: ClassPlan,
    /// Differences from the reference cohort's published counts.
    pub warnings: Vec<String>,
}

/// `(normal, bipolar)` pairs.
pub type Counts = (usize, usize);

/// The reference cohort: class totals, training and test counts.
pub const REFERENCE_TOTALS: Counts = (123, 49);
pub const REFERENCE_TRAIN: Counts = (92, 37);
pub const REFERENCE_TEST: Counts = (31, 12);

/// Published final training counts of the reference cohort per ratio.
const REFERENCE_FINAL_TRAIN: [(f64, Counts); 6] = [
    (0.0, (92, 37)),
    (0.25, (122, 49)),
    (0.5, (153, 61)),
    (0.75, (184, 73)),
    (1.0, (215, 85)),
    (3.0, (474, 181)),
];

/// Slack so ratios written in decimal (0.29 * 100) do not floor one short.
const FLOOR_SLACK: f64 = 1e-9;

fn generated(ratio: f64, total: usize) -> usize {
    (ratio * total as f64 + FLOOR_SLACK).floor() as usize
}

/// Generated samples per class are `floor(ratio * class_total)`, added to
/// the training split only.
pub fn plan_augmentation(ratio: f64, class_totals: Counts, base_train: Counts, test: Counts) -> Result<AugmentationPlan> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(Error::contract(format!("augmentation ratio must be non-negative, got {ratio}")));
    }
    let class = |total: usize, base: usize, test: usize| {
        let added = generated(ratio, total);
        ClassPlan {
            base_train: base,
            class_total: total,
            generated_added: added,
            final_train: base + added,
            test,
        }
    };
    let normal = class(class_totals.0, base_train.0, test.0);
    let bipolar = class(class_totals.1, base_train.1, test.1);
    let mut warnings = Vec::new();
    if (class_totals, base_train, test) == (REFERENCE_TOTALS, REFERENCE_TRAIN, REFERENCE_TEST) {
        if let Some((_, (n, b))) = REFERENCE_FINAL_TRAIN.iter().find(|(r, _)| *r == ratio) {
            for (name, ours, published) in [("normal", normal.final_train, *n), ("bipolar", bipolar.final_train, *b)] {
                if ours != published {
                    let w = format!(
                        "documented deviation at ratio {}%: {name} training count {ours} by the floor rule, {published} in the published table",
                        ratio * 100.0
                    );
                    log::warn!("{w}");
                    warnings.push(w);
                }
            }
        }
    }
    Ok(AugmentationPlan {
        ratio,
        normal,
        bipolar,
        warnings,
    })
}

/// `"Base-0%"`, `"25%"`, `"300%"`.
pub fn ratio_label(ratio: f64) -> String {
    if ratio == 0.0 {
        "Base-0%".to_string()
    } else {
        let pct = ratio * 100.0;
        if (pct - pct.round()).abs() < 1e-9 {
            format!("{}%", pct.round() as i64)
        } else {
            format!("{}%", (pct * 100.0).round() / 100.0)
        }
    }
}
