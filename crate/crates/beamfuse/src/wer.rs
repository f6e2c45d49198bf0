//! Word error rate via dynamic-programming edit-distance alignment.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WerReport {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_length: usize,
}

impl WerReport {
    pub fn edits(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// `(S + D + I) / N` as a percentage.
    pub fn wer(&self) -> f64 {
        100.0 * self.edits() as f64 / self.reference_length as f64
    }

    /// Pools counts for corpus-level scoring.
    pub fn absorb(&mut self, other: &WerReport) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.reference_length += other.reference_length;
    }
}

/// Minimal substitution/deletion/insertion alignment. Backtrace ties are
/// resolved preferring substitution over deletion over insertion.
pub fn edit_distance_wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<WerReport> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let m = reference.len();
    let n = hypothesis.len();
    let width = n + 1;
    let mut cost = vec![0usize; (m + 1) * width];
    for (j, cell) in cost[..width].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=m {
        cost[i * width] = i;
        for j in 1..=n {
            let same = reference[i - 1] == hypothesis[j - 1];
            let sub = cost[(i - 1) * width + j - 1] + usize::from(!same);
            let del = cost[(i - 1) * width + j] + 1;
            let ins = cost[i * width + j - 1] + 1;
            cost[i * width + j] = sub.min(del).min(ins);
        }
    }

    let mut report = WerReport {
        reference_length: m,
        ..WerReport::default()
    };
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = cost[(i - 1) * width + j - 1];
            if here == diag + usize::from(!same) {
                if !same {
                    report.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == cost[(i - 1) * width + j] + 1 {
            report.deletions += 1;
            i -= 1;
            continue;
        }
        report.insertions += 1;
        j -= 1;
    }
    Ok(report)
}
