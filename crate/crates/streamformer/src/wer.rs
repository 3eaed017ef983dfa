//! Word error rate by unit-cost Levenshtein alignment.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WerReport {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_words: usize,
    pub wer: f64,
}

impl WerReport {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// Pools counts, e.g. over the utterances of a test set.
    pub fn combine(reports: &[WerReport]) -> Result<WerReport> {
        let mut total = WerReport {
            substitutions: 0,
            insertions: 0,
            deletions: 0,
            reference_words: 0,
            wer: 0.0,
        };
        for r in reports {
            total.substitutions += r.substitutions;
            total.insertions += r.insertions;
            total.deletions += r.deletions;
            total.reference_words += r.reference_words;
        }
        if total.reference_words == 0 {
            return Err(Error::Config("reference is empty".into()));
        }
        total.wer = total.errors() as f64 / total.reference_words as f64;
        Ok(total)
    }
}

/// Aligns `hyp` against `reference`. Among equal-cost alignments a
/// substitution is preferred over a deletion, and a deletion over an
/// insertion.
pub fn compute_wer<T: PartialEq>(reference: &[T], hyp: &[T]) -> Result<WerReport> {
    if reference.is_empty() {
        return Err(Error::Config("reference is empty".into()));
    }
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut cost = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        cost[i * w] = i;
    }
    for (j, c) in cost.iter_mut().take(w).enumerate() {
        *c = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = cost[(i - 1) * w + j] + 1;
            let ins = cost[i * w + j - 1] + 1;
            cost[i * w + j] = diag.min(del).min(ins);
        }
    }
    let (mut s, mut ins, mut del) = (0, 0, 0);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        if i > 0 && j > 0 {
            let miss = usize::from(reference[i - 1] != hyp[j - 1]);
            if cost[(i - 1) * w + j - 1] + miss == here {
                s += miss;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[(i - 1) * w + j] + 1 == here {
            del += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    Ok(WerReport {
        substitutions: s,
        insertions: ins,
        deletions: del,
        reference_words: n,
        wer: (s + ins + del) as f64 / n as f64,
    })
}

/// Whitespace-tokenized convenience wrapper.
pub fn compute_wer_str(reference: &str, hyp: &str) -> Result<WerReport> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hyp.split_whitespace().collect();
    compute_wer(&r, &h)
}
