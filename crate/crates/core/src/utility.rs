//! Per-position utilities, shared profiles, and quantile grouping.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::{embed, loss_gradient_wrt_embeddings, task_loss, EmbeddingTable, LabeledSample, TaskHead};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityMode {
    Grad,
    Mask,
}

/// `||dL/de_i||_2` at the clean embedding sequence.
pub fn grad_utility(sample: &LabeledSample, table: &EmbeddingTable, head: &TaskHead) -> Vec<f64> {
    let z = embed(&sample.tokens, table).expect("sample tokens in range");
    let g = loss_gradient_wrt_embeddings(head, &z, sample.label);
    (0..g.len).map(|i| g.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
}

/// Loss increase when position `i` is replaced by `mask_embedding`. May be negative.
pub fn mask_utility(
    sample: &LabeledSample,
    table: &EmbeddingTable,
    head: &TaskHead,
    mask_embedding: &[f64],
) -> Result<Vec<f64>> {
    if mask_embedding.len() != table.dim() {
        return Err(Error::ShapeMismatch(format!(
            "mask embedding has dimension {}, table has {}",
            mask_embedding.len(),
            table.dim()
        )));
    }
    let mut z = embed(&sample.tokens, table)?;
    let clean = task_loss(head, &z, sample.label);
    let mut out = Vec::with_capacity(z.len);
    for i in 0..z.len {
        let saved = z.row(i).to_vec();
        z.row_mut(i).copy_from_slice(mask_embedding);
        out.push(task_loss(head, &z, sample.label) - clean);
        z.row_mut(i).copy_from_slice(&saved);
    }
    Ok(out)
}

/// Mean utility per position over a calibration set. The zero vector is
/// used as the mask embedding in [`UtilityMode::Mask`].
pub fn average_profile(
    samples: &[LabeledSample],
    table: &EmbeddingTable,
    head: &TaskHead,
    mode: UtilityMode,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Empty("calibration set"));
    }
    let mask = vec![0.0; table.dim()];
    let per_sample: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| match mode {
            UtilityMode::Grad => Ok(grad_utility(s, table, head)),
            UtilityMode::Mask => mask_utility(s, table, head, &mask),
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; per_sample[0].len()];
    for (n, u) in per_sample.iter().enumerate() {
        if u.len() != mean.len() {
            return Err(Error::ShapeMismatch("calibration samples differ in length".into()));
        }
        let inv = 1.0 / (n + 1) as f64;
        for (m, x) in mean.iter_mut().zip(u) {
            *m += (x - *m) * inv;
        }
    }
    Ok(mean)
}

/// Positions split into `G` utility groups; group 0 holds the highest utilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityGrouping {
    pub mode: UtilityMode,
    /// Shared profile, indexed by position.
    pub profile: Vec<f64>,
    /// Group index, indexed by position.
    pub group_of: Vec<usize>,
    pub sizes: Vec<usize>,
    pub masses: Vec<f64>,
}

impl UtilityGrouping {
    pub fn groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.group_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_of.is_empty()
    }

    /// Positions of group `g` in ascending order.
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.group_of.len()).filter(|&i| self.group_of[i] == g).collect()
    }
}

/// Sort by utility (descending, ties by position) and cut into `G`
/// contiguous blocks whose sizes differ by at most one.
pub fn quantize_groups(profile: &[f64], groups: usize, mode: UtilityMode) -> Result<UtilityGrouping> {
    let l = profile.len();
    if groups < 1 || groups > l {
        return Err(Error::GroupCountOutOfRange { groups, positions: l });
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| profile[b].total_cmp(&profile[a]).then(a.cmp(&b)));
    let base = l / groups;
    let extra = l % groups;
    let sizes: Vec<usize> = (0..groups).map(|g| base + usize::from(g < extra)).collect();
    let mut group_of = vec![0; l];
    let mut masses = vec![0.0; groups];
    let mut at = 0;
    for (g, &size) in sizes.iter().enumerate() {
        for &pos in &order[at..at + size] {
            group_of[pos] = g;
            masses[g] += profile[pos];
        }
        at += size;
    }
    Ok(UtilityGrouping { mode, profile: profile.to_vec(), group_of, sizes, masses })
}
