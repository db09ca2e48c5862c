//! Stratified train/test splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::patches::PatchSet;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitCounts {
    /// Total training samples, allocated proportionally to class frequency
    /// with at least one per class.
    Total(usize),
    /// Explicit training count for classes `1..=K`.
    PerClass(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub counts: SplitCounts,
    pub seed: u64,
}

/// Largest-remainder proportional allocation with a floor of one per
/// nonempty class.
pub fn allocate_proportional(class_counts: &[usize], total: usize) -> Result<Vec<usize>> {
    let available: usize = class_counts.iter().sum();
    let nonempty = class_counts.iter().filter(|&&c| c > 0).count();
    if total > available {
        return Err(Error::invalid(format!(
            "requested {total} training samples but only {available} are labeled"
        )));
    }
    if total < nonempty {
        return Err(Error::invalid(format!(
            "{total} training samples cannot cover {nonempty} classes with one each"
        )));
    }
    let quota: Vec<f64> = class_counts
        .iter()
        .map(|&c| total as f64 * c as f64 / available.max(1) as f64)
        .collect();
    let mut alloc: Vec<usize> = class_counts
        .iter()
        .zip(&quota)
        .map(|(&c, &q)| if c == 0 { 0 } else { (q.floor() as usize).clamp(1, c) })
        .collect();
    // Hand out the remainder by largest deficit, then trim by largest surplus;
    // ties go to the lower class index.
    let mut assigned: usize = alloc.iter().sum();
    while assigned < total {
        let i = (0..alloc.len())
            .filter(|&i| alloc[i] < class_counts[i])
            .max_by(|&a, &b| {
                (quota[a] - alloc[a] as f64)
                    .total_cmp(&(quota[b] - alloc[b] as f64))
                    .then(b.cmp(&a))
            })
            .expect("total <= available leaves a class with spare samples");
        alloc[i] += 1;
        assigned += 1;
    }
    while assigned > total {
        let i = (0..alloc.len())
            .filter(|&i| alloc[i] > 1)
            .max_by(|&a, &b| {
                (alloc[a] as f64 - quota[a])
                    .total_cmp(&(alloc[b] as f64 - quota[b]))
                    .then(b.cmp(&a))
            })
            .expect("total >= nonempty classes leaves a class above one");
        alloc[i] -= 1;
        assigned -= 1;
    }
    Ok(alloc)
}

/// Indices of training and test samples for `labels` (class ids `1..=K`).
/// Both lists are sorted ascending.
pub fn split_indices(labels: &[u16], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            return Err(Error::invalid(format!("sample {i} has no label")));
        }
        by_class[l as usize - 1].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let wanted = match &spec.counts {
        SplitCounts::Total(n) => allocate_proportional(&counts, *n)?,
        SplitCounts::PerClass(v) => {
            if v.len() != k {
                return Err(Error::invalid(format!(
                    "per-class split lists {} classes, data has {k}",
                    v.len()
                )));
            }
            v.clone()
        }
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (ci, members) in by_class.iter_mut().enumerate() {
        if wanted[ci] > members.len() {
            return Err(Error::InsufficientSamples {
                class: ci as u16 + 1,
                available: members.len(),
                requested: wanted[ci],
            });
        }
        let mut r = rng::stream(&[spec.seed, ci as u64]);
        members.shuffle(&mut r);
        train.extend_from_slice(&members[..wanted[ci]]);
        test.extend_from_slice(&members[wanted[ci]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Disjoint train/test patch sets; everything not drawn for training is
/// test data.
pub fn stratified_split(set: &PatchSet, spec: &SplitSpec) -> Result<(PatchSet, PatchSet)> {
    let (train, test) = split_indices(&set.labels, spec)?;
    Ok((set.subset(&train), set.subset(&test)))
}
