use std::collections::BTreeMap;

use super::record::Dataset;
use crate::error::{Error, Result};
use crate::math::Rng;

/// Per-class random split. Part B receives `round(fraction * count)` members of
/// each class, clamped so both parts keep at least one. Returned indices are
/// ascending.
pub fn stratified_split_indices(labels: &[usize], fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut part_a = Vec::with_capacity(labels.len());
    let mut part_b = Vec::new();
    for (class, mut members) in by_class {
        let count = members.len();
        if count < 2 {
            return Err(Error::Stratification(format!(
                "class {class} has {count} member(s); at least 2 are required"
            )));
        }
        let take = ((fraction * count as f64).round() as usize).clamp(1, count - 1);
        rng.shuffle(&mut members);
        part_b.extend_from_slice(&members[..take]);
        part_a.extend_from_slice(&members[take..]);
    }
    part_a.sort_unstable();
    part_b.sort_unstable();
    Ok((part_a, part_b))
}

/// Splits a dataset into (part A, part B) with `fraction` of each class in B.
pub fn stratified_split(dataset: &Dataset, fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    let (a, b) = stratified_split_indices(&dataset.labels(), fraction, rng)?;
    Ok((dataset.subset(&a), dataset.subset(&b)))
}
