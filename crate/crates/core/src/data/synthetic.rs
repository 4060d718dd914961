use super::record::{Dataset, EmbeddingRecord, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::math::Rng;

const LANGUAGES: [&str; 3] = ["kin", "swa", "tso"];

/// Gaussian class clusters: class `c` is `N(separation * e_c, I)`, where `e_c`
/// is the `c`-th standard basis vector. Samples are interleaved by class.
pub fn generate_synthetic(
    n_classes: usize,
    dimension: usize,
    per_class: usize,
    separation: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if !(2..=NUM_CLASSES).contains(&n_classes) {
        return Err(Error::Usage(format!(
            "synthetic data supports 2..={NUM_CLASSES} classes, got {n_classes}"
        )));
    }
    if per_class == 0 {
        return Err(Error::Usage("per_class must be at least 1".into()));
    }
    if !(separation >= 0.0) {
        return Err(Error::Usage(format!("separation must be >= 0, got {separation}")));
    }
    if dimension < n_classes {
        return Err(Error::Usage(format!(
            "dimension {dimension} < {n_classes} classes: orthogonal centers impossible"
        )));
    }
    let mut records = Vec::with_capacity(n_classes * per_class);
    for i in 0..n_classes * per_class {
        let label = i % n_classes;
        let mut vector: Vec<f64> = (0..dimension).map(|_| rng.normal()).collect();
        vector[label] += separation;
        records.push(EmbeddingRecord {
            id: format!("syn-{i:05}"),
            language: LANGUAGES[(i / n_classes) % LANGUAGES.len()].to_string(),
            label,
            vector,
        });
    }
    Dataset::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_means_are_separated_by_sqrt2_times_separation() {
        let d = generate_synthetic(3, 16, 600, 4.0, &mut Rng::new(5)).unwrap();
        let mut means = vec![vec![0.0; 16]; 3];
        for r in d.records() {
            for (m, v) in means[r.label].iter_mut().zip(&r.vector) {
                *m += v / 600.0;
            }
        }
        for a in 0..3 {
            for b in a + 1..3 {
                let dist = means[a]
                    .iter()
                    .zip(&means[b])
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let target = 4.0 * 2f64.sqrt();
                assert!((dist - target).abs() < 0.1 * target, "{a}-{b}: {dist}");
            }
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let a = generate_synthetic(3, 8, 5, 1.0, &mut Rng::new(1)).unwrap();
        let b = generate_synthetic(3, 8, 5, 1.0, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), [5, 5, 5]);
        assert!(generate_synthetic(3, 2, 5, 1.0, &mut Rng::new(1)).is_err());
        assert!(generate_synthetic(1, 8, 5, 1.0, &mut Rng::new(1)).is_err());
    }
}
