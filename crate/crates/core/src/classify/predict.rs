use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::math::{softmax_rows, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub labels: Vec<usize>,
    /// One row of class probabilities per sample.
    pub probabilities: Matrix,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict_from_probabilities(probabilities: Matrix) -> Predictions {
    let labels = probabilities.iter_rows().map(argmax).collect();
    Predictions { labels, probabilities }
}

pub fn predict_from_logits(logits: &Matrix) -> Predictions {
    predict_from_probabilities(softmax_rows(logits))
}

/// CSV with header `id,true,predicted,p0,p1,...`.
pub fn predictions_csv(ids: &[String], truth: &[usize], predictions: &Predictions) -> Result<String> {
    let n = predictions.labels.len();
    if ids.len() != n || truth.len() != n {
        return Err(Error::shape(
            "prediction rows",
            n,
            format!("{} ids, {} labels", ids.len(), truth.len()),
        ));
    }
    let k = predictions.probabilities.cols();
    let mut out = String::from("id,true,predicted");
    for c in 0..k {
        write!(out, ",p{c}").expect("writing to a String");
    }
    out.push('\n');
    for i in 0..n {
        write!(out, "{},{},{}", ids[i], truth[i], predictions.labels[i]).expect("writing to a String");
        for p in predictions.probabilities.row(i) {
            write!(out, ",{p}").expect("writing to a String");
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lowest_class() {
        assert_eq!(argmax(&[1.0 / 3.0; 3]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let logits = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-50.0, 0.0, 50.0], [0.0, 0.0, 0.0]]).unwrap();
        let p = predict_from_logits(&logits);
        for row in p.probabilities.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(p.labels, vec![2, 2, 0]);
    }

    #[test]
    fn csv_layout() {
        let p = predict_from_probabilities(Matrix::from_rows(&[[0.25, 0.5, 0.25]]).unwrap());
        let csv = predictions_csv(&["t1".into()], &[1], &p).unwrap();
        assert_eq!(csv, "id,true,predicted,p0,p1,p2\nt1,1,1,0.25,0.5,0.25\n");
    }
}
