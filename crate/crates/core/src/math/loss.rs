use super::matrix::{softmax, Matrix};
use crate::error::{Error, Result};

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy_loss(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, k) = logits.shape();
    if labels.len() != n {
        return Err(Error::shape("cross_entropy_loss labels", n, labels.len()));
    }
    if n == 0 {
        return Err(Error::Usage("cross_entropy_loss needs at least one row".into()));
    }
    if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
        return Err(Error::Validation(format!("label {bad} at row {i} outside [0, {k})")));
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, k);
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss += log_sum - row[label];
        let p = softmax(row);
        let g = grad.row_mut(r);
        for c in 0..k {
            g[c] = (p[c] - if c == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

/// Mean squared error over every element, and its gradient.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "mse_loss",
            format!("{:?}", target.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    let count = pred.data().len();
    if count == 0 {
        return Ok((0.0, pred.clone()));
    }
    let diff = pred.sub(target)?;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / count as f64;
    Ok((loss, diff.scale(2.0 / count as f64)))
}

/// KL divergence of `N(mu, exp(log_var))` from `N(0, I)`, summed over latent
/// dimensions and averaged over rows.
pub fn gaussian_kl(mu: &Matrix, log_var: &Matrix) -> Result<f64> {
    Ok(gaussian_kl_with_grad(mu, log_var)?.0)
}

/// [`gaussian_kl`] together with its gradients `(d/d mu, d/d log_var)`.
pub fn gaussian_kl_with_grad(mu: &Matrix, log_var: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    if mu.shape() != log_var.shape() {
        return Err(Error::shape(
            "gaussian_kl",
            format!("{:?}", mu.shape()),
            format!("{:?}", log_var.shape()),
        ));
    }
    let n = mu.rows().max(1) as f64;
    let mut total = 0.0;
    let mut d_mu = Matrix::zeros(mu.rows(), mu.cols());
    let mut d_lv = Matrix::zeros(mu.rows(), mu.cols());
    for ((&m, &lv), (dm, dl)) in mu
        .data()
        .iter()
        .zip(log_var.data())
        .zip(d_mu.data_mut().iter_mut().zip(d_lv.data_mut().iter_mut()))
    {
        let var = lv.exp();
        // exp(x) - 1 - x >= 0, so each term is non-negative up to rounding.
        total += 0.5 * ((var - 1.0 - lv) + m * m);
        *dm = m / n;
        *dl = 0.5 * (var - 1.0) / n;
    }
    Ok((total / n, d_mu, d_lv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> Matrix {
        Matrix::row_vector(values)
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_k() {
        let (loss, _) = cross_entropy_loss(&row(&[0.3, 0.3, 0.3]), &[1]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_hand_case() {
        let (loss, grad) = cross_entropy_loss(&row(&[1.0, 2.0, 3.0]), &[2]).unwrap();
        let expected = -(3f64.exp() / (1f64.exp() + 2f64.exp() + 3f64.exp())).ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.4076).abs() < 1e-4);
        assert!(grad.sum().abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_vanishes_with_large_margin() {
        let (loss, _) = cross_entropy_loss(&row(&[0.0, 0.0, 200.0]), &[2]).unwrap();
        assert!((0.0..1e-80).contains(&loss));
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_label() {
        assert!(matches!(
            cross_entropy_loss(&row(&[0.0, 1.0]), &[2]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse_loss(&row(&[1.0, 2.0]), &row(&[1.0, 2.0])).unwrap().0, 0.0);
        assert_eq!(mse_loss(&row(&[0.0, 0.0]), &row(&[1.0, 1.0])).unwrap().0, 1.0);
        assert_eq!(mse_loss(&row(&[1.0, 3.0]), &row(&[0.0, 1.0])).unwrap().0, 2.5);
        assert!(mse_loss(&row(&[1.0]), &row(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn kl_cases() {
        assert_eq!(gaussian_kl(&row(&[0.0, 0.0]), &row(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(gaussian_kl(&row(&[1.0]), &row(&[0.0])).unwrap(), 0.5);
        let kl = gaussian_kl(&row(&[0.0]), &row(&[4f64.ln()])).unwrap();
        assert!((kl - 0.5 * (4.0 - 1.0 - 4f64.ln())).abs() < 1e-12);
        assert!((kl - 0.8069).abs() < 1e-4);
        assert!(gaussian_kl(&row(&[0.0]), &row(&[0.0, 1.0])).is_err());
    }
}
