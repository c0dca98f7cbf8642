use super::matrix::{dot, DenseMatrix};
use crate::error::{shape_err, Error, Result};

/// Probabilities below this are clipped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn check_targets(probs: &DenseMatrix, targets: &[usize], op: &'static str) -> Result<()> {
    if probs.rows() != targets.len() {
        return Err(shape_err(op, probs.rows(), targets.len()));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= probs.cols()) {
        return Err(Error::InvalidArgument(format!(
            "{op}: target class {t} out of range for {} classes",
            probs.cols()
        )));
    }
    Ok(())
}

/// Mean over rows of `-ln p[target]`, with `p` clipped at [`PROB_FLOOR`].
///
/// `targets[r]` is the class index of the one-hot target for row `r`.
pub fn cross_entropy(probs: &DenseMatrix, targets: &[usize]) -> Result<f64> {
    check_targets(probs, targets, "cross_entropy")?;
    if targets.is_empty() {
        return Err(Error::InvalidArgument("cross_entropy over zero rows".into()));
    }
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(r, &t)| -probs.get(r, t).max(PROB_FLOOR).ln())
        .sum();
    Ok(total / targets.len() as f64)
}

/// Gradient of `cross_entropy(softmax_rows(logits), targets)` with respect to
/// the logits: `(p - onehot) / n`.
pub fn softmax_cross_entropy_grad(probs: &DenseMatrix, targets: &[usize]) -> Result<DenseMatrix> {
    check_targets(probs, targets, "softmax_cross_entropy_grad")?;
    let n = targets.len().max(1) as f64;
    let mut g = probs.clone();
    for (r, &t) in targets.iter().enumerate() {
        let row = g.row_mut(r);
        row[t] -= 1.0;
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok(g)
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let uu = dot(u, u);
    let vv = dot(v, v);
    if uu == 0.0 || vv == 0.0 {
        return 0.0;
    }
    // sqrt(uu * vv) rather than |u||v| keeps cos(u, u) == 1 exactly.
    (dot(u, v) / (uu * vv).sqrt()).clamp(-1.0, 1.0)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_and_stable() {
        let m = DenseMatrix::from_rows(&[[2.0; 4], [1000.0, 0.0, 0.0, 0.0]]).unwrap();
        let p = softmax_rows(&m);
        for c in 0..4 {
            assert!((p.get(0, c) - 0.25).abs() < 1e-15);
        }
        assert!((p.get(1, 0) - 1.0).abs() < 1e-12);
        assert!(p.get(1, 1) < 1e-300 || p.get(1, 1) == 0.0);
        assert!(p.is_finite());

        let single = softmax_rows(&DenseMatrix::from_rows(&[[3.0], [-7.0]]).unwrap());
        assert_eq!(single.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn cross_entropy_reference_values() {
        let perfect = DenseMatrix::from_rows(&[[0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(cross_entropy(&perfect, &[1]).unwrap(), 0.0);

        let uniform = DenseMatrix::from_rows(&[[0.2; 5]]).unwrap();
        assert!((cross_entropy(&uniform, &[3]).unwrap() - 5f64.ln()).abs() < 1e-12);

        let halves = DenseMatrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        assert!((cross_entropy(&halves, &[0, 1]).unwrap() - 2f64.ln()).abs() < 1e-12);

        let zero = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!((cross_entropy(&zero, &[1]).unwrap() + PROB_FLOOR.ln()).abs() < 1e-9);

        assert!(cross_entropy(&halves, &[0]).is_err());
        assert!(cross_entropy(&halves, &[0, 2]).is_err());
    }

    #[test]
    fn cosine_reference_values() {
        assert_eq!(cosine(&[0.3, -1.2, 7.0], &[0.3, -1.2, 7.0]), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert!((cosine(&[1.0, 0.0], &[-2.0, 0.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_and_softplus() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }
}
