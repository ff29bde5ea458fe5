//! First principal component via SVD of the centered data matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalComponent {
    /// Column mean used for centering.
    pub mean: Vec<f64>,
    /// Unit-norm direction of maximal projected variance.
    pub component: Vec<f64>,
    /// Share of total variance captured by `component`, in [0, 1].
    pub explained_variance_ratio: f64,
}

/// Compute the first principal component of `rows` (n × D, n ≥ 2).
///
/// The sign is canonicalized so that the first component whose magnitude
/// exceeds machine epsilon is positive.
pub fn first_component(rows: &[Vec<f64>]) -> Result<PrincipalComponent> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    let dim = rows[0].len();
    if dim == 0 {
        return Err(Error::validation("PCA rows must have at least one column"));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    if rows.iter().all(|r| r == &rows[0]) {
        return Err(Error::Degenerate("all PCA rows are identical".into()));
    }

    let mean = column_mean(rows);
    let centered = DMatrix::from_fn(n, dim, |i, j| rows[i][j] - mean[j]);

    // nalgebra computes the thin decomposition, so for n < D this is the
    // economy SVD with min(n, D) singular triplets.
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sv = &svd.singular_values;

    let (best, top) = sv
        .iter()
        .copied()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, s)| if s > acc.1 { (i, s) } else { acc },
        );
    let total: f64 = sv.iter().map(|s| s * s).sum();
    if !(top > 0.0 && total > 0.0) {
        return Err(Error::Degenerate("centered data has zero variance".into()));
    }

    let mut component: Vec<f64> = v_t.row(best).iter().copied().collect();
    normalize(&mut component)?;
    canonicalize_sign(&mut component);

    let explained_variance_ratio = ((top * top) / total).clamp(0.0, 1.0);
    Ok(PrincipalComponent {
        mean,
        component,
        explained_variance_ratio,
    })
}

pub(crate) fn column_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let dim = rows[0].len();
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

pub(crate) fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm <= 0.0 {
        return Err(Error::Degenerate("cannot normalize a zero vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

/// Flip `v` so its first component with |x| > ε is positive. Returns whether a
/// flip happened.
pub(crate) fn canonicalize_sign(v: &mut [f64]) -> bool {
    let lead = v.iter().copied().find(|x| x.abs() > f64::EPSILON);
    if matches!(lead, Some(x) if x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn one_dimensional_data() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![3.0, 0.0],
        ];
        let pc = first_component(&rows).unwrap();
        assert_close(&pc.mean, &[1.5, 0.0], 1e-15);
        assert_close(&pc.component, &[1.0, 0.0], 1e-12);
        assert!((pc.explained_variance_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_diagonal() {
        let rows = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![2.0, 2.0]];
        let pc = first_component(&rows).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_close(&pc.component, &[h, h], 1e-12);
        assert!((pc.explained_variance_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wide_matrix_uses_economy_form() {
        // n = 3 rows in D = 7 dimensions
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..7).map(|j| ((i * 7 + j) as f64 * 0.37).sin()).collect())
            .collect();
        let pc = first_component(&rows).unwrap();
        assert_eq!(pc.component.len(), 7);
        let norm: f64 = pc.component.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(pc.explained_variance_ratio > 0.0 && pc.explained_variance_ratio <= 1.0);
    }

    #[test]
    fn degenerate_and_precondition_errors() {
        let same = vec![vec![0.1, 0.2], vec![0.1, 0.2], vec![0.1, 0.2]];
        assert_eq!(first_component(&same).unwrap_err().code(), "degenerate");
        assert_eq!(
            first_component(&[vec![1.0]]).unwrap_err().code(),
            "insufficient_data"
        );
        let ragged = vec![vec![1.0, 2.0], vec![1.0]];
        assert_eq!(
            first_component(&ragged).unwrap_err().code(),
            "dimension_mismatch"
        );
    }
}
