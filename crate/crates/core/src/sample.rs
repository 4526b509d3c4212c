//! Pooled treated/control sample and its validation rules.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// A validated pooled sample: outcomes, binary treatment flags, and a
/// covariate matrix. Row order is preserved from the input, with `row_id`
/// the original position of each row.
#[derive(Debug, Clone)]
pub struct Sample {
    y: Vec<f64>,
    w: Vec<bool>,
    x: Mat,
    row_id: Vec<usize>,
    treated: Vec<usize>,
    controls: Vec<usize>,
}

impl Sample {
    /// Validates raw columns into a `Sample`.
    ///
    /// Rejects non-binary treatment values, non-finite entries (naming the
    /// row and column), samples without both groups, and k = 0.
    pub fn from_columns(y: Vec<f64>, w_raw: &[f64], x_rows: &[Vec<f64>]) -> Result<Sample> {
        let n = y.len();
        if w_raw.len() != n || x_rows.len() != n {
            return Err(Error::Data(format!(
                "column lengths differ: y={}, w={}, x={}",
                n,
                w_raw.len(),
                x_rows.len()
            )));
        }
        if n == 0 {
            return Err(Error::Data("sample has no rows".into()));
        }
        let k = x_rows[0].len();
        if k == 0 {
            return Err(Error::NoCovariates);
        }
        let mut w = Vec::with_capacity(n);
        for (row, &wv) in w_raw.iter().enumerate() {
            if wv == 0.0 {
                w.push(false);
            } else if wv == 1.0 {
                w.push(true);
            } else {
                return Err(Error::NonBinaryTreatment { row, value: wv });
            }
        }
        for (row, &yv) in y.iter().enumerate() {
            if !yv.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: "y".into(),
                });
            }
        }
        for (row, xr) in x_rows.iter().enumerate() {
            if xr.len() != k {
                return Err(Error::Data(format!(
                    "row {row} has {} covariates, expected {k}",
                    xr.len()
                )));
            }
            for (j, &xv) in xr.iter().enumerate() {
                if !xv.is_finite() {
                    return Err(Error::NonFinite {
                        row,
                        column: format!("x{}", j + 1),
                    });
                }
            }
        }
        let treated: Vec<usize> = (0..n).filter(|&i| w[i]).collect();
        let controls: Vec<usize> = (0..n).filter(|&i| !w[i]).collect();
        if treated.is_empty() {
            return Err(Error::NoTreated);
        }
        if controls.is_empty() {
            return Err(Error::NoControls);
        }
        Ok(Sample {
            y,
            w,
            x: Mat::from_rows(x_rows)?,
            row_id: (0..n).collect(),
            treated,
            controls,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n1(&self) -> usize {
        self.treated.len()
    }

    pub fn n0(&self) -> usize {
        self.controls.len()
    }

    pub fn k(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn y(&self, row: usize) -> f64 {
        self.y[row]
    }

    #[inline]
    pub fn is_treated(&self, row: usize) -> bool {
        self.w[row]
    }

    #[inline]
    pub fn x_row(&self, row: usize) -> &[f64] {
        self.x.row(row)
    }

    pub fn row_id(&self, row: usize) -> usize {
        self.row_id[row]
    }

    /// Row indices of treated units, in input order.
    pub fn treated_rows(&self) -> &[usize] {
        &self.treated
    }

    /// Row indices of control units, in input order.
    pub fn control_rows(&self) -> &[usize] {
        &self.controls
    }
}

/// Sample covariance matrix of the control covariates (denominator N0 - 1).
///
/// Errors when fewer than two controls are present or when the matrix has a
/// zero-variance direction, which makes the Mahalanobis metric unavailable.
pub fn control_covariance(sample: &Sample) -> Result<Mat> {
    let controls = sample.control_rows();
    let n0 = controls.len();
    if n0 < 2 {
        return Err(Error::Data(
            "control covariance needs at least two controls".into(),
        ));
    }
    let k = sample.k();
    let mut mean = vec![0.0; k];
    for &row in controls {
        for (m, &v) in mean.iter_mut().zip(sample.x_row(row)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n0 as f64;
    }
    let mut cov = Mat::zeros(k, k);
    for &row in controls {
        let xr = sample.x_row(row);
        for a in 0..k {
            let da = xr[a] - mean[a];
            for b in a..k {
                let v = cov.get(a, b) + da * (xr[b] - mean[b]);
                cov.set(a, b, v);
            }
        }
    }
    for a in 0..k {
        for b in a..k {
            let v = cov.get(a, b) / (n0 - 1) as f64;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    // a covariance that cannot be factorized has a zero-variance direction
    if cov.cholesky().is_none() {
        return Err(Error::Singular {
            context: "control covariance".into(),
        });
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(vals: &[f64]) -> Vec<Vec<f64>> {
        vals.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn minimal_valid_sample() {
        let s = Sample::from_columns(
            vec![1.0, 2.0, 3.0],
            &[1.0, 0.0, 0.0],
            &col(&[0.1, 0.2, 0.3]),
        )
        .unwrap();
        assert_eq!(s.n1(), 1);
        assert_eq!(s.n0(), 2);
        assert_eq!(s.k(), 1);
        assert_eq!(s.treated_rows(), &[0]);
        assert_eq!(s.row_id(2), 2);
    }

    #[test]
    fn rejects_non_binary_treatment() {
        let err = Sample::from_columns(vec![1.0, 2.0], &[1.0, 2.0], &col(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(
            err,
            Error::NonBinaryTreatment { row: 1, value } if value == 2.0
        ));
    }

    #[test]
    fn rejects_non_finite_outcome_naming_row() {
        let err = Sample::from_columns(
            vec![1.0, f64::NAN, 3.0],
            &[1.0, 0.0, 0.0],
            &col(&[0.0, 0.0, 0.0]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, ref column } if column == "y"));
    }

    #[test]
    fn rejects_non_finite_covariate() {
        let err = Sample::from_columns(
            vec![1.0, 2.0],
            &[1.0, 0.0],
            &[vec![0.0, 1.0], vec![0.0, f64::INFINITY]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, ref column } if column == "x2"));
    }

    #[test]
    fn rejects_single_group_samples() {
        assert!(matches!(
            Sample::from_columns(vec![1.0, 2.0], &[1.0, 1.0], &col(&[0.0, 0.0])),
            Err(Error::NoControls)
        ));
        assert!(matches!(
            Sample::from_columns(vec![1.0, 2.0], &[0.0, 0.0], &col(&[0.0, 0.0])),
            Err(Error::NoTreated)
        ));
    }

    #[test]
    fn rejects_zero_covariates() {
        assert!(matches!(
            Sample::from_columns(vec![1.0, 2.0], &[1.0, 0.0], &[vec![], vec![]]),
            Err(Error::NoCovariates)
        ));
    }

    #[test]
    fn control_covariance_k1_hand_value() {
        // controls at x = 0 and 2: var {0,2} with denominator 1 is 2.0
        let s = Sample::from_columns(
            vec![0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &col(&[5.0, 0.0, 2.0]),
        )
        .unwrap();
        let cov = control_covariance(&s).unwrap();
        assert!((cov.get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn control_covariance_k2_hand_value() {
        // controls {(1,0),(0,1),(-1,-1)}: covariance [[1,0.5],[0.5,1]]
        let s = Sample::from_columns(
            vec![0.0; 4],
            &[1.0, 0.0, 0.0, 0.0],
            &[
                vec![9.0, 9.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![-1.0, -1.0],
            ],
        )
        .unwrap();
        let cov = control_covariance(&s).unwrap();
        assert!((cov.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((cov.get(0, 1) - 0.5).abs() < 1e-12);
        assert!((cov.get(1, 0) - 0.5).abs() < 1e-12);
        assert!((cov.get(1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn control_covariance_identical_controls_is_singular() {
        let s = Sample::from_columns(
            vec![0.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &col(&[5.0, 3.0, 3.0]),
        )
        .unwrap();
        assert!(matches!(
            control_covariance(&s),
            Err(Error::Singular { .. })
        ));
    }
}
