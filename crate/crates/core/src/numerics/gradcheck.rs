//! Central-difference gradient verification.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Floor on the denominator of the relative error.
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Coordinate with the largest relative error (`None` if nothing was checked).
    pub worst_index: Option<usize>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }

    /// Combines two reports over disjoint coordinate sets.
    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        if other.max_rel_err > self.max_rel_err {
            GradCheckReport {
                checked: self.checked + other.checked,
                ..other
            }
        } else {
            GradCheckReport {
                checked: self.checked + other.checked,
                ..self
            }
        }
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `f` at every coordinate of `point`.
pub fn finite_diff_check<T: Scalar>(
    f: impl Fn(&[T]) -> T,
    point: &[T],
    analytic: &[T],
    epsilon: f64,
) -> Result<GradCheckReport> {
    let all: Vec<usize> = (0..point.len()).collect();
    finite_diff_check_at(f, point, analytic, epsilon, &all)
}

/// Like [`finite_diff_check`] but only probes the listed coordinates.
pub fn finite_diff_check_at<T: Scalar>(
    f: impl Fn(&[T]) -> T,
    point: &[T],
    analytic: &[T],
    epsilon: f64,
    indices: &[usize],
) -> Result<GradCheckReport> {
    if point.len() != analytic.len() {
        return Err(Error::shape(format!(
            "gradient check: point has {} coordinates, analytic gradient {}",
            point.len(),
            analytic.len()
        )));
    }
    let eps = T::of(epsilon);
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_index: None,
        checked: 0,
    };
    for &i in indices {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x);
        x[i] = orig - eps;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "function value at coordinate {i} is not finite ({plus}, {minus})"
            )));
        }
        let numeric = (plus - minus).to_f64_lossy() / (2.0 * epsilon);
        let err = relative_error(analytic[i].to_f64_lossy(), numeric);
        if report.worst_index.is_none() || err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_index = Some(i);
        }
        report.checked += 1;
    }
    Ok(report)
}
