//! Central finite-difference gradient checking.
//!
//! Piecewise-linear activations make the loss non-differentiable on a measure
//! zero set. When a probe `x ± h` moves any activation across a kink the
//! finite difference is meaningless, so callers can supply a regime signature
//! and such coordinates are skipped and counted.

use alloc::vec::Vec;

/// Acceptance thresholds for one check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    /// Central-difference step.
    pub step: f64,
    /// Maximum relative error.
    pub rel: f64,
    /// Gradient magnitudes below this are compared in absolute terms.
    pub scale_floor: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel: 1e-4,
            scale_floor: 1e-4,
        }
    }
}

impl Tolerance {
    pub fn relative_error(&self, analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(self.scale_floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub failures: Vec<Mismatch>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.failures.extend(other.failures);
    }
}

/// Checks `analytic` against central differences of `f` at the listed
/// coordinates of `x`. `f` returns the scalar value and a regime signature.
pub fn check_indices<F>(x: &[f64], analytic: &[f64], indices: &[usize], tol: Tolerance, mut f: F) -> CheckReport
where
    F: FnMut(&[f64]) -> (f64, u64),
{
    assert_eq!(x.len(), analytic.len(), "gradient length");
    let (_, base_regime) = f(x);
    let mut probe = x.to_vec();
    let mut report = CheckReport::default();
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + tol.step;
        let (plus, rp) = f(&probe);
        probe[i] = orig - tol.step;
        let (minus, rm) = f(&probe);
        probe[i] = orig;
        if rp != base_regime || rm != base_regime {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * tol.step);
        let rel = tol.relative_error(analytic[i], numeric);
        report.checked += 1;
        report.max_rel_error = report.max_rel_error.max(rel);
        if !(rel < tol.rel) {
            report.failures.push(Mismatch {
                index: i,
                analytic: analytic[i],
                numeric,
                rel_error: rel,
            });
        }
    }
    report
}

/// Checks every coordinate of a smooth function.
pub fn check_function<F>(x: &[f64], analytic: &[f64], tol: Tolerance, mut f: F) -> Result<CheckReport, CheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    let indices: Vec<usize> = (0..x.len()).collect();
    let report = check_indices(x, analytic, &indices, tol, |v| (f(v), 0));
    if report.passed() {
        Ok(report)
    } else {
        Err(report)
    }
}
