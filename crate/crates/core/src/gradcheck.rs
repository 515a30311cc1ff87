//! Central-difference gradient verification.
//!
//! The checker only ever calls the supplied loss closure at perturbed
//! parameter vectors, so it stays independent of whatever analytic backward
//! path produced the gradients under test.

/// Numeric gradient of `f` at `at` by central differences with step `eps`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, at: &[f64], eps: f64) -> Vec<f64> {
    let mut point = at.to_vec();
    let mut out = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = point[i];
        point[i] = orig + eps;
        let plus = f(&point);
        point[i] = orig - eps;
        let minus = f(&point);
        point[i] = orig;
        out.push((plus - minus) / (2.0 * eps));
    }
    out
}

/// Outcome of comparing analytic and numeric gradients.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

/// Entry-wise relative error `|a − n| / max(|a|, |n|, 1e-6)`.
///
/// The floor keeps near-zero gradients from amplifying central-difference
/// noise (~1e-11 absolute for unit-scale losses at eps = 1e-5) into spurious
/// failures.
pub fn compare(analytic: &[f64], numeric: &[f64]) -> FdReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        if rel > report.max_rel_err {
            report = FdReport {
                max_rel_err: rel,
                worst_index: i,
                analytic_at_worst: a,
                numeric_at_worst: n,
            };
        }
    }
    report
}
