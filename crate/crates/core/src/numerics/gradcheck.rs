/// Outcome of a central-difference gradient comparison.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)` per coordinate.
    pub rel_errors: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub passed: bool,
}

/// Denominator floor so that coordinates with (near) zero gradient are
/// judged on absolute error.
const REL_FLOOR: f64 = 1e-6;

/// Compares `grads` with central differences `(L(θ+h) − L(θ−h)) / 2h`.
///
/// Report-only: never panics on a mismatch.
pub fn finite_diff_check(
    mut loss: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    grads: &[f64],
    h: f64,
    tol: f64,
) -> GradCheckReport {
    assert_eq!(params.len(), grads.len(), "params and grads differ in length");
    let mut theta = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut rel_errors = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = theta[i];
        theta[i] = orig + h;
        let up = loss(&theta);
        theta[i] = orig - h;
        let down = loss(&theta);
        theta[i] = orig;
        let n = (up - down) / (2.0 * h);
        let a = grads[i];
        let denom = a.abs().max(n.abs()).max(REL_FLOOR);
        numeric.push(n);
        rel_errors.push((a - n).abs() / denom);
    }
    let (worst_index, max_rel_error) = rel_errors
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 || e.is_nan() { (i, e) } else { acc });
    GradCheckReport {
        passed: max_rel_error <= tol && !max_rel_error.is_nan(),
        rel_errors,
        numeric,
        max_rel_error,
        worst_index,
    }
}
