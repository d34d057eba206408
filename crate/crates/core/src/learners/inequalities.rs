//! Scalar inequalities used by the potential argument, as executable checks.

use super::LearnerError;

/// Rounding allowance for comparisons of `exp` values near 1.
const ROUNDING: f64 = 8.0 * f64::EPSILON;

/// Checks
/// `exp(Σ(-y_i - y_i² - 2a_i|y_i| - 2|x y_i|) - x - x²) ≤ exp(Σ(-y_i - y_i² - 2a_i|y_i|)) - x`
/// for `x, y_i ∈ [-1/(20(1+τ)), 1/(20(1+τ))]` and `a_i ∈ [0, 1/20]`.
pub fn prod_generalization_check(x: f64, ys: &[f64], a: &[f64]) -> Result<bool, LearnerError> {
    let (lhs, rhs) = prod_generalization_sides(x, ys, a)?;
    Ok(lhs <= rhs + ROUNDING * rhs.abs().max(1.0))
}

/// Both sides of the generalized prod inequality.
pub fn prod_generalization_sides(x: f64, ys: &[f64], a: &[f64]) -> Result<(f64, f64), LearnerError> {
    if ys.len() != a.len() {
        return Err(LearnerError::DomainViolation(format!("{} y values but {} a values", ys.len(), a.len())));
    }
    let tau = ys.len() as f64;
    let r = 1.0 / (20.0 * (1.0 + tau));
    if !(x.abs() <= r) {
        return Err(LearnerError::DomainViolation(format!("x = {x} (radius {r})")));
    }
    if let Some(y) = ys.iter().find(|y| !(y.abs() <= r)) {
        return Err(LearnerError::DomainViolation(format!("y = {y} (radius {r})")));
    }
    if let Some(ai) = a.iter().find(|ai| !(**ai >= 0.0 && **ai <= 0.05)) {
        return Err(LearnerError::DomainViolation(format!("a = {ai}")));
    }
    let base: f64 = ys.iter().zip(a).map(|(y, ai)| -y - y * y - 2.0 * ai * y.abs()).sum();
    let cross: f64 = ys.iter().map(|y| 2.0 * (x * y).abs()).sum();
    Ok(((base - cross - x - x * x).exp(), base.exp() - x))
}

/// Largest second difference of `x ↦ exp(-f(x))` on a uniform grid of
/// `[-1/10, 1/10]`, with `f(x) = x + x² + Σ(y_i + y_i² + 2|x||y_i|)`.
/// Non-positive values mean the sampled function is concave.
pub fn exp_concavity_max_second_difference(ys: &[f64], points: usize) -> Result<f64, LearnerError> {
    let tau = ys.len().max(1) as f64;
    if let Some(y) = ys.iter().find(|y| !(y.abs() <= 1.0 / (10.0 * tau))) {
        return Err(LearnerError::DomainViolation(format!("y = {y} (radius {})", 1.0 / (10.0 * tau))));
    }
    if points < 3 {
        return Err(LearnerError::DomainViolation(format!("{points} grid points")));
    }
    let g = |x: f64| {
        let f = x + x * x + ys.iter().map(|y| y + y * y + 2.0 * x.abs() * y.abs()).sum::<f64>();
        (-f).exp()
    };
    let h = 0.2 / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|i| -0.1 + h * i as f64).collect();
    Ok(xs.windows(3).map(|w| g(w[0]) - 2.0 * g(w[1]) + g(w[2])).fold(f64::NEG_INFINITY, f64::max))
}
