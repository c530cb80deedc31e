//! Central finite differences.

pub const STEP: f64 = 1e-6;

/// Normwise relative error `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞)` between the analytic
/// gradient `analytic` and central differences of `f` at `x`. Differences are
/// taken over `coords` (every coordinate when `None`); `‖a‖∞` always spans the
/// whole analytic gradient. Returns 0 when both are exactly zero.
pub fn check<F>(mut f: F, x: &[f64], analytic: &[f64], coords: Option<&[usize]>) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let all: Vec<usize> = (0..x.len()).collect();
    let coords = coords.unwrap_or(&all);
    let mut probe = x.to_vec();
    let mut diff = 0.0f64;
    let mut scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + STEP;
        let up = f(&probe);
        probe[i] = orig - STEP;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        diff = diff.max((numeric - analytic[i]).abs());
        scale = scale.max(numeric.abs()).max(analytic[i].abs());
    }
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
