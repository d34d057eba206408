//! Truncated Gaussian moments behind the scale learner.
//!
//! `J_k(L, V, a) = ∫_0^a η^k exp(-Lη - Vη²) dη` for `k ∈ {0, 1}`, returned as
//! logarithms. With `y = sqrt(V) η + c`, `c = L / (2 sqrt(V))` and
//! `b = c + a sqrt(V)` the exponent becomes `c² - y²`; the maximum `M` over
//! `[c, b]` is pulled out and the remaining factor is written with `erfcx`
//! so that neither a huge `L²/(4V)` nor a large `|L| a` overflows.

use super::LearnerError;
use crate::special::{adaptive_integrate, erf, erfcx, erfcx_gap, gl20_integrate};

const HALF_SQRT_PI: f64 = 0.886_226_925_452_758;

/// Below this spread of the exponent over `[0, a]` a single Gauss–Legendre
/// panel is exact to rounding.
const SMOOTH_SPREAD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnMoments {
    pub ln_j0: f64,
    pub ln_j1: f64,
}

fn exponent(l: f64, v: f64, eta: f64) -> f64 {
    -eta * (l + v * eta)
}

/// `ln ∫_0^a e^{-η²} dη`.
pub fn ln_normalizer(a: f64) -> f64 {
    (HALF_SQRT_PI * erf(a)).ln()
}

fn check_args(l: f64, v: f64, a: f64) -> Result<(), LearnerError> {
    if !(l.is_finite() && v.is_finite() && a.is_finite()) || v <= 0.0 || a <= 0.0 {
        return Err(LearnerError::NumericalInstability(format!("moment arguments out of range: L={l}, V={v}, a={a}")));
    }
    Ok(())
}

/// Maximum of the exponent on `[0, a]` and its spread.
fn peak(l: f64, v: f64, a: f64) -> (f64, f64) {
    let sv = v.sqrt();
    let c = l / (2.0 * sv);
    let b = c + a * sv;
    let m = if c >= 0.0 {
        0.0
    } else if b <= 0.0 {
        -a * sv * (c + b)
    } else {
        c * c
    };
    let low = exponent(l, v, a).min(0.0);
    (m, m - low)
}

pub fn ln_moments(l: f64, v: f64, a: f64) -> Result<LnMoments, LearnerError> {
    check_args(l, v, a)?;
    let (m, spread) = peak(l, v, a);
    let (k0, k1, ln_scale0, ln_scale1) = if spread < SMOOTH_SPREAD {
        let k0 = gl20_integrate(&|eta: f64| (exponent(l, v, eta) - m).exp(), 0.0, a);
        let k1 = gl20_integrate(&|eta: f64| (exponent(l, v, eta) - m).exp() * eta, 0.0, a);
        (k0, k1, 0.0, 0.0)
    } else {
        let (k0, k1) = scaled_closed_form(l, v, a);
        (k0, k1, -0.5 * v.ln(), -v.ln())
    };
    if !(k0 > 0.0 && k1 > 0.0 && k0.is_finite() && k1.is_finite()) {
        return Err(LearnerError::NumericalInstability(format!(
            "non-positive moment for L={l}, V={v}, a={a}: K0={k0}, K1={k1}"
        )));
    }
    Ok(LnMoments { ln_j0: m + k0.ln() + ln_scale0, ln_j1: m + k1.ln() + ln_scale1 })
}

/// `(K0, K1)` with `J0 = e^M K0 / sqrt(V)` and `J1 = e^M K1 / V`.
fn scaled_closed_form(l: f64, v: f64, a: f64) -> (f64, f64) {
    let s = HALF_SQRT_PI;
    let sv = v.sqrt();
    let c = l / (2.0 * sv);
    let b = c + a * sv;
    if c >= 0.0 {
        // e^{c²-b²} = e^{-a sqrt(V) (b + c)}
        let damp = (-a * sv * (b + c)).exp();
        let k0 = s * (erfcx(c) - damp * erfcx(b));
        let k1 = erfcx_gap(c) - damp * (erfcx_gap(b) + a * sv * s * erfcx(b));
        (k0, k1)
    } else if b <= 0.0 {
        let (p, q) = (-b, -c);
        let damp = (-a * sv * (p + q)).exp();
        let k0 = s * (erfcx(p) - damp * erfcx(q));
        let k1 = (a * sv * s * erfcx(p) - erfcx_gap(p)) + damp * erfcx_gap(q);
        (k0, k1)
    } else {
        let q = -c;
        let k0 = s * (erf(b) + erf(q));
        let k1 = 0.5 * ((-c * c).exp() - (-b * b).exp()) + q * k0;
        (k0, k1)
    }
}

/// `ln J_k` by adaptive quadrature, refined around the peak of the
/// integrand and both endpoints.
pub fn quadrature_ln_moment(l: f64, v: f64, a: f64, k: u32, rel_tol: f64) -> f64 {
    let (m, _) = peak(l, v, a);
    let f = |eta: f64| (exponent(l, v, eta) - m).exp() * eta.powi(k as i32);
    let mut cuts = vec![0.0, a];
    let interior = -l / (2.0 * v);
    let mut anchors = vec![0.0, a];
    if interior > 0.0 && interior < a {
        anchors.push(interior);
    }
    for &p in &anchors {
        cuts.push(p);
        let mut h = a;
        for _ in 0..60 {
            h *= 0.5;
            for x in [p - h, p + h] {
                if x > 0.0 && x < a {
                    cuts.push(x);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let panels: Vec<(f64, f64)> = cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect();
    let rough: f64 = panels.iter().map(|&(lo, hi)| gl20_integrate(&f, lo, hi)).sum();
    let tol = rel_tol * rough;
    let total: f64 = panels.iter().map(|&(lo, hi)| adaptive_integrate(&f, lo, hi, tol)).sum();
    m + total.ln()
}

/// `E_ρ[η exp(-Lη - (V-1)η²)]` written as the textbook antiderivative, without
/// any rescaling. Only usable for moderate `L`, `V`.
pub fn direct_closed_form_mean(l: f64, v: f64, a: f64) -> f64 {
    let sv = v.sqrt();
    let c = l / (2.0 * sv);
    let b = (2.0 * a * v + l) / (2.0 * sv);
    let j1 = (1.0 - (-v * a * a - l * a).exp()) / (2.0 * v)
        - l * std::f64::consts::PI.sqrt() / (4.0 * v.powf(1.5)) * (c * c).exp() * (erf(b) - erf(c));
    j1 / (HALF_SQRT_PI * erf(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn empty_history_moment() {
        let a = 0.05;
        let m = ln_moments(0.0, 1.0, a).unwrap();
        let z = ln_normalizer(a).exp();
        assert!(rel(m.ln_j0.exp(), z) < 1e-14);
        let mean = (m.ln_j1 - ln_normalizer(a)).exp();
        let expected = (1.0 - (-a * a).exp()) / (2.0 * z);
        assert!(rel(mean, expected) < 1e-13);
        assert!(rel(direct_closed_form_mean(0.0, 1.0, a), expected) < 1e-13);
    }

    #[test]
    fn branches_match_quadrature() {
        let a = 1.0 / 60.0;
        for &l in &[-5e5, -3e4, -2000.0, -300.0, -50.0, -1.0, 0.0, 3.0, 80.0, 500.0, 4e4, 1e6] {
            for &v in &[1.0, 10.0, 1e3, 1e5, 1e7, 1e9] {
                let m = ln_moments(l, v, a).unwrap();
                for (k, got) in [(0, m.ln_j0), (1, m.ln_j1)] {
                    let q = quadrature_ln_moment(l, v, a, k, 1e-13);
                    let err = (got - q).abs();
                    assert!(err < 1e-9, "L={l} V={v} k={k}: {got} vs {q}");
                }
            }
        }
    }

    #[test]
    fn direct_form_agrees_where_it_is_safe() {
        let a = 0.02;
        for &(l, v) in &[(-3.0, 5.0), (7.0, 3.0), (2.0, 40.0), (-100.0, 300.0)] {
            let m = ln_moments(l, v, a).unwrap();
            let stable = (m.ln_j1 - ln_normalizer(a)).exp();
            assert!(rel(direct_closed_form_mean(l, v, a), stable) < 1e-8, "L={l} V={v}");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(ln_moments(f64::NAN, 1.0, 0.1).is_err());
        assert!(ln_moments(0.0, 0.0, 0.1).is_err());
        assert!(ln_moments(0.0, 1.0, 0.0).is_err());
    }
}
