//! Error-function family and quadrature used by the scale learner.
//!
//! `erf` uses the everywhere-convergent series
//! `erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (2n+1)!!`
//! below `CF_SWITCH`, and the Laplace continued fraction for the
//! complementary tail above it.

use std::f64::consts::PI;
use std::sync::OnceLock;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const SQRT_PI: f64 = 1.772_453_850_905_516;
const CF_SWITCH: f64 = 2.0;

fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= 2.0 * x2 / (2.0 * n as f64 + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

/// `a1/(x + a2/(x + a3/(x + ...)))` with `a_j = j/2`, by modified Lentz.
fn laplace_tail(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = TINY;
    let mut c = f;
    let mut d = 0.0;
    for j in 1..5000 {
        let a = j as f64 * 0.5;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return -erf(-x);
    }
    if x < CF_SWITCH {
        erf_series(x)
    } else {
        1.0 - erfc(x)
    }
}

pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < CF_SWITCH {
        1.0 - erf_series(x)
    } else if x > 27.3 {
        0.0
    } else {
        erfcx(x) * (-x * x).exp()
    }
}

/// Scaled complementary error function `exp(x^2) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < CF_SWITCH {
        (x * x).exp() * (1.0 - erf_series(x))
    } else {
        1.0 / (SQRT_PI * (x + laplace_tail(x)))
    }
}

/// `1/2 - x (sqrt(pi)/2) erfcx(x)` for `x >= 0`, free of cancellation for
/// large `x` where it behaves like `1/(4x^2)`.
pub fn erfcx_gap(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < CF_SWITCH {
        0.5 - x * 0.5 * SQRT_PI * erfcx(x)
    } else {
        let t = laplace_tail(x);
        t / (2.0 * (x + t))
    }
}

/// `ln(max(e, x))`.
pub fn ln_plus(x: f64) -> f64 {
    if x > std::f64::consts::E {
        x.ln()
    } else {
        1.0
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        xs[i] = -z;
        xs[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

/// 20-point Gauss–Legendre on `[lo, hi]`.
pub fn gl20_integrate<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> f64 {
    let (xs, ws) = gl20();
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    xs.iter().zip(ws).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Adaptive bisection on 20-point Gauss–Legendre panels. A panel is accepted
/// when it agrees with the sum of its halves to within its share of
/// `abs_tol`; the share halves with every split.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, abs_tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (lo + hi);
        let left = gl20_integrate(f, lo, mid);
        let right = gl20_integrate(f, mid, hi);
        let halves = left + right;
        if depth == 0 || (halves - whole).abs() <= tol.max(64.0 * f64::EPSILON * halves.abs()) {
            halves
        } else {
            rec(f, lo, mid, left, 0.5 * tol, depth - 1) + rec(f, mid, hi, right, 0.5 * tol, depth - 1)
        }
    }
    let whole = gl20_integrate(f, lo, hi);
    rec(f, lo, hi, whole, abs_tol, 30)
}
