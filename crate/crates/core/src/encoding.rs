//! Bit-exact gradient codecs.
//!
//! * Deterministic grid: every coordinate is located in one of `2^q` equal
//!   cells of `[-G, G]` (`q = floor(k/d)`) and decoded to the cell midpoint.
//!   Cell indices are written big-endian, coordinate after coordinate.
//! * Sparsified quantization: `m` independent repetitions, each carrying a
//!   uniformly drawn coordinate index, a sign bit, the `p`-bit truncated
//!   magnitude and one Bernoulli rounding bit. The decoder averages
//!   `d * x~_i * e_i` over repetitions, which is unbiased.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("gradient norm {norm} exceeds the bound {bound}")]
    NormExceeded { norm: f64, bound: f64 },
    #[error("{bits} bits cannot hold one {what}")]
    BudgetTooSmall { bits: usize, what: &'static str },
    #[error("payload has {got} bits, expected {expected}")]
    PayloadLength { got: usize, expected: usize },
    #[error("operation needs a {0} encoder")]
    WrongKind(&'static str),
    #[error("invalid encoder parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    DeterministicGrid,
    SparsifiedQuantization,
}

/// Bits per coordinate beyond which `f64` bisection stops refining.
pub const F64_GRID_BITS: usize = 52;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub dim: usize,
    pub grad_bound: f64,
    pub bits_per_gradient: usize,
    /// Magnitude bits `p` (stochastic only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<usize>,
}

/// `ceil(log2 d)`, with 0 for `d = 1`.
pub fn index_bits(d: usize) -> usize {
    if d <= 1 {
        0
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as usize
    }
}

impl EncoderSpec {
    pub fn deterministic(dim: usize, grad_bound: f64, bits: usize) -> Result<Self, EncodingError> {
        let s =
            Self { kind: EncoderKind::DeterministicGrid, dim, grad_bound, bits_per_gradient: bits, precision: None };
        s.validate()?;
        Ok(s)
    }

    pub fn stochastic(dim: usize, grad_bound: f64, bits: usize, precision: usize) -> Result<Self, EncodingError> {
        let s = Self {
            kind: EncoderKind::SparsifiedQuantization,
            dim,
            grad_bound,
            bits_per_gradient: bits,
            precision: Some(precision),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), EncodingError> {
        if self.dim == 0 {
            return Err(EncodingError::InvalidParameter("dimension must be positive".into()));
        }
        if !(self.grad_bound.is_finite() && self.grad_bound > 0.0) {
            return Err(EncodingError::InvalidParameter("gradient bound must be positive".into()));
        }
        match self.kind {
            EncoderKind::DeterministicGrid => {
                if self.cell_bits() == 0 {
                    return Err(EncodingError::BudgetTooSmall {
                        bits: self.bits_per_gradient,
                        what: "bit per coordinate",
                    });
                }
            }
            EncoderKind::SparsifiedQuantization => {
                if self.precision.is_none() {
                    return Err(EncodingError::InvalidParameter("stochastic encoder needs a precision".into()));
                }
                if self.repetitions() == 0 {
                    return Err(EncodingError::BudgetTooSmall {
                        bits: self.bits_per_gradient,
                        what: "quantization repetition",
                    });
                }
            }
        }
        Ok(())
    }

    /// `q = floor(k/d)` (deterministic).
    pub fn cell_bits(&self) -> usize {
        self.bits_per_gradient / self.dim
    }

    /// Bits per stochastic repetition: `ceil(log2 d) + p + 2`.
    pub fn repetition_bits(&self) -> usize {
        index_bits(self.dim) + self.precision.unwrap_or(0) + 2
    }

    /// `m = floor(k / (ceil(log2 d) + p + 2))` (stochastic).
    pub fn repetitions(&self) -> usize {
        self.bits_per_gradient / self.repetition_bits()
    }

    pub fn payload_len(&self) -> usize {
        match self.kind {
            EncoderKind::DeterministicGrid => self.dim * self.cell_bits(),
            EncoderKind::SparsifiedQuantization => self.repetitions() * self.repetition_bits(),
        }
    }

    /// Worst-case `||x^ - x||`: `sqrt(d) 2^-q G` for the grid (floored at the
    /// `f64` grid for `q > 52`), and 0 for the unbiased stochastic codec.
    pub fn error_bound(&self) -> f64 {
        match self.kind {
            EncoderKind::DeterministicGrid => {
                let q = self.cell_bits().min(F64_GRID_BITS) as i32;
                (self.dim as f64).sqrt() * 2f64.powi(-q) * self.grad_bound
            }
            EncoderKind::SparsifiedQuantization => 0.0,
        }
    }

    /// Bound on `||x^||`: `G + eps` for the grid and `2dG` for the stochastic codec.
    pub fn decoded_norm_bound(&self) -> f64 {
        match self.kind {
            EncoderKind::DeterministicGrid => self.grad_bound + self.error_bound(),
            EncoderKind::SparsifiedQuantization => 2.0 * self.dim as f64 * self.grad_bound,
        }
    }

    fn check_norm(&self, x: &[f64]) -> Result<(), EncodingError> {
        if x.len() != self.dim {
            return Err(EncodingError::InvalidParameter(format!(
                "vector has {} coordinates, encoder expects {}",
                x.len(),
                self.dim
            )));
        }
        let norm = norm(x);
        if !(norm <= self.grad_bound * (1.0 + 1e-12)) {
            return Err(EncodingError::NormExceeded { norm, bound: self.grad_bound });
        }
        Ok(())
    }

    fn check_len(&self, bits: &[bool]) -> Result<(), EncodingError> {
        if bits.len() != self.payload_len() {
            return Err(EncodingError::PayloadLength { got: bits.len(), expected: self.payload_len() });
        }
        Ok(())
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Big-endian hex rendering of a bit string, zero-padded to whole nibbles.
pub fn bits_to_hex(bits: &[bool]) -> String {
    bits.chunks(4)
        .map(|c| {
            let mut v = 0u8;
            for i in 0..4 {
                v = (v << 1) | u8::from(c.get(i).copied().unwrap_or(false));
            }
            char::from_digit(v as u32, 16).unwrap()
        })
        .collect()
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn encode_deterministic(x: &[f64], spec: &EncoderSpec) -> Result<Vec<bool>, EncodingError> {
    if spec.kind != EncoderKind::DeterministicGrid {
        return Err(EncodingError::WrongKind("deterministic"));
    }
    spec.check_norm(x)?;
    let g = spec.grad_bound;
    let q = spec.cell_bits();
    let mut bits = Vec::with_capacity(spec.payload_len());
    for &xi in x {
        let xi = xi.clamp(-g, g);
        let (mut lo, mut hi) = (-g, g);
        for _ in 0..q {
            let mid = 0.5 * (lo + hi);
            if xi >= mid {
                bits.push(true);
                lo = mid;
            } else {
                bits.push(false);
                hi = mid;
            }
        }
    }
    Ok(bits)
}

pub fn decode_deterministic(bits: &[bool], spec: &EncoderSpec) -> Result<Vec<f64>, EncodingError> {
    if spec.kind != EncoderKind::DeterministicGrid {
        return Err(EncodingError::WrongKind("deterministic"));
    }
    spec.check_len(bits)?;
    let g = spec.grad_bound;
    let q = spec.cell_bits();
    Ok(bits
        .chunks(q)
        .map(|cell| {
            let (mut lo, mut hi) = (-g, g);
            for &b in cell {
                let mid = 0.5 * (lo + hi);
                if b {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect())
}

/// Truncated level `floor(2^p |v| / G)` (capped at `2^p - 1`) and the
/// probability of rounding it up.
pub fn quantize_level(v: f64, g: f64, p: usize) -> (u64, f64) {
    let scale = 2f64.powi(p as i32);
    let top = (1u64 << p) - 1;
    let mag = v.abs().min(g);
    let level = ((scale * mag / g).floor() as u64).min(top);
    let prob = (scale / g * (mag - level as f64 * g / scale)).clamp(0.0, 1.0);
    (level, prob)
}

/// Bits of one repetition with the random choices made explicit.
pub fn encode_repetition(
    x: &[f64],
    spec: &EncoderSpec,
    index: usize,
    round_up: bool,
) -> Result<Vec<bool>, EncodingError> {
    if spec.kind != EncoderKind::SparsifiedQuantization {
        return Err(EncodingError::WrongKind("stochastic"));
    }
    if index >= spec.dim {
        return Err(EncodingError::InvalidParameter(format!("index {index} out of range")));
    }
    let p = spec.precision.unwrap_or(0);
    let ib = index_bits(spec.dim);
    let mut bits = Vec::with_capacity(spec.repetition_bits());
    push_be(&mut bits, index as u64, ib);
    bits.push(x[index] < 0.0);
    let (level, _) = quantize_level(x[index], spec.grad_bound, p);
    push_be(&mut bits, level, p);
    bits.push(round_up);
    Ok(bits)
}

fn push_be(bits: &mut Vec<bool>, v: u64, width: usize) {
    for j in (0..width).rev() {
        bits.push((v >> j) & 1 == 1);
    }
}

fn read_be(bits: &[bool]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
}

pub fn encode_stochastic<R: Rng + ?Sized>(
    x: &[f64],
    spec: &EncoderSpec,
    rng: &mut R,
) -> Result<Vec<bool>, EncodingError> {
    if spec.kind != EncoderKind::SparsifiedQuantization {
        return Err(EncodingError::WrongKind("stochastic"));
    }
    spec.check_norm(x)?;
    let p = spec.precision.unwrap_or(0);
    let mut bits = Vec::with_capacity(spec.payload_len());
    for _ in 0..spec.repetitions() {
        let i = rng.gen_range(0..spec.dim);
        let (_, prob) = quantize_level(x[i], spec.grad_bound, p);
        let up = prob > 0.0 && rng.gen_bool(prob);
        bits.extend(encode_repetition(x, spec, i, up)?);
    }
    Ok(bits)
}

pub fn decode_stochastic(bits: &[bool], spec: &EncoderSpec) -> Result<Vec<f64>, EncodingError> {
    if spec.kind != EncoderKind::SparsifiedQuantization {
        return Err(EncodingError::WrongKind("stochastic"));
    }
    spec.check_len(bits)?;
    let p = spec.precision.unwrap_or(0);
    let ib = index_bits(spec.dim);
    let m = spec.repetitions();
    let step = spec.grad_bound / 2f64.powi(p as i32);
    let mut out = vec![0.0; spec.dim];
    for rep in bits.chunks(spec.repetition_bits()) {
        let i = read_be(&rep[..ib]) as usize;
        if i >= spec.dim {
            return Err(EncodingError::InvalidParameter(format!("index {i} out of range")));
        }
        let sign = if rep[ib] { -1.0 } else { 1.0 };
        let level = read_be(&rep[ib + 1..ib + 1 + p]);
        let up = rep[ib + 1 + p];
        let tilde = sign * step * (level as f64 + f64::from(u8::from(up)));
        out[i] += spec.dim as f64 * tilde / m as f64;
    }
    Ok(out)
}

/// Encodes with whichever codec `spec` names.
pub fn encode<R: Rng + ?Sized>(x: &[f64], spec: &EncoderSpec, rng: &mut R) -> Result<Vec<bool>, EncodingError> {
    match spec.kind {
        EncoderKind::DeterministicGrid => encode_deterministic(x, spec),
        EncoderKind::SparsifiedQuantization => encode_stochastic(x, spec, rng),
    }
}

pub fn decode(bits: &[bool], spec: &EncoderSpec) -> Result<Vec<f64>, EncodingError> {
    match spec.kind {
        EncoderKind::DeterministicGrid => decode_deterministic(bits, spec),
        EncoderKind::SparsifiedQuantization => decode_stochastic(bits, spec),
    }
}

/// `(alpha, beta)` with `E||x^ - x||^2 <= alpha ||x||^2 + beta`, i.e.
/// `(2d/m, G^2/m)`. Requires `p >= ceil(log2 d)`.
pub fn variance_bound(spec: &EncoderSpec) -> Result<(f64, f64), EncodingError> {
    if spec.kind != EncoderKind::SparsifiedQuantization {
        return Err(EncodingError::WrongKind("stochastic"));
    }
    let p = spec.precision.unwrap_or(0);
    if p < index_bits(spec.dim) {
        return Err(EncodingError::InvalidParameter(format!(
            "precision {p} below ceil(log2 d) = {}",
            index_bits(spec.dim)
        )));
    }
    let m = spec.repetitions() as f64;
    Ok((2.0 * spec.dim as f64 / m, spec.grad_bound * spec.grad_bound / m))
}
