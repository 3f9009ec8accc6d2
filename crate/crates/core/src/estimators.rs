//! Replicate-based estimates of `d_2(mu, nu) = sup_{osc f <= 1} ||mu(f) - nu(f)||_2`.
//!
//! For replicate deviations `D_r = mu_r - nu_r`, the map `f -> sqrt(mean_r (D_r . f)^2)`
//! is convex, so its supremum over `[0, 1]^d` is attained at an indicator. Up to
//! [`EXACT_SUBSET_LIMIT`] states every subset is enumerated; beyond that a fixed
//! dictionary of test functions is used.

use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Largest dimension for which `d_2` is computed exactly by subset enumeration.
pub const EXACT_SUBSET_LIMIT: usize = 16;
/// Size of the fallback dictionary.
pub const DICTIONARY_SIZE: usize = 32;

/// `d_2` estimate together with the maximizing function.
#[derive(Debug, Clone, PartialEq)]
pub struct D2Estimate {
    pub value: f64,
    pub maximizer: Vec<f64>,
    /// Set when every subset was enumerated.
    pub exact: bool,
}

fn gram(deviations: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    let first = deviations.first().ok_or_else(|| invalid("no replicates"))?;
    let d = first.len();
    let mut c = vec![0.0; d * d];
    for dev in deviations {
        if dev.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: dev.len() });
        }
        for i in 0..d {
            if dev[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                c[i * d + j] += dev[i] * dev[j];
            }
        }
    }
    let r = deviations.len() as f64;
    c.iter_mut().for_each(|v| *v /= r);
    Ok((d, c))
}

fn quad(d: usize, c: &[f64], f: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        if f[i] == 0.0 {
            continue;
        }
        for j in 0..d {
            s += f[i] * c[i * d + j] * f[j];
        }
    }
    s
}

/// `sup_{osc f <= 1} sqrt(mean_r (D_r . f)^2)`.
pub fn d2_sup(deviations: &[Vec<f64>]) -> Result<D2Estimate> {
    let (d, c) = gram(deviations)?;
    if d <= EXACT_SUBSET_LIMIT {
        let mut best = (0.0, 0u32);
        for mask in 0u32..(1u32 << d) {
            let mut s = 0.0;
            for i in 0..d {
                if mask >> i & 1 == 0 {
                    continue;
                }
                for j in 0..d {
                    if mask >> j & 1 == 1 {
                        s += c[i * d + j];
                    }
                }
            }
            if s > best.0 {
                best = (s, mask);
            }
        }
        return Ok(D2Estimate {
            value: best.0.max(0.0).sqrt(),
            maximizer: (0..d).map(|i| f64::from(best.1 >> i & 1)).collect(),
            exact: true,
        });
    }
    let mut best = (0.0, vec![0.0; d]);
    for f in osc_dictionary(d) {
        let s = quad(d, &c, &f);
        if s > best.0 {
            best = (s, f);
        }
    }
    Ok(D2Estimate {
        value: best.0.max(0.0).sqrt(),
        maximizer: best.1,
        exact: false,
    })
}

/// `sqrt(mean_r (D_r . f)^2)` for one function.
pub fn l2_norm(deviations: &[Vec<f64>], f: &[f64]) -> Result<f64> {
    if deviations.is_empty() {
        return Err(invalid("no replicates"));
    }
    let mut s = 0.0;
    for dev in deviations {
        if dev.len() != f.len() {
            return Err(Error::DimensionMismatch { expected: f.len(), got: dev.len() });
        }
        let v: f64 = dev.iter().zip(f).map(|(a, b)| a * b).sum();
        s += v * v;
    }
    Ok((s / deviations.len() as f64).sqrt())
}

/// Fixed dictionary of `[0, 1]`-valued functions: singletons, thresholds,
/// ramps and seeded random subsets, [`DICTIONARY_SIZE`] entries in total.
pub fn osc_dictionary(dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(DICTIONARY_SIZE);
    let indicator = |pred: &dyn Fn(usize) -> bool| (0..dim).map(|x| if pred(x) { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    for x in 0..dim.min(12) {
        out.push(indicator(&|y| y == x));
    }
    for k in 1..=8usize {
        let cut = k * dim / 9;
        if cut > 0 && cut < dim {
            out.push(indicator(&|y| y < cut));
        }
    }
    if dim > 1 {
        let den = (dim - 1) as f64;
        out.push((0..dim).map(|x| x as f64 / den).collect());
        out.push((0..dim).map(|x| (2.0 * x as f64 / den - 1.0).abs()).collect());
    }
    out.push(indicator(&|y| y % 2 == 0));
    let mut rng = crate::generators::seeded(0x0d1c);
    while out.len() < DICTIONARY_SIZE {
        out.push((0..dim).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect());
    }
    out.truncate(DICTIONARY_SIZE);
    out
}

/// Mean and standard error `sd / sqrt(R)` of a sample.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let r = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / r;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Pass rule for a one-sided probability bound: `freq <= bound + 3 sqrt(bound(1-bound)/R)`.
pub fn frequency_within(freq: f64, bound: f64, replicates: usize) -> bool {
    let p = bound.clamp(0.0, 1.0);
    freq <= p + 3.0 * (p * (1.0 - p) / replicates as f64).sqrt()
}
