//! Seeded constructors for random flows and problems used by tests, the
//! harness and the demos.

use rand::Rng;

use crate::bounds::{condition_bounded, condition_decreasing};
use crate::error::{invalid, Result};
use crate::measure::{FiniteDistribution, KernelMatrix, PotentialVector};
use crate::oracle::{FlowSpec, FlowStep};
use crate::rng::{Lineage, Phase, StreamRng};

/// Generator stream for a given seed.
pub fn seeded(seed: u64) -> StreamRng {
    Lineage::new(seed, 0).stream(0, Phase::Aux, 0)
}

/// Random distribution with entries bounded away from zero.
pub fn random_distribution(dim: usize, rng: &mut StreamRng) -> Result<FiniteDistribution> {
    FiniteDistribution::from_unnormalized((0..dim).map(|_| 0.05 + rng.random::<f64>()).collect())
}

/// Random Markov kernel; about a third of the off-diagonal entries are zero.
pub fn random_kernel(dim: usize, rng: &mut StreamRng) -> Result<KernelMatrix> {
    let rows = (0..dim)
        .map(|x| {
            let mut row: Vec<f64> = (0..dim)
                .map(|y| if y != x && rng.random::<f64>() < 0.33 { 0.0 } else { rng.random::<f64>() + 1e-3 })
                .collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect();
    KernelMatrix::new(rows)
}

/// Positive potential with `max / min` up to `max_ratio`.
pub fn random_potential(dim: usize, max_ratio: f64, rng: &mut StreamRng) -> Result<PotentialVector> {
    let l = max_ratio.ln();
    PotentialVector::new((0..dim).map(|_| (l * rng.random::<f64>()).exp()).collect())
}

/// Potential with `sup G / inf G = g` exactly.
pub fn potential_with_ratio(dim: usize, g: f64, rng: &mut StreamRng) -> Result<PotentialVector> {
    if dim < 2 {
        return PotentialVector::constant(dim.max(1), 1.0);
    }
    let mut u: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let lo = rng.random_range(0..dim);
    let hi = (lo + 1 + rng.random_range(0..dim - 1)) % dim;
    u[lo] = 0.0;
    u[hi] = 1.0;
    let l = g.ln();
    PotentialVector::new(u.into_iter().map(|v| (l * v).exp()).collect())
}

/// Kernel `b R + (1 - b) C` with `R` random and `C` a rank-one kernel, so `beta <= b`.
pub fn contracting_kernel(dim: usize, b: f64, rng: &mut StreamRng) -> Result<KernelMatrix> {
    let r = random_kernel(dim, rng)?;
    let c = KernelMatrix::constant(&random_distribution(dim, rng)?);
    r.mix(&c, b)
}

/// Unconstrained random flow.
pub fn random_flow(dim: usize, horizon: usize, rng: &mut StreamRng) -> Result<FlowSpec> {
    let initial = random_distribution(dim, rng)?;
    let steps = (0..horizon)
        .map(|_| {
            Ok(FlowStep {
                potential: random_potential(dim, 4.0, rng)?,
                kernel: random_kernel(dim, rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FlowSpec::new(initial, steps)
}

/// Flow with `g_n = M` and `b_n <= a / (a + M)` at every step.
pub fn bounded_flow(dim: usize, horizon: usize, a: f64, m: f64, seed: u64) -> Result<FlowSpec> {
    let b = condition_bounded(m, a)?;
    let mut rng = seeded(seed);
    let initial = random_distribution(dim, &mut rng)?;
    let steps = (0..horizon)
        .map(|_| {
            Ok(FlowStep {
                potential: potential_with_ratio(dim, m, &mut rng)?,
                kernel: contracting_kernel(dim, b, &mut rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FlowSpec::new(initial, steps)
}

/// `g_p = 1 + 2^{-p}`.
pub fn halving_schedule(horizon: usize) -> Vec<f64> {
    (1..=horizon as i32).map(|p| 1.0 + 0.5f64.powi(p)).collect()
}

/// Flow with `g_p` from `g` and `b_p` at the decreasing-regime admissible maximum.
pub fn decreasing_flow(dim: usize, g: &[f64], a: f64, seed: u64) -> Result<FlowSpec> {
    let mut rng = seeded(seed);
    let initial = random_distribution(dim, &mut rng)?;
    let steps = g
        .iter()
        .map(|&gp| {
            let b = condition_decreasing(gp, a)?.b_max;
            Ok(FlowStep {
                potential: potential_with_ratio(dim, gp, &mut rng)?,
                kernel: contracting_kernel(dim, b, &mut rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FlowSpec::new(initial, steps)
}

/// Symmetric nearest-neighbour ring holding with probability `1 - 2 q`.
pub fn lazy_ring(dim: usize, q: f64) -> Result<KernelMatrix> {
    if dim < 3 || !(q > 0.0 && q <= 0.5) {
        return Err(invalid("lazy ring needs dim >= 3 and q in (0, 1/2]"));
    }
    let rows = (0..dim)
        .map(|x| {
            let mut row = vec![0.0; dim];
            row[(x + 1) % dim] += q;
            row[(x + dim - 1) % dim] += q;
            row[x] += 1.0 - 2.0 * q;
            row
        })
        .collect();
    KernelMatrix::new(rows)
}

/// Random `(m, K)` with `m(x) K(x, y) = m(y) K(y, x)`.
pub fn random_reversible_pair(dim: usize, rng: &mut StreamRng) -> Result<(FiniteDistribution, KernelMatrix)> {
    let m = random_distribution(dim, rng)?;
    let w = m.weights();
    let c = 1.0 / (dim.max(2) - 1) as f64;
    let mut s = vec![vec![0.0; dim]; dim];
    for x in 0..dim {
        for y in (x + 1)..dim {
            let u = if y == x + 1 || rng.random::<f64>() < 0.6 { rng.random::<f64>() } else { 0.0 };
            let v = c * u * w[x].min(w[y]);
            s[x][y] = v;
            s[y][x] = v;
        }
    }
    let rows = (0..dim)
        .map(|x| {
            let mut row: Vec<f64> = s[x].iter().map(|v| v / w[x]).collect();
            let off: f64 = row.iter().sum();
            row[x] = (1.0 - off).max(0.0);
            row
        })
        .collect();
    Ok((m, KernelMatrix::new(rows)?))
}

/// Eight-state double well: minima at states 1 (global) and 6.
pub fn double_well_energy() -> Vec<f64> {
    vec![1.0, 0.0, 1.0, 2.0, 2.5, 1.5, 0.5, 1.5]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{dobrushin, potential_ratio};

    #[test]
    fn bounded_flow_meets_its_constraints() {
        let spec = bounded_flow(4, 10, 0.5, 0.5f64.exp(), 3).unwrap();
        let cap = 0.5 / (0.5 + 0.5f64.exp());
        for s in spec.steps() {
            assert!((potential_ratio(&s.potential) - 0.5f64.exp()).abs() < 1e-12);
            assert!(dobrushin(&s.kernel) <= cap + 1e-12);
        }
    }

    #[test]
    fn reversible_pairs_are_reversible() {
        let mut rng = seeded(5);
        for d in 2..8 {
            let (m, k) = random_reversible_pair(d, &mut rng).unwrap();
            assert!(k.reversibility_defect(&m).unwrap() < 1e-14);
        }
    }

    #[test]
    fn lazy_ring_rows() {
        let k = lazy_ring(4, 1.0 / 3.0).unwrap();
        assert!((k.get(0, 3) - 1.0 / 3.0).abs() < 1e-15);
        assert!(lazy_ring(2, 0.3).is_err());
    }
}
