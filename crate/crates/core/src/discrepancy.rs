//! Reproducing-kernel discrepancy between a design's empirical distribution
//! and a target distribution on `[-1,1]^d`.
//!
//! The kernel is the product form
//! `K(x,z) = prod_j [1 + (|x_j| + |z_j| - |x_j - z_j|)/2]`,
//! whose induced discrepancy is invariant under reflections about any
//! coordinate plane for symmetric targets. For the uniform and arcsine
//! targets both target integrals have closed forms, so
//!
//! `D^2 = c_tar^d - (2/n) sum_i n_i * km(x_i) + (1/n^2) sum_{i,k} n_i n_k K(x_i, x_k)`
//!
//! with `c_unif = 7/6`, `c_asin = 1 + 2/pi - 4/pi^2`, and `km` the
//! per-target kernel mean. A Monte-Carlo estimator of the two target
//! integrals serves as an independent oracle.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Design, TargetDistribution, TargetKind};
use crate::seeding;

const MC_MIN_SAMPLES: u64 = 1000;
const MC_CHUNK: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscrepancyMethod {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscrepancyReport {
    /// Squared discrepancy, clamped to zero if rounding pushed it negative.
    pub d_squared: f64,
    /// `sqrt(max(d_squared, 0))`.
    pub d: f64,
    pub target: TargetKind,
    pub dimension: usize,
    pub method: DiscrepancyMethod,
    /// Standard error of the `d_squared` estimate (Monte-Carlo only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_std_error: Option<f64>,
    /// Set when the raw squared value was negative and clamped.
    pub clamped: bool,
}

impl DiscrepancyReport {
    fn from_raw(
        raw: f64,
        target: TargetKind,
        dimension: usize,
        method: DiscrepancyMethod,
        mc_std_error: Option<f64>,
    ) -> Self {
        let clamped = raw < 0.0;
        let d_squared = raw.max(0.0);
        DiscrepancyReport {
            d_squared,
            d: d_squared.sqrt(),
            target,
            dimension,
            method,
            mc_std_error,
            clamped,
        }
    }
}

fn check_point(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    for (i, &v) in x.iter().enumerate() {
        if !v.is_finite() || v.abs() > 1.0 {
            return Err(Error::CoordinateOutOfDomain {
                point: i,
                value: v,
                domain: "[-1,1]",
            });
        }
    }
    Ok(())
}

/// Kernel value `K(x,z)`. Symmetric in its arguments; every factor lies in
/// `[1,2]` so the value is positive.
pub fn kernel_eval(x: &[f64], z: &[f64]) -> Result<f64> {
    check_point(x, x.len())?;
    check_point(z, x.len())?;
    Ok(kernel_eval_unchecked(x, z))
}

#[inline]
pub(crate) fn kernel_eval_unchecked(x: &[f64], z: &[f64]) -> f64 {
    let mut k = 1.0;
    for (&a, &b) in x.iter().zip(z) {
        k *= 1.0 + 0.5 * (a.abs() + b.abs() - (a - b).abs());
    }
    k
}

/// `int K(x,t) dF_unif(t)`: the product over coordinates of
/// `(2 + |x_j| - x_j^2/2) / 2`.
pub fn kernel_mean_uniform(x: &[f64]) -> Result<f64> {
    check_point(x, x.len())?;
    Ok(kernel_mean_uniform_unchecked(x))
}

#[inline]
pub(crate) fn kernel_mean_uniform_unchecked(x: &[f64]) -> f64 {
    x.iter()
        .map(|&v| 0.5 * (2.0 + v.abs() - 0.5 * v * v))
        .product()
}

/// `int K(x,t) dF_asin(t)`: the product over coordinates of
/// `1 + 1/pi + |x_j|/2 - (x_j asin(x_j) + sqrt(1-x_j^2)) / pi`.
pub fn kernel_mean_arcsine(x: &[f64]) -> Result<f64> {
    check_point(x, x.len())?;
    Ok(kernel_mean_arcsine_unchecked(x))
}

#[inline]
pub(crate) fn kernel_mean_arcsine_unchecked(x: &[f64]) -> f64 {
    use std::f64::consts::FRAC_1_PI;
    x.iter()
        .map(|&v| {
            let a = v.abs();
            // at |x| = 1 the factor reduces analytically to 1 + 1/pi;
            // evaluating sqrt(1 - x^2) there is exact but guards rounding
            if a >= 1.0 {
                1.0 + FRAC_1_PI
            } else {
                1.0 + FRAC_1_PI + 0.5 * a - FRAC_1_PI * (a * a.asin() + (1.0 - v * v).sqrt())
            }
        })
        .product()
}

fn kernel_mean(target: TargetKind, x: &[f64]) -> f64 {
    match target {
        TargetKind::Uniform => kernel_mean_uniform_unchecked(x),
        TargetKind::Arcsine => kernel_mean_arcsine_unchecked(x),
    }
}

/// `int int K dF_tar dF_tar` for one coordinate.
fn double_integral_factor(target: TargetKind) -> f64 {
    use std::f64::consts::PI;
    match target {
        TargetKind::Uniform => 7.0 / 6.0,
        TargetKind::Arcsine => 1.0 + 2.0 / PI - 4.0 / (PI * PI),
    }
}

/// Exact `(1/n^2) sum_{i,k} n_i n_k K(x_i, x_k)`; O(m^2 d) on the distinct
/// support points.
fn design_double_sum(design: &Design) -> f64 {
    let pts = design.points();
    let counts = design.counts();
    let n = design.size() as f64;
    let mut total = 0.0;
    for i in 0..pts.len() {
        let wi = counts[i] as f64;
        // diagonal term: K(x,x) = prod(1 + |x_j|)
        let diag: f64 = pts[i].iter().map(|v| 1.0 + v.abs()).product();
        total += wi * wi * diag;
        for k in (i + 1)..pts.len() {
            total += 2.0 * wi * counts[k] as f64 * kernel_eval_unchecked(&pts[i], &pts[k]);
        }
    }
    total / (n * n)
}

/// Closed-form squared discrepancy against the uniform or arcsine target.
pub fn discrepancy_closed(
    design: &Design,
    target: TargetDistribution,
) -> Result<DiscrepancyReport> {
    if target.d != design.dimension() {
        return Err(Error::DimensionMismatch {
            expected: design.dimension(),
            got: target.d,
        });
    }
    let d = design.dimension();
    let n = design.size() as f64;

    let constant = double_integral_factor(target.kind).powi(d as i32);
    let cross: f64 = design
        .points()
        .iter()
        .zip(design.counts())
        .map(|(p, &c)| c as f64 * kernel_mean(target.kind, p))
        .sum::<f64>()
        * 2.0
        / n;
    let raw = constant - cross + design_double_sum(design);
    debug_assert!(raw >= -1e-10, "closed-form D^2 = {raw} below -1e-10");
    Ok(DiscrepancyReport::from_raw(
        raw,
        target.kind,
        d,
        DiscrepancyMethod::ClosedForm,
        None,
    ))
}

/// Monte-Carlo estimate of the squared discrepancy. The two target integrals
/// are estimated from `n_samples` pairs drawn from the target; the design
/// double sum is exact. Sampling is split into counter-based substreams so
/// the result depends only on `(seed, n_samples)`, not on thread count.
pub fn discrepancy_mc(
    design: &Design,
    target: TargetDistribution,
    n_samples: u64,
    seed: u64,
) -> Result<DiscrepancyReport> {
    if target.d != design.dimension() {
        return Err(Error::DimensionMismatch {
            expected: design.dimension(),
            got: target.d,
        });
    }
    if n_samples < MC_MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "n_samples must be at least {MC_MIN_SAMPLES}, got {n_samples}"
        )));
    }

    let d = design.dimension();
    let pts = design.points();
    let masses: Vec<f64> = (0..pts.len()).map(|i| design.mass(i)).collect();

    // one observation: Y = K(X,T) - km_design(X) - km_design(T) with
    // X,T iid from the target; E[Y] = target double integral minus twice the
    // design-target cross term
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = seeding::rng(seed, chunk + 1);
            let lo = chunk * MC_CHUNK;
            let hi = ((chunk + 1) * MC_CHUNK).min(n_samples);
            let mut x = vec![0.0; d];
            let mut t = vec![0.0; d];
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in lo..hi {
                for v in x.iter_mut() {
                    *v = target.inverse_cdf(rng.random::<f64>());
                }
                for v in t.iter_mut() {
                    *v = target.inverse_cdf(rng.random::<f64>());
                }
                let mut km_x = 0.0;
                let mut km_t = 0.0;
                for (p, &m) in pts.iter().zip(&masses) {
                    km_x += m * kernel_eval_unchecked(p, &x);
                    km_t += m * kernel_eval_unchecked(p, &t);
                }
                let y = kernel_eval_unchecked(&x, &t) - km_x - km_t;
                sum += y;
                sumsq += y * y;
            }
            (sum, sumsq)
        })
        .collect();

    let (sum, sumsq) = partials
        .iter()
        .fold((0.0, 0.0), |(s, q), &(cs, cq)| (s + cs, q + cq));
    let s = n_samples as f64;
    let mean = sum / s;
    let var = ((sumsq - sum * sum / s) / (s - 1.0)).max(0.0);
    let std_error = (var / s).sqrt();

    let raw = mean + design_double_sum(design);
    Ok(DiscrepancyReport::from_raw(
        raw,
        target.kind,
        d,
        DiscrepancyMethod::MonteCarlo,
        Some(std_error),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_eval(&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(kernel_eval(&[1.0], &[1.0]).unwrap(), 2.0);
        assert_eq!(kernel_eval(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 1.0);
        // symmetry
        let a = [0.3, -0.8];
        let b = [-0.1, 0.5];
        assert_eq!(
            kernel_eval(&a, &b).unwrap(),
            kernel_eval(&b, &a).unwrap()
        );
    }

    #[test]
    fn kernel_rejects_bad_input() {
        assert!(kernel_eval(&[0.0], &[0.0, 0.0]).is_err());
        assert!(kernel_eval(&[1.5], &[0.0]).is_err());
    }

    #[test]
    fn kernel_mean_uniform_values() {
        assert!((kernel_mean_uniform(&[0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((kernel_mean_uniform(&[1.0]).unwrap() - 1.25).abs() < 1e-15);
        assert!((kernel_mean_uniform(&[0.0, 1.0]).unwrap() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn kernel_mean_arcsine_values() {
        assert!((kernel_mean_arcsine(&[0.0]).unwrap() - 1.0).abs() < 1e-15);
        let at_one = 1.0 + 1.0 / PI;
        assert!((kernel_mean_arcsine(&[1.0]).unwrap() - at_one).abs() < 1e-15);
        assert_eq!(
            kernel_mean_arcsine(&[1.0]).unwrap(),
            kernel_mean_arcsine(&[-1.0]).unwrap()
        );
    }

    #[test]
    fn single_point_at_origin_closed_forms() {
        let design = Design::with_unit_counts(vec![vec![0.0]]).unwrap();
        let unif = discrepancy_closed(&design, TargetDistribution::uniform(1)).unwrap();
        assert!((unif.d_squared - 1.0 / 6.0).abs() < 1e-15);

        let asin = discrepancy_closed(&design, TargetDistribution::arcsine(1)).unwrap();
        let expect = 2.0 / PI - 4.0 / (PI * PI);
        assert!((asin.d_squared - expect).abs() < 1e-15);
    }

    #[test]
    fn reflection_leaves_discrepancy_unchanged() {
        let design = Design::with_unit_counts(vec![
            vec![0.3, -0.7],
            vec![-0.9, 0.1],
            vec![0.5, 0.5],
        ])
        .unwrap();
        for coord in 0..2 {
            let flipped = design.reflected(coord).unwrap();
            for target in [TargetDistribution::uniform(2), TargetDistribution::arcsine(2)] {
                let a = discrepancy_closed(&design, target).unwrap().d;
                let b = discrepancy_closed(&flipped, target).unwrap().d;
                assert!((a - b).abs() < 1e-12, "coord {coord}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn replication_equivalence() {
        // the constructor merges, so these are two routes to the same design
        let twice = Design::new(vec![vec![0.4], vec![0.4], vec![-0.2]], vec![1, 1, 1]).unwrap();
        let counted = Design::new(vec![vec![0.4], vec![-0.2]], vec![2, 1]).unwrap();
        let t = TargetDistribution::uniform(1);
        assert_eq!(
            discrepancy_closed(&twice, t).unwrap().d,
            discrepancy_closed(&counted, t).unwrap().d
        );
    }

    #[test]
    fn mc_agrees_with_closed_form_smoke() {
        let design = Design::with_unit_counts(vec![vec![0.0]]).unwrap();
        let t = TargetDistribution::uniform(1);
        let closed = discrepancy_closed(&design, t).unwrap();
        let mc = discrepancy_mc(&design, t, 200_000, 42).unwrap();
        let se = mc.mc_std_error.unwrap();
        assert!(
            (closed.d_squared - mc.d_squared).abs() <= 3.0 * se,
            "closed {} mc {} se {}",
            closed.d_squared,
            mc.d_squared,
            se
        );
    }

    #[test]
    fn mc_rejects_tiny_sample() {
        let design = Design::with_unit_counts(vec![vec![0.0]]).unwrap();
        assert!(discrepancy_mc(&design, TargetDistribution::uniform(1), 999, 1).is_err());
    }

    #[test]
    fn mc_deterministic_for_fixed_seed() {
        let design = Design::with_unit_counts(vec![vec![0.2], vec![-0.6]]).unwrap();
        let t = TargetDistribution::arcsine(1);
        let a = discrepancy_mc(&design, t, 50_000, 9).unwrap();
        let b = discrepancy_mc(&design, t, 50_000, 9).unwrap();
        assert_eq!(a.d_squared, b.d_squared);
    }
}
