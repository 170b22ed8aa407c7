//! GLM weight functions, Fisher information matrices for exact designs and
//! for target distributions (via tensor-product quadrature), and the
//! prediction-oriented EI criterion matrix.
//!
//! The information matrix of a design is
//! `I = sum_i (n_i/n) g(x_i) w(x_i) g(x_i)'` with
//! `w(x) = [Var(Y(x)) h'(mu(x))^2]^{-1}`; for a target distribution the sum
//! becomes an integral realized by the quadrature rule. The uniform target
//! uses tensor Gauss-Legendre nodes; the arcsine target uses tensor
//! Gauss-Chebyshev (first kind) nodes, whose weight function is exactly the
//! arcsine density.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{basis_eval_into, Design, Link, ModelSpec, TargetDistribution, TargetKind};

const SQRT_2PI: f64 = 2.5066282746310002;

/// Probit weights are capped at `w(0) * 1e6`; anything above is a numerical
/// artifact of the tail ratio.
const PROBIT_CLAMP_FACTOR: f64 = 1e6;

/// Where an information matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfoSource {
    ExactDesign,
    TargetQuadrature,
}

/// A symmetric positive-semidefinite Fisher information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrix {
    entries: DMatrix<f64>,
    source: InfoSource,
    clamped: bool,
}

impl InfoMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn source(&self) -> InfoSource {
        self.source
    }

    /// True when any GLM weight hit the probit clamp while accumulating.
    pub fn clamped(&self) -> bool {
        self.clamped
    }

    /// Side length `l`.
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.entries)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.entries.nrows())
            .map(|i| self.entries.row(i).iter().copied().collect())
            .collect()
    }
}

impl Serialize for InfoMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("InfoMatrix", 3)?;
        st.serialize_field("source", &self.source)?;
        st.serialize_field("clamped", &self.clamped)?;
        st.serialize_field("entries", &self.to_rows())?;
        st.end()
    }
}

fn phi(eta: f64) -> f64 {
    (-0.5 * eta * eta).exp() / SQRT_2PI
}

/// Standard normal CDF via the complementary error function.
fn norm_cdf(eta: f64) -> f64 {
    0.5 * libm::erfc(-eta / std::f64::consts::SQRT_2)
}

/// GLM weight as a function of the linear predictor. Always finite and
/// non-negative; extreme predictors underflow to zero. The bool reports
/// whether the probit clamp fired.
pub(crate) fn weight_from_eta_flagged(link: Link, eta: f64) -> (f64, bool) {
    match link {
        Link::Identity => (1.0, false),
        Link::Logit => {
            let t = (-eta.abs()).exp();
            let denom = 1.0 + t;
            (t / (denom * denom), false)
        }
        Link::Probit => {
            let num = phi(eta);
            let num = num * num;
            let den = norm_cdf(eta) * norm_cdf(-eta);
            if num == 0.0 || den == 0.0 {
                return (0.0, false);
            }
            let w = num / den;
            let cap = std::f64::consts::FRAC_2_PI * PROBIT_CLAMP_FACTOR;
            if w > cap {
                (cap, true)
            } else {
                (w, false)
            }
        }
    }
}

/// GLM weight at the linear predictor `eta`.
pub fn weight_from_eta(link: Link, eta: f64) -> f64 {
    weight_from_eta_flagged(link, eta).0
}

/// GLM weight `w(x; M)` at a design point.
pub fn glm_weight(spec: &ModelSpec, x: &[f64]) -> Result<f64> {
    let eta = crate::model::linear_predictor(spec, x)?;
    Ok(weight_from_eta(spec.link(), eta))
}

/// Squared derivative of the inverse link `(d h^{-1} / d eta)^2`, the factor
/// in the EI criterion matrix.
pub fn mean_derivative_sq(link: Link, eta: f64) -> f64 {
    match link {
        Link::Identity => 1.0,
        Link::Logit => {
            let w = weight_from_eta(Link::Logit, eta);
            w * w
        }
        Link::Probit => {
            let p = phi(eta);
            p * p
        }
    }
}

/// Fisher information of an exact design.
pub fn info_exact(design: &Design, spec: &ModelSpec) -> Result<InfoMatrix> {
    if design.dimension() != spec.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            got: design.dimension(),
        });
    }
    let l = spec.len();
    let mut acc = GramAccumulator::new(l);
    let mut g = vec![0.0; l];
    for (i, p) in design.points().iter().enumerate() {
        basis_eval_into(spec, p, &mut g);
        let eta: f64 = g.iter().zip(spec.beta()).map(|(a, b)| a * b).sum();
        let (w, clamp) = weight_from_eta_flagged(spec.link(), eta);
        acc.add(design.mass(i) * w, &g, clamp);
    }
    Ok(acc.into_info(InfoSource::ExactDesign))
}

/// Tensor-product quadrature rule realizing integration against a target
/// distribution. Nodes are generated lazily; only the 1-D rule is stored.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes_1d: Vec<f64>,
    weights_1d: Vec<f64>,
    target: TargetDistribution,
    level: usize,
}

impl QuadratureRule {
    pub fn target(&self) -> TargetDistribution {
        self.target
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dimension(&self) -> usize {
        self.target.d
    }

    /// Number of tensor nodes, `level^d`.
    pub fn len(&self) -> usize {
        self.level.pow(self.target.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visits every tensor node with its weight, in lexicographic index
    /// order.
    pub fn for_each_node(&self, mut f: impl FnMut(&[f64], f64)) {
        let d = self.target.d;
        let mut idx = vec![0usize; d];
        let mut point = vec![0.0; d];
        loop {
            let mut w = 1.0;
            for (j, &i) in idx.iter().enumerate() {
                point[j] = self.nodes_1d[i];
                w *= self.weights_1d[i];
            }
            f(&point, w);
            // odometer increment
            let mut j = d;
            loop {
                if j == 0 {
                    return;
                }
                j -= 1;
                idx[j] += 1;
                if idx[j] < self.level {
                    break;
                }
                idx[j] = 0;
            }
        }
    }

    /// Materialized tensor nodes; meant for small rules and tests.
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_node(|p, _| out.push(p.to_vec()));
        out
    }

    /// Materialized tensor weights, in the same order as [`Self::nodes`].
    pub fn weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_node(|_, w| out.push(w));
        out
    }

    pub fn nodes_1d(&self) -> &[f64] {
        &self.nodes_1d
    }

    pub fn weights_1d(&self) -> &[f64] {
        &self.weights_1d
    }
}

/// Default points-per-coordinate: generous for low dimension, trimmed as the
/// tensor grows.
pub fn default_level(d: usize) -> usize {
    match d {
        0..=4 => 24,
        5..=6 => 12,
        _ => 8,
    }
}

/// Builds the tensor quadrature for a target: Gauss-Legendre (normalized to
/// unit mass) for the uniform target, Gauss-Chebyshev of the first kind for
/// the arcsine target.
pub fn quadrature(target: TargetDistribution, level: usize) -> Result<QuadratureRule> {
    if level < 2 {
        return Err(Error::invalid("quadrature level must be at least 2"));
    }
    let (nodes_1d, weights_1d) = match target.kind {
        TargetKind::Uniform => gauss_legendre(level),
        TargetKind::Arcsine => gauss_chebyshev(level),
    };
    Ok(QuadratureRule {
        nodes_1d,
        weights_1d,
        target,
        level,
    })
}

/// Gauss-Legendre nodes on `[-1,1]` with weights normalized to sum to one.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, de) = legendre_with_derivative(n, x);
            dp = de;
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        // nodes come out in descending order of the cosine guess; mirror for
        // the symmetric pair
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Chebyshev (first kind): nodes `cos((2k-1) pi / (2n))`, equal
/// weights `1/n`. The Chebyshev weight function is the arcsine density.
fn gauss_chebyshev(n: usize) -> (Vec<f64>, Vec<f64>) {
    let nodes = (1..=n)
        .map(|k| ((2 * k - 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos())
        .collect();
    (nodes, vec![1.0 / n as f64; n])
}

/// Lower-triangle accumulator for weighted Gram sums.
struct GramAccumulator {
    l: usize,
    tri: Vec<f64>,
    clamped: bool,
}

impl GramAccumulator {
    fn new(l: usize) -> Self {
        GramAccumulator {
            l,
            tri: vec![0.0; l * (l + 1) / 2],
            clamped: false,
        }
    }

    #[inline]
    fn add(&mut self, scale: f64, g: &[f64], clamp: bool) {
        self.clamped |= clamp;
        if scale == 0.0 {
            return;
        }
        let mut idx = 0;
        for i in 0..self.l {
            let gi = scale * g[i];
            for gj in &g[..=i] {
                self.tri[idx] += gi * gj;
                idx += 1;
            }
        }
    }

    fn merge(&mut self, other: &GramAccumulator) {
        self.clamped |= other.clamped;
        for (a, b) in self.tri.iter_mut().zip(&other.tri) {
            *a += b;
        }
    }

    fn into_matrix(self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.l, self.l);
        let mut idx = 0;
        for i in 0..self.l {
            for j in 0..=i {
                m[(i, j)] = self.tri[idx];
                m[(j, i)] = self.tri[idx];
                idx += 1;
            }
        }
        m
    }

    fn into_info(self, source: InfoSource) -> InfoMatrix {
        let clamped = self.clamped;
        InfoMatrix {
            entries: self.into_matrix(),
            source,
            clamped,
        }
    }
}

/// Shared quadrature loop: accumulates `sum_q w_q * factor(eta) * g g'`,
/// parallelized over the first tensor axis with a fixed reduction order.
fn accumulate_quadrature(
    spec: &ModelSpec,
    rule: &QuadratureRule,
    factor: impl Fn(Link, f64) -> (f64, bool) + Sync,
) -> GramAccumulator {
    let d = rule.dimension();
    let l = spec.len();
    let slice_rule = QuadratureRule {
        nodes_1d: rule.nodes_1d.clone(),
        weights_1d: rule.weights_1d.clone(),
        target: TargetDistribution::new(rule.target.kind, d - 1),
        level: rule.level,
    };

    let partials: Vec<GramAccumulator> = (0..rule.level)
        .into_par_iter()
        .map(|i0| {
            let mut acc = GramAccumulator::new(l);
            let mut g = vec![0.0; l];
            let mut point = vec![0.0; d];
            point[0] = rule.nodes_1d[i0];
            let w0 = rule.weights_1d[i0];
            if d == 1 {
                basis_eval_into(spec, &point, &mut g);
                let eta: f64 = g.iter().zip(spec.beta()).map(|(a, b)| a * b).sum();
                let (f, clamp) = factor(spec.link(), eta);
                acc.add(w0 * f, &g, clamp);
            } else {
                slice_rule.for_each_node(|rest, w| {
                    point[1..].copy_from_slice(rest);
                    basis_eval_into(spec, &point, &mut g);
                    let eta: f64 = g.iter().zip(spec.beta()).map(|(a, b)| a * b).sum();
                    let (f, clamp) = factor(spec.link(), eta);
                    acc.add(w0 * w * f, &g, clamp);
                });
            }
            acc
        })
        .collect();

    let mut total = GramAccumulator::new(l);
    for p in &partials {
        total.merge(p);
    }
    total
}

/// Fisher information of the continuous design following the target
/// distribution, `int g w g' dF_tar`, realized by the quadrature rule.
pub fn info_target(
    target: TargetDistribution,
    spec: &ModelSpec,
    rule: &QuadratureRule,
) -> Result<InfoMatrix> {
    if rule.target != target {
        return Err(Error::invalid(
            "quadrature rule was built for a different target",
        ));
    }
    if target.d != spec.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            got: target.d,
        });
    }
    let acc = accumulate_quadrature(spec, rule, weight_from_eta_flagged);
    Ok(acc.into_info(InfoSource::TargetQuadrature))
}

/// The EI criterion matrix
/// `A = int g g' (d h^{-1}/d eta)^2 dF_imse`, a symmetric PSD Gram integral.
pub fn ei_matrix(
    spec: &ModelSpec,
    imse_target: TargetDistribution,
    rule: &QuadratureRule,
) -> Result<DMatrix<f64>> {
    if rule.target != imse_target {
        return Err(Error::invalid(
            "quadrature rule was built for a different target",
        ));
    }
    if imse_target.d != spec.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            got: imse_target.d,
        });
    }
    let acc = accumulate_quadrature(spec, rule, |link, eta| (mean_derivative_sq(link, eta), false));
    Ok(acc.into_matrix())
}
