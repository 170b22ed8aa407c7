//! Domain types shared by every other module: exact designs with replication
//! counts, GLM model specifications with monomial bases, and the uniform and
//! arcsine product target distributions on `[-1,1]^d`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this (per coordinate) are merged into one support
/// point with summed replication count.
pub const MERGE_TOL: f64 = 1e-12;

/// An exact design: `m` distinct support points in `[-1,1]^d` with positive
/// replication counts summing to the design size `n`. The induced empirical
/// distribution puts mass `count_i / n` on point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    points: Vec<Vec<f64>>,
    counts: Vec<u64>,
    d: usize,
    n: u64,
}

impl Design {
    /// Builds a design from raw points and counts. Points within
    /// [`MERGE_TOL`] of each other are merged; coordinates must lie in
    /// `[-1,1]` and counts must be positive.
    pub fn new(points: Vec<Vec<f64>>, counts: Vec<u64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDesign);
        }
        if points.len() != counts.len() {
            return Err(Error::invalid(format!(
                "{} points but {} counts",
                points.len(),
                counts.len()
            )));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::invalid("points must have at least one coordinate"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
            for &c in p {
                if !c.is_finite() || !(-1.0..=1.0).contains(&c) {
                    return Err(Error::CoordinateOutOfDomain {
                        point: i,
                        value: c,
                        domain: "[-1,1]",
                    });
                }
            }
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidCount);
        }

        let (points, counts) = merge_duplicates(points, counts);
        let n = counts.iter().sum();
        Ok(Design {
            points,
            counts,
            d,
            n,
        })
    }

    /// Builds a design with unit replication at every point.
    pub fn with_unit_counts(points: Vec<Vec<f64>>) -> Result<Self> {
        let counts = vec![1; points.len()];
        Design::new(points, counts)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    /// Number of distinct support points (`m`).
    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    /// Total design size (`n`, counting replications).
    pub fn size(&self) -> u64 {
        self.n
    }

    /// Empirical mass `count_i / n` of support point `i`.
    pub fn mass(&self, i: usize) -> f64 {
        self.counts[i] as f64 / self.n as f64
    }

    /// The design with coordinate `coord` of every point negated.
    pub fn reflected(&self, coord: usize) -> Result<Design> {
        if coord >= self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: coord,
            });
        }
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q[coord] = -q[coord];
                q
            })
            .collect();
        Design::new(points, self.counts.clone())
    }

    /// Reads a design from CSV with header `x1,...,xd[,count]`. The count
    /// column is optional and defaults to 1; duplicate points merge.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Design> {
        let text = std::fs::read_to_string(path)?;
        Design::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Design> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::EmptyDesign)?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let has_count = cols.last().is_some_and(|c| c.eq_ignore_ascii_case("count"));
        let d = if has_count { cols.len() - 1 } else { cols.len() };
        if d == 0 {
            return Err(Error::Csv {
                line: 1,
                msg: "no coordinate columns".into(),
            });
        }

        let mut points = Vec::new();
        let mut counts = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::Csv {
                    line: idx + 1,
                    msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
                });
            }
            let mut p = Vec::with_capacity(d);
            for f in &fields[..d] {
                p.push(f.parse::<f64>().map_err(|e| Error::Csv {
                    line: idx + 1,
                    msg: e.to_string(),
                })?);
            }
            let count = if has_count {
                fields[d].parse::<u64>().map_err(|e| Error::Csv {
                    line: idx + 1,
                    msg: e.to_string(),
                })?
            } else {
                1
            };
            points.push(p);
            counts.push(count);
        }
        Design::new(points, counts)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for j in 1..=self.d {
            let _ = write!(out, "x{j},");
        }
        out.push_str("count\n");
        for (p, c) in self.points.iter().zip(&self.counts) {
            for v in p {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{c}");
        }
        out
    }
}

/// Lexicographic sort, then group runs of points that agree to [`MERGE_TOL`]
/// in every coordinate. Sorting first makes the merge order-independent.
fn merge_duplicates(points: Vec<Vec<f64>>, counts: Vec<u64>) -> (Vec<Vec<f64>>, Vec<u64>) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let close = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= MERGE_TOL)
    };

    let mut merged_points: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    let mut merged_counts: Vec<u64> = Vec::with_capacity(points.len());
    for &i in &order {
        if let Some(last) = merged_points.last() {
            if close(last, &points[i]) {
                *merged_counts.last_mut().unwrap() += counts[i];
                continue;
            }
        }
        merged_points.push(points[i].clone());
        merged_counts.push(counts[i]);
    }
    (merged_points, merged_counts)
}

/// Marginal target law on `[-1,1]`; both supported targets are product
/// measures so one marginal fixes the distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Uniform,
    Arcsine,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Uniform => "uniform",
            TargetKind::Arcsine => "arcsine",
        }
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(TargetKind::Uniform),
            "arcsine" => Ok(TargetKind::Arcsine),
            other => Err(Error::UnsupportedTarget(other.to_string())),
        }
    }
}

/// A product target distribution on `[-1,1]^d`. The arcsine marginal has
/// density `1/(pi*sqrt(1-x^2))`, pushing mass towards the edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetDistribution {
    pub kind: TargetKind,
    pub d: usize,
}

impl TargetDistribution {
    pub fn uniform(d: usize) -> Self {
        TargetDistribution {
            kind: TargetKind::Uniform,
            d,
        }
    }

    pub fn arcsine(d: usize) -> Self {
        TargetDistribution {
            kind: TargetKind::Arcsine,
            d,
        }
    }

    pub fn new(kind: TargetKind, d: usize) -> Self {
        TargetDistribution { kind, d }
    }

    /// Per-coordinate marginal CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.kind {
            TargetKind::Uniform => ((x + 1.0) / 2.0).clamp(0.0, 1.0),
            TargetKind::Arcsine => 0.5 + x.clamp(-1.0, 1.0).asin() / std::f64::consts::PI,
        }
    }

    /// Per-coordinate inverse CDF mapping `u in [0,1]` onto `[-1,1]`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match self.kind {
            TargetKind::Uniform => 2.0 * u - 1.0,
            TargetKind::Arcsine => -(std::f64::consts::PI * u).cos(),
        }
    }

    /// Draws one point from the target into `buf`.
    pub fn sample_into(&self, rng: &mut impl Rng, buf: &mut [f64]) {
        debug_assert_eq!(buf.len(), self.d);
        for v in buf.iter_mut() {
            *v = self.inverse_cdf(rng.random::<f64>());
        }
    }
}

/// GLM link function. The identity link is the Gaussian model with unit
/// noise variance; efficiencies are invariant to that scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Probit,
    Identity,
}

impl std::str::FromStr for Link {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            "identity" => Ok(Link::Identity),
            other => Err(Error::invalid(format!("unknown link: {other}"))),
        }
    }
}

/// A model specification: link function, ordered monomial basis, and
/// coefficient vector. Each basis term is a vector of non-negative exponents,
/// one per factor, so term `e` evaluates to `prod_k x_k^{e_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelSpec", into = "RawModelSpec")]
pub struct ModelSpec {
    link: Link,
    basis: Vec<Vec<u32>>,
    beta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawModelSpec {
    link: Link,
    basis: Vec<Vec<u32>>,
    beta: Vec<f64>,
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = Error;
    fn try_from(raw: RawModelSpec) -> Result<Self> {
        ModelSpec::new(raw.link, raw.basis, raw.beta)
    }
}

impl From<ModelSpec> for RawModelSpec {
    fn from(m: ModelSpec) -> Self {
        RawModelSpec {
            link: m.link,
            basis: m.basis,
            beta: m.beta,
        }
    }
}

impl ModelSpec {
    pub fn new(link: Link, basis: Vec<Vec<u32>>, beta: Vec<f64>) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::invalid("basis must contain at least one term"));
        }
        let d = basis[0].len();
        if d == 0 {
            return Err(Error::invalid("basis terms must have at least one factor"));
        }
        for term in &basis {
            if term.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: term.len(),
                });
            }
        }
        for (i, a) in basis.iter().enumerate() {
            for b in &basis[i + 1..] {
                if a == b {
                    return Err(Error::invalid(format!("duplicate basis term {a:?}")));
                }
            }
        }
        if beta.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: beta.len(),
            });
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("beta must be finite"));
        }
        Ok(ModelSpec { link, basis, beta })
    }

    /// Main-effects basis `[1, x_1, ..., x_d]`.
    pub fn main_effects(link: Link, d: usize, beta: Vec<f64>) -> Result<Self> {
        let mut basis = vec![vec![0u32; d]];
        for j in 0..d {
            let mut term = vec![0u32; d];
            term[j] = 1;
            basis.push(term);
        }
        ModelSpec::new(link, basis, beta)
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn basis(&self) -> &[Vec<u32>] {
        &self.basis
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Returns a copy with different coefficients.
    pub fn with_beta(&self, beta: Vec<f64>) -> Result<Self> {
        ModelSpec::new(self.link, self.basis.clone(), beta)
    }

    /// Number of basis terms (`l`).
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Factor dimension (`d`).
    pub fn dimension(&self) -> usize {
        self.basis[0].len()
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluates the basis vector `g(x)`.
pub fn basis_eval(spec: &ModelSpec, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != spec.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            got: x.len(),
        });
    }
    let mut out = vec![0.0; spec.len()];
    basis_eval_into(spec, x, &mut out);
    Ok(out)
}

/// Unchecked basis evaluation into a caller-provided buffer; hot path for
/// quadrature and candidate loops.
pub(crate) fn basis_eval_into(spec: &ModelSpec, x: &[f64], out: &mut [f64]) {
    for (slot, term) in out.iter_mut().zip(spec.basis()) {
        let mut v = 1.0;
        for (&e, &xi) in term.iter().zip(x) {
            v *= match e {
                0 => 1.0,
                1 => xi,
                2 => xi * xi,
                _ => xi.powi(e as i32),
            };
        }
        *slot = v;
    }
}

/// The linear predictor `eta(x) = beta . g(x)`.
pub fn linear_predictor(spec: &ModelSpec, x: &[f64]) -> Result<f64> {
    let g = basis_eval(spec, x)?;
    Ok(g.iter().zip(spec.beta()).map(|(gi, bi)| gi * bi).sum())
}

/// Maps points on the unit cube `[0,1]^d` onto `[-1,1]^d` through the
/// target's inverse CDF: `x = 2u - 1` for the uniform target and
/// `x = -cos(pi*u)` for the arcsine target. Duplicates merge into counts.
pub fn unit_cube_to_design(points01: &[Vec<f64>], target: TargetDistribution) -> Result<Design> {
    if points01.is_empty() {
        return Err(Error::EmptyDesign);
    }
    let mut out = Vec::with_capacity(points01.len());
    for (i, p) in points01.iter().enumerate() {
        if p.len() != target.d {
            return Err(Error::DimensionMismatch {
                expected: target.d,
                got: p.len(),
            });
        }
        let mut q = Vec::with_capacity(p.len());
        for &u in p {
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::CoordinateOutOfDomain {
                    point: i,
                    value: u,
                    domain: "[0,1]",
                });
            }
            q.push(target.inverse_cdf(u).clamp(-1.0, 1.0));
        }
        out.push(q);
    }
    Design::with_unit_counts(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_eval_monomials() {
        let spec = ModelSpec::new(Link::Identity, vec![vec![0], vec![1]], vec![0.0, 0.0]).unwrap();
        assert_eq!(basis_eval(&spec, &[0.5]).unwrap(), vec![1.0, 0.5]);

        let spec = ModelSpec::new(
            Link::Identity,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]],
            vec![0.0; 4],
        )
        .unwrap();
        assert_eq!(
            basis_eval(&spec, &[1.0, -1.0]).unwrap(),
            vec![1.0, 1.0, -1.0, -1.0]
        );

        let spec = ModelSpec::new(Link::Identity, vec![vec![2]], vec![0.0]).unwrap();
        let g = basis_eval(&spec, &[-0.3]).unwrap();
        assert!((g[0] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn basis_eval_rejects_dimension_mismatch() {
        let spec = ModelSpec::new(Link::Logit, vec![vec![0, 0]], vec![1.0]).unwrap();
        assert!(matches!(
            basis_eval(&spec, &[0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn linear_predictor_matches_naive_dot() {
        let beta = vec![-3.0, 4.0, 5.0, 6.0, 0.0];
        let spec = ModelSpec::main_effects(Link::Logit, 4, beta.clone()).unwrap();
        let x = [0.5, -1.0, 0.25, 1.0];
        let eta = linear_predictor(&spec, &x).unwrap();

        // independent oracle: naive loop over monomials
        let mut expect = beta[0];
        for j in 0..4 {
            expect += beta[j + 1] * x[j];
        }
        assert!((eta - expect).abs() < 1e-14, "eta={eta} expect={expect}");

        let zero = spec.with_beta(vec![0.0; 5]).unwrap();
        assert_eq!(linear_predictor(&zero, &x).unwrap(), 0.0);

        let spec2 =
            ModelSpec::new(Link::Identity, vec![vec![0], vec![1]], vec![1.0, 2.0]).unwrap();
        assert!((linear_predictor(&spec2, &[0.5]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn unit_cube_transform_centers() {
        let unif = TargetDistribution::uniform(1);
        let asin = TargetDistribution::arcsine(1);
        let d = unit_cube_to_design(&[vec![0.5]], unif).unwrap();
        assert_eq!(d.points()[0][0], 0.0);
        let d = unit_cube_to_design(&[vec![0.5]], asin).unwrap();
        assert!(d.points()[0][0].abs() < 1e-16);
        // quantile solved numerically from F_asin(x) = 0.25
        let d = unit_cube_to_design(&[vec![0.25]], asin).unwrap();
        assert!((d.points()[0][0] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn unit_cube_rejects_out_of_range() {
        let unif = TargetDistribution::uniform(1);
        assert!(unit_cube_to_design(&[vec![1.5]], unif).is_err());
        assert!(unit_cube_to_design(&[vec![-0.1]], unif).is_err());
    }

    #[test]
    fn arcsine_round_trip() {
        let asin = TargetDistribution::arcsine(1);
        for k in 1..200 {
            let u = k as f64 / 200.0;
            let x = asin.inverse_cdf(u);
            assert!(
                (asin.cdf(x) - u).abs() < 1e-12,
                "u={u} x={x} cdf={}",
                asin.cdf(x)
            );
        }
    }

    #[test]
    fn design_merges_duplicates_and_counts() {
        let pts = vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![-0.5, 0.0]];
        let d = Design::new(pts, vec![1, 1, 3]).unwrap();
        assert_eq!(d.num_points(), 2);
        assert_eq!(d.size(), 5);
        let idx = d
            .points()
            .iter()
            .position(|p| p[0] == 0.5)
            .expect("merged point present");
        assert_eq!(d.counts()[idx], 2);
    }

    #[test]
    fn design_permutation_invariant() {
        let a = Design::new(vec![vec![0.1], vec![0.9], vec![-0.4]], vec![1, 2, 3]).unwrap();
        let b = Design::new(vec![vec![-0.4], vec![0.1], vec![0.9]], vec![3, 1, 2]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn design_rejects_bad_inputs() {
        assert!(matches!(
            Design::new(vec![], vec![]),
            Err(Error::EmptyDesign)
        ));
        assert!(Design::new(vec![vec![2.0]], vec![1]).is_err());
        assert!(matches!(
            Design::new(vec![vec![0.0]], vec![0]),
            Err(Error::InvalidCount)
        ));
    }

    #[test]
    fn design_csv_round_trip() {
        let d = Design::new(vec![vec![0.25, -1.0], vec![1.0, 0.0]], vec![2, 1]).unwrap();
        let text = d.to_csv_string();
        assert!(text.starts_with("x1,x2,count\n"));
        let back = Design::from_csv_str(&text).unwrap();
        assert_eq!(d, back);

        // count column optional
        let no_count = "x1,x2\n0.25,-1.0\n1.0,0.0\n";
        let parsed = Design::from_csv_str(no_count).unwrap();
        assert_eq!(parsed.size(), 2);
    }

    #[test]
    fn model_spec_json_round_trip() {
        let text = r#"{"link":"logit","basis":[[0,0],[1,0],[0,1]],"beta":[0.5,-1.0,2.0]}"#;
        let spec: ModelSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.link(), Link::Logit);
        assert_eq!(spec.len(), 3);
        assert_eq!(spec.dimension(), 2);
        let back: ModelSpec = serde_json::from_str(&spec.to_json().unwrap()).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn basis_eval_multiplicative_across_coordinates() {
        // a separable term evaluated on concatenated coordinates equals the
        // product of its marginal evaluations
        let left = ModelSpec::new(Link::Identity, vec![vec![2, 1]], vec![0.0]).unwrap();
        let right = ModelSpec::new(Link::Identity, vec![vec![0, 3]], vec![0.0]).unwrap();
        let joint = ModelSpec::new(Link::Identity, vec![vec![2, 1, 0, 3]], vec![0.0]).unwrap();
        let x = [0.7, -0.4];
        let y = [0.9, -0.2];
        let xy = [0.7, -0.4, 0.9, -0.2];
        let a = basis_eval(&left, &x).unwrap()[0];
        let b = basis_eval(&right, &y).unwrap()[0];
        let ab = basis_eval(&joint, &xy).unwrap()[0];
        assert!((ab - a * b).abs() <= 1e-15 * ab.abs().max(1.0));
    }

    #[test]
    fn model_spec_rejects_duplicates_and_mismatch() {
        assert!(ModelSpec::new(Link::Logit, vec![vec![1], vec![1]], vec![0.0, 0.0]).is_err());
        assert!(ModelSpec::new(Link::Logit, vec![vec![1]], vec![0.0, 1.0]).is_err());
        assert!(ModelSpec::new(Link::Logit, vec![vec![1]], vec![f64::NAN]).is_err());
    }
}
