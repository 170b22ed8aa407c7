//! L-optimality values, locally L-optimal continuous designs over a candidate
//! set, and L-/A-/standardized-A-/EI-efficiencies.
//!
//! The solver runs the multiplicative weight iteration
//! `p_i <- p_i * d_i(p) / tr(I(p)^{-1} L)` with
//! `d_i(p) = w(x_i) g(x_i)' I(p)^{-1} L I(p)^{-1} g(x_i)`,
//! stopping when the general-equivalence gap `max_i d_i - tr(I^{-1}L)` falls
//! below `tol * tr(I^{-1}L)`. At convergence the gap certifies optimality
//! over the candidate set.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::scrambled_sobol;
use crate::glm::{ei_matrix, info_exact, weight_from_eta_flagged, InfoMatrix, QuadratureRule};
use crate::linalg::{self, sym_eigen};
use crate::model::{basis_eval_into, Design, ModelSpec, TargetDistribution};

/// Largest candidate set a tensor grid request may produce.
pub const CANDIDATE_CAP: usize = 1 << 16;

/// Support weights below this are dropped at termination.
pub const PRUNE_TOL: f64 = 1e-12;

/// Exponent of the multiplicative update: the square-root damping that makes
/// the iteration monotone for L-optimality. The undamped `d_i / tr` step
/// stalls short of the certificate on ill-centered GLM problems.
const UPDATE_EXPONENT: f64 = 0.5;

/// Stall detection: compare the gap every `STALL_WINDOW` iterations and give
/// up (flagged unconverged) when it contracted by less than `1 - STALL_RATIO`.
const STALL_WINDOW: usize = 1024;
const STALL_RATIO: f64 = 0.98;

/// Weights below this are frozen to exact zero during the iteration. The
/// frozen candidates stay in the convergence certificate via periodic
/// full-candidate gap checks and are reactivated if their sensitivity rises
/// above the current value.
const FREEZE_TOL: f64 = 1e-18;
const FULL_CHECK_EVERY: usize = 256;
const REACTIVATE_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    AIdentity,
    CVector,
    StandardizedA,
    Ei,
    Custom,
}

/// The PSD matrix `L` of the criterion `tr(I^{-1} L)`, tagged with how it
/// was built.
#[derive(Debug, Clone)]
pub struct CriterionMatrix {
    matrix: DMatrix<f64>,
    kind: CriterionKind,
}

impl CriterionMatrix {
    /// Classical A-optimality: `L` is the identity.
    pub fn a_identity(l: usize) -> Self {
        CriterionMatrix {
            matrix: DMatrix::identity(l, l),
            kind: CriterionKind::AIdentity,
        }
    }

    /// c-optimality for the variance of coefficient `j` (0-based): the
    /// rank-one matrix `e_j e_j'`.
    pub fn c_vector(l: usize, j: usize) -> Result<Self> {
        if j >= l {
            return Err(Error::invalid(format!(
                "coefficient index {j} out of range for {l} terms"
            )));
        }
        let mut m = DMatrix::zeros(l, l);
        m[(j, j)] = 1.0;
        Ok(CriterionMatrix {
            matrix: m,
            kind: CriterionKind::CVector,
        })
    }

    /// The EI criterion with a precomputed Gram-integral matrix.
    pub fn ei(matrix: DMatrix<f64>) -> Result<Self> {
        Self::checked(matrix, CriterionKind::Ei)
    }

    pub fn custom(matrix: DMatrix<f64>) -> Result<Self> {
        Self::checked(matrix, CriterionKind::Custom)
    }

    fn checked(matrix: DMatrix<f64>, kind: CriterionKind) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::invalid("criterion matrix must be square"));
        }
        let asym = (&matrix - matrix.transpose()).abs().max();
        if asym > 1e-10 * matrix.abs().max().max(1.0) {
            return Err(Error::invalid("criterion matrix must be symmetric"));
        }
        if linalg::min_eigenvalue(&matrix) < -1e-10 {
            return Err(Error::invalid(
                "criterion matrix must be positive semidefinite",
            ));
        }
        Ok(CriterionMatrix { matrix, kind })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> CriterionKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// `c * L`; scaling leaves optimal weights and efficiencies unchanged.
    pub fn scaled(&self, c: f64) -> Self {
        CriterionMatrix {
            matrix: &self.matrix * c,
            kind: self.kind,
        }
    }
}

/// A continuous (approximate) design: probability weights over candidate
/// points.
#[derive(Debug, Clone, Serialize)]
pub struct DesignWeights {
    pub candidates: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DesignWeights {
    pub fn new(candidates: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if candidates.len() != weights.len() {
            return Err(Error::invalid("candidates and weights differ in length"));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::invalid("weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(DesignWeights {
            candidates,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub weights: DesignWeights,
    pub criterion_value: f64,
    /// `max_i d_i - tr(I^{-1}L)` over the full candidate set at the returned
    /// weights.
    pub equivalence_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Criterion value after each iteration, when tracking was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion_history: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub track_history: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-7,
            max_iter: 100_000,
            track_history: false,
        }
    }
}

/// `tr(I^{-1} L)` through a symmetric factorization.
pub fn l_value(info: &InfoMatrix, criterion: &CriterionMatrix) -> Result<f64> {
    if info.len() != criterion.len() {
        return Err(Error::DimensionMismatch {
            expected: info.len(),
            got: criterion.len(),
        });
    }
    sym_eigen(info.entries()).trace_inv_product(criterion.matrix())
}

/// Tensor grid of `points_per_axis^d` candidates on `[-1,1]^d`.
pub fn candidate_grid(d: usize, points_per_axis: usize) -> Result<Vec<Vec<f64>>> {
    if points_per_axis < 2 || d == 0 {
        return Err(Error::invalid(
            "need at least two points per axis and one dimension",
        ));
    }
    let total = (points_per_axis as u128).pow(d as u32);
    if total > CANDIDATE_CAP as u128 {
        return Err(Error::CapExceeded {
            requested: total.min(usize::MAX as u128) as usize,
            cap: CANDIDATE_CAP,
            hint: "use a scrambled Sobol candidate cloud instead of a tensor grid",
        });
    }
    let axis: Vec<f64> = (0..points_per_axis)
        .map(|j| -1.0 + 2.0 * j as f64 / (points_per_axis - 1) as f64)
        .collect();
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; d];
    loop {
        out.push(idx.iter().map(|&i| axis[i]).collect());
        let mut j = d;
        loop {
            if j == 0 {
                return Ok(out);
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < points_per_axis {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// Scrambled Sobol candidate cloud on `[-1,1]^d`.
pub fn candidate_sobol_cloud(d: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let pts = scrambled_sobol(count, d, seed)?;
    Ok(pts
        .into_iter()
        .map(|p| p.into_iter().map(|u| 2.0 * u - 1.0).collect())
        .collect())
}

/// Default candidate set: a dense line for `d = 1`, a `7^d` tensor grid up
/// to `d = 4`, and a `2^14`-point Sobol cloud beyond.
pub fn default_candidates(d: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    match d {
        0 => Err(Error::invalid("dimension must be at least 1")),
        1 => candidate_grid(1, 201),
        2..=4 => candidate_grid(d, 7),
        _ => candidate_sobol_cloud(d, 1 << 14, seed),
    }
}

/// Precomputed per-candidate basis vectors and GLM weights, stored flat so
/// the iteration never touches matrix indexing.
struct CandidateTable {
    /// Candidate `i`'s basis vector occupies `gt[i*l .. (i+1)*l]`.
    gt: Vec<f64>,
    glm_weights: Vec<f64>,
    l: usize,
}

impl CandidateTable {
    #[inline]
    fn g(&self, i: usize) -> &[f64] {
        &self.gt[i * self.l..(i + 1) * self.l]
    }
}

fn candidate_table(candidates: &[Vec<f64>], spec: &ModelSpec) -> Result<CandidateTable> {
    if candidates.is_empty() {
        return Err(Error::InfeasibleCandidates);
    }
    let l = spec.len();
    let n = candidates.len();
    let mut gt = vec![0.0; l * n];
    let mut glm_weights = vec![0.0; n];
    for (i, x) in candidates.iter().enumerate() {
        if x.len() != spec.dimension() {
            return Err(Error::DimensionMismatch {
                expected: spec.dimension(),
                got: x.len(),
            });
        }
        let g = &mut gt[i * l..(i + 1) * l];
        basis_eval_into(spec, x, g);
        let eta: f64 = g.iter().zip(spec.beta()).map(|(a, b)| a * b).sum();
        glm_weights[i] = weight_from_eta_flagged(spec.link(), eta).0;
    }
    Ok(CandidateTable {
        gt,
        glm_weights,
        l,
    })
}

/// `I(p) = sum_i p_i w_i g_i g_i'` accumulated over the given candidate
/// indices (weights elsewhere are exactly zero).
fn info_over(table: &CandidateTable, p: &[f64], indices: &[usize]) -> DMatrix<f64> {
    let l = table.l;
    let mut tri = vec![0.0; l * (l + 1) / 2];
    for &i in indices {
        let scale = p[i] * table.glm_weights[i];
        if scale == 0.0 {
            continue;
        }
        let g = table.g(i);
        let mut idx = 0;
        for r in 0..l {
            let gr = scale * g[r];
            for &gc in &g[..=r] {
                tri[idx] += gr * gc;
                idx += 1;
            }
        }
    }
    let mut m = DMatrix::zeros(l, l);
    let mut idx = 0;
    for r in 0..l {
        for c in 0..=r {
            m[(r, c)] = tri[idx];
            m[(c, r)] = tri[idx];
            idx += 1;
        }
    }
    m
}

/// Packs a symmetric matrix into its lower triangle with doubled
/// off-diagonals, so `g' B g` becomes a single triangular pass.
fn pack_quadratic(b: &DMatrix<f64>) -> Vec<f64> {
    let l = b.nrows();
    let mut tri = Vec::with_capacity(l * (l + 1) / 2);
    for r in 0..l {
        for c in 0..=r {
            tri.push(if r == c { b[(r, r)] } else { 2.0 * b[(r, c)] });
        }
    }
    tri
}

#[inline]
fn quad_form(btri: &[f64], g: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut idx = 0;
    for (r, &gr) in g.iter().enumerate() {
        let mut row = 0.0;
        for &gc in &g[..=r] {
            row += btri[idx] * gc;
            idx += 1;
        }
        acc += gr * row;
    }
    acc
}

/// `tr(A L)` for square matrices.
fn trace_product(a: &DMatrix<f64>, l_mat: &DMatrix<f64>) -> f64 {
    let l = a.nrows();
    let mut acc = 0.0;
    for r in 0..l {
        for c in 0..l {
            acc += a[(r, c)] * l_mat[(c, r)];
        }
    }
    acc
}

/// Solves the locally L-optimal continuous design over a candidate set by
/// the multiplicative weight iteration. Feasibility is checked at the
/// uniform initialization; hitting `max_iter` returns an unconverged result
/// rather than an error.
pub fn solve_l_optimal(
    candidates: &[Vec<f64>],
    spec: &ModelSpec,
    criterion: &CriterionMatrix,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    if criterion.len() != spec.len() {
        return Err(Error::DimensionMismatch {
            expected: spec.len(),
            got: criterion.len(),
        });
    }
    let table = candidate_table(candidates, spec)?;
    let n = candidates.len();
    let l = spec.len();
    let l_mat = criterion.matrix();

    let mut p = vec![1.0 / n as f64; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut history = opts.track_history.then(Vec::new);
    let mut iterations = 0;
    let mut converged = false;
    let mut stall_gap = f64::INFINITY;

    // feasibility at the uniform initialization, with the eigenvalue floor
    {
        let info = info_over(&table, &p, &active);
        if sym_eigen(&info).is_singular() {
            return Err(Error::InfeasibleCandidates);
        }
    }

    // the sensitivity of every candidate against the packed B matrix
    let full_gap = |btri: &[f64], value: f64| -> f64 {
        let mut max_d = f64::NEG_INFINITY;
        for i in 0..n {
            let di = table.glm_weights[i] * quad_form(btri, table.g(i));
            max_d = max_d.max(di);
        }
        max_d - value
    };

    loop {
        let info = info_over(&table, &p, &active);
        let Some(chol) = nalgebra::Cholesky::new(info) else {
            // weights stay positive under the update, so this is numerical
            // breakdown; report the last iterate unconverged
            break;
        };
        let inv = chol.inverse();
        let value = trace_product(&inv, l_mat);
        let b = &inv * l_mat * &inv;
        let btri = pack_quadratic(&b);
        if let Some(h) = history.as_mut() {
            h.push(value);
        }

        // gap over the active set drives the iteration; convergence is only
        // declared against the full candidate set
        let mut gap = f64::NEG_INFINITY;
        for &i in &active {
            let di = table.glm_weights[i] * quad_form(&btri, table.g(i));
            gap = gap.max(di - value);
        }
        let active_converged = gap <= opts.tol * value;
        if active_converged || iterations % FULL_CHECK_EVERY == 0 {
            if full_gap(&btri, value) <= opts.tol * value {
                converged = true;
                break;
            }
            if active_converged {
                // a frozen candidate's sensitivity rose above the optimum:
                // give it mass again and keep iterating
                let mut total: f64 = p.iter().sum();
                for i in 0..n {
                    if p[i] == 0.0 {
                        let di = table.glm_weights[i] * quad_form(&btri, table.g(i));
                        if di > (1.0 + opts.tol) * value {
                            p[i] = REACTIVATE_MASS;
                            total += REACTIVATE_MASS;
                            active.push(i);
                        }
                    }
                }
                active.sort_unstable();
                for pi in p.iter_mut() {
                    *pi /= total;
                }
            }
        }
        if iterations >= opts.max_iter {
            break;
        }
        // give up on hopelessly conditioned problems: a per-iteration
        // contraction worse than 0.98^(1/1024) could not reach the tolerance
        // within any sane max_iter, so flag unconverged early
        if iterations % STALL_WINDOW == 0 {
            if iterations > 0 && gap >= STALL_RATIO * stall_gap {
                break;
            }
            stall_gap = gap;
        }

        // multiplicative step on the live weights
        let mut total = 0.0;
        for &i in &active {
            let di = table.glm_weights[i] * quad_form(&btri, table.g(i));
            p[i] *= (di / value).max(0.0).powf(UPDATE_EXPONENT);
            total += p[i];
        }
        for &i in &active {
            p[i] /= total;
        }
        // freeze weights that have decayed to numerical irrelevance; the
        // dropped mass (at most n * FREEZE_TOL ~ 1e-13 relative) is far below
        // rounding noise, and the full-gap checks keep certifying the frozen
        // candidates
        if active.len() > l {
            let live: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&i| p[i] > FREEZE_TOL)
                .collect();
            if live.len() >= l && live.len() < active.len() {
                for &i in &active {
                    if p[i] <= FREEZE_TOL {
                        p[i] = 0.0;
                    }
                }
                active = live;
            }
        }
        iterations += 1;
    }

    // prune negligible support and renormalize
    let keep: Vec<usize> = (0..n).filter(|&i| p[i] > PRUNE_TOL).collect();
    let kept_total: f64 = keep.iter().map(|&i| p[i]).sum();
    let mut pruned = vec![0.0; n];
    for &i in &keep {
        pruned[i] = p[i] / kept_total;
    }

    // final certificate over the full candidate set at the returned weights,
    // through the eigendecomposition path used everywhere else
    let info = info_over(&table, &pruned, &keep);
    let eig = sym_eigen(&info);
    let value = eig.trace_inv_product(l_mat)?;
    let b = eig.inv_sandwich(l_mat)?;
    let btri = pack_quadratic(&b);
    let gap = full_gap(&btri, value);

    let support: Vec<Vec<f64>> = keep.iter().map(|&i| candidates[i].clone()).collect();
    let support_weights: Vec<f64> = keep.iter().map(|&i| pruned[i]).collect();

    Ok(SolveResult {
        weights: DesignWeights::new(support, support_weights)?,
        criterion_value: value,
        equivalence_gap: gap,
        iterations,
        converged,
        criterion_history: history,
    })
}

/// L-efficiency of an exact design against a solved optimum; zero with a
/// singularity flag when the design's information matrix is singular.
#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyReport {
    pub efficiency: f64,
    /// The design's own criterion value, absent when singular.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion_value: Option<f64>,
    pub optimal_value: f64,
    pub singular: bool,
}

pub fn l_efficiency(
    design: &Design,
    spec: &ModelSpec,
    criterion: &CriterionMatrix,
    opt: &SolveResult,
) -> Result<EfficiencyReport> {
    let info = info_exact(design, spec)?;
    match l_value(&info, criterion) {
        Ok(value) => Ok(EfficiencyReport {
            efficiency: opt.criterion_value / value,
            criterion_value: Some(value),
            optimal_value: opt.criterion_value,
            singular: false,
        }),
        Err(Error::SingularInformation { .. }) => Ok(EfficiencyReport {
            efficiency: 0.0,
            criterion_value: None,
            optimal_value: opt.criterion_value,
            singular: true,
        }),
        Err(e) => Err(e),
    }
}

/// EI-efficiency: L-efficiency with the EI criterion matrix for the given
/// IMSE measure. `opt` must have been solved under the same criterion.
pub fn ei_efficiency(
    design: &Design,
    spec: &ModelSpec,
    imse_target: TargetDistribution,
    rule: &QuadratureRule,
    opt: &SolveResult,
) -> Result<EfficiencyReport> {
    let a = ei_matrix(spec, imse_target, rule)?;
    let criterion = CriterionMatrix::ei(a)?;
    l_efficiency(design, spec, &criterion, opt)
}

/// Builds the standardized-A criterion: solves the `l` c-optimal problems
/// `min (I^{-1})_jj` and assembles `diag(1 / min_j)`.
pub fn standardized_a_matrix(
    candidates: &[Vec<f64>],
    spec: &ModelSpec,
    opts: &SolveOptions,
) -> Result<CriterionMatrix> {
    let l = spec.len();
    let mut diag = DMatrix::zeros(l, l);
    for j in 0..l {
        let cj = CriterionMatrix::c_vector(l, j)?;
        let sol = solve_l_optimal(candidates, spec, &cj, opts)?;
        if !(sol.criterion_value > 0.0) {
            return Err(Error::invalid(format!(
                "c-optimal value for coefficient {j} is not positive"
            )));
        }
        diag[(j, j)] = 1.0 / sol.criterion_value;
    }
    Ok(CriterionMatrix {
        matrix: diag,
        kind: CriterionKind::StandardizedA,
    })
}
