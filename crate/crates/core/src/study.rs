//! Reproducible benchmark studies: run the ten design families against
//! coefficient spaces, collecting discrepancy, A-efficiency against per-beta
//! solved optima, and the efficiency lower-bound chain for every row.
//!
//! A study is a pure function of its config (which embeds the master seed):
//! per-task seeds are derived by counter, the per-beta optimum cache is
//! keyed by inputs only, and rows are sorted before writing, so `rows.csv`
//! is byte-identical regardless of worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{chain_check, target_factor, BoundCheck, TargetFactor};
use crate::error::{Error, Result};
use crate::generator::{generate, scrambled_sobol, Family, GeneratorSpec};
use crate::glm::{default_level, info_exact, quadrature, QuadratureRule};
use crate::linalg::sym_eigen;
use crate::model::{Design, Link, ModelSpec, TargetDistribution, TargetKind};
use crate::seeding::derive_seed;
use crate::solver::{
    candidate_grid, candidate_sobol_cloud, CriterionMatrix, SolveOptions, SolveResult,
};
use crate::{discrepancy, solver};

/// Cap on tensor coefficient grids (`per_axis^l`).
pub const COEFF_GRID_CAP: usize = 1 << 17;

const FAMILY_TAG: u64 = 0x01;
const BETA_TAG: u64 = 0x02;
const CANDIDATE_TAG: u64 = 0x03;

// ---------------------------------------------------------------------------
// coefficient spaces
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum CoeffSampling {
    /// Tensor grid with `per_axis` values per interval, endpoints included.
    Grid { per_axis: usize },
    /// Scrambled Sobol sample mapped affinely into the box.
    Sobol { count: usize },
    /// An explicit list of coefficient vectors.
    Fixed { vectors: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientSpace {
    pub name: String,
    /// Per-coefficient closed intervals.
    pub intervals: Vec<(f64, f64)>,
    pub sampling: CoeffSampling,
}

impl CoefficientSpace {
    pub fn grid(name: &str, intervals: Vec<(f64, f64)>, per_axis: usize) -> Self {
        CoefficientSpace {
            name: name.to_string(),
            intervals,
            sampling: CoeffSampling::Grid { per_axis },
        }
    }

    pub fn sobol(name: &str, intervals: Vec<(f64, f64)>, count: usize) -> Self {
        CoefficientSpace {
            name: name.to_string(),
            intervals,
            sampling: CoeffSampling::Sobol { count },
        }
    }

    pub fn fixed(name: &str, vectors: Vec<Vec<f64>>) -> Self {
        let l = vectors.first().map_or(0, Vec::len);
        CoefficientSpace {
            name: name.to_string(),
            intervals: vec![(0.0, 0.0); l],
            sampling: CoeffSampling::Fixed { vectors },
        }
    }
}

/// Draws the coefficient vectors of a space. Grid mode includes interval
/// endpoints; Sobol mode scrambles with the given seed.
pub fn sample_coefficients(space: &CoefficientSpace, seed: u64) -> Result<Vec<Vec<f64>>> {
    let l = space.intervals.len();
    for &(lo, hi) in &space.intervals {
        if !(lo <= hi) {
            return Err(Error::invalid(format!(
                "empty coefficient interval [{lo}, {hi}]"
            )));
        }
    }
    match &space.sampling {
        CoeffSampling::Grid { per_axis } => {
            let k = *per_axis;
            if k == 0 {
                return Err(Error::invalid("grid needs at least one point per axis"));
            }
            let total = (k as u128).pow(l as u32);
            if total > COEFF_GRID_CAP as u128 {
                return Err(Error::CapExceeded {
                    requested: total.min(usize::MAX as u128) as usize,
                    cap: COEFF_GRID_CAP,
                    hint: "use Sobol sampling for large coefficient spaces",
                });
            }
            let axes: Vec<Vec<f64>> = space
                .intervals
                .iter()
                .map(|&(lo, hi)| {
                    if k == 1 {
                        vec![(lo + hi) / 2.0]
                    } else {
                        (0..k)
                            .map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64)
                            .collect()
                    }
                })
                .collect();
            let mut out = Vec::with_capacity(total as usize);
            let mut idx = vec![0usize; l];
            loop {
                out.push((0..l).map(|j| axes[j][idx[j]]).collect());
                let mut j = l;
                loop {
                    if j == 0 {
                        return Ok(out);
                    }
                    j -= 1;
                    idx[j] += 1;
                    if idx[j] < k {
                        break;
                    }
                    idx[j] = 0;
                }
            }
        }
        CoeffSampling::Sobol { count } => {
            let pts = scrambled_sobol(*count, l, seed)?;
            Ok(pts
                .into_iter()
                .map(|p| {
                    p.iter()
                        .zip(&space.intervals)
                        .map(|(&u, &(lo, hi))| lo + u * (hi - lo))
                        .collect()
                })
                .collect())
        }
        CoeffSampling::Fixed { vectors } => {
            if vectors.is_empty() {
                return Err(Error::invalid("fixed coefficient list is empty"));
            }
            Ok(vectors.clone())
        }
    }
}

// ---------------------------------------------------------------------------
// families and model groups
// ---------------------------------------------------------------------------

/// One of the benchmarked design families: a generator paired with the
/// target distribution it approximates (and is scored against).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyFamily {
    pub generator: Family,
    pub target: TargetKind,
}

impl StudyFamily {
    pub fn label(&self) -> String {
        let short = match self.generator {
            Family::ScrambledSobol => "SSD",
            Family::RandomLhd => "LHD",
            Family::MaximinLhd => "MmLHD",
            Family::MincorrLhd => "mcLHD",
            Family::MaxproLhd => "MPLHD",
            Family::Random => "Random",
        };
        match self.target {
            TargetKind::Uniform => short.to_string(),
            TargetKind::Arcsine => format!("Asin{short}"),
        }
    }
}

/// The ten families compared in the studies: five space-filling generators,
/// each scored against the uniform target and (inverse-transformed) against
/// the arcsine target.
pub fn ten_families() -> Vec<StudyFamily> {
    let base = [
        Family::ScrambledSobol,
        Family::MaximinLhd,
        Family::MincorrLhd,
        Family::MaxproLhd,
        Family::Random,
    ];
    let mut out = Vec::with_capacity(10);
    for kind in [TargetKind::Uniform, TargetKind::Arcsine] {
        for f in base {
            out.push(StudyFamily {
                generator: f,
                target: kind,
            });
        }
    }
    out
}

/// A basis (with link) studied over one or more coefficient spaces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelGroup {
    pub basis_id: String,
    pub link: Link,
    pub basis: Vec<Vec<u32>>,
    pub spaces: Vec<CoefficientSpace>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CandidateSpec {
    Tensor { per_axis: usize },
    Sobol { count: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyConfig {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub families: Vec<StudyFamily>,
    /// Independent design replications (seeds) per family.
    pub replications: usize,
    pub master_seed: u64,
    pub groups: Vec<ModelGroup>,
    pub quadrature_level: usize,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub candidates: CandidateSpec,
    /// Annealing budget for the optimized LHD families; `None` = default.
    pub optimizer_budget: Option<u64>,
    /// Worker threads; `None` = rayon default. The `PILOT_DESIGN_THREADS`
    /// environment variable overrides this.
    pub threads: Option<usize>,
    pub bound_checks: bool,
}

// ---------------------------------------------------------------------------
// example configurations
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExampleId {
    Ex1,
    Ex2,
    Ex3,
}

impl std::str::FromStr for ExampleId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ex1" => Ok(ExampleId::Ex1),
            "ex2" => Ok(ExampleId::Ex2),
            "ex3" => Ok(ExampleId::Ex3),
            other => Err(Error::invalid(format!("unknown example: {other}"))),
        }
    }
}

fn main_effects_basis(d: usize) -> Vec<Vec<u32>> {
    let mut basis = vec![vec![0u32; d]];
    for j in 0..d {
        let mut t = vec![0u32; d];
        t[j] = 1;
        basis.push(t);
    }
    basis
}

/// The three coefficient boxes of the logistic crystallography study.
pub fn crystallography_spaces(per_axis: usize) -> Vec<CoefficientSpace> {
    vec![
        CoefficientSpace::grid(
            "B1",
            vec![(-3.0, 3.0), (-2.0, 4.0), (-3.0, 3.0), (0.0, 6.0), (-2.5, 3.5)],
            per_axis,
        ),
        CoefficientSpace::grid(
            "B2",
            vec![(-1.0, 1.0), (0.0, 2.0), (-1.0, 1.0), (2.0, 4.0), (-0.5, 1.5)],
            per_axis,
        ),
        CoefficientSpace::grid(
            "B3",
            vec![(-3.0, 3.0), (4.0, 10.0), (5.0, 11.0), (-6.0, 0.0), (-2.5, 3.5)],
            per_axis,
        ),
    ]
}

/// Bases for the linear-model study on `d` factors: main effects only; main
/// effects plus one second-order term `x_i x_j` (i <= j, so pure quadratics
/// count); main effects plus two interactions on four distinct factors.
pub fn linear_study_bases(d: usize) -> Vec<Vec<Vec<u32>>> {
    let mut out = Vec::new();
    out.push(main_effects_basis(d));
    for i in 0..d {
        for j in i..d {
            let mut basis = main_effects_basis(d);
            let mut t = vec![0u32; d];
            t[i] += 1;
            t[j] += 1;
            basis.push(t);
            out.push(basis);
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            for k in (i + 1)..d {
                for s in (k + 1)..d {
                    if k == j || s == j {
                        continue;
                    }
                    let mut basis = main_effects_basis(d);
                    let mut t1 = vec![0u32; d];
                    t1[i] = 1;
                    t1[j] = 1;
                    let mut t2 = vec![0u32; d];
                    t2[k] = 1;
                    t2[s] = 1;
                    basis.push(t1);
                    basis.push(t2);
                    out.push(basis);
                }
            }
        }
    }
    out
}

/// Desk-scale and full-scale configurations of the three studies.
pub fn example_config(id: ExampleId, full_scale: bool) -> StudyConfig {
    match id {
        ExampleId::Ex1 => {
            let per_axis = if full_scale { 7 } else { 3 };
            StudyConfig {
                name: "ex1".into(),
                n: 16,
                d: 4,
                families: ten_families(),
                replications: if full_scale { 100 } else { 20 },
                master_seed: 20240801,
                groups: vec![ModelGroup {
                    basis_id: "main".into(),
                    link: Link::Logit,
                    basis: main_effects_basis(4),
                    spaces: crystallography_spaces(per_axis),
                }],
                quadrature_level: default_level(4),
                solver_tol: 1e-7,
                solver_max_iter: 100_000,
                candidates: CandidateSpec::Tensor { per_axis: 7 },
                optimizer_budget: None,
                threads: None,
                bound_checks: true,
            }
        }
        ExampleId::Ex2 => {
            let count = if full_scale { 1024 } else { 256 };
            let box7: Vec<(f64, f64)> = vec![(-1.2, 1.2); 7];
            let box10: Vec<(f64, f64)> = vec![(-1.2, 1.2); 10];
            let mut lp2 = main_effects_basis(6);
            for (a, b) in [(0usize, 1usize), (1, 2), (3, 5)] {
                let mut t = vec![0u32; 6];
                t[a] = 1;
                t[b] = 1;
                lp2.push(t);
            }
            StudyConfig {
                name: "ex2".into(),
                n: 32,
                d: 6,
                families: ten_families(),
                replications: if full_scale { 100 } else { 20 },
                master_seed: 20240802,
                groups: vec![
                    ModelGroup {
                        basis_id: "lp1".into(),
                        link: Link::Probit,
                        basis: main_effects_basis(6),
                        spaces: vec![CoefficientSpace::sobol("B", box7, count)],
                    },
                    ModelGroup {
                        basis_id: "lp2".into(),
                        link: Link::Probit,
                        basis: lp2,
                        spaces: vec![CoefficientSpace::sobol("B", box10, count)],
                    },
                ],
                quadrature_level: default_level(6),
                solver_tol: 1e-7,
                solver_max_iter: 100_000,
                candidates: CandidateSpec::Sobol { count: 1 << 14 },
                optimizer_budget: None,
                threads: None,
                bound_checks: true,
            }
        }
        ExampleId::Ex3 => {
            let groups = linear_study_bases(7)
                .into_iter()
                .enumerate()
                .map(|(i, basis)| {
                    let l = basis.len();
                    ModelGroup {
                        basis_id: format!("g{i:03}"),
                        link: Link::Identity,
                        basis,
                        spaces: vec![CoefficientSpace::fixed("const", vec![vec![0.0; l]])],
                    }
                })
                .collect();
            StudyConfig {
                name: "ex3".into(),
                n: 128,
                d: 7,
                families: ten_families(),
                replications: if full_scale { 100 } else { 20 },
                master_seed: 20240803,
                groups,
                quadrature_level: default_level(7),
                solver_tol: 1e-7,
                solver_max_iter: 100_000,
                candidates: CandidateSpec::Sobol { count: 1 << 14 },
                optimizer_budget: None,
                threads: None,
                bound_checks: true,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// results
// ---------------------------------------------------------------------------

pub mod flags {
    pub const SINGULAR: &str = "singular";
    pub const SOLVER_FAILED: &str = "solver-failed";
    pub const UNCONVERGED: &str = "unconverged";
    pub const CLAMPED: &str = "clamped";
    pub const DISCREPANCY_CLAMPED: &str = "discrepancy-clamped";
    pub const BOUND_SKIPPED: &str = "bound-skipped";
    pub const CHAIN_VIOLATION: &str = "chain-violation";
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyRow {
    pub family: String,
    pub seed: u32,
    pub beta_id: String,
    pub basis_id: String,
    pub discrepancy: f64,
    pub a_efficiency: Option<f64>,
    pub flags: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilySummary {
    pub family: String,
    pub space: String,
    pub rows: usize,
    pub flagged: usize,
    pub median_discrepancy: f64,
    pub eff_min: Option<f64>,
    pub eff_q1: Option<f64>,
    pub eff_median: Option<f64>,
    pub eff_q3: Option<f64>,
    pub eff_max: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BoundsSummary {
    pub checked: usize,
    pub skipped_singular: usize,
    pub chain_violations: usize,
    pub min_margin: Option<f64>,
    /// Rows where `rho(Itilde) < 1`, making the eigenvalue identity
    /// applicable.
    pub identity_checked: usize,
    pub identity_failures: usize,
    pub max_identity_deviation: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub version: String,
    pub master_seed: u64,
    pub config: StudyConfig,
}

#[derive(Clone, Debug)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub summaries: Vec<FamilySummary>,
    pub bounds: BoundsSummary,
    pub manifest: Manifest,
}

// ---------------------------------------------------------------------------
// the run
// ---------------------------------------------------------------------------

/// Per-beta solved state, shared across all families and seeds.
struct BetaState {
    beta_id: String,
    space: String,
    spec: ModelSpec,
    criterion: CriterionMatrix,
    opt: Option<SolveResult>,
    /// Whitening factor and target criterion value per target kind present
    /// in the study.
    factors: BTreeMap<&'static str, Option<TargetFactor>>,
}

fn factor_key(kind: TargetKind) -> &'static str {
    match kind {
        TargetKind::Uniform => "uniform",
        TargetKind::Arcsine => "arcsine",
    }
}

fn study_threads(config: &StudyConfig) -> Option<usize> {
    if let Ok(v) = std::env::var("PILOT_DESIGN_THREADS") {
        if let Ok(t) = v.trim().parse::<usize>() {
            if t >= 1 {
                return Some(t);
            }
        }
    }
    config.threads
}

/// Runs a study. The result is deterministic for a fixed config, independent
/// of worker count.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = study_threads(config) {
            b = b.num_threads(t);
        }
        b.build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
    };
    pool.install(|| run_study_inner(config))
}

fn run_study_inner(config: &StudyConfig) -> Result<StudyResult> {
    if config.families.is_empty() || config.groups.is_empty() {
        return Err(Error::invalid("study needs at least one family and group"));
    }
    let d = config.d;
    let target_kinds: Vec<TargetKind> = {
        let mut kinds: Vec<TargetKind> = config.families.iter().map(|f| f.target).collect();
        kinds.sort_by_key(|k| factor_key(*k));
        kinds.dedup();
        kinds
    };

    let candidates = match config.candidates {
        CandidateSpec::Tensor { per_axis } => candidate_grid(d, per_axis)?,
        CandidateSpec::Sobol { count } => {
            candidate_sobol_cloud(d, count, derive_seed(config.master_seed, &[CANDIDATE_TAG]))?
        }
    };
    let opts = SolveOptions {
        tol: config.solver_tol,
        max_iter: config.solver_max_iter,
        track_history: false,
    };

    // rules per target kind (all groups share d and level)
    let mut rules: BTreeMap<&'static str, QuadratureRule> = BTreeMap::new();
    for &kind in &target_kinds {
        let t = TargetDistribution::new(kind, d);
        rules.insert(factor_key(kind), quadrature(t, config.quadrature_level)?);
    }

    // solve the per-beta optima and target factors, parallel over betas
    let mut beta_states: Vec<Vec<BetaState>> = Vec::with_capacity(config.groups.len());
    for (gi, group) in config.groups.iter().enumerate() {
        let mut tasks: Vec<(String, String, Vec<f64>)> = Vec::new();
        for (si, space) in group.spaces.iter().enumerate() {
            let seed = derive_seed(config.master_seed, &[BETA_TAG, gi as u64, si as u64]);
            let betas = sample_coefficients(space, seed)?;
            let width = betas.len().saturating_sub(1).to_string().len().max(1);
            for (bi, beta) in betas.into_iter().enumerate() {
                tasks.push((
                    format!("{}-{bi:0width$}", space.name),
                    space.name.clone(),
                    beta,
                ));
            }
        }
        let states: Vec<BetaState> = tasks
            .into_par_iter()
            .map(|(beta_id, space, beta)| {
                let spec = ModelSpec::new(group.link, group.basis.clone(), beta)?;
                let criterion = CriterionMatrix::a_identity(spec.len());
                let opt = match solver::solve_l_optimal(&candidates, &spec, &criterion, &opts) {
                    Ok(sol) => Some(sol),
                    Err(
                        Error::InfeasibleCandidates | Error::SingularInformation { .. },
                    ) => None,
                    Err(e) => return Err(e),
                };
                let mut factors = BTreeMap::new();
                for &kind in &target_kinds {
                    let key = factor_key(kind);
                    let rule = &rules[key];
                    let t = TargetDistribution::new(kind, d);
                    let factor = match crate::glm::info_target(t, &spec, rule) {
                        Ok(info) => target_factor(info.entries(), &criterion).ok(),
                        Err(_) => None,
                    };
                    factors.insert(key, factor);
                }
                Ok(BetaState {
                    beta_id,
                    space,
                    spec,
                    criterion,
                    opt,
                    factors,
                })
            })
            .collect::<Result<_>>()?;
        beta_states.push(states);
    }

    // generate designs and evaluate every row, parallel over (family, seed)
    struct RowOut {
        key: (usize, u32, usize, usize),
        row: StudyRow,
        bound: Option<std::result::Result<BoundCheck, ()>>,
    }

    let family_seed_pairs: Vec<(usize, u32)> = (0..config.families.len())
        .flat_map(|fi| (0..config.replications as u32).map(move |s| (fi, s)))
        .collect();

    let rows_nested: Vec<Vec<RowOut>> = family_seed_pairs
        .into_par_iter()
        .map(|(fi, seed_idx)| {
            let family = &config.families[fi];
            let label = family.label();
            let gen_seed = derive_seed(
                config.master_seed,
                &[FAMILY_TAG, fi as u64, seed_idx as u64],
            );
            let mut gen_spec = GeneratorSpec::new(family.generator, config.n, d, gen_seed)?;
            if let Some(b) = config.optimizer_budget {
                gen_spec = gen_spec.with_budget(b)?;
            }
            let target = TargetDistribution::new(family.target, d);
            let design = generate(&gen_spec, target)?;
            let disc = discrepancy::discrepancy_closed(&design, target)?;

            let mut out = Vec::new();
            for (gi, states) in beta_states.iter().enumerate() {
                for (bi, state) in states.iter().enumerate() {
                    let (row, bound) = evaluate_row(
                        &design,
                        &disc,
                        state,
                        family,
                        &label,
                        seed_idx,
                        &config.groups[gi].basis_id,
                        config.bound_checks,
                    );
                    out.push(RowOut {
                        key: (fi, seed_idx, gi, bi),
                        row,
                        bound,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut all: Vec<RowOut> = rows_nested.into_iter().flatten().collect();
    all.sort_by_key(|r| r.key);

    // aggregate bounds
    let mut bounds = BoundsSummary::default();
    for r in &all {
        match &r.bound {
            None => {}
            Some(Err(())) => bounds.skipped_singular += 1,
            Some(Ok(check)) => {
                bounds.checked += 1;
                if !check.chain_holds {
                    bounds.chain_violations += 1;
                }
                bounds.min_margin = Some(match bounds.min_margin {
                    None => check.margin,
                    Some(m) => m.min(check.margin),
                });
                if let Some(holds) = check.eigen_identity_holds {
                    bounds.identity_checked += 1;
                    if !holds {
                        bounds.identity_failures += 1;
                    }
                }
                if let Some(dev) = check.eigen_identity_deviation {
                    bounds.max_identity_deviation = Some(match bounds.max_identity_deviation {
                        None => dev,
                        Some(m) => m.max(dev),
                    });
                }
            }
        }
    }

    let rows: Vec<StudyRow> = all.into_iter().map(|r| r.row).collect();
    let summaries = summarize(config, &rows, &beta_states);

    Ok(StudyResult {
        rows,
        summaries,
        bounds,
        manifest: Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: config.master_seed,
            config: config.clone(),
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_row(
    design: &Design,
    disc: &discrepancy::DiscrepancyReport,
    state: &BetaState,
    family: &StudyFamily,
    label: &str,
    seed_idx: u32,
    basis_id: &str,
    bound_checks: bool,
) -> (StudyRow, Option<std::result::Result<BoundCheck, ()>>) {
    let mut flag_list: Vec<&str> = Vec::new();
    if disc.clamped {
        flag_list.push(flags::DISCREPANCY_CLAMPED);
    }

    let mut a_efficiency = None;
    let mut bound = None;

    match &state.opt {
        None => flag_list.push(flags::SOLVER_FAILED),
        Some(opt) => {
            if !opt.converged {
                flag_list.push(flags::UNCONVERGED);
            }
            let info = match info_exact(design, &state.spec) {
                Ok(i) => i,
                Err(_) => {
                    // dimension mismatches are config errors caught earlier
                    flag_list.push(flags::SINGULAR);
                    let row = finish_row(label, seed_idx, state, basis_id, disc, None, flag_list);
                    return (row, None);
                }
            };
            if info.clamped() {
                flag_list.push(flags::CLAMPED);
            }
            let eig = sym_eigen(info.entries());
            match eig.trace_inv_product(state.criterion.matrix()) {
                Err(_) => {
                    flag_list.push(flags::SINGULAR);
                    a_efficiency = Some(0.0);
                    if bound_checks {
                        flag_list.push(flags::BOUND_SKIPPED);
                        bound = Some(Err(()));
                    }
                }
                Ok(value) => {
                    a_efficiency = Some(opt.criterion_value / value);
                    if bound_checks {
                        let factor = state.factors.get(factor_key(family.target));
                        match factor.and_then(|f| f.as_ref()) {
                            None => {
                                flag_list.push(flags::BOUND_SKIPPED);
                                bound = Some(Err(()));
                            }
                            Some(f) => {
                                match chain_check(
                                    info.entries(),
                                    value,
                                    f,
                                    opt.criterion_value,
                                ) {
                                    Ok(check) => {
                                        if !check.chain_holds {
                                            flag_list.push(flags::CHAIN_VIOLATION);
                                        }
                                        bound = Some(Ok(check));
                                    }
                                    Err(_) => {
                                        flag_list.push(flags::BOUND_SKIPPED);
                                        bound = Some(Err(()));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let row = finish_row(
        label,
        seed_idx,
        state,
        basis_id,
        disc,
        a_efficiency,
        flag_list,
    );
    (row, bound)
}

fn finish_row(
    label: &str,
    seed_idx: u32,
    state: &BetaState,
    basis_id: &str,
    disc: &discrepancy::DiscrepancyReport,
    a_efficiency: Option<f64>,
    flag_list: Vec<&str>,
) -> StudyRow {
    StudyRow {
        family: label.to_string(),
        seed: seed_idx,
        beta_id: state.beta_id.clone(),
        basis_id: basis_id.to_string(),
        discrepancy: disc.d,
        a_efficiency,
        flags: flag_list.join(";"),
    }
}

// ---------------------------------------------------------------------------
// summaries
// ---------------------------------------------------------------------------

/// Type-7 quantile of pre-sorted values.
fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn summarize(
    config: &StudyConfig,
    rows: &[StudyRow],
    beta_states: &[Vec<BetaState>],
) -> Vec<FamilySummary> {
    let mut space_names: Vec<String> = beta_states
        .iter()
        .flatten()
        .map(|s| s.space.clone())
        .collect();
    space_names.sort();
    space_names.dedup();

    let mut out = Vec::new();
    for family in &config.families {
        let label = family.label();
        // one discrepancy value per seed
        let mut disc: Vec<f64> = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for r in rows.iter().filter(|r| r.family == label) {
            if seen.insert(r.seed) {
                disc.push(r.discrepancy);
            }
        }
        disc.sort_by(f64::total_cmp);
        let median_disc = quantile(&disc, 0.5).unwrap_or(f64::NAN);

        for space in &space_names {
            let mut effs: Vec<f64> = Vec::new();
            let mut n_rows = 0;
            let mut flagged = 0;
            for r in rows.iter().filter(|r| r.family == label) {
                let row_space = beta_space_of(&r.beta_id);
                if row_space != *space {
                    continue;
                }
                n_rows += 1;
                if !r.flags.is_empty() {
                    flagged += 1;
                }
                if let Some(e) = r.a_efficiency {
                    if !r.flags.contains(flags::SINGULAR) {
                        effs.push(e);
                    }
                }
            }
            if n_rows == 0 {
                continue;
            }
            effs.sort_by(f64::total_cmp);
            out.push(FamilySummary {
                family: label.clone(),
                space: space.clone(),
                rows: n_rows,
                flagged,
                median_discrepancy: median_disc,
                eff_min: quantile(&effs, 0.0),
                eff_q1: quantile(&effs, 0.25),
                eff_median: quantile(&effs, 0.5),
                eff_q3: quantile(&effs, 0.75),
                eff_max: quantile(&effs, 1.0),
            });
        }
    }
    out
}

/// Beta ids are `<space>-<index>`.
fn beta_space_of(beta_id: &str) -> String {
    beta_id
        .rsplit_once('-')
        .map(|(s, _)| s.to_string())
        .unwrap_or_else(|| beta_id.to_string())
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    num / (dx * dy).sqrt()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

// ---------------------------------------------------------------------------
// report emission
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid(format!("unknown report format: {other}"))),
        }
    }
}

pub fn rows_to_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("family,seed,beta_id,basis_id,discrepancy,a_efficiency,flags\n");
    for r in rows {
        let eff = r.a_efficiency.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.family, r.seed, r.beta_id, r.basis_id, r.discrepancy, eff, r.flags
        );
    }
    out
}

pub fn summaries_to_csv(summaries: &[FamilySummary]) -> String {
    let mut out = String::from(
        "family,space,rows,flagged,median_discrepancy,eff_min,eff_q1,eff_median,eff_q3,eff_max\n",
    );
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.family,
            s.space,
            s.rows,
            s.flagged,
            s.median_discrepancy,
            fmt(s.eff_min),
            fmt(s.eff_q1),
            fmt(s.eff_median),
            fmt(s.eff_q3),
            fmt(s.eff_max)
        );
    }
    out
}

/// Writes `rows.*`, `summary.*`, `bounds.json`, and `manifest.json` into
/// `dir`, returning the paths written.
pub fn emit_report(
    result: &StudyResult,
    format: ReportFormat,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    match format {
        ReportFormat::Csv => {
            let rows_path = dir.join("rows.csv");
            std::fs::write(&rows_path, rows_to_csv(&result.rows))?;
            written.push(rows_path);
            let summary_path = dir.join("summary.csv");
            std::fs::write(&summary_path, summaries_to_csv(&result.summaries))?;
            written.push(summary_path);
        }
        ReportFormat::Json => {
            let rows_path = dir.join("rows.json");
            std::fs::write(&rows_path, serde_json::to_string_pretty(&result.rows)?)?;
            written.push(rows_path);
            let summary_path = dir.join("summary.json");
            std::fs::write(
                &summary_path,
                serde_json::to_string_pretty(&result.summaries)?,
            )?;
            written.push(summary_path);
        }
    }

    let bounds_path = dir.join("bounds.json");
    std::fs::write(&bounds_path, serde_json::to_string_pretty(&result.bounds)?)?;
    written.push(bounds_path);
    let manifest_path = dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&result.manifest)?,
    )?;
    written.push(manifest_path);
    Ok(written)
}
