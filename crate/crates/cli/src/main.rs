//! `pilot-design`: generate space-filling pilot designs, score their kernel
//! discrepancy and GLM design efficiencies, solve locally L-optimal reference
//! designs, verify the efficiency lower-bound chain, and run the benchmark
//! studies.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use pilot_design::bound::bound_check;
use pilot_design::discrepancy::{discrepancy_closed, discrepancy_mc};
use pilot_design::generator::{generate, Family, GeneratorSpec};
use pilot_design::glm::{default_level, info_exact, info_target, quadrature, QuadratureRule};
use pilot_design::solver::{
    candidate_grid, candidate_sobol_cloud, default_candidates, ei_efficiency, l_efficiency,
    solve_l_optimal, standardized_a_matrix, CriterionMatrix, SolveOptions,
};
use pilot_design::study::{
    emit_report, example_config, run_study, CoeffSampling, ExampleId, ReportFormat, StudyConfig,
};
use pilot_design::{Design, Error, ModelSpec, Result, TargetDistribution, TargetKind};

#[derive(Parser)]
#[command(name = "pilot-design", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a design family and write it as CSV.
    Generate {
        /// scrambled-sobol | random-lhd | maximin-lhd | mincorr-lhd |
        /// maxpro-lhd | random
        #[arg(long)]
        family: Family,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        /// uniform | arcsine
        #[arg(long)]
        target: TargetKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Annealing proposals for the optimized families.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Kernel discrepancy of a design against a target distribution.
    Discrepancy {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        target: TargetKind,
        /// Estimate by Monte Carlo instead of the closed form.
        #[arg(long)]
        mc: bool,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve the locally L-optimal continuous design over a candidate set.
    Solve {
        #[arg(long)]
        model: PathBuf,
        /// A | c:<j> | SA | EI  (j is 1-based)
        #[arg(long, default_value = "A")]
        criterion: String,
        /// <k> for a tensor grid with k points per axis, or sobol:<N>.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        /// IMSE measure for the EI criterion.
        #[arg(long, default_value = "uniform")]
        imse_target: TargetKind,
        /// Quadrature level for the EI criterion matrix.
        #[arg(long)]
        level: Option<usize>,
        #[arg(long, default_value_t = 0)]
        grid_seed: u64,
    },
    /// L-efficiency of a design against the solved optimum.
    Efficiency {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "A")]
        criterion: String,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        #[arg(long, default_value = "uniform")]
        imse_target: TargetKind,
        #[arg(long)]
        level: Option<usize>,
        #[arg(long, default_value_t = 0)]
        grid_seed: u64,
        /// Include the design information matrix in the output.
        #[arg(long)]
        dump_info: bool,
    },
    /// Run a benchmark study (ex1 | ex2 | ex3, or a JSON config).
    Experiment {
        #[arg(long, conflicts_with = "config")]
        example: Option<String>,
        /// JSON file mirroring all flags (a serialized study config).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Full replication counts and coefficient samples (slow; the
        /// default desk scale preserves the qualitative findings).
        #[arg(long)]
        full_scale: bool,
        /// Override the number of design replications per family.
        #[arg(long)]
        seeds: Option<usize>,
        /// Override grid-mode coefficient spaces to k points per axis.
        #[arg(long)]
        coeff_grid: Option<usize>,
        /// Override Sobol-mode coefficient spaces to N samples.
        #[arg(long)]
        coeff_sobol: Option<usize>,
        #[arg(long)]
        master_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (PILOT_DESIGN_THREADS overrides).
        #[arg(long)]
        threads: Option<usize>,
        /// csv | json
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Verify the efficiency lower-bound chain for one design and model.
    BoundCheck {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: TargetKind,
        #[arg(long, default_value = "A")]
        criterion: String,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        #[arg(long)]
        level: Option<usize>,
        #[arg(long, default_value_t = 0)]
        grid_seed: u64,
        #[arg(long)]
        dump_info: bool,
    },
}

enum GridSpec {
    Tensor(usize),
    Sobol(usize),
}

impl FromStr for GridSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(count) = s.strip_prefix("sobol:") {
            let count = count
                .parse()
                .map_err(|_| Error::invalid(format!("bad sobol count in grid spec: {s}")))?;
            return Ok(GridSpec::Sobol(count));
        }
        let k = s
            .parse()
            .map_err(|_| Error::invalid(format!("grid spec must be <k> or sobol:<N>, got {s}")))?;
        Ok(GridSpec::Tensor(k))
    }
}

fn build_candidates(d: usize, grid: &Option<String>, seed: u64) -> Result<Vec<Vec<f64>>> {
    match grid {
        None => default_candidates(d, seed),
        Some(s) => match s.parse::<GridSpec>()? {
            GridSpec::Tensor(k) => candidate_grid(d, k),
            GridSpec::Sobol(n) => candidate_sobol_cloud(d, n, seed),
        },
    }
}

enum CriterionSpec {
    A,
    C(usize),
    Sa,
    Ei,
}

impl FromStr for CriterionSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(CriterionSpec::A),
            "sa" => Ok(CriterionSpec::Sa),
            "ei" => Ok(CriterionSpec::Ei),
            other => {
                if let Some(j) = other.strip_prefix("c:") {
                    let j: usize = j
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad coefficient index in {s}")))?;
                    if j == 0 {
                        return Err(Error::invalid("coefficient indices are 1-based"));
                    }
                    Ok(CriterionSpec::C(j - 1))
                } else {
                    Err(Error::invalid(format!(
                        "criterion must be A, c:<j>, SA, or EI; got {s}"
                    )))
                }
            }
        }
    }
}

struct CriterionContext<'a> {
    spec: &'a ModelSpec,
    candidates: &'a [Vec<f64>],
    opts: &'a SolveOptions,
    imse_target: TargetKind,
    level: Option<usize>,
}

fn build_criterion(which: &CriterionSpec, ctx: &CriterionContext) -> Result<CriterionMatrix> {
    let l = ctx.spec.len();
    match which {
        CriterionSpec::A => Ok(CriterionMatrix::a_identity(l)),
        CriterionSpec::C(j) => CriterionMatrix::c_vector(l, *j),
        CriterionSpec::Sa => standardized_a_matrix(ctx.candidates, ctx.spec, ctx.opts),
        CriterionSpec::Ei => {
            let d = ctx.spec.dimension();
            let target = TargetDistribution::new(ctx.imse_target, d);
            let rule = quadrature(target, ctx.level.unwrap_or_else(|| default_level(d)))?;
            let a = pilot_design::glm::ei_matrix(ctx.spec, target, &rule)?;
            CriterionMatrix::ei(a)
        }
    }
}

fn imse_rule(spec: &ModelSpec, kind: TargetKind, level: Option<usize>) -> Result<QuadratureRule> {
    let d = spec.dimension();
    quadrature(
        TargetDistribution::new(kind, d),
        level.unwrap_or_else(|| default_level(d)),
    )
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            family,
            n,
            d,
            target,
            seed,
            budget,
            out,
        } => {
            let mut spec = GeneratorSpec::new(family, n, d, seed)?;
            if let Some(b) = budget {
                spec = spec.with_budget(b)?;
            }
            let design = generate(&spec, TargetDistribution::new(target, d))?;
            design.write_csv(&out)?;
            eprintln!(
                "wrote {} distinct points (n = {}) to {}",
                design.num_points(),
                design.size(),
                out.display()
            );
            Ok(())
        }
        Command::Discrepancy {
            design,
            target,
            mc,
            samples,
            seed,
        } => {
            let design = Design::read_csv(&design)?;
            let t = TargetDistribution::new(target, design.dimension());
            let report = if mc {
                discrepancy_mc(&design, t, samples, seed)?
            } else {
                discrepancy_closed(&design, t)?
            };
            print_json(&report)
        }
        Command::Solve {
            model,
            criterion,
            grid,
            tol,
            max_iter,
            imse_target,
            level,
            grid_seed,
        } => {
            let spec = ModelSpec::read_json(&model)?;
            let candidates = build_candidates(spec.dimension(), &grid, grid_seed)?;
            let opts = SolveOptions {
                tol,
                max_iter,
                track_history: false,
            };
            let which = criterion.parse()?;
            let ctx = CriterionContext {
                spec: &spec,
                candidates: &candidates,
                opts: &opts,
                imse_target,
                level,
            };
            let l_mat = build_criterion(&which, &ctx)?;
            let sol = solve_l_optimal(&candidates, &spec, &l_mat, &opts)?;
            print_json(&sol)
        }
        Command::Efficiency {
            design,
            model,
            criterion,
            grid,
            tol,
            max_iter,
            imse_target,
            level,
            grid_seed,
            dump_info,
        } => {
            let design = Design::read_csv(&design)?;
            let spec = ModelSpec::read_json(&model)?;
            let candidates = build_candidates(spec.dimension(), &grid, grid_seed)?;
            let opts = SolveOptions {
                tol,
                max_iter,
                track_history: false,
            };
            let which = criterion.parse()?;
            let ctx = CriterionContext {
                spec: &spec,
                candidates: &candidates,
                opts: &opts,
                imse_target,
                level,
            };
            let l_mat = build_criterion(&which, &ctx)?;
            let sol = solve_l_optimal(&candidates, &spec, &l_mat, &opts)?;
            let report = match which {
                CriterionSpec::Ei => {
                    let rule = imse_rule(&spec, imse_target, level)?;
                    let t = TargetDistribution::new(imse_target, spec.dimension());
                    ei_efficiency(&design, &spec, t, &rule, &sol)?
                }
                _ => l_efficiency(&design, &spec, &l_mat, &sol)?,
            };
            let mut out = serde_json::json!({
                "efficiency": report,
                "optimum": {
                    "criterion_value": sol.criterion_value,
                    "equivalence_gap": sol.equivalence_gap,
                    "iterations": sol.iterations,
                    "converged": sol.converged,
                },
            });
            if dump_info {
                out["design_info"] = serde_json::to_value(info_exact(&design, &spec)?)?;
            }
            print_json(&out)
        }
        Command::Experiment {
            example,
            config,
            full_scale,
            seeds,
            coeff_grid,
            coeff_sobol,
            master_seed,
            out,
            threads,
            format,
        } => {
            let mut cfg: StudyConfig = match (&example, &config) {
                (Some(ex), None) => example_config(ex.parse::<ExampleId>()?, full_scale),
                (None, Some(path)) => {
                    serde_json::from_str(&std::fs::read_to_string(path)?)?
                }
                _ => {
                    return Err(Error::invalid(
                        "pass exactly one of --example or --config",
                    ))
                }
            };
            if let Some(r) = seeds {
                cfg.replications = r;
            }
            if let Some(k) = coeff_grid {
                for g in &mut cfg.groups {
                    for s in &mut g.spaces {
                        if let CoeffSampling::Grid { per_axis } = &mut s.sampling {
                            *per_axis = k;
                        }
                    }
                }
            }
            if let Some(n) = coeff_sobol {
                for g in &mut cfg.groups {
                    for s in &mut g.spaces {
                        if let CoeffSampling::Sobol { count } = &mut s.sampling {
                            *count = n;
                        }
                    }
                }
            }
            if let Some(seed) = master_seed {
                cfg.master_seed = seed;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            let fmt: ReportFormat = format.parse()?;
            let result = run_study(&cfg)?;
            let files = emit_report(&result, fmt, &out)?;
            eprintln!(
                "study {}: {} rows, {} bound checks, {} chain violations",
                cfg.name,
                result.rows.len(),
                result.bounds.checked,
                result.bounds.chain_violations
            );
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            print_json(&result.bounds)
        }
        Command::BoundCheck {
            design,
            model,
            target,
            criterion,
            grid,
            tol,
            max_iter,
            level,
            grid_seed,
            dump_info,
        } => {
            let design = Design::read_csv(&design)?;
            let spec = ModelSpec::read_json(&model)?;
            let d = spec.dimension();
            let t = TargetDistribution::new(target, d);
            let candidates = build_candidates(d, &grid, grid_seed)?;
            let opts = SolveOptions {
                tol,
                max_iter,
                track_history: false,
            };
            let which = criterion.parse()?;
            let ctx = CriterionContext {
                spec: &spec,
                candidates: &candidates,
                opts: &opts,
                imse_target: target,
                level,
            };
            let l_mat = build_criterion(&which, &ctx)?;
            let sol = solve_l_optimal(&candidates, &spec, &l_mat, &opts)?;
            let rule = quadrature(t, level.unwrap_or_else(|| default_level(d)))?;
            let check = bound_check(&design, &spec, t, &l_mat, &sol, &rule)?;
            let mut out = serde_json::json!({ "bound": check });
            if dump_info {
                out["design_info"] = serde_json::to_value(info_exact(&design, &spec)?)?;
                out["target_info"] = serde_json::to_value(info_target(t, &spec, &rule)?)?;
            }
            print_json(&out)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
