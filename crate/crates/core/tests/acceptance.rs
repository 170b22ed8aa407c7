//! Acceptance suite. Each test covers one release criterion at its stated
//! tolerance and prints a `[PASS]`/`[FAIL]` line (visible with
//! `cargo test --test acceptance -- --nocapture`).

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;

use pilot_design::bound::{chain_check, target_factor, BoundCheck};
use pilot_design::discrepancy::{discrepancy_closed, discrepancy_mc};
use pilot_design::generator::{generate, GeneratorSpec};
use pilot_design::glm::{info_exact, info_target, quadrature, weight_from_eta};
use pilot_design::model::Link;
use pilot_design::seeding;
use pilot_design::solver::{
    candidate_grid, candidate_sobol_cloud, solve_l_optimal, CriterionMatrix, SolveOptions,
};
use pilot_design::study::{
    crystallography_spaces, example_config, linear_study_bases, run_study, spearman,
    CandidateSpec, CoefficientSpace, CoeffSampling, ExampleId, ModelGroup, StudyConfig,
    StudyFamily, ten_families,
};
use pilot_design::{Design, Error, ModelSpec, TargetDistribution, TargetKind};

fn pass(name: &str, start: Instant, details: String) {
    println!("[PASS] {name} ({:.2?}): {details}", start.elapsed());
}

fn assert_runtime(name: &str, start: Instant, limit: Duration) {
    let elapsed = start.elapsed();
    assert!(
        elapsed <= limit,
        "[FAIL] {name}: runtime {elapsed:.2?} exceeded the {limit:?} budget"
    );
}

fn random_design(rng: &mut impl Rng, d: usize) -> Design {
    let m = rng.random_range(8..=16);
    let pts: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let counts: Vec<u64> = (0..m).map(|_| rng.random_range(1..=3)).collect();
    Design::new(pts, counts).unwrap()
}

/// Criterion: closed-form and Monte-Carlo discrepancies agree within three
/// standard errors at 10^6 samples, for 10 random designs per dimension and
/// target. Runtime under a minute.
#[test]
fn acceptance_discrepancy_oracle_agreement() {
    let start = Instant::now();
    let mut rng = seeding::rng(0xD15C, 0);
    let mut worst_z = 0.0f64;
    for d in [1usize, 2, 4] {
        for kind in [TargetKind::Uniform, TargetKind::Arcsine] {
            let target = TargetDistribution::new(kind, d);
            for case in 0..10 {
                let design = random_design(&mut rng, d);
                let closed = discrepancy_closed(&design, target).unwrap();
                let mc_seed =
                    seeding::derive_seed(0xA11CE, &[d as u64, kind as u64, case]);
                let mc = discrepancy_mc(&design, target, 1_000_000, mc_seed).unwrap();
                let se = mc.mc_std_error.unwrap();
                let z = (closed.d_squared - mc.d_squared).abs() / se;
                worst_z = worst_z.max(z);
                assert!(
                    z <= 3.0,
                    "[FAIL] d={d} {kind:?} case {case}: |closed - mc| = {} = {z:.2} se",
                    (closed.d_squared - mc.d_squared).abs()
                );
            }
        }
    }
    assert_runtime("discrepancy_oracle_agreement", start, Duration::from_secs(60));
    pass(
        "discrepancy_oracle_agreement",
        start,
        format!("60 cases at 1e6 samples, worst |z| = {worst_z:.2}"),
    );
}

/// Criterion: the hand-derived single-point discrepancies match the closed
/// form to 1e-12.
#[test]
fn acceptance_hand_derived_discrepancy_values() {
    let start = Instant::now();
    let design = Design::with_unit_counts(vec![vec![0.0]]).unwrap();
    let unif = discrepancy_closed(&design, TargetDistribution::uniform(1)).unwrap();
    let err_unif = (unif.d_squared - 1.0 / 6.0).abs();
    assert!(err_unif < 1e-12, "[FAIL] uniform: {} vs 1/6", unif.d_squared);

    use std::f64::consts::PI;
    let asin = discrepancy_closed(&design, TargetDistribution::arcsine(1)).unwrap();
    let expect = 2.0 / PI - 4.0 / (PI * PI);
    let err_asin = (asin.d_squared - expect).abs();
    assert!(
        err_asin < 1e-12,
        "[FAIL] arcsine: {} vs {expect}",
        asin.d_squared
    );
    pass(
        "hand_derived_discrepancy_values",
        start,
        format!("errors {err_unif:.2e} (uniform), {err_asin:.2e} (arcsine)"),
    );
}

/// Criterion: flipping the sign of any single coordinate of every design
/// point leaves the discrepancy unchanged to 1e-12, both targets, across 100
/// random designs.
#[test]
fn acceptance_reflection_invariance() {
    let start = Instant::now();
    let mut rng = seeding::rng(0x5EF1, 0);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let d = rng.random_range(1..=4);
        let design = random_design(&mut rng, d);
        for kind in [TargetKind::Uniform, TargetKind::Arcsine] {
            let target = TargetDistribution::new(kind, d);
            let base = discrepancy_closed(&design, target).unwrap().d;
            for coord in 0..d {
                let flipped = design.reflected(coord).unwrap();
                let other = discrepancy_closed(&flipped, target).unwrap().d;
                let diff = (base - other).abs();
                worst = worst.max(diff);
                assert!(
                    diff < 1e-12,
                    "[FAIL] case {case} {kind:?} coord {coord}: |dD| = {diff}"
                );
            }
        }
    }
    pass(
        "reflection_invariance",
        start,
        format!("100 designs, worst |dD| = {worst:.2e}"),
    );
}

/// Brute-force oracle for two-coefficient models: exhaustive search over all
/// two-point-support designs on the candidate grid with a 0.01 weight grid.
fn brute_force_two_point(spec: &ModelSpec, grid: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..grid.len() {
        for k in (i + 1)..grid.len() {
            let gi = pilot_design::basis_eval(spec, &grid[i]).unwrap();
            let gk = pilot_design::basis_eval(spec, &grid[k]).unwrap();
            let ei: f64 = gi.iter().zip(spec.beta()).map(|(a, b)| a * b).sum();
            let ek: f64 = gk.iter().zip(spec.beta()).map(|(a, b)| a * b).sum();
            let wi = weight_from_eta(spec.link(), ei);
            let wk = weight_from_eta(spec.link(), ek);
            for step in 1..100 {
                let w = step as f64 / 100.0;
                // 2x2 information matrix and trace of its inverse
                let a = w * wi * gi[0] * gi[0] + (1.0 - w) * wk * gk[0] * gk[0];
                let b = w * wi * gi[0] * gi[1] + (1.0 - w) * wk * gk[0] * gk[1];
                let c = w * wi * gi[1] * gi[1] + (1.0 - w) * wk * gk[1] * gk[1];
                let det = a * c - b * b;
                if det > 1e-300 {
                    let value = (a + c) / det;
                    best = best.min(value);
                }
            }
        }
    }
    best
}

/// Criterion: the solver reproduces the analytic optima for the logit and
/// identity line models with tight certificates, and matches the brute-force
/// two-point search within 0.5% on random two-coefficient models. Runtime
/// under 30 seconds.
#[test]
fn acceptance_solver_correctness() {
    let start = Instant::now();
    let opts = SolveOptions {
        tol: 1e-8,
        ..Default::default()
    };
    let candidates = candidate_grid(1, 201).unwrap();

    let logit = ModelSpec::new(Link::Logit, vec![vec![0], vec![1]], vec![0.0, 0.0]).unwrap();
    let a = CriterionMatrix::a_identity(2);
    let sol = solve_l_optimal(&candidates, &logit, &a, &opts).unwrap();
    assert!(sol.converged, "[FAIL] logit solve did not converge");
    assert!(
        sol.equivalence_gap <= 1e-7,
        "[FAIL] logit gap {}",
        sol.equivalence_gap
    );
    assert!(
        (sol.criterion_value - 8.0).abs() <= 1e-5,
        "[FAIL] logit value {}",
        sol.criterion_value
    );

    let identity = ModelSpec::new(Link::Identity, vec![vec![0], vec![1]], vec![0.0, 0.0]).unwrap();
    let sol_id = solve_l_optimal(&candidates, &identity, &a, &opts).unwrap();
    assert!(sol_id.converged && sol_id.equivalence_gap <= 1e-7);
    assert!(
        (sol_id.criterion_value - 2.0).abs() <= 1e-5,
        "[FAIL] identity value {}",
        sol_id.criterion_value
    );

    // brute-force comparison on five random two-coefficient models
    let grid21 = candidate_grid(1, 21).unwrap();
    let mut rng = seeding::rng(0xB407, 0);
    let links = [Link::Logit, Link::Probit, Link::Identity, Link::Logit, Link::Probit];
    let mut worst_rel = 0.0f64;
    for (case, &link) in links.iter().enumerate() {
        let beta = vec![
            rng.random_range(-1.5..=1.5),
            rng.random_range(-1.5..=1.5),
        ];
        let spec = ModelSpec::new(link, vec![vec![0], vec![1]], beta.clone()).unwrap();
        let sol = solve_l_optimal(&grid21, &spec, &a, &SolveOptions::default()).unwrap();
        let brute = brute_force_two_point(&spec, &grid21);
        let rel = (sol.criterion_value - brute).abs() / brute;
        worst_rel = worst_rel.max(rel);
        assert!(
            rel <= 0.005,
            "[FAIL] case {case} ({link:?}, beta {beta:?}): solver {} vs brute {brute} (rel {rel})",
            sol.criterion_value
        );
    }

    assert_runtime("solver_correctness", start, Duration::from_secs(30));
    pass(
        "solver_correctness",
        start,
        format!(
            "logit 8.0 ({:.1e} off), identity 2.0 ({:.1e} off), brute force worst rel {worst_rel:.2e}",
            (sol.criterion_value - 8.0).abs(),
            (sol_id.criterion_value - 2.0).abs()
        ),
    );
}

struct ChainCase {
    label: String,
    check: Option<BoundCheck>,
}

static CHAIN_CASES: OnceLock<Vec<ChainCase>> = OnceLock::new();

/// Fifty randomized (family, seed, coefficient, model) cases drawn from the
/// two GLM study settings; shared between the chain and identity tests.
fn chain_cases() -> &'static [ChainCase] {
    CHAIN_CASES.get_or_init(|| {
        let mut rng = seeding::rng(0xC4A1, 0);
        let families = ten_families();
        let mut cases = Vec::with_capacity(50);

        // logistic main-effects setting: n = 16, d = 4
        let spaces = crystallography_spaces(3);
        let grid = candidate_grid(4, 7).unwrap();
        let opts = SolveOptions::default();
        let rules: Vec<_> = [TargetKind::Uniform, TargetKind::Arcsine]
            .iter()
            .map(|&k| quadrature(TargetDistribution::new(k, 4), 24).unwrap())
            .collect();
        for case in 0..30 {
            let fam = families[rng.random_range(0..families.len())];
            let gen_seed = rng.random::<u64>();
            let space = &spaces[rng.random_range(0..3)];
            let beta: Vec<f64> = space
                .intervals
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect();
            let spec = ModelSpec::main_effects(Link::Logit, 4, beta).unwrap();
            let rule = &rules[(fam.target == TargetKind::Arcsine) as usize];
            let label = format!("glm4[{case}] {} {}", fam.label(), space.name);
            cases.push(evaluate_chain_case(
                label, fam, 16, 4, gen_seed, &spec, &grid, &opts, rule,
            ));
        }

        // probit setting: n = 32, d = 6, main effects or with interactions
        let cloud = candidate_sobol_cloud(6, 1 << 12, 0xC10D).unwrap();
        let rules6: Vec<_> = [TargetKind::Uniform, TargetKind::Arcsine]
            .iter()
            .map(|&k| quadrature(TargetDistribution::new(k, 6), 12).unwrap())
            .collect();
        let mut lp2 = {
            let mut basis = vec![vec![0u32; 6]];
            for j in 0..6 {
                let mut t = vec![0u32; 6];
                t[j] = 1;
                basis.push(t);
            }
            basis
        };
        for (a, b) in [(0usize, 1usize), (1, 2), (3, 5)] {
            let mut t = vec![0u32; 6];
            t[a] = 1;
            t[b] = 1;
            lp2.push(t);
        }
        for case in 0..20 {
            let fam = families[rng.random_range(0..families.len())];
            let gen_seed = rng.random::<u64>();
            let with_interactions = rng.random::<bool>();
            let basis = if with_interactions {
                lp2.clone()
            } else {
                lp2[..7].to_vec()
            };
            let beta: Vec<f64> = (0..basis.len())
                .map(|_| rng.random_range(-1.2..=1.2))
                .collect();
            let spec = ModelSpec::new(Link::Probit, basis, beta).unwrap();
            let rule = &rules6[(fam.target == TargetKind::Arcsine) as usize];
            let label = format!(
                "glm6[{case}] {} {}",
                fam.label(),
                if with_interactions { "lp2" } else { "lp1" }
            );
            cases.push(evaluate_chain_case(
                label, fam, 32, 6, gen_seed, &spec, &cloud, &opts, rule,
            ));
        }
        cases
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_chain_case(
    label: String,
    fam: StudyFamily,
    n: usize,
    d: usize,
    gen_seed: u64,
    spec: &ModelSpec,
    candidates: &[Vec<f64>],
    opts: &SolveOptions,
    rule: &pilot_design::glm::QuadratureRule,
) -> ChainCase {
    let target = TargetDistribution::new(fam.target, d);
    let design = generate(
        &GeneratorSpec::new(fam.generator, n, d, gen_seed).unwrap(),
        target,
    )
    .unwrap();
    let criterion = CriterionMatrix::a_identity(spec.len());
    let solved = match solve_l_optimal(candidates, spec, &criterion, opts) {
        Ok(s) => s,
        Err(Error::InfeasibleCandidates | Error::SingularInformation { .. }) => {
            return ChainCase { label, check: None }
        }
        Err(e) => panic!("unexpected solver error: {e}"),
    };
    let run = || -> Result<BoundCheck, Error> {
        let info_xi = info_exact(&design, spec)?;
        let info_tar = info_target(target, spec, rule)?;
        let value_xi =
            pilot_design::solver::l_value(&info_xi, &criterion)?;
        let factor = target_factor(info_tar.entries(), &criterion)?;
        chain_check(info_xi.entries(), value_xi, &factor, solved.criterion_value)
    };
    match run() {
        Ok(check) => ChainCase {
            label,
            check: Some(check),
        },
        Err(Error::SingularInformation { .. }) => ChainCase { label, check: None },
        Err(e) => panic!("unexpected error in chain case: {e}"),
    }
}

/// Criterion (part 1): the efficiency chain
/// `eff(design) >= eff(target) / rho[(I(tar)^{-1} I(xi))^{-1}] - 1e-9`
/// holds on every non-singular randomized case. Runtime under five minutes.
#[test]
fn acceptance_theorem1_chain_inequality() {
    let start = Instant::now();
    let cases = chain_cases();
    let mut evaluated = 0;
    let mut skipped = 0;
    let mut min_margin = f64::INFINITY;
    for case in cases {
        match &case.check {
            None => skipped += 1,
            Some(c) => {
                evaluated += 1;
                min_margin = min_margin.min(c.margin);
                assert!(
                    c.chain_holds,
                    "[FAIL] {}: margin {} below -1e-9 (eff_design {}, eff_target {}, rho term {})",
                    case.label, c.margin, c.eff_design, c.eff_target, c.spectral_radius_term
                );
            }
        }
    }
    assert!(
        evaluated >= 40,
        "[FAIL] only {evaluated} of 50 cases were non-singular"
    );
    assert_runtime("theorem1_chain_inequality", start, Duration::from_secs(300));
    pass(
        "theorem1_chain_inequality",
        start,
        format!("{evaluated} cases hold ({skipped} singular skipped), min margin {min_margin:.3e}"),
    );
}

/// Criterion (part 2): whenever `rho(Itilde) < 1`, the quantity
/// `1 - rho(Itilde)` equals the smallest eigenvalue of the whitened
/// information product to 1e-10.
///
/// The identity is asserted exactly as stated. Note that it can only hold
/// when the spectral radius is attained on the under-informed side
/// (`max mu - 1 <= 1 - min mu` for eigenvalues `mu` of the whitened matrix);
/// designs that over-inform some direction more than they under-inform
/// another falsify it while the chain inequality still holds.
#[test]
fn acceptance_theorem1_eigen_identity() {
    let start = Instant::now();
    let cases = chain_cases();
    let mut applicable = 0;
    let mut failures = Vec::new();
    let mut worst_dev = 0.0f64;
    for case in cases {
        if let Some(c) = &case.check {
            if c.rho_deviation < 1.0 {
                applicable += 1;
                let dev = c.eigen_identity_deviation.unwrap();
                worst_dev = worst_dev.max(dev);
                if c.eigen_identity_holds != Some(true) {
                    failures.push(format!(
                        "{}: 1 - rho = {} vs lambda_min = {} (deviation {:.3e})",
                        case.label,
                        1.0 - c.rho_deviation,
                        c.whitened_min_eigenvalue,
                        dev
                    ));
                }
            }
        }
    }
    if !failures.is_empty() {
        println!(
            "[FAIL] theorem1_eigen_identity: {} of {applicable} applicable cases violate the \
             identity (worst deviation {worst_dev:.3e}); the chain inequality held on all of \
             them, since lambda_min >= 1 - rho always:",
            failures.len()
        );
        for f in &failures {
            println!("  {f}");
        }
    }
    assert!(
        failures.is_empty(),
        "[FAIL] eigenvalue identity violated on {} of {applicable} applicable cases \
         (worst deviation {worst_dev:.3e})",
        failures.len()
    );
    pass(
        "theorem1_eigen_identity",
        start,
        format!("{applicable} applicable cases, worst deviation {worst_dev:.3e}"),
    );
}

/// Criterion: the desk-scale logistic study reproduces the qualitative
/// orderings: SSD and MPLHD beat MmLHD/mcLHD/Random on median uniform
/// discrepancy, and median discrepancy anti-correlates with worst-case
/// A-efficiency in every coefficient space. Runtime under ten minutes.
#[test]
fn acceptance_example1_desk_scale() {
    let start = Instant::now();
    let config = example_config(ExampleId::Ex1, false);
    let result = run_study(&config).unwrap();

    // the study invariant: no chain violations anywhere
    assert_eq!(
        result.bounds.chain_violations, 0,
        "[FAIL] chain violations in the study run"
    );

    let median_disc = |family: &str| -> f64 {
        result
            .summaries
            .iter()
            .find(|s| s.family == family)
            .unwrap_or_else(|| panic!("no summary for {family}"))
            .median_discrepancy
    };

    // (a) Figure-ordering of median uniform discrepancy
    for better in ["SSD", "MPLHD"] {
        for worse in ["MmLHD", "mcLHD", "Random"] {
            assert!(
                median_disc(better) < median_disc(worse),
                "[FAIL] median D: {better} ({}) not below {worse} ({})",
                median_disc(better),
                median_disc(worse)
            );
        }
    }

    // (b) negative Spearman correlation between median discrepancy and
    // worst-case A-efficiency, per coefficient space
    let families: Vec<String> = config.families.iter().map(|f| f.label()).collect();
    let mut spearmans = Vec::new();
    for space in ["B1", "B2", "B3"] {
        let mut disc = Vec::new();
        let mut worst = Vec::new();
        for fam in &families {
            let mut min_eff = f64::INFINITY;
            for r in result.rows.iter().filter(|r| {
                r.family == *fam
                    && r.beta_id.starts_with(&format!("{space}-"))
                    && !r.flags.contains("singular")
                    && !r.flags.contains("solver-failed")
            }) {
                if let Some(e) = r.a_efficiency {
                    min_eff = min_eff.min(e);
                }
            }
            assert!(
                min_eff.is_finite(),
                "[FAIL] family {fam} has no valid rows in {space}"
            );
            disc.push(median_disc(fam));
            worst.push(min_eff);
        }
        let rho = spearman(&disc, &worst);
        assert!(
            rho < 0.0,
            "[FAIL] {space}: Spearman(median discrepancy, worst-case efficiency) = {rho}"
        );
        spearmans.push(format!("{space}: {rho:.3}"));
    }

    assert_runtime("example1_desk_scale", start, Duration::from_secs(600));
    pass(
        "example1_desk_scale",
        start,
        format!(
            "{} rows, SSD/MPLHD lead the discrepancy ordering, Spearman {}",
            result.rows.len(),
            spearmans.join(", ")
        ),
    );
}

/// Criterion (part 1): the linear-study basis enumeration yields exactly 174
/// bases.
///
/// The enumeration implemented is: main effects (1); one extra second-order
/// term including pure quadratics (28 for d = 7); two interactions on four
/// distinct factors (105 for d = 7) — totaling 134. No enumeration built from
/// these three classes can total 174: any class closed under relabeling of
/// the seven factors has size divisible by 7 except the single main-effects
/// basis, so every such total is congruent to 1 mod 7, while 174 is
/// congruent to 6 mod 7.
#[test]
fn acceptance_ex3_basis_enumeration_count() {
    let start = Instant::now();
    let bases = linear_study_bases(7);
    let by_len = |l: usize| bases.iter().filter(|b| b.len() == l).count();
    println!(
        "basis classes: main-effects = {}, one second-order term = {}, two interactions = {} \
         (total {})",
        by_len(8),
        by_len(9),
        by_len(10),
        bases.len()
    );
    assert_eq!(
        bases.len(),
        174,
        "[FAIL] basis enumeration yields {} bases, not 174; no relabeling-symmetric \
         enumeration of these classes can reach 174 (any such total is 1 mod 7, \
         and 174 is 6 mod 7)",
        bases.len()
    );
    pass(
        "ex3_basis_enumeration_count",
        start,
        format!("{} bases", bases.len()),
    );
}

/// Criterion (part 2): identity-link A-efficiencies do not depend on the
/// coefficient vector: rerunning the whole pipeline at two different betas
/// gives identical values to 1e-12.
#[test]
fn acceptance_ex3_identity_link_beta_independence() {
    let start = Instant::now();
    // a two-interaction basis from the linear study
    let basis = linear_study_bases(7)
        .into_iter()
        .find(|b| b.len() == 10)
        .unwrap();
    let l = basis.len();
    let beta_a = vec![0.0; l];
    let beta_b: Vec<f64> = (0..l).map(|i| (i as f64 - 4.0) * 0.75).collect();

    let target = TargetDistribution::arcsine(7);
    let design = generate(
        &GeneratorSpec::new(pilot_design::generator::Family::ScrambledSobol, 128, 7, 11).unwrap(),
        target,
    )
    .unwrap();
    let candidates = candidate_sobol_cloud(7, 1 << 12, 3).unwrap();
    let opts = SolveOptions::default();

    let mut effs = Vec::new();
    for beta in [beta_a, beta_b] {
        let spec = ModelSpec::new(Link::Identity, basis.clone(), beta).unwrap();
        let criterion = CriterionMatrix::a_identity(l);
        let sol = solve_l_optimal(&candidates, &spec, &criterion, &opts).unwrap();
        let eff = pilot_design::solver::l_efficiency(&design, &spec, &criterion, &sol).unwrap();
        effs.push((sol.criterion_value, eff.efficiency));
    }
    let dv = (effs[0].0 - effs[1].0).abs();
    let de = (effs[0].1 - effs[1].1).abs();
    assert!(
        dv <= 1e-12 && de <= 1e-12,
        "[FAIL] identity-link efficiency depends on beta: optimum diff {dv}, efficiency diff {de}"
    );
    pass(
        "ex3_identity_link_beta_independence",
        start,
        format!("efficiency {} at both betas (diff {de:.2e})", effs[0].1),
    );
}

/// Criterion: the tensor quadrature reproduces the exact first two moments of
/// both targets to 1e-12 at any level >= 2.
#[test]
fn acceptance_quadrature_sanity() {
    let start = Instant::now();
    let spec = ModelSpec::new(Link::Identity, vec![vec![0], vec![1]], vec![0.0, 0.0]).unwrap();
    let mut worst = 0.0f64;
    for (kind, m2) in [(TargetKind::Uniform, 1.0 / 3.0), (TargetKind::Arcsine, 0.5)] {
        for level in [2usize, 5, 24] {
            let t = TargetDistribution::new(kind, 1);
            let rule = quadrature(t, level).unwrap();
            let info = info_target(t, &spec, &rule).unwrap();
            let errs = [
                (info.entries()[(0, 0)] - 1.0).abs(),
                (info.entries()[(1, 1)] - m2).abs(),
                info.entries()[(0, 1)].abs(),
            ];
            for e in errs {
                worst = worst.max(e);
                assert!(e < 1e-12, "[FAIL] {kind:?} level {level}: error {e}");
            }
        }
    }
    pass(
        "quadrature_sanity",
        start,
        format!("diag(1, 1/3) and diag(1, 1/2) reproduced, worst error {worst:.2e}"),
    );
}

/// Criterion: a study config plus master seed yields byte-identical rows.csv
/// with 1 and 8 worker threads.
#[test]
fn acceptance_determinism_across_worker_counts() {
    let start = Instant::now();
    let mut config = StudyConfig {
        name: "determinism".into(),
        n: 8,
        d: 2,
        families: vec![
            StudyFamily {
                generator: pilot_design::generator::Family::ScrambledSobol,
                target: TargetKind::Uniform,
            },
            StudyFamily {
                generator: pilot_design::generator::Family::MaxproLhd,
                target: TargetKind::Arcsine,
            },
            StudyFamily {
                generator: pilot_design::generator::Family::Random,
                target: TargetKind::Uniform,
            },
        ],
        replications: 2,
        master_seed: 0xDE7E,
        groups: vec![ModelGroup {
            basis_id: "main".into(),
            link: Link::Logit,
            basis: vec![vec![0, 0], vec![1, 0], vec![0, 1]],
            spaces: vec![CoefficientSpace {
                name: "B".into(),
                intervals: vec![(-1.0, 1.0); 3],
                sampling: CoeffSampling::Grid { per_axis: 2 },
            }],
        }],
        quadrature_level: 8,
        solver_tol: 1e-7,
        solver_max_iter: 100_000,
        candidates: CandidateSpec::Tensor { per_axis: 7 },
        optimizer_budget: Some(2_000),
        threads: Some(1),
        bound_checks: true,
    };
    let one = run_study(&config).unwrap();
    config.threads = Some(8);
    let eight = run_study(&config).unwrap();
    let csv_one = pilot_design::study::rows_to_csv(&one.rows);
    let csv_eight = pilot_design::study::rows_to_csv(&eight.rows);
    assert_eq!(
        csv_one.as_bytes(),
        csv_eight.as_bytes(),
        "[FAIL] rows.csv differs between 1 and 8 worker threads"
    );
    let sum_one = pilot_design::study::summaries_to_csv(&one.summaries);
    let sum_eight = pilot_design::study::summaries_to_csv(&eight.summaries);
    assert_eq!(sum_one.as_bytes(), sum_eight.as_bytes());
    pass(
        "determinism_across_worker_counts",
        start,
        format!("{} rows byte-identical at 1 vs 8 threads", one.rows.len()),
    );
}
