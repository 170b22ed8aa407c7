//! Design-family generators: five space-filling constructions on `[0,1]^d`
//! plus their uniform-scaled and arcsine-inverse-transformed versions on
//! `[-1,1]^d`. Every generator is a pure function of `(n, d, seed)`, so
//! identical specs reproduce bit-identical designs.

mod lhd;
mod sobol;

pub use lhd::{
    maximin_criterion, maximin_lhd, maxpro_criterion, maxpro_lhd, mincorr_criterion, mincorr_lhd,
    random_design, random_lhd,
};
pub use sobol::{scrambled_sobol, sobol_unscrambled, MAX_DIMENSION as SOBOL_MAX_DIMENSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{unit_cube_to_design, Design, TargetDistribution};

/// Annealing proposals per factor for the maximum projection design, whose
/// reference construction optimizes hard.
pub const MAXPRO_BUDGET_PER_DIM: u64 = 10_000;

/// Annealing proposals per factor for the maximin and minimum-correlation
/// designs; the common library routines only lightly select among random
/// hypercubes, and matching that strength keeps the family comparison
/// meaningful.
pub const SELECTION_BUDGET_PER_DIM: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ScrambledSobol,
    RandomLhd,
    MaximinLhd,
    MincorrLhd,
    MaxproLhd,
    Random,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::ScrambledSobol => "scrambled-sobol",
            Family::RandomLhd => "random-lhd",
            Family::MaximinLhd => "maximin-lhd",
            Family::MincorrLhd => "mincorr-lhd",
            Family::MaxproLhd => "maxpro-lhd",
            Family::Random => "random",
        }
    }

    pub fn is_optimized(self) -> bool {
        matches!(
            self,
            Family::MaximinLhd | Family::MincorrLhd | Family::MaxproLhd
        )
    }

    /// Default annealing budget for the optimized families.
    pub fn default_budget(self, d: usize) -> u64 {
        match self {
            Family::MaxproLhd => MAXPRO_BUDGET_PER_DIM * d as u64,
            Family::MaximinLhd | Family::MincorrLhd => SELECTION_BUDGET_PER_DIM * d as u64,
            _ => 0,
        }
    }

    pub const ALL: [Family; 6] = [
        Family::ScrambledSobol,
        Family::RandomLhd,
        Family::MaximinLhd,
        Family::MincorrLhd,
        Family::MaxproLhd,
        Family::Random,
    ];
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown design family: {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// Annealing proposals for the optimized families; `None` means
    /// [`DEFAULT_BUDGET_PER_DIM`] per factor.
    pub optimizer_budget: Option<u64>,
}

impl GeneratorSpec {
    pub fn new(family: Family, n: usize, d: usize, seed: u64) -> Result<Self> {
        let spec = GeneratorSpec {
            family,
            n,
            d,
            seed,
            optimizer_budget: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_budget(mut self, budget: u64) -> Result<Self> {
        self.optimizer_budget = Some(budget);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("designs need at least two points"));
        }
        if self.d < 1 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if self.family.is_optimized() && self.optimizer_budget == Some(0) {
            return Err(Error::invalid("optimizer budget must be at least 1"));
        }
        Ok(())
    }

    pub fn budget(&self) -> u64 {
        self.optimizer_budget
            .unwrap_or_else(|| self.family.default_budget(self.d))
    }

    /// The family's points on the unit cube `[0,1]^d`.
    pub fn unit_cube_points(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        match self.family {
            Family::ScrambledSobol => scrambled_sobol(self.n, self.d, self.seed),
            Family::RandomLhd => Ok(random_lhd(self.n, self.d, self.seed)),
            Family::MaximinLhd => Ok(maximin_lhd(self.n, self.d, self.seed, self.budget())),
            Family::MincorrLhd => mincorr_lhd(self.n, self.d, self.seed, self.budget()),
            Family::MaxproLhd => Ok(maxpro_lhd(self.n, self.d, self.seed, self.budget())),
            Family::Random => Ok(random_design(self.n, self.d, self.seed)),
        }
    }
}

/// Generates the family on `[0,1]^d` and maps it onto `[-1,1]^d` through the
/// target's inverse CDF (plain scaling for the uniform target).
pub fn generate(spec: &GeneratorSpec, target: TargetDistribution) -> Result<Design> {
    if target.d != spec.d {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            got: target.d,
        });
    }
    let pts = spec.unit_cube_points()?;
    unit_cube_to_design(&pts, target)
}
