//! Experiment configuration: a flat TOML document with contract, solver, and
//! command-specific blocks. Every omitted key falls back to the default
//! one-year monthly contract and the standard solver setting.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use lsmc::{BasisChoice, CrRule, Engine, SelectionCriterion, ShapeConstraint, SolverConfig, VaContract};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContractBlock {
    pub horizon: usize,
    pub step_years: f64,
    pub risk_free_rate: f64,
    pub fee_rate: f64,
    pub volatility: f64,
    pub initial_premium: f64,
    /// Defaults to the initial premium when omitted or non-positive.
    pub guarantee_base: Option<f64>,
    pub penalty_rate: f64,
    /// Guaranteed payment fraction per first-withdrawal time; when omitted
    /// the default stepped schedule is truncated to the horizon.
    pub guarantee_schedule: Option<Vec<f64>>,
}

impl Default for ContractBlock {
    fn default() -> Self {
        let d = VaContract::default();
        Self {
            horizon: d.horizon,
            step_years: d.step_years,
            risk_free_rate: d.risk_free_rate,
            fee_rate: d.fee_rate,
            volatility: d.volatility,
            initial_premium: d.initial_premium,
            guarantee_base: None,
            penalty_rate: d.penalty_rate,
            guarantee_schedule: None,
        }
    }
}

impl ContractBlock {
    pub fn build(&self) -> anyhow::Result<VaContract> {
        let defaults = VaContract::default();
        let schedule = match &self.guarantee_schedule {
            Some(s) => s.clone(),
            None => {
                if self.horizon > defaults.guarantee_schedule.len() {
                    bail!(
                        "contract.guarantee_schedule: required explicitly for horizon {} (default schedule covers 12 steps)",
                        self.horizon
                    );
                }
                defaults.guarantee_schedule[..self.horizon].to_vec()
            }
        };
        let contract = VaContract {
            horizon: self.horizon,
            step_years: self.step_years,
            risk_free_rate: self.risk_free_rate,
            fee_rate: self.fee_rate,
            volatility: self.volatility,
            initial_premium: self.initial_premium,
            guarantee_base: self.guarantee_base.unwrap_or(self.initial_premium),
            penalty_rate: self.penalty_rate,
            guarantee_schedule: schedule,
        };
        contract.validate().context("contract block")?;
        Ok(contract)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub paths_per_step: usize,
    pub basis_order: usize,
    /// Non-empty list switches on per-slice basis-order selection.
    pub basis_candidates: Vec<usize>,
    pub selection_criterion: CriterionName,
    pub truncation_bound: f64,
    pub constraint: ConstraintName,
    pub seed: u64,
    pub repeats: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            paths_per_step: 100_000,
            basis_order: 20,
            basis_candidates: Vec::new(),
            selection_criterion: CriterionName::Gcv,
            truncation_bound: 4.0,
            constraint: ConstraintName::Monotone,
            seed: 20240801,
            repeats: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintName {
    None,
    Monotone,
    Convex,
    Concave,
    ConvexMonotone,
}

impl From<ConstraintName> for ShapeConstraint {
    fn from(n: ConstraintName) -> Self {
        match n {
            ConstraintName::None => ShapeConstraint::None,
            ConstraintName::Monotone => ShapeConstraint::Monotone,
            ConstraintName::Convex => ShapeConstraint::Convex,
            ConstraintName::Concave => ShapeConstraint::Concave,
            ConstraintName::ConvexMonotone => ShapeConstraint::ConvexMonotone,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionName {
    Cp,
    Gcv,
    Loocv,
}

impl From<CriterionName> for SelectionCriterion {
    fn from(n: CriterionName) -> Self {
        match n {
            CriterionName::Cp => SelectionCriterion::MallowsCp,
            CriterionName::Gcv => SelectionCriterion::GeneralizedCrossValidation,
            CriterionName::Loocv => SelectionCriterion::LeaveOneOut,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum EngineName {
    Bsbu,
    FsbuCr0,
    FsbuCr1,
    FsbuCr2,
}

impl From<EngineName> for Engine {
    fn from(n: EngineName) -> Self {
        match n {
            EngineName::Bsbu => Engine::Bsbu,
            EngineName::FsbuCr0 => Engine::Fsbu(CrRule::Cr0),
            EngineName::FsbuCr1 => Engine::Fsbu(CrRule::Cr1),
            EngineName::FsbuCr2 => Engine::Fsbu(CrRule::Cr2),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionName {
    /// Shape-preserving sieve estimation: the configured constraint applies.
    Spse,
    /// Raw (unconstrained) sieve estimation.
    Rse,
}

#[derive(Clone, Debug, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    /// Path counts for `convergence-sweep`; empty means {1, 2, 4} x 10^5.
    pub paths: Vec<usize>,
    /// `(paths, order)` settings for `compare-regression`; empty means the
    /// solver block's own setting.
    pub settings: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleBlock {
    pub grid_points: usize,
    pub quadrature_order: usize,
    pub max_relative_error: f64,
    /// Horizon override for the oracle comparison; 0 keeps the contract's.
    pub horizon: usize,
}

impl Default for OracleBlock {
    fn default() -> Self {
        Self { grid_points: 401, quadrature_order: 64, max_relative_error: 0.01, horizon: 0 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub engine: EngineName,
    pub regression: RegressionName,
    pub contract: ContractBlock,
    pub solver: SolverBlock,
    pub sweep: SweepBlock,
    pub oracle: OracleBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            engine: EngineName::Bsbu,
            regression: RegressionName::Spse,
            contract: ContractBlock::default(),
            solver: SolverBlock::default(),
            sweep: SweepBlock::default(),
            oracle: OracleBlock::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse and fully validate a configuration document.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).context("parsing the configuration document")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.contract.build()?;
        self.solver_config()?;
        if self.regression == RegressionName::Spse
            && self.solver.constraint == ConstraintName::None
        {
            bail!("regression = \"spse\" needs solver.constraint other than \"none\"");
        }
        for &(m, j) in &self.sweep.settings {
            if m < j + 1 {
                bail!("sweep.settings: paths {m} below order {j} + 1");
            }
        }
        Ok(())
    }

    /// Shape constraint after applying the regression-method override.
    pub fn constraint(&self) -> ShapeConstraint {
        match self.regression {
            RegressionName::Rse => ShapeConstraint::None,
            RegressionName::Spse => self.solver.constraint.into(),
        }
    }

    pub fn solver_config(&self) -> anyhow::Result<SolverConfig> {
        let basis = if self.solver.basis_candidates.is_empty() {
            BasisChoice::Fixed(self.solver.basis_order)
        } else {
            BasisChoice::Select {
                candidates: self.solver.basis_candidates.clone(),
                criterion: self.solver.selection_criterion.into(),
            }
        };
        let config = SolverConfig {
            paths_per_step: self.solver.paths_per_step,
            basis,
            truncation_bound: self.solver.truncation_bound,
            constraint: self.constraint(),
            seed: self.solver.seed,
            repeats: self.solver.repeats,
        };
        config
            .validate()
            .map_err(|e| anyhow::anyhow!("solver block: {e}"))?;
        Ok(config)
    }

    /// Canonical serialization used for the manifest hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
