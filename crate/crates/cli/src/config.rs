//! JSON configuration schemas for the subcommands. Model specifications are
//! nested, so they live in config files; flags only override seeds, reps, and
//! output paths.

use nalgebra::DMatrix;
use serde::Deserialize;

use spiketest_core::asymptotics::SpikedModel;
use spiketest_core::error::{Result, SpikeError};
use spiketest_core::measure::{BulkSpec, DiscreteMeasure};
use spiketest_core::simulate::{BulkPopulation, EntryDistribution, PopulationSpec};
use spiketest_core::Scenario;

/// One atom of the bulk measure as written in config files.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct AtomCfg {
    pub t: f64,
    pub w: f64,
}

fn measure_from(atoms: &[AtomCfg]) -> Result<DiscreteMeasure> {
    DiscreteMeasure::new(atoms.iter().map(|a| (a.t, a.w)).collect())
}

fn matrix_from(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    if r == 0 || rows.iter().any(|row| row.len() != r) {
        return Err(SpikeError::Invalid("u must be a square row-major matrix".into()));
    }
    Ok(DMatrix::from_fn(r, r, |i, j| rows[i][j]))
}

/// Config for `spiketest asymptotics`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsConfig {
    pub h_atoms: Vec<AtomCfg>,
    pub y: f64,
    pub alphas: Vec<f64>,
    /// Spike eigenvectors, row-major; identity when omitted.
    #[serde(default)]
    pub u: Option<Vec<Vec<f64>>>,
    pub nu4: f64,
    pub n: usize,
    pub p: usize,
    /// gamma_{d,2} override; defaults to the second moment of H.
    #[serde(default)]
    pub gamma_d2: Option<f64>,
}

impl AsymptoticsConfig {
    pub fn build_model(&self) -> Result<SpikedModel> {
        let measure = measure_from(&self.h_atoms)?;
        let bulk = match self.gamma_d2 {
            Some(g) => BulkSpec::with_diag_second_moment(measure, g),
            None => BulkSpec::from_measure(measure),
        };
        let u = self.u.as_ref().map(|rows| matrix_from(rows)).transpose()?;
        SpikedModel::from_spikes(self.alphas.clone(), u, bulk, self.y, self.nu4, self.n, self.p)
    }
}

/// Config for `spiketest test`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub m0: usize,
    pub c: f64,
    pub alpha_level: f64,
    pub p: usize,
    pub n: usize,
    /// Use the second-order-corrected critical value (default) or the
    /// uncorrected comparison rule.
    #[serde(default = "default_true")]
    pub corrected: bool,
}

fn default_true() -> bool {
    true
}

/// Population model in a simulate config.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelCfg {
    Factor { t_list: Vec<f64>, sigma2: f64 },
    General {
        alphas: Vec<f64>,
        #[serde(default)]
        u: Option<Vec<Vec<f64>>>,
        h_atoms: Vec<AtomCfg>,
    },
}

/// Config for `spiketest simulate`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub p: usize,
    pub n: usize,
    pub dist: EntryDistribution,
    pub seed: u64,
    pub model: ModelCfg,
}

impl SimulateConfig {
    pub fn population(&self) -> Result<PopulationSpec> {
        Ok(match &self.model {
            ModelCfg::Factor { t_list, sigma2 } => PopulationSpec::factor(t_list, *sigma2),
            ModelCfg::General { alphas, u, h_atoms } => PopulationSpec {
                alphas: alphas.clone(),
                eigvecs: u.as_ref().map(|rows| matrix_from(rows)).transpose()?,
                bulk: BulkPopulation::Atoms { measure: measure_from(h_atoms)? },
            },
        })
    }
}

/// Config for `spiketest mc-table`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McTableConfig {
    pub scenarios: Vec<Scenario>,
}
