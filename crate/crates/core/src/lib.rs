//! Asymptotic theory of extreme eigenvalues and trace of large sample
//! covariance matrices under generalized spiked population models, and the
//! factor-count hypothesis tests built on it.
//!
//! The crate is organized around five pieces:
//!
//! - [`measure`]: discrete bulk spectral measures, the psi map and its
//!   derivatives, the Silverstein equation, and the support of the limiting
//!   spectral distribution.
//! - [`asymptotics`]: first- and second-order limit parameters of the joint
//!   law of the extreme eigenvalues and the trace.
//! - [`factor`]: the normalized-eigenvalue test statistic, t-parameterized
//!   critical values with second-order correction, and plug-in spike/SNR
//!   estimators.
//! - [`simulate`]: reproducible data generation and sample spectra.
//! - [`montecarlo`]: the replication harness producing size/power tables and
//!   empirical moment oracles.

pub mod asymptotics;
pub mod error;
pub mod factor;
pub mod measure;
pub mod montecarlo;
pub mod numeric;
pub mod simulate;

pub use asymptotics::{AsymptoticSummary, EntryClass, SpikedModel};
pub use error::{Result, SpikeError};
pub use factor::{FactorTestConfig, TestOutcome};
pub use measure::{BulkSpec, DiscreteMeasure};
pub use montecarlo::{MCReport, Procedure, Scenario};
pub use simulate::{EntryDistribution, PopulationSpec, SpectrumSample};
