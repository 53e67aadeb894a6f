//! Replication harness: empirical size and power of the factor-count tests,
//! empirical moment oracles validating the closed-form asymptotics, and CSV
//! reports at table scale.
//!
//! Replications run in parallel but results are reduced in replication order,
//! so every report is byte-identical for a given master seed regardless of the
//! worker count.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::SpikedModel;
use crate::error::{Result, SpikeError};
use crate::factor::{run_test, FactorTestConfig};
use crate::numeric::substream_seed;
use crate::simulate::{sample_spectrum, EntryDistribution, PopulationSpec};

/// Which decision rule(s) a scenario exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    Corrected,
    Uncorrected,
    Both,
}

impl Procedure {
    fn runs(self) -> &'static [&'static str] {
        match self {
            Procedure::Corrected => &["corrected"],
            Procedure::Uncorrected => &["uncorrected"],
            Procedure::Both => &["corrected", "uncorrected"],
        }
    }
}

/// One size/power experiment: a factor model, a test configuration, and a
/// replication budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub p: usize,
    pub n: usize,
    /// SNR threshold of the null hypothesis.
    pub c: f64,
    /// True SNRs of the simulated factors, descending.
    pub t_list: Vec<f64>,
    pub sigma2: f64,
    pub dist: EntryDistribution,
    pub m0: usize,
    pub alpha_level: f64,
    pub reps: usize,
    pub master_seed: u64,
    pub procedure: Procedure,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(SpikeError::Invalid("reps must be >= 1".into()));
        }
        if self.t_list.is_empty() {
            return Err(SpikeError::Invalid("t_list must be nonempty".into()));
        }
        for w in self.t_list.windows(2) {
            if w[1] >= w[0] {
                return Err(SpikeError::Invalid("t_list must be strictly descending".into()));
            }
        }
        if self.m0 == 0 || self.m0 > self.t_list.len() {
            return Err(SpikeError::Invalid(format!(
                "m0={} must be in 1..={}",
                self.m0,
                self.t_list.len()
            )));
        }
        self.dist.validate()?;
        self.test_config().validate()
    }

    fn test_config(&self) -> FactorTestConfig {
        FactorTestConfig {
            m0: self.m0,
            c: self.c,
            alpha_level: self.alpha_level,
            p: self.p,
            n: self.n,
        }
    }
}

/// Aggregated outcome of one scenario under one decision rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateRow {
    pub procedure: String,
    pub rejection_rate: f64,
    /// Binomial standard error sqrt(r (1 - r) / reps_used).
    pub mc_standard_error: f64,
    pub mean_statistic: f64,
    pub mean_critical_value: f64,
    /// Replications entering the rate denominator.
    pub reps_used: usize,
    /// Replications excluded because an estimator failed.
    pub failures: usize,
}

/// Report for one scenario (or one moment-oracle run).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MCReport {
    pub rows: Vec<RateRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentReport>,
}

/// Empirical moments of the normalized spike fluctuations and the trace,
/// with jackknife standard errors for the second-order statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    pub reps: usize,
    /// Mean of sqrt(n)(lambda_k / psi_k - 1) per spike.
    pub mean_delta: Vec<f64>,
    /// Variance of the same, with jackknife SE.
    pub var_delta: Vec<f64>,
    pub var_delta_se: Vec<f64>,
    /// Variance of tr(S_n) - tr(Sigma_p), with jackknife SE.
    pub var_trace: f64,
    pub var_trace_se: f64,
    /// Covariance of each spike fluctuation with the trace, with jackknife SE.
    pub cov_delta_trace: Vec<f64>,
    pub cov_delta_trace_se: Vec<f64>,
    /// Correlation between the leading fluctuation and the trace.
    pub corr_delta1_trace: f64,
    /// Covariance between the first two spike fluctuations (when m >= 2).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_cov: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_cov_se: Option<f64>,
}

enum RepOutcome {
    Decision { reject: bool, statistic: f64, critical_value: f64 },
    Failure,
}

/// Run one scenario: simulate, eigendecompose, test, tally. Estimator failures
/// are excluded from the rate denominator and counted separately.
pub fn run_scenario(s: &Scenario) -> Result<MCReport> {
    s.validate()?;
    let spec = PopulationSpec::factor(&s.t_list, s.sigma2);
    let config = s.test_config();
    let procedures = s.procedure.runs();

    let per_rep: Vec<Vec<RepOutcome>> = (0..s.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = substream_seed(s.master_seed, rep as u64);
            let sample = sample_spectrum(&spec, s.p, s.n, s.dist, seed)
                .expect("scenario dimensions validated");
            procedures
                .iter()
                .map(|&name| {
                    match run_test(&sample.eigs, &config, name == "corrected") {
                        Ok(out) => RepOutcome::Decision {
                            reject: out.reject,
                            statistic: out.statistic,
                            critical_value: out.critical_value,
                        },
                        Err(_) => RepOutcome::Failure,
                    }
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(procedures.len());
    for (pi, &name) in procedures.iter().enumerate() {
        let mut rejects = 0usize;
        let mut used = 0usize;
        let mut failures = 0usize;
        let mut stat_sum = 0.0;
        let mut crit_sum = 0.0;
        for outcomes in &per_rep {
            match &outcomes[pi] {
                RepOutcome::Decision { reject, statistic, critical_value } => {
                    used += 1;
                    if *reject {
                        rejects += 1;
                    }
                    stat_sum += statistic;
                    crit_sum += critical_value;
                }
                RepOutcome::Failure => failures += 1,
            }
        }
        let rate = if used > 0 { rejects as f64 / used as f64 } else { f64::NAN };
        rows.push(RateRow {
            procedure: name.to_string(),
            rejection_rate: rate,
            mc_standard_error: if used > 0 { (rate * (1.0 - rate) / used as f64).sqrt() } else { f64::NAN },
            mean_statistic: if used > 0 { stat_sum / used as f64 } else { f64::NAN },
            mean_critical_value: if used > 0 { crit_sum / used as f64 } else { f64::NAN },
            reps_used: used,
            failures,
        });
    }
    Ok(MCReport { rows, moments: None })
}

/// Leave-one-out jackknife standard error of the sample variance of `xs`.
fn jackknife_se_var(xs: &[f64]) -> f64 {
    jackknife_se_cov(xs, xs)
}

/// Leave-one-out jackknife standard error of the sample covariance of (xs, ys).
fn jackknife_se_cov(xs: &[f64], ys: &[f64]) -> f64 {
    let r = xs.len();
    if r < 3 {
        return f64::NAN;
    }
    let rf = r as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let mut loo = Vec::with_capacity(r);
    for i in 0..r {
        let mx = (sx - xs[i]) / (rf - 1.0);
        let my = (sy - ys[i]) / (rf - 1.0);
        let c = (sxy - xs[i] * ys[i] - (rf - 1.0) * mx * my) / (rf - 2.0);
        loo.push(c);
    }
    let mean = loo.iter().sum::<f64>() / rf;
    let ss: f64 = loo.iter().map(|v| (v - mean) * (v - mean)).sum();
    ((rf - 1.0) / rf * ss).sqrt()
}

fn sample_var(xs: &[f64]) -> f64 {
    let r = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / r;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (r - 1.0)
}

fn sample_cov(xs: &[f64], ys: &[f64]) -> f64 {
    let r = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / r;
    let my = ys.iter().sum::<f64>() / r;
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (r - 1.0)
}

/// Empirical moments of (sqrt(n)(lambda_k/psi_k - 1), tr S_n - tr Sigma_p)
/// under the model, for validating the closed-form asymptotics.
pub fn moment_oracle(
    model: &SpikedModel,
    dist: EntryDistribution,
    reps: usize,
    seed: u64,
) -> MCReport {
    let spec = PopulationSpec::from_model(model);
    let m = model.m();
    let n = model.n();
    let p = model.p();
    let sqrt_n = (n as f64).sqrt();

    let draws: Vec<(Vec<f64>, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let s = sample_spectrum(&spec, p, n, dist, substream_seed(seed, rep as u64))
                .expect("model dimensions are valid");
            let deltas: Vec<f64> = (0..m)
                .map(|k| sqrt_n * (s.eigs[k] / model.psi(k).psi - 1.0))
                .collect();
            (deltas, s.trace - s.pop_trace)
        })
        .collect();

    let traces: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let mut mean_delta = Vec::with_capacity(m);
    let mut var_delta = Vec::with_capacity(m);
    let mut var_delta_se = Vec::with_capacity(m);
    let mut cov_delta_trace = Vec::with_capacity(m);
    let mut cov_delta_trace_se = Vec::with_capacity(m);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(m);
    for k in 0..m {
        let xs: Vec<f64> = draws.iter().map(|d| d.0[k]).collect();
        mean_delta.push(xs.iter().sum::<f64>() / reps as f64);
        var_delta.push(sample_var(&xs));
        var_delta_se.push(jackknife_se_var(&xs));
        cov_delta_trace.push(sample_cov(&xs, &traces));
        cov_delta_trace_se.push(jackknife_se_cov(&xs, &traces));
        columns.push(xs);
    }
    let corr = cov_delta_trace[0] / (var_delta[0] * sample_var(&traces)).sqrt();
    let (cross_cov, cross_cov_se) = if m >= 2 {
        (
            Some(sample_cov(&columns[0], &columns[1])),
            Some(jackknife_se_cov(&columns[0], &columns[1])),
        )
    } else {
        (None, None)
    };

    MCReport {
        rows: Vec::new(),
        moments: Some(MomentReport {
            reps,
            mean_delta,
            var_delta,
            var_delta_se,
            var_trace: sample_var(&traces),
            var_trace_se: jackknife_se_var(&traces),
            cov_delta_trace,
            cov_delta_trace_se,
            corr_delta1_trace: corr,
            cross_cov,
            cross_cov_se,
        }),
    }
}

/// Render scenario results as CSV with the fixed column layout
/// `p,n,c,t1..tK,procedure,rate,se,reps,seed` (K is the longest t-list).
pub fn render_table(scenarios: &[Scenario], reports: &[MCReport]) -> String {
    let k_max = scenarios.iter().map(|s| s.t_list.len()).max().unwrap_or(0);
    let mut out = String::from("p,n,c");
    for k in 1..=k_max {
        let _ = write!(out, ",t{k}");
    }
    out.push_str(",procedure,rate,se,reps,seed\n");
    for (s, report) in scenarios.iter().zip(reports) {
        for row in &report.rows {
            let _ = write!(out, "{},{},{}", s.p, s.n, s.c);
            for k in 0..k_max {
                match s.t_list.get(k) {
                    Some(t) => {
                        let _ = write!(out, ",{t}");
                    }
                    None => out.push(','),
                }
            }
            let _ = writeln!(
                out,
                ",{},{:.6},{:.6},{},{}",
                row.procedure, row.rejection_rate, row.mc_standard_error, row.reps_used, s.master_seed
            );
        }
    }
    out
}

/// Run every scenario and write the combined CSV to `out_path`.
/// Returns the per-scenario reports.
pub fn table_runner(scenarios: &[Scenario], out_path: &Path) -> Result<Vec<MCReport>> {
    let mut reports = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        reports.push(run_scenario(s)?);
    }
    std::fs::write(out_path, render_table(scenarios, &reports))?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_scenario() -> Scenario {
        Scenario {
            p: 40,
            n: 80,
            c: 4.0,
            t_list: vec![10.0, 4.0],
            sigma2: 2.0,
            dist: EntryDistribution::Gaussian,
            m0: 2,
            alpha_level: 0.05,
            reps: 24,
            master_seed: 77,
            procedure: Procedure::Both,
        }
    }

    #[test]
    fn run_scenario_is_deterministic_across_pool_sizes() {
        let s = smoke_scenario();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let r1 = pool1.install(|| run_scenario(&s)).unwrap();
        let r4 = pool4.install(|| run_scenario(&s)).unwrap();
        let a = serde_json::to_string(&r1.rows).unwrap();
        let b = serde_json::to_string(&r4.rows).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn se_formula_is_binomial() {
        let s = smoke_scenario();
        let r = run_scenario(&s).unwrap();
        for row in &r.rows {
            let want =
                (row.rejection_rate * (1.0 - row.rejection_rate) / row.reps_used as f64).sqrt();
            assert!((row.mc_standard_error - want).abs() < 1e-15);
            assert!(row.rejection_rate >= 0.0 && row.rejection_rate <= 1.0);
            assert_eq!(row.reps_used + row.failures, s.reps);
        }
    }

    #[test]
    fn render_table_layout() {
        let s = smoke_scenario();
        let reports = vec![run_scenario(&s).unwrap()];
        let csv = render_table(&[s], &reports);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "p,n,c,t1,t2,procedure,rate,se,reps,seed");
        let first = lines.next().unwrap();
        assert!(first.starts_with("40,80,4,10,4,corrected,"));
        assert!(csv.lines().count() == 3); // header + 2 procedures
    }

    #[test]
    fn empty_scenario_list_gives_header_only() {
        let csv = render_table(&[], &[]);
        assert_eq!(csv, "p,n,c,procedure,rate,se,reps,seed\n");
    }

    #[test]
    fn table_runner_round_trip_bytes() {
        let s = smoke_scenario();
        let dir = std::env::temp_dir();
        let p1 = dir.join("spiketest_mc_a.csv");
        let p2 = dir.join("spiketest_mc_b.csv");
        table_runner(std::slice::from_ref(&s), &p1).unwrap();
        table_runner(std::slice::from_ref(&s), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let _ = std::fs::remove_file(p1);
        let _ = std::fs::remove_file(p2);
    }

    #[test]
    fn scenario_validation() {
        let mut s = smoke_scenario();
        s.reps = 0;
        assert!(s.validate().is_err());
        let mut s = smoke_scenario();
        s.t_list = vec![4.0, 10.0];
        assert!(s.validate().is_err());
        let mut s = smoke_scenario();
        s.c = 1.0; // below 1 + sqrt(y)
        assert!(s.validate().is_err());
    }

    #[test]
    fn jackknife_matches_closed_form_on_gaussianish_data() {
        // sanity: jackknife SE of a variance should be close to sqrt(2/n) * var
        // for normal data
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..4000)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let se = jackknife_se_var(&xs);
        let want = (2.0 / 4000.0f64).sqrt();
        assert!((se - want).abs() < 0.3 * want, "se {se} vs {want}");
    }
}
