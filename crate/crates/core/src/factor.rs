//! Factor-count hypothesis testing: the normalized extreme-eigenvalue statistic,
//! its t-parameterized critical value with second-order variance correction, the
//! minimized critical value over the composite null, and the plug-in spike / SNR
//! estimators that make the procedure fully data-driven.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpikeError};
use crate::numeric::{golden_section_min, normal_quantile};

/// Upper end of the search range for the free SNR parameter when m0 = 1 (no
/// estimated upper spike bounds it). The critical value grows in t well before
/// this point in every tested regime.
pub const T_MAX: f64 = 1e4;

/// Number of coarse grid points scanned before golden-section refinement.
const QSTAR_GRID: usize = 512;

/// Absolute tolerance in t for the golden-section refinement.
const QSTAR_TOL: f64 = 1e-8;

/// Test configuration: hypothesized spike count, SNR threshold under the null,
/// level, and the sample dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorTestConfig {
    /// Hypothesized number of spikes m0 >= 1.
    pub m0: usize,
    /// SNR threshold c > 1 + sqrt(p/n) defining the composite null.
    pub c: f64,
    /// Test level in (0, 1).
    pub alpha_level: f64,
    /// Dimension.
    pub p: usize,
    /// Sample size.
    pub n: usize,
}

impl FactorTestConfig {
    /// Dimension ratio p/n.
    pub fn y(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.m0 == 0 {
            return Err(SpikeError::Invalid("m0 must be >= 1".into()));
        }
        if self.m0 >= self.p {
            return Err(SpikeError::Invalid(format!("m0={} must be < p={}", self.m0, self.p)));
        }
        if self.n < 2 {
            return Err(SpikeError::Invalid("n must be >= 2".into()));
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(SpikeError::Invalid(format!(
                "alpha_level={} must be in (0,1)",
                self.alpha_level
            )));
        }
        let threshold = 1.0 + self.y().sqrt();
        if self.c <= threshold {
            return Err(SpikeError::BelowThreshold { t: self.c, threshold });
        }
        Ok(())
    }
}

/// Outcome of one test run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestOutcome {
    /// T_{m0}: the m0-th eigenvalue over the trailing mean.
    pub statistic: f64,
    /// Minimized critical value q-hat-star.
    pub critical_value: f64,
    /// True when statistic < critical_value.
    pub reject: bool,
    /// Plug-in spike estimates alpha-hat_1..alpha-hat_{m0}.
    pub estimated_alphas: Vec<f64>,
    /// Plug-in SNR estimates t-hat_1..t-hat_{m0}.
    pub estimated_ts: Vec<f64>,
    /// Argmin of the critical-value function over the free SNR parameter.
    pub minimizer_t: f64,
}

/// T_{m0} = lambda_{m0} / ((1/(p - m0)) sum_{j > m0} lambda_j).
pub fn test_statistic(eigs: &[f64], m0: usize) -> Result<f64> {
    let p = eigs.len();
    if m0 == 0 || p < m0 + 1 {
        return Err(SpikeError::Invalid(format!("need p >= m0+1 eigenvalues, got p={p}, m0={m0}")));
    }
    for w in eigs.windows(2) {
        if w[1] > w[0] {
            return Err(SpikeError::Invalid("eigenvalues must be sorted descending".into()));
        }
    }
    if eigs[p - 1] < 0.0 {
        return Err(SpikeError::Invalid("eigenvalues must be nonnegative".into()));
    }
    let tail_mean = eigs[m0..].iter().sum::<f64>() / (p - m0) as f64;
    if tail_mean <= 0.0 {
        return Err(SpikeError::ZeroBulk);
    }
    Ok(eigs[m0 - 1] / tail_mean)
}

fn check_thresholds(t_list: &[f64], y: f64) -> Result<()> {
    let threshold = 1.0 + y.sqrt();
    for &t in t_list {
        if t <= threshold {
            return Err(SpikeError::BelowThreshold { t, threshold });
        }
    }
    Ok(())
}

/// Factor-model specialization of the limit parameters, in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorollaryParams {
    /// psi_k = alpha_k + y alpha_k sigma^2 / (alpha_k - sigma^2).
    pub psi: f64,
    /// Bias-corrected noise level sigma-tilde^2.
    pub sigma_tilde2: f64,
    /// Mean of the second-order spectral process (closed form, Gaussian case).
    pub mu_m: f64,
    /// Variance of the second-order spectral process (closed form, Gaussian case).
    pub sigma2_m: f64,
}

/// Evaluate the factor-model closed forms for spike `k` (1-based index into the
/// descending SNR list) with alpha_j = t_j sigma^2.
pub fn corollary_params(
    t_list: &[f64],
    sigma2: f64,
    y: f64,
    p: usize,
    n: usize,
    k: usize,
) -> Result<CorollaryParams> {
    if k == 0 || k > t_list.len() {
        return Err(SpikeError::Invalid(format!("k={k} out of range 1..={}", t_list.len())));
    }
    check_thresholds(t_list, y)?;
    let m = t_list.len();
    let tk = t_list[k - 1];
    let trace_sigma =
        t_list.iter().map(|t| t * sigma2).sum::<f64>() + (p - m) as f64 * sigma2;
    let mut corrected_sum = 0.0;
    for &tj in &t_list[..k] {
        let alpha = tj * sigma2;
        let psi_j = alpha + y * alpha * sigma2 / (alpha - sigma2);
        let psi1_j = 1.0 - y / (tj - 1.0).powi(2);
        let mu_j = mu_m_factor(tj, sigma2, y);
        corrected_sum += psi_j + alpha * alpha * psi1_j * mu_j / n as f64;
    }
    let sigma_tilde2 = (trace_sigma - corrected_sum) / (p - k) as f64;
    let alpha = tk * sigma2;
    Ok(CorollaryParams {
        psi: alpha + y * alpha * sigma2 / (alpha - sigma2),
        sigma_tilde2,
        mu_m: mu_m_factor(tk, sigma2, y),
        sigma2_m: sigma2_m_factor(tk, sigma2, y),
    })
}

/// mu_M for a constant bulk: -y sigma^4 / ((alpha - sigma^2)^3 (1 - y sigma^4/(alpha - sigma^2)^2)^2).
fn mu_m_factor(t: f64, sigma2: f64, y: f64) -> f64 {
    let gap = (t - 1.0) * sigma2; // alpha - sigma^2
    let psi1 = 1.0 - y * sigma2 * sigma2 / (gap * gap);
    -y * sigma2 * sigma2 / (gap.powi(3) * psi1 * psi1)
}

/// sigma^2_M for a constant bulk and Gaussian entries:
/// (2y/((t-1)^4 psi'^3) + 2y^2/((t-1)^6 psi'^4)) / sigma^4.
fn sigma2_m_factor(t: f64, sigma2: f64, y: f64) -> f64 {
    let psi1 = 1.0 - y / (t - 1.0).powi(2);
    (2.0 * y / ((t - 1.0).powi(4) * psi1.powi(3))
        + 2.0 * y * y / ((t - 1.0).powi(6) * psi1.powi(4)))
        / (sigma2 * sigma2)
}

/// The explicit t-parameterized refined variance sigma^2_{*,m0}.
///
/// `t_list` is the full descending SNR list t_1 > ... > t_{m0}; the last entry
/// is the spike under test.
pub fn sigma_star2(t_list: &[f64], y: f64, p: usize, n: usize, m0: usize) -> Result<f64> {
    if t_list.len() != m0 || m0 == 0 || m0 >= p {
        return Err(SpikeError::Invalid(format!(
            "t_list length {} must equal m0={m0} (and m0 < p)",
            t_list.len()
        )));
    }
    check_thresholds(t_list, y)?;
    let pm = (p - m0) as f64;
    let n = n as f64;
    let t = t_list[m0 - 1];
    let inv_d = 1.0 / denominator_factor(t_list, y, pm);
    let tm1 = t - 1.0;
    let psi1 = 1.0 - y / (tm1 * tm1);
    let center = t + y / (1.0 - 1.0 / t);

    let term1 = 2.0 * t * t * psi1 * inv_d * inv_d;
    let term2 = -4.0 * y * t * t / (pm * tm1 * tm1) * center * inv_d.powi(3);
    let term3 = 2.0 * y * n / (pm * pm) * center * center * inv_d.powi(4);
    let braces = 4.0 * y * t / (3.0 * tm1.powi(3)) - 4.0 * y * t / (3.0 * tm1.powi(3) * psi1.powi(3))
        + 2.0 * y * y * t * t / (3.0 * tm1.powi(6) * psi1.powi(4))
        + 2.0 * y * t * t / tm1.powi(4)
        + 4.0 * y * y * t * t / (3.0 * tm1.powi(6) * psi1);
    let term4 = t * t * psi1 * psi1 / n * inv_d * inv_d * braces;
    Ok(term1 + term2 + term3 + term4)
}

/// 1 - (1/(p - m0)) sum_j y/(1 - 1/t_j): the trace-correction factor that
/// relates sigma-tilde^2 to sigma^2 in t units.
fn denominator_factor(t_list: &[f64], y: f64, pm: f64) -> f64 {
    1.0 - t_list.iter().map(|&tj| y / (1.0 - 1.0 / tj)).sum::<f64>() / pm
}

/// Auxiliary consistency route: the refined variance assembled from the general
/// second-order display with the factor-model closed forms substituted in.
/// Agrees with [`sigma_star2`] up to O(1/p) remainder terms that the
/// t-parameterized display drops.
pub fn sigma_star2_general(
    t_list: &[f64],
    sigma2: f64,
    y: f64,
    p: usize,
    n: usize,
    m0: usize,
) -> Result<f64> {
    if t_list.len() != m0 {
        return Err(SpikeError::Invalid("t_list length must equal m0".into()));
    }
    let cp = corollary_params(t_list, sigma2, y, p, n, m0)?;
    let nf = n as f64;
    let pk = (p - m0) as f64;
    let alpha = t_list[m0 - 1] * sigma2;
    let psi1 = 1.0 - y / (t_list[m0 - 1] - 1.0).powi(2);
    let a2p = alpha * alpha * psi1;
    let st2 = cp.sigma_tilde2;
    let st4 = st2 * st2;
    let st6 = st4 * st2;
    let st8 = st4 * st4;
    let shifted1 = cp.psi + a2p * cp.mu_m / nf;
    let shifted2 = cp.psi + 2.0 * a2p * cp.mu_m / nf;
    let sum_alpha2: f64 = t_list.iter().map(|&t| (t * sigma2).powi(2)).sum();
    let mut spike_sum = 0.0;
    for &tj in &t_list[..m0] {
        let aj = tj * sigma2;
        let psi1_j = 1.0 - y / (tj - 1.0).powi(2);
        spike_sum += 2.0 * aj * aj * psi1_j - 4.0 * aj * aj;
    }

    Ok(2.0 * a2p / st4
        + 4.0 * a2p * shifted2 / (pk * st6)
        + a2p * a2p * cp.sigma2_m / (nf * st4)
        - 4.0 * alpha * alpha * shifted1 / (pk * st6)
        + nf / (pk * pk) * (2.0 * y * sigma2 * sigma2 + 2.0 / nf * sum_alpha2) * shifted2 * shifted2
            / st8
        + 2.0 * cp.psi * a2p * a2p * cp.sigma2_m / (nf * pk * st6)
        + cp.psi * cp.psi * spike_sum / (pk * pk * st8))
}

/// The t-parameterized critical value
/// q_{n,alpha}(t_{m0}, ..., t_1) = centering / denominator + Z_alpha sigma_{*,m0} / sqrt(n).
///
/// `t_list` is descending with the tested spike last.
pub fn q_alpha(t_list: &[f64], y: f64, p: usize, n: usize, alpha_level: f64) -> Result<f64> {
    let m0 = t_list.len();
    if m0 == 0 || m0 >= p {
        return Err(SpikeError::Invalid("t_list must be nonempty with m0 < p".into()));
    }
    check_thresholds(t_list, y)?;
    let t = t_list[m0 - 1];
    let center = (t + y / (1.0 - 1.0 / t)) / denominator_factor(t_list, y, (p - m0) as f64);
    let s2 = sigma_star2(t_list, y, p, n, m0)?;
    Ok(center + normal_quantile(alpha_level) * s2.max(0.0).sqrt() / (n as f64).sqrt())
}

/// Uncorrected comparison rule: centering at psi_{m0}/sigma^2 and the
/// first-order variance 2 t^2 - 2 y t^2/(t-1)^2.
pub fn q_alpha_uncorrected(t: f64, y: f64, n: usize, alpha_level: f64) -> Result<f64> {
    check_thresholds(&[t], y)?;
    let center = t + y / (1.0 - 1.0 / t);
    let s2 = 2.0 * t * t - 2.0 * y * t * t / (t - 1.0).powi(2);
    Ok(center + normal_quantile(alpha_level) * s2.max(0.0).sqrt() / (n as f64).sqrt())
}

fn q_star_impl(
    q: impl Fn(f64) -> Result<f64>,
    c: f64,
    upper: f64,
) -> Result<(f64, f64)> {
    if c >= upper {
        return Err(SpikeError::EmptyRange { c, upper });
    }
    // Scan a coarse grid over [c, upper), then refine around the best cell.
    let hi = upper - 1e-9 * upper.abs().max(1.0);
    let hi = hi.max(c);
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    let steps = QSTAR_GRID - 1;
    let mut grid = Vec::with_capacity(QSTAR_GRID);
    for i in 0..QSTAR_GRID {
        let t = c + (hi - c) * i as f64 / steps as f64;
        let v = q(t)?;
        if v < best_v {
            best_v = v;
            best_i = i;
        }
        grid.push(t);
    }
    let lo = grid[best_i.saturating_sub(1)];
    let hi_ref = grid[(best_i + 1).min(QSTAR_GRID - 1)];
    let (t_ref, v_ref) = golden_section_min(
        |t| q(t).unwrap_or(f64::INFINITY),
        lo,
        hi_ref,
        QSTAR_TOL,
        200,
    );
    if v_ref < best_v {
        Ok((v_ref, t_ref))
    } else {
        Ok((best_v, grid[best_i]))
    }
}

/// Minimized corrected critical value over the composite null:
/// inf over t in [c, t_{m0-1}) of q_alpha, with the upper spikes fixed at
/// `t_upper` (descending, possibly empty for m0 = 1).
///
/// Returns `(value, argmin)`.
pub fn q_star(
    t_upper: &[f64],
    c: f64,
    y: f64,
    p: usize,
    n: usize,
    alpha_level: f64,
) -> Result<(f64, f64)> {
    let upper = t_upper.last().copied().unwrap_or(T_MAX);
    q_star_impl(
        |t| {
            let mut ts = t_upper.to_vec();
            ts.push(t);
            q_alpha(&ts, y, p, n, alpha_level)
        },
        c,
        upper,
    )
}

/// Minimized uncorrected critical value over the same range.
pub fn q_star_uncorrected(
    t_upper: &[f64],
    c: f64,
    y: f64,
    n: usize,
    alpha_level: f64,
) -> Result<(f64, f64)> {
    let upper = t_upper.last().copied().unwrap_or(T_MAX);
    q_star_impl(|t| q_alpha_uncorrected(t, y, n, alpha_level), c, upper)
}

/// Plug-in spike estimates alpha-hat_k = -1 / s-hat(lambda_k), where s-hat is
/// the bulk-only companion Stieltjes transform evaluated at the observed
/// eigenvalue:
/// s-hat(lambda_k) = -(1 - y)/lambda_k + (1/n) sum_{i > m0} 1/(lambda_i - lambda_k).
///
/// `eigs` must be the full descending spectrum (zeros included when p > n).
pub fn estimate_spikes(eigs: &[f64], n: usize, p: usize, m0: usize) -> Result<Vec<f64>> {
    if eigs.len() != p || p <= m0 {
        return Err(SpikeError::Invalid(format!(
            "need the full spectrum: got {} eigenvalues for p={p}, m0={m0}",
            eigs.len()
        )));
    }
    let y = p as f64 / n as f64;
    let mut out = Vec::with_capacity(m0);
    for k in 0..m0 {
        let lam = eigs[k];
        let mut sum = 0.0;
        for (i, &li) in eigs.iter().enumerate().skip(m0) {
            if (li - lam).abs() < 1e-12 {
                return Err(SpikeError::DegenerateEigenvalue { i, k });
            }
            sum += 1.0 / (li - lam);
        }
        let s_hat = -(1.0 - y) / lam + sum / n as f64;
        out.push(-1.0 / s_hat);
    }
    Ok(out)
}

/// Plug-in SNR estimates t-hat_k = alpha-hat_k / sigma-hat^2, where the noise
/// level is estimated from the trace with the spike estimates removed.
pub fn estimate_ts(eigs: &[f64], alpha_hats: &[f64], m0: usize, p: usize) -> Result<Vec<f64>> {
    if alpha_hats.len() != m0 || p <= m0 {
        return Err(SpikeError::Invalid("alpha_hats must have length m0 < p".into()));
    }
    let trace: f64 = eigs.iter().sum();
    let noise = (trace - alpha_hats.iter().sum::<f64>()) / (p - m0) as f64;
    if noise <= 0.0 {
        return Err(SpikeError::NegativeNoiseEstimate);
    }
    Ok(alpha_hats.iter().map(|a| a / noise).collect())
}

/// Run the factor-count test on a full descending spectrum.
///
/// `corrected` selects between the refined critical value (second-order
/// variance, trace-corrected centering) and the uncorrected comparison rule.
pub fn run_test(eigs: &[f64], config: &FactorTestConfig, corrected: bool) -> Result<TestOutcome> {
    config.validate()?;
    if eigs.len() != config.p {
        return Err(SpikeError::Invalid(format!(
            "expected p={} eigenvalues, got {}",
            config.p,
            eigs.len()
        )));
    }
    let y = config.y();
    let m0 = config.m0;
    let statistic = test_statistic(eigs, m0)?;
    let estimated_alphas = estimate_spikes(eigs, config.n, config.p, m0)?;
    let estimated_ts = estimate_ts(eigs, &estimated_alphas, m0, config.p)?;

    let threshold = 1.0 + y.sqrt();
    for (k, &t) in estimated_ts[..m0 - 1].iter().enumerate() {
        if t <= threshold {
            return Err(SpikeError::InsufficientSeparation { k, t, threshold });
        }
    }
    let t_upper = &estimated_ts[..m0 - 1];
    let (critical_value, minimizer_t) = if corrected {
        q_star(t_upper, config.c, y, config.p, config.n, config.alpha_level)?
    } else {
        q_star_uncorrected(t_upper, config.c, y, config.n, config.alpha_level)?
    };
    Ok(TestOutcome {
        statistic,
        critical_value,
        reject: statistic < critical_value,
        estimated_alphas,
        estimated_ts,
        minimizer_t,
    })
}
