//! First- and second-order limit parameters for the joint law of the extreme
//! sample eigenvalues and the trace under a generalized spiked population model.
//!
//! Everything here is a closed-form function of the model: the psi map at each
//! spike, the fourth cumulant of the data entries, and moments of the bulk
//! measure. Nothing is simulated; the Monte Carlo harness validates these
//! values empirically.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpikeError};
use crate::measure::{psi_family, underline_s_at_spike, BulkSpec, PsiDerivatives};

/// Tolerance below which two spike images psi_k are considered degenerate.
const PSI_DEGENERATE_TOL: f64 = 1e-10;

/// Which entry class of the limiting Gaussian matrix a cross-spike covariance
/// refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryClass {
    Diagonal,
    OffDiagonal,
}

/// A generalized spiked population model with distant spikes.
///
/// Holds the spike block Lambda (with its eigendecomposition), the bulk
/// specification, the dimension ratio y, the entry fourth moment nu4, and the
/// finite sample sizes (n, p) used by second-order corrections. Immutable
/// after construction; all evaluators are pure.
#[derive(Debug, Clone)]
pub struct SpikedModel {
    lambda: DMatrix<f64>,
    alphas: Vec<f64>,
    eigvecs: DMatrix<f64>,
    bulk: BulkSpec,
    y: f64,
    nu4: f64,
    n: usize,
    p: usize,
    psis: Vec<PsiDerivatives>,
}

impl SpikedModel {
    /// Build from explicit spike eigenpairs. `eigvecs` columns are the spike
    /// eigenvectors; `None` means the identity (diagonal Lambda).
    pub fn from_spikes(
        alphas: Vec<f64>,
        eigvecs: Option<DMatrix<f64>>,
        bulk: BulkSpec,
        y: f64,
        nu4: f64,
        n: usize,
        p: usize,
    ) -> Result<Self> {
        let m = alphas.len();
        if m == 0 {
            return Err(SpikeError::Invalid("at least one spike is required".into()));
        }
        if !y.is_finite() || y <= 0.0 {
            return Err(SpikeError::Invalid(format!("y={y} must be positive")));
        }
        if nu4 < 1.0 {
            return Err(SpikeError::Invalid(format!("nu4={nu4} must be >= 1")));
        }
        if n < 2 || p <= m {
            return Err(SpikeError::Invalid(format!("need n >= 2 and p > m, got n={n}, p={p}")));
        }
        for w in alphas.windows(2) {
            if w[1] >= w[0] {
                return Err(SpikeError::Invalid("spikes must be strictly descending".into()));
            }
        }
        let max_bulk = bulk.measure.max_value();
        if alphas[m - 1] <= max_bulk {
            return Err(SpikeError::Invalid(format!(
                "smallest spike {} must exceed the largest bulk atom {max_bulk}",
                alphas[m - 1]
            )));
        }
        let u = match eigvecs {
            Some(u) => {
                if u.nrows() != m || u.ncols() != m {
                    return Err(SpikeError::Invalid("eigvecs must be m x m".into()));
                }
                let gram = u.transpose() * &u;
                for i in 0..m {
                    for j in 0..m {
                        let want = if i == j { 1.0 } else { 0.0 };
                        if (gram[(i, j)] - want).abs() > 1e-10 {
                            return Err(SpikeError::Invalid("eigvecs must be orthonormal".into()));
                        }
                    }
                }
                u
            }
            None => DMatrix::identity(m, m),
        };
        let lambda = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(alphas.clone())) * u.transpose();
        let mut psis = Vec::with_capacity(m);
        for &alpha in &alphas {
            let f = psi_family(&bulk.measure, y, alpha)?;
            if f.d1 <= 0.0 {
                return Err(SpikeError::NotDistantSpike { alpha, psi1: f.d1 });
            }
            psis.push(f);
        }
        Ok(Self { lambda, alphas, eigvecs: u, bulk, y, nu4, n, p, psis })
    }

    /// Build from a symmetric spike block, eigendecomposing it internally.
    pub fn from_lambda(
        lambda: DMatrix<f64>,
        bulk: BulkSpec,
        y: f64,
        nu4: f64,
        n: usize,
        p: usize,
    ) -> Result<Self> {
        let m = lambda.nrows();
        if lambda.ncols() != m || m == 0 {
            return Err(SpikeError::Invalid("lambda block must be square and nonempty".into()));
        }
        let sym_err = (&lambda - lambda.transpose()).abs().max();
        if sym_err > 1e-10 {
            return Err(SpikeError::Invalid("lambda block must be symmetric".into()));
        }
        let eig = lambda.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
        let alphas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut u = DMatrix::zeros(m, m);
        for (col, &i) in order.iter().enumerate() {
            u.set_column(col, &eig.eigenvectors.column(i));
        }
        let model = Self::from_spikes(alphas, Some(u), bulk, y, nu4, n, p)?;
        let recon_err = (&model.lambda - &lambda).abs().max();
        if recon_err > 1e-10 {
            return Err(SpikeError::Invalid(format!(
                "eigendecomposition failed to reconstruct lambda (max err {recon_err:.2e})"
            )));
        }
        Ok(Self { lambda, ..model })
    }

    /// Factor model: spikes alpha_k = t_k sigma^2 over a constant bulk at sigma^2.
    pub fn factor(t_list: &[f64], sigma2: f64, y: f64, nu4: f64, n: usize, p: usize) -> Result<Self> {
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(SpikeError::Invalid(format!("sigma2={sigma2} must be positive")));
        }
        let alphas = t_list.iter().map(|t| t * sigma2).collect();
        Self::from_spikes(alphas, None, BulkSpec::constant(sigma2), y, nu4, n, p)
    }

    pub fn m(&self) -> usize {
        self.alphas.len()
    }
    pub fn alpha(&self, k: usize) -> f64 {
        self.alphas[k]
    }
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
    pub fn psi(&self, k: usize) -> &PsiDerivatives {
        &self.psis[k]
    }
    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }
    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }
    pub fn bulk(&self) -> &BulkSpec {
        &self.bulk
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn nu4(&self) -> f64 {
        self.nu4
    }
    /// Fourth cumulant beta_y = nu4 - 3 of the base entries.
    pub fn beta_y(&self) -> f64 {
        self.nu4 - 3.0
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }

    /// Population trace tr(Sigma_p) with the bulk trace taken as (p - m) gamma_1.
    pub fn trace_sigma(&self) -> f64 {
        self.lambda.trace() + (self.p - self.m()) as f64 * self.bulk.measure.moment(1)
    }

    /// Integral of t^2 / (1 - t/alpha_k)^b against H.
    fn bulk_integral(&self, k: usize, b: u32) -> f64 {
        let alpha = self.alphas[k];
        self.bulk
            .measure
            .atoms()
            .iter()
            .map(|a| a.w * a.t * a.t / (1.0 - a.t / alpha).powi(b as i32))
            .sum()
    }

    /// Variance of a diagonal entry of the limiting Gaussian matrix G(psi_k):
    /// 2 (alpha^2/psi^2) psi' + beta_y (alpha^2/psi^2) psi'^2.
    pub fn sigma2_alpha(&self, k: usize) -> f64 {
        let f = &self.psis[k];
        let r = self.alphas[k] * self.alphas[k] / (f.psi * f.psi);
        2.0 * r * f.d1 + self.beta_y() * r * f.d1 * f.d1
    }

    /// Variance of an off-diagonal entry of G(psi_k): (alpha/psi) psi'.
    pub fn s2_alpha(&self, k: usize) -> f64 {
        let f = &self.psis[k];
        self.alphas[k] / f.psi * f.d1
    }

    /// Covariance between matched entries of G(psi_{k1}) and G(psi_{k2}) for
    /// distinct spikes. Mismatched index pairs have zero covariance.
    pub fn g_cross_cov(&self, k1: usize, k2: usize, class: EntryClass) -> Result<f64> {
        let (f1, f2) = (&self.psis[k1], &self.psis[k2]);
        if (f1.psi - f2.psi).abs() < PSI_DEGENERATE_TOL {
            return Err(SpikeError::DegenerateSpikes { k1, k2 });
        }
        let (a1, a2) = (self.alphas[k1], self.alphas[k2]);
        let prefactor = a1 * a2 * f1.d1 * f2.d1 / (f1.psi * f2.psi);
        let slope = (a1 - a2) / (f1.psi - f2.psi);
        Ok(match class {
            EntryClass::OffDiagonal => prefactor * slope,
            EntryClass::Diagonal => prefactor * (2.0 * slope + self.beta_y()),
        })
    }

    /// First-order variance of sqrt(n)(lambda_k/psi_k - 1):
    /// sum_i u_ik^4 sigma^2_alpha + sum_{i != j} u_ik^2 u_jk^2 s^2_alpha.
    pub fn lambda_var_first_order(&self, k: usize) -> f64 {
        let q4: f64 = self.eigvecs.column(k).iter().map(|u| u * u * u * u).sum();
        q4 * self.sigma2_alpha(k) + (1.0 - q4) * self.s2_alpha(k)
    }

    /// Mean of the second-order spectral process at psi_k (negative for
    /// positive-definite bulks).
    pub fn mu_m(&self, k: usize) -> f64 {
        let alpha = self.alphas[k];
        let y = self.y;
        let i2 = self.bulk_integral(k, 2);
        let i3 = self.bulk_integral(k, 3);
        let denom = 1.0 - y / (alpha * alpha) * i2; // equals psi'(alpha_k)
        -(1.0 / alpha.powi(3)) * (y * i3 / (denom * denom) + y * self.beta_y() * i3 / denom)
    }

    /// Variance of the second-order spectral process at psi_k.
    pub fn sigma2_m(&self, k: usize) -> f64 {
        let s = underline_s_at_spike(&self.bulk.measure, self.y, self.alphas[k])
            .expect("model spikes are distant by construction");
        let gaussian_part = (2.0 * s.s1 * s.s3 - 3.0 * s.s2 * s.s2) / (6.0 * s.s1 * s.s1);
        let i4 = self.bulk_integral(k, 4);
        gaussian_part + self.y * self.beta_y() * s.s1 * s.s1 * i4
    }

    /// Variance of tr(S_n) - tr(Sigma_p). The first-order form is the limit
    /// 2 y gamma_2 + y (nu4 - 3) gamma_{d,2}; the refined form evaluates the
    /// finite-sample expression including the spike block contribution.
    pub fn trace_var(&self, refined: bool) -> f64 {
        let gamma2 = self.bulk.measure.moment(2);
        let gamma_d2 = self.bulk.diag_second_moment;
        if !refined {
            return 2.0 * self.y * gamma2 + self.y * self.beta_y() * gamma_d2;
        }
        let n = self.n as f64;
        let p_prime = (self.p - self.m()) as f64;
        let bulk_part = 2.0 / n * p_prime * gamma2 + self.beta_y() / n * p_prime * gamma_d2;
        bulk_part + self.lambda_block_var() / n
    }

    /// sum_i Lambda_ii^2 (nu4 - 1) + sum_{i != j} Lambda_ij^2.
    fn lambda_block_var(&self) -> f64 {
        let m = self.m();
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in 0..m {
            for j in 0..m {
                let v = self.lambda[(i, j)];
                if i == j {
                    diag += v * v;
                } else {
                    off += v * v;
                }
            }
        }
        diag * (self.nu4 - 1.0) + off
    }

    /// The spike-block coupling rho_k and the total covariance between
    /// sqrt(n)(lambda_k/psi_k - 1) and tr(S_n) - tr(Sigma_p).
    pub fn rho_and_cov_lambda_trace(&self, k: usize) -> (f64, f64) {
        let f = &self.psis[k];
        let sqrt_n = (self.n as f64).sqrt();
        let m = self.m();
        let u = self.eigvecs.column(k);
        let mut diag_sum = 0.0;
        let mut off_sum = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    diag_sum += self.lambda[(i, i)] * u[i] * u[i];
                } else {
                    off_sum += self.lambda[(i, j)] * u[i] * u[j];
                }
            }
        }
        let rho = self.alphas[k] * f.d1 / (sqrt_n * f.psi) * ((self.nu4 - 1.0) * diag_sum + off_sum);
        let bulk_term = self.y * (self.nu4 - 1.0) / (sqrt_n * f.psi) * self.bulk_integral(k, 2);
        (rho, rho + bulk_term)
    }

    /// Expected value of sqrt(n)(lambda_k/psi_k - 1):
    /// (alpha^2 psi' / (sqrt(n) psi)) mu_{M_k}.
    pub fn lambda_mean_correction(&self, k: usize) -> f64 {
        let f = &self.psis[k];
        let a = self.alphas[k];
        a * a * f.d1 / ((self.n as f64).sqrt() * f.psi) * self.mu_m(k)
    }

    /// Center and variance of the ratio statistic lambda_k / (tr(S_n)/p).
    ///
    /// The first-order variance uses the limit mean gamma_1 of H; the refined
    /// variance evaluates the full second-order expression with the finite-p
    /// population trace.
    pub fn ratio_params(&self, k: usize, refined: bool) -> (f64, f64) {
        let f = &self.psis[k];
        let gamma1 = self.bulk.measure.moment(1);
        let mean_trace = self.trace_sigma() / self.p as f64;
        let center = f.psi / mean_trace;

        let combo = self.lambda_var_first_order(k);
        if !refined {
            return (center, f.psi * f.psi / (gamma1 * gamma1) * combo);
        }

        let n = self.n as f64;
        let p = self.p as f64;
        let a = self.alphas[k];
        let a2psi1 = a * a * f.d1;
        // psi_k + alpha^2 psi' mu_M / n, shared by several terms below
        let shifted_psi = f.psi + a2psi1 * self.mu_m(k) / n;
        let (rho, _) = self.rho_and_cov_lambda_trace(k);
        let cov_inner = rho * n.sqrt(); // alpha psi' (...) without the 1/sqrt(n)
        let gamma2 = self.bulk.measure.moment(2);
        let gamma_d2 = self.bulk.diag_second_moment;

        let t1 = f.psi * f.psi / (mean_trace * mean_trace) * combo;
        let t2 = a2psi1 * a2psi1 * self.sigma2_m(k) / (n * mean_trace * mean_trace);
        let t3 = -2.0 * shifted_psi / (p * mean_trace.powi(3))
            * (cov_inner + self.y * (self.nu4 - 1.0) * self.bulk_integral(k, 2));
        let t4 = (2.0 * gamma2 + self.beta_y() * gamma_d2) * shifted_psi * shifted_psi
            / (p * mean_trace.powi(4));
        let t5 = self.lambda_block_var() * shifted_psi * shifted_psi / (p * p * mean_trace.powi(4));
        (center, t1 + t2 + t3 + t4 + t5)
    }
}

/// One spike's record in an [`AsymptoticSummary`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpikeRecord {
    /// psi(alpha_k), the almost-sure limit of lambda_k.
    pub psi: f64,
    /// First-order variance of sqrt(n)(lambda_k/psi_k - 1).
    pub var1: f64,
    /// Mean correction of sqrt(n)(lambda_k/psi_k - 1).
    pub mean_corr: f64,
    /// Refined variance including the second-order spectral term.
    pub var2: f64,
    /// Covariance with tr(S_n) - tr(Sigma_p).
    pub cov_trace: f64,
    /// Center of the ratio statistic.
    pub ratio_center: f64,
    /// First-order ratio variance.
    pub ratio_var1: f64,
    /// Refined ratio variance.
    pub ratio_var2: f64,
}

/// Trace record in an [`AsymptoticSummary`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    /// First-order (limit) variance of tr(S_n) - tr(Sigma_p).
    pub var1: f64,
    /// Refined finite-sample variance.
    pub var2: f64,
}

/// All first- and second-order limit parameters for a spiked model, in the
/// shape used by the JSON interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticSummary {
    pub spikes: Vec<SpikeRecord>,
    pub trace: TraceRecord,
    /// Covariance matrix of the normalized eigenvalue fluctuations across spikes.
    pub cross_cov: Vec<Vec<f64>>,
}

impl AsymptoticSummary {
    /// Evaluate every summary parameter for the model.
    pub fn compute(model: &SpikedModel) -> Result<Self> {
        let m = model.m();
        let mut spikes = Vec::with_capacity(m);
        for k in 0..m {
            let f = model.psi(k);
            let a = model.alpha(k);
            let n = model.n() as f64;
            let var1 = model.lambda_var_first_order(k);
            let var2 = var1
                + a.powi(4) * f.d1 * f.d1 * model.sigma2_m(k) / (n * f.psi * f.psi);
            let (_, cov_trace) = model.rho_and_cov_lambda_trace(k);
            let (ratio_center, ratio_var1) = model.ratio_params(k, false);
            let (_, ratio_var2) = model.ratio_params(k, true);
            spikes.push(SpikeRecord {
                psi: f.psi,
                var1,
                mean_corr: model.lambda_mean_correction(k),
                var2,
                cov_trace,
                ratio_center,
                ratio_var1,
                ratio_var2,
            });
        }
        let mut cross_cov = vec![vec![0.0; m]; m];
        for (k1, row) in cross_cov.iter_mut().enumerate() {
            for (k2, entry) in row.iter_mut().enumerate() {
                *entry = if k1 == k2 {
                    spikes[k1].var1
                } else {
                    cross_spike_cov(model, k1, k2)?
                };
            }
        }
        Ok(Self {
            spikes,
            trace: TraceRecord {
                var1: model.trace_var(false),
                var2: model.trace_var(true),
            },
            cross_cov,
        })
    }
}

/// Covariance of the normalized fluctuations of lambda_{k1} and lambda_{k2},
/// combining the entrywise cross covariances with the eigenvector weights. By
/// orthogonality of U the off-diagonal weight reduces to the negated diagonal
/// one, so the result is sum_i u_{ik1}^2 u_{ik2}^2 (cov_diag - cov_off).
fn cross_spike_cov(model: &SpikedModel, k1: usize, k2: usize) -> Result<f64> {
    let cov_d = model.g_cross_cov(k1, k2, EntryClass::Diagonal)?;
    let cov_o = model.g_cross_cov(k1, k2, EntryClass::OffDiagonal)?;
    let u = model.eigvecs();
    let w: f64 = (0..model.m())
        .map(|i| u[(i, k1)] * u[(i, k1)] * u[(i, k2)] * u[(i, k2)])
        .sum();
    Ok(w * (cov_d - cov_o))
}

#[cfg(test)]
mod tests {
    use super::*;
    

    fn model_h1(alphas: Vec<f64>, nu4: f64) -> SpikedModel {
        SpikedModel::from_spikes(alphas, None, BulkSpec::constant(1.0), 0.5, nu4, 400, 200).unwrap()
    }

    fn model_h2_single() -> SpikedModel {
        SpikedModel::from_spikes(vec![20.0], None, BulkSpec::constant(2.0), 0.5, 3.0, 400, 200)
            .unwrap()
    }

    #[test]
    fn sigma2_alpha_examples() {
        let m = model_h1(vec![3.0], 3.0);
        assert!((m.sigma2_alpha(0) - 1.12).abs() < 1e-12);

        let m2 = model_h2_single();
        assert!((m2.sigma2_alpha(0) - 1.78393).abs() < 1e-5);

        // near the phase transition both terms carry a psi' factor
        let near = SpikedModel::from_spikes(
            vec![1.0 + f64::sqrt(0.5) + 1e-6],
            None,
            BulkSpec::constant(1.0),
            0.5,
            3.0,
            400,
            200,
        )
        .unwrap();
        assert!(near.sigma2_alpha(0) < 1e-2);
    }

    #[test]
    fn s2_alpha_examples() {
        let m = model_h1(vec![3.0], 3.0);
        assert!((m.s2_alpha(0) - 0.7).abs() < 1e-12);
        // 20 * 0.9938272 / 21.11111 evaluated exactly
        let m2 = model_h2_single();
        assert!((m2.s2_alpha(0) - 0.9415205).abs() < 1e-7);
    }

    #[test]
    fn g_cross_cov_examples() {
        let m = model_h1(vec![4.0, 3.0], 3.0);
        let off = m.g_cross_cov(0, 1, EntryClass::OffDiagonal).unwrap();
        assert!((off - 0.618182).abs() < 1e-6);
        let diag = m.g_cross_cov(0, 1, EntryClass::Diagonal).unwrap();
        assert!((diag - 1.236364).abs() < 1e-6, "got {diag}");
    }

    #[test]
    fn degenerate_spikes_rejected_at_construction() {
        // Assumption (v) forbids ties, so the constructor already refuses them.
        assert!(SpikedModel::from_spikes(
            vec![3.0, 3.0],
            None,
            BulkSpec::constant(1.0),
            0.5,
            3.0,
            400,
            200
        )
        .is_err());
    }

    #[test]
    fn g_cross_cov_degenerate_near_ties() {
        // strictly descending but within the psi-degeneracy tolerance
        let m = SpikedModel::from_spikes(
            vec![3.0, 3.0 - 1e-12],
            None,
            BulkSpec::constant(1.0),
            0.5,
            3.0,
            400,
            200,
        )
        .unwrap();
        assert!(matches!(
            m.g_cross_cov(0, 1, EntryClass::OffDiagonal),
            Err(SpikeError::DegenerateSpikes { .. })
        ));
    }

    #[test]
    fn lambda_var_reduces_to_sigma2_alpha_for_identity_u() {
        let m = model_h1(vec![3.0], 3.0);
        assert!((m.lambda_var_first_order(0) - m.sigma2_alpha(0)).abs() < 1e-14);
        let m2 = model_h1(vec![4.0, 3.0], 3.0);
        assert!((m2.lambda_var_first_order(0) - m2.sigma2_alpha(0)).abs() < 1e-14);
        assert!((m2.lambda_var_first_order(1) - m2.sigma2_alpha(1)).abs() < 1e-14);
    }

    #[test]
    fn lambda_var_quartic_combination_under_rotation() {
        // 45-degree rotation: weights 0.25*sigma2*2 + 2*0.25*s2 on synthetic values
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let u = DMatrix::from_row_slice(2, 2, &[r, -r, r, r]);
        let m = SpikedModel::from_spikes(
            vec![4.0, 3.0],
            Some(u),
            BulkSpec::constant(1.0),
            0.5,
            3.0,
            400,
            200,
        )
        .unwrap();
        let q4 = 0.5;
        let want = q4 * m.sigma2_alpha(0) + (1.0 - q4) * m.s2_alpha(0);
        assert!((m.lambda_var_first_order(0) - want).abs() < 1e-14);
        // the synthetic-value form of the same combination
        assert!((q4 * 2.0 + (1.0 - q4) * 1.0 - 1.5f64).abs() < 1e-15);
    }

    #[test]
    fn mu_m_examples() {
        let m = model_h2_single();
        assert!((m.mu_m(0) + 3.4722e-4).abs() < 5e-8, "got {}", m.mu_m(0));
        // cross-check against the closed factor-model form
        let closed = -0.5 * 4.0 / (18.0f64.powi(3) * (1.0f64 - 0.5 * 4.0 / 324.0).powi(2));
        assert!((m.mu_m(0) - closed).abs() < 1e-14);
        // Rademacher entries flip beta_y negative, shrinking |mu_M|
        let m_rad =
            SpikedModel::from_spikes(vec![20.0], None, BulkSpec::constant(2.0), 0.5, 1.0, 400, 200)
                .unwrap();
        assert!(m_rad.mu_m(0).abs() < m.mu_m(0).abs());
        assert!(m.mu_m(0) < 0.0);
    }

    #[test]
    fn sigma2_m_closed_form_point_mass() {
        // for H = delta_{sigma2} and Gaussian entries:
        // sigma2_M = (2y/((t-1)^4 psi'^3) + 2y^2/((t-1)^6 psi'^4)) / sigma^4
        let m = model_h2_single();
        let (t, y, sig2) = (10.0_f64, 0.5_f64, 2.0_f64);
        let psi1 = 1.0 - y / (t - 1.0).powi(2);
        let closed = (2.0 * y / ((t - 1.0).powi(4) * psi1.powi(3))
            + 2.0 * y * y / ((t - 1.0).powi(6) * psi1.powi(4)))
            / (sig2 * sig2);
        assert!(
            ((m.sigma2_m(0) - closed) / closed).abs() < 1e-12,
            "{} vs {closed}",
            m.sigma2_m(0)
        );
    }

    #[test]
    fn trace_var_examples() {
        let m = model_h2_single();
        assert!((m.trace_var(false) - 4.0).abs() < 1e-12);

        let m2 = SpikedModel::from_spikes(
            vec![4.0, 3.0],
            None,
            BulkSpec::constant(1.0),
            0.5,
            3.0,
            200,
            100,
        )
        .unwrap();
        assert!((m2.trace_var(true) - 1.23).abs() < 1e-12);
        // Gaussian fourth cumulant kills the gamma_d2 term
        assert!((m2.trace_var(false) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rho_and_cov_examples() {
        let m = SpikedModel::from_spikes(
            vec![3.0],
            None,
            BulkSpec::constant(1.0),
            0.5,
            3.0,
            100,
            200,
        )
        .unwrap();
        let (rho, cov) = m.rho_and_cov_lambda_trace(0);
        assert!((rho - 0.42).abs() < 1e-12);
        assert!((cov - 0.48).abs() < 1e-12);

        // 1/sqrt(n) scaling: both terms shrink with n
        let m_big = SpikedModel::from_spikes(
            vec![3.0],
            None,
            BulkSpec::constant(1.0),
            0.5,
            3.0,
            1_000_000,
            200,
        )
        .unwrap();
        let (rho_big, cov_big) = m_big.rho_and_cov_lambda_trace(0);
        assert!(rho_big.abs() < 1e-2 && cov_big.abs() < 1e-2);
    }

    #[test]
    fn ratio_first_order_matches_factor_form() {
        let m = model_h2_single();
        let (_, var1) = m.ratio_params(0, false);
        let want = 2.0 * 400.0 * (1.0 - 0.5 * 4.0 / 324.0) / 4.0;
        assert!((var1 - want).abs() < 1e-9, "{var1} vs {want}");
    }

    #[test]
    fn ratio_refined_matches_factor_specialization_in_the_limit() {
        // At large (p, n) the two normalizations (trace mean vs trailing mean)
        // coincide and the refined ratio variance must agree with the
        // t-parameterized refined variance of the factor test.
        let (p, n) = (100_000_000usize, 200_000_000usize);
        for &t in &[3.0, 5.0, 10.0] {
            let m = SpikedModel::factor(&[t], 2.0, 0.5, 3.0, n, p).unwrap();
            let (_, var2) = m.ratio_params(0, true);
            let star = crate::factor::sigma_star2(&[t], 0.5, p, n, 1).unwrap();
            assert!(
                ((var2 - star) / star).abs() < 1e-6,
                "t={t}: refined ratio {var2} vs sigma*^2 {star}"
            );
        }
    }

    #[test]
    fn lambda_mean_correction_example() {
        let m = model_h2_single();
        let c = m.lambda_mean_correction(0);
        assert!((c + 3.268e-4).abs() < 2e-7, "got {c}");
        assert!(c < 0.0);
    }

    #[test]
    fn summary_shape_and_symmetry() {
        let m = model_h1(vec![4.0, 3.0], 3.0);
        let s = AsymptoticSummary::compute(&m).unwrap();
        assert_eq!(s.spikes.len(), 2);
        assert!(s.spikes.iter().all(|r| r.var1 >= 0.0 && r.var2 >= r.var1));
        assert!(s.trace.var1 >= 0.0 && s.trace.var2 >= 0.0);
        assert!((s.cross_cov[0][1] - s.cross_cov[1][0]).abs() < 1e-14);
        // identity U: cross-spike covariance vanishes by orthogonality
        assert!(s.cross_cov[0][1].abs() < 1e-14);
        let json = serde_json::to_value(&s).unwrap();
        assert!(json["spikes"][0].get("psi").is_some());
        assert!(json["spikes"][0].get("ratio_var2").is_some());
        assert!(json["trace"].get("var1").is_some());
    }

    #[test]
    fn from_lambda_reconstructs_spikes() {
        // Lambda = U diag(4,3) U' at 45 degrees
        let lambda = DMatrix::from_row_slice(2, 2, &[3.5, 0.5, 0.5, 3.5]);
        let m = SpikedModel::from_lambda(lambda, BulkSpec::constant(1.0), 0.5, 3.0, 400, 200)
            .unwrap();
        assert!((m.alpha(0) - 4.0).abs() < 1e-12);
        assert!((m.alpha(1) - 3.0).abs() < 1e-12);
        // recombining eigenpairs reproduces the block
        let recon = m.eigvecs()
            * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(m.alphas().to_vec()))
            * m.eigvecs().transpose();
        assert!((recon - m.lambda()).abs().max() < 1e-10);
    }

    #[test]
    fn rejects_non_distant_spikes() {
        let err = SpikedModel::from_spikes(
            vec![1.5],
            None,
            BulkSpec::constant(1.0),
            0.5,
            3.0,
            400,
            200,
        );
        assert!(matches!(err, Err(SpikeError::NotDistantSpike { .. })));
    }
}
