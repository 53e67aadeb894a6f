//! Data generation for spiked population and factor models, and sample spectra
//! with the companion-matrix optimization: when p > n the n x n companion
//! (1/n) X'X shares its nonzero eigenvalues with the p x p sample covariance,
//! so the eigensolve always runs at the smaller dimension.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::SpikedModel;
use crate::error::{Result, SpikeError};
use crate::measure::DiscreteMeasure;

/// Standardized entry distribution for the base data matrix (mean 0, variance 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDistribution {
    Gaussian,
    Rademacher,
    /// Uniform on [-sqrt(3), sqrt(3)].
    Uniform,
    /// Takes value `a` with probability 1/(1+a^2) and -1/a otherwise; `a > 1`
    /// places the fourth moment anywhere above 1.
    TwoPoint { a: f64 },
}

impl EntryDistribution {
    /// Parameter validation (`two_point` needs a > 1 to be standardized and
    /// distinct from Rademacher).
    pub fn validate(&self) -> Result<()> {
        if let EntryDistribution::TwoPoint { a } = self {
            if !a.is_finite() || *a <= 1.0 {
                return Err(SpikeError::Invalid(format!("two_point parameter a={a} must be > 1")));
            }
        }
        Ok(())
    }

    /// Fourth moment of the standardized entries.
    pub fn nu4(&self) -> f64 {
        match self {
            EntryDistribution::Gaussian => 3.0,
            EntryDistribution::Rademacher => 1.0,
            EntryDistribution::Uniform => 1.8,
            EntryDistribution::TwoPoint { a } => {
                (a.powi(6) + 1.0) / (a * a * (1.0 + a * a))
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            EntryDistribution::Gaussian => {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            }
            EntryDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryDistribution::Uniform => {
                (2.0 * rng.random::<f64>() - 1.0) * 3.0_f64.sqrt()
            }
            EntryDistribution::TwoPoint { a } => {
                let p_hi = 1.0 / (1.0 + a * a);
                if rng.random::<f64>() < p_hi {
                    *a
                } else {
                    -1.0 / a
                }
            }
        }
    }
}

/// Population covariance specification for the simulator.
#[derive(Debug, Clone)]
pub struct PopulationSpec {
    /// Spike eigenvalues, descending. May be empty for a pure-bulk (null) model.
    pub alphas: Vec<f64>,
    /// Spike eigenvectors as matrix columns; `None` means identity.
    pub eigvecs: Option<DMatrix<f64>>,
    /// Bulk block of the population covariance.
    pub bulk: BulkPopulation,
}

/// How the diagonal bulk block V is populated.
#[derive(Debug, Clone)]
pub enum BulkPopulation {
    /// V = sigma^2 I (the factor-model case).
    Constant { sigma2: f64 },
    /// Diagonal entries drawn i.i.d. from the atoms of H by weight, using the
    /// replication's own seed stream.
    Atoms { measure: DiscreteMeasure },
}

impl PopulationSpec {
    /// Factor model with spikes t_k sigma^2 over a constant bulk.
    pub fn factor(t_list: &[f64], sigma2: f64) -> Self {
        Self {
            alphas: t_list.iter().map(|t| t * sigma2).collect(),
            eigvecs: None,
            bulk: BulkPopulation::Constant { sigma2 },
        }
    }

    /// Population matching a [`SpikedModel`]: same spikes and eigenvectors, bulk
    /// diagonal drawn from the model's H.
    pub fn from_model(model: &SpikedModel) -> Self {
        let u = model.eigvecs();
        let identity = u == &DMatrix::identity(model.m(), model.m());
        let h = &model.bulk().measure;
        let bulk = if h.atoms().len() == 1 {
            BulkPopulation::Constant { sigma2: h.atoms()[0].t }
        } else {
            BulkPopulation::Atoms { measure: h.clone() }
        };
        Self {
            alphas: model.alphas().to_vec(),
            eigvecs: if identity { None } else { Some(u.clone()) },
            bulk,
        }
    }
}

/// One simulated draw: the full descending spectrum of the sample covariance
/// (padded with zeros to length p when p > n), the exact trace, and metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub eigs: Vec<f64>,
    /// Exact trace of S_n, computed as (1/n) sum of squared column norms of X.
    pub trace: f64,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    /// Realized population trace tr(Sigma_p) for this draw.
    pub pop_trace: f64,
}

/// Draw one sample spectrum from the population, deterministically in `seed`.
pub fn sample_spectrum(
    spec: &PopulationSpec,
    p: usize,
    n: usize,
    dist: EntryDistribution,
    seed: u64,
) -> Result<SpectrumSample> {
    let m = spec.alphas.len();
    if p < 2 || n < 2 || p <= m {
        return Err(SpikeError::Invalid(format!("need p > m and p, n >= 2 (p={p}, n={n}, m={m})")));
    }
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Bulk diagonal first, then the data matrix, so the stream layout is fixed.
    let bulk_diag: Vec<f64> = match &spec.bulk {
        BulkPopulation::Constant { sigma2 } => vec![*sigma2; p - m],
        BulkPopulation::Atoms { measure } => {
            let atoms = measure.atoms();
            (0..p - m)
                .map(|_| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    for a in atoms {
                        acc += a.w;
                        if u < acc {
                            return a.t;
                        }
                    }
                    atoms[atoms.len() - 1].t
                })
                .collect()
        }
    };

    let mut x = DMatrix::zeros(p, n);
    for j in 0..n {
        for i in 0..p {
            x[(i, j)] = dist.sample(&mut rng);
        }
    }

    // Apply Sigma^{1/2}: the spike block as U diag(sqrt(alpha)) U' (diagonal
    // scaling when U is the identity), the bulk as a row scaling.
    match &spec.eigvecs {
        None => {
            for (i, &alpha) in spec.alphas.iter().enumerate() {
                let s = alpha.sqrt();
                for j in 0..n {
                    x[(i, j)] *= s;
                }
            }
        }
        Some(u) => {
            let sqrt_lambda = u
                * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    m,
                    spec.alphas.iter().map(|a| a.sqrt()),
                ))
                * u.transpose();
            let top = sqrt_lambda * x.rows(0, m);
            x.rows_mut(0, m).copy_from(&top);
        }
    }
    for (i, &v) in bulk_diag.iter().enumerate() {
        let s = v.sqrt();
        for j in 0..n {
            x[(m + i, j)] *= s;
        }
    }

    let trace = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let pop_trace = spec.alphas.iter().sum::<f64>() + bulk_diag.iter().sum::<f64>();

    let gram = if p <= n {
        &x * x.transpose() / n as f64
    } else {
        x.tr_mul(&x) / n as f64
    };
    let mut eigs = gram.symmetric_eigen().eigenvalues.as_slice().to_vec();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let floor = -1e-10 * eigs[0].abs().max(1.0);
    debug_assert!(eigs[eigs.len() - 1] >= floor, "eigenvalue below the round-off floor");
    for e in &mut eigs {
        *e = e.max(0.0);
    }
    eigs.resize(p, 0.0);

    Ok(SpectrumSample { eigs, trace, p, n, seed, pop_trace })
}

/// Verify that (1/n) X X' and (1/n) X'X share their nonzero spectra to 1e-9
/// relative. Intended for small instances.
pub fn companion_equivalence_check(x: &DMatrix<f64>) -> bool {
    let n = x.ncols() as f64;
    let big = (x * x.transpose() / n).symmetric_eigen().eigenvalues;
    let small = (x.tr_mul(x) / n).symmetric_eigen().eigenvalues;
    let mut a: Vec<f64> = big.iter().copied().collect();
    let mut b: Vec<f64> = small.iter().copied().collect();
    a.sort_by(|x, y| y.partial_cmp(x).unwrap());
    b.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let scale = a.first().copied().unwrap_or(0.0).max(b.first().copied().unwrap_or(0.0));
    if scale <= 0.0 {
        // zero matrix: both spectra vanish
        return a.iter().chain(b.iter()).all(|v| v.abs() < 1e-12);
    }
    let tol = 1e-9 * scale;
    let nonzero = |v: &&f64| **v > tol;
    let aa: Vec<f64> = a.iter().filter(nonzero).copied().collect();
    let bb: Vec<f64> = b.iter().filter(nonzero).copied().collect();
    aa.len() == bb.len()
        && aa
            .iter()
            .zip(&bb)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0))
}

/// Render a sample as CSV: a comment header carrying the metadata, then one
/// eigenvalue per line in descending order.
pub fn spectrum_to_csv(s: &SpectrumSample) -> String {
    let mut out = format!("# p={},n={},seed={},trace={}\n", s.p, s.n, s.seed, s.trace);
    for e in &s.eigs {
        out.push_str(&format!("{e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nu4_values() {
        assert_eq!(EntryDistribution::Gaussian.nu4(), 3.0);
        assert_eq!(EntryDistribution::Rademacher.nu4(), 1.0);
        assert!((EntryDistribution::Uniform.nu4() - 1.8).abs() < 1e-12);
        // a -> 1 recovers Rademacher
        assert!((EntryDistribution::TwoPoint { a: 1.0 + 1e-9 }.nu4() - 1.0).abs() < 1e-6);
        assert!((EntryDistribution::TwoPoint { a: 2.0 }.nu4() - 3.25).abs() < 1e-12);
        assert!(EntryDistribution::TwoPoint { a: 0.9 }.validate().is_err());
        assert!(EntryDistribution::TwoPoint { a: 2.0 }.validate().is_ok());
    }

    #[test]
    fn entry_moments_smoke() {
        let n = 100_000;
        for dist in [
            EntryDistribution::Gaussian,
            EntryDistribution::Rademacher,
            EntryDistribution::Uniform,
            EntryDistribution::TwoPoint { a: 2.0 },
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(12345);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            let mut s4 = 0.0;
            let mut s8 = 0.0;
            for _ in 0..n {
                let v = dist.sample(&mut rng);
                s1 += v;
                s2 += v * v;
                s4 += v.powi(4);
                s8 += v.powi(8);
            }
            let nf = n as f64;
            let mean = s1 / nf;
            let var = s2 / nf - mean * mean;
            let m4 = s4 / nf;
            assert!(mean.abs() < 4.0 / nf.sqrt(), "{dist:?}: mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "{dist:?}: var {var}");
            // fourth moment within 3 MC standard errors of nu4
            let se4 = ((s8 / nf - m4 * m4).max(0.0) / nf).sqrt();
            assert!(
                (m4 - dist.nu4()).abs() <= 3.0 * se4 + 1e-9,
                "{dist:?}: m4 {m4} vs nu4 {} (se {se4})",
                dist.nu4()
            );
        }
    }

    #[test]
    fn reproducibility_is_bitwise() {
        let spec = PopulationSpec::factor(&[10.0, 5.0], 2.0);
        let a = sample_spectrum(&spec, 50, 100, EntryDistribution::Gaussian, 7).unwrap();
        let b = sample_spectrum(&spec, 50, 100, EntryDistribution::Gaussian, 7).unwrap();
        assert_eq!(a.eigs, b.eigs);
        assert_eq!(a.trace, b.trace);
        let c = sample_spectrum(&spec, 50, 100, EntryDistribution::Gaussian, 8).unwrap();
        assert_ne!(a.eigs, c.eigs);
    }

    #[test]
    fn trace_identity_and_padding() {
        let spec = PopulationSpec::factor(&[10.0], 2.0);
        // p <= n: all eigenvalues present, they sum to the trace
        let s = sample_spectrum(&spec, 40, 80, EntryDistribution::Gaussian, 3).unwrap();
        let sum: f64 = s.eigs.iter().sum();
        assert!((sum - s.trace).abs() < 1e-8 * s.trace);
        assert_eq!(s.eigs.len(), 40);

        // p > n: padded with zeros, nonzero part still sums to the trace
        let s = sample_spectrum(&spec, 80, 40, EntryDistribution::Gaussian, 3).unwrap();
        assert_eq!(s.eigs.len(), 80);
        assert!(s.eigs[40..].iter().all(|&e| e == 0.0));
        let sum: f64 = s.eigs.iter().sum();
        assert!((sum - s.trace).abs() < 1e-8 * s.trace);
        assert!(s.eigs.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn null_model_largest_eigenvalue_near_mp_edge() {
        // Sigma = I, p=200, n=400: lambda_1 should sit near (1+sqrt(0.5))^2 = 2.914
        let spec = PopulationSpec::factor(&[], 1.0);
        let mut hits = 0;
        let reps = 200;
        for r in 0..reps {
            let s = sample_spectrum(&spec, 200, 400, EntryDistribution::Gaussian, 1000 + r).unwrap();
            if s.eigs[0] > 2.914 - 0.15 && s.eigs[0] < 2.914 + 0.15 {
                hits += 1;
            }
        }
        assert!(hits >= reps * 95 / 100, "only {hits}/{reps} inside the edge window");
    }

    #[test]
    fn factor_model_spike_near_psi() {
        // t=10, sigma^2=2, y=0.5: mean lambda_1 within 1% of psi = 21.1111
        let spec = PopulationSpec::factor(&[10.0], 2.0);
        let reps = 300;
        let mut acc = 0.0;
        for r in 0..reps {
            let s = sample_spectrum(&spec, 200, 400, EntryDistribution::Gaussian, 5000 + r).unwrap();
            acc += s.eigs[0];
        }
        let mean = acc / reps as f64;
        assert!((mean - 21.11111).abs() < 0.01 * 21.11111, "mean lambda_1 = {mean}");
    }

    #[test]
    fn population_trace_expectation() {
        let spec = PopulationSpec::factor(&[10.0, 5.0], 2.0);
        let reps = 2000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        let mut pop = 0.0;
        for r in 0..reps {
            let s = sample_spectrum(&spec, 50, 100, EntryDistribution::Gaussian, 9000 + r).unwrap();
            acc += s.trace;
            acc2 += s.trace * s.trace;
            pop = s.pop_trace;
        }
        let mean = acc / reps as f64;
        let var = acc2 / reps as f64 - mean * mean;
        let se = (var / reps as f64).sqrt();
        assert!((mean - pop).abs() < 3.0 * se, "mean {mean} vs population {pop} (se {se})");
    }

    #[test]
    fn companion_spectra_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(3, 5, |_, _| rng.random::<f64>() - 0.5);
        assert!(companion_equivalence_check(&x));
        let square = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>() - 0.5);
        assert!(companion_equivalence_check(&square));
        assert!(companion_equivalence_check(&DMatrix::zeros(4, 6)));
    }

    #[test]
    fn general_bulk_draws_atoms_by_weight() {
        let h = DiscreteMeasure::new(vec![(1.0, 0.25), (3.0, 0.75)]).unwrap();
        let spec = PopulationSpec {
            alphas: vec![20.0],
            eigvecs: None,
            bulk: BulkPopulation::Atoms { measure: h },
        };
        let s = sample_spectrum(&spec, 401, 400, EntryDistribution::Gaussian, 42).unwrap();
        // realized population trace reflects the mixture: 20 + 400 * (0.25*1 + 0.75*3)
        let expected = 20.0 + 400.0 * 2.5;
        assert!((s.pop_trace - expected).abs() < 3.0 * 35.0, "pop trace {}", s.pop_trace);
        assert_eq!(s.eigs.len(), 401);
    }

    #[test]
    fn csv_format() {
        let s = SpectrumSample {
            eigs: vec![2.5, 1.0],
            trace: 3.5,
            p: 2,
            n: 4,
            seed: 9,
            pop_trace: 3.0,
        };
        let csv = spectrum_to_csv(&s);
        assert_eq!(csv, "# p=2,n=4,seed=9,trace=3.5\n2.5\n1\n");
    }
}
