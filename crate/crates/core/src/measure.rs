//! Discrete bulk spectral measures and the Stieltjes-transform machinery built on them.
//!
//! The bulk spectrum is a finite atomic measure, so every integral against it is an
//! exact weighted sum. On top of that this module provides the psi map and its first
//! three derivatives, the companion-transform values at a distant spike, a real-line
//! Silverstein-equation solver, and the support characterization of the limiting
//! spectral distribution (critical points of psi).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpikeError};

/// Absolute distance below which an evaluation point is treated as sitting on an atom.
pub const POLE_TOL: f64 = 1e-12;

/// Grid resolution used when scanning a bounded gap for sign changes of psi'.
const SUPPORT_GRID: usize = 4096;

/// Bisection tolerance (in alpha) for locating critical points of psi.
const EDGE_TOL: f64 = 1e-10;

/// Convergence tolerance on |psi(alpha) - z| for the Silverstein solver.
const SOLVE_TOL: f64 = 1e-12;

/// Iteration cap shared by the bracketing and Newton stages of the solver.
const MAX_ITERS: usize = 200;

/// One atom of a discrete spectral measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Location of the atom (a population bulk eigenvalue).
    pub t: f64,
    /// Probability weight.
    pub w: f64,
}

/// A discrete probability measure on the nonnegative reals: the limiting bulk
/// spectral distribution H, stored as strictly increasing atoms with weights
/// summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AtomsRepr", into = "AtomsRepr")]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

/// Wire representation: `{"atoms":[{"t":2.0,"w":1.0}]}`.
#[derive(Serialize, Deserialize)]
struct AtomsRepr {
    atoms: Vec<Atom>,
}

impl TryFrom<AtomsRepr> for DiscreteMeasure {
    type Error = SpikeError;
    fn try_from(repr: AtomsRepr) -> Result<Self> {
        DiscreteMeasure::new(repr.atoms.into_iter().map(|a| (a.t, a.w)).collect())
    }
}

impl From<DiscreteMeasure> for AtomsRepr {
    fn from(m: DiscreteMeasure) -> Self {
        AtomsRepr { atoms: m.atoms }
    }
}

impl DiscreteMeasure {
    /// Build a measure from `(value, weight)` pairs.
    ///
    /// Values must be distinct, sorted ascending and nonnegative; weights must be
    /// positive and sum to one within 1e-12.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(SpikeError::Invalid("measure needs at least one atom".into()));
        }
        let mut total = 0.0;
        for (i, &(t, w)) in atoms.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(SpikeError::Invalid(format!("atom value {t} must be finite and >= 0")));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(SpikeError::Invalid(format!("atom weight {w} must be positive")));
            }
            if i > 0 && t <= atoms[i - 1].0 {
                return Err(SpikeError::Invalid("atom values must be strictly increasing".into()));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(SpikeError::Invalid(format!("atom weights sum to {total}, expected 1")));
        }
        Ok(Self {
            atoms: atoms.into_iter().map(|(t, w)| Atom { t, w }).collect(),
        })
    }

    /// The point mass `delta_value`.
    pub fn point_mass(value: f64) -> Self {
        Self::new(vec![(value, 1.0)]).expect("point mass is always valid")
    }

    /// Atoms in ascending order of value.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Largest atom value (the right end of the support of H).
    pub fn max_value(&self) -> f64 {
        self.atoms.last().expect("nonempty").t
    }

    /// k-th moment of H: the weighted sum of t^k over the atoms.
    pub fn moment(&self, k: u32) -> f64 {
        self.atoms.iter().map(|a| a.w * a.t.powi(k as i32)).sum()
    }

    /// Resolvent-type moment: the weighted sum of t^a / (alpha - t)^b.
    ///
    /// `a` must be 1 or 2 and `b` at most 4. Fails with [`SpikeError::PoleAtAtom`]
    /// when `b >= 1` and `alpha` is within [`POLE_TOL`] of an atom.
    pub fn resolvent_moment(&self, alpha: f64, a: u32, b: u32) -> Result<f64> {
        debug_assert!((1..=2).contains(&a) && b <= 4);
        if b >= 1 {
            self.check_pole(alpha)?;
        }
        Ok(self
            .atoms
            .iter()
            .map(|at| at.w * at.t.powi(a as i32) / (alpha - at.t).powi(b as i32))
            .sum())
    }

    fn check_pole(&self, alpha: f64) -> Result<()> {
        if self.atoms.iter().any(|a| (alpha - a.t).abs() < POLE_TOL) {
            return Err(SpikeError::PoleAtAtom { alpha });
        }
        Ok(())
    }
}

/// Bulk specification: the limiting measure H together with the limiting mean
/// square of the diagonal of V, which enters the trace variance through the
/// fourth-cumulant term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkSpec {
    /// The limiting spectral distribution of the bulk block.
    pub measure: DiscreteMeasure,
    /// gamma_{d,2}: limit of the mean squared diagonal entry of V.
    pub diag_second_moment: f64,
}

impl BulkSpec {
    /// Bulk built from a diagonal V whose entries are drawn i.i.d. from H, in
    /// which case gamma_{d,2} equals the second moment of H.
    pub fn from_measure(measure: DiscreteMeasure) -> Self {
        let diag_second_moment = measure.moment(2);
        Self { measure, diag_second_moment }
    }

    /// Bulk with an explicitly supplied gamma_{d,2}.
    pub fn with_diag_second_moment(measure: DiscreteMeasure, diag_second_moment: f64) -> Self {
        Self { measure, diag_second_moment }
    }

    /// Constant bulk at level sigma^2 (the factor-model case).
    pub fn constant(sigma2: f64) -> Self {
        Self::from_measure(DiscreteMeasure::point_mass(sigma2))
    }
}

/// psi(alpha) and its first three derivatives, evaluated exactly from atom sums:
///
/// ```text
/// psi   = alpha + y alpha Integral t/(alpha-t) dH
/// psi'  = 1 - y Integral t^2/(alpha-t)^2 dH
/// psi'' = 2y Integral t^2/(alpha-t)^3 dH
/// psi''' = -6y Integral t^2/(alpha-t)^4 dH
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiDerivatives {
    pub psi: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Evaluate psi and its first three derivatives at `alpha` away from the atoms.
pub fn psi_family(h: &DiscreteMeasure, y: f64, alpha: f64) -> Result<PsiDerivatives> {
    h.check_pole(alpha)?;
    let mut i11 = 0.0; // t/(alpha-t)
    let mut i22 = 0.0; // t^2/(alpha-t)^2
    let mut i23 = 0.0; // t^2/(alpha-t)^3
    let mut i24 = 0.0; // t^2/(alpha-t)^4
    for a in h.atoms() {
        let d = alpha - a.t;
        i11 += a.w * a.t / d;
        i22 += a.w * a.t * a.t / (d * d);
        i23 += a.w * a.t * a.t / (d * d * d);
        i24 += a.w * a.t * a.t / (d * d * d * d);
    }
    Ok(PsiDerivatives {
        psi: alpha + y * alpha * i11,
        d1: 1.0 - y * i22,
        d2: 2.0 * y * i23,
        d3: -6.0 * y * i24,
    })
}

/// Companion Stieltjes transform and its first three derivatives at z = psi(alpha),
/// for a distant spike alpha. All four values follow from inverting z = psi(alpha)
/// with s = -1/alpha and applying the chain rule:
///
/// ```text
/// s   = -1/alpha
/// s'  = 1 / (alpha^2 psi')
/// s'' = -2/(alpha^3 psi'^2) - psi''/(alpha^2 psi'^3)
/// s''' = 6/(alpha^4 psi'^3) + 6 psi''/(alpha^3 psi'^4)
///        - psi'''/(alpha^2 psi'^4) + 3 psi''^2/(alpha^2 psi'^5)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbarAtSpike {
    pub s: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

/// Evaluate the companion transform derivatives at a distant spike.
///
/// Fails with [`SpikeError::NotDistantSpike`] when psi'(alpha) <= 0.
pub fn underline_s_at_spike(h: &DiscreteMeasure, y: f64, alpha: f64) -> Result<SbarAtSpike> {
    let f = psi_family(h, y, alpha)?;
    if f.d1 <= 0.0 {
        return Err(SpikeError::NotDistantSpike { alpha, psi1: f.d1 });
    }
    let (p1, p2, p3) = (f.d1, f.d2, f.d3);
    let a = alpha;
    let s1 = 1.0 / (a * a * p1);
    let s2 = -2.0 / (a.powi(3) * p1 * p1) - p2 / (a * a * p1.powi(3));
    let s3 = 6.0 / (a.powi(4) * p1.powi(3)) + 6.0 * p2 / (a.powi(3) * p1.powi(4))
        - p3 / (a * a * p1.powi(4))
        + 3.0 * p2 * p2 / (a * a * p1.powi(5));
    Ok(SbarAtSpike { s: -1.0 / a, s1, s2, s3 })
}

/// True when psi'(alpha) > 0 at a point outside the atom set, i.e. alpha maps to
/// an outlier location under the psi map.
pub fn is_distant_spike(h: &DiscreteMeasure, y: f64, alpha: f64) -> Result<bool> {
    Ok(psi_family(h, y, alpha)?.d1 > 0.0)
}

/// A maximal open alpha-interval on which psi is strictly increasing, together with
/// its image. The images of these pieces tile the complement of the bulk support.
#[derive(Debug, Clone, Copy)]
struct MonotonePiece {
    a_lo: f64,
    a_hi: f64,
    /// psi(a_lo), or -inf for the unbounded left piece.
    z_lo: f64,
    /// psi(a_hi), or +inf for the unbounded right piece.
    z_hi: f64,
}

fn psi1_at(h: &DiscreteMeasure, y: f64, alpha: f64) -> f64 {
    let mut i22 = 0.0;
    for a in h.atoms() {
        let d = alpha - a.t;
        i22 += a.w * a.t * a.t / (d * d);
    }
    1.0 - y * i22
}

fn psi_at(h: &DiscreteMeasure, y: f64, alpha: f64) -> f64 {
    let mut i11 = 0.0;
    for a in h.atoms() {
        i11 += a.w * a.t / (alpha - a.t);
    }
    alpha + y * alpha * i11
}

/// Bisect psi' to a root inside (lo, hi), given psi'(lo) and psi'(hi) of opposite sign.
fn bisect_psi1(h: &DiscreteMeasure, y: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = psi1_at(h, y, lo);
    while hi - lo > EDGE_TOL {
        let mid = 0.5 * (lo + hi);
        let f_mid = psi1_at(h, y, mid);
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn increasing_pieces(h: &DiscreteMeasure, y: f64, ) -> Vec<MonotonePiece> {
    let atoms = h.atoms();
    let t_first = atoms[0].t;
    let t_last = atoms[atoms.len() - 1].t;
    let scale = t_last.max(1.0);
    let mut pieces = Vec::new();

    // Left of all atoms: psi'' < 0 there, so psi' falls monotonically from 1 to
    // -inf and has exactly one root a_minus. The increasing piece is (-inf, a_minus).
    let mut step = scale * 1e-6;
    let mut lo = t_first - step;
    for _ in 0..MAX_ITERS {
        if psi1_at(h, y, lo) > 0.0 {
            break;
        }
        step *= 2.0;
        lo = t_first - step;
    }
    let a_minus = bisect_psi1(h, y, lo, t_first - scale * 1e-13);
    pieces.push(MonotonePiece {
        a_lo: f64::NEG_INFINITY,
        a_hi: a_minus,
        z_lo: f64::NEG_INFINITY,
        z_hi: psi_at(h, y, a_minus),
    });

    // Interior gaps: psi' -> -inf at both ends, so roots pair up around any
    // interior region where psi' > 0 (a spectral gap).
    for w in atoms.windows(2) {
        let (a, b) = (w[0].t, w[1].t);
        let pad = (b - a) * 1e-9;
        let (lo, hi) = (a + pad, b - pad);
        let mut roots = Vec::new();
        let mut prev_x = lo;
        let mut prev_f = psi1_at(h, y, prev_x);
        for i in 1..=SUPPORT_GRID {
            let x = lo + (hi - lo) * i as f64 / SUPPORT_GRID as f64;
            let f = psi1_at(h, y, x);
            if (f > 0.0) != (prev_f > 0.0) {
                roots.push(bisect_psi1(h, y, prev_x, x));
            }
            prev_x = x;
            prev_f = f;
        }
        // psi' < 0 at both ends of the gap, so sign changes come in pairs.
        for pair in roots.chunks(2) {
            if pair.len() == 2 {
                pieces.push(MonotonePiece {
                    a_lo: pair[0],
                    a_hi: pair[1],
                    z_lo: psi_at(h, y, pair[0]),
                    z_hi: psi_at(h, y, pair[1]),
                });
            }
        }
    }

    // Right of all atoms: psi'' > 0, so psi' rises monotonically from -inf to 1
    // with exactly one root a_plus. The increasing piece is (a_plus, +inf).
    let mut step = scale * 1e-6;
    let mut hi = t_last + step;
    for _ in 0..MAX_ITERS {
        if psi1_at(h, y, hi) > 0.0 {
            break;
        }
        step *= 2.0;
        hi = t_last + step;
    }
    let a_plus = bisect_psi1(h, y, t_last + scale * 1e-13, hi);
    pieces.push(MonotonePiece {
        a_lo: a_plus,
        a_hi: f64::INFINITY,
        z_lo: psi_at(h, y, a_plus),
        z_hi: f64::INFINITY,
    });

    pieces
}

/// Closed intervals making up the support of the companion limiting spectral
/// distribution, computed from the critical points of psi.
pub fn support_edges(h: &DiscreteMeasure, y: f64) -> Vec<(f64, f64)> {
    let pieces = increasing_pieces(h, y);
    let mut edges = Vec::with_capacity(pieces.len() - 1);
    for w in pieces.windows(2) {
        edges.push((w[0].z_hi, w[1].z_lo));
    }
    edges
}

/// True when real z lies outside the support of the companion limiting
/// distribution, i.e. z = psi(alpha) for some alpha with psi'(alpha) > 0.
pub fn outside_support(h: &DiscreteMeasure, y: f64, z: f64) -> bool {
    !support_edges(h, y).iter().any(|&(lo, hi)| z >= lo && z <= hi)
}

/// Solve the Silverstein equation z = -1/s + y Integral t/(1+ts) dH for real z
/// outside the bulk support, on the branch with s' > 0.
///
/// Works in alpha-space: locates the unique alpha with psi(alpha) = z and
/// psi'(alpha) > 0 by bracketing plus safeguarded Newton, then returns -1/alpha.
pub fn solve_silverstein(h: &DiscreteMeasure, y: f64, z: f64) -> Result<f64> {
    let pieces = increasing_pieces(h, y);
    let piece = pieces
        .iter()
        .find(|p| z > p.z_lo && z < p.z_hi)
        .ok_or(SpikeError::OutsideDomain { z })?;

    // Finite bracket [lo, hi] with psi(lo) <= z <= psi(hi).
    let scale = h.max_value().max(1.0);
    let (mut lo, mut hi);
    if piece.a_hi.is_infinite() {
        lo = piece.a_lo + (piece.a_lo.abs() + scale) * 1e-12;
        hi = piece.a_lo.max(scale) + scale;
        let mut iters = 0;
        while psi_at(h, y, hi) < z {
            hi = piece.a_lo + 2.0 * (hi - piece.a_lo);
            iters += 1;
            if iters > MAX_ITERS {
                return Err(SpikeError::NoConvergence { iters });
            }
        }
    } else if piece.a_lo.is_infinite() {
        hi = piece.a_hi - (piece.a_hi.abs() + scale) * 1e-12;
        lo = piece.a_hi.min(-scale) - scale;
        let mut iters = 0;
        while psi_at(h, y, lo) > z {
            lo = piece.a_hi - 2.0 * (piece.a_hi - lo);
            iters += 1;
            if iters > MAX_ITERS {
                return Err(SpikeError::NoConvergence { iters });
            }
        }
    } else {
        let pad = (piece.a_hi - piece.a_lo) * 1e-12;
        lo = piece.a_lo + pad;
        hi = piece.a_hi - pad;
    }

    // Safeguarded Newton on psi(alpha) - z, falling back to bisection whenever a
    // step leaves the bracket.
    let mut alpha = 0.5 * (lo + hi);
    for _ in 0..MAX_ITERS {
        let f = psi_at(h, y, alpha) - z;
        if f.abs() <= SOLVE_TOL * z.abs().max(1.0) {
            if alpha.abs() < POLE_TOL {
                return Err(SpikeError::OutsideDomain { z });
            }
            return Ok(-1.0 / alpha);
        }
        if f > 0.0 {
            hi = alpha;
        } else {
            lo = alpha;
        }
        let d1 = psi1_at(h, y, alpha);
        let newton = alpha - f / d1;
        alpha = if d1 > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(SpikeError::NoConvergence { iters: MAX_ITERS })
}
