//! Light-cone correlation channel `M±(U)` and the ergodic hierarchy.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gates::{self, LocalDressing, Rearrangement, TwoQuditGate};
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::par;
use crate::rng;

/// Classification tolerance on `|λ| − 1` and `|λ|`.
pub const CLASS_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Plus,
    Minus,
}

#[derive(Clone, Debug)]
pub struct ChannelMatrix {
    pub q: usize,
    pub direction: Direction,
    /// Superoperator on row-vectorized `q × q` operators.
    pub matrix: CMat,
}

/// `M₊ = [U^T2 U^T2†]^R1 / q`, `M₋ = [U^T2 U^T2†]^R2 / q`.
pub fn m_channel(u: &TwoQuditGate, direction: Direction) -> ChannelMatrix {
    let q = u.q();
    let t2 = u.rearrange(Rearrangement::T2);
    let g = &t2 * t2.adjoint();
    let kind = match direction {
        Direction::Plus => Rearrangement::R1,
        Direction::Minus => Rearrangement::R2,
    };
    let mut matrix = gates::rearrange(q, g.as_ref(), kind);
    let inv = 1.0 / q as f64;
    for j in 0..q * q {
        for i in 0..q * q {
            matrix[(i, j)] *= inv;
        }
    }
    ChannelMatrix { q, direction, matrix }
}

/// `a ↦ tr₁[U†(a⊗I)U]/q` evaluated on the matrix-unit basis.
pub fn m_plus_direct(u: &TwoQuditGate) -> CMat {
    let q = u.q();
    let d = q * q;
    let ud = linalg::adjoint(u.matrix());
    let mut out = Mat::<c64>::zeros(d, d);
    for b in 0..d {
        let mut a = Mat::<c64>::zeros(q, q);
        a[(b / q, b % q)] = ONE;
        let big = linalg::kron(a.as_ref(), linalg::identity(q).as_ref());
        let x = &ud * &big * u.matrix();
        for r in 0..q {
            for c in 0..q {
                let mut s = ZERO;
                for k in 0..q {
                    s += x[(k * q + r, k * q + c)];
                }
                out[(r * q + c, b)] = s / q as f64;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErgodicClass {
    Noninteracting,
    Nonergodic,
    ErgodicNonmixing,
    ErgodicMixing,
    Bernoulli,
}

impl ErgodicClass {
    pub fn label(self) -> &'static str {
        match self {
            Self::Noninteracting => "noninteracting",
            Self::Nonergodic => "nonergodic",
            Self::ErgodicNonmixing => "ergodic-nonmixing",
            Self::ErgodicMixing => "ergodic-mixing",
            Self::Bernoulli => "bernoulli",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChannelSpectrum {
    /// Eigenvalue of the removed trivial mode.
    pub trivial: c64,
    /// Nontrivial eigenvalues by descending magnitude.
    pub eigenvalues: Vec<c64>,
    pub lambda1: c64,
    /// `−ln|λ₁|`, infinite when `λ₁ = 0`.
    pub mu1: f64,
    pub class: ErgodicClass,
}

/// Householder reflector sending `e₀` to `vec(I)/√q`.
fn identity_reflector(q: usize) -> CMat {
    let d = q * q;
    let s = 1.0 / (q as f64).sqrt();
    let mut w = vec![0.0; d];
    for i in 0..q {
        w[i * q + i] = s;
    }
    w[0] -= 1.0;
    let n2: f64 = w.iter().map(|x| x * x).sum();
    Mat::from_fn(d, d, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        c64::new(delta - 2.0 * w[i] * w[j] / n2, 0.0)
    })
}

/// Splits off the identity mode and classifies the rest.
///
/// The channel is unital and trace preserving, so `vec(I)` is both a left and
/// a right eigenvector; in any orthonormal basis starting with `vec(I)/√q` the
/// matrix is block diagonal `1 ⊕ M̃`, and `M̃` carries the nontrivial spectrum.
pub fn spectrum_report(m: &ChannelMatrix, tol: f64) -> Result<ChannelSpectrum> {
    let q = m.q;
    let d = q * q;
    let h = identity_reflector(q);
    let rotated = &h * &m.matrix * &h;
    let mut leak = 0.0f64;
    for k in 1..d {
        leak = leak.max(rotated[(k, 0)].norm()).max(rotated[(0, k)].norm());
    }
    if leak > 1e-10 {
        return invalid(format!("channel is not unital/trace preserving (leak {leak:.3e})"));
    }
    let trivial = rotated[(0, 0)];
    let rest = rotated.as_ref().submatrix(1, 1, d - 1, d - 1).to_owned();
    let mut eigenvalues = linalg::eigenvalues(rest.as_ref())?;
    eigenvalues.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)));
    let lambda1 = eigenvalues[0];
    let mod1 = lambda1.norm();
    let mu1 = if mod1 == 0.0 { f64::INFINITY } else { -mod1.ln() };
    Ok(ChannelSpectrum {
        trivial,
        class: classify(&eigenvalues, tol),
        eigenvalues,
        lambda1,
        mu1,
    })
}

pub fn classify(nontrivial: &[c64], tol: f64) -> ErgodicClass {
    let ones = nontrivial.iter().filter(|z| (**z - ONE).norm() <= tol).count();
    if ones == nontrivial.len() {
        ErgodicClass::Noninteracting
    } else if ones > 0 {
        ErgodicClass::Nonergodic
    } else if nontrivial.iter().any(|z| z.norm() >= 1.0 - tol) {
        ErgodicClass::ErgodicNonmixing
    } else if nontrivial.iter().all(|z| z.norm() <= tol) {
        ErgodicClass::Bernoulli
    } else {
        ErgodicClass::ErgodicMixing
    }
}

/// `‖M‖²_F` predicted from the entangling power: `(q²−1)(1−e_P)+1`.
pub fn norm_identity(q: usize, e_p: f64) -> f64 {
    let q2 = (q * q) as f64;
    (q2 - 1.0) * (1.0 - e_p) + 1.0
}

/// `e_P* = (q²−2)/(q²−1)`; above it every dressing mixes.
pub fn mixing_threshold(q: usize) -> f64 {
    let q2 = (q * q) as f64;
    (q2 - 2.0) / (q2 - 1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct MemberRecord {
    pub index: usize,
    pub e_p: f64,
    pub lambda1: [f64; 2],
    pub abs_lambda1: f64,
    pub mu1: f64,
    pub class: ErgodicClass,
    pub trivial: [f64; 2],
    /// `|‖M₊‖² − predicted|`.
    pub norm_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleLambdaStats {
    pub e_p: f64,
    pub samples: usize,
    pub mean_abs_lambda1: f64,
    pub range_abs_lambda1: f64,
    /// Range over mean; zero when the mean vanishes.
    pub dispersion: f64,
    pub max_norm_defect: f64,
    pub members: Vec<MemberRecord>,
}

/// Spectrum of one Haar-dressed copy of `u`; member streams come from `(seed, index)`.
pub fn dressed_member(
    u: &TwoQuditGate,
    e_p: f64,
    seed: u64,
    index: usize,
    direction: Direction,
) -> Result<MemberRecord> {
    let mut r = rng::member(seed, index as u64);
    let dressed = gates::dress_local(u, &LocalDressing::haar(u.q(), &mut r))?;
    let m = m_channel(&dressed, direction);
    let norm = m.matrix.as_ref().squared_norm_l2();
    let spec = spectrum_report(&m, CLASS_TOL)?;
    Ok(MemberRecord {
        index,
        e_p,
        lambda1: [spec.lambda1.re, spec.lambda1.im],
        abs_lambda1: spec.lambda1.norm(),
        mu1: spec.mu1,
        class: spec.class,
        trivial: [spec.trivial.re, spec.trivial.im],
        norm_defect: (norm - norm_identity(u.q(), e_p)).abs(),
    })
}

pub fn ensemble_lambda_stats(
    u: &TwoQuditGate,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<EnsembleLambdaStats> {
    if n == 0 {
        return invalid("ensemble needs at least one member");
    }
    let class = gates::classify_gate(u, gates::UNITARY_TOL)?;
    if class.kind == gates::GateKind::GenericUnitary {
        return invalid(format!(
            "ensemble base gate is not dual-unitary (residual {:.3e})",
            class.r_residual
        ));
    }
    let e_p = u.entangling_power();
    let members = par::try_map_indexed(n, workers, |i| {
        dressed_member(u, e_p, seed, i, Direction::Plus)
    })?;
    Ok(summarize(e_p, members))
}

pub fn summarize(e_p: f64, members: Vec<MemberRecord>) -> EnsembleLambdaStats {
    let n = members.len();
    let mean = members.iter().map(|m| m.abs_lambda1).sum::<f64>() / n as f64;
    let lo = members.iter().map(|m| m.abs_lambda1).fold(f64::INFINITY, f64::min);
    let hi = members.iter().map(|m| m.abs_lambda1).fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    EnsembleLambdaStats {
        e_p,
        samples: n,
        mean_abs_lambda1: mean,
        range_abs_lambda1: range,
        dispersion: if mean > 0.0 { range / mean } else { 0.0 },
        max_norm_defect: members.iter().map(|m| m.norm_defect).fold(0.0, f64::max),
        members,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FudgeSegment {
    pub e_lo: f64,
    pub e_hi: f64,
    pub f: f64,
    pub ssr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FudgeFit {
    pub single: FudgeSegment,
    /// Best two-segment fit, when at least two distinct `e_P` values exist.
    pub split: Option<(FudgeSegment, FudgeSegment)>,
}

fn fit_segment(pts: &[(f64, f64)]) -> FudgeSegment {
    let (mut num, mut den) = (0.0, 0.0);
    for &(e, y) in pts {
        let x = (1.0 - e).sqrt();
        num += x * y;
        den += x * x;
    }
    let f = num / den;
    let ssr = pts
        .iter()
        .map(|&(e, y)| (y - f * (1.0 - e).sqrt()).powi(2))
        .sum();
    FudgeSegment {
        e_lo: pts.first().map_or(0.0, |p| p.0),
        e_hi: pts.last().map_or(0.0, |p| p.0),
        f,
        ssr,
    }
}

/// Least-squares `f` in `mean|λ₁| ≈ f √(1 − e_P)`, plus the best split fit.
pub fn fudge_fit(samples: &[(f64, f64)]) -> Result<FudgeFit> {
    let mut pts: Vec<(f64, f64)> = samples.iter().copied().filter(|p| p.0 < 1.0).collect();
    if pts.is_empty() {
        return invalid("fudge fit undefined: every sample has e_P = 1");
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let distinct = pts.windows(2).filter(|w| w[1].0 > w[0].0).count() + 1;
    if distinct < 2 {
        return invalid("fudge fit needs at least two distinct e_P values below 1");
    }
    let single = fit_segment(&pts);
    let mut best: Option<(FudgeSegment, FudgeSegment)> = None;
    for cut in 1..pts.len() {
        if pts[cut].0 == pts[cut - 1].0 {
            continue;
        }
        let a = fit_segment(&pts[..cut]);
        let b = fit_segment(&pts[cut..]);
        let better = best
            .as_ref()
            .is_none_or(|(x, y)| a.ssr + b.ssr < x.ssr + y.ssr);
        if better {
            best = Some((a, b));
        }
    }
    Ok(FudgeFit { single, split: best })
}

impl ChannelMatrix {
    pub fn view(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{cartan_du, permutation_gate, CartanParams};
    use crate::rng::seeded;

    #[test]
    fn swap_channel_is_identity() {
        for q in [2, 3] {
            let m = m_channel(&TwoQuditGate::swap(q), Direction::Plus);
            assert!(linalg::max_abs_diff(m.view(), linalg::identity(q * q).as_ref()) < 1e-15);
            let s = spectrum_report(&m, CLASS_TOL).unwrap();
            assert_eq!(s.class, ErgodicClass::Noninteracting);
            assert_eq!(s.eigenvalues.len(), q * q - 1);
        }
    }

    #[test]
    fn two_unitary_is_bernoulli() {
        let (p, _) = permutation_gate(&gates::ols_q3()).unwrap();
        let s = spectrum_report(&m_channel(&p, Direction::Plus), CLASS_TOL).unwrap();
        assert_eq!(s.class, ErgodicClass::Bernoulli);
        assert!(s.eigenvalues.iter().all(|z| z.norm() <= 1e-12));
        assert!(s.mu1.is_infinite() || s.mu1 > 20.0);
    }

    #[test]
    fn rearrangement_formula_matches_direct_superoperator() {
        let mut rng = seeded(21);
        for _ in 0..5 {
            let p = CartanParams { j3: 0.37, phi: 0.0, locals: Some(LocalDressing::haar(2, &mut rng)) };
            let u = cartan_du(&p).unwrap();
            let a = m_channel(&u, Direction::Plus);
            let b = m_plus_direct(&u);
            assert!(linalg::max_abs_diff(a.view(), b.as_ref()) < 1e-12);
        }
    }

    #[test]
    fn classification_ladder() {
        let z = |r: f64, i: f64| c64::new(r, i);
        assert_eq!(classify(&[ONE, ONE], 1e-8), ErgodicClass::Noninteracting);
        assert_eq!(classify(&[ONE, z(0.5, 0.0)], 1e-8), ErgodicClass::Nonergodic);
        assert_eq!(classify(&[z(0.0, 1.0), z(0.5, 0.0)], 1e-8), ErgodicClass::ErgodicNonmixing);
        assert_eq!(classify(&[z(0.5, 0.1), z(0.0, 0.0)], 1e-8), ErgodicClass::ErgodicMixing);
        assert_eq!(classify(&[z(1e-9, 0.0), ZERO], 1e-8), ErgodicClass::Bernoulli);
    }

    #[test]
    fn thresholds() {
        assert!((mixing_threshold(2) - 2.0 / 3.0).abs() < 1e-15);
        assert!((mixing_threshold(3) - 7.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn norm_identity_and_trivial_mode_hold_per_member() {
        let u = cartan_du(&CartanParams::bare(0.25)).unwrap();
        let stats = ensemble_lambda_stats(&u, 200, 5, 1).unwrap();
        assert!(stats.max_norm_defect < 1e-10);
        for m in &stats.members {
            assert!((m.trivial[0] - 1.0).abs() < 1e-12 && m.trivial[1].abs() < 1e-12);
            assert!(m.abs_lambda1 <= 1.0 + 1e-8);
        }
        assert!(ensemble_lambda_stats(&TwoQuditGate::identity(2), 3, 5, 1).is_err());
    }

    #[test]
    fn dressing_moves_the_spectrum() {
        let u = cartan_du(&CartanParams::bare(0.3)).unwrap();
        let stats = ensemble_lambda_stats(&u, 20, 9, 1).unwrap();
        assert!(stats.range_abs_lambda1 > 1e-3);
    }

    #[test]
    fn swap_dressings_stay_on_the_unit_circle() {
        let stats = ensemble_lambda_stats(&TwoQuditGate::swap(2), 100, 3, 1).unwrap();
        for m in &stats.members {
            assert!((m.abs_lambda1 - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn fudge_recovers_noiseless_factor() {
        let pts: Vec<_> = [0.0, 0.2, 0.4, 0.6].iter().map(|&e| (e, 0.83 * (1.0f64 - e).sqrt())).collect();
        let fit = fudge_fit(&pts).unwrap();
        assert!((fit.single.f - 0.83).abs() < 1e-12);
        assert!(fit.single.ssr < 1e-24);
        assert!(fudge_fit(&[(1.0, 0.0), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn split_fit_never_worse_than_single() {
        let pts = [(0.1, 0.9), (0.3, 0.8), (0.5, 0.5), (0.7, 0.3), (0.9, 0.25)];
        let fit = fudge_fit(&pts).unwrap();
        let (a, b) = fit.split.unwrap();
        assert!(a.ssr + b.ssr <= fit.single.ssr + 1e-15);
    }
}
