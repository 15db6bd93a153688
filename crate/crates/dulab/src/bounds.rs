//! Ensemble-averaged purities `P_x = 𝔼 tr((C′_x C′_x†)²)` over Haar-dressed
//! gates, the Jensen bounds they imply, and a sampling oracle.
//!
//! Two coefficient variants circulate for `P₂`/`P₃`. [`Variant::Appendix`]
//! is the step-by-step derivation (`K₂ = 1`, leading `c/q³`);
//! [`Variant::MainText`] is the summary display (`K₂ = 2`, leading `1/q³`).
//! [`select_variant`] decides between them from oracle runs.

use serde::Serialize;

use crate::circuit::{c_matrix, PairKernel};
use crate::error::{invalid, Result};
use crate::gates::{self, LocalDressing, TwoQuditGate};
use crate::par;
use crate::rng;
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    Appendix,
    MainText,
}

impl Variant {
    pub fn k2(self) -> f64 {
        match self {
            Self::Appendix => 1.0,
            Self::MainText => 2.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::Appendix => "appendix-k2=1",
            Self::MainText => "main-k2=2",
        }
    }

    pub const ALL: [Variant; 2] = [Variant::Appendix, Variant::MainText];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundInputs {
    pub q: usize,
    /// Normalized entangling power of the base gate.
    pub e_p: f64,
    /// `tr((mm†)²)/q` of the pair kernel.
    pub c: f64,
}

impl BoundInputs {
    pub fn new(q: usize, e_p: f64, c: f64) -> Result<Self> {
        if q < 2 {
            return invalid(format!("q must be >= 2, got {q}"));
        }
        let tol = 1e-9;
        if !(-tol..=1.0 + tol).contains(&e_p) {
            return invalid(format!("e_P must lie in [0, 1], got {e_p}"));
        }
        if !(1.0 - tol..=q as f64 + tol).contains(&c) {
            return invalid(format!("c must lie in [1, q], got {c}"));
        }
        Ok(Self { q, e_p: e_p.clamp(0.0, 1.0), c: c.clamp(1.0, q as f64) })
    }

    pub fn from_kernel(gate: &TwoQuditGate, k: &PairKernel) -> Result<Self> {
        Self::new(gate.q(), gate.entangling_power(), k.c())
    }

    /// `χ = (c − 1)/√(q² − 1)`.
    pub fn chi(&self) -> f64 {
        (self.c - 1.0) / self.q2m1().sqrt()
    }

    /// `η = (1 − e_P)² + e_P²/(q² − 1)`.
    pub fn eta(&self) -> f64 {
        eta(self.q, self.e_p)
    }

    fn q2m1(&self) -> f64 {
        let q = self.q as f64;
        q * q - 1.0
    }
}

pub fn eta(q: usize, e_p: f64) -> f64 {
    let q2m1 = (q * q - 1) as f64;
    (1.0 - e_p).powi(2) + e_p * e_p / q2m1
}

/// Largest admissible `χ`, reached by a rank-one kernel.
pub fn chi_max(q: usize) -> f64 {
    let q = q as f64;
    ((q - 1.0) / (q + 1.0)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Accuracy {
    Exact,
    /// Upper estimate through Cauchy–Schwarz.
    Estimate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PValue {
    pub x: usize,
    pub value: f64,
    pub accuracy: Accuracy,
    /// The raw expression exceeded 1 and was capped (purities never exceed 1).
    pub capped: bool,
}

/// `P_x` for `x ∈ 1..=4`.
pub fn analytic_p(x: usize, b: &BoundInputs, variant: Variant) -> Result<PValue> {
    let q = b.q as f64;
    let (c, e) = (b.c, b.e_p);
    let chi = b.chi();
    let s = b.q2m1().sqrt();
    let a = 1.0 - e - 1.0 / (q * q);
    let cs = (q + c) / (q + 1.0);
    let eta = b.eta();
    let tail3 = cs * (eta.powi(3) * (q * q - 1.0) / (q * q)).sqrt();
    let p2 = 1.0 / (q * q) + 2.0 * chi * s / (q * q) + chi * chi * variant.k2() * a;
    let (raw, accuracy) = match x {
        1 => (c / q, Accuracy::Exact),
        2 => (p2, Accuracy::Exact),
        3 => {
            let v = match variant {
                Variant::Appendix => {
                    c / q.powi(3) + 2.0 * chi / q * (s / q + chi * a) + chi * chi * tail3
                }
                Variant::MainText => {
                    1.0 / q.powi(3)
                        + 2.0 * chi * s / q.powi(3)
                        + 2.0 * chi * chi / q.powi(3) * (q * q * (1.0 - e) - 1.0)
                        + chi * chi * tail3
                }
            };
            (v, Accuracy::Estimate)
        }
        4 => {
            // P₄ = P₂/q² + 2·P₄⁽¹⁾ + χ²·P₄⁽²⁾ with the χ/q prefactor kept inside P₄⁽¹⁾.
            let p40 = p2 / (q * q);
            let p41 = chi / q * (chi / q * (s / q + chi * a) + chi * tail3);
            let p42 = cs * cs * (eta.powi(5) * (q * q - 1.0) / (q * q)).sqrt();
            (p40 + 2.0 * p41 + chi * chi * p42, Accuracy::Estimate)
        }
        _ => return invalid(format!("P_x is only available for x in 1..=4, got {x}")),
    };
    let floor = q.powi(-(x as i32));
    Ok(PValue { x, value: raw.clamp(floor, 1.0), accuracy, capped: raw > 1.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundPoint {
    pub x: usize,
    pub p: f64,
    /// `p_x = q^x P_x`.
    pub p_scaled: f64,
    pub accuracy: Accuracy,
    pub capped: bool,
    /// Jensen: `S̄² ≥ −2 ln P_x = 2x ln q − 2 ln p_x`.
    pub s_bound: f64,
    /// `S̄²/(2x ln q) ≥ 1 − ln p_x/(x ln q)`.
    pub v_bound: f64,
    /// The displayed form `2x ln q − ln p_x`, kept for comparison.
    pub s_bound_displayed: f64,
    /// The displayed form `1 − ln p_x/(2x ln q)`.
    pub v_bound_displayed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCurve {
    pub inputs: BoundInputs,
    pub chi: f64,
    pub eta: f64,
    pub variant: Variant,
    pub points: Vec<BoundPoint>,
}

pub fn bound_curve(b: &BoundInputs, variant: Variant) -> BoundCurve {
    let lnq = (b.q as f64).ln();
    let points = (1..=4)
        .map(|x| {
            let pv = analytic_p(x, b, variant).expect("x in range");
            let p_scaled = pv.value * (b.q as f64).powi(x as i32);
            let lp = p_scaled.ln();
            let xl = x as f64 * lnq;
            BoundPoint {
                x,
                p: pv.value,
                p_scaled,
                accuracy: pv.accuracy,
                capped: pv.capped,
                s_bound: -2.0 * pv.value.ln(),
                v_bound: 1.0 - lp / xl,
                s_bound_displayed: 2.0 * xl - lp,
                v_bound_displayed: 1.0 - lp / (2.0 * xl),
            }
        })
        .collect();
    BoundCurve { inputs: *b, chi: b.chi(), eta: b.eta(), variant, points }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub x: usize,
    pub samples: usize,
    /// Mean and standard error of `tr((C′C′†)²)`.
    pub mean: f64,
    pub stderr: f64,
    /// Mean and standard error of `S² = −2 ln tr((C′C′†)²)`.
    pub mean_entropy: f64,
    pub entropy_stderr: f64,
}

pub const MIN_MC_SAMPLES: usize = 100;

/// Samples `tr((C′_x C′_x†)²)` over fresh Haar dressings of `gate`.
/// Sample `i` draws its dressing from `rng::member(seed, i)`.
pub fn mc_p_oracle(
    gate: &TwoQuditGate,
    k: &PairKernel,
    x: usize,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<McEstimate> {
    if samples < MIN_MC_SAMPLES {
        return invalid(format!("oracle needs at least {MIN_MC_SAMPLES} samples, got {samples}"));
    }
    if x == 0 {
        return invalid("oracle needs x >= 1");
    }
    let vals = par::try_map_indexed(samples, workers, |i| {
        let mut r = rng::member(seed, i as u64);
        let dressed = gates::dress_local(gate, &LocalDressing::haar(gate.q(), &mut r))?;
        c_matrix(&dressed, k, x)?.trace_power(2.0)
    })?;
    let s = stats::summary(&vals);
    let ent: Vec<f64> = vals.iter().map(|v| -2.0 * v.ln()).collect();
    let se = stats::summary(&ent);
    Ok(McEstimate {
        x,
        samples,
        mean: s.mean,
        stderr: s.stderr,
        mean_entropy: se.mean,
        entropy_stderr: se.stderr,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantCheck {
    pub inputs: BoundInputs,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    /// `(P₂ − mean)/stderr` for each variant, in [`Variant::ALL`] order.
    pub z: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantSelection {
    /// The unique variant within `z_max` standard errors at every point, if any.
    pub selected: Option<Variant>,
    pub z_max: f64,
    pub checks: Vec<VariantCheck>,
}

/// Compares oracle estimates of `P₂` against both variants.
pub fn select_variant(points: &[(BoundInputs, McEstimate)], z_max: f64) -> Result<VariantSelection> {
    let mut checks = Vec::with_capacity(points.len());
    for (b, mc) in points {
        if mc.x != 2 {
            return invalid(format!("variant selection uses x = 2 estimates, got x = {}", mc.x));
        }
        let mut z = [0.0; 2];
        for (slot, v) in z.iter_mut().zip(Variant::ALL) {
            let p = analytic_p(2, b, v)?.value;
            // A zero stderr only happens for dressing-independent points.
            let se = mc.stderr.max(1e-15);
            *slot = (p - mc.mean) / se;
        }
        checks.push(VariantCheck { inputs: *b, mc_mean: mc.mean, mc_stderr: mc.stderr, z });
    }
    let fits = |i: usize| !checks.is_empty() && checks.iter().all(|c| c.z[i].abs() <= z_max);
    let selected = match (fits(0), fits(1)) {
        (true, false) => Some(Variant::ALL[0]),
        (false, true) => Some(Variant::ALL[1]),
        _ => None,
    };
    Ok(VariantSelection { selected, z_max, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{cartan_du, CartanParams};
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn unitary_kernel_gives_flat_unit_velocity_bound() {
        for q in [2, 3, 5] {
            for e in [0.0, 0.3, 1.0] {
                let b = BoundInputs::new(q, e, 1.0).unwrap();
                for v in Variant::ALL {
                    let curve = bound_curve(&b, v);
                    for p in &curve.points {
                        assert!((p.p_scaled - 1.0).abs() < 1e-12, "q={q} e={e} x={}", p.x);
                        assert!((p.v_bound - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn product_kernel_at_zero_entangling_power_gives_vacuous_bound() {
        for q in [2, 3] {
            let b = BoundInputs::new(q, 0.0, q as f64).unwrap();
            let curve = bound_curve(&b, Variant::Appendix);
            assert!(curve.points.iter().skip(1).all(|p| p.v_bound <= 1e-12), "q={q}");
        }
        // Away from c = q the bound is positive but still below the unitary-kernel value.
        let b = BoundInputs::new(2, 0.0, 1.6).unwrap();
        assert!(bound_curve(&b, Variant::Appendix).points.iter().all(|p| p.v_bound < 1.0));
    }

    #[test]
    fn p2_variants_differ_only_in_chi_squared_term() {
        let b = BoundInputs::new(2, 0.5, 1.5).unwrap();
        let a = analytic_p(2, &b, Variant::Appendix).unwrap().value;
        let m = analytic_p(2, &b, Variant::MainText).unwrap().value;
        let chi2 = b.chi().powi(2);
        assert!(((m - a) - chi2 * (1.0 - 0.5 - 0.25)).abs() < 1e-14);
        assert!(analytic_p(5, &b, Variant::Appendix).is_err());
        assert!(analytic_p(0, &b, Variant::Appendix).is_err());
    }

    #[test]
    fn inputs_are_validated() {
        assert!(BoundInputs::new(2, 1.2, 1.0).is_err());
        assert!(BoundInputs::new(2, 0.5, 0.5).is_err());
        assert!(BoundInputs::new(2, 0.5, 2.5).is_err());
        assert!(BoundInputs::new(1, 0.5, 1.0).is_err());
        let b = BoundInputs::new(3, 0.0, 3.0).unwrap();
        assert!((b.chi() - chi_max(3)).abs() < 1e-15);
        assert_eq!(b.eta(), 1.0);
    }

    #[test]
    fn oracle_x1_is_dressing_independent() {
        let mut r = seeded(4);
        let g = cartan_du(&CartanParams::bare(0.3)).unwrap();
        let k = PairKernel::random(2, &mut r);
        let mc = mc_p_oracle(&g, &k, 1, 100, 9, 1).unwrap();
        assert!((mc.mean - k.c() / 2.0).abs() < 1e-12);
        assert!(mc.stderr < 1e-12);
        assert!(mc_p_oracle(&g, &k, 1, 99, 9, 1).is_err());
    }

    #[test]
    fn selection_rejects_non_x2_estimates() {
        let b = BoundInputs::new(2, 0.5, 1.5).unwrap();
        let mc = McEstimate { x: 3, samples: 100, mean: 0.3, stderr: 0.01, mean_entropy: 0.0, entropy_stderr: 0.0 };
        assert!(select_variant(&[(b, mc)], 3.0).is_err());
    }

    #[test]
    fn selection_picks_the_matching_variant() {
        let b = BoundInputs::new(2, 0.2, 1.8).unwrap();
        let p = analytic_p(2, &b, Variant::MainText).unwrap().value;
        let mc = McEstimate { x: 2, samples: 1000, mean: p + 1e-4, stderr: 1e-3, mean_entropy: 0.0, entropy_stderr: 0.0 };
        let sel = select_variant(&[(b, mc)], 3.0).unwrap();
        assert_eq!(sel.selected, Some(Variant::MainText));
    }

    proptest! {
        #[test]
        fn p_stays_between_purity_limits(q in 2usize..6, e in 0.0f64..=1.0, t in 0.0f64..=1.0, x in 1usize..=4) {
            let c = 1.0 + t * (q as f64 - 1.0);
            let b = BoundInputs::new(q, e, c).unwrap();
            for v in Variant::ALL {
                let p = analytic_p(x, &b, v).unwrap().value;
                prop_assert!(p >= (q as f64).powi(-(x as i32)) - 1e-15 && p <= 1.0);
                let pt = bound_curve(&b, v).points[x - 1];
                prop_assert!(pt.v_bound <= 1.0 + 1e-12);
                prop_assert!(pt.v_bound_displayed <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn eta_decreases_up_to_its_minimum(q in 2usize..8, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let top = 1.0 - 1.0 / (q * q) as f64;
            let (lo, hi) = (a.min(b) * top, a.max(b) * top);
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(eta(q, hi) < eta(q, lo));
            prop_assert!(eta(q, lo) <= 1.0 && eta(q, hi) > 0.0);
        }

        #[test]
        fn x2_bound_grows_with_entangling_power(q in 2usize..6, t in 0.05f64..=1.0, a in 0.0f64..1.0, d in 0.01f64..0.5) {
            let c = 1.0 + t * (q as f64 - 1.0);
            let lo = a * (1.0 - d);
            let hi = lo + d;
            let vlo = bound_curve(&BoundInputs::new(q, lo, c).unwrap(), Variant::Appendix).points[1].v_bound;
            let vhi = bound_curve(&BoundInputs::new(q, hi, c).unwrap(), Variant::Appendix).points[1].v_bound;
            prop_assert!(vhi > vlo);
        }
    }
}
