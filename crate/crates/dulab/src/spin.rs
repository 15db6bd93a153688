//! Ising chains in longitudinal and transverse fields and the multipartite
//! entangling power of their propagators.
//!
//! `H = −Σ_{i<L} Z_i Z_{i+1} − Σ_i (h Z_i + g_i X_i)`, open boundary.

use faer::{c64, Mat, MatRef};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, CMat, ZERO};
use crate::multipartite;
use crate::par;
use crate::rng;

pub const MAX_SITES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IsingClass {
    Integrable,
    Chaotic,
    Anderson,
    Mbl,
}

impl IsingClass {
    pub const ALL: [IsingClass; 4] = [Self::Integrable, Self::Chaotic, Self::Anderson, Self::Mbl];

    pub fn label(self) -> &'static str {
        match self {
            Self::Integrable => "integrable",
            Self::Chaotic => "chaotic",
            Self::Anderson => "anderson",
            Self::Mbl => "mbl",
        }
    }

    pub fn disordered(self) -> bool {
        matches!(self, Self::Anderson | Self::Mbl)
    }
}

impl std::str::FromStr for IsingClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.label() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Invalid(format!("unknown Ising class '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsingSpec {
    pub l: usize,
    pub h: f64,
    pub g: Vec<f64>,
    pub class: Option<IsingClass>,
    /// Disorder seed and realization index the fields were drawn from.
    pub seed: u64,
    pub realization: usize,
}

/// Half-width of the uniform transverse-field disorder.
pub const DISORDER_WIDTH: f64 = 10.0;

impl IsingSpec {
    pub fn custom(h: f64, g: Vec<f64>) -> Result<Self> {
        let l = g.len();
        if !(2..=MAX_SITES).contains(&l) {
            return Err(Error::Guard(format!("Ising chain needs 2 <= L <= {MAX_SITES}, got {l}")));
        }
        if !h.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return invalid("Ising fields must be finite");
        }
        Ok(Self { l, h, g, class: None, seed: 0, realization: 0 })
    }

    /// Class preset; disordered classes draw `g_i ~ U[−10, 10]` from `(seed, realization)`.
    pub fn preset(class: IsingClass, l: usize, seed: u64, realization: usize) -> Result<Self> {
        let (h, g) = match class {
            IsingClass::Integrable => (0.0, vec![1.0; l]),
            IsingClass::Chaotic => (0.5, vec![1.05; l]),
            IsingClass::Anderson | IsingClass::Mbl => {
                let mut r = rng::substream(seed, realization as u64, class as u64 + 1);
                let g = (0..l).map(|_| r.random_range(-DISORDER_WIDTH..=DISORDER_WIDTH)).collect();
                (if class == IsingClass::Mbl { 0.5 } else { 0.0 }, g)
            }
        };
        let mut s = Self::custom(h, g)?;
        s.class = Some(class);
        s.seed = seed;
        s.realization = realization;
        Ok(s)
    }
}

/// Dense `2^L × 2^L` Hamiltonian; site 0 is the most significant bit.
pub fn ising_hamiltonian(spec: &IsingSpec) -> Result<CMat> {
    let l = spec.l;
    if !(2..=MAX_SITES).contains(&l) || spec.g.len() != l {
        return Err(Error::Guard(format!("Ising chain needs 2 <= L <= {MAX_SITES} and L fields")));
    }
    let d = 1usize << l;
    let bit = |idx: usize, site: usize| (idx >> (l - 1 - site)) & 1;
    let z = |idx: usize, site: usize| if bit(idx, site) == 0 { 1.0 } else { -1.0 };
    let mut h = Mat::<c64>::zeros(d, d);
    for idx in 0..d {
        let mut diag = 0.0;
        for i in 0..l - 1 {
            diag -= z(idx, i) * z(idx, i + 1);
        }
        for i in 0..l {
            diag -= spec.h * z(idx, i);
            let flipped = idx ^ (1 << (l - 1 - i));
            h[(flipped, idx)] -= c64::new(spec.g[i], 0.0);
        }
        h[(idx, idx)] += c64::new(diag, 0.0);
    }
    Ok(h)
}

/// `exp(−iHt)` through the Hermitian eigendecomposition.
pub fn propagator(h: MatRef<'_, c64>, t: f64) -> Result<CMat> {
    linalg::hermitian_function(h, |e| c64::new((e * t).cos(), -(e * t).sin()))
}

/// Reusable eigendecomposition for many times.
pub struct Propagator {
    vecs: CMat,
    energies: Vec<f64>,
}

impl Propagator {
    pub fn new(h: MatRef<'_, c64>) -> Result<Self> {
        let evd = h
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Numerical(format!("hermitian eigensolver: {e:?}")))?;
        let energies = (0..h.nrows()).map(|k| evd.S().column_vector()[k].re).collect();
        Ok(Self { vecs: evd.U().to_owned(), energies })
    }

    pub fn at(&self, t: f64) -> CMat {
        let n = self.energies.len();
        let scaled = Mat::from_fn(n, n, |i, k| {
            let ph = self.energies[k] * t;
            self.vecs[(i, k)] * c64::new(ph.cos(), -ph.sin())
        });
        &scaled * self.vecs.adjoint()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
}

/// `{0, dt, 2dt, …}` up to and including `t_max` (within rounding).
pub fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_max >= 0.0) {
        return invalid("time grid needs dt > 0 and t_max >= 0");
    }
    let n = (t_max / dt + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * dt).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpPoint {
    pub t: f64,
    pub e_p: f64,
}

/// `e_P^{Q_r}(exp(−iHt))` along a time grid for one spec.
pub fn ising_ep_profile(spec: &IsingSpec, r: usize, times: &[f64]) -> Result<Vec<EpPoint>> {
    let d = 1usize << spec.l;
    if d * d > multipartite::MAX_TWO_COPY_DIM {
        return Err(Error::Guard(format!(
            "two-copy space for L = {} exceeds {}",
            spec.l,
            multipartite::MAX_TWO_COPY_DIM
        )));
    }
    let h = ising_hamiltonian(spec)?;
    let p = Propagator::new(h.as_ref())?;
    times
        .iter()
        .map(|&t| {
            let u = p.at(t);
            Ok(EpPoint { t, e_p: multipartite::multipartite_ep(u.as_ref(), 2, spec.l, r)? })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassProfile {
    pub class: IsingClass,
    pub times: Vec<f64>,
    /// One curve per realization (a single one for clean classes).
    pub realizations: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Realization-averaged profile; clean classes use a single realization.
pub fn class_profile(
    class: IsingClass,
    l: usize,
    r: usize,
    times: &[f64],
    realizations: usize,
    seed: u64,
    workers: usize,
) -> Result<ClassProfile> {
    let n = if class.disordered() { realizations.max(1) } else { 1 };
    let curves = par::try_map_indexed(n, workers, |k| {
        let spec = IsingSpec::preset(class, l, seed, k)?;
        Ok::<_, Error>(ising_ep_profile(&spec, r, times)?.into_iter().map(|p| p.e_p).collect::<Vec<f64>>())
    })?;
    let mut mean = Vec::with_capacity(times.len());
    let mut std = Vec::with_capacity(times.len());
    for ti in 0..times.len() {
        let col: Vec<f64> = curves.iter().map(|c| c[ti]).collect();
        let s = crate::stats::summary(&col);
        mean.push(s.mean);
        std.push(s.std);
    }
    Ok(ClassProfile { class, times: times.to_vec(), realizations: curves, mean, std })
}

/// `⟨ψ|H|ψ⟩` for a dense vector.
pub fn energy(h: MatRef<'_, c64>, psi: &[c64]) -> f64 {
    let mut acc = ZERO;
    for i in 0..psi.len() {
        let mut row = ZERO;
        for j in 0..psi.len() {
            row += h[(i, j)] * psi[j];
        }
        acc += psi[i].conj() * row;
    }
    acc.re
}
