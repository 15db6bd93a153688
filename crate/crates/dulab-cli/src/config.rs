//! JSON run configuration. One document fully determines a run together with
//! its base seed; the worker count never changes any output.

use std::path::{Path, PathBuf};

use dulab::c64;
use dulab::circuit::{self, KernelSource, PairKernel};
use dulab::gates::{self, CartanParams, GateJson, PermutationSpec, TwoQuditGate};
use dulab::multipartite;
use dulab::rng::{self, Rng};
use dulab::spin::{self, IsingClass};
use serde::{Deserialize, Serialize};

use crate::error::{validation, CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    MixingScan,
    VelocityVsMixing,
    EntropyProfile,
    Bounds,
    MultipartiteProfile,
    CircuitPowers,
    Ising,
}

impl Experiment {
    pub fn label(self) -> &'static str {
        match self {
            Self::MixingScan => "mixing-scan",
            Self::VelocityVsMixing => "velocity-vs-mixing",
            Self::EntropyProfile => "entropy-profile",
            Self::Bounds => "bounds",
            Self::MultipartiteProfile => "multipartite-profile",
            Self::CircuitPowers => "circuit-powers",
            Self::Ising => "ising",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GateFamily {
    /// Qubit Cartan dual-unitary with `J₃ ∈ [0, π/4]`.
    Cartan {
        j3: f64,
        #[serde(default)]
        phi: f64,
    },
    /// Dual-unitary from the M_R map, seeded independently of the run seed.
    Mr {
        seed: u64,
        #[serde(default = "default_mr_iterations")]
        iterations: usize,
    },
    Permutation { k: Vec<Vec<usize>>, l: Vec<Vec<usize>> },
    /// `GateJson` document; relative paths resolve against the config file.
    File { path: PathBuf },
    Swap,
}

fn default_mr_iterations() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    Source(KernelSource),
    File { file: PathBuf },
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::Source(KernelSource::Diag)
    }
}

/// Kernel file: `q` and the `q²` entries of `m` as `[re, im]`, row-major.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelJson {
    q: usize,
    rows: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsingSettings {
    #[serde(default = "all_classes")]
    pub classes: Vec<IsingClass>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// Start of the late-time window in the summary; defaults to `0.75 t_final`.
    #[serde(default)]
    pub late_from: Option<f64>,
}

impl Default for IsingSettings {
    fn default() -> Self {
        Self {
            classes: all_classes(),
            dt: default_dt(),
            t_final: default_t_final(),
            realizations: default_realizations(),
            late_from: None,
        }
    }
}

fn all_classes() -> Vec<IsingClass> {
    IsingClass::ALL.to_vec()
}
fn default_dt() -> f64 {
    0.25
}
fn default_t_final() -> f64 {
    10.0
}
fn default_realizations() -> usize {
    10
}
fn default_one() -> usize {
    1
}
fn default_alpha() -> Vec<f64> {
    vec![2.0]
}
fn default_budget() -> usize {
    2048
}
fn default_velocity_t() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_x_max() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Output basename; defaults to the experiment label.
    #[serde(default)]
    pub name: Option<String>,
    pub q: usize,
    #[serde(default)]
    pub l: Option<usize>,
    #[serde(default)]
    pub gates: Vec<GateFamily>,
    /// Members per gate.
    #[serde(default = "default_one")]
    pub ensemble: usize,
    /// Dress each member with Haar single-site unitaries drawn from `(seed, member)`.
    #[serde(default = "default_true")]
    pub dress: bool,
    #[serde(default)]
    pub kernel: KernelSpec,
    /// One kernel shared by every member instead of one per member.
    #[serde(default)]
    pub kernel_fixed: bool,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub t_max: usize,
    #[serde(default)]
    pub r: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Execution only; excluded from the metadata echo.
    #[serde(default = "default_one", skip_serializing)]
    pub workers: usize,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_budget")]
    pub memory_budget_mb: usize,
    /// Oracle samples (bounds) or defining-average samples (circuit-powers).
    #[serde(default)]
    pub samples: usize,
    #[serde(default = "default_velocity_t")]
    pub velocity_t: usize,
    /// First step at which state measures are recorded.
    #[serde(default)]
    pub measure_from: usize,
    #[serde(default = "default_one")]
    pub measure_every: usize,
    /// Start of the window averaged into summaries and Table 1.
    #[serde(default)]
    pub saturation_from: Option<usize>,
    #[serde(default = "default_true")]
    pub symmetry_reduction: bool,
    #[serde(default = "default_x_max")]
    pub x_max: usize,
    #[serde(default)]
    pub ising: IsingSettings,
    /// Directory of the config file, for resolving relative gate/kernel paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

pub const KERNEL_LABEL: u64 = 0x6b65726e;

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path, ov: &Overrides) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.apply(ov);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(s) = ov.seed {
            self.seed = s;
        }
        if let Some(w) = ov.workers {
            self.workers = w;
        }
        if let Some(o) = &ov.out {
            self.out = Some(o.clone());
        }
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.experiment.label().to_string())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn saturation_start(&self) -> usize {
        self.saturation_from.unwrap_or(self.measure_from)
    }

    pub fn sites(&self) -> CliResult<usize> {
        match (self.l, self.experiment) {
            (Some(l), _) => Ok(l),
            (None, Experiment::Ising) => Ok(6),
            (None, e) => validation("l", format!("required for {}", e.label())),
        }
    }

    /// Subset size for `e_P^{Q_r}`; defaults to `L/2`.
    pub fn subset_size(&self) -> CliResult<usize> {
        let l = self.sites()?;
        Ok(self.r.unwrap_or(l / 2))
    }

    pub fn validate(&self) -> CliResult<()> {
        use Experiment::*;
        if let Some(n) = &self.name {
            if n.is_empty() || n.contains(['/', '\\']) {
                return validation("name", "must be a non-empty file stem without separators");
            }
        }
        if self.q < 2 {
            return validation("q", format!("must be >= 2, got {}", self.q));
        }
        if self.workers == 0 {
            return validation("workers", "must be >= 1");
        }
        if self.ensemble == 0 {
            return validation("ensemble", "must be >= 1");
        }
        if self.memory_budget_mb == 0 {
            return validation("memory_budget_mb", "must be >= 1");
        }
        if self.measure_every == 0 {
            return validation("measure_every", "must be >= 1");
        }
        for (i, a) in self.alpha.iter().enumerate() {
            if !(a.is_finite() && *a > 0.0) {
                return validation(&format!("alpha[{i}]"), format!("must be finite and > 0, got {a}"));
            }
        }
        if self.experiment != Ising && self.gates.is_empty() {
            return validation("gates", format!("{} needs at least one gate", self.experiment.label()));
        }
        for (i, g) in self.gates.iter().enumerate() {
            let field = format!("gates[{i}]");
            match g {
                GateFamily::Cartan { j3, phi } => {
                    if self.q != 2 {
                        return validation(&field, format!("cartan family is qubit only, q = {}", self.q));
                    }
                    if !(0.0..=std::f64::consts::FRAC_PI_4 + 1e-15).contains(j3) {
                        return validation(&format!("{field}.j3"), format!("must lie in [0, pi/4], got {j3}"));
                    }
                    if !phi.is_finite() {
                        return validation(&format!("{field}.phi"), "must be finite");
                    }
                }
                GateFamily::Mr { iterations, .. } => {
                    if *iterations == 0 {
                        return validation(&format!("{field}.iterations"), "must be >= 1");
                    }
                }
                GateFamily::Permutation { k, .. } => {
                    if k.len() != self.q {
                        return validation(&format!("{field}.k"), format!("must have q = {} rows", self.q));
                    }
                }
                GateFamily::File { .. } | GateFamily::Swap => {}
            }
        }
        if let KernelSpec::File { file } = &self.kernel {
            if file.as_os_str().is_empty() {
                return validation("kernel.file", "empty path");
            }
        }
        match self.experiment {
            MixingScan => {}
            VelocityVsMixing => {
                if self.velocity_t == 0 {
                    return validation("velocity_t", "must be >= 1");
                }
            }
            EntropyProfile => {
                if let Some(l) = self.l {
                    if l < 4 || l % 4 != 0 {
                        return validation("l", format!("half-cut profile needs L divisible by 4, got {l}"));
                    }
                }
            }
            Bounds => {
                if self.samples < dulab::bounds::MIN_MC_SAMPLES {
                    return validation(
                        "samples",
                        format!("bounds need at least {} oracle samples, got {}", dulab::bounds::MIN_MC_SAMPLES, self.samples),
                    );
                }
                if !(1..=4).contains(&self.x_max) {
                    return validation("x_max", format!("must lie in 1..=4, got {}", self.x_max));
                }
            }
            MultipartiteProfile | CircuitPowers => {
                let l = self.sites()?;
                if l < 2 || l % 2 != 0 || l > 40 {
                    return validation("l", format!("must be even in 2..=40, got {l}"));
                }
                if let Some(r) = self.r {
                    if r == 0 || 2 * r > l {
                        return validation("r", format!("must lie in 1..=L/2, got {r}"));
                    }
                }
            }
            Ising => {
                if self.q != 2 {
                    return validation("q", "ising chains are qubit chains, q must be 2");
                }
                if !self.gates.is_empty() {
                    return validation("gates", "ising takes no gates");
                }
                let l = self.sites()?;
                if !(2..=spin::MAX_SITES).contains(&l) {
                    return validation("l", format!("must lie in 2..={}, got {l}", spin::MAX_SITES));
                }
                let r = self.subset_size()?;
                if r == 0 || 2 * r > l {
                    return validation("r", format!("must lie in 1..=L/2, got {r}"));
                }
                let s = &self.ising;
                if s.classes.is_empty() {
                    return validation("ising.classes", "at least one class");
                }
                if !(s.dt.is_finite() && s.dt > 0.0) {
                    return validation("ising.dt", format!("must be > 0, got {}", s.dt));
                }
                if !(s.t_final.is_finite() && s.t_final >= 0.0) {
                    return validation("ising.t_final", format!("must be >= 0, got {}", s.t_final));
                }
                if s.realizations == 0 {
                    return validation("ising.realizations", "must be >= 1");
                }
            }
        }
        self.memory_guard()
    }

    /// Peak bytes per concurrent member, checked before anything is allocated.
    pub fn memory_guard(&self) -> CliResult<()> {
        use Experiment::*;
        let q = self.q as f64;
        let cplx = 16.0;
        let mut need: Vec<(String, f64)> = Vec::new();
        match self.experiment {
            MixingScan => need.push(("q^4 channel".into(), q.powi(8) * cplx * 4.0)),
            VelocityVsMixing => {
                let k = circuit::kappa(0, self.velocity_t);
                need.push((format!("C_{k} (q^{})", 2 * k), q.powi(2 * k as i32) * cplx * 3.0));
            }
            EntropyProfile => match self.l {
                Some(l) => {
                    need.push((format!("state q^{l}"), q.powi(l as i32) * cplx * 3.0));
                    let k = circuit::kappa(l / 4, circuit::t_star(l).saturating_sub(1)).min(l / 2);
                    need.push((format!("C_{k} (q^{})", 2 * k), q.powi(2 * k as i32) * cplx * 3.0));
                }
                None => {
                    let k = circuit::kappa(0, self.t_max);
                    need.push((format!("C_{k} (q^{})", 2 * k), q.powi(2 * k as i32) * cplx * 3.0));
                }
            },
            Bounds => {
                let x = self.x_max as i32;
                need.push((format!("C_{x} (q^{})", 2 * x), q.powi(2 * x) * cplx * 3.0));
            }
            MultipartiteProfile | CircuitPowers => {
                let l = self.sites()? as i32;
                need.push((format!("state q^{l}"), q.powi(l) * cplx * 3.0));
                if self.experiment == CircuitPowers || self.r.is_some() {
                    let d = q.powi(l);
                    need.push((format!("circuit operator q^{l} x q^{l}"), d * d * cplx * 3.0));
                    let two = q.powi(2 * l);
                    if self.experiment == CircuitPowers && two > multipartite::MAX_TWO_COPY_DIM as f64 {
                        return Err(CliError::Guard(format!(
                            "two-copy dimension q^(2L) = {two} exceeds {} for L = {l}",
                            multipartite::MAX_TWO_COPY_DIM
                        )));
                    }
                }
            }
            Ising => {
                let d = 2f64.powi(self.sites()? as i32);
                need.push(("two-copy space 2^(2L)".into(), d * d * cplx * 3.0));
            }
        }
        let budget = self.memory_budget_mb as f64 * 1024.0 * 1024.0;
        let concurrent = self.workers.min(self.members_per_task()) as f64;
        for (what, bytes) in need {
            if bytes * concurrent > budget {
                return Err(CliError::Guard(format!(
                    "{what} needs about {:.0} MiB for {concurrent} concurrent members, budget {} MiB",
                    bytes * concurrent / 1048576.0,
                    self.memory_budget_mb
                )));
            }
        }
        Ok(())
    }

    fn members_per_task(&self) -> usize {
        match self.experiment {
            Experiment::Ising => self.ising.realizations.max(1) * self.ising.classes.len(),
            _ => self.ensemble,
        }
        .max(1)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Base (undressed) gate of entry `i`.
    pub fn build_gate(&self, i: usize) -> CliResult<TwoQuditGate> {
        let field = format!("gates[{i}]");
        let tag = |e: dulab::Error| -> CliError {
            match CliError::from(e) {
                CliError::Validation(m) => CliError::Validation(format!("{field}: {m}")),
                other => other,
            }
        };
        let g = match &self.gates[i] {
            GateFamily::Cartan { j3, phi } => {
                gates::cartan_du(&CartanParams { j3: *j3, phi: *phi, locals: None }).map_err(tag)?
            }
            GateFamily::Mr { seed, iterations } => {
                gates::mr_dual_unitary(self.q, &mut rng::seeded(*seed), *iterations).map_err(tag)?
            }
            GateFamily::Permutation { k, l } => {
                let spec = PermutationSpec { k: k.clone(), l: l.clone() };
                gates::permutation_gate(&spec).map_err(tag)?.0
            }
            GateFamily::File { path } => {
                let p = self.resolve(path);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| CliError::Io(format!("{field}.path {}: {e}", p.display())))?;
                let gj: GateJson = serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("{field}.path: {e}")))?;
                TwoQuditGate::from_json(&gj).map_err(tag)?
            }
            GateFamily::Swap => TwoQuditGate::swap(self.q),
        };
        if g.q() != self.q {
            return validation(&field, format!("gate has q = {}, config has q = {}", g.q(), self.q));
        }
        Ok(g)
    }

    pub fn build_gates(&self) -> CliResult<Vec<TwoQuditGate>> {
        (0..self.gates.len()).map(|i| self.build_gate(i)).collect()
    }

    /// Kernel of member `i`.
    pub fn build_kernel(&self, member: usize) -> CliResult<PairKernel> {
        let idx = if self.kernel_fixed { 0 } else { member as u64 };
        match &self.kernel {
            KernelSpec::Source(s) => {
                let mut r = rng::substream(self.seed, idx, KERNEL_LABEL);
                Ok(PairKernel::from_source(*s, self.q, &mut r))
            }
            KernelSpec::File { file } => {
                let p = self.resolve(file);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| CliError::Io(format!("kernel.file {}: {e}", p.display())))?;
                let kj: KernelJson = serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("kernel.file: {e}")))?;
                if kj.q != self.q || kj.rows.len() != self.q * self.q {
                    return validation("kernel.file", format!("expected q = {} with {} entries", self.q, self.q * self.q));
                }
                let q = self.q;
                let m = dulab::linalg::CMat::from_fn(q, q, |i, j| {
                    let [re, im] = kj.rows[i * q + j];
                    c64::new(re, im)
                });
                PairKernel::normalized(m).map_err(|e| match CliError::from(e) {
                    CliError::Validation(m) => CliError::Validation(format!("kernel.file: {m}")),
                    other => other,
                })
            }
        }
    }

    /// Member `i` of a gate ensemble: Haar dressing from `rng::member(seed, i)`,
    /// shared across gates so different `e_P` values see common dressings.
    pub fn member_gate(&self, base: &TwoQuditGate, member: usize) -> CliResult<TwoQuditGate> {
        if !self.dress {
            return Ok(base.clone());
        }
        let mut r: Rng = rng::member(self.seed, member as u64);
        Ok(gates::dress_local(base, &gates::LocalDressing::haar(self.q, &mut r))?)
    }
}
