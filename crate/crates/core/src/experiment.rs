//! Experiment orchestration: configuration, Trotter-step policy, backends,
//! Trotter and depth studies, and mitigation over a time grid.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{apply_channel_local, channel_from_circuit, conjugate_local, qubit_populations, KrausChannel};
use crate::circuit::{
    assemble_trotter_circuit, build_dissipative_block_dynamic, build_dissipative_block_hw, build_dissipative_block_static,
    build_single_emitter_block, build_unitary_layer, route_linear, transpile_basis, two_qubit_depth, Circuit, LayoutPlan,
    Variant,
};
use crate::error::{arg, Error, Result};
use crate::linalg::{kron_all, ComplexMatrix, C64, ONE, ZERO};
use crate::mitigation::{
    bootstrap, cdr_fit, cliffordize, fold_random, zne_estimate, BootstrapEstimate, CdrConfig, CdrFit, CliffordBias, ZneConfig,
};
use crate::mps::run_mctebd;
use crate::params::{derived_rates, ChainParams};
use crate::reference::{build_chain_spec, integrate, DensityMatrix, SpecMode, MAX_DENSE_QUBITS};
use crate::shots::{branch_populations, counts_to_populations, counts_total, run_shots, shot_rng, Counts, NoiseModel};

/// Largest γ̃t covered by the automatic Trotter-step policy.
pub const AUTO_K_MAX_GAMMA_T: f64 = 1.8;
/// Population error budget behind the automatic policy.
pub const TROTTER_ERROR_BUDGET: f64 = 0.016;
/// Largest chain handled by the channel backend and the Trotter study.
pub const MAX_CHANNEL_EMITTERS: usize = 10;
/// Largest chain for which the Trotter study runs.
pub const MAX_STUDY_EMITTERS: usize = 6;

/// Trotter steps for `gamma_t`: 1 up to 0.69, 2 up to 1.26, 3 up to 1.8.
pub fn select_trotter_steps(gamma_t: f64) -> Result<usize> {
    if !(gamma_t >= 0.0) {
        return arg(format!("γ̃t must be non-negative, got {gamma_t}"));
    }
    match gamma_t {
        x if x <= 0.69 => Ok(1),
        x if x <= 1.26 => Ok(2),
        x if x <= AUTO_K_MAX_GAMMA_T => Ok(3),
        x => {
            Err(Error::Unsupported(format!("automatic Trotter steps cover γ̃t ≤ {AUTO_K_MAX_GAMMA_T}, got {x}; choose a fixed k")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KPolicy {
    Fixed(usize),
    Auto(AutoTag),
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::Auto(AutoTag::Auto)
    }
}

impl KPolicy {
    pub fn steps(self, gamma_t: f64) -> Result<usize> {
        match self {
            KPolicy::Fixed(0) => arg("k must be at least 1"),
            KPolicy::Fixed(k) => Ok(k),
            KPolicy::Auto(_) => select_trotter_steps(gamma_t),
        }
    }
}

impl FromStr for KPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(KPolicy::default());
        }
        s.parse().map(KPolicy::Fixed).map_err(|_| Error::Argument(format!("k must be 'auto' or a positive integer, got '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Exact,
    Channel,
    Shots,
    Mps,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Channel => "channel",
            Backend::Shots => "shots",
            Backend::Mps => "mps",
        }
    }

    /// Method tag of the rows this backend emits.
    pub fn method(self) -> &'static str {
        match self {
            Backend::Shots => "shots_raw",
            other => other.name(),
        }
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Backend::Exact, Backend::Channel, Backend::Shots, Backend::Mps]
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown backend '{s}'")))
    }
}

/// Single-qubit preparation of one emitter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prep {
    Zero,
    One,
    Plus,
}

/// Product initial state written as a string over `0`, `1` and `+`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct InitialState(pub Vec<Prep>);

impl TryFrom<String> for InitialState {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitialState> for String {
    fn from(s: InitialState) -> String {
        s.to_string()
    }
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let preps = s
            .chars()
            .map(|ch| match ch {
                '0' => Ok(Prep::Zero),
                '1' => Ok(Prep::One),
                '+' => Ok(Prep::Plus),
                other => Err(Error::Argument(format!("initial state character '{other}' is not 0, 1 or +"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if preps.is_empty() {
            return arg("initial state is empty");
        }
        Ok(InitialState(preps))
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            f.write_str(match p {
                Prep::Zero => "0",
                Prep::One => "1",
                Prep::Plus => "+",
            })?;
        }
        Ok(())
    }
}

impl InitialState {
    pub fn from_bits(bits: &[u8]) -> Self {
        InitialState(bits.iter().map(|&b| if b == 1 { Prep::One } else { Prep::Zero }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Computational-basis bits, if the state has no `+` entries.
    pub fn bits(&self) -> Option<Vec<u8>> {
        self.0
            .iter()
            .map(|p| match p {
                Prep::Zero => Some(0),
                Prep::One => Some(1),
                Prep::Plus => None,
            })
            .collect()
    }

    pub fn density(&self) -> Result<DensityMatrix> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let kets: Vec<ComplexMatrix> = self
            .0
            .iter()
            .map(|p| {
                let v = match p {
                    Prep::Zero => [ONE, ZERO],
                    Prep::One => [ZERO, ONE],
                    Prep::Plus => [C64::new(h, 0.0), C64::new(h, 0.0)],
                };
                ComplexMatrix::outer(&v, &v)
            })
            .collect();
        DensityMatrix::new(kron_all(&kets))
    }

    /// X or Ry(π/2) on the system sites of `layout`.
    pub fn prep_circuit(&self, layout: &LayoutPlan) -> Circuit {
        let mut c = Circuit::new(layout.num_sites(), 0);
        for (p, &s) in self.0.iter().zip(&layout.system) {
            match p {
                Prep::Zero => {}
                Prep::One => {
                    c.x(s);
                }
                Prep::Plus => {
                    c.ry(s, FRAC_PI_2);
                }
            }
        }
        c
    }
}

/// Noise selection: `"none"`, `"heron-median"`, or explicit rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Named(String),
    Custom(NoiseModel),
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Named("none".into())
    }
}

impl NoiseSpec {
    pub fn resolve(&self) -> Result<Option<NoiseModel>> {
        match self {
            NoiseSpec::Named(s) if s == "none" => Ok(None),
            NoiseSpec::Named(s) if s == "heron-median" => Ok(Some(NoiseModel::heron_median())),
            NoiseSpec::Named(s) => arg(format!("unknown noise model '{s}' (expected none, heron-median or explicit rates)")),
            NoiseSpec::Custom(m) => {
                m.validate()?;
                Ok(Some(*m))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub omega: f64,
    pub g: f64,
    pub gamma: f64,
    pub gamma_cross: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            omega: ChainParams::OMEGA_DEFAULT,
            g: ChainParams::G_DEFAULT,
            gamma: ChainParams::GAMMA_DEFAULT,
            gamma_cross: ChainParams::GAMMA_CROSS_DEFAULT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MitigationConfig {
    pub zne: Option<ZneConfig>,
    pub cdr: Option<CdrConfig>,
    /// Shots per training circuit (noisy side).
    pub training_shots: u64,
    /// Branch budget for exact noiseless training values; beyond it the
    /// noiseless value is estimated from `training_shots` noiseless shots.
    pub noiseless_branch_limit: usize,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self {
            zne: Some(ZneConfig::default()),
            cdr: Some(CdrConfig::default()),
            training_shots: 2000,
            noiseless_branch_limit: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub csv: String,
    pub manifest: String,
    pub report: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), csv: "series.csv".into(), manifest: "manifest.json".into(), report: "mitigation.json".into() }
    }
}

fn default_shots() -> u64 {
    20_000
}
fn default_trajectories() -> usize {
    100
}
fn default_chi() -> usize {
    50
}
fn default_cutoff() -> f64 {
    crate::mps::DEFAULT_CUTOFF
}
fn default_resamples() -> usize {
    200
}
fn default_variant() -> Variant {
    Variant::Static
}
fn default_backend() -> Backend {
    Backend::Channel
}
fn default_reference() -> SpecMode {
    SpecMode::Full
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub initial: InitialState,
    /// Output times as γ̃t.
    pub gamma_t: Vec<f64>,
    #[serde(default)]
    pub k: KPolicy,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_chi")]
    pub chi: usize,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Generator used by the exact backend.
    #[serde(default = "default_reference")]
    pub reference: SpecMode,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub mitigation: Option<MitigationConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn new(n: usize, initial: InitialState, gamma_t: Vec<f64>) -> Self {
        Self {
            n,
            initial,
            gamma_t,
            k: KPolicy::default(),
            backend: default_backend(),
            variant: default_variant(),
            shots: default_shots(),
            trajectories: default_trajectories(),
            chi: default_chi(),
            cutoff: default_cutoff(),
            noise: NoiseSpec::default(),
            reference: default_reference(),
            bootstrap_resamples: default_resamples(),
            seed: 0,
            chain: ChainConfig::default(),
            mitigation: None,
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Parse {
            position: e.span().map_or_else(|| "document".to_string(), |r| format!("byte {}", r.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Argument(format!("cannot encode configuration: {e}")))
    }

    pub fn params(&self) -> Result<ChainParams> {
        ChainParams::new(self.n, self.chain.omega, self.chain.g, self.chain.gamma, self.chain.gamma_cross)
    }

    pub fn layout(&self) -> Result<LayoutPlan> {
        layout_for(self.variant, self.n)
    }

    /// Trotter steps at every output time.
    pub fn steps(&self) -> Result<Vec<usize>> {
        self.gamma_t.iter().map(|&gt| self.k.steps(gt)).collect()
    }

    /// Checks the configuration and every backend/size combination before any
    /// computation starts.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.initial.len() != self.n {
            return arg(format!("initial state has {} entries for {} emitters", self.initial.len(), self.n));
        }
        if self.gamma_t.is_empty() {
            return arg("time grid is empty");
        }
        if self.gamma_t.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return arg("time grid values must be finite and non-negative");
        }
        if self.gamma_t.windows(2).any(|w| w[1] <= w[0]) {
            return arg("time grid must be strictly ascending");
        }
        self.steps()?;
        let noise = self.noise.resolve()?;
        match self.backend {
            Backend::Exact if self.n > MAX_DENSE_QUBITS.min(8) => {
                return Err(Error::Capacity(format!("exact backend handles at most 8 emitters, got {}", self.n)));
            }
            Backend::Channel if self.n > MAX_CHANNEL_EMITTERS => {
                return Err(Error::Capacity(format!(
                    "channel backend handles at most {MAX_CHANNEL_EMITTERS} emitters, got {}",
                    self.n
                )));
            }
            Backend::Shots => {
                if self.shots == 0 {
                    return arg("shots must be positive");
                }
                let sites = self.layout()?.num_sites();
                if sites > 24 {
                    return Err(Error::Capacity(format!("shot backend handles at most 24 sites, layout needs {sites}")));
                }
            }
            Backend::Mps => {
                if self.variant != Variant::Static {
                    return arg("the mps backend simulates the static circuit; set variant = \"static\"");
                }
                if self.initial.bits().is_none() {
                    return Err(Error::Unsupported("the mps backend needs a computational-basis initial state".into()));
                }
                if self.trajectories == 0 || self.chi == 0 {
                    return arg("trajectories and chi must be positive");
                }
            }
            _ => {}
        }
        if self.bootstrap_resamples < 2 {
            return arg("bootstrap_resamples must be at least 2");
        }
        if let Some(m) = &self.mitigation {
            if self.backend != Backend::Shots || noise.is_none() {
                return arg("mitigation needs the shots backend with a noise model");
            }
            if let Some(z) = &m.zne {
                z.validate()?;
            }
            if let Some(c) = &m.cdr {
                c.validate()?;
            }
            if m.training_shots == 0 {
                return arg("training_shots must be positive");
            }
        }
        Ok(())
    }
}

/// Layout used for each circuit variant.
pub fn layout_for(variant: Variant, n: usize) -> Result<LayoutPlan> {
    match variant {
        Variant::HardwareAware => LayoutPlan::one_per_pair(n),
        _ => LayoutPlan::one_per_emitter(n),
    }
}

/// One output value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub gamma_t: f64,
    pub k: usize,
    pub observable: String,
    pub method: String,
    pub value: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub rows: Vec<Row>,
}

impl TimeSeries {
    pub fn get(&self, gamma_t: f64, observable: &str, method: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.gamma_t == gamma_t && r.observable == observable && r.method == method)
    }

    /// Values of `method` for `observable`, in row order.
    pub fn values(&self, observable: &str, method: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.observable == observable && r.method == method).map(|r| r.value).collect()
    }
}

/// Observable names: `q0 … q{n−1}` then `total`.
pub fn observable_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("q{i}")).chain(std::iter::once("total".to_string())).collect()
}

fn push_point(rows: &mut Vec<Row>, gamma_t: f64, k: usize, method: &str, values: &[(f64, f64)]) {
    for (name, &(value, std)) in observable_names(values.len() - 1).into_iter().zip(values) {
        rows.push(Row { gamma_t, k, observable: name, method: method.to_string(), value, std });
    }
}

fn with_total(pops: &[f64]) -> Vec<(f64, f64)> {
    pops.iter().map(|&p| (p, 0.0)).chain(std::iter::once((pops.iter().sum(), 0.0))).collect()
}

/// Independent seed for a labelled sub-task.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    shot_rng(seed, stream).gen()
}

/// Exact populations from the chain master equation at each γ̃t.
pub fn exact_populations(params: &ChainParams, init: &InitialState, gamma_t: &[f64], mode: SpecMode) -> Result<Vec<Vec<f64>>> {
    let spec = build_chain_spec(params, mode)?;
    let times: Vec<f64> = gamma_t.iter().map(|g| params.time_from_gamma_t(*g)).collect::<Result<_>>()?;
    let states = integrate(&spec, &init.density()?, &times)?;
    Ok(states.iter().map(|r| qubit_populations(r.matrix(), params.n, &(0..params.n).collect::<Vec<_>>())).collect())
}

/// Channel induced on the emitters by one dissipative block of duration `dt`.
pub fn block_channel(params: &ChainParams, variant: Variant, dt: f64) -> Result<KrausChannel> {
    if params.n == 1 {
        let b = build_single_emitter_block(params.gamma, dt, 0, 1)?;
        return channel_from_circuit(&b, &[0], &[1]);
    }
    let rates = derived_rates(params);
    match variant {
        Variant::Static => channel_from_circuit(&build_dissipative_block_static(&rates, dt, [0, 1], [2, 3])?, &[0, 1], &[2, 3]),
        Variant::Dynamic => channel_from_circuit(&build_dissipative_block_dynamic(&rates, dt, [0, 1], [2, 3])?, &[0, 1], &[2, 3]),
        Variant::HardwareAware => channel_from_circuit(&build_dissipative_block_hw(&rates, dt, [0, 1], 2)?, &[0, 1], &[2]),
    }
}

/// Exact density-matrix propagation of the Trotter circuit with every block
/// replaced by the channel it induces on the emitters.
pub fn channel_evolve(params: &ChainParams, variant: Variant, rho0: &ComplexMatrix, t: f64, k: usize) -> Result<ComplexMatrix> {
    let n = params.n;
    if n > MAX_CHANNEL_EMITTERS {
        return Err(Error::Capacity(format!("channel propagation handles at most {MAX_CHANNEL_EMITTERS} emitters")));
    }
    if k == 0 {
        return arg("number of Trotter steps must be at least 1");
    }
    let dt = t / k as f64;
    let layer = build_unitary_layer(params, dt)?;
    let gates: Vec<(ComplexMatrix, Vec<usize>)> = layer.gates().iter().map(|g| (g.matrix(), g.qubits.clone())).collect();
    let block = block_channel(params, variant, dt)?;
    let bonds: Vec<Vec<usize>> =
        if n == 1 { vec![vec![0]] } else { (0..n - 1).step_by(2).chain((1..n - 1).step_by(2)).map(|i| vec![i, i + 1]).collect() };
    let mut rho = rho0.clone();
    for _ in 0..k {
        for (m, qs) in &gates {
            conjugate_local(&mut rho, n, m, qs);
        }
        for qs in &bonds {
            rho = apply_channel_local(&block, &rho, n, qs)?;
        }
    }
    Ok(rho)
}

pub fn channel_populations(
    params: &ChainParams,
    variant: Variant,
    init: &InitialState,
    gamma_t: f64,
    k: usize,
) -> Result<Vec<f64>> {
    let rho = channel_evolve(params, variant, init.density()?.matrix(), params.time_from_gamma_t(gamma_t)?, k)?;
    Ok(qubit_populations(&rho, params.n, &(0..params.n).collect::<Vec<_>>()))
}

/// Circuit run by the shot backend: state preparation then k Trotter steps,
/// rewritten into the native basis when `native` is set.
pub fn shot_circuit(
    params: &ChainParams,
    init: &InitialState,
    gamma_t: f64,
    k: usize,
    variant: Variant,
    native: bool,
) -> Result<(Circuit, LayoutPlan)> {
    let layout = layout_for(variant, params.n)?;
    let body = assemble_trotter_circuit(params, params.time_from_gamma_t(gamma_t)?, k, variant, &layout)?;
    let mut c = init.prep_circuit(&layout);
    c.num_clbits = body.num_clbits;
    c.extend(&body);
    Ok((if native { transpile_basis(&c) } else { c }, layout))
}

/// Bootstrap estimates of every emitter population and of the total.
pub fn bootstrap_observables(counts: &Counts, n: usize, b: usize, seed: u64) -> Result<Vec<BootstrapEstimate>> {
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        out.push(bootstrap(counts, |k| f64::from(k.as_bytes()[i] == b'1'), b, derive_seed(seed, i as u64))?);
    }
    out.push(bootstrap(counts, |k| k.bytes().take(n).filter(|&c| c == b'1').count() as f64, b, derive_seed(seed, n as u64))?);
    Ok(out)
}

/// Plug-in means and standard errors of every emitter population and the total.
fn plugin_observables(counts: &Counts, n: usize) -> Result<Vec<(f64, f64)>> {
    let (p, s) = counts_to_populations(counts, n)?;
    let mut out: Vec<(f64, f64)> = p.into_iter().zip(s).collect();
    out.push(counts_total(counts, n)?);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZneReport {
    pub lambdas: Vec<f64>,
    /// Folded means per noise factor, per observable.
    pub folded_means: Vec<Vec<f64>>,
    pub folded_stds: Vec<Vec<f64>>,
    /// Extrapolated `(value, std)` per method tag, per observable.
    pub estimates: BTreeMap<String, Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdrReport {
    pub method: String,
    pub fits: Vec<CdrFit>,
    pub corrected: Vec<(f64, f64)>,
    pub n_training: usize,
    /// Training circuits whose noiseless value was estimated from shots.
    pub sampled_noiseless: usize,
    /// Noiseless and noisy training values per observable.
    pub training: Vec<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub gamma_t: f64,
    pub k: usize,
    pub raw: Vec<BootstrapEstimate>,
    pub zne: Option<ZneReport>,
    pub cdr: Vec<CdrReport>,
}

/// Seeds of the sub-tasks at one time point.
mod stream {
    pub const RAW: u64 = 0;
    pub const BOOTSTRAP: u64 = 1;
    pub const FOLD: u64 = 2;
    pub const FOLD_SHOTS: u64 = 3;
    pub const CLIFFORD: u64 = 4;
    pub const TRAINING_SHOTS: u64 = 5;
    pub const MPS: u64 = 6;
}

/// ZNE and CDR at one time point given the raw estimates of the target.
#[allow(clippy::too_many_arguments)]
pub fn mitigate_point(
    target: &Circuit,
    readout: &[usize],
    raw: &[BootstrapEstimate],
    cfg: &MitigationConfig,
    noise: &NoiseModel,
    shots: u64,
    gamma_t: f64,
    k: usize,
    seed: u64,
) -> Result<PointReport> {
    let n = readout.len();
    if raw.len() != n + 1 {
        return Err(Error::Dimension(format!("expected {} raw estimates, got {}", n + 1, raw.len())));
    }
    let zne = match &cfg.zne {
        None => None,
        Some(z) => {
            let mut means = Vec::new();
            let mut stds = Vec::new();
            for (li, &lam) in z.lambdas.iter().enumerate() {
                let variants = fold_random(target, lam, z.n_random_foldings, derive_seed(seed, stream::FOLD * 1000 + li as u64))?;
                let per_variant: Vec<Vec<(f64, f64)>> = variants
                    .iter()
                    .enumerate()
                    .map(|(vi, v)| {
                        let s = derive_seed(seed, stream::FOLD_SHOTS * 1_000_000 + (li * 1000 + vi) as u64);
                        plugin_observables(&run_shots(v, readout, shots, Some(noise), s)?, n)
                    })
                    .collect::<Result<_>>()?;
                let nf = per_variant.len() as f64;
                means.push((0..=n).map(|o| per_variant.iter().map(|v| v[o].0).sum::<f64>() / nf).collect::<Vec<_>>());
                stds.push(
                    (0..=n).map(|o| per_variant.iter().map(|v| v[o].1.powi(2)).sum::<f64>().sqrt() / nf).collect::<Vec<_>>(),
                );
            }
            let mut estimates = BTreeMap::new();
            for &m in &z.extrapolators {
                let per_obs = (0..=n)
                    .map(|o| {
                        let v: Vec<f64> = means.iter().map(|x| x[o]).collect();
                        let s: Vec<f64> = stds.iter().map(|x| x[o]).collect();
                        zne_estimate(&z.lambdas, &v, &s, m)
                    })
                    .collect::<Result<Vec<_>>>()?;
                estimates.insert(m.tag().to_string(), per_obs);
            }
            Some(ZneReport { lambdas: z.lambdas.clone(), folded_means: means, folded_stds: stds, estimates })
        }
    };
    let mut cdr = Vec::new();
    if let Some(c) = &cfg.cdr {
        for (bi, &bias) in c.biases.iter().enumerate() {
            cdr.push(cdr_point(target, readout, raw, c.n_training, bias, cfg, noise, derive_seed(seed, 100 + bi as u64))?);
        }
    }
    Ok(PointReport { gamma_t, k, raw: raw.to_vec(), zne, cdr })
}

#[allow(clippy::too_many_arguments)]
fn cdr_point(
    target: &Circuit,
    readout: &[usize],
    raw: &[BootstrapEstimate],
    n_training: usize,
    bias: CliffordBias,
    cfg: &MitigationConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<CdrReport> {
    let n = readout.len();
    let pairs: Vec<(Vec<f64>, Vec<f64>, bool)> = (0..n_training)
        .into_par_iter()
        .map(|j| {
            let clifford = cliffordize(target, bias, derive_seed(seed, stream::CLIFFORD * 1_000_000 + j as u64))?;
            let shot_seed = derive_seed(seed, stream::TRAINING_SHOTS * 1_000_000 + j as u64);
            let (ideal, sampled) = match branch_populations(&clifford, readout, cfg.noiseless_branch_limit) {
                Ok(p) => (with_total(&p).into_iter().map(|x| x.0).collect::<Vec<_>>(), false),
                Err(Error::Capacity(_)) => {
                    let counts = run_shots(&clifford, readout, cfg.training_shots, None, shot_seed ^ 0x5eed)?;
                    (plugin_observables(&counts, n)?.into_iter().map(|x| x.0).collect(), true)
                }
                Err(e) => return Err(e),
            };
            let noisy = plugin_observables(&run_shots(&clifford, readout, cfg.training_shots, Some(noise), shot_seed)?, n)?;
            Ok((ideal, noisy.into_iter().map(|x| x.0).collect(), sampled))
        })
        .collect::<Result<_>>()?;
    let mut fits = Vec::with_capacity(n + 1);
    let mut corrected = Vec::with_capacity(n + 1);
    let mut training = Vec::with_capacity(n + 1);
    for o in 0..=n {
        let t: Vec<(f64, f64)> = pairs.iter().map(|(x, y, _)| (x[o], y[o])).collect();
        let fit = cdr_fit(&t)?;
        corrected.push(fit.correct(&raw[o])?);
        fits.push(fit);
        training.push(t);
    }
    Ok(CdrReport {
        method: bias.tag().to_string(),
        fits,
        corrected,
        n_training,
        sampled_noiseless: pairs.iter().filter(|p| p.2).count(),
        training,
    })
}

fn report_rows(rep: &PointReport, n: usize) -> Vec<Row> {
    let mut rows = Vec::new();
    if let Some(z) = &rep.zne {
        for (tag, vals) in &z.estimates {
            push_point(&mut rows, rep.gamma_t, rep.k, tag, vals);
        }
    }
    for c in &rep.cdr {
        push_point(&mut rows, rep.gamma_t, rep.k, &c.method, &c.corrected);
    }
    debug_assert!(rows.len() % (n + 1) == 0);
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSeed {
    pub gamma_t: f64,
    pub k: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub points: Vec<PointSeed>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub series: TimeSeries,
    pub manifest: Manifest,
    pub reports: Vec<PointReport>,
}

fn notes(cfg: &ExperimentConfig) -> Vec<String> {
    let mut notes = Vec::new();
    if matches!(cfg.k, KPolicy::Auto(_)) && cfg.backend != Backend::Exact {
        notes.push(format!(
            "automatic Trotter steps use thresholds 0.69/1.26/1.8 derived from a 6-emitter error study with budget {TROTTER_ERROR_BUDGET}"
        ));
        if cfg.n > MAX_STUDY_EMITTERS {
            notes.push(format!("the thresholds are extrapolated to {} emitters", cfg.n));
        }
    }
    if cfg.backend == Backend::Exact {
        notes.push("exact rows carry k = 0 (no Trotter splitting)".into());
    }
    notes
}

fn manifest(cfg: &ExperimentConfig, points: Vec<PointSeed>) -> Manifest {
    Manifest {
        software: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        points,
        notes: notes(cfg),
    }
}

/// Point seeds and Trotter steps for a configuration.
pub fn plan_points(cfg: &ExperimentConfig) -> Result<Vec<PointSeed>> {
    let steps = cfg.steps()?;
    Ok(cfg
        .gamma_t
        .iter()
        .zip(steps)
        .enumerate()
        .map(|(i, (&gamma_t, k))| PointSeed {
            gamma_t,
            k: if cfg.backend == Backend::Exact { 0 } else { k },
            seed: derive_seed(cfg.seed, i as u64),
        })
        .collect())
}

/// Runs the configured backend over the time grid, plus mitigation when
/// configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let params = cfg.params()?;
    let points = plan_points(cfg)?;
    let n = cfg.n;
    let noise = cfg.noise.resolve()?;
    let method = cfg.backend.method();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    match cfg.backend {
        Backend::Exact => {
            let pops = exact_populations(&params, &cfg.initial, &cfg.gamma_t, cfg.reference)?;
            for (p, pt) in pops.iter().zip(&points) {
                push_point(&mut rows, pt.gamma_t, 0, method, &with_total(p));
            }
        }
        Backend::Channel => {
            let pops: Vec<Vec<f64>> = points
                .par_iter()
                .map(|pt| channel_populations(&params, cfg.variant, &cfg.initial, pt.gamma_t, pt.k))
                .collect::<Result<_>>()?;
            for (p, pt) in pops.iter().zip(&points) {
                push_point(&mut rows, pt.gamma_t, pt.k, method, &with_total(p));
            }
        }
        Backend::Mps => {
            let bits = cfg.initial.bits().expect("validated");
            let results: Vec<_> = points
                .par_iter()
                .map(|pt| {
                    let t = params.time_from_gamma_t(pt.gamma_t)?;
                    run_mctebd(&params, t, pt.k, &bits, cfg.chi, cfg.cutoff, cfg.trajectories, derive_seed(pt.seed, stream::MPS))
                })
                .collect::<Result<_>>()?;
            for (r, pt) in results.iter().zip(&points) {
                let vals: Vec<(f64, f64)> =
                    r.mean.iter().zip(&r.std_err).map(|(&a, &b)| (a, b)).chain([(r.total_mean, r.total_std_err)]).collect();
                push_point(&mut rows, pt.gamma_t, pt.k, method, &vals);
            }
        }
        Backend::Shots => {
            let per_point: Vec<(Vec<Row>, Option<PointReport>)> = points
                .par_iter()
                .map(|pt| {
                    let (c, layout) = shot_circuit(&params, &cfg.initial, pt.gamma_t, pt.k, cfg.variant, noise.is_some())?;
                    let counts = run_shots(&c, &layout.system, cfg.shots, noise.as_ref(), derive_seed(pt.seed, stream::RAW))?;
                    let raw =
                        bootstrap_observables(&counts, n, cfg.bootstrap_resamples, derive_seed(pt.seed, stream::BOOTSTRAP))?;
                    let mut rows = Vec::new();
                    let vals: Vec<(f64, f64)> = raw.iter().map(|e| (e.mean, e.std)).collect();
                    push_point(&mut rows, pt.gamma_t, pt.k, method, &vals);
                    let report = match (&cfg.mitigation, &noise) {
                        (Some(m), Some(nm)) => {
                            let rep = mitigate_point(&c, &layout.system, &raw, m, nm, cfg.shots, pt.gamma_t, pt.k, pt.seed)?;
                            rows.extend(report_rows(&rep, n));
                            Some(rep)
                        }
                        _ => None,
                    };
                    Ok((rows, report))
                })
                .collect::<Result<_>>()?;
            for (r, rep) in per_point {
                rows.extend(r);
                reports.extend(rep);
            }
        }
    }
    Ok(ExperimentOutput { series: TimeSeries { rows }, manifest: manifest(cfg, points), reports })
}

/// Mitigation for a finished noisy shot run: the raw estimates are read from
/// its `shots_raw` rows and the folded and training circuits are rebuilt from
/// the configuration.
pub fn mitigate_series(cfg: &ExperimentConfig, raw: &TimeSeries) -> Result<(TimeSeries, Vec<PointReport>)> {
    let m = cfg.mitigation.clone().unwrap_or_default();
    let mut cfg = cfg.clone();
    cfg.mitigation = Some(m.clone());
    cfg.validate()?;
    let params = cfg.params()?;
    let noise = cfg.noise.resolve()?.expect("validated");
    let names = observable_names(cfg.n);
    let points = plan_points(&cfg)?;
    let out: Vec<(Vec<Row>, PointReport)> = points
        .par_iter()
        .map(|pt| {
            let estimates = names
                .iter()
                .map(|o| {
                    raw.get(pt.gamma_t, o, "shots_raw")
                        .map(|r| BootstrapEstimate { mean: r.value, std: r.std, b: cfg.bootstrap_resamples })
                        .ok_or_else(|| Error::Argument(format!("no shots_raw row for {o} at γ̃t = {}", pt.gamma_t)))
                })
                .collect::<Result<Vec<_>>>()?;
            let (c, layout) = shot_circuit(&params, &cfg.initial, pt.gamma_t, pt.k, cfg.variant, true)?;
            let rep = mitigate_point(&c, &layout.system, &estimates, &m, &noise, cfg.shots, pt.gamma_t, pt.k, pt.seed)?;
            Ok((report_rows(&rep, cfg.n), rep))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (r, rep) in out {
        rows.extend(r);
        reports.push(rep);
    }
    Ok((TimeSeries { rows }, reports))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrotterStudy {
    pub n: usize,
    pub states: Vec<Vec<u8>>,
    pub gamma_t: Vec<f64>,
    pub k_list: Vec<usize>,
    /// Mean absolute population error `[k][time]` over qubits initialized in |1⟩.
    pub error_excited: Vec<Vec<f64>>,
    /// The same over qubits initialized in |0⟩.
    pub error_ground: Vec<Vec<f64>>,
}

impl TrotterStudy {
    /// Rows with observables `init1` / `init0` and method `trotter_error`.
    pub fn series(&self) -> TimeSeries {
        let mut rows = Vec::new();
        for (ki, &k) in self.k_list.iter().enumerate() {
            for (ti, &gt) in self.gamma_t.iter().enumerate() {
                for (name, e) in [("init1", &self.error_excited), ("init0", &self.error_ground)] {
                    rows.push(Row {
                        gamma_t: gt,
                        k,
                        observable: name.into(),
                        method: "trotter_error".into(),
                        value: e[ki][ti],
                        std: 0.0,
                    });
                }
            }
        }
        TimeSeries { rows }
    }
}

/// Random initial states with two to four excited emitters (fewer for short
/// chains).
pub fn random_states(n: usize, n_states: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = shot_rng(seed, 0);
    let lo = 2.min(n);
    let hi = 4.min(n);
    (0..n_states)
        .map(|_| {
            let count = rng.gen_range(lo..=hi);
            let mut bits = vec![0u8; n];
            for i in sample(&mut rng, n, count) {
                bits[i] = 1;
            }
            bits
        })
        .collect()
}

/// Trotter error of the circuit (through its block channels) against the
/// master equation, averaged over random initial states and split by the
/// initial bit of each emitter.
pub fn trotter_study(
    params: &ChainParams,
    k_list: &[usize],
    n_states: usize,
    gamma_t: &[f64],
    reference: SpecMode,
    seed: u64,
) -> Result<TrotterStudy> {
    let n = params.n;
    if n > MAX_STUDY_EMITTERS {
        return Err(Error::Capacity(format!(
            "the Trotter study needs the exact oracle and handles at most {MAX_STUDY_EMITTERS} emitters"
        )));
    }
    if n_states == 0 || k_list.is_empty() || gamma_t.is_empty() {
        return arg("the study needs states, step counts and times");
    }
    let states = random_states(n, n_states, seed);
    let per_state: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>, usize, usize)> = states
        .par_iter()
        .map(|bits| {
            let init = InitialState::from_bits(bits);
            let exact = exact_populations(params, &init, gamma_t, reference)?;
            let ones = bits.iter().filter(|&&b| b == 1).count();
            let mut e1 = vec![vec![0.0; gamma_t.len()]; k_list.len()];
            let mut e0 = e1.clone();
            for (ki, &k) in k_list.iter().enumerate() {
                for (ti, &gt) in gamma_t.iter().enumerate() {
                    let circ = channel_populations(params, Variant::Static, &init, gt, k)?;
                    for q in 0..n {
                        let d = (circ[q] - exact[ti][q]).abs();
                        if bits[q] == 1 {
                            e1[ki][ti] += d;
                        } else {
                            e0[ki][ti] += d;
                        }
                    }
                }
            }
            Ok((e1, e0, ones, n - ones))
        })
        .collect::<Result<_>>()?;
    let n1: usize = per_state.iter().map(|s| s.2).sum();
    let n0: usize = per_state.iter().map(|s| s.3).sum();
    let mut error_excited = vec![vec![0.0; gamma_t.len()]; k_list.len()];
    let mut error_ground = error_excited.clone();
    for (e1, e0, _, _) in &per_state {
        for ki in 0..k_list.len() {
            for ti in 0..gamma_t.len() {
                error_excited[ki][ti] += e1[ki][ti] / n1.max(1) as f64;
                error_ground[ki][ti] += e0[ki][ti] / n0.max(1) as f64;
            }
        }
    }
    Ok(TrotterStudy { n, states, gamma_t: gamma_t.to_vec(), k_list: k_list.to_vec(), error_excited, error_ground })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub n: usize,
    pub variant: Variant,
    pub k: usize,
    /// Two-qubit depth of the logical circuit.
    pub logical: usize,
    /// Two-qubit (CZ) depth after routing on the line and rewriting into
    /// Rz/SX/X/CZ.
    pub native: usize,
}

/// Two-qubit depths for every chain size and variant.
pub fn depth_scan(n_list: &[usize], variants: &[Variant], k: usize, gamma_t: f64) -> Result<Vec<DepthRow>> {
    let mut rows = Vec::new();
    for &n in n_list {
        let params = ChainParams::paper_defaults(n);
        for &variant in variants {
            let layout = layout_for(variant, n)?;
            let c = assemble_trotter_circuit(&params, params.time_from_gamma_t(gamma_t)?, k, variant, &layout)?;
            let native = transpile_basis(&route_linear(&c)?);
            rows.push(DepthRow { n, variant, k, logical: two_qubit_depth(&c), native: two_qubit_depth(&native) });
        }
    }
    Ok(rows)
}
