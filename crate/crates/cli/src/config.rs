use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use hyperch::integrator::SchemeConfig;
use hyperch::model::{Nonlinearity, SourceTerm};
use hyperch::spectral::{random_band_limited, snapshot, GridSpec, ModalField};
use hyperch::State;

/// Offset between the default seeds of `u` and `u_t`.
const UT_SEED_OFFSET: u64 = 0x5eed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_modes: usize,
    pub side: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_modes: 32,
            side: std::f64::consts::PI,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub a3: f64,
    pub a2: f64,
    pub a1: f64,
    /// Overrides the derived lower bound of `f'`.
    pub lambda_bound: Option<f64>,
    /// Overrides the derived bound on `|f''| / (1 + |r|)`.
    pub m_bound: Option<f64>,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self {
            a3: 1.0,
            a2: 0.0,
            a1: -1.0,
            lambda_bound: None,
            m_bound: None,
        }
    }
}

/// A modal field given by a preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldPreset {
    Zero,
    SingleMode {
        j: usize,
        k: usize,
        amp: f64,
    },
    /// Random coefficients on modes `j, k <= band` with `||A^{1/2} z|| = amplitude`;
    /// the seed defaults to the run seed.
    RandomBand {
        band: usize,
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// A `.mfld` snapshot, embedded into or truncated to the configured grid.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub u: FieldPreset,
    pub u_t: FieldPreset,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            u: FieldPreset::RandomBand {
                band: 8,
                amplitude: 1.0,
                seed: None,
            },
            u_t: FieldPreset::Zero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub resolutions: Vec<usize>,
    pub n_ref: usize,
    pub t_star: f64,
    /// Largest accepted `gap(N_max) / gap(N_min)`.
    pub max_gap_ratio: Option<f64>,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![16, 32, 64],
            n_ref: 256,
            t_star: 0.25,
            max_gap_ratio: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    /// `L`; defaults to `max(10, 2 lambda)`.
    pub big_l: Option<f64>,
    /// Fit window for the decay rate; defaults to `[min(1, t_end/2), t_end]`.
    pub fit_window: Option<(f64, f64)>,
    pub max_doublings: usize,
    pub min_r2: f64,
    pub sum_tol: f64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            big_l: None,
            fit_window: None,
            max_doublings: 3,
            min_r2: 0.9,
            sum_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LojasiewiczConfig {
    /// Bound on `||u_t(t_end)||_{V'}`.
    pub tol: f64,
}

impl Default for LojasiewiczConfig {
    fn default() -> Self {
        Self { tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbsorbConfig {
    pub radii: Vec<f64>,
    pub n_per_radius: usize,
}

impl Default for AbsorbConfig {
    fn default() -> Self {
        Self {
            radii: vec![0.5, 1.0, 2.0],
            n_per_radius: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipschitzConfig {
    /// `||dU(0)||_0`; the run is repeated at half this size.
    pub perturbation_scale: f64,
    /// Allowed relative change of `c_7` under halving.
    pub c7_tol: f64,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        Self {
            perturbation_scale: 1e-4,
            c7_tol: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub resolutions: Vec<usize>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![32, 64, 128],
        }
    }
}

/// Everything a run needs; every key has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub nonlinearity: NonlinearityConfig,
    pub source: FieldPreset,
    pub initial: InitialConfig,
    pub scheme: SchemeConfig,
    pub t_end: f64,
    pub sample_every: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub converge: ConvergeConfig,
    pub decompose: DecomposeConfig,
    pub equilibrium: EquilibriumConfig,
    pub lojasiewicz: LojasiewiczConfig,
    pub absorb: AbsorbConfig,
    pub lipschitz: LipschitzConfig,
    pub check: CheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            nonlinearity: NonlinearityConfig::default(),
            source: FieldPreset::Zero,
            initial: InitialConfig::default(),
            scheme: SchemeConfig::default(),
            t_end: 1.0,
            sample_every: 10,
            output_dir: PathBuf::from("run"),
            seed: 0,
            converge: ConvergeConfig::default(),
            decompose: DecomposeConfig::default(),
            equilibrium: EquilibriumConfig::default(),
            lojasiewicz: LojasiewiczConfig::default(),
            absorb: AbsorbConfig::default(),
            lipschitz: LipschitzConfig::default(),
            check: CheckConfig::default(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        bail!("{key} must be a positive number, got {v}");
    }
    Ok(())
}

impl RunConfig {
    /// Reads a config; relative file paths inside it resolve against its directory
    /// and are stored absolute, so the echoed config works from anywhere.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        for preset in [&mut self.source, &mut self.initial.u, &mut self.initial.u_t] {
            if let FieldPreset::File { path } = preset {
                if path.is_relative() {
                    let joined = dir.join(&*path);
                    *path = std::path::absolute(&joined).unwrap_or(joined);
                }
            }
        }
    }

    /// Checks every key; the message names the offending one.
    pub fn validate(&self) -> Result<()> {
        if self.grid.n_modes == 0 {
            bail!("grid.n_modes must be at least 1");
        }
        positive("grid.side", self.grid.side)?;
        self.nonlinearity()?;
        for (key, preset) in [
            ("source", &self.source),
            ("initial.u", &self.initial.u),
            ("initial.u_t", &self.initial.u_t),
        ] {
            validate_preset(key, preset, self.grid.n_modes)?;
        }
        self.scheme.validate().context("scheme")?;
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            bail!("t_end must be a nonnegative number, got {}", self.t_end);
        }
        if self.sample_every == 0 {
            bail!("sample_every must be at least 1");
        }
        let c = &self.converge;
        if c.resolutions.is_empty() || c.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            bail!("converge.resolutions must be a nonempty strictly increasing list");
        }
        let n_max = *c.resolutions.last().expect("nonempty");
        if c.n_ref < 2 * n_max {
            bail!("converge.n_ref = {} must be at least twice max(converge.resolutions) = {n_max}", c.n_ref);
        }
        positive("converge.t_star", c.t_star)?;
        if let Some(r) = c.max_gap_ratio {
            positive("converge.max_gap_ratio", r)?;
        }
        let d = &self.decompose;
        if let Some(l) = d.big_l {
            positive("decompose.big_l", l)?;
        }
        if let Some((a, b)) = d.fit_window {
            if !(a >= 0.0 && b > a) {
                bail!("decompose.fit_window must satisfy 0 <= start < end, got ({a}, {b})");
            }
        }
        positive("decompose.sum_tol", d.sum_tol)?;
        positive("equilibrium.tol", self.equilibrium.tol)?;
        positive("lojasiewicz.tol", self.lojasiewicz.tol)?;
        if self.absorb.radii.is_empty() {
            bail!("absorb.radii must not be empty");
        }
        for r in &self.absorb.radii {
            positive("absorb.radii", *r)?;
        }
        if self.absorb.n_per_radius == 0 {
            bail!("absorb.n_per_radius must be at least 1");
        }
        positive("lipschitz.perturbation_scale", self.lipschitz.perturbation_scale)?;
        positive("lipschitz.c7_tol", self.lipschitz.c7_tol)?;
        if self.check.resolutions.is_empty() || self.check.resolutions.contains(&0) {
            bail!("check.resolutions must be a nonempty list of positive integers");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.n_modes, self.grid.side).context("grid")
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity> {
        let c = &self.nonlinearity;
        let mut nl = Nonlinearity::new(c.a3, c.a2, c.a1).context("nonlinearity")?;
        if let Some(l) = c.lambda_bound {
            nl = nl.with_lambda_bound(l);
        }
        if let Some(m) = c.m_bound {
            nl = nl.with_m_bound(m);
        }
        Ok(nl)
    }

    pub fn source_term(&self) -> Result<SourceTerm> {
        Ok(SourceTerm::new(build_field(&self.source, self.grid()?, self.seed, "source")?))
    }

    pub fn initial_state(&self) -> Result<State> {
        let grid = self.grid()?;
        let u = build_field(&self.initial.u, grid, self.seed, "initial.u")?;
        let v = build_field(&self.initial.u_t, grid, self.seed.wrapping_add(UT_SEED_OFFSET), "initial.u_t")?;
        Ok(State::new(u, v, 0.0)?)
    }
}

fn validate_preset(key: &str, preset: &FieldPreset, n: usize) -> Result<()> {
    match preset {
        FieldPreset::Zero => {}
        FieldPreset::SingleMode { j, k, amp } => {
            if *j == 0 || *k == 0 || *j > n || *k > n {
                bail!("{key}: mode ({j}, {k}) outside 1..={n}");
            }
            if !amp.is_finite() {
                bail!("{key}.amp must be finite");
            }
        }
        FieldPreset::RandomBand { band, amplitude, .. } => {
            if *band == 0 || *band > n {
                bail!("{key}.band = {band} outside 1..={n}");
            }
            if !(*amplitude >= 0.0) || !amplitude.is_finite() {
                bail!("{key}.amplitude must be a nonnegative number");
            }
        }
        FieldPreset::File { path } => {
            if !path.is_file() {
                bail!("{key}.path: file {} does not exist", path.display());
            }
        }
    }
    Ok(())
}

fn build_field(preset: &FieldPreset, grid: GridSpec, seed: u64, key: &str) -> Result<ModalField> {
    let z = match preset {
        FieldPreset::Zero => ModalField::zeros(grid),
        FieldPreset::SingleMode { j, k, amp } => ModalField::single_mode(grid, *j, *k, *amp)?,
        FieldPreset::RandomBand { band, amplitude, seed: s } => {
            random_band_limited(grid, *band, *amplitude, s.unwrap_or(seed))?
        }
        FieldPreset::File { path } => {
            let (z, _) = snapshot::load(path).with_context(|| format!("{key}.path: {}", path.display()))?;
            if (z.grid.side - grid.side).abs() > 1e-12 * grid.side {
                bail!("{key}.path: snapshot side {} differs from grid.side {}", z.grid.side, grid.side);
            }
            z.resized(grid.n_modes)?
        }
    };
    Ok(z)
}
