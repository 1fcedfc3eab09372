//! Run configuration read from TOML. Every field has a default, and the
//! defaults describe the reference pendulum experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{DoaOptions, RegionOptions, SearchBox};
use crate::error::{Error, Result};
use crate::identify::{IdentifyOptions, PositivityFloor, SupplyKind};
use crate::sim::{self, InputSignal, Pendulum, SimConfig};
use crate::study::MonteCarloPlan;
use crate::trajectory::{Quadrature, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub b1: f64,
    pub b2: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { b1: 8.0, b2: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub duration: f64,
    pub sample_period: f64,
    pub internal_step: f64,
    /// Upper bound on recorded samples; 0 disables the cap.
    pub max_samples: usize,
    pub x0: Vec<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self { duration: 100.0, sample_period: 0.1, internal_step: 0.001, max_samples: 1000, x0: vec![0.0, 0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// 1-based state channel.
    pub channel: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { channel: 1, sigma: 0.0, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentificationSection {
    pub window: usize,
    pub supply: SupplyKind,
    pub structural: bool,
    pub eps_pos: f64,
    pub positivity_floor: PositivityFloor,
    pub eig_tol: f64,
    pub max_cuts: usize,
    pub quadrature: Quadrature,
    pub prune_threshold: f64,
    /// Window sizes visited by the feasibility sweep.
    pub sweep_windows: Vec<usize>,
}

impl Default for IdentificationSection {
    fn default() -> Self {
        let o = IdentifyOptions::default();
        Self {
            window: o.window,
            supply: o.supply,
            structural: o.structural,
            eps_pos: o.eps_pos,
            positivity_floor: o.floor,
            eig_tol: o.eig_tol,
            max_cuts: o.max_cuts,
            quadrature: o.quadrature,
            prune_threshold: 0.01,
            sweep_windows: (1..=20).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Constant surrogate for the input field.
    pub b: Vec<f64>,
    /// Damping gains compared against the open loop.
    pub gains: Vec<f64>,
    pub damping_x0: Vec<f64>,
    pub damping_duration: f64,
    pub grid_resolution: usize,
    pub c_tol: f64,
    pub padding: f64,
    pub margin_tol: f64,
    pub whole_space_prior: bool,
    /// Whole-space search box half-widths as a multiple of the data extent.
    pub whole_space_scale: f64,
    /// Extra levels written to the level-curve file besides the estimate.
    pub level_values: Vec<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let d = DoaOptions::default();
        let r = RegionOptions::default();
        Self {
            b: vec![0.0, 1.0],
            gains: vec![0.5, 1.0, 2.0],
            damping_x0: vec![1.0, 0.0],
            damping_duration: 30.0,
            grid_resolution: d.grid_resolution,
            c_tol: d.c_tol,
            padding: d.padding,
            margin_tol: r.margin_tol,
            whole_space_prior: r.whole_space_prior,
            whole_space_scale: 3.0,
            level_values: vec![1.0, 2.0, 4.45, 8.0, 16.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub runs: usize,
    pub seed_base: u64,
    pub sigma: f64,
    pub window: usize,
    pub structural: bool,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self { runs: 20, seed_base: 1, sigma: 0.01, window: 200, structural: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub input: InputSignal,
    pub sim: SimSection,
    pub noise: NoiseSection,
    pub identification: IdentificationSection,
    pub analysis: AnalysisSection,
    pub monte_carlo: MonteCarloSection,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be nonnegative, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        positive("model.b1", self.model.b1)?;
        positive("model.b2", self.model.b2)?;
        self.sim_config().steps_per_sample().map_err(|e| Error::Config(e.to_string()))?;
        if self.sim.x0.len() != 2 {
            return Err(Error::Config("sim.x0 must have two entries".into()));
        }
        if !(1..=2).contains(&self.noise.channel) {
            return Err(Error::Config(format!("noise.channel must be 1 or 2, got {}", self.noise.channel)));
        }
        nonnegative("noise.sigma", self.noise.sigma)?;

        let id = &self.identification;
        if id.window == 0 {
            return Err(Error::Config("identification.window must be at least 1".into()));
        }
        positive("identification.eps_pos", id.eps_pos)?;
        nonnegative("identification.eig_tol", id.eig_tol)?;
        if !(0.0..1.0).contains(&id.prune_threshold) {
            return Err(Error::Config("identification.prune_threshold must lie in [0, 1)".into()));
        }
        if id.sweep_windows.is_empty() {
            return Err(Error::Config("identification.sweep_windows is empty".into()));
        }
        if id.sweep_windows.contains(&0) {
            return Err(Error::Config("identification.sweep_windows must be at least 1".into()));
        }

        let a = &self.analysis;
        if a.b.len() != 2 || a.b.iter().all(|&v| v == 0.0) {
            return Err(Error::Config("analysis.b must be a nonzero 2-vector".into()));
        }
        if a.gains.is_empty() {
            return Err(Error::Config("analysis.gains is empty".into()));
        }
        for &k in &a.gains {
            nonnegative("analysis.gains entry", k)?;
        }
        if a.damping_x0.len() != 2 {
            return Err(Error::Config("analysis.damping_x0 must have two entries".into()));
        }
        positive("analysis.damping_duration", a.damping_duration)?;
        if a.grid_resolution < 3 {
            return Err(Error::Config("analysis.grid_resolution must be at least 3".into()));
        }
        positive("analysis.c_tol", a.c_tol)?;
        if !(a.padding >= 1.0) {
            return Err(Error::Config("analysis.padding must be at least 1".into()));
        }
        if !(a.whole_space_scale >= 1.0) {
            return Err(Error::Config("analysis.whole_space_scale must be at least 1".into()));
        }
        if !a.margin_tol.is_finite() {
            return Err(Error::Config("analysis.margin_tol must be finite".into()));
        }
        for &c in &a.level_values {
            positive("analysis.level_values entry", c)?;
        }

        let mc = &self.monte_carlo;
        if mc.runs == 0 {
            return Err(Error::Config("monte_carlo.runs must be at least 1".into()));
        }
        nonnegative("monte_carlo.sigma", mc.sigma)?;
        if mc.window == 0 {
            return Err(Error::Config("monte_carlo.window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn pendulum(&self) -> Result<Pendulum> {
        Pendulum::new(self.model.b1, self.model.b2).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            duration: self.sim.duration,
            sample_period: self.sim.sample_period,
            internal_step: self.sim.internal_step,
            max_samples: (self.sim.max_samples > 0).then_some(self.sim.max_samples),
        }
    }

    /// Noise-free response to the configured input.
    pub fn clean_trajectory(&self) -> Result<Trajectory> {
        sim::simulate(&self.pendulum()?, &self.sim.x0, &self.input, &self.sim_config())
    }

    /// The clean trajectory with the configured measurement noise, if any.
    pub fn measured_trajectory(&self) -> Result<Trajectory> {
        let clean = self.clean_trajectory()?;
        if self.noise.sigma > 0.0 {
            clean.add_measurement_noise(self.noise.channel - 1, self.noise.sigma, self.noise.seed)
        } else {
            Ok(clean)
        }
    }

    pub fn identify_options(&self) -> IdentifyOptions {
        let id = &self.identification;
        IdentifyOptions {
            window: id.window,
            supply: id.supply,
            structural: id.structural,
            eps_pos: id.eps_pos,
            floor: id.positivity_floor,
            eig_tol: id.eig_tol,
            max_cuts: id.max_cuts,
            quadrature: id.quadrature,
        }
    }

    pub fn region_options(&self) -> RegionOptions {
        RegionOptions {
            margin_tol: self.analysis.margin_tol,
            whole_space_prior: self.analysis.whole_space_prior,
            ..RegionOptions::default()
        }
    }

    /// Level-set options; the whole-space box is scaled from `data_extent`.
    pub fn doa_options(&self, data_extent: Option<[f64; 2]>) -> DoaOptions {
        let a = &self.analysis;
        DoaOptions {
            c_tol: a.c_tol,
            grid_resolution: a.grid_resolution,
            padding: a.padding,
            whole_space_box: data_extent
                .map(|e| SearchBox::symmetric([a.whole_space_scale * e[0], a.whole_space_scale * e[1]])),
            use_pruned: true,
        }
    }

    pub fn monte_carlo_plan(&self) -> MonteCarloPlan {
        let mc = &self.monte_carlo;
        MonteCarloPlan {
            runs: mc.runs,
            seed_base: mc.seed_base,
            sigma: mc.sigma,
            channel: self.noise.channel - 1,
            prune_threshold: self.identification.prune_threshold,
        }
    }

    /// Identification options for the Monte Carlo study.
    pub fn monte_carlo_options(&self) -> IdentifyOptions {
        IdentifyOptions {
            window: self.monte_carlo.window,
            structural: self.monte_carlo.structural,
            ..self.identify_options()
        }
    }
}
