//! Storage-function identification as a linear program.
//!
//! With `S(x) = theta . phi(x)` and an output-feedback supply rate
//! `u y - rho y^2`, every sample and every window `[t_k, t_{k+T}]` of the
//! data gives a linear inequality in `eta = (theta, rho)`:
//!
//! ```text
//! theta . phi(x_i) >= eps_pos                                   i = 1..N
//! theta . (phi(x_{k+T}) - phi(x_k)) + rho * int y^2 <= int u y    k = 1..N-T
//! rho >= 0
//! ```
//!
//! and the largest feasible `rho` is the estimated excess of passivity.
//! Infeasibility is an answer too: the data do not support passivity at this
//! window size.

use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, Feature, StorageEstimate};
use crate::error::{Error, Result};
use crate::lp::{
    solve_lp, solve_with_psd_cuts, FarkasCertificate, LpProblem, PsdBlock, PsdEntry, Sense, SolveOutcome,
    SolveStatus,
};
use crate::trajectory::{Quadrature, Trajectory};

/// Supply rate `w(u, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupplyKind {
    /// `u y`
    Passive,
    /// `u y - rho y^2`
    Ofp,
    /// `u y - nu u^2`
    Ifp,
}

impl SupplyKind {
    /// Per-sample integrand multiplying the margin variable.
    fn margin_integrand(&self, traj: &Trajectory) -> Option<Vec<f64>> {
        match self {
            SupplyKind::Passive => None,
            SupplyKind::Ofp => Some(traj.outputs().iter().map(|y| y * y).collect()),
            SupplyKind::Ifp => Some(traj.inputs().iter().map(|u| u * u).collect()),
        }
    }
}

impl std::str::FromStr for SupplyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "passive" => Ok(SupplyKind::Passive),
            "ofp" => Ok(SupplyKind::Ofp),
            "ifp" => Ok(SupplyKind::Ifp),
            other => Err(Error::arg(format!("unknown supply kind {other:?}"))),
        }
    }
}

/// Right-hand side of the positivity rows `theta . phi(x_i) >= floor_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityFloor {
    /// `eps_pos * max_j |phi_j(x_i)|`, so samples near the origin get a
    /// proportionally small floor.
    #[default]
    FeatureScaled,
    /// `eps_pos` at every sample except the origin itself.
    Absolute,
}

impl PositivityFloor {
    pub fn floor(&self, eps_pos: f64, phi: &[f64]) -> f64 {
        let scale = phi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        match self {
            PositivityFloor::FeatureScaled => eps_pos * scale,
            PositivityFloor::Absolute if scale > 0.0 => eps_pos,
            PositivityFloor::Absolute => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifyOptions {
    /// Window size `T` in samples.
    pub window: usize,
    pub supply: SupplyKind,
    /// Adds `P >= 0` on the quadratic-form block and `theta_i >= 0` elsewhere.
    pub structural: bool,
    /// Floor realizing the strict positivity `S(x_i) > 0`.
    pub eps_pos: f64,
    #[serde(default)]
    pub floor: PositivityFloor,
    pub eig_tol: f64,
    pub max_cuts: usize,
    #[serde(default)]
    pub quadrature: Quadrature,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            window: 1,
            supply: SupplyKind::Ofp,
            structural: false,
            eps_pos: 1e-6,
            floor: PositivityFloor::FeatureScaled,
            eig_tol: 1e-8,
            max_cuts: 50,
            quadrature: Quadrature::Trapezoid,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub window: usize,
    pub constraint_count: usize,
    pub positivity_rows: usize,
    pub dissipation_rows: usize,
    pub solver_iterations: usize,
    pub cuts_added: usize,
    /// Worst row violation of the returned point, rows scaled to unit max coefficient.
    pub max_scaled_violation: f64,
    /// Smallest eigenvalue of the quadratic-form block, when constrained.
    pub psd_min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleReport {
    pub window: usize,
    pub supply: SupplyKind,
    pub structural: bool,
    pub constraint_count: usize,
    pub certificate: Option<FarkasCertificate>,
}

impl InfeasibleReport {
    pub fn summary(&self) -> String {
        let cert = self
            .certificate
            .as_ref()
            .map(|c| c.summary())
            .unwrap_or_else(|| "no certificate".into());
        format!("infeasible at window T = {} ({} constraints): {cert}", self.window, self.constraint_count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Identification {
    Estimate(StorageEstimate),
    Infeasible(InfeasibleReport),
}

impl Identification {
    pub fn estimate(&self) -> Option<&StorageEstimate> {
        match self {
            Identification::Estimate(e) => Some(e),
            Identification::Infeasible(_) => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Identification::Estimate(_))
    }
}

fn check_dims(traj: &Trajectory, dict: &Dictionary) -> Result<()> {
    if traj.state_dim() != dict.state_dim() {
        return Err(Error::arg(format!(
            "trajectory state dimension {} does not match dictionary dimension {}",
            traj.state_dim(),
            dict.state_dim()
        )));
    }
    Ok(())
}

/// `[phi(x_{k+T}) - phi(x_k), int_{t_k}^{t_{k+T}} m(t) dt]` where `m` is `y^2`
/// (OFP), `u^2` (IFP) or zero (passive).
pub fn augmented_regressor(
    traj: &Trajectory,
    dict: &Dictionary,
    k: usize,
    window: usize,
    supply: SupplyKind,
) -> Result<Vec<f64>> {
    check_dims(traj, dict)?;
    if window == 0 || k + window >= traj.len() {
        return Err(Error::arg(format!(
            "window [{k}, {k}+{window}] overruns a trajectory of {} samples",
            traj.len()
        )));
    }
    let j = k + window;
    let start = dict.eval_features(traj.state(k));
    let end = dict.eval_features(traj.state(j));
    let mut row: Vec<f64> = end.iter().zip(&start).map(|(a, b)| a - b).collect();
    row.push(match supply.margin_integrand(traj) {
        Some(m) => traj.trapezoid_integral(&m, k, j)?,
        None => 0.0,
    });
    Ok(row)
}

/// PSD block over the dictionary's quadratic-form terms (`x_i^2`, `x_i x_j`).
pub fn quadratic_form_block(dict: &Dictionary) -> Option<PsdBlock> {
    let mut entries = Vec::new();
    for (var, f) in dict.features().iter().enumerate() {
        match *f {
            Feature::Square(i) => entries.push(PsdEntry { row: i, col: i, var, coeff: 1.0 }),
            Feature::Cross(i, j) if i == j => entries.push(PsdEntry { row: i, col: i, var, coeff: 1.0 }),
            Feature::Cross(i, j) => {
                entries.push(PsdEntry { row: i.min(j), col: i.max(j), var, coeff: 0.5 })
            }
            _ => {}
        }
    }
    let has_cross = dict.features().iter().any(|f| matches!(f, Feature::Cross(i, j) if i != j));
    has_cross.then(|| PsdBlock { dim: dict.state_dim(), entries })
}

/// Assembles the identification LP. Variables are `theta` followed by the
/// margin; rows are the `N` positivity rows, the `N - T` dissipation rows and
/// `margin >= 0`, in that order (`2N - T + 1` in total).
pub fn build_constraints(traj: &Trajectory, dict: &Dictionary, opts: &IdentifyOptions) -> Result<LpProblem> {
    check_dims(traj, dict)?;
    let n_samples = traj.len();
    let window = opts.window;
    if window == 0 || window >= n_samples {
        return Err(Error::arg(format!("window size must be in 1..={}, got {window}", n_samples - 1)));
    }
    let d = dict.len();
    let mut lp = LpProblem::new(d + 1);
    lp.rows.reserve(2 * n_samples - window + 1);

    let phi: Vec<Vec<f64>> = traj.states().map(|x| dict.eval_features(x)).collect();
    for p in &phi {
        let mut row = p.clone();
        row.push(0.0);
        lp.push_row(row, Sense::Ge, opts.floor.floor(opts.eps_pos, p));
    }

    let supply_int = traj.cumulative_integral(&traj.input_output_product(), opts.quadrature)?;
    let margin_int = match opts.supply.margin_integrand(traj) {
        Some(m) => Some(traj.cumulative_integral(&m, opts.quadrature)?),
        None => None,
    };
    for k in 0..n_samples - window {
        let j = k + window;
        let mut row: Vec<f64> = phi[j].iter().zip(&phi[k]).map(|(a, b)| a - b).collect();
        row.push(margin_int.as_ref().map_or(0.0, |c| c[j] - c[k]));
        lp.push_row(row, Sense::Le, supply_int[j] - supply_int[k]);
    }

    let mut margin_row = vec![0.0; d + 1];
    margin_row[d] = 1.0;
    lp.push_row(margin_row, Sense::Ge, 0.0);

    if opts.supply != SupplyKind::Passive {
        lp.objective[d] = 1.0;
    }

    if opts.structural {
        let block = quadratic_form_block(dict);
        let in_block = |var: usize| {
            block.as_ref().is_some_and(|b| b.entries.iter().any(|e| e.var == var && e.row != e.col))
        };
        lp.sign_constrained = (0..d).filter(|&i| !in_block(i)).collect();
        lp.psd_block = block;
    }
    Ok(lp)
}

/// Builds and solves the LP; structural problems go through the cutting-plane loop.
pub fn identify(traj: &Trajectory, dict: &Dictionary, opts: &IdentifyOptions) -> Result<Identification> {
    let lp = build_constraints(traj, dict, opts)?;
    let outcome: SolveOutcome =
        if lp.psd_block.is_some() { solve_with_psd_cuts(&lp, opts.max_cuts, opts.eig_tol) } else { solve_lp(&lp) };
    let d = dict.len();
    let positivity_rows = traj.len();
    let dissipation_rows = traj.len() - opts.window;

    match outcome.status {
        SolveStatus::Optimal => {
            let x = outcome.solution.expect("optimal outcome carries a solution");
            let diagnostics = Diagnostics {
                window: opts.window,
                constraint_count: lp.rows.len(),
                positivity_rows,
                dissipation_rows,
                solver_iterations: outcome.iterations,
                cuts_added: outcome.cuts_added,
                max_scaled_violation: lp.max_scaled_violation(&x),
                psd_min_eigenvalue: lp.psd_block.as_ref().map(|b| b.min_eigen(&x).0),
            };
            let mut est = StorageEstimate::new(dict.clone(), x[..d].to_vec(), x[d].max(0.0), opts.supply)?;
            est.diagnostics = diagnostics;
            Ok(Identification::Estimate(est))
        }
        SolveStatus::Infeasible => Ok(Identification::Infeasible(InfeasibleReport {
            window: opts.window,
            supply: opts.supply,
            structural: opts.structural,
            constraint_count: lp.rows.len(),
            certificate: outcome.certificate,
        })),
        SolveStatus::Unbounded => Err(Error::Solver(
            "margin is unbounded; the data carry no excitation of the supply-rate term".into(),
        )),
        SolveStatus::IterationLimit => Err(Error::Solver(format!(
            "iteration limit reached after {} pivots and {} cuts",
            outcome.iterations, outcome.cuts_added
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub eps_pos: f64,
    pub floor: PositivityFloor,
    /// Slack allowed on every row before it counts as violated.
    pub tolerance: f64,
    pub use_pruned: bool,
    pub quadrature: Quadrature,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { eps_pos: 1e-6, floor: PositivityFloor::FeatureScaled, tolerance: 1e-8, use_pruned: false, quadrature: Quadrature::Trapezoid }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub positivity_checked: usize,
    pub positivity_violations: usize,
    pub dissipation_checked: usize,
    pub dissipation_violations: usize,
    /// Most negative `S(x_i) - floor_i`.
    pub worst_positivity_slack: f64,
    /// Most negative `int w dt - (S(x_j) - S(x_k))`.
    pub worst_dissipation_slack: f64,
}

impl VerificationReport {
    pub fn violations(&self) -> usize {
        self.positivity_violations + self.dissipation_violations
    }
}

/// Checks the positivity and windowed dissipation inequalities of an
/// estimate on (possibly held-out) data.
pub fn verify_estimate(
    est: &StorageEstimate,
    traj: &Trajectory,
    window: usize,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    check_dims(traj, &est.dictionary)?;
    if window == 0 || window >= traj.len() {
        return Err(Error::arg(format!("window size must be in 1..={}, got {window}", traj.len() - 1)));
    }
    let s: Vec<f64> = traj.states().map(|x| est.eval_storage(x, opts.use_pruned)).collect();

    let mut report = VerificationReport {
        positivity_checked: traj.len(),
        positivity_violations: 0,
        dissipation_checked: traj.len() - window,
        dissipation_violations: 0,
        worst_positivity_slack: f64::INFINITY,
        worst_dissipation_slack: f64::INFINITY,
    };
    for (x, &si) in traj.states().zip(&s) {
        let slack = si - opts.floor.floor(opts.eps_pos, &est.dictionary.eval_features(x));
        report.worst_positivity_slack = report.worst_positivity_slack.min(slack);
        if slack < -opts.tolerance {
            report.positivity_violations += 1;
        }
    }

    let supply_int = traj.cumulative_integral(&traj.input_output_product(), opts.quadrature)?;
    let margin_int = match est.supply_kind.margin_integrand(traj) {
        Some(m) => Some(traj.cumulative_integral(&m, opts.quadrature)?),
        None => None,
    };
    for k in 0..traj.len() - window {
        let j = k + window;
        let w = supply_int[j] - supply_int[k] - est.margin * margin_int.as_ref().map_or(0.0, |c| c[j] - c[k]);
        let slack = w - (s[j] - s[k]);
        report.worst_dissipation_slack = report.worst_dissipation_slack.min(slack);
        if slack < -opts.tolerance {
            report.dissipation_violations += 1;
        }
    }
    Ok(report)
}
