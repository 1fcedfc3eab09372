//! Uses of an identified storage function: Lie-derivative estimates,
//! negative regions, domain-of-attraction levels, feedback certificates and
//! damping control.

mod doa;
mod region;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::StorageEstimate;
use crate::error::{Error, Result};
use crate::sim::{Controller, InputAffineSystem};
use crate::trajectory::Trajectory;

pub use doa::{doa_estimate, level_curve_points, DoaEstimate, DoaOptions, DoaReport, SearchBox};
pub use region::{negative_region, RegionDescriptor, RegionKind, RegionOptions};

/// Forward differences `(S(x_{k+1}) - S(x_k)) / Ts`, one per interval.
pub fn estimate_sdot(est: &StorageEstimate, traj: &Trajectory) -> Vec<f64> {
    let ts = traj.sample_period();
    let s: Vec<f64> = traj.states().map(|x| est.eval_storage(x, true)).collect();
    s.windows(2).map(|w| (w[1] - w[0]) / ts).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LfsMethod {
    AutonomousDifference,
    InputCorrected,
}

/// Estimated drift Lie derivative, one value per sampling interval, stamped
/// with the interval's left end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfsSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub method: LfsMethod,
}

impl LfsSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("t,lfs\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            let _ = writeln!(s, "{t},{v}");
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Knowledge about the input field `g(x)` required to remove the input
/// contribution from `S'`.
#[derive(Clone, Copy)]
pub enum InputPrior<'a> {
    /// Constant surrogate `b` with the sign pattern of `g`.
    Constant(&'a [f64]),
    /// The exact field.
    Field(&'a dyn Fn(&[f64], &mut [f64])),
}

impl InputPrior<'_> {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            InputPrior::Constant(b) => out.copy_from_slice(b),
            InputPrior::Field(f) => f(x, out),
        }
    }
}

/// `L_f S` from sampled data: the forward difference of `S` minus the average
/// of `L_g S u` at the two ends of each interval. Without input the result is
/// [`estimate_sdot`].
pub fn estimate_lfs(est: &StorageEstimate, traj: &Trajectory, prior: Option<InputPrior<'_>>) -> Result<LfsSeries> {
    let n = traj.state_dim();
    let sdot = estimate_sdot(est, traj);
    let times = traj.times()[..traj.len() - 1].to_vec();
    let u = traj.inputs();
    if u.iter().all(|&v| v == 0.0) {
        return Ok(LfsSeries { times, values: sdot, method: LfsMethod::AutonomousDifference });
    }
    let prior = prior.ok_or_else(|| {
        Error::MissingPrior("the input is not identically zero, so the input field g(x) or a constant surrogate is required".into())
    })?;
    if let InputPrior::Constant(b) = prior {
        if b.len() != n {
            return Err(Error::arg(format!("input prior has {} entries for a {n}-dimensional state", b.len())));
        }
    }
    let mut g = vec![0.0; n];
    let lgs_u: Vec<f64> = traj
        .states()
        .zip(u)
        .map(|(x, &uk)| {
            prior.eval(x, &mut g);
            let grad = est.storage_gradient(x, true);
            grad.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() * uk
        })
        .collect();
    let values = sdot
        .iter()
        .enumerate()
        .map(|(k, d)| d - 0.5 * (lgs_u[k] + lgs_u[k + 1]))
        .collect();
    Ok(LfsSeries { times, values, method: LfsMethod::InputCorrected })
}

/// `grad S(x) . f(x)` at every sample, from a known model.
pub fn model_lfs<S: InputAffineSystem>(est: &StorageEstimate, sys: &S, traj: &Trajectory) -> LfsSeries {
    let mut f = vec![0.0; sys.state_dim()];
    let values = traj
        .states()
        .take(traj.len() - 1)
        .map(|x| {
            sys.drift(x, &mut f);
            est.storage_gradient(x, true).iter().zip(&f).map(|(a, b)| a * b).sum()
        })
        .collect();
    LfsSeries {
        times: traj.times()[..traj.len() - 1].to_vec(),
        values,
        method: LfsMethod::AutonomousDifference,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    NotCertified,
}

/// Negative feedback of an OFP(`rho`) system with an IFP(`nu`) system is
/// stable when `nu > -rho`.
pub fn certify_feedback(rho: f64, nu: f64) -> Verdict {
    if nu > -rho {
        Verdict::Certified
    } else {
        Verdict::NotCertified
    }
}

/// Damping controller `u = -k grad S(x) . b` with `b` a constant stand-in for
/// the input field.
pub fn damping_control(est: &StorageEstimate, b: &[f64], k: f64) -> Result<Controller> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::arg(format!("damping gain must be positive, got {k}")));
    }
    if b.iter().all(|&v| v == 0.0) {
        return Err(Error::arg("structural vector b is all zero"));
    }
    Controller::new(est.clone(), b.to_vec(), k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{Dictionary, Feature};
    use crate::identify::SupplyKind;
    use crate::sim::{simulate, InputSignal, Pendulum, SimConfig};

    fn x2_squared() -> StorageEstimate {
        let d = Dictionary::new(vec![Feature::Square(1)], 2).unwrap();
        StorageEstimate::new(d, vec![1.0], 0.0, SupplyKind::Passive).unwrap()
    }

    fn ramp(n: usize, ts: f64, u: f64) -> Trajectory {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * ts).collect();
        let x = t.iter().map(|&t| vec![0.0, t]).collect();
        Trajectory::new(t.clone(), x, vec![u; n], t.clone()).unwrap()
    }

    #[test]
    fn sdot_of_constant_is_zero() {
        let t: Vec<f64> = (0..5).map(|k| k as f64 * 0.1).collect();
        let traj = Trajectory::new(t, vec![vec![0.3, -0.2]; 5], vec![0.0; 5], vec![-0.2; 5]).unwrap();
        let d = estimate_sdot(&StorageEstimate::pendulum_analytic(8.0, 0.5), &traj);
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sdot_of_square_ramp() {
        let traj = ramp(11, 0.1, 0.0);
        let d = estimate_sdot(&x2_squared(), &traj);
        for (k, v) in d.iter().enumerate() {
            let t = k as f64 * 0.1;
            assert!((v - (2.0 * t + 0.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_storage_decreases_on_autonomous_run() {
        let p = Pendulum::new(8.0, 0.5).unwrap();
        let cfg = SimConfig { duration: 20.0, ..SimConfig::default() };
        let traj = simulate(&p, &[1.0, 0.0], &InputSignal::Zero, &cfg).unwrap();
        let d = estimate_sdot(&StorageEstimate::pendulum_analytic(8.0, 0.5), &traj);
        assert!(d.iter().all(|&v| v <= 1e-3));
    }

    #[test]
    fn lfs_equals_sdot_without_input() {
        let traj = ramp(11, 0.1, 0.0);
        let est = x2_squared();
        let l = estimate_lfs(&est, &traj, None).unwrap();
        assert_eq!(l.values, estimate_sdot(&est, &traj));
        assert_eq!(l.method, LfsMethod::AutonomousDifference);
        let b = [0.0, 1.0];
        let l = estimate_lfs(&est, &traj, Some(InputPrior::Constant(&b))).unwrap();
        assert_eq!(l.values, estimate_sdot(&est, &traj));
    }

    #[test]
    fn lfs_needs_prior_with_input() {
        let traj = ramp(11, 0.1, 1.0);
        let err = estimate_lfs(&x2_squared(), &traj, None).unwrap_err();
        assert!(matches!(err, Error::MissingPrior(_)));
    }

    #[test]
    fn lfs_input_correction() {
        // x2 = t driven by u = 1: S' = 2 x2 = L_g S u, so L_f S vanishes
        // up to the trapezoid error of the average.
        let traj = ramp(11, 0.1, 1.0);
        let b = [0.0, 1.0];
        let l = estimate_lfs(&x2_squared(), &traj, Some(InputPrior::Constant(&b))).unwrap();
        assert_eq!(l.method, LfsMethod::InputCorrected);
        assert!(l.values.iter().all(|v| v.abs() < 1e-12));
        let field = |_: &[f64], out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = 1.0;
        };
        let l2 = estimate_lfs(&x2_squared(), &traj, Some(InputPrior::Field(&field))).unwrap();
        assert_eq!(l.values, l2.values);
    }

    #[test]
    fn lfs_csv_header() {
        let traj = ramp(3, 0.5, 0.0);
        let csv = estimate_lfs(&x2_squared(), &traj, None).unwrap().to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,lfs");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn certification_rule() {
        assert_eq!(certify_feedback(0.5, -0.3), Verdict::Certified);
        assert_eq!(certify_feedback(0.5, -0.5), Verdict::NotCertified);
        assert_eq!(certify_feedback(0.496, 0.0), Verdict::Certified);
    }

    #[test]
    fn damping_law_for_analytic_storage() {
        let c = damping_control(&StorageEstimate::pendulum_analytic(8.0, 0.5), &[0.0, 1.0], 2.0).unwrap();
        for x in [[0.3, -1.2], [1.0, 0.5], [-2.0, 2.0]] {
            assert!((c.control(&x) + 2.0 * x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn damping_law_for_reference_estimate() {
        let mut theta = vec![0.0; 9];
        theta[0] = 0.123;
        theta[2] = 0.494;
        theta[7] = 7.67;
        let est = StorageEstimate::new(Dictionary::pendulum(), theta, 0.496, SupplyKind::Ofp).unwrap();
        let k = 1.5;
        let c = damping_control(&est, &[0.0, 1.0], k).unwrap();
        let x = [0.7, -0.4];
        assert!((c.control(&x) + k * 0.988 * x[1]).abs() < 1e-12);
    }

    #[test]
    fn damping_rejects_bad_arguments() {
        let est = StorageEstimate::pendulum_analytic(8.0, 0.5);
        assert!(damping_control(&est, &[0.0, 1.0], -1.0).is_err());
        assert!(damping_control(&est, &[0.0, 1.0], 0.0).is_err());
        assert!(damping_control(&est, &[0.0, 0.0], 1.0).is_err());
    }
}
