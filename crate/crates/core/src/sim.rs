//! Fixed-step RK4 simulation of input-affine benchmark systems.

use serde::{Deserialize, Serialize};

use crate::dictionary::StorageEstimate;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// `x' = f(x) + g(x) u`, `y = h(x)`, single input and output.
pub trait InputAffineSystem: Sync {
    fn state_dim(&self) -> usize;
    fn drift(&self, x: &[f64], out: &mut [f64]);
    fn input_field(&self, x: &[f64], out: &mut [f64]);
    fn output(&self, x: &[f64]) -> f64;

    fn derivative(&self, x: &[f64], u: f64, out: &mut [f64]) {
        let mut g = vec![0.0; self.state_dim()];
        self.drift(x, out);
        self.input_field(x, &mut g);
        for (o, gi) in out.iter_mut().zip(g) {
            *o += gi * u;
        }
    }
}

/// Damped pendulum: `x1' = x2`, `x2' = -b1 sin x1 - b2 x2 + u`, `y = x2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pendulum {
    pub b1: f64,
    pub b2: f64,
}

impl Pendulum {
    pub fn new(b1: f64, b2: f64) -> Result<Self> {
        if !(b1 > 0.0 && b2 > 0.0) || !b1.is_finite() || !b2.is_finite() {
            return Err(Error::arg(format!("pendulum parameters must be positive, got b1={b1}, b2={b2}")));
        }
        Ok(Self { b1, b2 })
    }
}

impl InputAffineSystem for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[1];
        out[1] = -self.b1 * x[0].sin() - self.b2 * x[1];
    }

    fn input_field(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = 1.0;
    }

    fn output(&self, x: &[f64]) -> f64 {
        x[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// rad/s
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSignal {
    Zero,
    /// `2 (2 sin 0.2t + sin t + sin 2t)`
    #[default]
    ReferenceMultisine,
    SumOfSines { components: Vec<Sinusoid> },
}

impl InputSignal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            InputSignal::Zero => 0.0,
            InputSignal::ReferenceMultisine => 2.0 * (2.0 * (0.2 * t).sin() + t.sin() + (2.0 * t).sin()),
            InputSignal::SumOfSines { components } => components
                .iter()
                .map(|c| c.amplitude * (c.frequency * t + c.phase).sin())
                .sum(),
        }
    }
}

/// `u = -k * grad S(x) . b`.
#[derive(Debug, Clone)]
pub struct Controller {
    gain: f64,
    b: Vec<f64>,
    storage: StorageEstimate,
}

impl Controller {
    /// The pruned storage function is used when the estimate carries a mask.
    pub fn new(storage: StorageEstimate, b: Vec<f64>, gain: f64) -> Result<Self> {
        if !(gain >= 0.0) || !gain.is_finite() {
            return Err(Error::arg(format!("controller gain must be >= 0, got {gain}")));
        }
        if b.len() != storage.dictionary.state_dim() {
            return Err(Error::arg("structural vector b has the wrong dimension"));
        }
        Ok(Self { gain, b, storage })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn storage(&self) -> &StorageEstimate {
        &self.storage
    }

    /// `grad S(x) . b`
    pub fn lgs(&self, x: &[f64]) -> f64 {
        self.storage
            .storage_gradient(x, true)
            .iter()
            .zip(&self.b)
            .map(|(g, b)| g * b)
            .sum()
    }

    pub fn control(&self, x: &[f64]) -> f64 {
        -self.gain * self.lgs(x)
    }
}

/// Timing of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub duration: f64,
    pub sample_period: f64,
    pub internal_step: f64,
    /// Caps the number of recorded samples. The default 100 s / 0.1 s run
    /// keeps 1000 samples rather than 1001.
    #[serde(default)]
    pub max_samples: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { duration: 100.0, sample_period: 0.1, internal_step: 0.001, max_samples: Some(1000) }
    }
}

impl SimConfig {
    /// Internal steps per sample, after checking the configuration.
    pub fn steps_per_sample(&self) -> Result<usize> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.duration) || !ok(self.sample_period) || !ok(self.internal_step) {
            return Err(Error::arg("duration, sample period and internal step must be positive"));
        }
        if self.duration < self.sample_period {
            return Err(Error::arg("duration must be at least one sample period"));
        }
        let ratio = self.sample_period / self.internal_step;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
            return Err(Error::arg(format!(
                "internal step {} does not divide sample period {}",
                self.internal_step, self.sample_period
            )));
        }
        Ok(steps as usize)
    }

    pub fn sample_count(&self) -> Result<usize> {
        self.steps_per_sample()?;
        let n = (self.duration / self.sample_period * (1.0 + 1e-12)).floor() as usize + 1;
        Ok(match self.max_samples {
            Some(cap) => n.min(cap.max(2)),
            None => n,
        })
    }
}

fn rk4_step<S, U>(sys: &S, t: f64, x: &mut [f64], h: f64, input: &U, scratch: &mut [Vec<f64>; 5])
where
    S: InputAffineSystem + ?Sized,
    U: Fn(f64, &[f64]) -> f64,
{
    let n = x.len();
    let [k1, k2, k3, k4, tmp] = scratch;
    sys.derivative(x, input(t, x), k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    sys.derivative(tmp, input(t + 0.5 * h, tmp), k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    sys.derivative(tmp, input(t + 0.5 * h, tmp), k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    sys.derivative(tmp, input(t + h, tmp), k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Simulates with a generic input law `u = input(t, x)` evaluated at every
/// RK stage. The recorded input is the law evaluated at the sample.
pub fn simulate_with<S, U>(sys: &S, x0: &[f64], cfg: &SimConfig, input: U) -> Result<Trajectory>
where
    S: InputAffineSystem + ?Sized,
    U: Fn(f64, &[f64]) -> f64,
{
    let n = sys.state_dim();
    if x0.len() != n {
        return Err(Error::arg(format!("initial state has dimension {}, expected {n}", x0.len())));
    }
    let steps = cfg.steps_per_sample()?;
    let samples = cfg.sample_count()?;
    let h = cfg.sample_period / steps as f64;

    let mut x = x0.to_vec();
    let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let mut times = Vec::with_capacity(samples);
    let mut states = Vec::with_capacity(samples);
    let mut inputs = Vec::with_capacity(samples);
    let mut outputs = Vec::with_capacity(samples);

    for i in 0..samples {
        let t0 = i as f64 * cfg.sample_period;
        if i > 0 {
            let prev = (i - 1) as f64 * cfg.sample_period;
            for s in 0..steps {
                let t = prev + s as f64 * h;
                rk4_step(sys, t, &mut x, h, &input, &mut scratch);
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SimulationDiverged { time: t + h });
                }
            }
        }
        times.push(t0);
        inputs.push(input(t0, &x));
        outputs.push(sys.output(&x));
        states.push(x.clone());
    }
    Trajectory::new(times, states, inputs, outputs)
}

pub fn simulate<S>(sys: &S, x0: &[f64], signal: &InputSignal, cfg: &SimConfig) -> Result<Trajectory>
where
    S: InputAffineSystem + ?Sized,
{
    simulate_with(sys, x0, cfg, |t, _| signal.eval(t))
}

/// Simulates under the damping law; the control is applied at every
/// internal step.
pub fn simulate_closed_loop<S>(sys: &S, ctrl: &Controller, x0: &[f64], cfg: &SimConfig) -> Result<Trajectory>
where
    S: InputAffineSystem + ?Sized,
{
    if ctrl.b().len() != sys.state_dim() {
        return Err(Error::arg("controller dimension does not match the system"));
    }
    simulate_with(sys, x0, cfg, |_, x| ctrl.control(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn deriv(p: &Pendulum, x: [f64; 2], u: f64) -> [f64; 2] {
        let mut out = [0.0; 2];
        p.derivative(&x, u, &mut out);
        out
    }

    #[test]
    fn pendulum_vector_field() {
        let p = Pendulum::new(8.0, 0.5).unwrap();
        assert_eq!(deriv(&p, [0.0, 0.0], 0.0), [0.0, 0.0]);
        let d = deriv(&p, [FRAC_PI_2, 0.0], 0.0);
        assert!(d[0] == 0.0 && (d[1] + 8.0).abs() < 1e-15);
        assert_eq!(deriv(&p, [0.0, 1.0], 2.0), [1.0, 1.5]);
        assert!(Pendulum::new(0.0, 0.5).is_err());
        assert!(Pendulum::new(8.0, -1.0).is_err());
    }

    #[test]
    fn reference_input() {
        let u = InputSignal::ReferenceMultisine;
        assert_eq!(u.eval(0.0), 0.0);
        let t = 1.3_f64;
        let expected = 4.0 * (0.2 * t).sin() + 2.0 * t.sin() + 2.0 * (2.0 * t).sin();
        assert!((u.eval(t) - expected).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_is_preserved() {
        let p = Pendulum::new(8.0, 0.5).unwrap();
        let traj = simulate(&p, &[0.0, 0.0], &InputSignal::Zero, &SimConfig::default()).unwrap();
        assert_eq!(traj.len(), 1000);
        for x in traj.states() {
            assert!(x.iter().all(|v| v.abs() <= 1e-12));
        }
    }

    #[test]
    fn sample_counts() {
        let mut cfg = SimConfig { duration: 10.0, ..SimConfig::default() };
        assert_eq!(cfg.sample_count().unwrap(), 101);
        cfg.max_samples = None;
        cfg.duration = 100.0;
        assert_eq!(cfg.sample_count().unwrap(), 1001);
        cfg.internal_step = 0.03;
        assert!(cfg.sample_count().is_err());
        let short = SimConfig { duration: 0.05, ..SimConfig::default() };
        assert!(short.sample_count().is_err());
    }

    #[test]
    fn divergence_is_reported() {
        struct Blowup;
        impl InputAffineSystem for Blowup {
            fn state_dim(&self) -> usize {
                1
            }
            fn drift(&self, x: &[f64], out: &mut [f64]) {
                out[0] = x[0] * x[0];
            }
            fn input_field(&self, _: &[f64], out: &mut [f64]) {
                out[0] = 0.0;
            }
            fn output(&self, x: &[f64]) -> f64 {
                x[0]
            }
        }
        let cfg = SimConfig { duration: 5.0, sample_period: 0.1, internal_step: 0.01, max_samples: None };
        match simulate(&Blowup, &[1.0], &InputSignal::Zero, &cfg) {
            Err(Error::SimulationDiverged { time }) => assert!(time > 0.9 && time < 5.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_gain_matches_open_loop() {
        let p = Pendulum::new(8.0, 0.5).unwrap();
        let cfg = SimConfig { duration: 10.0, ..SimConfig::default() };
        let ctrl = Controller::new(StorageEstimate::pendulum_analytic(8.0, 0.5), vec![0.0, 1.0], 0.0).unwrap();
        let a = simulate_closed_loop(&p, &ctrl, &[1.0, 0.0], &cfg).unwrap();
        let b = simulate(&p, &[1.0, 0.0], &InputSignal::Zero, &cfg).unwrap();
        assert_eq!(a.channel(0), b.channel(0));
        assert_eq!(a.channel(1), b.channel(1));
    }

    #[test]
    fn analytic_damping_law_is_minus_x2() {
        let p = Pendulum::new(8.0, 0.5).unwrap();
        let cfg = SimConfig { duration: 10.0, ..SimConfig::default() };
        let est = StorageEstimate::pendulum_analytic(8.0, 0.5);
        let ctrl = Controller::new(est.clone(), vec![0.0, 1.0], 1.0).unwrap();
        let traj = simulate_closed_loop(&p, &ctrl, &[1.0, 0.0], &cfg).unwrap();
        for (x, u) in traj.states().zip(traj.inputs()) {
            assert!((u + x[1]).abs() < 1e-14);
        }
        let s: Vec<f64> = traj.states().map(|x| est.eval_storage(x, false)).collect();
        for w in s.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(Controller::new(est, vec![0.0, 1.0], -1.0).is_err());
    }
}
