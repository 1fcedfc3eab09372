//! Uniformly sampled input/state/output records.
//!
//! A [`Trajectory`] is what an experimenter hands to the identification
//! step: `N` samples of time, state, input and output on a uniform grid.
//! Everything downstream only ever sees these samples, so the module also
//! owns the quadrature used for supply-rate integrals and the CSV format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance of additive measurement noise on one state channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseMeta {
    /// Zero-based state index.
    pub channel: usize,
    pub sigma: f64,
    pub seed: u64,
}

/// Rule used to integrate sampled signals over a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Composite trapezoid, `O(Ts^2)`.
    #[default]
    Trapezoid,
    /// Trapezoid with the Euler-Maclaurin endpoint term
    /// `-Ts^2/12 (f'(b) - f'(a))`, derivatives by second-order differences.
    EndCorrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    sample_times: Vec<f64>,
    // row-major, `len() * state_dim`
    states: Vec<f64>,
    state_dim: usize,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
    sample_period: f64,
    noise: Vec<NoiseMeta>,
}

fn grid_tolerance(period: f64, t: f64) -> f64 {
    1e-12 * period + 8.0 * f64::EPSILON * t.abs()
}

impl Trajectory {
    /// Builds a trajectory, checking that all channels have the same length
    /// `N >= 2`, that the time grid is strictly increasing and uniform, and
    /// that every state has the same dimension.
    pub fn new(
        sample_times: Vec<f64>,
        states: Vec<Vec<f64>>,
        inputs: Vec<f64>,
        outputs: Vec<f64>,
    ) -> Result<Self> {
        let n_samples = sample_times.len();
        if n_samples < 2 {
            return Err(Error::arg("need at least 2 samples"));
        }
        if states.len() != n_samples || inputs.len() != n_samples || outputs.len() != n_samples {
            return Err(Error::arg(format!(
                "channel lengths differ: times {}, states {}, inputs {}, outputs {}",
                n_samples,
                states.len(),
                inputs.len(),
                outputs.len()
            )));
        }
        let state_dim = states[0].len();
        if state_dim == 0 {
            return Err(Error::arg("state dimension must be at least 1"));
        }
        let mut flat = Vec::with_capacity(n_samples * state_dim);
        for (i, x) in states.iter().enumerate() {
            if x.len() != state_dim {
                return Err(Error::arg(format!(
                    "sample {i} has state dimension {}, expected {state_dim}",
                    x.len()
                )));
            }
            flat.extend_from_slice(x);
        }
        let sample_period = sample_times[1] - sample_times[0];
        if !(sample_period > 0.0) {
            return Err(Error::arg("sample times must be strictly increasing"));
        }
        for i in 1..n_samples {
            let dt = sample_times[i] - sample_times[i - 1];
            if !(dt > 0.0) {
                return Err(Error::arg(format!(
                    "sample times must be strictly increasing (index {i})"
                )));
            }
            if (dt - sample_period).abs() > grid_tolerance(sample_period, sample_times[i]) {
                return Err(Error::arg(format!(
                    "non-uniform sampling at index {i}: step {dt} vs period {sample_period}"
                )));
            }
        }
        Ok(Self {
            sample_times,
            states: flat,
            state_dim,
            inputs,
            outputs,
            sample_period,
            noise: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.sample_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn times(&self) -> &[f64] {
        &self.sample_times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.states.chunks_exact(self.state_dim)
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn noise(&self) -> &[NoiseMeta] {
        &self.noise
    }

    /// Values of one state channel across all samples.
    pub fn channel(&self, channel: usize) -> Vec<f64> {
        self.states().map(|x| x[channel]).collect()
    }

    /// Pointwise product `u(t_i) * y(t_i)`.
    pub fn input_output_product(&self) -> Vec<f64> {
        self.inputs.iter().zip(&self.outputs).map(|(u, y)| u * y).collect()
    }

    /// Returns a copy with i.i.d. `N(0, sigma^2)` samples added to one state
    /// channel. Inputs and outputs are left as recorded.
    pub fn add_measurement_noise(&self, channel: usize, sigma: f64, seed: u64) -> Result<Self> {
        if channel >= self.state_dim {
            return Err(Error::arg(format!(
                "noise channel {channel} out of range for state dimension {}",
                self.state_dim
            )));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::arg(format!("noise sigma must be >= 0, got {sigma}")));
        }
        let mut out = self.clone();
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::arg(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for x in out.states.chunks_exact_mut(self.state_dim) {
                x[channel] += normal.sample(&mut rng);
            }
        }
        out.noise.push(NoiseMeta { channel, sigma, seed });
        Ok(out)
    }

    /// Trapezoid-rule integral of `integrand` over `[t_k, t_j]`.
    pub fn trapezoid_integral(&self, integrand: &[f64], k: usize, j: usize) -> Result<f64> {
        if integrand.len() != self.len() {
            return Err(Error::arg(format!(
                "integrand has {} samples, trajectory has {}",
                integrand.len(),
                self.len()
            )));
        }
        if !(k < j && j < self.len()) {
            return Err(Error::arg(format!(
                "integration window requires k < j < N, got k={k}, j={j}, N={}",
                self.len()
            )));
        }
        let interior: f64 = integrand[k + 1..j].iter().sum();
        Ok(self.sample_period * (0.5 * (integrand[k] + integrand[j]) + interior))
    }

    /// Running integral `out[i] = int_{t_0}^{t_i} f dt`; window integrals are
    /// differences of two entries.
    pub fn cumulative_integral(&self, integrand: &[f64], rule: Quadrature) -> Result<Vec<f64>> {
        if integrand.len() != self.len() {
            return Err(Error::arg(format!(
                "integrand has {} samples, trajectory has {}",
                integrand.len(),
                self.len()
            )));
        }
        let h = self.sample_period;
        let mut out = Vec::with_capacity(integrand.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in integrand.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            out.push(acc);
        }
        if rule == Quadrature::EndCorrected && integrand.len() >= 3 {
            let d = central_derivative(integrand, h);
            let c = h * h / 12.0;
            for (o, di) in out.iter_mut().zip(&d) {
                *o -= c * (di - d[0]);
            }
        }
        Ok(out)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&fs::read_to_string(path)?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        for m in &self.noise {
            // stored 1-based to match the header names
            let _ = writeln!(
                s,
                "# noise: channel={} sigma={:e} seed={}",
                m.channel + 1,
                m.sigma,
                m.seed
            );
        }
        s.push('t');
        for i in 1..=self.state_dim {
            let _ = write!(s, ",x{i}");
        }
        s.push_str(",u,y\n");
        for i in 0..self.len() {
            let _ = write!(s, "{:.17e}", self.sample_times[i]);
            for v in self.state(i) {
                let _ = write!(s, ",{v:.17e}");
            }
            let _ = writeln!(s, ",{:.17e},{:.17e}", self.inputs[i], self.outputs[i]);
        }
        s
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut noise = Vec::new();
        let mut header: Option<(usize, usize)> = None; // (line, state_dim)
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(meta) = comment.trim().strip_prefix("noise:") {
                    noise.push(parse_noise_meta(meta, line_no)?);
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let Some((_, dim)) = header else {
                header = Some((line_no, parse_header(&fields, line_no)?));
                continue;
            };
            if fields.len() != dim + 3 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {} fields, found {}", dim + 3, fields.len()),
                });
            }
            let mut values = Vec::with_capacity(fields.len());
            for f in &fields {
                values.push(f.parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("bad number {f:?}: {e}"),
                })?);
            }
            if let Some(&prev) = times.last() {
                if !(values[0] > prev) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("time {} does not increase (previous {prev})", values[0]),
                    });
                }
            }
            times.push(values[0]);
            states.push(values[1..=dim].to_vec());
            inputs.push(values[dim + 1]);
            outputs.push(values[dim + 2]);
        }

        let Some((header_line, _)) = header else {
            return Err(Error::Parse { line: 1, message: "missing header `t,x1,...,xn,u,y`".into() });
        };
        if times.len() < 2 {
            return Err(Error::Parse {
                line: header_line,
                message: "need at least 2 samples".into(),
            });
        }
        for m in &noise {
            if m.channel >= states[0].len() {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("noise channel {} out of range", m.channel + 1),
                });
            }
        }
        let mut traj = Trajectory::new(times, states, inputs, outputs).map_err(|e| Error::Parse {
            line: header_line,
            message: e.to_string(),
        })?;
        traj.noise = noise;
        Ok(traj)
    }
}

fn central_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    d
}

fn parse_header(fields: &[&str], line: usize) -> Result<usize> {
    let bad = |message: String| Error::Parse { line, message };
    if fields.len() < 4 {
        return Err(bad(format!("malformed header, expected `t,x1,...,xn,u,y`, got {fields:?}")));
    }
    let dim = fields.len() - 3;
    if fields[0] != "t" || fields[dim + 1] != "u" || fields[dim + 2] != "y" {
        return Err(bad(format!("malformed header, expected `t,x1,...,xn,u,y`, got {fields:?}")));
    }
    for (i, name) in fields[1..=dim].iter().enumerate() {
        if *name != format!("x{}", i + 1) {
            return Err(bad(format!("malformed header: column {} should be x{}", i + 2, i + 1)));
        }
    }
    Ok(dim)
}

fn parse_noise_meta(meta: &str, line: usize) -> Result<NoiseMeta> {
    let bad = |message: String| Error::Parse { line, message };
    let mut channel = None;
    let mut sigma = None;
    let mut seed = None;
    for kv in meta.split_whitespace() {
        let (key, value) = kv.split_once('=').ok_or_else(|| bad(format!("bad noise field {kv:?}")))?;
        match key {
            "channel" => {
                let c: usize = value.parse().map_err(|_| bad(format!("bad channel {value:?}")))?;
                if c == 0 {
                    return Err(bad("noise channel is 1-based".into()));
                }
                channel = Some(c - 1);
            }
            "sigma" => sigma = Some(value.parse().map_err(|_| bad(format!("bad sigma {value:?}")))?),
            "seed" => seed = Some(value.parse().map_err(|_| bad(format!("bad seed {value:?}")))?),
            _ => return Err(bad(format!("unknown noise field {key:?}"))),
        }
    }
    match (channel, sigma, seed) {
        (Some(channel), Some(sigma), Some(seed)) => Ok(NoiseMeta { channel, sigma, seed }),
        _ => Err(bad("noise comment needs channel, sigma and seed".into())),
    }
}
