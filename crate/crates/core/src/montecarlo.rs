//! Time-domain check of the zero-frequency variances.
//!
//! The linearised quadrature Langevin equations `dx = A x dt + B dW` are
//! integrated by Euler–Maruyama with vacuum white-noise inputs of power
//! `N_c` per channel, and the output `out = B x - in` of a witness is integrated
//! over two nested windows of lengths `T_S < T_L`. For a stationary process
//! `E[I_T^2] = S T + c + o(1)`, so `Z = (I_L^2 - I_S^2) / (T_L - T_S)` is an
//! unbiased estimate of the zero-frequency spectral density `S` per trajectory,
//! free of the window-edge constant `c`.
//!
//! The left-point rectangle rule keeps the discrete zero-frequency gain equal to
//! the continuous one, so the only `dt` dependence is through the stationary
//! transient, not the target.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OpoParams, SteadyState};
use crate::spectra::transfer::{components, drift_matrix};
use crate::spectra::{Channel, Witness};

/// Relative standard error above which an estimate is flagged as under-sampled.
pub const UNDERSAMPLED_REL: f64 = 0.1;

const BLOWUP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integrator step in units of `1 / k_a`.
    pub dt: f64,
    /// Total simulated time per trajectory, burn-in included.
    pub t_total: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Discarded initial transient.
    pub burn_in: f64,
    /// Inverse length of the short integration window `T_S`. The long window
    /// covers everything after the burn-in.
    pub lowpass_bandwidth: f64,
}

impl SimConfig {
    /// Conservative settings derived from the slowest decay rate of the system.
    pub fn recommended(
        params: &OpoParams,
        ss: &SteadyState,
        n_traj: usize,
        seed: u64,
    ) -> Result<Self> {
        let rate = slowest_decay_rate(params, ss)?;
        let window = 10.0 / rate;
        Ok(SimConfig {
            dt: 0.01 / params.k_a.max(params.k_p),
            t_total: 10.0 / rate + 2.0 * window,
            n_traj,
            seed,
            burn_in: 10.0 / rate,
            lowpass_bandwidth: 1.0 / window,
        })
    }

    pub fn short_window(&self) -> f64 {
        1.0 / self.lowpass_bandwidth
    }

    pub fn long_window(&self) -> f64 {
        self.t_total - self.burn_in
    }

    pub fn validate(&self, params: &OpoParams, ss: &SteadyState) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        let max_rate = params.k_a.max(params.k_p);
        if !(self.dt > 0.0) || self.dt > 0.01 / max_rate * (1.0 + 1e-12) {
            return bad(format!(
                "dt = {} must lie in (0, {}]",
                self.dt,
                0.01 / max_rate
            ));
        }
        if self.n_traj < 2 {
            return bad("at least two trajectories are needed for a standard error".into());
        }
        if !(self.lowpass_bandwidth > 0.0) || !self.lowpass_bandwidth.is_finite() {
            return bad(format!(
                "lowpass_bandwidth must be > 0, got {}",
                self.lowpass_bandwidth
            ));
        }
        let rate = slowest_decay_rate(params, ss)?;
        if self.burn_in < 10.0 / rate * (1.0 - 1e-9) {
            return bad(format!(
                "burn_in = {} is shorter than 10 / slowest decay rate = {}",
                self.burn_in,
                10.0 / rate
            ));
        }
        if self.long_window() < 2.0 * self.short_window() * (1.0 - 1e-12) {
            return bad(format!(
                "t_total - burn_in = {} must be at least twice 1 / lowpass_bandwidth = {}",
                self.long_window(),
                self.short_window()
            ));
        }
        if self.short_window() < self.dt {
            return bad("short window is shorter than one step".into());
        }
        Ok(())
    }
}

/// Smallest nonzero `|Re lambda|` of the drift matrix; undamped directions are
/// excluded since witnesses free of `P-` channels never see them.
pub fn slowest_decay_rate(params: &OpoParams, ss: &SteadyState) -> Result<f64> {
    params.validate()?;
    ss.check_against(params)?;
    let a = drift_matrix(params, ss);
    let scale = params.k_a.max(params.k_p);
    let ev = a.complex_eigenvalues();
    if ev.iter().any(|l| l.re > 1e-10 * scale) {
        return Err(Error::Simulation("linearised dynamics are unstable".into()));
    }
    ev.iter()
        .map(|l| -l.re)
        .filter(|&r| r > 1e-9 * scale)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Simulation("no damped direction".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub label: String,
    pub estimate: f64,
    pub stderr: f64,
    pub n_traj: usize,
    pub undersampled: bool,
}

impl McEstimate {
    fn from_samples(label: String, z: &[f64]) -> Self {
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let stderr = (var / n).sqrt();
        McEstimate {
            label,
            estimate: mean,
            stderr,
            n_traj: z.len(),
            undersampled: stderr > UNDERSAMPLED_REL * mean.abs(),
        }
    }

    /// `|estimate - reference|` in units of the standard error.
    pub fn sigma_distance(&self, reference: f64) -> f64 {
        (self.estimate - reference).abs() / self.stderr
    }
}

/// The simulated subsystem: channels coupled to any witness channel.
struct Plant {
    a: DMatrix<f64>,
    noise_sd: Vec<f64>,
    /// `B` entries, `sqrt(2k)`.
    gain: Vec<f64>,
    /// Per witness: weights on the state (`w B`) and on the input (`-w`).
    state_w: Vec<DVector<f64>>,
    input_w: Vec<DVector<f64>>,
}

impl Plant {
    fn new(ws: &[Witness], params: &OpoParams, ss: &SteadyState) -> Result<Self> {
        let n = params.n;
        let full = drift_matrix(params, ss);
        let mut keep: Vec<usize> = Vec::new();
        for comp in components(&full) {
            let touched = ws
                .iter()
                .any(|w| w.terms().iter().any(|(c, _)| comp.contains(&c.index(n))));
            if touched {
                keep.extend(comp);
            }
        }
        keep.sort_unstable();
        let m = keep.len();
        let channel = |r: usize| Channel::from_index(keep[r], n).unwrap();
        let a = DMatrix::from_fn(m, m, |r, c| full[(keep[r], keep[c])]);
        let noise_sd = (0..m).map(|r| channel(r).noise_power().sqrt()).collect();
        let gain: Vec<f64> = (0..m)
            .map(|r| (2.0 * channel(r).loss_rate(params.k_a, params.k_p)).sqrt())
            .collect();
        let state_w = ws
            .iter()
            .map(|w| DVector::from_fn(m, |r, _| w.weight(channel(r)) * gain[r]))
            .collect();
        let input_w = ws
            .iter()
            .map(|w| DVector::from_fn(m, |r, _| -w.weight(channel(r))))
            .collect();
        Ok(Plant {
            a,
            noise_sd,
            gain,
            state_w,
            input_w,
        })
    }

    fn dim(&self) -> usize {
        self.gain.len()
    }
}

/// Window integrals for one trajectory, as `Z` samples per witness.
///
/// With `substeps = 2` the same noise also drives a path with step `dt / 2`,
/// and the returned vector holds the coarse samples followed by the fine ones.
fn run_trajectory(plant: &Plant, cfg: &SimConfig, index: u64, substeps: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let m = plant.dim();
    let nw = plant.state_w.len();
    let dt = cfg.dt;
    let burn_steps = (cfg.burn_in / dt).round() as usize;
    let short_steps = (cfg.short_window() / dt).round() as usize;
    let long_steps = (cfg.long_window() / dt).round() as usize;
    let t_s = short_steps as f64 * dt;
    let t_l = long_steps as f64 * dt;

    let paths = if substeps == 1 { 1 } else { 2 };
    let mut x: Vec<DVector<f64>> = vec![DVector::zeros(m); paths];
    let mut integral = vec![0.0; nw * paths];
    let mut at_short = vec![0.0; nw * paths];
    let mut sub_dw: Vec<DVector<f64>> = vec![DVector::zeros(m); substeps];
    let mut dw = DVector::zeros(m);
    let mut drift = DVector::zeros(m);

    for step in 0..burn_steps + long_steps {
        let h = dt / substeps as f64;
        for inc in sub_dw.iter_mut() {
            for r in 0..m {
                let z: f64 = rng.sample(StandardNormal);
                inc[r] = plant.noise_sd[r] * h.sqrt() * z;
            }
        }
        let recording = step >= burn_steps;
        for p in 0..paths {
            // path 0 takes one step of dt with the summed increment
            let (steps, step_dt) = if p == 0 { (1, dt) } else { (substeps, h) };
            for s in 0..steps {
                if p == 0 {
                    dw.fill(0.0);
                    for inc in &sub_dw {
                        dw += inc;
                    }
                } else {
                    dw.copy_from(&sub_dw[s]);
                }
                if recording {
                    for k in 0..nw {
                        integral[p * nw + k] +=
                            plant.state_w[k].dot(&x[p]) * step_dt + plant.input_w[k].dot(&dw);
                    }
                }
                plant.a.mul_to(&x[p], &mut drift);
                let xp = &mut x[p];
                for r in 0..m {
                    xp[r] += drift[r] * step_dt + plant.gain[r] * dw[r];
                }
            }
            if x[p].iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
                return Err(Error::Simulation(format!(
                    "trajectory {index} diverged at t = {}",
                    (step + 1) as f64 * dt
                )));
            }
        }
        if recording && step + 1 - burn_steps == short_steps {
            at_short.copy_from_slice(&integral);
        }
    }
    Ok(integral
        .iter()
        .zip(&at_short)
        .map(|(l, s)| (l * l - s * s) / (t_l - t_s))
        .collect())
}

fn check_witnesses(ws: &[Witness], params: &OpoParams) -> Result<()> {
    if ws.is_empty() {
        return Err(Error::InvalidWitness("no witness to simulate".into()));
    }
    for w in ws {
        w.check_range(params.n)?;
        if w.uses_p_minus() {
            return Err(Error::InvalidWitness(format!(
                "'{}' has weight on a P- channel, whose zero-frequency variance diverges",
                w.label
            )));
        }
    }
    Ok(())
}

/// Zero-frequency output variances of several witnesses from one set of
/// trajectories. Trajectory `i` uses stream `i` of a generator seeded with
/// `cfg.seed`, so results do not depend on the thread count.
pub fn simulate_dc_variances(
    ws: &[Witness],
    params: &OpoParams,
    ss: &SteadyState,
    cfg: &SimConfig,
) -> Result<Vec<McEstimate>> {
    check_witnesses(ws, params)?;
    cfg.validate(params, ss)?;
    let plant = Plant::new(ws, params, ss)?;
    let samples = (0..cfg.n_traj as u64)
        .into_par_iter()
        .map(|i| run_trajectory(&plant, cfg, i, 1))
        .collect::<Result<Vec<_>>>()?;
    Ok(ws
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let z: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            McEstimate::from_samples(w.label.clone(), &z)
        })
        .collect())
}

pub fn simulate_dc_variance(
    w: &Witness,
    params: &OpoParams,
    ss: &SteadyState,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    Ok(simulate_dc_variances(std::slice::from_ref(w), params, ss, cfg)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtBias {
    pub coarse: McEstimate,
    pub fine: McEstimate,
    /// Mean of the paired differences `fine - coarse`.
    pub difference: f64,
    pub difference_stderr: f64,
}

/// Runs coupled paths with steps `dt` and `dt / 2` driven by the same noise.
pub fn dt_bias_check(
    ws: &[Witness],
    params: &OpoParams,
    ss: &SteadyState,
    cfg: &SimConfig,
) -> Result<Vec<DtBias>> {
    check_witnesses(ws, params)?;
    cfg.validate(params, ss)?;
    let plant = Plant::new(ws, params, ss)?;
    let nw = ws.len();
    let samples = (0..cfg.n_traj as u64)
        .into_par_iter()
        .map(|i| run_trajectory(&plant, cfg, i, 2))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..nw)
        .map(|k| {
            let coarse: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let fine: Vec<f64> = samples.iter().map(|s| s[nw + k]).collect();
            let diff: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| f - c).collect();
            let d = McEstimate::from_samples(String::new(), &diff);
            DtBias {
                coarse: McEstimate::from_samples(ws[k].label.clone(), &coarse),
                fine: McEstimate::from_samples(ws[k].label.clone(), &fine),
                difference: d.estimate,
                difference_stderr: d.stderr,
            }
        })
        .collect())
}
