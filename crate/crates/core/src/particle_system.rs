//! The n-particle system, its Girsanov-tilted version and pathwise diagnostics.
//!
//! Each step first reduces the ensemble to its mean and φ value (sequentially,
//! so the reduction order is fixed), then advances every particle in parallel.
//! Particle `i` draws only from its own stream, so trajectories do not depend on
//! the number of worker threads.

use crate::csv::{fmt_sig9, CsvTable};
use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, MeasurePath};
use crate::model::ModelSpec;
use crate::rng::StreamRng;
use crate::sde_engine::{euler_step, sample_affine_exact, Scheme, SchemeConfig};
use rayon::prelude::*;
use std::fmt;
use std::sync::Arc;

/// Below this many particles a step is cheaper done on one thread.
const PAR_MIN_LEN: usize = 512;

/// Particle states on a grid, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemTrajectory {
    grid: Vec<f64>,
    n: usize,
    states: Vec<f64>,
}

impl SystemTrajectory {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// States of all particles at node `k`.
    pub fn states_at(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }

    pub fn terminal(&self) -> &[f64] {
        self.states_at(self.grid.len() - 1)
    }

    pub fn particle_path(&self, i: usize) -> Vec<f64> {
        (0..self.grid.len()).map(|k| self.states_at(k)[i]).collect()
    }

    /// `S_n(t) = Σ_i X_i(t)` per node.
    pub fn sum_path(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|k| self.states_at(k).iter().sum()).collect()
    }

    /// π(ρⁿ): the empirical measure at every node.
    pub fn measure_path(&self) -> MeasurePath {
        let measures = (0..self.grid.len())
            .map(|k| EmpiricalMeasure::from_state(self.states_at(k)))
            .collect();
        MeasurePath::new(self.grid.clone(), measures).expect("simulation grid is valid")
    }

    /// Full dump, header `t,i,x`.
    pub fn to_csv(&self) -> String {
        let mut table = CsvTable::new(&["t", "i", "x"]);
        for (k, t) in self.grid.iter().enumerate() {
            for (i, x) in self.states_at(k).iter().enumerate() {
                table.raw_row(&[fmt_sig9(*t), i.to_string(), fmt_sig9(*x)]);
            }
        }
        table.into_string()
    }
}

pub type FeedbackFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Control `u_i` applied identically to every particle.
#[derive(Clone, Default)]
pub enum ControlSpec {
    #[default]
    Zero,
    Constant(f64),
    OfTime(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// `u(t, x_i, mean of ρⁿ)`.
    Feedback(FeedbackFn),
}

impl fmt::Debug for ControlSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlSpec::Zero => f.write_str("Zero"),
            ControlSpec::Constant(c) => write!(f, "Constant({c})"),
            ControlSpec::OfTime(_) => f.write_str("OfTime(..)"),
            ControlSpec::Feedback(_) => f.write_str("Feedback(..)"),
        }
    }
}

impl ControlSpec {
    pub fn of_time(u: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ControlSpec::OfTime(Arc::new(u))
    }

    pub fn feedback(u: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        ControlSpec::Feedback(Arc::new(u))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ControlSpec::Zero)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64, mean: f64) -> f64 {
        match self {
            ControlSpec::Zero => 0.0,
            ControlSpec::Constant(c) => *c,
            ControlSpec::OfTime(u) => u(t),
            ControlSpec::Feedback(u) => u(t, x, mean),
        }
    }
}

/// Output of [`simulate_controlled`].
#[derive(Debug, Clone)]
pub struct ControlledRun {
    pub trajectory: SystemTrajectory,
    /// `−Σ_i Σ_k u_ik·ΔW_ik − ½ Σ_i Σ_k u_ik²·Δt`.
    pub log_weight: f64,
    /// `½·(1/n)·Σ_i κ_i` with `κ_i = Σ_k u_ik²·Δt`.
    pub cost: f64,
}

/// Where the mean and φ seen by the particles come from.
#[derive(Clone, Copy)]
pub(crate) enum Field<'a> {
    /// Computed from the ensemble at every step.
    Interacting,
    /// Prescribed per grid node (frozen flow).
    Frozen { mean: &'a [f64], phi: &'a [f64] },
}

/// Summary of one run; the full states go to the observer.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub grid: Vec<f64>,
    pub terminal: Vec<f64>,
    /// Mean seen by the particles at each node.
    pub mean_path: Vec<f64>,
    /// φ seen by the particles at each node.
    pub phi_path: Vec<f64>,
    pub log_weight: f64,
    pub cost: f64,
}

#[derive(Clone, Copy, Default)]
struct Tilt {
    log_weight: f64,
    kappa: f64,
}

fn field_at(spec: &ModelSpec, field: Field<'_>, k: usize, state: &[f64]) -> (f64, f64) {
    match field {
        Field::Interacting => {
            let mean = state.iter().sum::<f64>() / state.len() as f64;
            (mean, spec.phi.eval_state(state, mean))
        }
        Field::Frozen { mean, phi } => (mean[k], phi[k]),
    }
}

/// The stepping loop shared by every simulator in the crate.
pub(crate) fn run_ensemble(
    spec: &ModelSpec,
    cfg: &SchemeConfig,
    horizon: f64,
    init: Vec<f64>,
    field: Field<'_>,
    ctrl: &ControlSpec,
    observer: &mut dyn FnMut(usize, &[f64]),
) -> Result<EnsembleRun> {
    let n = init.len();
    if n == 0 {
        return Err(Error::invalid("need at least one particle"));
    }
    if init.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::invalid("initial states must be finite and non-negative"));
    }
    let grid = cfg.grid(horizon)?;
    let steps = grid.len() - 1;
    if let Field::Frozen { mean, phi } = field {
        if mean.len() != grid.len() || phi.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "frozen flow has {}/{} nodes, grid has {}",
                mean.len(),
                phi.len(),
                grid.len()
            )));
        }
    }
    let g_const = spec.g.constant();
    if cfg.scheme == Scheme::ExactBesq {
        if g_const.is_none() {
            return Err(Error::Unsupported("the exact scheme needs a constant g".into()));
        }
        if !ctrl.is_zero() {
            return Err(Error::Unsupported("controlled dynamics need the Euler scheme".into()));
        }
    }

    let key = cfg.key();
    let mut state = init;
    let mut rngs: Vec<StreamRng> = key.particles(n);
    let mut tilt = vec![Tilt::default(); n];
    let mut mean_path = Vec::with_capacity(grid.len());
    let mut phi_path = Vec::with_capacity(grid.len());
    let delta = spec.delta;

    observer(0, &state);
    for k in 0..steps {
        let (t, h) = (grid[k], grid[k + 1] - grid[k]);
        let (mean, phi) = field_at(spec, field, k, &state);
        if !(mean.is_finite() && phi.is_finite()) {
            return Err(Error::NonFinite("ensemble statistics"));
        }
        mean_path.push(mean);
        phi_path.push(phi);
        match cfg.scheme {
            Scheme::FullTruncationEuler => {
                let g = &spec.g;
                let controlled = !ctrl.is_zero();
                state
                    .par_iter_mut()
                    .zip(rngs.par_iter_mut())
                    .zip(tilt.par_iter_mut())
                    .with_min_len(PAR_MIN_LEN)
                    .try_for_each(|((x, rng), acc)| -> Result<()> {
                        let drift = delta + (mean - *x) * phi;
                        let gx = g.eval(x.max(0.0));
                        if controlled {
                            let u = ctrl.eval(t, *x, mean);
                            let tilted = drift + u * x.max(0.0).sqrt() * gx;
                            let (next, dw) = euler_step(*x, tilted, gx, h, rng)?;
                            acc.log_weight -= u * dw + 0.5 * u * u * h;
                            acc.kappa += u * u * h;
                            *x = next;
                        } else {
                            *x = euler_step(*x, drift, gx, h, rng)?.0;
                        }
                        Ok(())
                    })?;
            }
            Scheme::ExactBesq => {
                let g = g_const.expect("checked above");
                // The ensemble mean drifts at rate δ exactly, so the frozen
                // level is taken at mid-step.
                let mean_mid = match field {
                    Field::Interacting => mean + 0.5 * delta * h,
                    Field::Frozen { mean: m, .. } => 0.5 * (m[k] + m[k + 1]),
                };
                let a = delta + mean_mid * phi;
                state
                    .par_iter_mut()
                    .zip(rngs.par_iter_mut())
                    .with_min_len(PAR_MIN_LEN)
                    .for_each(|(x, rng)| *x = sample_affine_exact(*x, a, phi, g, h, rng));
            }
        }
        observer(k + 1, &state);
    }
    let (mean, phi) = field_at(spec, field, steps, &state);
    mean_path.push(mean);
    phi_path.push(phi);

    let log_weight: f64 = tilt.iter().map(|a| a.log_weight).sum();
    let kappa: f64 = tilt.iter().map(|a| a.kappa).sum();
    if !log_weight.is_finite() {
        return Err(Error::NonFinite("Girsanov log-weight (control too aggressive for dt)"));
    }
    Ok(EnsembleRun {
        grid,
        terminal: state,
        mean_path,
        phi_path,
        log_weight,
        cost: 0.5 * kappa / n as f64,
    })
}

fn run_recorded(
    n: usize,
    spec: &ModelSpec,
    cfg: &SchemeConfig,
    horizon: f64,
    init: Vec<f64>,
    ctrl: &ControlSpec,
) -> Result<(SystemTrajectory, EnsembleRun)> {
    let mut states = Vec::new();
    let run = run_ensemble(spec, cfg, horizon, init, Field::Interacting, ctrl, &mut |_, s| {
        states.extend_from_slice(s)
    })?;
    let trajectory = SystemTrajectory {
        grid: run.grid.clone(),
        n,
        states,
    };
    Ok((trajectory, run))
}

/// Simulates `n` particles from the deterministic initial state of
/// `spec.initial_law` up to `horizon`.
pub fn simulate(n: usize, spec: &ModelSpec, cfg: &SchemeConfig, horizon: f64) -> Result<SystemTrajectory> {
    let init = spec.initial_law.atoms(n)?;
    Ok(run_recorded(n, spec, cfg, horizon, init, &ControlSpec::Zero)?.0)
}

/// Like [`simulate`] but from explicit initial states.
pub fn simulate_from(init: Vec<f64>, spec: &ModelSpec, cfg: &SchemeConfig, horizon: f64) -> Result<SystemTrajectory> {
    Ok(run_recorded(init.len(), spec, cfg, horizon, init, &ControlSpec::Zero)?.0)
}

/// Runs without storing the trajectory; returns terminal states, the mean and
/// φ paths, and the tilt accumulators.
pub fn simulate_summary(
    n: usize,
    spec: &ModelSpec,
    cfg: &SchemeConfig,
    horizon: f64,
    ctrl: &ControlSpec,
) -> Result<EnsembleRun> {
    let init = spec.initial_law.atoms(n)?;
    run_ensemble(spec, cfg, horizon, init, Field::Interacting, ctrl, &mut |_, _| {})
}

/// Tilted system `dX̄_i = [b(X̄_i, ρ̄ⁿ) + u·σ(X̄_i)]dt + σ(X̄_i)dW_i` with its
/// Girsanov log-weight and normalized control cost. Controls are evaluated at
/// the left end of each step. A zero control runs the plain system.
pub fn simulate_controlled(
    n: usize,
    spec: &ModelSpec,
    cfg: &SchemeConfig,
    horizon: f64,
    ctrl: &ControlSpec,
) -> Result<ControlledRun> {
    if ctrl.is_zero() {
        return Ok(ControlledRun {
            trajectory: simulate(n, spec, cfg, horizon)?,
            log_weight: 0.0,
            cost: 0.0,
        });
    }
    let init = spec.initial_law.atoms(n)?;
    let (trajectory, run) = run_recorded(n, spec, cfg, horizon, init, ctrl)?;
    Ok(ControlledRun {
        trajectory,
        log_weight: run.log_weight,
        cost: run.cost,
    })
}

/// Test function of the tagged coordinates with its gradient and the diagonal
/// of its Hessian (off-diagonal terms never enter since the noises are independent).
#[derive(Clone)]
pub struct TestFunction {
    pub value: ValueFn,
    pub gradient: VectorFn,
    pub hessian_diag: VectorFn,
}

pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Writes one value per tagged coordinate into the output slice.
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

impl TestFunction {
    /// `f(x̂) = Σ_j h(x̂_j)`.
    pub fn separable(
        h: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dh: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2h: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let h = Arc::new(h);
        let dh = Arc::new(dh);
        let d2h = Arc::new(d2h);
        Self {
            value: Arc::new(move |x| x.iter().map(|v| h(*v)).sum()),
            gradient: Arc::new(move |x, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = dh(*v);
                }
            }),
            hessian_diag: Arc::new(move |x, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = d2h(*v);
                }
            }),
        }
    }
}

/// Compensated process
/// `M(t) = f(X̂(t)) − f(X̂(0)) − ∫₀ᵗ Σ_j [b(X_j, ρⁿ)∂_j f + ½σ²(X_j)∂²_j f] ds`
/// over the `tagged` particles, with a left-point Riemann sum.
pub fn martingale_residual(
    f: &TestFunction,
    traj: &SystemTrajectory,
    spec: &ModelSpec,
    tagged: &[usize],
) -> Result<Vec<f64>> {
    if tagged.iter().any(|i| *i >= traj.n) {
        return Err(Error::invalid("tagged particle index out of range"));
    }
    let k_len = tagged.len();
    let mut xs = vec![0.0; k_len];
    let mut grad = vec![0.0; k_len];
    let mut hess = vec![0.0; k_len];
    let pick = |k: usize, xs: &mut [f64]| {
        let s = traj.states_at(k);
        for (x, i) in xs.iter_mut().zip(tagged) {
            *x = s[*i];
        }
    };
    pick(0, &mut xs);
    let f0 = (f.value)(&xs);
    let mut compensator = 0.0;
    let mut out = Vec::with_capacity(traj.grid.len());
    out.push(0.0);
    for k in 0..traj.grid.len() - 1 {
        let h = traj.grid[k + 1] - traj.grid[k];
        let state = traj.states_at(k);
        let (mean, phi) = field_at(spec, Field::Interacting, k, state);
        pick(k, &mut xs);
        (f.gradient)(&xs, &mut grad);
        (f.hessian_diag)(&xs, &mut hess);
        let generator: f64 = xs
            .iter()
            .zip(grad.iter().zip(&hess))
            .map(|(x, (d1, d2))| {
                let sigma2 = x.max(0.0) * spec.g.eval(x.max(0.0)).powi(2);
                spec.drift(*x, mean, phi) * d1 + 0.5 * sigma2 * d2
            })
            .sum();
        compensator += generator * h;
        pick(k + 1, &mut xs);
        out.push((f.value)(&xs) - f0 - compensator);
    }
    Ok(out)
}

/// `t ↦ Σ_i |X_i(t) − X̃_i(t)|` for two systems started from `init_a` and
/// `init_b` and driven by the same Brownian increments.
pub fn coupling_gap(
    spec: &ModelSpec,
    cfg: &SchemeConfig,
    horizon: f64,
    init_a: &[f64],
    init_b: &[f64],
) -> Result<Vec<f64>> {
    if init_a.len() != init_b.len() {
        return Err(Error::invalid(format!(
            "initial states differ in size ({} vs {})",
            init_a.len(),
            init_b.len()
        )));
    }
    if cfg.scheme != Scheme::FullTruncationEuler {
        return Err(Error::Unsupported(
            "shared Brownian increments need the Euler scheme".into(),
        ));
    }
    let a = simulate_from(init_a.to_vec(), spec, cfg, horizon)?;
    let b = simulate_from(init_b.to_vec(), spec, cfg, horizon)?;
    Ok((0..a.grid.len())
        .map(|k| {
            a.states_at(k)
                .iter()
                .zip(b.states_at(k))
                .map(|(x, y)| (x - y).abs())
                .sum()
        })
        .collect())
}

/// Runs `f` on replicas `0..count` in parallel, each with its own stream id.
pub fn replicate<T: Send>(
    count: usize,
    cfg: &SchemeConfig,
    f: impl Fn(&SchemeConfig) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..count as u64)
        .into_par_iter()
        .map(|r| f(&cfg.with_stream(r)))
        .collect()
}
