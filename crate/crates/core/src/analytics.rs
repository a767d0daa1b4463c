//! Closed-form and semi-analytic objects of the reduced (`δ = 0`) limit
//!
//! ```text
//! dX = (m_λ − X)·φ(ℒ(X)) dt + 2√X dW
//! ```
//!
//! namely the boundary classification at zero, the Laplace transform
//! `U(t,x) = E[exp(−xX(t))]` via characteristics of
//! `U_t + x(φ + 2x)U_x + m_λxφU = 0`, and the stationary Gamma law with its
//! self-consistency condition `φ(α) = φ*`.

use crate::csv::CsvTable;
use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, GammaParams};
use crate::model::PhiSpec;
use crate::sde_engine::sample_besq_exact;
use rand::Rng;

/// Behaviour of the reduced limit at the origin, from the bounds of `m_λ·φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryClass {
    TransientNeverHitsZero,
    /// `m_λ·inf φ ≥ 2` and `m_λ·sup φ ≤ 2`.
    Recurrent,
    /// `m_λ·inf φ = 2 < m_λ·sup φ`: zero is never hit, recurrence is not decided.
    NeverHitsZero,
    HitsZeroNullLocalTime,
    ReflectingWithLocalTime,
    Indeterminate,
}

impl std::fmt::Display for BoundaryClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

/// The classification and every inequality it was read from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryReport {
    pub class: BoundaryClass,
    /// `m_λ·inf φ`.
    pub lower: f64,
    /// `m_λ·sup φ`.
    pub upper: f64,
    pub transient: bool,
    pub recurrent: bool,
    pub never_hits_zero: bool,
    pub hits_zero_null_local_time: bool,
    pub reflecting: bool,
}

/// Classifies the origin for a point-mass initial law at `m_λ` (the setting in
/// which the classification is established).
pub fn classify_boundary(m_lambda: f64, phi_inf: f64, phi_sup: f64) -> Result<BoundaryReport> {
    if !(m_lambda > 0.0 && m_lambda.is_finite()) {
        return Err(Error::Assumption {
            assumption: "m_λ > 0",
            detail: format!("m_λ = {m_lambda}"),
        });
    }
    if !(phi_inf >= 0.0 && phi_sup.is_finite()) {
        return Err(Error::Assumption {
            assumption: "φ nonnegativity",
            detail: format!("bounds [{phi_inf}, {phi_sup}]"),
        });
    }
    if phi_inf > phi_sup {
        return Err(Error::invalid(format!("inf φ = {phi_inf} exceeds sup φ = {phi_sup}")));
    }
    let (lower, upper) = (m_lambda * phi_inf, m_lambda * phi_sup);
    let transient = lower > 2.0;
    let recurrent = upper <= 2.0;
    let never_hits_zero = lower >= 2.0;
    let hits_zero_null_local_time = lower > 1.0 && upper < 2.0;
    let reflecting = lower > 0.0 && upper <= 1.0;
    let class = if transient {
        BoundaryClass::TransientNeverHitsZero
    } else if never_hits_zero {
        if recurrent {
            BoundaryClass::Recurrent
        } else {
            BoundaryClass::NeverHitsZero
        }
    } else if hits_zero_null_local_time {
        BoundaryClass::HitsZeroNullLocalTime
    } else if reflecting {
        BoundaryClass::ReflectingWithLocalTime
    } else {
        BoundaryClass::Indeterminate
    };
    Ok(BoundaryReport {
        class,
        lower,
        upper,
        transient,
        recurrent,
        never_hits_zero,
        hits_zero_null_local_time,
        reflecting,
    })
}

/// Step of the characteristic integrator.
pub const DT_CHAR: f64 = 1e-4;

fn interp(path: &[f64], grid: &[f64], s: f64) -> f64 {
    let last = grid.len() - 1;
    if s <= grid[0] {
        return path[0];
    }
    if s >= grid[last] {
        return path[last];
    }
    let j = grid.partition_point(|g| *g <= s).clamp(1, last) - 1;
    let w = (s - grid[j]) / (grid[j + 1] - grid[j]);
    path[j] + w * (path[j + 1] - path[j])
}

/// `U(t, x)` for the reduced limit driven by `phi_path` (linear between grid
/// nodes), from the initial transform `u0`.
///
/// The characteristic `x'(s) = x(φ(s) + 2x)` through `(t, x)` is integrated
/// backward to `s = 0` with RK4 at step [`DT_CHAR`], together with
/// `I = m_λ∫φx ds`; then `U(t, x) = u0(x(0))·exp(−I)`.
pub fn laplace_pde_solve(
    phi_path: &[f64],
    grid: &[f64],
    m_lambda: f64,
    u0: &dyn Fn(f64) -> f64,
    t: f64,
    x: f64,
) -> Result<f64> {
    if phi_path.len() != grid.len() || grid.is_empty() {
        return Err(Error::GridMismatch("φ path and grid differ in length".into()));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::invalid(format!("x must be non-negative, got {x}")));
    }
    let horizon = *grid.last().expect("non-empty grid");
    if !(t >= 0.0 && t <= horizon * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!("t = {t} outside the φ grid [0, {horizon}]")));
    }
    if t == 0.0 || x == 0.0 {
        return Ok(u0(x));
    }
    let steps = (t / DT_CHAR).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let phi = |s: f64| interp(phi_path, grid, s);
    // backward in s: d/dσ with σ = t − s
    let f = |s: f64, y: f64| -> (f64, f64) {
        let p = phi(s);
        (-y * (p + 2.0 * y), m_lambda * p * y)
    };
    let (mut y, mut integral) = (x, 0.0);
    for k in 0..steps {
        let s = t - k as f64 * h;
        let (a1, b1) = f(s, y);
        let (a2, b2) = f(s - 0.5 * h, y + 0.5 * h * a1);
        let (a3, b3) = f(s - 0.5 * h, y + 0.5 * h * a2);
        let (a4, b4) = f(s - h, y + h * a3);
        y += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        integral += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    let u = u0(y) * (-integral).exp();
    if !u.is_finite() {
        return Err(Error::NonFinite("Laplace characteristic"));
    }
    Ok(u)
}

/// Exact draw of `X(t)` for the reduced limit with constant `φ ≡ c` from a
/// point mass at `x0 = m_λ`, through the time change: `X(t) = ξ(t)/ζ(t)²` with
/// ξ a squared Bessel process of dimension `m_λc` run for `ψ(t) = (e^{ct} − 1)/c`
/// and `ζ(t)² = e^{ct}`.
pub fn sample_constant_phi_limit<R: Rng + ?Sized>(x0: f64, m_lambda: f64, c: f64, t: f64, rng: &mut R) -> Result<f64> {
    if c == 0.0 {
        return sample_besq_exact(x0, 0.0, t, rng);
    }
    let psi = (c * t).exp_m1() / c;
    Ok(sample_besq_exact(x0, m_lambda * c, psi, rng)? * (-c * t).exp())
}

/// One probe of the Laplace transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceProbe {
    pub t: f64,
    pub x: f64,
    pub u_pde: f64,
    pub u_mc: f64,
    /// Standard error of `u_mc`.
    pub mc_stderr: f64,
}

impl LaplaceProbe {
    pub fn abs_err(&self) -> f64 {
        (self.u_pde - self.u_mc).abs()
    }
}

/// PDE solution against Monte Carlo on a `(t, x)` probe grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceGrid {
    pub m_lambda: f64,
    pub phi_path: Vec<f64>,
    pub grid: Vec<f64>,
    pub probes: Vec<LaplaceProbe>,
}

impl LaplaceGrid {
    /// `samples` holds, for each probe time, draws of `X(t)`.
    pub fn build(
        phi_path: &[f64],
        grid: &[f64],
        m_lambda: f64,
        u0: &dyn Fn(f64) -> f64,
        samples: &[(f64, EmpiricalMeasure)],
        xs: &[f64],
    ) -> Result<Self> {
        let mut probes = Vec::with_capacity(samples.len() * xs.len());
        for (t, draws) in samples {
            for x in xs {
                let u_pde = laplace_pde_solve(phi_path, grid, m_lambda, u0, *t, *x)?;
                let values: Vec<f64> = draws.atoms().iter().map(|y| (-x * y).exp()).collect();
                let n = values.len() as f64;
                let u_mc = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - u_mc).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                probes.push(LaplaceProbe {
                    t: *t,
                    x: *x,
                    u_pde,
                    u_mc,
                    mc_stderr: (var / n).sqrt(),
                });
            }
        }
        Ok(Self {
            m_lambda,
            phi_path: phi_path.to_vec(),
            grid: grid.to_vec(),
            probes,
        })
    }

    /// CSV with header `t,x,U_pde,U_mc,abs_err`.
    pub fn to_csv(&self) -> String {
        let mut table = CsvTable::new(&["t", "x", "U_pde", "U_mc", "abs_err"]);
        for p in &self.probes {
            table.row(&[p.t, p.x, p.u_pde, p.u_mc, p.abs_err()]);
        }
        table.into_string()
    }
}

/// Central finite-difference residual of the Laplace PDE at `(t, x)`, with
/// step `eta` in both directions.
pub fn laplace_residual(
    phi_path: &[f64],
    grid: &[f64],
    m_lambda: f64,
    u0: &dyn Fn(f64) -> f64,
    t: f64,
    x: f64,
    eta: f64,
) -> Result<f64> {
    let u = |t: f64, x: f64| laplace_pde_solve(phi_path, grid, m_lambda, u0, t, x);
    let u_t = (u(t + eta, x)? - u(t - eta, x)?) / (2.0 * eta);
    let u_x = (u(t, x + eta)? - u(t, x - eta)?) / (2.0 * eta);
    let phi = interp(phi_path, grid, t);
    Ok(u_t + x * (phi + 2.0 * x) * u_x + m_lambda * x * phi * u(t, x)?)
}

/// `(1 + 𝔞x)^{−𝔟}`.
pub fn gamma_laplace(p: &GammaParams, x: f64) -> f64 {
    p.laplace(x)
}

/// Atoms of the quantile discretization used inside the fixed point.
pub const QUANTILE_ATOMS: usize = 4096;
const DAMPING: f64 = 0.5;

/// Outcome of [`stationary_fixed_point`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryFixedPoint {
    pub phi_star: f64,
    pub params: GammaParams,
    pub iterations: usize,
    pub residual: f64,
}

/// Stationary law `Gamma(𝔞 = 2/φ*, 𝔟 = φ*m_λ/2)` with `φ* = φ(α)`, by the damped
/// iteration `φ ← ½φ + ½φ(Gamma(2/φ, φm_λ/2))`, φ of a Gamma law being
/// evaluated on its 4096 mid-quantiles. Starts from φ at the point mass `m_λ`.
pub fn stationary_fixed_point(phi: &PhiSpec, m_lambda: f64, tol: f64, max_iter: usize) -> Result<StationaryFixedPoint> {
    let (lo, hi) = phi.bounds();
    let report = classify_boundary(m_lambda, lo, hi)?;
    if !report.recurrent {
        return Err(Error::Assumption {
            assumption: "recurrence (m_λ·sup φ ≤ 2)",
            detail: format!("m_λ·sup φ = {}", report.upper),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let law = |p: f64| -> Result<GammaParams> {
        if !(p > 0.0) {
            return Err(Error::Assumption {
                assumption: "φ* > 0",
                detail: format!("φ iterate reached {p}; the stationary law degenerates"),
            });
        }
        GammaParams::new(2.0 / p, p * m_lambda / 2.0)
    };
    let mut current = phi.eval(&EmpiricalMeasure::point_mass(m_lambda, 1)?);
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        let image = phi.eval(&law(current)?.quantile_measure(QUANTILE_ATOMS));
        let next = (1.0 - DAMPING) * current + DAMPING * image;
        residual = (next - current).abs();
        current = next;
        if residual < tol {
            return Ok(StationaryFixedPoint {
                phi_star: current,
                params: law(current)?,
                iterations: iteration,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "stationary fixed point",
        iterations: max_iter,
        last_gap: residual,
    })
}
