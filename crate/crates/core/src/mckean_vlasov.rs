//! The McKean–Vlasov limit
//!
//! ```text
//! dX = [δ + (m_λ + δt − X)·φ(ℒ(X(t)))] dt + 2√X dW
//! ```
//!
//! approximated either by a large self-interacting ensemble or by Picard
//! iteration on the law flow, plus the variance flow `V' = 4m_λ − 2φV` of the
//! `δ = 0` case.

use crate::csv::CsvTable;
use crate::error::{Error, Result};
use crate::measures::{path_distance, EmpiricalMeasure, MeasurePath};
use crate::model::ModelSpec;
use crate::particle_system::{run_ensemble, ControlSpec, Field};
use crate::sde_engine::SchemeConfig;

/// N-sample approximation of `t ↦ ℒ(X(t))` with its φ, mean and variance paths.
#[derive(Debug, Clone, PartialEq)]
pub struct LawPath {
    pub path: MeasurePath,
    pub phi_path: Vec<f64>,
    pub mean_path: Vec<f64>,
    pub var_path: Vec<f64>,
}

impl LawPath {
    pub(crate) fn from_measures(path: MeasurePath, phi_path: Vec<f64>) -> Self {
        Self {
            mean_path: path.means(),
            var_path: path.variances(),
            phi_path,
            path,
        }
    }

    pub fn grid(&self) -> &[f64] {
        self.path.grid()
    }

    /// CSV with header `t,mean,var,phi,q05,q50,q95`.
    pub fn to_csv(&self) -> String {
        let mut table = CsvTable::new(&["t", "mean", "var", "phi", "q05", "q50", "q95"]);
        for (k, t) in self.grid().iter().enumerate() {
            let m = self.path.at(k);
            table.row(&[
                *t,
                self.mean_path[k],
                self.var_path[k],
                self.phi_path[k],
                m.quantile(0.05),
                m.quantile(0.5),
                m.quantile(0.95),
            ]);
        }
        table.into_string()
    }
}

pub(crate) const MIN_ENSEMBLE: usize = 100;

pub(crate) fn check_ensemble(big_n: usize) -> Result<()> {
    if big_n < MIN_ENSEMBLE {
        return Err(Error::invalid(format!(
            "ensemble size {big_n} below the minimum of {MIN_ENSEMBLE}"
        )));
    }
    Ok(())
}

/// Runs the interacting system with `big_n` particles and records the law path.
pub(crate) fn ensemble_law(
    spec: &ModelSpec,
    big_n: usize,
    cfg: &SchemeConfig,
    horizon: f64,
    ctrl: &ControlSpec,
) -> Result<(LawPath, f64)> {
    let init = spec.initial_law.atoms(big_n)?;
    let mut measures = Vec::new();
    let run = run_ensemble(spec, cfg, horizon, init, Field::Interacting, ctrl, &mut |_, s| {
        measures.push(EmpiricalMeasure::from_state(s))
    })?;
    let path = MeasurePath::new(run.grid, measures)?;
    Ok((LawPath::from_measures(path, run.phi_path), run.cost))
}

/// Self-consistent solver: `big_n` interacting particles stand in for the law.
pub fn solve_selfconsistent(spec: &ModelSpec, big_n: usize, cfg: &SchemeConfig, horizon: f64) -> Result<LawPath> {
    check_ensemble(big_n)?;
    Ok(ensemble_law(spec, big_n, cfg, horizon, &ControlSpec::Zero)?.0)
}

/// Fixed point of [`picard_iterate`] together with the sup-d₁ gaps of every iteration.
#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub law: LawPath,
    /// `gaps[k] = sup_t d₁(P_k(t), P_{k+1}(t))`, `P_0 = λ` at every node.
    pub gaps: Vec<f64>,
}

impl PicardOutcome {
    pub fn iterations(&self) -> usize {
        self.gaps.len()
    }
}

/// Picard iteration on the law flow.
///
/// Each iteration freezes the mean path at `m_λ + δt` (exact for this drift
/// family) and the φ path of the previous iterate, simulates `big_n`
/// independent one-dimensional SDEs with the frozen coefficients, and extracts
/// the next law path. The same random streams are reused every iteration, so
/// a flow that stops changing reproduces itself exactly.
pub fn picard_iterate(
    spec: &ModelSpec,
    big_n: usize,
    cfg: &SchemeConfig,
    horizon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PicardOutcome> {
    check_ensemble(big_n)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let grid = cfg.grid(horizon)?;
    let m_lambda = spec.m_lambda();
    let mean: Vec<f64> = grid.iter().map(|t| m_lambda + spec.delta * t).collect();
    let init = spec.initial_law.atoms(big_n)?;
    let lambda = EmpiricalMeasure::new(init.clone())?;
    let mut previous = MeasurePath::new(grid.clone(), vec![lambda.clone(); grid.len()])?;
    let mut phi = vec![spec.phi.eval(&lambda); grid.len()];
    let mut gaps = Vec::new();
    let mut last_gap = f64::INFINITY;
    for _ in 0..max_iter {
        let mut measures = Vec::with_capacity(grid.len());
        run_ensemble(
            spec,
            cfg,
            horizon,
            init.clone(),
            Field::Frozen { mean: &mean, phi: &phi },
            &ControlSpec::Zero,
            &mut |_, s| measures.push(EmpiricalMeasure::from_state(s)),
        )?;
        let next = MeasurePath::new(grid.clone(), measures)?;
        last_gap = path_distance(&previous, &next)?;
        gaps.push(last_gap);
        phi = next.measures().iter().map(|m| spec.phi.eval(m)).collect();
        if last_gap < tol {
            return Ok(PicardOutcome {
                law: LawPath::from_measures(next, phi),
                gaps,
            });
        }
        previous = next;
    }
    Err(Error::NoConvergence {
        what: "Picard iteration",
        iterations: max_iter,
        last_gap,
    })
}

fn check_flow(phi_path: &[f64], grid: &[f64]) -> Result<()> {
    crate::measures::check_grid(grid)?;
    if phi_path.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "φ path has {} nodes, grid has {}",
            phi_path.len(),
            grid.len()
        )));
    }
    if let Some(bad) = phi_path.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
        return Err(Error::Assumption {
            assumption: "φ nonnegativity",
            detail: format!("φ path takes the value {bad}"),
        });
    }
    Ok(())
}

/// `(1 − e^{−x}) / x`, continuous at 0.
fn one_minus_exp_over(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// `V(t) = 4m_λ ∫₀ᵗ exp(−2∫ₛᵗ φ) ds`.
///
/// `∫φ` is the trapezoid rule on the grid (φ cell-averaged), and the outer
/// integral is then integrated exactly cell by cell, which keeps the result
/// exact for constant φ and avoids overflow of `exp(2∫φ)` on long horizons.
pub fn variance_closed_form(phi_path: &[f64], m_lambda: f64, grid: &[f64]) -> Result<Vec<f64>> {
    check_flow(phi_path, grid)?;
    let mut v = Vec::with_capacity(grid.len());
    v.push(0.0);
    for k in 0..grid.len() - 1 {
        let h = grid[k + 1] - grid[k];
        let rate = 2.0 * 0.5 * (phi_path[k] + phi_path[k + 1]) * h;
        let decay = (-rate).exp();
        v.push(decay * v[k] + 4.0 * m_lambda * h * one_minus_exp_over(rate));
    }
    Ok(v)
}

/// Classical RK4 for `V' = 4m_λ − 2φ(t)V`, `V(0) = 0`, φ linear between nodes.
pub fn variance_ode(phi_path: &[f64], m_lambda: f64, grid: &[f64]) -> Result<Vec<f64>> {
    check_flow(phi_path, grid)?;
    let rhs = |phi: f64, v: f64| 4.0 * m_lambda - 2.0 * phi * v;
    let mut v = Vec::with_capacity(grid.len());
    v.push(0.0);
    for k in 0..grid.len() - 1 {
        let h = grid[k + 1] - grid[k];
        let (p0, p1) = (phi_path[k], phi_path[k + 1]);
        let pm = 0.5 * (p0 + p1);
        let y = v[k];
        let k1 = rhs(p0, y);
        let k2 = rhs(pm, y + 0.5 * h * k1);
        let k3 = rhs(pm, y + 0.5 * h * k2);
        let k4 = rhs(p1, y + h * k3);
        v.push(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    Ok(v)
}

/// First grid time with `φ(t)V(t) ≥ 2m_λ`, after which the variance stops
/// increasing; `None` if the product stays below `2m_λ` on the grid. A relative
/// slack of 1e−12 keeps a product that merely saturates at `2m_λ` (constant φ)
/// from registering through rounding.
pub fn monotonicity_time(phi_path: &[f64], m_lambda: f64, grid: &[f64]) -> Result<Option<f64>> {
    let v = variance_closed_form(phi_path, m_lambda, grid)?;
    let threshold = 2.0 * m_lambda * (1.0 + 1e-12);
    Ok(grid
        .iter()
        .zip(phi_path.iter().zip(&v))
        .skip(1)
        .find(|(_, (p, v))| *p * *v >= threshold)
        .map(|(t, _)| *t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InitialLaw, PhiSpec};

    fn uniform(dt: f64, horizon: f64) -> Vec<f64> {
        SchemeConfig::euler(dt, 0).grid(horizon).unwrap()
    }

    #[test]
    fn variance_zero_phi() {
        let grid = uniform(0.01, 2.0);
        let phi = vec![0.0; grid.len()];
        for f in [variance_closed_form, variance_ode] {
            let v = f(&phi, 1.5, &grid).unwrap();
            assert_eq!(v[0], 0.0);
            for (vk, t) in v.iter().zip(&grid) {
                assert!((vk - 6.0 * t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn variance_constant_phi_closed_form() {
        let c = 0.8;
        let m = 1.3;
        let grid = uniform(1e-4, 2.0);
        let phi = vec![c; grid.len()];
        let v = variance_closed_form(&phi, m, &grid).unwrap();
        for (k, t) in grid.iter().enumerate().skip(1).step_by(1013) {
            let exact = 2.0 * m / c * (1.0 - (-2.0 * c * t).exp());
            assert!((v[k] - exact).abs() <= 1e-6 * exact, "t={t}");
        }
    }

    #[test]
    fn rk4_matches_closed_form() {
        let grid = uniform(1e-3, 2.0);
        let phi = vec![1.0; grid.len()];
        let a = variance_closed_form(&phi, 1.0, &grid).unwrap();
        let b = variance_ode(&phi, 1.0, &grid).unwrap();
        for (x, y) in a.iter().zip(&b).skip(1) {
            assert!((x - y).abs() <= 1e-8 * x);
        }
        // non-constant φ: both are second-order consistent
        let phi: Vec<f64> = grid.iter().map(|t| 1.0 + 0.5 * (3.0 * t).sin()).collect();
        let a = variance_closed_form(&phi, 1.0, &grid).unwrap();
        let b = variance_ode(&phi, 1.0, &grid).unwrap();
        for (x, y) in a.iter().zip(&b).skip(1) {
            assert!((x - y).abs() <= 1e-5 * x);
        }
    }

    #[test]
    fn monotonicity_time_cases() {
        let grid = uniform(0.01, 30.0);
        assert_eq!(monotonicity_time(&vec![0.0; grid.len()], 1.0, &grid).unwrap(), None);
        assert_eq!(monotonicity_time(&vec![1.0; grid.len()], 1.0, &grid).unwrap(), None);
        // a jump in φ after the variance has built up
        let phi: Vec<f64> = grid.iter().map(|t| if *t < 3.0 { 0.5 } else { 2.0 }).collect();
        let t_star = monotonicity_time(&phi, 1.0, &grid).unwrap().unwrap();
        assert!((t_star - 3.0).abs() < 0.011, "{t_star}");
        let v = variance_closed_form(&phi, 1.0, &grid).unwrap();
        let k_star = grid.iter().position(|t| *t >= t_star).unwrap();
        assert!(v[..k_star].windows(2).all(|w| w[1] >= w[0]));
        assert!(v[k_star + 1] < v[k_star]);
    }

    #[test]
    fn negative_phi_rejected() {
        let grid = uniform(0.1, 1.0);
        let mut phi = vec![1.0; grid.len()];
        phi[2] = -1.0;
        assert!(variance_closed_form(&phi, 1.0, &grid).unwrap_err().is_assumption());
    }

    #[test]
    fn picard_constant_phi_two_iterations() {
        let spec = ModelSpec::besq(0.1, PhiSpec::Constant(1.0), InitialLaw::PointMass(1.0));
        let out = picard_iterate(&spec, 500, &SchemeConfig::exact(0.01, 3), 1.0, 1e-12, 10).unwrap();
        assert_eq!(out.iterations(), 2);
        assert_eq!(out.gaps[1], 0.0);
        assert!(out.law.phi_path.iter().all(|p| *p == 1.0));
    }

    #[test]
    fn picard_iteration_cap_reports_gap() {
        let spec = ModelSpec::besq(0.1, PhiSpec::Constant(1.0), InitialLaw::PointMass(1.0));
        let err = picard_iterate(&spec, 200, &SchemeConfig::exact(0.05, 3), 1.0, 1e-12, 1).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 1, .. }));
    }

    #[test]
    fn ensemble_minimum() {
        let spec = ModelSpec::besq(0.1, PhiSpec::Constant(1.0), InitialLaw::PointMass(1.0));
        assert!(solve_selfconsistent(&spec, 50, &SchemeConfig::exact(0.05, 3), 1.0).is_err());
    }

    #[test]
    fn law_csv_layout() {
        let spec = ModelSpec::besq(0.1, PhiSpec::Constant(1.0), InitialLaw::PointMass(1.0));
        let law = solve_selfconsistent(&spec, 100, &SchemeConfig::exact(0.5, 3), 1.0).unwrap();
        let csv = law.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,mean,var,phi,q05,q50,q95"));
        assert_eq!(
            lines.next(),
            Some("0,1.00000000,0,1.00000000,1.00000000,1.00000000,1.00000000")
        );
        assert_eq!(csv.lines().count(), 4);
    }
}
