//! Model coefficients of the interacting system
//!
//! ```text
//! dX_i = [δ + (m_n − X_i)·φ(ρⁿ)] dt + √X_i · g(X_i) dW_i,   m_n = mean of ρⁿ
//! ```
//!
//! together with the initial law λ and a probe-based validator for the
//! standing assumptions (positivity of `b(0,·)`, bounds and Lipschitz
//! continuity of φ, bounds on g, positive first moment of λ).

use crate::error::{Error, Result};
use crate::measures::{wasserstein1, EmpiricalMeasure, GammaParams};
use crate::rng::StreamKey;
use rand::Rng;
use std::fmt;
use std::sync::Arc;

pub type MeasureFn = Arc<dyn Fn(&EmpiricalMeasure) -> f64 + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Mean-reversion speed φ as a function of the empirical measure.
#[derive(Clone)]
pub enum PhiSpec {
    Constant(f64),
    /// `lo + (hi − lo) / (1 + exp(−a·(mean − b)))`.
    LogisticInMean {
        a: f64,
        b: f64,
        lo: f64,
        hi: f64,
    },
    /// Arbitrary functional with declared bounds and d₁-Lipschitz constant.
    Custom {
        f: MeasureFn,
        lo: f64,
        hi: f64,
        lipschitz: f64,
    },
}

impl fmt::Debug for PhiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiSpec::Constant(c) => write!(f, "Constant({c})"),
            PhiSpec::LogisticInMean { a, b, lo, hi } => {
                write!(f, "LogisticInMean {{ a: {a}, b: {b}, lo: {lo}, hi: {hi} }}")
            }
            PhiSpec::Custom { lo, hi, lipschitz, .. } => {
                write!(f, "Custom {{ lo: {lo}, hi: {hi}, lipschitz: {lipschitz} }}")
            }
        }
    }
}

fn logistic(a: f64, b: f64, lo: f64, hi: f64, mean: f64) -> f64 {
    lo + (hi - lo) / (1.0 + (-a * (mean - b)).exp())
}

impl PhiSpec {
    pub fn custom(
        f: impl Fn(&EmpiricalMeasure) -> f64 + Send + Sync + 'static,
        lo: f64,
        hi: f64,
        lipschitz: f64,
    ) -> Self {
        PhiSpec::Custom {
            f: Arc::new(f),
            lo,
            hi,
            lipschitz,
        }
    }

    /// Declared `(inf, sup)`.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            PhiSpec::Constant(c) => (*c, *c),
            PhiSpec::LogisticInMean { lo, hi, .. } | PhiSpec::Custom { lo, hi, .. } => (*lo, *hi),
        }
    }

    /// Declared Lipschitz constant with respect to d₁.
    pub fn lipschitz(&self) -> f64 {
        match self {
            PhiSpec::Constant(_) => 0.0,
            // the mean is 1-Lipschitz in d₁ and the logistic slope peaks at a/4
            PhiSpec::LogisticInMean { a, lo, hi, .. } => a.abs() * (hi - lo).abs() / 4.0,
            PhiSpec::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, PhiSpec::Constant(_))
    }

    /// Whether evaluation needs the whole measure rather than just its mean.
    pub fn needs_measure(&self) -> bool {
        matches!(self, PhiSpec::Custom { .. })
    }

    pub fn eval(&self, mu: &EmpiricalMeasure) -> f64 {
        match self {
            PhiSpec::Custom { f, .. } => f(mu),
            _ => self.eval_mean(mu.mean()),
        }
    }

    /// Evaluation for the kinds that only see the mean.
    ///
    /// # Panics
    /// On `Custom`, which needs the measure.
    pub fn eval_mean(&self, mean: f64) -> f64 {
        match self {
            PhiSpec::Constant(c) => *c,
            PhiSpec::LogisticInMean { a, b, lo, hi } => logistic(*a, *b, *lo, *hi, mean),
            PhiSpec::Custom { .. } => panic!("custom φ needs the full measure"),
        }
    }

    /// Evaluates on raw (unsorted) particle states with a precomputed mean.
    pub(crate) fn eval_state(&self, state: &[f64], mean: f64) -> f64 {
        match self {
            PhiSpec::Custom { f, .. } => f(&EmpiricalMeasure::from_state(state)),
            _ => self.eval_mean(mean),
        }
    }
}

/// Diffusion multiplier `g` in `σ(x) = √x·g(x)`.
#[derive(Clone)]
pub enum GSpec {
    Constant(f64),
    Custom { f: ScalarFn, inf: f64, sup: f64 },
}

impl fmt::Debug for GSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GSpec::Constant(c) => write!(f, "Constant({c})"),
            GSpec::Custom { inf, sup, .. } => write!(f, "Custom {{ inf: {inf}, sup: {sup} }}"),
        }
    }
}

impl GSpec {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, inf: f64, sup: f64) -> Self {
        GSpec::Custom {
            f: Arc::new(f),
            inf,
            sup,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            GSpec::Constant(c) => *c,
            GSpec::Custom { f, .. } => f(x),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            GSpec::Constant(c) => (*c, *c),
            GSpec::Custom { inf, sup, .. } => (*inf, *sup),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            GSpec::Constant(c) => Some(*c),
            GSpec::Custom { .. } => None,
        }
    }
}

/// Initial law λ.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    PointMass(f64),
    AtomList(Vec<f64>),
    GammaLaw(GammaParams),
}

impl InitialLaw {
    /// First moment m_λ.
    pub fn m_lambda(&self) -> f64 {
        match self {
            InitialLaw::PointMass(x) => *x,
            InitialLaw::AtomList(a) => a.iter().sum::<f64>() / a.len().max(1) as f64,
            InitialLaw::GammaLaw(p) => p.mean(),
        }
    }

    /// `∫ e^{−xy} λ(dy)`.
    pub fn laplace(&self, x: f64) -> f64 {
        match self {
            InitialLaw::PointMass(x0) => (-x * x0).exp(),
            InitialLaw::AtomList(a) => a.iter().map(|y| (-x * y).exp()).sum::<f64>() / a.len() as f64,
            InitialLaw::GammaLaw(p) => p.laplace(x),
        }
    }

    /// Deterministic `n`-particle initial state: repeated point mass, the atom
    /// list itself (or its mid-quantile projection when sizes differ), or Gamma
    /// mid-quantiles.
    pub fn atoms(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            InitialLaw::PointMass(x) => {
                if !(*x >= 0.0 && x.is_finite()) {
                    return Err(Error::invalid(format!("point mass at {x}")));
                }
                Ok(vec![*x; n])
            }
            InitialLaw::AtomList(a) => {
                if a.len() == n {
                    // keep the caller's particle order
                    EmpiricalMeasure::new(a.clone())?;
                    Ok(a.clone())
                } else {
                    Ok(EmpiricalMeasure::new(a.clone())?.project(n).atoms().to_vec())
                }
            }
            InitialLaw::GammaLaw(p) => Ok(p.quantile_measure(n).atoms().to_vec()),
        }
    }
}

/// Coefficients `(δ, φ, g)` and the initial law λ.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub delta: f64,
    pub phi: PhiSpec,
    pub g: GSpec,
    pub initial_law: InitialLaw,
}

/// Outcome of [`ModelSpec::validate_assumptions`].
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub m_lambda: f64,
    /// Smallest `b(0, μ) = δ + mean(μ)·φ(μ)` over the probe measures.
    pub min_b0: f64,
    /// Probes where φ fell outside its declared bounds.
    pub phi_bound_violations: usize,
    /// Probes where g was non-positive or outside its declared bounds.
    pub g_violations: usize,
    /// Largest observed `|φ(μ) − φ(ν)| / d₁(μ, ν)` under perturbations.
    pub phi_lipschitz_estimate: f64,
    pub probes: usize,
}

fn violated(assumption: &'static str, detail: impl Into<String>) -> Error {
    Error::Assumption {
        assumption,
        detail: detail.into(),
    }
}

impl ModelSpec {
    pub fn new(delta: f64, phi: PhiSpec, g: GSpec, initial_law: InitialLaw) -> Self {
        Self {
            delta,
            phi,
            g,
            initial_law,
        }
    }

    /// The case-study model with `g ≡ 2`, i.e. `σ(x) = 2√x`.
    pub fn besq(delta: f64, phi: PhiSpec, initial_law: InitialLaw) -> Self {
        Self::new(delta, phi, GSpec::Constant(2.0), initial_law)
    }

    pub fn m_lambda(&self) -> f64 {
        self.initial_law.m_lambda()
    }

    /// `b(x, μ) = δ + (mean − x)·φ` with the measure summarized by its mean and φ value.
    #[inline]
    pub fn drift(&self, x: f64, mean: f64, phi: f64) -> f64 {
        self.delta + (mean - x) * phi
    }

    /// Probes the coefficients on `probes` random measures (deterministic) and
    /// fails on the first violated assumption.
    pub fn validate_assumptions(&self, probes: usize) -> Result<AssumptionReport> {
        if probes == 0 {
            return Err(Error::invalid("need at least one probe"));
        }
        let m_lambda = self.m_lambda();
        if !(m_lambda > 0.0 && m_lambda.is_finite()) {
            return Err(violated("m_λ > 0", format!("initial law has first moment {m_lambda}")));
        }
        self.initial_law.atoms(1)?;
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(violated("δ ≥ 0", format!("δ = {}", self.delta)));
        }
        let (lo, hi) = self.phi.bounds();
        if !(lo >= 0.0 && hi.is_finite()) {
            return Err(violated("φ nonnegativity", format!("declared bounds [{lo}, {hi}]")));
        }
        if lo > hi {
            return Err(violated(
                "φ bounded",
                format!("declared bounds [{lo}, {hi}] are inverted"),
            ));
        }
        let (g_inf, g_sup) = self.g.bounds();
        if !(g_inf > 0.0 && g_sup.is_finite() && g_inf <= g_sup) {
            return Err(violated(
                "g strictly positive and bounded",
                format!("declared bounds [{g_inf}, {g_sup}]"),
            ));
        }

        let mut rng = StreamKey::new(0x5eed, u64::MAX).particle(0);
        let mut report = AssumptionReport {
            m_lambda,
            min_b0: f64::INFINITY,
            phi_bound_violations: 0,
            g_violations: 0,
            phi_lipschitz_estimate: 0.0,
            probes,
        };
        let tol = 1e-9;
        for probe in 0..probes {
            let mu = if probe == 0 {
                EmpiricalMeasure::new(self.initial_law.atoms(64)?)?
            } else {
                let scale = m_lambda * rng.random_range(0.1..4.0);
                let atoms = (0..64).map(|_| -scale * (1.0 - rng.random::<f64>()).ln()).collect();
                EmpiricalMeasure::new(atoms)?
            };
            let phi = self.phi.eval(&mu);
            if !phi.is_finite() || phi < 0.0 {
                return Err(violated("φ nonnegativity", format!("φ(μ) = {phi}")));
            }
            if phi < lo - tol || phi > hi + tol {
                report.phi_bound_violations += 1;
            }
            report.min_b0 = report.min_b0.min(self.delta + mu.mean() * phi);

            let eps = 0.05 * mu.mean().max(1e-3);
            let nu = EmpiricalMeasure::new(
                mu.atoms()
                    .iter()
                    .map(|a| (a + eps * rng.random_range(-1.0..1.0)).max(0.0))
                    .collect(),
            )?;
            let d = wasserstein1(&mu, &nu)?;
            if d > 0.0 {
                let ratio = (self.phi.eval(&nu) - phi).abs() / d;
                report.phi_lipschitz_estimate = report.phi_lipschitz_estimate.max(ratio);
            }

            let x = rng.random_range(0.0..10.0 * m_lambda);
            let gx = self.g.eval(x);
            if !(gx > 0.0 && gx.is_finite()) {
                return Err(violated("g strictly positive and bounded", format!("g({x}) = {gx}")));
            }
            if gx < g_inf - tol || gx > g_sup + tol {
                report.g_violations += 1;
            }
        }
        if report.phi_bound_violations > 0 {
            return Err(violated(
                "φ bounded",
                format!("{} of {probes} probes left [{lo}, {hi}]", report.phi_bound_violations),
            ));
        }
        if report.g_violations > 0 {
            return Err(violated(
                "g strictly positive and bounded",
                format!("{} of {probes} probes left [{g_inf}, {g_sup}]", report.g_violations),
            ));
        }
        let declared = self.phi.lipschitz();
        if report.phi_lipschitz_estimate > declared * (1.0 + 1e-6) + 1e-9 {
            return Err(violated(
                "φ Lipschitz",
                format!(
                    "observed slope {:.4e} exceeds declared {declared:.4e}",
                    report.phi_lipschitz_estimate
                ),
            ));
        }
        if !(report.min_b0 > 0.0) {
            return Err(violated(
                "b(0,·) > 0",
                format!("min b(0, μ) over probes is {}", report.min_b0),
            ));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ModelSpec {
        ModelSpec::besq(0.1, PhiSpec::Constant(1.0), InitialLaw::PointMass(1.0))
    }

    #[test]
    fn constants_pass() {
        let r = base().validate_assumptions(50).unwrap();
        assert_eq!(r.m_lambda, 1.0);
        assert!(r.min_b0 > 0.0);
        assert_eq!(r.phi_lipschitz_estimate, 0.0);
    }

    #[test]
    fn negative_phi_fails() {
        let mut spec = base();
        spec.phi = PhiSpec::custom(|_| -0.1, 0.0, 1.0, 0.0);
        let err = spec.validate_assumptions(10).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Assumption {
                    assumption: "φ nonnegativity",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn zero_first_moment_fails() {
        let spec = ModelSpec::besq(0.0, PhiSpec::Constant(1.0), InitialLaw::PointMass(0.0));
        let err = spec.validate_assumptions(10).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Assumption {
                    assumption: "m_λ > 0",
                    ..
                }
            ),
            "{err}"
        );
        assert!(err.is_assumption());
    }

    #[test]
    fn logistic_lipschitz_respected() {
        let mut spec = base();
        spec.phi = PhiSpec::LogisticInMean {
            a: 4.0,
            b: 1.0,
            lo: 0.5,
            hi: 1.5,
        };
        let r = spec.validate_assumptions(200).unwrap();
        assert!(r.phi_lipschitz_estimate <= 1.0 + 1e-9);
        assert!(r.phi_lipschitz_estimate > 0.1);
    }

    #[test]
    fn understated_lipschitz_detected() {
        let mut spec = base();
        spec.phi = PhiSpec::custom(|mu| 0.5 + 0.4 * (mu.mean()).tanh(), 0.5, 0.9, 0.01);
        let err = spec.validate_assumptions(100).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Assumption {
                    assumption: "φ Lipschitz",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn g_bounds_checked() {
        let mut spec = base();
        spec.g = GSpec::custom(|x| 1.0 + x, 1.0, 2.0);
        assert!(spec.validate_assumptions(50).is_err());
        spec.g = GSpec::custom(|x| 1.5 + 0.5 * x.sin(), 1.0, 2.0);
        assert!(spec.validate_assumptions(50).is_ok());
    }

    #[test]
    fn phi_out_of_declared_bounds() {
        let mut spec = base();
        spec.phi = PhiSpec::custom(|mu| mu.mean(), 0.0, 0.5, 1.0);
        let err = spec.validate_assumptions(50).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Assumption {
                    assumption: "φ bounded",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn initial_atoms() {
        assert_eq!(InitialLaw::PointMass(2.0).atoms(3).unwrap(), vec![2.0; 3]);
        let list = InitialLaw::AtomList(vec![3.0, 1.0]);
        assert_eq!(list.atoms(2).unwrap(), vec![3.0, 1.0]);
        assert_eq!(list.atoms(4).unwrap(), vec![1.0, 1.0, 3.0, 3.0]);
        assert_eq!(list.m_lambda(), 2.0);
        let g = InitialLaw::GammaLaw(GammaParams::new(2.0, 0.5).unwrap());
        assert!((g.m_lambda() - 1.0).abs() < 1e-15);
        assert!((g.laplace(1.0) - 3f64.powf(-0.5)).abs() < 1e-15);
    }
}
