//! Empirical measures on `[0, ∞)`, the Wasserstein-1 distance between them,
//! paths of measures, and goodness-of-fit statistics against Gamma laws.
//!
//! Atoms are sorted once at construction. For two measures with the same
//! number of uniform-weight atoms the optimal coupling in one dimension pairs
//! order statistics, so
//!
//! ```text
//! d1(μ, ν) = (1/n) Σ_i |x_(i) − y_(i)|
//! ```
//!
//! and every distance here is an O(n) pass over sorted data.

use crate::csv::CsvTable;
use crate::error::{Error, Result};
use crate::special;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// Uniform-weight atoms on `[0, ∞)`, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(mut atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("empirical measure needs at least one atom"));
        }
        if let Some(bad) = atoms.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(Error::invalid(format!(
                "atoms must be finite and non-negative, got {bad}"
            )));
        }
        atoms.sort_unstable_by(f64::total_cmp);
        Ok(Self { atoms })
    }

    /// Builds from simulation state. Negative zero and tiny negative rounding
    /// are impossible there, so only sorting is needed.
    pub(crate) fn from_state(state: &[f64]) -> Self {
        let mut atoms = state.to_vec();
        atoms.sort_unstable_by(f64::total_cmp);
        debug_assert!(atoms.first().is_some_and(|a| *a >= 0.0));
        Self { atoms }
    }

    pub fn point_mass(x: f64, n: usize) -> Result<Self> {
        Self::new(vec![x; n.max(1)])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().sum::<f64>() / self.len() as f64
    }

    /// Unbiased sample variance; zero for a single atom.
    pub fn variance(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.atoms.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    /// Linear-interpolation quantile (the usual "type 7" estimator).
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let h = (self.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(self.len() - 1);
        self.atoms[lo] + (h - lo as f64) * (self.atoms[hi] - self.atoms[lo])
    }

    /// Fraction of atoms `≤ x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms.partition_point(|a| *a <= x) as f64 / self.len() as f64
    }

    /// `E[exp(−x·Y)]` under the measure.
    pub fn laplace(&self, x: f64) -> f64 {
        self.atoms.iter().map(|a| (-x * a).exp()).sum::<f64>() / self.len() as f64
    }

    /// The `n`-atom measure sitting at the mid-quantiles `(j + ½)/n` of `self`.
    ///
    /// Used to compare an ensemble against a larger reference ensemble with the
    /// same-size coupling; the projection moves the reference by at most one
    /// quantile cell.
    pub fn project(&self, n: usize) -> Self {
        let m = self.len();
        if n == m {
            return self.clone();
        }
        let atoms = (0..n)
            .map(|j| {
                let idx = (((j as f64 + 0.5) * m as f64 / n as f64).floor() as usize).min(m - 1);
                self.atoms[idx]
            })
            .collect();
        Self { atoms }
    }

    /// Every atom moved by `+c` (clamped at zero).
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|a| (a + c).max(0.0)).collect(),
        }
    }
}

/// Wasserstein-1 distance between equal-size empirical measures.
pub fn wasserstein1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::IncomparableMeasures(mu.len(), nu.len()));
    }
    let total: f64 = mu.atoms.iter().zip(&nu.atoms).map(|(x, y)| (x - y).abs()).sum();
    Ok(total / mu.len() as f64)
}

/// `(1/n) Σ x_i^p`.
pub fn moment(mu: &EmpiricalMeasure, p: f64) -> f64 {
    mu.atoms.iter().map(|a| a.powf(p)).sum::<f64>() / mu.len() as f64
}

/// Kolmogorov–Smirnov distance between `mu` and a continuous CDF.
pub fn ks_against_cdf(mu: &EmpiricalMeasure, cdf: impl Fn(f64) -> f64) -> f64 {
    let n = mu.len() as f64;
    mu.atoms
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS statistic of `mu` against a Gamma law.
pub fn ks_statistic(mu: &EmpiricalMeasure, target: &GammaParams) -> f64 {
    ks_against_cdf(mu, |x| target.cdf(x))
}

/// Two-sample KS statistic; the sizes may differ.
pub fn ks_two_sample(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
    let (xa, xb) = (a.atoms(), b.atoms());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// A time grid starting at 0 with one empirical measure per node.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurePath {
    grid: Vec<f64>,
    measures: Vec<EmpiricalMeasure>,
}

impl MeasurePath {
    pub fn new(grid: Vec<f64>, measures: Vec<EmpiricalMeasure>) -> Result<Self> {
        check_grid(&grid)?;
        if grid.len() != measures.len() {
            return Err(Error::GridMismatch(format!(
                "{} grid nodes but {} measures",
                grid.len(),
                measures.len()
            )));
        }
        let n = measures[0].len();
        if measures.iter().any(|m| m.len() != n) {
            return Err(Error::invalid("all measures on a path must share n"));
        }
        Ok(Self { grid, measures })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn measures(&self) -> &[EmpiricalMeasure] {
        &self.measures
    }

    pub fn at(&self, k: usize) -> &EmpiricalMeasure {
        &self.measures[k]
    }

    pub fn terminal(&self) -> &EmpiricalMeasure {
        self.measures.last().expect("non-empty path")
    }

    /// Number of atoms per measure.
    pub fn n(&self) -> usize {
        self.measures[0].len()
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("non-empty grid")
    }

    pub fn means(&self) -> Vec<f64> {
        self.measures.iter().map(EmpiricalMeasure::mean).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.measures.iter().map(EmpiricalMeasure::variance).collect()
    }

    /// Same grid, every measure projected to `n` atoms.
    pub fn project(&self, n: usize) -> Self {
        Self {
            grid: self.grid.clone(),
            measures: self.measures.iter().map(|m| m.project(n)).collect(),
        }
    }

    /// Summary CSV: `t,q01,q05,q25,q50,q75,q95,q99,mean,var`.
    pub fn summary_csv(&self) -> String {
        const PROBS: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];
        let mut table = CsvTable::new(&["t", "q01", "q05", "q25", "q50", "q75", "q95", "q99", "mean", "var"]);
        for (t, m) in self.grid.iter().zip(&self.measures) {
            let mut row = Vec::with_capacity(10);
            row.push(*t);
            row.extend(PROBS.iter().map(|p| m.quantile(*p)));
            row.push(m.mean());
            row.push(m.variance());
            table.row(&row);
        }
        table.into_string()
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::GridMismatch("empty grid".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::GridMismatch(format!("grid starts at {} not 0", grid[0])));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::GridMismatch("grid not strictly increasing".into()));
    }
    Ok(())
}

pub(crate) fn same_grid(a: &[f64], b: &[f64]) -> bool {
    let scale = a.last().copied().unwrap_or(1.0).abs().max(1.0);
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * scale)
}

/// Sup over grid nodes of `wasserstein1`.
pub fn path_distance(a: &MeasurePath, b: &MeasurePath) -> Result<f64> {
    if !same_grid(&a.grid, &b.grid) {
        return Err(Error::GridMismatch("paths live on different grids".into()));
    }
    a.measures
        .iter()
        .zip(&b.measures)
        .try_fold(0.0f64, |acc, (m, r)| Ok(acc.max(wasserstein1(m, r)?)))
}

/// `path_distance` against a larger reference ensemble, which is first
/// projected onto `a.n()` atoms at every node.
pub fn path_distance_to_reference(a: &MeasurePath, reference: &MeasurePath) -> Result<f64> {
    path_distance(a, &reference.project(a.n()))
}

/// Gamma law with scale 𝔞 and shape 𝔟; mean 𝔞𝔟.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    scale: f64,
    shape: f64,
}

impl GammaParams {
    pub fn new(scale: f64, shape: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && shape > 0.0 && shape.is_finite()) {
            return Err(Error::invalid(format!(
                "Gamma parameters must be positive and finite (scale {scale}, shape {shape})"
            )));
        }
        Ok(Self { scale, shape })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn mean(&self) -> f64 {
        self.scale * self.shape
    }

    pub fn variance(&self) -> f64 {
        self.scale * self.scale * self.shape
    }

    pub fn cdf(&self, x: f64) -> f64 {
        special::gamma_p(self.shape, x / self.scale)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.scale * special::gamma_p_inv(self.shape, p)
    }

    /// Laplace transform `(1 + 𝔞x)^(−𝔟)`.
    pub fn laplace(&self, x: f64) -> f64 {
        (1.0 + self.scale * x).powf(-self.shape)
    }

    /// `n`-atom discretization at the mid-quantiles `(j + ½)/n`.
    pub fn quantile_measure(&self, n: usize) -> EmpiricalMeasure {
        let atoms = (0..n).map(|j| self.quantile((j as f64 + 0.5) / n as f64)).collect();
        EmpiricalMeasure { atoms }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, self.scale)
            .expect("validated parameters")
            .sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use proptest::prelude::*;

    fn em(v: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::new(v.to_vec()).unwrap()
    }

    /// Exact optimal transport for uniform weights by enumerating permutations:
    /// the uniform-weight coupling LP has permutation matrices as its vertices.
    fn brute_force_w1(a: &[f64], b: &[f64]) -> f64 {
        fn permute(k: usize, perm: &mut Vec<usize>, a: &[f64], b: &[f64], best: &mut f64) {
            if k == perm.len() {
                let cost: f64 = perm.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).abs()).sum();
                *best = best.min(cost / a.len() as f64);
                return;
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                permute(k + 1, perm, a, b, best);
                perm.swap(k, i);
            }
        }
        let mut perm: Vec<usize> = (0..a.len()).collect();
        let mut best = f64::INFINITY;
        permute(0, &mut perm, a, b, &mut best);
        best
    }

    #[test]
    fn construction_rejects_bad_atoms() {
        assert!(EmpiricalMeasure::new(vec![]).is_err());
        assert!(EmpiricalMeasure::new(vec![1.0, -0.1]).is_err());
        assert!(EmpiricalMeasure::new(vec![f64::NAN]).is_err());
        assert_eq!(em(&[3.0, 1.0, 2.0]).atoms(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn w1_examples() {
        assert_eq!(wasserstein1(&em(&[0.3]), &em(&[1.7])).unwrap(), 1.4);
        let mu = em(&[0.5, 2.0, 4.0]);
        assert_eq!(wasserstein1(&mu, &mu).unwrap(), 0.0);
        // {0,2} vs {1,1}: both couplings cost 1, so the LP optimum is 1.
        assert_eq!(brute_force_w1(&[0.0, 2.0], &[1.0, 1.0]), 1.0);
        assert_eq!(wasserstein1(&em(&[0.0, 2.0]), &em(&[1.0, 1.0])).unwrap(), 1.0);
    }

    #[test]
    fn w1_rejects_mismatched_sizes() {
        let err = wasserstein1(&em(&[1.0]), &em(&[1.0, 2.0])).unwrap_err();
        assert!(err.to_string().contains("incomparable measures"));
    }

    #[test]
    fn moment_examples() {
        assert_eq!(moment(&em(&[1.0, 1.0, 1.0]), 1.0), 1.0);
        assert_eq!(moment(&em(&[0.0]), 2.0), 0.0);
        assert!((moment(&em(&[1.0, 2.0, 3.0]), 2.0) - 14.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn path_distance_examples() {
        let grid = vec![0.0, 0.5, 1.0];
        let ms = vec![em(&[1.0, 2.0]), em(&[0.5, 3.0]), em(&[0.0, 1.0])];
        let a = MeasurePath::new(grid.clone(), ms.clone()).unwrap();
        assert_eq!(path_distance(&a, &a).unwrap(), 0.0);
        let mut shifted = ms.clone();
        shifted[1] = shifted[1].shifted(0.25);
        let b = MeasurePath::new(grid.clone(), shifted).unwrap();
        assert!((path_distance(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        let other = MeasurePath::new(vec![0.0, 0.4, 1.0], ms).unwrap();
        assert!(matches!(path_distance(&a, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn measure_path_invariants() {
        assert!(MeasurePath::new(vec![0.1, 1.0], vec![em(&[1.0]), em(&[1.0])]).is_err());
        assert!(MeasurePath::new(vec![0.0, 0.0], vec![em(&[1.0]), em(&[1.0])]).is_err());
        assert!(MeasurePath::new(vec![0.0, 1.0], vec![em(&[1.0]), em(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn ks_on_quantile_construction() {
        let g = GammaParams::new(2.0, 0.5).unwrap();
        let n = 1000;
        let mu = g.quantile_measure(n);
        let d = ks_statistic(&mu, &g);
        assert!(d <= 0.5 / n as f64 + 1e-10, "{d}");
    }

    #[test]
    fn ks_degenerate_at_zero() {
        let g = GammaParams::new(2.0, 0.5).unwrap();
        let d = ks_statistic(&em(&[0.0; 10]), &g);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ks_two_sample_basics() {
        let a = em(&[1.0, 2.0, 3.0]);
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b = em(&[10.0, 11.0]);
        assert_eq!(ks_two_sample(&a, &b), 1.0);
        assert!((ks_two_sample(&em(&[1.0, 2.0]), &em(&[1.5, 2.5])) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gamma_cdf_and_sampling_agree() {
        let g = GammaParams::new(2.0, 0.5).unwrap();
        let mut rng = StreamKey::new(11, 0).particle(0);
        let draws: Vec<f64> = (0..20_000).map(|_| g.sample(&mut rng)).collect();
        let d = ks_statistic(&EmpiricalMeasure::new(draws).unwrap(), &g);
        assert!(d < 0.02, "{d}");
        assert!((g.laplace(1.0) - 3f64.powf(-0.5)).abs() < 1e-15);
        assert_eq!(g.laplace(0.0), 1.0);
    }

    #[test]
    fn projection_of_large_reference() {
        let big = em(&(0..1000).map(|i| i as f64).collect::<Vec<_>>());
        let p = big.project(10);
        assert_eq!(p.len(), 10);
        assert_eq!(p.atoms()[0], 50.0);
        assert_eq!(p.atoms()[9], 950.0);
    }

    fn atoms(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn w1_is_a_metric((a, b, c) in (1usize..12).prop_flat_map(|n| (atoms(n), atoms(n), atoms(n)))) {
            let (a, b, c) = (em(&a), em(&b), em(&c));
            let ab = wasserstein1(&a, &b).unwrap();
            let ba = wasserstein1(&b, &a).unwrap();
            let ac = wasserstein1(&a, &c).unwrap();
            let cb = wasserstein1(&c, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert!(ab <= ac + cb + 1e-12);
            prop_assert_eq!(ab == 0.0, a == b);
        }

        #[test]
        fn w1_matches_brute_force((a, b) in (1usize..=5).prop_flat_map(|n| (atoms(n), atoms(n)))) {
            let exact = brute_force_w1(&a, &b);
            let fast = wasserstein1(&em(&a), &em(&b)).unwrap();
            prop_assert!((exact - fast).abs() < 1e-12);
        }

        #[test]
        fn w1_bounded_by_any_pairing((a, b) in (1usize..20).prop_flat_map(|n| (atoms(n), atoms(n)))) {
            let paired: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
            prop_assert!(wasserstein1(&em(&a), &em(&b)).unwrap() <= paired + 1e-12);
        }

        #[test]
        fn first_moment_is_lipschitz((a, b) in (1usize..20).prop_flat_map(|n| (atoms(n), atoms(n)))) {
            let (a, b) = (em(&a), em(&b));
            let gap = (moment(&a, 1.0) - moment(&b, 1.0)).abs();
            prop_assert!(gap <= wasserstein1(&a, &b).unwrap() + 1e-12);
        }
    }
}
