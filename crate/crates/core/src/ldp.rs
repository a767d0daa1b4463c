//! Rare events of the empirical measure: controlled (tilted) dynamics,
//! Girsanov importance sampling, constant-control cost bounds and empirical
//! decay rates `−(1/n)·log p̂_n`.
//!
//! The cost of an explicit control, `½·E∫u²dt`, bounds the rate of any event
//! the controlled mean flow reaches; the decay rates are the measured side of
//! that comparison.

use crate::csv::{fmt_sig9, CsvTable};
use crate::error::{Error, Result};
use crate::mckean_vlasov::{check_ensemble, ensemble_law, LawPath};
use crate::model::ModelSpec;
use crate::particle_system::{replicate, simulate_summary, ControlSpec};
use crate::sde_engine::SchemeConfig;

/// Event on the mean path of ρⁿ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RareEvent {
    TerminalMeanAbove(f64),
    TerminalMeanBelow(f64),
    PathSupAbove(f64),
}

impl RareEvent {
    pub fn threshold(&self) -> f64 {
        match self {
            RareEvent::TerminalMeanAbove(a) | RareEvent::TerminalMeanBelow(a) | RareEvent::PathSupAbove(a) => *a,
        }
    }

    /// Whether a mean path (one value per grid node) lies in the event.
    pub fn occurs(&self, mean_path: &[f64]) -> bool {
        let terminal = *mean_path.last().expect("non-empty mean path");
        match self {
            RareEvent::TerminalMeanAbove(a) => terminal >= *a,
            RareEvent::TerminalMeanBelow(a) => terminal <= *a,
            RareEvent::PathSupAbove(a) => mean_path.iter().any(|m| m >= a),
        }
    }

    fn check(&self) -> Result<()> {
        if !self.threshold().is_finite() {
            return Err(Error::invalid("event threshold must be finite"));
        }
        Ok(())
    }
}

/// Controlled limit: `big_n` self-interacting particles under the tilt `u`.
/// Returns the law path and the cost `½∫u²dt` (averaged over particles).
pub fn simulate_controlled_limit(
    spec: &ModelSpec,
    u: &ControlSpec,
    big_n: usize,
    cfg: &SchemeConfig,
    horizon: f64,
) -> Result<(LawPath, f64)> {
    check_ensemble(big_n)?;
    ensemble_law(spec, big_n, cfg, horizon, u)
}

/// Importance-sampling estimate of `P(event)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    /// `(Σw)²/Σw²` over the replicas that hit the event.
    pub ess: f64,
    pub hits: usize,
    pub replicas: usize,
    /// Mean control cost per replica.
    pub cost: f64,
    /// Set when `ess < 10`: the estimate rests on a handful of weights.
    pub low_ess: bool,
}

pub const MIN_REPLICAS: usize = 100;
const ESS_WARNING: f64 = 10.0;

/// `p̂ = mean_r 1{event}·exp(log_weight_r)` over `replicas` tilted runs; stream
/// id = replica index. A zero control is plain Monte Carlo.
pub fn importance_sampling(
    event: &RareEvent,
    n: usize,
    spec: &ModelSpec,
    cfg: &SchemeConfig,
    horizon: f64,
    ctrl: &ControlSpec,
    replicas: usize,
) -> Result<IsEstimate> {
    event.check()?;
    if replicas < MIN_REPLICAS {
        return Err(Error::invalid(format!(
            "need at least {MIN_REPLICAS} replicas, got {replicas}"
        )));
    }
    let runs = replicate(replicas, cfg, |c| {
        let run = simulate_summary(n, spec, c, horizon, ctrl)?;
        let w = if event.occurs(&run.mean_path) {
            run.log_weight.exp()
        } else {
            0.0
        };
        Ok((w, run.cost))
    })?;
    let r = replicas as f64;
    let p_hat = runs.iter().map(|(w, _)| w).sum::<f64>() / r;
    let var = runs.iter().map(|(w, _)| (w - p_hat).powi(2)).sum::<f64>() / (r - 1.0);
    let sum_w: f64 = runs.iter().map(|(w, _)| w).sum();
    let sum_w2: f64 = runs.iter().map(|(w, _)| w * w).sum();
    let ess = if sum_w2 > 0.0 { sum_w * sum_w / sum_w2 } else { 0.0 };
    if !p_hat.is_finite() {
        return Err(Error::NonFinite("importance weights"));
    }
    Ok(IsEstimate {
        p_hat,
        stderr: (var / r).sqrt(),
        ess,
        hits: runs.iter().filter(|(w, _)| *w > 0.0).count(),
        replicas,
        cost: runs.iter().map(|(_, c)| c).sum::<f64>() / r,
        low_ess: ess < ESS_WARNING,
    })
}

/// Ensemble used to evaluate controlled mean flows in [`constant_control_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub ensemble: usize,
    pub cfg: SchemeConfig,
}

/// Cheapest constant control found on a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlChoice {
    pub u: f64,
    /// `u²T/2`.
    pub cost: f64,
}

/// Smallest-cost `u` in `u_grid` whose controlled mean flow lies in the event.
///
/// The controlled flow is the analytic typical flow `m_λ + δt` plus the shift
/// `mean_u(t) − mean_0(t)` of two ensembles run on the same random streams, so
/// `u = 0` reproduces the typical flow exactly and the sampling noise of the
/// ensemble mean cancels to first order.
pub fn constant_control_search(
    event: &RareEvent,
    spec: &ModelSpec,
    horizon: f64,
    u_grid: &[f64],
    search: &SearchConfig,
) -> Result<ControlChoice> {
    event.check()?;
    if u_grid.is_empty() {
        return Err(Error::invalid("empty control grid"));
    }
    let mut candidates = u_grid.to_vec();
    candidates.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(b.total_cmp(a)));
    let grid = search.cfg.grid(horizon)?;
    let typical: Vec<f64> = grid.iter().map(|t| spec.m_lambda() + spec.delta * t).collect();
    let mut baseline: Option<Vec<f64>> = None;
    for u in candidates {
        let flow = if u == 0.0 {
            typical.clone()
        } else {
            let base = match &baseline {
                Some(b) => b.clone(),
                None => {
                    let (law, _) =
                        simulate_controlled_limit(spec, &ControlSpec::Zero, search.ensemble, &search.cfg, horizon)?;
                    baseline = Some(law.mean_path.clone());
                    law.mean_path
                }
            };
            let (law, _) =
                simulate_controlled_limit(spec, &ControlSpec::Constant(u), search.ensemble, &search.cfg, horizon)?;
            typical
                .iter()
                .zip(law.mean_path.iter().zip(&base))
                .map(|(m, (a, b))| m + a - b)
                .collect()
        };
        if event.occurs(&flow) {
            return Ok(ControlChoice {
                u,
                cost: 0.5 * u * u * horizon,
            });
        }
    }
    Err(Error::EventUnreachable)
}

/// One row of a [`RateReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub estimate: IsEstimate,
    /// `−(1/n)·log p̂_n`.
    pub rate: f64,
}

/// Decay rates of an event across system sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub control: String,
    pub cost: f64,
    /// `|r_last − r_prev| / r_last`.
    pub last_relative_spread: f64,
    /// Least-squares fit `rate ≈ intercept + slope/n`.
    pub fit_intercept: f64,
    pub fit_slope: f64,
}

impl RateReport {
    pub fn rates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rate).collect()
    }

    /// CSV with header `n,p_hat,stderr,neg_log_p_over_n,control,cost`.
    pub fn to_csv(&self) -> String {
        let mut table = CsvTable::new(&["n", "p_hat", "stderr", "neg_log_p_over_n", "control", "cost"]);
        for r in &self.rows {
            table.raw_row(&[
                r.n.to_string(),
                fmt_sig9(r.estimate.p_hat),
                fmt_sig9(r.estimate.stderr),
                fmt_sig9(r.rate),
                self.control.clone(),
                fmt_sig9(r.estimate.cost),
            ]);
        }
        table.into_string()
    }
}

/// Estimates `p̂_n` for each `n` (importance sampling under `ctrl`) and the
/// sequence `−(1/n)·log p̂_n`.
#[allow(clippy::too_many_arguments)]
pub fn rate_fit(
    event: &RareEvent,
    spec: &ModelSpec,
    cfg: &SchemeConfig,
    horizon: f64,
    n_list: &[usize],
    replicas: usize,
    ctrl: &ControlSpec,
) -> Result<RateReport> {
    if n_list.len() < 3 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("need at least three increasing system sizes"));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let estimate = importance_sampling(event, n, spec, cfg, horizon, ctrl, replicas)?;
        if estimate.hits == 0 || estimate.p_hat <= 0.0 {
            return Err(Error::NoHits(format!("no replica hit the event at n = {n}")));
        }
        rows.push(RateRow {
            n,
            estimate,
            rate: -estimate.p_hat.ln() / n as f64,
        });
    }
    let k = rows.len();
    let (r_prev, r_last) = (rows[k - 2].rate, rows[k - 1].rate);
    let last_relative_spread = if r_last != 0.0 {
        (r_last - r_prev).abs() / r_last.abs()
    } else {
        f64::INFINITY
    };
    let xs: Vec<f64> = rows.iter().map(|r| 1.0 / r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.rate).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / k as f64, ys.iter().sum::<f64>() / k as f64);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let fit_slope = sxy / sxx;
    let cost = rows.iter().map(|r| r.estimate.cost).sum::<f64>() / k as f64;
    Ok(RateReport {
        control: format!("{ctrl:?}"),
        cost,
        last_relative_spread,
        fit_intercept: my - fit_slope * mx,
        fit_slope,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mckean_vlasov::solve_selfconsistent;
    use crate::model::{InitialLaw, PhiSpec};

    fn spec() -> ModelSpec {
        ModelSpec::besq(0.1, PhiSpec::Constant(1.0), InitialLaw::PointMass(1.0))
    }

    #[test]
    fn events() {
        let path = [1.0, 1.4, 1.2];
        assert!(RareEvent::TerminalMeanAbove(1.2).occurs(&path));
        assert!(!RareEvent::TerminalMeanAbove(1.3).occurs(&path));
        assert!(RareEvent::TerminalMeanBelow(1.2).occurs(&path));
        assert!(RareEvent::PathSupAbove(1.3).occurs(&path));
        assert!(!RareEvent::PathSupAbove(1.5).occurs(&path));
    }

    #[test]
    fn zero_control_limit_is_selfconsistent() {
        let cfg = SchemeConfig::euler(0.01, 2);
        let (law, cost) = simulate_controlled_limit(&spec(), &ControlSpec::Zero, 200, &cfg, 1.0).unwrap();
        assert_eq!(law, solve_selfconsistent(&spec(), 200, &cfg, 1.0).unwrap());
        assert_eq!(cost, 0.0);
        let (_, cost) = simulate_controlled_limit(&spec(), &ControlSpec::Constant(0.4), 200, &cfg, 1.0).unwrap();
        assert!((cost - 0.08).abs() < 1e-12);
    }

    #[test]
    fn typical_threshold_costs_nothing() {
        let search = SearchConfig {
            ensemble: 500,
            cfg: SchemeConfig::euler(1e-3, 1),
        };
        let grid: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
        let c = constant_control_search(&RareEvent::TerminalMeanAbove(1.1), &spec(), 1.0, &grid, &search).unwrap();
        assert_eq!(c, ControlChoice { u: 0.0, cost: 0.0 });
        let mut last = 0.0;
        for a in [1.2, 1.3, 1.5] {
            let c = constant_control_search(&RareEvent::TerminalMeanAbove(a), &spec(), 1.0, &grid, &search).unwrap();
            assert!(c.u > 0.0 && c.cost >= last, "{a}: {c:?}");
            last = c.cost;
        }
        let err = constant_control_search(&RareEvent::TerminalMeanAbove(50.0), &spec(), 1.0, &grid, &search);
        assert!(matches!(err, Err(Error::EventUnreachable)));
    }

    #[test]
    fn zero_control_is_plain_monte_carlo() {
        let cfg = SchemeConfig::euler(0.01, 3);
        let ev = RareEvent::TerminalMeanAbove(1.1);
        let est = importance_sampling(&ev, 20, &spec(), &cfg, 1.0, &ControlSpec::Zero, 200).unwrap();
        let hits = (0..200u64)
            .filter(|r| {
                let run = simulate_summary(20, &spec(), &cfg.with_stream(*r), 1.0, &ControlSpec::Zero).unwrap();
                ev.occurs(&run.mean_path)
            })
            .count();
        assert_eq!(est.p_hat, hits as f64 / 200.0);
        assert_eq!(est.hits, hits);
        assert!(importance_sampling(&ev, 20, &spec(), &cfg, 1.0, &ControlSpec::Zero, 50).is_err());
    }

    #[test]
    fn typical_event_rates_near_zero() {
        let cfg = SchemeConfig::euler(0.01, 4);
        let r = rate_fit(
            &RareEvent::TerminalMeanAbove(1.1),
            &spec(),
            &cfg,
            1.0,
            &[10, 20, 40],
            400,
            &ControlSpec::Zero,
        )
        .unwrap();
        assert!(r.rates().iter().all(|x| x.abs() < 0.1), "{:?}", r.rates());
        assert!(r
            .to_csv()
            .starts_with("n,p_hat,stderr,neg_log_p_over_n,control,cost\n10,"));
    }

    #[test]
    fn no_hits_reported() {
        let cfg = SchemeConfig::euler(0.01, 4);
        let err = rate_fit(
            &RareEvent::TerminalMeanAbove(100.0),
            &spec(),
            &cfg,
            0.5,
            &[10, 20, 40],
            100,
            &ControlSpec::Zero,
        )
        .unwrap_err();
        assert!(err.to_string().contains("increase replicas or control"));
    }
}
