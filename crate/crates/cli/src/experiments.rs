//! One entry point per experiment kind. Each returns the CSV artifacts and a
//! one-line summary for stdout; nothing here touches the filesystem.

use crate::config::{ExperimentConfig, Kind};
use crate::error::CliError;
use besq_mf::analytics::{classify_boundary, stationary_fixed_point, LaplaceGrid};
use besq_mf::csv::{fmt_sig9, CsvTable};
use besq_mf::ldp::{constant_control_search, rate_fit, SearchConfig};
use besq_mf::mckean_vlasov::{
    monotonicity_time, picard_iterate, solve_selfconsistent, variance_closed_form, variance_ode,
};
use besq_mf::particle_system::{replicate, simulate_summary, ControlSpec};
use besq_mf::{ModelSpec, SchemeConfig};

pub struct Outcome {
    pub artifacts: Vec<(String, String)>,
    pub summary: String,
}

impl Outcome {
    fn new(summary: String) -> Self {
        Self {
            artifacts: Vec::new(),
            summary,
        }
    }

    fn with(mut self, name: &str, csv: String) -> Self {
        self.artifacts.push((name.to_string(), csv));
        self
    }
}

/// Assumption probes run before any simulation.
const PROBES: usize = 8;

fn validated_model(cfg: &ExperimentConfig) -> Result<ModelSpec, CliError> {
    let spec = cfg.model()?;
    spec.validate_assumptions(PROBES)?;
    Ok(spec)
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    match cfg.kind {
        Kind::Simulate => simulate(cfg),
        Kind::Mkv => mkv(cfg),
        Kind::Variance => variance(cfg),
        Kind::Stationary => stationary(cfg),
        Kind::Laplace => laplace(cfg),
        Kind::Boundary => boundary(cfg),
        Kind::Ldp => ldp(cfg),
        Kind::Chaos => chaos(cfg),
    }
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = validated_model(cfg)?;
    let scheme = cfg.scheme()?;
    let (n, horizon) = (cfg.usize("n")?, cfg.positive("T")?);
    let runs = replicate(cfg.usize("replicas")?, &scheme, |c| {
        let run = simulate_summary(n, &spec, c, horizon, &ControlSpec::Zero)?;
        let (mean, _) = mean_stderr(&run.terminal);
        let var = run.terminal.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        Ok((mean, var, run.terminal.iter().sum::<f64>()))
    })?;
    let mut table = CsvTable::new(&["replica", "terminal_mean", "terminal_var", "terminal_sum"]);
    for (r, (m, v, s)) in runs.iter().enumerate() {
        table.raw_row(&[r.to_string(), fmt_sig9(*m), fmt_sig9(*v), fmt_sig9(*s)]);
    }
    let means: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let (m, se) = mean_stderr(&means);
    let expected = spec.m_lambda() + spec.delta * horizon;
    let spread = if runs.len() > 1 {
        format!(" (stderr {})", fmt_sig9(se))
    } else {
        String::new()
    };
    Ok(Outcome::new(format!(
        "terminal mean {}{spread} over {} replicas; m_λ + δT = {}",
        fmt_sig9(m),
        runs.len(),
        fmt_sig9(expected)
    ))
    .with("summary.csv", table.into_string()))
}

fn mkv(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = validated_model(cfg)?;
    let scheme = cfg.scheme()?;
    let (big_n, horizon) = (cfg.usize("N")?, cfg.positive("T")?);
    match cfg.str("solver") {
        "selfconsistent" => {
            let law = solve_selfconsistent(&spec, big_n, &scheme, horizon)?;
            let last = law.mean_path.len() - 1;
            Ok(Outcome::new(format!(
                "self-consistent law flow: terminal mean {}, variance {}",
                fmt_sig9(law.mean_path[last]),
                fmt_sig9(law.var_path[last])
            ))
            .with("law.csv", law.to_csv()))
        }
        "picard" => {
            let out = picard_iterate(
                &spec,
                big_n,
                &scheme,
                horizon,
                cfg.positive("tol")?,
                cfg.usize("max_iter")?,
            )?;
            let mut gaps = CsvTable::new(&["iteration", "gap"]);
            for (k, g) in out.gaps.iter().enumerate() {
                gaps.raw_row(&[(k + 1).to_string(), fmt_sig9(*g)]);
            }
            Ok(Outcome::new(format!(
                "Picard converged after {} iterations, last gap {}",
                out.iterations(),
                fmt_sig9(*out.gaps.last().unwrap_or(&0.0))
            ))
            .with("law.csv", out.law.to_csv())
            .with("picard.csv", gaps.into_string()))
        }
        other => Err(CliError::Config(format!(
            "`solver` must be selfconsistent or picard, got `{other}`"
        ))),
    }
}

/// Reduced (δ = 0) limit: the mean stays at m_λ, so φ is evaluated there.
fn variance(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = validated_model(cfg)?;
    let m = spec.m_lambda();
    let grid = SchemeConfig::euler(cfg.positive("dt")?, 0).grid(cfg.positive("T")?)?;
    let phi_path = vec![spec.phi.eval_mean(m); grid.len()];
    let closed = variance_closed_form(&phi_path, m, &grid)?;
    let ode = variance_ode(&phi_path, m, &grid)?;
    let t_star = monotonicity_time(&phi_path, m, &grid)?;
    let mut table = CsvTable::new(&["t", "phi", "V_closed", "V_ode"]);
    for k in 0..grid.len() {
        table.row(&[grid[k], phi_path[k], closed[k], ode[k]]);
    }
    let t_star = t_star.map_or("none".to_string(), fmt_sig9);
    Ok(Outcome::new(format!(
        "V(T) = {} (closed form), {} (RK4); monotonicity time {t_star}",
        fmt_sig9(closed[closed.len() - 1]),
        fmt_sig9(ode[ode.len() - 1])
    ))
    .with("variance.csv", table.into_string()))
}

fn stationary(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = validated_model(cfg)?;
    let fp = stationary_fixed_point(&spec.phi, spec.m_lambda(), cfg.positive("tol")?, cfg.usize("max_iter")?)?;
    let mut table = CsvTable::new(&["phi_star", "scale", "shape", "iterations", "residual"]);
    table.raw_row(&[
        fmt_sig9(fp.phi_star),
        fmt_sig9(fp.params.scale()),
        fmt_sig9(fp.params.shape()),
        fp.iterations.to_string(),
        fmt_sig9(fp.residual),
    ]);
    Ok(Outcome::new(format!(
        "φ* = {}, stationary law Gamma(scale {}, shape {})",
        fmt_sig9(fp.phi_star),
        fmt_sig9(fp.params.scale()),
        fmt_sig9(fp.params.shape())
    ))
    .with("stationary.csv", table.into_string()))
}

fn laplace(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = validated_model(cfg)?;
    let horizon = cfg.positive("T")?;
    let scheme = SchemeConfig::exact(cfg.positive("dt")?, cfg.u64("seed")?);
    let law = solve_selfconsistent(&spec, cfg.usize("N")?, &scheme, horizon)?;
    let grid = law.grid().to_vec();
    let mut samples = Vec::new();
    for t in cfg.f64_list("times")? {
        let k = grid
            .iter()
            .position(|g| (g - t).abs() <= 1e-9 * horizon.max(1.0))
            .ok_or_else(|| CliError::Config(format!("probe time {t} is not a grid node in (0, T]")))?;
        if k == 0 {
            return Err(CliError::Config("probe times must be positive".into()));
        }
        samples.push((t, law.path.at(k).clone()));
    }
    let initial = spec.initial_law.clone();
    let u0 = move |x: f64| initial.laplace(x);
    let table = LaplaceGrid::build(
        &law.phi_path,
        &grid,
        spec.m_lambda(),
        &u0,
        &samples,
        &cfg.f64_list("xs")?,
    )?;
    let worst = table.probes.iter().map(|p| p.abs_err()).fold(0.0, f64::max);
    Ok(Outcome::new(format!(
        "{} probes, max |U_pde − U_mc| = {}",
        table.probes.len(),
        fmt_sig9(worst)
    ))
    .with("laplace.csv", table.to_csv()))
}

fn boundary(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let (m, lo, hi) = (cfg.f64("m_lambda")?, cfg.f64("phi_inf")?, cfg.f64("phi_sup")?);
    let report = classify_boundary(m, lo, hi)?;
    let mut table = CsvTable::new(&["m_lambda", "phi_inf", "phi_sup", "lower", "upper", "class"]);
    table.raw_row(&[
        fmt_sig9(m),
        fmt_sig9(lo),
        fmt_sig9(hi),
        fmt_sig9(report.lower),
        fmt_sig9(report.upper),
        report.class.to_string(),
    ]);
    Ok(Outcome::new(report.class.to_string()).with("boundary.csv", table.into_string()))
}

fn ldp(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = validated_model(cfg)?;
    let event = cfg.event()?;
    let horizon = cfg.positive("T")?;
    let scheme = cfg.scheme()?;
    let (u_max, u_step) = (cfg.positive("u_max")?, cfg.positive("u_step")?);
    let steps = (u_max / u_step + 1e-9).floor() as usize;
    let u_grid: Vec<f64> = (0..=steps).map(|k| k as f64 * u_step).collect();
    let search = SearchConfig {
        ensemble: cfg.usize("ensemble")?,
        cfg: scheme,
    };
    let choice = constant_control_search(&event, &spec, horizon, &u_grid, &search)?;
    let report = rate_fit(
        &event,
        &spec,
        &scheme.with_stream(1),
        horizon,
        &cfg.usize_list("n_list")?,
        cfg.usize("replicas")?,
        &ControlSpec::Constant(choice.u),
    )?;
    let rates: Vec<String> = report.rates().into_iter().map(fmt_sig9).collect();
    Ok(Outcome::new(format!(
        "control u = {}, cost {}; −(1/n) log p̂: {}",
        fmt_sig9(choice.u),
        fmt_sig9(choice.cost),
        rates.join(", ")
    ))
    .with("rates.csv", report.to_csv()))
}

fn chaos(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let spec = validated_model(cfg)?;
    let horizon = cfg.positive("T")?;
    let base = cfg.scheme()?;
    let replicas = cfg.usize("replicas")?;
    let mut table = CsvTable::new(&["n", "corr", "pairs"]);
    let mut corrs = Vec::new();
    for (j, n) in cfg.usize_list("n_list")?.into_iter().enumerate() {
        if n < 2 {
            return Err(CliError::Config("every n in `n_list` must be at least 2".into()));
        }
        let scheme = SchemeConfig::new(base.dt, base.scheme, base.seed.wrapping_add(j as u64));
        // Disjoint pairs (X_{2k}, X_{2k+1}) are exchangeable copies of a tagged pair.
        let pairs = replicate(replicas, &scheme, |c| {
            let x = simulate_summary(n, &spec, c, horizon, &ControlSpec::Zero)?.terminal;
            Ok(x.chunks_exact(2).map(|p| (p[0], p[1])).collect::<Vec<_>>())
        })?
        .concat();
        let k = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
        let corr = sxy / (sxx * syy).sqrt();
        if !corr.is_finite() {
            return Err(besq_mf::Error::NonFinite("tagged-pair correlation").into());
        }
        table.raw_row(&[n.to_string(), fmt_sig9(corr), pairs.len().to_string()]);
        corrs.push(format!("n={n}: {}", fmt_sig9(corr)));
    }
    Ok(Outcome::new(format!("tagged-pair correlation {}", corrs.join(", "))).with("chaos.csv", table.into_string()))
}
