//! Importance-sampling and change-of-measure checks.

use besq_mf::ldp::{importance_sampling, RareEvent};
use besq_mf::particle_system::{replicate, simulate_summary, ControlSpec};
use besq_mf::{InitialLaw, ModelSpec, PhiSpec, SchemeConfig};

fn spec() -> ModelSpec {
    ModelSpec::besq(0.1, PhiSpec::Constant(1.0), InitialLaw::PointMass(1.0))
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn reweighted_functional_is_unbiased() {
    let spec = spec();
    let functional = |ctrl: ControlSpec, seed: u64| {
        let vals = replicate(4000, &SchemeConfig::euler(1e-3, seed), |c| {
            let run = simulate_summary(100, &spec, c, 0.2, &ctrl)?;
            let m = run.terminal.iter().sum::<f64>() / run.terminal.len() as f64;
            Ok(run.log_weight.exp() * m * m)
        })
        .unwrap();
        mean_stderr(&vals)
    };
    let (plain, se_p) = functional(ControlSpec::Zero, 11);
    let (tilted, se_t) = functional(ControlSpec::Constant(0.2), 12);
    assert!(
        (plain - tilted).abs() <= 4.0 * (se_p * se_p + se_t * se_t).sqrt(),
        "{plain} ± {se_p} vs {tilted} ± {se_t}"
    );
}

#[test]
fn tilting_reduces_variance_on_a_rare_event() {
    let spec = spec();
    let event = RareEvent::TerminalMeanAbove(1.31);
    let replicas = 4000;
    let est = importance_sampling(
        &event,
        50,
        &spec,
        &SchemeConfig::euler(1e-3, 21),
        0.1,
        &ControlSpec::Constant(1.4),
        replicas,
    )
    .unwrap();
    assert!(est.hits > 100 && !est.low_ess);
    let is_var = est.stderr.powi(2) * replicas as f64;
    let plain_var = est.p_hat * (1.0 - est.p_hat);
    assert!(plain_var >= 2.0 * is_var, "plain {plain_var} vs IS {is_var}");
}

#[test]
fn estimated_probability_decreases_with_the_threshold() {
    let spec = spec();
    let cfg = SchemeConfig::euler(1e-3, 31);
    let p: Vec<f64> = [1.2, 1.25, 1.3]
        .iter()
        .map(|a| {
            importance_sampling(
                &RareEvent::TerminalMeanAbove(*a),
                50,
                &spec,
                &cfg,
                0.1,
                &ControlSpec::Constant(1.0),
                2000,
            )
            .unwrap()
            .p_hat
        })
        .collect();
    assert!(p[0] > p[1] && p[1] > p[2] && p[2] > 0.0, "{p:?}");
    assert!(p.iter().all(|x| x.ln().is_finite()));
}
