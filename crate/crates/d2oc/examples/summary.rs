//! Runs the bundled scenario and prints its headline statistics: how
//! tightly the horizon error-norm ratio concentrates, the ultimate-bound
//! verdicts, and the feedforward controller's advantage over the nominal
//! one.

use d2oc::config::ScenarioConfig;
use d2oc::metrics::ControllerKind;
use d2oc::run_simulation;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let frac = pos - pos.floor();
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn main() {
    let config = ScenarioConfig::paper_scenario();
    let started = std::time::Instant::now();
    let run = run_simulation(&config).expect("bundled scenario must run");
    println!(
        "{} steps, {} agents, both controllers: {} records in {:.0?}",
        config.steps,
        config.agents.count,
        run.metrics.len(),
        started.elapsed()
    );

    let mut ratios = run.metrics.defined_ratios(ControllerKind::Feedforward);
    ratios.sort_by(f64::total_cmp);
    println!(
        "error-norm ratio (R = {:.0e}): median {:.4}, iqr {:.4}, {} planning events",
        config.controller.r_scale,
        quantile(&ratios, 0.5),
        quantile(&ratios, 0.75) - quantile(&ratios, 0.25),
        ratios.len()
    );

    for report in &run.bound_reports {
        if report.controller == ControllerKind::Feedforward.label() {
            println!(
                "agent {}: lambda {:.3e}, ultimate bound {:.2} m, {}",
                report.agent,
                report.lambda,
                report.bound.unwrap_or(f64::NAN),
                if report.pass { "respected" } else { "violated" }
            );
        }
    }

    let window = config.steps.min(500);
    for agent in 0..config.agents.count {
        let tail_mean = |kind| {
            let series: Vec<f64> = run
                .metrics
                .series(agent, kind)
                .iter()
                .map(|r| r.wasserstein)
                .collect();
            let tail = &series[series.len() - window..];
            tail.iter().sum::<f64>() / tail.len() as f64
        };
        let nominal = tail_mean(ControllerKind::Nominal);
        let ff = tail_mean(ControllerKind::Feedforward);
        println!(
            "agent {agent}: mean W last {window} steps — nominal {nominal:.2} m, ff {ff:.2} m ({:.0}% lower)",
            100.0 * (nominal - ff) / nominal
        );
    }
}
