use fedtopics_core::termstructure::{empirical_proxies, mle_fit, two_step, FactorSeries};
use serde_json::{json, Value};

use crate::artifact::{fmt_f64, json_f64, json_matrix, json_vec, StageWriter, Table};
use crate::config::{CurveMethod, PipelineConfig};
use crate::error::Result;
use crate::ingest::read_yields;

fn push_factors(t: &mut Table, f: &FactorSeries) {
    for (i, date) in f.dates.iter().enumerate() {
        let mut row = vec![date.to_string()];
        row.extend(f.values.row(i).iter().map(|v| fmt_f64(*v)));
        row.push(f.source.as_str().to_string());
        t.push(row);
    }
}

pub(super) fn run(cfg: &PipelineConfig, w: &mut StageWriter) -> Result<()> {
    let c = &cfg.curve;
    let panel = read_yields(&cfg.paths.yields, c.allow_missing)?;
    let init = two_step(&panel, c.lambda)?;

    let mut factors = Table::new(["date", "level", "slope", "curvature", "source"]);
    push_factors(&mut factors, &init.factors);

    let var = &init.var;
    let mut doc = json!({
        "method": match c.method { CurveMethod::Mle => "mle", CurveMethod::TwoStep => "two-step" },
        "maturities": panel.maturities,
        "observations": panel.len(),
        "two_step": {
            "lambda": c.lambda,
            "mu": json_vec(var.mu.iter().copied()),
            "transition": json_matrix(&var.a),
            "q": json_matrix(&var.q),
            "spectral_radius": json_f64(var.spectral_radius()),
        },
        "mle": Value::Null,
    });

    if c.method == CurveMethod::Mle {
        let fit = mle_fit(&panel, &init, &c.mle_options())?;
        if !fit.converged() {
            log::warn!(
                "maximum likelihood stopped without converging (gradient sup-norm {}); reporting the best point",
                fit.optimizer.grad_norm
            );
        }
        push_factors(&mut factors, &fit.filter.filtered_factors(&panel));
        push_factors(&mut factors, &fit.smoother.factors(&panel));
        let m = &fit.model;
        doc["mle"] = json!({
            "lambda": json_f64(fit.lambda),
            "estimate_lambda": c.estimate_lambda,
            "loglik": json_f64(fit.loglik),
            "init_loglik": json_f64(fit.init_loglik),
            "start": fit.start.as_str(),
            "psi": json_vec(fit.optimizer.x.iter().copied()),
            "transition": json_matrix(&m.transition),
            "mu": json_vec(m.mu.iter().copied()),
            "h_diag": json_vec(m.h.iter().copied()),
            "q": json_matrix(&m.q),
            "a0": json_vec(m.a0.iter().copied()),
            "p0": json_matrix(&m.p0),
            "spectral_radius": json_f64(m.spectral_radius()),
            "optimizer": {
                "converged": fit.converged(),
                "iterations": fit.optimizer.iterations,
                "evaluations": fit.optimizer.evaluations,
                "objective": json_f64(fit.optimizer.f),
                "grad_norm": json_f64(fit.optimizer.grad_norm),
            },
        });
    }
    w.table("curve/factors.csv", &factors)?;
    w.json("curve/model.json", doc)?;

    let mut proxies = Table::new(["date", "level", "slope", "curvature"]);
    match empirical_proxies(&panel) {
        Ok(p) => {
            for (i, date) in panel.dates.iter().enumerate() {
                proxies.push(vec![date.to_string(), fmt_f64(p.level[i]), fmt_f64(p.slope[i]), fmt_f64(p.curvature[i])]);
            }
        }
        Err(e) => log::warn!("no empirical proxies: {e}"),
    }
    w.table("curve/proxies.csv", &proxies)
}
