use std::path::Path;

use chrono::NaiveDate;
use coint_forward::calibration::{calibrate, write_matrix_csv, CalibrationReport};
use coint_forward::centering::{
    centering_surface, closed_form_moment_with, fit_theta_prime, moment_terms, write_surfaces_csv,
    write_theta_prime_csv, MomentSurface,
};
use coint_forward::diagnostics::{adf_test, classify_pi_rank, default_max_lag, engle_granger_test};
use coint_forward::market_data::{
    initial_curve, load_quotes, write_quotes, write_rejections, CurvePair, ForwardCurve, LoadedQuotes,
    QuoteSchema,
};
use coint_forward::simulation::{
    diagnostics, independent_walks, simulate_forwards, simulate_hamilton, synthesize_panels,
};
use coint_forward::{presets, Energy, Error, MeasureTag, ModelParams};
use serde_json::json;

use crate::config::{Fixture, RunConfig};
use crate::output::OutputSet;

pub type Outcome = Result<(OutputSet, Vec<String>), Error>;

fn load_params(cfg: &RunConfig) -> Result<ModelParams, Error> {
    match &cfg.params {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ModelParams::from_json(&text).map_err(|e| e.in_stage("parameters"))
        }
        None => Ok(presets::reference_params()),
    }
}

fn params_source(cfg: &RunConfig) -> String {
    cfg.params
        .as_ref()
        .map_or("reference preset".into(), |p| p.display().to_string())
}

fn quote_path(cfg: &RunConfig, e: Energy) -> Result<&Path, Error> {
    let p = match e {
        Energy::Gas => &cfg.gas,
        Energy::Crude => &cfg.crude,
    };
    p.as_deref()
        .ok_or_else(|| Error::NoData(format!("no {} quote file configured", e.name())))
}

fn load_energy(cfg: &RunConfig, e: Energy) -> Result<LoadedQuotes, Error> {
    let unit = match e {
        Energy::Gas => &cfg.synth.gas_unit,
        Energy::Crude => &cfg.synth.crude_unit,
    };
    load_quotes(quote_path(cfg, e)?, &QuoteSchema::new(e, unit.clone()))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), Error>) -> Result<Vec<u8>, Error> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn echo_config(out: &mut OutputSet, cfg: &RunConfig) -> Result<(), Error> {
    out.add_text("effective_config.toml", cfg.to_toml()?);
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Outcome {
    let params = load_params(cfg)?;
    let data = synthesize_panels(&params, &cfg.synth)?;
    let mut out = OutputSet::default();
    out.add("gas_quotes.csv", csv_bytes(|b| write_quotes(&data.gas, b))?);
    out.add("crude_quotes.csv", csv_bytes(|b| write_quotes(&data.crude, b))?);
    out.add_text("truth_params.json", params.to_json()?);
    let n = params.n_factors();
    let mut motion = String::from("date");
    for i in 0..n {
        motion.push_str(&format!(",x{i}"));
    }
    motion.push('\n');
    for (k, d) in data.dates.iter().enumerate() {
        motion.push_str(&d.to_string());
        for v in &data.motion[k * n..(k + 1) * n] {
            motion.push_str(&format!(",{v}"));
        }
        motion.push('\n');
    }
    out.add_text("truth_motion.csv", motion);
    echo_config(&mut out, cfg)?;
    let summary = vec![
        format!("parameters: {}", params_source(cfg)),
        format!("dates: {} from {} to {}", data.dates.len(), data.dates[0], data.dates.last().unwrap()),
        format!("gas quotes: {}", data.gas.len()),
        format!("crude quotes: {}", data.crude.len()),
    ];
    Ok((out, summary))
}

fn max_by_energy(surfaces: &[MomentSurface]) -> Vec<String> {
    surfaces
        .iter()
        .map(|s| format!("{} max |E[F]/F0 - 1|: {:.4}%", s.energy.name(), 100.0 * s.max_abs_deviation()))
        .collect()
}

pub fn calibrate_cmd(cfg: &RunConfig) -> Outcome {
    let gas = load_energy(cfg, Energy::Gas).map_err(|e| e.in_stage("gas quotes"))?;
    let crude = load_energy(cfg, Energy::Crude).map_err(|e| e.in_stage("crude quotes"))?;
    let (params, report) = calibrate(Some(&gas.panel), Some(&crude.panel), &cfg.calibration)?;
    let fit_cfg = cfg.centering.fit_config()?;
    let fit = fit_theta_prime(&params, &fit_cfg).map_err(|e| e.in_stage("centering"))?;
    let params = params.with_theta_prime(fit.theta_prime)?;
    let knots = fit_cfg.knots();
    let surfaces = Energy::ALL
        .iter()
        .map(|&e| centering_surface(e, &params, &knots, fit_cfg.fan.get(e), fit_cfg.quadrature))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.in_stage("centering"))?;

    let mut out = OutputSet::default();
    out.add_text("params.json", params.to_json()?);
    out.add_text("calibration_report.json", report.to_json()?);
    out.add("pi.csv", csv_bytes(|b| write_matrix_csv(&report.vecm.pi, b))?);
    out.add("sigma_sigma_t.csv", csv_bytes(|b| write_matrix_csv(&report.vecm.sigma_sigma_t, b))?);
    out.add("theta_prime.csv", csv_bytes(|b| write_theta_prime_csv(&params.theta_prime, b))?);
    out.add("centering_surface.csv", csv_bytes(|b| write_surfaces_csv(&surfaces, b))?);
    out.add("gas_rejections.csv", csv_bytes(|b| write_rejections(&gas.rejections, b))?);
    out.add("crude_rejections.csv", csv_bytes(|b| write_rejections(&crude.rejections, b))?);
    echo_config(&mut out, cfg)?;

    let mut summary = Vec::new();
    for e in Energy::ALL {
        let r = report.energy(e);
        summary.push(format!(
            "{}: {} returns, tau1 {:.4}, tau2 {:.4}, first three PCs explain {:.1}%",
            e.name(),
            r.returns,
            r.tau.tau1,
            r.tau.tau2,
            100.0 * r.pca.explained_variance.iter().take(3).sum::<f64>()
        ));
    }
    summary.push(format!(
        "Pi nonzero entries: {}, motion dates: {}",
        report.vecm.pi.iter().flatten().filter(|v| **v != 0.0).count(),
        report.motion.dates.len()
    ));
    summary.extend(max_by_energy(&surfaces));
    Ok((out, summary))
}

fn curves(cfg: &RunConfig) -> Result<CurvePair, Error> {
    let c = &cfg.curves;
    if !c.from_quotes {
        return CurvePair::new(
            ForwardCurve::flat(Energy::Gas, c.flat_valuation_date, c.maturities.clone(), c.gas_price)?,
            ForwardCurve::flat(Energy::Crude, c.flat_valuation_date, c.maturities.clone(), c.crude_price)?,
        );
    }
    let gas = load_energy(cfg, Energy::Gas)?.panel;
    let crude = load_energy(cfg, Energy::Crude)?.panel;
    let date: NaiveDate = match c.valuation_date {
        Some(d) => d,
        None => *gas
            .quote_dates()
            .intersection(&crude.quote_dates())
            .last()
            .ok_or_else(|| Error::NoData("gas and crude share no quote date".into()))?,
    };
    CurvePair::new(initial_curve(&gas, date)?, initial_curve(&crude, date)?)
}

pub fn simulate(cfg: &RunConfig) -> Outcome {
    let mut params = load_params(cfg)?;
    let mut fitted = false;
    if cfg.simulation.measure == MeasureTag::Historical
        && params.theta_prime.is_zero()
        && cfg.centering.fit_before_simulation
    {
        let mut fit_cfg = cfg.centering.fit_config()?;
        fit_cfg.horizon = fit_cfg.horizon.max(cfg.simulation.horizon);
        let fit = fit_theta_prime(&params, &fit_cfg).map_err(|e| e.in_stage("centering"))?;
        params = params.with_theta_prime(fit.theta_prime)?;
        fitted = true;
    }
    let curves = curves(cfg).map_err(|e| e.in_stage("initial curves"))?;
    let set = simulate_forwards(&params, &curves, &cfg.simulation)?;
    let diag = diagnostics(&set)?;

    let mut out = OutputSet::default();
    out.add("scenarios.csv", csv_bytes(|b| set.write_csv(b))?);
    out.add("scenarios.bin", csv_bytes(|b| set.write_binary(b))?);
    out.add_text("diagnostics.json", serde_json::to_string_pretty(&diag)?);
    out.add_text("params_used.json", params.to_json()?);
    echo_config(&mut out, cfg)?;
    let summary = vec![
        format!(
            "parameters: {}{}",
            params_source(cfg),
            if fitted { " (centering drift fitted)" } else { "" }
        ),
        format!(
            "{} paths, {} recorded times, {} maturities, measure {:?}, scheme {:?}",
            set.n_paths(),
            set.n_times(),
            set.n_maturities(),
            cfg.simulation.measure,
            cfg.simulation.scheme
        ),
        format!(
            "max |mean ratio - 1|: {:.4}% ({:.2} standard errors)",
            100.0 * diag.max_abs_deviation,
            diag.max_deviation_in_std_errors
        ),
    ];
    Ok((out, summary))
}

/// Largest gap between the closed-form moment and the Gaussian identity
/// `exp(½ Var − ½ QV)` over the configured grid.
fn identity_gap(params: &ModelParams, cfg: &RunConfig) -> Result<f64, Error> {
    let quad = cfg.centering.quadrature();
    let mut worst: f64 = 0.0;
    for e in Energy::ALL {
        for &t in &cfg.validate.identity_times {
            for &x in &cfg.validate.identity_tenors {
                let m = moment_terms(e, t, t + x, params, quad)?;
                let closed = closed_form_moment_with(e, t, t + x, params, quad)?;
                let ident = (0.5 * m.variance).exp() * (-0.5 * m.quadratic_variation).exp();
                worst = worst.max((ident - closed).abs());
            }
        }
    }
    Ok(worst)
}

pub fn validate(cfg: &RunConfig) -> Outcome {
    let v = &cfg.validate;
    let params = load_params(cfg)?;
    let mut checks = Vec::new();
    let mut summary = vec![format!("parameters: {}", params_source(cfg))];

    let rank = classify_pi_rank(&params.pi, v.rank_tolerance)?;
    checks.push(json!({
        "name": "pi_rank",
        "informational": true,
        "pass": true,
        "rank": rank.rank,
        "case": rank.case,
        "singular_values": rank.singular_values,
    }));
    summary.push(format!("Pi rank {} ({:?})", rank.rank, rank.case));

    let gap = identity_gap(&params, cfg)?;
    checks.push(json!({
        "name": "moment_identity",
        "informational": false,
        "pass": gap <= 1e-9,
        "max_abs_gap": gap,
        "tolerance": 1e-9,
    }));
    summary.push(format!("moment identity gap {gap:.3e}"));

    if v.fixture != Fixture::None {
        let (a, b) = match v.fixture {
            Fixture::Hamilton => simulate_hamilton(v.fixture_steps, cfg.seed)?,
            _ => independent_walks(v.fixture_steps, cfg.seed)?,
        };
        let eg = engle_granger_test(&b, &[a])?;
        let expect_reject = v.fixture == Fixture::Hamilton;
        checks.push(json!({
            "name": "fixture_cointegration",
            "informational": false,
            "fixture": v.fixture,
            "pass": eg.result.reject_5pct == expect_reject,
            "expected_rejection": expect_reject,
            "test": eg,
        }));
        summary.push(format!(
            "{:?} fixture: statistic {:.3}, 5% critical {:.3}, rejected {}",
            v.fixture, eg.result.statistic, eg.result.critical_values[1], eg.result.reject_5pct
        ));
    }

    if let Some(path) = &v.report {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: CalibrationReport =
            serde_json::from_str(&text).map_err(|e| Error::from(e).in_stage("calibration report"))?;
        let x = &report.motion.x;
        let n = report.motion.n_factors();
        let comp = |i: usize| -> Vec<f64> { x.iter().map(|r| r[i]).collect() };
        let lag = default_max_lag(x.len());
        let mut roots = Vec::new();
        for i in 0..n {
            roots.push(adf_test(&comp(i), lag)?);
        }
        let offset = params.vol.offset(Energy::Crude);
        let eg = if n > offset { Some(engle_granger_test(&comp(0), &[comp(offset)])?) } else { None };
        summary.push(format!(
            "motion components with a rejected unit root: {}/{n}",
            roots.iter().filter(|r| r.reject_5pct).count()
        ));
        checks.push(json!({
            "name": "motion_unit_roots",
            "informational": true,
            "pass": true,
            "tests": roots,
            "level_cointegration": eg,
        }));
    }

    let all_pass = checks
        .iter()
        .filter(|c| c["informational"] == false)
        .all(|c| c["pass"] == true);
    summary.push(format!("all checks pass: {all_pass}"));
    let mut out = OutputSet::default();
    out.add_text(
        "validation.json",
        serde_json::to_string_pretty(&json!({ "all_pass": all_pass, "checks": checks }))?,
    );
    echo_config(&mut out, cfg)?;
    Ok((out, summary))
}
