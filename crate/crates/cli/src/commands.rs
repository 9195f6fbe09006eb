//! One function per command. Each returns the report body, the pass flag and
//! optional plot-data CSV.

use serde_json::{json, Value};

use rwpt::asymptotic::predict::{evaluate, predict, FormulaId, PredictParams, ToleranceConfig};
use rwpt::asymptotic::{fit_kernel_constants, PotentialKernelTable};
use rwpt::harnack::{self, HarnackConfig};
use rwpt::kernel::{green_with, write_kernel_csv, HittingProblem, KernelDumpMeta, SolverOptions, DEFAULT_BUDGET};
use rwpt::mc::{estimate_with_records, write_stop_csv, PathSampler, DEFAULT_CAP};
use rwpt::report::Tagged;
use rwpt::stepdist::check_condition_a;
use rwpt::{build_distribution, Error, Geometry, Point, Region, Result, StepDistribution};

use crate::config::RunConfig;

pub struct Outcome {
    pub report: Value,
    pub pass: bool,
    pub csv: Option<String>,
    /// Metadata written next to the CSV.
    pub sidecar: Option<Value>,
}

fn req<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::MissingParameter(name.to_string()))
}

fn dist(cfg: &RunConfig) -> Result<StepDistribution> {
    build_distribution(cfg.dist.as_ref().ok_or_else(|| Error::MissingParameter("dist".into()))?)
}

fn geometry(cfg: &RunConfig) -> Geometry {
    cfg.k.map_or(Geometry::Planar, Geometry::Toral)
}

fn opts(cfg: &RunConfig) -> SolverOptions {
    SolverOptions::with_budget(cfg.budget.unwrap_or(DEFAULT_BUDGET))
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

/// Largest finite integer moment order, used for the toral error terms.
fn top_moment(d: &StepDistribution) -> Option<f64> {
    d.moments().keys().copied().filter(|&m| m >= 1).max().map(f64::from)
}

pub fn dispatch(command: &str, cfg: &RunConfig) -> Result<Outcome> {
    match command {
        "validate" => validate(cfg),
        "green" => green(cfg),
        "escape" => escape(cfg),
        "hit" => hit(cfg),
        "ruin" => ruin(cfg),
        "potkern" => potkern(cfg),
        "predict" => predict_cmd(cfg),
        "mc" => mc(cfg),
        "harnack-interior" | "harnack-interior-toral" | "harnack-exterior" | "harnack-exterior-toral" => {
            harnack_cmd(command, cfg)
        }
        "green-floor" => green_floor(cfg),
        other => Err(Error::Config(format!("unknown command `{other}`"))),
    }
}

fn validate(cfg: &RunConfig) -> Result<Outcome> {
    let spec = cfg.dist.clone().ok_or_else(|| Error::MissingParameter("dist".into()))?;
    let d = match build_distribution(&spec) {
        Ok(d) => d,
        Err(e) => {
            let report = json!({ "dist": spec, "valid": false, "error": e.to_string() });
            return Ok(Outcome { report, pass: false, csv: None, sidecar: None });
        }
    };
    let flags = d.flags();
    let n = cfg.n.unwrap_or(16.0);
    let s = match cfg.s {
        Some(harnack::SChoice::Fixed(s)) => s as f64,
        _ => 4.0,
    };
    let cond = check_condition_a(&d, n, s, 0.01, 1.0);
    let moments: serde_json::Map<String, Value> =
        d.moments().iter().map(|(k, v)| (k.to_string(), to_value(&Tagged::exact(*v)).unwrap())).collect();
    let report = json!({
        "dist": spec,
        "valid": true,
        "support_size": d.support().len(),
        "flags": flags,
        "gamma2": Tagged::exact(d.gamma2()),
        "pi_gamma": Tagged::exact(d.pi_gamma()),
        "log_slope": Tagged::exact(d.log_slope()),
        "moments": moments,
        "beta": d.beta(),
        "condition_a": cond,
    });
    let pass = flags.symmetric && flags.isotropic_cov && flags.strongly_aperiodic && cond.pass;
    Ok(Outcome { report, pass, csv: None, sidecar: None })
}

fn green(cfg: &RunConfig) -> Result<Outcome> {
    let d = dist(cfg)?;
    let n = req(cfg.n, "n")?;
    let x = cfg.x.unwrap_or(Point::ORIGIN);
    let region = Region::disc(Point::ORIGIN, n, geometry(cfg))?;
    let g = green_with(&d, &region, opts(cfg))?;
    let row = g.row(x)?;
    let value = cfg.y.map(|y| g.value(x, y)).transpose()?;
    let direct = g.expected_escape_times_direct()?;
    let i = g.domain().index_of(x).ok_or(Error::SourceOutsideDomain(x))?;
    let row_sum: f64 = row.iter().sum();
    let report = json!({
        "domain": region,
        "domain_size": g.domain().len(),
        "solver": g.solver_kind(),
        "residual": g.worst_residual(),
        "x": x,
        "y": cfg.y,
        "value": value.map(Tagged::exact),
        "row_sum": Tagged::exact(row_sum),
        "expected_escape_time": Tagged::exact(direct[i]),
        "identity_defect": (row_sum - direct[i]).abs(),
    });
    let rows: Vec<(Point, Point, f64)> = g.domain().points().iter().zip(row.iter()).map(|(y, v)| (x, *y, *v)).collect();
    let mut csv = Vec::new();
    write_kernel_csv(&mut csv, &rows)?;
    let pass = (row_sum - direct[i]).abs() <= 1e-8 * direct[i].max(1.0);
    let meta = KernelDumpMeta {
        domain: to_value(&region)?,
        dist: d.spec().clone(),
        residual_tol: g.residual_tol(),
        window: None,
    };
    let sidecar = Some(to_value(&meta)?);
    Ok(Outcome { report, pass, csv: Some(String::from_utf8(csv).expect("ascii")), sidecar })
}

fn escape(cfg: &RunConfig) -> Result<Outcome> {
    let d = dist(cfg)?;
    let n = req(cfg.n, "n")?;
    let geom = geometry(cfg);
    let region = Region::disc(Point::ORIGIN, n, geom)?;
    let g = green_with(&d, &region, opts(cfg))?;
    let times = g.expected_escape_times_direct()?;
    let m = if geom.is_toral() { top_moment(&d) } else { None };
    let mut csv = String::from("x1,x2,exact,lower,upper\n");
    let mut violations = 0usize;
    let mut worst_margin = f64::INFINITY;
    for (p, t) in g.domain().points().iter().zip(&times) {
        let params = PredictParams { n: Some(n), x: Some(*p), k: cfg.k, m, ..Default::default() };
        let pr = predict(FormulaId::EscapeBounds, &params, &d, &Default::default())?;
        let lo = pr.lower.unwrap_or(f64::NEG_INFINITY);
        let margin = (t - lo).min(pr.value - t);
        worst_margin = worst_margin.min(margin);
        if margin < 0.0 {
            violations += 1;
        }
        csv.push_str(&format!("{},{},{:e},{:e},{:e}\n", p.x, p.y, t, lo, pr.value));
    }
    let x = cfg.x.unwrap_or(Point::ORIGIN);
    let i = g.domain().index_of(x).ok_or(Error::SourceOutsideDomain(x))?;
    let row_sum: f64 = g.row(x)?.iter().sum();
    let report = json!({
        "domain": region,
        "domain_size": g.domain().len(),
        "gamma2": Tagged::exact(d.gamma2()),
        "violations": violations,
        "worst_margin": Tagged::exact(worst_margin),
        "x": x,
        "expected_escape_time": Tagged::exact(times[i]),
        "green_row_sum": Tagged::exact(row_sum),
        "identity_defect": (row_sum - times[i]).abs(),
    });
    let pass = violations == 0 && (row_sum - times[i]).abs() <= 1e-8 * times[i].max(1.0);
    Ok(Outcome { report, pass, csv: Some(csv), sidecar: None })
}

fn hit(cfg: &RunConfig) -> Result<Outcome> {
    let d = dist(cfg)?;
    let r = req(cfg.r, "r")?;
    let x = req(cfg.x, "x")?;
    let geom = geometry(cfg);
    let target = Region::disc(Point::ORIGIN, r, geom)?;
    let ambient = match geom {
        Geometry::Planar => Some(Region::disc(Point::ORIGIN, req(cfg.big_r, "R")?, geom)?),
        Geometry::Toral(_) => cfg.big_r.map(|big_r| Region::disc(Point::ORIGIN, big_r, geom)).transpose()?,
    };
    let prob = HittingProblem::new(&d, &target, ambient.as_ref(), opts(cfg))?;
    let last = prob.lastexit(x)?;
    let direct = prob.direct(x)?;
    let diff = last.sup_diff(&direct);
    let mut csv = String::from("y1,y2,lastexit,direct\n");
    let mut ys: Vec<Point> = last.masses.iter().chain(&direct.masses).map(|m| m.0).collect();
    ys.sort();
    ys.dedup();
    for y in ys {
        csv.push_str(&format!("{},{},{:e},{:e}\n", y.x, y.y, last.mass(y), direct.mass(y)));
    }
    let report = json!({
        "target": target,
        "ambient": ambient,
        "x": x,
        "domain_size": prob.green().domain().len(),
        "total_lastexit": Tagged::exact(last.total),
        "total_direct": Tagged::exact(direct.total),
        "sup_diff": diff,
        "support": last.masses.len(),
    });
    Ok(Outcome { report, pass: diff <= 1e-8, csv: Some(csv), sidecar: None })
}

fn tolerances(cfg: &RunConfig) -> ToleranceConfig {
    cfg.tolerances.clone().unwrap_or_default()
}

fn ruin(cfg: &RunConfig) -> Result<Outcome> {
    let d = dist(cfg)?;
    let formula = if cfg.k.is_some() { FormulaId::RuinToral } else { FormulaId::RuinPlanar };
    let params = PredictParams {
        r: Some(req(cfg.r, "r")?),
        big_r: Some(req(cfg.big_r, "R")?),
        x: Some(req(cfg.x, "x")?),
        k: cfg.k,
        m: cfg.k.and_then(|_| top_moment(&d)),
        form: cfg.form.clone(),
        ..Default::default()
    };
    let rep = evaluate(formula, &params, &d, &tolerances(cfg), opts(cfg))?;
    Ok(Outcome { pass: rep.pass, report: to_value(&rep)?, csv: None, sidecar: None })
}

fn potkern(cfg: &RunConfig) -> Result<Outcome> {
    let d = dist(cfg)?;
    let radius = cfg.radius.unwrap_or(8);
    let j_max = cfg.j_max.unwrap_or(1 << 16);
    let table = PotentialKernelTable::build(&d, j_max, radius, None)?;
    let fit = fit_kernel_constants(&d, &[8.0, 16.0, 32.0, 64.0])?;
    let target = d.log_slope();
    let max_gap = table.values.iter().map(|v| v.2).fold(0.0, f64::max);
    let slope_err = (fit.slope - target).abs() / target;
    let report = json!({
        "meta": table.meta,
        "fit": {
            "slope": Tagged::fitted(fit.slope),
            "intercept": Tagged::fitted(fit.intercept),
            "r2": fit.r2,
            "samples": fit.samples,
        },
        "target_slope": Tagged::exact(target),
        "slope_rel_error": slope_err,
        "max_cauchy_gap": max_gap,
    });
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let pass = max_gap <= 1e-3 && slope_err <= 0.05 && fit.r2 >= 0.999;
    Ok(Outcome { report, pass, csv: Some(String::from_utf8(csv).expect("ascii")), sidecar: None })
}

fn predict_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let d = dist(cfg)?;
    let formula: FormulaId =
        cfg.formula.as_deref().ok_or_else(|| Error::MissingParameter("formula".into()))?.parse()?;
    let mut p = cfg.params.clone().unwrap_or_default();
    p.n = p.n.or(cfg.n);
    p.r = p.r.or(cfg.r);
    p.big_r = p.big_r.or(cfg.big_r);
    p.k = p.k.or(cfg.k);
    p.x = p.x.or(cfg.x);
    p.y = p.y.or(cfg.y);
    p.form = p.form.or(cfg.form.clone());
    if p.s.is_none() {
        if let Some(harnack::SChoice::Fixed(s)) = cfg.s {
            p.s = Some(s as f64);
        }
    }
    if p.m.is_none()
        && matches!(
            formula,
            FormulaId::LargeJump | FormulaId::ToralExitMismatch | FormulaId::RuinToral | FormulaId::AnnulusOverjump
        )
        || (formula == FormulaId::EscapeBounds && p.k.is_some() && p.m.is_none())
    {
        p.m = top_moment(&d);
    }
    let rep = evaluate(formula, &p, &d, &tolerances(cfg), opts(cfg))?;
    Ok(Outcome { pass: rep.pass, report: to_value(&rep)?, csv: None, sidecar: None })
}

fn mc(cfg: &RunConfig) -> Result<Outcome> {
    let d = dist(cfg)?;
    let event = cfg.event.clone().ok_or_else(|| Error::MissingParameter("event".into()))?;
    let sampler = PathSampler::new(&d, cfg.seed.unwrap_or(0))?;
    let (rep, outcomes) = estimate_with_records(
        &sampler,
        cfg.x.unwrap_or(Point::ORIGIN),
        &event,
        cfg.n_paths.unwrap_or(10_000),
        cfg.cap.unwrap_or(DEFAULT_CAP),
    )?;
    let mut csv = Vec::new();
    write_stop_csv(&mut csv, &outcomes)?;
    Ok(Outcome {
        pass: rep.n_capped == 0,
        report: to_value(&rep)?,
        csv: Some(String::from_utf8(csv).expect("ascii")),
        sidecar: None,
    })
}

fn harnack_config(cfg: &RunConfig) -> Result<HarnackConfig> {
    let r = req(cfg.r, "r")?;
    if r.fract() != 0.0 {
        return Err(Error::Config("r must be an integer for Harnack runs".into()));
    }
    let m = cfg.m.clone().ok_or_else(|| Error::MissingParameter("m".into()))?;
    let mut h = HarnackConfig::new(r as u32, m);
    h.s = cfg.s.unwrap_or(harnack::SChoice::Auto);
    h.k = cfg.k;
    h.seed = cfg.seed.unwrap_or(0);
    if let Some(e) = cfg.eps {
        h.eps = e;
    }
    if let Some(b) = cfg.budget {
        h.budget = b;
    }
    if let (Some(x), Some(y)) = (cfg.x, cfg.y) {
        h.sources = Some((x, y));
    }
    Ok(h)
}

fn harnack_cmd(command: &str, cfg: &RunConfig) -> Result<Outcome> {
    let d = dist(cfg)?;
    let h = harnack_config(cfg)?;
    let rep = match command {
        "harnack-interior" if cfg.split == Some(true) => harnack::interior_split(&d, &h)?,
        "harnack-interior" => harnack::interior_harnack(&d, &h)?,
        "harnack-interior-toral" => harnack::interior_harnack_toral(&d, &h)?,
        "harnack-exterior" => harnack::exterior_harnack(&d, &h)?,
        _ => harnack::exterior_harnack_toral(&d, &h)?,
    };
    let mut csv = Vec::new();
    rep.write_csv(&mut csv)?;
    Ok(Outcome {
        pass: rep.pass,
        report: to_value(&rep)?,
        csv: Some(String::from_utf8(csv).expect("ascii")),
        sidecar: None,
    })
}

fn green_floor(cfg: &RunConfig) -> Result<Outcome> {
    let d = dist(cfg)?;
    let rep = harnack::green_floor_probe(&d, &harnack_config(cfg)?)?;
    let mut csv = Vec::new();
    rep.write_csv(&mut csv)?;
    Ok(Outcome {
        pass: rep.pass,
        report: to_value(&rep)?,
        csv: Some(String::from_utf8(csv).expect("ascii")),
        sidecar: None,
    })
}
