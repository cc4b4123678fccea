//! One function per subcommand, each turning a parsed request into
//! in-memory [`Artifacts`].

use crate::request::*;
use crate::{Artifacts, Cli, CliError, Command};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use tauberkit::berry_esseen::{corpus, kernel_constants, verify_be, BeRow};
use tauberkit::growth::{associated_function, check_log_convex, check_non_quasianalytic, GrowthSequence};
use tauberkit::numerics::fit_line;
use tauberkit::rates::{
    appendix_table, optimize_on_grid, optimize_rate, optimize_rate_with, table_rows, write_rate_csv, RateResult,
};
use tauberkit::tauber::{check_condition_t, check_higher_order, fourier_pairing, sandwich_bounds, sandwich_bounds_m};
use tauberkit::testfn::verify_testfn;

pub fn dispatch(cli: &Cli, request: serde_json::Value) -> Result<Artifacts, CliError> {
    match &cli.command {
        Command::Rate => rate(cli, parse(request)?),
        Command::Table { rows } => table(rows),
        Command::Testfn => testfn(parse(request)?),
        Command::VerifyLemma => verify_lemma(cli, parse(request)?),
        Command::VerifyLemmaM => verify_lemma_m(cli, parse(request)?),
        Command::Pairing => pairing(cli, parse(request)?),
        Command::BerryEsseen => berry_esseen(parse(request)?),
        Command::Growth => growth(parse(request)?),
    }
}

fn parse<T: DeserializeOwned>(v: serde_json::Value) -> Result<T, CliError> {
    serde_json::from_value(v).map_err(|e| CliError::Schema(e.to_string()))
}

fn grid(g: &Grid) -> Result<Vec<f64>, CliError> {
    g.values().map_err(CliError::Schema)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Numerical(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Numerical(e.to_string()))
}

fn single(bytes: Vec<u8>, summary: serde_json::Value, violation: Option<String>) -> Artifacts {
    Artifacts { files: vec![(String::new(), bytes)], summary, violation }
}

/// Slope of `ln bound` against `ln x`, when there are enough positive points.
fn log_log_slope(results: &[RateResult]) -> Option<f64> {
    let (lx, lb): (Vec<f64>, Vec<f64>) = results
        .iter()
        .filter(|r| r.x > 0.0 && r.ln_bound.is_finite())
        .map(|r| (r.x.ln(), r.ln_bound))
        .unzip();
    (lx.len() >= 2).then(|| fit_line(&lx, &lb).slope)
}

fn rate(cli: &Cli, req: RateRequest) -> Result<Artifacts, CliError> {
    let xs = grid(&req.x_grid)?;
    let results = match (&req.f, cli.lambda_max) {
        (Penalty::Const(f), None) => optimize_on_grid(&req.class, *f, &xs, req.m)?,
        (f, top) => xs
            .par_iter()
            .map(|x| match top {
                Some(l) => optimize_rate_with(&req.class, f.at(*x), *x, req.m, l.ln()),
                None => optimize_rate(&req.class, f.at(*x), *x, req.m),
            })
            .collect::<tauberkit::Result<Vec<_>>>()?,
    };
    let mut buf = Vec::new();
    write_rate_csv(&mut buf, &results)?;
    let flat = results.iter().filter(|r| r.flat).count();
    let summary = json!({
        "points": results.len(),
        "flat_points": flat,
        "log_log_slope": log_log_slope(&results),
    });
    Ok(single(buf, summary, None))
}

#[derive(Serialize)]
struct TableCsvRow {
    x: f64,
    lambda_star: f64,
    bound: f64,
    ln_lambda_star: f64,
    ln_bound: f64,
    flat: bool,
    fitted: f64,
    reference: f64,
    tol: f64,
    pass: bool,
}

#[derive(Serialize)]
struct TableSummaryRow {
    id: usize,
    description: String,
    fitted: f64,
    reference: f64,
    tol: f64,
    max_residual: f64,
    flat_points: usize,
    pass: bool,
}

fn select_rows(spec: &str) -> Result<Vec<usize>, CliError> {
    let all: Vec<usize> = table_rows().iter().map(|r| r.id).collect();
    if spec.trim() == "all" {
        return Ok(all);
    }
    spec.split(',')
        .map(|s| {
            let id: usize = s.trim().parse().map_err(|_| CliError::Schema(format!("bad row id `{s}`")))?;
            if all.contains(&id) {
                Ok(id)
            } else {
                Err(CliError::Schema(format!("no table row {id}")))
            }
        })
        .collect()
}

fn table(rows: &str) -> Result<Artifacts, CliError> {
    let ids = select_rows(rows)?;
    let selected: Vec<_> = table_rows().into_iter().filter(|r| ids.contains(&r.id)).collect();
    let outcomes = selected
        .par_iter()
        .map(appendix_table)
        .collect::<tauberkit::Result<Vec<_>>>()?;
    let mut files = Vec::new();
    let mut summary_rows = Vec::new();
    for o in &outcomes {
        let rows: Vec<TableCsvRow> = o
            .results
            .iter()
            .map(|r| TableCsvRow {
                x: r.x,
                lambda_star: r.lambda_star,
                bound: r.bound,
                ln_lambda_star: r.ln_lambda_star,
                ln_bound: r.ln_bound,
                flat: r.flat,
                fitted: o.fitted,
                reference: o.reference,
                tol: o.tol,
                pass: o.pass,
            })
            .collect();
        files.push((format!("row_{:02}.csv", o.id), csv_bytes(&rows)?));
        summary_rows.push(TableSummaryRow {
            id: o.id,
            description: o.description.clone(),
            fitted: o.fitted,
            reference: o.reference,
            tol: o.tol,
            max_residual: o.max_residual,
            flat_points: o.flat_points,
            pass: o.pass,
        });
    }
    files.push(("summary.csv".into(), csv_bytes(&summary_rows)?));
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    let violation = (!failed.is_empty()).then(|| format!("table rows {failed:?} miss their reference exponents"));
    let summary = json!({ "rows": outcomes.len(), "failed": failed });
    Ok(Artifacts { files, summary, violation })
}

fn testfn(req: TestFnRequest) -> Result<Artifacts, CliError> {
    let tf = req.phi.build()?;
    let mut space = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Numerical(e.to_string());
    space.write_record(["x", "phi"]).map_err(err)?;
    for (x, p) in tf.x_grid.iter().zip(&tf.phi_vals) {
        space.write_record([format!("{x:e}"), format!("{p:e}")]).map_err(err)?;
    }
    let mut freq = csv::Writer::from_writer(Vec::new());
    freq.write_record(["t", "re", "im"]).map_err(err)?;
    for (t, z) in tf.t_grid.iter().zip(&tf.phihat_vals) {
        freq.write_record([format!("{t:e}"), format!("{:e}", z.re), format!("{:e}", z.im)]).map_err(err)?;
    }
    let inner = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| CliError::Numerical(e.to_string()));
    let meta = json!({
        "n": tf.n,
        "epsilon": tf.epsilon,
        "gamma": tf.gamma,
        "h": tf.h,
        "bandwidth": tf.bandwidth,
        "meta": tf.meta,
    });
    let mut files = vec![
        ("space.csv".to_string(), inner(space)?),
        ("freq.csv".to_string(), inner(freq)?),
        ("meta.json".to_string(), pretty(&meta)?),
    ];
    // The property suite describes φ_n only; other kernels are written as is.
    let mut violation = None;
    let mut summary = json!({ "kind": tf.meta.kind, "samples": tf.len() });
    if let PhiSpec::PhiN { .. } = req.phi {
        let report = verify_testfn(&tf);
        if !report.all_passed() {
            let failed: Vec<&str> = report.properties.iter().filter(|p| !p.passed).map(|p| p.name.as_str()).collect();
            violation = Some(format!("test function properties failed: {failed:?}"));
        }
        files.push(("report.json".to_string(), pretty(&report)?));
        summary["all_passed"] = report.all_passed().into();
    }
    Ok(Artifacts { files, summary, violation })
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn check_lambdas(lambdas: &[f64]) -> Result<(), CliError> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 1.0 && l.is_finite())) {
        return Err(CliError::Schema(format!("lambdas must be a non-empty list of finite values ≥ 1, got {lambdas:?}")));
    }
    Ok(())
}

fn check_budget(cli: &Cli, qtol: f64, at: &str) -> Result<(), CliError> {
    if qtol > cli.tol_quadrature {
        return Err(CliError::Numerical(format!(
            "quadrature budget {qtol:.3e} at {at} exceeds --tol-quadrature {:.3e}",
            cli.tol_quadrature
        )));
    }
    Ok(())
}

fn condition_failures(report: &tauberkit::tauber::ConditionReport) -> Option<String> {
    let failed: Vec<&str> = report.entries.iter().filter(|e| !e.passed).map(|e| e.name.as_str()).collect();
    (!failed.is_empty()).then(|| format!("Tauberian condition fails: {failed:?}"))
}

#[derive(Serialize)]
struct LemmaRow {
    lambda: f64,
    x: f64,
    #[serde(rename = "S")]
    s: f64,
    lower: f64,
    upper: f64,
    qtol: f64,
    contained: bool,
}

fn verify_lemma(cli: &Cli, req: LemmaRequest) -> Result<Artifacts, CliError> {
    check_lambdas(&req.lambdas)?;
    let xs = grid(&req.x_grid)?;
    let ys = req.condition_y_grid.as_ref().map(grid).transpose()?;
    let phi = req.phi.build()?;
    let condition = ys.map(|ys| check_condition_t(&req.data, &xs, &ys));
    let cases: Vec<(f64, f64)> = req.lambdas.iter().flat_map(|l| xs.iter().map(move |x| (*l, *x))).collect();
    let rows = cases
        .par_iter()
        .map(|(lambda, x)| {
            let sw = sandwich_bounds(&req.data, &phi, *lambda, *x)?;
            check_budget(cli, sw.qtol, &format!("λ = {lambda}, x = {x}"))?;
            let s = req.data.s.eval(*x);
            Ok(LemmaRow {
                lambda: *lambda,
                x: *x,
                s,
                lower: sw.lower,
                upper: sw.upper,
                qtol: sw.qtol,
                contained: sw.contains(s),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let misses = rows.iter().filter(|r| !r.contained).count();
    let mut violation = condition.as_ref().and_then(condition_failures);
    if misses > 0 {
        violation = Some(format!("{misses} of {} points fall outside the sandwich", rows.len()));
    }
    let summary = json!({ "points": rows.len(), "violations": misses, "condition": condition });
    Ok(single(csv_bytes(&rows)?, summary, violation))
}

#[derive(Serialize)]
struct LemmaMRow {
    lambda: f64,
    x: f64,
    #[serde(rename = "S")]
    s: f64,
    bound: f64,
    c_m: f64,
    qtol: f64,
}

fn verify_lemma_m(cli: &Cli, req: LemmaMRequest) -> Result<Artifacts, CliError> {
    check_lambdas(&req.lambdas)?;
    let xs = grid(&req.x_grid)?;
    let ys = req.condition_y_grid.as_ref().map(grid).transpose()?;
    let phi = req.phi.build()?;
    let condition = ys.map(|ys| check_higher_order(&req.data, &xs, &ys));
    let cases: Vec<(f64, f64)> = req.lambdas.iter().flat_map(|l| xs.iter().map(move |x| (*l, *x))).collect();
    let rows = cases
        .par_iter()
        .map(|(lambda, x)| {
            let sw = sandwich_bounds_m(&req.data, &phi, *lambda, *x)?;
            check_budget(cli, sw.qtol, &format!("λ = {lambda}, x = {x}"))?;
            Ok(LemmaMRow { lambda: *lambda, x: *x, s: sw.s_value, bound: sw.bound, c_m: sw.c_m, qtol: sw.qtol })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let violation = condition.as_ref().and_then(condition_failures);
    let summary = json!({ "points": rows.len(), "m": req.data.m, "condition": condition });
    Ok(single(csv_bytes(&rows)?, summary, violation))
}

#[derive(Serialize)]
struct PairingRow {
    lambda: f64,
    x: f64,
    space: f64,
    freq: f64,
    freq_imag: f64,
    abs_diff: f64,
}

fn pairing(cli: &Cli, req: PairingRequest) -> Result<Artifacts, CliError> {
    check_lambdas(&req.lambdas)?;
    if req.xs.is_empty() || req.xs.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Schema("xs must be a non-empty list of finite values".into()));
    }
    let g = req.g.compile()?;
    let phi = req.phi.build()?;
    let cases: Vec<(f64, f64)> = req.lambdas.iter().flat_map(|l| req.xs.iter().map(move |x| (*l, *x))).collect();
    let rows = cases
        .par_iter()
        .map(|(lambda, x)| {
            let p = fourier_pairing(&req.s, |t| g.eval(t), &phi, *lambda, *x)?;
            Ok(PairingRow {
                lambda: *lambda,
                x: *x,
                space: p.space,
                freq: p.freq,
                freq_imag: p.freq_imag,
                abs_diff: (p.space - p.freq).abs(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let worst = rows.iter().map(|r| r.abs_diff / (1.0 + r.space.abs())).fold(0.0, f64::max);
    let violation = (worst > cli.tol_quadrature)
        .then(|| format!("relative mismatch {worst:.3e} exceeds --tol-quadrature {:.3e}", cli.tol_quadrature));
    let summary = json!({ "cases": rows.len(), "worst_relative_mismatch": worst });
    Ok(single(csv_bytes(&rows)?, summary, violation))
}

#[derive(Serialize)]
struct BeCsvRow<'a> {
    label: &'a str,
    #[serde(rename = "T")]
    t: f64,
    sup_diff: f64,
    modulus: f64,
    integral: f64,
    rhs: f64,
    kernel_rhs: f64,
    margin: f64,
}

impl<'a> BeCsvRow<'a> {
    fn new(label: &'a str, r: &BeRow) -> Self {
        BeCsvRow {
            label,
            t: r.t,
            sup_diff: r.sup_diff,
            modulus: r.modulus,
            integral: r.integral,
            rhs: r.rhs,
            kernel_rhs: r.kernel_rhs,
            margin: r.margin,
        }
    }
}

fn berry_esseen(req: BerryEsseenRequest) -> Result<Artifacts, CliError> {
    if req.ts.is_empty() || req.ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(CliError::Schema(format!("T must be a non-empty list of positive values, got {:?}", req.ts)));
    }
    let mut pairs = req.pairs.clone();
    if req.corpus {
        pairs.extend(corpus());
    }
    if pairs.is_empty() {
        return Err(CliError::Schema("no distribution pairs given".into()));
    }
    let shared = req.grid.as_ref().map(grid).transpose()?;
    let reports = pairs
        .par_iter()
        .map(|p| {
            let g = shared.clone().unwrap_or_else(|| p.default_grid());
            verify_be(p, &req.ts, &g)
        })
        .collect::<tauberkit::Result<Vec<_>>>()?;
    let rows: Vec<BeCsvRow> = reports
        .iter()
        .flat_map(|r| r.rows.iter().map(move |row| BeCsvRow::new(&r.label, row)))
        .collect();
    let bytes = csv_bytes(&rows)?;
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let summary = json!({
        "pairs": reports.len(),
        "rows": rows.len(),
        "min_margin": min_margin,
        "kernel_constants": kernel_constants(),
    });
    Ok(single(bytes, summary, None))
}

#[derive(Serialize)]
struct GrowthRow {
    x: f64,
    #[serde(rename = "M")]
    m: f64,
}

fn growth(req: GrowthRequest) -> Result<Artifacts, CliError> {
    let xs = grid(&req.x_grid)?;
    let mut seq = GrowthSequence::new(req.sequence.clone());
    seq.l = req.l;
    seq.c_sa = req.c_sa;
    let rows = xs
        .par_iter()
        .map(|x| Ok(GrowthRow { x: *x, m: associated_function(&seq, *x)? }))
        .collect::<tauberkit::Result<Vec<_>>>()?;
    let non_quasianalytic = match check_non_quasianalytic(&seq, 1e-3) {
        Ok(b) => Some(b),
        Err(tauberkit::Error::Inconclusive { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let summary = json!({
        "points": rows.len(),
        "log_convex": check_log_convex(&seq, req.checks_upto),
        "non_quasianalytic": non_quasianalytic,
        "subanalytic": seq.l.map(|_| seq.check_subanalytic(req.checks_upto)),
    });
    Ok(single(csv_bytes(&rows)?, summary, None))
}
