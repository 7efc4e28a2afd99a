//! The subcommands, each writing CSV or JSON to the configured sink.

use std::path::Path;

use ensrlab::biso::{initial_efficiency, m_eps_bounds, p_error_bounds, w_eps_closed, BisoSpec};
use ensrlab::dependence::{maximal_correlation, SpectralReport};
use ensrlab::filter::{
    erasure_filter_for, max_leakage, p_error_curve, solve_curve, ConstraintKind, FilterSolution,
    Method,
};
use ensrlab::gaussian::{gaussian_curve, GaussianSpec, NoiseLevel};
use ensrlab::prob::ChannelFile;
use ensrlab::JointDistribution;
use serde::Serialize;

use crate::config::{read_joint, OutputFormat, RunConfig};
use crate::error::{CliError, CliResult};
use crate::format::{num, opt_num, sink, write_csv, write_json};
use crate::suites::{self, Suite, VerifyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CurveKindArg {
    Strong,
    Weak,
    Perror,
}

#[derive(Debug, Serialize)]
struct MaxcorrOutput<'a> {
    rho_m: f64,
    rho_m_sq: f64,
    sigma_min: f64,
    singular_values: &'a [f64],
    optimal_f: &'a [f64],
    optimal_g: &'a [f64],
    multiplicity: usize,
    degenerate: bool,
}

pub fn maxcorr(joint: &JointDistribution) -> CliResult<SpectralReport> {
    let r = maximal_correlation(joint);
    if !(r.rho_m.is_finite() && (-1e-9..=1.0 + 1e-9).contains(&r.rho_m)) {
        return Err(CliError::Infeasible(format!(
            "maximal correlation {} outside [0, 1]",
            r.rho_m
        )));
    }
    Ok(r)
}

pub fn cmd_maxcorr(cfg: &RunConfig, joint_path: &Path) -> CliResult<()> {
    let r = maxcorr(&read_joint(joint_path)?)?;
    let out = MaxcorrOutput {
        rho_m: r.rho_m,
        rho_m_sq: r.rho_m_sq(),
        sigma_min: r.sigma_min,
        singular_values: &r.singular_values,
        optimal_f: &r.optimal_f,
        optimal_g: &r.optimal_g,
        multiplicity: r.multiplicity,
        degenerate: r.degenerate,
    };
    let mut w = sink(cfg.output_path.as_deref())?;
    match cfg.output_format {
        OutputFormat::Json => write_json(&mut *w, &out),
        OutputFormat::Csv => write_csv(
            &mut *w,
            &["rho_m", "rho_m_sq", "sigma_min", "multiplicity"],
            &[vec![
                num(out.rho_m),
                num(out.rho_m_sq),
                num(out.sigma_min),
                out.multiplicity.to_string(),
            ]],
        ),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub eps: f64,
    pub value: f64,
    /// Value reached by the erasure filter meeting the same budget.
    pub erasure_bound: f64,
    /// `1 - eps / rho_m^2(X;Y)` for ENSR curves, `2 var(Y)` times that for the error curve.
    pub rho_bound: f64,
    pub method: Method,
    pub slack: f64,
    pub filter: ChannelFile,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveOutput {
    pub kind: CurveKindArg,
    pub rho_m_sq: f64,
    pub eta_sq: f64,
    pub rows: Vec<CurveRow>,
}

fn row(eps: f64, value: f64, erasure: f64, rho_bound: f64, s: &FilterSolution) -> CurveRow {
    CurveRow {
        eps,
        value,
        erasure_bound: erasure,
        rho_bound,
        method: s.method,
        slack: s.slack(),
        filter: ChannelFile::from(&s.filter),
    }
}

pub fn curve(
    cfg: &RunConfig,
    joint: &JointDistribution,
    kind: CurveKindArg,
    eps: &[f64],
) -> CliResult<CurveOutput> {
    let solver = cfg.solver();
    let rho = maximal_correlation(joint).rho_m_sq();
    let eta = max_leakage(joint, ConstraintKind::Weak);
    let line = |e: f64| {
        if rho > 0.0 {
            1.0 - e.min(rho) / rho
        } else {
            1.0
        }
    };
    let rows = match kind {
        CurveKindArg::Strong | CurveKindArg::Weak => {
            let ck = if kind == CurveKindArg::Strong {
                ConstraintKind::Strong
            } else {
                ConstraintKind::Weak
            };
            let c = solve_curve(joint, ck, eps, &solver)?;
            c.points
                .iter()
                .map(|p| {
                    Ok(row(
                        p.eps,
                        p.value,
                        erasure_filter_for(joint, p.eps, ck)?.ensr,
                        line(p.eps),
                        &p.solution,
                    ))
                })
                .collect::<CliResult<Vec<_>>>()?
        }
        CurveKindArg::Perror => {
            let r = p_error_curve(joint, eps, &solver)?;
            r.curve
                .points
                .iter()
                .map(|p| {
                    let erasure =
                        erasure_filter_for(joint, p.eps, ConstraintKind::Weak)?.bayes_error;
                    Ok(row(
                        p.eps,
                        p.value,
                        erasure,
                        2.0 * r.var_y * line(p.eps),
                        &p.solution,
                    ))
                })
                .collect::<CliResult<Vec<_>>>()?
        }
    };
    if let Some(bad) = rows.iter().find(|r| r.slack < -cfg.tolerance) {
        return Err(CliError::Infeasible(format!(
            "solution at eps = {} exceeds the budget by {}",
            bad.eps, -bad.slack
        )));
    }
    Ok(CurveOutput {
        kind,
        rho_m_sq: rho,
        eta_sq: eta,
        rows,
    })
}

fn method_name(m: Method) -> String {
    serde_json::to_value(m)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn cmd_curve(
    cfg: &RunConfig,
    joint_path: &Path,
    kind: CurveKindArg,
    eps: &[f64],
) -> CliResult<()> {
    let out = curve(cfg, &read_joint(joint_path)?, kind, eps)?;
    let mut w = sink(cfg.output_path.as_deref())?;
    match cfg.output_format {
        OutputFormat::Json => write_json(&mut *w, &out),
        OutputFormat::Csv => {
            let rows: Vec<Vec<String>> = out
                .rows
                .iter()
                .map(|r| {
                    vec![
                        num(r.eps),
                        num(r.value),
                        num(r.erasure_bound),
                        num(r.rho_bound),
                        method_name(r.method),
                        num(r.slack),
                    ]
                })
                .collect();
            write_csv(
                &mut *w,
                &[
                    "eps",
                    "value",
                    "erasure_bound",
                    "rho_bound",
                    "method",
                    "slack",
                ],
                &rows,
            )
        }
    }
}

/// Runs the suite, writes the report and turns failed claims into an error.
pub fn cmd_verify(
    cfg: &RunConfig,
    suite: Suite,
    joint_path: Option<&Path>,
) -> CliResult<VerifyReport> {
    let joint = joint_path.map(read_joint).transpose()?;
    if joint.is_some() && !matches!(suite, Suite::Bounds | Suite::Convexity | Suite::All) {
        log::warn!("--joint only affects the bounds and convexity suites");
    }
    let report = suites::run(suite, cfg, joint.as_ref())?;
    let mut w = sink(cfg.output_path.as_deref())?;
    match cfg.output_format {
        OutputFormat::Json => write_json(&mut *w, &report)?,
        OutputFormat::Csv => {
            let rows: Vec<Vec<String>> = report
                .suites
                .iter()
                .flat_map(|s| {
                    let suite = serde_json::to_value(s.suite)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string));
                    let suite = suite.unwrap_or_default();
                    s.claims.iter().map(move |c| {
                        vec![
                            suite.clone(),
                            c.name.clone(),
                            c.passed.to_string(),
                            num(c.tolerance),
                        ]
                    })
                })
                .collect();
            write_csv(&mut *w, &["suite", "claim", "passed", "tolerance"], &rows)?;
        }
    }
    drop(w);
    if report.passed {
        Ok(report)
    } else {
        Err(CliError::ClaimFailed(report.failed.clone()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussianRow {
    pub eps: f64,
    pub closed_form: Option<f64>,
    pub gamma_eps: Option<NoiseLevel>,
    pub numeric_quantized: f64,
    pub gamma_numeric: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn gaussian(spec: &GaussianSpec, eps: &[f64], bins: usize) -> CliResult<Vec<GaussianRow>> {
    if let GaussianSpec::Pair { rho, .. } = spec {
        if let Some(e) = eps.iter().find(|&&e| e > rho * rho) {
            log::warn!("budget {e} exceeds rho^2 = {}; clamped", rho * rho);
        }
    }
    Ok(gaussian_curve(spec, eps, bins)?
        .into_iter()
        .map(|r| GaussianRow {
            eps: r.eps,
            closed_form: r.closed_form,
            gamma_eps: r.gamma_closed,
            numeric_quantized: r.numeric,
            gamma_numeric: r.gamma_numeric,
            lower: r.lower,
            upper: r.upper,
        })
        .collect())
}

pub fn cmd_gaussian(
    cfg: &RunConfig,
    spec: &GaussianSpec,
    eps: &[f64],
    bins: usize,
) -> CliResult<()> {
    let rows = gaussian(spec, eps, bins)?;
    let mut w = sink(cfg.output_path.as_deref())?;
    match cfg.output_format {
        OutputFormat::Json => write_json(&mut *w, &rows),
        OutputFormat::Csv => {
            let gamma = |g: &Option<NoiseLevel>, sq: bool| match g {
                None => String::new(),
                Some(NoiseLevel::Infinite) => "inf".into(),
                Some(NoiseLevel::Finite { gamma, gamma_sq }) => {
                    num(if sq { *gamma_sq } else { *gamma })
                }
            };
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        num(r.eps),
                        opt_num(r.closed_form),
                        gamma(&r.gamma_eps, false),
                        gamma(&r.gamma_eps, true),
                        num(r.numeric_quantized),
                        num(r.gamma_numeric),
                        num(r.lower),
                        num(r.upper),
                    ]
                })
                .collect();
            write_csv(
                &mut *w,
                &[
                    "eps",
                    "closed_form",
                    "gamma_eps",
                    "gamma_eps_sq",
                    "numeric_quantized",
                    "gamma_numeric",
                    "lower",
                    "upper",
                ],
                &table,
            )
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BisoRow {
    pub eps: f64,
    pub w_closed: f64,
    pub clamped: bool,
    pub m_lower: f64,
    pub m_upper: f64,
    /// Present when `P(Y=1) >= 1/2`.
    pub p_error_lower: Option<f64>,
    pub p_error_upper: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BisoOutput {
    pub report: ensrlab::biso::BisoReport,
    pub eta_sq: f64,
    pub f_prime_0: f64,
    pub rows: Vec<BisoRow>,
}

pub fn biso(spec: &BisoSpec, eps: &[f64]) -> CliResult<BisoOutput> {
    let b = spec.build()?;
    let report = b.report();
    let rows = eps
        .iter()
        .map(|&e| {
            let w = w_eps_closed(&b, e)?;
            let m = m_eps_bounds(&b, e)?;
            let pe = if b.p() >= 0.5 {
                Some(p_error_bounds(&b, e)?)
            } else {
                None
            };
            Ok(BisoRow {
                eps: e,
                w_closed: w.value,
                clamped: w.clamped,
                m_lower: m.lower,
                m_upper: m.upper,
                p_error_lower: pe.map(|i| i.lower),
                p_error_upper: pe.map(|i| i.upper),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(BisoOutput {
        report,
        eta_sq: report.eta_sq(),
        f_prime_0: initial_efficiency(&b)?.f_prime_0,
        rows,
    })
}

pub fn cmd_biso(cfg: &RunConfig, spec: &BisoSpec, eps: &[f64]) -> CliResult<()> {
    let out = biso(spec, eps)?;
    let mut w = sink(cfg.output_path.as_deref())?;
    match cfg.output_format {
        OutputFormat::Json => write_json(&mut *w, &out),
        OutputFormat::Csv => {
            let rows: Vec<Vec<String>> = out
                .rows
                .iter()
                .map(|r| {
                    vec![
                        num(r.eps),
                        num(r.w_closed),
                        r.clamped.to_string(),
                        num(r.m_lower),
                        num(r.m_upper),
                        opt_num(r.p_error_lower),
                        opt_num(r.p_error_upper),
                    ]
                })
                .collect();
            write_csv(
                &mut *w,
                &[
                    "eps",
                    "w_closed",
                    "clamped",
                    "m_lower",
                    "m_upper",
                    "p_error_lower",
                    "p_error_upper",
                ],
                &rows,
            )
        }
    }
}
