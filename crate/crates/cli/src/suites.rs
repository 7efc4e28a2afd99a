//! Verification suites behind `ensrlab verify`.
//!
//! Every suite returns a list of named claims with the observed numbers and the
//! tolerance each was judged against. Random inputs come from substreams of the
//! run seed, so a report is a pure function of the configuration.

use clap::ValueEnum;
use ensrlab::biso::{
    initial_efficiency, m_eps_bounds, mmse_linear_relation, p_error_bounds, w_eps_closed,
    BisoChannel,
};
use ensrlab::dependence::{maximal_correlation, tensor_rho_m, verify_sdpi};
use ensrlab::filter::{
    erasure_channel, max_leakage, p_error_curve, solve_curve, verify_bounds, verify_convexity,
    BoundsReport, ConstraintKind, PrivacyCurve, SolverConfig,
};
use ensrlab::gaussian::{
    gamma_eps, laplace_source, m_eps_gaussian, verify_additive_gaussian,
    verify_gaussian_worst_case, verify_gaussian_y_sandwich, GaussianPair, NoiseLevel, DEFAULT_BINS,
};
use ensrlab::iid::verify_memoryless_product;
use ensrlab::prob::variance;
use ensrlab::random::{random_channel, random_function, random_joint, substream};
use ensrlab::{Channel, JointDistribution};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Bounds,
    Convexity,
    Biso,
    Tensor,
    Gaussian,
    All,
}

#[derive(Debug, Clone, Serialize)]
pub struct Claim {
    pub name: String,
    pub passed: bool,
    pub tolerance: f64,
    pub observed: Value,
}

impl Claim {
    fn new(name: &str, passed: bool, tolerance: f64, observed: Value) -> Self {
        Self {
            name: name.to_string(),
            passed,
            tolerance,
            observed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub claims: Vec<Claim>,
}

impl SuiteReport {
    fn new(suite: Suite, claims: Vec<Claim>) -> Self {
        Self {
            suite,
            passed: claims.iter().all(|c| c.passed),
            claims,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub config: RunConfig,
    pub passed: bool,
    /// `suite/claim` names of the failed claims.
    pub failed: Vec<String>,
    pub suites: Vec<SuiteReport>,
}

/// Runs `suite`; `joint` replaces the random joints of the bounds and convexity suites.
pub fn run(
    suite: Suite,
    cfg: &RunConfig,
    joint: Option<&JointDistribution>,
) -> CliResult<VerifyReport> {
    let solver = cfg.solver();
    let mut suites = Vec::new();
    let needs_curves = matches!(suite, Suite::Bounds | Suite::Convexity | Suite::All);
    let curves = if needs_curves {
        Some(bound_curves(&solver, joint)?)
    } else {
        None
    };
    if matches!(suite, Suite::Bounds | Suite::All) {
        suites.push(bounds_suite(
            &solver,
            curves.as_deref().unwrap_or_default(),
        )?);
    }
    if matches!(suite, Suite::Convexity | Suite::All) {
        suites.push(convexity_suite(curves.as_deref().unwrap_or_default())?);
    }
    if matches!(suite, Suite::Biso | Suite::All) {
        suites.push(biso_suite(&solver)?);
    }
    if matches!(suite, Suite::Tensor | Suite::All) {
        suites.push(tensor_suite(&solver)?);
    }
    if matches!(suite, Suite::Gaussian | Suite::All) {
        suites.push(gaussian_suite()?);
    }
    let failed: Vec<String> = suites
        .iter()
        .flat_map(|s| {
            let name = serde_json::to_value(s.suite)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string));
            let name = name.unwrap_or_default();
            s.claims
                .iter()
                .filter(|c| !c.passed)
                .map(move |c| format!("{name}/{}", c.name))
        })
        .collect();
    Ok(VerifyReport {
        config: cfg.clone(),
        passed: failed.is_empty(),
        failed,
        suites,
    })
}

const RANDOM_JOINTS: usize = 10;
const BRIDGE_TRIALS: usize = 50;
const BRIDGE_FUNCTIONS: usize = 20;
const BRIDGE_TOLERANCE: f64 = 1e-8;
const SEARCH_TOLERANCE: f64 = 1e-3;
const IDENTITY_TOLERANCE: f64 = 1e-10;
const SANDWICH_SLACK: f64 = 1e-6;

/// Stream offsets keep the suites' random draws disjoint.
const STREAM_BRIDGE: u64 = 1 << 20;
const STREAM_JOINTS: u64 = 2 << 20;
const STREAM_FILTERS: u64 = 3 << 20;
const STREAM_TENSOR: u64 = 4 << 20;

fn random_dims<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> (usize, usize) {
    (rng.random_range(lo..=hi), rng.random_range(lo..=hi))
}

fn bound_curves(
    solver: &SolverConfig,
    joint: Option<&JointDistribution>,
) -> CliResult<Vec<BoundsReport>> {
    let joints: Vec<JointDistribution> = match joint {
        Some(j) => vec![j.clone()],
        None => (0..RANDOM_JOINTS)
            .map(|i| {
                let mut rng = substream(solver.seed, STREAM_JOINTS + i as u64);
                let (nx, ny) = random_dims(&mut rng, 2, 3);
                random_joint(&mut rng, nx, ny, 1.0)
            })
            .collect(),
    };
    let mut out = Vec::with_capacity(joints.len());
    for j in &joints {
        let rho = maximal_correlation(j).rho_m_sq();
        let grid: Vec<f64> = (0..=5).map(|i| rho * i as f64 / 5.0).collect();
        out.push(verify_bounds(j, &grid, solver)?);
    }
    Ok(out)
}

fn bounds_suite(solver: &SolverConfig, curves: &[BoundsReport]) -> CliResult<SuiteReport> {
    let mut claims = vec![maxcorr_bridge(solver.seed)?];

    let rows: Vec<Value> = curves
        .iter()
        .map(|r| {
            let worst = r.rows.iter().filter(|row| !row.holds).map(|row| row.eps).collect::<Vec<_>>();
            json!({ "rho_m_sq": r.rho_m_sq, "eta_sq": r.eta_sq, "points": r.rows.len(), "failing_eps": worst })
        })
        .collect();
    claims.push(Claim::new(
        "bounds_order",
        curves.iter().all(|r| r.passed),
        ensrlab::filter::BOUND_SLACK,
        json!({ "joints": rows }),
    ));

    let bec = BisoChannel::bec(0.5, 0.5)?.joint();
    let rho = maximal_correlation(&bec).rho_m_sq();
    let grid: Vec<f64> = (1..=10).map(|i| 0.05 * i as f64).collect();
    let curve = solve_curve(&bec, ConstraintKind::Strong, &grid, solver)?;
    let dev = max_deviation(&curve, |e| 1.0 - e / 0.5);
    claims.push(Claim::new(
        "bec_rho_m_sq",
        (rho - 0.5).abs() <= BRIDGE_TOLERANCE,
        BRIDGE_TOLERANCE,
        json!({ "rho_m_sq": rho, "expected": 0.5 }),
    ));
    claims.push(Claim::new(
        "bec_strong_curve",
        dev <= SEARCH_TOLERANCE,
        SEARCH_TOLERANCE,
        json!({ "max_deviation": dev, "points": curve_values(&curve) }),
    ));
    Ok(SuiteReport::new(Suite::Bounds, claims))
}

/// The best estimable function of `X` from `Z` is the top singular vector, and its
/// normalized mmse is `1 - rho_m^2(X;Z)`; random functions do no better.
fn maxcorr_bridge(seed: u64) -> CliResult<Claim> {
    let mut max_err: f64 = 0.0;
    let mut beaten = 0usize;
    let mut sdpi_fail = 0usize;
    for t in 0..BRIDGE_TRIALS {
        let mut rng = substream(seed, STREAM_BRIDGE + t as u64);
        let (nx, ny) = random_dims(&mut rng, 2, 4);
        let nz = rng.random_range(2..=4);
        let joint = random_joint(&mut rng, nx, ny, 1.0);
        let filter = random_channel(&mut rng, joint.alphabet_v(), nz, 1.0);
        let xz = joint.compose(&filter)?;
        let report = maximal_correlation(&xz);
        let floor = 1.0 - report.rho_m_sq();
        let px = xz.marginal_u();
        let normalized = |f: &[f64]| -> Option<f64> {
            let v = variance(&px, f);
            (v > 1e-12).then(|| xz.mmse_of(f) / v)
        };
        if !report.degenerate {
            if let Some(r) = normalized(&report.optimal_f) {
                max_err = max_err.max((r - floor).abs());
            }
        }
        for _ in 0..BRIDGE_FUNCTIONS {
            let f = random_function(&mut rng, nx);
            if normalized(&f).is_some_and(|r| r < floor - BRIDGE_TOLERANCE) {
                beaten += 1;
            }
        }
        if !verify_sdpi(&joint, &filter)?.holds {
            sdpi_fail += 1;
        }
    }
    Ok(Claim::new(
        "maxcorr_bridge",
        max_err <= BRIDGE_TOLERANCE && beaten == 0 && sdpi_fail == 0,
        BRIDGE_TOLERANCE,
        json!({
            "trials": BRIDGE_TRIALS,
            "max_singular_vector_error": max_err,
            "random_functions_below_floor": beaten,
            "sdpi_failures": sdpi_fail,
        }),
    ))
}

/// Points with strictly increasing budgets; weak curves repeat `eta^2` once clamped.
fn strictly_increasing(pairs: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for p in pairs {
        if out.last().is_none_or(|l| p.0 > l.0) {
            out.push(p);
        }
    }
    out
}

fn convexity_suite(curves: &[BoundsReport]) -> CliResult<SuiteReport> {
    let mut claims = Vec::new();
    for (name, pick) in [("strong_curves", true), ("weak_curves", false)] {
        let mut passed = true;
        let (mut conv, mut ratio, mut value): (f64, f64, f64) = (0.0, 0.0, 0.0);
        let mut checked = 0;
        for r in curves {
            let c = if pick { &r.m_curve } else { &r.w_curve };
            let pts = strictly_increasing(c.pairs());
            if pts.len() < 3 {
                continue;
            }
            let rep = verify_convexity(&pts)?;
            checked += 1;
            passed &= rep.passed;
            conv = conv.max(rep.max_convexity_violation);
            ratio = ratio.max(rep.max_ratio_increase);
            value = value.max(rep.max_value_increase);
        }
        claims.push(Claim::new(
            name,
            passed,
            ensrlab::filter::CURVE_TOLERANCE,
            json!({
                "curves": checked,
                "max_convexity_violation": conv,
                "max_ratio_increase": ratio,
                "max_value_increase": value,
            }),
        ));
    }
    Ok(SuiteReport::new(Suite::Convexity, claims))
}

fn max_deviation(curve: &PrivacyCurve, expected: impl Fn(f64) -> f64) -> f64 {
    curve
        .points
        .iter()
        .map(|p| (p.value - expected(p.eps)).abs())
        .fold(0.0, f64::max)
}

fn curve_values(curve: &PrivacyCurve) -> Vec<[f64; 2]> {
    curve.points.iter().map(|p| [p.eps, p.value]).collect()
}

/// Largest entry gap between two filters after the best relabeling of the outputs.
pub fn filter_distance_up_to_relabeling(a: &Channel, b: &Channel) -> f64 {
    let n = a.n_outputs();
    if n != b.n_outputs() || a.n_inputs() != b.n_inputs() {
        return f64::INFINITY;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permutations(&mut perm, 0, &mut |p| {
        let d = (0..a.n_inputs())
            .flat_map(|y| (0..n).map(move |z| (y, z)))
            .map(|(y, z)| (a.get(y, z) - b.get(y, p[z])).abs())
            .fold(0.0, f64::max);
        best = best.min(d);
    });
    best
}

fn permutations(v: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, visit);
        v.swap(k, i);
    }
}

fn biso_fixtures() -> CliResult<Vec<(String, BisoChannel)>> {
    let mut out = Vec::new();
    for p in [0.3, 0.5, 0.7] {
        out.push((format!("bsc(p={p}, alpha=0.1)"), BisoChannel::bsc(p, 0.1)?));
        out.push((format!("bsc(p={p}, alpha=0.3)"), BisoChannel::bsc(p, 0.3)?));
        out.push((format!("bec(p={p}, delta=0.5)"), BisoChannel::bec(p, 0.5)?));
    }
    Ok(out)
}

fn biso_suite(solver: &SolverConfig) -> CliResult<SuiteReport> {
    let mut claims = Vec::new();

    // Binary symmetric channel at p = 1/2: both curves sit on the erasure line and
    // the selected filter is the erasure filter.
    let bsc = BisoChannel::bsc(0.5, 0.1)?;
    let j = bsc.joint();
    let grid: Vec<f64> = (1..=8).map(|i| 0.08 * i as f64).collect();
    let line = |e: f64| 1.0 - e / 0.64;
    let m = solve_curve(&j, ConstraintKind::Strong, &grid, solver)?;
    let w = solve_curve(&j, ConstraintKind::Weak, &grid, solver)?;
    let (dm, dw) = (max_deviation(&m, line), max_deviation(&w, line));
    let mut filter_gap: f64 = 0.0;
    for p in &m.points {
        let erasure = erasure_channel(j.alphabet_v(), line(p.eps))?;
        filter_gap = filter_gap.max(filter_distance_up_to_relabeling(
            &p.solution.filter,
            &erasure,
        ));
    }
    claims.push(Claim::new(
        "bsc_curves_on_erasure_line",
        dm <= SEARCH_TOLERANCE && dw <= SEARCH_TOLERANCE,
        SEARCH_TOLERANCE,
        json!({ "strong_max_deviation": dm, "weak_max_deviation": dw, "strong": curve_values(&m) }),
    ));
    claims.push(Claim::new(
        "bsc_optimal_filter_is_erasure",
        filter_gap <= solver.grid_resolution,
        solver.grid_resolution,
        json!({ "max_entry_gap": filter_gap }),
    ));

    // Closed forms against the search on every fixture.
    let mut w_dev: f64 = 0.0;
    let mut m_out: f64 = 0.0;
    let mut identity: f64 = 0.0;
    let mut rows = Vec::new();
    for (i, (name, b)) in biso_fixtures()?.into_iter().enumerate() {
        let j = b.joint();
        let rho = b.report().rho_m_sq;
        let eta = max_leakage(&j, ConstraintKind::Weak);
        let grid: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|f| f * eta).collect();
        let wc = solve_curve(&j, ConstraintKind::Weak, &grid, solver)?;
        let mgrid: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|f| f * rho).collect();
        let mc = solve_curve(&j, ConstraintKind::Strong, &mgrid, solver)?;
        let mut dev_here: f64 = 0.0;
        for p in &wc.points {
            dev_here = dev_here.max((p.value - w_eps_closed(&b, p.eps)?.value).abs());
        }
        let mut out_here: f64 = 0.0;
        for p in &mc.points {
            let iv = m_eps_bounds(&b, p.eps)?;
            out_here = out_here.max(iv.lower - p.value).max(p.value - iv.upper);
        }
        w_dev = w_dev.max(dev_here);
        m_out = m_out.max(out_here);

        let mut rng = substream(solver.seed, STREAM_FILTERS + i as u64);
        let mut id_here: f64 = 0.0;
        for _ in 0..100 {
            let f = random_channel(&mut rng, j.alphabet_v(), 3, 1.0);
            let (lhs, rhs) = mmse_linear_relation(&b, &f)?;
            id_here = id_here.max((lhs - rhs).abs());
        }
        identity = identity.max(id_here);
        rows.push(json!({ "source": name, "weak_deviation": dev_here, "strong_bound_excess": out_here.max(0.0), "identity_error": id_here }));
    }
    claims.push(Claim::new(
        "weak_closed_form",
        w_dev <= SEARCH_TOLERANCE,
        SEARCH_TOLERANCE,
        json!({ "max_deviation": w_dev, "sources": rows }),
    ));
    claims.push(Claim::new(
        "strong_within_bounds",
        m_out <= SEARCH_TOLERANCE,
        SEARCH_TOLERANCE,
        json!({ "max_excess": m_out.max(0.0) }),
    ));
    claims.push(Claim::new(
        "mmse_linear_identity",
        identity < IDENTITY_TOLERANCE,
        IDENTITY_TOLERANCE,
        json!({ "filters_per_source": 100, "max_error": identity }),
    ));

    claims.push(perror_sandwich(solver)?);
    claims.push(initial_slope(solver)?);
    Ok(SuiteReport::new(Suite::Biso, claims))
}

fn perror_sandwich(solver: &SolverConfig) -> CliResult<Claim> {
    let mut worst_slack = f64::INFINITY;
    let mut bracket_excess: f64 = 0.0;
    let mut rows = Vec::new();
    for p in [0.5, 0.6, 0.75] {
        for b in [BisoChannel::bsc(p, 0.1)?, BisoChannel::bec(p, 0.5)?] {
            let j = b.joint();
            let eta = max_leakage(&j, ConstraintKind::Weak);
            let grid: Vec<f64> = (0..=4).map(|i| eta * i as f64 / 4.0).collect();
            let r = p_error_curve(&j, &grid, solver)?;
            for s in &r.sandwich {
                worst_slack = worst_slack
                    .min(s.ratio - s.w_eps)
                    .min(2.0 * s.w_eps - s.ratio);
                let iv = p_error_bounds(&b, s.eps)?;
                bracket_excess = bracket_excess
                    .max(iv.lower - s.p_error)
                    .max(s.p_error - iv.upper);
            }
            rows.push(json!({
                "p": p,
                "points": r.sandwich.iter().map(|s| [s.eps, s.w_eps, s.ratio]).collect::<Vec<_>>(),
            }));
        }
    }
    Ok(Claim::new(
        "error_probability_sandwich",
        worst_slack >= -SANDWICH_SLACK && bracket_excess <= SANDWICH_SLACK,
        SANDWICH_SLACK,
        json!({ "min_slack": worst_slack, "closed_bracket_excess": bracket_excess.max(0.0), "curves": rows }),
    ))
}

/// The slope of `var(Y) - mmse(Y|Z)` at `eps = 0` against the searched weak curve.
fn initial_slope(solver: &SolverConfig) -> CliResult<Claim> {
    const REL_TOL: f64 = 1e-2;
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for b in [BisoChannel::bsc(0.5, 0.1)?, BisoChannel::bec(0.5, 0.5)?] {
        let j = b.joint();
        let eps = 1e-3 * max_leakage(&j, ConstraintKind::Weak);
        let c = solve_curve(&j, ConstraintKind::Weak, &[eps], solver)?;
        let var_y = b.report().var_y;
        let numeric = var_y * (1.0 - c.points[0].value) / eps;
        let closed = initial_efficiency(&b)?.f_prime_0;
        let rel = (numeric - closed).abs() / closed;
        worst = worst.max(rel);
        rows.push(json!({ "closed_form": closed, "numeric": numeric }));
    }
    Ok(Claim::new(
        "initial_efficiency",
        worst <= REL_TOL,
        REL_TOL,
        json!({ "max_relative_error": worst, "sources": rows }),
    ))
}

fn tensor_suite(solver: &SolverConfig) -> CliResult<SuiteReport> {
    let mut claims = Vec::new();
    let base = BisoChannel::bsc(0.5, 0.1)?.joint();
    let r = verify_memoryless_product(&base, 0.32, 200, solver)?;
    claims.push(Claim::new(
        "memoryless_filters_do_not_help",
        r.passed
            && r.min_product_ensr >= 0.5 - SEARCH_TOLERANCE
            && (r.single_letter - 0.5).abs() <= SEARCH_TOLERANCE,
        SEARCH_TOLERANCE,
        serde_json::to_value(&r).unwrap_or(Value::Null),
    ));

    let mut mismatch: f64 = 0.0;
    for t in 0..20u64 {
        let mut rng = substream(solver.seed, STREAM_TENSOR + t);
        let (a, b) = random_dims(&mut rng, 2, 3);
        let (c, d) = random_dims(&mut rng, 2, 3);
        let j1 = random_joint(&mut rng, a, b, 1.0);
        let j2 = random_joint(&mut rng, c, d, 1.0);
        let tc = tensor_rho_m(&j1, &j2)?;
        mismatch = mismatch.max((tc.rho_product - tc.max_components).abs());
    }
    claims.push(Claim::new(
        "maximal_correlation_tensorizes",
        mismatch <= BRIDGE_TOLERANCE,
        BRIDGE_TOLERANCE,
        json!({ "pairs": 20, "max_mismatch": mismatch }),
    ));
    Ok(SuiteReport::new(Suite::Tensor, claims))
}

fn gaussian_suite() -> CliResult<SuiteReport> {
    let mut claims = Vec::new();
    let gp = GaussianPair::new(1.0, 1.0, 0.8)?;
    let eps = [0.16, 0.32, 0.48];

    let expected_sq = [3.0, 1.0, 1.0 / 3.0];
    let mut gamma_err: f64 = 0.0;
    let mut gammas = Vec::new();
    for (&e, &want) in eps.iter().zip(&expected_sq) {
        let g = gamma_eps(&gp, e);
        gamma_err = gamma_err.max(match g {
            NoiseLevel::Finite { gamma_sq, .. } => (gamma_sq - want).abs(),
            NoiseLevel::Infinite => f64::INFINITY,
        });
        gammas.push(g);
    }
    let limits_ok = gamma_eps(&gp, 0.0) == NoiseLevel::Infinite
        && m_eps_gaussian(&gp, 0.0) == 1.0
        && m_eps_gaussian(&gp, 0.64) == 0.0
        && gamma_eps(&gp, 0.64)
            == (NoiseLevel::Finite {
                gamma: 0.0,
                gamma_sq: 0.0,
            });
    claims.push(Claim::new(
        "noise_level_closed_form",
        gamma_err <= 1e-12 && limits_ok,
        1e-12,
        json!({ "gammas": gammas, "max_error": gamma_err, "limits": limits_ok }),
    ));

    let l5 = verify_additive_gaussian(&gp, &eps, DEFAULT_BINS)?;
    claims.push(Claim::new(
        "additive_gaussian_attains_closed_form",
        l5.passed,
        ensrlab::gaussian::NUMERIC_TOLERANCE,
        serde_json::to_value(&l5).unwrap_or(Value::Null),
    ));

    let l6 = verify_gaussian_y_sandwich(&laplace_source(1.0, 1.0, 1.0), &[0.1, 0.2], DEFAULT_BINS)?;
    claims.push(Claim::new(
        "gaussian_y_sandwich",
        l6.passed,
        ensrlab::gaussian::NUMERIC_TOLERANCE,
        serde_json::to_value(&l6).unwrap_or(Value::Null),
    ));

    let wc = verify_gaussian_worst_case(0.8, &eps, DEFAULT_BINS)?;
    claims.push(Claim::new(
        "gaussian_input_is_worst",
        wc.iter().all(|r| r.holds),
        ensrlab::gaussian::NUMERIC_TOLERANCE,
        json!({ "rows": wc }),
    ));
    Ok(SuiteReport::new(Suite::Gaussian, claims))
}
