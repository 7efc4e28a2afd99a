//! Privacy curves over a budget grid and the checks run on them.

use serde::Serialize;

use super::engine::{Engine, Objective, SolverConfig};
use super::{clamp_budget, max_leakage, ConstraintKind, FilterSolution};
use crate::dependence::maximal_correlation;
use crate::error::{Error, Result};
use crate::prob::JointDistribution;

/// Bound checks allow this much numerical slack.
pub const BOUND_SLACK: f64 = 1e-6;
/// Convexity and ratio-monotonicity are judged up to the solver tolerance.
pub const CURVE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    MEps,
    WEps,
    PError,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub eps: f64,
    pub value: f64,
    pub solution: FilterSolution,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrivacyCurve {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

impl PrivacyCurve {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.eps, p.value)).collect()
    }
}

fn kind_of(constraint: ConstraintKind) -> CurveKind {
    match constraint {
        ConstraintKind::Strong => CurveKind::MEps,
        ConstraintKind::Weak => CurveKind::WEps,
    }
}

/// Clamped, strictly increasing budgets (duplicates after clamping are dropped).
fn effective_grid(
    joint: &JointDistribution,
    kind: ConstraintKind,
    eps_grid: &[f64],
) -> Result<Vec<f64>> {
    let mut sorted = eps_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(sorted.len());
    for e in sorted {
        let b = clamp_budget(joint, kind, e)?;
        if out.last().is_none_or(|&last| b.eps > last) {
            out.push(b.eps);
        }
    }
    Ok(out)
}

/// Solves along the grid, warm-starting each budget from the previous solution
/// (feasible for any larger budget) and from `extra[i]` when given.
fn trace(
    engine: &Engine,
    grid: &[f64],
    extra: Option<&[FilterSolution]>,
) -> Result<Vec<FilterSolution>> {
    let mut out: Vec<FilterSolution> = Vec::with_capacity(grid.len());
    for (i, &eps) in grid.iter().enumerate() {
        let mut warm = Vec::new();
        if let Some(prev) = out.last() {
            warm.push(prev.filter.clone());
        }
        if let Some(e) = extra.and_then(|x| x.get(i)) {
            warm.push(e.filter.clone());
        }
        out.push(engine.solve(eps, &warm)?);
    }
    Ok(out)
}

/// `M_eps` (strong) or `W_eps` (weak) sampled on `eps_grid`.
pub fn solve_curve(
    joint: &JointDistribution,
    kind: ConstraintKind,
    eps_grid: &[f64],
    config: &SolverConfig,
) -> Result<PrivacyCurve> {
    let grid = effective_grid(joint, kind, eps_grid)?;
    let engine = Engine::new(joint, kind, Objective::Ensr, config)?;
    let sols = trace(&engine, &grid, None)?;
    Ok(to_curve(kind_of(kind), sols, |s| s.ensr))
}

fn to_curve(
    kind: CurveKind,
    sols: Vec<FilterSolution>,
    value: impl Fn(&FilterSolution) -> f64,
) -> PrivacyCurve {
    PrivacyCurve {
        kind,
        points: sols
            .into_iter()
            .map(|s| CurvePoint {
                eps: s.eps,
                value: value(&s),
                solution: s,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichCheck {
    pub eps: f64,
    pub w_eps: f64,
    pub p_error: f64,
    /// `p_error / var(Y)`, to be compared with `[W, 2W]`.
    pub ratio: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PErrorCurve {
    pub curve: PrivacyCurve,
    pub w_curve: PrivacyCurve,
    /// `p (1 - p)`, the variance of `Y` seen as a Bernoulli variable.
    pub var_y: f64,
    pub sandwich: Vec<SandwichCheck>,
}

impl PErrorCurve {
    pub fn sandwich_holds(&self) -> bool {
        self.sandwich.iter().all(|s| s.holds)
    }
}

/// Smallest MAP error of `Y` over weakly private filters, on `eps_grid`.
///
/// Each point is also solved for `W_eps` and that filter seeds the error search,
/// so `W var(Y) <= P_e <= 2 W var(Y)` can be checked point by point.
pub fn p_error_curve(
    joint: &JointDistribution,
    eps_grid: &[f64],
    config: &SolverConfig,
) -> Result<PErrorCurve> {
    if joint.n_v() != 2 {
        return Err(Error::UnsupportedScope(format!(
            "error-probability curve needs binary Y, got |Y| = {}",
            joint.n_v()
        )));
    }
    let py = joint.marginal_v();
    let var_y = py[0] * py[1];
    let grid = effective_grid(joint, ConstraintKind::Weak, eps_grid)?;
    let w_engine = Engine::new(joint, ConstraintKind::Weak, Objective::Ensr, config)?;
    let w_sols = trace(&w_engine, &grid, None)?;
    let p_engine = Engine::new(joint, ConstraintKind::Weak, Objective::BayesError, config)?;
    let p_sols = trace(&p_engine, &grid, Some(&w_sols))?;

    let sandwich = w_sols
        .iter()
        .zip(&p_sols)
        .map(|(w, p)| {
            let ratio = p.bayes_error / var_y;
            SandwichCheck {
                eps: w.eps,
                w_eps: w.ensr,
                p_error: p.bayes_error,
                ratio,
                holds: w.ensr * var_y <= p.bayes_error + BOUND_SLACK
                    && p.bayes_error <= 2.0 * w.ensr * var_y + BOUND_SLACK,
            }
        })
        .collect();
    Ok(PErrorCurve {
        curve: to_curve(CurveKind::PError, p_sols, |s| s.bayes_error),
        w_curve: to_curve(CurveKind::WEps, w_sols, |s| s.ensr),
        var_y,
        sandwich,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    /// Largest amount by which a sampled value exceeds the chord of its neighbours.
    pub max_convexity_violation: f64,
    /// Largest increase of `(1 - value) / eps` between consecutive positive budgets.
    pub max_ratio_increase: f64,
    /// Largest increase of the value itself.
    pub max_value_increase: f64,
    pub passed: bool,
}

/// Convexity and ratio checks on sampled `(eps, value)` pairs with increasing `eps`.
pub fn verify_convexity(points: &[(f64, f64)]) -> Result<ConvexityReport> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(
            "convexity check needs at least three points".into(),
        ));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidArgument(
            "budgets must be strictly increasing".into(),
        ));
    }
    let n = points.len();
    let mut conv: f64 = 0.0;
    for i in 0..n {
        for k in i + 2..n {
            let (ei, vi) = points[i];
            let (ek, vk) = points[k];
            for &(ej, vj) in &points[i + 1..k] {
                let lambda = (ek - ej) / (ek - ei);
                conv = conv.max(vj - (lambda * vi + (1.0 - lambda) * vk));
            }
        }
    }
    let ratios: Vec<f64> = points
        .iter()
        .filter(|p| p.0 > 0.0)
        .map(|&(e, v)| (1.0 - v) / e)
        .collect();
    let ratio_inc = ratios.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let value_inc = points
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(0.0, f64::max);
    Ok(ConvexityReport {
        max_convexity_violation: conv,
        max_ratio_increase: ratio_inc,
        max_value_increase: value_inc,
        passed: conv <= CURVE_TOLERANCE
            && ratio_inc <= CURVE_TOLERANCE
            && value_inc <= CURVE_TOLERANCE,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsRow {
    pub eps: f64,
    pub m_eps: f64,
    pub w_eps: f64,
    /// `1 - min(eps, rho_m^2) / rho_m^2`, achieved by erasure.
    pub erasure_upper: f64,
    pub trivial_upper: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub rho_m_sq: f64,
    pub eta_sq: f64,
    pub rows: Vec<BoundsRow>,
    pub m_curve: PrivacyCurve,
    pub w_curve: PrivacyCurve,
    pub passed: bool,
}

/// Solves both curves on `eps_grid` and checks `0 <= W <= M <= 1 - eps` and
/// `M <= 1 - eps / rho_m^2(X;Y)` at every budget.
pub fn verify_bounds(
    joint: &JointDistribution,
    eps_grid: &[f64],
    config: &SolverConfig,
) -> Result<BoundsReport> {
    let rho = maximal_correlation(joint).rho_m_sq();
    let eta = max_leakage(joint, ConstraintKind::Weak);
    let grid = effective_grid(joint, ConstraintKind::Strong, eps_grid)?;
    let m_engine = Engine::new(joint, ConstraintKind::Strong, Objective::Ensr, config)?;
    let m_sols = trace(&m_engine, &grid, None)?;
    // Strongly private filters are weakly private, so they seed the weak search.
    let w_engine = Engine::new(joint, ConstraintKind::Weak, Objective::Ensr, config)?;
    let mut w_sols: Vec<FilterSolution> = Vec::with_capacity(grid.len());
    for (i, &eps) in grid.iter().enumerate() {
        let mut warm = vec![m_sols[i].filter.clone()];
        if let Some(prev) = w_sols.last() {
            warm.push(prev.filter.clone());
        }
        w_sols.push(w_engine.solve(eps.min(eta), &warm)?);
    }
    let rows: Vec<BoundsRow> = grid
        .iter()
        .zip(m_sols.iter().zip(&w_sols))
        .map(|(&eps, (m, w))| {
            let erasure_upper = if rho > 0.0 {
                1.0 - eps.min(rho) / rho
            } else {
                1.0
            };
            let trivial_upper = 1.0 - eps;
            let (m, w) = (m.ensr, w.ensr);
            BoundsRow {
                eps,
                m_eps: m,
                w_eps: w,
                erasure_upper,
                trivial_upper,
                holds: -BOUND_SLACK <= w
                    && w <= m + BOUND_SLACK
                    && m <= trivial_upper + BOUND_SLACK
                    && m <= erasure_upper + BOUND_SLACK,
            }
        })
        .collect();
    let passed = rows.iter().all(|r| r.holds);
    Ok(BoundsReport {
        rho_m_sq: rho,
        eta_sq: eta,
        rows,
        m_curve: to_curve(CurveKind::MEps, m_sols, |s| s.ensr),
        w_curve: to_curve(CurveKind::WEps, w_sols, |s| s.ensr),
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{Alphabet, Channel};
    use approx::assert_abs_diff_eq;

    fn bsc_joint(p: f64, alpha: f64) -> JointDistribution {
        let c = Channel::bsc(Alphabet::new(vec![-1.0, 1.0]).unwrap(), alpha).unwrap();
        JointDistribution::from_input_and_channel(&[1.0 - p, p], &c)
            .unwrap()
            .transpose()
    }

    #[test]
    fn affine_curve_is_convex() {
        let pts: Vec<(f64, f64)> = (1..=8)
            .map(|i| (i as f64 * 0.08, 1.0 - i as f64 * 0.08 / 0.64))
            .collect();
        let r = verify_convexity(&pts).unwrap();
        assert!(r.passed);
        assert!(r.max_convexity_violation < 1e-12);
    }

    #[test]
    fn concave_curve_is_flagged() {
        let pts = [(0.1, 0.5), (0.2, 0.9), (0.3, 0.1)];
        assert!(!verify_convexity(&pts).unwrap().passed);
        assert!(verify_convexity(&pts[..2]).is_err());
    }

    #[test]
    fn bsc_curve_matches_erasure_line() {
        let j = bsc_joint(0.5, 0.1);
        let eps: Vec<f64> = (1..=8).map(|i| 0.08 * i as f64).collect();
        let c = solve_curve(&j, ConstraintKind::Strong, &eps, &SolverConfig::default()).unwrap();
        for p in &c.points {
            assert_abs_diff_eq!(p.value, 1.0 - p.eps / 0.64, epsilon = 1e-3);
        }
        assert!(verify_convexity(&c.pairs()).unwrap().passed);
    }

    #[test]
    fn p_error_bsc_sandwich() {
        let j = bsc_joint(0.5, 0.1);
        let r = p_error_curve(&j, &[0.0, 0.16, 0.32, 0.64], &SolverConfig::default()).unwrap();
        assert!(r.sandwich_holds());
        let mid = &r.sandwich[2];
        assert!(mid.p_error >= 0.125 - 1e-6 && mid.p_error <= 0.25 + 1e-6);
        assert_abs_diff_eq!(r.sandwich[3].p_error, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn p_error_rejects_ternary_y() {
        let j = JointDistribution::diagonal(Alphabet::indices(3), &[0.2, 0.3, 0.5]).unwrap();
        assert!(matches!(
            p_error_curve(&j, &[0.1], &SolverConfig::default()),
            Err(Error::UnsupportedScope(_))
        ));
    }

    #[test]
    fn bounds_on_binary_pair() {
        let j = bsc_joint(0.7, 0.2);
        let r = verify_bounds(&j, &[0.0, 0.1, 0.2, 0.36], &SolverConfig::default()).unwrap();
        assert!(r.passed, "{:?}", r.rows);
        assert_abs_diff_eq!(r.rows[0].m_eps, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.rows.last().unwrap().m_eps, 0.0, epsilon = 1e-9);
    }
}
