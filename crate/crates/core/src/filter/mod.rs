//! Privacy-filter design.
//!
//! Given `P_XY`, a privacy filter `P_{Z|Y}` releases `Z` with `X - Y - Z`.
//! Utility is the estimation noise-to-signal ratio `mmse(Y|Z)/var(Y)` (ENSR,
//! lower is better). Leakage about `X` is measured either by `rho_m^2(X;Z)`
//! (strong privacy: no function of `X` is estimable beyond the budget) or by
//! `eta_Z^2(X)` (weak privacy: only `X` itself is protected). The search
//! minimizes the ENSR under `leakage <= eps`.

mod curve;
mod engine;

use serde::Serialize;

use crate::dependence::maximal_correlation;
use crate::error::{Error, Result};
use crate::prob::{Alphabet, Channel, ChannelFile, JointDistribution};

pub use curve::{
    p_error_curve, solve_curve, verify_bounds, verify_convexity, BoundsReport, BoundsRow,
    ConvexityReport, CurveKind, CurvePoint, PErrorCurve, PrivacyCurve, SandwichCheck, BOUND_SLACK,
    CURVE_TOLERANCE,
};
pub(crate) use engine::Engine;
pub use engine::{
    grid_search, solve, solve_with_warm_starts, Objective, SearchStrategy, SolverConfig,
};

/// Slack allowed on the privacy constraint after exact recomputation.
pub const FEASIBILITY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `rho_m^2(X;Z) <= eps`.
    Strong,
    /// `eta_Z^2(X) <= eps`.
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grid,
    Gradient,
    Erasure,
    WarmStart,
    ClosedForm,
}

/// The quantities every filter is judged by.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterEvaluation {
    pub ensr: f64,
    pub rho_m_sq_xz: f64,
    pub eta_sq_xz: f64,
    pub eta_sq_yz: f64,
    /// MAP error probability of guessing `Y` from `Z`.
    pub bayes_error: f64,
}

impl FilterEvaluation {
    pub fn leakage(&self, kind: ConstraintKind) -> f64 {
        match kind {
            ConstraintKind::Strong => self.rho_m_sq_xz,
            ConstraintKind::Weak => self.eta_sq_xz,
        }
    }
}

/// Exact evaluation of `filter` on `joint` (rows `X`, columns `Y`).
pub fn evaluate_filter(joint: &JointDistribution, filter: &Channel) -> Result<FilterEvaluation> {
    let j_xz = joint.compose(filter)?;
    let j_yz = JointDistribution::from_input_and_channel(&joint.marginal_v(), filter)?;
    let var_y = j_yz.var_u();
    if var_y <= 0.0 {
        return Err(Error::Degenerate("Y is constant, ENSR undefined".into()));
    }
    let ensr = (j_yz.mmse() / var_y).clamp(0.0, 1.0);
    let eta_sq_xz = match j_xz.correlation_ratio_sq() {
        Ok(v) => v,
        Err(Error::Degenerate(_)) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(FilterEvaluation {
        ensr,
        rho_m_sq_xz: maximal_correlation(&j_xz).rho_m_sq(),
        eta_sq_xz,
        eta_sq_yz: 1.0 - ensr,
        bayes_error: bayes_error(&j_yz),
    })
}

/// MAP decision for each `z` (column) of a joint over `(Y, Z)`; ties go to the lowest `y`.
pub fn map_decoder(joint_yz: &JointDistribution) -> Vec<usize> {
    (0..joint_yz.n_v())
        .map(|z| {
            let mut best = 0;
            for y in 1..joint_yz.n_u() {
                if joint_yz.get(y, z) > joint_yz.get(best, z) {
                    best = y;
                }
            }
            best
        })
        .collect()
}

/// `Pr(Yhat(Z) != Y)` under MAP decoding for a joint over `(Y, Z)`.
pub fn bayes_error(joint_yz: &JointDistribution) -> f64 {
    let decisions = map_decoder(joint_yz);
    let correct: f64 = decisions
        .iter()
        .enumerate()
        .map(|(z, &y)| joint_yz.get(y, z))
        .sum();
    (1.0 - correct).max(0.0)
}

/// Erasure channel on `input`: each `y` passes unchanged with probability `1 - delta`
/// and is replaced by the extra erasure output (last index) otherwise.
pub fn erasure_channel(input: &Alphabet, delta: f64) -> Result<Channel> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!(
            "erasure probability {delta} outside [0,1]"
        )));
    }
    let n = input.len();
    let mut k = vec![0.0; n * (n + 1)];
    for y in 0..n {
        k[y * (n + 1) + y] = 1.0 - delta;
        k[y * (n + 1) + n] = delta;
    }
    Channel::from_flat(input.clone(), Alphabet::indices(n + 1), k)
}

/// Largest admissible budget: `rho_m^2(X;Y)` (strong) or `eta_Y^2(X)` (weak).
pub fn max_leakage(joint: &JointDistribution, kind: ConstraintKind) -> f64 {
    match kind {
        ConstraintKind::Strong => maximal_correlation(joint).rho_m_sq(),
        ConstraintKind::Weak => joint.correlation_ratio_sq().unwrap_or(0.0),
    }
}

/// A privacy budget after clamping to `[0, max_leakage]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Budget {
    pub requested: f64,
    pub eps: f64,
    pub clamped: bool,
}

pub fn clamp_budget(joint: &JointDistribution, kind: ConstraintKind, eps: f64) -> Result<Budget> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "privacy budget {eps} must be a non-negative number"
        )));
    }
    let cap = max_leakage(joint, kind);
    if eps > cap {
        // Budgets equal to the cap up to rounding are clamped silently.
        if eps > cap * (1.0 + 1e-9) + 1e-12 {
            log::warn!("budget {eps} exceeds the largest achievable leakage {cap}; clamped");
        }
        return Ok(Budget {
            requested: eps,
            eps: cap,
            clamped: true,
        });
    }
    Ok(Budget {
        requested: eps,
        eps,
        clamped: false,
    })
}

/// One instance of the filter design problem.
#[derive(Debug, Clone)]
pub struct FilterProblem {
    pub joint: JointDistribution,
    pub budget: Budget,
    pub kind: ConstraintKind,
    pub z_size: usize,
}

impl FilterProblem {
    pub fn new(joint: JointDistribution, eps: f64, kind: ConstraintKind) -> Result<Self> {
        let z_size = joint.n_v() + 1;
        Self::with_z_size(joint, eps, kind, z_size)
    }

    pub fn with_z_size(
        joint: JointDistribution,
        eps: f64,
        kind: ConstraintKind,
        z_size: usize,
    ) -> Result<Self> {
        if z_size < 2 {
            return Err(Error::InvalidArgument(
                "filter needs at least two outputs".into(),
            ));
        }
        if joint.var_v() <= 0.0 {
            return Err(Error::Degenerate("Y is constant, ENSR undefined".into()));
        }
        let budget = clamp_budget(&joint, kind, eps)?;
        Ok(Self {
            joint,
            budget,
            kind,
            z_size,
        })
    }

    pub fn eps(&self) -> f64 {
        self.budget.eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterSolution {
    #[serde(serialize_with = "serialize_channel")]
    pub filter: Channel,
    pub kind: ConstraintKind,
    pub eps: f64,
    pub ensr: f64,
    /// `rho_m^2(X;Z)`.
    pub privacy_strong: f64,
    /// `eta_Z^2(X)`.
    pub privacy_weak: f64,
    pub bayes_error: f64,
    pub method: Method,
    pub restarts_used: usize,
}

impl FilterSolution {
    pub(crate) fn from_filter(
        joint: &JointDistribution,
        filter: Channel,
        kind: ConstraintKind,
        eps: f64,
        method: Method,
        restarts_used: usize,
    ) -> Result<Self> {
        let ev = evaluate_filter(joint, &filter)?;
        Ok(Self {
            filter,
            kind,
            eps,
            ensr: ev.ensr,
            privacy_strong: ev.rho_m_sq_xz,
            privacy_weak: ev.eta_sq_xz,
            bayes_error: ev.bayes_error,
            method,
            restarts_used,
        })
    }

    pub fn leakage(&self) -> f64 {
        match self.kind {
            ConstraintKind::Strong => self.privacy_strong,
            ConstraintKind::Weak => self.privacy_weak,
        }
    }

    /// `eps - leakage`; non-negative (up to [`FEASIBILITY_SLACK`]) for a feasible filter.
    pub fn slack(&self) -> f64 {
        self.eps - self.leakage()
    }
}

fn serialize_channel<S: serde::Serializer>(
    c: &Channel,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    ChannelFile::from(c).serialize(s)
}

/// The erasure filter meeting the budget with equality for `kind`:
/// `delta = 1 - eps / max_leakage`.
pub fn erasure_filter_for(
    joint: &JointDistribution,
    eps: f64,
    kind: ConstraintKind,
) -> Result<FilterSolution> {
    let budget = clamp_budget(joint, kind, eps)?;
    let cap = max_leakage(joint, kind);
    let delta = if cap > 0.0 {
        (1.0 - budget.eps / cap).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let filter = erasure_channel(joint.alphabet_v(), delta)?;
    FilterSolution::from_filter(joint, filter, kind, budget.eps, Method::Erasure, 0)
}

/// Strong-privacy erasure filter; its ENSR is `1 - eps / rho_m^2(X;Y)`.
pub fn erasure_filter(joint: &JointDistribution, eps: f64) -> Result<FilterSolution> {
    erasure_filter_for(joint, eps, ConstraintKind::Strong)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pm1() -> Alphabet {
        Alphabet::new(vec![-1.0, 1.0]).unwrap()
    }

    fn bsc_joint(alpha: f64) -> JointDistribution {
        JointDistribution::new(
            pm1(),
            Alphabet::binary(),
            vec![
                vec![0.5 * (1.0 - alpha), 0.5 * alpha],
                vec![0.5 * alpha, 0.5 * (1.0 - alpha)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn evaluate_identity_and_constant() {
        let j = bsc_joint(0.1);
        let id = evaluate_filter(&j, &Channel::identity(Alphabet::binary())).unwrap();
        assert_abs_diff_eq!(id.ensr, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(id.rho_m_sq_xz, 0.64, epsilon = 1e-12);

        let c = evaluate_filter(&j, &Channel::constant(Alphabet::binary(), 3, 2)).unwrap();
        assert_abs_diff_eq!(c.ensr, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.rho_m_sq_xz, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.eta_sq_xz, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn evaluate_half_erasure() {
        // rho_m^2(X;Z) = (1-delta) rho_m^2(X;Y) and ENSR = delta.
        let j = bsc_joint(0.1);
        let e = evaluate_filter(&j, &erasure_channel(&Alphabet::binary(), 0.5).unwrap()).unwrap();
        assert_abs_diff_eq!(e.ensr, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(e.rho_m_sq_xz, 0.32, epsilon = 1e-12);
    }

    #[test]
    fn erasure_filter_examples() {
        let j = bsc_joint(0.1);
        let full = erasure_filter(&j, 0.64).unwrap();
        assert_abs_diff_eq!(full.ensr, 0.0, epsilon = 1e-12);
        let none = erasure_filter(&j, 0.0).unwrap();
        assert_abs_diff_eq!(none.ensr, 1.0, epsilon = 1e-12);
        let half = erasure_filter(&j, 0.32).unwrap();
        assert_abs_diff_eq!(half.ensr, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(half.privacy_strong, 0.32, epsilon = 1e-8);
        assert_abs_diff_eq!(half.filter.get(0, 2), 0.5, epsilon = 1e-12);

        let over = erasure_filter(&j, 0.9).unwrap();
        assert_abs_diff_eq!(over.eps, 0.64, epsilon = 1e-12);
        assert_abs_diff_eq!(over.ensr, 0.0, epsilon = 1e-12);
        assert!(matches!(
            erasure_filter(&j, -0.1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn bayes_error_examples() {
        let b = Alphabet::binary();
        let same = JointDistribution::diagonal(b.clone(), &[0.3, 0.7]).unwrap();
        assert_abs_diff_eq!(bayes_error(&same), 0.0, epsilon = 1e-15);

        let p = 0.7;
        let ind = JointDistribution::independent(
            b.clone(),
            &[1.0 - p, p],
            Alphabet::indices(3),
            &[0.2, 0.3, 0.5],
        )
        .unwrap();
        assert_abs_diff_eq!(bayes_error(&ind), 1.0 - p, epsilon = 1e-15);

        let through_bsc =
            JointDistribution::from_input_and_channel(&[0.5, 0.5], &Channel::bsc(b, 0.2).unwrap())
                .unwrap();
        assert_abs_diff_eq!(bayes_error(&through_bsc), 0.2, epsilon = 1e-15);
        assert_eq!(map_decoder(&through_bsc), vec![0, 1]);
    }

    #[test]
    fn map_ties_pick_lowest_index() {
        let j = JointDistribution::new(
            Alphabet::binary(),
            Alphabet::binary(),
            vec![vec![0.25, 0.25], vec![0.25, 0.25]],
        )
        .unwrap();
        assert_eq!(map_decoder(&j), vec![0, 0]);
    }

    #[test]
    fn problem_clamps_budget() {
        let p = FilterProblem::new(bsc_joint(0.1), 0.9, ConstraintKind::Strong).unwrap();
        assert!(p.budget.clamped);
        assert_abs_diff_eq!(p.eps(), 0.64, epsilon = 1e-12);
        assert_eq!(p.z_size, 3);
        assert!(FilterProblem::new(bsc_joint(0.1), -1.0, ConstraintKind::Weak).is_err());
    }
}
