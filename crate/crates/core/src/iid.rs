//! Memoryless filters on i.i.d. copies of `(X, Y)`.
//!
//! With `Z_i` produced from `Y_i` alone, `rho_m(X^n; Z^n) = max_i rho_m(X_i; Z_i)` and
//! `mmse(Y_i | Z^n) = mmse(Y_i | Z_i)`, so the per-letter problem cannot be beaten by
//! using blocks.

use serde::Serialize;

use crate::dependence::{kronecker, maximal_correlation, tensor_rho_m, weak_independence_test};
use crate::error::{Error, Result};
use crate::filter::{
    erasure_channel, max_leakage, ConstraintKind, Engine, FilterProblem, Objective, SolverConfig,
};
use crate::prob::{Alphabet, Channel, JointDistribution};
use crate::random::{random_channel, substream};

pub const MAX_LETTERS: usize = 3;

/// `n` i.i.d. copies of `base`, symbols indexed lexicographically.
pub fn product_joint(base: &JointDistribution, n: usize) -> Result<JointDistribution> {
    if n == 0 || n > MAX_LETTERS {
        return Err(Error::InvalidArgument(format!(
            "block length {n} outside 1..={MAX_LETTERS}"
        )));
    }
    let mut j = base.clone();
    for _ in 1..n {
        j = kronecker(&j, base)?;
    }
    Ok(j)
}

/// A memoryless filter `P(z^n|y^n) = prod_i P_i(z_i|y_i)` on i.i.d. copies of `base`.
#[derive(Debug, Clone)]
pub struct ProductProblem {
    pub base: JointDistribution,
    pub filters: Vec<Channel>,
    pub eps: f64,
}

impl ProductProblem {
    pub fn new(base: JointDistribution, filters: Vec<Channel>, eps: f64) -> Result<Self> {
        if filters.is_empty() || filters.len() > MAX_LETTERS {
            return Err(Error::InvalidArgument(format!(
                "need 1..={MAX_LETTERS} per-letter filters"
            )));
        }
        if filters.iter().any(|f| f.input() != base.alphabet_v()) {
            return Err(Error::DimensionMismatch(
                "every filter must read the Y alphabet".into(),
            ));
        }
        Ok(Self { base, filters, eps })
    }

    pub fn n(&self) -> usize {
        self.filters.len()
    }

    fn fold(
        &self,
        letter: impl Fn(&Channel) -> Result<JointDistribution>,
    ) -> Result<JointDistribution> {
        let mut j = letter(&self.filters[0])?;
        for f in &self.filters[1..] {
            j = kronecker(&j, &letter(f)?)?;
        }
        Ok(j)
    }

    /// Joint of `(X^n, Z^n)`.
    pub fn joint_xz(&self) -> Result<JointDistribution> {
        self.fold(|f| self.base.compose(f))
    }

    /// Joint of `(Y^n, Z^n)`.
    pub fn joint_yz(&self) -> Result<JointDistribution> {
        let py = self.base.marginal_v();
        self.fold(|f| JointDistribution::from_input_and_channel(&py, f))
    }

    /// `rho_m^2(X^n; Z^n)` from the product joint.
    pub fn leakage(&self) -> Result<f64> {
        Ok(maximal_correlation(&self.joint_xz()?).rho_m_sq())
    }
}

/// `(1 / (n var(Y))) sum_i mmse(Y_i | Z^n)`, computed on the full block joint.
pub fn product_objective(prob: &ProductProblem) -> Result<f64> {
    let n = prob.n();
    let j = prob.joint_yz()?;
    let y = prob.base.alphabet_v().points();
    let ny = y.len();
    let var_y = prob.base.var_v();
    if var_y <= 0.0 {
        return Err(Error::Degenerate("Y is constant, ENSR undefined".into()));
    }
    let total: f64 = (0..n)
        .map(|i| {
            let stride = ny.pow((n - 1 - i) as u32);
            let coord: Vec<f64> = (0..j.n_u()).map(|u| y[(u / stride) % ny]).collect();
            j.mmse_of(&coord)
        })
        .sum();
    Ok(total / (n as f64 * var_y))
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakAllocation {
    pub eps: [f64; 2],
    pub average_w: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemorylessProductReport {
    pub eps: f64,
    pub single_letter: f64,
    pub trials: usize,
    pub min_product_ensr: f64,
    pub violations: usize,
    /// Largest `|rho_m(product) - max_i rho_m(component)|` over the trials.
    pub max_tensor_mismatch: f64,
    /// Largest `rho_m^2(X^2; Z^2) - eps` over the trials.
    pub max_leakage_excess: f64,
    pub replicated_ensr: f64,
    pub replicated_leakage: f64,
    pub w_eps: f64,
    pub weak_allocations: Vec<WeakAllocation>,
    pub weak_violations: usize,
    pub sigma_min: f64,
    pub sigma_min_product: f64,
    pub passed: bool,
}

/// Checks on two letters that random feasible memoryless filter pairs never beat
/// the single-letter optimum and that repeating that optimum attains it.
pub fn verify_memoryless_product(
    base: &JointDistribution,
    eps: f64,
    trials: usize,
    config: &SolverConfig,
) -> Result<MemorylessProductReport> {
    const TOL: f64 = 1e-3;
    let ny = base.n_v();
    let strong = crate::filter::solve(
        &FilterProblem::new(base.clone(), eps, ConstraintKind::Strong)?,
        config,
    )?;
    let eps = strong.eps;

    let mut min_product = f64::INFINITY;
    let mut violations = 0;
    let mut mismatch: f64 = 0.0;
    let mut excess = f64::NEG_INFINITY;
    for t in 0..trials {
        let mut rng = substream(config.seed, t as u64);
        let mut pair = Vec::with_capacity(2);
        for _ in 0..2 {
            // A random filter followed by just enough erasure to meet a random share of the budget.
            let raw = random_channel(&mut rng, base.alphabet_v(), ny, 1.0);
            let rho = maximal_correlation(&base.compose(&raw)?).rho_m_sq();
            let target = eps * rand::Rng::random_range(&mut rng, 0.3..=1.0);
            let delta = if rho > target {
                1.0 - target / rho
            } else {
                0.0
            };
            pair.push(raw.then(&erasure_channel(raw.output(), delta)?)?);
        }
        let prob = ProductProblem::new(base.clone(), pair, eps)?;
        let ensr = product_objective(&prob)?;
        let letters: Vec<JointDistribution> = prob
            .filters
            .iter()
            .map(|f| base.compose(f))
            .collect::<Result<_>>()?;
        let tc = tensor_rho_m(&letters[0], &letters[1])?;
        mismatch = mismatch.max((tc.rho_product - tc.max_components).abs());
        excess = excess.max(tc.rho_product * tc.rho_product - eps);
        min_product = min_product.min(ensr);
        if ensr < strong.ensr - TOL {
            violations += 1;
        }
    }

    let replicated = ProductProblem::new(base.clone(), vec![strong.filter.clone(); 2], eps)?;
    let replicated_ensr = product_objective(&replicated)?;
    let replicated_leakage = replicated.leakage()?;

    // Weak privacy, budgets split per letter as eps_1 + eps_2 = 2 eps.
    let eta = max_leakage(base, ConstraintKind::Weak);
    let w_engine = Engine::new(base, ConstraintKind::Weak, Objective::Ensr, config)?;
    let w_eps = w_engine.solve(eps.min(eta), &[])?.ensr;
    let mut weak_allocations = Vec::new();
    let mut weak_violations = 0;
    let mut rng = substream(config.seed, trials as u64 + 1);
    let e = eps.min(eta);
    for _ in 0..8 {
        let spread = e.min(eta - e);
        let shift = rand::Rng::random_range(&mut rng, -spread..=spread);
        let pair = [e + shift, e - shift];
        let w1 = w_engine.solve(pair[0], &[])?.ensr;
        let w2 = w_engine.solve(pair[1], &[])?.ensr;
        let average_w = 0.5 * (w1 + w2);
        if average_w < w_eps - TOL {
            weak_violations += 1;
        }
        weak_allocations.push(WeakAllocation {
            eps: pair,
            average_w,
        });
    }

    // The smallest singular value of the product transition is the square of the base one.
    let py = base.marginal_v();
    let channel_x_given_y = conditional_channel(base)?;
    let sigma_min = weak_independence_test(&channel_x_given_y, &py)?.sigma_min;
    let product = product_joint(base, 2)?;
    let sigma_min_product =
        weak_independence_test(&conditional_channel(&product)?, &product.marginal_v())?.sigma_min;

    let passed = violations == 0
        && mismatch <= 1e-8
        && excess <= 1e-8
        && (replicated_ensr - strong.ensr).abs() <= 1e-10
        && replicated_leakage <= eps + 1e-8
        && weak_violations == 0
        && (sigma_min_product - sigma_min * sigma_min).abs() <= 1e-10;
    Ok(MemorylessProductReport {
        eps,
        single_letter: strong.ensr,
        trials,
        min_product_ensr: min_product,
        violations,
        max_tensor_mismatch: mismatch,
        max_leakage_excess: excess,
        replicated_ensr,
        replicated_leakage,
        w_eps,
        weak_allocations,
        weak_violations,
        sigma_min,
        sigma_min_product,
        passed,
    })
}

/// `P_{X|Y}` of a joint with rows `X` (every `y` must have positive mass).
fn conditional_channel(j: &JointDistribution) -> Result<Channel> {
    let py = j.marginal_v();
    if py.iter().any(|&p| p <= 0.0) {
        return Err(Error::InvalidArgument(
            "every Y symbol needs positive mass".into(),
        ));
    }
    let rows: Vec<Vec<f64>> = (0..j.n_v())
        .map(|y| (0..j.n_u()).map(|x| j.get(x, y) / py[y]).collect())
        .collect();
    Channel::new(j.alphabet_v().clone(), j.alphabet_u().clone(), rows)
}

/// Index-alphabet helper for tests and callers that build product filters by hand.
pub fn product_channel(filters: &[Channel]) -> Result<Channel> {
    let mut k = filters
        .first()
        .ok_or_else(|| Error::InvalidArgument("no filters".into()))?
        .clone();
    for f in &filters[1..] {
        let (a1, b1, a2, b2) = (k.n_inputs(), k.n_outputs(), f.n_inputs(), f.n_outputs());
        let mut m = vec![0.0; a1 * a2 * b1 * b2];
        for y1 in 0..a1 {
            for y2 in 0..a2 {
                for z1 in 0..b1 {
                    for z2 in 0..b2 {
                        m[(y1 * a2 + y2) * (b1 * b2) + z1 * b2 + z2] =
                            k.get(y1, z1) * f.get(y2, z2);
                    }
                }
            }
        }
        k = Channel::from_flat(Alphabet::indices(a1 * a2), Alphabet::indices(b1 * b2), m)?;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_joint, seeded};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bsc_joint(alpha: f64) -> JointDistribution {
        JointDistribution::new(
            Alphabet::new(vec![-1.0, 1.0]).unwrap(),
            Alphabet::binary(),
            vec![
                vec![0.5 * (1.0 - alpha), 0.5 * alpha],
                vec![0.5 * alpha, 0.5 * (1.0 - alpha)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn product_joint_examples() {
        let b = bsc_joint(0.1);
        assert_eq!(product_joint(&b, 1).unwrap(), b);
        let p = product_joint(&b, 2).unwrap();
        assert_eq!((p.n_u(), p.n_v()), (4, 4));
        let mut entries: Vec<f64> = p.as_slice().to_vec();
        entries.sort_by(f64::total_cmp);
        let mut expected = vec![0.45 * 0.45; 4];
        expected.extend(vec![0.45 * 0.05; 8]);
        expected.extend(vec![0.05 * 0.05; 4]);
        expected.sort_by(f64::total_cmp);
        for (a, e) in entries.iter().zip(&expected) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-15);
        }

        let ind = JointDistribution::independent(
            Alphabet::binary(),
            &[0.3, 0.7],
            Alphabet::binary(),
            &[0.6, 0.4],
        )
        .unwrap();
        let pi = product_joint(&ind, 2).unwrap();
        let (mu, mv) = pi.marginals();
        for u in 0..4 {
            for v in 0..4 {
                assert_abs_diff_eq!(pi.get(u, v), mu[u] * mv[v], epsilon = 1e-15);
            }
        }
        assert!(product_joint(&b, 4).is_err());
    }

    #[test]
    fn product_objective_examples() {
        let b = bsc_joint(0.1);
        let id = Channel::identity(Alphabet::binary());
        let prob = ProductProblem::new(b.clone(), vec![id.clone(), id], 0.64).unwrap();
        assert_abs_diff_eq!(product_objective(&prob).unwrap(), 0.0, epsilon = 1e-14);

        let c = Channel::constant(Alphabet::binary(), 3, 2);
        let prob = ProductProblem::new(b.clone(), vec![c.clone(), c], 0.0).unwrap();
        assert_abs_diff_eq!(product_objective(&prob).unwrap(), 1.0, epsilon = 1e-14);

        let e1 = erasure_channel(&Alphabet::binary(), 0.3).unwrap();
        let e2 = erasure_channel(&Alphabet::binary(), 0.7).unwrap();
        let prob = ProductProblem::new(b, vec![e1, e2], 0.32).unwrap();
        assert_abs_diff_eq!(product_objective(&prob).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn product_channel_matches_block_joint() {
        let b = bsc_joint(0.2);
        let f = [
            erasure_channel(&Alphabet::binary(), 0.4).unwrap(),
            Channel::bsc(Alphabet::binary(), 0.3).unwrap(),
        ];
        let prob = ProductProblem::new(b.clone(), f.to_vec(), 0.1).unwrap();
        let via_block = product_joint(&b, 2)
            .unwrap()
            .compose(&product_channel(&f).unwrap())
            .unwrap();
        assert_eq!(
            via_block.as_slice().len(),
            prob.joint_xz().unwrap().as_slice().len()
        );
        for (a, c) in via_block
            .as_slice()
            .iter()
            .zip(prob.joint_xz().unwrap().as_slice())
        {
            assert_abs_diff_eq!(a, c, epsilon = 1e-15);
        }
    }

    #[test]
    fn memoryless_product_on_bsc() {
        let r =
            verify_memoryless_product(&bsc_joint(0.1), 0.32, 40, &SolverConfig::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert_abs_diff_eq!(r.single_letter, 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.replicated_ensr, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn memoryless_product_at_full_budget() {
        let r =
            verify_memoryless_product(&bsc_joint(0.1), 0.64, 5, &SolverConfig::default()).unwrap();
        assert!(r.passed);
        assert_abs_diff_eq!(r.single_letter, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.replicated_ensr, 0.0, epsilon = 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn block_mmse_is_per_letter(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let base = random_joint(&mut rng, 2, 3, 1.0);
            prop_assume!(base.var_v() > 1e-6);
            let f1 = random_channel(&mut rng, base.alphabet_v(), 3, 1.0);
            let f2 = random_channel(&mut rng, base.alphabet_v(), 2, 1.0);
            let single = |f: &Channel| {
                JointDistribution::from_input_and_channel(&base.marginal_v(), f).unwrap().mmse() / base.var_v()
            };
            let expected = 0.5 * (single(&f1) + single(&f2));
            let prob = ProductProblem::new(base.clone(), vec![f1, f2], 1.0).unwrap();
            prop_assert!((product_objective(&prob).unwrap() - expected).abs() < 1e-10);
        }
    }
}
