//! Spectral dependence measures on finite joint distributions.
//!
//! For a joint pmf `P(u, v)` the matrix `Q[u][v] = P(u,v) / sqrt(P(u) P(v))`
//! has top singular value 1 with singular vectors `sqrt(P(u))`, `sqrt(P(v))`.
//! Its second singular value is the maximal correlation `rho_m(U;V)` and the
//! corresponding singular vectors, rescaled by `1/sqrt(P)`, are the optimal
//! zero-mean, unit-variance functions `f(U)`, `g(V)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{deflated_top_singular_value, jacobi_svd};
use crate::prob::{Alphabet, Channel, JointDistribution};

/// Below this singular value the conditional-expectation operator is treated as singular.
pub const WEAK_INDEPENDENCE_TOLERANCE: f64 = 1e-9;

/// Upper bound on `rows * cols` of a Kronecker-product joint.
pub const MAX_PRODUCT_ENTRIES: usize = 4096;

/// Above this alphabet size the second singular value is found by subspace
/// iteration instead of a full Jacobi SVD.
const JACOBI_MAX_DIM: usize = 64;

const MULTIPLICITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    /// Descending singular values of the normalized joint matrix (zero-mass symbols pruned).
    pub singular_values: Vec<f64>,
    pub rho_m: f64,
    /// Smallest singular value of `f(U) -> E[f(U)|V]`; zero when `|V| > |U|`.
    pub sigma_min: f64,
    /// Zero-mean, unit-variance maximizer over the U alphabet (0 on zero-mass symbols).
    pub optimal_f: Vec<f64>,
    pub optimal_g: Vec<f64>,
    /// Number of singular values tied with `rho_m`.
    pub multiplicity: usize,
    /// One of the variables is constant; `rho_m` is 0 by convention.
    pub degenerate: bool,
}

impl SpectralReport {
    pub fn rho_m_sq(&self) -> f64 {
        self.rho_m * self.rho_m
    }
}

/// Normalized matrix restricted to the symbols of positive mass.
struct Normalized {
    q: Vec<f64>,
    keep_u: Vec<usize>,
    keep_v: Vec<usize>,
    sqrt_pu: Vec<f64>,
    sqrt_pv: Vec<f64>,
}

fn normalize_table(p: &[f64], nu: usize, nv: usize) -> Normalized {
    let mut pu = vec![0.0; nu];
    let mut pv = vec![0.0; nv];
    for u in 0..nu {
        for v in 0..nv {
            let x = p[u * nv + v];
            pu[u] += x;
            pv[v] += x;
        }
    }
    let keep_u: Vec<usize> = (0..nu).filter(|&u| pu[u] > 0.0).collect();
    let keep_v: Vec<usize> = (0..nv).filter(|&v| pv[v] > 0.0).collect();
    let sqrt_pu: Vec<f64> = keep_u.iter().map(|&u| pu[u].sqrt()).collect();
    let sqrt_pv: Vec<f64> = keep_v.iter().map(|&v| pv[v].sqrt()).collect();
    let mut q = Vec::with_capacity(keep_u.len() * keep_v.len());
    for (iu, &u) in keep_u.iter().enumerate() {
        for (iv, &v) in keep_v.iter().enumerate() {
            q.push(p[u * nv + v] / (sqrt_pu[iu] * sqrt_pv[iv]));
        }
    }
    Normalized {
        q,
        keep_u,
        keep_v,
        sqrt_pu,
        sqrt_pv,
    }
}

/// `rho_m^2` of a (possibly unnormalized-by-rounding) row-major table.
///
/// `rank_bound` lets callers that know `rank(Q) <= 2` (e.g. any `X - Y - Z`
/// chain with binary `Y`) take the exact shortcut `||Q||_F^2 - 1`.
pub fn rho_m_sq_from_table(p: &[f64], nu: usize, nv: usize, rank_bound: Option<usize>) -> f64 {
    let n = normalize_table(p, nu, nv);
    let (ru, rv) = (n.keep_u.len(), n.keep_v.len());
    if ru < 2 || rv < 2 {
        return 0.0;
    }
    let rank = ru.min(rv).min(rank_bound.unwrap_or(usize::MAX));
    let value = if rank <= 2 {
        n.q.iter().map(|x| x * x).sum::<f64>() - 1.0
    } else if ru.min(rv) <= JACOBI_MAX_DIM {
        let s = jacobi_svd(&n.q, ru, rv).singular_values[1];
        s * s
    } else {
        let s = deflated_top_singular_value(&n.q, ru, rv, &n.sqrt_pu, &n.sqrt_pv);
        s * s
    };
    value.clamp(0.0, 1.0)
}

/// `rho_m^2(U;V)`, choosing the cheapest exact route for the table size.
pub fn maximal_correlation_sq(j: &JointDistribution) -> f64 {
    rho_m_sq_from_table(j.as_slice(), j.n_u(), j.n_v(), None)
}

/// Full spectral report via Jacobi SVD of the normalized joint matrix.
pub fn maximal_correlation(j: &JointDistribution) -> SpectralReport {
    let (nu, nv) = (j.n_u(), j.n_v());
    let n = normalize_table(j.as_slice(), nu, nv);
    let (ru, rv) = (n.keep_u.len(), n.keep_v.len());
    if ru < 2 || rv < 2 {
        return SpectralReport {
            singular_values: vec![1.0],
            rho_m: 0.0,
            sigma_min: if rv > ru { 0.0 } else { 1.0 },
            optimal_f: vec![0.0; nu],
            optimal_g: vec![0.0; nv],
            multiplicity: 0,
            degenerate: true,
        };
    }
    let svd = jacobi_svd(&n.q, ru, rv);
    let sv = svd.singular_values.clone();
    let rho_m = sv[1].clamp(0.0, 1.0);
    let sigma_min = if rv > ru { 0.0 } else { *sv.last().unwrap() };
    let multiplicity = sv[1..]
        .iter()
        .filter(|s| (*s - sv[1]).abs() <= MULTIPLICITY_TOLERANCE)
        .count();

    let mut optimal_f = vec![0.0; nu];
    let mut optimal_g = vec![0.0; nv];
    for (k, &u) in n.keep_u.iter().enumerate() {
        optimal_f[u] = svd.left[1][k] / n.sqrt_pu[k];
    }
    for (k, &v) in n.keep_v.iter().enumerate() {
        optimal_g[v] = svd.right[1][k] / n.sqrt_pv[k];
    }
    // Orient the pair so that E[f g] = +rho_m.
    let cross: f64 = (0..nu)
        .flat_map(|u| (0..nv).map(move |v| (u, v)))
        .map(|(u, v)| j.get(u, v) * optimal_f[u] * optimal_g[v])
        .sum();
    if cross < 0.0 {
        optimal_g.iter_mut().for_each(|g| *g = -*g);
    }
    SpectralReport {
        singular_values: sv,
        rho_m,
        sigma_min,
        optimal_f,
        optimal_g,
        multiplicity,
        degenerate: false,
    }
}

/// `E[E^2[f(U)|V]] / var(f(U))` for the centered `f`; bounded above by `rho_m^2`.
pub fn renyi_value(j: &JointDistribution, f: &[f64]) -> Result<f64> {
    if f.len() != j.n_u() {
        return Err(Error::DimensionMismatch(format!(
            "function has {} values but U has {} symbols",
            f.len(),
            j.n_u()
        )));
    }
    let stats = j.conditional_stats_of(f);
    let pu = j.marginal_u();
    let var = crate::prob::variance(&pu, f);
    let scale = f.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if var <= 1e-14 * scale * scale || var == 0.0 {
        return Err(Error::Degenerate("f(U) is constant".into()));
    }
    Ok(stats.var_of_cond_mean() / var)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakIndependence {
    pub weakly_independent: bool,
    pub sigma_min: f64,
    /// Numerical rank of the `|Y| x |X|` transition matrix.
    pub rank: usize,
}

/// Whether the conditional pmfs `P_{X|Y}(.|y)` are linearly dependent.
pub fn weak_independence_test(
    channel_x_given_y: &Channel,
    pmf_y: &[f64],
) -> Result<WeakIndependence> {
    if pmf_y.iter().any(|&p| p <= 0.0) {
        return Err(Error::InvalidArgument(
            "input pmf must be strictly positive".into(),
        ));
    }
    let joint_yx = JointDistribution::from_input_and_channel(pmf_y, channel_x_given_y)?;
    let report = maximal_correlation(&joint_yx.transpose());

    let (ny, nx) = (channel_x_given_y.n_inputs(), channel_x_given_y.n_outputs());
    let sv = jacobi_svd(channel_x_given_y.as_slice(), ny, nx).singular_values;
    let rank = sv
        .iter()
        .filter(|&&s| s > WEAK_INDEPENDENCE_TOLERANCE * sv[0])
        .count();
    Ok(WeakIndependence {
        weakly_independent: report.sigma_min <= WEAK_INDEPENDENCE_TOLERANCE,
        sigma_min: report.sigma_min,
        rank,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdpiCheck {
    /// `rho_m^2(X;Z)`.
    pub lhs: f64,
    /// `rho_m^2(X;Y) * rho_m^2(Y;Z)`.
    pub rhs: f64,
    pub holds: bool,
}

/// Checks `rho_m^2(X;Z) <= rho_m^2(X;Y) rho_m^2(Y;Z)` for `X - Y - Z`.
pub fn verify_sdpi(j_xy: &JointDistribution, filter: &Channel) -> Result<SdpiCheck> {
    let j_xz = j_xy.compose(filter)?;
    let j_yz = JointDistribution::from_input_and_channel(&j_xy.marginal_v(), filter)?;
    let lhs = maximal_correlation_sq(&j_xz);
    let rhs = maximal_correlation_sq(j_xy) * maximal_correlation_sq(&j_yz);
    Ok(SdpiCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-8,
    })
}

/// Joint of `((U1,U2),(V1,V2))` for independent pairs; product symbols are indexed
/// lexicographically (`u1 * |U2| + u2`).
pub fn kronecker(j1: &JointDistribution, j2: &JointDistribution) -> Result<JointDistribution> {
    let (a1, b1, a2, b2) = (j1.n_u(), j1.n_v(), j2.n_u(), j2.n_v());
    let entries = a1 * a2 * b1 * b2;
    if entries > MAX_PRODUCT_ENTRIES {
        return Err(Error::ResourceLimit(format!(
            "product joint has {entries} entries, limit is {MAX_PRODUCT_ENTRIES}"
        )));
    }
    let cols = b1 * b2;
    let mut p = vec![0.0; a1 * a2 * cols];
    for u1 in 0..a1 {
        for u2 in 0..a2 {
            let r = u1 * a2 + u2;
            for v1 in 0..b1 {
                for v2 in 0..b2 {
                    p[r * cols + v1 * b2 + v2] = j1.get(u1, v1) * j2.get(u2, v2);
                }
            }
        }
    }
    JointDistribution::from_flat(Alphabet::indices(a1 * a2), Alphabet::indices(cols), p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub rho_product: f64,
    pub max_components: f64,
}

/// `rho_m` of the product pair against the larger component `rho_m`.
pub fn tensor_rho_m(j1: &JointDistribution, j2: &JointDistribution) -> Result<TensorCheck> {
    let product = kronecker(j1, j2)?;
    let rho_product = maximal_correlation(&product).rho_m;
    let max_components = maximal_correlation(j1)
        .rho_m
        .max(maximal_correlation(j2).rho_m);
    Ok(TensorCheck {
        rho_product,
        max_components,
    })
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
    fn independent_and_identical() {
        let ind = JointDistribution::independent(
            pm1(),
            &[0.3, 0.7],
            Alphabet::indices(3),
            &[0.2, 0.5, 0.3],
        )
        .unwrap();
        let r = maximal_correlation(&ind);
        assert_abs_diff_eq!(r.rho_m, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r.singular_values[0], 1.0, epsilon = 1e-8);

        let diag = JointDistribution::diagonal(Alphabet::indices(3), &[0.2, 0.5, 0.3]).unwrap();
        assert_abs_diff_eq!(maximal_correlation(&diag).rho_m, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn bsc_rho_and_optimal_functions() {
        let j = bsc_joint(0.1);
        let r = maximal_correlation(&j);
        assert_abs_diff_eq!(r.rho_m, 0.8, epsilon = 1e-12);
        assert_eq!(r.multiplicity, 1);
        // f is +-1 up to sign, zero mean, unit variance.
        let pu = j.marginal_u();
        let m: f64 = pu.iter().zip(&r.optimal_f).map(|(p, f)| p * f).sum();
        let v: f64 = pu.iter().zip(&r.optimal_f).map(|(p, f)| p * f * f).sum();
        assert_abs_diff_eq!(m, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-8);
        let corr: f64 = (0..2)
            .flat_map(|u| (0..2).map(move |w| (u, w)))
            .map(|(u, w)| j.get(u, w) * r.optimal_f[u] * r.optimal_g[w])
            .sum();
        assert_abs_diff_eq!(corr, 0.8, epsilon = 1e-8);
        assert_abs_diff_eq!(renyi_value(&j, &r.optimal_f).unwrap(), 0.64, epsilon = 1e-8);
    }

    #[test]
    fn degenerate_variables() {
        let j = JointDistribution::new(
            Alphabet::new(vec![2.0]).unwrap(),
            Alphabet::binary(),
            vec![vec![0.4, 0.6]],
        )
        .unwrap();
        let r = maximal_correlation(&j);
        assert!(r.degenerate);
        assert_eq!(r.rho_m, 0.0);
        assert!(matches!(
            renyi_value(&bsc_joint(0.1), &[1.0, 1.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn zero_mass_symbols_are_pruned() {
        let j = JointDistribution::new(
            Alphabet::indices(3),
            Alphabet::indices(3),
            vec![
                vec![0.45, 0.0, 0.05],
                vec![0.0, 0.0, 0.0],
                vec![0.05, 0.0, 0.45],
            ],
        )
        .unwrap();
        let r = maximal_correlation(&j);
        assert_abs_diff_eq!(r.rho_m, 0.8, epsilon = 1e-12);
        assert_eq!(r.optimal_f[1], 0.0);
        assert_eq!(r.optimal_g[1], 0.0);
    }

    #[test]
    fn fast_path_agrees_with_svd() {
        let j = JointDistribution::new(
            Alphabet::indices(2),
            Alphabet::indices(4),
            vec![vec![0.1, 0.2, 0.05, 0.15], vec![0.2, 0.05, 0.15, 0.1]],
        )
        .unwrap();
        let svd = maximal_correlation(&j).rho_m_sq();
        assert_abs_diff_eq!(maximal_correlation_sq(&j), svd, epsilon = 1e-13);
    }

    #[test]
    fn renyi_of_any_function_on_independent_joint_is_zero() {
        let ind = JointDistribution::independent(
            Alphabet::indices(3),
            &[0.2, 0.3, 0.5],
            pm1(),
            &[0.5, 0.5],
        )
        .unwrap();
        assert_abs_diff_eq!(
            renyi_value(&ind, &[1.0, -2.0, 0.7]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn weak_independence_examples() {
        let bsc = Channel::new(
            Alphabet::binary(),
            pm1(),
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        )
        .unwrap();
        let w = weak_independence_test(&bsc, &[0.5, 0.5]).unwrap();
        assert!(!w.weakly_independent);
        assert_eq!(w.rank, 2);
        assert_abs_diff_eq!(w.sigma_min, 0.8, epsilon = 1e-12);

        let three = Channel::new(
            Alphabet::indices(3),
            pm1(),
            vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.2, 0.8]],
        )
        .unwrap();
        let w = weak_independence_test(&three, &[0.3, 0.3, 0.4]).unwrap();
        assert!(w.weakly_independent);
        assert_eq!(w.rank, 2);

        let dup = Channel::new(
            Alphabet::indices(2),
            Alphabet::indices(3),
            vec![vec![0.2, 0.3, 0.5], vec![0.2, 0.3, 0.5]],
        )
        .unwrap();
        let w = weak_independence_test(&dup, &[0.5, 0.5]).unwrap();
        assert!(w.weakly_independent);
        assert_eq!(w.rank, 1);

        assert!(weak_independence_test(&dup, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn sdpi_examples() {
        let j = bsc_joint(0.1);
        let id = verify_sdpi(&j, &Channel::identity(Alphabet::binary())).unwrap();
        assert_abs_diff_eq!(id.lhs, 0.64, epsilon = 1e-12);
        assert_abs_diff_eq!(id.rhs, 0.64, epsilon = 1e-12);
        assert!(id.holds);

        let c = verify_sdpi(&j, &Channel::constant(Alphabet::binary(), 2, 1)).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.holds);

        let chain = verify_sdpi(&j, &Channel::bsc(Alphabet::binary(), 0.2).unwrap()).unwrap();
        assert_abs_diff_eq!(chain.lhs, 0.2304, epsilon = 1e-12);
        assert_abs_diff_eq!(chain.rhs, 0.2304, epsilon = 1e-12);
        assert!(chain.holds);
    }

    #[test]
    fn tensorization_examples() {
        let a = bsc_joint(0.1);
        let b = bsc_joint(0.3);
        let same = tensor_rho_m(&a, &a).unwrap();
        assert_abs_diff_eq!(same.rho_product, 0.8, epsilon = 1e-8);
        let mixed = tensor_rho_m(&a, &b).unwrap();
        assert_abs_diff_eq!(mixed.rho_product, 0.8, epsilon = 1e-8);
        assert_abs_diff_eq!(mixed.max_components, 0.8, epsilon = 1e-12);

        let ind =
            JointDistribution::independent(pm1(), &[0.5, 0.5], Alphabet::binary(), &[0.3, 0.7])
                .unwrap();
        let t = tensor_rho_m(&ind, &b).unwrap();
        assert_abs_diff_eq!(t.rho_product, 0.4, epsilon = 1e-8);

        let big = JointDistribution::independent(
            Alphabet::indices(10),
            &[0.1; 10],
            Alphabet::indices(10),
            &[0.1; 10],
        )
        .unwrap();
        assert!(matches!(
            tensor_rho_m(&big, &big),
            Err(Error::ResourceLimit(_))
        ));
    }
}
