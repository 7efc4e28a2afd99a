use ensrlab::biso::{m_eps_bounds, BisoChannel};
use ensrlab::dependence::maximal_correlation_sq;
use ensrlab::filter::{
    grid_search, solve, solve_curve, verify_bounds, verify_convexity, ConstraintKind,
    FilterProblem, SolverConfig,
};
use ensrlab::random::{random_joint, seeded};
use ensrlab::{Alphabet, JointDistribution};

fn bec_joint(p: f64, delta: f64) -> JointDistribution {
    // Rows X in {-1, 0, 1}, columns Y in {0, 1}.
    let x = Alphabet::new(vec![-1.0, 0.0, 1.0]).unwrap();
    let rows = vec![
        vec![(1.0 - p) * (1.0 - delta), 0.0],
        vec![(1.0 - p) * delta, p * delta],
        vec![0.0, p * (1.0 - delta)],
    ];
    JointDistribution::new(x, Alphabet::binary(), rows).unwrap()
}

#[test]
fn bec_strong_curve_is_affine() {
    let j = bec_joint(0.5, 0.5);
    for i in 1..=10 {
        let eps = 0.05 * i as f64;
        let sol = solve(
            &FilterProblem::new(j.clone(), eps, ConstraintKind::Strong).unwrap(),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(
            (sol.ensr - (1.0 - eps / 0.5)).abs() < 1e-3,
            "eps {eps}: {}",
            sol.ensr
        );
    }
}

#[test]
fn raw_grid_never_beats_the_erasure_line() {
    // Every filter on the boundary is optimal for binary Y; the grid can only match the line.
    let j = BisoChannel::bsc(0.5, 0.1).unwrap().joint();
    for eps in [0.16, 0.32, 0.48] {
        let g = grid_search(
            &FilterProblem::new(j.clone(), eps, ConstraintKind::Strong).unwrap(),
            0.02,
        )
        .unwrap();
        assert!(g.ensr >= 1.0 - eps / 0.64 - 1e-9, "eps {eps}: {}", g.ensr);
        assert!(g.slack() >= -1e-9);
    }
}

#[test]
fn skewed_bec_strong_curve_sits_inside_bounds() {
    let b = BisoChannel::bec(0.7, 0.5).unwrap();
    let j = b.joint();
    let c = solve_curve(
        &j,
        ConstraintKind::Strong,
        &[0.1, 0.2, 0.3, 0.4],
        &SolverConfig::default(),
    )
    .unwrap();
    for p in &c.points {
        let iv = m_eps_bounds(&b, p.eps).unwrap();
        assert!(
            p.value >= iv.lower - 1e-3 && p.value <= iv.upper + 1e-9,
            "{} not in {iv:?}",
            p.value
        );
    }
}

#[test]
fn gradient_search_on_ternary_y() {
    let mut rng = seeded(7);
    for _ in 0..3 {
        let j = random_joint(&mut rng, 3, 3, 1.0);
        let rho = maximal_correlation_sq(&j);
        let eps: Vec<f64> = (0..=5).map(|i| rho * i as f64 / 5.0).collect();
        let r = verify_bounds(&j, &eps, &SolverConfig::default()).unwrap();
        assert!(r.passed, "{:?}", r.rows);
        assert!(verify_convexity(&r.m_curve.pairs()).unwrap().passed);
        for (m, w) in r.m_curve.points.iter().zip(&r.w_curve.points) {
            assert!(w.value <= m.value + 1e-9);
        }
    }
}

#[test]
fn tiny_leakage_scale_is_still_searched() {
    // Nearly independent X and Y: rho_m^2 is about 6e-4, yet the curve must stay convex.
    let x = Alphabet::indices(2);
    let y = Alphabet::indices(3);
    let rows = vec![
        vec![
            0.060437313293591644,
            0.04955967667196242,
            0.3252146288292373,
        ],
        vec![
            0.08549224838442337,
            0.05740634816893702,
            0.42188978465184823,
        ],
    ];
    let j = JointDistribution::new(x, y, rows).unwrap();
    let rho = maximal_correlation_sq(&j);
    assert!(rho < 1e-3);
    let eps: Vec<f64> = (0..=5).map(|i| rho * i as f64 / 5.0).collect();
    let r = verify_bounds(
        &j,
        &eps,
        &SolverConfig {
            seed: 7,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    assert!(r.passed);
    let c = verify_convexity(&r.m_curve.pairs()).unwrap();
    assert!(c.passed, "{c:?}");
}
