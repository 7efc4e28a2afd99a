//! Search engine shared by the `M_eps`, `W_eps` and Bayes-error problems.
//!
//! Filters are row-major `|Y| x |Z|` matrices. The evaluator normalizes rows
//! before use, so finite-difference perturbations off the simplex stay
//! meaningful and the value is invariant to row scaling.

use rayon::prelude::*;
use serde::Serialize;

use super::{
    max_leakage, ConstraintKind, FilterProblem, FilterSolution, Method, FEASIBILITY_SLACK,
};
use crate::dependence::rho_m_sq_from_table;
use crate::error::{Error, Result};
use crate::prob::{Alphabet, Channel, JointDistribution};
use crate::random::{dirichlet, substream};

/// Constraint tolerance used inside the search, where leakage comes from the fast evaluator.
const SEARCH_TOLERANCE: f64 = 1e-10;
/// Objective values closer than this are ties, resolved by candidate order.
const TIE_TOLERANCE: f64 = 1e-8;
const POLISH_CANDIDATES: usize = 4;
const POLISH_EVALUATION_CAP: usize = 40_000;
const BISECTION_STEPS: usize = 50;
const RESTORE_STEPS: usize = 80;
const SLIDE_STEPS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// Dense grid when `|Y| = 2` and `|Z| = 3`, projected gradient otherwise.
    Auto,
    Grid,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `mmse(Y|Z) / var(Y)`.
    Ensr,
    /// MAP error probability of `Y` from `Z`.
    BayesError,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub seed: u64,
    pub grid_resolution: f64,
    pub restarts: usize,
    /// Output cardinality; `|Y| + 1` when unset.
    pub z_size: Option<usize>,
    pub erasure_warm_start: bool,
    pub strategy: SearchStrategy,
    pub penalty_rounds: usize,
    pub mu0: f64,
    pub max_iters: usize,
    pub fd_step: f64,
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid_resolution: 0.02,
            restarts: 32,
            z_size: None,
            erasure_warm_start: true,
            strategy: SearchStrategy::Auto,
            penalty_rounds: 5,
            mu0: 10.0,
            max_iters: 150,
            fd_step: 1e-6,
            polish: true,
        }
    }
}

/// Minimizes the ENSR over filters meeting the problem's privacy budget.
pub fn solve(problem: &FilterProblem, config: &SolverConfig) -> Result<FilterSolution> {
    solve_with_warm_starts(problem, config, &[])
}

/// As [`solve`], also trying each filter in `warm` as a starting point.
pub fn solve_with_warm_starts(
    problem: &FilterProblem,
    config: &SolverConfig,
    warm: &[Channel],
) -> Result<FilterSolution> {
    let cfg = SolverConfig {
        z_size: Some(problem.z_size),
        ..config.clone()
    };
    let engine = Engine::new(&problem.joint, problem.kind, Objective::Ensr, &cfg)?;
    engine.solve(problem.eps(), warm)
}

/// Fast evaluation of `(constraint, objective)` for filter matrices.
#[derive(Debug, Clone)]
pub(crate) struct Evaluator {
    nx: usize,
    ny: usize,
    nz: usize,
    pxy: Vec<f64>,
    py: Vec<f64>,
    px: Vec<f64>,
    xc: Vec<f64>,
    yc: Vec<f64>,
    var_x: f64,
    var_y: f64,
}

#[derive(Debug, Default, Clone)]
struct Scratch {
    k: Vec<f64>,
    pxz: Vec<f64>,
    pyz: Vec<f64>,
    pz: Vec<f64>,
    gram: Vec<f64>,
}

impl Evaluator {
    pub(crate) fn new(joint: &JointDistribution, nz: usize) -> Result<Self> {
        let (px, py) = joint.marginals();
        let var_y = joint.var_v();
        if var_y <= 0.0 {
            return Err(Error::Degenerate("Y is constant, ENSR undefined".into()));
        }
        let mx = crate::prob::mean(&px, joint.alphabet_u().points());
        let my = crate::prob::mean(&py, joint.alphabet_v().points());
        Ok(Self {
            nx: joint.n_u(),
            ny: joint.n_v(),
            nz,
            pxy: joint.as_slice().to_vec(),
            xc: joint.alphabet_u().points().iter().map(|x| x - mx).collect(),
            yc: joint.alphabet_v().points().iter().map(|y| y - my).collect(),
            var_x: joint.var_u(),
            var_y,
            px,
            py,
        })
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            k: vec![0.0; self.ny * self.nz],
            pxz: vec![0.0; self.nx * self.nz],
            pyz: vec![0.0; self.ny * self.nz],
            pz: vec![0.0; self.nz],
            gram: Vec::new(),
        }
    }

    fn load(&self, k: &[f64], s: &mut Scratch) {
        let nz = self.nz;
        for y in 0..self.ny {
            let row = &k[y * nz..(y + 1) * nz];
            let total: f64 = row.iter().map(|v| v.max(0.0)).sum();
            for z in 0..nz {
                s.k[y * nz + z] = if total > 0.0 {
                    row[z].max(0.0) / total
                } else {
                    1.0 / nz as f64
                };
            }
        }
        s.pz.iter_mut().for_each(|v| *v = 0.0);
        for y in 0..self.ny {
            for z in 0..nz {
                let v = self.py[y] * s.k[y * nz + z];
                s.pyz[y * nz + z] = v;
                s.pz[z] += v;
            }
        }
    }

    fn ensr(&self, s: &Scratch) -> f64 {
        let nz = self.nz;
        let mut explained = 0.0;
        for z in 0..nz {
            if s.pz[z] <= 0.0 {
                continue;
            }
            let m: f64 = (0..self.ny).map(|y| s.pyz[y * nz + z] * self.yc[y]).sum();
            explained += m * m / s.pz[z];
        }
        (1.0 - explained / self.var_y).clamp(0.0, 1.0)
    }

    fn bayes(&self, s: &Scratch) -> f64 {
        let nz = self.nz;
        let correct: f64 = (0..nz)
            .map(|z| (0..self.ny).map(|y| s.pyz[y * nz + z]).fold(0.0, f64::max))
            .sum();
        (1.0 - correct).max(0.0)
    }

    fn fill_pxz(&self, s: &mut Scratch) {
        let (ny, nz) = (self.ny, self.nz);
        s.pxz.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..self.nx {
            for y in 0..ny {
                let p = self.pxy[x * ny + y];
                if p == 0.0 {
                    continue;
                }
                for z in 0..nz {
                    s.pxz[x * nz + z] += p * s.k[y * nz + z];
                }
            }
        }
    }

    fn weak(&self, s: &mut Scratch) -> f64 {
        if self.var_x <= 0.0 {
            return 0.0;
        }
        self.fill_pxz(s);
        let nz = self.nz;
        let mut explained = 0.0;
        for z in 0..nz {
            if s.pz[z] <= 0.0 {
                continue;
            }
            let m: f64 = (0..self.nx).map(|x| s.pxz[x * nz + z] * self.xc[x]).sum();
            explained += m * m / s.pz[z];
        }
        (explained / self.var_x).clamp(0.0, 1.0)
    }

    fn strong(&self, s: &mut Scratch) -> f64 {
        self.fill_pxz(s);
        let (nx, nz) = (self.nx, self.nz);
        let rank = nx.min(nz).min(self.ny);
        let value = if rank <= 2 {
            let mut chi = 0.0;
            for x in 0..nx {
                if self.px[x] <= 0.0 {
                    continue;
                }
                for z in 0..nz {
                    let p = s.pxz[x * nz + z];
                    if p > 0.0 && s.pz[z] > 0.0 {
                        chi += p * p / (self.px[x] * s.pz[z]);
                    }
                }
            }
            chi - 1.0
        } else if rank == 3 {
            self.second_eigenvalue_rank3(s)
        } else {
            rho_m_sq_from_table(&s.pxz, nx, nz, Some(self.ny))
        };
        value.clamp(0.0, 1.0)
    }

    /// With `rank(Q) <= 3`, the deflated Gram matrix `QQ^T - uu^T` has at most two
    /// non-zero eigenvalues, recovered from its trace and Frobenius norm.
    fn second_eigenvalue_rank3(&self, s: &mut Scratch) -> f64 {
        let (nx, nz) = (self.nx, self.nz);
        let q = |x: usize, z: usize| {
            let d = self.px[x] * s.pz[z];
            if d > 0.0 {
                s.pxz[x * nz + z] / d.sqrt()
            } else {
                0.0
            }
        };
        let (d, over_x) = if nx <= nz { (nx, true) } else { (nz, false) };
        let mut g = std::mem::take(&mut s.gram);
        g.clear();
        g.resize(d * d, 0.0);
        if over_x {
            for a in 0..nx {
                for b in a..nx {
                    let v: f64 = (0..nz).map(|z| q(a, z) * q(b, z)).sum::<f64>()
                        - (self.px[a] * self.px[b]).sqrt();
                    g[a * d + b] = v;
                    g[b * d + a] = v;
                }
            }
        } else {
            for a in 0..nz {
                for b in a..nz {
                    let v: f64 = (0..nx).map(|x| q(x, a) * q(x, b)).sum::<f64>()
                        - (s.pz[a] * s.pz[b]).sqrt();
                    g[a * d + b] = v;
                    g[b * d + a] = v;
                }
            }
        }
        let trace: f64 = (0..d).map(|i| g[i * d + i]).sum();
        let frob: f64 = g.iter().map(|v| v * v).sum();
        s.gram = g;
        let disc = (2.0 * frob - trace * trace).max(0.0);
        0.5 * (trace + disc.sqrt())
    }

    fn measure(
        &self,
        k: &[f64],
        kind: ConstraintKind,
        objective: Objective,
        s: &mut Scratch,
    ) -> (f64, f64) {
        self.load(k, s);
        let o = match objective {
            Objective::Ensr => self.ensr(s),
            Objective::BayesError => self.bayes(s),
        };
        let c = match kind {
            ConstraintKind::Strong => self.strong(s),
            ConstraintKind::Weak => self.weak(s),
        };
        (c, o)
    }
}

/// Simplex projection (Euclidean), in place.
fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

#[derive(Debug, Clone)]
struct Candidate {
    k: Vec<f64>,
    constraint: f64,
    objective: f64,
    method: Method,
}

/// All grid filters for `|Y| = 2`, `|Z| = 3` with their `(constraint, objective)`.
#[derive(Debug)]
struct GridTable {
    rows: Vec<[f64; 3]>,
    values: Vec<(f64, f64)>,
}

impl GridTable {
    fn build(
        eval: &Evaluator,
        kind: ConstraintKind,
        objective: Objective,
        resolution: f64,
    ) -> Self {
        let n = (1.0 / resolution).round().max(1.0) as usize;
        let mut rows = Vec::with_capacity((n + 1) * (n + 2) / 2);
        for i in 0..=n {
            for j in 0..=n - i {
                rows.push([
                    i as f64 / n as f64,
                    j as f64 / n as f64,
                    (n - i - j) as f64 / n as f64,
                ]);
            }
        }
        let values: Vec<(f64, f64)> = (0..rows.len())
            .into_par_iter()
            .flat_map_iter(|a| {
                let mut s = eval.scratch();
                let mut k = [0.0; 6];
                k[..3].copy_from_slice(&rows[a]);
                let rows = &rows;
                (0..rows.len())
                    .map(move |b| {
                        k[3..].copy_from_slice(&rows[b]);
                        eval.measure(&k, kind, objective, &mut s)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Self { rows, values }
    }

    /// The best feasible grid points, ties broken by grid index.
    fn best(&self, eps: f64, count: usize) -> Vec<Candidate> {
        let mut top: Vec<(f64, usize)> = Vec::with_capacity(count + 1);
        for (idx, &(c, o)) in self.values.iter().enumerate() {
            if c > eps + SEARCH_TOLERANCE {
                continue;
            }
            if top.len() == count && o >= top[count - 1].0 {
                continue;
            }
            let pos = top.partition_point(|&(v, _)| v <= o);
            top.insert(pos, (o, idx));
            top.truncate(count);
        }
        let m = self.rows.len();
        top.into_iter()
            .map(|(o, idx)| {
                let (a, b) = (idx / m, idx % m);
                let mut k = self.rows[a].to_vec();
                k.extend_from_slice(&self.rows[b]);
                Candidate {
                    k,
                    constraint: self.values[idx].0,
                    objective: o,
                    method: Method::Grid,
                }
            })
            .collect()
    }
}

/// A search engine for one joint, constraint kind and objective; reusable across budgets.
pub(crate) struct Engine<'a> {
    joint: &'a JointDistribution,
    eval: Evaluator,
    kind: ConstraintKind,
    objective: Objective,
    config: SolverConfig,
    nz: usize,
    cap: f64,
    grid: Option<GridTable>,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(
        joint: &'a JointDistribution,
        kind: ConstraintKind,
        objective: Objective,
        config: &SolverConfig,
    ) -> Result<Self> {
        let ny = joint.n_v();
        let nz = config.z_size.unwrap_or(ny + 1);
        if nz < 2 {
            return Err(Error::InvalidArgument(
                "filter needs at least two outputs".into(),
            ));
        }
        if !(config.grid_resolution > 0.0 && config.grid_resolution <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "grid resolution {} outside (0, 0.5]",
                config.grid_resolution
            )));
        }
        let eval = Evaluator::new(joint, nz)?;
        let use_grid = match config.strategy {
            SearchStrategy::Auto => ny == 2 && nz == 3,
            SearchStrategy::Grid => {
                if ny != 2 || nz != 3 {
                    return Err(Error::UnsupportedScope(
                        "grid search needs |Y| = 2 and |Z| = 3".into(),
                    ));
                }
                true
            }
            SearchStrategy::Gradient => false,
        };
        let grid =
            use_grid.then(|| GridTable::build(&eval, kind, objective, config.grid_resolution));
        Ok(Self {
            joint,
            eval,
            kind,
            objective,
            config: config.clone(),
            nz,
            cap: max_leakage(joint, kind),
            grid,
        })
    }

    fn measure(&self, k: &[f64], s: &mut Scratch) -> (f64, f64) {
        self.eval.measure(k, self.kind, self.objective, s)
    }

    fn candidate(&self, k: Vec<f64>, method: Method, s: &mut Scratch) -> Candidate {
        let (constraint, objective) = self.measure(&k, s);
        Candidate {
            k,
            constraint,
            objective,
            method,
        }
    }

    /// Erasure filter hitting the budget for this constraint kind, padded to `|Z|`;
    /// falls back to a constant filter when `|Z| <= |Y|`.
    fn anchor(&self, eps: f64) -> Vec<f64> {
        let (ny, nz) = (self.eval.ny, self.nz);
        let mut k = vec![0.0; ny * nz];
        if nz > ny {
            let delta = if self.cap > 0.0 {
                (1.0 - eps / self.cap).clamp(0.0, 1.0)
            } else {
                1.0
            };
            for y in 0..ny {
                k[y * nz + y] = 1.0 - delta;
                k[y * nz + ny] += delta;
            }
        } else {
            for y in 0..ny {
                k[y * nz] = 1.0;
            }
        }
        k
    }

    fn identity_target(&self) -> Vec<f64> {
        let (ny, nz) = (self.eval.ny, self.nz);
        let mut k = vec![0.0; ny * nz];
        for y in 0..ny {
            k[y * nz + y.min(nz - 1)] = 1.0;
        }
        k
    }

    fn blend(a: &[f64], b: &[f64], t: f64, out: &mut [f64]) {
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = (1.0 - t) * x + t * y;
        }
    }

    /// Finite-difference gradients of the constraint and the objective, with the
    /// row means removed (row sums are fixed, so only within-row variation matters).
    fn gradients(&self, k: &[f64], s: &mut Scratch, gc: &mut [f64], go: &mut [f64]) {
        let h = self.config.fd_step;
        let mut work = k.to_vec();
        for i in 0..k.len() {
            work[i] = k[i] + h;
            let up = self.measure(&work, s);
            work[i] = (k[i] - h).max(0.0);
            let down = self.measure(&work, s);
            let width = k[i] + h - work[i];
            gc[i] = (up.0 - down.0) / width;
            go[i] = (up.1 - down.1) / width;
            work[i] = k[i];
        }
        for g in [gc, go] {
            for row in g.chunks_mut(self.nz) {
                let m = row.iter().sum::<f64>() / row.len() as f64;
                row.iter_mut().for_each(|v| *v -= m);
            }
        }
    }

    /// Gauss-Newton steps on the constraint alone, pulling a slightly infeasible
    /// filter onto the budget boundary. Returns `None` if it does not get there.
    fn restore(&self, c: &Candidate, eps: f64, s: &mut Scratch) -> Option<Candidate> {
        let n = c.k.len();
        let mut k = c.k.clone();
        let mut work = k.clone();
        let (mut g, mut unused) = (vec![0.0; n], vec![0.0; n]);
        let mut level = c.constraint;
        for _ in 0..RESTORE_STEPS {
            if level <= eps + SEARCH_TOLERANCE {
                return Some(self.candidate(k, c.method, s));
            }
            self.gradients(&k, s, &mut g, &mut unused);
            let norm_sq: f64 = g.iter().map(|v| v * v).sum();
            if norm_sq <= 0.0 {
                return None;
            }
            let t = (level - eps) / norm_sq;
            for i in 0..n {
                work[i] = k[i] - t * g[i];
            }
            work.chunks_mut(self.nz).for_each(project_simplex);
            let next = self.measure(&work, s).0;
            if next >= level {
                return None;
            }
            k.copy_from_slice(&work);
            level = next;
        }
        None
    }

    /// Descent along the budget boundary: a step on the objective gradient with its
    /// component along the constraint gradient removed (when the budget is active),
    /// followed by [`Self::restore`]. Compass moves stall on a curved boundary; this
    /// does not.
    fn slide(&self, mut c: Candidate, eps: f64, s: &mut Scratch) -> Candidate {
        let n = c.k.len();
        let (mut gc, mut go) = (vec![0.0; n], vec![0.0; n]);
        let mut d = vec![0.0; n];
        let mut t: f64 = 0.05;
        for _ in 0..SLIDE_STEPS {
            self.gradients(&c.k, s, &mut gc, &mut go);
            let active = c.constraint >= eps - 1e-6 * self.cap;
            let gc_sq: f64 = gc.iter().map(|v| v * v).sum();
            let along = if active && gc_sq > 0.0 {
                go.iter().zip(&gc).map(|(a, b)| a * b).sum::<f64>() / gc_sq
            } else {
                0.0
            };
            for i in 0..n {
                d[i] = -(go[i] - along * gc[i]);
            }
            let scale = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if scale <= 1e-14 {
                break;
            }
            d.iter_mut().for_each(|v| *v /= scale);
            let mut moved = false;
            while t >= 1e-10 {
                let mut k: Vec<f64> = c.k.iter().zip(&d).map(|(x, v)| x + t * v).collect();
                k.chunks_mut(self.nz).for_each(project_simplex);
                let mut trial = self.candidate(k, c.method, s);
                if trial.constraint > eps + SEARCH_TOLERANCE {
                    match self.restore(&trial, eps, s) {
                        Some(r) => trial = r,
                        None => {
                            t *= 0.5;
                            continue;
                        }
                    }
                }
                if trial.objective < c.objective - 1e-15 {
                    c = trial;
                    moved = true;
                    t = (t * 1.5).min(0.2);
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        c
    }

    /// Makes an infeasible filter feasible: first by restoring the constraint
    /// locally, else by moving toward `anchor` just far enough.
    fn repair(&self, c: Candidate, anchor: &[f64], eps: f64, s: &mut Scratch) -> Candidate {
        if c.constraint <= eps + SEARCH_TOLERANCE {
            return c;
        }
        if let Some(r) = self.restore(&c, eps, s) {
            return r;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut k = c.k.clone();
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            Self::blend(&c.k, anchor, mid, &mut k);
            if self.measure(&k, s).0 <= eps + SEARCH_TOLERANCE {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Self::blend(&c.k, anchor, hi, &mut k);
        self.candidate(k, c.method, s)
    }

    /// Local feasible descent: pairwise mass moves within rows with halving steps,
    /// plus pushes toward the identity filter up to the budget boundary.
    fn polish(&self, mut c: Candidate, eps: f64, s: &mut Scratch) -> Candidate {
        let (ny, nz) = (self.eval.ny, self.nz);
        let target = self.identity_target();
        let feasible = |v: f64| v <= eps + SEARCH_TOLERANCE;
        let mut step = 4.0 * self.config.grid_resolution.min(0.05);
        let mut evaluations = 0;
        let mut trial = c.k.clone();
        while step >= 1e-9 && evaluations < POLISH_EVALUATION_CAP {
            let mut improved = false;
            for y in 0..ny {
                for a in 0..nz {
                    for b in 0..nz {
                        let move_by = step.min(c.k[y * nz + a]);
                        if a == b || move_by <= 0.0 {
                            continue;
                        }
                        trial.copy_from_slice(&c.k);
                        trial[y * nz + a] -= move_by;
                        trial[y * nz + b] += move_by;
                        let (tc, to) = self.measure(&trial, s);
                        evaluations += 1;
                        if feasible(tc) && to < c.objective - 1e-15 {
                            c.k.copy_from_slice(&trial);
                            c.constraint = tc;
                            c.objective = to;
                            improved = true;
                        }
                    }
                }
            }
            let (tc, _) = self.measure(&target, s);
            if !feasible(tc) {
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (lo + hi);
                    Self::blend(&c.k, &target, mid, &mut trial);
                    evaluations += 1;
                    if feasible(self.measure(&trial, s).0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if lo > 0.0 {
                    Self::blend(&c.k, &target, lo, &mut trial);
                    let (tc, to) = self.measure(&trial, s);
                    if feasible(tc) && to < c.objective - 1e-15 {
                        c.k.copy_from_slice(&trial);
                        c.constraint = tc;
                        c.objective = to;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        self.slide(c, eps, s)
    }

    fn penalized(&self, k: &[f64], eps: f64, mu: f64, s: &mut Scratch) -> f64 {
        let (c, o) = self.measure(k, s);
        // Violation relative to the largest leakage, so tiny budgets are not ignored.
        let v = (c - eps).max(0.0) / self.cap.max(f64::MIN_POSITIVE);
        o + mu * v * v
    }

    fn gradient(
        &self,
        k: &[f64],
        eps: f64,
        mu: f64,
        s: &mut Scratch,
        g: &mut [f64],
        work: &mut [f64],
    ) {
        let h = self.config.fd_step;
        let f0 = self.penalized(k, eps, mu, s);
        work.copy_from_slice(k);
        for i in 0..k.len() {
            work[i] = k[i] + h;
            let up = self.penalized(work, eps, mu, s);
            if k[i] >= h {
                work[i] = k[i] - h;
                let down = self.penalized(work, eps, mu, s);
                g[i] = (up - down) / (2.0 * h);
            } else {
                g[i] = (up - f0) / h;
            }
            work[i] = k[i];
        }
    }

    /// Penalty-escalated projected gradient descent from `k`.
    fn descend(&self, mut k: Vec<f64>, eps: f64, s: &mut Scratch) -> Vec<f64> {
        let nz = self.nz;
        let n = k.len();
        let mut g = vec![0.0; n];
        let mut work = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut mu = self.config.mu0;
        for _ in 0..self.config.penalty_rounds {
            let mut t = 1.0;
            let mut f = self.penalized(&k, eps, mu, s);
            for _ in 0..self.config.max_iters {
                self.gradient(&k, eps, mu, s, &mut g, &mut work);
                let mut accepted = false;
                while t > 1e-12 {
                    for i in 0..n {
                        next[i] = k[i] - t * g[i];
                    }
                    next.chunks_mut(nz).for_each(project_simplex);
                    let decrease: f64 = (0..n).map(|i| g[i] * (k[i] - next[i])).sum();
                    let fn_ = self.penalized(&next, eps, mu, s);
                    if fn_ <= f - 1e-4 * decrease {
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !accepted {
                    break;
                }
                let moved = (0..n).map(|i| (k[i] - next[i]).abs()).fold(0.0, f64::max);
                std::mem::swap(&mut k, &mut next);
                f = self.penalized(&k, eps, mu, s);
                t = (2.0 * t).min(1e3);
                if moved < 1e-10 {
                    break;
                }
            }
            mu *= 10.0;
        }
        k
    }

    fn start_points(&self, warm: &[Channel], anchor: &[f64]) -> Result<Vec<(Vec<f64>, Method)>> {
        let (ny, nz) = (self.eval.ny, self.nz);
        let mut starts = Vec::new();
        for w in warm {
            if w.n_inputs() != ny || w.n_outputs() > nz {
                return Err(Error::DimensionMismatch(format!(
                    "warm start is {}x{}, expected {}x{}",
                    w.n_inputs(),
                    w.n_outputs(),
                    ny,
                    nz
                )));
            }
            let mut k = vec![0.0; ny * nz];
            for y in 0..ny {
                k[y * nz..y * nz + w.n_outputs()].copy_from_slice(w.row(y));
            }
            starts.push((k, Method::WarmStart));
        }
        if self.config.erasure_warm_start {
            let method = if nz > ny {
                Method::Erasure
            } else {
                Method::WarmStart
            };
            starts.push((anchor.to_vec(), method));
        }
        Ok(starts)
    }

    /// Best filter for budget `eps` (already clamped by the caller).
    pub(crate) fn solve(&self, eps: f64, warm: &[Channel]) -> Result<FilterSolution> {
        let eps = eps.clamp(0.0, self.cap);
        let anchor = self.anchor(eps);
        let starts = self.start_points(warm, &anchor)?;
        let mut s = self.eval.scratch();

        let mut candidates: Vec<Candidate> = Vec::new();
        for (k, method) in &starts {
            let c = self.candidate(k.clone(), *method, &mut s);
            candidates.push(self.repair(c, &anchor, eps, &mut s));
        }
        let mut restarts_used = 0;
        if let Some(grid) = &self.grid {
            candidates.extend(grid.best(eps, POLISH_CANDIDATES));
        } else {
            let mut inits: Vec<Vec<f64>> = starts.iter().map(|(k, _)| k.clone()).collect();
            let n_warm = inits.len();
            for r in 0..self.config.restarts {
                let mut rng = substream(self.config.seed, r as u64);
                inits.push(
                    (0..self.eval.ny)
                        .flat_map(|_| dirichlet(&mut rng, self.nz, 1.0))
                        .collect(),
                );
            }
            restarts_used = self.config.restarts;
            let descended: Vec<Candidate> = inits
                .into_par_iter()
                .enumerate()
                .map(|(i, k0)| {
                    let mut s = self.eval.scratch();
                    let k = self.descend(k0, eps, &mut s);
                    let method = if i < n_warm {
                        starts[i].1
                    } else {
                        Method::Gradient
                    };
                    let c = self.candidate(k, method, &mut s);
                    self.repair(c, &anchor, eps, &mut s)
                })
                .collect();
            candidates.extend(descended);
        }

        if self.config.polish {
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by(|&a, &b| {
                candidates[a]
                    .objective
                    .total_cmp(&candidates[b].objective)
                    .then(a.cmp(&b))
            });
            let chosen: Vec<usize> = order
                .into_iter()
                .filter(|&i| candidates[i].constraint <= eps + SEARCH_TOLERANCE)
                .take(POLISH_CANDIDATES)
                .collect();
            let polished: Vec<(usize, Candidate)> = chosen
                .into_par_iter()
                .map(|i| {
                    let mut s = self.eval.scratch();
                    (i, self.polish(candidates[i].clone(), eps, &mut s))
                })
                .collect();
            for (i, c) in polished {
                candidates[i] = c;
            }
        }
        self.select(candidates, eps, restarts_used)
    }

    /// Lowest objective with ties going to the earliest candidate; each pick is
    /// re-checked with the exact dependence measures.
    fn select(
        &self,
        mut candidates: Vec<Candidate>,
        eps: f64,
        restarts_used: usize,
    ) -> Result<FilterSolution> {
        candidates.retain(|c| c.constraint <= eps + SEARCH_TOLERANCE);
        while !candidates.is_empty() {
            let best = candidates
                .iter()
                .map(|c| c.objective)
                .fold(f64::INFINITY, f64::min);
            let idx = candidates
                .iter()
                .position(|c| c.objective <= best + TIE_TOLERANCE)
                .unwrap_or(0);
            let c = candidates.remove(idx);
            let filter = self.to_channel(&c.k)?;
            let sol = FilterSolution::from_filter(
                self.joint,
                filter,
                self.kind,
                eps,
                c.method,
                restarts_used,
            )?;
            if sol.slack() >= -FEASIBILITY_SLACK {
                return Ok(sol);
            }
            log::debug!(
                "candidate rejected after exact recomputation (slack {})",
                sol.slack()
            );
        }
        let filter = self.to_channel(&self.anchor(eps))?;
        FilterSolution::from_filter(
            self.joint,
            filter,
            self.kind,
            eps,
            Method::Erasure,
            restarts_used,
        )
    }

    pub(crate) fn to_channel(&self, k: &[f64]) -> Result<Channel> {
        let nz = self.nz;
        let mut rows = Vec::with_capacity(self.eval.ny);
        for row in k.chunks(nz) {
            let total: f64 = row.iter().map(|v| v.max(0.0)).sum();
            rows.push(row.iter().map(|v| v.max(0.0) / total).collect());
        }
        Channel::new(self.joint.alphabet_v().clone(), Alphabet::indices(nz), rows)
    }

    /// Raw grid optimum (no warm starts, no polishing), for checks against the grid alone.
    pub(crate) fn grid_optimum(&self, eps: f64) -> Option<Result<FilterSolution>> {
        let grid = self.grid.as_ref()?;
        let best = grid.best(eps.clamp(0.0, self.cap), 1).into_iter().next()?;
        Some(self.to_channel(&best.k).and_then(|f| {
            FilterSolution::from_filter(self.joint, f, self.kind, eps, Method::Grid, 0)
        }))
    }
}

/// Grid optimum alone for the problem, without warm starts or refinement.
pub fn grid_search(problem: &FilterProblem, resolution: f64) -> Result<FilterSolution> {
    let cfg = SolverConfig {
        grid_resolution: resolution,
        strategy: SearchStrategy::Grid,
        z_size: Some(problem.z_size),
        ..SolverConfig::default()
    };
    let engine = Engine::new(&problem.joint, problem.kind, Objective::Ensr, &cfg)?;
    engine.grid_optimum(problem.eps()).unwrap_or_else(|| {
        Err(Error::UnsupportedScope(
            "grid search needs |Y| = 2 and |Z| = 3".into(),
        ))
    })
}
