//! Additive Gaussian noise filters `Z = Y + gamma N` with `N ~ N(0, 1)`.
//!
//! For jointly Gaussian `(X, Y)` with correlation `rho`,
//! `rho_m^2(X; Z) = rho^2 var(Y) / (var(Y) + gamma^2)` and
//! `mmse(Y|Z) = var(Y) gamma^2 / (var(Y) + gamma^2)`, so the smallest noise meeting a
//! budget `eps` gives `M_eps = W_eps = 1 - eps / rho^2`.
//!
//! Non-Gaussian pairs are handled numerically: `Y` is cut into bins represented by
//! their conditional means, `X` and `Z` are drawn from each representative and
//! binned, which yields an exact finite Markov chain `X - Y - Z`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dependence::maximal_correlation_sq;
use crate::error::{Error, Result};
use crate::prob::{Alphabet, JointDistribution};

pub const DEFAULT_BINS: usize = 256;
/// Grids span this many standard deviations on each side.
pub const COVERAGE_SIGMAS: f64 = 6.0;
/// `ln gamma` is searched in `[-GAMMA_LOG_RANGE, GAMMA_LOG_RANGE]`.
pub const GAMMA_LOG_RANGE: f64 = 4.0;
pub const GAMMA_SEARCH_ITERATIONS: usize = 60;
/// Allowed gap between quantized numerics and the continuous closed forms.
pub const NUMERIC_TOLERANCE: f64 = 0.02;

fn std_normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Zero-mean jointly Gaussian pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPair {
    pub var_x: f64,
    pub var_y: f64,
    pub rho: f64,
}

impl GaussianPair {
    pub fn new(var_x: f64, var_y: f64, rho: f64) -> Result<Self> {
        if !(var_x > 0.0 && var_y > 0.0) || !var_x.is_finite() || !var_y.is_finite() {
            return Err(Error::InvalidArgument(
                "variances must be positive and finite".into(),
            ));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!(
                "correlation {rho} outside [-1,1]"
            )));
        }
        Ok(Self { var_x, var_y, rho })
    }

    /// `rho_m^2(X; Z_gamma)`.
    pub fn leakage(&self, gamma: f64) -> f64 {
        self.rho * self.rho * self.var_y / (self.var_y + gamma * gamma)
    }

    /// `mmse(Y | Z_gamma)`.
    pub fn mmse(&self, gamma: f64) -> f64 {
        self.var_y * gamma * gamma / (self.var_y + gamma * gamma)
    }

    /// `X = a Y + W` with `W` Gaussian and independent of `Y`.
    pub fn model(&self) -> AdditiveModel {
        AdditiveModel {
            y_law: YLaw::Gaussian,
            var_y: self.var_y,
            coefficient: self.rho * (self.var_x / self.var_y).sqrt(),
            noise: NoiseLaw::Gaussian,
            noise_var: self.var_x * (1.0 - self.rho * self.rho),
        }
    }
}

/// Noise level needed for a budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    /// No finite noise makes `Z` independent of `X`.
    Infinite,
    Finite {
        gamma: f64,
        gamma_sq: f64,
    },
}

/// Smallest `gamma` with `rho_m^2(X; Z_gamma) <= eps`: `gamma^2 = var(Y) (rho^2 / eps - 1)`.
pub fn gamma_eps(gp: &GaussianPair, eps: f64) -> NoiseLevel {
    let r2 = gp.rho * gp.rho;
    if eps <= 0.0 {
        return if r2 == 0.0 {
            NoiseLevel::Finite {
                gamma: 0.0,
                gamma_sq: 0.0,
            }
        } else {
            NoiseLevel::Infinite
        };
    }
    // Relative slack so that e.g. eps = 0.64 counts as rho^2 for rho = 0.8.
    if eps >= r2 * (1.0 - 1e-12) {
        return NoiseLevel::Finite {
            gamma: 0.0,
            gamma_sq: 0.0,
        };
    }
    let gamma_sq = gp.var_y * (r2 / eps - 1.0);
    NoiseLevel::Finite {
        gamma: gamma_sq.sqrt(),
        gamma_sq,
    }
}

/// `M_eps = W_eps = 1 - eps / rho^2`, with `eps` clamped to `[0, rho^2]`.
pub fn m_eps_gaussian(gp: &GaussianPair, eps: f64) -> f64 {
    let r2 = gp.rho * gp.rho;
    if r2 == 0.0 {
        return 1.0;
    }
    if eps >= r2 * (1.0 - 1e-12) {
        return 0.0;
    }
    1.0 - eps.max(0.0) / r2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YLaw {
    Gaussian,
    Laplace,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    Gaussian,
    Laplace,
}

/// Zero-mean law with variance `var`: CDF and partial first moment `int_{-inf}^t y dF`.
#[derive(Debug, Clone, Copy)]
struct Law {
    kind: LawKind,
    var: f64,
}

#[derive(Debug, Clone, Copy)]
enum LawKind {
    Gaussian,
    Laplace,
    Uniform,
    Point,
}

impl Law {
    fn y(law: YLaw, var: f64) -> Self {
        let kind = match law {
            YLaw::Gaussian => LawKind::Gaussian,
            YLaw::Laplace => LawKind::Laplace,
            YLaw::Uniform => LawKind::Uniform,
        };
        Self { kind, var }
    }

    fn noise(law: NoiseLaw, var: f64) -> Self {
        if var <= 0.0 {
            return Self {
                kind: LawKind::Point,
                var: 0.0,
            };
        }
        let kind = match law {
            NoiseLaw::Gaussian => LawKind::Gaussian,
            NoiseLaw::Laplace => LawKind::Laplace,
        };
        Self { kind, var }
    }

    /// Half-width of the region the grid must cover.
    fn reach(&self) -> f64 {
        let s = self.var.sqrt();
        match self.kind {
            LawKind::Uniform => s * 3f64.sqrt(),
            _ => COVERAGE_SIGMAS * s,
        }
    }

    fn cdf(&self, t: f64) -> f64 {
        if t == f64::INFINITY {
            return 1.0;
        }
        if t == f64::NEG_INFINITY {
            return 0.0;
        }
        let s = self.var.sqrt();
        match self.kind {
            LawKind::Gaussian => std_normal_cdf(t / s),
            LawKind::Laplace => {
                let b = s / std::f64::consts::SQRT_2;
                if t < 0.0 {
                    0.5 * (t / b).exp()
                } else {
                    1.0 - 0.5 * (-t / b).exp()
                }
            }
            LawKind::Uniform => {
                let c = s * 3f64.sqrt();
                ((t + c) / (2.0 * c)).clamp(0.0, 1.0)
            }
            LawKind::Point => {
                if t >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn partial_mean(&self, t: f64) -> f64 {
        if t.is_infinite() {
            return 0.0;
        }
        let s = self.var.sqrt();
        match self.kind {
            LawKind::Gaussian => -s * std_normal_pdf(t / s),
            LawKind::Laplace => {
                let b = s / std::f64::consts::SQRT_2;
                if t <= 0.0 {
                    0.5 * (t / b).exp() * (t - b)
                } else {
                    -0.5 * (-t / b).exp() * (t + b)
                }
            }
            LawKind::Uniform => {
                let c = s * 3f64.sqrt();
                let u = t.clamp(-c, c);
                (u * u - c * c) / (4.0 * c)
            }
            LawKind::Point => 0.0,
        }
    }
}

/// `X = coefficient * Y + W`, `Y` and `W` independent and zero-mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub y_law: YLaw,
    pub var_y: f64,
    pub coefficient: f64,
    pub noise: NoiseLaw,
    pub noise_var: f64,
}

impl AdditiveModel {
    pub fn var_x(&self) -> f64 {
        self.coefficient * self.coefficient * self.var_y + self.noise_var
    }

    /// Pearson correlation of `X` and `Y`.
    pub fn rho(&self) -> f64 {
        let vx = self.var_x();
        if vx <= 0.0 {
            return 0.0;
        }
        self.coefficient * (self.var_y / vx).sqrt()
    }
}

/// Uniform-width bins over `[-reach, reach]`; the outer bins extend to infinity.
#[derive(Debug, Clone)]
struct Bins {
    edges: Vec<f64>,
    mids: Vec<f64>,
}

impl Bins {
    fn new(reach: f64, n: usize) -> Self {
        let h = 2.0 * reach / n as f64;
        let mut edges: Vec<f64> = (0..=n).map(|k| -reach + k as f64 * h).collect();
        let mids = (0..n).map(|k| -reach + (k as f64 + 0.5) * h).collect();
        edges[0] = f64::NEG_INFINITY;
        edges[n] = f64::INFINITY;
        Self { edges, mids }
    }

    fn len(&self) -> usize {
        self.mids.len()
    }

    /// `P(value + noise in bin k)` for every `k`.
    fn spread(&self, value: f64, noise: &Law, out: &mut [f64]) {
        let mut prev = noise.cdf(self.edges[0] - value);
        for k in 0..self.len() {
            let next = noise.cdf(self.edges[k + 1] - value);
            out[k] = (next - prev).max(0.0);
            prev = next;
        }
    }
}

/// Discretized `(X, Y, Z_gamma)`.
#[derive(Debug, Clone)]
pub struct QuantizedPair {
    pub gamma: f64,
    pub grid_x: Alphabet,
    pub grid_y: Alphabet,
    pub grid_z: Alphabet,
    pub xy: JointDistribution,
    pub xz: JointDistribution,
    pub yz: JointDistribution,
    /// Continuous variances of `X`, `Y`, `Z` minus their quantized values.
    pub moment_errors: [f64; 3],
    /// Every grid reaches the required coverage.
    pub covered: bool,
}

/// Precomputed `Y` bins and `X | Y` spreads for a model, reused across noise levels.
#[derive(Debug, Clone)]
pub struct Quantizer {
    model: AdditiveModel,
    bins: usize,
    y_mass: Vec<f64>,
    y_rep: Vec<f64>,
    x_bins: Bins,
    /// `x_given_y[i * nx + k] = P(X in bin k | Y = y_rep[i])`.
    x_given_y: Vec<f64>,
}

impl Quantizer {
    pub fn new(model: AdditiveModel, bins: usize) -> Result<Self> {
        if bins < 8 {
            return Err(Error::InvalidArgument("need at least 8 bins".into()));
        }
        if !(model.var_y > 0.0 && model.noise_var >= 0.0) {
            return Err(Error::Config(
                "Y needs positive variance and the noise a non-negative one".into(),
            ));
        }
        let y_law = Law::y(model.y_law, model.var_y);
        let y_bins = Bins::new(y_law.reach(), bins);
        let mut y_mass = Vec::with_capacity(bins);
        let mut y_rep = Vec::with_capacity(bins);
        for k in 0..bins {
            let (a, b) = (y_bins.edges[k], y_bins.edges[k + 1]);
            let mass = y_law.cdf(b) - y_law.cdf(a);
            if mass > 0.0 {
                y_mass.push(mass);
                y_rep.push((y_law.partial_mean(b) - y_law.partial_mean(a)) / mass);
            }
        }
        let total: f64 = y_mass.iter().sum();
        y_mass.iter_mut().for_each(|m| *m /= total);

        let noise = Law::noise(model.noise, model.noise_var);
        let x_reach = COVERAGE_SIGMAS * model.var_x().sqrt();
        let x_bins = Bins::new(x_reach, bins);
        let mut x_given_y = vec![0.0; y_rep.len() * bins];
        for (i, &y) in y_rep.iter().enumerate() {
            x_bins.spread(
                model.coefficient * y,
                &noise,
                &mut x_given_y[i * bins..(i + 1) * bins],
            );
        }
        Ok(Self {
            model,
            bins,
            y_mass,
            y_rep,
            x_bins,
            x_given_y,
        })
    }

    pub fn model(&self) -> &AdditiveModel {
        &self.model
    }

    fn z_given_y(&self, gamma: f64) -> (Vec<f64>, Vec<f64>) {
        let ny = self.y_rep.len();
        if gamma <= 0.0 {
            let mut k = vec![0.0; ny * ny];
            for i in 0..ny {
                k[i * ny + i] = 1.0;
            }
            return (self.y_rep.clone(), k);
        }
        let z_bins = Bins::new(
            COVERAGE_SIGMAS * (self.model.var_y + gamma * gamma).sqrt(),
            self.bins,
        );
        let noise = Law::noise(NoiseLaw::Gaussian, gamma * gamma);
        let nz = z_bins.len();
        let mut k = vec![0.0; ny * nz];
        for (i, &y) in self.y_rep.iter().enumerate() {
            z_bins.spread(y, &noise, &mut k[i * nz..(i + 1) * nz]);
        }
        (z_bins.mids, k)
    }

    /// `P(x, z) = sum_i P(y_i) P(x | y_i) P(z | y_i)` and `P(y, z)`, row-major.
    fn tables(&self, gamma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (z_grid, kz) = self.z_given_y(gamma);
        let (ny, nx, nz) = (self.y_rep.len(), self.bins, z_grid.len());
        let mut pxz = vec![0.0; nx * nz];
        let mut pyz = vec![0.0; ny * nz];
        for i in 0..ny {
            let w = self.y_mass[i];
            let zrow = &kz[i * nz..(i + 1) * nz];
            for (dst, &b) in pyz[i * nz..(i + 1) * nz].iter_mut().zip(zrow) {
                *dst = w * b;
            }
            for x in 0..nx {
                let a = w * self.x_given_y[i * nx + x];
                if a < 1e-300 {
                    continue;
                }
                for (dst, &b) in pxz[x * nz..(x + 1) * nz].iter_mut().zip(zrow) {
                    *dst += a * b;
                }
            }
        }
        (z_grid, pxz, pyz)
    }

    /// `(rho_m^2(X; Z_gamma), mmse(Y | Z_gamma) / var(Y))` on the quantized chain.
    pub fn leakage_and_ensr(&self, gamma: f64) -> (f64, f64) {
        let (z, pxz, pyz) = self.tables(gamma);
        let nz = z.len();
        let leak = crate::dependence::rho_m_sq_from_table(&pxz, self.bins, nz, None);
        let ensr = ensr_from_table(&pyz, &self.y_rep, nz);
        (leak, ensr)
    }

    pub fn at_gamma(&self, gamma: f64) -> Result<QuantizedPair> {
        let (z, pxz, pyz) = self.tables(gamma);
        let grid_x = Alphabet::new(self.x_bins.mids.clone())?;
        let grid_y = Alphabet::new(self.y_rep.clone())?;
        let grid_z = Alphabet::new(z)?;
        let (ny, nx) = (self.y_rep.len(), self.bins);
        let mut pxy = vec![0.0; nx * ny];
        for i in 0..ny {
            for x in 0..nx {
                pxy[x * ny + i] = self.y_mass[i] * self.x_given_y[i * nx + x];
            }
        }
        let xy = JointDistribution::from_flat(grid_x.clone(), grid_y.clone(), pxy)?;
        let xz = JointDistribution::from_flat(grid_x.clone(), grid_z.clone(), pxz)?;
        let yz = JointDistribution::from_flat(grid_y.clone(), grid_z.clone(), pyz)?;
        let m = &self.model;
        let moment_errors = [
            m.var_x() - xy.var_u(),
            m.var_y - xy.var_v(),
            m.var_y + gamma * gamma - yz.var_v(),
        ];
        let reach_ok = |g: &Alphabet, s: f64| {
            g.points()
                .last()
                .is_some_and(|&t| t >= COVERAGE_SIGMAS * s * 0.99)
        };
        let covered = reach_ok(&grid_x, m.var_x().sqrt())
            && (gamma == 0.0 || reach_ok(&grid_z, (m.var_y + gamma * gamma).sqrt()));
        Ok(QuantizedPair {
            gamma,
            grid_x,
            grid_y,
            grid_z,
            xy,
            xz,
            yz,
            moment_errors,
            covered,
        })
    }

    /// Joint of `(X, Y)` alone.
    pub fn joint_xy(&self) -> Result<JointDistribution> {
        Ok(self.at_gamma(0.0)?.xy)
    }

    /// Smallest noise with quantized `rho_m^2(X; Z_gamma) <= eps`, by bisection on
    /// `ln gamma` (the leakage decreases with `gamma`); returns `(gamma, leakage, ensr)`.
    pub fn smallest_feasible_gamma(&self, eps: f64) -> GammaSearch {
        let (leak0, ensr0) = self.leakage_and_ensr(0.0);
        if leak0 <= eps {
            return GammaSearch {
                gamma: 0.0,
                leakage: leak0,
                ensr: ensr0,
                bracketed: true,
            };
        }
        let (mut lo, mut hi) = (-GAMMA_LOG_RANGE, GAMMA_LOG_RANGE);
        let (leak_hi, ensr_hi) = self.leakage_and_ensr(hi.exp());
        if leak_hi > eps {
            return GammaSearch {
                gamma: hi.exp(),
                leakage: leak_hi,
                ensr: ensr_hi,
                bracketed: false,
            };
        }
        let mut best = (leak_hi, ensr_hi);
        for _ in 0..GAMMA_SEARCH_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            let (leak, ensr) = self.leakage_and_ensr(mid.exp());
            if leak <= eps {
                hi = mid;
                best = (leak, ensr);
            } else {
                lo = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        GammaSearch {
            gamma: hi.exp(),
            leakage: best.0,
            ensr: best.1,
            bracketed: true,
        }
    }
}

fn ensr_from_table(pyz: &[f64], y: &[f64], nz: usize) -> f64 {
    let ny = y.len();
    let (mut pz, mut s1) = (vec![0.0; nz], vec![0.0; nz]);
    let my: f64 = (0..ny)
        .map(|i| y[i] * pyz[i * nz..(i + 1) * nz].iter().sum::<f64>())
        .sum();
    let mut var = 0.0;
    for i in 0..ny {
        let c = y[i] - my;
        for z in 0..nz {
            let p = pyz[i * nz + z];
            pz[z] += p;
            s1[z] += p * c;
            var += p * c * c;
        }
    }
    let explained: f64 = (0..nz)
        .filter(|&z| pz[z] > 0.0)
        .map(|z| s1[z] * s1[z] / pz[z])
        .sum();
    ((var - explained) / var).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaSearch {
    pub gamma: f64,
    pub leakage: f64,
    pub ensr: f64,
    /// The budget was met somewhere in the searched range.
    pub bracketed: bool,
}

/// Quantized `(X, Y, Z)` for a model at noise level `gamma`.
pub fn quantize(model: &AdditiveModel, gamma: f64, bins: usize) -> Result<QuantizedPair> {
    if gamma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise scale {gamma} must be non-negative"
        )));
    }
    Quantizer::new(*model, bins)?.at_gamma(gamma)
}

#[derive(Debug, Clone, Serialize)]
pub struct AdditiveGaussianRow {
    pub eps: f64,
    pub closed_form: f64,
    pub gamma_closed: NoiseLevel,
    pub gamma_numeric: f64,
    pub numeric: f64,
    /// Numeric value at half the bin count minus the full-resolution value.
    pub resolution_bias: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityCheck {
    pub gammas: Vec<f64>,
    pub leakage: Vec<f64>,
    pub mmse: Vec<f64>,
    /// Largest increase of the leakage along increasing `gamma`.
    pub leakage_increase: f64,
    /// Largest decrease of the mmse along increasing `gamma`.
    pub mmse_decrease: f64,
    /// Largest gap between quantized and closed-form `mmse(Y|Z)`.
    pub mmse_formula_gap: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdditiveGaussianReport {
    pub pair: GaussianPair,
    pub bins: usize,
    pub rows: Vec<AdditiveGaussianRow>,
    pub monotonicity: MonotonicityCheck,
    pub passed: bool,
}

/// Quantized check that the additive Gaussian filter attains `1 - eps / rho^2` on a
/// Gaussian pair, plus monotonicity of leakage and mmse in the noise level.
pub fn verify_additive_gaussian(
    gp: &GaussianPair,
    eps_grid: &[f64],
    bins: usize,
) -> Result<AdditiveGaussianReport> {
    let q = Quantizer::new(gp.model(), bins)?;
    let coarse = Quantizer::new(gp.model(), bins / 2)?;
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        if eps < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "privacy budget {eps} must be non-negative"
            )));
        }
        let closed_form = m_eps_gaussian(gp, eps);
        let fine = q.smallest_feasible_gamma(eps);
        let rough = coarse.smallest_feasible_gamma(eps);
        rows.push(AdditiveGaussianRow {
            eps,
            closed_form,
            gamma_closed: gamma_eps(gp, eps),
            gamma_numeric: fine.gamma,
            numeric: fine.ensr,
            resolution_bias: rough.ensr - fine.ensr,
            within_tolerance: (fine.ensr - closed_form).abs() <= NUMERIC_TOLERANCE,
        });
    }
    let monotonicity = monotonicity_check(&q, gp.var_y);
    let passed = rows.iter().all(|r| r.within_tolerance) && monotonicity.passed;
    Ok(AdditiveGaussianReport {
        pair: *gp,
        bins,
        rows,
        monotonicity,
        passed,
    })
}

/// Leakage and mmse on 20 log-spaced noise levels in `[e^-2, e^2]`.
fn monotonicity_check(q: &Quantizer, var_y: f64) -> MonotonicityCheck {
    const TOL: f64 = 1e-3;
    let gammas: Vec<f64> = (0..20)
        .map(|i| (-2.0 + 4.0 * i as f64 / 19.0).exp())
        .collect();
    let (leakage, ensr): (Vec<f64>, Vec<f64>) =
        gammas.iter().map(|&g| q.leakage_and_ensr(g)).unzip();
    let mmse: Vec<f64> = ensr.iter().map(|e| e * var_y).collect();
    let leakage_increase = leakage.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let mmse_decrease = mmse.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let mmse_formula_gap = if q.model().y_law == YLaw::Gaussian {
        gammas
            .iter()
            .zip(&mmse)
            .map(|(&g, &m)| (m - var_y * g * g / (var_y + g * g)).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    MonotonicityCheck {
        passed: leakage_increase <= TOL && mmse_decrease <= TOL && mmse_formula_gap <= TOL,
        gammas,
        leakage,
        mmse,
        leakage_increase,
        mmse_decrease,
        mmse_formula_gap,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichRow {
    pub eps: f64,
    pub lower: f64,
    pub upper: f64,
    pub numeric: f64,
    /// `eps (1/rho^2 - 1/rho_m^2)`: how far the value can sit below the Gaussian one.
    pub gap_bound: f64,
    pub gamma: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussianYSandwichReport {
    pub model: AdditiveModel,
    pub bins: usize,
    /// Pearson `rho^2(X; Y)` of the quantized joint.
    pub rho_sq: f64,
    /// `rho_m^2(X; Y)` of the quantized joint.
    pub rho_m_sq: f64,
    pub rows: Vec<SandwichRow>,
    pub passed: bool,
}

/// `X = a Y_G + Laplace(scale)` with Gaussian `Y`.
pub fn laplace_source(var_y: f64, coefficient: f64, scale: f64) -> AdditiveModel {
    AdditiveModel {
        y_law: YLaw::Gaussian,
        var_y,
        coefficient,
        noise: NoiseLaw::Laplace,
        noise_var: 2.0 * scale * scale,
    }
}

/// Checks `1 - eps/rho^2 <= M_eps <= 1 - eps/rho_m^2` for Gaussian `Y` and an arbitrary
/// `X`, with `M_eps` estimated over additive Gaussian filters on the quantized chain.
pub fn verify_gaussian_y_sandwich(
    model: &AdditiveModel,
    eps_grid: &[f64],
    bins: usize,
) -> Result<GaussianYSandwichReport> {
    if model.y_law != YLaw::Gaussian {
        return Err(Error::UnsupportedScope(
            "the sandwich needs Gaussian Y".into(),
        ));
    }
    let q = Quantizer::new(*model, bins)?;
    let xy = q.joint_xy()?;
    let (rho_sq, rho_m_sq) = pearson_and_maximal(&xy)?;
    let rows = eps_grid
        .iter()
        .map(|&eps| {
            if eps < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "privacy budget {eps} must be non-negative"
                )));
            }
            let e = eps.min(rho_m_sq);
            let lower = (1.0 - e / rho_sq).max(0.0);
            let upper = 1.0 - e / rho_m_sq;
            let s = q.smallest_feasible_gamma(e);
            Ok(SandwichRow {
                eps,
                lower,
                upper,
                numeric: s.ensr,
                gap_bound: e * (1.0 / rho_sq - 1.0 / rho_m_sq),
                gamma: s.gamma,
                holds: s.bracketed && s.ensr >= lower - 1e-9 && s.ensr <= upper + NUMERIC_TOLERANCE,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = rows.iter().all(|r| r.holds);
    Ok(GaussianYSandwichReport {
        model: *model,
        bins,
        rho_sq,
        rho_m_sq,
        rows,
        passed,
    })
}

fn pearson_and_maximal(xy: &JointDistribution) -> Result<(f64, f64)> {
    let (px, py) = xy.marginals();
    let (x, y) = (xy.alphabet_u().points(), xy.alphabet_v().points());
    let (mx, my) = (crate::prob::mean(&px, x), crate::prob::mean(&py, y));
    let mut cov = 0.0;
    for i in 0..x.len() {
        for j in 0..y.len() {
            cov += xy.get(i, j) * (x[i] - mx) * (y[j] - my);
        }
    }
    let (vx, vy) = (xy.var_u(), xy.var_v());
    if !(vx > 0.0 && vy > 0.0) || !vx.is_finite() {
        return Err(Error::Config("quantized variances are degenerate".into()));
    }
    let rho_sq = cov * cov / (vx * vy);
    if rho_sq < 1e-12 {
        return Err(Error::UnsupportedScope(
            "X and Y are uncorrelated: no positive budget is meaningful".into(),
        ));
    }
    Ok((rho_sq, maximal_correlation_sq(xy)))
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstCaseRow {
    pub y_law: YLaw,
    pub eps: f64,
    pub rho_m_sq: f64,
    /// `1 - eps / rho_m^2(X;Y)`, the jointly Gaussian value at the same maximal correlation.
    pub gaussian_value: f64,
    /// Best ENSR over additive Gaussian noise filters meeting the budget.
    pub numeric: f64,
    pub holds: bool,
}

/// For non-Gaussian `Y` (Laplace, uniform) with `X = Y + ` Gaussian noise at the given
/// correlation, compares the best additive Gaussian filter against the Gaussian value
/// `1 - eps / rho_m^2(X;Y)` at matched maximal correlation.
pub fn verify_gaussian_worst_case(
    rho: f64,
    eps_grid: &[f64],
    bins: usize,
) -> Result<Vec<WorstCaseRow>> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "correlation {rho} must lie in (0,1)"
        )));
    }
    let mut rows = Vec::new();
    for law in [YLaw::Laplace, YLaw::Uniform] {
        let model = AdditiveModel {
            y_law: law,
            var_y: 1.0,
            coefficient: 1.0,
            noise: NoiseLaw::Gaussian,
            noise_var: 1.0 / (rho * rho) - 1.0,
        };
        let q = Quantizer::new(model, bins)?;
        let rho_m_sq = maximal_correlation_sq(&q.joint_xy()?);
        for &eps in eps_grid {
            let e = eps.clamp(0.0, rho_m_sq);
            let gaussian_value = 1.0 - e / rho_m_sq;
            let numeric = q.smallest_feasible_gamma(e).ensr;
            rows.push(WorstCaseRow {
                y_law: law,
                eps,
                rho_m_sq,
                gaussian_value,
                numeric,
                holds: numeric <= gaussian_value + NUMERIC_TOLERANCE,
            });
        }
    }
    Ok(rows)
}

/// JSON description of a continuous source for the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GaussianSpec {
    Pair {
        rho: f64,
        #[serde(default = "one")]
        var_y: f64,
        #[serde(default = "one")]
        var_x: f64,
    },
    LaplaceMix {
        y: SourceY,
        x: SourceX,
        scale: f64,
        #[serde(default = "one")]
        var_y: f64,
        #[serde(default = "one")]
        coefficient: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceY {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceX {
    YPlusLaplace,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub eps: f64,
    /// Known only for jointly Gaussian pairs.
    pub closed_form: Option<f64>,
    pub gamma_closed: Option<NoiseLevel>,
    /// Smallest feasible noise level on the quantized chain.
    pub gamma_numeric: f64,
    pub numeric: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Closed form, quantized numeric value and bounds at each budget.
pub fn gaussian_curve(spec: &GaussianSpec, eps_grid: &[f64], bins: usize) -> Result<Vec<CurveRow>> {
    match *spec {
        GaussianSpec::Pair { rho, var_y, var_x } => {
            let gp = GaussianPair::new(var_x, var_y, rho)?;
            let q = Quantizer::new(gp.model(), bins)?;
            Ok(eps_grid
                .iter()
                .map(|&eps| {
                    let c = m_eps_gaussian(&gp, eps);
                    let r2 = rho * rho;
                    let s = q.smallest_feasible_gamma(eps.clamp(0.0, r2));
                    CurveRow {
                        eps,
                        closed_form: Some(c),
                        gamma_closed: Some(gamma_eps(&gp, eps)),
                        gamma_numeric: s.gamma,
                        numeric: s.ensr,
                        lower: c,
                        upper: c,
                    }
                })
                .collect())
        }
        GaussianSpec::LaplaceMix {
            scale,
            var_y,
            coefficient,
            ..
        } => {
            let r = verify_gaussian_y_sandwich(
                &laplace_source(var_y, coefficient, scale),
                eps_grid,
                bins,
            )?;
            Ok(r.rows
                .into_iter()
                .map(|row| CurveRow {
                    eps: row.eps,
                    closed_form: None,
                    gamma_closed: None,
                    gamma_numeric: row.gamma,
                    numeric: row.numeric,
                    lower: row.lower,
                    upper: row.upper,
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pair() -> GaussianPair {
        GaussianPair::new(1.0, 1.0, 0.8).unwrap()
    }

    #[test]
    fn gamma_examples() {
        match gamma_eps(&pair(), 0.16) {
            NoiseLevel::Finite { gamma_sq, .. } => {
                assert_abs_diff_eq!(gamma_sq, 3.0, epsilon = 1e-12)
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            gamma_eps(&pair(), 0.64),
            NoiseLevel::Finite {
                gamma: 0.0,
                gamma_sq: 0.0
            }
        );
        assert_eq!(gamma_eps(&pair(), 0.0), NoiseLevel::Infinite);
        let gp = GaussianPair::new(1.0, 4.0, 0.5).unwrap();
        match gamma_eps(&gp, 0.05) {
            NoiseLevel::Finite { gamma_sq, .. } => {
                assert_abs_diff_eq!(gamma_sq, 16.0, epsilon = 1e-12)
            }
            other => panic!("{other:?}"),
        }
        // Back-substitution.
        assert_abs_diff_eq!(pair().leakage(3f64.sqrt()), 0.16, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(m_eps_gaussian(&pair(), 0.0), 1.0);
        assert_abs_diff_eq!(m_eps_gaussian(&pair(), 0.64), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m_eps_gaussian(&pair(), 0.16), 0.75, epsilon = 1e-15);
        assert!(m_eps_gaussian(&pair(), 1e-9) > 1.0 - 1e-8);
        // The optimal noise gives ENSR = gamma^2 / (1 + gamma^2) = 1 - eps / rho^2.
        let g = 3f64.sqrt();
        assert_abs_diff_eq!(pair().mmse(g) / pair().var_y, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn law_moments() {
        for law in [YLaw::Gaussian, YLaw::Laplace, YLaw::Uniform] {
            let l = Law::y(law, 2.0);
            assert_abs_diff_eq!(l.cdf(0.0), 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(l.partial_mean(f64::INFINITY), 0.0, epsilon = 1e-15);
            assert!(l.partial_mean(0.0) < 0.0);
        }
    }

    #[test]
    fn zero_noise_reproduces_y() {
        let q = quantize(&pair().model(), 0.0, DEFAULT_BINS).unwrap();
        assert!(q.covered);
        assert!(
            q.moment_errors.iter().all(|e| e.abs() < 1e-3),
            "{:?}",
            q.moment_errors
        );
        assert_abs_diff_eq!(q.yz.mmse(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.yz.var_v(), q.xy.var_v(), epsilon = 1e-12);
    }

    #[test]
    fn large_noise_decouples() {
        let q = quantize(&pair().model(), 50.0, DEFAULT_BINS).unwrap();
        assert!(q.yz.correlation_ratio_sq().unwrap() < 1e-3);
    }

    #[test]
    fn quantized_leakage_matches_formula() {
        let q = quantize(&pair().model(), 3f64.sqrt(), DEFAULT_BINS).unwrap();
        let r = maximal_correlation_sq(&q.xz);
        assert!((r - 0.16).abs() < 0.01, "{r}");
        assert!(
            q.moment_errors.iter().all(|e| e.abs() < 1e-3),
            "{:?}",
            q.moment_errors
        );
    }

    #[test]
    fn laplace_reference_correlation() {
        let m = laplace_source(1.0, 1.0, 1.0);
        assert_abs_diff_eq!(m.rho() * m.rho(), 1.0 / 3.0, epsilon = 1e-12);
        let z = laplace_source(1.0, 0.0, 1.0);
        assert!(matches!(
            verify_gaussian_y_sandwich(&z, &[0.1], 64),
            Err(Error::UnsupportedScope(_))
        ));
    }

    #[test]
    fn json_forms() {
        let a: GaussianSpec = serde_json::from_str(r#"{"rho":0.8,"var_y":1.0}"#).unwrap();
        assert!(matches!(a, GaussianSpec::Pair { .. }));
        let b: GaussianSpec =
            serde_json::from_str(r#"{"y":"gaussian","x":"y_plus_laplace","scale":1.0}"#).unwrap();
        assert!(matches!(b, GaussianSpec::LaplaceMix { .. }));
    }
}
