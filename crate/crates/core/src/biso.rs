//! Binary-input symmetric-output (BISO) sources.
//!
//! `Y ~ Ber(p)` on `{0, 1}` and `P(x|1) = P(-x|0)` for every output `x`. A zero
//! output is split into two labels carrying half of its mass each, so the
//! support has even size; both labels keep the numeric value 0, which leaves
//! every moment unchanged.
//!
//! With `m = E[X|Y=1]`, symmetry gives `E[X|Y=0] = -m` and
//! `var(E[X|Y]) = 4 p (1-p) m^2`, from which the closed forms below follow.

use serde::{Deserialize, Serialize};

use crate::dependence::maximal_correlation;
use crate::error::{Error, Result};
use crate::prob::{self, Alphabet, Channel, JointDistribution};

pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BisoChannel {
    k: usize,
    p: f64,
    /// Output values in increasing order; a split zero appears twice.
    x_values: Vec<f64>,
    /// `trans[y][i] = P(x_values[i] | Y = y)`.
    trans: [Vec<f64>; 2],
}

impl BisoChannel {
    /// Builds a BISO source from `P_{X|Y}` rows for `y = 0, 1` over `x_values`
    /// (any order, must be closed under negation).
    pub fn new(p: f64, x_values: &[f64], trans: [Vec<f64>; 2]) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "P(Y=1) = {p} must lie in (0,1)"
            )));
        }
        if trans[0].len() != x_values.len() || trans[1].len() != x_values.len() {
            return Err(Error::DimensionMismatch(
                "transition rows must match the output alphabet".into(),
            ));
        }
        // Validates values and rows as a channel before any symmetry reasoning.
        let alphabet = Alphabet::new({
            let mut v = x_values.to_vec();
            v.sort_by(f64::total_cmp);
            v
        })?;
        let mut order: Vec<usize> = (0..x_values.len()).collect();
        order.sort_by(|&a, &b| x_values[a].total_cmp(&x_values[b]));
        let sorted_rows: Vec<Vec<f64>> = trans
            .iter()
            .map(|r| order.iter().map(|&i| r[i]).collect())
            .collect();
        let checked = Channel::new(Alphabet::binary(), alphabet.clone(), sorted_rows)?;

        let mut values = Vec::with_capacity(x_values.len() + 1);
        let mut rows = [Vec::new(), Vec::new()];
        for (i, &x) in alphabet.points().iter().enumerate() {
            let copies = if x == 0.0 { 2 } else { 1 };
            for _ in 0..copies {
                values.push(x);
                for y in 0..2 {
                    rows[y].push(checked.get(y, i) / copies as f64);
                }
            }
        }
        let n = values.len();
        for i in 0..n {
            let j = n - 1 - i;
            if values[j] != -values[i] {
                return Err(Error::NotBiso(format!(
                    "output alphabet is not symmetric: {} has no mirror",
                    values[i]
                )));
            }
            if (rows[1][i] - rows[0][j]).abs() > SYMMETRY_TOLERANCE {
                return Err(Error::NotBiso(format!(
                    "P({}|1) = {} but P({}|0) = {}",
                    values[i], rows[1][i], values[j], rows[0][j]
                )));
            }
        }
        // Enforce the symmetry exactly.
        for i in 0..n {
            rows[1][i] = rows[0][n - 1 - i];
        }
        Ok(Self {
            k: n / 2,
            p,
            x_values: values,
            trans: rows,
        })
    }

    /// BSC(`alpha`) onto `{-1, +1}`.
    pub fn bsc(p: f64, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!(
                "crossover {alpha} outside [0,1]"
            )));
        }
        Self::new(
            p,
            &[-1.0, 1.0],
            [vec![1.0 - alpha, alpha], vec![alpha, 1.0 - alpha]],
        )
    }

    /// BEC(`delta`) onto `{-1, 0, +1}`, the erasure being 0.
    pub fn bec(p: f64, delta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidArgument(format!(
                "erasure probability {delta} outside [0,1]"
            )));
        }
        Self::new(
            p,
            &[-1.0, 0.0, 1.0],
            [vec![1.0 - delta, delta, 0.0], vec![0.0, delta, 1.0 - delta]],
        )
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn x_values(&self) -> &[f64] {
        &self.x_values
    }

    pub fn trans(&self) -> &[Vec<f64>; 2] {
        &self.trans
    }

    /// Joint of `(X, Y)` (rows `X`, columns `Y` in `{0, 1}`); the twin zero labels
    /// share a value and are merged, which changes no moment or correlation.
    pub fn joint(&self) -> JointDistribution {
        let mut values: Vec<f64> = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, &x) in self.x_values.iter().enumerate() {
            let mass = [(1.0 - self.p) * self.trans[0][i], self.p * self.trans[1][i]];
            if values.last() == Some(&x) {
                let r = rows.last_mut().expect("row exists for repeated value");
                r[0] += mass[0];
                r[1] += mass[1];
            } else {
                values.push(x);
                rows.push(mass.to_vec());
            }
        }
        JointDistribution::new(
            Alphabet::new(values).expect("values are increasing"),
            Alphabet::binary(),
            rows,
        )
        .expect("BISO joint is a valid pmf")
    }

    pub fn report(&self) -> BisoReport {
        let m = prob::mean(&self.trans[1], &self.x_values);
        let var_x_given_y1 = prob::variance(&self.trans[1], &self.x_values);
        let joint = self.joint();
        BisoReport {
            ex_given_y1: m,
            ex_given_y0: prob::mean(&self.trans[0], &self.x_values),
            var_x: joint.var_u(),
            var_y: self.p * (1.0 - self.p),
            var_x_given_y1,
            rho_m_sq: maximal_correlation(&joint).rho_m_sq(),
        }
    }

    fn linear_gain(&self) -> Result<(BisoReport, f64)> {
        let r = self.report();
        let g = 4.0 * r.ex_given_y1 * r.ex_given_y1;
        if g <= 0.0 {
            return Err(Error::Degenerate(
                "E[X|Y=1] = 0: X carries no linear information about Y".into(),
            ));
        }
        Ok((r, g))
    }

    /// Relabels `Y -> 1 - Y` (and `X -> -X`), turning `P(Y=1) = p` into `1 - p`.
    pub fn relabeled(&self) -> Self {
        let n = self.x_values.len();
        let rev = |r: &Vec<f64>| -> Vec<f64> { (0..n).map(|i| r[n - 1 - i]).collect() };
        Self {
            k: self.k,
            p: 1.0 - self.p,
            x_values: self.x_values.clone(),
            trans: [rev(&self.trans[1]), rev(&self.trans[0])],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BisoReport {
    pub ex_given_y1: f64,
    pub ex_given_y0: f64,
    pub var_x: f64,
    /// `p (1 - p)`.
    pub var_y: f64,
    pub var_x_given_y1: f64,
    pub rho_m_sq: f64,
}

impl BisoReport {
    /// `var(E[X|Y]) = var(X) - var(X|Y=1)`.
    pub fn var_cond_mean(&self) -> f64 {
        self.var_x - self.var_x_given_y1
    }

    /// `eta_Y^2(X) = 4 var(Y) m^2 / var(X)`.
    pub fn eta_sq(&self) -> f64 {
        4.0 * self.var_y * self.ex_given_y1 * self.ex_given_y1 / self.var_x
    }
}

/// A closed-form value clamped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Clamped {
    pub value: f64,
    /// The unclamped formula left `[0, 1]`.
    pub clamped: bool,
}

impl Clamped {
    fn new(raw: f64) -> Self {
        let value = raw.clamp(0.0, 1.0);
        Self {
            value,
            clamped: value != raw,
        }
    }
}

fn budget(b: &BisoChannel, eps: f64) -> Result<f64> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "privacy budget {eps} must be a non-negative number"
        )));
    }
    let cap = b.report().rho_m_sq;
    if eps > cap * (1.0 + 1e-9) + 1e-12 {
        log::warn!("budget {eps} exceeds rho_m^2(X;Y) = {cap}; clamped");
    }
    Ok(eps.min(cap))
}

/// `W_eps = 1 - eps var(X) / (4 var(Y) E^2[X|Y=1])`.
pub fn w_eps_closed(b: &BisoChannel, eps: f64) -> Result<Clamped> {
    let eps = budget(b, eps)?;
    let (r, g) = b.linear_gain()?;
    Ok(Clamped::new(1.0 - eps * r.var_x / (g * r.var_y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// `W_eps <= M_eps <= 1 - eps / rho_m^2(X;Y)`.
pub fn m_eps_bounds(b: &BisoChannel, eps: f64) -> Result<Interval> {
    let lower = w_eps_closed(b, eps)?.value;
    let eps = budget(b, eps)?;
    let rho = b.report().rho_m_sq;
    Ok(Interval {
        lower,
        upper: (1.0 - eps / rho).clamp(0.0, 1.0),
    })
}

/// Both sides of `mmse(Y|Z) = (mmse(X|Z) - var(X|Y=1)) / (4 E^2[X|Y=1])`, which
/// holds for every filter `Z` of `Y`.
pub fn mmse_linear_relation(b: &BisoChannel, filter: &Channel) -> Result<(f64, f64)> {
    let (r, g) = b.linear_gain()?;
    let joint = b.joint();
    let lhs = JointDistribution::from_input_and_channel(&joint.marginal_v(), filter)?.mmse();
    let mmse_x = joint.compose(filter)?.mmse();
    Ok((lhs, (mmse_x - r.var_x_given_y1) / g))
}

/// Bracket on the smallest MAP error of `Y` under weak privacy:
/// `[var(Y) W_eps, min(2 var(Y) W_eps, 1 - p)]`. Needs `p >= 1/2`.
pub fn p_error_bounds(b: &BisoChannel, eps: f64) -> Result<Interval> {
    if b.p() < 0.5 {
        return Err(Error::UnsupportedScope(format!(
            "error bounds need P(Y=1) >= 1/2, got {}; relabel first",
            b.p()
        )));
    }
    let w = w_eps_closed(b, eps)?.value;
    let var_y = b.p() * (1.0 - b.p());
    Ok(Interval {
        lower: var_y * w,
        upper: (2.0 * var_y * w).min(1.0 - b.p()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialEfficiency {
    /// Slope at 0 of `eps -> var(Y) - mmse(Y|Z)` along optimal weak filters.
    pub f_prime_0: f64,
    /// `sup (var(Y) - mmse(Y|Z)) / (var(X) - mmse(X|Z))`.
    pub max_ratio: f64,
}

pub fn initial_efficiency(b: &BisoChannel) -> Result<InitialEfficiency> {
    let (r, g) = b.linear_gain()?;
    Ok(InitialEfficiency {
        f_prime_0: r.var_x / g,
        max_ratio: 1.0 / g,
    })
}

fn half() -> f64 {
    0.5
}

/// JSON description of a BISO source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BisoSpec {
    Bsc {
        #[serde(default = "half")]
        p: f64,
        alpha: f64,
    },
    Bec {
        #[serde(default = "half")]
        p: f64,
        delta: f64,
    },
    Custom {
        #[serde(default = "half")]
        p: f64,
        x_values: Vec<f64>,
        trans: [Vec<f64>; 2],
    },
}

impl BisoSpec {
    pub fn build(&self) -> Result<BisoChannel> {
        match self {
            BisoSpec::Bsc { p, alpha } => BisoChannel::bsc(*p, *alpha),
            BisoSpec::Bec { p, delta } => BisoChannel::bec(*p, *delta),
            BisoSpec::Custom { p, x_values, trans } => {
                BisoChannel::new(*p, x_values, trans.clone())
            }
        }
    }
}
