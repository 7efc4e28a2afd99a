//! Finite-alphabet probability machinery.
//!
//! Everything here is exact arithmetic on small dense tables: joint pmfs over
//! two real-valued alphabets, row-stochastic channels, Markov composition
//! `U - V - W`, and the second-order quantities built on top of them
//! (conditional moments, MMSE, correlation ratio).
//!
//! Matrices are stored row-major. For a [`JointDistribution`] the row index is
//! the first variable `U` and the column index the conditioning variable `V`,
//! so `mmse()` is `mmse(U|V)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating that a pmf or a channel row sums to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Entries this far below zero are treated as rounding noise and clamped.
const NEGATIVE_SLACK: f64 = 1e-15;

/// Ordered, duplicate-free set of real support points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Alphabet {
    points: Vec<f64>,
}

impl Alphabet {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidAlphabet(
                "alphabet must contain at least one point".into(),
            ));
        }
        if let Some(bad) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidAlphabet(format!("non-finite point {bad}")));
        }
        if let Some(w) = points.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidAlphabet(format!(
                "points must be strictly increasing, found {} before {}",
                w[0], w[1]
            )));
        }
        Ok(Self { points })
    }

    /// The alphabet `{0, 1, ..., n-1}`; used for outputs whose numeric values never matter.
    pub fn indices(n: usize) -> Self {
        assert!(n > 0, "index alphabet must be non-empty");
        Self {
            points: (0..n).map(|i| i as f64).collect(),
        }
    }

    pub fn binary() -> Self {
        Self::indices(2)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn position(&self, value: f64) -> Option<usize> {
        self.points.iter().position(|&p| p == value)
    }
}

impl TryFrom<Vec<f64>> for Alphabet {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Alphabet::new(points)
    }
}

impl From<Alphabet> for Vec<f64> {
    fn from(a: Alphabet) -> Self {
        a.points
    }
}

/// Checks entries and total mass, then renormalizes once.
fn validate_mass(values: &mut [f64], what: &str) -> Result<()> {
    let mut total = 0.0;
    for v in values.iter_mut() {
        if !v.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "{what} has a non-finite entry"
            )));
        }
        if *v < 0.0 {
            if *v < -NEGATIVE_SLACK {
                return Err(Error::InvalidDistribution(format!(
                    "{what} has negative entry {v}"
                )));
            }
            *v = 0.0;
        }
        total += *v;
    }
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "{what} sums to {total}, expected 1"
        )));
    }
    values.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

/// Mean of `values` under `pmf`.
pub fn mean(pmf: &[f64], values: &[f64]) -> f64 {
    pmf.iter().zip(values).map(|(p, x)| p * x).sum()
}

/// Variance of `values` under `pmf`, computed around the mean for stability.
pub fn variance(pmf: &[f64], values: &[f64]) -> f64 {
    let m = mean(pmf, values);
    pmf.iter()
        .zip(values)
        .map(|(p, x)| p * (x - m) * (x - m))
        .sum()
}

/// Conditional first and second moments of `U` given each value of `V`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalStats {
    pub cond_mean: Vec<f64>,
    pub cond_var: Vec<f64>,
    pub marginal_v: Vec<f64>,
    /// `false` where `P(v) = 0`; the mean and variance there are reported as 0.
    pub defined: Vec<bool>,
}

impl ConditionalStats {
    /// `E[var(U|V)]`.
    pub fn expected_cond_var(&self) -> f64 {
        self.marginal_v
            .iter()
            .zip(&self.cond_var)
            .map(|(p, v)| p * v)
            .sum()
    }

    /// `var(E[U|V])`.
    pub fn var_of_cond_mean(&self) -> f64 {
        variance(&self.marginal_v, &self.cond_mean)
    }
}

/// Joint pmf of `(U, V)` over two real alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    alphabet_u: Alphabet,
    alphabet_v: Alphabet,
    p: Vec<f64>,
}

impl JointDistribution {
    pub fn new(alphabet_u: Alphabet, alphabet_v: Alphabet, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != alphabet_u.len() {
            return Err(Error::DimensionMismatch(format!(
                "pmf has {} rows but the row alphabet has {} points",
                rows.len(),
                alphabet_u.len()
            )));
        }
        let cols = alphabet_v.len();
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch(format!(
                "pmf row of length {} but the column alphabet has {cols} points",
                r.len()
            )));
        }
        Self::from_flat(alphabet_u, alphabet_v, rows.concat())
    }

    /// Builds from a row-major table of `|U| * |V|` entries.
    pub fn from_flat(alphabet_u: Alphabet, alphabet_v: Alphabet, mut p: Vec<f64>) -> Result<Self> {
        if p.len() != alphabet_u.len() * alphabet_v.len() {
            return Err(Error::DimensionMismatch(format!(
                "pmf has {} entries, expected {}x{}",
                p.len(),
                alphabet_u.len(),
                alphabet_v.len()
            )));
        }
        validate_mass(&mut p, "joint pmf")?;
        Ok(Self {
            alphabet_u,
            alphabet_v,
            p,
        })
    }

    /// Joint of a channel's input and output: `P(v, w) = pmf[v] * k[v][w]`.
    pub fn from_input_and_channel(pmf: &[f64], channel: &Channel) -> Result<Self> {
        if pmf.len() != channel.n_inputs() {
            return Err(Error::DimensionMismatch(format!(
                "input pmf has {} entries but the channel has {} inputs",
                pmf.len(),
                channel.n_inputs()
            )));
        }
        let n_out = channel.n_outputs();
        let mut p = Vec::with_capacity(pmf.len() * n_out);
        for (y, &py) in pmf.iter().enumerate() {
            p.extend(channel.row(y).iter().map(|k| py * k));
        }
        Self::from_flat(channel.input().clone(), channel.output().clone(), p)
    }

    /// Product distribution `P(u) P(v)`.
    pub fn independent(
        alphabet_u: Alphabet,
        pmf_u: &[f64],
        alphabet_v: Alphabet,
        pmf_v: &[f64],
    ) -> Result<Self> {
        let p = pmf_u
            .iter()
            .flat_map(|a| pmf_v.iter().map(move |b| a * b))
            .collect();
        Self::from_flat(alphabet_u, alphabet_v, p)
    }

    /// Diagonal joint with `U = V` distributed as `pmf`.
    pub fn diagonal(alphabet: Alphabet, pmf: &[f64]) -> Result<Self> {
        let n = alphabet.len();
        let mut p = vec![0.0; n * n];
        for (i, &pi) in pmf.iter().enumerate().take(n) {
            p[i * n + i] = pi;
        }
        Self::from_flat(alphabet.clone(), alphabet, p)
    }

    pub fn alphabet_u(&self) -> &Alphabet {
        &self.alphabet_u
    }

    pub fn alphabet_v(&self) -> &Alphabet {
        &self.alphabet_v
    }

    pub fn n_u(&self) -> usize {
        self.alphabet_u.len()
    }

    pub fn n_v(&self) -> usize {
        self.alphabet_v.len()
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.p[u * self.n_v() + v]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        let n = self.n_v();
        &self.p[u * n..(u + 1) * n]
    }

    /// Row-major probability table.
    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.p.chunks(self.n_v()).map(<[f64]>::to_vec).collect()
    }

    pub fn marginal_u(&self) -> Vec<f64> {
        self.p.chunks(self.n_v()).map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_v(&self) -> Vec<f64> {
        let n = self.n_v();
        let mut m = vec![0.0; n];
        for row in self.p.chunks(n) {
            for (acc, x) in m.iter_mut().zip(row) {
                *acc += x;
            }
        }
        m
    }

    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        (self.marginal_u(), self.marginal_v())
    }

    pub fn transpose(&self) -> JointDistribution {
        let (nu, nv) = (self.n_u(), self.n_v());
        let mut p = vec![0.0; nu * nv];
        for u in 0..nu {
            for v in 0..nv {
                p[v * nu + u] = self.p[u * nv + v];
            }
        }
        JointDistribution {
            alphabet_u: self.alphabet_v.clone(),
            alphabet_v: self.alphabet_u.clone(),
            p,
        }
    }

    pub fn mean_u(&self) -> f64 {
        mean(&self.marginal_u(), self.alphabet_u.points())
    }

    pub fn var_u(&self) -> f64 {
        variance(&self.marginal_u(), self.alphabet_u.points())
    }

    pub fn var_v(&self) -> f64 {
        variance(&self.marginal_v(), self.alphabet_v.points())
    }

    /// Joint of `(U, W)` for the Markov chain `U - V - W` with `W` drawn from `filter` given `V`.
    pub fn compose(&self, filter: &Channel) -> Result<JointDistribution> {
        if filter.input() != &self.alphabet_v {
            return Err(Error::DimensionMismatch(format!(
                "filter input alphabet {:?} does not match the conditioning alphabet {:?}",
                filter.input().points(),
                self.alphabet_v.points()
            )));
        }
        let (nu, nv, nw) = (self.n_u(), self.n_v(), filter.n_outputs());
        let mut p = vec![0.0; nu * nw];
        for u in 0..nu {
            let out = &mut p[u * nw..(u + 1) * nw];
            for v in 0..nv {
                let puv = self.p[u * nv + v];
                if puv == 0.0 {
                    continue;
                }
                for (acc, k) in out.iter_mut().zip(filter.row(v)) {
                    *acc += puv * k;
                }
            }
        }
        JointDistribution::from_flat(self.alphabet_u.clone(), filter.output().clone(), p)
    }

    /// Conditional mean and variance of `f(U)` for every `v`; `f` is given by its values on the U alphabet.
    pub fn conditional_stats_of(&self, f: &[f64]) -> ConditionalStats {
        assert_eq!(
            f.len(),
            self.n_u(),
            "function must have one value per U symbol"
        );
        let (nu, nv) = (self.n_u(), self.n_v());
        let marginal_v = self.marginal_v();
        // Center first so the conditional variances do not suffer cancellation.
        let m = mean(&self.marginal_u(), f);
        let mut cond_mean = vec![0.0; nv];
        let mut cond_var = vec![0.0; nv];
        let mut defined = vec![false; nv];
        for v in 0..nv {
            let pv = marginal_v[v];
            if pv <= 0.0 {
                continue;
            }
            defined[v] = true;
            let (mut s1, mut s2) = (0.0, 0.0);
            for u in 0..nu {
                let w = self.p[u * nv + v] / pv;
                let c = f[u] - m;
                s1 += w * c;
                s2 += w * c * c;
            }
            cond_mean[v] = s1 + m;
            cond_var[v] = (s2 - s1 * s1).max(0.0);
        }
        ConditionalStats {
            cond_mean,
            cond_var,
            marginal_v,
            defined,
        }
    }

    pub fn conditional_stats(&self) -> ConditionalStats {
        self.conditional_stats_of(self.alphabet_u.points())
    }

    /// `mmse(U|V) = E[var(U|V)]`.
    pub fn mmse(&self) -> f64 {
        self.conditional_stats().expected_cond_var()
    }

    /// `mmse(f(U)|V)`.
    pub fn mmse_of(&self, f: &[f64]) -> f64 {
        self.conditional_stats_of(f).expected_cond_var()
    }

    /// Correlation ratio `var(E[U|V]) / var(U)`.
    pub fn correlation_ratio_sq(&self) -> Result<f64> {
        let var = self.var_u();
        if var <= f64::EPSILON * self.alphabet_scale_sq() {
            return Err(Error::Degenerate(
                "U is constant, correlation ratio undefined".into(),
            ));
        }
        let explained = self.conditional_stats().var_of_cond_mean();
        Ok((explained / var).clamp(0.0, 1.0))
    }

    fn alphabet_scale_sq(&self) -> f64 {
        let s = self
            .alphabet_u
            .points()
            .iter()
            .fold(0.0_f64, |a, x| a.max(x.abs()));
        s.max(1e-300) * s.max(1e-300)
    }
}

/// On-disk joint pmf: rows indexed by `x_alphabet`, columns by `y_alphabet`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointFile {
    pub x_alphabet: Vec<f64>,
    pub y_alphabet: Vec<f64>,
    pub pmf: Vec<Vec<f64>>,
}

impl TryFrom<JointFile> for JointDistribution {
    type Error = Error;

    fn try_from(f: JointFile) -> Result<Self> {
        JointDistribution::new(
            Alphabet::new(f.x_alphabet)?,
            Alphabet::new(f.y_alphabet)?,
            f.pmf,
        )
    }
}

impl From<&JointDistribution> for JointFile {
    fn from(j: &JointDistribution) -> Self {
        JointFile {
            x_alphabet: j.alphabet_u().points().to_vec(),
            y_alphabet: j.alphabet_v().points().to_vec(),
            pmf: j.to_rows(),
        }
    }
}

/// Row-stochastic matrix `k[y][z] = P(Z = z | Y = y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    input: Alphabet,
    output: Alphabet,
    k: Vec<f64>,
}

impl Channel {
    pub fn new(input: Alphabet, output: Alphabet, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != input.len() {
            return Err(Error::DimensionMismatch(format!(
                "channel has {} rows but {} inputs",
                rows.len(),
                input.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != output.len()) {
            return Err(Error::DimensionMismatch(format!(
                "channel row of length {} but {} outputs",
                r.len(),
                output.len()
            )));
        }
        Self::from_flat(input, output, rows.concat())
    }

    pub fn from_flat(input: Alphabet, output: Alphabet, mut k: Vec<f64>) -> Result<Self> {
        let n_out = output.len();
        if k.len() != input.len() * n_out {
            return Err(Error::DimensionMismatch(format!(
                "channel has {} entries, expected {}x{}",
                k.len(),
                input.len(),
                n_out
            )));
        }
        for (y, row) in k.chunks_mut(n_out).enumerate() {
            validate_mass(row, &format!("channel row {y}"))
                .map_err(|e| Error::InvalidChannel(e.to_string()))?;
        }
        Ok(Self { input, output, k })
    }

    /// `Z = Y`.
    pub fn identity(alphabet: Alphabet) -> Self {
        let n = alphabet.len();
        let mut k = vec![0.0; n * n];
        (0..n).for_each(|i| k[i * n + i] = 1.0);
        Self {
            input: alphabet.clone(),
            output: alphabet,
            k,
        }
    }

    /// Every input mapped to output `column` of an index alphabet of size `n_out`.
    pub fn constant(input: Alphabet, n_out: usize, column: usize) -> Self {
        assert!(column < n_out);
        let mut k = vec![0.0; input.len() * n_out];
        (0..input.len()).for_each(|y| k[y * n_out + column] = 1.0);
        Self {
            input,
            output: Alphabet::indices(n_out),
            k,
        }
    }

    /// Binary symmetric channel on `{0, 1}` (or any two-point alphabet) with crossover `alpha`.
    pub fn bsc(alphabet: Alphabet, alpha: f64) -> Result<Self> {
        if alphabet.len() != 2 {
            return Err(Error::InvalidArgument(
                "BSC needs a two-point alphabet".into(),
            ));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!(
                "crossover {alpha} outside [0,1]"
            )));
        }
        Channel::new(
            alphabet.clone(),
            alphabet,
            vec![vec![1.0 - alpha, alpha], vec![alpha, 1.0 - alpha]],
        )
    }

    pub fn input(&self) -> &Alphabet {
        &self.input
    }

    pub fn output(&self) -> &Alphabet {
        &self.output
    }

    pub fn n_inputs(&self) -> usize {
        self.input.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output.len()
    }

    pub fn get(&self, y: usize, z: usize) -> f64 {
        self.k[y * self.n_outputs() + z]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        let n = self.n_outputs();
        &self.k[y * n..(y + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.k
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.k
            .chunks(self.n_outputs())
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Serial concatenation: `self` followed by `next`.
    pub fn then(&self, next: &Channel) -> Result<Channel> {
        if next.input() != self.output() {
            return Err(Error::DimensionMismatch(
                "output of the first channel must feed the second".into(),
            ));
        }
        let (a, b, c) = (self.n_inputs(), self.n_outputs(), next.n_outputs());
        let mut k = vec![0.0; a * c];
        for i in 0..a {
            for j in 0..b {
                let w = self.k[i * b + j];
                for l in 0..c {
                    k[i * c + l] += w * next.k[j * c + l];
                }
            }
        }
        Channel::from_flat(self.input.clone(), next.output.clone(), k)
    }
}

/// On-disk channel: rows are inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    pub input_alphabet: Vec<f64>,
    pub output_alphabet: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

impl TryFrom<ChannelFile> for Channel {
    type Error = Error;

    fn try_from(f: ChannelFile) -> Result<Self> {
        Channel::new(
            Alphabet::new(f.input_alphabet)?,
            Alphabet::new(f.output_alphabet)?,
            f.matrix,
        )
    }
}

impl From<&Channel> for ChannelFile {
    fn from(c: &Channel) -> Self {
        ChannelFile {
            input_alphabet: c.input().points().to_vec(),
            output_alphabet: c.output().points().to_vec(),
            matrix: c.to_rows(),
        }
    }
}
