//! Univariate feature selection, regularized logistic regression,
//! game-grouped cross-validation, grid search and evaluation metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;
use crate::stats::{self, BootstrapResult, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{groups} groups cannot fill {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("empty grid")]
    EmptyGrid,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model artifact line {line}: {message}")]
    Artifact { line: usize, message: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ModelError::LengthMismatch {
                what: "matrix data",
                got: data.len(),
                expected: rows * cols,
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(ModelError::LengthMismatch {
                    what: "row",
                    got: r.len(),
                    expected: cols,
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(ModelError::NonFinite {
                row: p / self.cols.max(1),
                col: p % self.cols.max(1),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KFeatures {
    Count(usize),
    All,
}

impl KFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            KFeatures::Count(k) => k.min(n_features),
            KFeatures::All => n_features,
        }
    }
}

impl fmt::Display for KFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KFeatures::Count(k) => write!(f, "{k}"),
            KFeatures::All => f.write_str("all"),
        }
    }
}

impl FromStr for KFeatures {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "all" {
            return Ok(KFeatures::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(KFeatures::Count(k)),
            _ => Err(format!("k_features must be a positive integer or \"all\", got {s:?}")),
        }
    }
}

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("unknown {} {:?}", stringify!($name), s)),
                }
            }
        }
    };
}

string_enum!(Scorer { AnovaF => "anova_f", Chi2 => "chi2" });
string_enum!(ClassWeight { Unweighted => "none", Balanced => "balanced" });
string_enum!(Regularizer { L1 => "l1", L2 => "l2" });
string_enum!(ObjectiveMetric { Accuracy => "accuracy", F1 => "f1" });

pub const MIN_C: f64 = 1e-12;
pub const MAX_C: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub k_features: KFeatures,
    pub scorer: Scorer,
    pub class_weight: ClassWeight,
    pub regularizer: Regularizer,
    pub c: f64,
    pub objective_metric: ObjectiveMetric,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            k_features: KFeatures::All,
            scorer: Scorer::AnovaF,
            class_weight: ClassWeight::Unweighted,
            regularizer: Regularizer::L2,
            c: 1.0,
            objective_metric: ObjectiveMetric::Accuracy,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_C..=MAX_C).contains(&self.c) {
            return Err(ModelError::InvalidConfig(format!("C = {} outside [1e-12, 1e12]", self.c)));
        }
        if self.k_features == KFeatures::Count(0) {
            return Err(ModelError::InvalidConfig("k_features must be positive".into()));
        }
        Ok(())
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "k={} scorer={} class_weight={} penalty={} C={:e} objective={}",
            self.k_features, self.scorer, self.class_weight, self.regularizer, self.c, self.objective_metric
        )
    }
}

fn check_labels(y: &[u8], rows: usize) -> Result<()> {
    if y.len() != rows {
        return Err(ModelError::LengthMismatch {
            what: "labels",
            got: y.len(),
            expected: rows,
        });
    }
    if let Some(v) = y.iter().find(|v| **v > 1) {
        return Err(ModelError::InvalidConfig(format!("label {v} is not binary")));
    }
    let pos = y.iter().filter(|v| **v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

/// One-way ANOVA F statistic per feature for the two classes. A constant
/// feature scores 0; a feature with no within-class variance but distinct
/// class means scores infinity.
pub fn anova_f_scores(x: &Matrix, y: &[u8]) -> Result<Vec<f64>> {
    check_labels(y, x.rows())?;
    let n = x.rows() as f64;
    let n1 = y.iter().filter(|v| **v == 1).count() as f64;
    let n0 = n - n1;
    let mut out = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let (mut s0, mut s1) = (0.0, 0.0);
        for i in 0..x.rows() {
            if y[i] == 1 {
                s1 += x.get(i, j);
            } else {
                s0 += x.get(i, j);
            }
        }
        let (m0, m1) = (s0 / n0, s1 / n1);
        let grand = (s0 + s1) / n;
        let ssb = n0 * (m0 - grand).powi(2) + n1 * (m1 - grand).powi(2);
        let ssw: f64 = (0..x.rows())
            .map(|i| {
                let m = if y[i] == 1 { m1 } else { m0 };
                (x.get(i, j) - m).powi(2)
            })
            .sum();
        let scale = ssb.max(ssw).max(f64::MIN_POSITIVE);
        let f = if ssw <= 1e-24 * scale || ssw == 0.0 {
            if ssb > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            ssb / (ssw / (n - 2.0))
        };
        out.push(f);
    }
    Ok(out)
}

/// Chi-squared statistic per feature after min-max scaling to [0, 1]:
/// observed class sums of each feature against the sums expected from
/// class frequencies.
pub fn chi2_scores(x: &Matrix, y: &[u8]) -> Result<Vec<f64>> {
    check_labels(y, x.rows())?;
    let n = x.rows() as f64;
    let p1 = y.iter().filter(|v| **v == 1).count() as f64 / n;
    let mut out = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let col = x.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            out.push(0.0);
            continue;
        }
        let (mut o0, mut o1) = (0.0, 0.0);
        for (v, label) in col.iter().zip(y) {
            let s = (v - lo) / (hi - lo);
            if *label == 1 {
                o1 += s;
            } else {
                o0 += s;
            }
        }
        let total = o0 + o1;
        let (e0, e1) = ((1.0 - p1) * total, p1 * total);
        out.push((o0 - e0).powi(2) / e0 + (o1 - e1).powi(2) / e1);
    }
    Ok(out)
}

pub fn feature_scores(x: &Matrix, y: &[u8], scorer: Scorer) -> Result<Vec<f64>> {
    match scorer {
        Scorer::AnovaF => anova_f_scores(x, y),
        Scorer::Chi2 => chi2_scores(x, y),
    }
}

fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Indices (ascending) of the `k` best-scoring features; ties go to the
/// lower index. `k` larger than the feature count selects everything.
pub fn univariate_select(x: &Matrix, y: &[u8], k: KFeatures, scorer: Scorer) -> Result<Vec<usize>> {
    x.check_finite()?;
    if let KFeatures::Count(n) = k {
        if n > x.cols() {
            log::warn!("k = {n} exceeds {} features; selecting all", x.cols());
        }
    }
    let scores = feature_scores(x, y, scorer)?;
    Ok(top_k(&scores, k.resolve(x.cols())))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Per-sample weights: 1, or `n / (2 n_class)` when balanced.
pub fn sample_weights(y: &[u8], class_weight: ClassWeight) -> Vec<f64> {
    match class_weight {
        ClassWeight::Unweighted => vec![1.0; y.len()],
        ClassWeight::Balanced => {
            let n = y.len() as f64;
            let n1 = y.iter().filter(|v| **v == 1).count() as f64;
            let w1 = n / (2.0 * n1);
            let w0 = n / (2.0 * (n - n1));
            y.iter().map(|v| if *v == 1 { w1 } else { w0 }).collect()
        }
    }
}

pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;

/// Penalized logistic log-loss on already-standardized columns:
/// `mean_i s_i * loss_i + (1/C) * penalty(w)` with `penalty = ½‖w‖²` (l2)
/// or `‖w‖₁` (l1). Parameters are `[intercept, w_1, .., w_d]`; the
/// intercept is not penalized.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    n: usize,
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
    weights: Vec<f64>,
    pub c: f64,
    pub regularizer: Regularizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Objective at the start of every iteration, ending at the solution.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticProblem {
    pub fn new(x: &Matrix, y: &[u8], weights: Vec<f64>, c: f64, regularizer: Regularizer) -> Result<Self> {
        x.check_finite()?;
        if y.len() != x.rows() || weights.len() != x.rows() {
            return Err(ModelError::LengthMismatch {
                what: "labels or weights",
                got: y.len().min(weights.len()),
                expected: x.rows(),
            });
        }
        Ok(LogisticProblem {
            n: x.rows(),
            columns: (0..x.cols()).map(|j| x.column(j)).collect(),
            y: y.iter().map(|v| *v as f64).collect(),
            weights,
            c,
            regularizer,
        })
    }

    pub fn from_columns(columns: Vec<Vec<f64>>, y: &[u8], weights: Vec<f64>, c: f64, regularizer: Regularizer) -> Self {
        LogisticProblem {
            n: y.len(),
            columns,
            y: y.iter().map(|v| *v as f64).collect(),
            weights,
            c,
            regularizer,
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.len() + 1
    }

    fn margins(&self, theta: &[f64]) -> Vec<f64> {
        let mut eta = vec![theta[0]; self.n];
        for (col, w) in self.columns.iter().zip(&theta[1..]) {
            if *w != 0.0 {
                for (e, z) in eta.iter_mut().zip(col) {
                    *e += w * z;
                }
            }
        }
        eta
    }

    fn loss_from_margins(&self, eta: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            total += self.weights[i] * (softplus(eta[i]) - self.y[i] * eta[i]);
        }
        total / self.n as f64
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        let w = &theta[1..];
        match self.regularizer {
            Regularizer::L2 => 0.5 * w.iter().map(|v| v * v).sum::<f64>() / self.c,
            Regularizer::L1 => w.iter().map(|v| v.abs()).sum::<f64>() / self.c,
        }
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.loss_from_margins(&self.margins(theta)) + self.penalty(theta)
    }

    fn smooth_gradient(&self, eta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n as f64;
        let resid: Vec<f64> = (0..self.n)
            .map(|i| self.weights[i] * (sigmoid(eta[i]) - self.y[i]) / n)
            .collect();
        let mut g = Vec::with_capacity(self.dim());
        g.push(resid.iter().sum());
        for col in &self.columns {
            g.push(col.iter().zip(&resid).map(|(z, r)| z * r).sum());
        }
        (g, resid)
    }

    /// Gradient of [`value`](Self::value); for l1 the penalty contributes
    /// `sign(w)/C` (zero at zero).
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let (mut g, _) = self.smooth_gradient(&self.margins(theta));
        for (gj, w) in g[1..].iter_mut().zip(&theta[1..]) {
            *gj += match self.regularizer {
                Regularizer::L2 => w / self.c,
                Regularizer::L1 => w.signum() * f64::from(*w != 0.0) / self.c,
            };
        }
        g
    }

    /// Minimize from `init`.
    pub fn solve(&self, init: &[f64]) -> (Vec<f64>, FitTrace) {
        match self.regularizer {
            Regularizer::L2 => self.solve_newton(init),
            Regularizer::L1 => self.solve_l1(init),
        }
    }

    fn curvature(&self, eta: &[f64]) -> Vec<f64> {
        let n = self.n as f64;
        (0..self.n)
            .map(|i| {
                let p = sigmoid(eta[i]);
                self.weights[i] * p * (1.0 - p) / n
            })
            .collect()
    }

    /// Hessian of the smooth loss, row-major `dim x dim`, intercept first.
    fn hessian(&self, eta: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        let h = self.curvature(eta);
        let mut hess = vec![0.0; dim * dim];
        hess[0] = h.iter().sum();
        let mut hz = vec![0.0; self.n];
        for j in 1..dim {
            for ((o, z), w) in hz.iter_mut().zip(&self.columns[j - 1]).zip(&h) {
                *o = z * w;
            }
            let s: f64 = hz.iter().sum();
            hess[j] = s;
            hess[j * dim] = s;
            for k in j..dim {
                let v: f64 = hz.iter().zip(&self.columns[k - 1]).map(|(a, b)| a * b).sum();
                hess[j * dim + k] = v;
                hess[k * dim + j] = v;
            }
        }
        hess
    }

    /// Newton directions on the l2 objective with Armijo backtracking;
    /// stops when the gradient norm reaches [`TOLERANCE`].
    fn solve_newton(&self, init: &[f64]) -> (Vec<f64>, FitTrace) {
        let dim = self.dim();
        let lambda = 1.0 / self.c;
        let mut theta = init.to_vec();
        let mut eta = self.margins(&theta);
        let mut f = self.loss_from_margins(&eta) + self.penalty(&theta);
        let mut trace = FitTrace {
            objective: vec![f],
            iterations: 0,
            converged: false,
        };
        let mut stalled = 0;
        while trace.iterations < MAX_ITERATIONS {
            let (mut g, _) = self.smooth_gradient(&eta);
            for j in 1..dim {
                g[j] += lambda * theta[j];
            }
            if norm(&g) <= TOLERANCE {
                trace.converged = true;
                break;
            }
            let mut hess = self.hessian(&eta);
            for j in 1..dim {
                hess[j * dim + j] += lambda;
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let step = solve_spd(&hess, &neg_g, dim);
            let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
            // below the resolution of f a backtracking search only sees rounding
            if -slope <= 1e3 * f64::EPSILON * (1.0 + f.abs()) {
                stalled += 1;
                let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, b)| a + b).collect();
                let e = self.margins(&cand);
                let fc = self.loss_from_margins(&e) + self.penalty(&cand);
                trace.iterations += 1;
                if fc > f || stalled > 3 {
                    trace.converged = norm(&g) <= 1e-6;
                    break;
                }
                theta = cand;
                eta = e;
                f = fc;
                trace.objective.push(f);
                continue;
            }
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-20 {
                let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, b)| a + t * b).collect();
                let e = self.margins(&cand);
                let fc = self.loss_from_margins(&e) + self.penalty(&cand);
                if fc <= f + 1e-4 * t * slope {
                    accepted = Some((cand, e, fc));
                    break;
                }
                t *= 0.5;
            }
            trace.iterations += 1;
            let Some((cand, e, fc)) = accepted else {
                // no representable decrease left
                trace.converged = norm(&g) <= 1e-6;
                break;
            };
            let moved = t * norm(&step);
            theta = cand;
            eta = e;
            f = fc;
            trace.objective.push(f);
            if moved == 0.0 {
                break;
            }
        }
        (theta, trace)
    }

    /// Proximal Newton: coordinate descent on a local quadratic model with
    /// the l1 term kept exact, then a backtracking line search. Stops when
    /// the update norm reaches [`TOLERANCE`].
    fn solve_l1(&self, init: &[f64]) -> (Vec<f64>, FitTrace) {
        let dim = self.dim();
        let lambda = 1.0 / self.c;
        let mut theta = init.to_vec();
        let mut eta = self.margins(&theta);
        let mut f = self.loss_from_margins(&eta) + self.penalty(&theta);
        let mut trace = FitTrace {
            objective: vec![f],
            iterations: 0,
            converged: false,
        };
        let l1 = |t: &[f64]| t[1..].iter().map(|v| v.abs()).sum::<f64>();
        while trace.iterations < MAX_ITERATIONS {
            let (g, _) = self.smooth_gradient(&eta);
            let hess = self.hessian(&eta);
            let mut d = vec![0.0; dim];
            let mut hd = vec![0.0; dim];
            for _ in 0..MAX_ITERATIONS {
                let mut max_delta: f64 = 0.0;
                for j in 0..dim {
                    let a = hess[j * dim + j].max(1e-12);
                    let b = g[j] + hd[j];
                    let delta = if j == 0 {
                        -b / a
                    } else {
                        let cur = theta[j] + d[j];
                        soft_threshold(cur - b / a, lambda / a) - cur
                    };
                    if delta != 0.0 {
                        d[j] += delta;
                        for (r, hv) in hd.iter_mut().zip(&hess[j * dim..(j + 1) * dim]) {
                            *r += delta * hv;
                        }
                        max_delta = max_delta.max(delta.abs());
                    }
                }
                if max_delta <= 1e-13 {
                    break;
                }
            }
            if norm(&d) <= TOLERANCE {
                trace.converged = true;
                break;
            }
            let moved_l1 = {
                let cand: Vec<f64> = theta.iter().zip(&d).map(|(a, b)| a + b).collect();
                l1(&cand)
            };
            let decrease = g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() + lambda * (moved_l1 - l1(&theta));
            if -decrease <= 1e3 * f64::EPSILON * (1.0 + f.abs()) {
                let cand: Vec<f64> = theta.iter().zip(&d).map(|(a, b)| a + b).collect();
                let e = self.margins(&cand);
                let fc = self.loss_from_margins(&e) + self.penalty(&cand);
                trace.iterations += 1;
                if fc > f {
                    trace.converged = norm(&d) <= 1e-6;
                    break;
                }
                theta = cand;
                eta = e;
                f = fc;
                trace.objective.push(f);
                continue;
            }
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-20 {
                let cand: Vec<f64> = theta.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                let e = self.margins(&cand);
                let fc = self.loss_from_margins(&e) + self.penalty(&cand);
                if fc <= f + 0.01 * t * decrease.min(0.0) {
                    accepted = Some((cand, e, fc));
                    break;
                }
                t *= 0.5;
            }
            trace.iterations += 1;
            let Some((cand, e, fc)) = accepted else {
                trace.converged = norm(&d) <= 1e-6;
                break;
            };
            let moved = t * norm(&d);
            theta = cand;
            eta = e;
            f = fc;
            trace.objective.push(f);
            if moved <= TOLERANCE {
                trace.converged = true;
                break;
            }
        }
        (theta, trace)
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve `A x = b` for symmetric positive (semi)definite `A` by Cholesky,
/// adding growing ridge terms if the factorization breaks down.
fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    loop {
        if let Some(l) = cholesky(a, n, ridge) {
            let mut y = vec![0.0; n];
            for i in 0..n {
                let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
                y[i] = (b[i] - s) / l[i * n + i];
            }
            let mut x = vec![0.0; n];
            for i in (0..n).rev() {
                let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
                x[i] = (y[i] - s) / l[i * n + i];
            }
            return x;
        }
        ridge = if ridge == 0.0 { scale * 1e-14 } else { ridge * 10.0 };
    }
}

fn cholesky(a: &[f64], n: usize, ridge: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] + ridge - s;
                if d <= 0.0 || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn fit(x: &Matrix, cols: &[usize]) -> Self {
        let n = x.rows() as f64;
        let mut means = Vec::with_capacity(cols.len());
        let mut sds = Vec::with_capacity(cols.len());
        for &j in cols {
            let m = (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / n;
            let v = (0..x.rows()).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / n;
            means.push(m);
            let sd = v.sqrt();
            sds.push(if sd > 1e-12 * m.abs().max(1.0) { sd } else { 0.0 });
        }
        Standardization { means, sds }
    }

    /// Standardized columns for `rows`, dropping zero-sd features.
    pub fn columns(&self, x: &Matrix, cols: &[usize], rows: &[usize]) -> Vec<Vec<f64>> {
        cols.iter()
            .enumerate()
            .filter(|(k, _)| self.sds[*k] > 0.0)
            .map(|(k, &j)| rows.iter().map(|&i| (x.get(i, j) - self.means[k]) / self.sds[k]).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub selected_indices: Vec<usize>,
    /// Coefficients on the standardized scale; 0 for zero-sd features.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub standardization: Standardization,
    pub config: ModelConfig,
}

impl TrainedModel {
    fn from_solution(
        n_features: usize,
        names: &[String],
        selected: Vec<usize>,
        std: Standardization,
        theta: &[f64],
        config: ModelConfig,
    ) -> Self {
        let mut weights = Vec::with_capacity(selected.len());
        let mut it = theta[1..].iter();
        for sd in &std.sds {
            weights.push(if *sd > 0.0 { *it.next().expect("weight per kept feature") } else { 0.0 });
        }
        TrainedModel {
            n_features,
            feature_names: selected.iter().map(|&j| names[j].clone()).collect(),
            selected_indices: selected,
            weights,
            intercept: theta[0],
            standardization: std,
            config,
        }
    }

    pub fn decision_function(&self, row: &[f64]) -> f64 {
        let mut z = self.intercept;
        for (k, &j) in self.selected_indices.iter().enumerate() {
            let sd = self.standardization.sds[k];
            if sd > 0.0 {
                z += self.weights[k] * (row[j] - self.standardization.means[k]) / sd;
            }
        }
        z
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| sigmoid(self.decision_function(x.row(i)))).collect()
    }

    /// Label 1 when the decision function is positive.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        if x.cols() != self.n_features {
            return Err(ModelError::LengthMismatch {
                what: "feature columns",
                got: x.cols(),
                expected: self.n_features,
            });
        }
        Ok((0..x.rows())
            .map(|i| u8::from(self.decision_function(x.row(i)) > 0.0))
            .collect())
    }
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("x{j}")).collect()
}

/// Fit on all columns of `x` (no selection), after z-scoring.
pub fn fit_logistic(x: &Matrix, y: &[u8], config: &ModelConfig) -> Result<TrainedModel> {
    fit_logistic_traced(x, y, config).map(|(m, _)| m)
}

pub fn fit_logistic_traced(x: &Matrix, y: &[u8], config: &ModelConfig) -> Result<(TrainedModel, FitTrace)> {
    let all: Vec<usize> = (0..x.cols()).collect();
    fit_selected(x, y, config, all, &default_names(x.cols()))
}

fn fit_selected(
    x: &Matrix,
    y: &[u8],
    config: &ModelConfig,
    selected: Vec<usize>,
    names: &[String],
) -> Result<(TrainedModel, FitTrace)> {
    config.validate()?;
    x.check_finite()?;
    check_labels(y, x.rows())?;
    let std = Standardization::fit(x, &selected);
    let rows: Vec<usize> = (0..x.rows()).collect();
    let cols = std.columns(x, &selected, &rows);
    let problem = LogisticProblem::from_columns(
        cols,
        y,
        sample_weights(y, config.class_weight),
        config.c,
        config.regularizer,
    );
    let (theta, trace) = problem.solve(&vec![0.0; problem.dim()]);
    Ok((
        TrainedModel::from_solution(x.cols(), names, selected, std, &theta, *config),
        trace,
    ))
}

/// Feature selection followed by logistic regression.
pub fn train(x: &Matrix, y: &[u8], config: &ModelConfig, names: &[String]) -> Result<TrainedModel> {
    if names.len() != x.cols() {
        return Err(ModelError::LengthMismatch {
            what: "feature names",
            got: names.len(),
            expected: x.cols(),
        });
    }
    let selected = univariate_select(x, y, config.k_features, config.scorer)?;
    fit_selected(x, y, config, selected, names).map(|(m, _)| m)
}

/// Validation index sets: distinct groups are sorted, shuffled with `seed`
/// and dealt round-robin into `k` folds.
pub fn grouped_kfold<S: AsRef<str>>(groups: &[S], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let distinct: BTreeSet<&str> = groups.iter().map(|g| g.as_ref()).collect();
    if k < 2 || k > distinct.len() {
        return Err(ModelError::TooFewGroups {
            groups: distinct.len(),
            k,
        });
    }
    let mut order: Vec<&str> = distinct.into_iter().collect();
    SeededRng::new(seed).shuffle(&mut order);
    let fold_of: HashMap<&str, usize> = order.iter().enumerate().map(|(i, g)| (*g, i % k)).collect();
    let mut folds = vec![Vec::new(); k];
    for (i, g) in groups.iter().enumerate() {
        folds[fold_of[g.as_ref()]].push(i);
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(predictions: &[u8], labels: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (p, y) in predictions.iter().zip(labels) {
            match (p, y) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        }
    }

    /// F1 of the positive class; 0 when there are no positives at all.
    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / d as f64
        }
    }

    /// Matthews correlation; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, fp, fn_, tn) = (self.tp as f64, self.fp as f64, self.fn_ as f64, self.tn as f64);
        let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
        if factors.iter().any(|f| *f == 0.0) {
            return 0.0;
        }
        let v = (tp * tn - fp * fn_) / factors.iter().product::<f64>().sqrt();
        v.clamp(-1.0, 1.0)
    }

    pub fn metric(&self, m: ObjectiveMetric) -> f64 {
        match m {
            ObjectiveMetric::Accuracy => self.accuracy(),
            ObjectiveMetric::F1 => self.f1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub mcc: f64,
}

impl From<Confusion> for FoldMetrics {
    fn from(c: Confusion) -> Self {
        FoldMetrics {
            n: c.total(),
            accuracy: c.accuracy(),
            f1: c.f1(),
            mcc: c.mcc(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub mcc: f64,
    pub confusion: Confusion,
    pub per_fold: Vec<FoldMetrics>,
    /// Accuracy of always predicting the majority class.
    pub majority_accuracy: f64,
    /// F1 of always predicting the majority class.
    pub majority_f1: f64,
    pub chance_mcc: f64,
    pub mcc_ci: Option<BootstrapResult>,
    pub headline_metric: ObjectiveMetric,
    pub headline_ci: Option<BootstrapResult>,
}

/// Metrics for pooled predictions, without folds or intervals.
pub fn evaluate(predictions: &[u8], labels: &[u8]) -> Result<EvalReport> {
    if predictions.len() != labels.len() {
        return Err(ModelError::LengthMismatch {
            what: "predictions",
            got: predictions.len(),
            expected: labels.len(),
        });
    }
    let c = Confusion::from_predictions(predictions, labels);
    let pos = labels.iter().filter(|v| **v == 1).count();
    let majority = Confusion::from_predictions(&vec![u8::from(2 * pos > labels.len()); labels.len()], labels);
    Ok(EvalReport {
        n: labels.len(),
        accuracy: c.accuracy(),
        f1: c.f1(),
        mcc: c.mcc(),
        confusion: c,
        per_fold: vec![],
        majority_accuracy: majority.accuracy(),
        majority_f1: majority.f1(),
        chance_mcc: 0.0,
        mcc_ci: None,
        headline_metric: ObjectiveMetric::Accuracy,
        headline_ci: None,
    })
}

pub const BOOTSTRAP_REPLICATES: usize = 1000;
pub const CI_LEVEL: f64 = 0.95;

/// Add percentile intervals for MCC and `headline`, resampling whole
/// groups so that correlated instances of one game move together.
pub fn with_bootstrap<S: AsRef<str>>(
    mut report: EvalReport,
    predictions: &[u8],
    labels: &[u8],
    groups: &[S],
    headline: ObjectiveMetric,
    seed: u64,
) -> Result<EvalReport> {
    let mut by_group: BTreeMap<&str, Confusion> = BTreeMap::new();
    for i in 0..labels.len() {
        let c = by_group.entry(groups[i].as_ref()).or_default();
        match (predictions[i], labels[i]) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    let clusters: Vec<Confusion> = by_group.into_values().collect();
    let pooled = |cs: &[Confusion]| {
        cs.iter().fold(Confusion::default(), |a, c| Confusion {
            tp: a.tp + c.tp,
            fp: a.fp + c.fp,
            fn_: a.fn_ + c.fn_,
            tn: a.tn + c.tn,
        })
    };
    report.mcc_ci = Some(stats::bootstrap(&clusters, |s| pooled(s).mcc(), BOOTSTRAP_REPLICATES, CI_LEVEL, seed)?);
    report.headline_ci = Some(stats::bootstrap(
        &clusters,
        |s| pooled(s).metric(headline),
        BOOTSTRAP_REPLICATES,
        CI_LEVEL,
        seed,
    )?);
    report.headline_metric = headline;
    Ok(report)
}

/// The candidate configurations of a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub k_features: Vec<KFeatures>,
    pub scorers: Vec<Scorer>,
    pub class_weights: Vec<ClassWeight>,
    pub regularizers: Vec<Regularizer>,
    pub cs: Vec<f64>,
    pub objective_metric: ObjectiveMetric,
}

impl Grid {
    /// Full factorial with C = 10^i for i in -12..=12.
    pub fn full(objective_metric: ObjectiveMetric) -> Self {
        Grid {
            k_features: [1, 2, 4, 8, 16, 32]
                .into_iter()
                .map(KFeatures::Count)
                .chain([KFeatures::All])
                .collect(),
            scorers: Scorer::ALL.to_vec(),
            class_weights: ClassWeight::ALL.to_vec(),
            regularizers: Regularizer::ALL.to_vec(),
            cs: (-12..=12).map(|i| 10f64.powi(i)).collect(),
            objective_metric,
        }
    }

    pub fn single(config: ModelConfig) -> Self {
        Grid {
            k_features: vec![config.k_features],
            scorers: vec![config.scorer],
            class_weights: vec![config.class_weight],
            regularizers: vec![config.regularizer],
            cs: vec![config.c],
            objective_metric: config.objective_metric,
        }
    }

    pub fn len(&self) -> usize {
        self.k_features.len() * self.scorers.len() * self.class_weights.len() * self.regularizers.len() * self.cs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn configs(&self) -> Vec<ModelConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &k_features in &self.k_features {
            for &scorer in &self.scorers {
                for &class_weight in &self.class_weights {
                    for &regularizer in &self.regularizers {
                        for &c in &self.cs {
                            out.push(ModelConfig {
                                k_features,
                                scorer,
                                class_weight,
                                regularizer,
                                c,
                                objective_metric: self.objective_metric,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub config: ModelConfig,
    pub mean_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: ModelConfig,
    /// Cross-validated report of the best configuration.
    pub report: EvalReport,
    /// Out-of-fold predictions of the best configuration.
    pub predictions: Vec<u8>,
    pub entries: Vec<GridEntry>,
}

const TIE_EPS: f64 = 1e-12;

/// Out-of-fold predictions for every grid configuration.
///
/// Per training fold, selection scores and standardization are computed
/// once per (scorer, k) and shared by all fits; each (class weight,
/// penalty) pair walks the C values in ascending order, starting every
/// fit from the previous solution.
fn cross_validated_predictions(
    x: &Matrix,
    y: &[u8],
    folds: &[Vec<usize>],
    grid: &Grid,
) -> Result<HashMap<usize, (Vec<u8>, Vec<f64>)>> {
    let configs = grid.configs();
    let index_of: HashMap<String, usize> = configs.iter().enumerate().map(|(i, c)| (config_key(c), i)).collect();
    let mut out: HashMap<usize, (Vec<u8>, Vec<f64>)> = (0..configs.len())
        .map(|i| (i, (vec![0u8; y.len()], Vec::with_capacity(folds.len()))))
        .collect();
    let mut cs = grid.cs.clone();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    for val in folds {
        let in_val: BTreeSet<usize> = val.iter().copied().collect();
        let train: Vec<usize> = (0..y.len()).filter(|i| !in_val.contains(i)).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
        let yv: Vec<u8> = val.iter().map(|&i| y[i]).collect();
        check_labels(&yt, yt.len())?;
        let mut by_selection: BTreeMap<Vec<usize>, Vec<(KFeatures, Scorer)>> = BTreeMap::new();
        for &scorer in &grid.scorers {
            let scores = feature_scores(&xt, &yt, scorer)?;
            for &k in &grid.k_features {
                by_selection
                    .entry(top_k(&scores, k.resolve(x.cols())))
                    .or_default()
                    .push((k, scorer));
            }
        }
        for (selected, owners) in by_selection {
            let std = Standardization::fit(&xt, &selected);
            let all_train: Vec<usize> = (0..train.len()).collect();
            let cols = std.columns(&xt, &selected, &all_train);
            let val_cols = std.columns(x, &selected, val);
            for &cw in &grid.class_weights {
                let weights = sample_weights(&yt, cw);
                for &reg in &grid.regularizers {
                    let mut problem = LogisticProblem::from_columns(cols.clone(), &yt, weights.clone(), cs[0], reg);
                    let mut theta = vec![0.0; problem.dim()];
                    for &c in &cs {
                        problem.c = c;
                        theta = problem.solve(&theta).0;
                        let preds: Vec<u8> = (0..val.len())
                            .map(|r| {
                                let z = theta[0]
                                    + val_cols.iter().zip(&theta[1..]).map(|(col, w)| col[r] * w).sum::<f64>();
                                u8::from(z > 0.0)
                            })
                            .collect();
                        let fold_score = Confusion::from_predictions(&preds, &yv).metric(grid.objective_metric);
                        for &(k, scorer) in &owners {
                            let cfg = ModelConfig {
                                k_features: k,
                                scorer,
                                class_weight: cw,
                                regularizer: reg,
                                c,
                                objective_metric: grid.objective_metric,
                            };
                            if let Some(&ci) = index_of.get(&config_key(&cfg)) {
                                let entry = out.get_mut(&ci).expect("config slot");
                                for (r, &i) in val.iter().enumerate() {
                                    entry.0[i] = preds[r];
                                }
                                entry.1.push(fold_score);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn config_key(c: &ModelConfig) -> String {
    format!("{}|{}|{}|{}|{:e}", c.k_features, c.scorer, c.class_weight, c.regularizer, c.c)
}

/// Exhaustive search over `grid` by mean validation objective across
/// game-grouped folds. Ties prefer smaller C, then fewer features.
pub fn grid_search<S: AsRef<str>>(
    x: &Matrix,
    y: &[u8],
    groups: &[S],
    grid: &Grid,
    k_folds: usize,
    seed: u64,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    for c in grid.configs() {
        c.validate()?;
    }
    x.check_finite()?;
    check_labels(y, x.rows())?;
    if groups.len() != y.len() {
        return Err(ModelError::LengthMismatch {
            what: "groups",
            got: groups.len(),
            expected: y.len(),
        });
    }
    let folds = grouped_kfold(groups, k_folds, seed)?;
    let oof = cross_validated_predictions(x, y, &folds, grid)?;
    let configs = grid.configs();
    let entries: Vec<GridEntry> = configs
        .iter()
        .enumerate()
        .map(|(i, c)| GridEntry {
            config: *c,
            mean_objective: stats::mean(&oof[&i].1),
        })
        .collect();
    let n_features = x.cols();
    let mut best = 0;
    for i in 1..entries.len() {
        let (a, b) = (&entries[i], &entries[best]);
        let better = if (a.mean_objective - b.mean_objective).abs() > TIE_EPS {
            a.mean_objective > b.mean_objective
        } else if a.config.c != b.config.c {
            a.config.c < b.config.c
        } else {
            a.config.k_features.resolve(n_features) < b.config.k_features.resolve(n_features)
        };
        if better {
            best = i;
        }
    }
    let predictions = oof[&best].0.clone();
    let mut report = evaluate(&predictions, y)?;
    report.per_fold = folds
        .iter()
        .map(|val| {
            let p: Vec<u8> = val.iter().map(|&i| predictions[i]).collect();
            let l: Vec<u8> = val.iter().map(|&i| y[i]).collect();
            Confusion::from_predictions(&p, &l).into()
        })
        .collect();
    let report = with_bootstrap(report, &predictions, y, groups, grid.objective_metric, seed)?;
    Ok(GridResult {
        best: configs[best],
        report,
        predictions,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedResult {
    /// Outer-fold report: each outer fold's predictions come from a model
    /// tuned and trained without that fold.
    pub report: EvalReport,
    pub predictions: Vec<u8>,
    pub outer_configs: Vec<ModelConfig>,
}

/// Nested cross-validation: an inner grid search picks the configuration
/// on each outer training split, which is then refit and scored on the
/// held-out games.
pub fn nested_cv<S: AsRef<str>>(
    x: &Matrix,
    y: &[u8],
    groups: &[S],
    grid: &Grid,
    k_folds: usize,
    seed: u64,
    names: &[String],
) -> Result<NestedResult> {
    check_labels(y, x.rows())?;
    let outer = grouped_kfold(groups, k_folds, seed)?;
    let mut predictions = vec![0u8; y.len()];
    let mut outer_configs = Vec::with_capacity(outer.len());
    let mut per_fold = Vec::with_capacity(outer.len());
    for (f, val) in outer.iter().enumerate() {
        let in_val: BTreeSet<usize> = val.iter().copied().collect();
        let train: Vec<usize> = (0..y.len()).filter(|i| !in_val.contains(i)).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
        let gt: Vec<&str> = train.iter().map(|&i| groups[i].as_ref()).collect();
        let inner = grid_search(&xt, &yt, &gt, grid, k_folds, stats_seed(seed, f))?;
        let model = train_model(&xt, &yt, &inner.best, names)?;
        let preds = model.predict(&x.select_rows(val))?;
        for (r, &i) in val.iter().enumerate() {
            predictions[i] = preds[r];
        }
        let l: Vec<u8> = val.iter().map(|&i| y[i]).collect();
        per_fold.push(Confusion::from_predictions(&preds, &l).into());
        outer_configs.push(inner.best);
    }
    let mut report = evaluate(&predictions, y)?;
    report.per_fold = per_fold;
    let report = with_bootstrap(report, &predictions, y, groups, grid.objective_metric, seed)?;
    Ok(NestedResult {
        report,
        predictions,
        outer_configs,
    })
}

fn stats_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn train_model(x: &Matrix, y: &[u8], config: &ModelConfig, names: &[String]) -> Result<TrainedModel> {
    train(x, y, config, names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    /// `B`, `V` or `B-V`, taken from the `source:cue` feature name.
    pub source: String,
    pub cue: String,
    pub coefficient: f64,
}

/// Selected features by decreasing |coefficient|.
pub fn rank_features(model: &TrainedModel) -> Vec<RankedFeature> {
    let mut out: Vec<(usize, RankedFeature)> = model
        .feature_names
        .iter()
        .zip(&model.weights)
        .enumerate()
        .map(|(k, (name, w))| {
            let (source, cue) = name.split_once(':').unwrap_or(("", name.as_str()));
            (
                k,
                RankedFeature {
                    name: name.clone(),
                    source: source.to_string(),
                    cue: cue.to_string(),
                    coefficient: *w,
                },
            )
        })
        .collect();
    out.sort_by(|(ka, a), (kb, b)| {
        b.coefficient
            .abs()
            .total_cmp(&a.coefficient.abs())
            .then(ka.cmp(kb))
    });
    out.into_iter().map(|(_, r)| r).collect()
}

/// Positive and negative features as two aligned text columns.
pub fn format_ranking(ranking: &[RankedFeature]) -> String {
    let pos: Vec<&RankedFeature> = ranking.iter().filter(|r| r.coefficient > 0.0).collect();
    let neg: Vec<&RankedFeature> = ranking.iter().filter(|r| r.coefficient < 0.0).collect();
    let cell = |r: Option<&&RankedFeature>| {
        r.map(|r| format!("{:<4} {:<20} {:+.4}", r.source, r.cue, r.coefficient))
            .unwrap_or_default()
    };
    let mut out = format!("{:<34}  {}\n", "Positive features", "Negative features");
    for i in 0..pos.len().max(neg.len()) {
        out.push_str(&format!("{:<34}  {}\n", cell(pos.get(i)), cell(neg.get(i))).trim_end().to_string());
        out.push('\n');
    }
    out
}

pub const ARTIFACT_HEADER: &str = "betrayal-model";
pub const ARTIFACT_VERSION: u32 = 1;

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Versioned `key=value` text form of a model.
pub fn to_artifact(model: &TrainedModel) -> String {
    let c = &model.config;
    let mut out = format!("{ARTIFACT_HEADER} {ARTIFACT_VERSION}\n");
    let mut kv = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
    kv("k_features", c.k_features.to_string());
    kv("scorer", c.scorer.to_string());
    kv("class_weight", c.class_weight.to_string());
    kv("regularizer", c.regularizer.to_string());
    kv("c", c.c.to_string());
    kv("objective_metric", c.objective_metric.to_string());
    kv("n_features", model.n_features.to_string());
    kv("selected_indices", join(&model.selected_indices));
    kv("feature_names", model.feature_names.join(","));
    kv("means", join(&model.standardization.means));
    kv("sds", join(&model.standardization.sds));
    kv("weights", join(&model.weights));
    kv("intercept", model.intercept.to_string());
    out
}

pub fn from_artifact(text: &str) -> Result<TrainedModel> {
    let err = |line: usize, message: String| ModelError::Artifact { line, message };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty artifact".into()))?;
    match header.split_once(' ') {
        Some((h, v)) if h == ARTIFACT_HEADER => {
            if v.trim() != ARTIFACT_VERSION.to_string() {
                return Err(err(1, format!("unsupported version {v}")));
            }
        }
        _ => return Err(err(1, format!("expected `{ARTIFACT_HEADER} {ARTIFACT_VERSION}`"))),
    }
    let mut map: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(i + 1, "expected key=value".into()))?;
        map.insert(k.trim(), (i + 1, v.trim()));
    }
    let get = |k: &str| map.get(k).copied().ok_or_else(|| err(0, format!("missing key {k}")));
    fn parse<T: FromStr>(k: &str, (line, v): (usize, &str)) -> Result<T> {
        v.parse().map_err(|_| ModelError::Artifact {
            line,
            message: format!("bad value for {k}: {v:?}"),
        })
    }
    fn list<T: FromStr>(k: &str, (line, v): (usize, &str)) -> Result<Vec<T>> {
        if v.is_empty() {
            return Ok(vec![]);
        }
        v.split(',').map(|s| parse(k, (line, s))).collect()
    }
    let config = ModelConfig {
        k_features: parse("k_features", get("k_features")?)?,
        scorer: parse("scorer", get("scorer")?)?,
        class_weight: parse("class_weight", get("class_weight")?)?,
        regularizer: parse("regularizer", get("regularizer")?)?,
        c: parse("c", get("c")?)?,
        objective_metric: parse("objective_metric", get("objective_metric")?)?,
    };
    let model = TrainedModel {
        n_features: parse("n_features", get("n_features")?)?,
        selected_indices: list("selected_indices", get("selected_indices")?)?,
        feature_names: list("feature_names", get("feature_names")?)?,
        weights: list("weights", get("weights")?)?,
        intercept: parse("intercept", get("intercept")?)?,
        standardization: Standardization {
            means: list("means", get("means")?)?,
            sds: list("sds", get("sds")?)?,
        },
        config,
    };
    let k = model.selected_indices.len();
    for (name, len) in [
        ("feature_names", model.feature_names.len()),
        ("means", model.standardization.means.len()),
        ("sds", model.standardization.sds.len()),
        ("weights", model.weights.len()),
    ] {
        if len != k {
            return Err(err(0, format!("{name} has {len} entries, expected {k}")));
        }
    }
    if model.selected_indices.iter().any(|&j| j >= model.n_features) {
        return Err(err(0, "selected index out of range".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col_matrix(cols: &[Vec<f64>]) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..cols[0].len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn anova_hand_example() {
        let x = col_matrix(&[vec![0.0, 1.0, 2.0, 3.0]]);
        let f = anova_f_scores(&x, &[0, 0, 1, 1]).unwrap();
        assert!((f[0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_scores_zero() {
        let x = col_matrix(&[vec![5.0; 4], vec![0.0, 1.0, 1.0, 3.0]]);
        let y = [0, 0, 1, 1];
        assert_eq!(anova_f_scores(&x, &y).unwrap()[0], 0.0);
        assert_eq!(chi2_scores(&x, &y).unwrap()[0], 0.0);
        for s in Scorer::ALL {
            assert_eq!(univariate_select(&x, &y, KFeatures::Count(1), *s).unwrap(), vec![1]);
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = col_matrix(&[vec![0.0, 1.0]]);
        assert_eq!(anova_f_scores(&x, &[1, 1]).unwrap_err(), ModelError::SingleClass);
        assert_eq!(
            fit_logistic(&x, &[0, 0], &ModelConfig::default()).unwrap_err(),
            ModelError::SingleClass
        );
    }

    #[test]
    fn non_finite_rejected() {
        let x = col_matrix(&[vec![0.0, f64::NAN]]);
        assert!(matches!(
            fit_logistic(&x, &[0, 1], &ModelConfig::default()),
            Err(ModelError::NonFinite { row: 1, col: 0 })
        ));
    }

    #[test]
    fn chi2_matches_hand_computation() {
        // scaled column [0, .5, 1, 1]; class sums 0.5 and 2.0; p1 = 0.5
        let x = col_matrix(&[vec![0.0, 1.0, 2.0, 2.0]]);
        let s = chi2_scores(&x, &[0, 0, 1, 1]).unwrap();
        let expected = (0.5f64 - 1.25).powi(2) / 1.25 + (2.0f64 - 1.25).powi(2) / 1.25;
        assert!((s[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn all_zero_features_give_base_rate_intercept() {
        let x = Matrix::new(5, 2, vec![0.0; 10]).unwrap();
        let y = [1, 0, 0, 0, 1];
        let m = fit_logistic(&x, &y, &ModelConfig::default()).unwrap();
        assert_eq!(m.weights, vec![0.0, 0.0]);
        assert!((m.intercept - (0.4f64 / 0.6).ln()).abs() < 1e-7);
        let bal = ModelConfig {
            class_weight: ClassWeight::Balanced,
            ..Default::default()
        };
        let m = fit_logistic(&x, &y, &bal).unwrap();
        assert!(m.intercept.abs() < 1e-7);
    }

    fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-11 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        (a + b) / 2.0
    }

    #[test]
    fn two_point_problem_matches_golden_section() {
        let x = col_matrix(&[vec![-1.0, 1.0]]);
        let y = [0, 1];
        for reg in Regularizer::ALL {
            let cfg = ModelConfig {
                regularizer: *reg,
                ..Default::default()
            };
            let m = fit_logistic(&x, &y, &cfg).unwrap();
            // standardized x equals x; alternate 1-D searches over (b, w)
            let obj = |b: f64, w: f64| {
                let l = 0.5 * ((1.0 + (-(b + w)).exp()).ln() + (1.0 + (b - w).exp()).ln());
                l + match reg {
                    Regularizer::L2 => 0.5 * w * w,
                    Regularizer::L1 => w.abs(),
                }
            };
            let (mut b, mut w) = (0.0, 0.0);
            for _ in 0..50 {
                w = golden(|v| obj(b, v), -10.0, 10.0);
                b = golden(|v| obj(v, w), -10.0, 10.0);
            }
            assert!(m.weights[0] > 0.0 || *reg == Regularizer::L1);
            assert!((m.weights[0] - w).abs() < 1e-6, "{reg}: {} vs {w}", m.weights[0]);
            assert!((m.intercept - b).abs() < 1e-6);
        }
    }

    #[test]
    fn tiny_c_zeroes_weights() {
        let x = col_matrix(&[vec![-1.0, 1.0]]);
        for reg in Regularizer::ALL {
            let cfg = ModelConfig {
                regularizer: *reg,
                c: 1e-12,
                ..Default::default()
            };
            let m = fit_logistic(&x, &[0, 1], &cfg).unwrap();
            assert!(m.weights[0].abs() < 1e-6);
        }
    }

    fn random_problem(seed: u64, n: usize, d: usize) -> (Matrix, Vec<u8>) {
        let mut rng = SeededRng::new(seed);
        let mut data = Vec::with_capacity(n * d);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let z = row[0] - 0.5 * row[1] + 0.3 * rng.normal();
            y.push(u8::from(z > 0.0));
            data.extend(row);
        }
        (Matrix::new(n, d, data).unwrap(), y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = random_problem(3, 60, 5);
        let p = LogisticProblem::new(&x, &y, sample_weights(&y, ClassWeight::Balanced), 0.7, Regularizer::L2).unwrap();
        let mut rng = SeededRng::new(11);
        for _ in 0..100 {
            let theta: Vec<f64> = (0..p.dim()).map(|_| 2.0 * rng.normal()).collect();
            let g = p.gradient(&theta);
            for j in 0..p.dim() {
                let mut hi = theta.clone();
                let mut lo = theta.clone();
                hi[j] += 1e-5;
                lo[j] -= 1e-5;
                let fd = (p.value(&hi) - p.value(&lo)) / 2e-5;
                let rel = (fd - g[j]).abs() / g[j].abs().max(fd.abs()).max(1e-8);
                assert!(rel <= 1e-4, "coordinate {j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn objective_never_increases() {
        let (x, y) = random_problem(5, 200, 8);
        for reg in Regularizer::ALL {
            for c in [1e-3, 1.0, 1e6] {
                let cfg = ModelConfig {
                    regularizer: *reg,
                    c,
                    ..Default::default()
                };
                let (_, trace) = fit_logistic_traced(&x, &y, &cfg).unwrap();
                assert!(trace.converged, "{reg} C={c}");
                for w in trace.objective.windows(2) {
                    assert!(w[1] <= w[0], "{reg} C={c}: {} > {}", w[1], w[0]);
                }
            }
        }
    }

    #[test]
    fn l1_is_sparse_and_l2_optimal_gradient_vanishes() {
        let (x, y) = random_problem(8, 300, 10);
        let l1 = fit_logistic(
            &x,
            &y,
            &ModelConfig {
                regularizer: Regularizer::L1,
                c: 10.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(l1.weights[0] > 0.0 && l1.weights[1] < 0.0);
        assert!(l1.weights[2..].iter().filter(|w| **w == 0.0).count() >= 4);
    }

    #[test]
    fn prediction_invariant_to_rescaling() {
        let (x, y) = random_problem(9, 120, 4);
        let cfg = ModelConfig {
            c: 0.1,
            ..Default::default()
        };
        let m = fit_logistic(&x, &y, &cfg).unwrap();
        let scaled: Vec<f64> = (0..x.rows())
            .flat_map(|i| x.row(i).iter().enumerate().map(|(j, v)| v * (j as f64 + 1.0) * 37.5).collect::<Vec<_>>())
            .collect();
        let xs = Matrix::new(x.rows(), x.cols(), scaled).unwrap();
        let ms = fit_logistic(&xs, &y, &cfg).unwrap();
        assert_eq!(m.predict(&x).unwrap(), ms.predict(&xs).unwrap());
    }

    #[test]
    fn planted_feature_selected() {
        let mut rng = SeededRng::new(21);
        let n = 80;
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let rows: Vec<Vec<f64>> = y
            .iter()
            .map(|&l| {
                (0..12)
                    .map(|j| if j == 7 { l as f64 * 3.0 + 0.1 * rng.unit() } else { rng.unit() })
                    .collect()
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        for s in Scorer::ALL {
            let scores = feature_scores(&x, &y, *s).unwrap();
            let best = (0..12).max_by(|a, b| scores[*a].total_cmp(&scores[*b])).unwrap();
            assert_eq!(best, 7);
            assert_eq!(univariate_select(&x, &y, KFeatures::Count(1), *s).unwrap(), vec![7]);
        }
        assert_eq!(univariate_select(&x, &y, KFeatures::Count(99), Scorer::AnovaF).unwrap().len(), 12);
    }

    #[test]
    fn kfold_keeps_groups_whole() {
        let groups = ["a", "a", "b", "c", "c", "d"];
        let folds = grouped_kfold(&groups, 2, 4).unwrap();
        assert_eq!(folds.len(), 2);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
        for f in &folds {
            let gs: BTreeSet<&str> = f.iter().map(|&i| groups[i]).collect();
            assert_eq!(gs.len(), 2);
            for other in &folds {
                if other != f {
                    assert!(other.iter().all(|i| !gs.contains(groups[*i])));
                }
            }
        }
        assert_eq!(folds, grouped_kfold(&groups, 2, 4).unwrap());
        assert_eq!(
            grouped_kfold(&groups, 5, 0).unwrap_err(),
            ModelError::TooFewGroups { groups: 4, k: 5 }
        );
    }

    #[test]
    fn metrics_examples() {
        let c = Confusion {
            tp: 3,
            fp: 1,
            fn_: 1,
            tn: 3,
        };
        assert_eq!(c.mcc(), 0.5);
        let y = [1, 0, 1, 1, 0];
        let r = evaluate(&y, &y).unwrap();
        assert_eq!((r.accuracy, r.f1, r.mcc), (1.0, 1.0, 1.0));
        assert_eq!(evaluate(&[0; 5], &y).unwrap().mcc, 0.0);
        assert_eq!(evaluate(&[1; 5], &y).unwrap().mcc, 0.0);
        assert!((r.majority_accuracy - 0.6).abs() < 1e-12);
        assert!(matches!(evaluate(&[1], &y), Err(ModelError::LengthMismatch { .. })));
    }

    #[test]
    fn grid_of_one() {
        let (x, y) = random_problem(12, 100, 3);
        let groups: Vec<String> = (0..100).map(|i| format!("g{}", i / 5)).collect();
        let cfg = ModelConfig {
            c: 1.0,
            ..Default::default()
        };
        let r = grid_search(&x, &y, &groups, &Grid::single(cfg), 5, 1).unwrap();
        assert_eq!(r.best, cfg);
        assert_eq!(r.entries.len(), 1);
        assert!(r.report.mcc > 0.5);
        assert_eq!(r.report.per_fold.len(), 5);
        assert_eq!(r.report.confusion.total(), 100);
    }

    #[test]
    fn grid_tie_prefers_small_c() {
        // feature carries no signal: all C give the same majority answer
        let x = Matrix::new(20, 1, vec![0.0; 20]).unwrap();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i % 4 == 0)).collect();
        let groups: Vec<String> = (0..20).map(|i| format!("g{i}")).collect();
        let grid = Grid {
            cs: vec![1.0, 1e-3, 10.0],
            ..Grid::single(ModelConfig::default())
        };
        let r = grid_search(&x, &y, &groups, &grid, 5, 3).unwrap();
        assert_eq!(r.best.c, 1e-3);
    }

    #[test]
    fn artifact_round_trip() {
        let (x, y) = random_problem(13, 50, 4);
        let names: Vec<String> = ["B:a", "V:b", "B-V:c", "B:d"].iter().map(|s| s.to_string()).collect();
        let cfg = ModelConfig {
            k_features: KFeatures::Count(2),
            c: 0.3,
            ..Default::default()
        };
        let m = train(&x, &y, &cfg, &names).unwrap();
        let text = to_artifact(&m);
        let back = from_artifact(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_artifact(&back), text);
        assert!(from_artifact("nope").is_err());
        assert!(from_artifact(&text.replace("betrayal-model 1", "betrayal-model 9")).is_err());
    }

    #[test]
    fn ranking_orders_by_magnitude() {
        let (x, y) = random_problem(14, 200, 3);
        let names: Vec<String> = ["B:pos", "V:neg", "B-V:noise"].iter().map(|s| s.to_string()).collect();
        let m = train(&x, &y, &ModelConfig::default(), &names).unwrap();
        let r = rank_features(&m);
        assert_eq!(r[0].name, "B:pos");
        assert_eq!((r[1].source.as_str(), r[1].cue.as_str()), ("V", "neg"));
        assert!(r[1].coefficient < 0.0);
        let one = train(
            &x,
            &y,
            &ModelConfig {
                k_features: KFeatures::Count(1),
                ..Default::default()
            },
            &names,
        )
        .unwrap();
        assert_eq!(rank_features(&one).len(), 1);
        assert!(format_ranking(&r).contains("Negative features"));
    }

    proptest! {
        #[test]
        fn mcc_properties(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..50) {
            let c = Confusion { tp, fp, fn_, tn };
            let m = c.mcc();
            prop_assert!((-1.0..=1.0).contains(&m));
            let flipped = Confusion { tp: fn_, fp: tn, fn_: tp, tn: fp };
            prop_assert!((flipped.mcc() + m).abs() < 1e-12);
        }

        #[test]
        fn mcc_identity(labels in prop::collection::vec(0u8..2, 2..40)) {
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let inverted: Vec<u8> = labels.iter().map(|v| 1 - v).collect();
            prop_assert_eq!(evaluate(&labels, &labels).unwrap().mcc, 1.0);
            prop_assert_eq!(evaluate(&inverted, &labels).unwrap().mcc, -1.0);
        }
    }
}
