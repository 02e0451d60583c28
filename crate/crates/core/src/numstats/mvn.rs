//! Rectangle probabilities of the multivariate normal distribution.
//!
//! Separation of variables with Genz–Bretz variable prioritisation. The remaining
//! `dim - 1` dimensional integral over the unit cube is evaluated with randomly
//! shifted Richtmyer lattices (tent-transformed, antithetic), and the lattice size
//! doubles until three standard errors across the shifts drop below the target.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use super::normal::{norm_cdf, norm_pdf, norm_quantile};
use super::rng::RngStream;
use crate::error::{Error, Result};

pub const MAX_DIM: usize = 8;

/// Correlation matrix for the MVN routine: symmetric, unit diagonal, at most 8×8.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrMatrix(Matrix);

impl CorrMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        let d = m.dim();
        if d == 0 || d > MAX_DIM {
            return Err(Error::invalid(format!("correlation dimension {d} outside 1..={MAX_DIM}")));
        }
        if !m.is_symmetric(1e-12) {
            return Err(Error::invalid("correlation matrix is not symmetric"));
        }
        for i in 0..d {
            if (m[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("correlation diagonal entry {i} is {}", m[(i, i)])));
            }
        }
        Ok(Self(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Matrix::identity(dim))
    }

    /// `rho` everywhere off the diagonal.
    pub fn equicorrelated(dim: usize, rho: f64) -> Result<Self> {
        let mut m = Matrix::identity(dim);
        for i in 0..dim {
            for j in 0..dim {
                if i != j {
                    m[(i, j)] = rho;
                }
            }
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MvnOptions {
    /// Target absolute error (three standard errors across random shifts).
    pub abs_tol: f64,
    pub shifts: usize,
    pub initial_points: usize,
    pub max_points: usize,
}

impl Default for MvnOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-7, shifts: 10, initial_points: 512, max_points: 1 << 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub value: f64,
    pub error: f64,
    pub points: usize,
}

/// `P(lower < Z < upper)` for `Z ~ N(0, corr)` with the default options.
pub fn mvn_rect_prob(lower: &[f64], upper: &[f64], corr: &CorrMatrix, seed: RngStream) -> Result<f64> {
    Ok(mvn_rect_prob_with(lower, upper, corr, seed, MvnOptions::default())?.value)
}

pub fn mvn_rect_prob_with(
    lower: &[f64],
    upper: &[f64],
    corr: &CorrMatrix,
    seed: RngStream,
    opts: MvnOptions,
) -> Result<MvnEstimate> {
    let d = corr.dim();
    if lower.len() != d || upper.len() != d {
        return Err(Error::invalid("bound vectors must match the correlation dimension"));
    }
    for i in 0..d {
        if lower[i].is_nan() || upper[i].is_nan() || lower[i] >= upper[i] {
            return Err(Error::invalid(format!("require lower < upper at coordinate {i}")));
        }
    }
    let problem = Prepared::new(lower, upper, corr.matrix())?;
    if problem.rank == 1 || problem.degenerate_zero {
        let value = if problem.degenerate_zero { 0.0 } else { problem.first_width };
        return Ok(MvnEstimate { value, error: 0.0, points: 0 });
    }
    if problem.rank <= 3 {
        let mut evals = 0;
        let (value, error) = problem.quadrature(opts.abs_tol * 1e-3, &mut evals);
        return Ok(MvnEstimate { value: value.clamp(0.0, 1.0), error, points: evals });
    }

    let m = problem.rank - 1;
    let gens: Vec<f64> = PRIMES[..m].iter().map(|&p| (p as f64).sqrt()).collect();
    let mut rng = seed.rng();
    let mut n = opts.initial_points.max(16);
    let mut w = vec![0.0; m];
    let mut y = vec![0.0; problem.rank];
    loop {
        let mut means = Vec::with_capacity(opts.shifts);
        for _ in 0..opts.shifts {
            let shift: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let mut acc = 0.0;
            for k in 1..=n {
                for j in 0..m {
                    let x = (k as f64 * gens[j] + shift[j]).fract();
                    w[j] = 1.0 - (2.0 * x - 1.0).abs();
                }
                acc += problem.integrand(&w, &mut y);
                for v in w.iter_mut() {
                    *v = 1.0 - *v;
                }
                acc += problem.integrand(&w, &mut y);
            }
            means.push(acc / (2.0 * n as f64));
        }
        let s = means.len() as f64;
        let mean = means.iter().sum::<f64>() / s;
        let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0);
        let error = 3.0 * (var / s).sqrt();
        if error <= opts.abs_tol || n >= opts.max_points {
            if error > opts.abs_tol {
                warn!("MVN probability error {error:.2e} above target {:.1e} at {n} lattice points", opts.abs_tol);
            }
            return Ok(MvnEstimate { value: mean.clamp(0.0, 1.0), error, points: n * opts.shifts });
        }
        n *= 2;
    }
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Conditional variances at or below this are treated as exact linear dependence.
const SINGULAR_TOL: f64 = 1e-6;

/// `lo < coef · y < hi` with `coef[last] > 0`.
struct Constraint {
    coef: Vec<f64>,
    lo: f64,
    hi: f64,
}

/// Lower-trapezoidal factor `Z = L y`, `y ~ N(0, I_rank)`, with each row attached to
/// the last `y` coordinate it involves. A level may carry several constraints when
/// the correlation matrix is singular; they intersect to one interval.
struct Prepared {
    rank: usize,
    levels: Vec<Vec<Constraint>>,
    first_lo: f64,
    first_width: f64,
    degenerate_zero: bool,
}

impl Prepared {
    /// Pivoted Cholesky with the Genz–Bretz ordering: at each step pick the remaining
    /// coordinate with the smallest conditional interval probability.
    fn new(lower: &[f64], upper: &[f64], corr: &Matrix) -> Result<Self> {
        let d = corr.dim();
        let mut c = corr.clone();
        let mut a = lower.to_vec();
        let mut b = upper.to_vec();
        let mut l = Matrix::zeros(d);
        let mut ybar = vec![0.0; d];
        let mut rank = 0;
        for i in 0..d {
            let mut best = None;
            let mut best_p = f64::INFINITY;
            for j in i..d {
                let mut var = c[(j, j)];
                let mut shift = 0.0;
                for k in 0..i {
                    var -= l[(j, k)] * l[(j, k)];
                    shift += l[(j, k)] * ybar[k];
                }
                if var < -SINGULAR_TOL {
                    return Err(Error::invalid(format!(
                        "correlation matrix is not positive semidefinite (pivot {i})"
                    )));
                }
                if var <= SINGULAR_TOL {
                    continue;
                }
                let sd = var.sqrt();
                let p = norm_cdf((b[j] - shift) / sd) - norm_cdf((a[j] - shift) / sd);
                if best.is_none() || p < best_p {
                    best_p = p;
                    best = Some(j);
                }
            }
            let Some(best) = best else { break };
            if best != i {
                swap_sym(&mut c, i, best);
                a.swap(i, best);
                b.swap(i, best);
                for k in 0..i {
                    let t = l[(i, k)];
                    l[(i, k)] = l[(best, k)];
                    l[(best, k)] = t;
                }
            }
            let mut var = c[(i, i)];
            for k in 0..i {
                var -= l[(i, k)] * l[(i, k)];
            }
            let sd = var.sqrt();
            l[(i, i)] = sd;
            for r in (i + 1)..d {
                let mut s = c[(r, i)];
                for k in 0..i {
                    s -= l[(r, k)] * l[(i, k)];
                }
                l[(r, i)] = s / sd;
            }
            let mut shift = 0.0;
            for k in 0..i {
                shift += l[(i, k)] * ybar[k];
            }
            let lo = (a[i] - shift) / sd;
            let hi = (b[i] - shift) / sd;
            let mass = norm_cdf(hi) - norm_cdf(lo);
            ybar[i] = if mass > 1e-300 {
                (norm_pdf(lo) - norm_pdf(hi)) / mass
            } else if lo.is_finite() {
                lo
            } else {
                hi
            };
            rank = i + 1;
        }

        let mut levels: Vec<Vec<Constraint>> = (0..rank).map(|_| Vec::new()).collect();
        for row in 0..d {
            let coef: Vec<f64> = (0..rank.min(row + 1)).map(|k| l[(row, k)]).collect();
            let scale = coef.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let last = coef
                .iter()
                .rposition(|v| v.abs() > 1e-6 * scale)
                .expect("unit-variance row has a nonzero coefficient");
            let mut coef = coef[..=last].to_vec();
            let (mut lo, mut hi) = (a[row], b[row]);
            if coef[last] < 0.0 {
                coef.iter_mut().for_each(|v| *v = -*v);
                (lo, hi) = (-hi, -lo);
            }
            levels[last].push(Constraint { coef, lo, hi });
        }

        let (zlo, zhi) = interval(&levels[0], &[]);
        let first_lo = norm_cdf(zlo);
        let first_width = (norm_cdf(zhi) - first_lo).max(0.0);
        Ok(Self { rank, levels, first_lo, first_width, degenerate_zero: first_width <= 0.0 })
    }

    fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let mut d_prev = self.first_lo;
        let mut width = self.first_width;
        let mut f = width;
        for i in 1..self.rank {
            let u = (d_prev + w[i - 1] * width).clamp(1e-300, 1.0 - 1e-16);
            y[i - 1] = norm_quantile(u);
            let (zlo, zhi) = interval(&self.levels[i], &y[..i]);
            if zlo >= zhi {
                return 0.0;
            }
            let lo = norm_cdf(zlo);
            width = norm_cdf(zhi) - lo;
            if width <= 0.0 {
                return 0.0;
            }
            d_prev = lo;
            f *= width;
        }
        f
    }
}

impl Prepared {
    /// Deterministic adaptive Gauss–Kronrod over the first `rank - 1` levels (rank 2
    /// or 3); the last level is integrated in closed form.
    fn quadrature(&self, tol: f64, evals: &mut usize) -> (f64, f64) {
        let (lo0, hi0) = clip(interval(&self.levels[0], &[]));
        if lo0 >= hi0 {
            return (0.0, 0.0);
        }
        let mut cuts = vec![lo0, hi0];
        if self.rank == 3 {
            cuts.extend(crossings(&self.levels[1], &[]).into_iter().filter(|&t| t > lo0 && t < hi0));
        }
        cuts.sort_by(f64::total_cmp);
        let mut total = (0.0, 0.0);
        let mut inner_err = 0.0;
        for w in cuts.windows(2) {
            let r = adaptive(
                &mut |y1| {
                    let mut y = [y1, 0.0];
                    let (v, e) = if self.rank == 2 {
                        (self.last_width(&y[..1]), 0.0)
                    } else {
                        self.inner(&mut y, tol, evals)
                    };
                    inner_err += norm_pdf(y1) * e;
                    norm_pdf(y1) * v
                },
                w[0],
                w[1],
                tol,
                0,
            );
            total.0 += r.0;
            total.1 += r.1;
        }
        (total.0, total.1 + inner_err.min(1.0))
    }

    /// `∫ φ(y2) W(y1, y2) dy2` over the level-1 interval.
    fn inner(&self, y: &mut [f64; 2], tol: f64, evals: &mut usize) -> (f64, f64) {
        let (lo, hi) = clip(interval(&self.levels[1], &y[..1]));
        if lo >= hi {
            return (0.0, 0.0);
        }
        let mut cuts = vec![lo, hi];
        cuts.extend(crossings(&self.levels[2], &y[..1]).into_iter().filter(|&t| t > lo && t < hi));
        cuts.sort_by(f64::total_cmp);
        let y1 = y[0];
        let mut out = (0.0, 0.0);
        for w in cuts.windows(2) {
            let r = adaptive(
                &mut |y2| {
                    *evals += 1;
                    norm_pdf(y2) * self.last_width(&[y1, y2])
                },
                w[0],
                w[1],
                tol,
                0,
            );
            out.0 += r.0;
            out.1 += r.1;
        }
        out
    }

    fn last_width(&self, y: &[f64]) -> f64 {
        let (lo, hi) = interval(&self.levels[y.len()], y);
        if lo >= hi {
            0.0
        } else {
            (norm_cdf(hi) - norm_cdf(lo)).max(0.0)
        }
    }
}

/// Standard normal mass beyond ±9 is below 1e-18.
fn clip((lo, hi): (f64, f64)) -> (f64, f64) {
    (lo.max(-9.0), hi.min(9.0))
}

/// Values of the level's free coordinate where two of its bounds coincide; the
/// closed-form width has kinks only there.
fn crossings(level: &[Constraint], y: &[f64]) -> Vec<f64> {
    // bound = (B − shift − coef[n]·t) / coef[last] is linear in the next coordinate t
    let n = y.len();
    let mut lines = Vec::new();
    for c in level {
        let k = c.coef.len() - 1;
        if k != n + 1 {
            continue;
        }
        let shift: f64 = c.coef[..n].iter().zip(y).map(|(a, b)| a * b).sum();
        let slope = -c.coef[n] / c.coef[k];
        for b in [c.lo, c.hi] {
            if b.is_finite() {
                lines.push(((b - shift) / c.coef[k], slope));
            }
        }
    }
    let mut out = Vec::new();
    for i in 0..lines.len() {
        for j in (i + 1)..lines.len() {
            let (a1, s1) = lines[i];
            let (a2, s2) = lines[j];
            if (s1 - s2).abs() > 1e-12 {
                out.push((a2 - a1) / (s1 - s2));
            }
        }
    }
    out
}

const GK_X: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GK_WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WK[7] * fc;
    let mut g = GK_WG[3] * fc;
    for i in 0..7 {
        let s = f(c - h * GK_X[i]) + f(c + h * GK_X[i]);
        k += GK_WK[i] * s;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> (f64, f64) {
    let (v, e) = gk15(f, a, b);
    if e <= tol || depth >= 40 || (b - a) < 1e-12 {
        return (v, e);
    }
    let m = 0.5 * (a + b);
    let l = adaptive(f, a, m, 0.5 * tol, depth + 1);
    let r = adaptive(f, m, b, 0.5 * tol, depth + 1);
    (l.0 + r.0, l.1 + r.1)
}

/// Interval for the level's own coordinate given the earlier ones.
fn interval(level: &[Constraint], y: &[f64]) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for c in level {
        let k = c.coef.len() - 1;
        let shift: f64 = c.coef[..k].iter().zip(y).map(|(a, b)| a * b).sum();
        lo = lo.max((c.lo - shift) / c.coef[k]);
        hi = hi.min((c.hi - shift) / c.coef[k]);
    }
    (lo, hi)
}

fn swap_sym(c: &mut Matrix, i: usize, j: usize) {
    let d = c.dim();
    for k in 0..d {
        let t = c[(i, k)];
        c[(i, k)] = c[(j, k)];
        c[(j, k)] = t;
    }
    for k in 0..d {
        let t = c[(k, i)];
        c[(k, i)] = c[(k, j)];
        c[(k, j)] = t;
    }
}
