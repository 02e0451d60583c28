use super::{CoxData, TieMethod};
use crate::error::{Error, Result};
use crate::numstats::Matrix;

/// Log partial likelihood with its gradient and Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct LikEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Matrix,
}

/// Evaluates the log partial likelihood at `beta`.
///
/// Risk set at event time `t` is every row with `start < t <= stop`. Rows enter in a
/// single descending sweep over `stop` and leave when `start >= t`.
pub fn partial_loglik(data: &CoxData, beta: &[f64], ties: TieMethod) -> Result<LikEval> {
    let n = data.n_rows();
    let p = data.n_cols();
    if beta.len() != p {
        return Err(Error::invalid(format!("beta has length {}, design has {p} columns", beta.len())));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("beta contains non-finite values"));
    }
    if data.n_events() == 0 {
        return Err(Error::DegenerateLikelihood("no events".into()));
    }

    // centred covariates keep exp() in range; the likelihood is shift invariant
    let centred = &data.xc;
    let row = |i: usize| &centred[i * p..(i + 1) * p];
    let eta: Vec<f64> = (0..n).map(|i| row(i).iter().zip(beta).map(|(x, b)| x * b).sum()).collect();
    let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let risk: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

    let by_stop = &data.by_stop;
    let by_start = &data.by_start;

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p * p];
    let add = |i: usize, sign: f64, s0: &mut f64, s1: &mut [f64], s2: &mut [f64]| {
        let r = sign * risk[i];
        let x = row(i);
        *s0 += r;
        for (a, &xa) in x.iter().enumerate() {
            let rx = r * xa;
            s1[a] += rx;
            for (s, &xb) in s2[a * p..a * p + a + 1].iter_mut().zip(x) {
                *s += rx * xb;
            }
        }
    };

    let mut value = 0.0;
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; p * p];
    let mut d1 = vec![0.0; p];
    let mut d2 = vec![0.0; p * p];
    let mut a = vec![0.0; p];

    let mut deaths = Vec::new();
    let mut k = 0;
    let mut out = 0;
    while k < n {
        let t = data.stop[by_stop[k]];
        let mut kk = k;
        deaths.clear();
        while kk < n && data.stop[by_stop[kk]] == t {
            let i = by_stop[kk];
            add(i, 1.0, &mut s0, &mut s1, &mut s2);
            if data.event[i] {
                deaths.push(i);
            }
            kk += 1;
        }
        k = kk;
        if deaths.is_empty() {
            continue;
        }
        while out < n && data.start[by_start[out]] >= t {
            add(by_start[out], -1.0, &mut s0, &mut s1, &mut s2);
            out += 1;
        }

        let mut dd0 = 0.0;
        d1.iter_mut().for_each(|v| *v = 0.0);
        d2.iter_mut().for_each(|v| *v = 0.0);
        for &i in &deaths {
            value += eta[i];
            dd0 += risk[i];
            let x = row(i);
            for (u, &xu) in x.iter().enumerate() {
                grad[u] += xu;
                d1[u] += risk[i] * xu;
                for (s, &xv) in d2[u * p..u * p + u + 1].iter_mut().zip(x) {
                    *s += risk[i] * xu * xv;
                }
            }
        }
        let d = deaths.len();
        for l in 0..d {
            let f = match ties {
                TieMethod::Efron => l as f64 / d as f64,
                TieMethod::Breslow => 0.0,
            };
            let den = s0 - f * dd0;
            if !(den > 0.0) {
                return Err(Error::DegenerateLikelihood(format!("empty risk set at t = {t}")));
            }
            value -= den.ln() + shift;
            for u in 0..p {
                a[u] = (s1[u] - f * d1[u]) / den;
                grad[u] -= a[u];
            }
            for u in 0..p {
                for v in 0..=u {
                    hess[u * p + v] -= (s2[u * p + v] - f * d2[u * p + v]) / den - a[u] * a[v];
                }
            }
        }
    }

    let mut hessian = Matrix::zeros(p);
    for u in 0..p {
        for v in 0..=u {
            hessian[(u, v)] = hess[u * p + v];
            hessian[(v, u)] = hess[u * p + v];
        }
    }
    if !value.is_finite() {
        return Err(Error::DegenerateLikelihood("non-finite log partial likelihood".into()));
    }
    Ok(LikEval { value, gradient: grad, hessian })
}
