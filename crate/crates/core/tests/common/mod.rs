//! Plain-arithmetic Gaussian oracle for the integration tests: row-major
//! matrices, determinants by elimination with partial pivoting.
#![allow(dead_code)]

use std::f64::consts::{E, PI};

pub type Mat = Vec<Vec<f64>>;

pub fn det(m: &Mat) -> f64 {
    let n = m.len();
    let mut a = m.clone();
    let mut d = 1.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            a.swap(piv, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    d
}

pub fn sub(m: &Mat, idx: &[usize]) -> Mat {
    idx.iter().map(|&i| idx.iter().map(|&j| m[i][j]).collect()).collect()
}

pub fn entropy(m: &Mat, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    0.5 * (idx.len() as f64 * (2.0 * PI * E).ln() + det(&sub(m, idx)).ln())
}

fn join(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().chain(b).copied().collect()
}

pub fn mi(m: &Mat, a: &[usize], b: &[usize]) -> f64 {
    entropy(m, a) + entropy(m, b) - entropy(m, &join(a, b))
}

pub fn cmi(m: &Mat, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
    entropy(m, &join(a, c)) + entropy(m, &join(b, c)) - entropy(m, &join(&join(a, b), c)) - entropy(m, c)
}

pub fn o_info(m: &Mat, s: &[usize]) -> f64 {
    let n = s.len();
    let mut v = (n as f64 - 2.0) * entropy(m, s);
    for k in 0..n {
        let rest: Vec<usize> = s.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, &x)| x).collect();
        v += entropy(m, &[s[k]]) - entropy(m, &rest);
    }
    v
}

/// `(1−n) I(y; S) + Σ_k I(y; S∖k)`.
pub fn delta_y(m: &Mat, s: &[usize], y: usize) -> f64 {
    let n = s.len();
    let mut v = (1.0 - n as f64) * mi(m, &[y], s);
    for k in 0..n {
        let rest: Vec<usize> = s.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, &x)| x).collect();
        v += mi(m, &[y], &rest);
    }
    v
}

/// Sample covariance (divisor rows − 1) of equally long columns.
pub fn covariance(cols: &[Vec<f64>]) -> Mat {
    let rows = cols[0].len() as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / rows).collect();
    let d = cols.len();
    let mut m = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..=a {
            let s: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| (x - means[a]) * (y - means[b])).sum();
            m[a][b] = s / (rows - 1.0);
            m[b][a] = m[a][b];
        }
    }
    m
}

/// Covariance of the presents (`0..n`) and lag-1 values (`n..2n`) of the
/// given columns.
pub fn lag1_covariance(cols: &[&[f64]]) -> Mat {
    let t = cols[0].len();
    let mut all: Vec<Vec<f64>> = cols.iter().map(|c| c[1..].to_vec()).collect();
    all.extend(cols.iter().map(|c| c[..t - 1].to_vec()));
    covariance(&all)
}

/// Dynamic O-information at lag 1 from a [`lag1_covariance`] of `n` columns.
pub fn d_omega_lag1(m: &Mat, n: usize, target: usize, sources: &[usize]) -> f64 {
    let past = |v: &[usize]| -> Vec<usize> { v.iter().map(|&j| n + j).collect() };
    let y_past = [n + target];
    let k = sources.len();
    let mut v = (1.0 - k as f64) * cmi(m, &[target], &past(sources), &y_past);
    for drop in 0..k {
        let rest: Vec<usize> = sources.iter().enumerate().filter(|(j, _)| *j != drop).map(|(_, &x)| x).collect();
        v += cmi(m, &[target], &past(&rest), &y_past);
    }
    v
}
