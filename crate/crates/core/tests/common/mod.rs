//! Straight-line reference implementations used as test oracles. Nothing here
//! calls the library's numerical routines; only the seeded random streams are
//! shared, since they define the sampled data.

#![allow(dead_code)]

use flexgt::problem::QuadraticProblem;
use flexgt::rng::{stream, Purpose};
use flexgt::topology::WeightMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub type Dense = Vec<Vec<f64>>;

pub fn dense(w: &WeightMatrix) -> Dense {
    w.entries().to_rows()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, m, k) = (a.len(), b[0].len(), b.len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a[i][t] * b[t][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

pub fn identity(n: usize) -> Dense {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn matpow(w: &Dense, d: u32) -> Dense {
    (0..d).fold(identity(w.len()), |acc, _| matmul(&acc, w))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigenvalues(m: &Dense) -> Vec<f64> {
    let n = m.len();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// `‖W − J‖₂²` via the eigenvalues of the symmetric matrix `W − J`.
pub fn rho(w: &Dense) -> f64 {
    let n = w.len();
    let centered: Dense = w
        .iter()
        .map(|row| row.iter().map(|v| v - 1.0 / n as f64).collect())
        .collect();
    let ev = sym_eigenvalues(&centered);
    let r = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    r * r
}

/// Gaussian elimination with partial pivoting.
pub fn solve(a: &Dense, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Dense = a.iter().zip(b).map(|(row, bi)| {
        let mut r = row.clone();
        r.push(*bi);
        r
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap()).unwrap();
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = m[r][n];
        for c in r + 1..n {
            acc -= m[r][c] * x[c];
        }
        x[r] = acc / m[r][r];
    }
    x
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.len() {
        acc += a[k] * b[k];
    }
    acc
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(1/n) Σ (2 h_i h_iᵀ + μI)` and `(1/n) Σ 2 h_i v̄_i`.
pub fn normal_equations(prob: &QuadraticProblem) -> (Dense, Vec<f64>) {
    let (n, p) = (prob.n(), prob.p());
    let h = prob.features();
    let v = prob.targets();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for i in 0..n {
        for r in 0..p {
            b[r] += 2.0 * h[(i, r)] * v[i] / n as f64;
            for c in 0..p {
                a[r][c] += 2.0 * h[(i, r)] * h[(i, c)] / n as f64;
            }
        }
    }
    for (r, row) in a.iter_mut().enumerate() {
        row[r] += prob.mu();
    }
    (a, b)
}

pub fn optimum(prob: &QuadraticProblem) -> Vec<f64> {
    let (a, b) = normal_equations(prob);
    solve(&a, &b)
}

pub fn local_value(prob: &QuadraticProblem, i: usize, x: &[f64]) -> f64 {
    let r = dot(prob.features().row(i), x) - prob.targets()[i];
    r * r + 0.5 * prob.mu() * dot(x, x) + prob.sigma() * prob.sigma()
}

pub fn value(prob: &QuadraticProblem, x: &[f64]) -> f64 {
    (0..prob.n()).map(|i| local_value(prob, i, x)).sum::<f64>() / prob.n() as f64
}

/// Smoothness constant: the largest eigenvalue `2‖h_i‖² + μ` of any local Hessian.
pub fn smoothness(prob: &QuadraticProblem) -> f64 {
    prob.features()
        .iter_rows()
        .map(|h| 2.0 * dot(h, h) + prob.mu())
        .fold(prob.mu(), f64::max)
}

pub fn exact_grad(prob: &QuadraticProblem, i: usize, x: &[f64]) -> Vec<f64> {
    let h = prob.features().row(i);
    let r = dot(h, x) - prob.targets()[i];
    (0..x.len()).map(|c| 2.0 * h[c] * r + prob.mu() * x[c]).collect()
}

/// The sample drawn for `(seed, node, step)`: exact gradient plus
/// `N(0, σ²/p)` noise per coordinate.
pub fn noisy_grad(prob: &QuadraticProblem, i: usize, x: &[f64], step: u64, seed: u64) -> Vec<f64> {
    let mut g = exact_grad(prob, i, x);
    if prob.sigma() > 0.0 {
        let scale = prob.sigma() / (prob.p() as f64).sqrt();
        let mut rng = stream(seed, Purpose::GradientNoise, i as u64, step);
        for v in g.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += scale * z;
        }
    }
    g
}

pub fn initial_iterates(seed: u64, n: usize, p: usize) -> Dense {
    (0..n)
        .map(|i| {
            let mut rng = stream(seed, Purpose::InitialIterate, i as u64, 0);
            (0..p).map(|_| rng.random::<f64>()).collect()
        })
        .collect()
}

/// `W z`, accumulating each row left to right from zero.
pub fn gossip(w: &Dense, z: &Dense) -> Dense {
    let n = w.len();
    let p = z[0].len();
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for j in 0..n {
            for c in 0..p {
                out[i][c] += w[i][j] * z[j][c];
            }
        }
    }
    out
}

pub fn col_means(z: &Dense) -> Vec<f64> {
    let n = z.len() as f64;
    (0..z[0].len()).map(|c| z.iter().map(|r| r[c]).sum::<f64>() / n).collect()
}

pub fn deviation_sq(z: &Dense) -> f64 {
    let m = col_means(z);
    z.iter().map(|r| dist_sq(r, &m)).sum()
}

/// Per-round `(X, Y)` of gradient tracking with one local update and one
/// gossip step per round.
pub fn dsgt_reference(prob: &QuadraticProblem, w: &Dense, gamma: f64, seed: u64, rounds: usize) -> Vec<(Dense, Dense)> {
    let (n, p) = (prob.n(), prob.p());
    let mut x = initial_iterates(seed, n, p);
    let mut g: Dense = (0..n).map(|i| noisy_grad(prob, i, &x[i], 0, seed)).collect();
    let mut y = g.clone();
    let mut out = Vec::with_capacity(rounds);
    for k in 0..rounds {
        let step = k as u64 + 1;
        for i in 0..n {
            for c in 0..p {
                x[i][c] = x[i][c] - gamma * y[i][c];
            }
        }
        for i in 0..n {
            let g_new = noisy_grad(prob, i, &x[i], step, seed);
            for c in 0..p {
                y[i][c] = y[i][c] + g_new[c] - g[i][c];
            }
            g[i] = g_new;
        }
        x = gossip(w, &x);
        y = gossip(w, &y);
        out.push((x.clone(), y.clone()));
    }
    out
}

/// Per-round `X` of gossip SGD with one local step and one gossip step.
pub fn dpsgd_reference(prob: &QuadraticProblem, w: &Dense, gamma: f64, seed: u64, rounds: usize) -> Vec<Dense> {
    let (n, p) = (prob.n(), prob.p());
    let mut x = initial_iterates(seed, n, p);
    let mut out = Vec::with_capacity(rounds);
    for k in 0..rounds {
        for i in 0..n {
            let g = noisy_grad(prob, i, &x[i], k as u64, seed);
            for c in 0..p {
                x[i][c] = x[i][c] - gamma * g[c];
            }
        }
        x = gossip(w, &x);
        out.push(x.clone());
    }
    out
}

pub fn bits(z: &Dense) -> Vec<u64> {
    z.iter().flatten().map(|v| v.to_bits()).collect()
}

pub fn max_abs(z: &Dense) -> f64 {
    z.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
