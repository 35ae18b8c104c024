//! Synthetic regularized least-squares objectives and their gradient oracle.
//!
//! Node `i` holds
//!
//! ```text
//! f_i(x) = (h_iᵀx − v̄_i)² + (μ/2)‖x‖² + σ²
//! ```
//!
//! which is `μ`-strongly convex and `(2‖h_i‖² + μ)`-smooth. The stochastic
//! oracle returns the exact gradient plus Gaussian noise with per-coordinate
//! variance `σ²/p`, so the expected squared noise norm is exactly `σ²`.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{dot, norm_sq, Mat};
use crate::rng::{stream, Purpose};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem parameter `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("degenerate problem: the averaged Hessian is singular")]
    Degenerate,
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parameters from which a problem instance is generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub n: usize,
    pub p: usize,
    pub mu: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl ProblemSpec {
    /// Scale used in the synthetic experiments: 20 nodes, dimension 10.
    pub fn standard() -> Self {
        Self {
            n: 20,
            p: 10,
            mu: 0.1,
            sigma: 0.1,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let invalid = |field, reason: String| Err(ProblemError::Invalid { field, reason });
        if self.n < 1 {
            return invalid("n", "need at least one node".into());
        }
        if self.p < 1 {
            return invalid("p", "dimension must be positive".into());
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return invalid("mu", format!("must be finite and >= 0, got {}", self.mu));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return invalid("sigma", format!("must be finite and >= 0, got {}", self.sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    /// Feature vectors, one row per node.
    h: Mat,
    vbar: Vec<f64>,
    mu: f64,
    sigma: f64,
    seed: u64,
}

/// One draw from the stochastic gradient oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub value: Vec<f64>,
    pub node: usize,
    pub step: u64,
}

/// Minimizer of the global objective and its value.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
}

impl QuadraticProblem {
    /// Draws `h_i ∈ [0,1]^p` and `v̄_i ∈ [0,1]` uniformly from the seeded stream.
    pub fn generate(spec: &ProblemSpec) -> Result<Self, ProblemError> {
        spec.validate()?;
        let mut rng = stream(spec.seed, Purpose::ProblemData, 0, 0);
        let h: Vec<f64> = (0..spec.n * spec.p).map(|_| rng.random::<f64>()).collect();
        let vbar: Vec<f64> = (0..spec.n).map(|_| rng.random::<f64>()).collect();
        Ok(Self {
            h: Mat::from_vec(spec.n, spec.p, h),
            vbar,
            mu: spec.mu,
            sigma: spec.sigma,
            seed: spec.seed,
        })
    }

    /// Problem with explicitly given features and targets.
    pub fn from_parts(h: Mat, vbar: Vec<f64>, mu: f64, sigma: f64) -> Result<Self, ProblemError> {
        let spec = ProblemSpec {
            n: h.rows(),
            p: h.cols(),
            mu,
            sigma,
            seed: 0,
        };
        spec.validate()?;
        if vbar.len() != h.rows() {
            return Err(ProblemError::Invalid {
                field: "vbar",
                reason: format!("expected {} targets, got {}", h.rows(), vbar.len()),
            });
        }
        Ok(Self {
            h,
            vbar,
            mu,
            sigma,
            seed: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.h.rows()
    }

    pub fn p(&self) -> usize {
        self.h.cols()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn features(&self) -> &Mat {
        &self.h
    }

    pub fn targets(&self) -> &[f64] {
        &self.vbar
    }

    fn check_node(&self, i: usize) -> Result<(), ProblemError> {
        if i >= self.n() {
            return Err(ProblemError::NodeOutOfRange {
                index: i,
                n: self.n(),
            });
        }
        Ok(())
    }

    /// `f_i(x)`, including the constant `σ²`.
    pub fn local_value(&self, i: usize, x: &[f64]) -> f64 {
        let r = dot(self.h.row(i), x) - self.vbar[i];
        r * r + 0.5 * self.mu * norm_sq(x) + self.sigma * self.sigma
    }

    /// `f(x) = (1/n) Σ f_i(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        (0..self.n()).map(|i| self.local_value(i, x)).sum::<f64>() / self.n() as f64
    }

    /// Writes `2 h_i (h_iᵀx − v̄_i) + μx` into `out`.
    pub fn exact_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let h = self.h.row(i);
        let r = dot(h, x) - self.vbar[i];
        for ((o, hc), xc) in out.iter_mut().zip(h).zip(x) {
            *o = 2.0 * hc * r + self.mu * xc;
        }
    }

    pub fn exact_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_node(i)?;
        let mut g = vec![0.0; self.p()];
        self.exact_gradient_into(i, x, &mut g);
        Ok(g)
    }

    /// `∇f(x) = (1/n) Σ ∇f_i(x)`.
    pub fn global_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.p()];
        let mut g = vec![0.0; self.p()];
        for i in 0..self.n() {
            self.exact_gradient_into(i, x, &mut g);
            total.iter_mut().zip(&g).for_each(|(t, v)| *t += v);
        }
        let n = self.n() as f64;
        total.iter_mut().for_each(|t| *t /= n);
        total
    }

    /// Stochastic gradient at `x` for node `i`, step `step`.
    ///
    /// The noise depends only on `(noise_seed, i, step)`; repeated calls with
    /// the same key return the same sample.
    pub fn noisy_gradient_into(&self, i: usize, x: &[f64], step: u64, noise_seed: u64, out: &mut [f64]) {
        self.exact_gradient_into(i, x, out);
        if self.sigma > 0.0 {
            let scale = self.sigma / (self.p() as f64).sqrt();
            let mut rng = stream(noise_seed, Purpose::GradientNoise, i as u64, step);
            for o in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *o += scale * z;
            }
        }
    }

    pub fn noisy_gradient(
        &self,
        i: usize,
        x: &[f64],
        step: u64,
        noise_seed: u64,
    ) -> Result<GradientSample, ProblemError> {
        self.check_node(i)?;
        let mut value = vec![0.0; self.p()];
        self.noisy_gradient_into(i, x, step, noise_seed, &mut value);
        Ok(GradientSample {
            value,
            node: i,
            step,
        })
    }

    /// Solves `(2·(1/n)Σ h_i h_iᵀ + μI) x = 2·(1/n)Σ h_i v̄_i`.
    pub fn optimum(&self) -> Result<Optimum, ProblemError> {
        let (n, p) = (self.n(), self.p());
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut b = DVector::<f64>::zeros(p);
        for i in 0..n {
            let h = self.h.row(i);
            for r in 0..p {
                b[r] += 2.0 * h[r] * self.vbar[i] / n as f64;
                for c in 0..p {
                    a[(r, c)] += 2.0 * h[r] * h[c] / n as f64;
                }
            }
        }
        for d in 0..p {
            a[(d, d)] += self.mu;
        }
        let scale = a.amax().max(f64::MIN_POSITIVE);
        let chol = a.clone().cholesky().ok_or(ProblemError::Degenerate)?;
        let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if min_pivot * min_pivot <= 1e-13 * scale {
            return Err(ProblemError::Degenerate);
        }
        let mut x = chol.solve(&b);
        // One refinement pass tightens the residual.
        let r = &b - &a * &x;
        x += chol.solve(&r);
        let x: Vec<f64> = x.iter().copied().collect();
        let value = self.value(&x);
        Ok(Optimum { x, value })
    }

    /// `(μ, L)` with `L = max_i (2‖h_i‖² + μ)`.
    pub fn constants(&self) -> (f64, f64) {
        let l = self
            .h
            .iter_rows()
            .map(|h| 2.0 * norm_sq(h) + self.mu)
            .fold(self.mu, f64::max);
        (self.mu, l)
    }

    /// Gradient diversity at the optimum: `(1/n) Σ ‖∇f_i(x*)‖²`.
    pub fn heterogeneity_at_optimum(&self) -> Result<f64, ProblemError> {
        let opt = self.optimum()?;
        let mut g = vec![0.0; self.p()];
        let total: f64 = (0..self.n())
            .map(|i| {
                self.exact_gradient_into(i, &opt.x, &mut g);
                norm_sq(&g)
            })
            .sum();
        Ok(total / self.n() as f64)
    }

    /// Dumps `node, vbar, h_0 .. h_{p-1}` as CSV.
    pub fn write_csv(&self, path: &Path) -> Result<(), ProblemError> {
        let io = |source| ProblemError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let mut header = String::from("node,vbar");
        for c in 0..self.p() {
            header.push_str(&format!(",h{c}"));
        }
        writeln!(out, "{header}").map_err(io)?;
        for i in 0..self.n() {
            let mut line = format!("{i},{:.16e}", self.vbar[i]);
            for v in self.h.row(i) {
                line.push_str(&format!(",{v:.16e}"));
            }
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem(h: &[f64], vbar: &[f64], mu: f64) -> QuadraticProblem {
        let rows: Vec<Vec<f64>> = h.iter().map(|v| vec![*v]).collect();
        QuadraticProblem::from_parts(Mat::from_rows(&rows).unwrap(), vbar.to_vec(), mu, 0.0).unwrap()
    }

    #[test]
    fn generation_is_deterministic_and_in_unit_box() {
        let spec = ProblemSpec::standard();
        let a = QuadraticProblem::generate(&spec).unwrap();
        let b = QuadraticProblem::generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n(), a.p()), (20, 10));
        assert!(a.features().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(a.targets().iter().all(|v| (0.0..=1.0).contains(v)));
        let c = QuadraticProblem::generate(&ProblemSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let base = ProblemSpec::standard();
        for (spec, field) in [
            (ProblemSpec { n: 0, ..base }, "n"),
            (ProblemSpec { p: 0, ..base }, "p"),
            (ProblemSpec { mu: -1.0, ..base }, "mu"),
            (ProblemSpec { sigma: f64::NAN, ..base }, "sigma"),
        ] {
            match QuadraticProblem::generate(&spec) {
                Err(ProblemError::Invalid { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected invalid {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn gradient_of_pure_regularizer() {
        let p = QuadraticProblem::from_parts(Mat::zeros(1, 3), vec![0.4], 0.5, 0.0).unwrap();
        assert_eq!(p.exact_gradient(0, &[1.0, -2.0, 4.0]).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn gradient_of_scalar_square() {
        let p = scalar_problem(&[1.0], &[0.0], 0.0);
        assert_eq!(p.exact_gradient(0, &[3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn out_of_range_node() {
        let p = scalar_problem(&[1.0], &[0.0], 0.0);
        assert!(matches!(
            p.exact_gradient(1, &[0.0]),
            Err(ProblemError::NodeOutOfRange { index: 1, n: 1 })
        ));
    }

    #[test]
    fn zero_noise_is_exact() {
        let spec = ProblemSpec {
            sigma: 0.0,
            ..ProblemSpec::standard()
        };
        let p = QuadraticProblem::generate(&spec).unwrap();
        let x = vec![0.3; 10];
        let g = p.noisy_gradient(4, &x, 17, 99).unwrap();
        assert_eq!(g.value, p.exact_gradient(4, &x).unwrap());
        assert_eq!((g.node, g.step), (4, 17));
    }

    #[test]
    fn noise_depends_only_on_key() {
        let p = QuadraticProblem::generate(&ProblemSpec::standard()).unwrap();
        let x = vec![0.1; 10];
        let a = p.noisy_gradient(3, &x, 5, 1).unwrap();
        let _ = p.noisy_gradient(2, &x, 9, 1).unwrap();
        let b = p.noisy_gradient(3, &x, 5, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.value, p.noisy_gradient(3, &x, 6, 1).unwrap().value);
        assert_ne!(a.value, p.noisy_gradient(3, &x, 5, 2).unwrap().value);
    }

    #[test]
    fn optimum_of_pure_regularizer_is_origin() {
        let p = QuadraticProblem::from_parts(Mat::zeros(3, 2), vec![0.2, 0.5, 0.9], 0.3, 0.1).unwrap();
        let opt = p.optimum().unwrap();
        assert!(opt.x.iter().all(|v| v.abs() < 1e-15));
        // f(0) = mean(v̄²) + σ².
        let expected = (0.04 + 0.25 + 0.81) / 3.0 + 0.01;
        assert!((opt.value - expected).abs() < 1e-15);
    }

    #[test]
    fn scalar_two_node_optimum() {
        // (x − 1)² + 0.05x² averaged with 0.05x²: (x − 1) + 0.1x = 0.
        let p = scalar_problem(&[1.0, 0.0], &[1.0, 0.0], 0.1);
        let opt = p.optimum().unwrap();
        assert!((opt.x[0] - 1.0 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn degenerate_without_regularization() {
        let p = QuadraticProblem::from_parts(Mat::zeros(2, 2), vec![0.0, 1.0], 0.0, 0.0).unwrap();
        assert!(matches!(p.optimum(), Err(ProblemError::Degenerate)));
        assert_eq!(p.optimum().unwrap_err().to_string(), "degenerate problem: the averaged Hessian is singular");
        // Rank-one Hessian in two dimensions.
        let p = QuadraticProblem::from_parts(
            Mat::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap(),
            vec![0.0, 1.0],
            0.0,
            0.0,
        )
        .unwrap();
        assert!(matches!(p.optimum(), Err(ProblemError::Degenerate)));
    }

    #[test]
    fn optimum_residual_is_tiny() {
        let p = QuadraticProblem::generate(&ProblemSpec::standard()).unwrap();
        let opt = p.optimum().unwrap();
        assert!(norm_sq(&p.global_gradient(&opt.x)).sqrt() <= 1e-10);
    }

    #[test]
    fn constants_examples() {
        let p = QuadraticProblem::from_parts(Mat::zeros(2, 3), vec![0.0, 0.0], 0.7, 0.0).unwrap();
        assert_eq!(p.constants(), (0.7, 0.7));
        let p = scalar_problem(&[1.0], &[0.3], 0.0);
        assert_eq!(p.constants(), (0.0, 2.0));
    }

    #[test]
    fn homogeneous_nodes_have_no_heterogeneity() {
        let row = vec![0.2, 0.7, 0.4];
        let p = QuadraticProblem::from_parts(
            Mat::from_rows(&vec![row; 5]).unwrap(),
            vec![0.6; 5],
            0.1,
            0.0,
        )
        .unwrap();
        assert!(p.heterogeneity_at_optimum().unwrap() < 1e-28);
    }

    #[test]
    fn scalar_heterogeneity() {
        let p = scalar_problem(&[1.0, 0.0], &[1.0, 0.0], 0.1);
        let xs = 1.0 / 1.1;
        let g1 = 2.0 * (xs - 1.0) + 0.1 * xs;
        let g2 = 0.1 * xs;
        let expected = 0.5 * (g1 * g1 + g2 * g2);
        let got = p.heterogeneity_at_optimum().unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.008264).abs() < 1e-6);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let p = QuadraticProblem::generate(&ProblemSpec {
            n: 3,
            p: 2,
            ..ProblemSpec::standard()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("problem.csv");
        p.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "node,vbar,h0,h1");
        assert_eq!(lines.len(), 4);
        let parsed: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(parsed, p.features()[(0, 0)]);
    }
}
