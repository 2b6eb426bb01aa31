//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use fdcb::codebooks::QuantizationSpec;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;

pub type CMatrix = Array2<Complex64>;

/// Brute-force scan of every (amplitude, phase) pair. A pair wins when its
/// amplitude error is smaller, or equal with a smaller chord error; the first
/// pair in index order wins exact ties.
pub fn exhaustive_nearest(spec: &QuantizationSpec, w: Complex64) -> (usize, usize) {
    let mag = w.norm();
    let unit = Complex64::from_polar(1.0, w.arg());
    let mut best = (0, 0);
    let mut best_d = (f64::INFINITY, f64::INFINITY);
    for (i, &a) in spec.amplitudes().iter().enumerate() {
        for (k, &p) in spec.phases().iter().enumerate() {
            let d = (
                (a - mag).abs(),
                (Complex64::from_polar(1.0, p) - unit).norm(),
            );
            if d.0 < best_d.0 || (d.0 == best_d.0 && d.1 < best_d.1) {
                best = (i, k);
                best_d = d;
            }
        }
    }
    best
}

/// Real coordinates: entry `(k, i)` of an `n x m` matrix maps to
/// `2 (i n + k)` (real part) and `2 (i n + k) + 1` (imaginary part).
fn to_real(f: &CMatrix) -> DVector<f64> {
    let (n, m) = f.dim();
    let mut x = DVector::zeros(2 * n * m);
    for i in 0..m {
        for k in 0..n {
            x[2 * (i * n + k)] = f[[k, i]].re;
            x[2 * (i * n + k) + 1] = f[[k, i]].im;
        }
    }
    x
}

fn from_real(x: &DVector<f64>, n: usize, m: usize) -> CMatrix {
    CMatrix::from_shape_fn((n, m), |(k, i)| {
        Complex64::new(x[2 * (i * n + k)], x[2 * (i * n + k) + 1])
    })
}

struct Barrier {
    n: usize,
    m: usize,
    /// Real embedding of the block-diagonal quadratic.
    r: DMatrix<f64>,
    /// Gradients of Re(a_i^H f_i) and Im(a_i^H f_i).
    p: Vec<DVector<f64>>,
    q: Vec<DVector<f64>>,
    budget: f64,
}

impl Barrier {
    fn new(qm: &CMatrix, a: &CMatrix, sigma_sq: f64) -> Self {
        let (n, m) = a.dim();
        let dim = 2 * n * m;
        let mut r = DMatrix::zeros(dim, dim);
        for i in 0..m {
            for k in 0..n {
                for l in 0..n {
                    let z = qm[[k, l]];
                    let (rk, rl) = (2 * (i * n + k), 2 * (i * n + l));
                    r[(rk, rl)] = z.re;
                    r[(rk, rl + 1)] = -z.im;
                    r[(rk + 1, rl)] = z.im;
                    r[(rk + 1, rl + 1)] = z.re;
                }
            }
        }
        let mut p = Vec::new();
        let mut q = Vec::new();
        for i in 0..m {
            let mut pi = DVector::zeros(dim);
            let mut qi = DVector::zeros(dim);
            for k in 0..n {
                let (al, be) = (a[[k, i]].re, a[[k, i]].im);
                let j = 2 * (i * n + k);
                pi[j] = al;
                pi[j + 1] = be;
                qi[j] = -be;
                qi[j + 1] = al;
            }
            p.push(pi);
            q.push(qi);
        }
        let nn = n as f64;
        Self {
            n,
            m,
            r,
            p,
            q,
            budget: sigma_sq * nn * nn * m as f64,
        }
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.r * x))
    }

    fn coverage(&self, x: &DVector<f64>) -> f64 {
        let nn = self.n as f64;
        (0..self.m)
            .map(|i| (nn - self.p[i].dot(x)).powi(2) + self.q[i].dot(x).powi(2))
            .sum::<f64>()
            - self.budget
    }

    fn boxes(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.n * self.m)
            .map(|e| x[2 * e].powi(2) + x[2 * e + 1].powi(2) - 1.0)
            .collect()
    }

    fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        self.coverage(x) < 0.0 && self.boxes(x).iter().all(|&g| g < 0.0)
    }

    /// `t f0 - sum log(-g)`.
    fn merit(&self, x: &DVector<f64>, t: f64) -> f64 {
        t * self.objective(x)
            - (-self.coverage(x)).ln()
            - self.boxes(x).iter().map(|g| (-g).ln()).sum::<f64>()
    }

    fn grad_hess(&self, x: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let dim = x.len();
        let mut g = (&self.r * x) * (2.0 * t);
        let mut h = &self.r * (2.0 * t);
        let nn = self.n as f64;
        let gc = self.coverage(x);
        let mut dgc = DVector::zeros(dim);
        let mut d2gc = DMatrix::zeros(dim, dim);
        for i in 0..self.m {
            let re = self.p[i].dot(x);
            let im = self.q[i].dot(x);
            dgc += &self.p[i] * (-2.0 * (nn - re)) + &self.q[i] * (2.0 * im);
            d2gc += (&self.p[i] * self.p[i].transpose() + &self.q[i] * self.q[i].transpose()) * 2.0;
        }
        g += &dgc / (-gc);
        h += &dgc * dgc.transpose() / (gc * gc) + d2gc / (-gc);
        for (e, gb) in self.boxes(x).into_iter().enumerate() {
            let j = 2 * e;
            let (u, v) = (x[j], x[j + 1]);
            let s = -gb;
            g[j] += 2.0 * u / s;
            g[j + 1] += 2.0 * v / s;
            h[(j, j)] += 4.0 * u * u / (s * s) + 2.0 / s;
            h[(j + 1, j + 1)] += 4.0 * v * v / (s * s) + 2.0 / s;
            h[(j, j + 1)] += 4.0 * u * v / (s * s);
            h[(j + 1, j)] += 4.0 * u * v / (s * s);
        }
        (g, h)
    }
}

/// Log-barrier interior-point solution of
/// `min sum_i f_i^H Q f_i  s.t.  sum_i |N - a_i^H f_i|^2 <= sigma^2 N^2 M, |F_ki| <= 1`,
/// written over real variables and solved with damped Newton steps.
/// Requires `sigma_sq > 0`. Returns the minimizer and its objective.
pub fn barrier_coverage_qp(q: &CMatrix, a: &CMatrix, sigma_sq: f64) -> (CMatrix, f64) {
    assert!(sigma_sq > 0.0);
    let (n, m) = a.dim();
    let prob = Barrier::new(q, a, sigma_sq);
    // Shrunken matched filter: coverage residual (delta)^2 < sigma^2, strictly
    // inside every disk.
    let delta = (0.5 * sigma_sq.sqrt()).min(0.5);
    let mut x = to_real(&a.mapv(|z| z * (1.0 - delta)));
    assert!(prob.strictly_feasible(&x));
    let constraints = (n * m + 1) as f64;
    let mut t = 1.0 / prob.objective(&x).max(1e-12);
    loop {
        for _ in 0..200 {
            let (g, h) = prob.grad_hess(&x, t);
            let step = match h.clone().cholesky() {
                Some(c) => -c.solve(&g),
                None => -h.lu().solve(&g).expect("nonsingular Newton system"),
            };
            let decrement = -g.dot(&step);
            if decrement / 2.0 <= 1e-12 {
                break;
            }
            let f0 = prob.merit(&x, t);
            let mut s = 1.0;
            loop {
                let cand = &x + &step * s;
                if prob.strictly_feasible(&cand)
                    && prob.merit(&cand, t) <= f0 - 0.25 * s * decrement
                {
                    x = cand;
                    break;
                }
                s *= 0.5;
                if s < 1e-14 {
                    break;
                }
            }
            if s < 1e-14 {
                break;
            }
        }
        if constraints / t < 1e-9 * prob.objective(&x).max(1e-300) {
            break;
        }
        t *= 10.0;
        if t > 1e20 {
            break;
        }
    }
    let f = from_real(&x, n, m);
    let obj = prob.objective(&x);
    (f, obj)
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}
