//! Codebook design by projected alternating minimization.
//!
//! With the receive codebook `W` fixed, the expected self-interference
//! coupling `||W^H Hbar F||_F^2 + eps^2 ||F||_F^2 ||W||_F^2` is a convex
//! quadratic in the transmit codebook `F`:
//!
//! ```text
//! minimize    sum_i f_i^H Q f_i,      Q = Hbar^H W W^H Hbar + eps^2 ||W||_F^2 I
//! subject to  sum_i |N - a_i^H f_i|^2 <= sigma^2 N^2 M
//!             |F[k, i]| <= 1
//! ```
//!
//! The receive problem has the same form with `Q = Hbar F F^H Hbar^H +
//! eps^2 ||F||_F^2 I`. Each subproblem is solved by ADMM over two copies of
//! the codebook, one held in the magnitude box and one in the coverage set.
//! The quadratic step is exact through a cached `(Q + rho I)^{-1}`, and both
//! projections are closed form. The box copy is finally pulled toward a
//! zero-residual point just far enough to meet the coverage budget.

use std::fmt;
use std::io::Write;

use log::{debug, warn};
use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, Axis, Zip};
use num_complex::Complex64;

use crate::arrays::SteeringMatrix;
use crate::channels::ChannelEstimate;
use crate::codebooks::{Codebook, QuantizationSpec};
use crate::error::{Error, Result};
use crate::linalg::{
    diag_herm_product, fro_norm_sqr, herm, hermitian_pd_inverse, max_eigenvalue_psd, CMatrix,
};

/// Tuning knobs for the design.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Transmit coverage variance, normalized to `N_t^2`.
    pub sigma_tx_sq: f64,
    /// Receive coverage variance, normalized to `N_r^2`.
    pub sigma_rx_sq: f64,
    pub am_passes: usize,
    /// Relative accuracy of each inner minimization.
    pub subproblem_tolerance: f64,
    /// Iteration cap for each inner minimization.
    pub subproblem_max_iters: usize,
    /// Starting ADMM penalty, relative to the largest eigenvalue of `Q`.
    pub initial_penalty: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let sigma_sq = 10f64.powf(-1.5);
        Self {
            sigma_tx_sq: sigma_sq,
            sigma_rx_sq: sigma_sq,
            am_passes: 1,
            subproblem_tolerance: 1e-6,
            subproblem_max_iters: 20_000,
            initial_penalty: 1e-2,
        }
    }
}

impl SolverConfig {
    pub fn with_sigma_sq(sigma_sq: f64) -> Self {
        Self {
            sigma_tx_sq: sigma_sq,
            sigma_rx_sq: sigma_sq,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_tx_sq", self.sigma_tx_sq),
            ("sigma_rx_sq", self.sigma_rx_sq),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(
                    name,
                    format!("{v} must be finite and nonnegative"),
                ));
            }
        }
        if self.am_passes == 0 {
            return Err(Error::invalid("am_passes", "must be at least 1"));
        }
        if self.subproblem_max_iters == 0 {
            return Err(Error::invalid("subproblem_max_iters", "must be at least 1"));
        }
        for (name, v) in [
            ("subproblem_tolerance", self.subproblem_tolerance),
            ("initial_penalty", self.initial_penalty),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("{v} must be positive")));
            }
        }
        Ok(())
    }
}

/// Absolute slack on the normalized coverage constraint.
pub const FEASIBILITY_SLACK: f64 = 1e-6;

/// Expected coupling `||W^H Hbar F||_F^2 + eps^2 ||F||_F^2 ||W||_F^2` under
/// the estimation-error model.
pub fn expected_objective(
    f: ArrayView2<'_, Complex64>,
    w: ArrayView2<'_, Complex64>,
    est: &ChannelEstimate,
) -> Result<f64> {
    let h = est.estimate();
    if f.nrows() != h.num_tx() || w.nrows() != h.num_rx() {
        return Err(Error::DimensionMismatch(format!(
            "F has {} rows and W has {} rows for a {}x{} channel",
            f.nrows(),
            w.nrows(),
            h.num_rx(),
            h.num_tx()
        )));
    }
    let coupling = herm(w).dot(&h.entries().dot(&f));
    Ok(fro_norm_sqr(coupling.view()) + est.error_variance() * fro_norm_sqr(f) * fro_norm_sqr(w))
}

/// Same value as [`expected_objective`]; named separately for traces.
pub fn subproblem_objective(
    f: ArrayView2<'_, Complex64>,
    w: ArrayView2<'_, Complex64>,
    est: &ChannelEstimate,
) -> Result<f64> {
    expected_objective(f, w, est)
}

/// Quadratic form of the transmit subproblem for a fixed `W`.
pub fn tx_quadratic(w: ArrayView2<'_, Complex64>, est: &ChannelEstimate) -> Result<CMatrix> {
    let h = est.estimate();
    if w.nrows() != h.num_rx() {
        return Err(Error::DimensionMismatch(format!(
            "W has {} rows, channel has {} receive antennas",
            w.nrows(),
            h.num_rx()
        )));
    }
    let b = herm(h.view()).dot(&w);
    Ok(gram_plus_identity(
        &b,
        est.error_variance() * fro_norm_sqr(w),
    ))
}

/// Quadratic form of the receive subproblem for a fixed `F`.
pub fn rx_quadratic(f: ArrayView2<'_, Complex64>, est: &ChannelEstimate) -> Result<CMatrix> {
    let h = est.estimate();
    if f.nrows() != h.num_tx() {
        return Err(Error::DimensionMismatch(format!(
            "F has {} rows, channel has {} transmit antennas",
            f.nrows(),
            h.num_tx()
        )));
    }
    let b = h.entries().dot(&f);
    Ok(gram_plus_identity(
        &b,
        est.error_variance() * fro_norm_sqr(f),
    ))
}

fn gram_plus_identity(b: &CMatrix, diag: f64) -> CMatrix {
    let mut q = b.dot(&herm(b.view()));
    for k in 0..q.nrows() {
        q[[k, k]] += diag;
    }
    // Exact Hermitian symmetry keeps the quadratic form real.
    for r in 0..q.nrows() {
        q[[r, r]].im = 0.0;
        for c in 0..r {
            let avg = (q[[r, c]] + q[[c, r]].conj()) * 0.5;
            q[[r, c]] = avg;
            q[[c, r]] = avg.conj();
        }
    }
    q
}

/// Gradient of `sum_i f_i^H Q f_i` with respect to the real and imaginary
/// parts of `F`, packed as `d/dRe + j d/dIm`. Equals `2 Q F`.
pub fn quadratic_gradient(q: ArrayView2<'_, Complex64>, f: ArrayView2<'_, Complex64>) -> CMatrix {
    q.dot(&f).mapv(|z| z * 2.0)
}

/// `sum_i f_i^H Q f_i`.
pub fn quadratic_value(q: ArrayView2<'_, Complex64>, f: ArrayView2<'_, Complex64>) -> f64 {
    let qf = q.dot(&f);
    Zip::from(&f)
        .and(&qf)
        .fold(0.0, |acc, x, y| acc + (x.conj() * y).re)
}

/// Coverage residual `sum_i |N - a_i^H f_i|^2` (complex form).
pub fn coverage_residual(a: ArrayView2<'_, Complex64>, f: ArrayView2<'_, Complex64>) -> f64 {
    let n = a.nrows() as f64;
    diag_herm_product(a, f)
        .iter()
        .map(|c| (Complex64::new(n, 0.0) - c).norm_sqr())
        .sum()
}

/// Result of one convex subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemOutcome {
    pub solution: CMatrix,
    /// `sum_i f_i^H Q f_i` at the solution.
    pub objective: f64,
    /// Coverage multiplier in the unnormalized problem.
    pub multiplier: f64,
    /// Normalized coverage residual `sum_i |N - a_i^H f_i|^2 / (N^2 M)`.
    pub coverage_residual: f64,
    /// Normalized budget `sigma^2`.
    pub budget: f64,
    /// Larger of the final ADMM primal and dual residuals.
    pub kkt_residual: f64,
    pub converged: bool,
    pub inner_iterations: usize,
}

impl SubproblemOutcome {
    pub fn is_feasible(&self) -> bool {
        self.coverage_residual <= self.budget + FEASIBILITY_SLACK
            && self.solution.iter().all(|z| z.norm() <= 1.0 + 1e-9)
    }
}

fn project_disk(z: &mut Complex64) {
    let m = z.norm();
    if m > 1.0 {
        *z /= m;
    }
}

/// Coverage constraint `sum_i |N - a_i^H f_i|^2 <= budget`.
struct CoverageSet<'a> {
    a: ArrayView2<'a, Complex64>,
    n: f64,
    col_sq: Vec<f64>,
    equal_norms: bool,
    budget: f64,
}

impl<'a> CoverageSet<'a> {
    fn new(a: ArrayView2<'a, Complex64>, budget: f64) -> Self {
        let col_sq: Vec<f64> = a
            .axis_iter(Axis(1))
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum())
            .collect();
        let equal_norms = col_sq.windows(2).all(|w| w[0] == w[1]);
        Self {
            a,
            n: a.nrows() as f64,
            col_sq,
            equal_norms,
            budget,
        }
    }

    fn residual(&self, x: &CMatrix) -> f64 {
        coverage_residual(self.a, x.view())
    }

    /// Euclidean projection of `x` onto the constraint set, in place. Only
    /// the component of each column along its steering vector moves.
    fn project(&self, x: &mut CMatrix) {
        let nn = Complex64::new(self.n, 0.0);
        let d: Vec<Complex64> = diag_herm_product(self.a, x.view())
            .iter()
            .map(|c| nn - c)
            .collect();
        let r: f64 = d.iter().map(|z| z.norm_sqr()).sum();
        if r <= self.budget {
            return;
        }
        // Shrink factor 1 / (1 + mu n_i) applied to each shortfall d_i.
        let shrink: Vec<f64> = if self.equal_norms {
            vec![(self.budget / r).sqrt(); d.len()]
        } else {
            let resid_at = |mu: f64| -> f64 {
                d.iter()
                    .zip(&self.col_sq)
                    .map(|(di, ni)| di.norm_sqr() / (1.0 + mu * ni).powi(2))
                    .sum()
            };
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while resid_at(hi) > self.budget && hi < 1e300 {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if resid_at(mid) > self.budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            self.col_sq.iter().map(|ni| 1.0 / (1.0 + hi * ni)).collect()
        };
        for (i, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
            if self.col_sq[i] == 0.0 {
                continue;
            }
            let delta = d[i] * ((1.0 - shrink[i]) / self.col_sq[i]);
            Zip::from(&mut col)
                .and(self.a.column(i))
                .for_each(|xk, &ak| *xk += ak * delta);
        }
    }

    /// A box-feasible point with zero residual, if one exists: each column
    /// phase-matched to its steering vector and scaled so `a^H f = N`.
    fn anchor(&self) -> Option<CMatrix> {
        let mut f = CMatrix::zeros(self.a.raw_dim());
        for (i, col) in self.a.axis_iter(Axis(1)).enumerate() {
            let l1: f64 = col.iter().map(|z| z.norm()).sum();
            if l1 < self.n * (1.0 - 1e-12) {
                return None;
            }
            let scale = (self.n / l1).min(1.0);
            Zip::from(f.column_mut(i)).and(col).for_each(|fk, &ak| {
                let m = ak.norm();
                if m > 0.0 {
                    *fk = ak * (scale / m);
                }
            });
        }
        Some(f)
    }

    /// True when every column has `||a_i||_1 = N`, so a zero residual pins
    /// the anchor as the only feasible point.
    fn tight(&self) -> bool {
        self.a.axis_iter(Axis(1)).all(|col| {
            let l1: f64 = col.iter().map(|z| z.norm()).sum();
            (l1 - self.n).abs() <= 1e-9 * self.n
        })
    }

    /// Smallest residual reachable under the unit-magnitude bound.
    fn best_residual(&self) -> f64 {
        self.a
            .axis_iter(Axis(1))
            .map(|col| {
                let l1: f64 = col.iter().map(|z| z.norm()).sum();
                let short = (self.n - l1).max(0.0);
                short * short
            })
            .sum()
    }
}

/// `(Q + rho I)^{-1}`.
fn shifted_inverse(q: &CMatrix, rho: f64) -> Result<CMatrix> {
    let mut m = q.clone();
    for k in 0..m.nrows() {
        m[[k, k]] += rho;
    }
    hermitian_pd_inverse(m.view())
}

struct AdmmResult {
    z_box: CMatrix,
    penalty: f64,
    dual_cov: CMatrix,
    primal_residual: f64,
    dual_residual: f64,
    iterations: usize,
    converged: bool,
}

const OVER_RELAXATION: f64 = 1.6;
const PENALTY_UPDATE_INTERVAL: usize = 50;

/// ADMM on `min tr(F^H Q F)` with copies of `F` constrained to the
/// magnitude box and to the coverage set.
fn admm(
    q: &CMatrix,
    cov: &CoverageSet<'_>,
    warm: &CMatrix,
    config: &SolverConfig,
) -> Result<AdmmResult> {
    let tol = config.subproblem_tolerance;
    let dim = warm.raw_dim();
    let size = (warm.len() as f64).sqrt();
    let mut rho = config.initial_penalty;
    let mut inv = shifted_inverse(q, rho)?;

    let mut x = warm.clone();
    x.map_inplace(project_disk);
    let mut z1 = x.clone();
    let mut z2 = x.clone();
    cov.project(&mut z2);
    let mut u1 = CMatrix::zeros(dim);
    let mut u2 = CMatrix::zeros(dim);
    let mut v = CMatrix::zeros(dim);
    let mut z1_prev = z1.clone();
    let mut z2_prev = z2.clone();
    let zero = Complex64::new(0.0, 0.0);

    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.subproblem_max_iters {
        iterations += 1;
        Zip::from(&mut v)
            .and(&z1)
            .and(&u1)
            .and(&z2)
            .and(&u2)
            .for_each(|vk, &a, &b, &c, &d| *vk = (a - b + c - d) * (0.5 * rho));
        general_mat_mul(Complex64::new(1.0, 0.0), &inv, &v, zero, &mut x);

        z1_prev.assign(&z1);
        z2_prev.assign(&z2);
        let alpha = OVER_RELAXATION;
        Zip::from(&mut z1)
            .and(&x)
            .and(&u1)
            .for_each(|zk, &xk, &uk| {
                *zk = xk * alpha + *zk * (1.0 - alpha) + uk;
                project_disk(zk);
            });
        Zip::from(&mut z2)
            .and(&x)
            .and(&u2)
            .for_each(|zk, &xk, &uk| *zk = xk * alpha + *zk * (1.0 - alpha) + uk);
        cov.project(&mut z2);
        Zip::from(&mut u1)
            .and(&x)
            .and(&z1_prev)
            .and(&z1)
            .for_each(|uk, &xk, &zp, &zn| *uk += xk * alpha + zp * (1.0 - alpha) - zn);
        Zip::from(&mut u2)
            .and(&x)
            .and(&z2_prev)
            .and(&z2)
            .for_each(|uk, &xk, &zp, &zn| *uk += xk * alpha + zp * (1.0 - alpha) - zn);

        let check = iterations % 10 == 0 || iterations == config.subproblem_max_iters;
        let adapt = iterations % PENALTY_UPDATE_INTERVAL == 0;
        if !(check || adapt) {
            continue;
        }
        let sq = |m: &CMatrix| m.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let p1: f64 = Zip::from(&x)
            .and(&z1)
            .fold(0.0, |s, a, b| s + (a - b).norm_sqr());
        let p2: f64 = Zip::from(&x)
            .and(&z2)
            .fold(0.0, |s, a, b| s + (a - b).norm_sqr());
        primal = (p1 + p2).sqrt();
        let dsq: f64 = Zip::from(&z1)
            .and(&z1_prev)
            .and(&z2)
            .and(&z2_prev)
            .fold(0.0, |s, a, b, c, d| s + (a - b + c - d).norm_sqr());
        dual = rho * dsq.sqrt();
        let x_norm = sq(&x).sqrt();
        let z_norm = (sq(&z1) + sq(&z2)).sqrt();
        let u_norm = rho * (sq(&u1) + sq(&u2)).sqrt();
        let eps_primal = tol * (size + x_norm.max(z_norm));
        let eps_dual = tol * (size + u_norm);
        if primal <= eps_primal && dual <= eps_dual {
            converged = true;
            break;
        }
        if adapt {
            let p_rel = primal / x_norm.max(z_norm).max(f64::MIN_POSITIVE);
            let d_rel = dual / u_norm.max(f64::MIN_POSITIVE);
            let ratio = (p_rel / d_rel.max(f64::MIN_POSITIVE)).sqrt();
            if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
                let new_rho = (rho * ratio).clamp(1e-8, 1e8);
                u1.mapv_inplace(|z| z * (rho / new_rho));
                u2.mapv_inplace(|z| z * (rho / new_rho));
                rho = new_rho;
                inv = shifted_inverse(q, rho)?;
                debug!("penalty -> {rho:.3e} at iteration {iterations}");
            }
        }
    }
    Ok(AdmmResult {
        z_box: z1,
        penalty: rho,
        dual_cov: u2,
        primal_residual: primal,
        dual_residual: dual,
        iterations,
        converged,
    })
}

/// Minimizes `sum_i f_i^H Q f_i` subject to the coverage constraint with
/// normalized variance `sigma_sq` and unit-magnitude entries.
///
/// `warm` seeds the iterations; if it is feasible and no worse than the
/// computed solution it is returned unchanged.
pub fn solve_coverage_qp(
    q: ArrayView2<'_, Complex64>,
    steering: ArrayView2<'_, Complex64>,
    sigma_sq: f64,
    warm: ArrayView2<'_, Complex64>,
    config: &SolverConfig,
) -> Result<SubproblemOutcome> {
    config.validate()?;
    let (n_ant, m) = steering.dim();
    if q.dim() != (n_ant, n_ant) || warm.dim() != (n_ant, m) {
        return Err(Error::DimensionMismatch(format!(
            "Q {:?}, steering {:?}, warm start {:?}",
            q.dim(),
            steering.dim(),
            warm.dim()
        )));
    }
    if !(sigma_sq.is_finite() && sigma_sq >= 0.0) {
        return Err(Error::invalid(
            "sigma_sq",
            format!("{sigma_sq} must be nonnegative"),
        ));
    }
    let n = n_ant as f64;
    let norm = n * n * m as f64;
    let cov = CoverageSet::new(steering, sigma_sq * norm);
    let slack = FEASIBILITY_SLACK * norm;

    let best = cov.best_residual();
    if best > cov.budget + slack {
        return Err(Error::Infeasible {
            best: best / norm,
            budget: sigma_sq,
        });
    }
    let anchor = cov.anchor();

    let s = max_eigenvalue_psd(q, 1000, 1e-12);
    let scale = if s > 0.0 { s } else { 1.0 };
    let q_scaled = q.mapv(|z| z / scale);

    let (candidate, info) = if sigma_sq == 0.0 && anchor.is_some() && cov.tight() {
        (anchor.clone().unwrap(), None)
    } else {
        let r = admm(&q_scaled, &cov, &warm.to_owned(), config)?;
        (r.z_box.clone(), Some(r))
    };

    // Pull the box-feasible iterate toward the zero-residual anchor until the
    // coverage budget holds.
    let mut solution = candidate;
    let r0 = cov.residual(&solution);
    if r0 > cov.budget {
        let anchor = anchor.as_ref().ok_or(Error::Infeasible {
            best: best / norm,
            budget: sigma_sq,
        })?;
        let mut t = 1.0 - (cov.budget / r0).sqrt();
        loop {
            let mixed = &solution * Complex64::new(1.0 - t, 0.0) + anchor * Complex64::new(t, 0.0);
            if cov.residual(&mixed) <= cov.budget + slack || t >= 1.0 {
                solution = mixed;
                break;
            }
            t = (t + 1e-9).min(1.0);
        }
        debug!("feasibility polish moved {t:.3e} of the way to the anchor");
    }

    let objective = quadratic_value(q, solution.view());
    let coverage = cov.residual(&solution) / norm;
    let mut out = match info {
        None => SubproblemOutcome {
            solution,
            objective,
            multiplier: f64::INFINITY,
            coverage_residual: coverage,
            budget: sigma_sq,
            kkt_residual: 0.0,
            converged: true,
            inner_iterations: 0,
        },
        Some(r) => {
            // Coverage multiplier from the scaled dual of the coverage copy.
            let c = diag_herm_product(steering, solution.view());
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, col) in steering.axis_iter(Axis(1)).enumerate() {
                let coef = (c[i] - Complex64::new(n, 0.0)) * 2.0;
                for (k, ak) in col.iter().enumerate() {
                    let g = ak * coef;
                    num += (r.dual_cov[[k, i]].conj() * g).re;
                    den += g.norm_sqr();
                }
            }
            let active = coverage >= sigma_sq - FEASIBILITY_SLACK;
            let multiplier = if active && den > 0.0 {
                (r.penalty * num / den).max(0.0) * scale
            } else {
                0.0
            };
            SubproblemOutcome {
                solution,
                objective,
                multiplier,
                coverage_residual: coverage,
                budget: sigma_sq,
                kkt_residual: r.primal_residual.max(r.dual_residual),
                converged: r.converged,
                inner_iterations: r.iterations,
            }
        }
    };

    let warm_resid = coverage_residual(steering, warm) / norm;
    let warm_ok =
        warm_resid <= sigma_sq + FEASIBILITY_SLACK && warm.iter().all(|z| z.norm() <= 1.0 + 1e-9);
    if warm_ok {
        let warm_obj = quadratic_value(q, warm);
        if warm_obj <= out.objective {
            debug!("warm start is no worse than the computed solution; keeping it");
            out.solution = warm.to_owned();
            out.objective = warm_obj;
            out.coverage_residual = warm_resid;
        }
    }
    Ok(out)
}

/// Transmit subproblem with `W` fixed.
pub fn solve_tx_subproblem(
    w: ArrayView2<'_, Complex64>,
    est: &ChannelEstimate,
    a_tx: &SteeringMatrix,
    sigma_tx_sq: f64,
    warm_f: ArrayView2<'_, Complex64>,
    config: &SolverConfig,
) -> Result<SubproblemOutcome> {
    let q = tx_quadratic(w, est)?;
    solve_coverage_qp(q.view(), a_tx.entries().view(), sigma_tx_sq, warm_f, config)
}

/// Receive subproblem with `F` fixed.
pub fn solve_rx_subproblem(
    f: ArrayView2<'_, Complex64>,
    est: &ChannelEstimate,
    a_rx: &SteeringMatrix,
    sigma_rx_sq: f64,
    warm_w: ArrayView2<'_, Complex64>,
    config: &SolverConfig,
) -> Result<SubproblemOutcome> {
    let q = rx_quadratic(f, est)?;
    solve_coverage_qp(q.view(), a_rx.entries().view(), sigma_rx_sq, warm_w, config)
}

/// Step labels in the objective trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStep {
    Initial,
    SolveTx,
    ProjectTx,
    SolveRx,
    ProjectRx,
}

impl TraceStep {
    pub fn is_solve(self) -> bool {
        matches!(self, TraceStep::SolveTx | TraceStep::SolveRx)
    }
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceStep::Initial => "initial",
            TraceStep::SolveTx => "solve_tx",
            TraceStep::ProjectTx => "project_tx",
            TraceStep::SolveRx => "solve_rx",
            TraceStep::ProjectRx => "project_rx",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub pass: usize,
    pub step: TraceStep,
    pub objective: f64,
}

/// Output of [`design_codebooks`].
#[derive(Debug, Clone)]
pub struct DesignResult {
    pub tx_codebook: Codebook,
    pub rx_codebook: Codebook,
    pub objective_trace: Vec<TraceEntry>,
    /// Normalized complex-form coverage residual of the last transmit solve,
    /// before projection.
    pub coverage_residual_tx: f64,
    pub coverage_residual_rx: f64,
    /// Normalized coverage residual of the quantized codebooks.
    pub projected_residual_tx: f64,
    pub projected_residual_rx: f64,
    pub converged: bool,
}

impl DesignResult {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace
            .last()
            .map_or(f64::NAN, |e| e.objective)
    }

    /// CSV with columns `pass,step,objective`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "pass,step,objective")?;
        for e in &self.objective_trace {
            writeln!(out, "{},{},{:?}", e.pass, e.step, e.objective)?;
        }
        Ok(())
    }
}

/// Projected alternating minimization from matched-filter initialization.
pub fn design_codebooks(
    est: &ChannelEstimate,
    tx_steering: &SteeringMatrix,
    rx_steering: &SteeringMatrix,
    spec: &QuantizationSpec,
    config: &SolverConfig,
) -> Result<DesignResult> {
    config.validate()?;
    let h = est.estimate();
    if tx_steering.num_antennas() != h.num_tx() || rx_steering.num_antennas() != h.num_rx() {
        return Err(Error::DimensionMismatch(format!(
            "steering matrices have {} and {} antennas for a {}x{} channel",
            tx_steering.num_antennas(),
            rx_steering.num_antennas(),
            h.num_rx(),
            h.num_tx()
        )));
    }
    let a_tx = tx_steering.entries();
    let a_rx = rx_steering.entries();
    let nt = h.num_tx() as f64;
    let nr = h.num_rx() as f64;
    let mt = tx_steering.num_beams() as f64;
    let mr = rx_steering.num_beams() as f64;

    let mut f = Codebook::quantized(a_tx.view(), tx_steering.region().to_vec(), spec)?;
    let mut w = Codebook::quantized(a_rx.view(), rx_steering.region().to_vec(), spec)?;
    let mut trace = vec![TraceEntry {
        pass: 0,
        step: TraceStep::Initial,
        objective: expected_objective(f.matrix().view(), w.matrix().view(), est)?,
    }];
    let mut resid_tx = coverage_residual(a_tx.view(), f.matrix().view()) / (nt * nt * mt);
    let mut resid_rx = coverage_residual(a_rx.view(), w.matrix().view()) / (nr * nr * mr);
    let mut converged = true;

    for pass in 1..=config.am_passes {
        let sol = solve_tx_subproblem(
            w.matrix().view(),
            est,
            tx_steering,
            config.sigma_tx_sq,
            f.matrix().view(),
            config,
        )?;
        converged &= sol.converged;
        resid_tx = sol.coverage_residual;
        trace.push(TraceEntry {
            pass,
            step: TraceStep::SolveTx,
            objective: expected_objective(sol.solution.view(), w.matrix().view(), est)?,
        });
        f = Codebook::quantized(sol.solution.view(), tx_steering.region().to_vec(), spec)?;
        trace.push(TraceEntry {
            pass,
            step: TraceStep::ProjectTx,
            objective: expected_objective(f.matrix().view(), w.matrix().view(), est)?,
        });

        let sol = solve_rx_subproblem(
            f.matrix().view(),
            est,
            rx_steering,
            config.sigma_rx_sq,
            w.matrix().view(),
            config,
        )?;
        converged &= sol.converged;
        resid_rx = sol.coverage_residual;
        trace.push(TraceEntry {
            pass,
            step: TraceStep::SolveRx,
            objective: expected_objective(f.matrix().view(), sol.solution.view(), est)?,
        });
        w = Codebook::quantized(sol.solution.view(), rx_steering.region().to_vec(), spec)?;
        trace.push(TraceEntry {
            pass,
            step: TraceStep::ProjectRx,
            objective: expected_objective(f.matrix().view(), w.matrix().view(), est)?,
        });
    }
    if !converged {
        warn!("a subproblem stopped before meeting its tolerance");
    }
    Ok(DesignResult {
        projected_residual_tx: coverage_residual(a_tx.view(), f.matrix().view()) / (nt * nt * mt),
        projected_residual_rx: coverage_residual(a_rx.view(), w.matrix().view()) / (nr * nr * mr),
        tx_codebook: f,
        rx_codebook: w,
        objective_trace: trace,
        coverage_residual_tx: resid_tx,
        coverage_residual_rx: resid_rx,
        converged,
    })
}
