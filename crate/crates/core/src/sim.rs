//! Monte Carlo evaluation: user drawing, beam alignment, coverage-variance
//! tuning and parameter sweeps.
//!
//! Randomness is drawn from per-purpose streams keyed by the master seed and
//! the trial index, so every codebook and every sweep point sees the same
//! users and the same channel draws.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::str::FromStr;

use log::{debug, info};
use ndarray::ArrayView1;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::arrays::{steering_matrix, Direction, LinkSide, SteeringMatrix};
use crate::channels::{
    los_user_channel, mix_with_draw, spherical_wave_channel, ArrayPairLayout, ChannelEstimate,
    ChannelMatrix,
};
use crate::codebooks::{cbf_codebook, taylor_codebook, Codebook, QuantizationSpec};
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian_matrix, inner, norm_sqr, CMatrix, CVector};
use crate::linkmetrics::{gamma_sum, linear_to_db, sinr_and_rates, LinkBudget, TrialMetrics};
use crate::rng::stream;
use crate::solver::{design_codebooks, DesignResult, SolverConfig};

const STREAM_USERS: u64 = 1;
const STREAM_ERROR: u64 = 2;
const STREAM_MIXING: u64 = 3;

/// Monte Carlo settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub num_user_pairs: usize,
    pub master_seed: u64,
    /// Azimuth range of users in radians.
    pub user_az_bounds: (f64, f64),
    /// Elevation range of users in radians.
    pub user_el_bounds: (f64, f64),
    pub budget: LinkBudget,
    /// Candidate `(sigma_tx^2, sigma_rx^2)` pairs, linear.
    pub sigma_grid: Vec<(f64, f64)>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_user_pairs: 500,
            master_seed: 0,
            user_az_bounds: (-67.5f64.to_radians(), 67.5f64.to_radians()),
            user_el_bounds: (-37.5f64.to_radians(), 37.5f64.to_radians()),
            budget: LinkBudget::symmetric(10.0, 90.0).expect("default budget is valid"),
            sigma_grid: default_sigma_grid(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_user_pairs == 0 {
            return Err(Error::invalid("num_user_pairs", "must be at least 1"));
        }
        for (name, (lo, hi)) in [
            ("user_az_bounds", self.user_az_bounds),
            ("user_el_bounds", self.user_el_bounds),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(
                    name,
                    format!("({lo}, {hi}) is not an ordered range"),
                ));
            }
        }
        Direction::new(self.user_az_bounds.0, self.user_el_bounds.0)?;
        Direction::new(self.user_az_bounds.1, self.user_el_bounds.1)?;
        self.budget.validate()?;
        if self.sigma_grid.is_empty() {
            return Err(Error::invalid("sigma_grid", "must not be empty"));
        }
        if self
            .sigma_grid
            .iter()
            .any(|&(a, b)| !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0))
        {
            return Err(Error::invalid(
                "sigma_grid",
                "entries must be finite and nonnegative",
            ));
        }
        Ok(())
    }
}

/// Equal transmit and receive coverage variance from -40 dB to 0 dB in 5 dB
/// steps.
pub fn default_sigma_grid() -> Vec<(f64, f64)> {
    (0..=8)
        .map(|k| {
            let s = 10f64.powf((-40.0 + 5.0 * k as f64) / 10.0);
            (s, s)
        })
        .collect()
}

/// Downlink and uplink user directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserPair {
    pub downlink: Direction,
    pub uplink: Direction,
}

pub fn draw_user_pair<R: Rng + ?Sized>(rng: &mut R, cfg: &SimConfig) -> Result<UserPair> {
    let draw = |rng: &mut R| -> Result<Direction> {
        let (a0, a1) = cfg.user_az_bounds;
        let (e0, e1) = cfg.user_el_bounds;
        let az = a0 + (a1 - a0) * rng.random::<f64>();
        let el = e0 + (e1 - e0) * rng.random::<f64>();
        Direction::new(az, el)
    };
    let downlink = draw(rng)?;
    let uplink = draw(rng)?;
    Ok(UserPair { downlink, uplink })
}

/// The configured number of user pairs, trial `t` drawn from its own stream.
pub fn user_pairs(cfg: &SimConfig) -> Result<Vec<UserPair>> {
    (0..cfg.num_user_pairs)
        .map(|t| draw_user_pair(&mut stream(cfg.master_seed, &[STREAM_USERS, t as u64]), cfg))
        .collect()
}

/// Order-sensitive digest of user draws, logged to check that codebooks
/// share realizations.
pub fn draw_digest(users: &[UserPair]) -> u64 {
    let mut h = DefaultHasher::new();
    for u in users {
        for d in [u.downlink, u.uplink] {
            d.azimuth().to_bits().hash(&mut h);
            d.elevation().to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// Line-of-sight channels of one user pair.
#[derive(Debug, Clone)]
pub struct UserChannels {
    pub h_tx: CVector,
    pub h_rx: CVector,
}

impl UserChannels {
    pub fn new(layout: &ArrayPairLayout, users: &UserPair) -> Self {
        Self {
            h_tx: los_user_channel(layout.tx_geom(), users.downlink),
            h_rx: los_user_channel(layout.rx_geom(), users.uplink),
        }
    }
}

/// Beamforming gain normalized so that an SNR is `SNRbar * gain`.
fn normalized_gain(beam: ArrayView1<'_, Complex64>, h: &CVector, side: LinkSide) -> f64 {
    let n = beam.len() as f64;
    let c = inner(h.view(), beam).norm_sqr();
    match side {
        LinkSide::Transmit => c / (n * n),
        LinkSide::Receive => {
            let w = norm_sqr(beam);
            if w == 0.0 {
                0.0
            } else {
                c / (n * w)
            }
        }
    }
}

fn best_beam(cb: &Codebook, h: &CVector, side: LinkSide) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..cb.num_beams() {
        let g = normalized_gain(cb.beam(i), h, side);
        if g > best.1 {
            best = (i, g);
        }
    }
    (best.0, best.1.max(0.0))
}

/// Exhaustive beam search maximizing the link SNR. Ties go to the lower
/// index; a codebook of zero beams returns index 0 with SNR 0.
pub fn beam_align(
    cb: &Codebook,
    h: ArrayView1<'_, Complex64>,
    side: LinkSide,
    budget: &LinkBudget,
) -> Result<(usize, f64)> {
    if cb.num_beams() == 0 {
        return Err(Error::invalid("codebook", "no beams"));
    }
    if h.len() != cb.num_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "user channel of length {} for {} antennas",
            h.len(),
            cb.num_antennas()
        )));
    }
    let snrbar = match side {
        LinkSide::Transmit => budget.snrbar_tx(),
        LinkSide::Receive => budget.snrbar_rx(),
    };
    if snrbar == 0.0 {
        return Ok((0, 0.0));
    }
    let (i, g) = best_beam(cb, &h.to_owned(), side);
    Ok((i, snrbar * g))
}

/// Budget-independent outcome of aligning one user pair.
#[derive(Debug, Clone, Copy)]
struct Aligned {
    tx_beam: usize,
    rx_beam: usize,
    gain_tx: f64,
    gain_rx: f64,
    /// `|w^H H f|^2 / (N_t^2 N_r ||w||^2)`.
    coupling: f64,
    cbf_gain_tx: f64,
    cbf_gain_rx: f64,
}

fn coupling(f: ArrayView1<'_, Complex64>, w: ArrayView1<'_, Complex64>, h: &ChannelMatrix) -> f64 {
    let w_sq = norm_sqr(w);
    if w_sq == 0.0 {
        return 0.0;
    }
    let nt = h.num_tx() as f64;
    let nr = h.num_rx() as f64;
    let hf = h.entries().dot(&f);
    inner(w, hf.view()).norm_sqr() / (nt * nt * nr * w_sq)
}

fn evaluate(a: &Aligned, budget: &LinkBudget) -> Result<TrialMetrics> {
    let snr_tx = budget.snrbar_tx() * a.gain_tx;
    let snr_rx = budget.snrbar_rx() * a.gain_rx;
    let inr_rx = budget.inrbar_rx() * a.coupling;
    let r = sinr_and_rates(snr_tx, snr_rx, inr_rx, budget.inr_tx());
    let gamma = gamma_sum(
        r.rate_tx,
        r.rate_rx,
        budget.snrbar_tx() * a.cbf_gain_tx,
        budget.snrbar_rx() * a.cbf_gain_rx,
    )?;
    Ok(TrialMetrics {
        snr_tx,
        snr_rx,
        inr_rx,
        sinr_tx: r.sinr_tx,
        sinr_rx: r.sinr_rx,
        rate_tx: r.rate_tx,
        rate_rx: r.rate_rx,
        gamma_sum: gamma,
        tx_beam_index: a.tx_beam,
        rx_beam_index: a.rx_beam,
    })
}

/// One Monte Carlo trial: align both links on `(tx, rx)`, evaluate against
/// `h_true`, and normalize by the interference-free capacities of the
/// reference conjugate codebooks for the same users.
pub fn run_trial(
    tx: &Codebook,
    rx: &Codebook,
    h_true: &ChannelMatrix,
    budget: &LinkBudget,
    users: &UserChannels,
    cbf_reference: (&Codebook, &Codebook),
) -> Result<TrialMetrics> {
    check_dims(tx, rx, h_true)?;
    check_dims(cbf_reference.0, cbf_reference.1, h_true)?;
    let (i, _) = beam_align(tx, users.h_tx.view(), LinkSide::Transmit, budget)?;
    let (j, _) = beam_align(rx, users.h_rx.view(), LinkSide::Receive, budget)?;
    let (ci, _) = beam_align(
        cbf_reference.0,
        users.h_tx.view(),
        LinkSide::Transmit,
        budget,
    )?;
    let (cj, _) = beam_align(
        cbf_reference.1,
        users.h_rx.view(),
        LinkSide::Receive,
        budget,
    )?;
    if norm_sqr(rx.beam(j)) == 0.0 {
        return Err(Error::ZeroBeam(j));
    }
    let a = Aligned {
        tx_beam: i,
        rx_beam: j,
        gain_tx: normalized_gain(tx.beam(i), &users.h_tx, LinkSide::Transmit),
        gain_rx: normalized_gain(rx.beam(j), &users.h_rx, LinkSide::Receive),
        coupling: coupling(tx.beam(i), rx.beam(j), h_true),
        cbf_gain_tx: normalized_gain(cbf_reference.0.beam(ci), &users.h_tx, LinkSide::Transmit),
        cbf_gain_rx: normalized_gain(cbf_reference.1.beam(cj), &users.h_rx, LinkSide::Receive),
    };
    evaluate(&a, budget)
}

fn check_dims(tx: &Codebook, rx: &Codebook, h: &ChannelMatrix) -> Result<()> {
    if tx.num_antennas() != h.num_tx() || rx.num_antennas() != h.num_rx() {
        return Err(Error::DimensionMismatch(format!(
            "codebooks with {} and {} antennas for a {}x{} channel",
            tx.num_antennas(),
            rx.num_antennas(),
            h.num_rx(),
            h.num_tx()
        )));
    }
    Ok(())
}

/// How the true self-interference channel is realized per trial.
#[derive(Debug, Clone, Copy)]
pub enum ChannelPolicy<'a> {
    /// One channel for every trial.
    Fixed(&'a ChannelMatrix),
    /// `H = Hbar + Delta` with a fresh `Delta` of the given variance per trial.
    PerTrialError {
        estimate: &'a ChannelMatrix,
        error_variance: f64,
    },
}

impl ChannelPolicy<'_> {
    fn num_tx(&self) -> usize {
        match self {
            ChannelPolicy::Fixed(h) => h.num_tx(),
            ChannelPolicy::PerTrialError { estimate, .. } => estimate.num_tx(),
        }
    }

    fn num_rx(&self) -> usize {
        match self {
            ChannelPolicy::Fixed(h) => h.num_rx(),
            ChannelPolicy::PerTrialError { estimate, .. } => estimate.num_rx(),
        }
    }
}

/// Per-trial state shared by every codebook at one sweep point.
struct TrialSet {
    users: Vec<UserPair>,
    channels: Vec<UserChannels>,
    cbf_gains: Vec<(f64, f64)>,
    seed: u64,
}

impl TrialSet {
    fn new(
        layout: &ArrayPairLayout,
        cbf_reference: (&Codebook, &Codebook),
        cfg: &SimConfig,
    ) -> Result<Self> {
        let users = user_pairs(cfg)?;
        let channels: Vec<UserChannels> =
            users.iter().map(|u| UserChannels::new(layout, u)).collect();
        let cbf_gains = channels
            .iter()
            .map(|c| {
                (
                    best_beam(cbf_reference.0, &c.h_tx, LinkSide::Transmit).1,
                    best_beam(cbf_reference.1, &c.h_rx, LinkSide::Receive).1,
                )
            })
            .collect();
        Ok(Self {
            users,
            channels,
            cbf_gains,
            seed: cfg.master_seed,
        })
    }

    fn align(
        &self,
        tx: &Codebook,
        rx: &Codebook,
        policy: ChannelPolicy<'_>,
    ) -> Result<Vec<Aligned>> {
        if tx.num_antennas() != policy.num_tx() || rx.num_antennas() != policy.num_rx() {
            return Err(Error::DimensionMismatch(format!(
                "codebooks with {} and {} antennas for a {}x{} channel",
                tx.num_antennas(),
                rx.num_antennas(),
                policy.num_rx(),
                policy.num_tx()
            )));
        }
        (0..self.channels.len())
            .into_par_iter()
            .map(|t| {
                let c = &self.channels[t];
                let (i, gain_tx) = best_beam(tx, &c.h_tx, LinkSide::Transmit);
                let (j, gain_rx) = best_beam(rx, &c.h_rx, LinkSide::Receive);
                if norm_sqr(rx.beam(j)) == 0.0 {
                    return Err(Error::ZeroBeam(j));
                }
                let coupling = match policy {
                    ChannelPolicy::Fixed(h) => coupling(tx.beam(i), rx.beam(j), h),
                    ChannelPolicy::PerTrialError {
                        estimate,
                        error_variance,
                    } => {
                        let h = error_realization(estimate, error_variance, self.seed, t);
                        coupling(tx.beam(i), rx.beam(j), &h)
                    }
                };
                let (cbf_gain_tx, cbf_gain_rx) = self.cbf_gains[t];
                Ok(Aligned {
                    tx_beam: i,
                    rx_beam: j,
                    gain_tx,
                    gain_rx,
                    coupling,
                    cbf_gain_tx,
                    cbf_gain_rx,
                })
            })
            .collect()
    }
}

/// `Hbar + sqrt(eps^2) G_t`, with `G_t` a unit-variance draw fixed by the
/// trial index so every error variance reuses it.
fn error_realization(
    estimate: &ChannelMatrix,
    error_variance: f64,
    seed: u64,
    trial: usize,
) -> ChannelMatrix {
    if error_variance == 0.0 {
        return estimate.clone();
    }
    let mut rng = stream(seed, &[STREAM_ERROR, trial as u64]);
    let g = complex_gaussian_matrix(&mut rng, estimate.num_rx(), estimate.num_tx(), 1.0);
    let s = error_variance.sqrt();
    ChannelMatrix::new(estimate.entries() + &g.mapv(|z| z * s))
}

/// Trial averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloSummary {
    pub mean_gamma_sum: f64,
    /// Standard error of the mean of `gamma_sum`.
    pub stderr_gamma_sum: f64,
    pub mean_rate_tx: f64,
    pub mean_rate_rx: f64,
    pub mean_snr_tx: f64,
    pub mean_snr_rx: f64,
    /// Mean of the linear INR.
    pub mean_inr_rx: f64,
    pub trials: usize,
}

impl MonteCarloSummary {
    pub fn mean_inr_rx_db(&self) -> f64 {
        linear_to_db(self.mean_inr_rx)
    }

    fn from_trials(trials: &[TrialMetrics]) -> Self {
        let n = trials.len() as f64;
        let mean = |f: &dyn Fn(&TrialMetrics) -> f64| trials.iter().map(f).sum::<f64>() / n;
        let g = mean(&|t| t.gamma_sum);
        let var = if trials.len() > 1 {
            trials
                .iter()
                .map(|t| (t.gamma_sum - g).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean_gamma_sum: g,
            stderr_gamma_sum: (var / n).sqrt(),
            mean_rate_tx: mean(&|t| t.rate_tx),
            mean_rate_rx: mean(&|t| t.rate_rx),
            mean_snr_tx: mean(&|t| t.snr_tx),
            mean_snr_rx: mean(&|t| t.snr_rx),
            mean_inr_rx: mean(&|t| t.inr_rx),
            trials: trials.len(),
        }
    }
}

fn summarize(
    aligned: &[Aligned],
    budget: &LinkBudget,
) -> Result<(MonteCarloSummary, Vec<TrialMetrics>)> {
    if budget.snrbar_tx() == 0.0 || budget.snrbar_rx() == 0.0 {
        return Err(Error::invalid("budget", "link SNR scales must be finite"));
    }
    let trials: Vec<TrialMetrics> = aligned
        .iter()
        .map(|a| evaluate(a, budget))
        .collect::<Result<_>>()?;
    Ok((MonteCarloSummary::from_trials(&trials), trials))
}

/// Evaluates one codebook pair over the configured user draws.
pub fn monte_carlo(
    tx: &Codebook,
    rx: &Codebook,
    policy: ChannelPolicy<'_>,
    layout: &ArrayPairLayout,
    cbf_reference: (&Codebook, &Codebook),
    cfg: &SimConfig,
) -> Result<(MonteCarloSummary, Vec<TrialMetrics>)> {
    cfg.validate()?;
    let set = TrialSet::new(layout, cbf_reference, cfg)?;
    let aligned = set.align(tx, rx, policy)?;
    summarize(&aligned, &cfg.budget)
}

/// Everything fixed about the arrays and codebook families.
#[derive(Debug, Clone)]
pub struct DesignContext {
    pub layout: ArrayPairLayout,
    pub tx_steering: SteeringMatrix,
    pub rx_steering: SteeringMatrix,
    /// Quantization of the designed codebooks.
    pub spec: QuantizationSpec,
    pub solver: SolverConfig,
}

impl DesignContext {
    pub fn new(
        layout: ArrayPairLayout,
        tx_region: &[Direction],
        rx_region: &[Direction],
        spec: QuantizationSpec,
        solver: SolverConfig,
    ) -> Result<Self> {
        let tx_steering = steering_matrix(layout.tx_geom(), tx_region)?;
        let rx_steering = steering_matrix(layout.rx_geom(), rx_region)?;
        Ok(Self {
            layout,
            tx_steering,
            rx_steering,
            spec,
            solver,
        })
    }

    pub fn design(&self, est: &ChannelEstimate, sigma: (f64, f64)) -> Result<DesignResult> {
        let cfg = SolverConfig {
            sigma_tx_sq: sigma.0,
            sigma_rx_sq: sigma.1,
            ..self.solver.clone()
        };
        design_codebooks(est, &self.tx_steering, &self.rx_steering, &self.spec, &cfg)
    }

    fn design_grid(&self, est: &ChannelEstimate, grid: &[(f64, f64)]) -> Result<Vec<DesignResult>> {
        grid.par_iter().map(|&s| self.design(est, s)).collect()
    }
}

/// Outcome of coverage-variance tuning.
#[derive(Debug, Clone)]
pub struct TunedDesign {
    pub sigma: (f64, f64),
    pub design: DesignResult,
    /// Mean `gamma_sum` of every grid point, in grid order.
    pub grid_gamma: Vec<f64>,
}

fn pick_best(gammas: &[f64], grid: &[(f64, f64)]) -> usize {
    // Ties toward the smaller variance.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| {
        (grid[a].0 + grid[a].1)
            .partial_cmp(&(grid[b].0 + grid[b].1))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut best = order[0];
    for &k in &order[1..] {
        if gammas[k] > gammas[best] {
            best = k;
        }
    }
    best
}

/// Designs a codebook pair for every grid point and keeps the one with the
/// highest mean `gamma_sum`.
pub fn tune_sigma(
    est: &ChannelEstimate,
    ctx: &DesignContext,
    policy: ChannelPolicy<'_>,
    cbf_reference: (&Codebook, &Codebook),
    cfg: &SimConfig,
) -> Result<TunedDesign> {
    cfg.validate()?;
    let set = TrialSet::new(&ctx.layout, cbf_reference, cfg)?;
    let designs = ctx.design_grid(est, &cfg.sigma_grid)?;
    let aligned: Vec<Vec<Aligned>> = designs
        .iter()
        .map(|d| set.align(&d.tx_codebook, &d.rx_codebook, policy))
        .collect::<Result<_>>()?;
    let gammas: Vec<f64> = aligned
        .iter()
        .map(|a| summarize(a, &cfg.budget).map(|s| s.0.mean_gamma_sum))
        .collect::<Result<_>>()?;
    let best = pick_best(&gammas, &cfg.sigma_grid);
    Ok(TunedDesign {
        sigma: cfg.sigma_grid[best],
        design: designs[best].clone(),
        grid_gamma: gammas,
    })
}

/// Sweep families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Primary axis: `SNRbar_tx = SNRbar_rx` in dB.
    SnrSweep,
    /// Primary axis: `INRbar_rx` in dB.
    InrSweep,
    /// Axes: `SNRbar_tx` and `SNRbar_rx` in dB.
    SnrHeatmap,
    /// Axes: `INR_tx` and `INRbar_rx` in dB.
    InrHeatmap,
    /// Primary axis: estimation error variance in dB.
    ErrorSweep,
    /// Primary axis: mixing variance in dB.
    MixingSweep,
    /// Axes: `sigma_tx^2 = sigma_rx^2` in dB and `INRbar_rx` in dB; designed
    /// codebooks only, without tuning.
    SigmaSweep,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::SnrSweep,
        Experiment::InrSweep,
        Experiment::SnrHeatmap,
        Experiment::InrHeatmap,
        Experiment::ErrorSweep,
        Experiment::MixingSweep,
        Experiment::SigmaSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SnrSweep => "snr_sweep",
            Experiment::InrSweep => "inr_sweep",
            Experiment::SnrHeatmap => "snr_heatmap",
            Experiment::InrHeatmap => "inr_heatmap",
            Experiment::ErrorSweep => "error_sweep",
            Experiment::MixingSweep => "mixing_sweep",
            Experiment::SigmaSweep => "sigma_sweep",
        }
    }

    pub fn axis_names(self) -> &'static [&'static str] {
        match self {
            Experiment::SnrSweep => &["snrbar_db"],
            Experiment::InrSweep => &["inrbar_rx_db"],
            Experiment::SnrHeatmap => &["snrbar_tx_db", "snrbar_rx_db"],
            Experiment::InrHeatmap => &["inr_tx_db", "inrbar_rx_db"],
            Experiment::ErrorSweep => &["error_variance_db"],
            Experiment::MixingSweep => &["mixing_variance_db"],
            Experiment::SigmaSweep => &["sigma_sq_db", "inrbar_rx_db"],
        }
    }

    pub fn is_two_dimensional(self) -> bool {
        self.axis_names().len() == 2
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|e| e.name()).collect();
                Error::invalid(
                    "experiment",
                    format!("unknown `{s}`; expected one of {}", names.join(", ")),
                )
            })
    }
}

/// Sweep axis values in dB. `secondary` is used only by two-dimensional
/// experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxes {
    pub primary: Vec<f64>,
    pub secondary: Vec<f64>,
}

/// Complete description of a sweep.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub experiment: Experiment,
    pub axes: SweepAxes,
    pub context: DesignContext,
    /// Quantization of the conjugate and Taylor baselines.
    pub baseline_spec: QuantizationSpec,
    /// Quantization of the conjugate codebook defining the capacity
    /// normalization.
    pub reference_spec: QuantizationSpec,
    pub taylor_sll_db: f64,
    /// Estimation error variance assumed by designs outside the error sweep.
    pub error_variance: f64,
    /// Tune the coverage variance per point; otherwise use the solver's.
    pub tune_sigma: bool,
}

/// Labels of the evaluated codebooks.
pub const LABEL_DESIGNED: &str = "designed";
pub const LABEL_CBF: &str = "cbf";
pub const LABEL_TAYLOR: &str = "taylor";

/// One row of sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub axis_values: Vec<f64>,
    pub label: String,
    pub summary: MonteCarloSummary,
    pub tuned_sigma: Option<(f64, f64)>,
    pub draw_digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub experiment: Experiment,
    pub axis_names: Vec<String>,
    pub records: Vec<SweepRecord>,
}

fn fmt_value(v: f64) -> String {
    format!("{v:?}")
}

impl SweepResult {
    /// Records with the given label, in sweep order.
    pub fn series(&self, label: &str) -> Vec<&SweepRecord> {
        self.records.iter().filter(|r| r.label == label).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header: Vec<String> = self.axis_names.clone();
        header.extend(
            [
                "codebook",
                "mean_gamma_sum",
                "stderr_gamma_sum",
                "mean_rate_tx",
                "mean_rate_rx",
                "mean_inr_rx_db",
                "tuned_sigma_tx_sq_db",
                "tuned_sigma_rx_sq_db",
                "trials",
            ]
            .map(String::from),
        );
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            let mut row: Vec<String> = r.axis_values.iter().map(|&v| fmt_value(v)).collect();
            let s = &r.summary;
            row.push(r.label.clone());
            row.push(fmt_value(s.mean_gamma_sum));
            row.push(fmt_value(s.stderr_gamma_sum));
            row.push(fmt_value(s.mean_rate_tx));
            row.push(fmt_value(s.mean_rate_rx));
            row.push(fmt_value(s.mean_inr_rx_db()));
            match r.tuned_sigma {
                Some((a, b)) => {
                    row.push(fmt_value(linear_to_db(a)));
                    row.push(fmt_value(linear_to_db(b)));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            row.push(s.trials.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn db_or_zero(db: f64) -> f64 {
    crate::linkmetrics::db_to_linear(db)
}

/// Budget for one sweep point.
fn point_budget(experiment: Experiment, base: &LinkBudget, p: f64, s: f64) -> Result<LinkBudget> {
    let b = match experiment {
        Experiment::SnrSweep => LinkBudget {
            snrbar_tx_db: p,
            snrbar_rx_db: p,
            ..*base
        },
        Experiment::InrSweep => LinkBudget {
            inrbar_rx_db: p,
            ..*base
        },
        Experiment::SnrHeatmap => LinkBudget {
            snrbar_tx_db: p,
            snrbar_rx_db: s,
            ..*base
        },
        Experiment::InrHeatmap => LinkBudget {
            inr_tx_db: p,
            inrbar_rx_db: s,
            ..*base
        },
        Experiment::SigmaSweep => LinkBudget {
            inrbar_rx_db: s,
            ..*base
        },
        Experiment::ErrorSweep | Experiment::MixingSweep => *base,
    };
    b.validate()?;
    Ok(b)
}

struct Baselines {
    cbf: (Codebook, Codebook),
    taylor: (Codebook, Codebook),
    reference: (Codebook, Codebook),
}

impl Baselines {
    fn new(setup: &SweepSetup) -> Result<Self> {
        let ctx = &setup.context;
        let tx_geom = ctx.layout.tx_geom();
        let rx_geom = ctx.layout.rx_geom();
        let tx_region = ctx.tx_steering.region();
        let rx_region = ctx.rx_steering.region();
        Ok(Self {
            cbf: (
                cbf_codebook(tx_geom, tx_region, &setup.baseline_spec)?,
                cbf_codebook(rx_geom, rx_region, &setup.baseline_spec)?,
            ),
            taylor: (
                taylor_codebook(
                    tx_geom,
                    tx_region,
                    &setup.baseline_spec,
                    setup.taylor_sll_db,
                )?,
                taylor_codebook(
                    rx_geom,
                    rx_region,
                    &setup.baseline_spec,
                    setup.taylor_sll_db,
                )?,
            ),
            reference: (
                cbf_codebook(tx_geom, tx_region, &setup.reference_spec)?,
                cbf_codebook(rx_geom, rx_region, &setup.reference_spec)?,
            ),
        })
    }

    fn reference(&self) -> (&Codebook, &Codebook) {
        (&self.reference.0, &self.reference.1)
    }
}

/// Designs for one channel estimate, aligned once and evaluated at any
/// number of budgets.
struct DesignFamily {
    grid: Vec<(f64, f64)>,
    aligned: Vec<Vec<Aligned>>,
}

impl DesignFamily {
    fn new(
        ctx: &DesignContext,
        est: &ChannelEstimate,
        grid: Vec<(f64, f64)>,
        set: &TrialSet,
        policy: ChannelPolicy<'_>,
    ) -> Result<Self> {
        let designs = ctx.design_grid(est, &grid)?;
        for (g, d) in grid.iter().zip(&designs) {
            debug!(
                "design sigma^2=({:.3e}, {:.3e}) objective {:.6e}",
                g.0,
                g.1,
                d.final_objective()
            );
        }
        let aligned = designs
            .iter()
            .map(|d| set.align(&d.tx_codebook, &d.rx_codebook, policy))
            .collect::<Result<_>>()?;
        Ok(Self { grid, aligned })
    }

    /// Best grid point for `budget` and its summary.
    fn best(&self, budget: &LinkBudget) -> Result<(usize, MonteCarloSummary)> {
        let summaries: Vec<MonteCarloSummary> = self
            .aligned
            .iter()
            .map(|a| summarize(a, budget).map(|s| s.0))
            .collect::<Result<_>>()?;
        let gammas: Vec<f64> = summaries.iter().map(|s| s.mean_gamma_sum).collect();
        let k = pick_best(&gammas, &self.grid);
        Ok((k, summaries[k]))
    }
}

/// Runs one experiment. Every codebook at a point is evaluated on the same
/// user draws and channel realizations.
pub fn sweep(setup: &SweepSetup, cfg: &SimConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let exp = setup.experiment;
    if setup.axes.primary.is_empty()
        || (exp.is_two_dimensional() && setup.axes.secondary.is_empty())
    {
        return Err(Error::invalid("axes", format!("{exp} needs nonempty axes")));
    }
    let ctx = &setup.context;
    let baselines = Baselines::new(setup)?;
    let set = TrialSet::new(&ctx.layout, baselines.reference(), cfg)?;
    let digest = draw_digest(&set.users);
    info!(
        "{exp}: {} user pairs, draw digest {digest:016x}",
        set.users.len()
    );

    let grid = if setup.tune_sigma {
        cfg.sigma_grid.clone()
    } else {
        vec![(ctx.solver.sigma_tx_sq, ctx.solver.sigma_rx_sq)]
    };
    let points: Vec<(f64, f64)> = if exp.is_two_dimensional() {
        setup
            .axes
            .primary
            .iter()
            .flat_map(|&p| setup.axes.secondary.iter().map(move |&s| (p, s)))
            .collect()
    } else {
        setup.axes.primary.iter().map(|&p| (p, f64::NAN)).collect()
    };

    let mut records = Vec::new();
    let mut push =
        |axis: Vec<f64>, label: &str, summary: MonteCarloSummary, tuned: Option<(f64, f64)>| {
            records.push(SweepRecord {
                axis_values: axis,
                label: label.to_string(),
                summary,
                tuned_sigma: tuned,
                draw_digest: digest,
            });
        };
    let axis_of = |p: f64, s: f64| {
        if exp.is_two_dimensional() {
            vec![p, s]
        } else {
            vec![p]
        }
    };

    match exp {
        Experiment::SnrSweep
        | Experiment::InrSweep
        | Experiment::SnrHeatmap
        | Experiment::InrHeatmap => {
            let h = spherical_wave_channel(&ctx.layout)?;
            let est = ChannelEstimate::new(h.clone(), setup.error_variance)?;
            let policy = ChannelPolicy::Fixed(&h);
            let family = DesignFamily::new(ctx, &est, grid, &set, policy)?;
            let cbf = set.align(&baselines.cbf.0, &baselines.cbf.1, policy)?;
            let taylor = set.align(&baselines.taylor.0, &baselines.taylor.1, policy)?;
            for &(p, s) in &points {
                let budget = point_budget(exp, &cfg.budget, p, s)?;
                let (k, best) = family.best(&budget)?;
                push(axis_of(p, s), LABEL_DESIGNED, best, Some(family.grid[k]));
                push(axis_of(p, s), LABEL_CBF, summarize(&cbf, &budget)?.0, None);
                push(
                    axis_of(p, s),
                    LABEL_TAYLOR,
                    summarize(&taylor, &budget)?.0,
                    None,
                );
            }
        }
        Experiment::SigmaSweep => {
            let h = spherical_wave_channel(&ctx.layout)?;
            let est = ChannelEstimate::new(h.clone(), setup.error_variance)?;
            let sigmas: Vec<(f64, f64)> = setup
                .axes
                .primary
                .iter()
                .map(|&db| (db_or_zero(db), db_or_zero(db)))
                .collect();
            let family = DesignFamily::new(ctx, &est, sigmas, &set, ChannelPolicy::Fixed(&h))?;
            for (k, &p) in setup.axes.primary.iter().enumerate() {
                for &s in &setup.axes.secondary {
                    let budget = point_budget(exp, &cfg.budget, p, s)?;
                    let summary = summarize(&family.aligned[k], &budget)?.0;
                    push(vec![p, s], LABEL_DESIGNED, summary, Some(family.grid[k]));
                }
            }
        }
        Experiment::ErrorSweep => {
            let h_bar = spherical_wave_channel(&ctx.layout)?;
            let budget = point_budget(exp, &cfg.budget, f64::NAN, f64::NAN)?;
            for &p in &setup.axes.primary {
                let eps = db_or_zero(p);
                let est = ChannelEstimate::new(h_bar.clone(), eps)?;
                let policy = ChannelPolicy::PerTrialError {
                    estimate: &h_bar,
                    error_variance: eps,
                };
                let family = DesignFamily::new(ctx, &est, grid.clone(), &set, policy)?;
                let (k, best) = family.best(&budget)?;
                push(vec![p], LABEL_DESIGNED, best, Some(family.grid[k]));
                let cbf = set.align(&baselines.cbf.0, &baselines.cbf.1, policy)?;
                push(vec![p], LABEL_CBF, summarize(&cbf, &budget)?.0, None);
                let taylor = set.align(&baselines.taylor.0, &baselines.taylor.1, policy)?;
                push(vec![p], LABEL_TAYLOR, summarize(&taylor, &budget)?.0, None);
                info!("{exp} point {p} dB done");
            }
        }
        Experiment::MixingSweep => {
            let h_sw = spherical_wave_channel(&ctx.layout)?;
            let mut rng = stream(cfg.master_seed, &[STREAM_MIXING]);
            let draw: CMatrix =
                complex_gaussian_matrix(&mut rng, h_sw.num_rx(), h_sw.num_tx(), 1.0);
            let budget = point_budget(exp, &cfg.budget, f64::NAN, f64::NAN)?;
            for &p in &setup.axes.primary {
                let h = mix_with_draw(&h_sw, &draw, db_or_zero(p))?;
                let est = ChannelEstimate::perfect(h.clone());
                let policy = ChannelPolicy::Fixed(&h);
                let family = DesignFamily::new(ctx, &est, grid.clone(), &set, policy)?;
                let (k, best) = family.best(&budget)?;
                push(vec![p], LABEL_DESIGNED, best, Some(family.grid[k]));
                let cbf = set.align(&baselines.cbf.0, &baselines.cbf.1, policy)?;
                push(vec![p], LABEL_CBF, summarize(&cbf, &budget)?.0, None);
                let taylor = set.align(&baselines.taylor.0, &baselines.taylor.1, policy)?;
                push(vec![p], LABEL_TAYLOR, summarize(&taylor, &budget)?.0, None);
                info!("{exp} point {p} dB done");
            }
        }
    }
    Ok(SweepResult {
        experiment: exp,
        axis_names: exp.axis_names().iter().map(|s| s.to_string()).collect(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrays::{default_coverage_grid, UpaGeometry};

    fn small_setup() -> (ArrayPairLayout, Vec<Direction>) {
        let g = UpaGeometry::half_wavelength(4, 4);
        let layout = ArrayPairLayout::stacked(g.clone(), g, 5.0).unwrap();
        (layout, default_coverage_grid(LinkSide::Transmit))
    }

    #[test]
    fn users_stay_in_bounds_and_are_reproducible() {
        let cfg = SimConfig {
            num_user_pairs: 200,
            master_seed: 7,
            ..SimConfig::default()
        };
        let a = user_pairs(&cfg).unwrap();
        let b = user_pairs(&cfg).unwrap();
        assert_eq!(a, b);
        for u in &a {
            for d in [u.downlink, u.uplink] {
                assert!(d.azimuth().abs() <= 67.5f64.to_radians());
                assert!(d.elevation().abs() <= 37.5f64.to_radians());
            }
        }
        let other = user_pairs(&SimConfig {
            master_seed: 8,
            ..cfg.clone()
        })
        .unwrap();
        assert_ne!(draw_digest(&a), draw_digest(&other));
    }

    #[test]
    fn grid_user_selects_its_beam() {
        let (layout, grid) = small_setup();
        let cb = cbf_codebook(layout.tx_geom(), &grid, &QuantizationSpec::infinite()).unwrap();
        let budget = LinkBudget::symmetric(0.0, 0.0).unwrap();
        for k in [0, 13, 22, 44] {
            let h = los_user_channel(layout.tx_geom(), grid[k]);
            let (i, snr) = beam_align(&cb, h.view(), LinkSide::Transmit, &budget).unwrap();
            assert_eq!(i, k);
            assert!((snr - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_codebook_aligns_to_first_beam() {
        let (layout, grid) = small_setup();
        let cb = Codebook::new(CMatrix::zeros((16, grid.len())), grid.clone()).unwrap();
        let budget = LinkBudget::symmetric(0.0, 0.0).unwrap();
        let h = los_user_channel(layout.tx_geom(), grid[3]);
        for side in [LinkSide::Transmit, LinkSide::Receive] {
            assert_eq!(beam_align(&cb, h.view(), side, &budget).unwrap(), (0, 0.0));
        }
    }

    #[test]
    fn interference_free_cbf_has_unit_gamma() {
        let (layout, grid) = small_setup();
        let spec = QuantizationSpec::uniform(8).unwrap();
        let tx = cbf_codebook(layout.tx_geom(), &grid, &spec).unwrap();
        let rx = cbf_codebook(layout.rx_geom(), &grid, &spec).unwrap();
        let h = spherical_wave_channel(&layout).unwrap();
        let cfg = SimConfig {
            num_user_pairs: 50,
            budget: LinkBudget::new(10.0, 10.0, f64::NEG_INFINITY, f64::NEG_INFINITY).unwrap(),
            ..SimConfig::default()
        };
        let (s, trials) = monte_carlo(
            &tx,
            &rx,
            ChannelPolicy::Fixed(&h),
            &layout,
            (&tx, &rx),
            &cfg,
        )
        .unwrap();
        assert_eq!(trials.len(), 50);
        assert!((s.mean_gamma_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn run_trial_matches_cached_path() {
        let (layout, grid) = small_setup();
        let spec = QuantizationSpec::uniform(6).unwrap();
        let tx = taylor_codebook(layout.tx_geom(), &grid, &spec, 25.0).unwrap();
        let rx = cbf_codebook(layout.rx_geom(), &grid, &spec).unwrap();
        let h = spherical_wave_channel(&layout).unwrap();
        let cfg = SimConfig {
            num_user_pairs: 5,
            ..SimConfig::default()
        };
        let (_, trials) = monte_carlo(
            &tx,
            &rx,
            ChannelPolicy::Fixed(&h),
            &layout,
            (&rx, &rx),
            &cfg,
        )
        .unwrap();
        for (t, u) in user_pairs(&cfg).unwrap().iter().enumerate() {
            let ch = UserChannels::new(&layout, u);
            let direct = run_trial(&tx, &rx, &h, &cfg.budget, &ch, (&rx, &rx)).unwrap();
            assert_eq!(direct, trials[t]);
        }
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("fig6".parse::<Experiment>().is_err());
    }

    #[test]
    fn pick_best_prefers_smaller_sigma_on_ties() {
        let grid = [(0.1, 0.1), (0.01, 0.01), (1.0, 1.0)];
        assert_eq!(pick_best(&[0.5, 0.5, 0.4], &grid), 1);
        assert_eq!(pick_best(&[0.5, 0.4, 0.6], &grid), 2);
    }
}
