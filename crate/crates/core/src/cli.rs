//! Configuration-driven command-line front end.
//!
//! A run reads a complete TOML configuration (or the embedded default),
//! applies command-line overrides, echoes the effective configuration into
//! the output directory and writes every artifact atomically.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::arrays::{grid_region, steering_matrix, Direction, UpaGeometry};
use crate::channels::{
    mixture_channel, spherical_wave_channel, ArrayPairLayout, ChannelEstimate, ChannelMatrix,
};
use crate::codebooks::{cbf_codebook, coverage_variance, Codebook, QuantizationSpec};
use crate::error::Error;
use crate::linkmetrics::{avg_inr, db_to_linear, linear_to_db, LinkBudget};
use crate::rng::stream;
use crate::sim::{
    monte_carlo, sweep, ChannelPolicy, DesignContext, Experiment, SimConfig, SweepAxes, SweepSetup,
};
use crate::solver::SolverConfig;

/// The configuration used when `--config` is not given.
pub const DEFAULT_CONFIG: &str = include_str!("default_config.toml");

const STREAM_CONFIG_CHANNEL: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub arrays: ArraysConfig,
    pub quantization: QuantizationConfig,
    pub coverage: CoverageConfig,
    pub budget: LinkBudget,
    pub channel: ChannelConfig,
    pub solver: SolverSection,
    pub sim: SimSection,
    pub axes: AxesConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraysConfig {
    pub tx_rows: usize,
    pub tx_cols: usize,
    pub rx_rows: usize,
    pub rx_cols: usize,
    pub element_spacing_wavelengths: f64,
    pub vertical_separation_wavelengths: f64,
    pub lateral_offset_x_wavelengths: f64,
    pub lateral_offset_y_wavelengths: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizationConfig {
    pub phase_bits: u32,
    pub amplitude_bits: u32,
    pub attenuation_step_db: f64,
    /// Resolution of the conjugate and Taylor baselines.
    pub baseline_bits: u32,
    /// Resolution of the conjugate codebook normalizing spectral efficiency.
    pub reference_bits: u32,
    pub taylor_sll_db: f64,
}

/// Grids as `[start, stop, step]` in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub tx_azimuth_deg: [f64; 3],
    pub tx_elevation_deg: [f64; 3],
    pub rx_azimuth_deg: [f64; 3],
    pub rx_elevation_deg: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    SphericalWave,
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub mixing_variance_db: f64,
    pub error_variance_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub sigma_tx_sq_db: f64,
    pub sigma_rx_sq_db: f64,
    pub am_passes: usize,
    pub subproblem_tolerance: f64,
    pub subproblem_max_iters: usize,
    pub initial_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub num_user_pairs: usize,
    pub user_azimuth_deg: [f64; 2],
    pub user_elevation_deg: [f64; 2],
    pub tune_sigma: bool,
    /// Candidate `sigma_tx^2 = sigma_rx^2` values.
    pub sigma_grid_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxesConfig {
    pub snr_sweep_db: Vec<f64>,
    pub inr_sweep_db: Vec<f64>,
    pub snr_heatmap_tx_db: Vec<f64>,
    pub snr_heatmap_rx_db: Vec<f64>,
    pub inr_heatmap_tx_db: Vec<f64>,
    pub inr_heatmap_rx_db: Vec<f64>,
    pub error_sweep_db: Vec<f64>,
    pub mixing_sweep_db: Vec<f64>,
    pub sigma_sweep_db: Vec<f64>,
    pub sigma_sweep_inr_db: Vec<f64>,
}

/// Rewrites a library validation error so that it names the config key.
fn keyed(section: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidParameter { name, reason } => {
            Error::Config(format!("`{section}.{name}`: {reason}"))
        }
        other => other,
    }
}

fn check_db(key: &str, v: f64) -> crate::error::Result<()> {
    if v.is_nan() || v == f64::INFINITY {
        return Err(Error::Config(format!(
            "`{key}`: {v} is not a valid dB value"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> crate::error::Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> crate::error::Result<Self> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text)
            }
            None => Self::parse(DEFAULT_CONFIG),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        self.layout()?;
        self.tx_region()?;
        self.rx_region()?;
        self.design_spec()?;
        self.baseline_spec()?;
        self.reference_spec()?;
        self.budget.validate().map_err(keyed("budget"))?;
        check_db(
            "channel.mixing_variance_db",
            self.channel.mixing_variance_db,
        )?;
        check_db("channel.error_variance_db", self.channel.error_variance_db)?;
        self.solver_config()?.validate().map_err(keyed("solver"))?;
        if !(self.quantization.taylor_sll_db > 0.0 && self.quantization.taylor_sll_db.is_finite()) {
            return Err(Error::Config(
                "`quantization.taylor_sll_db` must be positive".into(),
            ));
        }
        self.sim_config()?.validate().map_err(keyed("sim"))?;
        Ok(())
    }

    pub fn layout(&self) -> crate::error::Result<ArrayPairLayout> {
        let a = &self.arrays;
        let tx = UpaGeometry::new(a.tx_rows, a.tx_cols, a.element_spacing_wavelengths)
            .map_err(keyed("arrays"))?;
        let rx = UpaGeometry::new(a.rx_rows, a.rx_cols, a.element_spacing_wavelengths)
            .map_err(keyed("arrays"))?;
        ArrayPairLayout::with_lateral_offset(
            tx,
            rx,
            a.vertical_separation_wavelengths,
            [
                a.lateral_offset_x_wavelengths,
                a.lateral_offset_y_wavelengths,
            ],
        )
        .map_err(keyed("arrays"))
    }

    pub fn tx_region(&self) -> crate::error::Result<Vec<Direction>> {
        let c = &self.coverage;
        grid_region(triple(c.tx_azimuth_deg), triple(c.tx_elevation_deg))
            .map_err(|e| Error::Config(format!("`coverage.tx_*_deg`: {e}")))
    }

    pub fn rx_region(&self) -> crate::error::Result<Vec<Direction>> {
        let c = &self.coverage;
        grid_region(triple(c.rx_azimuth_deg), triple(c.rx_elevation_deg))
            .map_err(|e| Error::Config(format!("`coverage.rx_*_deg`: {e}")))
    }

    pub fn design_spec(&self) -> crate::error::Result<QuantizationSpec> {
        let q = &self.quantization;
        QuantizationSpec::new(q.phase_bits, q.amplitude_bits, q.attenuation_step_db)
            .map_err(keyed("quantization"))
    }

    pub fn baseline_spec(&self) -> crate::error::Result<QuantizationSpec> {
        let q = &self.quantization;
        QuantizationSpec::new(q.baseline_bits, q.baseline_bits, q.attenuation_step_db)
            .map_err(|e| Error::Config(format!("`quantization.baseline_bits`: {e}")))
    }

    pub fn reference_spec(&self) -> crate::error::Result<QuantizationSpec> {
        let q = &self.quantization;
        QuantizationSpec::new(q.reference_bits, q.reference_bits, q.attenuation_step_db)
            .map_err(|e| Error::Config(format!("`quantization.reference_bits`: {e}")))
    }

    pub fn solver_config(&self) -> crate::error::Result<SolverConfig> {
        let s = &self.solver;
        check_db("solver.sigma_tx_sq_db", s.sigma_tx_sq_db)?;
        check_db("solver.sigma_rx_sq_db", s.sigma_rx_sq_db)?;
        Ok(SolverConfig {
            sigma_tx_sq: db_to_linear(s.sigma_tx_sq_db),
            sigma_rx_sq: db_to_linear(s.sigma_rx_sq_db),
            am_passes: s.am_passes,
            subproblem_tolerance: s.subproblem_tolerance,
            subproblem_max_iters: s.subproblem_max_iters,
            initial_penalty: s.initial_penalty,
        })
    }

    pub fn sim_config(&self) -> crate::error::Result<SimConfig> {
        let s = &self.sim;
        for &v in &s.sigma_grid_db {
            check_db("sim.sigma_grid_db", v)?;
        }
        Ok(SimConfig {
            num_user_pairs: s.num_user_pairs,
            master_seed: self.seed,
            user_az_bounds: (
                s.user_azimuth_deg[0].to_radians(),
                s.user_azimuth_deg[1].to_radians(),
            ),
            user_el_bounds: (
                s.user_elevation_deg[0].to_radians(),
                s.user_elevation_deg[1].to_radians(),
            ),
            budget: self.budget,
            sigma_grid: s
                .sigma_grid_db
                .iter()
                .map(|&db| (db_to_linear(db), db_to_linear(db)))
                .collect(),
        })
    }

    pub fn design_context(&self) -> crate::error::Result<DesignContext> {
        DesignContext::new(
            self.layout()?,
            &self.tx_region()?,
            &self.rx_region()?,
            self.design_spec()?,
            self.solver_config()?,
        )
    }

    /// The configured self-interference channel and its estimate.
    pub fn channel_estimate(&self) -> crate::error::Result<(ChannelMatrix, ChannelEstimate)> {
        let layout = self.layout()?;
        let h = match self.channel.kind {
            ChannelKind::SphericalWave => spherical_wave_channel(&layout)?,
            ChannelKind::Mixture => {
                let mut rng = stream(self.seed, &[STREAM_CONFIG_CHANNEL]);
                mixture_channel(
                    &layout,
                    db_to_linear(self.channel.mixing_variance_db),
                    &mut rng,
                )?
            }
        };
        let est = ChannelEstimate::new(h.clone(), db_to_linear(self.channel.error_variance_db))
            .map_err(keyed("channel"))?;
        Ok((h, est))
    }

    pub fn sweep_setup(&self, experiment: Experiment) -> crate::error::Result<SweepSetup> {
        let a = &self.axes;
        let (primary, secondary, key) = match experiment {
            Experiment::SnrSweep => (&a.snr_sweep_db, &Vec::new(), "axes.snr_sweep_db"),
            Experiment::InrSweep => (&a.inr_sweep_db, &Vec::new(), "axes.inr_sweep_db"),
            Experiment::SnrHeatmap => (
                &a.snr_heatmap_tx_db,
                &a.snr_heatmap_rx_db,
                "axes.snr_heatmap_*_db",
            ),
            Experiment::InrHeatmap => (
                &a.inr_heatmap_tx_db,
                &a.inr_heatmap_rx_db,
                "axes.inr_heatmap_*_db",
            ),
            Experiment::ErrorSweep => (&a.error_sweep_db, &Vec::new(), "axes.error_sweep_db"),
            Experiment::MixingSweep => (&a.mixing_sweep_db, &Vec::new(), "axes.mixing_sweep_db"),
            Experiment::SigmaSweep => (
                &a.sigma_sweep_db,
                &a.sigma_sweep_inr_db,
                "axes.sigma_sweep_*db",
            ),
        };
        if primary.is_empty() || (experiment.is_two_dimensional() && secondary.is_empty()) {
            return Err(Error::Config(format!("`{key}` must not be empty")));
        }
        for &v in primary.iter().chain(secondary.iter()) {
            if v.is_nan() {
                return Err(Error::Config(format!("`{key}` contains NaN")));
            }
        }
        Ok(SweepSetup {
            experiment,
            axes: SweepAxes {
                primary: primary.clone(),
                secondary: secondary.clone(),
            },
            context: self.design_context()?,
            baseline_spec: self.baseline_spec()?,
            reference_spec: self.reference_spec()?,
            taylor_sll_db: self.quantization.taylor_sll_db,
            error_variance: db_to_linear(self.channel.error_variance_db),
            tune_sigma: self.sim.tune_sigma,
        })
    }
}

fn triple(v: [f64; 3]) -> (f64, f64, f64) {
    (v[0], v[1], v[2])
}

#[derive(Debug, Parser)]
#[command(
    name = "fdcb",
    version,
    about = "Full-duplex analog beamforming codebook design and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// TOML configuration; the embedded default when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed, overriding `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design transmit and receive codebooks.
    Design {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a parameter sweep.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        experiment: String,
    },
    /// Evaluate a pair of codebook files.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        tx: PathBuf,
        #[arg(long)]
        rx: PathBuf,
    },
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible { .. } => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> crate::error::Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn render(
    f: impl FnOnce(&mut Vec<u8>) -> crate::error::Result<()>,
) -> crate::error::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

struct Prepared {
    cfg: ExperimentConfig,
    out: PathBuf,
}

fn prepare(common: &CommonArgs) -> Result<Prepared, CliError> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Config("`--threads` must be at least 1".into()).into());
        }
        // A global pool can only be installed once per process.
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            warn!("thread cap not applied: {e}");
        }
    }
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).map_err(Error::Io)?;
    write_atomic(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    Ok(Prepared { cfg, out })
}

/// Runs a parsed command, printing a summary to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Design { common } => cmd_design(&prepare(&common)?, stdout),
        Command::Sweep { common, experiment } => {
            let exp: Experiment = experiment.parse()?;
            cmd_sweep(&prepare(&common)?, exp, stdout)
        }
        Command::Eval { common, tx, rx } => cmd_eval(&prepare(&common)?, &tx, &rx, stdout),
    }
}

fn out_err(e: std::io::Error) -> CliError {
    Error::Io(e).into()
}

fn cmd_design(p: &Prepared, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ctx = p.cfg.design_context()?;
    let (_, est) = p.cfg.channel_estimate()?;
    let sigma = (ctx.solver.sigma_tx_sq, ctx.solver.sigma_rx_sq);
    let result = ctx.design(&est, sigma)?;
    write_atomic(
        &p.out.join("tx_codebook.csv"),
        &render(|b| result.tx_codebook.write_csv(b))?,
    )?;
    write_atomic(
        &p.out.join("rx_codebook.csv"),
        &render(|b| result.rx_codebook.write_csv(b))?,
    )?;
    write_atomic(
        &p.out.join("objective_trace.csv"),
        &render(|b| result.write_trace_csv(b))?,
    )?;
    for (side, post, budget) in [
        ("transmit", result.projected_residual_tx, sigma.0),
        ("receive", result.projected_residual_rx, sigma.1),
    ] {
        if post > budget {
            warn!("{side} codebook exceeds its coverage variance after quantization: {post:.3e} > {budget:.3e}");
        }
    }
    writeln!(
        stdout,
        "final expected objective: {:.6e}",
        result.final_objective()
    )
    .map_err(out_err)?;
    writeln!(
        stdout,
        "coverage residual tx: {:.6e} (quantized {:.6e}), budget {:.6e}",
        result.coverage_residual_tx, result.projected_residual_tx, sigma.0
    )
    .map_err(out_err)?;
    writeln!(
        stdout,
        "coverage residual rx: {:.6e} (quantized {:.6e}), budget {:.6e}",
        result.coverage_residual_rx, result.projected_residual_rx, sigma.1
    )
    .map_err(out_err)?;
    if !result.converged {
        warn!("inner solver stopped at its iteration cap");
    }
    info!("wrote codebooks to {}", p.out.display());
    Ok(())
}

fn cmd_sweep(p: &Prepared, exp: Experiment, stdout: &mut dyn Write) -> Result<(), CliError> {
    let setup = p.cfg.sweep_setup(exp)?;
    let sim = p.cfg.sim_config()?;
    let result = sweep(&setup, &sim)?;
    let path = p.out.join(format!("{exp}.csv"));
    write_atomic(&path, &render(|b| result.write_csv(b))?)?;
    writeln!(
        stdout,
        "{exp}: {} records written to {}",
        result.records.len(),
        path.display()
    )
    .map_err(out_err)?;
    Ok(())
}

fn read_codebook(path: &Path) -> Result<Codebook, CliError> {
    let f = fs::File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Codebook::read_csv(BufReader::new(f))
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())).into())
}

fn cmd_eval(
    p: &Prepared,
    tx_path: &Path,
    rx_path: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let tx = read_codebook(tx_path)?;
    let rx = read_codebook(rx_path)?;
    let layout = p.cfg.layout()?;
    let (h, est) = p.cfg.channel_estimate()?;
    let reference = p.cfg.reference_spec()?;
    let cbf_tx = cbf_codebook(layout.tx_geom(), &p.cfg.tx_region()?, &reference)?;
    let cbf_rx = cbf_codebook(layout.rx_geom(), &p.cfg.rx_region()?, &reference)?;
    let sim = p.cfg.sim_config()?;
    let policy = if est.error_variance() > 0.0 {
        ChannelPolicy::PerTrialError {
            estimate: &h,
            error_variance: est.error_variance(),
        }
    } else {
        ChannelPolicy::Fixed(&h)
    };
    let (summary, _) = monte_carlo(&tx, &rx, policy, &layout, (&cbf_tx, &cbf_rx), &sim)?;
    let inr = avg_inr(&p.cfg.budget, &tx, &rx, &h)?;
    let var_tx = coverage_variance(&tx, &steering_matrix(layout.tx_geom(), tx.region())?)?;
    let var_rx = coverage_variance(&rx, &steering_matrix(layout.rx_geom(), rx.region())?)?;
    let lines = [
        format!("avg inr (dB): {:.4}", linear_to_db(inr)),
        format!(
            "mean gamma_sum: {:.6} (stderr {:.6}, {} trials)",
            summary.mean_gamma_sum, summary.stderr_gamma_sum, summary.trials
        ),
        format!("coverage variance tx: {var_tx:.6e}"),
        format!("coverage variance rx: {var_rx:.6e}"),
    ];
    for l in lines {
        writeln!(stdout, "{l}").map_err(out_err)?;
    }
    Ok(())
}

/// Entry point shared by the binary and tests. Returns the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = write!(stderr, "{e}");
            return code;
        }
    };
    match run(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_parses_and_round_trips() {
        let cfg = ExperimentConfig::parse(DEFAULT_CONFIG).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.tx_region().unwrap().len(), 45);
        assert_eq!(cfg.budget.inr_tx_db, f64::NEG_INFINITY);
    }

    #[test]
    fn missing_key_is_named() {
        let text = DEFAULT_CONFIG.replace("phase_bits = 8\n", "");
        let msg = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("phase_bits"), "{msg}");
    }

    #[test]
    fn bad_value_is_named() {
        let text = DEFAULT_CONFIG.replace("phase_bits = 8\n", "phase_bits = 40\n");
        let msg = ExperimentConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("quantization.phase_bits"), "{msg}");
    }

    #[test]
    fn infeasibility_maps_to_exit_two() {
        let e: CliError = Error::Infeasible {
            best: 1.0,
            budget: 0.5,
        }
        .into();
        assert_eq!(e.code, 2);
        let e: CliError = Error::Config("x".into()).into();
        assert_eq!(e.code, 1);
    }
}
