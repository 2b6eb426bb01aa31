//! Self-interference and user channel models.
//!
//! Self-interference channels are `N_r x N_t` matrices. Models that normalize
//! their output scale it so that `||H||_F^2 = N_t * N_r`; the large-scale
//! isolation between the arrays lives in the link budget instead.

use std::io::{BufRead, Write};

use ndarray::{Array1, ArrayView2, Zip};
use num_complex::Complex64;
use rand::Rng;

use crate::arrays::{array_response, Direction, UpaGeometry};
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian_matrix, fro_norm_sqr, CMatrix};

/// Self-interference channel, receive antennas by transmit antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: CMatrix,
}

impl ChannelMatrix {
    pub fn new(entries: CMatrix) -> Self {
        Self { entries }
    }

    pub fn zeros(num_rx: usize, num_tx: usize) -> Self {
        Self::new(CMatrix::zeros((num_rx, num_tx)))
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn view(&self) -> ArrayView2<'_, Complex64> {
        self.entries.view()
    }

    pub fn into_inner(self) -> CMatrix {
        self.entries
    }

    pub fn num_rx(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_tx(&self) -> usize {
        self.entries.ncols()
    }

    pub fn fro_norm_sqr(&self) -> f64 {
        fro_norm_sqr(self.entries.view())
    }

    /// True when `||H||_F^2 = N_t N_r` to within `rel_tol`.
    pub fn is_normalized(&self, rel_tol: f64) -> bool {
        let target = (self.num_rx() * self.num_tx()) as f64;
        (self.fro_norm_sqr() - target).abs() <= rel_tol * target
    }

    /// Rescales to `||H||_F^2 = N_t N_r`.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.fro_norm_sqr().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroDenominator("channel Frobenius norm"));
        }
        let scale = ((self.num_rx() * self.num_tx()) as f64).sqrt() / norm;
        Ok(Self::new(self.entries.mapv(|z| z * scale)))
    }

    /// Writes the interchange format: a `rows,cols` header followed by one
    /// line per row of interleaved `re,im` values. Floats use shortest
    /// round-trip formatting so reading back is bit-exact.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "rows,cols")?;
        writeln!(out, "{},{}", self.num_rx(), self.num_tx())?;
        for row in self.entries.rows() {
            let line: Vec<String> = row
                .iter()
                .flat_map(|z| [format!("{:?}", z.re), format!("{:?}", z.im)])
                .collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {what}")))?
                .map_err(Error::from)
        };
        if next("header")?.trim() != "rows,cols" {
            return Err(Error::Parse("expected `rows,cols` header".into()));
        }
        let dims = next("dimensions")?;
        let dims: Vec<usize> = dims
            .trim()
            .split(',')
            .map(|s| {
                s.parse()
                    .map_err(|e| Error::Parse(format!("dimension `{s}`: {e}")))
            })
            .collect::<Result<_>>()?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Parse("expected two dimensions".into()));
        };
        let mut entries = CMatrix::zeros((rows, cols));
        for r in 0..rows {
            let line = next("matrix row")?;
            let vals: Vec<f64> = line
                .trim()
                .split(',')
                .map(|s| {
                    s.parse()
                        .map_err(|e| Error::Parse(format!("value `{s}`: {e}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != 2 * cols {
                return Err(Error::Parse(format!(
                    "row {r}: expected {} values, found {}",
                    2 * cols,
                    vals.len()
                )));
            }
            for c in 0..cols {
                entries[[r, c]] = Complex64::new(vals[2 * c], vals[2 * c + 1]);
            }
        }
        Ok(Self::new(entries))
    }
}

/// Channel estimate together with the variance of its entry-wise error.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    estimate: ChannelMatrix,
    error_variance: f64,
}

impl ChannelEstimate {
    pub fn new(estimate: ChannelMatrix, error_variance: f64) -> Result<Self> {
        if !(error_variance >= 0.0 && error_variance.is_finite()) {
            return Err(Error::invalid(
                "error_variance",
                format!("{error_variance} must be finite and nonnegative"),
            ));
        }
        Ok(Self {
            estimate,
            error_variance,
        })
    }

    /// An error-free estimate.
    pub fn perfect(channel: ChannelMatrix) -> Self {
        Self {
            estimate: channel,
            error_variance: 0.0,
        }
    }

    pub fn estimate(&self) -> &ChannelMatrix {
        &self.estimate
    }

    pub fn error_variance(&self) -> f64 {
        self.error_variance
    }
}

/// Transmit and receive arrays placed in a common frame.
///
/// The default placement stacks the receive array directly above the transmit
/// array: both lie in the same plane facing the same way, with their centers
/// separated vertically by `vertical_separation` and optionally shifted
/// laterally.
#[derive(Debug, Clone)]
pub struct ArrayPairLayout {
    tx_geom: UpaGeometry,
    rx_geom: UpaGeometry,
    vertical_separation: f64,
    lateral_offset: [f64; 2],
}

impl ArrayPairLayout {
    pub fn stacked(tx: UpaGeometry, rx: UpaGeometry, vertical_separation: f64) -> Result<Self> {
        Self::with_lateral_offset(tx, rx, vertical_separation, [0.0, 0.0])
    }

    pub fn with_lateral_offset(
        tx: UpaGeometry,
        rx: UpaGeometry,
        vertical_separation: f64,
        lateral_offset: [f64; 2],
    ) -> Result<Self> {
        if !(vertical_separation.is_finite() && vertical_separation > 0.0) {
            return Err(Error::invalid(
                "vertical_separation",
                format!("{vertical_separation} must be positive"),
            ));
        }
        if lateral_offset.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("lateral_offset", "non-finite offset"));
        }
        let tx_geom = tx.centered_at([0.0, 0.0, 0.0]);
        let rx_geom = rx.centered_at([lateral_offset[0], lateral_offset[1], vertical_separation]);
        Ok(Self {
            tx_geom,
            rx_geom,
            vertical_separation,
            lateral_offset,
        })
    }

    /// Two 8x8 half-wavelength arrays with 10 wavelengths between centers.
    pub fn reference() -> Self {
        Self::stacked(
            UpaGeometry::half_wavelength(8, 8),
            UpaGeometry::half_wavelength(8, 8),
            10.0,
        )
        .expect("reference layout is valid")
    }

    pub fn tx_geom(&self) -> &UpaGeometry {
        &self.tx_geom
    }

    pub fn rx_geom(&self) -> &UpaGeometry {
        &self.rx_geom
    }

    pub fn vertical_separation(&self) -> f64 {
        self.vertical_separation
    }

    pub fn lateral_offset(&self) -> [f64; 2] {
        self.lateral_offset
    }

    /// Distances `r[m][n]` from transmit element `n` to receive element `m`.
    pub fn distances(&self) -> Vec<Vec<f64>> {
        let tx = self.tx_geom.element_positions();
        let rx = self.rx_geom.element_positions();
        rx.iter()
            .map(|pr| {
                tx.iter()
                    .map(|pt| {
                        let d = [pr[0] - pt[0], pr[1] - pt[1], pr[2] - pt[2]];
                        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Near-field channel with entries `(rho / r) exp(-j 2 pi r)`, `r` in
/// wavelengths and `rho` chosen so that `||H||_F^2 = N_t N_r`.
pub fn spherical_wave_channel(layout: &ArrayPairLayout) -> Result<ChannelMatrix> {
    let r = layout.distances();
    let num_rx = r.len();
    let num_tx = r.first().map_or(0, Vec::len);
    let mut inv_sq_sum = 0.0;
    for (m, row) in r.iter().enumerate() {
        for (n, &d) in row.iter().enumerate() {
            if !(d > 0.0) {
                return Err(Error::DegenerateLayout(format!(
                    "transmit element {n} and receive element {m} coincide"
                )));
            }
            inv_sq_sum += 1.0 / (d * d);
        }
    }
    let rho = ((num_rx * num_tx) as f64 / inv_sq_sum).sqrt();
    let mut h = CMatrix::zeros((num_rx, num_tx));
    for (m, row) in r.iter().enumerate() {
        for (n, &d) in row.iter().enumerate() {
            h[[m, n]] = Complex64::from_polar(rho / d, -2.0 * std::f64::consts::PI * d);
        }
    }
    Ok(ChannelMatrix::new(h))
}

/// Spherical-wave channel mixed with a Rayleigh component of variance
/// `mixing_variance`, renormalized to `||H||_F^2 = N_t N_r`.
pub fn mixture_channel<R: Rng + ?Sized>(
    layout: &ArrayPairLayout,
    mixing_variance: f64,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    let sw = spherical_wave_channel(layout)?;
    let draw = complex_gaussian_matrix(rng, sw.num_rx(), sw.num_tx(), 1.0);
    mix_with_draw(&sw, &draw, mixing_variance)
}

/// Mixture built from a unit-variance Gaussian draw, scaled by
/// `sqrt(mixing_variance)`. Reusing one draw across mixing variances gives
/// common random numbers for sweeps.
pub fn mix_with_draw(
    spherical: &ChannelMatrix,
    unit_draw: &CMatrix,
    mixing_variance: f64,
) -> Result<ChannelMatrix> {
    if !(mixing_variance >= 0.0 && mixing_variance.is_finite()) {
        return Err(Error::invalid(
            "mixing_variance",
            format!("{mixing_variance} must be finite and nonnegative"),
        ));
    }
    if unit_draw.dim() != spherical.entries().dim() {
        return Err(Error::DimensionMismatch(format!(
            "draw {:?} vs channel {:?}",
            unit_draw.dim(),
            spherical.entries().dim()
        )));
    }
    let scale = mixing_variance.sqrt();
    let mut sum = spherical.entries().clone();
    Zip::from(&mut sum)
        .and(unit_draw)
        .for_each(|s, &g| *s += g * scale);
    ChannelMatrix::new(sum).normalized()
}

/// Adds i.i.d. circular Gaussian error of variance `error_variance` per entry.
/// The result is not renormalized.
pub fn perturb_estimate<R: Rng + ?Sized>(
    channel: &ChannelMatrix,
    error_variance: f64,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    if !(error_variance >= 0.0 && error_variance.is_finite()) {
        return Err(Error::invalid(
            "error_variance",
            format!("{error_variance} must be finite and nonnegative"),
        ));
    }
    if error_variance == 0.0 {
        return Ok(channel.clone());
    }
    let delta = complex_gaussian_matrix(rng, channel.num_rx(), channel.num_tx(), error_variance);
    Ok(ChannelMatrix::new(channel.entries() + &delta))
}

/// Line-of-sight single-antenna user channel; equals the array response.
pub fn los_user_channel(geom: &UpaGeometry, dir: Direction) -> Array1<Complex64> {
    array_response(geom, dir)
}
