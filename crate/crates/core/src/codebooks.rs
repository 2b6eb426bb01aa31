//! Quantized beamforming weights, baseline codebooks and codebook metrics.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use num_complex::Complex64;

use crate::arrays::{array_response, steering_matrix, Direction, SteeringMatrix, UpaGeometry};
use crate::error::{Error, Result};
use crate::linalg::{inner, CMatrix};

/// Largest supported bit width for either control.
pub const MAX_BITS: u32 = 16;

/// Realizable weights of a digitally controlled phase shifter and
/// log-stepped attenuator.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationSpec {
    phase_bits: u32,
    amplitude_bits: u32,
    attenuation_step_db: f64,
    infinite_resolution: bool,
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
}

impl QuantizationSpec {
    pub fn new(phase_bits: u32, amplitude_bits: u32, attenuation_step_db: f64) -> Result<Self> {
        if phase_bits > MAX_BITS {
            return Err(Error::invalid(
                "phase_bits",
                format!("{phase_bits} exceeds the supported {MAX_BITS}"),
            ));
        }
        if amplitude_bits > MAX_BITS {
            return Err(Error::invalid(
                "amplitude_bits",
                format!("{amplitude_bits} exceeds the supported {MAX_BITS}"),
            ));
        }
        if !(attenuation_step_db.is_finite() && attenuation_step_db > 0.0) {
            return Err(Error::invalid(
                "attenuation_step_db",
                format!("{attenuation_step_db} must be positive"),
            ));
        }
        let amplitudes = (0..1usize << amplitude_bits)
            .map(|k| 10f64.powf(-(k as f64) * attenuation_step_db / 20.0))
            .collect();
        let n_phs = 1usize << phase_bits;
        let phases = (0..n_phs)
            .map(|k| 2.0 * PI * k as f64 / n_phs as f64)
            .collect();
        Ok(Self {
            phase_bits,
            amplitude_bits,
            attenuation_step_db,
            infinite_resolution: false,
            amplitudes,
            phases,
        })
    }

    /// Equal phase and amplitude resolution with 0.5 dB attenuator steps.
    pub fn uniform(bits: u32) -> Result<Self> {
        Self::new(bits, bits, 0.5)
    }

    /// Unquantized weights; projection only clamps magnitudes to 1.
    pub fn infinite() -> Self {
        Self {
            phase_bits: 0,
            amplitude_bits: 0,
            attenuation_step_db: 0.5,
            infinite_resolution: true,
            amplitudes: vec![1.0],
            phases: vec![0.0],
        }
    }

    pub fn phase_bits(&self) -> u32 {
        self.phase_bits
    }

    pub fn amplitude_bits(&self) -> u32 {
        self.amplitude_bits
    }

    pub fn attenuation_step_db(&self) -> f64 {
        self.attenuation_step_db
    }

    pub fn is_infinite_resolution(&self) -> bool {
        self.infinite_resolution
    }

    /// Amplitude set, descending from 1.
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// Phase set `2 pi k / 2^b`.
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Indices of the nearest realizable amplitude and phase.
    ///
    /// Panics on an infinite-resolution spec, which has no index grid.
    pub fn nearest_indices(&self, w: Complex64) -> (usize, usize) {
        assert!(
            !self.infinite_resolution,
            "no index grid at infinite resolution"
        );
        (self.nearest_amplitude(w.norm()), self.nearest_phase(w))
    }

    fn nearest_amplitude(&self, mag: f64) -> usize {
        let n = self.amplitudes.len();
        // The set is geometric, so the log-domain position brackets the answer.
        let pos = if mag > 0.0 {
            -20.0 * mag.log10() / self.attenuation_step_db
        } else {
            f64::INFINITY
        };
        let lo = if pos.is_nan() || pos <= 0.0 {
            0
        } else {
            (pos.floor().min((n - 1) as f64) as usize).saturating_sub(1)
        };
        let hi = (lo + 3).min(n);
        let mut best = lo;
        let mut best_d = f64::INFINITY;
        for k in lo..hi {
            let d = (self.amplitudes[k] - mag).abs();
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    fn nearest_phase(&self, w: Complex64) -> usize {
        let n = self.phases.len();
        let angle = w.arg();
        let unit = Complex64::from_polar(1.0, angle);
        let pos = angle.rem_euclid(2.0 * PI) / (2.0 * PI) * n as f64;
        let center = pos.round() as usize % n;
        let mut cands = [(center + n - 1) % n, center, (center + 1) % n];
        cands.sort_unstable();
        let mut best = cands[0];
        let mut best_d = f64::INFINITY;
        for &k in &cands {
            let d = (Complex64::from_polar(1.0, self.phases[k]) - unit).norm();
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    /// Weight for an (amplitude index, phase index) pair.
    pub fn weight(&self, amp_index: usize, phase_index: usize) -> Complex64 {
        Complex64::from_polar(self.amplitudes[amp_index], self.phases[phase_index])
    }
}

/// Returns the amplitude set `{10^(-k step / 20)}`.
pub fn realizable_amplitudes(spec: &QuantizationSpec) -> Vec<f64> {
    spec.amplitudes().to_vec()
}

/// Nearest realizable weight, amplitude and phase chosen independently.
pub fn project_weight(w: Complex64, spec: &QuantizationSpec) -> Complex64 {
    if spec.infinite_resolution {
        let mag = w.norm();
        // Small slack keeps the clamp idempotent under rounding.
        return if mag > 1.0 + 1e-14 { w / mag } else { w };
    }
    let (a, p) = spec.nearest_indices(w);
    spec.weight(a, p)
}

/// Element-wise projection.
pub fn project_codebook(m: ArrayView2<'_, Complex64>, spec: &QuantizationSpec) -> CMatrix {
    m.mapv(|w| project_weight(w, spec))
}

/// A set of beams, one column per coverage direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    matrix: CMatrix,
    region: Vec<Direction>,
    quantized_under: Option<QuantizationSpec>,
}

impl Codebook {
    /// Wraps an arbitrary beam matrix; entries must satisfy `|w| <= 1`.
    pub fn new(matrix: CMatrix, region: Vec<Direction>) -> Result<Self> {
        if matrix.ncols() != region.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} beams for {} directions",
                matrix.ncols(),
                region.len()
            )));
        }
        if let Some(z) = matrix.iter().find(|z| !(z.norm() <= 1.0 + 1e-12)) {
            return Err(Error::invalid(
                "matrix",
                format!("entry {z} exceeds unit magnitude"),
            ));
        }
        Ok(Self {
            matrix,
            region,
            quantized_under: None,
        })
    }

    /// Projects `matrix` onto the realizable set of `spec`.
    pub fn quantized(
        matrix: ArrayView2<'_, Complex64>,
        region: Vec<Direction>,
        spec: &QuantizationSpec,
    ) -> Result<Self> {
        let mut cb = Self::new(project_codebook(matrix, spec), region)?;
        cb.quantized_under = Some(spec.clone());
        Ok(cb)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn region(&self) -> &[Direction] {
        &self.region
    }

    pub fn quantized_under(&self) -> Option<&QuantizationSpec> {
        self.quantized_under.as_ref()
    }

    pub fn num_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_beams(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn beam(&self, i: usize) -> ArrayView1<'_, Complex64> {
        self.matrix.column(i)
    }

    /// Writes the index-based CSV format. Requires a finite-resolution
    /// quantization spec.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let spec = match &self.quantized_under {
            Some(s) if !s.infinite_resolution => s,
            _ => {
                return Err(Error::invalid(
                    "codebook",
                    "only codebooks quantized to a finite grid can be saved",
                ))
            }
        };
        writeln!(out, "n,m,phase_bits,amplitude_bits,attenuation_step_db")?;
        writeln!(
            out,
            "{},{},{},{},{:?}",
            self.num_antennas(),
            self.num_beams(),
            spec.phase_bits,
            spec.amplitude_bits,
            spec.attenuation_step_db
        )?;
        writeln!(out, "azimuth_rad,elevation_rad")?;
        for d in &self.region {
            writeln!(out, "{:?},{:?}", d.azimuth(), d.elevation())?;
        }
        writeln!(out, "amplitude_index,phase_index")?;
        for row in self.matrix.rows() {
            let fields: Vec<String> = row
                .iter()
                .map(|&w| {
                    let (a, p) = spec.nearest_indices(w);
                    format!("{a},{p}")
                })
                .collect();
            writeln!(out, "{}", fields.join(","))?;
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
        let expect = |line: String, header: &str| -> Result<()> {
            if line.trim() == header {
                Ok(())
            } else {
                Err(Error::Parse(format!(
                    "expected header `{header}`, found `{line}`"
                )))
            }
        };
        expect(
            next("header")?,
            "n,m,phase_bits,amplitude_bits,attenuation_step_db",
        )?;
        let meta = next("dimensions")?;
        let meta: Vec<&str> = meta.trim().split(',').collect();
        if meta.len() != 5 {
            return Err(Error::Parse("expected five header values".into()));
        }
        let n: usize = parse_field(meta[0], "n")?;
        let m: usize = parse_field(meta[1], "m")?;
        let b_phs: u32 = parse_field(meta[2], "phase_bits")?;
        let b_amp: u32 = parse_field(meta[3], "amplitude_bits")?;
        let step: f64 = parse_field(meta[4], "attenuation_step_db")?;
        let spec = QuantizationSpec::new(b_phs, b_amp, step)?;

        expect(next("region header")?, "azimuth_rad,elevation_rad")?;
        let mut region = Vec::with_capacity(m);
        for _ in 0..m {
            let line = next("region row")?;
            let (az, el) = line
                .trim()
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad direction `{line}`")))?;
            region.push(Direction::new(
                parse_field(az, "azimuth")?,
                parse_field(el, "elevation")?,
            )?);
        }

        expect(next("index header")?, "amplitude_index,phase_index")?;
        let mut matrix = CMatrix::zeros((n, m));
        for r in 0..n {
            let line = next("index row")?;
            let idx: Vec<usize> = line
                .trim()
                .split(',')
                .map(|s| parse_field(s, "index"))
                .collect::<Result<_>>()?;
            if idx.len() != 2 * m {
                return Err(Error::Parse(format!(
                    "row {r}: expected {} indices, found {}",
                    2 * m,
                    idx.len()
                )));
            }
            for c in 0..m {
                let (a, p) = (idx[2 * c], idx[2 * c + 1]);
                if a >= spec.amplitudes.len() || p >= spec.phases.len() {
                    return Err(Error::Parse(format!("row {r}: index out of range")));
                }
                matrix[[r, c]] = spec.weight(a, p);
            }
        }
        Ok(Self {
            matrix,
            region,
            quantized_under: Some(spec),
        })
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e| Error::Parse(format!("{what} `{s}`: {e}")))
}

/// Conjugate beamforming: quantized array responses.
pub fn cbf_codebook(
    geom: &UpaGeometry,
    region: &[Direction],
    spec: &QuantizationSpec,
) -> Result<Codebook> {
    let a = steering_matrix(geom, region)?;
    Codebook::quantized(a.entries().view(), region.to_vec(), spec)
}

/// Array responses tapered element-wise by `window` (row-major, length N)
/// before projection.
pub fn windowed_codebook(
    geom: &UpaGeometry,
    region: &[Direction],
    spec: &QuantizationSpec,
    window: ArrayView1<'_, f64>,
) -> Result<Codebook> {
    if window.len() != geom.num_elements() {
        return Err(Error::DimensionMismatch(format!(
            "window of length {} for {} elements",
            window.len(),
            geom.num_elements()
        )));
    }
    let mut a = steering_matrix(geom, region)?.entries().clone();
    for mut col in a.axis_iter_mut(Axis(1)) {
        col.zip_mut_with(&window, |z, &w| *z *= w);
    }
    Codebook::quantized(a.view(), region.to_vec(), spec)
}

/// One-dimensional Taylor window with `nbar` nearly constant side lobes at
/// `sll_db` below the main lobe, scaled to a peak of 1.
pub fn taylor_window(len: usize, nbar: usize, sll_db: f64) -> Result<Array1<f64>> {
    if len == 0 {
        return Err(Error::invalid("len", "window length must be positive"));
    }
    if nbar < 1 {
        return Err(Error::invalid("nbar", "must be at least 1"));
    }
    if !(sll_db.is_finite() && sll_db > 0.0) {
        return Err(Error::invalid(
            "sll_db",
            format!("{sll_db} must be positive"),
        ));
    }
    let a = (10f64.powf(sll_db / 20.0)).acosh() / PI;
    let nb = nbar as f64;
    let sigma_sq = nb * nb / (a * a + (nb - 0.5) * (nb - 0.5));
    let coeffs: Vec<f64> = (1..nbar)
        .map(|m| {
            let mf = m as f64;
            let mut num = 1.0;
            let mut den = 1.0;
            for n in 1..nbar {
                let nf = n as f64;
                num *= 1.0 - mf * mf / sigma_sq / (a * a + (nf - 0.5) * (nf - 0.5));
                if n != m {
                    den *= 1.0 - mf * mf / (nf * nf);
                }
            }
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            sign * num / (2.0 * den)
        })
        .collect();
    let mut w: Array1<f64> = (0..len)
        .map(|k| {
            let x = (k as f64 - (len as f64 - 1.0) / 2.0) / len as f64;
            1.0 + 2.0
                * coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, f)| f * (2.0 * PI * (i + 1) as f64 * x).cos())
                    .sum::<f64>()
        })
        .collect();
    let peak = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    w.mapv_inplace(|v| v / peak);
    Ok(w)
}

/// Default Taylor parameter: four nearly constant side lobes.
pub const DEFAULT_TAYLOR_NBAR: usize = 4;

/// Separable 2-D Taylor taper, flattened row-major.
pub fn taylor_window_2d(geom: &UpaGeometry, nbar: usize, sll_db: f64) -> Result<Array1<f64>> {
    let wr = taylor_window(geom.rows(), nbar, sll_db)?;
    let wc = taylor_window(geom.cols(), nbar, sll_db)?;
    Ok(wr
        .iter()
        .flat_map(|r| wc.iter().map(move |c| r * c))
        .collect())
}

/// Conjugate beams tapered by a separable Taylor window.
pub fn taylor_codebook(
    geom: &UpaGeometry,
    region: &[Direction],
    spec: &QuantizationSpec,
    sll_db: f64,
) -> Result<Codebook> {
    let w = taylor_window_2d(geom, DEFAULT_TAYLOR_NBAR, sll_db)?;
    windowed_codebook(geom, region, spec, w.view())
}

/// Linear power gain `|a(dir)^H f|^2`.
pub fn beam_gain(
    beam: ArrayView1<'_, Complex64>,
    geom: &UpaGeometry,
    dir: Direction,
) -> Result<f64> {
    if beam.len() != geom.num_elements() {
        return Err(Error::DimensionMismatch(format!(
            "beam of length {} for {} elements",
            beam.len(),
            geom.num_elements()
        )));
    }
    let a = array_response(geom, dir);
    Ok(inner(a.view(), beam).norm_sqr())
}

/// Mean normalized squared shortfall `|N - |a_i^H f_i||^2 / N^2` over the
/// region.
pub fn coverage_variance(cb: &Codebook, steering: &SteeringMatrix) -> Result<f64> {
    if cb.region() != steering.region() {
        return Err(Error::RegionMismatch(
            "codebook and steering matrix cover different directions".into(),
        ));
    }
    if cb.num_antennas() != steering.num_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "{} antennas in codebook, {} in steering matrix",
            cb.num_antennas(),
            steering.num_antennas()
        )));
    }
    let n = cb.num_antennas() as f64;
    let m = cb.num_beams() as f64;
    let a = steering.entries();
    let total: f64 = (0..cb.num_beams())
        .map(|i| {
            let g = inner(a.column(i), cb.beam(i)).norm();
            (n - g) * (n - g)
        })
        .sum();
    Ok(total / (m * n * n))
}
