//! Uniform planar array geometry and steering vectors.
//!
//! Conventions used throughout the crate:
//!
//! * Positions are in wavelengths. The array lies in the x-z plane and its
//!   boresight points along +y.
//! * Column index runs along +x, row index along +z, and elements are
//!   flattened row-major (`row * cols + col`).
//! * A direction `(az, el)` maps to the unit vector
//!   `(cos el sin az, cos el cos az, sin el)`, so azimuth is measured from
//!   boresight in the horizontal plane and elevation from the horizon.
//! * The element at the geometry's origin offset has phase zero.

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Which side of the transceiver a coverage region serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkSide {
    Transmit,
    Receive,
}

/// Azimuth/elevation pair in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !azimuth.is_finite() || azimuth.abs() > PI + 1e-12 {
            return Err(Error::invalid(
                "azimuth",
                format!("{azimuth} outside [-pi, pi]"),
            ));
        }
        if !elevation.is_finite() || elevation.abs() > FRAC_PI_2 + 1e-12 {
            return Err(Error::invalid(
                "elevation",
                format!("{elevation} outside [-pi/2, pi/2]"),
            ));
        }
        Ok(Self { azimuth, elevation })
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        Self::new(azimuth_deg.to_radians(), elevation_deg.to_radians())
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    /// Unit propagation vector.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [ce * sa, ce * ca, se]
    }
}

/// Uniform planar array with `rows x cols` elements.
#[derive(Debug, Clone, PartialEq)]
pub struct UpaGeometry {
    rows: usize,
    cols: usize,
    element_spacing: f64,
    origin_offset: [f64; 3],
}

impl UpaGeometry {
    pub fn new(rows: usize, cols: usize, element_spacing: f64) -> Result<Self> {
        Self::with_offset(rows, cols, element_spacing, [0.0; 3])
    }

    pub fn with_offset(
        rows: usize,
        cols: usize,
        element_spacing: f64,
        origin_offset: [f64; 3],
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(
                "rows/cols",
                "array must have at least one element",
            ));
        }
        if !(element_spacing.is_finite() && element_spacing > 0.0) {
            return Err(Error::invalid(
                "element_spacing",
                format!("{element_spacing} is not a positive finite spacing"),
            ));
        }
        if origin_offset.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("origin_offset", "non-finite offset"));
        }
        Ok(Self {
            rows,
            cols,
            element_spacing,
            origin_offset,
        })
    }

    /// Half-wavelength spaced array with its first element at the origin.
    pub fn half_wavelength(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, 0.5).expect("half-wavelength UPA is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn element_spacing(&self) -> f64 {
        self.element_spacing
    }

    pub fn origin_offset(&self) -> [f64; 3] {
        self.origin_offset
    }

    pub fn num_elements(&self) -> usize {
        self.rows * self.cols
    }

    /// Returns a copy moved so that its geometric center sits at `center`.
    pub fn centered_at(&self, center: [f64; 3]) -> Self {
        let half_w = (self.cols - 1) as f64 * self.element_spacing / 2.0;
        let half_h = (self.rows - 1) as f64 * self.element_spacing / 2.0;
        Self {
            origin_offset: [center[0] - half_w, center[1], center[2] - half_h],
            ..self.clone()
        }
    }

    pub fn center(&self) -> [f64; 3] {
        let o = self.origin_offset;
        [
            o[0] + (self.cols - 1) as f64 * self.element_spacing / 2.0,
            o[1],
            o[2] + (self.rows - 1) as f64 * self.element_spacing / 2.0,
        ]
    }

    /// Element position relative to the origin offset.
    pub fn local_position(&self, index: usize) -> [f64; 3] {
        let row = index / self.cols;
        let col = index % self.cols;
        [
            col as f64 * self.element_spacing,
            0.0,
            row as f64 * self.element_spacing,
        ]
    }

    /// Absolute element positions, row-major.
    pub fn element_positions(&self) -> Vec<[f64; 3]> {
        (0..self.num_elements())
            .map(|n| {
                let p = self.local_position(n);
                [
                    p[0] + self.origin_offset[0],
                    p[1] + self.origin_offset[1],
                    p[2] + self.origin_offset[2],
                ]
            })
            .collect()
    }
}

/// Array response vectors for a coverage region, one column per direction.
#[derive(Debug, Clone)]
pub struct SteeringMatrix {
    entries: CMatrix,
    region: Vec<Direction>,
}

impl SteeringMatrix {
    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn region(&self) -> &[Direction] {
        &self.region
    }

    pub fn num_antennas(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_beams(&self) -> usize {
        self.entries.ncols()
    }
}

/// Array response `a(dir)` with entries `exp(j 2 pi <p_n, u(dir)>)`.
pub fn array_response(geom: &UpaGeometry, dir: Direction) -> Array1<Complex64> {
    let u = dir.unit_vector();
    (0..geom.num_elements())
        .map(|n| {
            let p = geom.local_position(n);
            let path = p[0] * u[0] + p[1] * u[1] + p[2] * u[2];
            Complex64::from_polar(1.0, 2.0 * PI * path)
        })
        .collect()
}

pub fn steering_matrix(geom: &UpaGeometry, region: &[Direction]) -> Result<SteeringMatrix> {
    if region.is_empty() {
        return Err(Error::invalid("region", "coverage region is empty"));
    }
    let mut entries = Array2::zeros((geom.num_elements(), region.len()));
    for (i, dir) in region.iter().enumerate() {
        entries.column_mut(i).assign(&array_response(geom, *dir));
    }
    Ok(SteeringMatrix {
        entries,
        region: region.to_vec(),
    })
}

/// Regular azimuth/elevation grid in degrees, elevation outer, azimuth inner.
pub fn grid_region(az_deg: (f64, f64, f64), el_deg: (f64, f64, f64)) -> Result<Vec<Direction>> {
    let axis = |(start, stop, step): (f64, f64, f64)| -> Result<Vec<f64>> {
        if !(step > 0.0) || stop < start {
            return Err(Error::invalid(
                "grid",
                format!("bad range {start}:{step}:{stop}"),
            ));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|k| start + k as f64 * step).collect())
    };
    let azs = axis(az_deg)?;
    let els = axis(el_deg)?;
    let mut out = Vec::with_capacity(azs.len() * els.len());
    for el in &els {
        for az in &azs {
            out.push(Direction::from_degrees(*az, *el)?);
        }
    }
    Ok(out)
}

/// The 45-direction grid: azimuth -60..60 deg and elevation -30..30 deg in
/// 15 degree steps. Transmit and receive regions are identical.
pub fn default_coverage_grid(_side: LinkSide) -> Vec<Direction> {
    grid_region((-60.0, 60.0, 15.0), (-30.0, 30.0, 15.0)).expect("static grid is valid")
}
