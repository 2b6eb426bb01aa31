//! Normalized link metrics.
//!
//! Powers, path losses and noise levels are folded into four budget scales:
//! the downlink and uplink SNR with perfect beamforming, the receive INR with
//! worst-case beam coupling, and the cross-link INR at the downlink user.

use ndarray::ArrayView1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelMatrix;
use crate::codebooks::Codebook;
use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sqr};

/// Link budget in dB. `-inf` marks an absent term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub snrbar_tx_db: f64,
    pub snrbar_rx_db: f64,
    pub inrbar_rx_db: f64,
    pub inr_tx_db: f64,
}

impl LinkBudget {
    pub fn new(
        snrbar_tx_db: f64,
        snrbar_rx_db: f64,
        inrbar_rx_db: f64,
        inr_tx_db: f64,
    ) -> Result<Self> {
        let b = Self {
            snrbar_tx_db,
            snrbar_rx_db,
            inrbar_rx_db,
            inr_tx_db,
        };
        b.validate()?;
        Ok(b)
    }

    /// Equal downlink and uplink SNR, no cross-link interference.
    pub fn symmetric(snrbar_db: f64, inrbar_rx_db: f64) -> Result<Self> {
        Self::new(snrbar_db, snrbar_db, inrbar_rx_db, f64::NEG_INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("snrbar_tx_db", self.snrbar_tx_db),
            ("snrbar_rx_db", self.snrbar_rx_db),
            ("inrbar_rx_db", self.inrbar_rx_db),
            ("inr_tx_db", self.inr_tx_db),
        ] {
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::invalid(name, format!("{v} is not finite or -inf")));
            }
        }
        Ok(())
    }

    pub fn snrbar_tx(&self) -> f64 {
        db_to_linear(self.snrbar_tx_db)
    }

    pub fn snrbar_rx(&self) -> f64 {
        db_to_linear(self.snrbar_rx_db)
    }

    pub fn inrbar_rx(&self) -> f64 {
        db_to_linear(self.inrbar_rx_db)
    }

    pub fn inr_tx(&self) -> f64 {
        db_to_linear(self.inr_tx_db)
    }

    /// Same budget without any interference.
    pub fn interference_free(&self) -> Self {
        Self {
            inrbar_rx_db: f64::NEG_INFINITY,
            inr_tx_db: f64::NEG_INFINITY,
            ..*self
        }
    }
}

/// `10^(db/10)`, with `-inf` mapping to exactly 0.
pub fn db_to_linear(db: f64) -> f64 {
    if db == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(db / 10.0)
    }
}

/// `10 log10(x)`, with 0 mapping to `-inf`.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Per-trial link outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub snr_tx: f64,
    pub snr_rx: f64,
    pub inr_rx: f64,
    pub sinr_tx: f64,
    pub sinr_rx: f64,
    pub rate_tx: f64,
    pub rate_rx: f64,
    pub gamma_sum: f64,
    pub tx_beam_index: usize,
    pub rx_beam_index: usize,
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what}: length {got}, expected {want}"
        )))
    }
}

/// Downlink SNR `SNRbar_tx |h^H f|^2 / N_t^2`.
pub fn snr_tx(
    budget: &LinkBudget,
    f: ArrayView1<'_, Complex64>,
    h_tx: ArrayView1<'_, Complex64>,
) -> Result<f64> {
    check_len("transmit beam", f.len(), h_tx.len())?;
    let nt = f.len() as f64;
    Ok(budget.snrbar_tx() * inner(h_tx, f).norm_sqr() / (nt * nt))
}

/// Uplink SNR `SNRbar_rx |w^H h|^2 / (N_r ||w||^2)`.
pub fn snr_rx(
    budget: &LinkBudget,
    w: ArrayView1<'_, Complex64>,
    h_rx: ArrayView1<'_, Complex64>,
) -> Result<f64> {
    check_len("receive beam", w.len(), h_rx.len())?;
    let w_sq = norm_sqr(w);
    if w_sq == 0.0 {
        return Err(Error::ZeroDenominator("receive beam norm"));
    }
    let nr = w.len() as f64;
    Ok(budget.snrbar_rx() * inner(w, h_rx).norm_sqr() / (nr * w_sq))
}

/// Self-interference INR `INRbar_rx |w^H H f|^2 / (N_t^2 N_r ||w||^2)`.
pub fn inr_rx(
    budget: &LinkBudget,
    f: ArrayView1<'_, Complex64>,
    w: ArrayView1<'_, Complex64>,
    h: &ChannelMatrix,
) -> Result<f64> {
    check_len("transmit beam", f.len(), h.num_tx())?;
    check_len("receive beam", w.len(), h.num_rx())?;
    let w_sq = norm_sqr(w);
    if w_sq == 0.0 {
        return Err(Error::ZeroDenominator("receive beam norm"));
    }
    let nt = h.num_tx() as f64;
    let nr = h.num_rx() as f64;
    let hf = h.entries().dot(&f);
    Ok(budget.inrbar_rx() * inner(w, hf.view()).norm_sqr() / (nt * nt * nr * w_sq))
}

/// SINRs and rates treating interference as noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrRates {
    pub sinr_tx: f64,
    pub sinr_rx: f64,
    pub rate_tx: f64,
    pub rate_rx: f64,
}

pub fn sinr_and_rates(snr_tx: f64, snr_rx: f64, inr_rx: f64, inr_tx: f64) -> SinrRates {
    let sinr_tx = snr_tx / (1.0 + inr_tx);
    let sinr_rx = snr_rx / (1.0 + inr_rx);
    SinrRates {
        sinr_tx,
        sinr_rx,
        rate_tx: (1.0 + sinr_tx).log2(),
        rate_rx: (1.0 + sinr_rx).log2(),
    }
}

/// Sum rate normalized by the interference-free capacities of the
/// conjugate-beamforming codebook for the same users.
pub fn gamma_sum(rate_tx: f64, rate_rx: f64, snr_cbf_tx: f64, snr_cbf_rx: f64) -> Result<f64> {
    let denom = (1.0 + snr_cbf_tx).log2() + (1.0 + snr_cbf_rx).log2();
    if !(denom > 0.0) {
        return Err(Error::ZeroDenominator("codebook capacity"));
    }
    Ok((rate_tx + rate_rx) / denom)
}

/// Average of `inr_rx` over all transmit/receive beam pairs, using each
/// receive beam's own norm.
pub fn avg_inr(
    budget: &LinkBudget,
    tx: &Codebook,
    rx: &Codebook,
    h: &ChannelMatrix,
) -> Result<f64> {
    check_len("transmit codebook", tx.num_antennas(), h.num_tx())?;
    check_len("receive codebook", rx.num_antennas(), h.num_rx())?;
    let nt = h.num_tx() as f64;
    let nr = h.num_rx() as f64;
    // Coupling matrix W^H H F, one entry per beam pair.
    let hf = h.entries().dot(tx.matrix());
    let mut total = 0.0;
    for j in 0..rx.num_beams() {
        let w = rx.beam(j);
        let w_sq = norm_sqr(w);
        if w_sq == 0.0 {
            return Err(Error::ZeroBeam(j));
        }
        let coupling: f64 = (0..tx.num_beams())
            .map(|i| inner(w, hf.column(i)).norm_sqr())
            .sum();
        total += coupling / w_sq;
    }
    let pairs = (tx.num_beams() * rx.num_beams()) as f64;
    Ok(budget.inrbar_rx() * total / (nt * nt * nr * pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn ones(n: usize) -> Array1<Complex64> {
        Array1::from_elem(n, Complex64::new(1.0, 0.0))
    }

    #[test]
    fn db_conversions() {
        assert_eq!(db_to_linear(f64::NEG_INFINITY), 0.0);
        assert!((db_to_linear(30.0) - 1000.0).abs() < 1e-9);
        assert_eq!(linear_to_db(0.0), f64::NEG_INFINITY);
        assert!(LinkBudget::new(0.0, 0.0, f64::NAN, 0.0).is_err());
        assert!(LinkBudget::new(0.0, 0.0, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn snr_tx_cases() {
        let b = LinkBudget::symmetric(10.0, 0.0).unwrap();
        let h = ones(4);
        assert!((snr_tx(&b, h.view(), h.view()).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(snr_tx(&b, Array1::zeros(4).view(), h.view()).unwrap(), 0.0);
        // |h^H f|^2 = 8 = N^2 / 2
        let f = ones(4).mapv(|z| z / 2f64.sqrt());
        assert!((snr_tx(&b, f.view(), h.view()).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn snr_rx_cases() {
        let b = LinkBudget::symmetric(3.0, 0.0).unwrap();
        let h = ones(4);
        let snr = snr_rx(&b, h.view(), h.view()).unwrap();
        assert!((snr - b.snrbar_rx()).abs() < 1e-12);
        let orth = ndarray::array![
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0)
        ];
        assert!(snr_rx(&b, orth.view(), h.view()).unwrap() < 1e-15);
        // Two of four entries active: |w^H h|^2 = 4, ||w||^2 = 2 -> half.
        let half = ndarray::array![
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0)
        ];
        let s = snr_rx(&b, half.view(), h.view()).unwrap();
        assert!((s - b.snrbar_rx() / 2.0).abs() < 1e-12);
        assert!(snr_rx(&b, Array1::zeros(4).view(), h.view()).is_err());
    }

    #[test]
    fn rank_one_channel_attains_inrbar() {
        let b = LinkBudget::symmetric(0.0, 50.0).unwrap();
        let (nt, nr) = (3, 2);
        let u = ndarray::array![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let v = ndarray::array![
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0)
        ];
        let scale = ((nt * nr) as f64).sqrt() / (norm_sqr(u.view()) * norm_sqr(v.view())).sqrt();
        let mut h = crate::linalg::CMatrix::zeros((nr, nt));
        for m in 0..nr {
            for n in 0..nt {
                h[[m, n]] = u[m] * v[n].conj() * scale;
            }
        }
        let h = ChannelMatrix::new(h);
        assert!(h.is_normalized(1e-12));
        let inr = inr_rx(&b, v.view(), u.view(), &h).unwrap();
        assert!((inr - b.inrbar_rx()).abs() < 1e-9 * b.inrbar_rx());
    }

    #[test]
    fn sinr_arithmetic() {
        let r = sinr_and_rates(10.0, 10.0, 9.0, 0.0);
        assert_eq!(r.sinr_rx, 1.0);
        assert_eq!(r.rate_rx, 1.0);
        assert_eq!(r.sinr_tx, 10.0);
        assert!(sinr_and_rates(10.0, 10.0, 1e300, 0.0).rate_rx < 1e-290);
    }

    #[test]
    fn gamma_half_duplex_and_full() {
        let snr: f64 = 100.0;
        let c = (1.0 + snr).log2();
        assert!((gamma_sum(c / 2.0, c / 2.0, snr, snr).unwrap() - 0.5).abs() < 1e-15);
        assert!((gamma_sum(c, c, snr, snr).unwrap() - 1.0).abs() < 1e-15);
        assert!(gamma_sum(1.0, 1.0, 0.0, 0.0).is_err());
    }
}
