//! Multipath channel generation and channel-file IO.
//!
//! Channels follow a tapped-delay-line model: every transmit/receive antenna
//! pair draws independent circularly-symmetric Gaussian taps with a shared
//! power-delay profile, and the per-tone frequency response is the discrete
//! Fourier sum of those taps at the tone frequency. Tap powers are
//! normalized to sum to one so each channel entry has unit average power.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numerics::{C64, CMatrix, CVector};
use crate::{Error, Result};

/// Power-delay profile: relative tap powers and uniform tap spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct TapProfile {
    powers: Vec<f64>,
    spacing_s: f64,
}

impl TapProfile {
    /// Validates and normalizes tap powers so they sum to one.
    pub fn new(powers: Vec<f64>, spacing_s: f64) -> Result<Self> {
        if powers.is_empty() {
            return Err(Error::Invalid("tap profile needs at least one tap".into()));
        }
        if powers.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Invalid(
                "tap powers must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = powers.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Invalid("tap powers sum to zero".into()));
        }
        if !spacing_s.is_finite() || (powers.len() > 1 && spacing_s <= 0.0) {
            return Err(Error::Invalid("tap spacing must be positive".into()));
        }
        let powers = powers.into_iter().map(|p| p / sum).collect();
        Ok(Self { powers, spacing_s })
    }

    /// 18 taps at 10 ns spacing with exponential decay (about 40 ns rms
    /// delay spread), an indoor-style profile with visible frequency
    /// selectivity across a 10 MHz band.
    pub fn indoor_default() -> Self {
        let powers = (0..18).map(|l| (-(l as f64) / 6.0).exp()).collect();
        Self::new(powers, 10e-9).expect("static profile is valid")
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn spacing_s(&self) -> f64 {
        self.spacing_s
    }
}

/// Tone frequency layout: `tones` evenly spaced frequencies centered on
/// `center_hz`, spanning `bandwidth_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPlan {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub tones: usize,
}

impl BandPlan {
    pub fn new(center_hz: f64, bandwidth_hz: f64, tones: usize) -> Result<Self> {
        if tones == 0 {
            return Err(Error::Invalid("band plan needs at least one tone".into()));
        }
        if !(center_hz.is_finite() && bandwidth_hz.is_finite()) || bandwidth_hz <= 0.0 {
            return Err(Error::Invalid("band plan frequencies must be positive".into()));
        }
        Ok(Self {
            center_hz,
            bandwidth_hz,
            tones,
        })
    }

    /// 5.18 GHz center, 10 MHz span.
    pub fn default_band(tones: usize) -> Result<Self> {
        Self::new(5.18e9, 10e6, tones)
    }

    pub fn tone_spacing_hz(&self) -> f64 {
        self.bandwidth_hz / self.tones as f64
    }

    /// Frequency of tone `idx` (0-based), symmetric around the center.
    pub fn tone_frequency_hz(&self, idx: usize) -> f64 {
        debug_assert!(idx < self.tones);
        let offset = idx as f64 - (self.tones as f64 - 1.0) / 2.0;
        self.center_hz + offset * self.tone_spacing_hz()
    }
}

/// A realized multi-tone MIMO channel: one rx-by-tx matrix per tone.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    tx: usize,
    rx: usize,
    band: BandPlan,
    seed: u64,
    per_tone: Vec<CMatrix>,
    tap_powers: Option<Vec<f64>>,
    tap_spacing_s: Option<f64>,
}

impl Channel {
    /// Draws a channel realization.
    ///
    /// Tap draws are keyed by (rx, tx) antenna pair only, so enlarging the
    /// array or changing the tone count leaves the taps of the shared
    /// antenna pairs untouched: a 4x2 channel contains the 2x2 channel of
    /// the same seed as its first rows.
    pub fn generate(
        tx: usize,
        rx: usize,
        band: BandPlan,
        profile: &TapProfile,
        seed: u64,
    ) -> Result<Channel> {
        if tx == 0 || rx == 0 {
            return Err(Error::Dimension("antenna counts must be positive".into()));
        }
        let mut per_tone = vec![CMatrix::zeros(rx, tx); band.tones];
        for q in 0..rx {
            for m in 0..tx {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((q as u64) << 20) | (m as u64));
                let taps: Vec<C64> = profile
                    .powers()
                    .iter()
                    .map(|p| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        C64::new(re, im) * (p / 2.0).sqrt()
                    })
                    .collect();
                for (n, h) in per_tone.iter_mut().enumerate() {
                    let f = band.tone_frequency_hz(n);
                    let mut sum = C64::new(0.0, 0.0);
                    for (l, tap) in taps.iter().enumerate() {
                        let phase = -2.0 * std::f64::consts::PI * f * (l as f64) * profile.spacing_s();
                        sum += tap * C64::new(phase.cos(), phase.sin());
                    }
                    h[(q, m)] = sum;
                }
            }
        }
        Ok(Channel {
            tx,
            rx,
            band,
            seed,
            per_tone,
            tap_powers: Some(profile.powers().to_vec()),
            tap_spacing_s: Some(profile.spacing_s()),
        })
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx
    }

    pub fn rx_antennas(&self) -> usize {
        self.rx
    }

    pub fn tones(&self) -> usize {
        self.band.tones
    }

    pub fn band(&self) -> &BandPlan {
        &self.band
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tone_matrix(&self, n: usize) -> &CMatrix {
        &self.per_tone[n]
    }

    /// Gains from all transmit antennas to receive antenna `q` on tone `n`.
    pub fn rx_gains(&self, q: usize, n: usize) -> CVector {
        self.per_tone[n].row(q)
    }

    /// Sum of squared entry magnitudes over all tones; zero only for the
    /// all-zero channel.
    pub fn total_gain_sq(&self) -> f64 {
        self.per_tone
            .iter()
            .map(|h| {
                let f = h.frobenius_norm();
                f * f
            })
            .sum()
    }

    pub fn to_json_string(&self) -> String {
        let file = ChannelFile::from(self);
        serde_json::to_string_pretty(&file).expect("channel serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Channel> {
        let file: ChannelFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("channel file: {e}")))?;
        file.into_channel()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Channel> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

/// On-disk channel representation: one {re, im} pair of row-major
/// two-dimensional arrays per tone (Q rows of M entries). Tap fields are
/// optional provenance for generated channels.
#[derive(Serialize, Deserialize)]
struct ChannelFile {
    #[serde(rename = "M")]
    tx: usize,
    #[serde(rename = "N")]
    tones: usize,
    #[serde(rename = "Q")]
    rx: usize,
    center_hz: f64,
    bandwidth_hz: f64,
    seed: u64,
    matrices: Vec<MatrixEntries>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    tap_powers: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    tap_spacing_s: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixEntries {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl From<&Channel> for ChannelFile {
    fn from(c: &Channel) -> Self {
        let matrices = c
            .per_tone
            .iter()
            .map(|h| {
                let mut re = Vec::with_capacity(c.rx);
                let mut im = Vec::with_capacity(c.rx);
                for q in 0..c.rx {
                    re.push((0..c.tx).map(|m| h[(q, m)].re).collect());
                    im.push((0..c.tx).map(|m| h[(q, m)].im).collect());
                }
                MatrixEntries { re, im }
            })
            .collect();
        ChannelFile {
            tx: c.tx,
            tones: c.band.tones,
            rx: c.rx,
            center_hz: c.band.center_hz,
            bandwidth_hz: c.band.bandwidth_hz,
            seed: c.seed,
            matrices,
            tap_powers: c.tap_powers.clone(),
            tap_spacing_s: c.tap_spacing_s,
        }
    }
}

impl ChannelFile {
    fn into_channel(self) -> Result<Channel> {
        if self.tx == 0 || self.rx == 0 || self.tones == 0 {
            return Err(Error::Parse("channel file: M, N, Q must be positive".into()));
        }
        if self.matrices.len() != self.tones {
            return Err(Error::Parse(format!(
                "channel file: expected {} tone matrices, found {}",
                self.tones,
                self.matrices.len()
            )));
        }
        let band = BandPlan::new(self.center_hz, self.bandwidth_hz, self.tones)
            .map_err(|e| Error::Parse(format!("channel file: {e}")))?;
        let mut per_tone = Vec::with_capacity(self.tones);
        for (n, m) in self.matrices.iter().enumerate() {
            if m.re.len() != self.rx || m.im.len() != self.rx {
                return Err(Error::Parse(format!(
                    "channel file: tone {n} has {}/{} rows, expected {} each",
                    m.re.len(),
                    m.im.len(),
                    self.rx
                )));
            }
            for (part, rows) in [("re", &m.re), ("im", &m.im)] {
                for (q, row) in rows.iter().enumerate() {
                    if row.len() != self.tx {
                        return Err(Error::Parse(format!(
                            "channel file: tone {n} {part} row {q} has {} entries, expected {}",
                            row.len(),
                            self.tx
                        )));
                    }
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Parse(format!(
                            "channel file: tone {n} {part} row {q} has non-finite entries"
                        )));
                    }
                }
            }
            per_tone.push(CMatrix::from_fn(self.rx, self.tx, |q, t| {
                C64::new(m.re[q][t], m.im[q][t])
            }));
        }
        Ok(Channel {
            tx: self.tx,
            rx: self.rx,
            band,
            seed: self.seed,
            per_tone,
            tap_powers: self.tap_powers,
            tap_spacing_s: self.tap_spacing_s,
        })
    }
}
