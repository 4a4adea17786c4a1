//! Rectenna model: multi-sine signals through a polynomial diode law.
//!
//! The rectifier DC voltage is modeled as v = b2 E{y^2} + b4 E{y^4}, where y
//! is the received RF signal and the coefficients come from a second/fourth
//! order Taylor expansion of the diode characteristic around its bias point.
//! All moment computations live here, together with a slow but independent
//! time-averaging oracle used to validate them.

use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::numerics::{C64, CMatrix, CVector};
use crate::{Error, Result};

/// Diode and load parameters of one rectifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectifierParams {
    /// Antenna resistance, ohms.
    pub r_antenna: f64,
    /// Diode thermal voltage, volts.
    pub v_thermal: f64,
    /// Diode ideality factor.
    pub ideality: f64,
    /// DC load resistance, ohms.
    pub r_load: f64,
}

impl Default for RectifierParams {
    fn default() -> Self {
        Self {
            r_antenna: 50.0,
            v_thermal: 25.86e-3,
            ideality: 1.05,
            r_load: 10_000.0,
        }
    }
}

impl RectifierParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.r_antenna, self.v_thermal, self.ideality, self.r_load];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Invalid(
                "rectifier parameters must be positive and finite".into(),
            ));
        }
        Ok(())
    }
}

/// Second- and fourth-order diode coefficients (b2, b4), computed as
/// b_i = R_ant^{i/2} / (i! (ideality * v_thermal)^{i-1}).
pub fn beta_coefficients(p: &RectifierParams) -> (f64, f64) {
    let nv = p.ideality * p.v_thermal;
    let beta2 = p.r_antenna / (2.0 * nv);
    let beta4 = p.r_antenna * p.r_antenna / (24.0 * nv * nv * nv);
    (beta2, beta4)
}

/// Stacked per-tone transmit weights. Tone n (0-based) occupies entries
/// n*tx .. (n+1)*tx of the flat vector, one complex weight per transmit
/// antenna. Average transmit power is ||s||^2 / 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    s: CVector,
    tx: usize,
    tones: usize,
}

impl Waveform {
    pub fn new(s: CVector, tx: usize, tones: usize) -> Result<Self> {
        if tx == 0 || tones == 0 {
            return Err(Error::Dimension("waveform needs tx >= 1 and tones >= 1".into()));
        }
        if s.len() != tx * tones {
            return Err(Error::Dimension(format!(
                "waveform stack has {} entries, expected {}",
                s.len(),
                tx * tones
            )));
        }
        Ok(Self { s, tx, tones })
    }

    pub fn zeros(tx: usize, tones: usize) -> Self {
        Self {
            s: CVector::zeros(tx * tones),
            tx,
            tones,
        }
    }

    pub fn stacked(&self) -> &CVector {
        &self.s
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx
    }

    pub fn tones(&self) -> usize {
        self.tones
    }

    pub fn tone_weights(&self, n: usize) -> &[C64] {
        &self.s.as_slice()[n * self.tx..(n + 1) * self.tx]
    }

    /// Average transmit power ||s||^2 / 2.
    pub fn total_power(&self) -> f64 {
        let n = self.s.norm();
        n * n / 2.0
    }

    pub fn fits_budget(&self, budget: f64) -> bool {
        self.total_power() <= budget + 1e-12
    }

    /// Rescales to hit the budget exactly. Zero waveforms stay zero.
    pub fn scaled_to_budget(&self, budget: f64) -> Waveform {
        let p = self.total_power();
        if p <= 0.0 {
            return self.clone();
        }
        let factor = (budget / p).sqrt();
        Waveform {
            s: self.s.scale(C64::new(factor, 0.0)),
            tx: self.tx,
            tones: self.tones,
        }
    }
}

/// Received per-tone amplitudes a_n = h_{q,n} . s_n at receive antenna q.
pub fn tone_amplitudes(w: &Waveform, c: &Channel, q: usize) -> Vec<C64> {
    debug_assert_eq!(w.tx_antennas(), c.tx_antennas());
    debug_assert_eq!(w.tones(), c.tones());
    (0..w.tones())
        .map(|n| {
            let h = c.tone_matrix(n);
            w.tone_weights(n)
                .iter()
                .enumerate()
                .map(|(m, s)| h[(q, m)] * s)
                .sum()
        })
        .collect()
}

/// Per-tone amplitudes after receive combining, a_n = w_n^H H_n s_n.
pub fn combined_amplitudes(w: &Waveform, c: &Channel, combiners: &[CVector]) -> Vec<C64> {
    debug_assert_eq!(combiners.len(), w.tones());
    (0..w.tones())
        .map(|n| {
            let h = c.tone_matrix(n);
            let wn = &combiners[n];
            debug_assert_eq!(wn.len(), c.rx_antennas());
            let mut a = C64::new(0.0, 0.0);
            for q in 0..c.rx_antennas() {
                let row: C64 = w
                    .tone_weights(n)
                    .iter()
                    .enumerate()
                    .map(|(m, s)| h[(q, m)] * s)
                    .sum();
                a += wn[q].conj() * row;
            }
            a
        })
        .collect()
}

/// Second and fourth moments of y(t) = sum_n Re{a_n e^{j w_n t}} over
/// frequencies on a uniform grid:
/// E{y^2} = (1/2) sum |a_n|^2,
/// E{y^4} = (3/8) sum_{n1+n2=n3+n4} a_{n1} a_{n2} a*_{n3} a*_{n4}.
pub fn signal_moments(a: &[C64]) -> (f64, f64) {
    let n = a.len();
    let ey2 = 0.5 * a.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let mut quartic = C64::new(0.0, 0.0);
    for n1 in 0..n {
        for n3 in 0..n {
            for n4 in 0..n {
                let n2 = n3 + n4;
                if n2 < n1 || n2 - n1 >= n {
                    continue;
                }
                let n2 = n2 - n1;
                quartic += a[n1] * a[n2] * a[n3].conj() * a[n4].conj();
            }
        }
    }
    debug_assert!(quartic.im.abs() <= 1e-9 * quartic.re.abs().max(1e-300));
    (ey2, 0.375 * quartic.re)
}

/// Tone autocorrelations t_k = sum_n a*_n a_{n+k} for k = 0..N-1.
pub fn amplitude_autocorrelations(a: &[C64]) -> Vec<C64> {
    let n = a.len();
    (0..n)
        .map(|k| (0..n - k).map(|i| a[i].conj() * a[i + k]).sum())
        .collect()
}

/// DC voltage from precomputed moments.
pub fn rectifier_voltage(p: &RectifierParams, ey2: f64, ey4: f64) -> f64 {
    let (b2, b4) = beta_coefficients(p);
    b2 * ey2 + b4 * ey4
}

/// DC voltage straight from autocorrelations:
/// v = (b2/2) t_0 + (3/8) b4 t_0^2 + (3/4) b4 sum_{k>=1} |t_k|^2.
/// Algebraically equal to `rectifier_voltage` over `signal_moments`; kept
/// as a second route for cross-checking.
pub fn rectifier_voltage_from_autocorr(p: &RectifierParams, t: &[C64]) -> f64 {
    let (b2, b4) = beta_coefficients(p);
    let t0 = t[0].re;
    let tail: f64 = t[1..].iter().map(|z| z.norm_sqr()).sum();
    0.5 * b2 * t0 + 0.375 * b4 * t0 * t0 + 0.75 * b4 * tail
}

/// Per-antenna DC voltage under DC combining.
pub fn dc_antenna_voltage(w: &Waveform, c: &Channel, q: usize, p: &RectifierParams) -> f64 {
    let a = tone_amplitudes(w, c, q);
    let (ey2, ey4) = signal_moments(&a);
    rectifier_voltage(p, ey2, ey4)
}

/// Sum of rectifier voltages over receive antennas (the DC-combining
/// objective).
pub fn dc_total_voltage(w: &Waveform, c: &Channel, p: &RectifierParams) -> f64 {
    (0..c.rx_antennas())
        .map(|q| dc_antenna_voltage(w, c, q, p))
        .sum()
}

/// Harvested DC power under DC combining: sum_q v_q^2 / R_load.
pub fn dc_output_power(w: &Waveform, c: &Channel, p: &RectifierParams) -> f64 {
    (0..c.rx_antennas())
        .map(|q| {
            let v = dc_antenna_voltage(w, c, q, p);
            v * v / p.r_load
        })
        .sum()
}

/// Total received RF power under DC combining: sum_q E{y_q^2}.
pub fn dc_received_rf_power(w: &Waveform, c: &Channel) -> f64 {
    (0..c.rx_antennas())
        .map(|q| signal_moments(&tone_amplitudes(w, c, q)).0)
        .sum()
}

/// Rectifier input voltage under RF combining with per-tone combiners.
pub fn rf_voltage(w: &Waveform, c: &Channel, combiners: &[CVector], p: &RectifierParams) -> f64 {
    let a = combined_amplitudes(w, c, combiners);
    let (ey2, ey4) = signal_moments(&a);
    rectifier_voltage(p, ey2, ey4)
}

/// Harvested DC power under RF combining: v^2 / R_load.
pub fn rf_output_power(
    w: &Waveform,
    c: &Channel,
    combiners: &[CVector],
    p: &RectifierParams,
) -> f64 {
    let v = rf_voltage(w, c, combiners, p);
    v * v / p.r_load
}

/// RF power delivered to the single rectifier after combining: E{y~^2}.
pub fn rf_received_power(w: &Waveform, c: &Channel, combiners: &[CVector]) -> f64 {
    signal_moments(&combined_amplitudes(w, c, combiners)).0
}

/// Independent moment oracle: samples y(t) = sum_n Re{a_n e^{j 2 pi v_n t}}
/// on a uniform grid over one period and averages y^2 and y^4 directly.
///
/// Surrogate integer frequencies v_n = N + 1 + n keep every fourth-order
/// frequency-matching condition of an evenly spaced tone grid (the offset
/// cancels in n1 + n2 - n3 - n4) while making three-plus-one and four-zero
/// sign combinations nonzero, exactly as with a real carrier much wider
/// than the band. The grid has more points than twice the largest harmonic,
/// so the averages are exact for this degree-4 trigonometric polynomial.
pub fn time_average_moments(a: &[C64]) -> (f64, f64) {
    let n = a.len();
    let samples = 8 * (2 * n + 1) + 1;
    let mut acc2 = 0.0;
    let mut acc4 = 0.0;
    for s in 0..samples {
        let t = s as f64 / samples as f64;
        let mut y = 0.0;
        for (i, amp) in a.iter().enumerate() {
            let freq = (n + 1 + i) as f64;
            let phase = 2.0 * std::f64::consts::PI * freq * t;
            y += amp.re * phase.cos() - amp.im * phase.sin();
        }
        let y2 = y * y;
        acc2 += y2;
        acc4 += y2 * y2;
    }
    (acc2 / samples as f64, acc4 / samples as f64)
}

/// Dense storage of the banded quadratic forms behind the DC objective.
///
/// For receive antenna q let h_q be the length tx*tones row obtained by
/// stacking that antenna's per-tone gains. The rank-one form
/// M_q = h_qᴴ h_q splits into block diagonals: band k holds the tx-by-tx
/// blocks h_{q,j}ᴴ h_{q,j+k} for j = 0..tones-k, and sᴴ M_{q,k} s is the
/// k-th autocorrelation of the received amplitudes.
#[derive(Debug, Clone)]
pub struct BlockBandSet {
    tx: usize,
    tones: usize,
    rx: usize,
    /// blocks[q][k][j]: block at block-row j, block-column j+k.
    blocks: Vec<Vec<Vec<CMatrix>>>,
}

impl BlockBandSet {
    pub fn build(c: &Channel) -> Self {
        let (tx, rx, tones) = (c.tx_antennas(), c.rx_antennas(), c.tones());
        let mut blocks = Vec::with_capacity(rx);
        for q in 0..rx {
            let gains: Vec<CVector> = (0..tones).map(|n| c.rx_gains(q, n)).collect();
            let mut bands = Vec::with_capacity(tones);
            for k in 0..tones {
                let mut band = Vec::with_capacity(tones - k);
                for j in 0..tones - k {
                    // h_{q,j}ᴴ h_{q,j+k} = conj-row outer product.
                    let block = CMatrix::from_fn(tx, tx, |r, col| {
                        gains[j][r].conj() * gains[j + k][col]
                    });
                    band.push(block);
                }
                bands.push(band);
            }
            blocks.push(bands);
        }
        Self {
            tx,
            tones,
            rx,
            blocks,
        }
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx
    }

    pub fn rx_antennas(&self) -> usize {
        self.rx
    }

    pub fn tones(&self) -> usize {
        self.tones
    }

    pub fn block(&self, q: usize, k: usize, j: usize) -> &CMatrix {
        &self.blocks[q][k][j]
    }

    /// sᴴ M_{q,k} s, the k-th autocorrelation of antenna q's amplitudes.
    pub fn band_quadratic(&self, q: usize, k: usize, w: &Waveform) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..self.tones - k {
            let block = &self.blocks[q][k][j];
            let sj = w.tone_weights(j);
            let sjk = w.tone_weights(j + k);
            for r in 0..self.tx {
                let mut inner = C64::new(0.0, 0.0);
                for col in 0..self.tx {
                    inner += block[(r, col)] * sjk[col];
                }
                acc += sj[r].conj() * inner;
            }
        }
        acc
    }

    /// Expands band k of antenna q into a full (tx*tones)^2 matrix.
    pub fn assemble_band(&self, q: usize, k: usize) -> CMatrix {
        let dim = self.tx * self.tones;
        let mut out = CMatrix::zeros(dim, dim);
        for j in 0..self.tones - k {
            let block = &self.blocks[q][k][j];
            for r in 0..self.tx {
                for c in 0..self.tx {
                    out[(j * self.tx + r, (j + k) * self.tx + c)] = block[(r, c)];
                }
            }
        }
        out
    }

    /// Reassembles M_q = M_{q,0} + sum_{k>=1} (M_{q,k} + M_{q,k}ᴴ).
    pub fn assemble_full(&self, q: usize) -> CMatrix {
        let mut out = self.assemble_band(q, 0);
        for k in 1..self.tones {
            let band = self.assemble_band(q, k);
            out = out.add(&band).add(&band.adjoint());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{BandPlan, TapProfile};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_amplitudes(n: usize, seed: u64, scale: f64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                c(re * scale, im * scale)
            })
            .collect()
    }

    #[test]
    fn beta_coefficients_match_reference_values() {
        let p = RectifierParams::default();
        let (b2, b4) = beta_coefficients(&p);
        assert!((b2 - 920.7085773211063).abs() < 1e-9);
        assert!((b4 - 5203257.370902268).abs() < 1e-5);
    }

    #[test]
    fn single_tone_moments_and_voltage() {
        // 1 uW budget into a unit channel: |a|^2 = 2e-6.
        let a = vec![c((2e-6_f64).sqrt(), 0.0)];
        let (ey2, ey4) = signal_moments(&a);
        assert!((ey2 - 1e-6).abs() < 1e-18);
        assert!((ey4 - 1.5e-12).abs() < 1e-24);
        let p = RectifierParams::default();
        let v = rectifier_voltage(&p, ey2, ey4);
        assert!((v - 9.285134633774597e-4).abs() < 1e-15);
        let pout = v * v / p.r_load;
        assert!((pout - 8.621372516732052e-11).abs() < 1e-22);
    }

    #[test]
    fn two_tone_quartic_includes_cross_terms() {
        let (a1, a2) = (0.7, 0.4);
        let a = vec![c(a1, 0.0), c(a2, 0.0)];
        let (_, ey4) = signal_moments(&a);
        let expected = 0.375 * (a1.powi(4) + a2.powi(4) + 4.0 * a1 * a1 * a2 * a2);
        assert!((ey4 - expected).abs() < 1e-15);
    }

    #[test]
    fn moment_formulas_match_time_average_oracle() {
        for n in 1..=8 {
            for seed in 0..4 {
                let a = random_amplitudes(n, seed + 100 * n as u64, 1e-3);
                let (f2, f4) = signal_moments(&a);
                let (o2, o4) = time_average_moments(&a);
                assert!(
                    (f2 - o2).abs() <= 1e-9 * o2.abs().max(1e-300),
                    "second moment mismatch at n={n}"
                );
                assert!(
                    (f4 - o4).abs() <= 1e-9 * o4.abs().max(1e-300),
                    "fourth moment mismatch at n={n}: {f4} vs {o4}"
                );
            }
        }
    }

    #[test]
    fn autocorrelation_voltage_route_agrees() {
        let p = RectifierParams::default();
        for seed in 0..6 {
            let a = random_amplitudes(5, seed, 2e-3);
            let (ey2, ey4) = signal_moments(&a);
            let direct = rectifier_voltage(&p, ey2, ey4);
            let t = amplitude_autocorrelations(&a);
            let banded = rectifier_voltage_from_autocorr(&p, &t);
            assert!((direct - banded).abs() <= 1e-12 * direct.abs().max(1e-300));
        }
    }

    #[test]
    fn waveform_budget_and_scaling() {
        let s = CVector::new(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        let w = Waveform::new(s, 1, 2).unwrap();
        assert!((w.total_power() - 1.0).abs() < 1e-15);
        assert!(w.fits_budget(1.0));
        assert!(!w.fits_budget(0.5));
        let scaled = w.scaled_to_budget(0.5);
        assert!((scaled.total_power() - 0.5).abs() < 1e-15);
        assert!(Waveform::new(CVector::zeros(3), 2, 2).is_err());
    }

    #[test]
    fn block_bands_match_amplitude_autocorrelations() {
        let profile = TapProfile::indoor_default();
        let band_plan = BandPlan::default_band(4).unwrap();
        let chan = Channel::generate(3, 2, band_plan, &profile, 21).unwrap();
        let bands = BlockBandSet::build(&chan);
        let s = CVector::new(random_amplitudes(12, 5, 1e-3));
        let w = Waveform::new(s, 3, 4).unwrap();
        for q in 0..2 {
            let amps = tone_amplitudes(&w, &chan, q);
            let t = amplitude_autocorrelations(&amps);
            for (k, tk) in t.iter().enumerate() {
                let viaband = bands.band_quadratic(q, k, &w);
                assert!(
                    (viaband - tk).norm() <= 1e-12 * tk.norm().max(1e-300),
                    "band {k} mismatch"
                );
            }
        }
    }

    #[test]
    fn bands_reassemble_the_rank_one_form() {
        let profile = TapProfile::indoor_default();
        let band_plan = BandPlan::default_band(3).unwrap();
        let chan = Channel::generate(2, 2, band_plan, &profile, 9).unwrap();
        let bands = BlockBandSet::build(&chan);
        for q in 0..2 {
            // Stack the per-tone gains into one row h and form hᴴ h, whose
            // (i, j) entry is conj(h_i) h_j.
            let mut hc = CVector::zeros(6);
            for n in 0..3 {
                let g = chan.rx_gains(q, n);
                for m in 0..2 {
                    hc[n * 2 + m] = g[m].conj();
                }
            }
            let direct = CMatrix::outer(&hc, &hc);
            let rebuilt = bands.assemble_full(q);
            assert!(
                rebuilt.sub(&direct).frobenius_norm()
                    <= 1e-12 * direct.frobenius_norm().max(1e-300)
            );
        }
    }

    #[test]
    fn dc_quantities_on_a_flat_siso_channel() {
        // Unit flat channel, one tone, budget P: all formulas collapse to
        // the single-tone worked example.
        let text = r#"{
            "M": 1, "N": 1, "Q": 1,
            "center_hz": 5.18e9, "bandwidth_hz": 1e7, "seed": 0,
            "matrices": [ { "re": [[1.0]], "im": [[0.0]] } ]
        }"#;
        let chan = Channel::from_json_str(text).unwrap();
        let p = RectifierParams::default();
        let w = Waveform::new(CVector::new(vec![c((2e-6_f64).sqrt(), 0.0)]), 1, 1).unwrap();
        assert!((dc_received_rf_power(&w, &chan) - 1e-6).abs() < 1e-18);
        let v = dc_total_voltage(&w, &chan, &p);
        assert!((v - 9.285134633774597e-4).abs() < 1e-15);
        let pout = dc_output_power(&w, &chan, &p);
        assert!((pout - 8.621372516732052e-11).abs() < 1e-22);
        // RF combining with a unit scalar combiner gives the same numbers.
        let combiners = vec![CVector::new(vec![c(1.0, 0.0)])];
        assert!((rf_voltage(&w, &chan, &combiners, &p) - v).abs() < 1e-18);
        assert!((rf_received_power(&w, &chan, &combiners) - 1e-6).abs() < 1e-18);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn moments_are_invariant_under_common_phase(
            n in 1usize..7,
            seed in 0u64..2000,
            phase in 0.0..std::f64::consts::TAU,
        ) {
            let a = random_amplitudes(n, seed, 1e-3);
            let rot = c(phase.cos(), phase.sin());
            let rotated: Vec<C64> = a.iter().map(|z| z * rot).collect();
            let (e2, e4) = signal_moments(&a);
            let (r2, r4) = signal_moments(&rotated);
            prop_assert!((e2 - r2).abs() <= 1e-12 * e2.abs().max(1e-300));
            prop_assert!((e4 - r4).abs() <= 1e-10 * e4.abs().max(1e-300));
        }

        #[test]
        fn fourth_moment_is_nonnegative(n in 1usize..7, seed in 0u64..2000) {
            let a = random_amplitudes(n, seed, 1e-2);
            let (e2, e4) = signal_moments(&a);
            prop_assert!(e2 >= 0.0);
            // y^4 averages cannot be negative.
            prop_assert!(e4 >= -1e-18);
        }

        #[test]
        fn autocorrelation_identity_holds(n in 1usize..7, seed in 0u64..2000) {
            let a = random_amplitudes(n, seed, 1e-2);
            let t = amplitude_autocorrelations(&a);
            let (e2, e4) = signal_moments(&a);
            prop_assert!((t[0].re - 2.0 * e2).abs() <= 1e-12 * t[0].re.abs().max(1e-300));
            prop_assert!(t[0].im.abs() <= 1e-14 * t[0].re.abs().max(1e-300));
            let tail: f64 = t[1..].iter().map(|z| z.norm_sqr()).sum();
            let via_t = 0.375 * (t[0].re * t[0].re + 2.0 * tail);
            prop_assert!((via_t - e4).abs() <= 1e-10 * e4.abs().max(1e-300));
        }
    }
}
