//! Single-tone baseline: all transmit power on the strongest tone, along
//! its dominant transmit direction. Serves both as a reference scheme and
//! as the starting point for the iterative optimizers.

use crate::channel::Channel;
use crate::numerics::{svd_complex, CVector};
use crate::rectenna::Waveform;
use crate::{Error, Result};

/// Per-tone top singular triple of the channel.
#[derive(Debug, Clone)]
pub struct ToneBeam {
    /// Largest singular value of H_n.
    pub sigma: f64,
    /// Matching left singular vector (receive side), unit norm.
    pub left: CVector,
    /// Matching right singular vector (transmit side), unit norm.
    pub right: CVector,
}

/// Dominant singular triples for every tone.
pub fn tone_beams(c: &Channel) -> Result<Vec<ToneBeam>> {
    (0..c.tones())
        .map(|n| {
            let svd = svd_complex(c.tone_matrix(n))?;
            Ok(ToneBeam {
                sigma: svd.singular_values[0],
                left: svd.left.col(0),
                right: svd.right.col(0),
            })
        })
        .collect()
}

/// Strongest-tone solution: the selected tone, every tone's top singular
/// value, and the full-power waveform along the selected tone's dominant
/// transmit direction.
#[derive(Debug, Clone)]
pub struct AssSolution {
    /// Index of the selected tone (lowest index wins ties).
    pub tone: usize,
    /// Top singular value per tone.
    pub sigmas: Vec<f64>,
    pub waveform: Waveform,
    /// Receive-side dominant singular vector of the selected tone.
    pub receive: CVector,
    /// All tones have zero gain; the waveform is zero.
    pub degenerate: bool,
}

/// Builds the strongest-tone transmission for a power budget (watts).
pub fn ass_solution(c: &Channel, power: f64) -> Result<AssSolution> {
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::Invalid("power budget must be positive".into()));
    }
    let beams = tone_beams(c)?;
    let mut tone = 0;
    for (n, b) in beams.iter().enumerate() {
        if b.sigma > beams[tone].sigma {
            tone = n;
        }
    }
    let sigmas: Vec<f64> = beams.iter().map(|b| b.sigma).collect();
    let degenerate = sigmas[tone] == 0.0;

    let tx = c.tx_antennas();
    let mut s = CVector::zeros(tx * c.tones());
    if !degenerate {
        let amp = (2.0 * power).sqrt();
        for m in 0..tx {
            s[tone * tx + m] = beams[tone].right[m] * amp;
        }
    }
    let waveform = Waveform::new(s, tx, c.tones())?;
    Ok(AssSolution {
        tone,
        sigmas,
        waveform,
        receive: beams[tone].left.clone(),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{BandPlan, Channel, TapProfile};
    use crate::numerics::C64;
    use crate::rectenna;

    fn siso_two_tone(g0: f64, g1: f64) -> Channel {
        let text = format!(
            r#"{{
                "M": 1, "N": 2, "Q": 1,
                "center_hz": 5.18e9, "bandwidth_hz": 1e7, "seed": 0,
                "matrices": [
                    {{ "re": [[{g0}]], "im": [[0.0]] }},
                    {{ "re": [[{g1}]], "im": [[0.0]] }}
                ]
            }}"#
        );
        Channel::from_json_str(&text).unwrap()
    }

    #[test]
    fn picks_the_stronger_tone() {
        let c = siso_two_tone(1.0, 2.0);
        let sol = ass_solution(&c, 1e-6).unwrap();
        assert_eq!(sol.tone, 1);
        assert_eq!(sol.sigmas, vec![1.0, 2.0]);
        assert!(!sol.degenerate);
        let s = sol.waveform.stacked();
        assert_eq!(s[0], C64::new(0.0, 0.0));
        assert!((s[1].norm() - (2e-6_f64).sqrt()).abs() < 1e-18);
        assert!((sol.waveform.total_power() - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        let c = siso_two_tone(3.0, 3.0);
        let sol = ass_solution(&c, 1e-6).unwrap();
        assert_eq!(sol.tone, 0);
    }

    #[test]
    fn zero_channel_is_degenerate() {
        let c = siso_two_tone(0.0, 0.0);
        let sol = ass_solution(&c, 1e-6).unwrap();
        assert!(sol.degenerate);
        assert_eq!(sol.waveform.total_power(), 0.0);
    }

    #[test]
    fn received_rf_power_matches_budget_times_top_gain() {
        // Both combining styles see exactly P * sigma^2 of RF power.
        let profile = TapProfile::indoor_default();
        let band = BandPlan::default_band(4).unwrap();
        for seed in 0..5 {
            let c = Channel::generate(2, 3, band, &profile, seed).unwrap();
            let p = 1e-6;
            let sol = ass_solution(&c, p).unwrap();
            let expected = p * sol.sigmas[sol.tone] * sol.sigmas[sol.tone];

            let dc = rectenna::dc_received_rf_power(&sol.waveform, &c);
            assert!((dc - expected).abs() <= 1e-9 * expected);

            let beams = tone_beams(&c).unwrap();
            let combiners: Vec<CVector> = beams.into_iter().map(|b| b.left).collect();
            let rf = rectenna::rf_received_power(&sol.waveform, &c, &combiners);
            assert!((rf - expected).abs() <= 1e-9 * expected);
            assert!((rf - dc).abs() <= 1e-9 * expected.max(1e-300));
        }
    }

    #[test]
    fn rejects_bad_power() {
        let c = siso_two_tone(1.0, 1.0);
        assert!(ass_solution(&c, 0.0).is_err());
        assert!(ass_solution(&c, f64::NAN).is_err());
    }
}
