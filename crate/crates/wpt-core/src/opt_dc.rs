//! Waveform optimizer for DC combining.
//!
//! The sum of rectifier voltages is a quartic in the stacked transmit
//! vector. Each outer iteration replaces it with the quadratic obtained by
//! freezing one factor of every fourth-order product at the current
//! iterate; the quadratic is maximized on the power sphere by the dominant
//! eigenvector, and the frozen point moves until the waveform stops
//! changing. Starting from the strongest-tone baseline keeps the objective
//! trace nondecreasing, so the result can never fall below the baseline.

use crate::baseline;
use crate::channel::Channel;
use crate::numerics::{hermitian_max_eigpair, C64, CMatrix, CVector};
use crate::rectenna::{
    beta_coefficients, rectifier_voltage_from_autocorr, BlockBandSet, RectifierParams, Waveform,
};
use crate::solution::{CombinerSolution, ReceiveCombiner, Scheme, SolveReport, SolverOpts};
use crate::{Error, Result};

/// Snapshot of the quantities the surrogate is built from: per-antenna
/// amplitude autocorrelations and the rectifier voltages they induce.
#[derive(Debug, Clone)]
pub struct DcIterate {
    /// autocorr[q][k] = sᴴ M_{q,k} s; entry k = 0 is real nonnegative.
    pub autocorr: Vec<Vec<C64>>,
    pub voltages: Vec<f64>,
}

/// Evaluates autocorrelations and voltages at a waveform.
pub fn evaluate_iterate(bands: &BlockBandSet, w: &Waveform, p: &RectifierParams) -> DcIterate {
    let mut autocorr = Vec::with_capacity(bands.rx_antennas());
    let mut voltages = Vec::with_capacity(bands.rx_antennas());
    for q in 0..bands.rx_antennas() {
        let t: Vec<C64> = (0..bands.tones())
            .map(|k| bands.band_quadratic(q, k, w))
            .collect();
        debug_assert!(t[0].im.abs() <= 1e-12 * t[0].re.abs().max(1e-300));
        voltages.push(rectifier_voltage_from_autocorr(p, &t));
        autocorr.push(t);
    }
    DcIterate { autocorr, voltages }
}

/// Assembles the Hermitian surrogate matrix A at the frozen iterate:
/// A = C + Cᴴ with
/// C = sum_q v_q [ (2 b2 + 3 b4 t_{q,0}) / 4 * M_{q,0}
///               + (3/2) b4 sum_{k>=1} conj(t_{q,k}) M_{q,k} ].
pub fn build_surrogate(bands: &BlockBandSet, it: &DcIterate, p: &RectifierParams) -> CMatrix {
    let (b2, b4) = beta_coefficients(p);
    let dim = bands.tx_antennas() * bands.tones();
    let mut c = CMatrix::zeros(dim, dim);
    for q in 0..bands.rx_antennas() {
        let vq = it.voltages[q];
        if vq == 0.0 {
            continue;
        }
        let t0 = it.autocorr[q][0].re;
        let w0 = C64::new(vq * (2.0 * b2 + 3.0 * b4 * t0) / 4.0, 0.0);
        c = c.add(&bands.assemble_band(q, 0).scale(w0));
        for k in 1..bands.tones() {
            let wk = it.autocorr[q][k].conj() * (1.5 * b4 * vq);
            if wk == C64::new(0.0, 0.0) {
                continue;
            }
            c = c.add(&bands.assemble_band(q, k).scale(wk));
        }
    }
    c.add(&c.adjoint())
}

/// One surrogate maximization: returns the full-power waveform along the
/// dominant eigenvector and the surrogate value 2 P lambda_max it attains.
pub fn surrogate_step(
    bands: &BlockBandSet,
    it: &DcIterate,
    power: f64,
    p: &RectifierParams,
) -> Result<(Waveform, f64)> {
    let a = build_surrogate(bands, it, p);
    let pair = hermitian_max_eigpair(&a)?;
    let mut v = pair.vector;
    fix_phase_by_largest(&mut v);
    let s = v.scale(C64::new((2.0 * power).sqrt(), 0.0));
    let w = Waveform::new(s, bands.tx_antennas(), bands.tones())?;
    Ok((w, 2.0 * power * pair.value))
}

/// Rotates a global phase so the largest-magnitude entry is real positive.
/// The stopping rule compares successive waveforms directly, so their free
/// phase has to be pinned consistently.
fn fix_phase_by_largest(v: &mut CVector) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].norm() > v[best].norm() {
            best = i;
        }
    }
    let mag = v[best].norm();
    if mag == 0.0 {
        return;
    }
    let rot = v[best].conj() / mag;
    for z in v.as_mut_slice() {
        *z *= rot;
    }
}

/// Optimizes the waveform for DC combining.
pub fn solve_dc(
    c: &Channel,
    power: f64,
    params: &RectifierParams,
    opts: &SolverOpts,
) -> Result<CombinerSolution> {
    params.validate()?;
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::Invalid("power budget must be positive".into()));
    }
    if c.total_gain_sq() == 0.0 {
        return Ok(CombinerSolution {
            scheme: Scheme::DcOpt,
            waveform: Waveform::zeros(c.tx_antennas(), c.tones()),
            receive: ReceiveCombiner::None,
            objective: 0.0,
            report: SolveReport {
                iterations: 0,
                converged: true,
                objective_trace: vec![0.0],
                relative_step: 0.0,
            },
        });
    }

    let bands = BlockBandSet::build(c);
    let mut w = baseline::ass_solution(c, power)?.waveform;
    let mut it = evaluate_iterate(&bands, &w, params);
    let mut objective: f64 = it.voltages.iter().sum();
    let mut trace = vec![objective];
    let mut converged = false;
    let mut relative_step = 0.0;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let (w_new, _ap) = surrogate_step(&bands, &it, power, params)?;
        let it_new = evaluate_iterate(&bands, &w_new, params);
        let obj_new: f64 = it_new.voltages.iter().sum();
        if obj_new <= objective {
            // The surrogate cannot improve the true objective any further;
            // keep the previous iterate.
            converged = true;
            break;
        }
        relative_step =
            w_new.stacked().sub(w.stacked()).norm() / w_new.stacked().norm().max(f64::MIN_POSITIVE);
        w = w_new;
        it = it_new;
        objective = obj_new;
        trace.push(objective);
        if relative_step <= opts.epsilon {
            converged = true;
            break;
        }
    }

    Ok(CombinerSolution {
        scheme: Scheme::DcOpt,
        waveform: w,
        receive: ReceiveCombiner::None,
        objective,
        report: SolveReport {
            iterations,
            converged,
            objective_trace: trace,
            relative_step,
        },
    })
}
