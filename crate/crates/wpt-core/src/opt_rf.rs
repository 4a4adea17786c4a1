//! Waveform optimizer for RF combining with per-tone receive beamforming.
//!
//! With a free unit-norm combiner per tone, the best receive vector is the
//! dominant left singular vector of that tone's channel matrix and the best
//! transmit direction is the matching right singular vector. What remains
//! is the split of the power budget across tones: the rectifier voltage is
//! a posynomial in the per-tone amplitudes, maximized by successive
//! monomial condensation. Each condensed subproblem is solved in the log
//! domain by the interior-point routine.

use std::collections::BTreeMap;

use crate::baseline::tone_beams;
use crate::channel::Channel;
use crate::numerics::{Constraint, ConvexSubproblem, LinearTerm, CVector};
use crate::rectenna::{beta_coefficients, rf_voltage, RectifierParams, Waveform};
use crate::solution::{CombinerSolution, ReceiveCombiner, Scheme, SolveReport, SolverOpts};
use crate::{Error, Result};

/// Relative power margin kept inside the budget while iterating; the final
/// iterate is rescaled onto the exact budget, which only raises the
/// objective.
const BUDGET_MARGIN: f64 = 1e-6;
/// Fraction of amplitude leaked onto the non-dominant tones in the
/// baseline-shaped start.
const START_LEAK: f64 = 1e-6;

/// c * prod_n xi_n^{exponents[n]} with nonnegative integer exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

/// Sum of positive-coefficient monomials in the per-tone amplitudes.
#[derive(Debug, Clone)]
pub struct Posynomial {
    pub num_vars: usize,
    pub monomials: Vec<Monomial>,
}

impl Posynomial {
    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.monomial_values(xi).iter().sum()
    }

    pub fn monomial_values(&self, xi: &[f64]) -> Vec<f64> {
        assert_eq!(xi.len(), self.num_vars);
        self.monomials
            .iter()
            .map(|m| {
                let mut v = m.coeff;
                for (x, &e) in xi.iter().zip(&m.exponents) {
                    for _ in 0..e {
                        v *= *x;
                    }
                }
                v
            })
            .collect()
    }
}

/// Rectifier voltage as a posynomial in the amplitudes of the active
/// tones. `tone_index[i]` is the original tone of variable i; the
/// fourth-order terms pair tones whose index sums match, which is what
/// makes intermodulation products contribute DC.
pub fn vout_posynomial(
    active_sigmas: &[f64],
    tone_index: &[usize],
    tones_total: usize,
    p: &RectifierParams,
) -> Posynomial {
    assert_eq!(active_sigmas.len(), tone_index.len());
    let a = active_sigmas.len();
    let (b2, b4) = beta_coefficients(p);
    let mut slot_of_tone = vec![usize::MAX; tones_total];
    for (i, &t) in tone_index.iter().enumerate() {
        slot_of_tone[t] = i;
    }
    let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for (i, &s) in active_sigmas.iter().enumerate() {
        let mut key = vec![0u32; a];
        key[i] = 2;
        *acc.entry(key).or_insert(0.0) += 0.5 * b2 * s * s;
    }
    for i1 in 0..a {
        for i2 in 0..a {
            for i3 in 0..a {
                let sum = tone_index[i1] + tone_index[i2];
                if sum < tone_index[i3] {
                    continue;
                }
                let t4 = sum - tone_index[i3];
                if t4 >= tones_total {
                    continue;
                }
                let i4 = slot_of_tone[t4];
                if i4 == usize::MAX {
                    continue;
                }
                let coeff = 0.375
                    * b4
                    * active_sigmas[i1]
                    * active_sigmas[i2]
                    * active_sigmas[i3]
                    * active_sigmas[i4];
                let mut key = vec![0u32; a];
                key[i1] += 1;
                key[i2] += 1;
                key[i3] += 1;
                key[i4] += 1;
                *acc.entry(key).or_insert(0.0) += coeff;
            }
        }
    }
    Posynomial {
        num_vars: a,
        monomials: acc
            .into_iter()
            .map(|(exponents, coeff)| Monomial { coeff, exponents })
            .collect(),
    }
}

/// Weighted-geometric-mean condensation at `xi`: returns the linear
/// coefficients (d, e0) of the monomial lower bound in the log domain,
/// log bound(xi~) = sum_n d_n xi~_n + e0, tight at the expansion point.
pub(crate) fn condensation(pos: &Posynomial, xi: &[f64]) -> (Vec<f64>, f64) {
    let values = pos.monomial_values(xi);
    let total: f64 = values.iter().sum();
    let kept: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > total * 1e-300)
        .map(|(k, &v)| (k, v))
        .collect();
    let kept_total: f64 = kept.iter().map(|(_, v)| v).sum();
    let mut d = vec![0.0; pos.num_vars];
    let mut e0 = 0.0;
    for (k, v) in kept {
        let gamma = v / kept_total;
        let m = &pos.monomials[k];
        for (n, &e) in m.exponents.iter().enumerate() {
            d[n] += gamma * e as f64;
        }
        e0 += gamma * (m.coeff.ln() - gamma.ln());
    }
    (d, e0)
}

/// One condensed subproblem: maximize z s.t. z <= monomial bound and the
/// amplitude budget, in log variables [z~, xi~_0, ..].
fn condensed_subproblem(d: &[f64], e0: f64, power: f64) -> ConvexSubproblem {
    let a = d.len();
    let mut objective = vec![0.0; a + 1];
    objective[0] = -1.0;
    let mut affine = vec![(0usize, 1.0)];
    for (n, &dn) in d.iter().enumerate() {
        affine.push((n + 1, -dn));
    }
    let budget_terms = (0..a)
        .map(|n| LinearTerm::new(vec![(n + 1, 2.0)], 0.0))
        .collect();
    ConvexSubproblem {
        num_vars: a + 1,
        objective,
        constraints: vec![
            Constraint::Affine {
                term: LinearTerm::new(affine, -e0),
            },
            Constraint::SumExp {
                terms: budget_terms,
                bound: 2.0 * power,
            },
        ],
    }
}

pub(crate) fn rescale_to_power(xi: &mut [f64], power: f64) {
    let sq: f64 = xi.iter().map(|x| x * x).sum();
    if sq > 0.0 {
        let f = (2.0 * power / sq).sqrt();
        for x in xi {
            *x *= f;
        }
    }
}

#[derive(Debug, Clone)]
struct AllocationRun {
    xi: Vec<f64>,
    value: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    relative_step: f64,
}

/// Runs the condensation loop from one strictly feasible start; the start
/// must already sit at the margin budget. Ends with an exact-budget
/// rescale, which can only increase the objective.
fn sca_run(
    pos: &Posynomial,
    start: Vec<f64>,
    power: f64,
    opts: &SolverOpts,
) -> Result<AllocationRun> {
    let mut xi = start;
    let mut value = pos.eval(&xi);
    let mut trace = vec![value];
    let mut converged = false;
    let mut relative_step = 0.0;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let (d, e0) = condensation(pos, &xi);
        let sp = condensed_subproblem(&d, e0, power);
        let mut start_pt = Vec::with_capacity(pos.num_vars + 1);
        start_pt.push(value.ln() - 1e-6);
        for x in &xi {
            start_pt.push(x.ln());
        }
        let solved = match sp.solve(&start_pt) {
            Ok(s) => s.x,
            Err(Error::SolverDiverged { best_point, .. }) => best_point,
            Err(e) => return Err(e),
        };
        let mut xi_new: Vec<f64> = solved[1..].iter().map(|v| v.exp()).collect();
        rescale_to_power(&mut xi_new, power * (1.0 - BUDGET_MARGIN));
        let value_new = pos.eval(&xi_new);
        if value_new <= value {
            converged = true;
            break;
        }
        let diff_sq: f64 = xi_new
            .iter()
            .zip(&xi)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let norm_sq: f64 = xi_new.iter().map(|x| x * x).sum();
        relative_step = (diff_sq / norm_sq.max(f64::MIN_POSITIVE)).sqrt();
        xi = xi_new;
        value = value_new;
        trace.push(value);
        if relative_step <= opts.epsilon {
            converged = true;
            break;
        }
    }

    rescale_to_power(&mut xi, power);
    let final_value = pos.eval(&xi);
    if final_value != *trace.last().unwrap() {
        trace.push(final_value);
    }
    Ok(AllocationRun {
        xi,
        value: final_value,
        trace,
        iterations,
        converged,
        relative_step,
    })
}

/// Splits the power budget across tones with effective gains `sigmas`,
/// maximizing the rectifier voltage of the combined scalar signal.
/// Returns the per-tone amplitudes (zero where sigma is zero) and the
/// iteration report of the winning run.
pub fn solve_power_allocation(
    sigmas: &[f64],
    power: f64,
    p: &RectifierParams,
    opts: &SolverOpts,
) -> Result<(Vec<f64>, SolveReport)> {
    p.validate()?;
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::Invalid("power budget must be positive".into()));
    }
    if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Invalid(
            "tone gains must be finite and nonnegative".into(),
        ));
    }
    let active: Vec<usize> = sigmas
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(n, _)| n)
        .collect();
    if active.is_empty() {
        return Ok((
            vec![0.0; sigmas.len()],
            SolveReport {
                iterations: 0,
                converged: true,
                objective_trace: vec![0.0],
                relative_step: 0.0,
            },
        ));
    }
    let active_sigmas: Vec<f64> = active.iter().map(|&n| sigmas[n]).collect();
    let pos = vout_posynomial(&active_sigmas, &active, sigmas.len(), p);
    let a = active.len();
    let best_slot = active_sigmas
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .unwrap();

    let winner = if a == 1 {
        let xi = vec![(2.0 * power).sqrt()];
        let value = pos.eval(&xi);
        AllocationRun {
            xi,
            value,
            trace: vec![value],
            iterations: 0,
            converged: true,
            relative_step: 0.0,
        }
    } else {
        let margin_power = power * (1.0 - BUDGET_MARGIN);
        let mut near_ass = vec![START_LEAK; a];
        near_ass[best_slot] = 1.0;
        rescale_to_power(&mut near_ass, margin_power);
        let mut uniform = vec![1.0; a];
        rescale_to_power(&mut uniform, margin_power);

        let mut best: Option<AllocationRun> = None;
        for start in [near_ass, uniform] {
            let run = sca_run(&pos, start, power, opts)?;
            if best.as_ref().is_none_or(|b| run.value > b.value) {
                best = Some(run);
            }
        }
        let mut best = best.unwrap();

        // The strongest-tone corner is a valid allocation; never report
        // anything below it.
        let mut ass_xi = vec![0.0; a];
        ass_xi[best_slot] = (2.0 * power).sqrt();
        let ass_value = pos.eval(&ass_xi);
        if ass_value > best.value {
            best = AllocationRun {
                xi: ass_xi,
                value: ass_value,
                trace: vec![ass_value],
                iterations: 0,
                converged: true,
                relative_step: 0.0,
            };
        }
        best
    };

    let mut xi_full = vec![0.0; sigmas.len()];
    for (slot, &tone) in active.iter().enumerate() {
        xi_full[tone] = winner.xi[slot];
    }
    Ok((
        xi_full,
        SolveReport {
            iterations: winner.iterations,
            converged: winner.converged,
            objective_trace: winner.trace,
            relative_step: winner.relative_step,
        },
    ))
}

/// Full RF-combining optimizer: per-tone dominant singular beams plus the
/// posynomial power allocation.
pub fn solve_rf_general(
    c: &Channel,
    power: f64,
    p: &RectifierParams,
    opts: &SolverOpts,
) -> Result<CombinerSolution> {
    let beams = tone_beams(c)?;
    let sigmas: Vec<f64> = beams.iter().map(|b| b.sigma).collect();
    let (xi, report) = solve_power_allocation(&sigmas, power, p, opts)?;

    let tx = c.tx_antennas();
    let mut s = CVector::zeros(tx * c.tones());
    for (n, beam) in beams.iter().enumerate() {
        if xi[n] == 0.0 {
            continue;
        }
        for m in 0..tx {
            s[n * tx + m] = beam.right[m] * xi[n];
        }
    }
    let waveform = Waveform::new(s, tx, c.tones())?;
    let combiners: Vec<CVector> = beams.into_iter().map(|b| b.left).collect();
    let objective = rf_voltage(&waveform, c, &combiners, p);
    Ok(CombinerSolution {
        scheme: Scheme::RfOpt,
        waveform,
        receive: ReceiveCombiner::PerTone(combiners),
        objective,
        report,
    })
}
