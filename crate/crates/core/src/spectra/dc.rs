use std::ops::RangeInclusive;

use nalgebra::Complex;

use super::transfer::ClosedForm;
use super::{Channel, Witness};
use crate::error::{Error, Result};
use crate::model::{OpoParams, SteadyState};

type C64 = Complex<f64>;

/// Exponents `m` of the frequency ladder `omega_m = k_a 2^-m`.
pub const DC_LADDER: RangeInclusive<i32> = 10..=40;

/// Relative agreement required between successive extrapolated estimates.
pub const DC_REL_TOL: f64 = 1e-8;

const RICHARDSON_DEPTH: usize = 3;
const DIVERGENCE_SLOPE: f64 = -2.0;
const DIVERGENCE_SLOPE_TOL: f64 = 0.05;
const DIVERGENCE_RUN: usize = 3;

/// Witness variance from the closed-form rows at `omega > 0`.
///
/// Only the rows the witness touches are built.
pub(crate) fn closed_form_variance(
    w: &Witness,
    params: &OpoParams,
    ss: &SteadyState,
    omega: f64,
) -> Result<f64> {
    let cf = ClosedForm::new(params, ss, omega)?;
    let mut row = vec![C64::new(0.0, 0.0); Channel::count(params.n)];
    for &(ch, wt) in w.terms() {
        cf.accumulate_row(ch, wt, &mut row);
    }
    Ok(Channel::all(params.n)
        .zip(&row)
        .map(|(ch, a)| ch.noise_power() * a.norm_sqr())
        .sum())
}

/// Zero-frequency limit of the witness variance.
///
/// The variance is even in `omega`, so the ladder values are extrapolated in
/// `omega^2`. Returns `f64::INFINITY` when the ladder grows like `omega^-2`.
pub fn witness_variance_dc(w: &Witness, params: &OpoParams, ss: &SteadyState) -> Result<f64> {
    params.validate()?;
    ss.check_against(params)?;
    w.check_range(params.n)?;
    if w.uses_p_minus() {
        return Err(Error::InvalidWitness(format!(
            "'{}' has weight on a P- channel, which diverges at zero frequency",
            w.label
        )));
    }
    let scale = w.vacuum_variance();
    // prev_row[k] is the depth-k Richardson estimate from the previous rung
    let mut prev_row: Vec<f64> = Vec::new();
    let mut prev_best: Option<f64> = None;
    let mut prev_raw: Option<f64> = None;
    let mut slope_run = 0;
    let mut history = Vec::new();

    for m in DC_LADDER {
        let omega = params.k_a * 2f64.powi(-m);
        let raw = closed_form_variance(w, params, ss, omega)?;
        if !raw.is_finite() {
            return Err(Error::DcNotConverged { last: history });
        }

        if let Some(p) = prev_raw {
            if p > 0.0 && raw > 0.0 {
                let slope = -(raw / p).log2();
                if (slope - DIVERGENCE_SLOPE).abs() <= DIVERGENCE_SLOPE_TOL * DIVERGENCE_SLOPE.abs()
                {
                    slope_run += 1;
                    if slope_run >= DIVERGENCE_RUN {
                        return Ok(f64::INFINITY);
                    }
                } else {
                    slope_run = 0;
                }
            } else {
                slope_run = 0;
            }
        }
        prev_raw = Some(raw);

        let mut row = vec![raw];
        for k in 1..=prev_row.len().min(RICHARDSON_DEPTH) {
            let factor = 4f64.powi(k as i32) - 1.0;
            let next = row[k - 1] + (row[k - 1] - prev_row[k - 1]) / factor;
            row.push(next);
        }
        let best = *row.last().unwrap();
        history.push(best);
        if let Some(pb) = prev_best {
            if slope_run == 0 && (best - pb).abs() <= DC_REL_TOL * best.abs().max(scale) {
                return Ok(best.max(0.0));
            }
        }
        prev_best = Some(best);
        prev_row = row;
    }
    let keep = history.len().saturating_sub(4);
    Err(Error::DcNotConverged {
        last: history.split_off(keep),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::steady_state;

    fn dc(spec: &str, kappa: f64, sigma: f64, n: usize) -> Result<f64> {
        let p = OpoParams::new(kappa, sigma, n).unwrap();
        let ss = steady_state(&p).unwrap();
        witness_variance_dc(&Witness::parse(spec).unwrap(), &p, &ss)
    }

    #[test]
    fn epr_variance() {
        let v = dc("P+1", 1.0, 4.0, 1).unwrap();
        assert!((v - 1.5).abs() < 1e-9, "{v}");
    }

    #[test]
    fn amplitude_difference_vanishes() {
        let v = dc("Q-1", 1.0, 2.0, 2).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
    }

    #[test]
    fn amplitude_sum_diverges() {
        assert_eq!(dc("Q+1", 1.0, 2.0, 3).unwrap(), f64::INFINITY);
    }

    #[test]
    fn amplitude_sum_at_threshold_diverges() {
        assert_eq!(dc("Q+1", 1.0, 1.0, 1).unwrap(), f64::INFINITY);
    }

    #[test]
    fn single_pair_amplitude_sum_matches_numeric_dc() {
        let p = OpoParams::new(1.0, 4.0, 1).unwrap();
        let ss = steady_state(&p).unwrap();
        let w = Witness::single(Channel::QPlus(0));
        let t = crate::spectra::transfer_numeric(&p, &ss, 0.0).unwrap();
        let exact = crate::spectra::witness_variance(&w, &t).unwrap();
        let v = witness_variance_dc(&w, &p, &ss).unwrap();
        assert!((v - exact).abs() < 1e-8 * exact.max(1.0), "{v} vs {exact}");
    }

    #[test]
    fn p_minus_rejected() {
        assert!(matches!(
            dc("P-1", 1.0, 2.0, 1),
            Err(Error::InvalidWitness(_))
        ));
    }
}
