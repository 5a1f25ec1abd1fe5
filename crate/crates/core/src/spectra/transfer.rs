use nalgebra::{Complex, DMatrix};

use super::Channel;
use crate::error::{Error, Result};
use crate::model::{OpoParams, SteadyState};

type C64 = Complex<f64>;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Output amplitudes as a linear map of input amplitudes at sideband frequency `omega`.
///
/// `matrix[(out, in)]` is the coefficient of input channel `in` in output channel
/// `out`. Rows that are undefined at this frequency (an undamped channel at
/// `omega = 0`) are flagged in `defined` and hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub omega: f64,
    pub n: usize,
    pub matrix: DMatrix<C64>,
    pub defined: Vec<bool>,
}

impl TransferMatrix {
    pub fn coefficient(&self, out: Channel, input: Channel) -> C64 {
        self.matrix[(out.index(self.n), input.index(self.n))]
    }

    pub fn is_defined(&self, out: Channel) -> bool {
        self.defined[out.index(self.n)]
    }

    /// Largest entrywise modulus difference over rows defined in both matrices.
    pub fn max_abs_diff(&self, other: &TransferMatrix) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let dim = Channel::count(self.n);
        let mut worst: f64 = 0.0;
        for r in (0..dim).filter(|&r| self.defined[r] && other.defined[r]) {
            for c in 0..dim {
                worst = worst.max((self.matrix[(r, c)] - other.matrix[(r, c)]).norm());
            }
        }
        Ok(worst)
    }
}

/// Shared quantities of the closed-form coefficients at one frequency.
pub(crate) struct ClosedForm<'a> {
    alpha: &'a [f64],
    omega: f64,
    k_a: f64,
    k_p: f64,
    chi: f64,
    root_kakp: f64,
    /// `omega (-i k_p omega + omega^2 - 8 chi^2 S)`
    q_plus_den: C64,
    /// `-i k_p omega + omega^2 - 8 chi^2 S`
    q_pump_in_den: C64,
    /// `(2k_a + i omega)(k_p + i omega) + 8 chi^2 S`
    p_den: C64,
    /// `k_p omega + i (omega^2 - 8 chi^2 S)`
    qp_den: C64,
    /// `2k_a (k_p + i omega) + i k_p omega - omega^2 + 8 chi^2 S`
    pp_den: C64,
}

fn nonzero(den: C64, omega: f64, coefficient: &'static str) -> Result<C64> {
    if den.norm() == 0.0 || !den.re.is_finite() || !den.im.is_finite() {
        return Err(Error::Pole { omega, coefficient });
    }
    Ok(den)
}

impl<'a> ClosedForm<'a> {
    pub(crate) fn new(params: &OpoParams, ss: &'a SteadyState, omega: f64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::ZeroFrequency);
        }
        let (k_a, k_p, chi) = (params.k_a, params.k_p, params.chi);
        let w = omega;
        let eight_chi2_s = 8.0 * chi * chi * ss.total_power();
        let q_pump_in_den = C64::new(w * w - eight_chi2_s, -k_p * w);
        let two_ka = C64::new(2.0 * k_a, w);
        Ok(ClosedForm {
            alpha: &ss.alpha,
            omega,
            k_a,
            k_p,
            chi,
            root_kakp: (k_a * k_p).sqrt(),
            q_plus_den: nonzero(q_pump_in_den * w, w, "Q+ signal")?,
            q_pump_in_den: nonzero(q_pump_in_den, w, "Q+ pump-input")?,
            p_den: nonzero(two_ka * C64::new(k_p, w) + eight_chi2_s, w, "P+")?,
            qp_den: nonzero(C64::new(k_p * w, w * w - eight_chi2_s), w, "Qp")?,
            pp_den: nonzero(
                C64::new(2.0 * k_a * k_p, 2.0 * k_a * w + k_p * w) - w * w + eight_chi2_s,
                w,
                "Pp",
            )?,
        })
    }

    /// Fill `row` (length `4n+2`, zeroed by the caller) with `weight * T[out, .]`,
    /// accumulating into existing entries.
    pub(crate) fn accumulate_row(&self, out: Channel, weight: f64, row: &mut [C64]) {
        let n = self.alpha.len();
        let (k_a, k_p, chi, w) = (self.k_a, self.k_p, self.chi, self.omega);
        let s: f64 = self.alpha.iter().map(|a| a * a).sum();
        let two_ka = C64::new(2.0 * k_a, w);
        match out {
            Channel::QMinus(i) => {
                row[Channel::QMinus(i).index(n)] += weight * (-I * w / two_ka);
            }
            Channel::PMinus(i) => {
                row[Channel::PMinus(i).index(n)] += weight * C64::new(-1.0, -2.0 * k_a / w);
            }
            Channel::QPlus(i) => {
                let ai = self.alpha[i];
                let brace = C64::new(k_p * w, w * w + 8.0 * chi * chi * (ai * ai - s));
                let self_coeff = -(1.0 + 2.0 * k_a * brace / self.q_plus_den);
                let cross = -16.0 * I * chi * chi * k_a * ai / self.q_plus_den;
                for (j, &aj) in self.alpha.iter().enumerate() {
                    let c = if j == i { self_coeff } else { cross * aj };
                    row[Channel::QPlus(j).index(n)] += weight * c;
                }
                row[Channel::PumpQ.index(n)] +=
                    weight * (-8.0 * chi * self.root_kakp * ai / self.q_pump_in_den);
            }
            Channel::PPlus(i) => {
                let ai = self.alpha[i];
                let outer = two_ka * self.p_den;
                let self_coeff =
                    -1.0 + 2.0 * k_a / two_ka - 16.0 * chi * chi * k_a * ai * ai / outer;
                let cross = -16.0 * chi * chi * k_a * ai / outer;
                for (j, &aj) in self.alpha.iter().enumerate() {
                    let c = if j == i { self_coeff } else { cross * aj };
                    row[Channel::PPlus(j).index(n)] += weight * c;
                }
                row[Channel::PumpP.index(n)] +=
                    weight * (8.0 * chi * self.root_kakp * ai / self.p_den);
            }
            Channel::PumpQ => {
                let num = C64::new(k_p * w, -(w * w - 8.0 * chi * chi * s));
                row[Channel::PumpQ.index(n)] += weight * (num / self.qp_den);
                let cross = 4.0 * I * chi * self.root_kakp / self.qp_den;
                for (j, &aj) in self.alpha.iter().enumerate() {
                    row[Channel::QPlus(j).index(n)] += weight * cross * aj;
                }
            }
            Channel::PumpP => {
                let num = C64::new(
                    2.0 * k_a * k_p + w * w - 8.0 * chi * chi * s,
                    -2.0 * k_a * w + k_p * w,
                );
                row[Channel::PumpP.index(n)] += weight * (num / self.pp_den);
                let cross = -4.0 * chi * self.root_kakp / self.pp_den;
                for (j, &aj) in self.alpha.iter().enumerate() {
                    row[Channel::PPlus(j).index(n)] += weight * cross * aj;
                }
            }
        }
    }
}

/// Transfer matrix from the closed-form solutions of the linearised
/// quadrature equations. Requires `omega > 0`.
pub fn transfer_closed_form(
    params: &OpoParams,
    ss: &SteadyState,
    omega: f64,
) -> Result<TransferMatrix> {
    params.validate()?;
    ss.check_against(params)?;
    let cf = ClosedForm::new(params, ss, omega)?;
    let n = params.n;
    let dim = Channel::count(n);
    let mut matrix = DMatrix::zeros(dim, dim);
    let mut row = vec![C64::new(0.0, 0.0); dim];
    for out in Channel::all(n) {
        row.fill(C64::new(0.0, 0.0));
        cf.accumulate_row(out, 1.0, &mut row);
        for (c, v) in row.iter().enumerate() {
            matrix[(out.index(n), c)] = *v;
        }
    }
    Ok(TransferMatrix {
        omega,
        n,
        matrix,
        defined: vec![true; dim],
    })
}

/// Drift matrix of the internal quadrature fluctuations, in channel order.
pub(crate) fn drift_matrix(params: &OpoParams, ss: &SteadyState) -> DMatrix<f64> {
    let n = params.n;
    let dim = Channel::count(n);
    let (k_a, k_p, chi) = (params.k_a, params.k_p, params.chi);
    let (qp, pp) = (Channel::PumpQ.index(n), Channel::PumpP.index(n));
    let mut a = DMatrix::zeros(dim, dim);
    for (i, &ai) in ss.alpha.iter().enumerate() {
        let (qs, qd, ps) = (
            Channel::QPlus(i).index(n),
            Channel::QMinus(i).index(n),
            Channel::PPlus(i).index(n),
        );
        a[(qs, qp)] = 4.0 * chi * ai;
        a[(qd, qd)] = -2.0 * k_a;
        a[(qp, qs)] = -2.0 * chi * ai;
        a[(ps, pp)] = 4.0 * chi * ai;
        a[(ps, ps)] = -2.0 * k_a;
        a[(pp, ps)] = -2.0 * chi * ai;
        // P-i has no drift at all
    }
    a[(qp, qp)] = -k_p;
    a[(pp, pp)] = -k_p;
    a
}

/// Connected components of the coupling graph of `a` (symmetrised).
pub(crate) fn components(a: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let dim = a.nrows();
    let mut label = vec![usize::MAX; dim];
    let mut out = Vec::new();
    for start in 0..dim {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        label[start] = id;
        while let Some(v) = stack.pop() {
            members.push(v);
            for u in 0..dim {
                if label[u] == usize::MAX && (a[(v, u)] != 0.0 || a[(u, v)] != 0.0) {
                    label[u] = id;
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Transfer matrix from a direct linear solve of `(i omega - A) x = B x_in`,
/// `out = B x - x_in`, with `A` assembled from the quadrature equations of motion.
///
/// The system is solved block by block over the decoupled sectors. At
/// `omega = 0` a singular sector (an undamped channel) leaves its rows
/// undefined; at `omega > 0` a singular sector is an error.
pub fn transfer_numeric(
    params: &OpoParams,
    ss: &SteadyState,
    omega: f64,
) -> Result<TransferMatrix> {
    params.validate()?;
    ss.check_against(params)?;
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(Error::InvalidParams(format!(
            "analysis frequency must be >= 0, got {omega}"
        )));
    }
    let n = params.n;
    let dim = Channel::count(n);
    let a = drift_matrix(params, ss);
    let b: Vec<f64> = Channel::all(n)
        .map(|ch| (2.0 * ch.loss_rate(params.k_a, params.k_p)).sqrt())
        .collect();

    let mut matrix = DMatrix::<C64>::zeros(dim, dim);
    let mut defined = vec![true; dim];
    for block in components(&a) {
        let m = block.len();
        let sys = DMatrix::<C64>::from_fn(m, m, |r, c| {
            let diag = if r == c {
                I * omega
            } else {
                C64::new(0.0, 0.0)
            };
            diag - a[(block[r], block[c])]
        });
        let sv = sys.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if smax == 0.0 || smin <= 1e-13 * smax {
            if omega > 0.0 {
                return Err(Error::SingularSystem { omega });
            }
            for &r in &block {
                defined[r] = false;
                for c in 0..dim {
                    matrix[(r, c)] = C64::new(f64::NAN, f64::NAN);
                }
            }
            continue;
        }
        let rhs = DMatrix::<C64>::from_fn(m, m, |r, c| {
            if r == c {
                C64::new(b[block[r]], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let x = sys
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularSystem { omega })?;
        for (r, &gr) in block.iter().enumerate() {
            for (c, &gc) in block.iter().enumerate() {
                let direct = if r == c { 1.0 } else { 0.0 };
                matrix[(gr, gc)] = b[gr] * x[(r, c)] - direct;
            }
        }
    }
    Ok(TransferMatrix {
        omega,
        n,
        matrix,
        defined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::steady_state;

    fn setup(kappa: f64, sigma: f64, n: usize) -> (OpoParams, SteadyState) {
        let p = OpoParams::new(kappa, sigma, n).unwrap();
        let ss = steady_state(&p).unwrap();
        (p, ss)
    }

    #[test]
    fn antisymmetric_amplitude_coefficient() {
        let (p, ss) = setup(1.0, 2.0, 1);
        let t = transfer_closed_form(&p, &ss, 2.0).unwrap();
        let c = t.coefficient(Channel::QMinus(0), Channel::QMinus(0));
        assert!((c - C64::new(-0.5, -0.5)).norm() < 1e-15);
        assert!((c.norm_sqr() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_cavity_pump_phase_shift() {
        let (p, ss) = setup(1.7, 1.0, 1);
        let w = 0.37;
        let t = transfer_closed_form(&p, &ss, w).unwrap();
        let c = t.coefficient(Channel::PumpQ, Channel::PumpQ);
        let expected = C64::new(p.k_p * w, -w * w) / C64::new(p.k_p * w, w * w);
        assert!((c - expected).norm() < 1e-15);
        assert!((c.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_numeric_solve() {
        let (p, ss) = setup(1.0, 2.0, 2);
        let a = transfer_closed_form(&p, &ss, 0.3).unwrap();
        let b = transfer_numeric(&p, &ss, 0.3).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
    }

    #[test]
    fn zero_frequency_is_rejected_in_closed_form() {
        let (p, ss) = setup(1.0, 2.0, 2);
        assert_eq!(
            transfer_closed_form(&p, &ss, 0.0),
            Err(Error::ZeroFrequency)
        );
    }

    #[test]
    fn numeric_dc_marks_undamped_rows() {
        let (p, ss) = setup(1.0, 2.0, 2);
        let t = transfer_numeric(&p, &ss, 0.0).unwrap();
        for i in 0..2 {
            assert!(!t.is_defined(Channel::PMinus(i)));
            assert!(!t.is_defined(Channel::QPlus(i)));
            assert!(t.is_defined(Channel::QMinus(i)));
            assert!(t.is_defined(Channel::PPlus(i)));
        }
        assert!(t.is_defined(Channel::PumpP));
    }

    #[test]
    fn numeric_dc_single_pair_q_sector_is_defined() {
        let (p, ss) = setup(1.0, 4.0, 1);
        let t = transfer_numeric(&p, &ss, 0.0).unwrap();
        assert!(t.is_defined(Channel::QPlus(0)));
        assert!(t.is_defined(Channel::PumpQ));
        assert!(!t.is_defined(Channel::PMinus(0)));
    }

    #[test]
    fn passive_pump_reflection_at_dc() {
        let (p, ss) = setup(1.0, 1.0, 1);
        let t = transfer_numeric(&p, &ss, 0.0).unwrap();
        for ch in [Channel::PumpQ, Channel::PumpP] {
            assert!((t.coefficient(ch, ch).norm() - 1.0).abs() < 1e-14);
        }
        assert!(t.coefficient(Channel::QMinus(0), Channel::QMinus(0)).norm() < 1e-15);
    }

    #[test]
    fn components_follow_sectors() {
        let (p, ss) = setup(1.0, 2.0, 2);
        let comps = components(&drift_matrix(&p, &ss));
        // Q sector, P sector, and four singleton difference channels
        assert_eq!(comps.len(), 6);
        assert!(comps.iter().any(|c| c == &vec![0, 4, 8]));
        assert!(comps.iter().any(|c| c == &vec![2, 6, 9]));
    }
}
