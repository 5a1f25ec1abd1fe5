//! Linear stability of the classical steady state.
//!
//! Perturbations are ordered per pair as `(da_i, da_i*, da_-i, da_-i*)` followed
//! by the pump `(dp, dp*)`, giving a `2(2n+1)` square Jacobian. With equal
//! amplitudes its spectrum is
//!
//! ```text
//! { 0 x (2n-1), -2k_a x (2n-1), l1, l2, l3, l4 }
//! l1,2 = -k_a/2 (kappa +- sqrt(kappa (kappa - 8 (sqrt(sigma) - 1))))
//! ```
//!
//! For `l3,4` two closed forms are available. [`ClosedForm::Published`] is the
//! commonly quoted expression with discriminant `(kappa+2)^2 - 8 n sqrt(sigma)`.
//! Reducing the Jacobian onto its pump-coupled difference mode gives a 2x2
//! block with trace `-(2k_a + k_p)` and determinant `2 k_a k_p sqrt(sigma)`, so
//! the discriminant is really `(kappa+2)^2 - 8 kappa sqrt(sigma)`
//! ([`ClosedForm::Reduced`]). The two agree only when `kappa == n`;
//! [`is_stable`] reports the match error against both so the disagreement is
//! visible rather than absorbed into a tolerance.

use nalgebra::{linalg::Schur, Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{steady_state, OpoParams, SteadyState};

pub type C64 = Complex<f64>;

/// Tolerance on `max Re(lambda)`, in units of `k_a`, below which a mode counts as stable.
pub const STABILITY_TOL: f64 = 1e-10;
/// Assignment distance, in units of `k_a`, for numeric vs closed-form agreement.
pub const MATCH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: DMatrix<C64>,
}

impl Jacobian {
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        Ok(Jacobian { matrix })
    }

    pub fn from_real(matrix: DMatrix<f64>) -> Result<Self> {
        Self::from_matrix(matrix.map(|v| C64::new(v, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// True when every entry has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.matrix.iter().all(|z| z.im == 0.0)
    }
}

pub fn build_jacobian(ss: &SteadyState, params: &OpoParams) -> Result<Jacobian> {
    params.validate()?;
    ss.check_against(params)?;
    let n = params.n;
    let dim = 2 * (2 * n + 1);
    let k = params.k_a;
    let g = 2.0 * params.chi;
    let (p, pc) = (4 * n, 4 * n + 1);
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    let re = |v: f64| C64::new(v, 0.0);

    for i in 0..n {
        let a_pos = C64::from_polar(ss.alpha[i], ss.phases[i]);
        let a_neg = C64::from_polar(ss.alpha[i], -ss.phases[i]);
        let (s, sc, t, tc) = (4 * i, 4 * i + 1, 4 * i + 2, 4 * i + 3);

        m[(s, s)] = re(-k);
        m[(s, tc)] = re(k);
        m[(s, p)] = a_pos * g;

        m[(sc, sc)] = re(-k);
        m[(sc, t)] = re(k);
        m[(sc, pc)] = a_pos.conj() * g;

        m[(t, sc)] = re(k);
        m[(t, t)] = re(-k);
        m[(t, p)] = a_neg * g;

        m[(tc, s)] = re(k);
        m[(tc, tc)] = re(-k);
        m[(tc, pc)] = a_neg.conj() * g;

        m[(p, s)] = -a_neg * g;
        m[(p, t)] = -a_pos * g;
        m[(pc, sc)] = -a_neg.conj() * g;
        m[(pc, tc)] = -a_pos.conj() * g;
    }
    m[(p, p)] = re(-params.k_p);
    m[(pc, pc)] = re(-params.k_p);
    Ok(Jacobian { matrix: m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    /// `l3,4` with discriminant `(kappa+2)^2 - 8 n sqrt(sigma)`.
    Published,
    /// `l3,4` with discriminant `(kappa+2)^2 - 8 kappa sqrt(sigma)`.
    Reduced,
}

/// Closed-form eigenvalue multiset. Only defined for an equal amplitude profile.
pub fn eigenvalues_closed_form(params: &OpoParams, form: ClosedForm) -> Result<Vec<C64>> {
    params.validate()?;
    if !params.has_equal_profile() {
        return Err(Error::InvalidParams(
            "closed-form eigenvalues assume equal pair amplitudes".into(),
        ));
    }
    let n = params.n;
    let k = params.k_a;
    let kappa = params.kappa();
    let root_sigma = params.sigma.sqrt();

    let d12 = C64::new(kappa * (kappa - 8.0 * (root_sigma - 1.0)), 0.0).sqrt();
    let weight = match form {
        ClosedForm::Published => n as f64,
        ClosedForm::Reduced => kappa,
    };
    let d34 = C64::new((kappa + 2.0).powi(2) - 8.0 * weight * root_sigma, 0.0).sqrt();

    let mut out = Vec::with_capacity(4 * n + 2);
    out.extend(std::iter::repeat_n(C64::new(0.0, 0.0), 2 * n - 1));
    out.extend(std::iter::repeat_n(C64::new(-2.0 * k, 0.0), 2 * n - 1));
    out.push(-0.5 * k * (kappa + d12));
    out.push(-0.5 * k * (kappa - d12));
    out.push(-0.5 * k * (kappa + 2.0 + d34));
    out.push(-0.5 * k * (kappa + 2.0 - d34));
    Ok(out)
}

/// Radius, relative to the matrix scale, within which numeric eigenvalues are
/// treated as one perturbed multiple eigenvalue and replaced by their mean.
const CLUSTER_RADIUS: f64 = 1e-6;

/// Eigenvalues of a dense complex matrix via complex Schur decomposition.
///
/// A defective multiple eigenvalue splits by `O(sqrt(eps))` under rounding, but
/// the mean of the split cluster is accurate to `O(eps)`, so clusters closer
/// than `CLUSTER_RADIUS * max(1, |J|)` are collapsed onto their mean.
pub fn eigenvalues_numeric(j: &Jacobian) -> Result<Vec<C64>> {
    let dim = j.dim();
    if dim == 0 {
        return Ok(Vec::new());
    }
    let scale = j.matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
    // The deflation test is relative to neighbouring diagonal entries, which
    // stalls on blocks of exact zero eigenvalues; a diagonal shift avoids that.
    for shift in SCHUR_SHIFTS {
        let s = C64::new(shift * scale, 0.0);
        let shifted = &j.matrix - DMatrix::from_diagonal_element(dim, dim, s);
        let Some(schur) = Schur::try_new(shifted, f64::EPSILON, 10_000) else {
            continue;
        };
        let Some(ev) = schur.eigenvalues() else {
            continue;
        };
        let raw: Vec<C64> = ev.iter().map(|z| z + s).collect();
        if raw.len() == dim && raw.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Ok(collapse_clusters(raw, CLUSTER_RADIUS * scale));
        }
    }
    Err(Error::EigenNoConvergence)
}

/// Diagonal shifts, in units of the largest entry, tried in turn.
const SCHUR_SHIFTS: [f64; 4] = [0.0, 0.754_877_666_2, -1.324_717_957_2, 2.189_207_115];

fn collapse_clusters(values: Vec<C64>, radius: f64) -> Vec<C64> {
    let m = values.len();
    // union-find over the "closer than radius" relation
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for a in 0..m {
        for b in a + 1..m {
            if (values[a] - values[b]).norm() < radius {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[rb] = ra;
                }
            }
        }
    }
    let mut sums = vec![(C64::new(0.0, 0.0), 0usize); m];
    for i in 0..m {
        let r = find(&mut parent, i);
        sums[r].0 += values[i];
        sums[r].1 += 1;
    }
    (0..m)
        .map(|i| {
            let r = find(&mut parent, i);
            sums[r].0 / sums[r].1 as f64
        })
        .collect()
}

/// One matched pair in a multiset comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenPair {
    pub reference: [f64; 2],
    pub numeric: [f64; 2],
    pub distance: f64,
}

/// Greedy minimal-distance matching between two multisets of equal size.
///
/// Repeatedly pairs the globally closest remaining elements. Returns the pairs
/// in matching order; the assignment distance is the largest `distance`.
pub fn match_multisets(reference: &[C64], numeric: &[C64]) -> Result<Vec<EigenPair>> {
    if reference.len() != numeric.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: numeric.len(),
        });
    }
    let mut ref_left: Vec<usize> = (0..reference.len()).collect();
    let mut num_left: Vec<usize> = (0..numeric.len()).collect();
    let mut pairs = Vec::with_capacity(reference.len());
    while !ref_left.is_empty() {
        let mut best = (0, 0, f64::INFINITY);
        for (ri, &r) in ref_left.iter().enumerate() {
            for (ni, &k) in num_left.iter().enumerate() {
                let d = (reference[r] - numeric[k]).norm();
                if d < best.2 {
                    best = (ri, ni, d);
                }
            }
        }
        let r = ref_left.swap_remove(best.0);
        let k = num_left.swap_remove(best.1);
        pairs.push(EigenPair {
            reference: [reference[r].re, reference[r].im],
            numeric: [numeric[k].re, numeric[k].im],
            distance: best.2,
        });
    }
    Ok(pairs)
}

pub fn assignment_distance(reference: &[C64], numeric: &[C64]) -> Result<f64> {
    Ok(match_multisets(reference, numeric)?
        .iter()
        .map(|p| p.distance)
        .fold(0.0, f64::max))
}

/// Closed-form eigenvalues that failed to find a numeric partner within tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenDiscrepancy {
    pub form: ClosedForm,
    pub n: usize,
    pub kappa: f64,
    pub sigma: f64,
    pub tolerance: f64,
    pub match_error: f64,
    pub mismatched: Vec<EigenPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub eigenvalues: Vec<[f64; 2]>,
    /// `None` when the amplitude profile is not equal.
    pub closed_form: Option<Vec<[f64; 2]>>,
    pub closed_form_reduced: Option<Vec<[f64; 2]>>,
    pub max_real_part: f64,
    pub stable: bool,
    /// Assignment distance to the published closed form.
    pub match_error: Option<f64>,
    /// Assignment distance to the reduced closed form.
    pub match_error_reduced: Option<f64>,
    /// One entry per closed form whose match error exceeds [`MATCH_TOL`].
    pub discrepancies: Vec<EigenDiscrepancy>,
}

fn pairs_of(values: &[C64]) -> Vec<[f64; 2]> {
    values.iter().map(|z| [z.re, z.im]).collect()
}

/// Largest real part and whether it stays within `STABILITY_TOL * k_a`.
/// Zero eigenvalues count as (marginally) stable.
pub fn classify(eigenvalues: &[C64], k_a: f64) -> (f64, bool) {
    let max_real_part = eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    (max_real_part, max_real_part <= STABILITY_TOL * k_a)
}

pub fn is_stable(params: &OpoParams) -> Result<StabilityReport> {
    let ss = steady_state(params)?;
    let jac = build_jacobian(&ss, params)?;
    let numeric = eigenvalues_numeric(&jac)?;
    let (max_real_part, stable) = classify(&numeric, params.k_a);

    let mut report = StabilityReport {
        eigenvalues: pairs_of(&numeric),
        closed_form: None,
        closed_form_reduced: None,
        max_real_part,
        stable,
        match_error: None,
        match_error_reduced: None,
        discrepancies: Vec::new(),
    };
    if !params.has_equal_profile() {
        return Ok(report);
    }

    let tolerance = MATCH_TOL * params.k_a;
    for form in [ClosedForm::Published, ClosedForm::Reduced] {
        let closed = eigenvalues_closed_form(params, form)?;
        let pairs = match_multisets(&closed, &numeric)?;
        let err = pairs.iter().map(|p| p.distance).fold(0.0, f64::max);
        if err > tolerance {
            report.discrepancies.push(EigenDiscrepancy {
                form,
                n: params.n,
                kappa: params.kappa(),
                sigma: params.sigma,
                tolerance,
                match_error: err,
                mismatched: pairs
                    .into_iter()
                    .filter(|p| p.distance > tolerance)
                    .collect(),
            });
        }
        match form {
            ClosedForm::Published => {
                report.closed_form = Some(pairs_of(&closed));
                report.match_error = Some(err);
            }
            ClosedForm::Reduced => {
                report.closed_form_reduced = Some(pairs_of(&closed));
                report.match_error_reduced = Some(err);
            }
        }
    }
    Ok(report)
}
