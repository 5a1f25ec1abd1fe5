//! van Loock–Furusawa inseparability inequalities for the comb.
//!
//! A partition of the `2n + 1` modes into two parties `A` and `B` is separable
//! only if `V(u) + V(v) >= 2 (|sum_A h_l g_l| + |sum_B h_l g_l|)` for
//! `u = sum h_l Q_l` and `v = sum g_l P_l`. Each [`VlfKind`] fixes a partition
//! class and the pair `(u, v)`; the bound is recomputed from the single-mode
//! weights so it holds for any amplitude profile.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::golden;
use crate::model::{steady_state, OpoParams, SteadyState};
use crate::spectra::{witness_variance_dc, Channel, Witness};

/// Search interval for the free weight `x`.
pub const X_RANGE: (f64, f64) = (1e-3, 1e3);
/// Points of the logarithmic pre-scan seeding the golden-section bracket.
pub const X_PRESCAN: usize = 50;
/// Bracket tolerance on `ln x`.
pub const X_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VlfKind {
    /// Pump against all signal modes.
    S1,
    /// One pair `j` against the remaining pairs and the pump.
    S2,
    /// Pairs `1..=k` against the remaining pairs and the pump.
    S3,
    /// Signal modes `+1..=+k` against everything else; uses amplitude differences.
    S4,
    /// S2 with the pump quadrature removed from `u`.
    S2Prime,
}

impl VlfKind {
    pub const ALL: [VlfKind; 5] = [
        VlfKind::S1,
        VlfKind::S2,
        VlfKind::S3,
        VlfKind::S4,
        VlfKind::S2Prime,
    ];

    /// Whether the witness carries the free pump weight `x`.
    pub fn has_x(self) -> bool {
        matches!(self, VlfKind::S1 | VlfKind::S2 | VlfKind::S3)
    }

    pub fn uses_j(self) -> bool {
        matches!(self, VlfKind::S2 | VlfKind::S4 | VlfKind::S2Prime)
    }

    pub fn uses_k(self) -> bool {
        matches!(self, VlfKind::S3 | VlfKind::S4)
    }

    /// Smallest pair count for which the partition is non-trivial.
    pub fn min_pairs(self) -> usize {
        match self {
            VlfKind::S1 => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for VlfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VlfKind::S1 => "S1",
            VlfKind::S2 => "S2",
            VlfKind::S3 => "S3",
            VlfKind::S4 => "S4",
            VlfKind::S2Prime => "S2p",
        })
    }
}

impl FromStr for VlfKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "S1" | "s1" => Ok(VlfKind::S1),
            "S2" | "s2" => Ok(VlfKind::S2),
            "S3" | "s3" => Ok(VlfKind::S3),
            "S4" | "s4" => Ok(VlfKind::S4),
            "S2p" | "s2p" | "S2'" | "S2prime" => Ok(VlfKind::S2Prime),
            other => Err(Error::InvalidParams(format!(
                "unknown inequality kind '{other}'"
            ))),
        }
    }
}

/// Structural indices, 1-based. Unused entries are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlfIndices {
    pub j: usize,
    pub k: usize,
}

impl Default for VlfIndices {
    fn default() -> Self {
        VlfIndices { j: 1, k: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlfCase {
    pub kind: VlfKind,
    pub indices: VlfIndices,
    pub x: Option<f64>,
    pub u: Witness,
    pub v: Witness,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlfResult {
    pub kind: VlfKind,
    pub indices: VlfIndices,
    /// `V(u) + V(v)` at zero frequency; infinite when `V(u)` diverges.
    pub s: f64,
    pub variance_u: f64,
    pub variance_v: f64,
    pub bound: f64,
    /// `s - bound`; negative values demonstrate inseparability.
    pub violation: f64,
    /// Weight used for this evaluation.
    pub x: Option<f64>,
    /// Optimised weight, when the result comes from [`optimize_x`].
    pub x_opt: Option<f64>,
    pub converged: bool,
    /// The optimum sits on the edge of the search interval.
    pub boundary_pinned: bool,
    /// The pre-scan found more than one local minimum.
    pub multimodal: bool,
}

impl VlfResult {
    pub fn is_violated(&self) -> bool {
        self.violation < 0.0
    }
}

/// `profile_a / profile_b`, defined even at threshold where every `alpha` is 0.
fn ratio(params: &OpoParams, a: usize, b: usize) -> Result<f64> {
    let den = params.amplitude_profile[b];
    if den <= 0.0 {
        return Err(Error::InvalidWitness(format!(
            "reference pair {} has zero amplitude weight",
            b + 1
        )));
    }
    Ok(params.amplitude_profile[a] / den)
}

fn check_indices(kind: VlfKind, n: usize, idx: VlfIndices) -> Result<()> {
    if n < kind.min_pairs() {
        return Err(Error::InvalidIndex(format!(
            "{kind} needs n >= {}, got n = {n}",
            kind.min_pairs()
        )));
    }
    if kind.uses_j() && !(1..=n).contains(&idx.j) {
        return Err(Error::InvalidIndex(format!(
            "j = {} outside 1..={n}",
            idx.j
        )));
    }
    if kind.uses_k() && !(1..n).contains(&idx.k) {
        return Err(Error::InvalidIndex(format!("k = {} outside 1..{n}", idx.k)));
    }
    Ok(())
}

/// Single-mode weights of a witness: index `2i` is mode `+i`, `2i+1` is `-i`,
/// `2n` is the pump. Returns `(h, g)` from the Q-type and P-type channels.
pub fn mode_weights(w: &Witness, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut h = vec![0.0; 2 * n + 1];
    let mut g = vec![0.0; 2 * n + 1];
    for &(ch, wt) in w.terms() {
        let (target, pair, sign) = match ch {
            Channel::QPlus(i) => (&mut h, Some(i), 1.0),
            Channel::QMinus(i) => (&mut h, Some(i), -1.0),
            Channel::PPlus(i) => (&mut g, Some(i), 1.0),
            Channel::PMinus(i) => (&mut g, Some(i), -1.0),
            Channel::PumpQ => (&mut h, None, 0.0),
            Channel::PumpP => (&mut g, None, 0.0),
        };
        match pair {
            Some(i) => {
                target[2 * i] += wt;
                target[2 * i + 1] += sign * wt;
            }
            None => target[2 * n] += wt,
        }
    }
    (h, g)
}

/// `2 (|sum_A h g| + |sum_B h g|)` with `u` Q-type, `v` P-type, and
/// `in_a[l]` marking the modes of party `A` in [`mode_weights`] order.
pub fn separability_bound(u: &Witness, v: &Witness, n: usize, in_a: &[bool]) -> Result<f64> {
    if in_a.len() != 2 * n + 1 {
        return Err(Error::DimensionMismatch {
            expected: 2 * n + 1,
            found: in_a.len(),
        });
    }
    let q_type = |c: &Channel| matches!(c, Channel::QPlus(_) | Channel::QMinus(_) | Channel::PumpQ);
    if !u.terms().iter().all(|(c, _)| q_type(c)) {
        return Err(Error::InvalidWitness(format!(
            "u = '{u}' must contain only Q-type channels"
        )));
    }
    if v.terms().iter().any(|(c, _)| q_type(c)) {
        return Err(Error::InvalidWitness(format!(
            "v = '{v}' must contain only P-type channels"
        )));
    }
    let (h, _) = mode_weights(u, n);
    let (_, g) = mode_weights(v, n);
    let (mut sum_a, mut sum_b) = (0.0, 0.0);
    for l in 0..2 * n + 1 {
        if in_a[l] {
            sum_a += h[l] * g[l];
        } else {
            sum_b += h[l] * g[l];
        }
    }
    Ok(2.0 * (sum_a.abs() + sum_b.abs()))
}

/// Party `A` of the partition in [`mode_weights`] order.
fn party_a(kind: VlfKind, n: usize, idx: VlfIndices) -> Vec<bool> {
    let mut a = vec![false; 2 * n + 1];
    match kind {
        VlfKind::S1 => a[2 * n] = true,
        VlfKind::S2 | VlfKind::S2Prime => {
            a[2 * (idx.j - 1)] = true;
            a[2 * (idx.j - 1) + 1] = true;
        }
        VlfKind::S3 => {
            for i in 0..idx.k {
                a[2 * i] = true;
                a[2 * i + 1] = true;
            }
        }
        VlfKind::S4 => {
            for i in 0..idx.k {
                a[2 * i] = true;
            }
        }
    }
    a
}

/// Builds the witness pair and bound of one inequality. `x` is required for
/// the kinds with a free pump weight and ignored otherwise.
pub fn build_case(
    kind: VlfKind,
    params: &OpoParams,
    ss: &SteadyState,
    idx: VlfIndices,
    x: Option<f64>,
) -> Result<VlfCase> {
    params.validate()?;
    ss.check_against(params)?;
    let n = params.n;
    check_indices(kind, n, idx)?;
    let x = if kind.has_x() {
        match x {
            Some(x) if x.is_finite() && x > 0.0 => Some(x),
            Some(x) => {
                return Err(Error::InvalidParams(format!(
                    "x must be finite and > 0, got {x}"
                )))
            }
            None => {
                return Err(Error::InvalidParams(format!(
                    "{kind} needs a pump weight x"
                )))
            }
        }
    } else {
        None
    };
    let (j, k) = (idx.j - 1, idx.k - 1);
    let mut u = Vec::new();
    let mut v = Vec::new();
    match kind {
        VlfKind::S1 => {
            let x = x.unwrap();
            let mut pump = 0.0;
            for i in 0..n {
                let r = ratio(params, i, 0)?;
                u.push((Channel::QPlus(i), r));
                pump += r;
                v.push((Channel::PPlus(i), 1.0));
            }
            u.push((Channel::PumpQ, 2.0 * pump / x));
            v.push((Channel::PumpP, -x));
        }
        VlfKind::S2 | VlfKind::S2Prime => {
            let mut pump = 0.0;
            for i in 0..n {
                let r = ratio(params, i, j)?;
                u.push((Channel::QPlus(i), r));
                pump += r;
                if i != j {
                    v.push((Channel::PPlus(j), r));
                    v.push((Channel::PPlus(i), -1.0));
                }
            }
            if let Some(x) = x {
                u.push((Channel::PumpQ, 2.0 * pump / x));
            }
        }
        VlfKind::S3 => {
            let x = x.unwrap();
            let mut pump = 0.0;
            for i in 0..n {
                let r = ratio(params, i, 0)?;
                u.push((Channel::QPlus(i), if i <= k { 1.0 } else { r }));
                pump += r;
            }
            u.push((Channel::PumpQ, 2.0 * pump / x));
            for i in 0..=k {
                for jj in (0..n).filter(|&jj| jj != i) {
                    v.push((Channel::PPlus(i), 1.0));
                    v.push((Channel::PPlus(jj), -ratio(params, i, jj)?));
                }
            }
        }
        VlfKind::S4 => {
            u.push((Channel::QMinus(j), 1.0));
            for i in (0..n).filter(|&i| i != j) {
                let r = ratio(params, i, j)?;
                u.push((Channel::QMinus(i), r));
                v.push((Channel::PPlus(i), 1.0));
                v.push((Channel::PPlus(j), -r));
            }
        }
    }
    let tag = match (kind.uses_j(), kind.uses_k()) {
        (true, true) => format!("{kind}(j={},k={})", idx.j, idx.k),
        (true, false) => format!("{kind}(j={})", idx.j),
        (false, true) => format!("{kind}(k={})", idx.k),
        (false, false) => kind.to_string(),
    };
    let u = Witness::new(format!("u[{tag}]"), u)?;
    let v = Witness::new(format!("v[{tag}]"), v)?;
    let bound = separability_bound(&u, &v, n, &party_a(kind, n, idx))?;
    Ok(VlfCase {
        kind,
        indices: idx,
        x,
        u,
        v,
        bound,
    })
}

/// Zero-frequency variance sum of the case and its violation.
pub fn evaluate(case: &VlfCase, params: &OpoParams, ss: &SteadyState) -> Result<VlfResult> {
    let variance_u = witness_variance_dc(&case.u, params, ss)?;
    let variance_v = witness_variance_dc(&case.v, params, ss)?;
    let s = variance_u + variance_v;
    Ok(VlfResult {
        kind: case.kind,
        indices: case.indices,
        s,
        variance_u,
        variance_v,
        bound: case.bound,
        violation: s - case.bound,
        x: case.x,
        x_opt: None,
        converged: true,
        boundary_pinned: false,
        multimodal: false,
    })
}

fn evaluate_at(
    kind: VlfKind,
    params: &OpoParams,
    ss: &SteadyState,
    idx: VlfIndices,
    x: f64,
) -> Result<VlfResult> {
    evaluate(&build_case(kind, params, ss, idx, Some(x))?, params, ss)
}

/// Minimises `S(x)` over [`X_RANGE`]: a logarithmic pre-scan picks the
/// bracket, then golden-section search on `ln x` refines it to [`X_TOL`].
pub fn optimize_x(
    kind: VlfKind,
    params: &OpoParams,
    ss: &SteadyState,
    idx: VlfIndices,
) -> Result<VlfResult> {
    if !kind.has_x() {
        return Err(Error::InvalidParams(format!(
            "{kind} has no free weight to optimise"
        )));
    }
    let (lo, hi) = (X_RANGE.0.ln(), X_RANGE.1.ln());
    let step = (hi - lo) / (X_PRESCAN - 1) as f64;
    let grid: Vec<f64> = (0..X_PRESCAN).map(|i| lo + step * i as f64).collect();
    let values = grid
        .iter()
        .map(|&t| evaluate_at(kind, params, ss, idx, t.exp()).map(|r| r.s))
        .collect::<Result<Vec<f64>>>()?;

    let best = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    let Some(best) = best else {
        let mut r = evaluate_at(kind, params, ss, idx, 1.0)?;
        r.x = None;
        r.converged = false;
        return Ok(r);
    };
    let local_minima = (0..X_PRESCAN)
        .filter(|&i| {
            let left = i == 0 || values[i] < values[i - 1];
            let right = i + 1 == X_PRESCAN || values[i] < values[i + 1];
            values[i].is_finite() && left && right
        })
        .count();

    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(X_PRESCAN - 1)];
    let min = golden::minimize(
        |t| evaluate_at(kind, params, ss, idx, t.exp()).map(|r| r.s),
        a,
        b,
        X_TOL,
        500,
    )?;
    let t_opt = if min.value <= values[best] {
        min.x
    } else {
        grid[best]
    };
    let x_opt = t_opt.exp();
    let mut result = evaluate_at(kind, params, ss, idx, x_opt)?;
    result.x_opt = Some(x_opt);
    result.converged = min.converged && result.s.is_finite();
    result.boundary_pinned = (t_opt - lo).abs() <= 2.0 * X_TOL || (hi - t_opt).abs() <= 2.0 * X_TOL;
    result.multimodal = local_minima > 1;
    Ok(result)
}

/// Optimised result for kinds with a free weight, plain evaluation otherwise.
pub fn best_result(
    kind: VlfKind,
    params: &OpoParams,
    ss: &SteadyState,
    idx: VlfIndices,
) -> Result<VlfResult> {
    if kind.has_x() {
        optimize_x(kind, params, ss, idx)
    } else {
        evaluate(&build_case(kind, params, ss, idx, None)?, params, ss)
    }
}

/// Optimised violation at one `(sigma, n)` with equal amplitudes and the rates of `template`.
pub fn violation_at(
    kind: VlfKind,
    template: &OpoParams,
    sigma: f64,
    n: usize,
    idx: VlfIndices,
) -> Result<VlfResult> {
    let params = template.with_pairs(n)?.with_sigma(sigma)?;
    let ss = steady_state(&params)?;
    best_result(kind, &params, &ss, idx)
}

/// Smallest `sigma` with a negative optimised violation.
///
/// `sigmas` is scanned in ascending order; the first sign change is refined by
/// bisection to `tol`. Returns `None` if no grid point violates.
pub fn min_violating_sigma(
    kind: VlfKind,
    template: &OpoParams,
    n: usize,
    idx: VlfIndices,
    sigmas: &[f64],
    tol: f64,
) -> Result<Option<f64>> {
    let mut prev: Option<f64> = None;
    for &s in sigmas {
        if violation_at(kind, template, s, n, idx)?.is_violated() {
            let Some(mut lo) = prev else {
                return Ok(Some(s));
            };
            let mut hi = s;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if violation_at(kind, template, mid, n, idx)?.is_violated() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(hi));
        }
        prev = Some(s);
    }
    Ok(None)
}

/// One point of the two-pair-versus-comb squeezing comparison: `n V(P+1)` and
/// `V(v)` of the S1 phase witness `sum_i P+i - x Pp` with `x = sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSqueezingPoint {
    pub sigma: f64,
    pub n_v_pplus: f64,
    pub v_phase: f64,
}

pub fn phase_squeezing_point(
    template: &OpoParams,
    n: usize,
    sigma: f64,
) -> Result<PhaseSqueezingPoint> {
    let params = template.with_pairs(n)?.with_sigma(sigma)?;
    let ss = steady_state(&params)?;
    let case = build_case(
        VlfKind::S1,
        &params,
        &ss,
        VlfIndices::default(),
        Some(sigma),
    )?;
    let pplus = witness_variance_dc(&Witness::single(Channel::PPlus(0)), &params, &ss)?;
    Ok(PhaseSqueezingPoint {
        sigma,
        n_v_pplus: n as f64 * pplus,
        v_phase: witness_variance_dc(&case.v, &params, &ss)?,
    })
}

/// Minimum of `V(v)` over `sigma`: grid search on `sigmas`, then golden-section
/// refinement between the neighbours of the best grid point.
pub fn phase_squeezing_minimum(
    template: &OpoParams,
    n: usize,
    sigmas: &[f64],
) -> Result<PhaseSqueezingPoint> {
    if sigmas.len() < 3 {
        return Err(Error::InvalidParams(
            "need at least three sigma values".into(),
        ));
    }
    let curve = sigmas
        .iter()
        .map(|&s| phase_squeezing_point(template, n, s))
        .collect::<Result<Vec<_>>>()?;
    let best = (0..curve.len())
        .min_by(|&a, &b| curve[a].v_phase.total_cmp(&curve[b].v_phase))
        .unwrap();
    let a = sigmas[best.saturating_sub(1)];
    let b = sigmas[(best + 1).min(sigmas.len() - 1)];
    let min = golden::minimize(
        |s| phase_squeezing_point(template, n, s).map(|p| p.v_phase),
        a,
        b,
        1e-9,
        200,
    )?;
    if min.value < curve[best].v_phase {
        phase_squeezing_point(template, n, min.x)
    } else {
        Ok(curve[best])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub sigma: f64,
    pub n: usize,
    pub s: f64,
    pub bound: f64,
    pub violation: f64,
    pub x_opt: Option<f64>,
    pub converged: bool,
    /// Why the cell could not be evaluated; `None` for valid cells.
    pub error: Option<String>,
}

impl SurfaceCell {
    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }
}

/// Violation and optimal weight over a `(sigma, n)` grid, `n`-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub kind: VlfKind,
    pub indices: VlfIndices,
    pub sigma: Vec<f64>,
    pub n: Vec<usize>,
    pub cells: Vec<SurfaceCell>,
}

impl SurfaceGrid {
    pub fn cell(&self, sigma_index: usize, n_index: usize) -> &SurfaceCell {
        &self.cells[n_index * self.sigma.len() + sigma_index]
    }

    /// Cells of one `n` row in `sigma` order.
    pub fn row(&self, n_index: usize) -> &[SurfaceCell] {
        let m = self.sigma.len();
        &self.cells[n_index * m..(n_index + 1) * m]
    }
}

/// Evaluates every grid cell in parallel. Failed cells carry their error and
/// NaN values rather than aborting the scan.
pub fn scan_surface(
    kind: VlfKind,
    sigmas: &[f64],
    ns: &[usize],
    template: &OpoParams,
    idx: VlfIndices,
) -> SurfaceGrid {
    let coords: Vec<(usize, f64)> = ns
        .iter()
        .flat_map(|&n| sigmas.iter().map(move |&s| (n, s)))
        .collect();
    let cells = coords
        .par_iter()
        .map(
            |&(n, sigma)| match violation_at(kind, template, sigma, n, idx) {
                Ok(r) => SurfaceCell {
                    sigma,
                    n,
                    s: r.s,
                    bound: r.bound,
                    violation: r.violation,
                    x_opt: r.x_opt,
                    converged: r.converged,
                    error: None,
                },
                Err(e) => {
                    log::warn!("{kind} cell sigma = {sigma}, n = {n} skipped: {e}");
                    SurfaceCell {
                        sigma,
                        n,
                        s: f64::NAN,
                        bound: f64::NAN,
                        violation: f64::NAN,
                        x_opt: None,
                        converged: false,
                        error: Some(e.to_string()),
                    }
                }
            },
        )
        .collect();
    SurfaceGrid {
        kind,
        indices: idx,
        sigma: sigmas.to_vec(),
        n: ns.to_vec(),
        cells,
    }
}
