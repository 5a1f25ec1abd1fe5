use std::fmt;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use super::{Channel, TransferMatrix};
use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Real linear combination of output quadrature channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub label: String,
    terms: Vec<(Channel, f64)>,
}

impl Witness {
    /// Builds a witness, merging repeated channels and dropping zero weights.
    pub fn new(
        label: impl Into<String>,
        terms: impl IntoIterator<Item = (Channel, f64)>,
    ) -> Result<Self> {
        let mut merged: Vec<(Channel, f64)> = Vec::new();
        for (ch, w) in terms {
            if !w.is_finite() {
                return Err(Error::InvalidWitness(format!(
                    "weight on {ch} is not finite"
                )));
            }
            match merged.iter_mut().find(|(c, _)| *c == ch) {
                Some(entry) => entry.1 += w,
                None => merged.push((ch, w)),
            }
        }
        merged.retain(|&(_, w)| w != 0.0);
        if merged.is_empty() {
            return Err(Error::InvalidWitness("all weights are zero".into()));
        }
        merged.sort_by_key(|&(c, _)| c);
        Ok(Witness {
            label: label.into(),
            terms: merged,
        })
    }

    pub fn single(ch: Channel) -> Self {
        Witness {
            label: ch.to_string(),
            terms: vec![(ch, 1.0)],
        }
    }

    /// Parses comma-separated `coef*channel` terms; a bare channel has weight 1
    /// and a leading `-` negates it, e.g. `"P+1,P+2,-2*Pp"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for raw in spec.split(',') {
            let term = raw.trim();
            if term.is_empty() {
                return Err(Error::InvalidWitness(format!("empty term in '{spec}'")));
            }
            let (coef, name) = match term.split_once('*') {
                Some((c, name)) => {
                    let c: f64 = c.trim().parse().map_err(|_| {
                        Error::InvalidWitness(format!("bad coefficient in '{term}'"))
                    })?;
                    (c, name.trim())
                }
                None => match term.strip_prefix('-') {
                    Some(rest) => (-1.0, rest.trim()),
                    None => (1.0, term.strip_prefix('+').unwrap_or(term).trim()),
                },
            };
            terms.push((name.parse::<Channel>()?, coef));
        }
        Witness::new(spec.trim(), terms)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn terms(&self) -> &[(Channel, f64)] {
        &self.terms
    }

    pub fn weight(&self, ch: Channel) -> f64 {
        self.terms
            .iter()
            .find(|(c, _)| *c == ch)
            .map_or(0.0, |&(_, w)| w)
    }

    /// Smallest pair count `n` for which every channel exists.
    pub fn min_pairs(&self) -> usize {
        self.terms
            .iter()
            .filter_map(|(c, _)| c.pair())
            .max()
            .map_or(1, |i| i + 1)
    }

    pub fn check_range(&self, n: usize) -> Result<()> {
        match self.terms.iter().find(|(c, _)| !c.in_range(n)) {
            Some((c, _)) => Err(Error::InvalidIndex(format!(
                "channel {c} does not exist for n = {n}"
            ))),
            None => Ok(()),
        }
    }

    /// Variance of the witness on vacuum (its shot-noise reference).
    pub fn vacuum_variance(&self) -> f64 {
        self.terms
            .iter()
            .map(|&(c, w)| w * w * c.noise_power())
            .sum()
    }

    pub fn uses_p_minus(&self) -> bool {
        self.terms
            .iter()
            .any(|(c, _)| matches!(c, Channel::PMinus(_)))
    }

    /// Compact `coef*channel` form accepted by [`Witness::parse`].
    pub fn to_spec(&self) -> String {
        self.terms
            .iter()
            .map(|(c, w)| format!("{w}*{c}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Output variance `sum_in N_in |sum_out w_out T[out, in]|^2` under vacuum inputs.
///
/// Coefficients are combined per input channel before the modulus is taken, so
/// parts that cancel between rows cancel before squaring.
pub fn witness_variance(w: &Witness, t: &TransferMatrix) -> Result<f64> {
    w.check_range(t.n)?;
    for &(c, _) in w.terms() {
        if !t.is_defined(c) {
            return Err(Error::UndefinedChannel {
                channel: c.to_string(),
                omega: t.omega,
            });
        }
    }
    let mut total = 0.0;
    for input in Channel::all(t.n) {
        let col = input.index(t.n);
        let amp: C64 = w
            .terms()
            .iter()
            .map(|&(c, wt)| t.matrix[(c.index(t.n), col)] * wt)
            .sum();
        total += input.noise_power() * amp.norm_sqr();
    }
    Ok(total)
}
