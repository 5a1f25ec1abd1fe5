//! Linearised quadrature fluctuations in the frequency domain.
//!
//! Each pair `i` is described by the sum and difference quadratures
//! `Q_{i+-} = Q_i +- Q_{-i}` and `P_{i+-} = P_i +- P_{-i}`; the pump contributes
//! `Q_p` and `P_p`. Channels are ordered `[Q+i, Q-i, P+i, P-i]` per pair followed
//! by `[Qp, Pp]`, `4n + 2` in total.
//!
//! Vacuum inputs carry variance 1 per single-mode quadrature, hence 2 on every
//! sum or difference channel and 1 on each pump channel.

mod dc;
pub(crate) mod transfer;
mod witness;

pub use dc::{witness_variance_dc, DC_LADDER, DC_REL_TOL};
pub use transfer::{transfer_closed_form, transfer_numeric, TransferMatrix};
pub use witness::{witness_variance, Witness};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    /// `Q_i + Q_-i` of pair `i` (0-based).
    QPlus(usize),
    /// `Q_i - Q_-i`.
    QMinus(usize),
    /// `P_i + P_-i`.
    PPlus(usize),
    /// `P_i - P_-i`.
    PMinus(usize),
    PumpQ,
    PumpP,
}

impl Channel {
    pub fn count(n: usize) -> usize {
        4 * n + 2
    }

    pub fn index(self, n: usize) -> usize {
        match self {
            Channel::QPlus(i) => 4 * i,
            Channel::QMinus(i) => 4 * i + 1,
            Channel::PPlus(i) => 4 * i + 2,
            Channel::PMinus(i) => 4 * i + 3,
            Channel::PumpQ => 4 * n,
            Channel::PumpP => 4 * n + 1,
        }
    }

    pub fn from_index(index: usize, n: usize) -> Option<Channel> {
        if index == 4 * n {
            return Some(Channel::PumpQ);
        }
        if index == 4 * n + 1 {
            return Some(Channel::PumpP);
        }
        if index >= 4 * n {
            return None;
        }
        let i = index / 4;
        Some(match index % 4 {
            0 => Channel::QPlus(i),
            1 => Channel::QMinus(i),
            2 => Channel::PPlus(i),
            _ => Channel::PMinus(i),
        })
    }

    /// All channels in basis order.
    pub fn all(n: usize) -> impl Iterator<Item = Channel> {
        (0..Self::count(n)).map(move |k| Channel::from_index(k, n).unwrap())
    }

    pub fn pair(self) -> Option<usize> {
        match self {
            Channel::QPlus(i) | Channel::QMinus(i) | Channel::PPlus(i) | Channel::PMinus(i) => {
                Some(i)
            }
            Channel::PumpQ | Channel::PumpP => None,
        }
    }

    pub fn is_pump(self) -> bool {
        self.pair().is_none()
    }

    pub fn in_range(self, n: usize) -> bool {
        self.pair().is_none_or(|i| i < n)
    }

    /// Input noise power under vacuum.
    pub fn noise_power(self) -> f64 {
        if self.is_pump() {
            1.0
        } else {
            2.0
        }
    }

    /// Output loss rate `k` in `out = sqrt(2k) x - in`.
    pub(crate) fn loss_rate(self, k_a: f64, k_p: f64) -> f64 {
        if self.is_pump() {
            k_p
        } else {
            k_a
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::QPlus(i) => write!(f, "Q+{}", i + 1),
            Channel::QMinus(i) => write!(f, "Q-{}", i + 1),
            Channel::PPlus(i) => write!(f, "P+{}", i + 1),
            Channel::PMinus(i) => write!(f, "P-{}", i + 1),
            Channel::PumpQ => write!(f, "Qp"),
            Channel::PumpP => write!(f, "Pp"),
        }
    }
}

impl FromStr for Channel {
    type Err = Error;

    /// Parses `Qp`, `Pp`, `Q+i`, `Q-i`, `P+i`, `P-i` with 1-based `i`.
    fn from_str(s: &str) -> Result<Channel> {
        let s = s.trim();
        match s {
            "Qp" => return Ok(Channel::PumpQ),
            "Pp" => return Ok(Channel::PumpP),
            _ => {}
        }
        let bad = || Error::InvalidWitness(format!("unknown channel '{s}'"));
        if s.len() < 3 || !s.is_ascii() {
            return Err(bad());
        }
        let (head, digits) = s.split_at(2);
        let pair: usize = digits.parse().map_err(|_| bad())?;
        if pair == 0 {
            return Err(Error::InvalidWitness(format!(
                "pair indices start at 1 in '{s}'"
            )));
        }
        let i = pair - 1;
        match head {
            "Q+" => Ok(Channel::QPlus(i)),
            "Q-" => Ok(Channel::QMinus(i)),
            "P+" => Ok(Channel::PPlus(i)),
            "P-" => Ok(Channel::PMinus(i)),
            _ => Err(bad()),
        }
    }
}

impl serde::Serialize for Channel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Channel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
