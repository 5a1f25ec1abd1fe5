//! `a:b:steps` ranges with inclusive endpoints; a `log:` prefix spaces points
//! logarithmically. Integer ranges are `a:b`.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct RealRange {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
    pub log: bool,
}

impl RealRange {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                let t = i as f64 / last;
                if i + 1 == self.steps {
                    self.end
                } else if self.log {
                    (self.start.ln() + t * (self.end.ln() - self.start.ln())).exp()
                } else {
                    self.start + t * (self.end - self.start)
                }
            })
            .collect()
    }
}

impl FromStr for RealRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (log, body) = match s.strip_prefix("log:") {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let parts: Vec<&str> = body.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(format!("expected [log:]start:end:steps, got '{s}'"));
        };
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("'{t}' is not a number"))
        };
        let (start, end) = (num(a)?, num(b)?);
        let steps: usize = n
            .trim()
            .parse()
            .map_err(|_| format!("'{n}' is not a step count"))?;
        if !start.is_finite() || !end.is_finite() {
            return Err("range endpoints must be finite".into());
        }
        if steps == 0 {
            return Err("step count must be at least 1".into());
        }
        if steps == 1 && start != end {
            return Err("a single step needs equal endpoints".into());
        }
        if log && (start <= 0.0 || end <= 0.0) {
            return Err("logarithmic ranges need positive endpoints".into());
        }
        Ok(RealRange {
            start,
            end,
            steps,
            log,
        })
    }
}

impl fmt::Display for RealRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.log {
            f.write_str("log:")?;
        }
        write!(f, "{}:{}:{}", self.start, self.end, self.steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntRange {
    pub start: usize,
    pub end: usize,
}

impl IntRange {
    pub fn values(&self) -> Vec<usize> {
        (self.start..=self.end).collect()
    }
}

impl FromStr for IntRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').unwrap_or((s, s));
        let num = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("'{t}' is not a non-negative integer"))
        };
        let (start, end) = (num(a)?, num(b)?);
        if start > end {
            return Err(format!("empty range '{s}'"));
        }
        Ok(IntRange { start, end })
    }
}

impl fmt::Display for IntRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}
