//! Exact score arithmetic.
//!
//! Marks, scale bounds and control scores are carried as exact rationals so
//! that grid alignment checks and medians never suffer from float rounding.
//! Conversion to `f64` happens only at the regression boundary.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

/// A score-unit quantity (mark, scale bound, control score or judging error).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Score(Rational64);

/// Parse failure for a decimal score literal.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreParseError {
    #[error("empty score literal")]
    Empty,
    #[error("invalid decimal literal `{0}`")]
    Invalid(String),
    #[error("score literal `{0}` out of range")]
    OutOfRange(String),
}

impl Score {
    pub const ZERO: Score = Score(Rational64::new_raw(0, 1));

    pub fn new(numer: i64, denom: i64) -> Self {
        Score(Rational64::new(numer, denom))
    }

    pub fn from_int(v: i64) -> Self {
        Score(Rational64::from_integer(v))
    }

    /// Parse a decimal literal such as `8.5`, `-0.25` or `10`.
    ///
    /// Scientific notation and fraction syntax are rejected: the ingestion
    /// schema requires plain decimal literals.
    pub fn parse_decimal(s: &str) -> Result<Self, ScoreParseError> {
        let trimmed = s.trim();
        if trimmed.is_empty() {
            return Err(ScoreParseError::Empty);
        }
        let (sign, rest) = match trimmed.as_bytes()[0] {
            b'-' => (-1i64, &trimmed[1..]),
            b'+' => (1, &trimmed[1..]),
            _ => (1, trimmed),
        };
        let invalid = || ScoreParseError::Invalid(s.to_string());
        let out_of_range = || ScoreParseError::OutOfRange(s.to_string());
        let (int_part, frac_part) = match rest.split_once('.') {
            Some((i, f)) => (i, f),
            None => (rest, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(invalid());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(invalid());
        }
        // i64 holds 18 full decimal digits; keeping the total below that
        // bound means numerator arithmetic cannot overflow during parsing.
        if int_part.len() + frac_part.len() > 18 {
            return Err(out_of_range());
        }
        let digits: i64 = format!("{int_part}{frac_part}")
            .parse()
            .map_err(|_| out_of_range())?;
        let denom = 10i64
            .checked_pow(frac_part.len() as u32)
            .ok_or_else(out_of_range)?;
        Ok(Score(Rational64::new(sign * digits, denom)))
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().expect("rational to f64 conversion")
    }

    /// Nearest `Score` whose decimal expansion equals the shortest
    /// round-trip representation of `v`.
    ///
    /// This maps e.g. the float `0.1` to the exact rational 1/10, which is
    /// what a human writing `0.1` meant.
    pub fn from_f64_lossy(v: f64) -> Result<Self, ScoreParseError> {
        if !v.is_finite() {
            return Err(ScoreParseError::Invalid(v.to_string()));
        }
        let repr = format!("{v}");
        if repr.contains(['e', 'E']) {
            return Err(ScoreParseError::OutOfRange(v.to_string()));
        }
        Score::parse_decimal(&repr)
    }

    pub fn abs(self) -> Self {
        Score(self.0.abs())
    }

    pub fn is_zero(self) -> bool {
        self.0.is_zero()
    }

    pub fn midpoint(a: Score, b: Score) -> Score {
        Score((a.0 + b.0) / 2)
    }

    /// True when `self` is an integer multiple of `step`, to within `tol`
    /// score units. `step` must be positive.
    pub fn is_multiple_of(self, step: Score, tol: f64) -> bool {
        debug_assert!(step.0 > Rational64::zero());
        let ratio = self.0 / step.0;
        let k = ratio.round();
        let offset = (ratio - k) * step.0;
        offset.abs().to_f64().map(|d| d <= tol).unwrap_or(false)
    }

    /// Number of whole `step`s in `self`, when exactly aligned.
    pub fn div_exact(self, step: Score) -> Option<i64> {
        let ratio = self.0 / step.0;
        ratio.is_integer().then(|| ratio.to_integer())
    }

    pub(crate) fn inner(self) -> Rational64 {
        self.0
    }
}

impl Add for Score {
    type Output = Score;
    fn add(self, rhs: Score) -> Score {
        Score(self.0 + rhs.0)
    }
}

impl Sub for Score {
    type Output = Score;
    fn sub(self, rhs: Score) -> Score {
        Score(self.0 - rhs.0)
    }
}

impl Mul for Score {
    type Output = Score;
    fn mul(self, rhs: Score) -> Score {
        Score(self.0 * rhs.0)
    }
}

impl Mul<i64> for Score {
    type Output = Score;
    fn mul(self, rhs: i64) -> Score {
        Score(self.0 * rhs)
    }
}

impl Div for Score {
    type Output = Score;
    fn div(self, rhs: Score) -> Score {
        Score(self.0 / rhs.0)
    }
}

impl Neg for Score {
    type Output = Score;
    fn neg(self) -> Score {
        Score(-self.0)
    }
}

impl FromStr for Score {
    type Err = ScoreParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Score::parse_decimal(s)
    }
}

impl fmt::Display for Score {
    /// Exact decimal expansion when the reduced denominator is of the form
    /// 2^a·5^b (always the case for grid-aligned values and their midpoints);
    /// `n/d` fraction syntax otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let numer = *self.0.numer();
        let denom = *self.0.denom();
        let mut twos = 0u32;
        let mut fives = 0u32;
        let mut d = denom;
        while d % 2 == 0 {
            d /= 2;
            twos += 1;
        }
        while d % 5 == 0 {
            d /= 5;
            fives += 1;
        }
        let places = twos.max(fives);
        // numer / denom == scaled / 10^places
        let scaled = if d == 1 {
            2i128
                .checked_pow(places - twos)
                .zip(5i128.checked_pow(places - fives))
                .and_then(|(a, b)| a.checked_mul(b))
                .and_then(|scale| (numer as i128).checked_mul(scale))
        } else {
            None
        };
        let Some(scaled) = scaled else {
            return write!(f, "{numer}/{denom}");
        };
        let sign = if scaled < 0 { "-" } else { "" };
        let mag = scaled.unsigned_abs();
        let Some(pow10) = 10u128.checked_pow(places) else {
            return write!(f, "{numer}/{denom}");
        };
        let int = mag / pow10;
        if places == 0 {
            write!(f, "{sign}{int}")
        } else {
            let frac = mag % pow10;
            write!(f, "{sign}{int}.{frac:0width$}", width = places as usize)
        }
    }
}
