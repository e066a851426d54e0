use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Currency amount in integer minor units (cents).
///
/// Simulated holding and lost-sales values are accumulated in cents so that
/// independent implementations can be compared for exact equality.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cents(pub i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid currency amount {0:?}")]
pub struct ParseCentsError(pub String);

impl Cents {
    pub const ZERO: Cents = Cents(0);

    /// Rounds a currency-unit amount to the nearest cent, halves away from zero.
    pub fn from_units(units: f64) -> Cents {
        Cents((units * 100.0).round() as i64)
    }

    pub fn as_units(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn times(self, qty: u64) -> Cents {
        Cents(self.0 * qty as i64)
    }
}

impl std::ops::Add for Cents {
    type Output = Cents;
    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Cents {
    fn add_assign(&mut self, rhs: Cents) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Cents {
    fn sum<I: Iterator<Item = Cents>>(iter: I) -> Cents {
        iter.fold(Cents::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Cents {
    type Err = ParseCentsError;

    /// Accepts `123`, `123.4` and `123.45`; more than two fractional digits,
    /// exponents and thousands separators are rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseCentsError(s.to_string());
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (whole, frac) = match body.split_once('.') {
            Some((w, f)) => (w, f),
            None => (body, ""),
        };
        if whole.is_empty() || frac.len() > 2 {
            return Err(err());
        }
        if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        if body.contains('.') && frac.is_empty() {
            return Err(err());
        }
        let whole: i64 = whole.parse().map_err(|_| err())?;
        let frac_cents: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().map_err(|_| err())? * 10,
            _ => frac.parse().map_err(|_| err())?,
        };
        let value = whole
            .checked_mul(100)
            .and_then(|w| w.checked_add(frac_cents))
            .ok_or_else(err)?;
        Ok(Cents(if neg { -value } else { value }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_formats() {
        assert_eq!("12.50".parse::<Cents>().unwrap(), Cents(1250));
        assert_eq!("12.5".parse::<Cents>().unwrap(), Cents(1250));
        assert_eq!("7".parse::<Cents>().unwrap(), Cents(700));
        assert_eq!("-0.05".parse::<Cents>().unwrap(), Cents(-5));
        assert_eq!(Cents(1250).to_string(), "12.50");
        assert_eq!(Cents(-5).to_string(), "-0.05");
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", ".5", "1.", "1.234", "1,000", "1e3", "abc", "--1", "99999999999999999999"] {
            assert!(bad.parse::<Cents>().is_err(), "{bad}");
        }
    }

    proptest::proptest! {
        #[test]
        fn display_round_trips(v in -1_000_000_000i64..1_000_000_000) {
            let c = Cents(v);
            proptest::prop_assert_eq!(c.to_string().parse::<Cents>().unwrap(), c);
        }
    }
}
