//! Primitive domain types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of wei in one ether.
pub const WEI_PER_ETHER: u128 = 1_000_000_000_000_000_000;
const ETHER_DECIMALS: usize = 18;

/// A 20-byte account identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|b| *b == 0)
    }

    /// Lowercase `0x`-prefixed hex form.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(42);
        s.push_str("0x");
        for b in self.0 {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad address {0:?}: expected 0x followed by 40 hex characters")]
pub struct BadAddress(pub String);

impl FromStr for Address {
    type Err = BadAddress;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let hex = s
            .strip_prefix("0x")
            .or_else(|| s.strip_prefix("0X"))
            .ok_or_else(|| BadAddress(s.to_string()))?;
        if hex.len() != 40 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(BadAddress(s.to_string()));
        }
        let mut out = [0u8; 20];
        for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
            let pair = std::str::from_utf8(chunk).map_err(|_| BadAddress(s.to_string()))?;
            out[i] = u8::from_str_radix(pair, 16).map_err(|_| BadAddress(s.to_string()))?;
        }
        Ok(Address(out))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dense index of an address inside one dataset's address table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AddressId(pub u32);

impl AddressId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AddressId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Identifier of one NFT within a collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u128);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An exact ether amount stored as integer wei.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Wei(pub u128);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("negative value {0:?}")]
    Negative(String),
    #[error("malformed decimal {0:?}")]
    Malformed(String),
    #[error("value {0:?} has more than 18 fractional digits")]
    TooPrecise(String),
    #[error("value {0:?} overflows")]
    Overflow(String),
}

impl Wei {
    pub const ZERO: Wei = Wei(0);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Parses a decimal ether amount such as `"1.5"` or `"0.000000000000000001"`.
    pub fn from_ether_str(raw: &str) -> Result<Wei, ValueError> {
        let s = raw.trim();
        if let Some(rest) = s.strip_prefix('-') {
            // "-0" and "-0.0" are still zero.
            if !rest.is_empty() && rest.bytes().all(|b| b == b'0' || b == b'.') {
                return Wei::from_ether_str(rest);
            }
            return Err(ValueError::Negative(raw.to_string()));
        }
        let s = s.strip_prefix('+').unwrap_or(s);
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(ValueError::Malformed(raw.to_string()));
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(ValueError::Malformed(raw.to_string()));
        }
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.len() > ETHER_DECIMALS {
            return Err(ValueError::TooPrecise(raw.to_string()));
        }
        let overflow = || ValueError::Overflow(raw.to_string());
        let int_val: u128 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| overflow())?
        };
        let mut frac_val: u128 = 0;
        for b in frac_trimmed.bytes() {
            frac_val = frac_val * 10 + u128::from(b - b'0');
        }
        frac_val *= 10u128.pow((ETHER_DECIMALS - frac_trimmed.len()) as u32);
        int_val
            .checked_mul(WEI_PER_ETHER)
            .and_then(|v| v.checked_add(frac_val))
            .map(Wei)
            .ok_or_else(overflow)
    }

    /// Canonical ether decimal: no trailing zeros, `"0"` for zero.
    pub fn to_ether_string(self) -> String {
        let int = self.0 / WEI_PER_ETHER;
        let frac = self.0 % WEI_PER_ETHER;
        if frac == 0 {
            return int.to_string();
        }
        let frac = format!("{frac:018}");
        format!("{int}.{}", frac.trim_end_matches('0'))
    }

    /// Lossy conversion for display and normalisation only.
    pub fn as_ether_f64(self) -> f64 {
        self.0 as f64 / WEI_PER_ETHER as f64
    }
}

impl fmt::Display for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_ether_string())
    }
}

impl Serialize for Wei {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_ether_string())
    }
}

impl<'de> Deserialize<'de> for Wei {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Wei::from_ether_str(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Sale,
    Transfer,
}

impl TxStatus {
    /// A transaction carrying ether is a sale; a zero-value one is a transfer.
    pub fn from_value(value: Wei) -> TxStatus {
        if value.is_zero() {
            TxStatus::Transfer
        } else {
            TxStatus::Sale
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Mint,
    Normal,
}

impl Origin {
    pub fn from_sender(from: &Address) -> Origin {
        if from.is_zero() {
            Origin::Mint
        } else {
            Origin::Normal
        }
    }
}

/// One NFT sale or transfer event as read from an export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransactionRecord {
    pub timestamp: u64,
    pub token_id: TokenId,
    pub value: Wei,
    pub status: TxStatus,
    pub from_address: Address,
    pub to_address: Address,
    pub origin: Origin,
}

impl TransactionRecord {
    /// Builds a record, deriving status and origin from value and sender.
    pub fn new(
        timestamp: u64,
        token_id: TokenId,
        value: Wei,
        from_address: Address,
        to_address: Address,
    ) -> Self {
        TransactionRecord {
            timestamp,
            token_id,
            value,
            status: TxStatus::from_value(value),
            from_address,
            to_address,
            origin: Origin::from_sender(&from_address),
        }
    }
}

/// Closed interval of Unix seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("time range start {start} is after end {end}")]
pub struct InvertedRange {
    pub start: u64,
    pub end: u64,
}

impl TimeRange {
    pub fn new(start: u64, end: u64) -> Result<Self, InvertedRange> {
        if start > end {
            return Err(InvertedRange { start, end });
        }
        Ok(TimeRange { start, end })
    }

    pub fn contains(&self, t: u64) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn span(&self) -> u64 {
        self.end - self.start
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wei_parses_and_formats() {
        assert_eq!(Wei::from_ether_str("1.5").unwrap(), Wei(1_500_000_000_000_000_000));
        assert_eq!(Wei::from_ether_str("0").unwrap(), Wei::ZERO);
        assert_eq!(Wei::from_ether_str("0.000").unwrap(), Wei::ZERO);
        assert_eq!(Wei::from_ether_str("-0").unwrap(), Wei::ZERO);
        assert_eq!(Wei::from_ether_str(".25").unwrap().to_ether_string(), "0.25");
        assert_eq!(Wei::from_ether_str("0.000000000000000001").unwrap(), Wei(1));
        assert_eq!(Wei(1).to_ether_string(), "0.000000000000000001");
        assert_eq!(Wei::from_ether_str("12.3400").unwrap().to_ether_string(), "12.34");
        assert_eq!(Wei(3 * WEI_PER_ETHER).to_ether_string(), "3");
    }

    #[test]
    fn wei_rejects_bad_input() {
        assert!(matches!(Wei::from_ether_str("-1.5"), Err(ValueError::Negative(_))));
        assert!(matches!(Wei::from_ether_str("abc"), Err(ValueError::Malformed(_))));
        assert!(matches!(Wei::from_ether_str("1.2.3"), Err(ValueError::Malformed(_))));
        assert!(matches!(Wei::from_ether_str(""), Err(ValueError::Malformed(_))));
        assert!(matches!(Wei::from_ether_str("."), Err(ValueError::Malformed(_))));
        assert!(matches!(
            Wei::from_ether_str("0.0000000000000000001"),
            Err(ValueError::TooPrecise(_))
        ));
    }

    #[test]
    fn address_round_trip() {
        let raw = "0x00000000000000000000000000000000000000aB";
        let a: Address = raw.parse().unwrap();
        assert_eq!(a.to_hex(), raw.to_lowercase());
        assert!(!a.is_zero());
        assert!(Address::ZERO.is_zero());
        assert!("0x123".parse::<Address>().is_err());
        assert!("00000000000000000000000000000000000000aa00".parse::<Address>().is_err());
        assert!("0xzz000000000000000000000000000000000000aa".parse::<Address>().is_err());
    }

    #[test]
    fn status_and_origin_derivation() {
        let a: Address = "0x1111111111111111111111111111111111111111".parse().unwrap();
        let r = TransactionRecord::new(1, TokenId(4171), Wei::ZERO, a, Address::ZERO);
        assert_eq!(r.status, TxStatus::Transfer);
        assert_eq!(r.origin, Origin::Normal);
        let r = TransactionRecord::new(1, TokenId(4171), Wei(1), Address::ZERO, a);
        assert_eq!(r.status, TxStatus::Sale);
        assert_eq!(r.origin, Origin::Mint);
    }

    #[test]
    fn time_range_validation() {
        assert!(TimeRange::new(5, 4).is_err());
        let r = TimeRange::new(4, 4).unwrap();
        assert!(r.contains(4));
        assert_eq!(r.span(), 0);
    }
}
