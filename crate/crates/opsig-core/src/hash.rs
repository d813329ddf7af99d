//! Digest algorithms used for signature generation.
//!
//! Every digest in the system is rendered as exactly 32 lowercase hex
//! characters so that signatures of different algorithms stay
//! interchangeable at the storage layer. Sha256 output is truncated to
//! its first 16 bytes for that reason.

use md5::{Digest as _, Md5};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::error::Error;

pub const DIGEST_HEX_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashAlg {
    #[default]
    Md5,
    Sha256,
}

impl HashAlg {
    pub fn name(self) -> &'static str {
        match self {
            HashAlg::Md5 => "md5",
            HashAlg::Sha256 => "sha256",
        }
    }

    /// Digest `data` and render as 32 lowercase hex characters.
    pub fn hex32(self, data: &[u8]) -> String {
        match self {
            HashAlg::Md5 => {
                let out = Md5::digest(data);
                hex_lower(&out)
            }
            HashAlg::Sha256 => {
                let out = Sha256::digest(data);
                hex_lower(&out[..16])
            }
        }
    }
}

impl std::str::FromStr for HashAlg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "md5" => Ok(HashAlg::Md5),
            "sha256" => Ok(HashAlg::Sha256),
            other => Err(Error::UnknownHashAlg(other.to_string())),
        }
    }
}

impl std::fmt::Display for HashAlg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn hex_lower(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        use std::fmt::Write;
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// True if `s` looks like one of our digests: 32 lowercase hex chars.
pub fn is_hex32(s: &str) -> bool {
    s.len() == DIGEST_HEX_LEN
        && s.bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn md5_known_vectors() {
        assert_eq!(
            HashAlg::Md5.hex32(b""),
            "d41d8cd98f00b204e9800998ecf8427e"
        );
        assert_eq!(
            HashAlg::Md5.hex32(b"39d53f3e9130291"),
            "ec5602d06c98156bd3adde96b1171b44"
        );
    }

    #[test]
    fn sha256_truncates_to_32_hex() {
        let d = HashAlg::Sha256.hex32(b"39d53f3e9130291");
        assert_eq!(d.len(), 32);
        assert_eq!(d, "511fc10d4e2e6837ea07bbd163a85fc4");
    }

    #[test]
    fn algorithms_disagree() {
        assert_ne!(HashAlg::Md5.hex32(b"x"), HashAlg::Sha256.hex32(b"x"));
    }

    #[test]
    fn hex32_shape() {
        for alg in [HashAlg::Md5, HashAlg::Sha256] {
            let d = alg.hex32(b"anything");
            assert!(is_hex32(&d), "{d}");
        }
    }

    #[test]
    fn parse_and_render() {
        assert_eq!("md5".parse::<HashAlg>().unwrap(), HashAlg::Md5);
        assert_eq!("sha256".parse::<HashAlg>().unwrap(), HashAlg::Sha256);
        assert!("sha1".parse::<HashAlg>().is_err());
        assert_eq!(HashAlg::Md5.to_string(), "md5");
    }

    #[test]
    fn is_hex32_rejects_uppercase_and_short() {
        assert!(is_hex32("d41d8cd98f00b204e9800998ecf8427e"));
        assert!(!is_hex32("D41D8CD98F00B204E9800998ECF8427E"));
        assert!(!is_hex32("d41d8cd9"));
        assert!(!is_hex32("g41d8cd98f00b204e9800998ecf8427e"));
    }
}
