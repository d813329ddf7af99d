//! Payload file typing by magic number.

use crate::ir::FileType;

const ELF: &[u8] = &[0x7f, b'E', b'L', b'F'];
const DEX: &[u8] = b"dex\n";
const ZIP: &[u8] = b"PK\x03\x04";
const PNG: &[u8] = &[0x89, b'P', b'N', b'G'];

/// Marker that separates an Android package from a plain zip/jar. Zip
/// entry names are stored uncompressed, so a byte scan is enough.
const APK_MARKER: &[u8] = b"AndroidManifest.xml";

/// Classify raw payload bytes. Total: anything unrecognized is
/// `Unknown`, never an error.
pub fn detect_file_type(bytes: &[u8]) -> FileType {
    if bytes.starts_with(ELF) {
        FileType::Elf
    } else if bytes.starts_with(DEX) {
        FileType::Dex
    } else if bytes.starts_with(ZIP) {
        if contains(bytes, APK_MARKER) {
            FileType::Apk
        } else {
            FileType::ZipJar
        }
    } else if bytes.starts_with(PNG) {
        FileType::Png
    } else {
        FileType::Unknown
    }
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifies_magics() {
        assert_eq!(detect_file_type(b"\x7fELF\x02\x01\x01"), FileType::Elf);
        assert_eq!(detect_file_type(b"dex\n035\x00rest"), FileType::Dex);
        assert_eq!(detect_file_type(b"\x89PNG\r\n\x1a\n"), FileType::Png);
        assert_eq!(detect_file_type(b"PK\x03\x04junk"), FileType::ZipJar);
        assert_eq!(
            detect_file_type(b"PK\x03\x04..AndroidManifest.xml.."),
            FileType::Apk
        );
    }

    #[test]
    fn unknown_for_everything_else() {
        assert_eq!(detect_file_type(b""), FileType::Unknown);
        assert_eq!(detect_file_type(b"dex"), FileType::Unknown);
        assert_eq!(detect_file_type(b"DEX\n035"), FileType::Unknown);
        assert_eq!(detect_file_type(b"\x00\x01\x02\x03"), FileType::Unknown);
    }

    #[test]
    fn dex_magic_is_case_sensitive_and_needs_newline() {
        assert_eq!(detect_file_type(b"dEX\n035"), FileType::Unknown);
        assert_eq!(detect_file_type(b"dex035"), FileType::Unknown);
    }
}
