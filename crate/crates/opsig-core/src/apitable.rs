//! API call table: the map from full-path Android API methods to the
//! short hex identifiers that opcode signatures are built from.
//!
//! Table documents are line oriented: `<method>\t<hex-id>`, one entry
//! per line, `#` comments and blank lines allowed. Identifiers are five
//! hex digits, and both directions of the map must be unique so that an
//! id string can be decoded back into the API sequence that produced it.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::hash::HashAlg;

/// Width of a rendered API id in hex digits.
pub const ID_HEX_WIDTH: usize = 5;

/// Identifier assigned to one API method. Always renders as exactly
/// five lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ApiId(u32);

impl ApiId {
    /// Exclusive upper bound: 16^5.
    pub const LIMIT: u32 = 1 << 20;

    pub fn new(value: u32) -> Option<ApiId> {
        (value < Self::LIMIT).then_some(ApiId(value))
    }

    pub fn value(self) -> u32 {
        self.0
    }

    pub fn render(self) -> String {
        format!("{:05x}", self.0)
    }

    /// Parse five hex digits (either case) into an id.
    pub fn parse_hex(s: &str) -> Option<ApiId> {
        if s.is_empty() || s.len() > ID_HEX_WIDTH {
            return None;
        }
        u32::from_str_radix(s, 16).ok().and_then(ApiId::new)
    }
}

impl std::fmt::Display for ApiId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:05x}", self.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ApiTable {
    by_method: HashMap<String, ApiId>,
    by_id: HashMap<ApiId, String>,
}

impl ApiTable {
    /// Parse a table document. Duplicate methods, duplicate ids, and
    /// malformed lines are load errors naming the offending line.
    pub fn parse(document: &str) -> Result<ApiTable> {
        let mut table = ApiTable::default();
        for (idx, raw) in document.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (method, id_text) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(lineno, "expected `<method>\\t<hex-id>`"))?;
            let method = method.trim();
            let id_text = id_text.trim();
            if method.is_empty() {
                return Err(Error::parse(lineno, "empty method name"));
            }
            let id = ApiId::parse_hex(id_text).ok_or_else(|| {
                Error::parse(
                    lineno,
                    format!("`{id_text}` is not a hex id below {:x}", ApiId::LIMIT),
                )
            })?;
            if table.by_method.contains_key(method) {
                return Err(Error::parse(lineno, format!("duplicate method `{method}`")));
            }
            if let Some(prev) = table.by_id.get(&id) {
                return Err(Error::parse(
                    lineno,
                    format!("id {id} already assigned to `{prev}`"),
                ));
            }
            table.by_method.insert(method.to_string(), id);
            table.by_id.insert(id, method.to_string());
        }
        Ok(table)
    }

    pub fn load(path: &std::path::Path) -> Result<ApiTable> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Exact-match lookup; anything not present is not an API call.
    pub fn lookup(&self, method: &str) -> Option<ApiId> {
        self.by_method.get(method).copied()
    }

    pub fn method_for(&self, id: ApiId) -> Option<&str> {
        self.by_id.get(&id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_method.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_method.is_empty()
    }

    /// All method names in sorted order.
    pub fn methods(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.by_method.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }

    /// The table re-rendered in sorted order with lowercase ids. Two
    /// tables with the same entries produce identical text no matter how
    /// the source files were formatted.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for method in self.methods() {
            out.push_str(method);
            out.push('\t');
            out.push_str(&self.by_method[method].render());
            out.push('\n');
        }
        out
    }

    /// Fingerprint of the table plus the active exclusion filter.
    /// Bundles signed under different fingerprints never compare.
    pub fn fingerprint(&self, alg: HashAlg, filter: Option<&ApiFilter>) -> String {
        let mut data = self.canonical_text().into_bytes();
        data.push(0);
        if let Some(f) = filter {
            data.extend_from_slice(f.canonical_text().as_bytes());
        }
        alg.hex32(&data)
    }

    /// Decode an id string (concatenated five-digit ids) back into API
    /// method names. Fails on ragged length or unknown ids.
    pub fn decode_id_string<'a>(&'a self, id_string: &str) -> Option<Vec<&'a str>> {
        if !id_string.len().is_multiple_of(ID_HEX_WIDTH) {
            return None;
        }
        id_string
            .as_bytes()
            .chunks(ID_HEX_WIDTH)
            .map(|chunk| {
                let text = std::str::from_utf8(chunk).ok()?;
                self.method_for(ApiId::parse_hex(text)?)
            })
            .collect()
    }
}

/// Methods excluded from signature extraction, e.g. a shared advertising
/// SDK that would otherwise dominate similarity scores.
#[derive(Debug, Clone, Default)]
pub struct ApiFilter {
    methods: BTreeSet<String>,
}

impl ApiFilter {
    /// One method per line; `#` comments and blank lines allowed.
    pub fn parse(document: &str) -> ApiFilter {
        let methods = document
            .lines()
            .map(|l| l.trim_end_matches('\r').trim())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        ApiFilter { methods }
    }

    pub fn load(path: &std::path::Path) -> Result<ApiFilter> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, method: &str) -> bool {
        self.methods.contains(method)
    }

    pub fn is_empty(&self) -> bool {
        self.methods.is_empty()
    }

    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for m in &self.methods {
            out.push_str(m);
            out.push('\n');
        }
        out
    }
}

/// Map from API method to the Android permissions its invocation
/// requires. Lines are `<method>\t<PERM>[,<PERM>...]`.
#[derive(Debug, Clone, Default)]
pub struct PermissionMap {
    by_method: HashMap<String, BTreeSet<String>>,
    empty: BTreeSet<String>,
}

impl PermissionMap {
    pub fn parse(document: &str) -> Result<PermissionMap> {
        let mut map = PermissionMap::default();
        for (idx, raw) in document.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (method, perms) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(lineno, "expected `<method>\\t<PERM>[,...]`"))?;
            let method = method.trim();
            if method.is_empty() {
                return Err(Error::parse(lineno, "empty method name"));
            }
            let entry = map.by_method.entry(method.to_string()).or_default();
            let mut any = false;
            for perm in perms.split(',') {
                let perm = perm.trim();
                if perm.is_empty() {
                    return Err(Error::parse(lineno, "empty permission name"));
                }
                entry.insert(perm.to_string());
                any = true;
            }
            if !any {
                return Err(Error::parse(lineno, "no permissions listed"));
            }
        }
        Ok(map)
    }

    pub fn load(path: &std::path::Path) -> Result<PermissionMap> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Permissions for one API method; empty set if unmapped.
    pub fn perms_for(&self, method: &str) -> &BTreeSet<String> {
        self.by_method.get(method).unwrap_or(&self.empty)
    }

    pub fn len(&self) -> usize {
        self.by_method.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_method.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
android/accounts/Account;-><init>\t00001
android/content/Intent;-><init>\t30291
android/content/Intent;->toUri\t30292
android/telephony/SmsManager;->getDefault\t39D53
android/app/PendingIntent;->getBroadcast\tF3E91
";

    #[test]
    fn parses_and_looks_up() {
        let t = ApiTable::parse(SAMPLE).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(
            t.lookup("android/content/Intent;-><init>").unwrap().render(),
            "30291"
        );
        assert_eq!(
            t.lookup("android/telephony/SmsManager;->getDefault")
                .unwrap()
                .render(),
            "39d53"
        );
        assert_eq!(
            t.lookup("android/app/PendingIntent;->getBroadcast")
                .unwrap()
                .render(),
            "f3e91"
        );
        assert_eq!(
            t.lookup("android/accounts/Account;-><init>")
                .unwrap()
                .render(),
            "00001"
        );
    }

    #[test]
    fn lookup_is_case_sensitive_and_exact() {
        let t = ApiTable::parse(SAMPLE).unwrap();
        assert!(t.lookup("android/content/intent;-><init>").is_none());
        assert!(t.lookup("Intent;-><init>").is_none());
        assert!(t.lookup("android/content/Intent;-><init>(Landroid/content/Context;)V").is_none());
    }

    #[test]
    fn duplicate_method_names_line() {
        let doc = "a/B;->c\t00001\na/B;->c\t00002\n";
        let err = ApiTable::parse(doc).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_id_names_line() {
        let doc = "a/B;->c\t00001\nd/E;->f\t00001\n";
        let err = ApiTable::parse(doc).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_bad_hex_and_overflow() {
        assert!(ApiTable::parse("a/B;->c\tzzzzz\n").is_err());
        assert!(ApiTable::parse("a/B;->c\t100000\n").is_err());
        assert!(ApiTable::parse("a/B;->c 00001\n").is_err());
    }

    #[test]
    fn id_render_width() {
        assert_eq!(ApiId::new(1).unwrap().render(), "00001");
        assert_eq!(ApiId::new(0xfffff).unwrap().render(), "fffff");
        assert!(ApiId::new(0x100000).is_none());
    }

    #[test]
    fn canonical_text_is_sorted_and_stable() {
        let t1 = ApiTable::parse(SAMPLE).unwrap();
        let mut reversed: Vec<&str> = SAMPLE.lines().collect();
        reversed.reverse();
        let t2 = ApiTable::parse(&(reversed.join("\n") + "\n")).unwrap();
        assert_eq!(t1.canonical_text(), t2.canonical_text());
        assert_eq!(
            t1.fingerprint(HashAlg::Md5, None),
            t2.fingerprint(HashAlg::Md5, None)
        );
    }

    #[test]
    fn fingerprint_tracks_filter() {
        let t = ApiTable::parse(SAMPLE).unwrap();
        let f = ApiFilter::parse("android/content/Intent;->toUri\n");
        assert_ne!(
            t.fingerprint(HashAlg::Md5, None),
            t.fingerprint(HashAlg::Md5, Some(&f))
        );
        assert_eq!(
            t.fingerprint(HashAlg::Md5, Some(&f)),
            t.fingerprint(HashAlg::Md5, Some(&f))
        );
    }

    #[test]
    fn decode_id_string_round_trip() {
        let t = ApiTable::parse(SAMPLE).unwrap();
        let decoded = t.decode_id_string("39d53f3e9130291").unwrap();
        assert_eq!(
            decoded,
            vec![
                "android/telephony/SmsManager;->getDefault",
                "android/app/PendingIntent;->getBroadcast",
                "android/content/Intent;-><init>",
            ]
        );
        assert!(t.decode_id_string("39d53f3e913029").is_none());
        assert!(t.decode_id_string("fffff").is_none());
    }

    #[test]
    fn permission_map_parses() {
        let doc = "\
android/telephony/SmsManager;->sendTextMessage\tSEND_SMS
android/telephony/TelephonyManager;->getDeviceId\tREAD_PHONE_STATE
a/B;->c\tINTERNET,ACCESS_NETWORK_STATE
";
        let m = PermissionMap::parse(doc).unwrap();
        assert_eq!(
            m.perms_for("a/B;->c").iter().collect::<Vec<_>>(),
            ["ACCESS_NETWORK_STATE", "INTERNET"]
        );
        assert!(m.perms_for("unmapped/X;->y").is_empty());
    }

    #[test]
    fn permission_map_rejects_malformed() {
        let err = PermissionMap::parse("good/A;->b\tX\nbad line\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(PermissionMap::parse("a/B;->c\tX,,Y\n").is_err());
    }

    #[test]
    fn filter_parses_comments() {
        let f = ApiFilter::parse("# ads\ncom/ads/Sdk;->show\n\n");
        assert!(f.contains("com/ads/Sdk;->show"));
        assert!(!f.contains("com/ads/Sdk;->hide"));
    }
}
