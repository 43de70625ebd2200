use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PreRelease {
    Alpha,
    Beta,
    Rc,
}

/// A Python release version: `[N!]N(.N)*[{a|b|rc}N][.postN][.devN][+local]`.
///
/// The local label is kept for display but ignored by comparisons.
#[derive(Debug, Clone)]
pub struct PyVersion {
    pub epoch: u64,
    pub release: Vec<u64>,
    pub pre: Option<(PreRelease, u64)>,
    pub post: Option<u64>,
    pub dev: Option<u64>,
    pub local: Option<String>,
}

impl PyVersion {
    pub fn is_prerelease(&self) -> bool {
        self.pre.is_some() || self.dev.is_some()
    }

    fn release_at(&self, i: usize) -> u64 {
        self.release.get(i).copied().unwrap_or(0)
    }

    // Sort key components following the installer ordering: dev-only
    // releases sort before pre-releases, which sort before the final
    // release, which sorts before post-releases.
    fn pre_key(&self) -> (i8, Option<(PreRelease, u64)>) {
        match (self.pre, self.post, self.dev) {
            (None, None, Some(_)) => (-1, None),
            (None, _, _) => (1, None),
            (Some(p), _, _) => (0, Some(p)),
        }
    }

    fn post_key(&self) -> (i8, u64) {
        match self.post {
            None => (-1, 0),
            Some(n) => (0, n),
        }
    }

    fn dev_key(&self) -> (i8, u64) {
        match self.dev {
            None => (1, 0),
            Some(n) => (0, n),
        }
    }

    fn cmp_release(&self, other: &Self) -> Ordering {
        let n = self.release.len().max(other.release.len());
        (0..n)
            .map(|i| self.release_at(i).cmp(&other.release_at(i)))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    }
}

fn parse_num(s: &str) -> Option<(u64, &str)> {
    let end = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    if end == 0 {
        return None;
    }
    Some((s[..end].parse().ok()?, &s[end..]))
}

// Optional separator then optional number (implicit 0).
fn parse_opt_num(s: &str) -> (u64, &str) {
    let t = s.strip_prefix(['.', '-', '_']).unwrap_or(s);
    match parse_num(t) {
        Some((n, rest)) => (n, rest),
        None => (0, s),
    }
}

impl FromStr for PyVersion {
    type Err = ParseError;

    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let bad = || ParseError::BadPython(input.to_string());
        let trimmed = input.trim();
        if trimmed.is_empty() {
            return Err(ParseError::Empty);
        }
        let lower = trimmed.to_ascii_lowercase();
        let (body, local) = match lower.split_once('+') {
            Some((b, l)) => {
                if l.is_empty()
                    || !l
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || ".-_".contains(c))
                {
                    return Err(bad());
                }
                (b.to_string(), Some(l.to_string()))
            }
            None => (lower.clone(), None),
        };
        let mut s = body.strip_prefix('v').unwrap_or(&body);

        let mut epoch = 0;
        if let Some((e, rest)) = s.split_once('!') {
            epoch = e.parse().map_err(|_| bad())?;
            s = rest;
        }

        let mut release = Vec::new();
        let (n, rest) = parse_num(s).ok_or_else(bad)?;
        release.push(n);
        s = rest;
        while let Some(t) = s.strip_prefix('.') {
            match parse_num(t) {
                Some((n, rest)) => {
                    release.push(n);
                    s = rest;
                }
                None => break,
            }
        }

        let mut pre = None;
        {
            let t = s.strip_prefix(['.', '-', '_']).unwrap_or(s);
            let phases: [(&str, PreRelease); 8] = [
                ("alpha", PreRelease::Alpha),
                ("beta", PreRelease::Beta),
                ("preview", PreRelease::Rc),
                ("pre", PreRelease::Rc),
                ("rc", PreRelease::Rc),
                ("a", PreRelease::Alpha),
                ("b", PreRelease::Beta),
                ("c", PreRelease::Rc),
            ];
            for (tag, phase) in phases {
                if let Some(after) = t.strip_prefix(tag) {
                    let (n, rest) = parse_opt_num(after);
                    pre = Some((phase, n));
                    s = rest;
                    break;
                }
            }
        }

        let mut post = None;
        {
            let t = s.strip_prefix(['.', '-', '_']).unwrap_or(s);
            let mut matched = false;
            for tag in ["post", "rev", "r"] {
                if let Some(after) = t.strip_prefix(tag) {
                    let (n, rest) = parse_opt_num(after);
                    post = Some(n);
                    s = rest;
                    matched = true;
                    break;
                }
            }
            if !matched {
                if let Some(after) = s.strip_prefix('-') {
                    if let Some((n, rest)) = parse_num(after) {
                        post = Some(n);
                        s = rest;
                    }
                }
            }
        }

        let mut dev = None;
        {
            let t = s.strip_prefix(['.', '-', '_']).unwrap_or(s);
            if let Some(after) = t.strip_prefix("dev") {
                let (n, rest) = parse_opt_num(after);
                dev = Some(n);
                s = rest;
            }
        }

        if !s.is_empty() {
            return Err(bad());
        }
        Ok(PyVersion {
            epoch,
            release,
            pre,
            post,
            dev,
            local,
        })
    }
}

impl fmt::Display for PyVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.epoch != 0 {
            write!(f, "{}!", self.epoch)?;
        }
        let rel: Vec<String> = self.release.iter().map(u64::to_string).collect();
        f.write_str(&rel.join("."))?;
        if let Some((phase, n)) = self.pre {
            let tag = match phase {
                PreRelease::Alpha => "a",
                PreRelease::Beta => "b",
                PreRelease::Rc => "rc",
            };
            write!(f, "{tag}{n}")?;
        }
        if let Some(n) = self.post {
            write!(f, ".post{n}")?;
        }
        if let Some(n) = self.dev {
            write!(f, ".dev{n}")?;
        }
        if let Some(l) = &self.local {
            write!(f, "+{l}")?;
        }
        Ok(())
    }
}

impl PartialEq for PyVersion {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for PyVersion {}

impl PartialOrd for PyVersion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PyVersion {
    fn cmp(&self, other: &Self) -> Ordering {
        self.epoch
            .cmp(&other.epoch)
            .then_with(|| self.cmp_release(other))
            .then_with(|| self.pre_key().cmp(&other.pre_key()))
            .then_with(|| self.post_key().cmp(&other.post_key()))
            .then_with(|| self.dev_key().cmp(&other.dev_key()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Eq,
    Ne,
    Le,
    Ge,
    Lt,
    Gt,
    Compatible,
}

impl Comparator {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Compatible => "~=",
        }
    }
}

/// One `(comparator, version)` clause of a requirement predicate.
///
/// `==` and `!=` accept a trailing `.*` for prefix matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionClause {
    pub op: Comparator,
    pub version: PyVersion,
    pub wildcard: bool,
}

impl fmt::Display for VersionClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.op.as_str(), self.version)?;
        if self.wildcard {
            f.write_str(".*")?;
        }
        Ok(())
    }
}

impl FromStr for VersionClause {
    type Err = ParseError;

    fn from_str(raw: &str) -> Result<Self, Self::Err> {
        let s = raw.trim();
        let ops = [
            ("===", Comparator::Eq),
            ("~=", Comparator::Compatible),
            ("==", Comparator::Eq),
            ("!=", Comparator::Ne),
            ("<=", Comparator::Le),
            (">=", Comparator::Ge),
            ("<", Comparator::Lt),
            (">", Comparator::Gt),
        ];
        let (op, rest) = ops
            .iter()
            .find_map(|(p, op)| s.strip_prefix(p).map(|r| (*op, r.trim())))
            .ok_or_else(|| ParseError::BadClause(raw.to_string()))?;
        let (ver, wildcard) = match rest.strip_suffix(".*") {
            Some(v) if matches!(op, Comparator::Eq | Comparator::Ne) => (v, true),
            Some(_) => return Err(ParseError::BadClause(raw.to_string())),
            None => (rest, false),
        };
        let version: PyVersion = ver
            .parse()
            .map_err(|_| ParseError::BadClause(raw.to_string()))?;
        if op == Comparator::Compatible && version.release.len() < 2 {
            return Err(ParseError::BadClause(raw.to_string()));
        }
        Ok(VersionClause {
            op,
            version,
            wildcard,
        })
    }
}

fn prefix_match(v: &PyVersion, prefix: &PyVersion) -> bool {
    v.epoch == prefix.epoch
        && (0..prefix.release.len()).all(|i| v.release_at(i) == prefix.release[i])
}

fn same_release(a: &PyVersion, b: &PyVersion) -> bool {
    a.epoch == b.epoch && a.cmp_release(b) == Ordering::Equal
}

impl VersionClause {
    pub fn matches(&self, v: &PyVersion) -> bool {
        let ord = v.cmp(&self.version);
        match self.op {
            Comparator::Eq if self.wildcard => prefix_match(v, &self.version),
            Comparator::Ne if self.wildcard => !prefix_match(v, &self.version),
            Comparator::Eq => ord == Ordering::Equal,
            Comparator::Ne => ord != Ordering::Equal,
            Comparator::Le => ord != Ordering::Greater,
            Comparator::Ge => ord != Ordering::Less,
            // Exclusive bounds do not admit pre-releases (for `<`) or
            // post-releases (for `>`) of the bound's own release.
            Comparator::Lt => {
                ord == Ordering::Less
                    && !(v.is_prerelease()
                        && !self.version.is_prerelease()
                        && same_release(v, &self.version))
            }
            Comparator::Gt => {
                ord == Ordering::Greater
                    && !(v.post.is_some()
                        && self.version.post.is_none()
                        && same_release(v, &self.version))
            }
            Comparator::Compatible => {
                // ~=X.Y.Z  <=>  >=X.Y.Z, ==X.Y.*
                let mut prefix = self.version.clone();
                prefix.release.pop();
                ord != Ordering::Less && prefix_match(v, &prefix)
            }
        }
    }
}

/// Conjunction over clauses; the empty predicate admits every version.
pub fn satisfies(v: &PyVersion, predicate: &[VersionClause]) -> bool {
    predicate.iter().all(|c| c.matches(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> PyVersion {
        s.parse().unwrap()
    }

    fn clauses(s: &str) -> Vec<VersionClause> {
        s.split(',').map(|c| c.parse().unwrap()).collect()
    }

    #[test]
    fn igraph_satisfies_lower_bound() {
        assert!(satisfies(&v("0.11.9"), &clauses(">=0.11.0")));
        assert!(satisfies(&v("0.11.9"), &[]));
    }

    #[test]
    fn zero_padding_is_equality() {
        assert!(satisfies(&v("1.3"), &clauses("==1.3.0")));
        assert_eq!(v("1.3"), v("1.3.0.0"));
    }

    #[test]
    fn prerelease_ordering() {
        let order = [
            "1.0.dev1",
            "1.0a1",
            "1.0a2.dev1",
            "1.0a2",
            "1.0b1",
            "1.0rc1",
            "1.0",
            "1.0.post1.dev1",
            "1.0.post1",
            "1.1",
        ];
        for w in order.windows(2) {
            assert!(v(w[0]) < v(w[1]), "{} < {}", w[0], w[1]);
        }
    }

    #[test]
    fn compatible_release() {
        let c = clauses("~=2.2");
        assert!(satisfies(&v("2.9"), &c));
        assert!(!satisfies(&v("3.0"), &c));
        let c = clauses("~=1.4.5");
        assert!(satisfies(&v("1.4.9"), &c));
        assert!(!satisfies(&v("1.5.0"), &c));
        assert!("~=1".parse::<VersionClause>().is_err());
    }

    #[test]
    fn wildcards_and_local() {
        assert!(satisfies(&v("1.4.2"), &clauses("==1.4.*")));
        assert!(!satisfies(&v("1.5"), &clauses("==1.4.*")));
        assert!(satisfies(&v("1.5"), &clauses("!=1.4.*")));
        assert_eq!(v("1.0+ubuntu1"), v("1.0"));
        assert!(">=1.*".parse::<VersionClause>().is_err());
    }

    #[test]
    fn display_round_trip() {
        for s in ["1!2.0rc3.post4.dev5+abc", "0.11.9", "1.0a1"] {
            let parsed = v(s);
            assert_eq!(parsed.to_string().parse::<PyVersion>().unwrap(), parsed);
        }
        assert!("abc".parse::<PyVersion>().is_err());
        assert!("1.0foo".parse::<PyVersion>().is_err());
    }
}
