//! Version-ordering corpora produced by the distributions' own comparators.

use std::cmp::Ordering;

use nativereach_core::versioncmp::{compare_deb_str, compare_rpm_str};

pub const DEB: &str = include_str!("../data/deb_corpus.tsv");
pub const RPM: &str = include_str!("../data/rpm_corpus.tsv");

/// Versions quoted in the backport and fix records, which the corpora must
/// cover.
pub const DEB_NAMED: &[&str] = &[
    "1.1.0l-1~deb9u4",
    "1.1.0l-1~deb9u11",
    "1.1.0l-1~deb9u5",
    "1.33-1+deb9u1",
    "1.33-1",
    "0.23.3-2+deb9u1",
    "6.1.2+dfsg-1",
    "1.15-1+deb9u3",
    "3.3-1+deb9u1",
    "2.1.27+deb9u1",
    "4.10-1.1+deb9u1",
    "2.9.14+dfsg-1.3~deb12u2",
];
pub const RPM_NAMED: &[&str] = &[
    "5.9-14.20130511.el7_4",
    "1.0.2k-24.el7_9",
    "1.0.2k-22.el7_9",
    "1.15.1-54.el7_9",
    "1.15.1-51.el7_9",
    "2.9.1-6.el7_9.6",
];

pub fn load(text: &str) -> Vec<(String, String, Ordering)> {
    text.lines()
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            let ord = match f[2] {
                "-1" => Ordering::Less,
                "0" => Ordering::Equal,
                "1" => Ordering::Greater,
                other => panic!("bad oracle value {other}"),
            };
            (f[0].to_string(), f[1].to_string(), ord)
        })
        .collect()
}

pub struct Agreement {
    pub pairs: usize,
    pub agree: usize,
    pub first_mismatch: Option<String>,
    pub missing_named: Vec<&'static str>,
}

fn run(
    text: &str,
    named: &[&'static str],
    cmp: impl Fn(&str, &str) -> Option<Ordering>,
) -> Agreement {
    let corpus = load(text);
    let mut a = Agreement {
        pairs: corpus.len(),
        agree: 0,
        first_mismatch: None,
        missing_named: named
            .iter()
            .filter(|v| !corpus.iter().any(|(x, y, _)| x == *v || y == *v))
            .copied()
            .collect(),
    };
    for (x, y, want) in &corpus {
        let ok = cmp(x, y) == Some(*want) && cmp(y, x) == Some(want.reverse());
        if ok {
            a.agree += 1;
        } else if a.first_mismatch.is_none() {
            a.first_mismatch = Some(format!("{x} vs {y}: got {:?}, oracle {want:?}", cmp(x, y)));
        }
    }
    a
}

pub fn deb() -> Agreement {
    run(DEB, DEB_NAMED, |a, b| compare_deb_str(a, b).ok())
}

pub fn rpm() -> Agreement {
    run(RPM, RPM_NAMED, |a, b| compare_rpm_str(a, b).ok())
}
