#!/usr/bin/env python3
"""Freeze `packaging` specifier verdicts (pre-releases admitted) for the
Python predicate tests. Output: tests/data/pyspec_oracle.tsv with lines
`version<TAB>specifier<TAB>{true,false}`."""
from pathlib import Path

from packaging.specifiers import SpecifierSet
from packaging.version import Version

CASES = [
    ("1.3", "==1.3.0"), ("1.3.0", "==1.3"), ("1.3.0.0", "==1.3"), ("1.3.1", "==1.3"),
    ("0.11.9", ">=0.11.0"), ("0.10.9", ">=0.11.0"), ("1.3.0", ">=1.3.0"), ("1.2.9", ">=1.3"),
    ("2.0", "<2"), ("1.9.9", "<2"), ("2.0a1", "<2"), ("2.0a1", "<2.0a2"), ("1.9", "<2.0a2"),
    ("2.0.post1", ">2"), ("2.0.1", ">2"), ("2.0", ">2"), ("2.1.post1", ">2"),
    ("1.0", "!=1.0.0"), ("1.0.1", "!=1.0"), ("1.4.5", "~=1.4.2"), ("1.5.0", "~=1.4.2"),
    ("1.4.1", "~=1.4.2"), ("2.9", "~=2.2"), ("3.0", "~=2.2"), ("2.2.0", "~=2.2"),
    ("1.4.2", "==1.4.*"), ("1.5", "==1.4.*"), ("1.4", "==1.4.*"), ("1.40", "==1.4.*"),
    ("1.5", "!=1.4.*"), ("1.4.9", "!=1.4.*"), ("1.0rc1", ">=1.0"), ("1.0rc1", ">=1.0rc1"),
    ("1.0.dev0", "<1.0"), ("1.0.post1", "<=1.0"), ("1.0", "<=1.0.post1"),
    ("1!1.0", ">=2.0"), ("2.0", "<1!0.1"), ("0.11.9", "==0.11.9"), ("0.11.10", "<=0.11.9"),
    ("1.3.0", ">=1.3.0,<2"), ("2.0", ">=1.3.0,<2"), ("1.2", ">=1.3.0,<2"),
    ("1.1.1", ">1.0,!=1.1.1,<2"), ("1.1.2", ">1.0,!=1.1.1,<2"), ("10.0", ">9"),
    ("9.10", ">9.9"), ("1.0a1", "<=1.0"), ("1.0b2", ">1.0b1"), ("1.0", "==1.0.0.0.0"),
    ("0.0.1", "<0.1"), ("1.0.post2", ">=1.0.post1"),
]


def main():
    out = Path(__file__).resolve().parent.parent / "data" / "pyspec_oracle.tsv"
    with open(out, "w") as f:
        for v, spec in CASES:
            ok = SpecifierSet(spec).contains(Version(v), prereleases=True)
            f.write(f"{v}\t{spec}\t{'true' if ok else 'false'}\n")
    print(len(CASES))


if __name__ == "__main__":
    main()
