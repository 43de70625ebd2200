//! Just enough of the environment-marker grammar to decide `extra` atoms.
//!
//! Atoms other than `extra == "..."` evaluate to `Unknown`; `and`/`or`
//! combine under three-valued logic so that `extra == "test" and
//! python_version < "3.8"` is still `False` when `test` was not requested.

use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tri {
    True,
    False,
    Unknown,
}

impl Tri {
    fn and(self, o: Tri) -> Tri {
        match (self, o) {
            (Tri::False, _) | (_, Tri::False) => Tri::False,
            (Tri::True, Tri::True) => Tri::True,
            _ => Tri::Unknown,
        }
    }

    fn or(self, o: Tri) -> Tri {
        match (self, o) {
            (Tri::True, _) | (_, Tri::True) => Tri::True,
            (Tri::False, Tri::False) => Tri::False,
            _ => Tri::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Op(String),
    LParen,
    RParen,
}

fn lex(s: &str) -> Option<Vec<Tok>> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        match c {
            b' ' | b'\t' => i += 1,
            b'(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            b')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            b'"' | b'\'' => {
                let end = s[i + 1..].find(c as char)? + i + 1;
                out.push(Tok::Str(s[i + 1..end].to_string()));
                i = end + 1;
            }
            b'=' | b'!' | b'<' | b'>' | b'~' => {
                let start = i;
                while i < b.len() && b"=!<>~".contains(&b[i]) {
                    i += 1;
                }
                out.push(Tok::Op(s[start..i].to_string()));
            }
            c if c.is_ascii_alphanumeric() || c == b'_' || c == b'.' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'.')
                {
                    i += 1;
                }
                out.push(Tok::Ident(s[start..i].to_string()));
            }
            _ => return None,
        }
    }
    Some(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    extras: &'a BTreeSet<String>,
}

impl Parser<'_> {
    fn peek_ident(&self, word: &str) -> bool {
        matches!(self.toks.get(self.pos), Some(Tok::Ident(w)) if w == word)
    }

    fn or_expr(&mut self) -> Option<Tri> {
        let mut v = self.and_expr()?;
        while self.peek_ident("or") {
            self.pos += 1;
            v = v.or(self.and_expr()?);
        }
        Some(v)
    }

    fn and_expr(&mut self) -> Option<Tri> {
        let mut v = self.atom()?;
        while self.peek_ident("and") {
            self.pos += 1;
            v = v.and(self.atom()?);
        }
        Some(v)
    }

    fn atom(&mut self) -> Option<Tri> {
        if self.toks.get(self.pos) == Some(&Tok::LParen) {
            self.pos += 1;
            let v = self.or_expr()?;
            if self.toks.get(self.pos) != Some(&Tok::RParen) {
                return None;
            }
            self.pos += 1;
            return Some(v);
        }
        let lhs = self.toks.get(self.pos)?.clone();
        let op = self.toks.get(self.pos + 1)?.clone();
        let rhs = self.toks.get(self.pos + 2)?.clone();
        self.pos += 3;
        let op = match op {
            Tok::Op(o) => o,
            Tok::Ident(w) if w == "in" => w,
            Tok::Ident(w) if w == "not" => {
                if rhs != Tok::Ident("in".into()) {
                    return None;
                }
                let rhs = self.toks.get(self.pos)?.clone();
                self.pos += 1;
                return self.compare(&lhs, "not in", &rhs);
            }
            _ => return None,
        };
        self.compare(&lhs, &op, &rhs)
    }

    fn compare(&self, lhs: &Tok, op: &str, rhs: &Tok) -> Option<Tri> {
        let extra_side = match (lhs, rhs) {
            (Tok::Ident(v), Tok::Str(s)) if v == "extra" => Some(s),
            (Tok::Str(s), Tok::Ident(v)) if v == "extra" => Some(s),
            (Tok::Ident(_), Tok::Str(_)) | (Tok::Str(_), Tok::Ident(_)) => None,
            _ => return None,
        };
        match (extra_side, op) {
            (Some(name), "==") => Some(tri(self.extras.contains(&normalize_extra(name)))),
            (Some(name), "!=") => Some(tri(!self.extras.contains(&normalize_extra(name)))),
            _ => Some(Tri::Unknown),
        }
    }
}

fn tri(b: bool) -> Tri {
    if b {
        Tri::True
    } else {
        Tri::False
    }
}

pub fn normalize_extra(s: &str) -> String {
    super::normalize_name(s)
}

/// Evaluate a marker; `None` if it does not parse.
pub fn evaluate(marker: &str, extras: &BTreeSet<String>) -> Option<Tri> {
    let toks = lex(marker)?;
    let mut p = Parser {
        toks,
        pos: 0,
        extras,
    };
    let v = p.or_expr()?;
    if p.pos != p.toks.len() {
        return None;
    }
    Some(v)
}
