//! Tab-separated link files and the transformed-graph file.
//!
//! ```text
//! hard:        <u> TAB <kind> TAB <v>
//! soft:        <u> TAB <kind> TAB <v> [TAB <weight> [TAB <day>]]
//! risk:        <token> TAB <value>
//! transformed: #supernodes <k>
//!              <token> TAB <supernode>          (one per account)
//!              E TAB <i> TAB <j> TAB <weight>   (6 decimals)
//! ```
//!
//! Blank lines and lines starting with `#` are ignored on input.

use std::io::{BufRead, Write};

use super::{AccountId, GraphBuilder, HeterogeneousGraph, SuperEdge, SuperNode, TokenMap, TransformedGraph};
use crate::{Error, Result};

/// Yields `(line_number, fields)` for every data line.
pub(crate) fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, Vec<String>)>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::Io(e))),
        };
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            return None;
        }
        Some(Ok((i + 1, trimmed.split('\t').map(str::to_owned).collect())))
    })
}

pub(crate) fn token(line: usize, field: &str) -> Result<&str> {
    let t = field.trim();
    if t.is_empty() {
        return Err(Error::parse(line, "empty account token"));
    }
    Ok(t)
}

pub(crate) fn number(line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} `{field}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite {what} `{field}`")));
    }
    Ok(v)
}

pub(crate) fn positive_weight(line: usize, field: &str) -> Result<f64> {
    let w = number(line, field, "weight")?;
    if w <= 0.0 {
        return Err(Error::parse(line, format!("weight must be positive, got {w}")));
    }
    Ok(w)
}

pub fn read_hard_links<R: BufRead>(reader: R, builder: &mut GraphBuilder) -> Result<()> {
    for item in data_lines(reader) {
        let (line, f) = item?;
        if f.len() != 3 {
            return Err(Error::parse(line, format!("expected 3 fields, found {}", f.len())));
        }
        let kind = f[1].trim().parse().map_err(|e: String| Error::parse(line, e))?;
        builder.add_hard(token(line, &f[0])?, kind, token(line, &f[2])?);
    }
    Ok(())
}

pub fn read_soft_links<R: BufRead>(reader: R, builder: &mut GraphBuilder) -> Result<()> {
    for item in data_lines(reader) {
        let (line, f) = item?;
        if !(3..=5).contains(&f.len()) {
            return Err(Error::parse(line, format!("expected 3 to 5 fields, found {}", f.len())));
        }
        let kind = f[1].trim().parse().map_err(|e: String| Error::parse(line, e))?;
        let weight = match f.get(3) {
            Some(w) if !w.trim().is_empty() => positive_weight(line, w)?,
            _ => 1.0,
        };
        let timestamp = f.get(4).map(|t| number(line, t, "timestamp")).transpose()?;
        builder.add_soft(token(line, &f[0])?, kind, token(line, &f[2])?, weight, timestamp);
    }
    Ok(())
}

pub fn read_risk<R: BufRead>(reader: R, builder: &mut GraphBuilder) -> Result<()> {
    for item in data_lines(reader) {
        let (line, f) = item?;
        if f.len() != 2 {
            return Err(Error::parse(line, format!("expected 2 fields, found {}", f.len())));
        }
        let value = number(line, &f[1], "risk value")?;
        if value < 0.0 {
            return Err(Error::parse(line, "risk value must be non-negative"));
        }
        builder.add_risk(token(line, &f[0])?, value);
    }
    Ok(())
}

pub fn write_hard_links<W: Write>(mut w: W, g: &HeterogeneousGraph) -> Result<()> {
    for l in &g.hard_links {
        writeln!(w, "{}\t{}\t{}", g.tokens.token(l.u), l.kind, g.tokens.token(l.v))?;
    }
    Ok(())
}

pub fn write_soft_links<W: Write>(mut w: W, g: &HeterogeneousGraph) -> Result<()> {
    for l in &g.soft_links {
        write!(
            w,
            "{}\t{}\t{}\t{}",
            g.tokens.token(l.u),
            l.kind,
            g.tokens.token(l.v),
            l.weight
        )?;
        if let Some(day) = l.timestamp {
            write!(w, "\t{day}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Writes the non-zero risk indicators.
pub fn write_risk<W: Write>(mut w: W, g: &HeterogeneousGraph) -> Result<()> {
    for (i, &r) in g.risk.iter().enumerate() {
        if r != 0.0 {
            writeln!(w, "{}\t{r}", g.tokens.token(AccountId(i as u32)))?;
        }
    }
    Ok(())
}

pub fn write_transformed<W: Write>(mut w: W, tokens: &TokenMap, g: &TransformedGraph) -> Result<()> {
    writeln!(w, "#supernodes {}", g.num_nodes())?;
    for (account, &s) in g.membership.iter().enumerate() {
        writeln!(w, "{}\t{}", tokens.token(AccountId(account as u32)), s)?;
    }
    for e in &g.edges {
        writeln!(w, "E\t{}\t{}\t{:.6}", e.a, e.b, e.weight)?;
    }
    Ok(())
}

/// Parses a transformed-graph file. Accounts are re-indexed in file order,
/// which matches the original order for files produced by
/// [`write_transformed`]. Risk indicators are not stored and read back as 0.
pub fn read_transformed<R: BufRead>(reader: R) -> Result<(TokenMap, TransformedGraph)> {
    let mut declared: Option<usize> = None;
    let mut tokens = TokenMap::new();
    let mut membership: Vec<u32> = Vec::new();
    let mut edges = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if let Some(rest) = line.strip_prefix("#supernodes") {
            let k = rest
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno, "invalid #supernodes header"))?;
            declared = Some(k);
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        match f.as_slice() {
            ["E", a, b, w] => {
                let parse_idx = |s: &str| -> Result<u32> {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("invalid super-node index `{s}`")))
                };
                let (a, b) = (parse_idx(a)?, parse_idx(b)?);
                if a == b {
                    return Err(Error::parse(lineno, "self edge in transformed graph"));
                }
                edges.push(SuperEdge {
                    a: a.min(b),
                    b: a.max(b),
                    weight: positive_weight(lineno, w)?,
                });
            }
            [tok, s] => {
                let id = tokens.intern(token(lineno, tok)?);
                if id.index() != membership.len() {
                    return Err(Error::parse(lineno, format!("account `{tok}` listed twice")));
                }
                let s: u32 = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("invalid super-node index `{s}`")))?;
                membership.push(s);
            }
            _ => return Err(Error::parse(lineno, "expected a membership or edge line")),
        }
    }
    let k = declared.ok_or_else(|| Error::parse(1, "missing #supernodes header"))?;
    let mut super_nodes = vec![
        SuperNode {
            members: Vec::new(),
            risk: 0.0
        };
        k
    ];
    for (account, &s) in membership.iter().enumerate() {
        let node = super_nodes
            .get_mut(s as usize)
            .ok_or_else(|| Error::parse(0, format!("super-node {s} out of range (k = {k})")))?;
        node.members.push(AccountId(account as u32));
    }
    if let Some(e) = edges.iter().find(|e| e.b as usize >= k) {
        return Err(Error::parse(0, format!("edge endpoint {} out of range (k = {k})", e.b)));
    }
    edges.sort_by_key(|e| (e.a, e.b));
    Ok((
        tokens,
        TransformedGraph {
            super_nodes,
            edges,
            membership,
        },
    ))
}
