use std::io::{BufRead, Write};

use super::CombinedEmbedding;
use crate::{Error, Result};

/// `#embedding <n> <dim>` then `<id> TAB <v_1> ... <v_dim>`, 8 significant digits.
pub fn write_embedding<W: Write>(mut w: W, emb: &CombinedEmbedding) -> Result<()> {
    writeln!(w, "#embedding {} {}", emb.rows(), emb.dim())?;
    for (i, row) in emb.iter().enumerate() {
        write!(w, "{i}\t")?;
        for (d, x) in row.iter().enumerate() {
            if d > 0 {
                w.write_all(b" ")?;
            }
            write!(w, "{x:.7e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_embedding<R: BufRead>(reader: R) -> Result<CombinedEmbedding> {
    let mut header: Option<(usize, usize)> = None;
    let mut vectors = Vec::new();
    let mut seen = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix("#embedding") {
            let nums: Vec<usize> = rest
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(lineno, "invalid #embedding header"))?;
            let [n, dim] = nums[..] else {
                return Err(Error::parse(lineno, "expected `#embedding <n> <dim>`"));
            };
            if dim == 0 {
                return Err(Error::parse(lineno, "embedding dim must be positive"));
            }
            header = Some((n, dim));
            vectors = vec![0.0; n * dim];
            seen = vec![false; n];
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (n, dim) = header.ok_or_else(|| Error::parse(lineno, "data before #embedding header"))?;
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(lineno, "expected `<id> TAB <values>`"))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid super-node id `{id}`")))?;
        if id >= n || seen[id] {
            return Err(Error::parse(
                lineno,
                format!("super-node id {id} out of range or repeated"),
            ));
        }
        seen[id] = true;
        let row = &mut vectors[id * dim..(id + 1) * dim];
        let mut count = 0;
        for (slot, tok) in row.iter_mut().zip(values.split_whitespace()) {
            *slot = tok
                .parse()
                .map_err(|_| Error::parse(lineno, format!("invalid value `{tok}`")))?;
            count += 1;
        }
        if count != dim || values.split_whitespace().count() != dim {
            return Err(Error::parse(lineno, format!("expected {dim} values")));
        }
    }
    let (_, dim) = header.ok_or_else(|| Error::parse(1, "missing #embedding header"))?;
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::parse(0, format!("no vector for super-node {missing}")));
    }
    CombinedEmbedding::from_rows(dim, vectors)
}
