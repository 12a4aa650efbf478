use std::io::{BufRead, Write};

use super::NOISE;
use crate::{Error, Result};

/// `<supernode> TAB <label>` per line, then `# clusters <m>` and `# noise <count>`.
pub fn write_clusters<W: Write>(mut w: W, labels: &[i32]) -> Result<()> {
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i}\t{l}")?;
    }
    let clusters = labels.iter().filter(|&&l| l >= 0).map(|&l| l + 1).max().unwrap_or(0);
    writeln!(w, "# clusters {clusters}")?;
    writeln!(w, "# noise {}", labels.iter().filter(|&&l| l == NOISE).count())?;
    Ok(())
}

pub fn read_clusters<R: BufRead>(reader: R) -> Result<Vec<i32>> {
    let mut entries: Vec<(usize, i32)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(lineno, "expected `<supernode> TAB <label>`"))?;
        let id = id
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid super-node id `{id}`")))?;
        let label: i32 = label
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid label `{label}`")))?;
        if label < NOISE {
            return Err(Error::parse(lineno, format!("invalid label {label}")));
        }
        entries.push((id, label));
    }
    let mut labels = vec![None; entries.len()];
    for (id, label) in entries {
        match labels.get_mut(id) {
            Some(slot @ None) => *slot = Some(label),
            _ => return Err(Error::parse(0, format!("super-node id {id} out of range or repeated"))),
        }
    }
    Ok(labels.into_iter().map(|l| l.expect("every id filled")).collect())
}
