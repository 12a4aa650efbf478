//! Update log: one event per line, tab-separated.
//!
//! ```text
//! H <u> <kind> <v> <day>
//! S <u> <kind> <v> <weight> <day>
//! A <token> <day>
//! ```

use std::fmt;
use std::io::{BufRead, Write};

use crate::graph::io::{data_lines, number, positive_weight, token};
use crate::graph::{HardKind, SoftKind};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    NewAccount {
        token: String,
    },
    Hard {
        u: String,
        kind: HardKind,
        v: String,
    },
    Soft {
        u: String,
        kind: SoftKind,
        v: String,
        weight: f64,
    },
}

/// A streamed change with its day (days since epoch).
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateEvent {
    pub day: f64,
    pub kind: EventKind,
}

impl fmt::Display for UpdateEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EventKind::NewAccount { token } => write!(f, "A\t{token}\t{}", self.day),
            EventKind::Hard { u, kind, v } => write!(f, "H\t{u}\t{kind}\t{v}\t{}", self.day),
            EventKind::Soft { u, kind, v, weight } => write!(f, "S\t{u}\t{kind}\t{v}\t{weight}\t{}", self.day),
        }
    }
}

pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<UpdateEvent>> {
    let mut out = Vec::new();
    for item in data_lines(reader) {
        let (line, f) = item?;
        let expect = |n: usize| {
            if f.len() == n {
                Ok(())
            } else {
                Err(Error::parse(
                    line,
                    format!("`{}` event needs {n} fields, found {}", f[0], f.len()),
                ))
            }
        };
        let (day, kind) = match f[0].trim() {
            "A" => {
                expect(3)?;
                let token = token(line, &f[1])?.to_owned();
                (number(line, &f[2], "day")?, EventKind::NewAccount { token })
            }
            "H" => {
                expect(5)?;
                let kind = f[2].trim().parse().map_err(|e: String| Error::parse(line, e))?;
                let (u, v) = (token(line, &f[1])?.to_owned(), token(line, &f[3])?.to_owned());
                (number(line, &f[4], "day")?, EventKind::Hard { u, kind, v })
            }
            "S" => {
                expect(6)?;
                let kind = f[2].trim().parse().map_err(|e: String| Error::parse(line, e))?;
                let (u, v) = (token(line, &f[1])?.to_owned(), token(line, &f[3])?.to_owned());
                let weight = positive_weight(line, &f[4])?;
                (number(line, &f[5], "day")?, EventKind::Soft { u, kind, v, weight })
            }
            other => return Err(Error::parse(line, format!("unknown event type `{other}`"))),
        };
        out.push(UpdateEvent { day, kind });
    }
    Ok(out)
}

pub fn write_events<W: Write>(mut w: W, events: &[UpdateEvent]) -> Result<()> {
    for e in events {
        writeln!(w, "{e}")?;
    }
    Ok(())
}
