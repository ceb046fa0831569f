//! CSV CSI traces: `round,party,antenna,subcarrier,re,im`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::channel_model::{CsiMatrix, C64};
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "round,party,antenna,subcarrier,re,im";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Party {
    A,
    B,
    E,
}

impl Party {
    fn code(self) -> &'static str {
        match self {
            Party::A => "A",
            Party::B => "B",
            Party::E => "E",
        }
    }

    /// Alice's antenna is secret and is never written; Bob and Eve have one.
    fn antenna_column(self) -> usize {
        match self {
            Party::A => 0,
            Party::B | Party::E => 1,
        }
    }
}

/// Per-party CSI matrices; Eve's entry is Eve's view of Alice's transmissions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceSet {
    pub alice: Option<CsiMatrix>,
    pub bob: Option<CsiMatrix>,
    pub eve: Option<CsiMatrix>,
}

impl TraceSet {
    fn parties(&self) -> Vec<(Party, &CsiMatrix)> {
        [(Party::A, &self.alice), (Party::B, &self.bob), (Party::E, &self.eve)]
            .into_iter()
            .filter_map(|(p, m)| m.as_ref().map(|m| (p, m)))
            .collect()
    }
}

pub fn write_trace<W: Write>(out: W, traces: &TraceSet) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{TRACE_HEADER}")?;
    for (party, m) in traces.parties() {
        for k in 0..m.rounds() {
            for n in 0..m.subcarriers() {
                let v = m.get(n, k);
                writeln!(
                    w,
                    "{},{},{},{},{:.16e},{:.16e}",
                    k + 1,
                    party.code(),
                    party.antenna_column(),
                    n,
                    v.re,
                    v.im
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(path: &Path, traces: &TraceSet) -> Result<()> {
    write_trace(File::create(path)?, traces)
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn read_trace<R: std::io::Read>(input: R) -> Result<TraceSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
        return Err(parse_err(1, format!("expected header `{TRACE_HEADER}`")));
    }
    // (party, round, subcarrier, value, line)
    let mut records: Vec<(Party, usize, usize, C64, usize)> = Vec::new();
    let mut last_line = 1;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(last_line + 1);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(last_line + 1);
        last_line = line;
        if rec.len() != 6 {
            return Err(parse_err(line, format!("expected 6 fields, found {}", rec.len())));
        }
        let field = |i: usize, name: &str| -> Result<&str> {
            rec.get(i).filter(|s| !s.is_empty()).ok_or_else(|| parse_err(line, format!("missing {name}")))
        };
        let num = |i: usize, name: &str| -> Result<usize> {
            field(i, name)?.parse().map_err(|_| parse_err(line, format!("bad {name}")))
        };
        let real = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = field(i, name)?.parse().map_err(|_| parse_err(line, format!("bad {name}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite {name}")));
            }
            Ok(v)
        };
        let round = num(0, "round")?;
        if round == 0 {
            return Err(parse_err(line, "rounds are numbered from 1"));
        }
        let party = match field(1, "party")? {
            "A" => Party::A,
            "B" => Party::B,
            "E" => Party::E,
            other => return Err(parse_err(line, format!("unknown party `{other}`"))),
        };
        num(2, "antenna")?;
        let sub = num(3, "subcarrier")?;
        records.push((party, round, sub, C64::new(real(4, "re")?, real(5, "im")?), line));
    }

    let mut set = TraceSet::default();
    let mut shape: Option<(Party, usize, usize)> = None;
    for party in [Party::A, Party::B, Party::E] {
        let rows: Vec<_> = records.iter().filter(|r| r.0 == party).collect();
        if rows.is_empty() {
            continue;
        }
        let k = rows.iter().map(|r| r.1).max().unwrap_or(0);
        let n = rows.iter().map(|r| r.2).max().unwrap_or(0) + 1;
        let mut filled = vec![false; n * k];
        let mut data = DMatrix::from_element(n, k, C64::new(0.0, 0.0));
        for &&(_, round, sub, v, line) in &rows {
            let idx = (round - 1) * n + sub;
            if filled[idx] {
                return Err(parse_err(line, format!("duplicate entry for round {round}, subcarrier {sub}")));
            }
            filled[idx] = true;
            data[(sub, round - 1)] = v;
        }
        if let Some(missing) = filled.iter().position(|f| !f) {
            return Err(parse_err(
                last_line,
                format!(
                    "trace truncated: party {} round {} subcarrier {} missing",
                    party.code(),
                    missing / n + 1,
                    missing % n
                ),
            ));
        }
        match shape {
            Some((first, sn, sk)) if (sn, sk) != (n, k) => {
                return Err(parse_err(
                    last_line,
                    format!(
                        "trace truncated: party {} has {n}×{k} entries, party {} has {sn}×{sk}",
                        party.code(),
                        first.code()
                    ),
                ))
            }
            None => shape = Some((party, n, k)),
            _ => {}
        }
        let m = CsiMatrix::from_matrix(data)?;
        match party {
            Party::A => set.alice = Some(m),
            Party::B => set.bob = Some(m),
            Party::E => set.eve = Some(m),
        }
    }
    Ok(set)
}

pub fn load_trace(path: &Path) -> Result<TraceSet> {
    read_trace(File::open(path)?)
}
