//! Line-oriented text format shared by enrollment dumps and capture logs.
//!
//! ```text
//! # daup-records n_bits=64 r_bits=1 id_bits=32
//! 9f3c0a1b22e4d5c6,1,0000abcd,00001234
//! ```
//!
//! Each record line is `challenge,response,verifier_id,prover_id`, all in hex.

use std::io::{BufRead, Write};

use crate::bits::{Bits, NodeId};
use crate::error::{Error, Result};
use crate::protocol::CrpRecord;

const MAGIC: &str = "# daup-records";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordFormat {
    pub n_bits: usize,
    pub r_bits: usize,
    pub id_bits: usize,
}

impl RecordFormat {
    pub fn of(record: &CrpRecord) -> Self {
        RecordFormat {
            n_bits: record.challenge.len(),
            r_bits: record.expected_response.len(),
            id_bits: record.verifier_id.width(),
        }
    }

    fn header(&self) -> String {
        format!("{MAGIC} n_bits={} r_bits={} id_bits={}", self.n_bits, self.r_bits, self.id_bits)
    }

    fn parse_header(line: &str) -> Result<Self> {
        let rest = line
            .strip_prefix(MAGIC)
            .ok_or_else(|| Error::Parse(format!("missing record header, got {line:?}")))?;
        let mut fmt = RecordFormat { n_bits: 0, r_bits: 0, id_bits: 0 };
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field {kv:?}")))?;
            let v: usize = v.parse().map_err(|_| Error::Parse(format!("bad header value {kv:?}")))?;
            match k {
                "n_bits" => fmt.n_bits = v,
                "r_bits" => fmt.r_bits = v,
                "id_bits" => fmt.id_bits = v,
                _ => return Err(Error::Parse(format!("unknown header field {k:?}"))),
            }
        }
        if fmt.n_bits == 0 || fmt.r_bits == 0 || fmt.id_bits == 0 {
            return Err(Error::Parse(format!("incomplete header {line:?}")));
        }
        Ok(fmt)
    }
}

pub fn write_records<W: Write>(mut w: W, format: RecordFormat, records: &[CrpRecord]) -> Result<()> {
    writeln!(w, "{}", format.header())?;
    for r in records {
        r.challenge.ensure_len(format.n_bits)?;
        r.expected_response.ensure_len(format.r_bits)?;
        writeln!(
            w,
            "{},{},{},{}",
            r.challenge.to_hex(),
            r.expected_response.to_hex(),
            r.verifier_id.to_hex(),
            r.prover_id.to_hex()
        )?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<(RecordFormat, Vec<CrpRecord>)> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty record file".into()))??;
    let fmt = RecordFormat::parse_header(header.trim())?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [c, resp, v, p] = fields.as_slice() else {
            return Err(Error::Parse(format!("line {}: expected 4 fields, got {}", i + 2, fields.len())));
        };
        out.push(CrpRecord {
            challenge: Bits::from_hex(c, fmt.n_bits)?,
            expected_response: Bits::from_hex(resp, fmt.r_bits)?,
            verifier_id: NodeId::from_hex(v, fmt.id_bits)?,
            prover_id: NodeId::from_hex(p, fmt.id_bits)?,
        });
    }
    Ok((fmt, out))
}
