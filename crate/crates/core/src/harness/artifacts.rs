//! Public-channel artifacts and the private secrets dump.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;

use crate::channel_model::CsiMatrix;
use crate::error::Result;
use crate::harness::pipeline::Extraction;
use crate::harness::trace::{write_trace, TraceSet};
use crate::kl_transform::TransformBasis;
use crate::obfuscation::ObfuscationState;
use crate::quantizer::{KeptIndexMessage, QuantizePlan};
use crate::reconciliation::Reconciliation;

pub const EVE_TRACE: &str = "eve_trace.csv";
pub const BASIS: &str = "basis.csv";
pub const KEPT_INDEX: &str = "kept_index.csv";
pub const SYNDROME: &str = "syndrome.bin";
pub const DISCARD: &str = "discard.csv";

/// Every file an eavesdropper on the public channel gets to see.
pub const PUBLIC_SET: [&str; 5] = [EVE_TRACE, BASIS, KEPT_INDEX, SYNDROME, DISCARD];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn new(name: &str, bytes: Vec<u8>) -> Self {
        Self {
            name: name.to_string(),
            bytes,
        }
    }
}

/// Header line `# {json}` then `row,col,re,im` for the P×rows projection.
pub fn basis_csv(basis: &TransformBasis, plan: &QuantizePlan) -> String {
    let header = json!({
        "P": basis.selected,
        "eta": basis.eta,
        "L_x": basis.shape.lx,
        "L_y": basis.shape.ly,
        "rule": basis.rule,
        "centered": basis.centered,
        "levels": plan.levels,
        "part_mode": plan.part_mode,
    });
    let mut s = format!("# {header}\nrow,col,re,im\n");
    let v = &basis.projection;
    for r in 0..v.nrows() {
        for c in 0..v.ncols() {
            let x = v[(r, c)];
            let _ = writeln!(s, "{r},{c},{:.16e},{:.16e}", x.re, x.im);
        }
    }
    s
}

pub fn kept_index_csv(msg: &KeptIndexMessage) -> String {
    let mut s = String::from("component,part,column,index\n");
    for (c, p, col, i) in &msg.dropped {
        let _ = writeln!(s, "{c},{p},{col},{i}");
    }
    s
}

pub fn discard_csv(blocks: &[usize]) -> String {
    let mut s = String::from("block\n");
    for b in blocks {
        let _ = writeln!(s, "{b}");
    }
    s
}

pub fn trace_bytes(traces: &TraceSet) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_trace(&mut buf, traces)?;
    Ok(buf)
}

pub fn public_artifacts(eve: Option<&CsiMatrix>, ex: &Extraction, rec: &Reconciliation) -> Result<Vec<Artifact>> {
    let mut out = Vec::new();
    if let Some(e) = eve {
        let t = TraceSet {
            eve: Some(e.clone()),
            ..Default::default()
        };
        out.push(Artifact::new(EVE_TRACE, trace_bytes(&t)?));
    }
    out.push(Artifact::new(BASIS, basis_csv(&ex.basis, &ex.plan).into_bytes()));
    out.push(Artifact::new(KEPT_INDEX, kept_index_csv(&ex.public_drops()).into_bytes()));
    out.push(Artifact::new(SYNDROME, rec.message.to_bytes()));
    out.push(Artifact::new(DISCARD, discard_csv(&rec.discarded).into_bytes()));
    Ok(out)
}

pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes)?;
    }
    Ok(())
}

/// `round,m_k,tap_index,re,im`. Unfiltered rounds get a single tap 0 of 1+0j.
pub fn secrets_csv(states: &[ObfuscationState]) -> String {
    let mut s = String::from("round,m_k,tap_index,re,im\n");
    for st in states {
        match &st.taps {
            Some(t) => {
                for (i, a) in t.a.iter().enumerate() {
                    let _ = writeln!(s, "{},{},{},{:.16e},{:.16e}", st.round, st.m_k, i + 1, a.re, a.im);
                }
            }
            None => {
                let _ = writeln!(s, "{},{},0,{:.16e},{:.16e}", st.round, st.m_k, 1.0, 0.0);
            }
        }
    }
    s
}
