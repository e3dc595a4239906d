//! JSON file format for circuits.
//!
//! ```json
//! {"version": 1, "num_qubits": 2, "num_clbits": 1, "instructions": [
//!   {"op": "ry", "qubits": [0], "params": [0.5]},
//!   {"op": "measure", "qubits": [0], "clbit": 0},
//!   {"op": "if", "clbit": 0, "value": 1, "body": [{"op": "x", "qubits": [1]}]}
//! ]}
//! ```

use serde::{Deserialize, Serialize};

use super::{Circuit, Gate, GateKind, Instruction};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: u32,
    num_qubits: usize,
    num_clbits: usize,
    instructions: Vec<Record>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    op: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clbit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body: Option<Vec<Record>>,
}

fn to_record(ins: &Instruction) -> Record {
    let blank = |op: &str| Record { op: op.into(), qubits: vec![], params: vec![], clbit: None, value: None, body: None };
    match ins {
        Instruction::Gate(g) => Record { qubits: g.qubits.clone(), params: g.params.clone(), ..blank(g.kind.name()) },
        Instruction::Measure { qubit, clbit } => Record { qubits: vec![*qubit], clbit: Some(*clbit), ..blank("measure") },
        Instruction::Reset { qubit } => Record { qubits: vec![*qubit], ..blank("reset") },
        Instruction::Barrier { qubits } => Record { qubits: qubits.clone(), ..blank("barrier") },
        Instruction::Conditional { clbit, value, body } => {
            Record { clbit: Some(*clbit), value: Some(*value), body: Some(body.iter().map(to_record).collect()), ..blank("if") }
        }
    }
}

pub fn serialize(c: &Circuit) -> Result<Vec<u8>> {
    let doc = Document {
        version: FORMAT_VERSION,
        num_qubits: c.num_qubits,
        num_clbits: c.num_clbits,
        instructions: c.instructions.iter().map(to_record).collect(),
    };
    serde_json::to_vec_pretty(&doc).map_err(|e| Error::Circuit(format!("serialization failed: {e}")))
}

fn from_record(rec: Record, path: &str) -> Result<Instruction> {
    let err = |message: String| Error::Parse { position: path.to_string(), message };
    let single = |qubits: &[usize]| match qubits {
        [q] => Ok(*q),
        _ => Err(err(format!("'{}' takes exactly one qubit", rec.op))),
    };
    match rec.op.as_str() {
        "measure" => {
            let clbit = rec.clbit.ok_or_else(|| err("measure needs a clbit".into()))?;
            Ok(Instruction::Measure { qubit: single(&rec.qubits)?, clbit })
        }
        "reset" => Ok(Instruction::Reset { qubit: single(&rec.qubits)? }),
        "barrier" => Ok(Instruction::Barrier { qubits: rec.qubits }),
        "if" => {
            let clbit = rec.clbit.ok_or_else(|| err("conditional needs a clbit".into()))?;
            let value = rec.value.ok_or_else(|| err("conditional needs a value".into()))?;
            let body = rec
                .body
                .unwrap_or_default()
                .into_iter()
                .enumerate()
                .map(|(i, r)| from_record(r, &format!("{path}.body[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            Ok(Instruction::Conditional { clbit, value, body })
        }
        name => {
            let kind = GateKind::from_name(name).ok_or_else(|| err(format!("unknown gate kind '{name}'")))?;
            if rec.qubits.len() != kind.arity() {
                return Err(err(format!("'{name}' takes {} qubits, got {}", kind.arity(), rec.qubits.len())));
            }
            if rec.params.len() != kind.num_params() {
                return Err(err(format!("'{name}' takes {} parameters, got {}", kind.num_params(), rec.params.len())));
            }
            Ok(Instruction::Gate(Gate::new(kind, rec.qubits, rec.params)))
        }
    }
}

/// Parses and validates a circuit document. Syntax errors report
/// line:column, semantic errors the instruction path.
pub fn deserialize(bytes: &[u8]) -> Result<Circuit> {
    let doc: Document = serde_json::from_slice(bytes)
        .map_err(|e| Error::Parse { position: format!("line {} column {}", e.line(), e.column()), message: e.to_string() })?;
    if doc.version != FORMAT_VERSION {
        return Err(Error::Parse {
            position: "version".into(),
            message: format!("unsupported version {}, expected {FORMAT_VERSION}", doc.version),
        });
    }
    let instructions = doc
        .instructions
        .into_iter()
        .enumerate()
        .map(|(i, r)| from_record(r, &format!("instructions[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let c = Circuit { num_qubits: doc.num_qubits, num_clbits: doc.num_clbits, instructions };
    c.validate()?;
    Ok(c)
}
