//! Run reports: a deterministic JSON body (command echo, input digest,
//! seed, results) — identical inputs and seed produce a byte-identical
//! body.  Wall time goes to stderr, never into the body.

use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};

pub struct RunReport {
    pub command: Vec<String>,
    pub inputs_digest: String,
    pub seed: u64,
    pub results: Json,
}

impl RunReport {
    pub fn body(&self) -> String {
        let doc = json!({
            "command": self.command,
            "inputs_digest": self.inputs_digest,
            "seed": self.seed,
            "results": self.results,
        });
        serde_json::to_string_pretty(&doc).expect("report serialization")
    }
}

/// Digest of the run's input files, in flag order: sha256 over
/// `name \0 bytes \0` per input.
pub fn digest_inputs(inputs: &[(&str, &[u8])]) -> String {
    let mut hasher = Sha256::new();
    for (name, bytes) in inputs {
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(bytes);
        hasher.update([0]);
    }
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}
