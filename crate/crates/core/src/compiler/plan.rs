//! The artifacts the compiler produces and the tables it consumes.

use crate::tensor::CipherTensorMeta;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Layout assignment policy. `Hw` and `Chw` use one family for every
/// rank-4 edge. The mixed policies switch at the flattening boundary:
/// `HwConv` runs the convolutional stack in HW but packs the edge
/// feeding the flatten in CHW, so the fully connected part starts
/// compact; `ChwFc` is the mirror image.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Hw,
    Chw,
    HwConv,
    ChwFc,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Hw,
        StrategyKind::Chw,
        StrategyKind::HwConv,
        StrategyKind::ChwFc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Hw => "hw",
            StrategyKind::Chw => "chw",
            StrategyKind::HwConv => "hwconv",
            StrategyKind::ChwFc => "chwfc",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hw" => Ok(StrategyKind::Hw),
            "chw" => Ok(StrategyKind::Chw),
            "hwconv" => Ok(StrategyKind::HwConv),
            "chwfc" => Ok(StrategyKind::ChwFc),
            other => Err(format!(
                "unknown layout strategy {other:?} (expected hw, chw, hwconv or chwfc)"
            )),
        }
    }
}

/// Ring-degree candidates with the largest modulus each one supports
/// at the target security level, ascending in both columns.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecurityTable {
    entries: Vec<(u32, u32)>,
}

impl SecurityTable {
    pub fn new(entries: Vec<(u32, u32)>) -> Result<SecurityTable, String> {
        if entries.is_empty() {
            return Err("security table is empty".into());
        }
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(format!(
                    "security table must ascend in both columns, got {:?} then {:?}",
                    w[0], w[1]
                ));
            }
        }
        Ok(SecurityTable { entries })
    }

    pub fn from_json(text: &str) -> Result<SecurityTable, String> {
        let entries: Vec<(u32, u32)> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        SecurityTable::new(entries)
    }

    /// `(log_n, max_log_q)` pairs, smallest ring first.
    pub fn candidates(&self) -> &[(u32, u32)] {
        &self.entries
    }
}

impl Default for SecurityTable {
    /// 128-bit-security ceiling for each ring degree.
    fn default() -> Self {
        SecurityTable {
            entries: vec![(13, 218), (14, 438), (15, 881), (16, 1772)],
        }
    }
}

/// Everything the runtime needs to execute a circuit the way the
/// compiler planned it: ring and modulus sizes, fixed-point scales,
/// the layout of every edge, input padding margins, and the rotation
/// amounts that need key material.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CompilationPlan {
    pub strategy: StrategyKind,
    pub log_n: u32,
    pub log_q: u32,
    pub cipher_log_p: i32,
    pub plain_log_p: i32,
    pub output_precision_log: i32,
    /// Margin of zero slots around each input image, in pixels:
    /// `[rows, cols]` on each side.
    pub padding: BTreeMap<String, [usize; 2]>,
    /// Layout of every edge, keyed by input name or node id.
    pub layouts: BTreeMap<String, CipherTensorMeta>,
    pub rotation_keys: Vec<u64>,
    /// Hash of the canonical circuit text this plan was built from.
    pub circuit_hash: String,
}

impl CompilationPlan {
    pub fn from_json(text: &str) -> Result<CompilationPlan, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }
}

/// Hex sha-256 of the canonical serialization of a circuit.
pub fn circuit_hash(canonical_json: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(canonical_json.as_bytes());
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        use std::fmt::Write;
        write!(s, "{b:02x}").expect("hex write");
    }
    s
}
