use super::{CtHandle, Handle, HisaError, Opcode, PtHandle};
use std::fmt::Write as _;

/// One recorded instruction: opcode, operand handles, scalar arguments
/// and the result handle, if any. Encoded slot values are not retained;
/// rotation amounts are stored normalised to a left rotation.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TraceEntry {
    pub opcode: Opcode,
    pub in_place: bool,
    pub operands: Vec<Handle>,
    pub scalars: Vec<i64>,
    pub result: Option<Handle>,
}

/// Ordered instruction record of one backend's execution.
///
/// The text form is one instruction per line:
///
/// ```text
/// encode 30 -> pt0
/// encrypt pt0 -> ct1
/// rotLeftAssign ct1 2 -> ct1
/// maxScalarDivisor ct1 1000 8 -> _
/// ```
///
/// Operand handles come first, scalar arguments after, and the token
/// after `->` is the result handle or `_`. In-place execution appends
/// `Assign` to the opcode name.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct HisaTrace {
    entries: Vec<TraceEntry>,
}

impl HisaTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: TraceEntry) {
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceEntry> {
        self.entries.iter()
    }

    pub fn count(&self, opcode: Opcode) -> usize {
        self.entries.iter().filter(|e| e.opcode == opcode).count()
    }

    /// Entries in the half-open range `[start, end)`; used to inspect
    /// the instructions emitted by a single kernel or circuit node.
    pub fn slice(&self, start: usize, end: usize) -> &[TraceEntry] {
        &self.entries[start..end]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let mut line = String::new();
            line.push_str(e.opcode.name());
            if e.in_place {
                line.push_str("Assign");
            }
            for h in &e.operands {
                write!(line, " {h}").unwrap();
            }
            for s in &e.scalars {
                write!(line, " {s}").unwrap();
            }
            match &e.result {
                Some(h) => write!(line, " -> {h}").unwrap(),
                None => line.push_str(" -> _"),
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, HisaError> {
        let mut trace = HisaTrace::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            trace.push(parse_line(line, idx + 1)?);
        }
        Ok(trace)
    }
}

fn parse_handle(tok: &str, line: usize) -> Result<Handle, HisaError> {
    let bad = |reason: String| HisaError::TraceParse { line, reason };
    if let Some(id) = tok.strip_prefix("ct") {
        let id = id.parse().map_err(|_| bad(format!("bad handle {tok:?}")))?;
        Ok(Handle::Ct(CtHandle(id)))
    } else if let Some(id) = tok.strip_prefix("pt") {
        let id = id.parse().map_err(|_| bad(format!("bad handle {tok:?}")))?;
        Ok(Handle::Pt(PtHandle(id)))
    } else {
        Err(bad(format!("expected handle, got {tok:?}")))
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<TraceEntry, HisaError> {
    let bad = |reason: String| HisaError::TraceParse {
        line: lineno,
        reason,
    };
    let mut tokens = line.split_whitespace();
    let head = tokens.next().ok_or_else(|| bad("empty line".into()))?;
    let (name, in_place) = match head.strip_suffix("Assign") {
        Some(base) => (base, true),
        None => (head, false),
    };
    let opcode = Opcode::from_name(name).ok_or_else(|| bad(format!("unknown opcode {head:?}")))?;
    if in_place && !opcode.has_assign_form() {
        return Err(bad(format!("{name} has no in-place form")));
    }

    let mut operands = Vec::new();
    let mut scalars = Vec::new();
    let mut result = None;
    let mut after_arrow = false;
    for tok in tokens {
        if after_arrow {
            if result.is_some() {
                return Err(bad("trailing tokens after result".into()));
            }
            result = if tok == "_" {
                // keep None
                continue;
            } else {
                Some(parse_handle(tok, lineno)?)
            };
        } else if tok == "->" {
            after_arrow = true;
        } else if tok.starts_with("ct") || tok.starts_with("pt") {
            if !scalars.is_empty() {
                return Err(bad("handle operand after scalar argument".into()));
            }
            operands.push(parse_handle(tok, lineno)?);
        } else {
            let v = tok
                .parse()
                .map_err(|_| bad(format!("expected integer, got {tok:?}")))?;
            scalars.push(v);
        }
    }
    if !after_arrow {
        return Err(bad("missing ->".into()));
    }
    Ok(TraceEntry {
        opcode,
        in_place,
        operands,
        scalars,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> HisaTrace {
        let mut t = HisaTrace::new();
        t.push(TraceEntry {
            opcode: Opcode::Encode,
            in_place: false,
            operands: vec![],
            scalars: vec![30],
            result: Some(Handle::Pt(PtHandle(0))),
        });
        t.push(TraceEntry {
            opcode: Opcode::Encrypt,
            in_place: false,
            operands: vec![Handle::Pt(PtHandle(0))],
            scalars: vec![],
            result: Some(Handle::Ct(CtHandle(1))),
        });
        t.push(TraceEntry {
            opcode: Opcode::RotLeft,
            in_place: true,
            operands: vec![Handle::Ct(CtHandle(1))],
            scalars: vec![2],
            result: Some(Handle::Ct(CtHandle(1))),
        });
        t.push(TraceEntry {
            opcode: Opcode::MaxScalarDivisor,
            in_place: false,
            operands: vec![Handle::Ct(CtHandle(1))],
            scalars: vec![1000, 8],
            result: None,
        });
        t
    }

    #[test]
    fn text_round_trip() {
        let t = sample();
        let text = t.to_text();
        assert!(text.contains("rotLeftAssign ct1 2 -> ct1"));
        assert!(text.contains("maxScalarDivisor ct1 1000 8 -> _"));
        let back = HisaTrace::from_text(&text).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_unknown_opcode() {
        assert!(matches!(
            HisaTrace::from_text("frobnicate ct0 -> ct1"),
            Err(HisaError::TraceParse { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_bogus_assign() {
        assert!(HisaTrace::from_text("encryptAssign pt0 -> ct1").is_err());
    }
}
