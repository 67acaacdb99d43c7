use crate::hisa::{
    BackendConfig, CtHandle, Handle, HisaBackend, HisaError, HisaInstruction, HisaTrace,
    InstrOutput, Profile, PtHandle,
};
use crate::Rat;
use num::Zero;
use std::collections::HashMap;

#[derive(Clone, Copy, Debug)]
struct SymCt {
    scale_log: i32,
    consumed: u32,
}

#[derive(Clone, Copy, Debug)]
struct SymPt {
    scale_log: i32,
}

const DEFAULT_PROFILES: [Profile; 3] = [Profile::Encryption, Profile::Integers, Profile::Division];

/// Backend that executes instructions without slot values. It enforces
/// the same handle and scale discipline as the simulator and tracks
/// budget bits consumed per ciphertext, but places no upper bound on
/// consumption: parameter selection runs before any modulus is chosen,
/// and reads the consumption off the trace afterwards.
pub struct SymbolicBackend {
    config: BackendConfig,
    profiles: Vec<Profile>,
    trace: HisaTrace,
    cts: HashMap<u64, SymCt>,
    pts: HashMap<u64, SymPt>,
    next_id: u64,
    max_decrypted_consumed: Option<u32>,
}

impl SymbolicBackend {
    pub fn new(config: BackendConfig) -> Self {
        Self::with_profiles(config, &DEFAULT_PROFILES)
    }

    pub fn with_profiles(config: BackendConfig, profiles: &[Profile]) -> Self {
        SymbolicBackend {
            config,
            profiles: profiles.to_vec(),
            trace: HisaTrace::new(),
            cts: HashMap::new(),
            pts: HashMap::new(),
            next_id: 0,
            max_decrypted_consumed: None,
        }
    }

    /// Largest consumption seen at a decrypt; zero before any decrypt.
    pub fn consumed_bits(&self) -> u32 {
        self.max_decrypted_consumed.unwrap_or(0)
    }

    pub fn live_ciphertexts(&self) -> usize {
        self.cts.len()
    }

    pub fn live_plaintexts(&self) -> usize {
        self.pts.len()
    }

    pub fn scale_log(&self, c: CtHandle) -> Result<i32, HisaError> {
        Ok(self.ct(c)?.scale_log)
    }

    fn missing(&self, h: Handle) -> HisaError {
        if h.id() >= self.next_id {
            HisaError::UnknownHandle { handle: h }
        } else {
            HisaError::UseAfterFree { handle: h }
        }
    }

    fn ct(&self, c: CtHandle) -> Result<SymCt, HisaError> {
        if let Some(ct) = self.cts.get(&c.0) {
            return Ok(*ct);
        }
        if self.pts.contains_key(&c.0) {
            return Err(HisaError::WrongHandleKind { handle: c.into() });
        }
        Err(self.missing(c.into()))
    }

    fn pt(&self, p: PtHandle) -> Result<SymPt, HisaError> {
        if let Some(pt) = self.pts.get(&p.0) {
            return Ok(*pt);
        }
        if self.cts.contains_key(&p.0) {
            return Err(HisaError::WrongHandleKind { handle: p.into() });
        }
        Err(self.missing(p.into()))
    }

    fn alloc_ct(&mut self, ct: SymCt) -> CtHandle {
        let id = self.next_id;
        self.next_id += 1;
        self.cts.insert(id, ct);
        CtHandle(id)
    }

    fn alloc_pt(&mut self, pt: SymPt) -> PtHandle {
        let id = self.next_id;
        self.next_id += 1;
        self.pts.insert(id, pt);
        PtHandle(id)
    }

    fn finish_ct(&mut self, c: CtHandle, in_place: bool, new: SymCt) -> InstrOutput {
        if in_place {
            self.cts.insert(c.0, new);
            InstrOutput::Ct(c)
        } else {
            InstrOutput::Ct(self.alloc_ct(new))
        }
    }

    fn require_scale(left: i32, right: i32) -> Result<(), HisaError> {
        if left != right {
            return Err(HisaError::ScaleMismatch { left, right });
        }
        Ok(())
    }
}

impl HisaBackend for SymbolicBackend {
    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    fn trace(&self) -> &HisaTrace {
        &self.trace
    }

    fn trace_mut(&mut self) -> &mut HisaTrace {
        &mut self.trace
    }

    fn execute_instruction(&mut self, instr: &HisaInstruction) -> Result<InstrOutput, HisaError> {
        use HisaInstruction::*;
        match instr {
            Encrypt { p } => {
                let pt = self.pt(*p)?;
                let ct = SymCt {
                    scale_log: pt.scale_log,
                    consumed: 0,
                };
                Ok(InstrOutput::Ct(self.alloc_ct(ct)))
            }
            Decrypt { c } => {
                let ct = self.ct(*c)?;
                self.max_decrypted_consumed = Some(match self.max_decrypted_consumed {
                    Some(cur) => cur.max(ct.consumed),
                    None => ct.consumed,
                });
                Ok(InstrOutput::Pt(self.alloc_pt(SymPt {
                    scale_log: ct.scale_log,
                })))
            }
            Copy { c } => {
                let ct = self.ct(*c)?;
                Ok(InstrOutput::Ct(self.alloc_ct(ct)))
            }
            Free { h } => {
                let gone = match h {
                    Handle::Ct(c) => self.cts.remove(&c.0).is_some(),
                    Handle::Pt(p) => self.pts.remove(&p.0).is_some(),
                };
                if !gone {
                    return Err(self.missing(*h));
                }
                Ok(InstrOutput::Unit)
            }
            Encode { values, scale_log } => {
                if values.len() > self.config.slot_count {
                    return Err(HisaError::SlotCapacity {
                        count: values.len(),
                        slots: self.config.slot_count,
                    });
                }
                Ok(InstrOutput::Pt(self.alloc_pt(SymPt {
                    scale_log: *scale_log,
                })))
            }
            Decode { p } => {
                self.pt(*p)?;
                Ok(InstrOutput::Values(vec![
                    Rat::zero();
                    self.config.slot_count
                ]))
            }
            RotLeft { c, in_place, .. } | RotRight { c, in_place, .. } => {
                let ct = self.ct(*c)?;
                Ok(self.finish_ct(*c, *in_place, ct))
            }
            Add { c, rhs, in_place } | Sub { c, rhs, in_place } => {
                let a = self.ct(*c)?;
                let b = self.ct(*rhs)?;
                Self::require_scale(a.scale_log, b.scale_log)?;
                let new = SymCt {
                    scale_log: a.scale_log,
                    consumed: a.consumed.max(b.consumed),
                };
                Ok(self.finish_ct(*c, *in_place, new))
            }
            AddPlain { c, p, in_place } | SubPlain { c, p, in_place } => {
                let a = self.ct(*c)?;
                let b = self.pt(*p)?;
                Self::require_scale(a.scale_log, b.scale_log)?;
                Ok(self.finish_ct(*c, *in_place, a))
            }
            AddScalar { c, x, in_place } | SubScalar { c, x, in_place } => {
                let a = self.ct(*c)?;
                Self::require_scale(a.scale_log, x.scale_log)?;
                Ok(self.finish_ct(*c, *in_place, a))
            }
            Mul { c, rhs, in_place } | MulNoRelin { c, rhs, in_place } => {
                let a = self.ct(*c)?;
                let b = self.ct(*rhs)?;
                let new = SymCt {
                    scale_log: a.scale_log + b.scale_log,
                    consumed: a.consumed.max(b.consumed),
                };
                Ok(self.finish_ct(*c, *in_place, new))
            }
            MulPlain { c, p, in_place } => {
                let a = self.ct(*c)?;
                let b = self.pt(*p)?;
                let new = SymCt {
                    scale_log: a.scale_log + b.scale_log,
                    consumed: a.consumed,
                };
                Ok(self.finish_ct(*c, *in_place, new))
            }
            MulScalar { c, x, in_place } => {
                let a = self.ct(*c)?;
                let new = SymCt {
                    scale_log: a.scale_log + x.scale_log,
                    consumed: a.consumed,
                };
                Ok(self.finish_ct(*c, *in_place, new))
            }
            DivScalar {
                c,
                divisor,
                in_place,
            } => {
                if *divisor < 1 || divisor.count_ones() != 1 {
                    return Err(HisaError::InvalidDivisor { divisor: *divisor });
                }
                let bits = divisor.trailing_zeros();
                let a = self.ct(*c)?;
                let new = SymCt {
                    scale_log: a.scale_log - bits as i32,
                    consumed: a.consumed + bits,
                };
                Ok(self.finish_ct(*c, *in_place, new))
            }
            MaxScalarDivisor { c, upper_bound } => {
                self.ct(*c)?;
                if *upper_bound < 1 {
                    return Ok(InstrOutput::Int(1));
                }
                Ok(InstrOutput::Int(1i64 << (*upper_bound as u64).ilog2()))
            }
            Relinearize { c } => {
                self.ct(*c)?;
                Ok(InstrOutput::Unit)
            }
            Bootstrap { c } => {
                let ct = self.ct(*c)?;
                self.cts.insert(
                    c.0,
                    SymCt {
                        scale_log: ct.scale_log,
                        consumed: 0,
                    },
                );
                Ok(InstrOutput::Unit)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hisa::Opcode;
    use crate::sim::{SimBackend, SimConfig};

    fn backend() -> SymbolicBackend {
        SymbolicBackend::new(BackendConfig::new(8, 240))
    }

    #[test]
    fn tracks_consumption_through_rescales() {
        let mut sym = backend();
        let p = sym.encode(&[], 30).unwrap();
        let c = sym.encrypt(p).unwrap();
        let c = sym.div_scalar(c, 1 << 5).unwrap();
        let c = sym.div_scalar(c, 1 << 3).unwrap();
        assert_eq!(sym.consumed_bits(), 0);
        sym.decrypt(c).unwrap();
        assert_eq!(sym.consumed_bits(), 8);
    }

    #[test]
    fn consumption_is_unbounded() {
        let mut sym = SymbolicBackend::new(BackendConfig::new(8, 10));
        let p = sym.encode(&[], 30).unwrap();
        let c = sym.encrypt(p).unwrap();
        let c = sym.div_scalar(c, 1 << 25).unwrap();
        sym.decrypt(c).unwrap();
        assert_eq!(sym.consumed_bits(), 25);
    }

    #[test]
    fn undeclared_profiles_are_rejected() {
        let mut sym = backend();
        let p = sym.encode(&[], 30).unwrap();
        let c = sym.encrypt(p).unwrap();
        assert!(matches!(
            sym.mul_no_relin(c, c),
            Err(HisaError::UnsupportedProfile {
                opcode: Opcode::MulNoRelin,
                ..
            })
        ));
        let before = sym.trace().len();
        assert!(sym.bootstrap(c).is_err());
        assert_eq!(sym.trace().len(), before);
    }

    #[test]
    fn bootstrap_resets_consumption_when_declared() {
        let mut sym = SymbolicBackend::with_profiles(BackendConfig::new(8, 240), &Profile::ALL);
        let p = sym.encode(&[], 30).unwrap();
        let c = sym.encrypt(p).unwrap();
        let c = sym.div_scalar(c, 1 << 9).unwrap();
        sym.bootstrap(c).unwrap();
        let c = sym.div_scalar(c, 1 << 4).unwrap();
        sym.decrypt(c).unwrap();
        assert_eq!(sym.consumed_bits(), 4);
    }

    fn ops<B: HisaBackend>(b: &mut B) {
        let vals: Vec<Rat> = (1..5).map(|i| Rat::from_integer(i.into())).collect();
        let p = b.encode(&vals, 8).unwrap();
        let c = b.encrypt(p).unwrap();
        let r = b.rot_right(c, 3).unwrap();
        b.add_assign(r, c).unwrap();
        let d = b.div_scalar(r, 4).unwrap();
        let out = b.decrypt(d).unwrap();
        b.decode(out).unwrap();
    }

    #[test]
    fn trace_matches_simulator_structurally() {
        let mut sim = SimBackend::new(SimConfig::exact(4, 60)).unwrap();
        let mut sym = SymbolicBackend::new(BackendConfig::new(8, 60));
        ops(&mut sim);
        ops(&mut sym);
        assert_eq!(sim.trace().to_text(), sym.trace().to_text());
    }
}
