use super::{SimConfig, SimMode};
use crate::hisa::{
    BackendConfig, CtHandle, Handle, HisaBackend, HisaError, HisaInstruction, HisaTrace,
    InstrOutput, Opcode, Profile, PtHandle,
};
use crate::{pow2, Rat};
use num::{BigInt, FromPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::HashMap;

/// Slots hold scaled mantissas: the represented value of slot `i` is
/// `slots[i] / 2^scale_log`. In noisy mode mantissas stay
/// integer-valued; in exact mode `divScalar` keeps full rationals.
#[derive(Clone, Debug)]
struct CipherSim {
    slots: Vec<Rat>,
    scale_log: i32,
    log_q_remaining: u32,
    noise_bound: f64,
}

#[derive(Clone, Debug)]
struct PlainSim {
    slots: Vec<Rat>,
    scale_log: i32,
}

const PROFILES: [Profile; 4] = [
    Profile::Encryption,
    Profile::Integers,
    Profile::Division,
    Profile::Relin,
];

/// Value-carrying backend. Executes the instruction set over plaintext
/// slot vectors while modelling what a leveled scheme would track:
/// per-ciphertext scale, remaining modulus budget, and optionally a
/// noise bound with a matching seeded perturbation.
///
/// There is no bootstrapping; the `Bootstrap` profile is undeclared and
/// budget exhaustion is a hard error.
pub struct SimBackend {
    sim: SimConfig,
    config: BackendConfig,
    trace: HisaTrace,
    cts: HashMap<u64, CipherSim>,
    pts: HashMap<u64, PlainSim>,
    next_id: u64,
    rng: ChaCha12Rng,
    min_decrypted_remaining: Option<u32>,
}

impl SimBackend {
    pub fn new(sim: SimConfig) -> Result<Self, HisaError> {
        sim.validate()?;
        let config = BackendConfig::with_log_n(sim.log_n, sim.log_q);
        config.validate()?;
        let rng = ChaCha12Rng::seed_from_u64(sim.seed);
        Ok(SimBackend {
            sim,
            config,
            trace: HisaTrace::new(),
            cts: HashMap::new(),
            pts: HashMap::new(),
            next_id: 0,
            rng,
            min_decrypted_remaining: None,
        })
    }

    pub fn with_scales(mut self, cipher_scale_log: i32, plain_scale_log: i32) -> Self {
        self.config.cipher_scale_log = cipher_scale_log;
        self.config.plain_scale_log = plain_scale_log;
        self
    }

    pub fn sim_config(&self) -> &SimConfig {
        &self.sim
    }

    /// Decoded slot values `mantissa / 2^scale_log`, all slots.
    pub fn slot_values(&self, c: CtHandle) -> Result<Vec<Rat>, HisaError> {
        let ct = self.ct(c)?;
        let f = pow2(-ct.scale_log);
        Ok(ct.slots.iter().map(|m| m * &f).collect())
    }

    pub fn scale_log(&self, c: CtHandle) -> Result<i32, HisaError> {
        Ok(self.ct(c)?.scale_log)
    }

    pub fn log_q_remaining(&self, c: CtHandle) -> Result<u32, HisaError> {
        Ok(self.ct(c)?.log_q_remaining)
    }

    pub fn noise_bound(&self, c: CtHandle) -> Result<f64, HisaError> {
        Ok(self.ct(c)?.noise_bound)
    }

    /// Budget bits consumed by the most-consumed ciphertext decrypted
    /// so far: `logQ` minus the smallest remaining budget seen at a
    /// `decrypt`. Zero if nothing was decrypted yet.
    pub fn consumed_bits(&self) -> u32 {
        self.config.log_q - self.min_decrypted_remaining.unwrap_or(self.config.log_q)
    }

    pub fn live_ciphertexts(&self) -> usize {
        self.cts.len()
    }

    pub fn live_plaintexts(&self) -> usize {
        self.pts.len()
    }

    fn missing(&self, h: Handle) -> HisaError {
        if h.id() >= self.next_id {
            HisaError::UnknownHandle { handle: h }
        } else {
            HisaError::UseAfterFree { handle: h }
        }
    }

    fn ct(&self, c: CtHandle) -> Result<&CipherSim, HisaError> {
        if let Some(ct) = self.cts.get(&c.0) {
            return Ok(ct);
        }
        if self.pts.contains_key(&c.0) {
            return Err(HisaError::WrongHandleKind { handle: c.into() });
        }
        Err(self.missing(c.into()))
    }

    fn pt(&self, p: PtHandle) -> Result<&PlainSim, HisaError> {
        if let Some(pt) = self.pts.get(&p.0) {
            return Ok(pt);
        }
        if self.cts.contains_key(&p.0) {
            return Err(HisaError::WrongHandleKind { handle: p.into() });
        }
        Err(self.missing(p.into()))
    }

    fn alloc_ct(&mut self, ct: CipherSim) -> CtHandle {
        let id = self.next_id;
        self.next_id += 1;
        self.cts.insert(id, ct);
        CtHandle(id)
    }

    fn alloc_pt(&mut self, pt: PlainSim) -> PtHandle {
        let id = self.next_id;
        self.next_id += 1;
        self.pts.insert(id, pt);
        PtHandle(id)
    }

    fn finish_ct(&mut self, c: CtHandle, in_place: bool, new: CipherSim) -> InstrOutput {
        if in_place {
            self.cts.insert(c.0, new);
            InstrOutput::Ct(c)
        } else {
            InstrOutput::Ct(self.alloc_ct(new))
        }
    }

    fn noisy(&self) -> bool {
        self.sim.mode == SimMode::Noisy
    }

    /// Fresh-noise bound in value units at scale `2^-k`; covers both
    /// grid rounding (the 0.5) and scheme noise proportional to the
    /// square root of the ring degree.
    fn fresh_bound(&self, scale_log: i32) -> f64 {
        let n = (1u64 << self.sim.log_n) as f64;
        (0.5 + self.sim.encoding_error_const * n.sqrt()) * (2f64).powi(-scale_log)
    }

    /// Perturb every slot by a sample uniform in plus or minus
    /// `contribution * 2^-noiseSlackLog`, rounded onto the mantissa grid.
    fn inject(&mut self, slots: &mut [Rat], scale_log: i32, contribution: f64) {
        let amp = contribution * (2f64).powi(-self.sim.noise_slack_log) * (2f64).powi(scale_log);
        for m in slots {
            let d = (self.rng.gen_range(-1.0..=1.0) * amp).round();
            if d != 0.0 {
                let d = BigInt::from_f64(d).unwrap_or_else(BigInt::zero);
                *m += Rat::from_integer(d);
            }
        }
    }

    fn noise_factor(&self) -> f64 {
        (2f64).powi(self.sim.noise_factor_log)
    }
}

impl HisaBackend for SimBackend {
    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn profiles(&self) -> &[Profile] {
        &PROFILES
    }

    fn trace(&self) -> &HisaTrace {
        &self.trace
    }

    fn trace_mut(&mut self) -> &mut HisaTrace {
        &mut self.trace
    }

    fn execute_instruction(&mut self, instr: &HisaInstruction) -> Result<InstrOutput, HisaError> {
        use HisaInstruction::*;
        let s = self.config.slot_count;
        match instr {
            Encrypt { p } => {
                let pt = self.pt(*p)?;
                let mut slots = pt.slots.clone();
                let scale_log = pt.scale_log;
                let noise_bound = if self.noisy() {
                    self.fresh_bound(scale_log)
                } else {
                    0.0
                };
                if self.noisy() {
                    self.inject(&mut slots, scale_log, noise_bound);
                }
                let ct = CipherSim {
                    slots,
                    scale_log,
                    log_q_remaining: self.config.log_q,
                    noise_bound,
                };
                Ok(InstrOutput::Ct(self.alloc_ct(ct)))
            }
            Decrypt { c } => {
                let ct = self.ct(*c)?;
                let pt = PlainSim {
                    slots: ct.slots.clone(),
                    scale_log: ct.scale_log,
                };
                let remaining = ct.log_q_remaining;
                self.min_decrypted_remaining = Some(match self.min_decrypted_remaining {
                    Some(cur) => cur.min(remaining),
                    None => remaining,
                });
                Ok(InstrOutput::Pt(self.alloc_pt(pt)))
            }
            Copy { c } => {
                let ct = self.ct(*c)?.clone();
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
                if values.len() > s {
                    return Err(HisaError::SlotCapacity {
                        count: values.len(),
                        slots: s,
                    });
                }
                let f = pow2(*scale_log);
                let mut slots: Vec<Rat> = values.iter().map(|v| (v * &f).round()).collect();
                slots.resize(s, Rat::zero());
                Ok(InstrOutput::Pt(self.alloc_pt(PlainSim {
                    slots,
                    scale_log: *scale_log,
                })))
            }
            Decode { p } => {
                let pt = self.pt(*p)?;
                let f = pow2(-pt.scale_log);
                Ok(InstrOutput::Values(
                    pt.slots.iter().map(|m| m * &f).collect(),
                ))
            }
            RotLeft {
                c,
                amount,
                in_place,
            }
            | RotRight {
                c,
                amount,
                in_place,
            } => {
                let left = matches!(instr, RotLeft { .. });
                let amt = (*amount % s as u64) as usize;
                let mut new = self.ct(*c)?.clone();
                if left {
                    new.slots.rotate_left(amt);
                } else {
                    new.slots.rotate_right(amt);
                }
                Ok(self.finish_ct(*c, *in_place, new))
            }
            Add { c, rhs, in_place } | Sub { c, rhs, in_place } => {
                let add = matches!(instr, Add { .. });
                let a = self.ct(*c)?;
                let b = self.ct(*rhs)?;
                if a.scale_log != b.scale_log {
                    return Err(HisaError::ScaleMismatch {
                        left: a.scale_log,
                        right: b.scale_log,
                    });
                }
                let slots = a
                    .slots
                    .iter()
                    .zip(&b.slots)
                    .map(|(x, y)| if add { x + y } else { x - y })
                    .collect();
                let new = CipherSim {
                    slots,
                    scale_log: a.scale_log,
                    log_q_remaining: a.log_q_remaining.min(b.log_q_remaining),
                    noise_bound: a.noise_bound.max(b.noise_bound),
                };
                Ok(self.finish_ct(*c, *in_place, new))
            }
            AddPlain { c, p, in_place } | SubPlain { c, p, in_place } => {
                let add = matches!(instr, AddPlain { .. });
                let a = self.ct(*c)?;
                let b = self.pt(*p)?;
                if a.scale_log != b.scale_log {
                    return Err(HisaError::ScaleMismatch {
                        left: a.scale_log,
                        right: b.scale_log,
                    });
                }
                let slots = a
                    .slots
                    .iter()
                    .zip(&b.slots)
                    .map(|(x, y)| if add { x + y } else { x - y })
                    .collect();
                let new = CipherSim {
                    slots,
                    scale_log: a.scale_log,
                    log_q_remaining: a.log_q_remaining,
                    noise_bound: a.noise_bound,
                };
                Ok(self.finish_ct(*c, *in_place, new))
            }
            AddScalar { c, x, in_place } | SubScalar { c, x, in_place } => {
                let add = matches!(instr, AddScalar { .. });
                let a = self.ct(*c)?;
                if a.scale_log != x.scale_log {
                    return Err(HisaError::ScaleMismatch {
                        left: a.scale_log,
                        right: x.scale_log,
                    });
                }
                let m = Rat::from_integer(BigInt::from(x.mantissa));
                let slots = a
                    .slots
                    .iter()
                    .map(|v| if add { v + &m } else { v - &m })
                    .collect();
                let new = CipherSim {
                    slots,
                    scale_log: a.scale_log,
                    log_q_remaining: a.log_q_remaining,
                    noise_bound: a.noise_bound,
                };
                Ok(self.finish_ct(*c, *in_place, new))
            }
            Mul { c, rhs, in_place } | MulNoRelin { c, rhs, in_place } => {
                let relin = matches!(instr, Mul { .. });
                let a = self.ct(*c)?;
                let b = self.ct(*rhs)?;
                let slots = a.slots.iter().zip(&b.slots).map(|(x, y)| x * y).collect();
                let factor = if relin { self.noise_factor() } else { 1.0 };
                let new = CipherSim {
                    slots,
                    scale_log: a.scale_log + b.scale_log,
                    log_q_remaining: a.log_q_remaining.min(b.log_q_remaining),
                    noise_bound: a.noise_bound.max(b.noise_bound) * factor,
                };
                Ok(self.finish_ct(*c, *in_place, new))
            }
            MulPlain { c, p, in_place } => {
                let a = self.ct(*c)?;
                let b = self.pt(*p)?;
                let slots = a.slots.iter().zip(&b.slots).map(|(x, y)| x * y).collect();
                let new = CipherSim {
                    slots,
                    scale_log: a.scale_log + b.scale_log,
                    log_q_remaining: a.log_q_remaining,
                    noise_bound: a.noise_bound,
                };
                Ok(self.finish_ct(*c, *in_place, new))
            }
            MulScalar { c, x, in_place } => {
                let a = self.ct(*c)?;
                let m = Rat::from_integer(BigInt::from(x.mantissa));
                let slots = a.slots.iter().map(|v| v * &m).collect();
                let new = CipherSim {
                    slots,
                    scale_log: a.scale_log + x.scale_log,
                    log_q_remaining: a.log_q_remaining,
                    noise_bound: a.noise_bound,
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
                if a.log_q_remaining < bits {
                    return Err(HisaError::ModulusExhausted {
                        requested: bits,
                        remaining: a.log_q_remaining,
                    });
                }
                let noisy = self.noisy();
                let d = Rat::from_integer(BigInt::from(*divisor));
                let mut slots: Vec<Rat> = a
                    .slots
                    .iter()
                    .map(|m| {
                        let q = m / &d;
                        if noisy {
                            q.round()
                        } else {
                            q
                        }
                    })
                    .collect();
                let scale_log = a.scale_log - bits as i32;
                let log_q_remaining = a.log_q_remaining - bits;
                let mut noise_bound = a.noise_bound / *divisor as f64;
                if noisy {
                    let fresh = self.fresh_bound(scale_log);
                    noise_bound += fresh;
                    self.inject(&mut slots, scale_log, fresh);
                }
                let new = CipherSim {
                    slots,
                    scale_log,
                    log_q_remaining,
                    noise_bound,
                };
                Ok(self.finish_ct(*c, *in_place, new))
            }
            MaxScalarDivisor { c, upper_bound } => {
                let ct = self.ct(*c)?;
                if *upper_bound < 1 {
                    return Ok(InstrOutput::Int(1));
                }
                let j = (*upper_bound as u64).ilog2().min(ct.log_q_remaining);
                Ok(InstrOutput::Int(1i64 << j))
            }
            Relinearize { c } => {
                self.ct(*c)?;
                let factor = self.noise_factor();
                self.cts.get_mut(&c.0).unwrap().noise_bound *= factor;
                Ok(InstrOutput::Unit)
            }
            Bootstrap { .. } => Err(HisaError::UnsupportedProfile {
                opcode: Opcode::Bootstrap,
                profile: Profile::Bootstrap,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hisa::replay;

    fn exact(log_n: u32, log_q: u32) -> SimBackend {
        SimBackend::new(SimConfig::exact(log_n, log_q)).unwrap()
    }

    fn ints(values: &[i64]) -> Vec<Rat> {
        values
            .iter()
            .map(|&v| Rat::from_integer(v.into()))
            .collect()
    }

    #[test]
    fn encode_rounds_onto_grid() {
        let mut sim = exact(4, 60);
        let third = Rat::new(1.into(), 3.into());
        let p = sim.encode(&[third], 4).unwrap();
        let out = sim.decode(p).unwrap();
        assert_eq!(out[0], Rat::new(5.into(), 16.into()));
        assert_eq!(out[1], Rat::zero());
    }

    #[test]
    fn rotations_are_cyclic_and_trace_normalised() {
        let mut sim = exact(4, 60);
        let p = sim.encode(&ints(&[1, 2, 3, 4, 5, 6, 7, 8]), 10).unwrap();
        let c = sim.encrypt(p).unwrap();
        let l = sim.rot_left(c, 3).unwrap();
        assert_eq!(sim.slot_values(l).unwrap(), ints(&[4, 5, 6, 7, 8, 1, 2, 3]));
        let r = sim.rot_right(c, 2).unwrap();
        assert_eq!(sim.slot_values(r).unwrap(), ints(&[7, 8, 1, 2, 3, 4, 5, 6]));
        let entry = sim.trace().entries().last().unwrap();
        assert_eq!(entry.opcode, Opcode::RotRight);
        assert_eq!(entry.scalars, vec![6]);
    }

    #[test]
    fn add_requires_matching_scale() {
        let mut sim = exact(4, 60);
        let p1 = sim.encode(&ints(&[1]), 4).unwrap();
        let p2 = sim.encode(&ints(&[1]), 6).unwrap();
        let c1 = sim.encrypt(p1).unwrap();
        let c2 = sim.encrypt(p2).unwrap();
        assert_eq!(
            sim.add(c1, c2),
            Err(HisaError::ScaleMismatch { left: 4, right: 6 })
        );
    }

    #[test]
    fn mul_adds_scales_and_multiplies_values() {
        let mut sim = exact(4, 60);
        let p1 = sim.encode(&ints(&[3]), 4).unwrap();
        let p2 = sim.encode(&ints(&[5]), 6).unwrap();
        let c1 = sim.encrypt(p1).unwrap();
        let c2 = sim.encrypt(p2).unwrap();
        let c3 = sim.mul(c1, c2).unwrap();
        assert_eq!(sim.scale_log(c3).unwrap(), 10);
        assert_eq!(
            sim.slot_values(c3).unwrap()[0],
            Rat::from_integer(15.into())
        );
    }

    #[test]
    fn div_scalar_preserves_value_and_spends_budget() {
        let mut sim = exact(4, 240);
        let p = sim.encode(&ints(&[7]), 30).unwrap();
        let mut c = sim.encrypt(p).unwrap();
        for step in 0..8 {
            c = sim.div_scalar(c, 1 << 30).unwrap();
            assert_eq!(sim.scale_log(c).unwrap(), 30 - 30 * (step + 1));
            assert_eq!(sim.slot_values(c).unwrap()[0], Rat::from_integer(7.into()));
        }
        assert_eq!(sim.log_q_remaining(c).unwrap(), 0);
        assert_eq!(
            sim.div_scalar(c, 1 << 30),
            Err(HisaError::ModulusExhausted {
                requested: 30,
                remaining: 0
            })
        );
    }

    #[test]
    fn div_scalar_rejects_non_power_of_two() {
        let mut sim = exact(4, 60);
        let p = sim.encode(&ints(&[1]), 10).unwrap();
        let c = sim.encrypt(p).unwrap();
        assert_eq!(
            sim.div_scalar(c, 6),
            Err(HisaError::InvalidDivisor { divisor: 6 })
        );
        assert_eq!(
            sim.div_scalar(c, 0),
            Err(HisaError::InvalidDivisor { divisor: 0 })
        );
    }

    #[test]
    fn max_scalar_divisor_respects_bound_and_budget() {
        let mut sim = exact(4, 240);
        let p = sim.encode(&ints(&[1]), 30).unwrap();
        let c = sim.encrypt(p).unwrap();
        assert_eq!(sim.max_scalar_divisor(c, 100).unwrap(), 64);
        assert_eq!(sim.max_scalar_divisor(c, 1).unwrap(), 1);
        assert_eq!(sim.max_scalar_divisor(c, 0).unwrap(), 1);

        let mut tight = exact(4, 33);
        let p = tight.encode(&ints(&[1]), 30).unwrap();
        let c = tight.encrypt(p).unwrap();
        let c = tight.div_scalar(c, 1 << 30).unwrap();
        assert_eq!(tight.max_scalar_divisor(c, 1000).unwrap(), 8);
        let entry = tight.trace().entries().last().unwrap();
        assert_eq!(entry.scalars, vec![1000, 8]);
        assert_eq!(entry.result, None);
    }

    #[test]
    fn handle_lifecycle_errors() {
        let mut sim = exact(4, 60);
        let p = sim.encode(&ints(&[1]), 4).unwrap();
        let c = sim.encrypt(p).unwrap();
        assert!(matches!(
            sim.rot_left(CtHandle(99), 1),
            Err(HisaError::UnknownHandle { .. })
        ));
        sim.free(c).unwrap();
        assert_eq!(
            sim.rot_left(c, 1),
            Err(HisaError::UseAfterFree { handle: c.into() })
        );
        assert_eq!(
            sim.free(c),
            Err(HisaError::UseAfterFree { handle: c.into() })
        );
        assert!(matches!(
            sim.decrypt(CtHandle(p.0)),
            Err(HisaError::WrongHandleKind { .. })
        ));
    }

    #[test]
    fn bootstrap_profile_is_not_declared() {
        let mut sim = exact(4, 60);
        let p = sim.encode(&ints(&[1]), 4).unwrap();
        let c = sim.encrypt(p).unwrap();
        assert_eq!(
            sim.bootstrap(c),
            Err(HisaError::UnsupportedProfile {
                opcode: Opcode::Bootstrap,
                profile: Profile::Bootstrap,
            })
        );
        assert_eq!(sim.trace().count(Opcode::Bootstrap), 0);
    }

    #[test]
    fn noisy_mode_stays_within_bound_and_is_seeded() {
        let mut cfg = SimConfig::new(6, 120, SimMode::Noisy);
        cfg.seed = 7;
        let run = |cfg: &SimConfig| {
            let mut sim = SimBackend::new(cfg.clone()).unwrap();
            let vals: Vec<Rat> = (0..32).map(|i| Rat::new(i.into(), 37.into())).collect();
            let p = sim.encode(&vals, 30).unwrap();
            let c = sim.encrypt(p).unwrap();
            let sq = sim.mul(c, c).unwrap();
            let sq = sim.div_scalar(sq, 1 << 30).unwrap();
            let out = sim.add(sq, c).unwrap();
            (sim.slot_values(out).unwrap(), sim.noise_bound(out).unwrap())
        };
        let (noisy_vals, bound) = run(&cfg);
        let (again, _) = run(&cfg);
        assert_eq!(noisy_vals, again);

        let mut exact_cfg = cfg.clone();
        exact_cfg.mode = SimMode::Exact;
        let (exact_vals, zero_bound) = run(&exact_cfg);
        assert_eq!(zero_bound, 0.0);
        assert!(bound > 0.0);
        for (n, e) in noisy_vals.iter().zip(&exact_vals) {
            let diff = crate::rat_to_f64(&(n - e)).abs();
            assert!(diff <= bound, "deviation {diff} exceeds bound {bound}");
        }
    }

    #[test]
    fn replay_reproduces_trace_byte_for_byte() {
        let mut sim = exact(4, 90);
        let p = sim.encode(&ints(&[1, 2, 3]), 20).unwrap();
        let c = sim.encrypt(p).unwrap();
        let r = sim.rot_right(c, 5).unwrap();
        sim.rot_left_assign(r, 1).unwrap();
        let s = sim.add(c, r).unwrap();
        sim.mul_scalar_assign(s, crate::hisa::FixedScalar::new(3, 2))
            .unwrap();
        sim.max_scalar_divisor(s, 12).unwrap();
        sim.div_scalar_assign(s, 4).unwrap();
        let d = sim.decrypt(s).unwrap();
        sim.decode(d).unwrap();
        sim.free(s).unwrap();

        let mut fresh = exact(4, 90);
        replay(sim.trace(), &mut fresh).unwrap();
        assert_eq!(fresh.trace().to_text(), sim.trace().to_text());
    }
}
