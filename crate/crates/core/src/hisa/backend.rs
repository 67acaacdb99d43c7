use super::{
    BackendConfig, CtHandle, FixedScalar, Handle, HisaError, HisaInstruction, HisaTrace, Opcode,
    Profile, PtHandle, TraceEntry,
};
use crate::Rat;

/// What an instruction produced. `Unit` covers in-place updates, frees
/// and the relinearize/bootstrap maintenance instructions.
#[derive(Clone, Debug)]
pub enum InstrOutput {
    Ct(CtHandle),
    Pt(PtHandle),
    Values(Vec<Rat>),
    Int(i64),
    Unit,
}

impl InstrOutput {
    fn kind(&self) -> &'static str {
        match self {
            InstrOutput::Ct(_) => "ciphertext handle",
            InstrOutput::Pt(_) => "plaintext handle",
            InstrOutput::Values(_) => "values",
            InstrOutput::Int(_) => "integer",
            InstrOutput::Unit => "unit",
        }
    }

    fn handle(&self) -> Option<Handle> {
        match self {
            InstrOutput::Ct(c) => Some((*c).into()),
            InstrOutput::Pt(p) => Some((*p).into()),
            _ => None,
        }
    }

    fn into_ct(self) -> Result<CtHandle, HisaError> {
        match self {
            InstrOutput::Ct(c) => Ok(c),
            other => Err(HisaError::WrongOutputKind {
                expected: "ciphertext handle",
                got: other.kind(),
            }),
        }
    }

    fn into_pt(self) -> Result<PtHandle, HisaError> {
        match self {
            InstrOutput::Pt(p) => Ok(p),
            other => Err(HisaError::WrongOutputKind {
                expected: "plaintext handle",
                got: other.kind(),
            }),
        }
    }

    fn into_values(self) -> Result<Vec<Rat>, HisaError> {
        match self {
            InstrOutput::Values(v) => Ok(v),
            other => Err(HisaError::WrongOutputKind {
                expected: "values",
                got: other.kind(),
            }),
        }
    }

    fn into_int(self) -> Result<i64, HisaError> {
        match self {
            InstrOutput::Int(v) => Ok(v),
            other => Err(HisaError::WrongOutputKind {
                expected: "integer",
                got: other.kind(),
            }),
        }
    }
}

/// Implemented by every execution and analysis engine.
///
/// Only [`execute_instruction`](Self::execute_instruction), the
/// accessors and the profile declaration are required. The provided
/// [`execute`](Self::execute) wrapper performs profile gating and
/// records successful instructions into the trace; the typed methods
/// below it are thin builders over `execute` and are what kernels call.
pub trait HisaBackend {
    fn config(&self) -> &BackendConfig;

    /// Profiles this backend declares. Instructions from any other
    /// profile fail uniformly, whatever the opcode.
    fn profiles(&self) -> &[Profile];

    /// Raw semantics, without gating or recording. Implementations
    /// match exhaustively over the instruction enum, so extending the
    /// instruction set is a compile error until every backend handles
    /// the new shape.
    fn execute_instruction(&mut self, instr: &HisaInstruction) -> Result<InstrOutput, HisaError>;

    fn trace(&self) -> &HisaTrace;

    fn trace_mut(&mut self) -> &mut HisaTrace;

    fn supports(&self, profile: Profile) -> bool {
        self.profiles().contains(&profile)
    }

    fn execute(&mut self, instr: &HisaInstruction) -> Result<InstrOutput, HisaError> {
        let opcode = instr.opcode();
        let profile = opcode.profile();
        if !self.supports(profile) {
            return Err(HisaError::UnsupportedProfile { opcode, profile });
        }
        let out = self.execute_instruction(instr)?;
        let mut scalars = instr.trace_scalars(self.config().slot_count);
        if let InstrOutput::Int(v) = &out {
            scalars.push(*v);
        }
        self.trace_mut().push(TraceEntry {
            opcode,
            in_place: instr.in_place(),
            operands: instr.operands(),
            scalars,
            result: out.handle(),
        });
        Ok(out)
    }

    fn encrypt(&mut self, p: PtHandle) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::Encrypt { p })?.into_ct()
    }

    fn decrypt(&mut self, c: CtHandle) -> Result<PtHandle, HisaError> {
        self.execute(&HisaInstruction::Decrypt { c })?.into_pt()
    }

    fn copy(&mut self, c: CtHandle) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::Copy { c })?.into_ct()
    }

    fn free(&mut self, h: impl Into<Handle>) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::Free { h: h.into() })?;
        Ok(())
    }

    fn encode(&mut self, values: &[Rat], scale_log: i32) -> Result<PtHandle, HisaError> {
        self.execute(&HisaInstruction::Encode {
            values: values.to_vec(),
            scale_log,
        })?
        .into_pt()
    }

    fn decode(&mut self, p: PtHandle) -> Result<Vec<Rat>, HisaError> {
        self.execute(&HisaInstruction::Decode { p })?.into_values()
    }

    fn rot_left(&mut self, c: CtHandle, amount: u64) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::RotLeft {
            c,
            amount,
            in_place: false,
        })?
        .into_ct()
    }

    fn rot_left_assign(&mut self, c: CtHandle, amount: u64) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::RotLeft {
            c,
            amount,
            in_place: true,
        })?;
        Ok(())
    }

    fn rot_right(&mut self, c: CtHandle, amount: u64) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::RotRight {
            c,
            amount,
            in_place: false,
        })?
        .into_ct()
    }

    fn rot_right_assign(&mut self, c: CtHandle, amount: u64) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::RotRight {
            c,
            amount,
            in_place: true,
        })?;
        Ok(())
    }

    fn add(&mut self, c: CtHandle, rhs: CtHandle) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::Add {
            c,
            rhs,
            in_place: false,
        })?
        .into_ct()
    }

    fn add_assign(&mut self, c: CtHandle, rhs: CtHandle) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::Add {
            c,
            rhs,
            in_place: true,
        })?;
        Ok(())
    }

    fn add_plain(&mut self, c: CtHandle, p: PtHandle) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::AddPlain {
            c,
            p,
            in_place: false,
        })?
        .into_ct()
    }

    fn add_plain_assign(&mut self, c: CtHandle, p: PtHandle) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::AddPlain {
            c,
            p,
            in_place: true,
        })?;
        Ok(())
    }

    fn add_scalar(&mut self, c: CtHandle, x: FixedScalar) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::AddScalar {
            c,
            x,
            in_place: false,
        })?
        .into_ct()
    }

    fn add_scalar_assign(&mut self, c: CtHandle, x: FixedScalar) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::AddScalar {
            c,
            x,
            in_place: true,
        })?;
        Ok(())
    }

    fn sub(&mut self, c: CtHandle, rhs: CtHandle) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::Sub {
            c,
            rhs,
            in_place: false,
        })?
        .into_ct()
    }

    fn sub_assign(&mut self, c: CtHandle, rhs: CtHandle) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::Sub {
            c,
            rhs,
            in_place: true,
        })?;
        Ok(())
    }

    fn sub_plain(&mut self, c: CtHandle, p: PtHandle) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::SubPlain {
            c,
            p,
            in_place: false,
        })?
        .into_ct()
    }

    fn sub_plain_assign(&mut self, c: CtHandle, p: PtHandle) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::SubPlain {
            c,
            p,
            in_place: true,
        })?;
        Ok(())
    }

    fn sub_scalar(&mut self, c: CtHandle, x: FixedScalar) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::SubScalar {
            c,
            x,
            in_place: false,
        })?
        .into_ct()
    }

    fn sub_scalar_assign(&mut self, c: CtHandle, x: FixedScalar) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::SubScalar {
            c,
            x,
            in_place: true,
        })?;
        Ok(())
    }

    fn mul(&mut self, c: CtHandle, rhs: CtHandle) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::Mul {
            c,
            rhs,
            in_place: false,
        })?
        .into_ct()
    }

    fn mul_assign(&mut self, c: CtHandle, rhs: CtHandle) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::Mul {
            c,
            rhs,
            in_place: true,
        })?;
        Ok(())
    }

    fn mul_plain(&mut self, c: CtHandle, p: PtHandle) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::MulPlain {
            c,
            p,
            in_place: false,
        })?
        .into_ct()
    }

    fn mul_plain_assign(&mut self, c: CtHandle, p: PtHandle) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::MulPlain {
            c,
            p,
            in_place: true,
        })?;
        Ok(())
    }

    fn mul_scalar(&mut self, c: CtHandle, x: FixedScalar) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::MulScalar {
            c,
            x,
            in_place: false,
        })?
        .into_ct()
    }

    fn mul_scalar_assign(&mut self, c: CtHandle, x: FixedScalar) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::MulScalar {
            c,
            x,
            in_place: true,
        })?;
        Ok(())
    }

    fn div_scalar(&mut self, c: CtHandle, divisor: i64) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::DivScalar {
            c,
            divisor,
            in_place: false,
        })?
        .into_ct()
    }

    fn div_scalar_assign(&mut self, c: CtHandle, divisor: i64) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::DivScalar {
            c,
            divisor,
            in_place: true,
        })?;
        Ok(())
    }

    /// Largest power-of-two divisor `d` with `d <= upper_bound` whose
    /// rescale still fits the remaining modulus budget; 1 if none does.
    fn max_scalar_divisor(&mut self, c: CtHandle, upper_bound: i64) -> Result<i64, HisaError> {
        self.execute(&HisaInstruction::MaxScalarDivisor { c, upper_bound })?
            .into_int()
    }

    fn mul_no_relin(&mut self, c: CtHandle, rhs: CtHandle) -> Result<CtHandle, HisaError> {
        self.execute(&HisaInstruction::MulNoRelin {
            c,
            rhs,
            in_place: false,
        })?
        .into_ct()
    }

    fn mul_no_relin_assign(&mut self, c: CtHandle, rhs: CtHandle) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::MulNoRelin {
            c,
            rhs,
            in_place: true,
        })?;
        Ok(())
    }

    fn relinearize(&mut self, c: CtHandle) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::Relinearize { c })?;
        Ok(())
    }

    fn bootstrap(&mut self, c: CtHandle) -> Result<(), HisaError> {
        self.execute(&HisaInstruction::Bootstrap { c })?;
        Ok(())
    }
}

fn expect_ct(h: Handle) -> Result<CtHandle, HisaError> {
    match h {
        Handle::Ct(c) => Ok(c),
        Handle::Pt(_) => Err(HisaError::WrongHandleKind { handle: h }),
    }
}

fn expect_pt(h: Handle) -> Result<PtHandle, HisaError> {
    match h {
        Handle::Pt(p) => Ok(p),
        Handle::Ct(_) => Err(HisaError::WrongHandleKind { handle: h }),
    }
}

fn scalar_arg(e: &TraceEntry, idx: usize, index: usize) -> Result<i64, HisaError> {
    e.scalars
        .get(idx)
        .copied()
        .ok_or_else(|| HisaError::TraceParse {
            line: index + 1,
            reason: format!("{} needs {} scalar arguments", e.opcode, idx + 1),
        })
}

fn operand(e: &TraceEntry, idx: usize, index: usize) -> Result<Handle, HisaError> {
    e.operands
        .get(idx)
        .copied()
        .ok_or_else(|| HisaError::TraceParse {
            line: index + 1,
            reason: format!("{} needs {} operands", e.opcode, idx + 1),
        })
}

/// Re-executes a recorded trace against a backend, checking that each
/// instruction lands on the recorded result handle. Encoded values are
/// not stored in traces, so `encode` replays as all-zero slots; handle
/// assignment and instruction structure are what replay verifies.
pub fn replay<B: HisaBackend>(trace: &HisaTrace, backend: &mut B) -> Result<(), HisaError> {
    let s = backend.config().slot_count as u64;
    for (index, e) in trace.iter().enumerate() {
        let instr = {
            use Opcode::*;
            let ct0 = |e: &TraceEntry| expect_ct(operand(e, 0, index)?);
            match e.opcode {
                Encrypt => HisaInstruction::Encrypt {
                    p: expect_pt(operand(e, 0, index)?)?,
                },
                Decrypt => HisaInstruction::Decrypt { c: ct0(e)? },
                Copy => HisaInstruction::Copy { c: ct0(e)? },
                Free => HisaInstruction::Free {
                    h: operand(e, 0, index)?,
                },
                Encode => HisaInstruction::Encode {
                    values: Vec::new(),
                    scale_log: scalar_arg(e, 0, index)? as i32,
                },
                Decode => HisaInstruction::Decode {
                    p: expect_pt(operand(e, 0, index)?)?,
                },
                RotLeft => HisaInstruction::RotLeft {
                    c: ct0(e)?,
                    amount: scalar_arg(e, 0, index)? as u64,
                    in_place: e.in_place,
                },
                // The recorded amount is left-normalised; reverse it so
                // the replayed instruction re-records identically.
                RotRight => HisaInstruction::RotRight {
                    c: ct0(e)?,
                    amount: (s - scalar_arg(e, 0, index)? as u64 % s) % s,
                    in_place: e.in_place,
                },
                Add => HisaInstruction::Add {
                    c: ct0(e)?,
                    rhs: expect_ct(operand(e, 1, index)?)?,
                    in_place: e.in_place,
                },
                Sub => HisaInstruction::Sub {
                    c: ct0(e)?,
                    rhs: expect_ct(operand(e, 1, index)?)?,
                    in_place: e.in_place,
                },
                Mul => HisaInstruction::Mul {
                    c: ct0(e)?,
                    rhs: expect_ct(operand(e, 1, index)?)?,
                    in_place: e.in_place,
                },
                MulNoRelin => HisaInstruction::MulNoRelin {
                    c: ct0(e)?,
                    rhs: expect_ct(operand(e, 1, index)?)?,
                    in_place: e.in_place,
                },
                AddPlain => HisaInstruction::AddPlain {
                    c: ct0(e)?,
                    p: expect_pt(operand(e, 1, index)?)?,
                    in_place: e.in_place,
                },
                SubPlain => HisaInstruction::SubPlain {
                    c: ct0(e)?,
                    p: expect_pt(operand(e, 1, index)?)?,
                    in_place: e.in_place,
                },
                MulPlain => HisaInstruction::MulPlain {
                    c: ct0(e)?,
                    p: expect_pt(operand(e, 1, index)?)?,
                    in_place: e.in_place,
                },
                AddScalar => HisaInstruction::AddScalar {
                    c: ct0(e)?,
                    x: FixedScalar::new(scalar_arg(e, 0, index)?, scalar_arg(e, 1, index)? as i32),
                    in_place: e.in_place,
                },
                SubScalar => HisaInstruction::SubScalar {
                    c: ct0(e)?,
                    x: FixedScalar::new(scalar_arg(e, 0, index)?, scalar_arg(e, 1, index)? as i32),
                    in_place: e.in_place,
                },
                MulScalar => HisaInstruction::MulScalar {
                    c: ct0(e)?,
                    x: FixedScalar::new(scalar_arg(e, 0, index)?, scalar_arg(e, 1, index)? as i32),
                    in_place: e.in_place,
                },
                DivScalar => HisaInstruction::DivScalar {
                    c: ct0(e)?,
                    divisor: scalar_arg(e, 0, index)?,
                    in_place: e.in_place,
                },
                MaxScalarDivisor => HisaInstruction::MaxScalarDivisor {
                    c: ct0(e)?,
                    upper_bound: scalar_arg(e, 0, index)?,
                },
                Relinearize => HisaInstruction::Relinearize { c: ct0(e)? },
                Bootstrap => HisaInstruction::Bootstrap { c: ct0(e)? },
            }
        };
        let out = backend.execute(&instr)?;
        if out.handle() != e.result {
            return Err(HisaError::ReplayMismatch {
                index,
                recorded: e.result,
                got: out.handle(),
            });
        }
    }
    Ok(())
}
