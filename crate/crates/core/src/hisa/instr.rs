use super::{CtHandle, FixedScalar, Handle, PtHandle};
use crate::Rat;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Capability groups of the instruction set. A backend declares the
/// profiles it implements; executing an instruction from an undeclared
/// profile is an error, uniformly for every opcode.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Profile {
    Encryption,
    Integers,
    Division,
    Relin,
    Bootstrap,
}

impl Profile {
    pub const ALL: [Profile; 5] = [
        Profile::Encryption,
        Profile::Integers,
        Profile::Division,
        Profile::Relin,
        Profile::Bootstrap,
    ];
}

/// Flat opcode enum; one variant per instruction-table row. In-place
/// execution is a separate instruction flag, not a separate opcode.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Opcode {
    Encrypt,
    Decrypt,
    Copy,
    Free,
    Encode,
    Decode,
    RotLeft,
    RotRight,
    Add,
    AddPlain,
    AddScalar,
    Sub,
    SubPlain,
    SubScalar,
    Mul,
    MulPlain,
    MulScalar,
    DivScalar,
    MaxScalarDivisor,
    MulNoRelin,
    Relinearize,
    Bootstrap,
}

impl Opcode {
    pub const ALL: [Opcode; 22] = [
        Opcode::Encrypt,
        Opcode::Decrypt,
        Opcode::Copy,
        Opcode::Free,
        Opcode::Encode,
        Opcode::Decode,
        Opcode::RotLeft,
        Opcode::RotRight,
        Opcode::Add,
        Opcode::AddPlain,
        Opcode::AddScalar,
        Opcode::Sub,
        Opcode::SubPlain,
        Opcode::SubScalar,
        Opcode::Mul,
        Opcode::MulPlain,
        Opcode::MulScalar,
        Opcode::DivScalar,
        Opcode::MaxScalarDivisor,
        Opcode::MulNoRelin,
        Opcode::Relinearize,
        Opcode::Bootstrap,
    ];

    pub fn profile(&self) -> Profile {
        use Opcode::*;
        match self {
            Encrypt | Decrypt | Copy | Free => Profile::Encryption,
            Encode | Decode | RotLeft | RotRight | Add | AddPlain | AddScalar | Sub | SubPlain
            | SubScalar | Mul | MulPlain | MulScalar => Profile::Integers,
            DivScalar | MaxScalarDivisor => Profile::Division,
            MulNoRelin | Relinearize => Profile::Relin,
            Bootstrap => Profile::Bootstrap,
        }
    }

    /// Stable lower-camel-case name used in trace files and cost tables.
    pub fn name(&self) -> &'static str {
        use Opcode::*;
        match self {
            Encrypt => "encrypt",
            Decrypt => "decrypt",
            Copy => "copy",
            Free => "free",
            Encode => "encode",
            Decode => "decode",
            RotLeft => "rotLeft",
            RotRight => "rotRight",
            Add => "add",
            AddPlain => "addPlain",
            AddScalar => "addScalar",
            Sub => "sub",
            SubPlain => "subPlain",
            SubScalar => "subScalar",
            Mul => "mul",
            MulPlain => "mulPlain",
            MulScalar => "mulScalar",
            DivScalar => "divScalar",
            MaxScalarDivisor => "maxScalarDivisor",
            MulNoRelin => "mulNoRelin",
            Relinearize => "relinearize",
            Bootstrap => "bootstrap",
        }
    }

    pub fn from_name(name: &str) -> Option<Opcode> {
        Opcode::ALL.iter().copied().find(|op| op.name() == name)
    }

    /// Whether the instruction table defines an in-place form.
    pub fn has_assign_form(&self) -> bool {
        use Opcode::*;
        matches!(
            self,
            RotLeft
                | RotRight
                | Add
                | AddPlain
                | AddScalar
                | Sub
                | SubPlain
                | SubScalar
                | Mul
                | MulPlain
                | MulScalar
                | DivScalar
                | MulNoRelin
        )
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully-specified executable instruction.
///
/// `Encode` carries its slot values inline; this is the one instruction
/// whose trace entry does not round-trip the full payload (analyzers
/// never need encoded values).
#[derive(Clone, PartialEq, Debug)]
pub enum HisaInstruction {
    Encrypt {
        p: PtHandle,
    },
    Decrypt {
        c: CtHandle,
    },
    Copy {
        c: CtHandle,
    },
    Free {
        h: Handle,
    },
    Encode {
        values: Vec<Rat>,
        scale_log: i32,
    },
    Decode {
        p: PtHandle,
    },
    RotLeft {
        c: CtHandle,
        amount: u64,
        in_place: bool,
    },
    RotRight {
        c: CtHandle,
        amount: u64,
        in_place: bool,
    },
    Add {
        c: CtHandle,
        rhs: CtHandle,
        in_place: bool,
    },
    AddPlain {
        c: CtHandle,
        p: PtHandle,
        in_place: bool,
    },
    AddScalar {
        c: CtHandle,
        x: FixedScalar,
        in_place: bool,
    },
    Sub {
        c: CtHandle,
        rhs: CtHandle,
        in_place: bool,
    },
    SubPlain {
        c: CtHandle,
        p: PtHandle,
        in_place: bool,
    },
    SubScalar {
        c: CtHandle,
        x: FixedScalar,
        in_place: bool,
    },
    Mul {
        c: CtHandle,
        rhs: CtHandle,
        in_place: bool,
    },
    MulPlain {
        c: CtHandle,
        p: PtHandle,
        in_place: bool,
    },
    MulScalar {
        c: CtHandle,
        x: FixedScalar,
        in_place: bool,
    },
    DivScalar {
        c: CtHandle,
        divisor: i64,
        in_place: bool,
    },
    MaxScalarDivisor {
        c: CtHandle,
        upper_bound: i64,
    },
    MulNoRelin {
        c: CtHandle,
        rhs: CtHandle,
        in_place: bool,
    },
    Relinearize {
        c: CtHandle,
    },
    Bootstrap {
        c: CtHandle,
    },
}

impl HisaInstruction {
    pub fn opcode(&self) -> Opcode {
        use HisaInstruction::*;
        match self {
            Encrypt { .. } => Opcode::Encrypt,
            Decrypt { .. } => Opcode::Decrypt,
            Copy { .. } => Opcode::Copy,
            Free { .. } => Opcode::Free,
            Encode { .. } => Opcode::Encode,
            Decode { .. } => Opcode::Decode,
            RotLeft { .. } => Opcode::RotLeft,
            RotRight { .. } => Opcode::RotRight,
            Add { .. } => Opcode::Add,
            AddPlain { .. } => Opcode::AddPlain,
            AddScalar { .. } => Opcode::AddScalar,
            Sub { .. } => Opcode::Sub,
            SubPlain { .. } => Opcode::SubPlain,
            SubScalar { .. } => Opcode::SubScalar,
            Mul { .. } => Opcode::Mul,
            MulPlain { .. } => Opcode::MulPlain,
            MulScalar { .. } => Opcode::MulScalar,
            DivScalar { .. } => Opcode::DivScalar,
            MaxScalarDivisor { .. } => Opcode::MaxScalarDivisor,
            MulNoRelin { .. } => Opcode::MulNoRelin,
            Relinearize { .. } => Opcode::Relinearize,
            Bootstrap { .. } => Opcode::Bootstrap,
        }
    }

    pub fn in_place(&self) -> bool {
        use HisaInstruction::*;
        match self {
            RotLeft { in_place, .. }
            | RotRight { in_place, .. }
            | Add { in_place, .. }
            | AddPlain { in_place, .. }
            | AddScalar { in_place, .. }
            | Sub { in_place, .. }
            | SubPlain { in_place, .. }
            | SubScalar { in_place, .. }
            | Mul { in_place, .. }
            | MulPlain { in_place, .. }
            | MulScalar { in_place, .. }
            | DivScalar { in_place, .. }
            | MulNoRelin { in_place, .. } => *in_place,
            _ => false,
        }
    }

    /// Operand handles in argument order.
    pub fn operands(&self) -> Vec<Handle> {
        use HisaInstruction::*;
        match self {
            Encrypt { p } => vec![(*p).into()],
            Decrypt { c } | Copy { c } => vec![(*c).into()],
            Free { h } => vec![*h],
            Encode { .. } => vec![],
            Decode { p } => vec![(*p).into()],
            RotLeft { c, .. }
            | RotRight { c, .. }
            | AddScalar { c, .. }
            | SubScalar { c, .. }
            | MulScalar { c, .. }
            | DivScalar { c, .. }
            | MaxScalarDivisor { c, .. }
            | Relinearize { c }
            | Bootstrap { c } => vec![(*c).into()],
            Add { c, rhs, .. }
            | Sub { c, rhs, .. }
            | Mul { c, rhs, .. }
            | MulNoRelin { c, rhs, .. } => {
                vec![(*c).into(), (*rhs).into()]
            }
            AddPlain { c, p, .. } | SubPlain { c, p, .. } | MulPlain { c, p, .. } => {
                vec![(*c).into(), (*p).into()]
            }
        }
    }

    /// Scalar arguments as recorded in traces. Rotations record the
    /// amount normalised to a left rotation modulo the slot count, so a
    /// trace is key-set analysable without knowing rotation direction.
    pub fn trace_scalars(&self, slot_count: usize) -> Vec<i64> {
        use HisaInstruction::*;
        let s = slot_count as u64;
        match self {
            Encode { scale_log, .. } => vec![*scale_log as i64],
            RotLeft { amount, .. } => vec![(amount % s) as i64],
            RotRight { amount, .. } => vec![((s - amount % s) % s) as i64],
            AddScalar { x, .. } | SubScalar { x, .. } | MulScalar { x, .. } => {
                vec![x.mantissa, x.scale_log as i64]
            }
            DivScalar { divisor, .. } => vec![*divisor],
            MaxScalarDivisor { upper_bound, .. } => vec![*upper_bound],
            _ => vec![],
        }
    }
}
