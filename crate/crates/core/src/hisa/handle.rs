use serde::{Deserialize, Serialize};
use std::fmt;

/// Opaque reference to a ciphertext owned by a backend.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CtHandle(pub u64);

/// Opaque reference to an encoded plaintext owned by a backend.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PtHandle(pub u64);

/// Either kind of handle; used by `free` and in trace entries.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Handle {
    Ct(CtHandle),
    Pt(PtHandle),
}

impl Handle {
    pub fn id(&self) -> u64 {
        match self {
            Handle::Ct(c) => c.0,
            Handle::Pt(p) => p.0,
        }
    }
}

impl From<CtHandle> for Handle {
    fn from(c: CtHandle) -> Self {
        Handle::Ct(c)
    }
}

impl From<PtHandle> for Handle {
    fn from(p: PtHandle) -> Self {
        Handle::Pt(p)
    }
}

impl fmt::Display for CtHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ct{}", self.0)
    }
}

impl fmt::Display for PtHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pt{}", self.0)
    }
}

impl fmt::Display for Handle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Handle::Ct(c) => c.fmt(f),
            Handle::Pt(p) => p.fmt(f),
        }
    }
}

impl fmt::Debug for CtHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Debug for PtHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Debug for Handle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
