use crate::hisa::{Handle, HisaTrace, Opcode};
use std::collections::HashMap;

/// Modulus bits a ciphertext handle has consumed at each point of a
/// trace. Only `divScalar` consumes budget; binary operations propagate
/// the larger consumption of their ciphertext operands, and plaintext
/// or scalar operands contribute nothing.
fn consumption_walk(trace: &HisaTrace) -> (HashMap<Handle, u32>, Vec<u32>, u32) {
    let mut consumed: HashMap<Handle, u32> = HashMap::new();
    let mut decrypted = Vec::new();
    let mut peak = 0u32;
    for e in trace.iter() {
        let of = |h: &Handle, map: &HashMap<Handle, u32>| match h {
            Handle::Ct(_) => map.get(h).copied().unwrap_or(0),
            Handle::Pt(_) => 0,
        };
        let input = e
            .operands
            .iter()
            .map(|h| of(h, &consumed))
            .max()
            .unwrap_or(0);
        match e.opcode {
            Opcode::Decrypt => decrypted.push(input),
            Opcode::Free => {
                if let Some(h) = e.operands.first() {
                    consumed.remove(h);
                }
            }
            Opcode::Bootstrap => {
                if let Some(h) = e.operands.first() {
                    consumed.insert(*h, 0);
                }
            }
            Opcode::DivScalar => {
                let bits = e.scalars.first().map(|d| d.trailing_zeros()).unwrap_or(0);
                let out = input + bits;
                peak = peak.max(out);
                if let Some(r) = e.result {
                    consumed.insert(r, out);
                }
            }
            _ => {
                peak = peak.max(input);
                if let Some(r) = e.result {
                    consumed.insert(r, input);
                }
            }
        }
    }
    (consumed, decrypted, peak)
}

/// Modulus bits the most-consuming decrypted ciphertext went through.
/// A trace that never decrypts is measured at its worst intermediate.
pub fn depth_analyze(trace: &HisaTrace) -> u32 {
    let (_, decrypted, peak) = consumption_walk(trace);
    decrypted.into_iter().max().unwrap_or(peak)
}

/// Longest chain of ciphertext-by-ciphertext multiplications.
pub fn multiplicative_depth(trace: &HisaTrace) -> u32 {
    let mut depth: HashMap<Handle, u32> = HashMap::new();
    let mut peak = 0u32;
    for e in trace.iter() {
        let input = e
            .operands
            .iter()
            .map(|h| match h {
                Handle::Ct(_) => depth.get(h).copied().unwrap_or(0),
                Handle::Pt(_) => 0,
            })
            .max()
            .unwrap_or(0);
        let out = match e.opcode {
            Opcode::Mul | Opcode::MulNoRelin => input + 1,
            Opcode::Free => {
                if let Some(h) = e.operands.first() {
                    depth.remove(h);
                }
                continue;
            }
            _ => input,
        };
        peak = peak.max(out);
        if let Some(r) = e.result {
            depth.insert(r, out);
        }
    }
    peak
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hisa::{FixedScalar, HisaBackend};
    use crate::sim::{SimBackend, SimConfig};
    use crate::Rat;

    #[test]
    fn agrees_with_simulator_accounting() {
        let mut sim = SimBackend::new(SimConfig::exact(4, 200)).unwrap();
        let one = vec![Rat::from_integer(1.into())];
        let p = sim.encode(&one, 30).unwrap();
        let a = sim.encrypt(p).unwrap();
        let b = sim.copy(a).unwrap();
        let sq = sim.mul(a, b).unwrap();
        let sq = sim.div_scalar(sq, 1 << 30).unwrap();
        let shallow = sim.div_scalar(a, 1 << 4).unwrap();
        sim.decrypt(sq).unwrap();
        sim.decrypt(shallow).unwrap();
        assert_eq!(depth_analyze(sim.trace()), 30);
        assert_eq!(depth_analyze(sim.trace()), sim.consumed_bits());
    }

    #[test]
    fn undecrypted_trace_measures_peak() {
        let mut sim = SimBackend::new(SimConfig::exact(4, 200)).unwrap();
        let p = sim.encode(&[], 30).unwrap();
        let c = sim.encrypt(p).unwrap();
        sim.div_scalar_assign(c, 1 << 12).unwrap();
        assert_eq!(depth_analyze(sim.trace()), 12);
    }

    #[test]
    fn quadratic_under_scalar_factor_has_depth_two() {
        // beta * (gamma * gamma + a + lambda)
        let mut sim = SimBackend::new(SimConfig::exact(4, 400)).unwrap();
        let enc = |sim: &mut SimBackend, v: i64| {
            let p = sim.encode(&[Rat::from_integer(v.into())], 10).unwrap();
            sim.encrypt(p).unwrap()
        };
        let gamma = enc(&mut sim, 3);
        let a = enc(&mut sim, 4);
        let beta = enc(&mut sim, 2);
        let sq = sim.mul(gamma, gamma).unwrap();
        let sq = sim.div_scalar(sq, 1 << 10).unwrap();
        let sum = sim.add(sq, a).unwrap();
        let sum = sim.add_scalar(sum, FixedScalar::new(7 << 10, 10)).unwrap();
        let out = sim.mul(sum, beta).unwrap();
        sim.decrypt(out).unwrap();
        assert_eq!(multiplicative_depth(sim.trace()), 2);
    }
}
