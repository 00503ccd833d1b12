//! Arithmetic over GF(2^z) for the symbol sizes the code supports.
//!
//! Every field is pinned to a fixed primitive polynomial and generator so
//! that encoding is bit-identical across runs, processes and platforms:
//!
//! | z  | polynomial                  | generator |
//! |----|-----------------------------|-----------|
//! | 8  | x^8+x^4+x^3+x^2+1 (0x11D)   | 2         |
//! | 16 | x^16+x^12+x^3+x+1 (0x1100B) | 2         |
//! | 32 | x^32+x^22+x^2+x+1 (0x100400007) | 2     |
//!
//! The 8- and 16-bit fields use log/antilog tables built once per process;
//! the 32-bit field falls back to shift-and-reduce multiplication.

use std::sync::OnceLock;

/// Symbol sizes with a pinned field instantiation.
pub const SUPPORTED_Z: [u8; 3] = [8, 16, 32];

const POLY_8: u64 = 0x11D;
const POLY_16: u64 = 0x1100B;
const POLY_32: u64 = 0x1_0040_0007;
const GENERATOR: u32 = 2;

struct LogTables {
    /// exp[i] = generator^i, doubled so `exp[log a + log b]` needs no modulo.
    exp: Vec<u32>,
    /// log[x] for x in 1..=mask; log[0] unused.
    log: Vec<u32>,
}

fn build_tables(z: u8, poly: u64) -> LogTables {
    let order = (1usize << z) - 1;
    let mut exp = vec![0u32; 2 * order];
    let mut log = vec![0u32; order + 1];
    let mut x = 1u32;
    for i in 0..order {
        exp[i] = x;
        exp[i + order] = x;
        log[x as usize] = i as u32;
        x = mul_slow(x, GENERATOR, poly, z);
    }
    assert_eq!(x, 1, "generator {GENERATOR} is not primitive for z={z}");
    LogTables { exp, log }
}

fn tables_for(z: u8) -> &'static LogTables {
    static T8: OnceLock<LogTables> = OnceLock::new();
    static T16: OnceLock<LogTables> = OnceLock::new();
    match z {
        8 => T8.get_or_init(|| build_tables(8, POLY_8)),
        16 => T16.get_or_init(|| build_tables(16, POLY_16)),
        _ => unreachable!("no tables for z={z}"),
    }
}

/// Shift-and-reduce multiplication, used to build tables and for z=32.
fn mul_slow(a: u32, mut b: u32, poly: u64, z: u8) -> u32 {
    let mut acc: u64 = 0;
    let mut aa = a as u64;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= aa;
        }
        b >>= 1;
        aa <<= 1;
        if aa >> z != 0 {
            aa ^= poly;
        }
    }
    acc as u32
}

/// Handle on one of the pinned GF(2^z) instantiations.
///
/// Addition is XOR; this type only carries what multiplication needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gf {
    z: u8,
    poly: u64,
    mask: u32,
}

impl Gf {
    pub fn new(z: u8) -> Gf {
        let poly = match z {
            8 => POLY_8,
            16 => POLY_16,
            32 => POLY_32,
            _ => panic!("unsupported symbol size z={z}"),
        };
        let mask = if z == 32 { u32::MAX } else { (1u32 << z) - 1 };
        Gf { z, poly, mask }
    }

    pub fn symbol_bits(&self) -> u8 {
        self.z
    }

    /// All-ones mask for a symbol; also the multiplicative order of the field.
    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            return 0;
        }
        if self.z == 32 {
            return mul_slow(a, b, self.poly, 32);
        }
        let t = tables_for(self.z);
        t.exp[(t.log[a as usize] + t.log[b as usize]) as usize]
    }

    pub fn inv(&self, a: u32) -> u32 {
        assert_ne!(a, 0, "inverse of zero");
        if self.z == 32 {
            // a^(2^32 - 2) by square and multiply
            return self.pow(a, u32::MAX as u64 - 1);
        }
        let t = tables_for(self.z);
        let order = self.mask as usize;
        t.exp[order - t.log[a as usize] as usize]
    }

    pub fn div(&self, a: u32, b: u32) -> u32 {
        self.mul(a, self.inv(b))
    }

    pub fn pow(&self, mut a: u32, mut e: u64) -> u32 {
        let mut r = 1u32;
        while e != 0 {
            if e & 1 == 1 {
                r = self.mul(r, a);
            }
            a = self.mul(a, a);
            e >>= 1;
        }
        r
    }

    /// generator^i; evaluation points of the code are consecutive powers.
    pub fn gen_pow(&self, i: u64) -> u32 {
        if self.z == 32 {
            return self.pow(GENERATOR, i);
        }
        let t = tables_for(self.z);
        let order = self.mask as u64;
        t.exp[(i % order) as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_axioms(z: u8, samples: &[(u32, u32)]) {
        let gf = Gf::new(z);
        for &(a, b) in samples {
            let a = a & gf.mask();
            let b = b & gf.mask();
            assert_eq!(gf.mul(a, b), gf.mul(b, a));
            if a != 0 {
                assert_eq!(gf.mul(a, gf.inv(a)), 1, "a={a} z={z}");
            }
            assert_eq!(gf.mul(a, 1), a);
            assert_eq!(gf.mul(a, 0), 0);
        }
    }

    #[test]
    fn axioms_all_fields() {
        let samples: Vec<(u32, u32)> = (1..200u32)
            .map(|i| (i.wrapping_mul(2654435761), i.wrapping_mul(40503) ^ 0xdead))
            .collect();
        for z in SUPPORTED_Z {
            field_axioms(z, &samples);
        }
    }

    #[test]
    fn gf8_exhaustive_inverse() {
        let gf = Gf::new(8);
        for a in 1..=255u32 {
            assert_eq!(gf.mul(a, gf.inv(a)), 1);
        }
    }

    #[test]
    fn generator_is_primitive_z32() {
        // 2^32 - 1 = 3 * 5 * 17 * 257 * 65537
        let gf = Gf::new(32);
        let n = u32::MAX as u64;
        assert_eq!(gf.pow(GENERATOR, n), 1);
        for p in [3u64, 5, 17, 257, 65537] {
            assert_ne!(gf.pow(GENERATOR, n / p), 1, "order divides {}", n / p);
        }
    }

    #[test]
    fn distributivity_spot_checks() {
        for z in SUPPORTED_Z {
            let gf = Gf::new(z);
            for i in 1..50u32 {
                let a = (i * 7919) & gf.mask();
                let b = (i * 104729) & gf.mask();
                let c = (i * 1299709) & gf.mask();
                assert_eq!(gf.mul(a, b ^ c), gf.mul(a, b) ^ gf.mul(a, c));
            }
        }
    }
}
