//! Arithmetic modulo a prime and the polarizing transform `G_n = G^{⊗k}`
//! with kernel `G = [[1, 0], [1, 1]]`.
//!
//! Vectors are row vectors in natural (non bit-reversed) order and the
//! transform computes `v = u · G_n mod q`. On a length-2 block the kernel
//! maps `(u1, u2)` to `(u1 + u2, u2)`; the inverse kernel is
//! `[[1, 0], [q - 1, 1]]`, mapping `(v1, v2)` to `(v1 - v2, v2)`.

use crate::error::{Error, Result};

pub type Symbol = u32;

/// A prime alphabet size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeModulus(u32);

impl PrimeModulus {
    pub fn new(q: u32) -> Result<Self> {
        if q < 2 {
            return Err(Error::NotPrime(q));
        }
        let mut d = 2u32;
        while d.saturating_mul(d) <= q {
            if q.is_multiple_of(d) {
                return Err(Error::NotPrime(q));
            }
            d += 1;
        }
        Ok(PrimeModulus(q))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn size(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn add(self, a: Symbol, b: Symbol) -> Symbol {
        (a + b) % self.0
    }

    #[inline]
    pub fn sub(self, a: Symbol, b: Symbol) -> Symbol {
        (a + self.0 - b) % self.0
    }
}

/// A length-`2^k` vector of symbols below `q`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolVector {
    symbols: Vec<Symbol>,
}

impl SymbolVector {
    pub fn new(symbols: Vec<Symbol>, q: PrimeModulus) -> Result<Self> {
        check_len(symbols.len())?;
        if let Some(&s) = symbols.iter().find(|&&s| s >= q.get()) {
            return Err(Error::SymbolOutOfRange { symbol: s, q: q.get() });
        }
        Ok(SymbolVector { symbols })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        check_len(n)?;
        Ok(SymbolVector { symbols: vec![0; n] })
    }

    pub fn as_slice(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn into_vec(self) -> Vec<Symbol> {
        self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

fn check_len(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// `log2(n)` for a power of two.
pub fn log2_exact(n: usize) -> Result<u32> {
    check_len(n)?;
    Ok(n.trailing_zeros())
}

/// `v = u · G_n mod q`.
pub fn polar_transform(u: &SymbolVector, q: PrimeModulus) -> SymbolVector {
    let mut v = u.symbols.clone();
    transform_in_place(&mut v, q);
    SymbolVector { symbols: v }
}

/// Inverse of [`polar_transform`].
pub fn polar_inverse(v: &SymbolVector, q: PrimeModulus) -> SymbolVector {
    let mut u = v.symbols.clone();
    inverse_in_place(&mut u, q);
    SymbolVector { symbols: u }
}

/// Checked variant of [`polar_transform`] for raw slices.
pub fn polar_transform_slice(u: &[Symbol], q: PrimeModulus) -> Result<Vec<Symbol>> {
    let v = SymbolVector::new(u.to_vec(), q)?;
    Ok(polar_transform(&v, q).into_vec())
}

/// Checked variant of [`polar_inverse`] for raw slices.
pub fn polar_inverse_slice(v: &[Symbol], q: PrimeModulus) -> Result<Vec<Symbol>> {
    let v = SymbolVector::new(v.to_vec(), q)?;
    Ok(polar_inverse(&v, q).into_vec())
}

/// In-place butterfly; the caller guarantees a power-of-two length and
/// reduced symbols.
pub(crate) fn transform_in_place(v: &mut [Symbol], q: PrimeModulus) {
    let n = v.len();
    let mut half = 1;
    while half < n {
        for block in v.chunks_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, &b) in lo.iter_mut().zip(hi.iter()) {
                *a = q.add(*a, b);
            }
        }
        half *= 2;
    }
}

pub(crate) fn inverse_in_place(v: &mut [Symbol], q: PrimeModulus) {
    let n = v.len();
    let mut half = 1;
    while half < n {
        for block in v.chunks_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, &b) in lo.iter_mut().zip(hi.iter()) {
                *a = q.sub(*a, b);
            }
        }
        half *= 2;
    }
}

/// Mixed-radix decoding of `index` into `out` (most significant digit first).
pub(crate) fn digits_into(mut index: usize, radix: usize, out: &mut [Symbol]) {
    for slot in out.iter_mut().rev() {
        *slot = (index % radix) as Symbol;
        index /= radix;
    }
}

/// Inverse of [`digits_into`].
pub(crate) fn digits_to_index(digits: &[Symbol], radix: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * radix + d as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: u32) -> PrimeModulus {
        PrimeModulus::new(p).unwrap()
    }

    #[test]
    fn primality() {
        for p in [2, 3, 5, 7, 11, 13, 251] {
            assert!(PrimeModulus::new(p).is_ok(), "{p}");
        }
        for c in [0, 1, 4, 6, 9, 15, 25, 49, 256] {
            assert_eq!(PrimeModulus::new(c), Err(Error::NotPrime(c)));
        }
    }

    #[test]
    fn kernel_examples() {
        let t = |u: &[u32], p| polar_transform_slice(u, q(p)).unwrap();
        assert_eq!(t(&[0; 8], 2), vec![0; 8]);
        assert_eq!(t(&[1, 0], 2), vec![1, 0]);
        assert_eq!(t(&[0, 1], 2), vec![1, 1]);
        assert_eq!(t(&[1, 2], 3), vec![0, 2]);
        assert_eq!(polar_inverse_slice(&[0, 2], q(3)).unwrap(), vec![1, 2]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(polar_transform_slice(&[0, 1, 0], q(2)), Err(Error::NotPowerOfTwo(3)));
        assert_eq!(polar_transform_slice(&[], q(2)), Err(Error::NotPowerOfTwo(0)));
        assert_eq!(
            polar_transform_slice(&[0, 3], q(3)),
            Err(Error::SymbolOutOfRange { symbol: 3, q: 3 })
        );
    }

    #[test]
    fn binary_involution_on_all_length_eight_vectors() {
        let m = q(2);
        let mut u = [0u32; 8];
        for idx in 0..256 {
            digits_into(idx, 2, &mut u);
            let v = SymbolVector::new(u.to_vec(), m).unwrap();
            assert_eq!(polar_transform(&polar_transform(&v, m), m), v);
        }
    }

    #[test]
    fn digits_round_trip() {
        let mut d = [0u32; 4];
        for idx in 0..81 {
            digits_into(idx, 3, &mut d);
            assert_eq!(digits_to_index(&d, 3), idx);
        }
    }
}
