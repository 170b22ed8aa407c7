//! Sobol sequence in base 2 with optional random linear matrix scrambling
//! plus digital shift.
//!
//! Direction numbers are the first rows of the Joe–Kuo "new-joe-kuo-6"
//! table, so dimensions up to [`MAX_DIMENSION`] are supported. The
//! unscrambled sequence is exposed as a reference mode for cross-checking
//! against published generators; it skips the origin point. The scrambled
//! sequence keeps index 0 because the digital shift already moves the origin.

use rand::Rng;

use crate::error::{Error, Result};
use crate::seeding;

pub const MAX_DIMENSION: usize = 21;

const BITS: usize = 32;

/// `(a, m)` rows for dimensions 2..=21 of the Joe–Kuo table: `a` encodes the
/// interior coefficients of the degree-`m.len()` primitive polynomial.
const DIRECTION_TABLE: &[(u32, &[u32])] = &[
    (0, &[1]),
    (1, &[1, 3]),
    (1, &[1, 3, 1]),
    (2, &[1, 1, 1]),
    (1, &[1, 1, 3, 3]),
    (4, &[1, 3, 5, 13]),
    (2, &[1, 1, 5, 5, 17]),
    (4, &[1, 1, 5, 5, 5]),
    (7, &[1, 1, 7, 11, 19]),
    (11, &[1, 1, 5, 1, 1]),
    (13, &[1, 1, 1, 3, 11]),
    (14, &[1, 3, 5, 5, 31]),
    (1, &[1, 3, 3, 9, 7, 49]),
    (13, &[1, 1, 1, 15, 21, 21]),
    (16, &[1, 3, 1, 13, 27, 49]),
    (19, &[1, 1, 1, 15, 7, 5]),
    (22, &[1, 3, 1, 15, 13, 25]),
    (25, &[1, 1, 5, 5, 19, 61]),
    (1, &[1, 3, 7, 11, 23, 15, 103]),
    (4, &[1, 3, 7, 13, 13, 15, 69]),
];

/// Direction vectors for one dimension (1-based; dimension 1 is the
/// van der Corput sequence with all-ones initialization).
fn direction_vectors(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 1 {
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (31 - k);
        }
        return v;
    }
    let (a, m) = DIRECTION_TABLE[dim - 2];
    let s = m.len();
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (31 - k);
    }
    for k in s..BITS {
        v[k] = v[k - s] ^ (v[k - s] >> s);
        for t in 1..s {
            if (a >> (s - 1 - t)) & 1 == 1 {
                v[k] ^= v[k - t];
            }
        }
    }
    v
}

fn check_dimension(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if d > MAX_DIMENSION {
        return Err(Error::CapExceeded {
            requested: d,
            cap: MAX_DIMENSION,
            hint: "the embedded direction-number table ends here",
        });
    }
    Ok(())
}

/// Applies a random lower-triangular bit matrix (unit diagonal) to each
/// direction vector, in most-significant-bit-first orientation. Linearity
/// over GF(2) means scrambling the direction vectors once scrambles every
/// generated point.
fn scramble_vectors(v: &mut [u32; BITS], rng: &mut impl Rng) {
    let mut cols = [0u32; BITS];
    for (c, col) in cols.iter_mut().enumerate() {
        let diag = 1u32 << (31 - c);
        let below = diag - 1;
        *col = diag | (rng.random::<u32>() & below);
    }
    for vec in v.iter_mut() {
        let mut out = 0u32;
        let mut x = *vec;
        while x != 0 {
            let p = x.trailing_zeros();
            out ^= cols[(31 - p) as usize];
            x &= x - 1;
        }
        *vec = out;
    }
}

struct SobolStream {
    v: [u32; BITS],
    shift: u32,
    x: u32,
    index: u32,
}

impl SobolStream {
    fn advance(&mut self) -> u32 {
        self.index += 1;
        self.x ^= self.v[self.index.trailing_zeros() as usize];
        self.x ^ self.shift
    }
}

/// First `n` points of the unscrambled Sobol sequence, origin skipped.
/// Values are exact dyadic rationals in `(0,1)`.
pub fn sobol_unscrambled(n: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    check_dimension(d)?;
    let mut streams: Vec<SobolStream> = (1..=d)
        .map(|dim| SobolStream {
            v: direction_vectors(dim),
            shift: 0,
            x: 0,
            index: 0,
        })
        .collect();
    let scale = (0.5f64).powi(32);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut p = Vec::with_capacity(d);
        for s in &mut streams {
            p.push(s.advance() as f64 * scale);
        }
        out.push(p);
    }
    Ok(out)
}

/// First `n` points of a scrambled Sobol net: random lower-triangular matrix
/// scramble plus digital shift, both drawn from `seed`. Points lie strictly
/// inside `(0,1)^d` and retain the net's stratification.
pub fn scrambled_sobol(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_dimension(d)?;
    let mut rng = seeding::rng(seed, 0);
    let mut streams: Vec<SobolStream> = (1..=d)
        .map(|dim| {
            let mut v = direction_vectors(dim);
            scramble_vectors(&mut v, &mut rng);
            let shift = rng.random::<u32>();
            // start at the shifted origin so index 0 is included
            SobolStream {
                v,
                shift,
                x: 0,
                index: 0,
            }
        })
        .collect();
    let scale = (0.5f64).powi(32);
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        // index 0 is the digital shift itself
        out.push(streams.iter().map(|s| (s.shift as f64 + 0.5) * scale).collect());
    }
    for _ in 1..n {
        let mut p = Vec::with_capacity(d);
        for s in &mut streams {
            p.push((s.advance() as f64 + 0.5) * scale);
        }
        out.push(p);
    }
    Ok(out)
}
