//! Binary narrow-sense BCH codes of length 127 over GF(2^7).
//!
//! Blocks are held as `u128` polynomials: bit i is the coefficient of x^i and
//! corresponds to bit i of the block.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const M: usize = 7;
const FIELD: usize = 1 << M;
const ORDER: usize = FIELD - 1;
/// x^7 + x^3 + 1.
const PRIMITIVE: usize = 0b1000_1001;

struct Gf {
    exp: [u8; 2 * ORDER],
    log: [u8; FIELD],
}

fn gf() -> &'static Gf {
    static GF: OnceLock<Gf> = OnceLock::new();
    GF.get_or_init(|| {
        let mut exp = [0u8; 2 * ORDER];
        let mut log = [0u8; FIELD];
        let mut x = 1usize;
        for i in 0..ORDER {
            exp[i] = x as u8;
            exp[i + ORDER] = x as u8;
            log[x] = i as u8;
            x <<= 1;
            if x & FIELD != 0 {
                x ^= PRIMITIVE;
            }
        }
        Gf { exp, log }
    })
}

impl Gf {
    fn mul(&self, a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
    }

    fn inv(&self, a: u8) -> u8 {
        self.exp[(ORDER - self.log[a as usize] as usize) % ORDER]
    }

    fn pow_alpha(&self, e: usize) -> u8 {
        self.exp[e % ORDER]
    }

    /// Evaluates a binary polynomial at α^j.
    fn eval_binary(&self, poly: u128, j: usize) -> u8 {
        let mut acc = 0u8;
        let mut p = poly;
        let mut i = 0;
        while p != 0 {
            if p & 1 == 1 {
                acc ^= self.pow_alpha(i * j);
            }
            p >>= 1;
            i += 1;
        }
        acc
    }
}

/// Minimal polynomial of α^i over GF(2), as a bitmask.
fn minimal_polynomial(i: usize) -> u128 {
    let f = gf();
    let mut coset = vec![i % ORDER];
    let mut j = (2 * i) % ORDER;
    while j != i % ORDER {
        coset.push(j);
        j = (2 * j) % ORDER;
    }
    // Product of (x + α^c) with GF(2^7) coefficients, lowest degree first.
    let mut poly: Vec<u8> = vec![1];
    for c in coset {
        let root = f.pow_alpha(c);
        let mut next = vec![0u8; poly.len() + 1];
        for (d, &coef) in poly.iter().enumerate() {
            next[d + 1] ^= coef;
            next[d] ^= f.mul(coef, root);
        }
        poly = next;
    }
    poly.iter()
        .enumerate()
        .fold(0u128, |acc, (d, &c)| {
            debug_assert!(c <= 1, "minimal polynomial must be binary");
            acc | ((c as u128 & 1) << d)
        })
}

fn degree(p: u128) -> usize {
    127 - p.leading_zeros() as usize
}

fn clmul(a: u128, b: u128) -> u128 {
    let mut acc = 0u128;
    let mut b = b;
    let mut shift = 0;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a << shift;
        }
        b >>= 1;
        shift += 1;
    }
    acc
}

fn poly_mod(mut a: u128, g: u128) -> u128 {
    let dg = degree(g);
    while a != 0 && degree(a) >= dg {
        a ^= g << (degree(a) - dg);
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BchParams {
    pub n: usize,
    pub k: usize,
    pub t: usize,
}

impl BchParams {
    pub fn redundancy(&self) -> usize {
        self.n - self.k
    }
}

/// Supported codes, in increasing redundancy.
pub const SUPPORTED: [BchParams; 4] = [
    BchParams { n: 127, k: 113, t: 2 },
    BchParams { n: 127, k: 99, t: 4 },
    BchParams { n: 127, k: 78, t: 7 },
    BchParams { n: 127, k: 64, t: 10 },
];

/// Safety factor between the expected errors per block and the code's capability.
pub const SAFETY_FACTOR: f64 = 2.5;

/// Least-redundancy supported code with t ≥ ⌈2.5·bmr·n⌉.
pub fn select_code(estimated_bmr: f64) -> Result<BchParams> {
    if !(0.0..=1.0).contains(&estimated_bmr) {
        return Err(Error::param(format!("BMR {estimated_bmr} outside [0, 1]")));
    }
    SUPPORTED
        .iter()
        .find(|p| p.t as f64 >= (SAFETY_FACTOR * estimated_bmr * p.n as f64).ceil())
        .copied()
        .ok_or(Error::ReconciliationInfeasible { bmr: estimated_bmr })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Syndrome(pub Vec<u8>);

#[derive(Debug, Clone)]
pub struct BchCode {
    pub params: BchParams,
    generator: u128,
}

fn to_poly(bits: &[u8]) -> u128 {
    bits.iter()
        .enumerate()
        .fold(0u128, |acc, (i, &b)| acc | (((b & 1) as u128) << i))
}

fn from_poly(p: u128, len: usize) -> Vec<u8> {
    (0..len).map(|i| ((p >> i) & 1) as u8).collect()
}

impl BchCode {
    pub fn new(params: BchParams) -> Result<Self> {
        if params.n != ORDER || params.k >= params.n || params.t == 0 {
            return Err(Error::param(format!("unsupported BCH parameters {params:?}")));
        }
        let mut generator = 1u128;
        let mut seen = [false; ORDER];
        for i in 1..=2 * params.t {
            let lead = i % ORDER;
            if seen[lead] {
                continue;
            }
            let mut j = lead;
            loop {
                seen[j] = true;
                j = (2 * j) % ORDER;
                if j == lead {
                    break;
                }
            }
            generator = clmul(generator, minimal_polynomial(i));
        }
        if degree(generator) != params.n - params.k {
            return Err(Error::param(format!(
                "generator degree {} does not match n - k = {} for t = {}",
                degree(generator),
                params.n - params.k,
                params.t
            )));
        }
        Ok(Self { params, generator })
    }

    pub fn generator(&self) -> u128 {
        self.generator
    }

    fn check_len(&self, bits: &[u8]) -> Result<()> {
        if bits.len() != self.params.n {
            return Err(Error::Dimension(format!(
                "block of {} bits, code length {}",
                bits.len(),
                self.params.n
            )));
        }
        Ok(())
    }

    /// Systematic codeword: parity in the low n−k positions, message above.
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.params.k {
            return Err(Error::Dimension("message length differs from k".into()));
        }
        let r = self.params.redundancy();
        let shifted = to_poly(message) << r;
        Ok(from_poly(shifted ^ poly_mod(shifted, self.generator), self.params.n))
    }

    /// Remainder of the block modulo g(x); all-zero iff the block is a codeword.
    pub fn syndrome(&self, block: &[u8]) -> Result<Syndrome> {
        self.check_len(block)?;
        Ok(Syndrome(from_poly(
            poly_mod(to_poly(block), self.generator),
            self.params.redundancy(),
        )))
    }

    /// Moves `q_a` onto the block whose syndrome is `syndrome_b`. Returns
    /// `Ok(None)` when the blocks differ in more positions than the code can fix.
    pub fn correct(&self, q_a: &[u8], syndrome_b: &Syndrome) -> Result<Option<Vec<u8>>> {
        self.check_len(q_a)?;
        if syndrome_b.0.len() != self.params.redundancy() {
            return Err(Error::Dimension("syndrome length differs from n - k".into()));
        }
        let a = to_poly(q_a);
        let diff = poly_mod(a, self.generator) ^ to_poly(&syndrome_b.0);
        if diff == 0 {
            return Ok(Some(q_a.to_vec()));
        }
        let Some(error) = self.locate(diff) else {
            return Ok(None);
        };
        Ok(Some(from_poly(a ^ error, self.params.n)))
    }

    /// Error pattern of weight ≤ t whose remainder is `rem`, if one exists.
    fn locate(&self, rem: u128) -> Option<u128> {
        let f = gf();
        let t = self.params.t;
        let synd: Vec<u8> = (1..=2 * t).map(|j| f.eval_binary(rem, j)).collect();

        // Berlekamp–Massey.
        let mut sigma = vec![0u8; 2 * t + 2];
        let mut prev = vec![0u8; 2 * t + 2];
        sigma[0] = 1;
        prev[0] = 1;
        let (mut l, mut m, mut b) = (0usize, 1usize, 1u8);
        for r in 0..2 * t {
            let mut d = synd[r];
            for i in 1..=l {
                d ^= f.mul(sigma[i], synd[r - i]);
            }
            if d == 0 {
                m += 1;
                continue;
            }
            let coef = f.mul(d, f.inv(b));
            let old = sigma.clone();
            for i in 0..sigma.len() - m {
                sigma[i + m] ^= f.mul(coef, prev[i]);
            }
            if 2 * l <= r {
                l = r + 1 - l;
                prev = old;
                b = d;
                m = 1;
            } else {
                m += 1;
            }
        }
        if l > t {
            return None;
        }
        let deg = sigma.iter().rposition(|&c| c != 0).unwrap_or(0);
        if deg != l {
            return None;
        }

        // Chien search: position i is in error when σ(α^{-i}) = 0.
        let mut error = 0u128;
        let mut roots = 0;
        for i in 0..self.params.n {
            let inv = (ORDER - i) % ORDER;
            let mut acc = 0u8;
            for (d, &c) in sigma.iter().enumerate().take(l + 1) {
                acc ^= f.mul(c, f.pow_alpha(inv * d));
            }
            if acc == 0 {
                error |= 1u128 << i;
                roots += 1;
            }
        }
        if roots != l || poly_mod(error, self.generator) != rem {
            return None;
        }
        Some(error)
    }
}
