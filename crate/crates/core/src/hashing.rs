//! Pairwise-independent hash and sign families.
//!
//! The scheme needs 2-wise independent hash functions `h : [0, n) -> [0, b')`
//! and sign functions `s : [0, n) -> {-1, +1}`. Hashes come from the modular
//! family `h(x) = ((a*x + b) mod P) mod b'` with `P` the smallest prime larger
//! than `max(domain, 2^31)`, which is provably 2-universal (up to the usual
//! mild non-uniformity when `b'` does not divide `P`). Signs are derived from
//! an independently seeded hash into `{0, 1}`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic Miller-Rabin for u64; the listed witnesses are exact for
/// every 64-bit integer.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n.is_multiple_of(p) {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0u32;
    while d.is_multiple_of(2) {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = mod_pow(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mod_mul(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mod_mul(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn mod_pow(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mod_mul(acc, base, m);
        }
        base = mod_mul(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Smallest prime strictly greater than `n`.
pub fn next_prime(n: u64) -> u64 {
    let mut c = n + 1;
    if c <= 2 {
        return 2;
    }
    if c.is_multiple_of(2) {
        c += 1;
    }
    while !is_prime(c) {
        c += 2;
    }
    c
}

const MIN_MODULUS: u64 = 1 << 31;

/// How the hash values are produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum HashKind {
    /// `((a*x + b) mod prime) mod range`.
    Modular { a: u64, b: u64, prime: u64 },
    /// An explicit value table (used for fixtures quoted from worked examples).
    Table(Vec<u32>),
}

/// A 2-wise independent hash function `[0, domain) -> [0, range)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashFn {
    seed: u64,
    domain: usize,
    range: usize,
    kind: HashKind,
}

impl HashFn {
    /// Draws a member of the strongly 2-universal modular family.
    pub fn from_seed(seed: u64, domain: usize, range: usize) -> Result<Self> {
        if domain == 0 || range == 0 {
            return Err(Error::Parameter(format!(
                "hash function needs domain >= 1 and range >= 1, got domain={domain}, range={range}"
            )));
        }
        let prime = next_prime(MIN_MODULUS.max(domain as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rng.random_range(1..prime);
        let b = rng.random_range(0..prime);
        Ok(HashFn {
            seed,
            domain,
            range,
            kind: HashKind::Modular { a, b, prime },
        })
    }

    /// Builds a hash with explicit modular parameters. Mostly useful in tests;
    /// `prime` must be a prime larger than both `domain` and `a`, `b`.
    pub fn from_params(a: u64, b: u64, prime: u64, domain: usize, range: usize) -> Result<Self> {
        if domain == 0 || range == 0 {
            return Err(Error::Parameter(
                "hash function needs domain >= 1 and range >= 1".into(),
            ));
        }
        if !is_prime(prime) || prime < domain as u64 {
            return Err(Error::Parameter(format!(
                "modulus {prime} must be a prime no smaller than the domain {domain}"
            )));
        }
        if a == 0 || a >= prime || b >= prime {
            return Err(Error::Parameter(
                "need 1 <= a < prime and 0 <= b < prime".into(),
            ));
        }
        Ok(HashFn {
            seed: 0,
            domain,
            range,
            kind: HashKind::Modular { a, b, prime },
        })
    }

    /// Wraps an explicit value table as a hash function.
    pub fn from_table(values: Vec<u32>, range: usize) -> Result<Self> {
        if values.is_empty() || range == 0 {
            return Err(Error::Parameter(
                "hash table needs at least one value and range >= 1".into(),
            ));
        }
        if let Some(v) = values.iter().find(|&&v| v as usize >= range) {
            return Err(Error::Parameter(format!(
                "table value {v} outside range [0, {range})"
            )));
        }
        Ok(HashFn {
            seed: 0,
            domain: values.len(),
            range,
            kind: HashKind::Table(values),
        })
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn range(&self) -> usize {
        self.range
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Evaluates the hash; `x` must lie in `[0, domain)`.
    pub fn eval(&self, x: usize) -> usize {
        debug_assert!(x < self.domain, "hash input {} outside domain {}", x, self.domain);
        match &self.kind {
            HashKind::Modular { a, b, prime } => {
                let v = (*a as u128 * x as u128 + *b as u128) % *prime as u128;
                (v % self.range as u128) as usize
            }
            HashKind::Table(values) => values[x] as usize,
        }
    }
}

/// A 2-wise independent sign function `[0, domain) -> {-1, +1}`, realised as
/// `s(x) = 2*g(x) - 1` for a hash `g` into `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignFn {
    inner: HashFn,
}

impl SignFn {
    pub fn from_seed(seed: u64, domain: usize) -> Result<Self> {
        Ok(SignFn {
            inner: HashFn::from_seed(seed, domain, 2)?,
        })
    }

    /// Wraps an explicit sign table; entries must be -1 or +1.
    pub fn from_table(signs: &[i8]) -> Result<Self> {
        let bits: Vec<u32> = signs
            .iter()
            .map(|&s| match s {
                1 => Ok(1u32),
                -1 => Ok(0u32),
                other => Err(Error::Parameter(format!("sign table entry {other} is not +/-1"))),
            })
            .collect::<Result<_>>()?;
        Ok(SignFn {
            inner: HashFn::from_table(bits, 2)?,
        })
    }

    pub fn domain(&self) -> usize {
        self.inner.domain()
    }

    /// Evaluates the sign; returns -1.0 or +1.0.
    pub fn eval(&self, x: usize) -> f64 {
        2.0 * self.inner.eval(x) as f64 - 1.0
    }
}

/// Derives `count` independent sub-seeds from a master seed, in a fixed order.
pub fn derive_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..count).map(|_| rng.random()).collect()
}

/// Draws `count` independent hash functions from the 2-universal family,
/// reproducibly from `seed`.
pub fn make_hash_family(seed: u64, count: usize, domain: usize, range: usize) -> Result<Vec<HashFn>> {
    if count == 0 {
        return Err(Error::Parameter("hash family needs count >= 1".into()));
    }
    derive_seeds(seed, count)
        .into_iter()
        .map(|s| HashFn::from_seed(s, domain, range))
        .collect()
}

/// Draws `count` independent sign functions, reproducibly from `seed`.
pub fn make_sign_family(seed: u64, count: usize, domain: usize) -> Result<Vec<SignFn>> {
    if count == 0 {
        return Err(Error::Parameter("sign family needs count >= 1".into()));
    }
    derive_seeds(seed, count)
        .into_iter()
        .map(|s| SignFn::from_seed(s, domain))
        .collect()
}
