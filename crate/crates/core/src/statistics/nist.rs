//! Seven tests from NIST SP 800-22. Each `*_test` function works on any
//! length; `nist_suite` enforces the minimum length and fixed parameters.

use std::sync::{Arc, OnceLock};

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

pub const SIGNIFICANCE: f64 = 0.01;
pub const MIN_BITS: usize = 100;
pub const RECOMMENDED_BITS: usize = 1024;

fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(a, x).clamp(0.0, 1.0)
}

fn ones(bits: &[u8]) -> usize {
    bits.iter().filter(|&&b| b & 1 == 1).count()
}

pub fn frequency_test(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let s: f64 = bits.iter().map(|&b| if b & 1 == 1 { 1.0 } else { -1.0 }).sum();
    erfc(s.abs() / n.sqrt() / std::f64::consts::SQRT_2)
}

pub fn block_frequency_test(bits: &[u8], block: usize) -> f64 {
    let blocks = bits.len() / block;
    if blocks == 0 {
        return 0.0;
    }
    let chi: f64 = bits
        .chunks_exact(block)
        .map(|c| (ones(c) as f64 / block as f64 - 0.5).powi(2))
        .sum::<f64>()
        * 4.0
        * block as f64;
    igamc(blocks as f64 / 2.0, chi / 2.0)
}

/// Returns 0 when the frequency prerequisite fails.
pub fn runs_test(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let pi = ones(bits) as f64 / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return 0.0;
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let denom = 2.0 * (2.0 * n).sqrt() * pi * (1.0 - pi);
    erfc((v as f64 - 2.0 * n * pi * (1.0 - pi)).abs() / denom)
}

/// Longest run of ones in a block; parameters chosen by length.
pub fn longest_run_test(bits: &[u8]) -> Result<f64> {
    let n = bits.len();
    let (m, lo, pi): (usize, usize, &[f64]) = if n < 128 {
        return Err(Error::param(format!("longest-run test needs 128 bits, got {n}")));
    } else if n < 6272 {
        (8, 1, &[0.2148, 0.3672, 0.2305, 0.1875])
    } else if n < 750_000 {
        (128, 4, &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124])
    } else {
        (10_000, 10, &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727])
    };
    let k = pi.len() - 1;
    let mut v = vec![0usize; pi.len()];
    let blocks = n / m;
    for c in bits.chunks_exact(m) {
        let (mut run, mut best) = (0usize, 0usize);
        for &b in c {
            if b & 1 == 1 {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        v[best.clamp(lo, lo + k) - lo] += 1;
    }
    let nb = blocks as f64;
    let chi: f64 = v
        .iter()
        .zip(pi)
        .map(|(&vi, &p)| (vi as f64 - nb * p).powi(2) / (nb * p))
        .sum();
    Ok(igamc(k as f64 / 2.0, chi / 2.0))
}

/// Frequencies of overlapping m-bit patterns with wrap-around.
fn pattern_counts(bits: &[u8], m: usize) -> Vec<usize> {
    let n = bits.len();
    let mut counts = vec![0usize; 1 << m];
    if m == 0 {
        return counts;
    }
    for i in 0..n {
        let mut idx = 0usize;
        for j in 0..m {
            idx = (idx << 1) | (bits[(i + j) % n] & 1) as usize;
        }
        counts[idx] += 1;
    }
    counts
}

fn psi_sq(bits: &[u8], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len() as f64;
    let sum: f64 = pattern_counts(bits, m).iter().map(|&c| (c * c) as f64).sum();
    (1u64 << m) as f64 / n * sum - n
}

/// Both serial-test p-values (∇ψ² and ∇²ψ²).
pub fn serial_test(bits: &[u8], m: usize) -> (f64, f64) {
    let (p0, p1, p2) = (
        psi_sq(bits, m),
        psi_sq(bits, m.saturating_sub(1)),
        psi_sq(bits, m.saturating_sub(2)),
    );
    let d1 = p0 - p1;
    let d2 = p0 - 2.0 * p1 + p2;
    let a = 2f64.powi(m as i32 - 2);
    (igamc(a, d1 / 2.0), igamc(a / 2.0, d2 / 2.0))
}

fn phi(bits: &[u8], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len() as f64;
    pattern_counts(bits, m)
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum()
}

pub fn approximate_entropy_test(bits: &[u8], m: usize) -> f64 {
    let n = bits.len() as f64;
    let ap_en = phi(bits, m) - phi(bits, m + 1);
    let chi = 2.0 * n * (std::f64::consts::LN_2 - ap_en);
    igamc(2f64.powi(m as i32 - 1), chi / 2.0)
}

/// Forward cumulative-sums test.
pub fn cumulative_sums_test(bits: &[u8]) -> f64 {
    let n = bits.len() as f64;
    let mut s = 0i64;
    let mut z = 0i64;
    for &b in bits {
        s += if b & 1 == 1 { 1 } else { -1 };
        z = z.max(s.abs());
    }
    if z == 0 {
        return 1.0;
    }
    let z = z as f64;
    let norm = Normal::standard();
    let cdf = |x: f64| norm.cdf(x);
    let sq = n.sqrt();
    let mut sum1 = 0.0;
    let mut k = ((-n / z + 1.0) / 4.0).trunc() as i64;
    while k <= ((n / z - 1.0) / 4.0).trunc() as i64 {
        let kf = k as f64;
        sum1 += cdf((4.0 * kf + 1.0) * z / sq) - cdf((4.0 * kf - 1.0) * z / sq);
        k += 1;
    }
    let mut sum2 = 0.0;
    let mut k = ((-n / z - 3.0) / 4.0).trunc() as i64;
    while k <= ((n / z - 1.0) / 4.0).trunc() as i64 {
        let kf = k as f64;
        sum2 += cdf((4.0 * kf + 3.0) * z / sq) - cdf((4.0 * kf + 1.0) * z / sq);
        k += 1;
    }
    (1.0 - sum1 + sum2).clamp(0.0, 1.0)
}

/// A randomness test that reports one or more named p-values.
pub trait RandomnessTest: Named + Send + Sync {
    fn p_values(&self, bits: &[u8]) -> Result<Vec<(String, f64)>>;
}

macro_rules! single_test {
    ($ty:ident, $name:literal, |$b:ident| $body:expr) => {
        pub struct $ty;
        impl Named for $ty {
            fn name(&self) -> &str {
                $name
            }
        }
        impl RandomnessTest for $ty {
            fn p_values(&self, $b: &[u8]) -> Result<Vec<(String, f64)>> {
                Ok(vec![($name.to_string(), $body)])
            }
        }
    };
}

single_test!(Frequency, "frequency", |b| frequency_test(b));
single_test!(BlockFrequency, "block_frequency", |b| block_frequency_test(b, 128));
single_test!(Runs, "runs", |b| runs_test(b));
single_test!(LongestRun, "longest_run", |b| longest_run_test(b)?);
single_test!(ApproximateEntropy, "approximate_entropy", |b| approximate_entropy_test(b, 2));
single_test!(CumulativeSums, "cumulative_sums", |b| cumulative_sums_test(b));

pub struct Serial;

impl Named for Serial {
    fn name(&self) -> &str {
        "serial"
    }
}

impl RandomnessTest for Serial {
    fn p_values(&self, bits: &[u8]) -> Result<Vec<(String, f64)>> {
        let (p1, p2) = serial_test(bits, 2);
        Ok(vec![("serial_1".into(), p1), ("serial_2".into(), p2)])
    }
}

/// The seven tests in report order.
pub fn test_registry() -> &'static Registry<dyn RandomnessTest> {
    static REG: OnceLock<Registry<dyn RandomnessTest>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn RandomnessTest> = Registry::new("randomness test");
        for t in default_tests() {
            r.register(t);
        }
        r
    })
}

fn default_tests() -> Vec<Arc<dyn RandomnessTest>> {
    vec![
        Arc::new(Frequency),
        Arc::new(BlockFrequency),
        Arc::new(Runs),
        Arc::new(LongestRun),
        Arc::new(Serial),
        Arc::new(ApproximateEntropy),
        Arc::new(CumulativeSums),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NistEntry {
    pub metric: String,
    pub p_value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NistReport {
    pub bits: usize,
    pub entries: Vec<NistEntry>,
}

impl NistReport {
    /// Tests with at least one failing p-value. Serial counts once.
    pub fn failed_tests(&self) -> usize {
        let mut failed: Vec<&str> = self
            .entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| e.metric.trim_end_matches(|c: char| c == '_' || c.is_ascii_digit()))
            .collect();
        failed.dedup();
        failed.len()
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn p_value(&self, metric: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.metric == metric).map(|e| e.p_value)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value,pass\n");
        for e in &self.entries {
            s.push_str(&format!("{},{:.6},{}\n", e.metric, e.p_value, e.pass));
        }
        s
    }
}

pub fn nist_suite(bits: &[u8]) -> Result<NistReport> {
    if bits.len() < MIN_BITS {
        return Err(Error::param(format!(
            "randomness tests need at least {MIN_BITS} bits, got {}",
            bits.len()
        )));
    }
    if bits.len() < RECOMMENDED_BITS {
        log::warn!("running randomness tests on {} bits (< {RECOMMENDED_BITS})", bits.len());
    }
    let mut entries = Vec::new();
    for t in default_tests() {
        if t.name() == "longest_run" && bits.len() < 128 {
            log::warn!("skipping longest_run below 128 bits");
            continue;
        }
        for (metric, p) in t.p_values(bits)? {
            entries.push(NistEntry {
                metric,
                p_value: p,
                pass: p >= SIGNIFICANCE,
            });
        }
    }
    Ok(NistReport {
        bits: bits.len(),
        entries,
    })
}
