//! Key agreement metrics, correlation and the repeated-segment diagnostic.

pub mod nist;

use serde::Serialize;

use crate::error::{Error, Result};

pub use nist::{nist_suite, NistEntry, NistReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyMetrics {
    pub bmr: f64,
    /// Raw key bits per probing packet.
    pub bgr: f64,
    pub total_bits: usize,
    pub packets: usize,
}

impl KeyMetrics {
    pub fn new(q_a: &[u8], q_b: &[u8], packets: usize) -> Result<Self> {
        Ok(Self {
            bmr: if q_a.is_empty() && q_b.is_empty() { 0.0 } else { bmr(q_a, q_b)? },
            bgr: bgr(q_b.len(), packets)?,
            total_bits: q_b.len(),
            packets,
        })
    }
}

pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Fraction of positions where the two raw keys differ.
pub fn bmr(q_a: &[u8], q_b: &[u8]) -> Result<f64> {
    if q_a.len() != q_b.len() {
        return Err(Error::Dimension(format!(
            "keys of {} and {} bits",
            q_a.len(),
            q_b.len()
        )));
    }
    if q_a.is_empty() {
        return Err(Error::param("BMR of empty keys"));
    }
    Ok(hamming(q_a, q_b) as f64 / q_a.len() as f64)
}

/// Bits per packet.
pub fn bgr(key_len: usize, packets: usize) -> Result<f64> {
    if packets == 0 {
        return Err(Error::param("BGR needs at least one packet"));
    }
    Ok(key_len as f64 / packets as f64)
}

/// Pearson correlation of two equal-length real sequences.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Dimension("correlation needs equal, nonempty sequences".into()));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero-variance sequence, correlation undefined".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of amplitude profiles.
pub fn cross_correlation(h1: &[crate::channel_model::C64], h2: &[crate::channel_model::C64]) -> Result<f64> {
    let a: Vec<f64> = h1.iter().map(|v| v.norm()).collect();
    let b: Vec<f64> = h2.iter().map(|v| v.norm()).collect();
    pearson(&a, &b)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    statrs::function::factorial::ln_binomial(n as u64, k as u64)
}

/// ρ₀(d) = C(G,d)/2^G, evaluated in log space and renormalized.
pub fn binomial_reference(group: usize) -> Vec<f64> {
    let logs: Vec<f64> = (0..=group)
        .map(|d| ln_binomial(group, d) - group as f64 * std::f64::consts::LN_2)
        .collect();
    let raw: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NdDistribution {
    pub group: usize,
    /// Raw N_d values, one per adjacent group pair.
    pub samples: Vec<usize>,
    pub histogram: Vec<f64>,
    pub reference: Vec<f64>,
    pub tv_distance: f64,
}

impl NdDistribution {
    pub fn from_samples(samples: Vec<usize>, group: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("no group pairs"));
        }
        let mut counts = vec![0usize; group + 1];
        for &d in &samples {
            if d > group {
                return Err(Error::param(format!("N_d = {d} exceeds group size {group}")));
            }
            counts[d] += 1;
        }
        let histogram: Vec<f64> = counts.iter().map(|&c| c as f64 / samples.len() as f64).collect();
        let reference = binomial_reference(group);
        let tv_distance = 0.5 * histogram.iter().zip(&reference).map(|(h, r)| (h - r).abs()).sum::<f64>();
        Ok(Self {
            group,
            samples,
            histogram,
            reference,
            tv_distance,
        })
    }

    pub fn pairs(&self) -> usize {
        self.samples.len()
    }

    /// Empirical quantile (nearest rank) of N_d.
    pub fn quantile(&self, q: f64) -> usize {
        let mut s = self.samples.clone();
        s.sort_unstable();
        let rank = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len());
        s[rank - 1]
    }

    pub fn median(&self) -> usize {
        self.quantile(0.5)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("nd,empirical,theoretical\n");
        for (d, (h, r)) in self.histogram.iter().zip(&self.reference).enumerate() {
            s.push_str(&format!("{d},{h:.9e},{r:.9e}\n"));
        }
        s
    }
}

/// Hamming distances between adjacent non-overlapping groups of `q`.
pub fn nd_samples(q: &[u8], group: usize) -> Result<Vec<usize>> {
    if group == 0 || q.len() < 2 * group {
        return Err(Error::param(format!(
            "need at least {} bits for groups of {group}, got {}",
            2 * group,
            q.len()
        )));
    }
    let groups: Vec<&[u8]> = q.chunks_exact(group).collect();
    Ok(groups.windows(2).map(|w| hamming(w[0], w[1])).collect())
}

pub fn nd_distribution(q: &[u8], group: usize) -> Result<NdDistribution> {
    NdDistribution::from_samples(nd_samples(q, group)?, group)
}

/// Pools adjacent-group distances over several independent sequences.
pub fn nd_distribution_pooled(seqs: &[Vec<u8>], group: usize) -> Result<NdDistribution> {
    let mut all = Vec::new();
    for q in seqs {
        all.extend(nd_samples(q, group)?);
    }
    NdDistribution::from_samples(all, group)
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => s[n / 2],
        _ => 0.5 * (s[n / 2 - 1] + s[n / 2]),
    }
}
