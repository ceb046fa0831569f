//! Synthetic multi-antenna OFDM channels, their temporal evolution and
//! least-squares probe estimation.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub type C64 = Complex64;
pub type CsiVector = Vec<C64>;

/// Power of the last tap relative to the first.
const LAST_TAP_RATIO: f64 = 0.01;

/// Circularly symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionParams {
    pub rho_t: f64,
    pub tap_count: usize,
    /// Per-tap variance, unit total.
    pub power_profile: Vec<f64>,
}

impl EvolutionParams {
    /// Exponentially decaying profile where the last tap carries 1% of the first.
    pub fn exponential(rho_t: f64, tap_count: usize) -> Result<Self> {
        if tap_count == 0 {
            return Err(Error::param("tap_count must be at least 1"));
        }
        let decay = if tap_count > 1 {
            -LAST_TAP_RATIO.ln() / (tap_count - 1) as f64
        } else {
            0.0
        };
        let raw: Vec<f64> = (0..tap_count).map(|i| (-decay * i as f64).exp()).collect();
        let total: f64 = raw.iter().sum();
        let params = Self {
            rho_t,
            tap_count,
            power_profile: raw.into_iter().map(|p| p / total).collect(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_rho(self.rho_t)?;
        if self.tap_count == 0 || self.power_profile.len() != self.tap_count {
            return Err(Error::param("power profile length must equal tap_count >= 1"));
        }
        if self.power_profile.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
            return Err(Error::param("tap variances must be positive"));
        }
        let total: f64 = self.power_profile.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("tap variances sum to {total}, expected 1")));
        }
        Ok(())
    }
}

fn check_rho(rho_t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho_t) {
        return Err(Error::param(format!("rho_t = {rho_t} outside [0, 1]")));
    }
    Ok(())
}

/// Cached forward FFT of a fixed length.
#[derive(Clone)]
pub(crate) struct Dft {
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dft({})", self.fft.len())
    }
}

impl Dft {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(n),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.fft.len()
    }

    /// N-point DFT of `seq` placed at `offset` in an otherwise zero sequence.
    pub(crate) fn zero_padded(&self, seq: &[C64], offset: usize) -> Vec<C64> {
        let n = self.fft.len();
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for (i, &v) in seq.iter().enumerate() {
            buf[(offset + i) % n] += v;
        }
        self.fft.process(&mut buf);
        buf
    }
}

/// M antennas by N subcarriers; row m is the DFT of antenna m's taps.
#[derive(Debug, Clone)]
pub struct SpatialChannel {
    taps: Vec<Vec<C64>>,
    rows: Vec<Vec<C64>>,
    profile: Vec<f64>,
    dft: Dft,
}

impl SpatialChannel {
    /// Builds a channel from explicit per-antenna taps. `profile` is used by
    /// `evolve` for the innovation variance.
    pub fn from_taps(taps: Vec<Vec<C64>>, subcarriers: usize, profile: Vec<f64>) -> Result<Self> {
        if taps.is_empty() || subcarriers == 0 {
            return Err(Error::param("channel needs M >= 1 and N >= 1"));
        }
        let tap_count = taps[0].len();
        if taps.iter().any(|t| t.len() != tap_count) || profile.len() != tap_count {
            return Err(Error::param("all antennas must have tap_count taps"));
        }
        if tap_count > subcarriers {
            return Err(Error::param(format!(
                "N = {subcarriers} smaller than tap_count = {tap_count}"
            )));
        }
        if taps.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::param("non-finite tap"));
        }
        let dft = Dft::new(subcarriers);
        let rows = taps.iter().map(|t| dft.zero_padded(t, 0)).collect();
        Ok(Self {
            taps,
            rows,
            profile,
            dft,
        })
    }

    fn random<R: Rng + ?Sized>(m: usize, n: usize, params: &EvolutionParams, rng: &mut R) -> Result<Self> {
        let taps = (0..m)
            .map(|_| {
                params
                    .power_profile
                    .iter()
                    .map(|p| complex_gaussian(rng) * p.sqrt())
                    .collect()
            })
            .collect();
        Self::from_taps(taps, n, params.power_profile.clone())
    }

    pub fn antennas(&self) -> usize {
        self.rows.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.dft.len()
    }

    /// Row for 0-based antenna `m`.
    pub fn row(&self, m: usize) -> &[C64] {
        &self.rows[m]
    }

    pub fn taps(&self, m: usize) -> &[C64] {
        &self.taps[m]
    }

    /// Frequency response as an M×N matrix.
    pub fn entries(&self) -> DMatrix<C64> {
        let (m, n) = (self.antennas(), self.subcarriers());
        DMatrix::from_fn(m, n, |i, j| self.rows[i][j])
    }

    /// Scales tap `index` of every antenna by `gain_db` (negative attenuates).
    pub fn scale_tap(&mut self, index: usize, gain_db: f64) {
        let g = 10f64.powf(gain_db / 20.0);
        for m in 0..self.taps.len() {
            if let Some(t) = self.taps[m].get_mut(index) {
                *t *= g;
            }
            self.rows[m] = self.dft.zero_padded(&self.taps[m], 0);
        }
    }

    /// One AR(1) step in place.
    pub fn evolve_in_place<R: Rng + ?Sized>(&mut self, rho_t: f64, rng: &mut R) -> Result<()> {
        check_rho(rho_t)?;
        if rho_t == 1.0 {
            return Ok(());
        }
        let innov = (1.0 - rho_t * rho_t).sqrt();
        for m in 0..self.taps.len() {
            for (t, p) in self.taps[m].iter_mut().zip(&self.profile) {
                *t = *t * rho_t + complex_gaussian(rng) * (innov * p.sqrt());
            }
            self.rows[m] = self.dft.zero_padded(&self.taps[m], 0);
        }
        Ok(())
    }
}

/// First-order Gauss–Markov step on every tap; per-tap variance is preserved.
pub fn evolve<R: Rng + ?Sized>(ch: &SpatialChannel, rho_t: f64, rng: &mut R) -> Result<SpatialChannel> {
    let mut out = ch.clone();
    out.evolve_in_place(rho_t, rng)?;
    Ok(out)
}

/// Alice↔Bob (reciprocal), Alice→Eve, and Bob→Eve channels.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub ab: SpatialChannel,
    pub ae: SpatialChannel,
    /// Single-row channel from Bob to Eve.
    pub be: SpatialChannel,
}

impl ChannelSet {
    pub fn evolve_in_place<R: Rng + ?Sized>(&mut self, rho_t: f64, rng: &mut R) -> Result<()> {
        self.ab.evolve_in_place(rho_t, rng)?;
        self.ae.evolve_in_place(rho_t, rng)?;
        self.be.evolve_in_place(rho_t, rng)
    }
}

pub fn generate_channel_set(m: usize, n: usize, params: &EvolutionParams, seed: u64) -> Result<ChannelSet> {
    params.validate()?;
    if m == 0 || n == 0 {
        return Err(Error::param("M and N must be at least 1"));
    }
    if n < params.tap_count {
        return Err(Error::param(format!(
            "N = {n} smaller than tap_count = {}",
            params.tap_count
        )));
    }
    Ok(ChannelSet {
        ab: SpatialChannel::random(m, n, params, &mut rng::stream(seed, Stream::ChannelAb))?,
        ae: SpatialChannel::random(m, n, params, &mut rng::stream(seed, Stream::ChannelAe))?,
        be: SpatialChannel::random(1, n, params, &mut rng::stream(seed, Stream::ChannelBe))?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeObservation {
    pub y: Vec<C64>,
    pub snr_db: f64,
}

fn check_pilot(pilot: &[C64]) -> Result<()> {
    if pilot.iter().any(|s| s.norm_sqr() == 0.0) {
        return Err(Error::param("pilot has a zero subcarrier"));
    }
    Ok(())
}

/// y(n) = ch(n)·S(n) + z(n). The noise variance is set from the mean received
/// power of this observation; `snr_db = +inf` disables noise.
pub fn observe<R: Rng + ?Sized>(ch_row: &[C64], pilot: &[C64], snr_db: f64, rng: &mut R) -> Result<ProbeObservation> {
    if ch_row.len() != pilot.len() {
        return Err(Error::Dimension(format!(
            "channel row has {} subcarriers, pilot {}",
            ch_row.len(),
            pilot.len()
        )));
    }
    check_pilot(pilot)?;
    if snr_db.is_nan() {
        return Err(Error::param("snr_db is NaN"));
    }
    let mut y: Vec<C64> = ch_row.iter().zip(pilot).map(|(h, s)| h * s).collect();
    let power = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
    let noise_var = power * 10f64.powf(-snr_db / 10.0);
    if noise_var > 0.0 {
        let sd = noise_var.sqrt();
        for v in y.iter_mut() {
            *v += complex_gaussian(rng) * sd;
        }
    }
    Ok(ProbeObservation { y, snr_db })
}

/// Least-squares estimate Ĥ(n) = y(n)/S(n).
pub fn estimate_csi(obs: &ProbeObservation, pilot: &[C64]) -> Result<CsiVector> {
    if obs.y.len() != pilot.len() {
        return Err(Error::Dimension("observation and pilot lengths differ".into()));
    }
    check_pilot(pilot)?;
    Ok(obs.y.iter().zip(pilot).map(|(y, s)| y / s).collect())
}

/// 1-based round-robin antenna index ((k + c − 1) mod M) + 1.
pub fn round_robin_index(k: usize, c: usize, m: usize) -> Result<usize> {
    if m == 0 {
        return Err(Error::param("M must be at least 1"));
    }
    if c >= m {
        return Err(Error::param(format!("offset c = {c} outside [0, {}]", m - 1)));
    }
    if k == 0 {
        return Err(Error::param("rounds are numbered from 1"));
    }
    Ok((k + c - 1) % m + 1)
}

/// N×K matrix of per-round CSI estimates; column k−1 holds round k.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    data: DMatrix<C64>,
}

impl CsiMatrix {
    pub fn from_columns(columns: &[CsiVector]) -> Result<Self> {
        let n = columns.first().map(|c| c.len()).unwrap_or(0);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("CSI columns of differing length".into()));
        }
        let data = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Self::from_matrix(data)
    }

    pub fn from_matrix(data: DMatrix<C64>) -> Result<Self> {
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::param("non-finite CSI entry"));
        }
        Ok(Self { data })
    }

    pub fn subcarriers(&self) -> usize {
        self.data.nrows()
    }

    pub fn rounds(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, n: usize, k: usize) -> C64 {
        self.data[(n, k)]
    }

    /// Round `k` (0-based column).
    pub fn column(&self, k: usize) -> CsiVector {
        self.data.column(k).iter().copied().collect()
    }

    /// Amplitudes of round `k`.
    pub fn amplitudes(&self, k: usize) -> Vec<f64> {
        self.data.column(k).iter().map(|v| v.norm()).collect()
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    /// Keeps the first `k` rounds.
    pub fn truncated(&self, k: usize) -> CsiMatrix {
        let k = k.min(self.rounds());
        Self {
            data: self.data.columns(0, k).into_owned(),
        }
    }
}
