//! Channel obfuscation (secret random filter plus secret antenna choice) and the
//! bidirectional probing protocol built on it.

use std::sync::{Arc, OnceLock};

use rand::Rng;

use crate::channel_model::{
    complex_gaussian, estimate_csi, generate_channel_set, observe, round_robin_index, ChannelSet, CsiMatrix,
    CsiVector, Dft, EvolutionParams, C64,
};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterTaps {
    pub a: Vec<C64>,
}

pub fn draw_filter_taps<R: Rng + ?Sized>(filter_len: usize, rng: &mut R) -> Result<FilterTaps> {
    if filter_len < 1 {
        return Err(Error::param("filter length must be at least 1"));
    }
    Ok(FilterTaps {
        a: (0..filter_len).map(|_| complex_gaussian(rng)).collect(),
    })
}

/// α(n) = Σ_{i=1..L_f} a_i e^{−j2πni/N}: the N-point DFT of [0, a_1, .., a_{L_f}, 0, ..].
/// Taps past N wrap around.
pub fn filter_response(taps: &FilterTaps, n: usize) -> Vec<C64> {
    if n == 0 {
        return Vec::new();
    }
    Dft::new(n).zero_padded(&taps.a, 1)
}

/// Uniform on 1..=M.
pub fn draw_antenna_index<R: Rng + ?Sized>(m: usize, rng: &mut R) -> usize {
    rng.random_range(1..=m.max(1))
}

/// Alice's private per-round secret.
#[derive(Debug, Clone, PartialEq)]
pub struct ObfuscationState {
    pub round: usize,
    /// 1-based antenna index.
    pub m_k: usize,
    /// `None` when the scheme applies no filter (α ≡ 1).
    pub taps: Option<FilterTaps>,
    pub alpha: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub h_a: CsiVector,
    pub h_b: CsiVector,
    pub h_e_down: CsiVector,
    pub h_e_up: CsiVector,
}

/// What a scheme needs to know to draw a round's secret.
#[derive(Debug, Clone)]
pub struct SchemeContext {
    pub antennas: usize,
    pub subcarriers: usize,
    /// Filter length; 0 disables filtering.
    pub filter_len: usize,
    /// Round-robin offset c.
    pub rr_offset: usize,
    dft: Dft,
}

impl SchemeContext {
    pub fn new(antennas: usize, subcarriers: usize, filter_len: usize, rr_offset: usize) -> Result<Self> {
        if antennas == 0 || subcarriers == 0 {
            return Err(Error::param("M and N must be at least 1"));
        }
        Ok(Self {
            antennas,
            subcarriers,
            filter_len,
            rr_offset,
            dft: Dft::new(subcarriers),
        })
    }

    fn unit_alpha(&self) -> Vec<C64> {
        vec![C64::new(1.0, 0.0); self.subcarriers]
    }

    /// Draws fresh taps when filtering is enabled.
    pub fn draw_filter<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Option<FilterTaps>, Vec<C64>)> {
        if self.filter_len == 0 {
            return Ok((None, self.unit_alpha()));
        }
        let taps = draw_filter_taps(self.filter_len, rng)?;
        let alpha = self.dft.zero_padded(&taps.a, 1);
        Ok((Some(taps), alpha))
    }
}

/// Per-round secret drawing strategy, selected by name.
pub trait ObfuscationScheme: Named + Send + Sync {
    fn draw_state(&self, round: usize, ctx: &SchemeContext, rng_secret: &mut dyn rand::RngCore) -> Result<ObfuscationState>;
}

/// Random antenna and random filter each round.
pub struct RandomObfuscation;

impl Named for RandomObfuscation {
    fn name(&self) -> &str {
        "random"
    }
}

impl ObfuscationScheme for RandomObfuscation {
    fn draw_state(&self, round: usize, ctx: &SchemeContext, rng: &mut dyn rand::RngCore) -> Result<ObfuscationState> {
        let (taps, alpha) = ctx.draw_filter(rng)?;
        let m_k = draw_antenna_index(ctx.antennas, rng);
        Ok(ObfuscationState { round, m_k, taps, alpha })
    }
}

/// Random antenna, no filter.
pub struct AntennaOnly;

impl Named for AntennaOnly {
    fn name(&self) -> &str {
        "antenna_only"
    }
}

impl ObfuscationScheme for AntennaOnly {
    fn draw_state(&self, round: usize, ctx: &SchemeContext, rng: &mut dyn rand::RngCore) -> Result<ObfuscationState> {
        let m_k = draw_antenna_index(ctx.antennas, rng);
        Ok(ObfuscationState {
            round,
            m_k,
            taps: None,
            alpha: ctx.unit_alpha(),
        })
    }
}

/// Antenna 1 every round, no filter.
pub struct NoObfuscation;

impl Named for NoObfuscation {
    fn name(&self) -> &str {
        "none"
    }
}

impl ObfuscationScheme for NoObfuscation {
    fn draw_state(&self, round: usize, ctx: &SchemeContext, _rng: &mut dyn rand::RngCore) -> Result<ObfuscationState> {
        Ok(ObfuscationState {
            round,
            m_k: 1,
            taps: None,
            alpha: ctx.unit_alpha(),
        })
    }
}

/// Round-robin schedule, no filter.
pub struct RoundRobin;

impl Named for RoundRobin {
    fn name(&self) -> &str {
        "round_robin"
    }
}

impl ObfuscationScheme for RoundRobin {
    fn draw_state(&self, round: usize, ctx: &SchemeContext, _rng: &mut dyn rand::RngCore) -> Result<ObfuscationState> {
        Ok(ObfuscationState {
            round,
            m_k: round_robin_index(round, ctx.rr_offset, ctx.antennas)?,
            taps: None,
            alpha: ctx.unit_alpha(),
        })
    }
}

/// Round-robin schedule with a random filter each round.
pub struct FilteredRoundRobin;

impl Named for FilteredRoundRobin {
    fn name(&self) -> &str {
        "filtered_round_robin"
    }
}

impl ObfuscationScheme for FilteredRoundRobin {
    fn draw_state(&self, round: usize, ctx: &SchemeContext, rng: &mut dyn rand::RngCore) -> Result<ObfuscationState> {
        let (taps, alpha) = ctx.draw_filter(rng)?;
        Ok(ObfuscationState {
            round,
            m_k: round_robin_index(round, ctx.rr_offset, ctx.antennas)?,
            taps,
            alpha,
        })
    }
}

pub fn scheme_registry() -> &'static Registry<dyn ObfuscationScheme> {
    static REG: OnceLock<Registry<dyn ObfuscationScheme>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn ObfuscationScheme> = Registry::new("obfuscation mode");
        r.register(Arc::new(RandomObfuscation));
        r.register(Arc::new(AntennaOnly));
        r.register(Arc::new(NoObfuscation));
        r.register(Arc::new(RoundRobin));
        r.register(Arc::new(FilteredRoundRobin));
        r
    })
}

pub fn unit_pilot(n: usize) -> Vec<C64> {
    vec![C64::new(1.0, 0.0); n]
}

/// One round of the protocol for an already drawn secret.
///
/// Alice sends S·α from antenna m_k; Bob divides by S. Bob sends S; Alice
/// multiplies the reply received on m_k by α and divides by S. Eve sees both
/// transmissions through separate channels and can only divide by S.
pub fn probe_with_state<R: Rng + ?Sized>(
    channels: &ChannelSet,
    pilot: &[C64],
    snr_db: f64,
    state: &ObfuscationState,
    rng_noise: &mut R,
) -> Result<RoundResult> {
    let n = pilot.len();
    if state.alpha.len() != n || channels.ab.subcarriers() != n {
        return Err(Error::Dimension("pilot, filter and channel lengths differ".into()));
    }
    let m = state.m_k;
    if m == 0 || m > channels.ab.antennas() {
        return Err(Error::param(format!("antenna index {m} outside 1..={}", channels.ab.antennas())));
    }
    let tx: Vec<C64> = pilot.iter().zip(&state.alpha).map(|(s, a)| s * a).collect();
    let ab = channels.ab.row(m - 1);

    let h_b = estimate_csi(&observe(ab, &tx, snr_db, rng_noise)?, pilot)?;
    let mut y_a = observe(ab, pilot, snr_db, rng_noise)?;
    for (y, a) in y_a.y.iter_mut().zip(&state.alpha) {
        *y *= a;
    }
    let h_a = estimate_csi(&y_a, pilot)?;
    let h_e_down = estimate_csi(&observe(channels.ae.row(m - 1), &tx, snr_db, rng_noise)?, pilot)?;
    let h_e_up = estimate_csi(&observe(channels.be.row(0), pilot, snr_db, rng_noise)?, pilot)?;
    Ok(RoundResult {
        h_a,
        h_b,
        h_e_down,
        h_e_up,
    })
}

/// Draws Alice's secret for round `k` and runs the round.
#[allow(clippy::too_many_arguments)]
pub fn probe_round<R: Rng + ?Sized>(
    k: usize,
    channels: &ChannelSet,
    pilot: &[C64],
    snr_db: f64,
    scheme: &dyn ObfuscationScheme,
    ctx: &SchemeContext,
    rng_secret: &mut dyn rand::RngCore,
    rng_noise: &mut R,
) -> Result<(RoundResult, ObfuscationState)> {
    if pilot.iter().any(|s| s.norm_sqr() == 0.0) {
        return Err(Error::param("pilot has a zero subcarrier"));
    }
    let state = scheme.draw_state(k, ctx, rng_secret)?;
    let result = probe_with_state(channels, pilot, snr_db, &state, rng_noise)?;
    Ok((result, state))
}

/// Physical side effects a scenario can attach to a campaign.
pub trait CampaignHook {
    /// Alters the propagation environment in force for round `round`. The
    /// underlying evolution chain is not affected.
    fn modulate(&mut self, _round: usize, _channels: &mut ChannelSet) {}

    /// Sees Alice's transmitted waveform together with the channel to Bob's
    /// position, as an extra receiver standing there would.
    fn downlink(&mut self, _round: usize, _tx: &[C64], _bob_row: &[C64]) {}
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub antennas: usize,
    pub subcarriers: usize,
    pub snr_db: f64,
    pub evolution: EvolutionParams,
    pub mode: String,
    pub filter_len: usize,
    pub rr_offset: usize,
    /// Defaults to all ones.
    pub pilot: Option<Vec<C64>>,
}

#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub h_a: CsiMatrix,
    pub h_b: CsiMatrix,
    pub h_e_down: CsiMatrix,
    pub h_e_up: CsiMatrix,
    pub secrets: Vec<ObfuscationState>,
    pub antenna_truth: Vec<usize>,
}

pub fn run_probing_campaign(rounds: usize, config: &CampaignConfig, seed: u64) -> Result<CampaignOutput> {
    run_probing_campaign_with(rounds, config, seed, None)
}

pub fn run_probing_campaign_with(
    rounds: usize,
    config: &CampaignConfig,
    seed: u64,
    mut hook: Option<&mut dyn CampaignHook>,
) -> Result<CampaignOutput> {
    if rounds == 0 {
        return Err(Error::param("campaign needs K >= 1"));
    }
    let scheme = scheme_registry().get(&config.mode)?;
    let ctx = SchemeContext::new(config.antennas, config.subcarriers, config.filter_len, config.rr_offset)?;
    let pilot = config.pilot.clone().unwrap_or_else(|| unit_pilot(config.subcarriers));
    if pilot.len() != config.subcarriers {
        return Err(Error::param("pilot length must equal N"));
    }
    let mut channels = generate_channel_set(config.antennas, config.subcarriers, &config.evolution, seed)?;
    let mut rng_evo = rng::stream(seed, Stream::Evolution);
    let mut rng_secret = rng::stream(seed, Stream::Secret);
    let mut rng_noise = rng::stream(seed, Stream::Noise);

    let mut cols: [Vec<CsiVector>; 4] = Default::default();
    let mut secrets = Vec::with_capacity(rounds);
    for k in 1..=rounds {
        if k > 1 {
            channels.evolve_in_place(config.evolution.rho_t, &mut rng_evo)?;
        }
        let (result, state) = match hook.as_deref_mut() {
            Some(h) => {
                let mut env = channels.clone();
                h.modulate(k, &mut env);
                let out = probe_round(k, &env, &pilot, config.snr_db, scheme.as_ref(), &ctx, &mut rng_secret, &mut rng_noise)?;
                let tx: Vec<C64> = pilot.iter().zip(&out.1.alpha).map(|(s, a)| s * a).collect();
                h.downlink(k, &tx, env.ab.row(out.1.m_k - 1));
                out
            }
            None => probe_round(k, &channels, &pilot, config.snr_db, scheme.as_ref(), &ctx, &mut rng_secret, &mut rng_noise)?,
        };
        cols[0].push(result.h_a);
        cols[1].push(result.h_b);
        cols[2].push(result.h_e_down);
        cols[3].push(result.h_e_up);
        secrets.push(state);
    }
    let [a, b, ed, eu] = cols;
    Ok(CampaignOutput {
        h_a: CsiMatrix::from_columns(&a)?,
        h_b: CsiMatrix::from_columns(&b)?,
        h_e_down: CsiMatrix::from_columns(&ed)?,
        h_e_up: CsiMatrix::from_columns(&eu)?,
        antenna_truth: secrets.iter().map(|s| s.m_k).collect(),
        secrets,
    })
}
