//! Eavesdropper evaluations. Attacks only see Eve's CSI, public artifacts and
//! the config; the true antenna schedule is used for scoring and nothing else.

pub mod kmeans;

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::channel_model::{estimate_csi, observe, CsiMatrix, CsiVector, C64};
use crate::error::{Error, Result, Stage, StageExt};
use crate::harness::config::ExperimentConfig;
use crate::harness::pipeline::{extract_keys, run_campaign};
use crate::obfuscation::{run_probing_campaign_with, unit_pilot, CampaignHook};
use crate::registry::{Named, Registry};
use crate::rng::{self, Stream};
use crate::statistics::{cross_correlation, median, nd_distribution, pearson, NdDistribution};

/// Mode used as the unprotected reference in every scenario.
pub const BASELINE_MODE: &str = "none";

/// Attenuation of the dominant tap while the door is closed.
pub const NLOS_ATTENUATION_DB: f64 = -10.0;

/// Percentile of N_d the brute-force attacker covers.
pub const BRUTEFORCE_PERCENTILE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub attack: String,
    pub metrics: Vec<(String, f64)>,
    pub degenerate: bool,
    /// Extra CSV tables keyed by file stem.
    #[serde(skip)]
    pub tables: Vec<(String, String)>,
}

impl AttackReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (m, v) in &self.metrics {
            s.push_str(&format!("{m},{v:.6}\n"));
        }
        s
    }
}

pub trait Attack: Named + Send + Sync {
    fn run(&self, cfg: &ExperimentConfig) -> Result<AttackReport>;
}

fn with_mode(cfg: &ExperimentConfig, mode: &str) -> ExperimentConfig {
    ExperimentConfig {
        mode: mode.to_string(),
        ..cfg.clone()
    }
}

// ---- predictable channel -------------------------------------------------

/// Door closed (NLoS) in the second half of every period.
pub fn door_closed(round: usize, period: usize) -> bool {
    let half = (period / 2).max(1);
    ((round - 1) / half) % 2 == 1
}

struct Door {
    period: usize,
}

impl CampaignHook for Door {
    fn modulate(&mut self, round: usize, channels: &mut crate::channel_model::ChannelSet) {
        if door_closed(round, self.period) {
            channels.ab.scale_tap(0, NLOS_ATTENUATION_DB);
        }
    }
}

#[derive(Debug, Clone)]
pub struct PredictableOutcome {
    pub bob_csi: CsiMatrix,
    pub door: Vec<bool>,
    pub score: f64,
    pub degenerate: bool,
}

/// |Pearson| between Bob's amplitude at subcarrier N/2 and the door state.
pub fn modulation_score(csi: &CsiMatrix, door: &[bool]) -> (f64, bool) {
    let sub = csi.subcarriers() / 2;
    let amp: Vec<f64> = (0..csi.rounds()).map(|k| csi.get(sub, k).norm()).collect();
    let state: Vec<f64> = door.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect();
    match pearson(&amp, &state) {
        Ok(r) => (r.abs(), false),
        Err(_) => (0.0, true),
    }
}

pub fn predictable_channel_scenario(cfg: &ExperimentConfig) -> Result<PredictableOutcome> {
    if cfg.door_period < 2 {
        return Err(Error::param("door period must be at least 2 rounds"));
    }
    cfg.validate()?;
    let mut door = Door {
        period: cfg.door_period,
    };
    let out = run_probing_campaign_with(cfg.rounds, &cfg.campaign()?, cfg.seed, Some(&mut door))?;
    let states: Vec<bool> = (1..=cfg.rounds).map(|k| door_closed(k, cfg.door_period)).collect();
    let (score, degenerate) = modulation_score(&out.h_b, &states);
    Ok(PredictableOutcome {
        bob_csi: out.h_b,
        door: states,
        score,
        degenerate,
    })
}

pub struct PredictableChannel;

impl Named for PredictableChannel {
    fn name(&self) -> &str {
        "predictable_channel"
    }
}

impl Attack for PredictableChannel {
    fn run(&self, cfg: &ExperimentConfig) -> Result<AttackReport> {
        let base = predictable_channel_scenario(&with_mode(cfg, BASELINE_MODE))?;
        let prot = predictable_channel_scenario(cfg)?;
        Ok(AttackReport {
            attack: self.name().into(),
            metrics: vec![
                ("score_baseline".into(), base.score),
                ("score".into(), prot.score),
            ],
            degenerate: base.degenerate || prot.degenerate,
            tables: vec![],
        })
    }
}

// ---- position replay -----------------------------------------------------

/// Eve standing at Bob's position, with separate receiver noise.
struct ReplayReceiver {
    snr_db: f64,
    pilot: Vec<C64>,
    rng: rand_chacha::ChaCha8Rng,
    seen: Vec<CsiVector>,
    error: Option<Error>,
}

impl CampaignHook for ReplayReceiver {
    fn downlink(&mut self, _round: usize, tx: &[C64], bob_row: &[C64]) {
        let est = observe(bob_row, tx, self.snr_db, &mut self.rng).and_then(|o| estimate_csi(&o, &self.pilot));
        match est {
            Ok(v) => self.seen.push(v),
            Err(e) => {
                self.error.get_or_insert(e);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    /// ρ_BE between Bob's round k and Eve's round k + offset.
    pub rho: Vec<f64>,
}

impl ReplayOutcome {
    pub fn median(&self) -> f64 {
        median(&self.rho)
    }
}

pub fn replay_scenario(cfg: &ExperimentConfig) -> Result<ReplayOutcome> {
    if cfg.replay_offset < 1 {
        return Err(Error::param("replay offset must be at least 1 round"));
    }
    if cfg.replay_offset >= cfg.rounds {
        return Err(Error::param("replay offset must be shorter than the campaign"));
    }
    cfg.validate()?;
    let mut eve = ReplayReceiver {
        snr_db: cfg.snr_db,
        pilot: unit_pilot(cfg.subcarriers),
        rng: rng::stream(cfg.seed, Stream::Replay),
        seen: Vec::with_capacity(cfg.rounds),
        error: None,
    };
    let out = run_probing_campaign_with(cfg.rounds, &cfg.campaign()?, cfg.seed, Some(&mut eve))?;
    if let Some(e) = eve.error {
        return Err(e);
    }
    let rho = (0..cfg.rounds - cfg.replay_offset)
        .map(|k| cross_correlation(&out.h_b.column(k), &eve.seen[k + cfg.replay_offset]).unwrap_or(0.0))
        .collect();
    Ok(ReplayOutcome { rho })
}

pub struct PositionReplay;

impl Named for PositionReplay {
    fn name(&self) -> &str {
        "position_replay"
    }
}

impl Attack for PositionReplay {
    fn run(&self, cfg: &ExperimentConfig) -> Result<AttackReport> {
        let base = replay_scenario(&with_mode(cfg, BASELINE_MODE))?;
        let prot = replay_scenario(cfg)?;
        let frac_above = |v: &[f64], t: f64| v.iter().filter(|&&x| x >= t).count() as f64 / v.len() as f64;
        Ok(AttackReport {
            attack: self.name().into(),
            metrics: vec![
                ("median_rho_baseline".into(), base.median()),
                ("median_rho".into(), prot.median()),
                ("frac_rho_ge_0.9_baseline".into(), frac_above(&base.rho, 0.9)),
                ("frac_rho_ge_0.9".into(), frac_above(&prot.rho, 0.9)),
            ],
            degenerate: false,
            tables: vec![("replay_rho".into(), rho_csv(&base.rho, &prot.rho))],
        })
    }
}

fn rho_csv(base: &[f64], prot: &[f64]) -> String {
    let mut s = String::from("round,rho_baseline,rho\n");
    for (k, (b, p)) in base.iter().zip(prot).enumerate() {
        s.push_str(&format!("{},{b:.6},{p:.6}\n", k + 1));
    }
    s
}

// ---- effective brute force -----------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceOutcome {
    pub nd: NdDistribution,
    pub d95: usize,
    pub search_space_log2: f64,
}

/// log₂ Σ_{d ≤ d_max} C(G, d), summed in log space.
pub fn search_space_log2(group: usize, d_max: usize) -> f64 {
    let logs: Vec<f64> = (0..=d_max.min(group))
        .map(|d| statrs::function::factorial::ln_binomial(group as u64, d as u64))
        .collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ln_sum = peak + logs.iter().map(|l| (l - peak).exp()).sum::<f64>().ln();
    ln_sum / std::f64::consts::LN_2
}

pub fn bruteforce_from_nd(nd: NdDistribution) -> BruteForceOutcome {
    let d95 = nd.quantile(BRUTEFORCE_PERCENTILE);
    let search = search_space_log2(nd.group, d95);
    BruteForceOutcome {
        nd,
        d95,
        search_space_log2: search,
    }
}

/// Attacker's per-group search cost when the previous group is known.
pub fn effective_bruteforce_gain(q: &[u8], group: usize) -> Result<BruteForceOutcome> {
    Ok(bruteforce_from_nd(nd_distribution(q, group)?))
}

pub struct EffectiveBruteforce;

impl Named for EffectiveBruteforce {
    fn name(&self) -> &str {
        "effective_bruteforce"
    }
}

impl Attack for EffectiveBruteforce {
    fn run(&self, cfg: &ExperimentConfig) -> Result<AttackReport> {
        let mut metrics = Vec::new();
        let mut tables = Vec::new();
        for (label, c) in [("_baseline", with_mode(cfg, BASELINE_MODE)), ("", cfg.clone())] {
            let out = run_campaign(&c)?;
            let ex = extract_keys(&out.h_a, &out.h_b, &c)?;
            let b = effective_bruteforce_gain(&ex.q_b.bits, cfg.group_size)?;
            metrics.push((format!("tv_distance{label}"), b.nd.tv_distance));
            metrics.push((format!("median_nd{label}"), b.nd.median() as f64));
            metrics.push((format!("d95{label}"), b.d95 as f64));
            metrics.push((format!("search_space_log2{label}"), b.search_space_log2));
            tables.push((format!("nd_histogram{label}"), b.nd.to_csv()));
        }
        Ok(AttackReport {
            attack: self.name().into(),
            metrics,
            degenerate: false,
            tables,
        })
    }
}

// ---- order speculation ---------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeculationResult {
    pub per_antenna: Vec<f64>,
    pub overall: f64,
    /// Row: true antenna; column: cluster matched to that antenna.
    pub confusion: Vec<Vec<usize>>,
    pub degenerate: bool,
}

impl SpeculationResult {
    pub fn confusion_csv(&self) -> String {
        let m = self.confusion.len();
        let mut s = String::from("antenna");
        for j in 1..=m {
            s.push_str(&format!(",cluster_{j}"));
        }
        s.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            s.push_str(&(i + 1).to_string());
            for c in row {
                s.push_str(&format!(",{c}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Clusters Eve's amplitude vectors into M groups and scores the best
/// cluster-to-antenna matching against the true schedule.
pub fn speculate_antenna_order(
    eve_csi: &CsiMatrix,
    antennas: usize,
    truth: &[usize],
    restarts: usize,
    seed: u64,
) -> Result<SpeculationResult> {
    let k = eve_csi.rounds();
    if antennas == 0 {
        return Err(Error::param("M must be at least 1"));
    }
    if k < antennas {
        return Err(Error::param(format!("{k} rounds cannot fill {antennas} clusters")));
    }
    if truth.len() != k {
        return Err(Error::Dimension(format!("{} labels for {k} rounds", truth.len())));
    }
    if truth.iter().any(|&t| t == 0 || t > antennas) {
        return Err(Error::param("truth labels must lie in 1..=M"));
    }
    let points: Vec<Vec<f64>> = (0..k).map(|c| eve_csi.amplitudes(c)).collect();
    let mut counts = vec![0usize; antennas];
    truth.iter().for_each(|&t| counts[t - 1] += 1);

    if points.iter().all(|p| p == &points[0]) && antennas > 1 {
        let confusion = (0..antennas)
            .map(|i| (0..antennas).map(|j| if j == 0 { counts[i] } else { 0 }).collect())
            .collect();
        return Ok(SpeculationResult {
            per_antenna: vec![1.0 / antennas as f64; antennas],
            overall: 1.0 / antennas as f64,
            confusion,
            degenerate: true,
        });
    }

    let clusters = kmeans::kmeans(&points, antennas, restarts, seed);
    let mut raw = vec![vec![0usize; antennas]; antennas];
    for (&t, &l) in truth.iter().zip(&clusters.labels) {
        raw[t - 1][l] += 1;
    }
    let weights: Vec<Vec<f64>> = raw.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect();
    let assign = kmeans::max_weight_assignment(&weights);
    let confusion: Vec<Vec<usize>> = (0..antennas)
        .map(|i| (0..antennas).map(|j| raw[i][assign[j]]).collect())
        .collect();
    let matched: usize = (0..antennas).map(|i| confusion[i][i]).sum();
    let per_antenna = (0..antennas)
        .map(|i| if counts[i] > 0 { confusion[i][i] as f64 / counts[i] as f64 } else { 0.0 })
        .collect();
    Ok(SpeculationResult {
        per_antenna,
        overall: matched as f64 / k as f64,
        confusion,
        degenerate: false,
    })
}

pub struct OrderSpeculation;

impl Named for OrderSpeculation {
    fn name(&self) -> &str {
        "order_speculation"
    }
}

impl Attack for OrderSpeculation {
    fn run(&self, cfg: &ExperimentConfig) -> Result<AttackReport> {
        let mut metrics = Vec::new();
        let mut tables = Vec::new();
        let mut degenerate = false;
        for (label, c) in [("_antenna_only", with_mode(cfg, "antenna_only")), ("", cfg.clone())] {
            let out = run_campaign(&c)?;
            let r = speculate_antenna_order(&out.h_e_down, c.antennas, &out.antenna_truth, c.kmeans_restarts, c.seed)
                .stage(Stage::Attack)?;
            metrics.push((format!("accuracy{label}"), r.overall));
            degenerate |= r.degenerate;
            tables.push((format!("confusion{label}"), r.confusion_csv()));
        }
        Ok(AttackReport {
            attack: self.name().into(),
            metrics,
            degenerate,
            tables,
        })
    }
}

pub fn attack_registry() -> &'static Registry<dyn Attack> {
    static REG: OnceLock<Registry<dyn Attack>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn Attack> = Registry::new("attack");
        r.register(Arc::new(PredictableChannel));
        r.register(Arc::new(PositionReplay));
        r.register(Arc::new(EffectiveBruteforce));
        r.register(Arc::new(OrderSpeculation));
        r
    })
}

pub fn run_attack(name: &str, cfg: &ExperimentConfig) -> Result<AttackReport> {
    attack_registry().get(name)?.run(cfg).stage(Stage::Attack)
}
