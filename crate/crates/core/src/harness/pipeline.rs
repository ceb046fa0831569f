//! Campaign → transform → quantize → reconcile → amplify, with public artifacts.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::attacks::AttackReport;
use crate::channel_model::CsiMatrix;
use crate::error::{Error, Result, Stage, StageExt};
use crate::harness::artifacts::{self, Artifact};
use crate::harness::config::ExperimentConfig;
use crate::harness::trace::TraceSet;
use crate::kl_transform::{
    apply_transform, basis_leakage, compute_basis_with, rearrange, selection_registry, TransformBasis,
};
use crate::obfuscation::{run_probing_campaign, CampaignOutput};
use crate::quantizer::{
    assign_levels, mask_from_message, plan, quantize, raw_key, KeptIndexMessage, QuantizePlan, RawKey,
};
use crate::reconciliation::{
    digest_registry, leakage, privacy_amplify, reconcile, select_code, BchParams, SUPPORTED, FinalKey, LeakageBudget,
    Reconciliation,
};
use crate::statistics::{nist_suite, KeyMetrics, NistReport};

/// Everything the raw-key stage produces for both parties.
#[derive(Debug, Clone)]
pub struct Extraction {
    /// Alice's basis; Bob only ever touches its projection.
    pub basis: TransformBasis,
    pub plan: QuantizePlan,
    pub drops_a: KeptIndexMessage,
    pub drops_b: KeptIndexMessage,
    pub q_a: RawKey,
    pub q_b: RawKey,
    pub eta1: f64,
    /// Rounds used after truncation to whole blocks.
    pub rounds_used: usize,
}

impl Extraction {
    /// Both parties' published drop lists, merged and sorted.
    pub fn public_drops(&self) -> KeptIndexMessage {
        let mut dropped: Vec<_> = self.drops_a.dropped.iter().chain(&self.drops_b.dropped).copied().collect();
        dropped.sort_unstable();
        dropped.dedup();
        KeptIndexMessage { dropped }
    }
}

/// Raw key extraction from Alice's and Bob's CSI.
pub fn extract_keys(h_a: &CsiMatrix, h_b: &CsiMatrix, cfg: &ExperimentConfig) -> Result<Extraction> {
    if h_a.subcarriers() != h_b.subcarriers() || h_a.rounds() != h_b.rounds() {
        return Err(Error::Dimension("Alice's and Bob's CSI differ in shape".into()).at(Stage::Transform));
    }
    let shape = cfg.block_shape().stage(Stage::Transform)?;
    let ra = rearrange(h_a, shape).stage(Stage::Transform)?;
    let rb = rearrange(h_b, shape).stage(Stage::Transform)?;
    let rule = selection_registry().get(&cfg.selection).stage(Stage::Transform)?;
    let basis = compute_basis_with(&ra, cfg.eta, rule.as_ref(), cfg.center).stage(Stage::Transform)?;
    let ta = apply_transform(&basis, &ra).stage(Stage::Transform)?;
    let tb = apply_transform(&basis, &rb).stage(Stage::Transform)?;
    let eta1 = basis_leakage(h_a.subcarriers(), h_a.rounds(), shape).stage(Stage::Transform)?;

    let levels = assign_levels(&basis, basis.noise_floor, &cfg.quantizer);
    let plan = plan(&ta, &levels, &cfg.quantizer).stage(Stage::Quantize)?;
    let (qa, drops_a) = quantize(&ta, &plan, &cfg.quantizer).stage(Stage::Quantize)?;
    let (qb, drops_b) = quantize(&tb, &plan, &cfg.quantizer).stage(Stage::Quantize)?;
    // Each side rebuilds the other's mask from the published drop list.
    let ma = mask_from_message(&plan, &drops_a);
    let mb = mask_from_message(&plan, &drops_b);
    let mask: Vec<Vec<bool>> = ma
        .iter()
        .zip(&mb)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| *p && *q).collect())
        .collect();
    let q_a = raw_key(&qa, &mask).stage(Stage::Quantize)?;
    let q_b = raw_key(&qb, &mask).stage(Stage::Quantize)?;
    Ok(Extraction {
        rounds_used: ra.rounds,
        basis,
        plan,
        drops_a,
        drops_b,
        q_a,
        q_b,
        eta1,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub metrics: KeyMetrics,
    pub selected_components: usize,
    pub levels: Vec<usize>,
    pub code: BchParams,
    pub blocks: usize,
    pub discarded_blocks: usize,
    pub reconciled_bits: usize,
    pub leakage: LeakageBudget,
    pub keys_match: bool,
    pub key_fingerprint_a: String,
    pub key_fingerprint_b: String,
    pub nist: Option<NistReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub attacks: Vec<AttackReport>,
    /// Wall-clock seconds per stage; kept out of the serialized report so
    /// reports stay byte-identical across runs.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// A finished run: report, public artifacts and the intermediate results.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: RunReport,
    pub extraction: Extraction,
    pub reconciliation: Reconciliation,
    pub keys: (FinalKey, FinalKey),
    pub public: Vec<Artifact>,
}

impl Experiment {
    pub fn write_public(&self, dir: &Path) -> Result<()> {
        artifacts::write_all(dir, &self.public)
    }
}

/// Runs the pipeline on existing traces. Eve's trace, when present, is
/// published with the other public artifacts.
pub fn run_pipeline(traces: &TraceSet, cfg: &ExperimentConfig) -> Result<Experiment> {
    let (h_a, h_b) = match (&traces.alice, &traces.bob) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::param("pipeline needs Alice's and Bob's traces").at(Stage::Transform)),
    };
    let mut timings = Vec::new();
    let t = Instant::now();
    let ex = extract_keys(h_a, h_b, cfg)?;
    timings.push(("extract".to_string(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let metrics = KeyMetrics::new(&ex.q_a.bits, &ex.q_b.bits, h_a.rounds()).stage(Stage::Metrics)?;
    if ex.q_b.bits.is_empty() {
        return Err(Error::Degenerate("raw key is empty".into()).at(Stage::Quantize));
    }
    let mut code = select_code(metrics.bmr).stage(Stage::Reconcile)?;
    if cfg.escalate_code {
        code = escalate(code, worst_block_errors(&ex.q_a.bits, &ex.q_b.bits, code.n));
    }
    let rec = reconcile(&ex.q_a.bits, &ex.q_b.bits, code).stage(Stage::Reconcile)?;
    timings.push(("reconcile".to_string(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let budget = leakage(rec.bob.len(), rec.message.disclosed_bits(), ex.eta1).stage(Stage::Amplify)?;
    let digest = digest_registry().get(&cfg.digest).stage(Stage::Amplify)?;
    let key_a = privacy_amplify(&rec.alice, budget.required_len, digest.as_ref()).stage(Stage::Amplify)?;
    let key_b = privacy_amplify(&rec.bob, budget.required_len, digest.as_ref()).stage(Stage::Amplify)?;
    timings.push(("amplify".to_string(), t.elapsed().as_secs_f64()));

    let nist_len = cfg.nist_bits.min(ex.q_b.bits.len());
    let nist = if nist_len >= crate::statistics::nist::MIN_BITS {
        Some(nist_suite(&ex.q_b.bits[..nist_len]).stage(Stage::Metrics)?)
    } else {
        log::warn!("raw key of {} bits too short for randomness tests", ex.q_b.bits.len());
        None
    };

    let public = artifacts::public_artifacts(traces.eve.as_ref(), &ex, &rec).stage(Stage::Artifacts)?;
    let report = RunReport {
        config: cfg.clone(),
        metrics,
        selected_components: ex.basis.selected,
        levels: ex.plan.levels.clone(),
        code,
        blocks: rec.message.syndromes.len(),
        discarded_blocks: rec.discarded.len(),
        reconciled_bits: rec.bob.len(),
        leakage: budget,
        keys_match: key_a == key_b,
        key_fingerprint_a: key_a.fingerprint(),
        key_fingerprint_b: key_b.fingerprint(),
        nist,
        attacks: Vec::new(),
        timings,
    };
    Ok(Experiment {
        report,
        extraction: ex,
        reconciliation: rec,
        keys: (key_a, key_b),
        public,
    })
}

/// Most disagreements in any single n-bit block.
pub fn worst_block_errors(q_a: &[u8], q_b: &[u8], n: usize) -> usize {
    q_a.chunks(n)
        .zip(q_b.chunks(n))
        .map(|(a, b)| crate::statistics::hamming(a, b))
        .max()
        .unwrap_or(0)
}

/// Least-redundancy code at least as strong as `floor` that can correct
/// `worst` errors, or the strongest code if none can. Stands in for the
/// retry a key-confirmation failure would trigger: bounded-distance decoding
/// silently miscorrects a sizable share of blocks beyond t.
pub fn escalate(floor: BchParams, worst: usize) -> BchParams {
    SUPPORTED
        .iter()
        .filter(|p| p.t >= floor.t)
        .find(|p| p.t >= worst)
        .copied()
        .unwrap_or(SUPPORTED[SUPPORTED.len() - 1])
}

pub fn run_campaign(cfg: &ExperimentConfig) -> Result<CampaignOutput> {
    cfg.validate().stage(Stage::Config)?;
    run_probing_campaign(cfg.rounds, &cfg.campaign().stage(Stage::Config)?, cfg.seed).stage(Stage::Campaign)
}

pub fn campaign_traces(out: &CampaignOutput) -> TraceSet {
    TraceSet {
        alice: Some(out.h_a.clone()),
        bob: Some(out.h_b.clone()),
        eve: Some(out.h_e_down.clone()),
    }
}

/// Full simulated run from a config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let t = Instant::now();
    let out = run_campaign(cfg)?;
    let elapsed = t.elapsed().as_secs_f64();
    let mut exp = run_pipeline(&campaign_traces(&out), cfg)?;
    exp.report.timings.insert(0, ("campaign".to_string(), elapsed));
    Ok(exp)
}

/// Raw-key stage only, for sweeps.
pub fn raw_key_metrics(cfg: &ExperimentConfig) -> Result<(KeyMetrics, Extraction)> {
    let out = run_campaign(cfg)?;
    let ex = extract_keys(&out.h_a, &out.h_b, cfg)?;
    let m = KeyMetrics::new(&ex.q_a.bits, &ex.q_b.bits, cfg.rounds).stage(Stage::Metrics)?;
    Ok((m, ex))
}
