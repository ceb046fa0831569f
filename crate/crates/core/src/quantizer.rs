//! Windowed quantile quantization with guard bands and Gray labelling.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kl_transform::{TransformBasis, TransformedMatrix, NOISE_MULTIPLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartMode {
    /// Real and imaginary parts as two separate sequences.
    RealImag,
    Amplitude,
}

impl PartMode {
    pub fn parts(self) -> usize {
        match self {
            PartMode::RealImag => 2,
            PartMode::Amplitude => 1,
        }
    }
}

impl std::str::FromStr for PartMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real_imag" => Ok(PartMode::RealImag),
            "amplitude" => Ok(PartMode::Amplitude),
            other => Err(Error::param(format!("unknown part_mode `{other}` (real_imag, amplitude)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub first_component_bits: usize,
    pub other_component_bits: usize,
    pub window_len: usize,
    /// β: guard probability mass per threshold, as a fraction of one cell.
    pub guard_fraction: f64,
    pub part_mode: PartMode,
    /// Halve the window where the local variance exceeds twice the row median.
    pub adaptive_window: bool,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self {
            first_component_bits: 2,
            other_component_bits: 1,
            window_len: 64,
            guard_fraction: 0.1,
            part_mode: PartMode::RealImag,
            adaptive_window: false,
        }
    }
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("first_component_bits", self.first_component_bits),
            ("other_component_bits", self.other_component_bits),
        ] {
            if !(1..=4).contains(&b) {
                return Err(Error::param(format!("{name} = {b} outside 1..=4")));
            }
        }
        if self.window_len < 2 {
            return Err(Error::param("window length must be at least 2"));
        }
        let widest = 1usize << self.first_component_bits.max(self.other_component_bits);
        if self.window_len < widest {
            return Err(Error::param(format!(
                "window length {} shorter than {widest} cells",
                self.window_len
            )));
        }
        if !(0.0..0.5).contains(&self.guard_fraction) {
            return Err(Error::param(format!("guard fraction {} outside [0, 0.5)", self.guard_fraction)));
        }
        Ok(())
    }
}

/// Bits per component: the first gets `first_component_bits`, the rest
/// `other_component_bits`, and anything weaker than 4× the noise floor gets 1.
pub fn assign_levels(basis: &TransformBasis, noise_floor: f64, config: &QuantizerConfig) -> Vec<usize> {
    (0..basis.selected)
        .map(|p| {
            let nominal = if p == 0 {
                config.first_component_bits
            } else {
                config.other_component_bits
            };
            match basis.eigenvalues.get(p) {
                Some(&l) if l < NOISE_MULTIPLE * noise_floor => nominal.min(1),
                _ => nominal,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowThresholds {
    pub thresholds: Vec<f64>,
    /// Open interval around each threshold whose samples are dropped.
    pub guards: Vec<(f64, f64)>,
}

impl WindowThresholds {
    /// Number of thresholds strictly below `v`; ties fall to the lower cell.
    pub fn cell(&self, v: f64) -> usize {
        self.thresholds.iter().filter(|&&t| v > t).count()
    }

    pub fn guarded(&self, v: f64) -> bool {
        self.guards.iter().any(|&(lo, hi)| v > lo && v < hi)
    }
}

/// Empirical quantile thresholds for one window, plus guard intervals holding
/// β/2^{L_p} probability mass each under a Gaussian fit to the window.
pub fn window_thresholds(values: &[f64], bits: usize, beta: f64) -> Result<WindowThresholds> {
    let cells = 1usize << bits;
    if values.len() < cells {
        return Err(Error::param(format!(
            "window of {} samples cannot hold {cells} cells",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let len = sorted.len();
    let mean = sorted.iter().sum::<f64>() / len as f64;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len as f64).sqrt();
    let normal = Normal::standard();

    let mut thresholds = Vec::with_capacity(cells - 1);
    let mut guards = Vec::with_capacity(cells - 1);
    for t in 1..cells {
        // Quantile position t·len/cells between order statistics.
        let num = t * len;
        let r = num / cells;
        let thr = if num.is_multiple_of(cells) {
            0.5 * (sorted[r - 1] + sorted[r])
        } else {
            sorted[r]
        };
        let half = if beta > 0.0 && sd > 0.0 {
            let q = t as f64 / cells as f64;
            let m = beta / cells as f64 / 2.0;
            0.5 * sd * (normal.inverse_cdf(q + m) - normal.inverse_cdf(q - m))
        } else {
            0.0
        };
        thresholds.push(thr);
        guards.push((thr - half, thr + half));
    }
    Ok(WindowThresholds { thresholds, guards })
}

/// Reflected Gray code of `cell`, most significant bit first.
pub fn gray_encode(cell: usize, bits: usize) -> Result<Vec<u8>> {
    if bits == 0 || bits > 16 || cell >= (1 << bits) {
        return Err(Error::param(format!("cell {cell} out of range for {bits} bits")));
    }
    let g = cell ^ (cell >> 1);
    Ok((0..bits).rev().map(|i| ((g >> i) & 1) as u8).collect())
}

/// Public window layout and per-component bit allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizePlan {
    pub levels: Vec<usize>,
    pub part_mode: PartMode,
    pub columns: usize,
    /// Window ranges for each (component, part) row, row index component·parts + part.
    pub windows: Vec<Vec<Range<usize>>>,
}

impl QuantizePlan {
    pub fn rows(&self) -> usize {
        self.levels.len() * self.part_mode.parts()
    }
}

fn part_values(t: &TransformedMatrix, component: usize, part: usize, mode: PartMode) -> Vec<f64> {
    t.data
        .row(component)
        .iter()
        .map(|v| match (mode, part) {
            (PartMode::Amplitude, _) => v.norm(),
            (PartMode::RealImag, 0) => v.re,
            (PartMode::RealImag, _) => v.im,
        })
        .collect()
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn fixed_windows(len: usize, wl: usize, min_tail: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut s = 0;
    while s < len {
        let e = (s + wl).min(len);
        if e - s == wl || e - s >= min_tail {
            out.push(s..e);
        }
        s = e;
    }
    out
}

fn row_windows(values: &[f64], bits: usize, config: &QuantizerConfig) -> Vec<Range<usize>> {
    let min_tail = 2 << bits;
    let base = fixed_windows(values.len(), config.window_len, min_tail);
    if !config.adaptive_window {
        return base;
    }
    let vars: Vec<f64> = base.iter().map(|w| variance(&values[w.clone()])).collect();
    let mut sorted = vars.clone();
    sorted.sort_by(f64::total_cmp);
    let med = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    let half = config.window_len / 2;
    let mut out = Vec::new();
    for (w, v) in base.into_iter().zip(vars) {
        if v > 2.0 * med && half >= (1 << bits) && w.len() == config.window_len {
            out.push(w.start..w.start + half);
            out.push(w.start + half..w.end);
        } else {
            out.push(w);
        }
    }
    out
}

/// Window layout computed by the party that owns the basis.
pub fn plan(transformed: &TransformedMatrix, levels: &[usize], config: &QuantizerConfig) -> Result<QuantizePlan> {
    config.validate()?;
    let (p, c) = (transformed.data.nrows(), transformed.data.ncols());
    if p == 0 || c == 0 {
        return Err(Error::param("nothing to quantize"));
    }
    if levels.len() != p {
        return Err(Error::Dimension(format!("{} levels for {p} components", levels.len())));
    }
    let parts = config.part_mode.parts();
    let mut windows = Vec::with_capacity(p * parts);
    for (comp, &bits) in levels.iter().enumerate() {
        for part in 0..parts {
            let values = part_values(transformed, comp, part, config.part_mode);
            windows.push(row_windows(&values, bits, config));
        }
    }
    Ok(QuantizePlan {
        levels: levels.to_vec(),
        part_mode: config.part_mode,
        columns: c,
        windows,
    })
}

/// One party's cell decisions; `None` marks guard-band or unwindowed samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantization {
    pub plan: QuantizePlan,
    pub cells: Vec<Vec<Option<u8>>>,
}

/// Publicly announced drop positions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeptIndexMessage {
    /// (component, part, column, offset within the window).
    pub dropped: Vec<(usize, usize, usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BitProvenance {
    pub component: usize,
    pub part: usize,
    pub column: usize,
    pub window: usize,
    /// Bit position within the sample's Gray label, 0 = most significant.
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawKey {
    pub bits: Vec<u8>,
    pub provenance: Vec<BitProvenance>,
    /// Per (component, part) row, per column: survived both parties' guard bands.
    pub kept_mask: Vec<Vec<bool>>,
}

impl RawKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Quantizes every (component, part) row under a shared plan.
pub fn quantize(transformed: &TransformedMatrix, plan: &QuantizePlan, config: &QuantizerConfig) -> Result<(Quantization, KeptIndexMessage)> {
    config.validate()?;
    let parts = plan.part_mode.parts();
    if transformed.data.nrows() != plan.levels.len() || transformed.data.ncols() != plan.columns {
        return Err(Error::Dimension("transformed matrix does not match the quantization plan".into()));
    }
    if plan.columns == 0 {
        return Err(Error::param("nothing to quantize"));
    }
    let mut cells = Vec::with_capacity(plan.rows());
    let mut msg = KeptIndexMessage::default();
    for (comp, &bits) in plan.levels.iter().enumerate() {
        for part in 0..parts {
            let values = part_values(transformed, comp, part, plan.part_mode);
            let mut row = vec![None; values.len()];
            for w in &plan.windows[comp * parts + part] {
                let th = window_thresholds(&values[w.clone()], bits, config.guard_fraction)?;
                for i in w.clone() {
                    if th.guarded(values[i]) {
                        msg.dropped.push((comp, part, i, i - w.start));
                    } else {
                        row[i] = Some(th.cell(values[i]) as u8);
                    }
                }
            }
            cells.push(row);
        }
    }
    Ok((
        Quantization {
            plan: plan.clone(),
            cells,
        },
        msg,
    ))
}

/// Samples both parties kept.
pub fn intersect_masks(a: &Quantization, b: &Quantization) -> Result<Vec<Vec<bool>>> {
    if a.cells.len() != b.cells.len() || a.cells.iter().zip(&b.cells).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::Dimension("quantizations have different shapes".into()));
    }
    Ok(a
        .cells
        .iter()
        .zip(&b.cells)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p.is_some() && q.is_some()).collect())
        .collect())
}

/// Mask recovered from the counterpart's published drop list and the shared plan.
pub fn mask_from_message(plan: &QuantizePlan, msg: &KeptIndexMessage) -> Vec<Vec<bool>> {
    let parts = plan.part_mode.parts();
    let mut mask: Vec<Vec<bool>> = plan
        .windows
        .iter()
        .map(|ws| {
            let mut row = vec![false; plan.columns];
            for w in ws {
                row[w.clone()].iter_mut().for_each(|v| *v = true);
            }
            row
        })
        .collect();
    for &(comp, part, col, _) in &msg.dropped {
        if let Some(v) = mask.get_mut(comp * parts + part).and_then(|r| r.get_mut(col)) {
            *v = false;
        }
    }
    mask
}

/// Concatenates Gray labels of masked samples: component, part, column, then bit.
pub fn raw_key(q: &Quantization, mask: &[Vec<bool>]) -> Result<RawKey> {
    let parts = q.plan.part_mode.parts();
    if mask.len() != q.cells.len() {
        return Err(Error::Dimension("mask shape differs from quantization".into()));
    }
    let mut bits = Vec::new();
    let mut provenance = Vec::new();
    for (r, row) in q.cells.iter().enumerate() {
        let (component, part) = (r / parts, r % parts);
        let lp = q.plan.levels[component];
        let windows = &q.plan.windows[r];
        let mut wi = 0;
        for (column, cell) in row.iter().enumerate() {
            while wi < windows.len() && windows[wi].end <= column {
                wi += 1;
            }
            if !mask[r][column] {
                continue;
            }
            let Some(cell) = cell else {
                return Err(Error::Dimension(format!(
                    "mask keeps a sample this party dropped (row {r}, column {column})"
                )));
            };
            for (slot, b) in gray_encode(*cell as usize, lp)?.into_iter().enumerate() {
                bits.push(b);
                provenance.push(BitProvenance {
                    component,
                    part,
                    column,
                    window: wi,
                    slot,
                });
            }
        }
    }
    Ok(RawKey {
        bits,
        provenance,
        kept_mask: mask.to_vec(),
    })
}
