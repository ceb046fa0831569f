//! Block rearrangement, covariance eigendecomposition and shared-basis projection.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::channel_model::{CsiMatrix, C64};
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

/// L_x subcarriers by L_y rounds per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub lx: usize,
    pub ly: usize,
}

impl BlockShape {
    pub fn new(lx: usize, ly: usize) -> Result<Self> {
        if lx == 0 || ly == 0 {
            return Err(Error::param("block dimensions must be at least 1"));
        }
        Ok(Self { lx, ly })
    }

    pub fn rows(&self) -> usize {
        self.lx * self.ly
    }

    fn check(&self, n: usize, k: usize) -> Result<usize> {
        if self.lx == 0 || self.ly == 0 {
            return Err(Error::param("block dimensions must be at least 1"));
        }
        if !n.is_multiple_of(self.lx) {
            return Err(Error::param(format!("L_x = {} does not divide N = {n}", self.lx)));
        }
        let kt = k / self.ly * self.ly;
        if kt == 0 {
            return Err(Error::param(format!("K = {k} shorter than L_y = {}", self.ly)));
        }
        Ok(kt)
    }
}

/// One column per block, frequency-block index running fastest. Within a block
/// the subcarrier offset runs fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangedMatrix {
    pub data: DMatrix<C64>,
    pub shape: BlockShape,
    pub subcarriers: usize,
    /// Rounds kept after truncation to a multiple of L_y.
    pub rounds: usize,
}

pub fn rearrange(csi: &CsiMatrix, shape: BlockShape) -> Result<RearrangedMatrix> {
    let (n, k) = (csi.subcarriers(), csi.rounds());
    let kt = shape.check(n, k)?;
    if kt != k {
        log::warn!("truncating K from {k} to {kt} to fit L_y = {}", shape.ly);
    }
    let nf = n / shape.lx;
    let cols = nf * (kt / shape.ly);
    let m = csi.as_matrix();
    let data = DMatrix::from_fn(shape.rows(), cols, |row, j| {
        let (x, y) = (row % shape.lx, row / shape.lx);
        let (fb, tb) = (j % nf, j / nf);
        m[(fb * shape.lx + x, tb * shape.ly + y)]
    });
    Ok(RearrangedMatrix {
        data,
        shape,
        subcarriers: n,
        rounds: kt,
    })
}

pub fn unrearrange(r: &RearrangedMatrix) -> Result<CsiMatrix> {
    let shape = r.shape;
    let nf = r.subcarriers / shape.lx;
    let data = DMatrix::from_fn(r.subcarriers, r.rounds, |i, k| {
        let (fb, x) = (i / shape.lx, i % shape.lx);
        let (tb, y) = (k / shape.ly, k % shape.ly);
        r.data[(x + shape.lx * y, fb + nf * tb)]
    });
    CsiMatrix::from_matrix(data)
}

/// Chooses how many leading eigen-components to keep.
pub trait ComponentSelection: Named + Send + Sync {
    /// `eigenvalues` are sorted descending and nonnegative.
    fn select(&self, eigenvalues: &[f64], eta: f64) -> usize;
}

fn minimal_prefix(energy: &[f64], eta: f64) -> usize {
    let total: f64 = energy.iter().sum();
    if total <= 0.0 {
        return 1;
    }
    // Relative slack so round-off energy in null directions cannot defeat eta = 1.
    let target = eta * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for (i, e) in energy.iter().enumerate() {
        cum += e;
        if cum >= target {
            return i + 1;
        }
    }
    energy.len()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Smallest P whose leading eigenvalues hold an η share of the total energy.
pub struct EnergyFraction;

impl Named for EnergyFraction {
    fn name(&self) -> &str {
        "energy"
    }
}

impl ComponentSelection for EnergyFraction {
    fn select(&self, eigenvalues: &[f64], eta: f64) -> usize {
        minimal_prefix(eigenvalues, eta)
    }
}

/// Like `energy`, but counts only energy above a noise floor (a multiple of the
/// median eigenvalue), so a fraction of white noise spread over hundreds of
/// weak dimensions cannot drag them all in.
pub struct NoiseCorrectedEnergy {
    pub floor_multiple: f64,
}

impl Named for NoiseCorrectedEnergy {
    fn name(&self) -> &str {
        "noise_corrected"
    }
}

impl ComponentSelection for NoiseCorrectedEnergy {
    fn select(&self, eigenvalues: &[f64], eta: f64) -> usize {
        let floor = self.floor_multiple * median(eigenvalues);
        let excess: Vec<f64> = eigenvalues.iter().map(|l| (l - floor).max(0.0)).collect();
        minimal_prefix(&excess, eta)
    }
}

/// Multiple of the noise floor used both for selection and for level demotion.
pub const NOISE_MULTIPLE: f64 = 4.0;

pub fn selection_registry() -> &'static Registry<dyn ComponentSelection> {
    static REG: OnceLock<Registry<dyn ComponentSelection>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn ComponentSelection> = Registry::new("component selection rule");
        r.register(Arc::new(EnergyFraction));
        r.register(Arc::new(NoiseCorrectedEnergy {
            floor_multiple: NOISE_MULTIPLE,
        }));
        r
    })
}

#[derive(Debug, Clone)]
pub struct TransformBasis {
    /// Columns sorted by descending eigenvalue.
    pub eigenvectors: DMatrix<C64>,
    pub eigenvalues: Vec<f64>,
    pub selected: usize,
    pub eta: f64,
    /// Median eigenvalue, a proxy for the per-dimension noise power.
    pub noise_floor: f64,
    pub rule: String,
    pub centered: bool,
    pub shape: BlockShape,
    /// P×rows: conjugate transpose of the first P eigenvectors.
    pub projection: DMatrix<C64>,
}

impl TransformBasis {
    /// Public basis handed to Bob: only the projection, no eigen-decomposition.
    pub fn from_projection(projection: DMatrix<C64>, eta: f64, shape: BlockShape, rule: &str) -> Result<Self> {
        if projection.ncols() != shape.rows() || projection.nrows() == 0 {
            return Err(Error::Dimension("projection does not match block shape".into()));
        }
        Ok(Self {
            eigenvectors: projection.adjoint(),
            eigenvalues: vec![],
            selected: projection.nrows(),
            eta,
            noise_floor: 0.0,
            rule: rule.to_string(),
            centered: false,
            shape,
            projection,
        })
    }
}

pub fn covariance(data: &DMatrix<C64>, center: bool) -> DMatrix<C64> {
    let c = data.ncols() as f64;
    let cov = if center {
        let mut d = data.clone();
        for mut row in d.row_iter_mut() {
            let mean = row.iter().sum::<C64>() / c;
            row.iter_mut().for_each(|v| *v -= mean);
        }
        &d * d.adjoint()
    } else {
        data * data.adjoint()
    };
    cov.unscale(c)
}

/// Eigendecomposition with the plain η-energy rule.
pub fn compute_basis(rearranged: &RearrangedMatrix, eta: f64) -> Result<TransformBasis> {
    compute_basis_with(rearranged, eta, &EnergyFraction, false)
}

pub fn compute_basis_with(
    rearranged: &RearrangedMatrix,
    eta: f64,
    rule: &dyn ComponentSelection,
    center: bool,
) -> Result<TransformBasis> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::param(format!("eta = {eta} outside (0, 1]")));
    }
    if rearranged.data.ncols() < 2 {
        return Err(Error::param("basis needs at least 2 block columns"));
    }
    let cov = covariance(&rearranged.data, center);
    let eig = SymmetricEigen::new(cov);
    let rows = rearranged.data.nrows();
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    if eigenvalues[0].is_nan() || eigenvalues[0] <= 0.0 {
        return Err(Error::Degenerate("covariance has rank 0".into()));
    }
    let eigenvectors = DMatrix::from_fn(rows, rows, |r, c| eig.eigenvectors[(r, order[c])]);
    let selected = rule.select(&eigenvalues, eta).clamp(1, rows);
    let projection = eigenvectors.columns(0, selected).adjoint();
    Ok(TransformBasis {
        noise_floor: median(&eigenvalues),
        eigenvectors,
        eigenvalues,
        selected,
        eta,
        rule: rule.name().to_string(),
        centered: center,
        shape: rearranged.shape,
        projection,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMatrix {
    /// P × block-columns.
    pub data: DMatrix<C64>,
}

/// Ḧ = V·Ḣ.
pub fn apply_transform(basis: &TransformBasis, rearranged: &RearrangedMatrix) -> Result<TransformedMatrix> {
    if basis.projection.ncols() != rearranged.data.nrows() {
        return Err(Error::Dimension(format!(
            "basis expects {} rows, blocks have {}",
            basis.projection.ncols(),
            rearranged.data.nrows()
        )));
    }
    Ok(TransformedMatrix {
        data: &basis.projection * &rearranged.data,
    })
}

/// η₁ = 1/((N/L_x)(K/L_y)), an estimate of what publishing the basis leaks.
pub fn basis_leakage(n: usize, k: usize, shape: BlockShape) -> Result<f64> {
    let kt = shape.check(n, k)?;
    Ok(1.0 / ((n / shape.lx) as f64 * (kt / shape.ly) as f64))
}
