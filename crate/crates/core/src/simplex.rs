//! Products of weighted simplices and the I-divergence.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-block constraint tolerance for constructed points.
pub const BLOCK_TOLERANCE: f64 = 1e-12;
/// Looser tolerance accepted on inputs that will be renormalized.
pub const INPUT_TOLERANCE: f64 = 1e-9;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStructure {
    blocks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

/// Partition of the coordinates into blocks, each constrained to
/// `sum_j a_j x_j = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStructure", into = "RawStructure")]
pub struct BlockStructure {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    weights: Vec<f64>,
    unit_weights: bool,
}

impl TryFrom<RawStructure> for BlockStructure {
    type Error = Error;

    fn try_from(raw: RawStructure) -> Result<Self> {
        BlockStructure::new(raw.blocks, raw.weights)
    }
}

impl From<BlockStructure> for RawStructure {
    fn from(s: BlockStructure) -> Self {
        RawStructure {
            weights: (!s.unit_weights).then_some(s.weights),
            blocks: s.sizes,
        }
    }
}

impl BlockStructure {
    pub fn new(sizes: Vec<usize>, weights: Option<Vec<f64>>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidStructure("blocks: at least one block is required".into()));
        }
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidStructure(format!("blocks: block {k} is empty")));
        }
        let n: usize = sizes.iter().sum();
        let unit_weights = weights.is_none();
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n {
            return Err(Error::InvalidStructure(format!(
                "weights: expected {n} entries, got {}",
                weights.len()
            )));
        }
        if let Some(j) = weights.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidStructure(format!(
                "weights: entry {j} is {}, weights must be positive",
                weights[j]
            )));
        }
        let offsets = sizes
            .iter()
            .scan(0, |acc, &s| {
                let start = *acc;
                *acc += s;
                Some(start)
            })
            .collect();
        Ok(BlockStructure {
            sizes,
            offsets,
            weights,
            unit_weights,
        })
    }

    /// One block of size `n` with unit weights.
    pub fn simplex(n: usize) -> Result<Self> {
        Self::new(vec![n], None)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `true` when no explicit weights were supplied.
    pub fn has_unit_weights(&self) -> bool {
        self.unit_weights
    }

    pub fn block(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.sizes[i]
    }

    pub fn blocks(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.num_blocks()).map(|i| self.block(i))
    }

    /// `sum_j a_j v_j` over block `i`.
    pub fn weighted_mass(&self, i: usize, v: &[f64]) -> f64 {
        self.block(i).map(|j| self.weights[j] * v[j]).sum()
    }
}

/// A point of the product of weighted simplices (or its closure).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPoint {
    coords: Vec<f64>,
    structure: Arc<BlockStructure>,
}

impl BlockPoint {
    /// Validates `coords` against `structure` with tolerance [`BLOCK_TOLERANCE`].
    pub fn new(coords: Vec<f64>, structure: Arc<BlockStructure>) -> Result<Self> {
        check_nonnegative(&coords, &structure)?;
        for i in 0..structure.num_blocks() {
            let mass = structure.weighted_mass(i, &coords);
            if (mass - 1.0).abs() > BLOCK_TOLERANCE {
                return Err(Error::Infeasible(format!(
                    "block {i} has weighted sum {mass}, expected 1"
                )));
            }
        }
        Ok(BlockPoint { coords, structure })
    }

    /// Constructor for coordinates that are feasible by construction.
    pub(crate) fn from_parts(coords: Vec<f64>, structure: Arc<BlockStructure>) -> Self {
        debug_assert!(BlockPoint::new(coords.clone(), structure.clone()).is_ok());
        BlockPoint { coords, structure }
    }

    /// Uniform mass `a_j x_j = 1 / n_i` inside every block.
    pub fn barycenter(structure: Arc<BlockStructure>) -> Self {
        let mut coords = vec![0.0; structure.dim()];
        for (i, r) in structure.blocks().enumerate() {
            let share = 1.0 / structure.sizes()[i] as f64;
            for j in r {
                coords[j] = share / structure.weights()[j];
            }
        }
        BlockPoint { coords, structure }
    }

    /// Divides each block by its weighted sum.
    pub fn normalize(raw: &[f64], structure: Arc<BlockStructure>) -> Result<Self> {
        check_nonnegative(raw, &structure)?;
        let mut coords = raw.to_vec();
        for (i, r) in structure.blocks().enumerate() {
            let mass = structure.weighted_mass(i, raw);
            if mass <= 0.0 {
                return Err(Error::Infeasible(format!("block {i} has no positive entry")));
            }
            for v in &mut coords[r] {
                *v /= mass;
            }
        }
        Ok(BlockPoint { coords, structure })
    }

    /// Uniformly distributed interior point (flat Dirichlet per block,
    /// rescaled by the weights).
    pub fn random<R: Rng + ?Sized>(structure: Arc<BlockStructure>, rng: &mut R) -> Self {
        let raw: Vec<f64> = (0..structure.dim())
            .map(|j| {
                let e: f64 = rng.sample(Exp1);
                e.max(f64::MIN_POSITIVE) / structure.weights()[j]
            })
            .collect();
        Self::normalize(&raw, structure).expect("positive raw vector normalizes")
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn structure(&self) -> &Arc<BlockStructure> {
        &self.structure
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// `true` iff every coordinate is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.coords.iter().all(|&v| v > 0.0)
    }

    /// Index of the first zero coordinate, if any.
    pub fn first_zero(&self) -> Option<usize> {
        self.coords.iter().position(|&v| v == 0.0)
    }
}

fn check_nonnegative(v: &[f64], structure: &BlockStructure) -> Result<()> {
    if v.len() != structure.dim() {
        return Err(Error::DimensionMismatch {
            expected: structure.dim(),
            got: v.len(),
        });
    }
    if let Some(j) = v.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::Infeasible(format!(
            "coordinate {j} is {}, coordinates must be non-negative",
            v[j]
        )));
    }
    Ok(())
}

/// One summand of `sum_j y_j log(y_j / x_j)`, written as
/// `y log(y/x) - y + x`, which is non-negative term by term and agrees with
/// the plain form once both vectors are normalized.
fn divergence_term(y: f64, x: f64) -> f64 {
    if y == 0.0 {
        return x;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    let r = (y - x) / x;
    let t = if r.abs() < 0.5 {
        x * ((1.0 + r) * r.ln_1p() - r)
    } else {
        y * (y / x).ln() - y + x
    };
    t.max(0.0)
}

/// Per-block I-divergences `I((a y)_i ; (a x)_i)`.
///
/// Returns `+inf` for a block where some `y_j > 0` meets `x_j = 0`. Both
/// inputs must be non-negative and satisfy the block constraints within
/// [`INPUT_TOLERANCE`].
pub fn block_divergences(y: &[f64], x: &[f64], structure: &BlockStructure) -> Result<Vec<f64>> {
    for (name, v) in [("first", y), ("second", x)] {
        check_nonnegative(v, structure)?;
        for i in 0..structure.num_blocks() {
            let mass = structure.weighted_mass(i, v);
            if (mass - 1.0).abs() > INPUT_TOLERANCE {
                return Err(Error::Infeasible(format!(
                    "{name} argument: block {i} has weighted sum {mass}, expected 1"
                )));
            }
        }
    }
    let a = structure.weights();
    Ok(structure
        .blocks()
        .map(|r| r.map(|j| divergence_term(a[j] * y[j], a[j] * x[j])).sum())
        .collect())
}

/// Total I-divergence over all blocks; see [`block_divergences`].
pub fn i_divergence(y: &[f64], x: &[f64], structure: &BlockStructure) -> Result<f64> {
    Ok(block_divergences(y, x, structure)?.iter().sum())
}

/// [`i_divergence`] between two points of the same structure.
pub fn point_divergence(y: &BlockPoint, x: &BlockPoint) -> Result<f64> {
    if y.structure != x.structure && *y.structure != *x.structure {
        return Err(Error::InvalidStructure("points belong to different structures".into()));
    }
    i_divergence(&y.coords, &x.coords, &x.structure)
}
