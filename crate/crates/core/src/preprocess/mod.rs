//! Preprocessors `T(Y)`, orbit samplers that redraw Y with `T` held fixed,
//! and the declared derivation order between statistics.

mod dag;
mod induced;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dens;
use crate::error::{Error, Result};
use crate::model::{DataY, ParamXi};
use crate::num;
use crate::rng::{rng_from_seed, SimRng};

pub use dag::DerivationDag;
pub use induced::{InducedDensity, LinearGaussianInduced};

/// Output of a preprocessor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub id: String,
    pub shard: Option<usize>,
    #[serde(with = "num::vec")]
    pub values: Vec<f64>,
    pub derivation_parent: Option<String>,
}

/// The built-in catalogue of statistics. Per-shard kinds are applied to each
/// shard independently and concatenated in shard order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatisticKind {
    Identity,
    /// Flattened coordinates of Y at the given positions.
    Select {
        indices: Vec<usize>,
    },
    /// `A · vec(Y)` for the given rows.
    Linear {
        #[serde(with = "num::vecvec")]
        rows: Vec<Vec<f64>>,
    },
    /// `Y_a[..]ᵀ Y_b[..]` between two blocks, possibly in different shards.
    CrossTerm {
        a: Block,
        b: Block,
    },
    ShardSum,
    ShardMean,
    /// Mean and standard error `sd / sqrt(m)`.
    MeanSe,
    /// Mean and its standard error `sd_i / sqrt(m)` for known observation sd.
    MeanKnownSe {
        #[serde(with = "num::vec")]
        sd: Vec<f64>,
    },
    /// Mean and centred sum of squares; `Y_i` itself when m = 1.
    MeanSumSquares,
    SquaredNorm,
    /// Means of consecutive blocks of `reps` observations.
    BlockMeans {
        reps: usize,
    },
    /// Least-squares slope through the origin on design `x`.
    OlsSlope {
        #[serde(with = "num::vec")]
        x: Vec<f64>,
    },
    /// `mean(y − β̂ x)` with β̂ the slope through the origin.
    ResidualMean {
        #[serde(with = "num::vec")]
        x: Vec<f64>,
    },
    /// `mean / (sd / sqrt(m))`.
    ZStatistic,
    /// Orthonormal Helmert contrasts; m − 1 values free of the shard mean.
    DifferenceContrast,
    /// Shard sum followed by the block `Y_i[start..start + len]`.
    SumAndBlock {
        blocks: Vec<(usize, usize)>,
    },
    /// Per-shard linear maps; a single entry is shared by every shard.
    ShardLinear {
        #[serde(with = "num::vecvecvec")]
        rows: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub shard: usize,
    pub start: usize,
    pub len: usize,
}

impl StatisticKind {
    pub fn per_shard(&self) -> bool {
        !matches!(
            self,
            StatisticKind::Identity | StatisticKind::Select { .. } | StatisticKind::Linear { .. } | StatisticKind::CrossTerm { .. }
        )
    }
}

#[derive(Clone)]
pub struct Preprocessor {
    pub id: String,
    pub kind: StatisticKind,
    pub parent: Option<String>,
    pub induced: Option<Arc<dyn InducedDensity>>,
}

impl fmt::Debug for Preprocessor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Preprocessor")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("parent", &self.parent)
            .field("induced", &self.induced.is_some())
            .finish()
    }
}

fn helmert(m: usize) -> Vec<Vec<f64>> {
    (1..m)
        .map(|k| {
            let c = 1.0 / ((k * (k + 1)) as f64).sqrt();
            (0..m)
                .map(|j| {
                    if j < k {
                        c
                    } else if j == k {
                        -(k as f64) * c
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sum_sq_dev(y: &[f64]) -> (f64, f64) {
    let m = dens::mean(y);
    (m, y.iter().map(|v| (v - m) * (v - m)).sum())
}

impl Preprocessor {
    pub fn new(id: impl Into<String>, kind: StatisticKind) -> Self {
        Preprocessor { id: id.into(), kind, parent: None, induced: None }
    }

    /// Declare this statistic a deterministic function of `parent`.
    pub fn derived_from(mut self, parent: impl Into<String>) -> Self {
        self.parent = Some(parent.into());
        self
    }

    pub fn with_induced(mut self, d: Arc<dyn InducedDensity>) -> Self {
        self.induced = Some(d);
        self
    }

    pub fn apply(&self, y: &DataY) -> Result<Statistic> {
        let values = if self.kind.per_shard() {
            let mut v = Vec::new();
            for (i, s) in y.shards.iter().enumerate() {
                v.extend(self.apply_shard(i, s)?);
            }
            v
        } else {
            self.apply_global(y)?
        };
        Ok(Statistic { id: self.id.clone(), shard: None, values, derivation_parent: self.parent.clone() })
    }

    /// Statistic for a single shard; only defined for per-shard kinds.
    pub fn apply_shard(&self, i: usize, y: &[f64]) -> Result<Vec<f64>> {
        let m = y.len();
        let need = |k: usize| {
            if m < k {
                Err(Error::config(format!("preprocessor `{}` needs at least {k} observations per shard, got {m}", self.id)))
            } else {
                Ok(())
            }
        };
        let out = match &self.kind {
            StatisticKind::ShardSum => vec![y.iter().sum()],
            StatisticKind::ShardMean => {
                need(1)?;
                vec![dens::mean(y)]
            }
            StatisticKind::MeanSe => {
                need(2)?;
                let (mean, ss) = sum_sq_dev(y);
                vec![mean, (ss / (m as f64 - 1.0) / m as f64).sqrt()]
            }
            StatisticKind::MeanKnownSe { sd } => {
                need(1)?;
                let sd =
                    if sd.len() == 1 { sd[0] } else { *sd.get(i).ok_or_else(|| Error::config(format!("no sd declared for shard {i}")))? };
                vec![dens::mean(y), sd / (m as f64).sqrt()]
            }
            StatisticKind::MeanSumSquares => {
                need(1)?;
                if m == 1 {
                    y.to_vec()
                } else {
                    let (mean, ss) = sum_sq_dev(y);
                    vec![mean, ss]
                }
            }
            StatisticKind::SquaredNorm => vec![dot(y, y)],
            StatisticKind::ZStatistic => {
                need(2)?;
                let (mean, ss) = sum_sq_dev(y);
                vec![mean / (ss / (m as f64 - 1.0) / m as f64).sqrt()]
            }
            StatisticKind::BlockMeans { reps } => {
                if *reps == 0 || !m.is_multiple_of(*reps) {
                    return Err(Error::config(format!("shard size {m} is not a multiple of {reps}")));
                }
                y.chunks(*reps).map(dens::mean).collect()
            }
            _ => {
                let rows = self.shard_rows(i, m)?;
                rows.iter().map(|r| dot(r, y)).collect()
            }
        };
        Ok(out)
    }

    /// Linear representation of a per-shard kind, when it has one.
    fn shard_rows(&self, i: usize, m: usize) -> Result<Vec<Vec<f64>>> {
        let design = |x: &Vec<f64>| {
            if x.len() != m {
                return Err(Error::config(format!("design has {} points but shard has {m} observations", x.len())));
            }
            let sxx = dot(x, x);
            if sxx == 0.0 {
                return Err(Error::config("design is identically zero"));
            }
            Ok(sxx)
        };
        let rows = match &self.kind {
            StatisticKind::ShardSum => vec![vec![1.0; m]],
            StatisticKind::ShardMean | StatisticKind::MeanKnownSe { .. } => vec![vec![1.0 / m as f64; m]],
            StatisticKind::OlsSlope { x } => {
                let sxx = design(x)?;
                vec![x.iter().map(|v| v / sxx).collect()]
            }
            StatisticKind::ResidualMean { x } => {
                let sxx = design(x)?;
                let xbar = dens::mean(x);
                vec![x.iter().map(|v| 1.0 / m as f64 - xbar * v / sxx).collect()]
            }
            StatisticKind::DifferenceContrast => {
                if m < 2 {
                    return Err(Error::config("difference contrasts need at least two observations per shard"));
                }
                helmert(m)
            }
            StatisticKind::SumAndBlock { blocks } => {
                let (start, len) = *blocks.get(i).ok_or_else(|| Error::config(format!("no block declared for shard {i}")))?;
                if start + len > m {
                    return Err(Error::config(format!("block {start}..{} exceeds shard size {m}", start + len)));
                }
                let mut rows = vec![vec![1.0; m]];
                for k in start..start + len {
                    let mut r = vec![0.0; m];
                    r[k] = 1.0;
                    rows.push(r);
                }
                rows
            }
            StatisticKind::ShardLinear { rows } => {
                let r = if rows.len() == 1 {
                    &rows[0]
                } else {
                    rows.get(i).ok_or_else(|| Error::config(format!("no rows declared for shard {i}")))?
                };
                if r.iter().any(|row| row.len() != m) {
                    return Err(Error::config(format!("linear rows do not match shard {i} size {m}")));
                }
                r.clone()
            }
            _ => return Err(Error::Internal(format!("`{}` has no linear form", self.id))),
        };
        Ok(rows)
    }

    fn global_rows(&self, n: usize) -> Result<Option<Vec<Vec<f64>>>> {
        match &self.kind {
            StatisticKind::Select { indices } => {
                if let Some(&bad) = indices.iter().find(|&&k| k >= n) {
                    return Err(Error::config(format!("index {bad} out of range for {n} observations")));
                }
                Ok(Some(indices.iter().map(|&k| (0..n).map(|j| if j == k { 1.0 } else { 0.0 }).collect()).collect()))
            }
            StatisticKind::Linear { rows } => {
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::config(format!("linear rows do not match {n} observations")));
                }
                Ok(Some(rows.clone()))
            }
            _ => Ok(None),
        }
    }

    fn apply_global(&self, y: &DataY) -> Result<Vec<f64>> {
        let flat = y.flatten();
        match &self.kind {
            StatisticKind::Identity => Ok(flat),
            StatisticKind::CrossTerm { a, b } => {
                let block = |blk: &Block| -> Result<&[f64]> {
                    y.shards
                        .get(blk.shard)
                        .and_then(|s| s.get(blk.start..blk.start + blk.len))
                        .ok_or_else(|| Error::config("cross-term block outside the data"))
                };
                let (ya, yb) = (block(a)?, block(b)?);
                if ya.len() != yb.len() {
                    return Err(Error::config("cross-term blocks differ in length"));
                }
                Ok(vec![dot(ya, yb)])
            }
            _ => {
                let rows = self.global_rows(flat.len())?.expect("linear global kind");
                Ok(rows.iter().map(|r| dot(r, &flat)).collect())
            }
        }
    }

    pub fn has_orbit(&self) -> bool {
        !matches!(self.kind, StatisticKind::CrossTerm { .. })
    }

    /// Draw `y′` with `T(y′) = T(y)`; each draw is checked to preserve the
    /// statistic to `1e-12` relative to its magnitude.
    pub fn orbit_sample(&self, y: &DataY, rng_seed: u64) -> Result<DataY> {
        if !self.has_orbit() {
            return Err(Error::Capability(format!("preprocessor `{}` has no orbit sampler", self.id)));
        }
        let mut rng = rng_from_seed(rng_seed);
        let t0 = self.apply(y)?;
        let out = if self.kind.per_shard() {
            let mut shards = Vec::with_capacity(y.shards.len());
            for (i, s) in y.shards.iter().enumerate() {
                shards.push(self.shard_orbit(i, s, &mut rng)?);
            }
            DataY::new(shards)
        } else {
            match self.global_rows(y.len())? {
                Some(rows) => DataY::from_flat(&y.shard_sizes(), &null_shift(&rows, &y.flatten(), &mut rng)),
                None => y.clone(),
            }
        };
        let t1 = self.apply(&out)?;
        for (a, b) in t0.values.iter().zip(&t1.values) {
            if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(Error::Internal(format!("orbit draw for `{}` moved the statistic from {a} to {b}", self.id)));
            }
        }
        Ok(out)
    }

    fn shard_orbit(&self, i: usize, y: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let m = y.len();
        let out = match &self.kind {
            StatisticKind::MeanSe | StatisticKind::MeanSumSquares | StatisticKind::ZStatistic if m >= 2 => {
                let (mean, ss) = sum_sq_dev(y);
                let u = random_direction(m, true, rng);
                let c =
                    if matches!(self.kind, StatisticKind::ZStatistic) { (0.3 * rng.sample::<f64, _>(StandardNormal)).exp() } else { 1.0 };
                u.iter().map(|v| c * (mean + ss.sqrt() * v)).collect()
            }
            StatisticKind::MeanSumSquares => y.to_vec(),
            StatisticKind::SquaredNorm => {
                let r = dot(y, y).sqrt();
                random_direction(m, false, rng).iter().map(|v| r * v).collect()
            }
            StatisticKind::BlockMeans { reps } => {
                let mut out = Vec::with_capacity(m);
                for block in y.chunks(*reps) {
                    out.extend(null_shift(&[vec![1.0; block.len()]], block, rng));
                }
                out
            }
            _ => null_shift(&self.shard_rows(i, m)?, y, rng),
        };
        Ok(out)
    }
}

/// Uniform unit vector in R^m, or in the complement of `1` when `centred`.
fn random_direction(m: usize, centred: bool, rng: &mut SimRng) -> Vec<f64> {
    loop {
        let mut z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        if centred {
            let mz = dens::mean(&z);
            z.iter_mut().for_each(|v| *v -= mz);
        }
        let n = dot(&z, &z).sqrt();
        if n > 1e-8 {
            return z.iter().map(|v| v / n).collect();
        }
    }
}

/// `y + (I − A⁺A) z` for standard normal z.
fn null_shift(rows: &[Vec<f64>], y: &[f64], rng: &mut SimRng) -> Vec<f64> {
    let n = y.len();
    if rows.is_empty() || n == 0 {
        return y.to_vec();
    }
    let a = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
    let pinv = a.clone().pseudo_inverse(1e-12).expect("pseudo-inverse");
    let proj = DMatrix::identity(n, n) - pinv * a;
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let v = proj * z;
    y.iter().zip(v.iter()).map(|(a, b)| a + b).collect()
}

/// Reference implementations of the catalogue, used as fixtures in tests and
/// scenarios.
pub mod catalog {
    use super::*;

    pub fn identity() -> Preprocessor {
        Preprocessor::new("identity", StatisticKind::Identity)
    }
    pub fn shard_mean() -> Preprocessor {
        Preprocessor::new("shard_mean", StatisticKind::ShardMean)
    }
    pub fn shard_sum() -> Preprocessor {
        Preprocessor::new("shard_sum", StatisticKind::ShardSum)
    }
    pub fn mean_se() -> Preprocessor {
        Preprocessor::new("mean_se", StatisticKind::MeanSe)
    }
    pub fn mean_known_se(sd: Vec<f64>) -> Preprocessor {
        Preprocessor::new("mean_known_se", StatisticKind::MeanKnownSe { sd })
    }
    pub fn mean_ss() -> Preprocessor {
        Preprocessor::new("mean_ss", StatisticKind::MeanSumSquares)
    }
    pub fn squared_norm() -> Preprocessor {
        Preprocessor::new("squared_norm", StatisticKind::SquaredNorm)
    }
    pub fn z_statistic() -> Preprocessor {
        Preprocessor::new("z_statistic", StatisticKind::ZStatistic)
    }
    pub fn difference_contrast() -> Preprocessor {
        Preprocessor::new("difference_contrast", StatisticKind::DifferenceContrast)
    }
    pub fn ols_slope(x: Vec<f64>) -> Preprocessor {
        Preprocessor::new("ols_slope", StatisticKind::OlsSlope { x })
    }
    pub fn residual_mean(x: Vec<f64>) -> Preprocessor {
        Preprocessor::new("residual_mean", StatisticKind::ResidualMean { x })
    }
    pub fn select(indices: Vec<usize>) -> Preprocessor {
        Preprocessor::new("select", StatisticKind::Select { indices })
    }
    pub fn cross_term(a: Block, b: Block) -> Preprocessor {
        Preprocessor::new("cross_term", StatisticKind::CrossTerm { a, b })
    }

    /// Every catalogue entry configured for shards of size `m`.
    pub fn all(m: usize) -> Vec<Preprocessor> {
        let x: Vec<f64> = (1..=m).map(|v| v as f64).collect();
        vec![
            identity(),
            shard_mean(),
            shard_sum(),
            mean_se(),
            mean_known_se(vec![1.0]),
            mean_ss(),
            squared_norm(),
            z_statistic(),
            difference_contrast(),
            ols_slope(x.clone()),
            residual_mean(x),
            select(vec![0]),
            cross_term(Block { shard: 0, start: 0, len: 1 }, Block { shard: 1, start: 0, len: 1 }),
        ]
    }
}

/// `log p(T = t | θ, ξ)` under the preprocessor's registered sampling law.
pub fn induced_log_density(p: &Preprocessor, t: &Statistic, theta: &[f64], xi: &ParamXi) -> Result<f64> {
    let d = p.induced.as_ref().ok_or_else(|| Error::Capability(format!("preprocessor `{}` has no induced density", p.id)))?;
    Ok(d.log_density(&t.values, theta, xi))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::catalog::*;
    use super::*;

    fn y(shards: Vec<Vec<f64>>) -> DataY {
        DataY::new(shards)
    }

    #[test]
    fn identity_flattens() {
        let d = y(vec![vec![1.0, 2.0], vec![3.0]]);
        assert_eq!(identity().apply(&d).unwrap().values, vec![1.0, 2.0, 3.0]);
        assert_eq!(identity().orbit_sample(&d, 4).unwrap(), d);
    }

    #[test]
    fn shard_mean_arithmetic() {
        assert_eq!(shard_mean().apply(&y(vec![vec![1.0, 2.0, 3.0]])).unwrap().values, vec![2.0]);
    }

    #[test]
    fn residual_mean_partial_pivot() {
        let t = residual_mean(vec![-1.0, 1.0]).apply(&y(vec![vec![0.5, 2.5]])).unwrap();
        assert!((t.values[0] - 1.5).abs() < 1e-15);
        let b = ols_slope(vec![-1.0, 1.0]).apply(&y(vec![vec![0.5, 2.5]])).unwrap();
        assert_eq!(b.values, vec![1.0]);
    }

    #[test]
    fn application_is_bit_deterministic() {
        let d = y(vec![vec![0.1, 0.7, -2.3], vec![4.0, 1e-3, 5.5]]);
        for p in all(3) {
            let a = p.apply(&d).unwrap();
            let b = p.apply(&d).unwrap();
            assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn catalogue_round_trips_through_json() {
        let d = y(vec![vec![0.1, 0.7, -2.3], vec![4.0, 1.0 / 3.0, 5.5]]);
        for p in all(3) {
            let t = p.apply(&d).unwrap();
            let back: Statistic = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
            assert_eq!(back, t);
            let k: StatisticKind = serde_json::from_str(&serde_json::to_string(&p.kind).unwrap()).unwrap();
            assert_eq!(k, p.kind);
        }
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        assert!(matches!(ols_slope(vec![1.0, 2.0]).apply(&y(vec![vec![1.0, 2.0, 3.0]])), Err(Error::Config(_))));
        assert!(matches!(select(vec![5]).apply(&y(vec![vec![1.0]])), Err(Error::Config(_))));
        assert!(matches!(mean_se().apply(&y(vec![vec![1.0]])), Err(Error::Config(_))));
    }

    #[test]
    fn sum_orbit_shift() {
        let d = y(vec![vec![1.0, 2.0, 3.0]]);
        let o = shard_sum().orbit_sample(&d, 9).unwrap();
        assert_ne!(o, d);
        assert!((o.shards[0].iter().sum::<f64>() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn squared_norm_rotation() {
        let d = y(vec![vec![1.0, -2.0, 0.5]]);
        let o = squared_norm().orbit_sample(&d, 1).unwrap();
        assert_ne!(o, d);
        assert!((dot(&o.shards[0], &o.shards[0]) - 5.25).abs() < 1e-12);
    }

    #[test]
    fn cross_term_has_no_sampler() {
        let p = cross_term(Block { shard: 0, start: 0, len: 1 }, Block { shard: 1, start: 0, len: 1 });
        let d = y(vec![vec![2.0], vec![3.0]]);
        assert_eq!(p.apply(&d).unwrap().values, vec![6.0]);
        assert!(matches!(p.orbit_sample(&d, 0), Err(Error::Capability(_))));
    }

    #[test]
    fn helmert_rows_are_orthonormal_contrasts() {
        let h = helmert(4);
        for (a, ra) in h.iter().enumerate() {
            assert!(ra.iter().sum::<f64>().abs() < 1e-15);
            for (b, rb) in h.iter().enumerate() {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot(ra, rb) - want).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn orbit_draws_preserve_statistics(
            vals in prop::collection::vec(-5.0f64..5.0, 8),
            seed in any::<u64>(),
        ) {
            let d = y(vec![vals[..4].to_vec(), vals[4..].to_vec()]);
            for p in all(4).into_iter().filter(Preprocessor::has_orbit) {
                let t = p.apply(&d).unwrap();
                let o = p.orbit_sample(&d, seed).unwrap();
                let t2 = p.apply(&o).unwrap();
                for (a, b) in t.values.iter().zip(&t2.values) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{}: {a} vs {b}", p.id);
                }
            }
        }
    }
}
