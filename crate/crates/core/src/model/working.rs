//! Factored working models `Π_i p̃(X_i | g_i(η))` and mixing measures
//! `p(η | θ)`.
//!
//! Delta (saturated) parts are expressed as pins: latent coordinate `x[k]` is
//! forced equal to `g_i(η)[j]`. A pin contributes density 1 against counting
//! measure, and two pins that force one η coordinate to different values make
//! the mixture vanish.

use std::fmt;
use std::sync::Arc;

use super::{LatentX, ScientificModel};
use crate::dens;
use crate::error::{Error, Result};
use crate::quadrature::{self, QuadratureSpec};

/// Working density for one shard.
pub trait ShardWorking: Send + Sync + fmt::Debug {
    fn latent_dim(&self) -> usize;
    /// Dimension of `g_i(η)`.
    fn link_dim(&self) -> usize;
    /// Log density of the non-pinned latent coordinates given `g_i(η)`.
    fn log_density(&self, x: &[f64], g: &[f64]) -> f64;
    /// `(latent index, link index)` pairs held equal by a delta density.
    fn pins(&self) -> Vec<(usize, usize)> {
        Vec::new()
    }
}

/// `p(η | θ)`: coordinates may be fixed by point masses; the rest carry a
/// density (with ties between coordinates contributing counting measure).
pub trait MixingMeasure: Send + Sync + fmt::Debug {
    fn eta_dim(&self) -> usize;
    fn fixed(&self, theta: &[f64]) -> Vec<Option<f64>>;
    /// Log density over the non-fixed coordinates.
    fn log_density(&self, eta: &[f64], theta: &[f64]) -> f64;
    fn center(&self, theta: &[f64]) -> Vec<f64>;
}

/// Saturated shard: every latent coordinate pinned to its own link coordinate.
#[derive(Clone, Debug)]
pub struct Saturated {
    pub dim: usize,
}

impl ShardWorking for Saturated {
    fn latent_dim(&self) -> usize {
        self.dim
    }
    fn link_dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, _: &[f64], _: &[f64]) -> f64 {
        0.0
    }
    fn pins(&self) -> Vec<(usize, usize)> {
        (0..self.dim).map(|k| (k, k)).collect()
    }
}

/// `X_i | η ~ N(0, g I_n)` with scalar link `g` (a variance).
#[derive(Clone, Debug)]
pub struct CenteredNormal {
    pub dim: usize,
}

impl ShardWorking for CenteredNormal {
    fn latent_dim(&self) -> usize {
        self.dim
    }
    fn link_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], g: &[f64]) -> f64 {
        if g[0] <= 0.0 {
            return f64::NEG_INFINITY;
        }
        x.iter().map(|&v| dens::normal_var_ln(v, 0.0, g[0])).sum()
    }
}

/// `X_i | g ~ N(g, 1)` coordinatewise.
#[derive(Clone, Debug)]
pub struct LocationNormal {
    pub dim: usize,
}

impl ShardWorking for LocationNormal {
    fn latent_dim(&self) -> usize {
        self.dim
    }
    fn link_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], g: &[f64]) -> f64 {
        x.iter().map(|&v| dens::normal_ln(v, g[0], 1.0)).sum()
    }
}

/// Shard latent `(X_i, Z_i)` with `X_i | g ~ N(g_0, 1)` and `Z_i` pinned to `g_1`.
#[derive(Clone, Debug)]
pub struct LocationWithPinnedCopy;

impl ShardWorking for LocationWithPinnedCopy {
    fn latent_dim(&self) -> usize {
        2
    }
    fn link_dim(&self) -> usize {
        2
    }
    fn log_density(&self, x: &[f64], g: &[f64]) -> f64 {
        dens::normal_ln(x[0], g[0], 1.0)
    }
    fn pins(&self) -> Vec<(usize, usize)> {
        vec![(1, 1)]
    }
}

/// `η = X` distributed as the scientific law itself.
#[derive(Clone, Debug)]
pub struct SciDensity {
    pub sci: Arc<dyn ScientificModel>,
    pub dims: Vec<usize>,
}

impl MixingMeasure for SciDensity {
    fn eta_dim(&self) -> usize {
        self.dims.iter().sum()
    }
    fn fixed(&self, _: &[f64]) -> Vec<Option<f64>> {
        vec![None; self.eta_dim()]
    }
    fn log_density(&self, eta: &[f64], theta: &[f64]) -> f64 {
        self.sci.log_density(&LatentX::from_flat(&self.dims, eta), theta)
    }
    fn center(&self, theta: &[f64]) -> Vec<f64> {
        self.sci.center(theta, &self.dims).flatten()
    }
}

pub type ParamMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Every coordinate of η fixed at `f(θ)`.
#[derive(Clone)]
pub struct PointMass {
    pub dim: usize,
    pub at: ParamMap,
}

impl fmt::Debug for PointMass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointMass").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl MixingMeasure for PointMass {
    fn eta_dim(&self) -> usize {
        self.dim
    }
    fn fixed(&self, theta: &[f64]) -> Vec<Option<f64>> {
        (self.at)(theta).into_iter().map(Some).collect()
    }
    fn log_density(&self, _: &[f64], _: &[f64]) -> f64 {
        0.0
    }
    fn center(&self, theta: &[f64]) -> Vec<f64> {
        (self.at)(theta)
    }
}

/// `η ~ N(θ·1, σ² I)`.
#[derive(Clone, Debug)]
pub struct GaussianMixing {
    pub dim: usize,
    pub sd: f64,
}

impl MixingMeasure for GaussianMixing {
    fn eta_dim(&self) -> usize {
        self.dim
    }
    fn fixed(&self, _: &[f64]) -> Vec<Option<f64>> {
        vec![None; self.dim]
    }
    fn log_density(&self, eta: &[f64], theta: &[f64]) -> f64 {
        eta.iter().map(|&e| dens::normal_ln(e, theta[0], self.sd)).sum()
    }
    fn center(&self, theta: &[f64]) -> Vec<f64> {
        vec![theta[0]; self.dim]
    }
}

/// Extends a base measure on η with shared atoms `(ζ_1, …, ζ_r)`:
/// `ζ_1 ~ N(θ, sd²)` and `ζ_k = ζ_1` for all k.
#[derive(Clone, Debug)]
pub struct SharedAtom {
    pub base: Arc<dyn MixingMeasure>,
    pub copies: usize,
    pub sd: f64,
}

impl MixingMeasure for SharedAtom {
    fn eta_dim(&self) -> usize {
        self.base.eta_dim() + self.copies
    }
    fn fixed(&self, theta: &[f64]) -> Vec<Option<f64>> {
        let mut f = self.base.fixed(theta);
        f.extend(std::iter::repeat_n(None, self.copies));
        f
    }
    fn log_density(&self, eta: &[f64], theta: &[f64]) -> f64 {
        let b = self.base.eta_dim();
        let zeta = &eta[b..];
        if zeta.iter().any(|&z| z != zeta[0]) {
            return f64::NEG_INFINITY;
        }
        self.base.log_density(&eta[..b], theta) + dens::normal_ln(zeta[0], theta[0], self.sd)
    }
    fn center(&self, theta: &[f64]) -> Vec<f64> {
        let mut c = self.base.center(theta);
        c.extend(std::iter::repeat_n(theta[0], self.copies));
        c
    }
}

/// A factored working model with its link maps `g_i` (coordinate selections
/// of η) and an optional mixing measure.
#[derive(Clone, Debug)]
pub struct WorkingModel {
    pub id: String,
    pub shards: Vec<Arc<dyn ShardWorking>>,
    /// `links[i][j]` is the η index feeding `g_i(η)[j]`.
    pub links: Vec<Vec<usize>>,
    pub mixing: Option<Arc<dyn MixingMeasure>>,
}

impl WorkingModel {
    pub fn new(id: impl Into<String>, shards: Vec<Arc<dyn ShardWorking>>, links: Vec<Vec<usize>>) -> Result<Self> {
        if shards.len() != links.len() {
            return Err(Error::config("working model needs one link map per shard"));
        }
        for (s, l) in shards.iter().zip(&links) {
            if s.link_dim() != l.len() {
                return Err(Error::config("link map length does not match the shard's link dimension"));
            }
        }
        Ok(WorkingModel { id: id.into(), shards, links, mixing: None })
    }

    pub fn with_mixing(mut self, m: Arc<dyn MixingMeasure>) -> Result<Self> {
        let max = self.links.iter().flatten().copied().max().map_or(0, |v| v + 1);
        if max > m.eta_dim() {
            return Err(Error::config("link maps index past the mixing measure's η dimension"));
        }
        self.mixing = Some(m);
        Ok(self)
    }

    pub fn eta_dim(&self) -> usize {
        self.mixing.as_ref().map_or_else(|| self.links.iter().flatten().copied().max().map_or(0, |v| v + 1), |m| m.eta_dim())
    }

    pub fn latent_dims(&self) -> Vec<usize> {
        self.shards.iter().map(|s| s.latent_dim()).collect()
    }

    /// `Σ_i log p̃(X_i | g_i(η))`, or `-inf` if a pin is violated.
    pub fn log_density(&self, x: &LatentX, eta: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, s) in self.shards.iter().enumerate() {
            let g: Vec<f64> = self.links[i].iter().map(|&k| eta[k]).collect();
            if s.pins().iter().any(|&(xk, gk)| x.shards[i][xk] != g[gk]) {
                return f64::NEG_INFINITY;
            }
            total += s.log_density(&x.shards[i], &g);
        }
        total
    }

    /// `log ∫ Π_i p̃(X_i | g_i(η)) dp(η | θ)`.
    pub fn log_mixture(&self, x: &LatentX, theta: &[f64], quad: &QuadratureSpec) -> Result<f64> {
        let mixing = self.mixing.as_ref().ok_or_else(|| Error::config(format!("working model `{}` has no mixing measure", self.id)))?;
        let mut eta: Vec<Option<f64>> = mixing.fixed(theta);
        for (i, s) in self.shards.iter().enumerate() {
            for (xk, gk) in s.pins() {
                let k = self.links[i][gk];
                let v = x.shards[i][xk];
                match eta[k] {
                    Some(prev) if prev != v => return Ok(f64::NEG_INFINITY),
                    _ => eta[k] = Some(v),
                }
            }
        }
        let free: Vec<usize> = (0..eta.len()).filter(|&k| eta[k].is_none()).collect();
        let center = mixing.center(theta);
        let base: Vec<f64> = eta.iter().zip(&center).map(|(e, c)| e.unwrap_or(*c)).collect();
        let fill = |vals: &[f64]| {
            let mut e = base.clone();
            for (k, &f) in free.iter().enumerate() {
                e[f] = vals[k];
            }
            e
        };
        let g = |vals: &[f64]| {
            let e = fill(vals);
            self.log_density(x, &e) + mixing.log_density(&e, theta)
        };
        let start: Vec<f64> = free.iter().map(|&k| center[k]).collect();
        quadrature::log_integrate(&g, &[start], quad)
    }

    /// `log ∫ p̃(x_i | g) dx_i` over the non-pinned coordinates of shard i.
    pub fn log_normalizer(&self, shard: usize, g: &[f64], quad: &QuadratureSpec) -> Result<f64> {
        let s = &self.shards[shard];
        let pinned: Vec<usize> = s.pins().iter().map(|p| p.0).collect();
        let free: Vec<usize> = (0..s.latent_dim()).filter(|k| !pinned.contains(k)).collect();
        if free.is_empty() {
            return Ok(0.0);
        }
        let mut x0 = vec![0.0; s.latent_dim()];
        for &(xk, gk) in &s.pins() {
            x0[xk] = g[gk];
        }
        let f = |vals: &[f64]| {
            let mut x = x0.clone();
            for (k, &f) in free.iter().enumerate() {
                x[f] = vals[k];
            }
            s.log_density(&x, g)
        };
        let start = vec![g.first().copied().unwrap_or(0.0); free.len()];
        quadrature::log_integrate(&f, &[start], quad)
    }
}

/// Working model whose shards are saturated and whose mixing measure is the
/// scientific law; the DSC holds by construction.
pub fn saturated(sci: Arc<dyn ScientificModel>, dims: &[usize]) -> Result<WorkingModel> {
    let mut links = Vec::new();
    let mut at = 0;
    for &d in dims {
        links.push((at..at + d).collect());
        at += d;
    }
    let shards = dims.iter().map(|&d| Arc::new(Saturated { dim: d }) as Arc<dyn ShardWorking>).collect();
    WorkingModel::new("saturated", shards, links)?.with_mixing(Arc::new(SciDensity { sci, dims: dims.to_vec() }))
}

/// Independent `N(0, η_i I)` per shard, with η fixed at `(θ², …, θ²)`.
pub fn independent_centered_normal(shards: usize, dim: usize) -> Result<WorkingModel> {
    let ws = (0..shards).map(|_| Arc::new(CenteredNormal { dim }) as Arc<dyn ShardWorking>).collect();
    let links = (0..shards).map(|i| vec![i]).collect();
    let at = Arc::new(move |t: &[f64]| vec![t[0] * t[0]; shards]);
    WorkingModel::new("independent_centered_normal", ws, links)?.with_mixing(Arc::new(PointMass { dim: shards, at }))
}

/// `X_i | η ~ N(η, 1)` on every shard with η fixed at θ.
pub fn gaussian_location(shards: usize, dim: usize) -> Result<WorkingModel> {
    let ws = (0..shards).map(|_| Arc::new(LocationNormal { dim }) as Arc<dyn ShardWorking>).collect();
    let links = vec![vec![0]; shards];
    let at = Arc::new(|t: &[f64]| vec![t[0]]);
    WorkingModel::new("gaussian_location", ws, links)?.with_mixing(Arc::new(PointMass { dim: 1, at }))
}

/// Shared-component construction: `X_i | η ~ N(η, 1)` with η fixed at θ, and
/// each shard's copy `Z_i` pinned to its own `ζ_i`, where the ζ are tied.
pub fn shared_component(shards: usize) -> Result<WorkingModel> {
    let ws = (0..shards).map(|_| Arc::new(LocationWithPinnedCopy) as Arc<dyn ShardWorking>).collect();
    let links = (0..shards).map(|i| vec![0, 1 + i]).collect();
    let base = Arc::new(PointMass { dim: 1, at: Arc::new(|t: &[f64]| vec![t[0]]) });
    WorkingModel::new("shared_component", ws, links)?.with_mixing(Arc::new(SharedAtom { base, copies: shards, sd: 1.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NormalIid, SharedComponent};

    #[test]
    fn saturated_mixture_is_the_scientific_density() {
        let sci: Arc<dyn ScientificModel> = Arc::new(NormalIid { tau: 1.0 });
        let w = saturated(sci.clone(), &[1, 2]).unwrap();
        let x = LatentX { shards: vec![vec![0.3], vec![-1.0, 2.0]] };
        let got = w.log_mixture(&x, &[0.5], &QuadratureSpec::default()).unwrap();
        assert_eq!(got, sci.log_density(&x, &[0.5]));
    }

    #[test]
    fn shared_component_mixture() {
        let w = shared_component(2).unwrap();
        let q = QuadratureSpec::default();
        let x = LatentX { shards: vec![vec![0.3, 1.1], vec![-0.2, 1.1]] };
        let got = w.log_mixture(&x, &[0.4], &q).unwrap();
        assert!((got - SharedComponent.log_density(&x, &[0.4])).abs() < 1e-12);
        let split = LatentX { shards: vec![vec![0.3, 1.1], vec![-0.2, 1.2]] };
        assert_eq!(w.log_mixture(&split, &[0.4], &q).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn shard_densities_normalise() {
        let q = QuadratureSpec::default();
        let w = independent_centered_normal(2, 2).unwrap();
        assert!(w.log_normalizer(0, &[2.5], &q).unwrap().abs() < 1e-9);
        let w = shared_component(2).unwrap();
        assert!(w.log_normalizer(1, &[0.7, -0.3], &q).unwrap().abs() < 1e-9);
    }

    #[test]
    fn gaussian_location_mixture_is_iid_normal() {
        let w = gaussian_location(2, 2).unwrap();
        let x = LatentX { shards: vec![vec![0.3, -0.4], vec![1.2, 0.0]] };
        let got = w.log_mixture(&x, &[0.1], &QuadratureSpec::default()).unwrap();
        assert!((got - NormalIid { tau: 1.0 }.log_density(&x, &[0.1])).abs() < 1e-12);
    }

    #[test]
    fn missing_mixing_is_config_error() {
        let w = WorkingModel::new("bare", vec![Arc::new(CenteredNormal { dim: 1 })], vec![vec![0]]).unwrap();
        let x = LatentX { shards: vec![vec![0.0]] };
        assert!(matches!(w.log_mixture(&x, &[1.0], &QuadratureSpec::default()), Err(Error::Config(_))));
    }
}
