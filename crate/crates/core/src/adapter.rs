//! Linear adapter over frozen embeddings and its InfoNCE loss.
//!
//! The adapter maps `x` to `normalize(W x)`. For a group with anchor `a`,
//! positive `p` and negatives `n_1..n_m`, logits are `cos(ŷa, ŷc) / τ` and
//! the loss is the cross-entropy of picking `p` among `{p, n_1..n_m}`.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embed::normalize;
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterModel {
    pub d_in: usize,
    pub d_out: usize,
    pub temperature: f64,
    /// Row-major `d_out x d_in`.
    pub weights: Vec<f64>,
}

impl AdapterModel {
    pub fn identity(d: usize, temperature: f64) -> Self {
        let mut weights = vec![0.0; d * d];
        for i in 0..d {
            weights[i * d + i] = 1.0;
        }
        AdapterModel {
            d_in: d,
            d_out: d,
            temperature,
            weights,
        }
    }

    /// Identity when square, otherwise i.i.d. N(0, 1/d_in) entries.
    pub fn init(d_in: usize, d_out: usize, temperature: f64, seed: u64) -> Self {
        if d_in == d_out {
            return Self::identity(d_in, temperature);
        }
        let normal = Normal::new(0.0, (1.0 / d_in as f64).sqrt()).expect("finite std");
        let mut rng = substream(seed, "init", "");
        AdapterModel {
            d_in,
            d_out,
            temperature,
            weights: (0..d_in * d_out).map(|_| normal.sample(&mut rng)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.d_in == 0 || self.d_out == 0 {
            return Err(Error::invalid("adapter dimensions must be positive"));
        }
        if self.weights.len() != self.d_in * self.d_out {
            return Err(Error::invalid(format!(
                "adapter has {} weights, expected {}x{}",
                self.weights.len(),
                self.d_out,
                self.d_in
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("adapter weights must be finite"));
        }
        Ok(())
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.d_in..(r + 1) * self.d_in]
    }

    pub fn apply_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in {
            return Err(Error::Dimension {
                expected: self.d_in,
                actual: x.len(),
            });
        }
        Ok((0..self.d_out)
            .map(|r| self.row(r).iter().zip(x).map(|(w, v)| w * v).sum())
            .collect())
    }

    /// `normalize(W x)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        normalize(self.apply_raw(x)?).ok_or_else(|| Error::ZeroVector("adapter output".into()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self)?;
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: AdapterModel = serde_json::from_str(&body)?;
        m.validate()?;
        Ok(m)
    }
}

/// Frozen vectors of one anchor with its positive and negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGroup {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

impl PairGroup {
    fn vectors(&self) -> impl Iterator<Item = &Vec<f64>> {
        std::iter::once(&self.anchor)
            .chain(std::iter::once(&self.positive))
            .chain(&self.negatives)
    }
}

struct Projected {
    x: Vec<f64>,
    y: Vec<f64>,
    norm: f64,
}

fn project_for_grad(adapter: &AdapterModel, x: &[f64]) -> Result<Projected> {
    let z = adapter.apply_raw(x)?;
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector("adapter output".into()));
    }
    Ok(Projected {
        x: x.to_vec(),
        y: z.into_iter().map(|v| v / norm).collect(),
        norm,
    })
}

/// Adds `dL/dW` for one projected vector given `dL/dy` to `grad`.
fn backprop(adapter: &AdapterModel, p: &Projected, dy: &[f64], scale: f64, grad: &mut [f64]) {
    // dz = (I - y yᵀ) dy / |z|
    let yd: f64 = p.y.iter().zip(dy).map(|(a, b)| a * b).sum();
    for r in 0..adapter.d_out {
        let dz = (dy[r] - p.y[r] * yd) / p.norm * scale;
        if dz == 0.0 {
            continue;
        }
        let row = &mut grad[r * adapter.d_in..(r + 1) * adapter.d_in];
        for (g, xv) in row.iter_mut().zip(&p.x) {
            *g += dz * xv;
        }
    }
}

/// Loss of one group; when `grad` is given, `scale * dL/dW` is added to it.
fn group_loss_and_grad(
    adapter: &AdapterModel,
    group: &PairGroup,
    grad: Option<(&mut [f64], f64)>,
) -> Result<f64> {
    let tau = adapter.temperature;
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    if group.negatives.is_empty() {
        return Err(Error::invalid("group needs at least one negative"));
    }
    for v in group.vectors() {
        if v.len() != adapter.d_in {
            return Err(Error::Dimension {
                expected: adapter.d_in,
                actual: v.len(),
            });
        }
    }
    let anchor = project_for_grad(adapter, &group.anchor)?;
    let cands: Vec<Projected> = std::iter::once(&group.positive)
        .chain(&group.negatives)
        .map(|v| project_for_grad(adapter, v))
        .collect::<Result<_>>()?;

    let logits: Vec<f64> = cands
        .iter()
        .map(|c| anchor.y.iter().zip(&c.y).map(|(a, b)| a * b).sum::<f64>() / tau)
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + sum_exp.ln();
    let loss = lse - logits[0];

    if let Some((grad, scale)) = grad {
        // dL/dlogit_j = softmax_j - [j == 0]
        let dlogit: Vec<f64> = logits
            .iter()
            .enumerate()
            .map(|(j, l)| (l - lse).exp() - if j == 0 { 1.0 } else { 0.0 })
            .collect();
        let mut dy_anchor = vec![0.0; adapter.d_out];
        for (c, g) in cands.iter().zip(&dlogit) {
            for (d, yc) in dy_anchor.iter_mut().zip(&c.y) {
                *d += g / tau * yc;
            }
            let dy_c: Vec<f64> = anchor.y.iter().map(|ya| g / tau * ya).collect();
            backprop(adapter, c, &dy_c, scale, grad);
        }
        backprop(adapter, &anchor, &dy_anchor, scale, grad);
    }
    Ok(loss)
}

/// InfoNCE loss of a single group.
pub fn infonce_group_loss(adapter: &AdapterModel, group: &PairGroup) -> Result<f64> {
    group_loss_and_grad(adapter, group, None)
}

/// Mean loss over `groups`.
pub fn batch_loss(adapter: &AdapterModel, groups: &[&PairGroup]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for g in groups {
        total += infonce_group_loss(adapter, g)?;
    }
    Ok(total / groups.len() as f64)
}

/// Mean loss and exact gradient `dL/dW` (row-major) over `groups`.
/// Groups are accumulated in the given order, so results are bitwise
/// reproducible.
pub fn loss_gradient(adapter: &AdapterModel, groups: &[&PairGroup]) -> Result<(f64, Vec<f64>)> {
    if groups.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let scale = 1.0 / groups.len() as f64;
    let mut grad = vec![0.0; adapter.weights.len()];
    let mut total = 0.0;
    for g in groups {
        total += group_loss_and_grad(adapter, g, Some((&mut grad, scale)))?;
    }
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        normalize(v.to_vec()).unwrap()
    }

    #[test]
    fn equal_similarities_give_ln_m_plus_one() {
        let a = AdapterModel::identity(3, 0.37);
        let g = PairGroup {
            anchor: unit(&[1.0, 0.0, 0.0]),
            positive: unit(&[0.0, 1.0, 0.0]),
            negatives: vec![unit(&[0.0, 0.0, 1.0]), unit(&[0.0, -1.0, 0.0]), unit(&[0.0, 0.0, -1.0])],
        };
        assert!((infonce_group_loss(&a, &g).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_with_unit_positive() {
        let a = AdapterModel::identity(4, 1.0);
        let g = PairGroup {
            anchor: unit(&[1.0, 0.0, 0.0, 0.0]),
            positive: unit(&[1.0, 0.0, 0.0, 0.0]),
            negatives: vec![unit(&[0.0, 1.0, 0.0, 0.0]), unit(&[0.0, 0.0, 1.0, 0.0]), unit(&[0.0, 0.0, 0.0, 1.0])],
        };
        let expected = (1.0 + 3.0 / std::f64::consts::E).ln();
        assert!((expected - 0.743_668).abs() < 1e-6);
        assert!((infonce_group_loss(&a, &g).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        let mut a = AdapterModel::identity(2, 0.0);
        let g = PairGroup {
            anchor: vec![1.0, 0.0],
            positive: vec![1.0, 0.0],
            negatives: vec![vec![0.0, 1.0]],
        };
        assert!(infonce_group_loss(&a, &g).is_err());
        a.temperature = 0.1;
        let bad = PairGroup {
            anchor: vec![1.0, 0.0, 0.0],
            ..g.clone()
        };
        assert!(matches!(infonce_group_loss(&a, &bad), Err(Error::Dimension { .. })));
        assert!(matches!(loss_gradient(&a, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn init_shapes() {
        let a = AdapterModel::init(8, 8, 0.05, 1);
        assert_eq!(a, AdapterModel::identity(8, 0.05));
        let b = AdapterModel::init(8, 4, 0.05, 1);
        assert_eq!(b.weights.len(), 32);
        assert_eq!(b, AdapterModel::init(8, 4, 0.05, 1));
        assert!(b.validate().is_ok());
    }

    #[test]
    fn projection_is_unit() {
        let a = AdapterModel::init(5, 3, 0.05, 2);
        let y = a.project(&[0.1, -0.4, 2.0, 0.3, 0.0]).unwrap();
        assert!((y.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn save_load_roundtrip() {
        let a = AdapterModel::init(6, 3, 0.07, 5);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        a.save(&p).unwrap();
        assert_eq!(AdapterModel::load(&p).unwrap(), a);
        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        for key in ["d_in", "d_out", "temperature", "weights"] {
            assert!(raw.get(key).is_some());
        }
    }
}
