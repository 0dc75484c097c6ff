use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::ModelConfig;
use crate::error::{Error, Result};
use crate::model::{loss, loss_and_grads, PreparedSample};
use crate::params::ParamStore;

/// Denominator floor of the relative error, so coordinates whose true
/// gradient vanishes are judged on an absolute scale. Attention key biases
/// have an identically zero gradient, and central differences of an O(1)
/// loss at eps 1e-5 carry about 1e-10 of rounding noise.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Random coordinates per array, besides the largest-gradient one.
    pub coords_per_array: usize,
    pub seed: u64,
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            coords_per_array: 6,
            seed: 0,
            floor: RELATIVE_ERROR_FLOOR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayCheck {
    pub name: String,
    pub checked: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub arrays: Vec<ArrayCheck>,
    pub max_relative_error: f64,
    pub worst_array: String,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }

    pub fn failing(&self, tolerance: f64) -> Vec<&ArrayCheck> {
        self.arrays
            .iter()
            .filter(|a| a.max_relative_error >= tolerance)
            .collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `loss_fn` on a seeded
/// coordinate subset of every array accepted by `select`.
pub fn grad_check_with(
    params: &ParamStore,
    analytic: &ParamStore,
    loss_fn: impl Fn(&ParamStore) -> Result<f64>,
    select: impl Fn(&str) -> bool,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = params.clone();
    let mut arrays = Vec::new();
    let names: Vec<String> = params.names().filter(|n| select(n)).map(str::to_owned).collect();
    for name in names {
        let g = analytic
            .try_get(&name)
            .ok_or_else(|| Error::invalid(format!("no analytic gradient for `{name}`")))?;
        let len = g.len();
        let mut coords: Vec<usize> = sample(&mut rng, len, cfg.coords_per_array.min(len)).into_vec();
        let top = (0..len)
            .max_by(|&a, &b| g.data()[a].abs().total_cmp(&g.data()[b].abs()))
            .expect("non-empty array");
        if !coords.contains(&top) {
            coords.push(top);
        }
        coords.sort_unstable();
        let mut check = ArrayCheck {
            name: name.clone(),
            checked: coords.len(),
            max_relative_error: 0.0,
            max_abs_error: 0.0,
        };
        for i in coords {
            let orig = work.get(&name).data()[i];
            work.get_mut(&name).data_mut()[i] = orig + cfg.eps;
            let up = loss_fn(&work)?;
            work.get_mut(&name).data_mut()[i] = orig - cfg.eps;
            let down = loss_fn(&work)?;
            work.get_mut(&name).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * cfg.eps);
            let a = g.data()[i];
            check.max_abs_error = check.max_abs_error.max((a - numeric).abs());
            check.max_relative_error = check.max_relative_error.max(relative_error(a, numeric, cfg.floor));
        }
        arrays.push(check);
    }
    let worst = arrays
        .iter()
        .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error));
    Ok(GradCheckReport {
        max_relative_error: worst.map_or(0.0, |w| w.max_relative_error),
        worst_array: worst.map_or_else(String::new, |w| w.name.clone()),
        arrays,
    })
}

/// Mean total loss over `probe` and its analytic gradient.
pub fn probe_loss_and_grads(
    params: &ParamStore,
    cfg: &ModelConfig,
    probe: &[PreparedSample],
) -> Result<(f64, ParamStore)> {
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for s in probe {
        let b = loss_and_grads(params, cfg, s)?;
        total += b.loss.total;
        grads.accumulate(&b.grads);
    }
    let n = probe.len() as f64;
    grads.scale(1.0 / n);
    Ok((total / n, grads))
}

pub fn probe_loss(params: &ParamStore, cfg: &ModelConfig, probe: &[PreparedSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in probe {
        total += loss(params, cfg, s)?.total;
    }
    Ok(total / probe.len() as f64)
}

/// Finite-difference check of the joint loss gradient on a probe batch.
pub fn grad_check(
    params: &ParamStore,
    cfg: &ModelConfig,
    probe: &[PreparedSample],
    select: impl Fn(&str) -> bool,
    gc: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if probe.is_empty() {
        return Err(Error::invalid("grad check needs at least one probe sample"));
    }
    let (_, analytic) = probe_loss_and_grads(params, cfg, probe)?;
    grad_check_with(params, &analytic, |p| probe_loss(p, cfg, probe), select, gc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn quadratic() -> (ParamStore, ParamStore) {
        let mut p = ParamStore::new();
        p.insert("w.weight", Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap());
        let mut g = ParamStore::new();
        g.insert("w.weight", Tensor::from_vec(&[3], vec![1.0, -2.0, 4.0]).unwrap());
        (p, g)
    }

    fn sq(p: &ParamStore) -> Result<f64> {
        Ok(p.get("w.weight").data().iter().map(|v| v * v).sum())
    }

    #[test]
    fn exact_gradient_passes() {
        let (p, g) = quadratic();
        let r = grad_check_with(&p, &g, sq, |_| true, &GradCheckConfig::default()).unwrap();
        assert!(r.passes(1e-8), "{r:?}");
    }

    #[test]
    fn corrupted_gradient_flagged() {
        let (p, mut g) = quadratic();
        g.get_mut("w.weight").data_mut()[1] *= 1.5;
        let r = grad_check_with(&p, &g, sq, |_| true, &GradCheckConfig::default()).unwrap();
        assert!(r.max_relative_error > 1e-2);
        assert_eq!(r.failing(1e-2).len(), 1);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0, 1e-6), 0.0);
        assert!((relative_error(1e-9, 0.0, 1e-6) - 1e-3).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0, 1e-6) - 0.5).abs() < 1e-15);
    }
}
