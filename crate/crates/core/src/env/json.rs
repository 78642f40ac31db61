use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mdp::MnlMdp;
use crate::error::{Error, Result};
use crate::mnl::{FeatureMap, MnlContext};

/// JSON form of an instance, shared with external tooling.
///
/// Nested arrays are indexed `[h][s][a]`; `features[h][s][a][i]` is the
/// feature of the `i`-th state of `reachable[h][s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub dim: usize,
    pub param_bound: f64,
    pub feature_norm_bound: f64,
    pub initial_state: usize,
    pub theta_star: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub reachable: Vec<Vec<Vec<Vec<usize>>>>,
    pub features: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

fn grid<X>(hz: usize, ns: usize, na: usize, f: impl Fn(usize, usize, usize) -> X) -> Vec<Vec<Vec<X>>> {
    (0..hz)
        .map(|h| (0..ns).map(|s| (0..na).map(|a| f(h, s, a)).collect()).collect())
        .collect()
}

impl InstanceDocument {
    pub fn from_mdp(mdp: &MnlMdp<f64>) -> Self {
        let (hz, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
        Self {
            num_states: ns,
            num_actions: na,
            horizon: hz,
            dim: mdp.dim(),
            param_bound: mdp.param_bound(),
            feature_norm_bound: mdp.feature_map().norm_bound(),
            initial_state: mdp.initial_state(),
            theta_star: mdp.theta_star().iter().map(|t| t.iter().copied().collect()).collect(),
            rewards: grid(hz, ns, na, |h, s, a| mdp.reward(h, s, a)),
            reachable: grid(hz, ns, na, |h, s, a| mdp.reachable(h, s, a).to_vec()),
            features: grid(hz, ns, na, |h, s, a| {
                let m = mdp.context(h, s, a).matrix();
                (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
            }),
        }
    }

    /// Rebuilds and validates the instance.
    pub fn to_mdp(&self) -> Result<MnlMdp<f64>> {
        let (hz, ns, na, d) = (self.horizon, self.num_states, self.num_actions, self.dim);
        let shape_ok = |len: usize, what: &str| -> Result<()> {
            if len != hz {
                return Err(Error::invalid(format!("{what}: expected {hz} stages, got {len}")));
            }
            Ok(())
        };
        shape_ok(self.rewards.len(), "rewards")?;
        shape_ok(self.reachable.len(), "reachable")?;
        shape_ok(self.features.len(), "features")?;
        let mut contexts = Vec::with_capacity(hz * ns * na);
        let mut reachable = Vec::with_capacity(hz * ns * na);
        let mut rewards = Vec::with_capacity(hz * ns * na);
        for h in 0..hz {
            for s in 0..ns {
                for a in 0..na {
                    let fetch = || -> Option<(&Vec<Vec<f64>>, &Vec<usize>, f64)> {
                        Some((
                            self.features.get(h)?.get(s)?.get(a)?,
                            self.reachable.get(h)?.get(s)?.get(a)?,
                            *self.rewards.get(h)?.get(s)?.get(a)?,
                        ))
                    };
                    let (rows, reach, r) = fetch()
                        .ok_or_else(|| Error::invalid(format!("missing entry at (h={h}, s={s}, a={a})")))?;
                    if rows.iter().any(|row| row.len() != d) {
                        return Err(Error::invalid(format!("feature dimension mismatch at (h={h}, s={s}, a={a})")));
                    }
                    let m = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
                    contexts.push(MnlContext::new(m)?);
                    reachable.push(reach.clone());
                    rewards.push(r);
                }
            }
        }
        let fm = FeatureMap::new(d, hz, ns, na, self.feature_norm_bound, contexts, reachable)?;
        let theta = self
            .theta_star
            .iter()
            .map(|t| DVector::from_column_slice(t))
            .collect();
        MnlMdp::new(fm, theta, rewards, self.initial_state, self.param_bound)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
