//! Actor and critic networks.
//!
//! Both share one topology: a state branch of two dense ReLU layers, a grid
//! branch conv → pool → conv → pool → dense, a merging dense layer and a
//! head. The policy head squashes its output with a bound-scaled tanh and
//! carries a free log-σ vector; the value head is a single linear unit.

use serde::{Deserialize, Serialize};

use super::gaussian::PolicyOutput;
use super::init;
use super::layers::{relu_backward, relu_inplace, scaled_tanh, scaled_tanh_backward, Conv2d, Dense, MaxPool2};
use crate::dynamics::Action;
use crate::env::{Observation, STATE_DIM};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::world::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// `μ = bounds·tanh(z)` plus a free log-σ per action dimension.
    Policy { bounds: Vec<f64>, log_std_init: f64 },
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub state_dim: usize,
    pub hidden: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub channels: usize,
    pub kernel: usize,
    pub head: Head,
}

impl Topology {
    pub fn actor(grid: &GridSpec) -> Self {
        Self::with_head(grid, Head::Policy { bounds: Action::bounds().to_vec(), log_std_init: 0.5f64.ln() })
    }

    pub fn critic(grid: &GridSpec) -> Self {
        Self::with_head(grid, Head::Value)
    }

    fn with_head(grid: &GridSpec, head: Head) -> Self {
        Self {
            state_dim: STATE_DIM,
            hidden: 200,
            grid_rows: grid.rows,
            grid_cols: grid.cols,
            channels: 30,
            kernel: 3,
            head,
        }
    }

    pub fn out_dim(&self) -> usize {
        match &self.head {
            Head::Policy { bounds, .. } => bounds.len(),
            Head::Value => 1,
        }
    }

    pub fn grid_len(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ShapeMismatch(m.to_string()));
        if self.state_dim == 0 || self.hidden == 0 || self.channels == 0 {
            return bad("empty layer");
        }
        if self.grid_rows % 4 != 0 || self.grid_cols % 4 != 0 || self.grid_rows == 0 || self.grid_cols == 0 {
            return bad("grid sides must be positive multiples of 4");
        }
        if self.kernel % 2 == 0 {
            return bad("kernel size must be odd");
        }
        if let Head::Policy { bounds, log_std_init } = &self.head {
            if bounds.is_empty() || bounds.iter().any(|b| !(b.is_finite() && *b > 0.0)) || !log_std_init.is_finite() {
                return bad("policy head bounds");
            }
        }
        Ok(())
    }
}

/// The concrete layers implied by a topology.
#[derive(Debug, Clone, Copy)]
struct Layers {
    s1: Dense,
    s2: Dense,
    conv1: Conv2d,
    pool1: MaxPool2,
    conv2: Conv2d,
    pool2: MaxPool2,
    grid_dense: Dense,
    merge: Dense,
    head: Dense,
}

impl Layers {
    fn new(t: &Topology) -> Self {
        let (r, c, pad) = (t.grid_rows, t.grid_cols, t.kernel / 2);
        let conv1 = Conv2d { rows: r, cols: c, c_in: 1, c_out: t.channels, kernel: t.kernel, pad };
        let conv2 = Conv2d { rows: r / 2, cols: c / 2, c_in: t.channels, c_out: 1, kernel: t.kernel, pad };
        Self {
            s1: Dense::new(t.state_dim, t.hidden),
            s2: Dense::new(t.hidden, t.hidden),
            conv1,
            pool1: MaxPool2 { rows: r, cols: c, channels: t.channels },
            conv2,
            pool2: MaxPool2 { rows: r / 2, cols: c / 2, channels: 1 },
            grid_dense: Dense::new((r / 4) * (c / 4), t.hidden),
            merge: Dense::new(2 * t.hidden, t.hidden),
            head: Dense::new(t.hidden, t.out_dim()),
        }
    }
}

/// A named, contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    s1: usize,
    s2: usize,
    conv1: usize,
    conv2: usize,
    grid_dense: usize,
    merge: usize,
    head: usize,
    log_std: usize,
    total: usize,
}

impl Offsets {
    fn new(l: &Layers, t: &Topology) -> Self {
        let s1 = 0;
        let s2 = s1 + l.s1.param_len();
        let conv1 = s2 + l.s2.param_len();
        let conv2 = conv1 + l.conv1.param_len();
        let grid_dense = conv2 + l.conv2.param_len();
        let merge = grid_dense + l.grid_dense.param_len();
        let head = merge + l.merge.param_len();
        let log_std = head + l.head.param_len();
        let extra = if matches!(t.head, Head::Policy { .. }) { t.out_dim() } else { 0 };
        Self { s1, s2, conv1, conv2, grid_dense, merge, head, log_std, total: log_std + extra }
    }
}

/// Network inputs for a batch: scaled state vectors and perception grids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub len: usize,
    pub states: Vec<f64>,
    pub grids: Vec<f64>,
}

impl Batch {
    pub fn push(&mut self, state: &[f64], grid: &[i8]) {
        self.states.extend_from_slice(state);
        self.grids.extend(grid.iter().map(|&g| g as f64));
        self.len += 1;
    }

    pub fn push_observation(&mut self, obs: &Observation) {
        self.push(&obs.state, &obs.grid.cells);
    }

    pub fn from_observations<'a>(obs: impl IntoIterator<Item = &'a Observation>) -> Self {
        let mut b = Self::default();
        for o in obs {
            b.push_observation(o);
        }
        b
    }

    pub fn clear(&mut self) {
        self.len = 0;
        self.states.clear();
        self.grids.clear();
    }
}

/// Activations retained by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub batch: usize,
    states: Vec<f64>,
    grids: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    c1: Vec<f64>,
    /// First-conv feature maps after ReLU and pooling, `[batch, C, r/2, c/2]`.
    pub features: Vec<f64>,
    p1_arg: Vec<u32>,
    c2: Vec<f64>,
    p2: Vec<f64>,
    p2_arg: Vec<u32>,
    h3: Vec<f64>,
    merged: Vec<f64>,
    m: Vec<f64>,
    z: Vec<f64>,
    /// μ for a policy, V for a critic; `[batch × out_dim]`.
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    topology: Topology,
    pub params: Vec<f64>,
}

impl Network {
    /// All-zero parameters (log σ still at its initial value).
    pub fn zeros(topology: Topology) -> Result<Self> {
        topology.validate()?;
        let layers = Layers::new(&topology);
        let off = Offsets::new(&layers, &topology);
        let mut params = vec![0.0; off.total];
        if let Head::Policy { log_std_init, .. } = topology.head {
            params[off.log_std..].fill(log_std_init);
        }
        Ok(Self { topology, params })
    }

    /// Orthogonal dense weights (gain √2 for ReLU layers, 0.01 for the policy
    /// head, 1 for the value head), He-uniform convolutions, zero biases.
    pub fn init(topology: Topology, rng: &mut SimRng) -> Result<Self> {
        let mut net = Self::zeros(topology)?;
        let l = net.layers();
        let o = net.offsets();
        let relu_gain = 2f64.sqrt();
        let head_gain = match net.topology.head {
            Head::Policy { .. } => 0.01,
            Head::Value => 1.0,
        };
        let p = &mut net.params;
        for (d, at, gain) in [
            (l.s1, o.s1, relu_gain),
            (l.s2, o.s2, relu_gain),
            (l.grid_dense, o.grid_dense, relu_gain),
            (l.merge, o.merge, relu_gain),
            (l.head, o.head, head_gain),
        ] {
            init::orthogonal(&mut p[at..at + d.weight_len()], d.inp, d.out, gain, rng);
        }
        for (c, at) in [(l.conv1, o.conv1), (l.conv2, o.conv2)] {
            init::he_uniform(&mut p[at..at + c.weight_len()], c.patch_len(), rng);
        }
        Ok(net)
    }

    /// Replaces the parameters; the length must match the topology.
    pub fn with_params(topology: Topology, params: Vec<f64>) -> Result<Self> {
        let net = Self::zeros(topology)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        Ok(Self { params, ..net })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    fn layers(&self) -> Layers {
        Layers::new(&self.topology)
    }

    fn offsets(&self) -> Offsets {
        Offsets::new(&self.layers(), &self.topology)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameter blocks in storage order.
    pub fn blocks(&self) -> Vec<ParamBlock> {
        let l = self.layers();
        let o = self.offsets();
        let mut out = Vec::new();
        let mut push = |name: &str, offset: usize, len: usize| {
            out.push(ParamBlock { name: name.to_string(), offset, len });
        };
        for (name, at, wlen, blen) in [
            ("state1", o.s1, l.s1.weight_len(), l.s1.out),
            ("state2", o.s2, l.s2.weight_len(), l.s2.out),
            ("conv1", o.conv1, l.conv1.weight_len(), l.conv1.c_out),
            ("conv2", o.conv2, l.conv2.weight_len(), l.conv2.c_out),
            ("grid_dense", o.grid_dense, l.grid_dense.weight_len(), l.grid_dense.out),
            ("merge", o.merge, l.merge.weight_len(), l.merge.out),
            ("head", o.head, l.head.weight_len(), l.head.out),
        ] {
            push(&format!("{name}.weight"), at, wlen);
            push(&format!("{name}.bias"), at + wlen, blen);
        }
        if o.total > o.log_std {
            push("log_std", o.log_std, o.total - o.log_std);
        }
        out
    }

    /// Index range of the log-σ block (empty for a critic).
    pub fn log_std_range(&self) -> std::ops::Range<usize> {
        let o = self.offsets();
        o.log_std..o.total
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.log_std_range()]
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_std().iter().map(|l| l.exp()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, batch: &Batch) -> Result<ForwardCache> {
        let t = &self.topology;
        if batch.states.len() != batch.len * t.state_dim || batch.grids.len() != batch.len * t.grid_len() {
            return Err(Error::ShapeMismatch(format!(
                "batch of {} needs {} state and {} grid values, got {} and {}",
                batch.len,
                batch.len * t.state_dim,
                batch.len * t.grid_len(),
                batch.states.len(),
                batch.grids.len()
            )));
        }
        Ok(self.forward_unchecked(&batch.states, &batch.grids, batch.len))
    }

    fn forward_unchecked(&self, states: &[f64], grids: &[f64], n: usize) -> ForwardCache {
        let l = self.layers();
        let o = self.offsets();
        let p = &self.params;
        let hid = self.topology.hidden;

        let mut h1 = vec![0.0; n * hid];
        l.s1.forward(&p[o.s1..], states, n, &mut h1);
        relu_inplace(&mut h1);
        let mut h2 = vec![0.0; n * hid];
        l.s2.forward(&p[o.s2..], &h1, n, &mut h2);
        relu_inplace(&mut h2);

        let mut c1 = vec![0.0; n * l.conv1.out_len()];
        l.conv1.forward(&p[o.conv1..], grids, n, &mut c1);
        relu_inplace(&mut c1);
        let mut features = vec![0.0; n * l.pool1.out_len()];
        let mut p1_arg = vec![0; features.len()];
        l.pool1.forward(&c1, n, &mut features, &mut p1_arg);
        let mut c2 = vec![0.0; n * l.conv2.out_len()];
        l.conv2.forward(&p[o.conv2..], &features, n, &mut c2);
        relu_inplace(&mut c2);
        let mut p2 = vec![0.0; n * l.pool2.out_len()];
        let mut p2_arg = vec![0; p2.len()];
        l.pool2.forward(&c2, n, &mut p2, &mut p2_arg);
        let mut h3 = vec![0.0; n * hid];
        l.grid_dense.forward(&p[o.grid_dense..], &p2, n, &mut h3);
        relu_inplace(&mut h3);

        let mut merged = vec![0.0; n * 2 * hid];
        for (row, (a, b)) in merged.chunks_exact_mut(2 * hid).zip(h2.chunks_exact(hid).zip(h3.chunks_exact(hid))) {
            row[..hid].copy_from_slice(a);
            row[hid..].copy_from_slice(b);
        }
        let mut m = vec![0.0; n * hid];
        l.merge.forward(&p[o.merge..], &merged, n, &mut m);
        relu_inplace(&mut m);
        let mut z = vec![0.0; n * l.head.out];
        l.head.forward(&p[o.head..], &m, n, &mut z);
        let output = match &self.topology.head {
            Head::Policy { bounds, .. } => {
                let mut mu = vec![0.0; z.len()];
                scaled_tanh(&z, bounds, &mut mu);
                mu
            }
            Head::Value => z.clone(),
        };

        ForwardCache {
            batch: n,
            states: states.to_vec(),
            grids: grids.to_vec(),
            h1,
            h2,
            c1,
            features,
            p1_arg,
            c2,
            p2,
            p2_arg,
            h3,
            merged,
            m,
            z,
            output,
        }
    }

    /// Accumulates into `grads` the gradient of a scalar loss whose gradient
    /// with respect to `cache.output` is `d_out`. The log-σ block is left to
    /// the caller, since σ does not depend on the forward pass.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grads: &mut [f64]) {
        let l = self.layers();
        let o = self.offsets();
        let p = &self.params;
        let n = cache.batch;
        let hid = self.topology.hidden;
        assert_eq!(d_out.len(), n * l.head.out, "output gradient shape");
        assert_eq!(grads.len(), p.len(), "gradient buffer shape");

        let dz = match &self.topology.head {
            Head::Policy { bounds, .. } => {
                let mut dz = vec![0.0; d_out.len()];
                scaled_tanh_backward(&cache.z, bounds, d_out, &mut dz);
                dz
            }
            Head::Value => d_out.to_vec(),
        };
        let mut dm = vec![0.0; n * hid];
        l.head.backward(&p[o.head..], &cache.m, &dz, n, &mut grads[o.head..o.log_std], Some(&mut dm));
        relu_backward(&cache.m, &mut dm);
        let mut dmerged = vec![0.0; n * 2 * hid];
        l.merge.backward(&p[o.merge..], &cache.merged, &dm, n, &mut grads[o.merge..o.head], Some(&mut dmerged));
        let mut dh2 = vec![0.0; n * hid];
        let mut dh3 = vec![0.0; n * hid];
        for (row, (a, b)) in dmerged.chunks_exact(2 * hid).zip(dh2.chunks_exact_mut(hid).zip(dh3.chunks_exact_mut(hid))) {
            a.copy_from_slice(&row[..hid]);
            b.copy_from_slice(&row[hid..]);
        }

        // Grid branch.
        relu_backward(&cache.h3, &mut dh3);
        let mut dp2 = vec![0.0; cache.p2.len()];
        l.grid_dense.backward(&p[o.grid_dense..], &cache.p2, &dh3, n, &mut grads[o.grid_dense..o.merge], Some(&mut dp2));
        let mut dc2 = vec![0.0; cache.c2.len()];
        l.pool2.backward(&dp2, &cache.p2_arg, n, &mut dc2);
        relu_backward(&cache.c2, &mut dc2);
        let mut dp1 = vec![0.0; cache.features.len()];
        l.conv2.backward(&p[o.conv2..], &cache.features, &dc2, n, &mut grads[o.conv2..o.grid_dense], Some(&mut dp1));
        let mut dc1 = vec![0.0; cache.c1.len()];
        l.pool1.backward(&dp1, &cache.p1_arg, n, &mut dc1);
        relu_backward(&cache.c1, &mut dc1);
        l.conv1.backward(&p[o.conv1..], &cache.grids, &dc1, n, &mut grads[o.conv1..o.conv2], None);

        // State branch.
        relu_backward(&cache.h2, &mut dh2);
        let mut dh1 = vec![0.0; n * hid];
        l.s2.backward(&p[o.s2..], &cache.h1, &dh2, n, &mut grads[o.s2..o.conv1], Some(&mut dh1));
        relu_backward(&cache.h1, &mut dh1);
        l.s1.backward(&p[o.s1..], &cache.states, &dh1, n, &mut grads[o.s1..o.s2], None);
    }

    /// Policy outputs for every sample of a forward pass.
    pub fn policy_outputs(&self, cache: &ForwardCache) -> Vec<PolicyOutput> {
        let sigma = self.sigma();
        assert_eq!(sigma.len(), 2, "policy outputs need a two-dimensional policy head");
        cache
            .output
            .chunks_exact(2)
            .map(|mu| PolicyOutput { mu: [mu[0], mu[1]], sigma: [sigma[0], sigma[1]] })
            .collect()
    }

    /// Single-observation policy evaluation.
    pub fn policy(&self, obs: &Observation) -> Result<PolicyOutput> {
        let cache = self.forward(&Batch::from_observations([obs]))?;
        Ok(self.policy_outputs(&cache)[0])
    }

    pub fn value(&self, obs: &Observation) -> Result<f64> {
        let cache = self.forward(&Batch::from_observations([obs]))?;
        Ok(cache.output[0])
    }

    /// Attention maps `Σ_c F_c²` over the pooled first-conv feature maps,
    /// one `[r/2 × c/2]` array per sample.
    pub fn attention(&self, cache: &ForwardCache) -> Vec<Vec<f64>> {
        let ch = self.topology.channels;
        let cells = self.topology.grid_len() / 4;
        cache
            .features
            .chunks_exact(cells * ch)
            .map(|maps| {
                let mut a = vec![0.0; cells];
                for map in maps.chunks_exact(cells) {
                    for (o, f) in a.iter_mut().zip(map) {
                        *o += f * f;
                    }
                }
                a
            })
            .collect()
    }
}
