//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "APCKPT\r\n"
//! version  u32      1
//! hlen     u32      length of the JSON header
//! header   hlen bytes, UTF-8 JSON: metadata, both topologies with their
//!          parameter blocks, Adam hyperparameters and step counters
//! payload  f64 arrays: actor params, actor m, actor v,
//!          critic params, critic m, critic v
//! check    u64      FNV-1a hash of the payload bytes
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::network::{Network, ParamBlock, Topology};
use crate::env::{Phase, Task};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"APCKPT\r\n";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub task: Task,
    pub phase: Phase,
    /// Number of completed training epochs.
    pub epoch: u64,
    pub seed: u64,
}

/// Actor and critic with their optimiser state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub actor: Network,
    pub critic: Network,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

#[derive(Serialize, Deserialize)]
struct NetHeader {
    topology: Topology,
    blocks: Vec<ParamBlock>,
    adam: AdamConfig,
    adam_t: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    actor: NetHeader,
    critic: NetHeader,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::CheckpointInvalid(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let net_header = |net: &Network, opt: &Adam| NetHeader {
            topology: net.topology().clone(),
            blocks: net.blocks(),
            adam: opt.config,
            adam_t: opt.t,
        };
        let header = Header {
            meta: self.meta,
            actor: net_header(&self.actor, &self.actor_opt),
            critic: net_header(&self.critic, &self.critic_opt),
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serialises");
        let mut payload = Vec::new();
        for arr in [
            &self.actor.params,
            &self.actor_opt.m,
            &self.actor_opt.v,
            &self.critic.params,
            &self.critic_opt.m,
            &self.critic_opt.v,
        ] {
            for x in arr.iter() {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(24 + json.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&fnv1a(&payload).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let rest = &bytes[16..];
        if rest.len() < hlen + 8 {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&rest[..hlen]).map_err(|e| bad(format!("header: {e}")))?;
        let (payload, check) = rest[hlen..].split_at(rest.len() - hlen - 8);
        if fnv1a(payload) != u64::from_le_bytes(check.try_into().unwrap()) {
            return Err(bad("payload checksum mismatch"));
        }

        let mut floats = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        if payload.len() % 8 != 0 {
            return Err(bad("payload is not a whole number of floats"));
        }
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = floats.by_ref().take(n).collect();
            if v.len() == n {
                Ok(v)
            } else {
                Err(bad("truncated payload"))
            }
        };
        let mut load = |h: &NetHeader| -> Result<(Network, Adam)> {
            let n = Network::zeros(h.topology.clone())?.param_count();
            if h.blocks.iter().map(|b| b.len).sum::<usize>() != n {
                return Err(bad("parameter blocks disagree with topology"));
            }
            let params = take(n)?;
            let m = take(n)?;
            let v = take(n)?;
            let net = Network::with_params(h.topology.clone(), params)?;
            if net.blocks() != h.blocks {
                return Err(bad("parameter blocks disagree with topology"));
            }
            Ok((net, Adam { config: h.adam, m, v, t: h.adam_t }))
        };
        let (actor, actor_opt) = load(&header.actor)?;
        let (critic, critic_opt) = load(&header.critic)?;
        if floats.next().is_some() {
            return Err(bad("trailing payload"));
        }
        Ok(Self { meta: header.meta, actor, critic, actor_opt, critic_opt })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
