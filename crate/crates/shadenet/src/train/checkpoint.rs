//! Checkpoint file: magic `DSHD`, a u32 version, a length-prefixed JSON
//! header (train config, iteration, optimizer hyper-parameters), raw
//! little-endian parameter blobs in build order, the optimizer
//! accumulators, and a trailing SHA-256 of everything before it.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optim::AdadeltaState;
use crate::unet::{NetConfig, Network};

use super::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DSHD";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    iteration: u64,
    rho: f64,
    epsilon: f64,
}

/// A deserialized checkpoint; weights and accumulators are block lists in
/// network build order.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub iteration: u64,
    pub rho: f64,
    pub epsilon: f64,
    pub params: Vec<Vec<f32>>,
    pub opt_grad: Vec<Vec<f64>>,
    pub opt_update: Vec<Vec<f64>>,
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.into() }
}

fn take<'a>(cursor: &mut &'a [u8], n: usize, path: &Path) -> Result<&'a [u8]> {
    if cursor.len() < n {
        return Err(format_err(path, "truncated checkpoint"));
    }
    let (head, rest) = cursor.split_at(n);
    *cursor = rest;
    Ok(head)
}

impl Checkpoint {
    pub fn capture(
        config: &TrainConfig,
        net: &Network,
        states: &[AdadeltaState],
        iteration: u64,
    ) -> Checkpoint {
        let rho = states.first().map(|s| s.rho()).unwrap_or(crate::optim::DEFAULT_RHO);
        let epsilon = states
            .first()
            .map(|s| s.epsilon())
            .unwrap_or(crate::optim::DEFAULT_EPSILON);
        Checkpoint {
            config: config.clone(),
            iteration,
            rho,
            epsilon,
            params: net.param_blocks().iter().map(|b| b.to_vec()).collect(),
            opt_grad: states.iter().map(|s| s.avg_sq_grad().to_vec()).collect(),
            opt_update: states.iter().map(|s| s.avg_sq_update().to_vec()).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            iteration: self.iteration,
            rho: self.rho,
            epsilon: self.epsilon,
        })?;
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for block in &self.params {
            buf.extend_from_slice(&(block.len() as u64).to_le_bytes());
            for v in block {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for (g, u) in self.opt_grad.iter().zip(&self.opt_update) {
            buf.extend_from_slice(&(g.len() as u64).to_le_bytes());
            for v in g {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&(u.len() as u64).to_le_bytes());
            for v in u {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        file.write_all(&digest)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 4 + 4 + 8 + 32 {
            return Err(format_err(path, "file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::ChecksumMismatch(path.to_path_buf()));
        }
        let mut cursor = body;

        if take(&mut cursor, 4, path)? != CHECKPOINT_MAGIC {
            return Err(format_err(path, "bad magic"));
        }
        let version = u32::from_le_bytes(take(&mut cursor, 4, path)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(format_err(path, format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(take(&mut cursor, 8, path)?.try_into().unwrap()) as usize;
        let header: Header = serde_json::from_slice(take(&mut cursor, header_len, path)?)?;

        let net = Network::build(header.config.net.clone(), 0)?;
        let block_lens: Vec<usize> = net.param_blocks().iter().map(|b| b.len()).collect();

        let mut params = Vec::with_capacity(block_lens.len());
        for &len in &block_lens {
            let claimed =
                u64::from_le_bytes(take(&mut cursor, 8, path)?.try_into().unwrap()) as usize;
            if claimed != len {
                return Err(format_err(
                    path,
                    format!("parameter block length {claimed}, expected {len}"),
                ));
            }
            let raw = take(&mut cursor, len * 4, path)?;
            params.push(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        let mut opt_grad = Vec::with_capacity(block_lens.len());
        let mut opt_update = Vec::with_capacity(block_lens.len());
        for &len in &block_lens {
            for out in [&mut opt_grad, &mut opt_update] {
                let claimed =
                    u64::from_le_bytes(take(&mut cursor, 8, path)?.try_into().unwrap()) as usize;
                if claimed != len {
                    return Err(format_err(
                        path,
                        format!("accumulator block length {claimed}, expected {len}"),
                    ));
                }
                let raw = take(&mut cursor, len * 8, path)?;
                out.push(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect::<Vec<f64>>(),
                );
            }
        }
        if !cursor.is_empty() {
            return Err(format_err(path, "trailing bytes"));
        }
        Ok(Checkpoint {
            config: header.config,
            iteration: header.iteration,
            rho: header.rho,
            epsilon: header.epsilon,
            params,
            opt_grad,
            opt_update,
        })
    }

    /// Errors unless the checkpoint's network config equals `expected`.
    pub fn require_net_config(&self, expected: &NetConfig) -> Result<()> {
        if &self.config.net != expected {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint built for levels={} u0={} k={}, expected levels={} u0={} k={}",
                self.config.net.levels,
                self.config.net.u0,
                self.config.net.kernel_size,
                expected.levels,
                expected.u0,
                expected.kernel_size
            )));
        }
        Ok(())
    }

    /// Rebuilds the network and optimizer states held by this checkpoint.
    pub fn restore(&self) -> Result<(Network, Vec<AdadeltaState>)> {
        let mut net = Network::build(self.config.net.clone(), 0)?;
        net.load_param_blocks(&self.params)?;
        let states = self
            .opt_grad
            .iter()
            .zip(&self.opt_update)
            .map(|(g, u)| {
                AdadeltaState::from_parts(g.clone(), u.clone(), self.rho, self.epsilon)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((net, states))
    }
}
