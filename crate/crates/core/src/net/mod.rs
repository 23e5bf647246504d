//! Convolutional policy and value networks.

mod distribution;
mod network;
mod persist;
mod tensor;

use serde::{Deserialize, Serialize};

pub use distribution::{softmax_row, ActionDistribution};
pub use network::{ForwardCache, Head, Network, ParamSpec};
pub use persist::{read_manifest, write_manifest, Manifest, ManifestTensor, MANIFEST_MAGIC, MANIFEST_VERSION};
pub use tensor::{EngagementTensor, CHANNELS};

use crate::error::{Error, Result};
use rand::Rng;

/// Convolution filters per layer.
pub const FILTERS: usize = 8;

/// Tensor dimensions the networks are built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArch {
    pub m_max: usize,
    pub n_max: usize,
}

impl NetArch {
    pub fn new(m_max: usize, n_max: usize) -> Result<Self> {
        if m_max == 0 || n_max == 0 {
            return Err(Error::InvalidConfig(format!("network dimensions must be positive, got {m_max}x{n_max}")));
        }
        Ok(Self { m_max, n_max })
    }

    pub fn input_len(&self) -> usize {
        CHANNELS * self.m_max * self.n_max
    }

    /// Flattened size after the strided convolution.
    pub fn conv_out(&self) -> usize {
        self.m_max.div_ceil(2) * self.n_max.div_ceil(2) * FILTERS
    }

    pub fn act_dim(&self) -> usize {
        self.m_max * self.n_max
    }

    /// Hidden widths and output width of a head.
    pub fn head_dims(&self, head: Head) -> (usize, usize, usize) {
        let out = match head {
            Head::Policy => self.act_dim(),
            Head::Value => 1,
        };
        let h1 = ((self.conv_out() * out) as f64).sqrt().round().max(1.0) as usize;
        let h2 = match head {
            Head::Policy => 10 * self.act_dim(),
            Head::Value => 5,
        };
        (h1, h2, out)
    }
}

/// Policy and value networks sharing an architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueNet {
    pub policy: Network,
    pub value: Network,
}

impl PolicyValueNet {
    pub fn new<R: Rng + ?Sized>(arch: NetArch, rng: &mut R) -> Self {
        Self {
            policy: Network::new(arch, Head::Policy, rng),
            value: Network::new(arch, Head::Value, rng),
        }
    }

    pub fn zeros(arch: NetArch) -> Self {
        Self {
            policy: Network::zeros(arch, Head::Policy),
            value: Network::zeros(arch, Head::Value),
        }
    }

    pub fn arch(&self) -> NetArch {
        self.policy.arch()
    }

    pub fn policy_forward(&self, e: &EngagementTensor) -> Result<ActionDistribution> {
        self.check(e)?;
        let cache = self.policy.forward(e.as_slice(), 1);
        Ok(ActionDistribution::from_logits(self.arch().m_max, self.arch().n_max, cache.output().to_vec()))
    }

    pub fn value_forward(&self, e: &EngagementTensor) -> Result<f64> {
        self.check(e)?;
        Ok(self.value.forward(e.as_slice(), 1).output()[0])
    }

    fn check(&self, e: &EngagementTensor) -> Result<()> {
        let a = self.arch();
        if e.m_max() != a.m_max || e.n_max() != a.n_max {
            return Err(Error::ShapeMismatch(format!(
                "tensor {}x{} does not match network {}x{}",
                e.m_max(),
                e.n_max(),
                a.m_max,
                a.n_max
            )));
        }
        Ok(())
    }

    /// Named tensors of both networks in manifest order.
    pub fn named_tensors(&self) -> Vec<ManifestTensor> {
        let mut out = Vec::new();
        for (prefix, net) in [("policy", &self.policy), ("value", &self.value)] {
            for spec in net.specs() {
                out.push(ManifestTensor {
                    name: format!("{prefix}.{}", spec.name),
                    shape: spec.shape.clone(),
                    data: net.tensor(spec).to_vec(),
                });
            }
        }
        out
    }

    /// Rebuild from manifest tensors, checking names and shapes against the
    /// layer registry of `arch`.
    pub fn from_tensors(arch: NetArch, tensors: &[ManifestTensor]) -> std::result::Result<Self, String> {
        let mut net = Self::zeros(arch);
        for (prefix, target) in [("policy", &mut net.policy), ("value", &mut net.value)] {
            let specs = target.specs().to_vec();
            for spec in specs {
                let name = format!("{prefix}.{}", spec.name);
                let t = tensors
                    .iter()
                    .find(|t| t.name == name)
                    .ok_or_else(|| format!("missing tensor `{name}`"))?;
                if t.shape != spec.shape {
                    return Err(format!("tensor `{name}` has shape {:?}, expected {:?}", t.shape, spec.shape));
                }
                target.tensor_mut(&spec).copy_from_slice(&t.data);
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: &std::path::Path, meta: serde_json::Value) -> Result<()> {
        write_manifest(path, &Manifest { arch: self.arch(), meta, tensors: self.named_tensors() })
    }

    /// Load weights; `expected` rejects files built for other dimensions.
    pub fn load(path: &std::path::Path, expected: Option<NetArch>) -> Result<(Self, serde_json::Value)> {
        if !path.exists() {
            return Err(Error::MissingWeights(path.to_path_buf()));
        }
        let manifest = read_manifest(path)?;
        if let Some(e) = expected {
            if e != manifest.arch {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    msg: format!(
                        "architecture mismatch: file is {}x{}, expected {}x{}",
                        manifest.arch.m_max, manifest.arch.n_max, e.m_max, e.n_max
                    ),
                });
            }
        }
        let net = Self::from_tensors(manifest.arch, &manifest.tensors).map_err(|msg| Error::Manifest { path: path.to_path_buf(), msg })?;
        Ok((net, manifest.meta))
    }
}
