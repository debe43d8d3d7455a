use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::conv::ConvLayer;
use super::denoiser::{Denoiser, DenoiserWeights, HIDDEN_WIDTH, LEAKY_SLOPE, NUM_BLOCKS, NUM_LAYERS};
use crate::{io, Error, Result};

const WEIGHTS_FORMAT: &str = "hybrid-fpn/weights";
const ADAM_FORMAT: &str = "hybrid-fpn/adam";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    name: String,
    /// `[out, in, kh, kw]`
    kernel_shape: [usize; 4],
    bias_len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    num_subarrays: usize,
    aes_per_subarray: usize,
    hidden_width: usize,
    leaky_slope: f64,
    target_beta: f64,
    lipschitz_estimate: Option<f64>,
    layers: Vec<LayerEntry>,
    #[serde(default)]
    metadata: serde_json::Value,
}

fn layer_name(i: usize) -> String {
    match i {
        0 => "lift".into(),
        i if i <= 2 * NUM_BLOCKS => format!("block{}.conv{}", (i + 1) / 2, 2 - i % 2),
        i if i == NUM_LAYERS - 2 => "head.hidden".into(),
        _ => "head.out".into(),
    }
}

impl DenoiserWeights {
    /// Writes the JSON manifest line followed by each layer's kernel
    /// (`out × in × kh × kw`) and bias as little-endian `f32`.
    pub fn write_to(&self, w: impl Write, metadata: &serde_json::Value) -> Result<()> {
        let mut payload = Vec::with_capacity(self.num_params());
        let mut layers = Vec::new();
        for (i, l) in self.layers().iter().enumerate() {
            let k = l.kernel_size();
            layers.push(LayerEntry {
                name: layer_name(i),
                kernel_shape: [l.out_channels(), l.in_channels(), k, k],
                bias_len: l.bias().len(),
            });
            payload.extend(l.kernel_oihw());
            payload.extend_from_slice(l.bias());
        }
        let manifest = Manifest {
            format: WEIGHTS_FORMAT.into(),
            version: VERSION,
            num_subarrays: self.num_subarrays(),
            aes_per_subarray: self.aes_per_subarray(),
            hidden_width: HIDDEN_WIDTH,
            leaky_slope: LEAKY_SLOPE,
            target_beta: self.target_beta(),
            lipschitz_estimate: self.lipschitz_estimate(),
            layers,
            metadata: metadata.clone(),
        };
        io::write_container(w, &manifest, &payload)
    }

    /// Reads weights and the free-form metadata stored alongside them.
    pub fn read_from(r: impl Read) -> Result<(Self, serde_json::Value)> {
        let (m, payload): (Manifest, Vec<f32>) = io::read_container(r)?;
        if m.format != WEIGHTS_FORMAT || m.version != VERSION {
            return Err(Error::Format(format!("unsupported weights format {} v{}", m.format, m.version)));
        }
        if m.hidden_width != HIDDEN_WIDTH || m.leaky_slope != LEAKY_SLOPE || m.layers.len() != NUM_LAYERS {
            return Err(Error::Format("weights describe a different network topology".into()));
        }
        let mut net = Denoiser::zeros(m.num_subarrays, m.aes_per_subarray)?;
        let mut offset = 0;
        for (i, entry) in m.layers.iter().enumerate() {
            let [o, c, kh, kw] = entry.kernel_shape;
            let klen = o * c * kh * kw;
            let end = offset + klen + entry.bias_len;
            if kh != kw || end > payload.len() {
                return Err(Error::Format(format!("layer {} does not fit the payload", entry.name)));
            }
            let layer = ConvLayer::from_oihw(c, o, kh, &payload[offset..offset + klen], &payload[offset + klen..end])
                .map_err(|e| Error::Format(format!("layer {}: {e}", entry.name)))?;
            net.set_layer(i, layer).map_err(|e| Error::Format(e.to_string()))?;
            offset = end;
        }
        if offset != payload.len() {
            return Err(Error::Format(format!("{} trailing values in weights payload", payload.len() - offset)));
        }
        net.set_target_beta(m.target_beta);
        net.set_lipschitz_estimate(m.lipschitz_estimate);
        Ok((net, m.metadata))
    }

    pub fn save(&self, path: &Path, metadata: &serde_json::Value) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?), metadata)
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AdamHeader {
    format: String,
    version: u32,
    config: AdamConfig,
    step: u64,
    len: usize,
}

impl AdamState {
    /// Moments are stored as `m` then `v`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = AdamHeader {
            format: ADAM_FORMAT.into(),
            version: VERSION,
            config: self.config,
            step: self.step,
            len: self.m.len(),
        };
        let payload: Vec<f32> = self.m.iter().chain(&self.v).copied().collect();
        io::save(path, &header, &payload)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, payload): (AdamHeader, Vec<f32>) = io::load(path)?;
        if h.format != ADAM_FORMAT || h.version != VERSION {
            return Err(Error::Format(format!("unsupported optimizer format {} v{}", h.format, h.version)));
        }
        Error::check_len("optimizer payload", 2 * h.len, payload.len()).map_err(|e| Error::Format(e.to_string()))?;
        let (m, v) = payload.split_at(h.len);
        Ok(Self { config: h.config, step: h.step, m: m.to_vec(), v: v.to_vec() })
    }
}
