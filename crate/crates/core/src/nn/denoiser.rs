use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;

use super::conv::{ConvLayer, MapShape};
use super::scalar::Scalar;
use crate::rng::{rng_from_seed, stream, sub_seed};
use crate::{Error, Result};

/// Feature-map width of the hidden layers.
pub const HIDDEN_WIDTH: usize = 64;
/// Number of residual blocks.
pub const NUM_BLOCKS: usize = 3;
/// Total number of convolution layers.
pub const NUM_LAYERS: usize = 2 + 2 * NUM_BLOCKS + 1;
/// Negative slope of the leaky ReLU in the head.
pub const LEAKY_SLOPE: f64 = 0.2;

const HEAD_HIDDEN: usize = NUM_LAYERS - 2;
const HEAD_OUT: usize = NUM_LAYERS - 1;

/// Rows per pass in unrecorded forward calls; keeps the im2col buffer cache-sized.
const FORWARD_CHUNK: usize = 32;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Convolutional denoiser `R_Θ` acting on real channel vectors of length `2·S·S̄`.
///
/// A vector is viewed as `2S` planes of `√S̄ × √S̄` (real parts of every
/// subarray, then imaginary parts). The planes are lifted to 64 maps by a
/// `3×3` convolution, pass three residual blocks `x + relu(conv(relu(conv(x))))`,
/// then a `1×1` convolution with leaky ReLU and a final `1×1` convolution back
/// to `2S` planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser<T> {
    num_subarrays: usize,
    side: usize,
    layers: Vec<ConvLayer<T>>,
    lipschitz_estimate: Option<f64>,
    target_beta: f64,
    version: u64,
}

/// `f32` weights, the canonical stored precision.
pub type DenoiserWeights = Denoiser<f32>;

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<ConvLayer<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Iterates over every gradient entry in parameter order.
    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weight().iter().chain(l.bias()))
    }

    pub fn scale(&mut self, factor: T) {
        for l in &mut self.layers {
            l.weight_mut().iter_mut().for_each(|w| *w *= factor);
            l.bias_mut().iter_mut().for_each(|w| *w *= factor);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| *v == T::ZERO)
    }
}

/// Activations recorded during one forward pass, enough to run the backward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    version: u64,
    rows: usize,
    input: Vec<T>,
    trunk: Vec<Vec<T>>,
    hidden: Vec<Vec<T>>,
    branch: Vec<Vec<T>>,
    head: Vec<T>,
}

impl<T: Scalar> Tape<T> {
    /// Number of samples in the recorded batch.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Bytes of activation storage held by the tape.
    pub fn recorded_bytes(&self) -> usize {
        let elems = self.input.len()
            + self.head.len()
            + [&self.trunk, &self.hidden, &self.branch].iter().flat_map(|v| v.iter()).map(Vec::len).sum::<usize>();
        elems * std::mem::size_of::<T>()
    }
}

pub(crate) fn relu<T: Scalar>(x: &mut [T]) {
    for v in x {
        *v = v.max(T::ZERO);
    }
}

pub(crate) fn leaky<T: Scalar>(x: &mut [T]) {
    // slope < 1, so max(v, slope·v) picks v for v ≥ 0 and slope·v otherwise
    let slope = T::from_f64(LEAKY_SLOPE);
    for v in x {
        *v = v.max(slope * *v);
    }
}

/// Zeroes `grad` wherever the recorded activation is not positive.
fn mask_inactive<T: Scalar>(grad: &mut [T], act: &[T]) {
    for (d, a) in grad.iter_mut().zip(act) {
        *d = if *a > T::ZERO { *d } else { T::ZERO };
    }
}

fn add_into<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += *b;
    }
}

impl<T: Scalar> Denoiser<T> {
    fn shape_for(num_subarrays: usize, aes_per_subarray: usize) -> Result<usize> {
        if num_subarrays == 0 {
            return Err(Error::arg("number of subarrays must be positive"));
        }
        let side = (aes_per_subarray as f64).sqrt().round() as usize;
        if side == 0 || side * side != aes_per_subarray {
            return Err(Error::arg(format!(
                "elements per subarray must be a positive perfect square, got {aes_per_subarray}"
            )));
        }
        Ok(side)
    }

    /// All-zero network: every kernel and bias is zero.
    pub fn zeros(num_subarrays: usize, aes_per_subarray: usize) -> Result<Self> {
        let side = Self::shape_for(num_subarrays, aes_per_subarray)?;
        let c = 2 * num_subarrays;
        let w = HIDDEN_WIDTH;
        let mut layers = vec![ConvLayer::zeros(c, w, 3)?];
        for _ in 0..2 * NUM_BLOCKS {
            layers.push(ConvLayer::zeros(w, w, 3)?);
        }
        layers.push(ConvLayer::zeros(w, w, 1)?);
        layers.push(ConvLayer::zeros(w, c, 1)?);
        Ok(Self {
            num_subarrays,
            side,
            layers,
            lipschitz_estimate: None,
            target_beta: super::DEFAULT_BETA,
            version: fresh_version(),
        })
    }

    /// He-uniform kernels `U(±√(6/fan_in))`, zero biases.
    pub fn he_uniform(num_subarrays: usize, aes_per_subarray: usize, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(num_subarrays, aes_per_subarray)?;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let mut rng = rng_from_seed(sub_seed(seed, stream::INIT, i as u64));
            let bound = (6.0 / layer.fan_in() as f64).sqrt();
            for w in layer.weight_mut() {
                *w = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    /// A network that computes `scale · x` exactly.
    ///
    /// The lift copies `x` and `-x` into the first `4S` maps, the residual
    /// branches are zero, and the head recombines
    /// `(leaky(x) − leaky(−x)) / (1 + slope) = x`.
    pub fn scaled_identity(num_subarrays: usize, aes_per_subarray: usize, scale: f64) -> Result<Self> {
        let mut net = Self::zeros(num_subarrays, aes_per_subarray)?;
        let c = 2 * num_subarrays;
        if 2 * c > HIDDEN_WIDTH {
            return Err(Error::arg("too many subarrays for the identity construction"));
        }
        let w = HIDDEN_WIDTH;
        // centre tap of a 3×3 kernel is row block 4 in (tap, in, out) layout
        let lift = net.layers[0].weight_mut();
        for k in 0..c {
            lift[(4 * c + k) * w + k] = T::ONE;
            lift[(4 * c + k) * w + c + k] = -T::ONE;
        }
        let hidden = net.layers[HEAD_HIDDEN].weight_mut();
        for k in 0..2 * c {
            hidden[k * w + k] = T::ONE;
        }
        let gain = T::from_f64(scale / (1.0 + LEAKY_SLOPE));
        let out = net.layers[HEAD_OUT].weight_mut();
        for k in 0..c {
            out[k * c + k] = gain;
            out[(c + k) * c + k] = -gain;
        }
        Ok(net)
    }

    pub fn num_subarrays(&self) -> usize {
        self.num_subarrays
    }

    pub fn aes_per_subarray(&self) -> usize {
        self.side * self.side
    }

    /// Length of the real vectors the network maps.
    pub fn dim(&self) -> usize {
        2 * self.num_subarrays * self.side * self.side
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    /// Replaces layer `index`; shapes must match the fixed topology.
    pub fn set_layer(&mut self, index: usize, layer: ConvLayer<T>) -> Result<()> {
        let cur = self.layers.get(index).ok_or_else(|| Error::arg(format!("layer index {index} out of range")))?;
        if (cur.in_channels(), cur.out_channels(), cur.kernel_size())
            != (layer.in_channels(), layer.out_channels(), layer.kernel_size())
        {
            return Err(Error::arg(format!("layer {index} shape does not match the topology")));
        }
        self.layers[index] = layer;
        self.version = fresh_version();
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(ConvLayer::num_params).sum()
    }

    pub fn lipschitz_estimate(&self) -> Option<f64> {
        self.lipschitz_estimate
    }

    pub fn set_lipschitz_estimate(&mut self, l: Option<f64>) {
        self.lipschitz_estimate = l;
    }

    pub fn target_beta(&self) -> f64 {
        self.target_beta
    }

    pub fn set_target_beta(&mut self, beta: f64) {
        self.target_beta = beta;
    }

    /// Mutable view of every parameter in layer order (kernel then bias).
    /// Invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.version = fresh_version();
        self.layers.iter_mut().flat_map(|l| {
            let (w, b) = l.split_params_mut();
            w.iter_mut().chain(b.iter_mut())
        })
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weight().iter().chain(l.bias()))
    }

    /// Multiplies every kernel (not the biases) by `factor`.
    pub fn scale_kernels(&mut self, factor: f64) {
        let f = T::from_f64(factor);
        for l in &mut self.layers {
            l.weight_mut().iter_mut().for_each(|w| *w *= f);
        }
        self.version = fresh_version();
    }

    /// Zero gradients shaped like this network.
    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer::zeros(l.in_channels(), l.out_channels(), l.kernel_size()).expect("valid shape"))
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Denoiser<U> {
        Denoiser {
            num_subarrays: self.num_subarrays,
            side: self.side,
            layers: self.layers.iter().map(ConvLayer::cast).collect(),
            lipschitz_estimate: self.lipschitz_estimate,
            target_beta: self.target_beta,
            version: fresh_version(),
        }
    }

    fn map_shape(&self, rows: usize) -> MapShape {
        MapShape { batch: rows, side: self.side }
    }

    fn check_batch(&self, input: &[T], rows: usize) -> Result<()> {
        Error::check_len("denoiser input", rows * self.dim(), input.len())
    }

    /// Sample-major planar layout to NHWC.
    fn to_nhwc(&self, input: &[T], rows: usize) -> Vec<T> {
        let (c, p) = (2 * self.num_subarrays, self.side * self.side);
        let mut out = vec![T::ZERO; input.len()];
        for b in 0..rows {
            let src = &input[b * c * p..(b + 1) * c * p];
            let dst = &mut out[b * c * p..(b + 1) * c * p];
            for ch in 0..c {
                for px in 0..p {
                    dst[px * c + ch] = src[ch * p + px];
                }
            }
        }
        out
    }

    fn from_nhwc(&self, input: &[T], rows: usize) -> Vec<T> {
        let (c, p) = (2 * self.num_subarrays, self.side * self.side);
        let mut out = vec![T::ZERO; input.len()];
        for b in 0..rows {
            let src = &input[b * c * p..(b + 1) * c * p];
            let dst = &mut out[b * c * p..(b + 1) * c * p];
            for ch in 0..c {
                for px in 0..p {
                    dst[ch * p + px] = src[px * c + ch];
                }
            }
        }
        out
    }

    fn run(&self, input: &[T], rows: usize, mut tape: Option<&mut Tape<T>>) -> Vec<T> {
        let shape = self.map_shape(rows);
        let x = self.to_nhwc(input, rows);
        let mut scratch = Vec::new();
        let mut f = self.layers[0].forward(&x, shape, &mut scratch);
        if let Some(t) = tape.as_deref_mut() {
            t.input = x;
        }
        for blk in 0..NUM_BLOCKS {
            let mut q = self.layers[1 + 2 * blk].forward(&f, shape, &mut scratch);
            relu(&mut q);
            let mut s = self.layers[2 + 2 * blk].forward(&q, shape, &mut scratch);
            relu(&mut s);
            let mut next = s.clone();
            add_into(&mut next, &f);
            if let Some(t) = tape.as_deref_mut() {
                t.trunk.push(std::mem::take(&mut f));
                t.hidden.push(q);
                t.branch.push(s);
            }
            f = next;
        }
        let mut g = self.layers[HEAD_HIDDEN].forward(&f, shape, &mut scratch);
        leaky(&mut g);
        let out = self.layers[HEAD_OUT].forward(&g, shape, &mut scratch);
        if let Some(t) = tape {
            t.trunk.push(f);
            t.head = g;
        }
        self.from_nhwc(&out, rows)
    }

    /// Applies the network to one vector of length [`Denoiser::dim`].
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.forward_batch(input, 1)
    }

    /// Applies the network to `rows` vectors stored back to back.
    pub fn forward_batch(&self, input: &[T], rows: usize) -> Result<Vec<T>> {
        self.check_batch(input, rows)?;
        if rows <= FORWARD_CHUNK {
            return Ok(self.run(input, rows, None));
        }
        let mut out = Vec::with_capacity(input.len());
        for chunk in input.chunks(FORWARD_CHUNK * self.dim()) {
            out.extend(self.run(chunk, chunk.len() / self.dim(), None));
        }
        Ok(out)
    }

    /// Forward pass that also records the activations needed by [`Denoiser::backward`].
    pub fn forward_recorded(&self, input: &[T], rows: usize) -> Result<(Vec<T>, Tape<T>)> {
        self.check_batch(input, rows)?;
        let mut tape = Tape {
            version: self.version,
            rows,
            input: Vec::new(),
            trunk: Vec::with_capacity(NUM_BLOCKS + 1),
            hidden: Vec::with_capacity(NUM_BLOCKS),
            branch: Vec::with_capacity(NUM_BLOCKS),
            head: Vec::new(),
        };
        let out = self.run(input, rows, Some(&mut tape));
        Ok((out, tape))
    }

    /// Reverse pass: given `∂loss/∂output` for the recorded batch, returns the
    /// parameter gradients (summed over the batch) and `∂loss/∂input`.
    pub fn backward(&self, tape: &Tape<T>, upstream: &[T]) -> Result<(Gradients<T>, Vec<T>)> {
        if tape.version != self.version {
            return Err(Error::State("tape was recorded with different weights".into()));
        }
        let rows = tape.rows;
        Error::check_len("upstream gradient", rows * self.dim(), upstream.len())?;
        let shape = self.map_shape(rows);
        let mut grads = self.zero_gradients();
        let up = self.to_nhwc(upstream, rows);
        let mut scratch = Vec::new();

        let mut dg = self.layers[HEAD_OUT]
            .backward(&tape.head, shape, &up, &mut grads.layers[HEAD_OUT], true, &mut scratch)
            .expect("requested");
        let slope = T::from_f64(LEAKY_SLOPE);
        for (d, g) in dg.iter_mut().zip(&tape.head) {
            *d = if *g < T::ZERO { slope * *d } else { *d };
        }
        let mut df = self.layers[HEAD_HIDDEN]
            .backward(&tape.trunk[NUM_BLOCKS], shape, &dg, &mut grads.layers[HEAD_HIDDEN], true, &mut scratch)
            .expect("requested");

        for blk in (0..NUM_BLOCKS).rev() {
            let mut dr = df.clone();
            mask_inactive(&mut dr, &tape.branch[blk]);
            let (i1, i2) = (1 + 2 * blk, 2 + 2 * blk);
            let mut dq = self.layers[i2]
                .backward(&tape.hidden[blk], shape, &dr, &mut grads.layers[i2], true, &mut scratch)
                .expect("requested");
            mask_inactive(&mut dq, &tape.hidden[blk]);
            let dtrunk = self.layers[i1]
                .backward(&tape.trunk[blk], shape, &dq, &mut grads.layers[i1], true, &mut scratch)
                .expect("requested");
            add_into(&mut df, &dtrunk);
        }
        let dx = self.layers[0]
            .backward(&tape.input, shape, &df, &mut grads.layers[0], true, &mut scratch)
            .expect("requested");
        Ok((grads, self.from_nhwc(&dx, rows)))
    }
}
