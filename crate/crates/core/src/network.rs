//! The two-stage fully convolutional topology: one convolutional pathway per
//! input contrast, channel concatenation, a fusion pathway, and a
//! single-channel membership head. Every convolution is followed by a ReLU.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{conv2d_backward, conv2d_forward, relu, relu_backward, Conv2DLayer, Scalar, Tensor4};

pub const MIN_DEPTH: usize = 2;
pub const MAX_DEPTH: usize = 6;
pub const DEFAULT_DEPTH: usize = 5;
pub const LAST_BANK_FILTERS: usize = 8;

/// One convolution + ReLU stage of a pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterBank {
    pub filters: usize,
    pub kernel: usize,
}

impl FilterBank {
    pub fn pad(&self) -> usize {
        (self.kernel - 1) / 2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathwayConfig {
    pub banks: Vec<FilterBank>,
}

impl PathwayConfig {
    /// `depth` banks whose filter counts halve down to 8, with kernels
    /// alternating 3, 5, 3, ...
    pub fn with_depth(depth: usize) -> Result<Self> {
        Self::with_depth_and_last(depth, LAST_BANK_FILTERS)
    }

    /// Same pattern as [`PathwayConfig::with_depth`] ending at `last` filters.
    pub fn with_depth_and_last(depth: usize, last: usize) -> Result<Self> {
        check_depth(depth)?;
        if last == 0 {
            return Err(Error::invalid("last filter bank needs at least one filter"));
        }
        let banks = (0..depth)
            .map(|i| FilterBank {
                filters: last << (depth - 1 - i),
                kernel: if i % 2 == 0 { 3 } else { 5 },
            })
            .collect();
        Ok(Self { banks })
    }

    pub fn depth(&self) -> usize {
        self.banks.len()
    }

    pub fn out_channels(&self) -> usize {
        self.banks.last().map_or(0, |b| b.filters)
    }

    pub fn validate(&self) -> Result<()> {
        check_depth(self.depth())?;
        for (i, b) in self.banks.iter().enumerate() {
            if b.filters == 0 {
                return Err(Error::invalid(format!("bank {i} has zero filters")));
            }
            if b.kernel % 2 == 0 {
                return Err(Error::invalid(format!("bank {i} kernel {} is not odd", b.kernel)));
            }
        }
        Ok(())
    }

    /// Sum of per-bank padding, i.e. how far one output voxel can see.
    pub fn receptive_radius(&self) -> usize {
        self.banks.iter().map(FilterBank::pad).sum()
    }
}

impl Default for PathwayConfig {
    fn default() -> Self {
        Self::with_depth(DEFAULT_DEPTH).expect("default depth is valid")
    }
}

fn check_depth(depth: usize) -> Result<()> {
    if !(MIN_DEPTH..=MAX_DEPTH).contains(&depth) {
        return Err(Error::invalid(format!(
            "pathway depth {depth} outside {MIN_DEPTH}..={MAX_DEPTH}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    /// Number of input contrasts, one pathway each (MPRAGE and FLAIR by default).
    pub num_contrasts: usize,
    pub contrast_pathway: PathwayConfig,
    pub fusion_pathway: PathwayConfig,
    pub head_kernel: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_contrasts: 2,
            contrast_pathway: PathwayConfig::default(),
            fusion_pathway: PathwayConfig::default(),
            head_kernel: 3,
        }
    }
}

impl NetworkConfig {
    /// Both pathways built with [`PathwayConfig::with_depth_and_last`].
    pub fn with_depth(num_contrasts: usize, depth: usize, last: usize) -> Result<Self> {
        let pathway = PathwayConfig::with_depth_and_last(depth, last)?;
        Ok(Self {
            num_contrasts,
            contrast_pathway: pathway.clone(),
            fusion_pathway: pathway,
            head_kernel: 3,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_contrasts == 0 {
            return Err(Error::invalid("network needs at least one contrast"));
        }
        self.contrast_pathway.validate()?;
        self.fusion_pathway.validate()?;
        if self.head_kernel % 2 == 0 {
            return Err(Error::invalid(format!("head kernel {} is not odd", self.head_kernel)));
        }
        Ok(())
    }

    pub fn fusion_in_channels(&self) -> usize {
        self.contrast_pathway.out_channels() * self.num_contrasts
    }

    /// Radius of the input window that influences one output voxel.
    pub fn receptive_radius(&self) -> usize {
        self.contrast_pathway.receptive_radius()
            + self.fusion_pathway.receptive_radius()
            + (self.head_kernel - 1) / 2
    }

    /// `(c_in, c_out, kernel)` for every layer in canonical order: contrast
    /// pathways in contrast order, then fusion banks, then the head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize, usize)> {
        let mut shapes = Vec::new();
        for _ in 0..self.num_contrasts {
            let mut c_in = 1;
            for b in &self.contrast_pathway.banks {
                shapes.push((c_in, b.filters, b.kernel));
                c_in = b.filters;
            }
        }
        let mut c_in = self.fusion_in_channels();
        for b in &self.fusion_pathway.banks {
            shapes.push((c_in, b.filters, b.kernel));
            c_in = b.filters;
        }
        shapes.push((c_in, 1, self.head_kernel));
        shapes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterCount {
    pub weights: usize,
    pub biases: usize,
}

/// A 2D scalar field, row-major `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "plane {height}x{width} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![T::zero(); height * width],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    layers: Vec<Conv2DLayer<T>>,
}

/// Activations retained by [`Network::forward_training`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// `inputs[l]` is the input to layer `l`; `outputs[l]` its post-ReLU output.
    inputs: Vec<Tensor4<T>>,
    outputs: Vec<Tensor4<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Predicted membership (head output, unclamped).
    pub fn prediction(&self) -> &Tensor4<T> {
        self.outputs.last().expect("network has a head layer")
    }

    /// Post-ReLU output of layer `l` in canonical order.
    pub fn layer_output(&self, l: usize) -> &Tensor4<T> {
        &self.outputs[l]
    }
}

/// Per-layer weight and bias gradients, canonical layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads<T> {
    pub weights: Vec<Tensor4<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> NetworkGrads<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Tensor4::zeros(l.c_out(), l.c_in(), l.kernel(), l.kernel())).collect(),
            biases: net.layers.iter().map(|l| vec![T::zero(); l.c_out()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += *y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for w in &mut self.weights {
            for x in w.as_mut_slice() {
                *x *= factor;
            }
        }
        for b in &mut self.biases {
            for x in b {
                *x *= factor;
            }
        }
    }

    /// Flat views in the same block order as [`Network::parameter_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[T]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

impl<T: Scalar> Network<T> {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for (c_in, c_out, k) in config.layer_shapes() {
            let fan_in = (c_in * k * k) as f64;
            let fan_out = (c_out * k * k) as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit)
                .map_err(|e| Error::invalid(format!("initializer range: {e}")))?;
            let weights = Tensor4::from_fn([c_out, c_in, k, k], |_| T::from_f64_lossy(dist.sample(&mut rng)));
            layers.push(Conv2DLayer::new(weights, vec![T::zero(); c_out])?);
        }
        Ok(Self { config, layers })
    }

    /// Assembles a network from explicit layers, checking them against `config`.
    pub fn from_layers(config: NetworkConfig, layers: Vec<Conv2DLayer<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::shape(format!(
                "config describes {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (i, ((c_in, c_out, k), l)) in shapes.iter().zip(&layers).enumerate() {
            if (l.c_in(), l.c_out(), l.kernel()) != (*c_in, *c_out, *k) {
                return Err(Error::shape(format!(
                    "layer {i} is {}->{} k{}, config expects {c_in}->{c_out} k{k}",
                    l.c_in(),
                    l.c_out(),
                    l.kernel()
                )));
            }
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Conv2DLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Conv2DLayer<T>] {
        &mut self.layers
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            layers: self.layers.iter().map(Conv2DLayer::cast).collect(),
        }
    }

    fn pathway_layers(&self, contrast: usize) -> std::ops::Range<usize> {
        let d = self.config.contrast_pathway.depth();
        contrast * d..(contrast + 1) * d
    }

    fn fusion_layers(&self) -> std::ops::Range<usize> {
        let start = self.config.num_contrasts * self.config.contrast_pathway.depth();
        start..self.layers.len()
    }

    pub fn count_parameters(&self) -> ParameterCount {
        ParameterCount {
            weights: self.layers.iter().map(Conv2DLayer::weight_count).sum(),
            biases: self.layers.iter().map(Conv2DLayer::c_out).sum(),
        }
    }

    /// Weight counts of each bank in the pathway of `contrast`.
    pub fn pathway_weight_counts(&self, contrast: usize) -> Vec<usize> {
        self.layers[self.pathway_layers(contrast)]
            .iter()
            .map(Conv2DLayer::weight_count)
            .collect()
    }

    /// Parameter blocks (weights, bias per layer) for the optimizer.
    pub fn parameter_blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut blocks = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            let (w, b) = l.params_mut();
            blocks.push(w);
            blocks.push(b);
        }
        blocks
    }

    pub fn parameter_block_lens(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight_count(), l.c_out()])
            .collect()
    }

    fn check_inputs(&self, batch: &[Tensor4<T>]) -> Result<[usize; 4]> {
        if batch.len() != self.config.num_contrasts {
            return Err(Error::shape(format!(
                "network expects {} contrasts, got {}",
                self.config.num_contrasts,
                batch.len()
            )));
        }
        let dims = batch[0].dims();
        if dims[1] != 1 {
            return Err(Error::shape("each contrast must be a single-channel tensor"));
        }
        if batch.iter().any(|t| t.dims() != dims) {
            return Err(Error::shape("contrast batches differ in dims"));
        }
        Ok(dims)
    }

    /// Forward pass keeping every activation needed by [`Network::backward`].
    /// The prediction is the unclamped head output.
    pub fn forward_training(&self, batch: &[Tensor4<T>]) -> Result<ForwardCache<T>> {
        self.check_inputs(batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut pathway_out = Vec::with_capacity(self.config.num_contrasts);
        for (p, contrast) in batch.iter().enumerate() {
            let mut x = contrast.clone();
            for l in self.pathway_layers(p) {
                let y = relu(&conv2d_forward(&x, &self.layers[l])?);
                inputs.push(x);
                outputs.push(y.clone());
                x = y;
            }
            pathway_out.push(x);
        }
        let mut x = Tensor4::concat_channels(&pathway_out)?;
        for l in self.fusion_layers() {
            let y = relu(&conv2d_forward(&x, &self.layers[l])?);
            inputs.push(x);
            outputs.push(y.clone());
            x = y;
        }
        Ok(ForwardCache { inputs, outputs })
    }

    /// Parameter gradients of `Σ prediction · grad_output`.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_output: &Tensor4<T>) -> Result<NetworkGrads<T>> {
        let n_layers = self.layers.len();
        let mut weights = vec![None; n_layers];
        let mut biases = vec![None; n_layers];
        let mut g = grad_output.clone();
        for l in self.fusion_layers().rev() {
            let pre = relu_backward(&cache.outputs[l], &g)?;
            let grads = conv2d_backward(&cache.inputs[l], &self.layers[l], &pre)?;
            weights[l] = Some(grads.weights);
            biases[l] = Some(grads.bias);
            g = grads.input;
        }
        let split = vec![self.config.contrast_pathway.out_channels(); self.config.num_contrasts];
        for (p, mut g) in g.split_channels(&split)?.into_iter().enumerate() {
            for l in self.pathway_layers(p).rev() {
                let pre = relu_backward(&cache.outputs[l], &g)?;
                let grads = conv2d_backward(&cache.inputs[l], &self.layers[l], &pre)?;
                weights[l] = Some(grads.weights);
                biases[l] = Some(grads.bias);
                g = grads.input;
            }
        }
        Ok(NetworkGrads {
            weights: weights.into_iter().map(|w| w.expect("every layer visited")).collect(),
            biases: biases.into_iter().map(|b| b.expect("every layer visited")).collect(),
        })
    }

    /// Unclamped forward pass without caching.
    pub fn forward(&self, batch: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        self.check_inputs(batch)?;
        let mut pathway_out = Vec::with_capacity(batch.len());
        for (p, contrast) in batch.iter().enumerate() {
            let mut x = contrast.clone();
            for l in self.pathway_layers(p) {
                x = relu(&conv2d_forward(&x, &self.layers[l])?);
            }
            pathway_out.push(x);
        }
        let mut x = Tensor4::concat_channels(&pathway_out)?;
        for l in self.fusion_layers() {
            x = relu(&conv2d_forward(&x, &self.layers[l])?);
        }
        Ok(x)
    }

    /// Membership of a whole slice of any size, clamped to `[0, 1]`.
    pub fn forward_slice(&self, slices: &[Plane<T>]) -> Result<Plane<T>> {
        let first = slices
            .first()
            .ok_or_else(|| Error::shape("forward_slice needs at least one contrast"))?;
        let (h, w) = (first.height, first.width);
        if slices.iter().any(|s| s.height != h || s.width != w) {
            return Err(Error::shape("contrast slices differ in dims"));
        }
        let batch = slices
            .iter()
            .map(|s| Tensor4::from_vec([1, 1, h, w], s.data.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = self.forward(&batch)?;
        Ok(Plane {
            height: h,
            width: w,
            data: out.into_vec().into_iter().map(|v| v.min(T::one())).collect(),
        })
    }

    /// [`Network::forward`] over a batch, evaluated in chunks of
    /// `chunk` items in parallel.
    pub fn forward_chunked(&self, batch: &[Tensor4<T>], chunk: usize) -> Result<Tensor4<T>> {
        let [n, _, h, w] = self.check_inputs(batch)?;
        let chunk = chunk.max(1);
        let starts: Vec<usize> = (0..n).step_by(chunk).collect();
        let parts = starts
            .par_iter()
            .map(|&s| {
                let idx: Vec<usize> = (s..(s + chunk).min(n)).collect();
                let sub: Vec<Tensor4<T>> = batch.iter().map(|t| t.select(&idx)).collect();
                self.forward(&sub)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(n * h * w);
        for p in parts {
            data.extend(p.into_vec());
        }
        Tensor4::from_vec([n, 1, h, w], data)
    }
}
