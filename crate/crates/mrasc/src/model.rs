//! The parallel two-path CNN stack and the multi-resolution fusion model.
//!
//! One stack per temporal resolution, identical configuration but
//! independent parameters. Each stack reduces an 80x80 log-Mel segment to
//! a 200-unit representation along two paths: path F collapses the
//! spectral axis while keeping time, path T does the rotated reduction.
//! Stack outputs are concatenated, optionally thinned by resolution
//! dropout, and fused through a 512-unit layer into class logits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsp::MelSegment;
use crate::nn::{
    checkpoint::CheckpointEntry, softmax, Conv2d, ConvCache, Dense, DenseCache, Dropout,
    DropoutCache, MaxPool2d, Mode, Param, PoolCache, Scalar, Tensor,
};
use crate::util::derive_seed;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape schedule violated: {0}")]
    Shape(String),
    #[error("input provides {got} resolutions, model expects {want}")]
    ResolutionMismatch { got: usize, want: usize },
    #[error("tuple is missing resolution {0}")]
    MissingResolution(usize),
    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),
}

/// Kernels and pool windows for one reduction path, layer by layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSpec {
    pub kernels: [(usize, usize); 4],
    pub pools: [(usize, usize); 4],
}

/// Configuration of one parallel stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub channels: [usize; 4],
    pub path_f: PathSpec,
    pub path_t: PathSpec,
    pub dense_units: usize,
}

impl StackConfig {
    /// The 80x80 geometry: first-layer kernels 10x23 / 21x10, kernels
    /// roughly halved layer over layer, three 2x2 pools and a final 5x1 /
    /// 1x5 pool mapping the paths to 2x10 / 10x2.
    pub fn standard(channels: [usize; 4]) -> Self {
        Self {
            input_h: 80,
            input_w: 80,
            channels,
            path_f: PathSpec {
                kernels: [(10, 23), (5, 11), (3, 5), (2, 5)],
                pools: [(2, 2), (2, 2), (2, 2), (5, 1)],
            },
            path_t: PathSpec {
                kernels: [(21, 10), (11, 5), (5, 3), (5, 2)],
                pools: [(2, 2), (2, 2), (2, 2), (1, 5)],
            },
            dense_units: 200,
        }
    }

    /// A small geometry for end-to-end gradient checks: 8x8 inputs with
    /// pools scaled down to reach 2x4 / 4x2.
    pub fn shrunken(channels: [usize; 4]) -> Self {
        Self {
            input_h: 8,
            input_w: 8,
            channels,
            path_f: PathSpec {
                kernels: [(3, 5), (3, 3), (3, 3), (2, 3)],
                pools: [(1, 1), (2, 1), (1, 2), (2, 1)],
            },
            path_t: PathSpec {
                kernels: [(5, 3), (3, 3), (3, 3), (3, 2)],
                pools: [(1, 1), (1, 2), (2, 1), (1, 2)],
            },
            dense_units: 16,
        }
    }

    /// Post-pool (h, w) after each layer of one path.
    fn schedule(&self, path: &PathSpec) -> Result<Vec<(usize, usize)>, ModelError> {
        let (mut h, mut w) = (self.input_h, self.input_w);
        let mut dims = Vec::with_capacity(4);
        for (i, &(ph, pw)) in path.pools.iter().enumerate() {
            if h % ph != 0 || w % pw != 0 {
                return Err(ModelError::Shape(format!(
                    "layer {i}: pool {ph}x{pw} does not divide {h}x{w}"
                )));
            }
            h /= ph;
            w /= pw;
            dims.push((h, w));
        }
        Ok(dims)
    }

    /// Validate the configuration and return the per-path shape schedules.
    ///
    /// At the standard 80x80 geometry this insists on the 2x10 / 10x2
    /// contract with intermediate dims 40x40, 20x20, 10x10, before any
    /// parameters are allocated.
    pub fn validate(&self) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>), ModelError> {
        let f = self.schedule(&self.path_f)?;
        let t = self.schedule(&self.path_t)?;
        let c4 = self.channels[3];
        let f_cells = c4 * f[3].0 * f[3].1;
        let t_cells = c4 * t[3].0 * t[3].1;
        if f_cells != t_cells {
            return Err(ModelError::Shape(format!(
                "paths feed unequal cell counts into the dense layer: {f_cells} vs {t_cells}"
            )));
        }
        if (self.input_h, self.input_w) == (80, 80) {
            let want = [(40, 40), (20, 20), (10, 10)];
            if f[..3] != want || t[..3] != want || f[3] != (2, 10) || t[3] != (10, 2) {
                return Err(ModelError::Shape(format!(
                    "80x80 stacks must reduce through 40x40, 20x20, 10x10 to 2x10 and 10x2; \
                     got {f:?} / {t:?}"
                )));
            }
        }
        Ok((f, t))
    }
}

impl Default for StackConfig {
    fn default() -> Self {
        Self::standard([16, 32, 64, 64])
    }
}

#[derive(Clone)]
struct Path<T> {
    convs: Vec<Conv2d<T>>,
    pools: Vec<MaxPool2d>,
}

impl<T: Scalar> Path<T> {
    fn new(spec: &PathSpec, channels: &[usize; 4], rng: &mut ChaCha8Rng) -> Self {
        let mut convs = Vec::with_capacity(4);
        let mut in_ch = 1;
        for (i, &(kh, kw)) in spec.kernels.iter().enumerate() {
            convs.push(Conv2d::new(in_ch, channels[i], kh, kw, rng));
            in_ch = channels[i];
        }
        let pools = spec
            .pools
            .iter()
            .map(|&(ph, pw)| MaxPool2d { ph, pw })
            .collect();
        Self { convs, pools }
    }
}

#[derive(Default)]
struct PathCache<T> {
    conv: Vec<ConvCache<T>>,
    pool: Vec<PoolCache>,
    /// post-ReLU, pre-pool activations (ReLU backward masks off these)
    relu_out: Vec<Tensor<T>>,
    /// post-pool activations (inputs to the next conv)
    pooled: Vec<Tensor<T>>,
}

impl<T: Scalar> PathCache<T> {
    fn ensure(&mut self, layers: usize) {
        self.conv.resize_with(layers, ConvCache::default);
        self.pool.resize_with(layers, PoolCache::default);
        self.relu_out.resize_with(layers, || Tensor::zeros(&[0]));
        self.pooled.resize_with(layers, || Tensor::zeros(&[0]));
    }
}

/// Forward/backward scratch for one stack; reuse across samples.
#[derive(Default)]
pub struct StackCache<T> {
    f: PathCache<T>,
    t: PathCache<T>,
    dense: DenseCache<T>,
    /// post-ReLU stack output, also the ReLU mask for backward
    out: Vec<T>,
}

/// One parallel two-path stack: 1 x H x W in, `dense_units` out.
#[derive(Clone)]
pub struct ParallelStack<T> {
    pub cfg: StackConfig,
    path_f: Path<T>,
    path_t: Path<T>,
    dense: Dense<T>,
    flat_f: usize,
    flat_t: usize,
}

impl<T: Scalar> ParallelStack<T> {
    pub fn new(cfg: StackConfig, seed: u64) -> Result<Self, ModelError> {
        let (sched_f, sched_t) = cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let path_f = Path::new(&cfg.path_f, &cfg.channels, &mut rng);
        let path_t = Path::new(&cfg.path_t, &cfg.channels, &mut rng);
        let c4 = cfg.channels[3];
        let flat_f = c4 * sched_f[3].0 * sched_f[3].1;
        let flat_t = c4 * sched_t[3].0 * sched_t[3].1;
        let dense = Dense::new(flat_f + flat_t, cfg.dense_units, &mut rng);
        Ok(Self {
            cfg,
            path_f,
            path_t,
            dense,
            flat_f,
            flat_t,
        })
    }

    /// Shapes of the pre-flatten feature maps, `(C, H, W)` per path.
    pub fn feature_map_dims(&self) -> ((usize, usize, usize), (usize, usize, usize)) {
        let (f, t) = self.cfg.validate().expect("validated at build");
        let c4 = self.cfg.channels[3];
        ((c4, f[3].0, f[3].1), (c4, t[3].0, t[3].1))
    }

    fn forward_path(path: &Path<T>, x: &Tensor<T>, cache: &mut PathCache<T>) -> Tensor<T> {
        cache.ensure(path.convs.len());
        let mut cur = x;
        for (i, (conv, pool)) in path.convs.iter().zip(&path.pools).enumerate() {
            let mut act = conv.forward(cur, &mut cache.conv[i]);
            crate::nn::relu_forward(act.data_mut());
            cache.relu_out[i] = act;
            cache.pooled[i] = pool.forward(&cache.relu_out[i], &mut cache.pool[i]);
            cur = &cache.pooled[i];
        }
        cache.pooled[path.convs.len() - 1].clone()
    }

    fn backward_path(path: &mut Path<T>, d_top: Tensor<T>, cache: &PathCache<T>) {
        let mut d = d_top;
        for i in (0..path.convs.len()).rev() {
            let mut d_act = path.pools[i].backward(&d, &cache.pool[i]);
            crate::nn::relu_backward(d_act.data_mut(), cache.relu_out[i].data());
            if i == 0 {
                path.convs[i].backward_no_input_grad(&d_act, &cache.conv[i]);
                return;
            }
            d = path.convs[i].backward(&d_act, &cache.conv[i]);
        }
    }

    /// `x`: 1 x H x W -> `dense_units` activations (post-ReLU).
    pub fn forward(&self, x: &Tensor<T>, cache: &mut StackCache<T>) -> Vec<T> {
        let ff = Self::forward_path(&self.path_f, x, &mut cache.f);
        let ft = Self::forward_path(&self.path_t, x, &mut cache.t);
        let mut flat = Vec::with_capacity(self.flat_f + self.flat_t);
        flat.extend_from_slice(ff.data());
        flat.extend_from_slice(ft.data());
        let mut out = self.dense.forward(&flat, &mut cache.dense);
        crate::nn::relu_forward(&mut out);
        cache.out = out.clone();
        out
    }

    pub fn backward(&mut self, d_out: &[T], cache: &StackCache<T>) {
        let mut d = d_out.to_vec();
        crate::nn::relu_backward(&mut d, &cache.out);
        let d_flat = self.dense.backward(&d, &cache.dense);
        let (df, dt) = d_flat.split_at(self.flat_f);
        let (fdims, tdims) = self.feature_map_dims();
        let d_f = Tensor::from_vec(&[fdims.0, fdims.1, fdims.2], df.to_vec());
        let d_t = Tensor::from_vec(&[tdims.0, tdims.1, tdims.2], dt.to_vec());
        Self::backward_path(&mut self.path_f, d_f, &cache.f);
        Self::backward_path(&mut self.path_t, d_t, &cache.t);
    }

    pub(crate) fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Param<T>),
    ) {
        for (tag, path) in [("f", &mut self.path_f), ("t", &mut self.path_t)] {
            for (i, conv) in path.convs.iter_mut().enumerate() {
                f(format!("{prefix}.{tag}.conv{i}.weight"), &mut conv.weight);
                f(format!("{prefix}.{tag}.conv{i}.bias"), &mut conv.bias);
            }
        }
        f(format!("{prefix}.dense.weight"), &mut self.dense.weight);
        f(format!("{prefix}.dense.bias"), &mut self.dense.bias);
    }
}

/// Training-time resolution dropout state.
#[derive(Debug, Clone, Default)]
pub struct ResDropCache {
    pub dropped: Vec<usize>,
    active: bool,
    blocks: usize,
    k: usize,
}

/// Zero `k` of the `blocks` equal-width blocks (chosen uniformly, seeded),
/// scale survivors by `blocks / (blocks - k)`. Identity at inference and
/// at `k = 0`.
pub fn resolution_dropout<T: Scalar>(
    x: &mut [T],
    blocks: usize,
    k: usize,
    mode: Mode,
    rng: &mut ChaCha8Rng,
    cache: &mut ResDropCache,
) {
    assert!(k < blocks, "must keep at least one block");
    assert_eq!(x.len() % blocks, 0);
    cache.dropped.clear();
    cache.blocks = blocks;
    cache.k = k;
    cache.active = mode == Mode::Train && k > 0;
    if !cache.active {
        return;
    }
    let mut idx: Vec<usize> = (0..blocks).collect();
    use rand::seq::SliceRandom;
    let (chosen, _) = idx.partial_shuffle(rng, k);
    cache.dropped.extend_from_slice(chosen);
    cache.dropped.sort_unstable();
    let scale = T::from_f64(blocks as f64 / (blocks - k) as f64);
    apply_block_mask(x, blocks, &cache.dropped, scale);
}

pub fn resolution_dropout_backward<T: Scalar>(d: &mut [T], cache: &ResDropCache) {
    if !cache.active {
        return;
    }
    let scale = T::from_f64(cache.blocks as f64 / (cache.blocks - cache.k) as f64);
    apply_block_mask(d, cache.blocks, &cache.dropped, scale);
}

fn apply_block_mask<T: Scalar>(x: &mut [T], blocks: usize, dropped: &[usize], scale: T) {
    let width = x.len() / blocks;
    for b in 0..blocks {
        let slice = &mut x[b * width..(b + 1) * width];
        if dropped.contains(&b) {
            slice.fill(T::ZERO);
        } else {
            for v in slice {
                *v *= scale;
            }
        }
    }
}

/// Configuration of the fusion model. With a single entry in `ffts` this
/// builds the single-resolution baseline: one stack plus the same
/// 512-unit head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiResConfig {
    /// FFT window per stack, narrowest first.
    pub ffts: Vec<usize>,
    pub stack: StackConfig,
    pub fusion_units: usize,
    pub classes: usize,
    /// conventional dropout before the class layer, in percent
    pub dropout_p_percent: usize,
    /// resolution-dropout count (0 disables)
    pub resdrop_k: usize,
}

impl MultiResConfig {
    pub fn new(ffts: Vec<usize>, stack: StackConfig, classes: usize) -> Self {
        Self {
            ffts,
            stack,
            classes,
            fusion_units: 512,
            dropout_p_percent: 25,
            resdrop_k: 0,
        }
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout_p_percent as f64 / 100.0
    }
}

impl Default for MultiResConfig {
    fn default() -> Self {
        Self::new(vec![512, 1024, 2048, 4096, 8192], StackConfig::default(), 15)
    }
}

/// Scratch for one forward/backward through the fusion model.
#[derive(Default)]
pub struct MultiResCache<T> {
    stacks: Vec<StackCache<T>>,
    pub(crate) concat: Vec<T>,
    rd: ResDropCache,
    fusion: DenseCache<T>,
    fusion_out: Vec<T>,
    drop: DropoutCache,
    head: DenseCache<T>,
}

/// The multi-resolution fusion model (or, with one resolution, the
/// single-resolution baseline).
#[derive(Clone)]
pub struct MultiResModel<T> {
    pub cfg: MultiResConfig,
    stacks: Vec<ParallelStack<T>>,
    fusion: Dense<T>,
    head: Dense<T>,
    dropout: Dropout,
}

impl<T: Scalar> MultiResModel<T> {
    pub fn new(cfg: MultiResConfig, seed: u64) -> Result<Self, ModelError> {
        assert!(!cfg.ffts.is_empty());
        assert!(
            cfg.resdrop_k < cfg.ffts.len(),
            "resolution dropout must keep a block"
        );
        let mut stacks = Vec::with_capacity(cfg.ffts.len());
        for (i, _) in cfg.ffts.iter().enumerate() {
            // identical configuration, independent parameters
            stacks.push(ParallelStack::new(
                cfg.stack.clone(),
                derive_seed(seed, &["stack", &i.to_string()]),
            )?);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["fusion"]));
        let concat_dim = cfg.ffts.len() * cfg.stack.dense_units;
        let fusion = Dense::new(concat_dim, cfg.fusion_units, &mut rng);
        let head = Dense::new(cfg.fusion_units, cfg.classes, &mut rng);
        let dropout = Dropout::new(cfg.dropout_p());
        Ok(Self {
            cfg,
            stacks,
            fusion,
            head,
            dropout,
        })
    }

    pub fn resolutions(&self) -> usize {
        self.cfg.ffts.len()
    }

    pub fn stack(&self, i: usize) -> &ParallelStack<T> {
        &self.stacks[i]
    }

    pub fn stack_mut(&mut self, i: usize) -> &mut ParallelStack<T> {
        &mut self.stacks[i]
    }

    /// Forward pass on one aligned sample: one `1 x H x W` tensor per
    /// resolution, narrowest first. Returns class logits.
    pub fn forward(
        &self,
        inputs: &[Tensor<T>],
        mode: Mode,
        rng: &mut ChaCha8Rng,
        cache: &mut MultiResCache<T>,
    ) -> Result<Vec<T>, ModelError> {
        if inputs.len() != self.stacks.len() {
            return Err(ModelError::ResolutionMismatch {
                got: inputs.len(),
                want: self.stacks.len(),
            });
        }
        cache.stacks.resize_with(self.stacks.len(), StackCache::default);
        cache.concat.clear();
        for ((stack, x), sc) in self.stacks.iter().zip(inputs).zip(&mut cache.stacks) {
            cache.concat.extend(stack.forward(x, sc));
        }
        resolution_dropout(
            &mut cache.concat,
            self.stacks.len(),
            self.cfg.resdrop_k,
            mode,
            rng,
            &mut cache.rd,
        );
        let mut fused = self.fusion.forward(&cache.concat, &mut cache.fusion);
        crate::nn::relu_forward(&mut fused);
        cache.fusion_out = fused.clone();
        self.dropout.forward(&mut fused, mode, rng, &mut cache.drop);
        Ok(self.head.forward(&fused, &mut cache.head))
    }

    /// Backward from the logit gradient; accumulates parameter gradients.
    pub fn backward(&mut self, d_logits: &[T], cache: &MultiResCache<T>) {
        let mut d_fused = self.head.backward(d_logits, &cache.head);
        self.dropout.backward(&mut d_fused, &cache.drop);
        crate::nn::relu_backward(&mut d_fused, &cache.fusion_out);
        let mut d_concat = self.fusion.backward(&d_fused, &cache.fusion);
        resolution_dropout_backward(&mut d_concat, &cache.rd);
        let width = self.cfg.stack.dense_units;
        for (i, stack) in self.stacks.iter_mut().enumerate() {
            stack.backward(&d_concat[i * width..(i + 1) * width], &cache.stacks[i]);
        }
    }

    /// Deterministic class probabilities (inference mode).
    pub fn predict(
        &self,
        inputs: &[Tensor<T>],
        cache: &mut MultiResCache<T>,
    ) -> Result<Vec<T>, ModelError> {
        // Eval mode disables every stochastic layer; the rng is never drawn
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = self.forward(inputs, Mode::Eval, &mut rng, cache)?;
        Ok(softmax(&logits))
    }

    /// Visit every parameter with a stable name, stacks first.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Param<T>)) {
        for (i, stack) in self.stacks.iter_mut().enumerate() {
            stack.visit_params(&format!("stack{i}"), f);
        }
        f("fusion.weight".into(), &mut self.fusion.weight);
        f("fusion.bias".into(), &mut self.fusion.bias);
        f("head.weight".into(), &mut self.head.weight);
        f("head.bias".into(), &mut self.head.bias);
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.value.len());
        n
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    /// Copy parameter values (not optimizer state) from another instance.
    pub fn copy_values_from(&mut self, other: &mut Self) {
        let mut values: Vec<Vec<T>> = Vec::new();
        other.visit_params(&mut |_, p| values.push(p.value.data().to_vec()));
        let mut i = 0;
        self.visit_params(&mut |_, p| {
            p.value.data_mut().copy_from_slice(&values[i]);
            i += 1;
        });
    }

    /// Add another instance's gradients into this one's, in
    /// parameter-traversal order.
    pub fn add_grads_from(&mut self, other: &mut Self) {
        let mut grads: Vec<Vec<T>> = Vec::new();
        other.visit_params(&mut |_, p| grads.push(p.grad.data().to_vec()));
        let mut i = 0;
        self.visit_params(&mut |_, p| {
            for (g, o) in p.grad.data_mut().iter_mut().zip(&grads[i]) {
                *g += *o;
            }
            i += 1;
        });
    }

    /// Re-run the forward pass watching for the first non-finite layer
    /// output; used for abort diagnostics when a loss goes NaN.
    pub fn first_nonfinite_layer(
        &self,
        inputs: &[Tensor<T>],
        cache: &mut MultiResCache<T>,
    ) -> Option<String> {
        cache.stacks.resize_with(self.stacks.len(), StackCache::default);
        let mut concat: Vec<T> = Vec::new();
        for (i, ((stack, x), sc)) in self
            .stacks
            .iter()
            .zip(inputs)
            .zip(&mut cache.stacks)
            .enumerate()
        {
            let out = stack.forward(x, sc);
            for (l, act) in sc.f.relu_out.iter().enumerate() {
                if !act.all_finite() {
                    return Some(format!("stack{i}.f.conv{l}"));
                }
            }
            for (l, act) in sc.t.relu_out.iter().enumerate() {
                if !act.all_finite() {
                    return Some(format!("stack{i}.t.conv{l}"));
                }
            }
            if !out.iter().all(|v| v.is_finite()) {
                return Some(format!("stack{i}.dense"));
            }
            concat.extend(out);
        }
        let mut fused = self.fusion.forward(&concat, &mut DenseCache::default());
        crate::nn::relu_forward(&mut fused);
        if !fused.iter().all(|v| v.is_finite()) {
            return Some("fusion".into());
        }
        let logits = self.head.forward(&fused, &mut DenseCache::default());
        if !logits.iter().all(|v| v.is_finite()) {
            return Some("head".into());
        }
        None
    }
}

impl MultiResModel<f32> {
    /// Named parameter snapshots for checkpointing, in traversal order.
    pub fn checkpoint_entries(&mut self) -> Vec<(String, Param<f32>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, p| out.push((name, p.clone())));
        out
    }

    /// Restore parameters and optimizer state from checkpoint entries.
    pub fn restore(&mut self, entries: &[CheckpointEntry]) -> Result<(), ModelError> {
        use std::collections::HashMap;
        let map: HashMap<&str, &CheckpointEntry> =
            entries.iter().map(|e| (e.name.as_str(), e)).collect();
        let mut err = None;
        self.visit_params(&mut |name, p| {
            if err.is_some() {
                return;
            }
            match map.get(name.as_str()) {
                Some(e) if e.value.dims() == p.value.dims() => {
                    p.value = e.value.clone();
                    p.m = e.m.clone();
                    p.v = e.v.clone();
                    p.t = e.t;
                }
                Some(e) => {
                    err = Some(ModelError::Checkpoint(format!(
                        "`{name}` has dims {:?}, checkpoint holds {:?}",
                        p.value.dims(),
                        e.value.dims()
                    )))
                }
                None => err = Some(ModelError::Checkpoint(format!("`{name}` missing"))),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Arrange one segment tuple as model inputs, narrowest resolution first.
/// Fails if any configured resolution is absent from the tuple.
pub fn tuple_inputs(
    tuple: &[&MelSegment],
    ffts: &[usize],
) -> Result<Vec<Tensor<f32>>, ModelError> {
    let mut inputs = Vec::with_capacity(ffts.len());
    for &fft in ffts {
        let seg = tuple
            .iter()
            .find(|s| s.profile.fft_size == fft)
            .ok_or(ModelError::MissingResolution(fft))?;
        inputs.push(Tensor::from_vec(
            &[1, seg.profile.mel_bands, seg.profile.frames_per_segment],
            seg.values.clone(),
        ));
    }
    Ok(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_cfg() -> StackConfig {
        StackConfig::standard([2, 3, 4, 4])
    }

    fn random_input(h: usize, w: usize, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(
            &[1, h, w],
            (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn standard_shape_schedule() {
        let cfg = StackConfig::default();
        let (f, t) = cfg.validate().unwrap();
        assert_eq!(f, vec![(40, 40), (20, 20), (10, 10), (2, 10)]);
        assert_eq!(t, vec![(40, 40), (20, 20), (10, 10), (10, 2)]);
    }

    #[test]
    fn bad_pool_schedule_is_a_build_error() {
        let mut cfg = StackConfig::default();
        cfg.path_f.pools[3] = (3, 1); // 10 % 3 != 0
        assert!(matches!(
            ParallelStack::<f32>::new(cfg, 0),
            Err(ModelError::Shape(_))
        ));
    }

    #[test]
    fn stack_forward_is_finite_200() {
        let stack = ParallelStack::<f32>::new(StackConfig::standard([2, 2, 2, 2]), 1).unwrap();
        let out = stack.forward(&random_input(80, 80, 2), &mut StackCache::default());
        assert_eq!(out.len(), 200);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn feature_maps_balance_both_paths() {
        let stack = ParallelStack::<f32>::new(StackConfig::default(), 1).unwrap();
        let ((cf, hf, wf), (ct, ht, wt)) = stack.feature_map_dims();
        assert_eq!((cf, hf, wf), (64, 2, 10));
        assert_eq!((ct, ht, wt), (64, 10, 2));
        assert_eq!(cf * hf * wf, 1280);
        assert_eq!(ct * ht * wt, 1280);
    }

    #[test]
    fn default_stack_param_count_matches_closed_form() {
        let cfg = StackConfig::default();
        let mut model =
            MultiResModel::<f32>::new(MultiResConfig::new(vec![512], cfg.clone(), 15), 3).unwrap();
        // closed form: conv weights + biases over both paths, plus dense
        let mut expect = 0usize;
        for kernels in [cfg.path_f.kernels, cfg.path_t.kernels] {
            let mut in_ch = 1;
            for (i, (kh, kw)) in kernels.iter().enumerate() {
                expect += cfg.channels[i] * in_ch * kh * kw + cfg.channels[i];
                in_ch = cfg.channels[i];
            }
        }
        expect += (1280 + 1280) * 200 + 200;
        assert_eq!(expect, 719_272); // frozen regression constant
        let fusion_and_head = 200 * 512 + 512 + 512 * 15 + 15;
        assert_eq!(model.param_count(), expect + fusion_and_head);
    }

    #[test]
    fn multires_output_is_a_distribution() {
        let cfg = MultiResConfig::new(vec![512, 1024], small_cfg(), 15);
        let model = MultiResModel::<f32>::new(cfg, 5).unwrap();
        let inputs = vec![random_input(80, 80, 3), random_input(80, 80, 4)];
        let probs = model.predict(&inputs, &mut MultiResCache::default()).unwrap();
        assert_eq!(probs.len(), 15);
        let sum: f32 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn tied_stacks_produce_equal_blocks() {
        let cfg =
            MultiResConfig::new(vec![512, 1024, 2048], StackConfig::standard([2, 2, 2, 2]), 5);
        let mut model = MultiResModel::<f32>::new(cfg, 9).unwrap();
        // tie all stacks to stack 0's parameters
        let mut reference: Vec<Vec<f32>> = Vec::new();
        model.stacks[0].visit_params("", &mut |_, p| reference.push(p.value.data().to_vec()));
        for i in 1..3 {
            let mut at = 0;
            model.stacks[i].visit_params("", &mut |_, p| {
                p.value.data_mut().copy_from_slice(&reference[at]);
                at += 1;
            });
        }
        let x = random_input(80, 80, 7);
        let inputs = vec![x.clone(), x.clone(), x];
        let mut cache = MultiResCache::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        model
            .forward(&inputs, Mode::Eval, &mut rng, &mut cache)
            .unwrap();
        let width = 200;
        let b0 = cache.concat[0..width].to_vec();
        assert_eq!(&b0[..], &cache.concat[width..2 * width]);
        assert_eq!(&b0[..], &cache.concat[2 * width..3 * width]);
    }

    #[test]
    fn resolution_dropout_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // k = 0 is the identity even in training
        let mut x: Vec<f32> = (0..1000).map(|i| i as f32 + 1.0).collect();
        let orig = x.clone();
        let mut cache = ResDropCache::default();
        resolution_dropout(&mut x, 5, 0, Mode::Train, &mut rng, &mut cache);
        assert_eq!(x, orig);

        // inference is the identity bit for bit
        let mut x = orig.clone();
        resolution_dropout(&mut x, 5, 2, Mode::Eval, &mut rng, &mut cache);
        assert_eq!(x, orig);

        // k = 2: exactly two aligned 200-blocks zeroed, survivors x 5/3
        let mut x = orig.clone();
        resolution_dropout(&mut x, 5, 2, Mode::Train, &mut rng, &mut cache);
        let zeros = x.iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 400);
        assert_eq!(cache.dropped.len(), 2);
        for b in 0..5 {
            let block = &x[b * 200..(b + 1) * 200];
            if cache.dropped.contains(&b) {
                assert!(block.iter().all(|&v| v == 0.0));
            } else {
                for (i, &v) in block.iter().enumerate() {
                    let want = orig[b * 200 + i] * 5.0 / 3.0;
                    assert!((v - want).abs() < 1e-4 * want.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn resolution_dropout_block_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut counts = [0usize; 5];
        let trials = 10_000;
        for _ in 0..trials {
            let mut x = vec![1.0f32; 50];
            let mut cache = ResDropCache::default();
            resolution_dropout(&mut x, 5, 2, Mode::Train, &mut rng, &mut cache);
            for &b in &cache.dropped {
                counts[b] += 1;
            }
        }
        for (b, &c) in counts.iter().enumerate() {
            let freq = c as f64 / trials as f64;
            assert!((freq - 0.4).abs() < 0.02, "block {b} dropped {freq}");
        }
    }

    #[test]
    fn predict_is_deterministic_and_uniform_with_zero_head() {
        let cfg = MultiResConfig::new(vec![512], small_cfg(), 15);
        let mut model = MultiResModel::<f32>::new(cfg, 2).unwrap();
        model.head.weight.value.fill(0.0);
        model.head.bias.value.fill(0.0);
        let inputs = vec![random_input(80, 80, 8)];
        let mut cache = MultiResCache::default();
        let a = model.predict(&inputs, &mut cache).unwrap();
        let b = model.predict(&inputs, &mut cache).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!((p - 1.0 / 15.0).abs() < 1e-7);
        }
    }

    #[test]
    fn stacks_do_not_share_parameters() {
        let cfg = MultiResConfig::new(vec![512, 1024], small_cfg(), 5);
        let mut model = MultiResModel::<f32>::new(cfg, 11).unwrap();
        let inputs = vec![random_input(80, 80, 1), random_input(80, 80, 2)];
        let mut cache = MultiResCache::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        model
            .forward(&inputs, Mode::Eval, &mut rng, &mut cache)
            .unwrap();
        let before = cache.concat.clone();

        // perturb stack 1's first conv weight; stack 0's block must not move
        model.stacks[1].path_f.convs[0].weight.value.data_mut()[0] += 10.0;
        model
            .forward(&inputs, Mode::Eval, &mut rng, &mut cache)
            .unwrap();
        assert_eq!(&before[0..200], &cache.concat[0..200]);
        assert_ne!(&before[200..400], &cache.concat[200..400]);
    }

    #[test]
    fn resolution_count_mismatch_is_an_input_error() {
        let cfg = MultiResConfig::new(vec![512, 1024], small_cfg(), 5);
        let model = MultiResModel::<f32>::new(cfg, 0).unwrap();
        let inputs = vec![random_input(80, 80, 1)];
        assert!(matches!(
            model.predict(&inputs, &mut MultiResCache::default()),
            Err(ModelError::ResolutionMismatch { got: 1, want: 2 })
        ));
    }

    #[test]
    fn batched_prediction_equals_per_sample() {
        // the engine is per-sample by construction; a "batch" is a loop.
        // assert the cache carries no state across samples.
        let cfg = MultiResConfig::new(vec![512], small_cfg(), 5);
        let model = MultiResModel::<f32>::new(cfg, 4).unwrap();
        let batch: Vec<Tensor<f32>> = (0..3).map(|i| random_input(80, 80, 20 + i)).collect();
        let mut shared = MultiResCache::default();
        let batched: Vec<Vec<f32>> = batch
            .iter()
            .map(|x| model.predict(std::slice::from_ref(x), &mut shared).unwrap())
            .collect();
        for (i, x) in batch.iter().enumerate() {
            let solo = model
                .predict(std::slice::from_ref(x), &mut MultiResCache::default())
                .unwrap();
            for (a, b) in solo.iter().zip(&batched[i]) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
