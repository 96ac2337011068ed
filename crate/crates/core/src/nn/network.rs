//! The n-branch similarity network: shared-weight branches, mean or concat
//! fusion, and a fully convolutional classification head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward, conv2d_valid, maxpool2, maxpool2_backward, relu_act, relu_backward,
    tanh_act, tanh_backward, ConvLayer,
};
use super::loss::{match_probability, softmax_xent};
use crate::error::{ensure, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Side of the square patch the branch architecture is built around.
pub const PATCH_SIDE: usize = 32;
/// Input pixels per output score along each axis (two 2x2 poolings).
pub const SCORE_STRIDE: usize = 4;
/// Samples per gradient chunk. Fixed so that the reduction order, and hence
/// the result, does not depend on the number of worker threads.
const GRAD_CHUNK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    Mean,
    Concat,
}

impl Fusion {
    pub fn tag(self) -> u8 {
        match self {
            Fusion::Mean => 0,
            Fusion::Concat => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Fusion::Mean),
            1 => Ok(Fusion::Concat),
            t => Err(Error::InvalidArgument(format!("unknown fusion tag {t}"))),
        }
    }
}

impl std::str::FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Fusion::Mean),
            "concat" => Ok(Fusion::Concat),
            other => Err(Error::InvalidArgument(format!(
                "fusion must be \"mean\" or \"concat\", got {other:?}"
            ))),
        }
    }
}

/// Layer widths. The defaults are the full architecture except for the head,
/// which defaults to 256 channels; 2048 is a valid setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub branch_channels: [usize; 2],
    pub head_width: usize,
    pub fusion: Fusion,
    /// Number of views the network is trained with.
    pub n_views: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            branch_channels: [32, 64],
            head_width: 256,
            fusion: Fusion::Mean,
            n_views: 5,
        }
    }
}

/// All learnable tensors. The branch layers exist once and are shared by
/// every input stream.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights<T = f32> {
    pub branch: [ConvLayer<T>; 2],
    pub head: [ConvLayer<T>; 3],
    pub fusion: Fusion,
    /// Views seen during training. Binding for concat fusion, informational for mean.
    pub n_views: usize,
}

/// Gradient buffers mirroring [`NetworkWeights`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<T = f32> {
    pub branch: [ConvLayer<T>; 2],
    pub head: [ConvLayer<T>; 3],
}

pub const LAYER_NAMES: [&str; 5] = ["branch.conv1", "branch.conv2", "head.conv1", "head.conv2", "head.conv3"];

fn zeros_like<T: Scalar>(l: &ConvLayer<T>) -> ConvLayer<T> {
    ConvLayer {
        kernels: Tensor::zeros(l.kernels.dims()),
        bias: Tensor::zeros(l.bias.dims()),
    }
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros_like(w: &NetworkWeights<T>) -> Self {
        GradientSet {
            branch: [zeros_like(&w.branch[0]), zeros_like(&w.branch[1])],
            head: [
                zeros_like(&w.head[0]),
                zeros_like(&w.head[1]),
                zeros_like(&w.head[2]),
            ],
        }
    }

    pub fn layers(&self) -> [&ConvLayer<T>; 5] {
        [&self.branch[0], &self.branch[1], &self.head[0], &self.head[1], &self.head[2]]
    }

    pub fn layers_mut(&mut self) -> [&mut ConvLayer<T>; 5] {
        let [b0, b1] = &mut self.branch;
        let [h0, h1, h2] = &mut self.head;
        [b0, b1, h0, h1, h2]
    }

    fn add_assign(&mut self, other: &GradientSet<T>) {
        for (a, b) in self.layers_mut().into_iter().zip(other.layers()) {
            a.kernels.axpy(T::one(), &b.kernels).expect("mirrored extents");
            a.bias.axpy(T::one(), &b.bias).expect("mirrored extents");
        }
    }

    fn scale(&mut self, alpha: T) {
        for l in self.layers_mut() {
            l.kernels.scale(alpha);
            l.bias.scale(alpha);
        }
    }
}

/// Intermediate values of one branch pass, kept for backpropagation.
struct BranchCache<T> {
    input: Tensor<T>,
    act1: Tensor<T>,
    pool1: Vec<usize>,
    pooled1: Tensor<T>,
    act2: Tensor<T>,
    pool2: Vec<usize>,
}

struct HeadCache<T> {
    fused: Tensor<T>,
    act1: Tensor<T>,
    act2: Tensor<T>,
}

/// Anything that can be fed to [`NetworkWeights::backward`].
pub trait Example<T> {
    fn patches(&self) -> &[Tensor<T>];
    fn label(&self) -> u8;
}

impl<T> Example<T> for (Vec<Tensor<T>>, u8) {
    fn patches(&self) -> &[Tensor<T>] {
        &self.0
    }

    fn label(&self) -> u8 {
        self.1
    }
}

impl<T: Scalar> NetworkWeights<T> {
    /// Glorot-uniform kernels and zero biases from a seeded generator.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        ensure!(config.n_views >= 2, InvalidArgument, "the network needs at least two views");
        ensure!(config.head_width >= 1, InvalidArgument, "head width must be positive");
        let [c1, c2] = config.branch_channels;
        let fused = match config.fusion {
            Fusion::Mean => c2,
            Fusion::Concat => c2 * config.n_views,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |o: usize, i: usize, k: usize| -> Result<ConvLayer<T>> {
            let mut l = ConvLayer::zeros(o, i, k)?;
            let bound = (6.0 / ((i * k * k + o * k * k) as f64)).sqrt();
            for v in l.kernels.data_mut() {
                *v = T::from_f64_lossy(rng.random_range(-bound..bound));
            }
            Ok(l)
        };
        Ok(NetworkWeights {
            branch: [layer(c1, 1, 5)?, layer(c2, c1, 5)?],
            head: [
                layer(config.head_width, fused, 5)?,
                layer(config.head_width, config.head_width, 1)?,
                layer(2, config.head_width, 1)?,
            ],
            fusion: config.fusion,
            n_views: config.n_views,
        })
    }

    pub fn config(&self) -> NetworkConfig {
        NetworkConfig {
            branch_channels: [self.branch[0].out_channels(), self.branch[1].out_channels()],
            head_width: self.head[0].out_channels(),
            fusion: self.fusion,
            n_views: self.n_views,
        }
    }

    pub fn layers(&self) -> [&ConvLayer<T>; 5] {
        [&self.branch[0], &self.branch[1], &self.head[0], &self.head[1], &self.head[2]]
    }

    pub fn layers_mut(&mut self) -> [&mut ConvLayer<T>; 5] {
        let [b0, b1] = &mut self.branch;
        let [h0, h1, h2] = &mut self.head;
        [b0, b1, h0, h1, h2]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    pub fn feature_channels(&self) -> usize {
        self.branch[1].out_channels()
    }

    /// Check that the layers chain together and agree with the fusion mode.
    pub fn validate(&self) -> Result<()> {
        let [b0, b1] = &self.branch;
        let [h0, h1, h2] = &self.head;
        ensure!(b0.in_channels() == 1, Shape, "branch input must be single-channel");
        ensure!(b0.kernel_size() == 5 && b1.kernel_size() == 5, Shape, "branch kernels must be 5x5");
        ensure!(b1.in_channels() == b0.out_channels(), Shape, "branch layers do not chain");
        let expect = match self.fusion {
            Fusion::Mean => b1.out_channels(),
            Fusion::Concat => b1.out_channels() * self.n_views,
        };
        ensure!(
            h0.in_channels() == expect,
            Shape,
            "head expects {} channels but fusion produces {expect}",
            h0.in_channels()
        );
        ensure!(h0.kernel_size() == 5, Shape, "first head kernel must be 5x5");
        ensure!(h1.kernel_size() == 1 && h2.kernel_size() == 1, Shape, "trailing head kernels must be 1x1");
        ensure!(h1.in_channels() == h0.out_channels(), Shape, "head layers do not chain");
        ensure!(h2.in_channels() == h1.out_channels(), Shape, "head layers do not chain");
        ensure!(h2.out_channels() == 2, Shape, "final layer must have 2 output channels");
        Ok(())
    }

    fn branch_cached(&self, patch: &Tensor<T>) -> Result<(Tensor<T>, BranchCache<T>)> {
        let (c, h, w) = patch.chw()?;
        ensure!(c == 1, Shape, "branch input must be a grayscale 1 x H x W patch, got {c} channels");
        ensure!(
            h >= PATCH_SIDE && w >= PATCH_SIDE,
            Shape,
            "branch input {h}x{w} is smaller than {PATCH_SIDE}x{PATCH_SIDE}"
        );
        let act1 = tanh_act(&conv2d_valid(patch, &self.branch[0])?);
        let p1 = maxpool2(&act1)?;
        let act2 = tanh_act(&conv2d_valid(&p1.output, &self.branch[1])?);
        let p2 = maxpool2(&act2)?;
        Ok((
            p2.output,
            BranchCache {
                input: patch.clone(),
                act1,
                pool1: p1.argmax,
                pooled1: p1.output,
                act2,
                pool2: p2.argmax,
            },
        ))
    }

    /// conv5-tanh-pool2-conv5-tanh-pool2 on one patch.
    pub fn forward_branch(&self, patch: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, h, w) = patch.chw()?;
        ensure!(c == 1, Shape, "branch input must be a grayscale 1 x H x W patch, got {c} channels");
        ensure!(
            h >= PATCH_SIDE && w >= PATCH_SIDE,
            Shape,
            "branch input {h}x{w} is smaller than {PATCH_SIDE}x{PATCH_SIDE}"
        );
        let a = tanh_act(&conv2d_valid(patch, &self.branch[0])?);
        let a = maxpool2(&a)?.output;
        let a = tanh_act(&conv2d_valid(&a, &self.branch[1])?);
        Ok(maxpool2(&a)?.output)
    }

    /// Combine branch outputs according to the fusion mode.
    pub fn fuse(&self, branch_outputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        fuse(branch_outputs, self.fusion, self.n_views)
    }

    fn head_cached(&self, fused: Tensor<T>) -> Result<(Tensor<T>, HeadCache<T>)> {
        let act1 = relu_act(&conv2d_valid(&fused, &self.head[0])?);
        let act2 = relu_act(&conv2d_valid(&act1, &self.head[1])?);
        let logits = conv2d_valid(&act2, &self.head[2])?;
        Ok((logits, HeadCache { fused, act1, act2 }))
    }

    /// conv5-relu-conv1-relu-conv1 producing `2 x h x w` class logits.
    pub fn forward_head(&self, fused: &Tensor<T>) -> Result<Tensor<T>> {
        let a = relu_act(&conv2d_valid(fused, &self.head[0])?);
        let a = relu_act(&conv2d_valid(&a, &self.head[1])?);
        conv2d_valid(&a, &self.head[2])
    }

    /// Match probability per output position from precomputed branch features.
    pub fn score_features(&self, features: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let logits = self.forward_head(&self.fuse(features)?)?;
        scores_from_logits(&logits)
    }

    /// Similarity of `n` equally sized patches: one probability in `[0, 1]`
    /// per 4x4 input region, as an `h x w` tensor.
    pub fn similarity_forward(&self, patches: &[Tensor<T>]) -> Result<Tensor<T>> {
        ensure!(patches.len() >= 2, InvalidArgument, "similarity needs at least two patches, got {}", patches.len());
        let dims = patches[0].dims();
        ensure!(
            patches.iter().all(|p| p.dims() == dims),
            Shape,
            "all patches must share extents"
        );
        let feats = patches
            .iter()
            .map(|p| self.forward_branch(p))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor<T>> = feats.iter().collect();
        self.score_features(&refs)
    }

    /// Loss and gradient of one example, summed over output positions then
    /// divided by their count.
    fn example_gradient(&self, patches: &[Tensor<T>], label: u8, grads: &mut GradientSet<T>) -> Result<f64> {
        let n = patches.len();
        ensure!(n >= 2, InvalidArgument, "an example needs at least two patches");
        let mut feats = Vec::with_capacity(n);
        let mut caches = Vec::with_capacity(n);
        for p in patches {
            let (f, c) = self.branch_cached(p)?;
            feats.push(f);
            caches.push(c);
        }
        let refs: Vec<&Tensor<T>> = feats.iter().collect();
        let fused = self.fuse(&refs)?;
        let (logits, head) = self.head_cached(fused)?;

        let (_, h, w) = logits.chw()?;
        let positions = h * w;
        let l = logits.data();
        let mut dlogits = Tensor::zeros(logits.dims());
        let mut loss = 0.0;
        let inv = 1.0 / positions as f64;
        for pos in 0..positions {
            let pair = [l[pos].to_f64().unwrap(), l[positions + pos].to_f64().unwrap()];
            let (lv, g) = softmax_xent(pair, label)?;
            loss += lv * inv;
            dlogits.data_mut()[pos] = T::from_f64_lossy(g[0] * inv);
            dlogits.data_mut()[positions + pos] = T::from_f64_lossy(g[1] * inv);
        }

        // Head.
        let d = conv2d_backward(&head.act2, &self.head[2], &dlogits, &mut grads.head[2], true)?.unwrap();
        let d = relu_backward(&head.act2, &d);
        let d = conv2d_backward(&head.act1, &self.head[1], &d, &mut grads.head[1], true)?.unwrap();
        let d = relu_backward(&head.act1, &d);
        let dfused = conv2d_backward(&head.fused, &self.head[0], &d, &mut grads.head[0], true)?.unwrap();

        // Fusion, then every branch into the single shared copy.
        let c2 = self.feature_channels();
        for (v, cache) in caches.iter().enumerate() {
            let dfeat = match self.fusion {
                Fusion::Mean => dfused.map(|g| g / T::from_usize(n).unwrap()),
                Fusion::Concat => {
                    let plane = dfused.len() / (c2 * n);
                    let slice = dfused.data()[v * c2 * plane..(v + 1) * c2 * plane].to_vec();
                    Tensor::from_vec(feats[v].dims(), slice)?
                }
            };
            let d = maxpool2_backward(cache.act2.dims(), &cache.pool2, &dfeat)?;
            let d = tanh_backward(&cache.act2, &d);
            let d = conv2d_backward(&cache.pooled1, &self.branch[1], &d, &mut grads.branch[1], true)?.unwrap();
            let d = maxpool2_backward(cache.act1.dims(), &cache.pool1, &d)?;
            let d = tanh_backward(&cache.act1, &d);
            conv2d_backward(&cache.input, &self.branch[0], &d, &mut grads.branch[0], false)?;
        }
        Ok(loss)
    }

    /// Mean loss and mean gradient over a batch.
    ///
    /// Examples are processed in fixed-size chunks whose partial sums are
    /// reduced in order, so the result is identical for any thread count.
    pub fn backward<E: Example<T> + Sync>(&self, batch: &[E]) -> Result<(f64, GradientSet<T>)> {
        ensure!(!batch.is_empty(), InvalidArgument, "empty batch");
        let partials = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut g = GradientSet::zeros_like(self);
                let mut loss = 0.0;
                for ex in chunk {
                    loss += self.example_gradient(ex.patches(), ex.label(), &mut g)?;
                }
                Ok((loss, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut iter = partials.into_iter();
        let (mut loss, mut grads) = iter.next().expect("non-empty batch");
        for (l, g) in iter {
            loss += l;
            grads.add_assign(&g);
        }
        let inv = 1.0 / batch.len() as f64;
        grads.scale(T::from_f64_lossy(inv));
        Ok((loss * inv, grads))
    }

    /// Mean loss only, with no gradient bookkeeping.
    pub fn loss<E: Example<T>>(&self, batch: &[E]) -> Result<f64> {
        ensure!(!batch.is_empty(), InvalidArgument, "empty batch");
        let mut total = 0.0;
        for ex in batch {
            let feats = ex
                .patches()
                .iter()
                .map(|p| self.forward_branch(p))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Tensor<T>> = feats.iter().collect();
            let logits = self.forward_head(&self.fuse(&refs)?)?;
            let (_, h, w) = logits.chw()?;
            let p = h * w;
            let mut s = 0.0;
            for pos in 0..p {
                let pair = [logits.data()[pos].to_f64().unwrap(), logits.data()[p + pos].to_f64().unwrap()];
                s += softmax_xent(pair, ex.label())?.0;
            }
            total += s / p as f64;
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean loss plus a hash of the piecewise-linear activation pattern
    /// (pool winners and ReLU signs). Two parameter settings with equal
    /// signatures lie on the same smooth piece of the loss.
    pub fn loss_with_signature<E: Example<T>>(&self, batch: &[E]) -> Result<(f64, u64)> {
        use std::hash::{Hash, Hasher};
        ensure!(!batch.is_empty(), InvalidArgument, "empty batch");
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        let mut total = 0.0;
        for ex in batch {
            let mut feats = Vec::new();
            for p in ex.patches() {
                let (f, c) = self.branch_cached(p)?;
                c.pool1.hash(&mut hasher);
                c.pool2.hash(&mut hasher);
                feats.push(f);
            }
            let refs: Vec<&Tensor<T>> = feats.iter().collect();
            let (logits, head) = self.head_cached(self.fuse(&refs)?)?;
            for a in [&head.act1, &head.act2] {
                for v in a.data() {
                    (*v > T::zero()).hash(&mut hasher);
                }
            }
            let (_, h, w) = logits.chw()?;
            let p = h * w;
            let mut s = 0.0;
            for pos in 0..p {
                let pair = [logits.data()[pos].to_f64().unwrap(), logits.data()[p + pos].to_f64().unwrap()];
                s += softmax_xent(pair, ex.label())?.0;
            }
            total += s / p as f64;
        }
        Ok((total / batch.len() as f64, hasher.finish()))
    }

    pub fn cast<U: Scalar>(&self) -> NetworkWeights<U> {
        let c = |l: &ConvLayer<T>| ConvLayer {
            kernels: l.kernels.cast(),
            bias: l.bias.cast(),
        };
        NetworkWeights {
            branch: [c(&self.branch[0]), c(&self.branch[1])],
            head: [c(&self.head[0]), c(&self.head[1]), c(&self.head[2])],
            fusion: self.fusion,
            n_views: self.n_views,
        }
    }
}

/// Mean (elementwise, accumulated in f64 in list order) or channel concatenation.
pub fn fuse<T: Scalar>(outputs: &[&Tensor<T>], mode: Fusion, n_trained: usize) -> Result<Tensor<T>> {
    ensure!(outputs.len() >= 2, InvalidArgument, "fusion needs at least two branch outputs, got {}", outputs.len());
    let dims = outputs[0].dims();
    ensure!(
        outputs.iter().all(|o| o.dims() == dims),
        Shape,
        "branch outputs must share extents"
    );
    match mode {
        Fusion::Mean => {
            let n = outputs.len() as f64;
            let mut acc = vec![0.0f64; outputs[0].len()];
            for o in outputs {
                for (a, v) in acc.iter_mut().zip(o.data()) {
                    *a += v.to_f64().unwrap();
                }
            }
            Tensor::from_vec(dims, acc.into_iter().map(|a| T::from_f64_lossy(a / n)).collect())
        }
        Fusion::Concat => {
            ensure!(
                outputs.len() == n_trained,
                InvalidArgument,
                "concat fusion was trained with {n_trained} views but got {}",
                outputs.len()
            );
            let (c, h, w) = outputs[0].chw()?;
            let mut data = Vec::with_capacity(outputs.len() * c * h * w);
            for o in outputs {
                data.extend_from_slice(o.data());
            }
            Tensor::from_vec(&[c * outputs.len(), h, w], data)
        }
    }
}

/// Per-position match probability from `2 x h x w` logits.
pub fn scores_from_logits<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = logits.chw()?;
    ensure!(c == 2, Shape, "expected 2 logit channels, got {c}");
    let p = h * w;
    let l = logits.data();
    let scores = (0..p)
        .map(|i| {
            T::from_f64_lossy(match_probability([
                l[i].to_f64().unwrap(),
                l[p + i].to_f64().unwrap(),
            ]))
        })
        .collect();
    Tensor::from_vec(&[h, w], scores)
}

/// Output extent of the whole network along one axis for an input extent,
/// or `None` when the extent does not survive the conv/pool chain.
pub fn score_extent(input: usize) -> Option<usize> {
    let a = input.checked_sub(4)?;
    if a % 2 != 0 {
        return None;
    }
    let b = (a / 2).checked_sub(4)?;
    if b % 2 != 0 {
        return None;
    }
    let c = (b / 2).checked_sub(4)?;
    (c >= 1).then_some(c)
}
