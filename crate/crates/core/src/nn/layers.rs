//! Convolution, pooling and activation primitives with their backward passes.
//!
//! Every feature map is a rank-3 `channels x height x width` tensor. Convolutions
//! are "valid" (no padding) with stride 1 and are lowered to a single GEMM over
//! an im2col buffer.

use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Tensor};

/// A square-kernel convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T = f32> {
    /// `out x in x k x k`.
    pub kernels: Tensor<T>,
    /// One entry per output channel.
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(out_channels: usize, in_channels: usize, k: usize) -> Result<Self> {
        ensure!(out_channels >= 1, InvalidArgument, "a convolution needs at least one output channel");
        ensure!(in_channels >= 1, InvalidArgument, "a convolution needs at least one input channel");
        ensure!(k % 2 == 1, InvalidArgument, "kernel size must be odd, got {k}");
        Ok(ConvLayer {
            kernels: Tensor::zeros(&[out_channels, in_channels, k, k]),
            bias: Tensor::zeros(&[out_channels]),
        })
    }

    /// Build from explicit tensors, validating their extents.
    pub fn from_parts(kernels: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let d = kernels.dims();
        ensure!(
            d.len() == 4 && d[2] == d[3] && d[2] % 2 == 1 && d[0] >= 1,
            Shape,
            "kernels must be out x in x k x k with odd k, got {d:?}"
        );
        ensure!(
            bias.dims() == [d[0]],
            Shape,
            "bias extents {:?} do not match {} output channels",
            bias.dims(),
            d[0]
        );
        Ok(ConvLayer { kernels, bias })
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.dims()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.dims()[2]
    }

    pub fn param_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input.chw()?;
        let k = self.kernel_size();
        ensure!(
            c == self.in_channels(),
            Shape,
            "input has {c} channels, layer expects {}",
            self.in_channels()
        );
        ensure!(
            h >= k && w >= k,
            Shape,
            "input {h}x{w} is smaller than the {k}x{k} kernel"
        );
        Ok((c, h, w))
    }
}

/// Unfold `input` so that each column holds one `c x k x k` receptive field.
fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let (ho, wo) = (h - k + 1, w - k + 1);
    let p = ho * wo;
    let mut cols = vec![T::zero(); c * k * k * p];
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for y in 0..ho {
                    let src = &plane[(y + ky) * w + kx..(y + ky) * w + kx + wo];
                    dst[y * wo..(y + 1) * wo].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

/// Fold columns back onto the input grid, accumulating overlaps.
fn col2im_add<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, out: &mut [T]) {
    let (ho, wo) = (h - k + 1, w - k + 1);
    let p = ho * wo;
    for ch in 0..c {
        let plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for y in 0..ho {
                    let dst = &mut plane[(y + ky) * w + kx..(y + ky) * w + kx + wo];
                    for (d, &s) in dst.iter_mut().zip(&src[y * wo..(y + 1) * wo]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Valid (unpadded, stride 1) 2-D convolution.
pub fn conv2d_valid<T: Scalar>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    let (c, h, w) = layer.check_input(input)?;
    let k = layer.kernel_size();
    let o = layer.out_channels();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let p = ho * wo;
    let ckk = c * k * k;

    let mut out = vec![T::zero(); o * p];
    for (oc, row) in out.chunks_exact_mut(p).enumerate() {
        row.fill(layer.bias.data()[oc]);
    }
    let owned;
    let cols: &[T] = if k == 1 {
        input.data()
    } else {
        owned = im2col(input.data(), c, h, w, k);
        &owned
    };
    T::gemm(
        o,
        ckk,
        p,
        T::one(),
        layer.kernels.data(),
        (ckk as isize, 1),
        cols,
        (p as isize, 1),
        T::one(),
        &mut out,
        p as isize,
    );
    Tensor::from_vec(&[o, ho, wo], out)
}

/// Accumulates the gradient of a convolution into `grad_layer` and optionally
/// returns the gradient with respect to the input.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
    grad_layer: &mut ConvLayer<T>,
    need_input_grad: bool,
) -> Result<Option<Tensor<T>>> {
    let (c, h, w) = layer.check_input(input)?;
    let k = layer.kernel_size();
    let o = layer.out_channels();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let p = ho * wo;
    let ckk = c * k * k;
    ensure!(
        grad_out.dims() == [o, ho, wo],
        Shape,
        "output gradient {:?} does not match conv output {:?}",
        grad_out.dims(),
        [o, ho, wo]
    );
    ensure!(
        grad_layer.kernels.dims() == layer.kernels.dims(),
        Shape,
        "gradient buffer does not mirror the layer"
    );

    let owned;
    let cols: &[T] = if k == 1 {
        input.data()
    } else {
        owned = im2col(input.data(), c, h, w, k);
        &owned
    };
    let g = grad_out.data();

    // dK += dY * cols^T
    T::gemm(
        o,
        p,
        ckk,
        T::one(),
        g,
        (p as isize, 1),
        cols,
        (1, p as isize),
        T::one(),
        grad_layer.kernels.data_mut(),
        ckk as isize,
    );
    for (oc, db) in grad_layer.bias.data_mut().iter_mut().enumerate() {
        let mut s = T::zero();
        for &v in &g[oc * p..(oc + 1) * p] {
            s += v;
        }
        *db += s;
    }

    if !need_input_grad {
        return Ok(None);
    }
    // dcols = K^T * dY
    let mut dcols = vec![T::zero(); ckk * p];
    T::gemm(
        ckk,
        o,
        p,
        T::one(),
        layer.kernels.data(),
        (1, ckk as isize),
        g,
        (p as isize, 1),
        T::zero(),
        &mut dcols,
        p as isize,
    );
    if k == 1 {
        return Tensor::from_vec(&[c, h, w], dcols).map(Some);
    }
    let mut dx = vec![T::zero(); c * h * w];
    col2im_add(&dcols, c, h, w, k, &mut dx);
    Tensor::from_vec(&[c, h, w], dx).map(Some)
}

/// Result of a 2x2 max-pool: the pooled map plus, for each output cell, the
/// flat index of the winning input element.
#[derive(Clone, Debug)]
pub struct Pooled<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Non-overlapping 2x2 max pooling with stride 2. Ties go to the first
/// element in row-major window order.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<Pooled<T>> {
    let (c, h, w) = input.chw()?;
    ensure!(
        h % 2 == 0 && w % 2 == 0,
        Shape,
        "2x2 pooling needs even extents, got {h}x{w}"
    );
    let (ho, wo) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut argmax = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..ho {
            for xo in 0..wo {
                let i0 = base + 2 * y * w + 2 * xo;
                let mut best = i0;
                for &i in &[i0 + 1, i0 + w, i0 + w + 1] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::from_vec(&[c, ho, wo], out)?,
        argmax,
    })
}

/// Route pooled gradients back to the winning input positions.
pub fn maxpool2_backward<T: Scalar>(
    input_dims: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    ensure!(
        argmax.len() == grad_out.len(),
        Shape,
        "pool indices ({}) and gradient ({}) differ in length",
        argmax.len(),
        grad_out.len()
    );
    let mut dx = Tensor::zeros(input_dims);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    Ok(dx)
}

pub fn tanh_act<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.tanh())
}

pub fn relu_act<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through `tanh`, expressed with the activation output `y`.
pub fn tanh_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * (T::one() - y * y))
        .collect();
    Tensor::from_vec(output.dims(), data).expect("same extents")
}

/// Gradient through ReLU; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(output.dims(), data).expect("same extents")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: &[usize]) -> Tensor<f64> {
        let n: usize = dims.iter().product();
        Tensor::from_vec(dims, (0..n).map(|i| ((i * 37 % 101) as f64) / 50.0 - 1.0).collect()).unwrap()
    }

    fn naive_conv(input: &Tensor<f64>, layer: &ConvLayer<f64>) -> Tensor<f64> {
        let (c, h, w) = input.chw().unwrap();
        let k = layer.kernel_size();
        let o = layer.out_channels();
        let (ho, wo) = (h - k + 1, w - k + 1);
        let mut out = Tensor::zeros(&[o, ho, wo]);
        let kd = layer.kernels.data();
        for oc in 0..o {
            for y in 0..ho {
                for x in 0..wo {
                    let mut s = layer.bias.data()[oc];
                    for ch in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                s += kd[((oc * c + ch) * k + ky) * k + kx]
                                    * input.data()[(ch * h + y + ky) * w + x + kx];
                            }
                        }
                    }
                    out.data_mut()[(oc * ho + y) * wo + x] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv_output_extent_for_patch() {
        let layer = ConvLayer::<f32>::zeros(32, 1, 5).unwrap();
        let out = conv2d_valid(&Tensor::zeros(&[1, 32, 32]), &layer).unwrap();
        assert_eq!(out.dims(), &[32, 28, 28]);
        let out = conv2d_valid(&Tensor::zeros(&[1, 5, 5]), &layer).unwrap();
        assert_eq!(out.dims(), &[32, 1, 1]);
    }

    #[test]
    fn zero_kernels_broadcast_bias() {
        let mut layer = ConvLayer::<f64>::zeros(3, 2, 3).unwrap();
        layer.bias = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let out = conv2d_valid(&ramp(&[2, 6, 7]), &layer).unwrap();
        for oc in 0..3 {
            for &v in &out.data()[oc * 20..(oc + 1) * 20] {
                assert_eq!(v, layer.bias.data()[oc]);
            }
        }
    }

    #[test]
    fn conv_matches_direct_summation() {
        for k in [1, 3, 5] {
            let layer = ConvLayer::from_parts(ramp(&[4, 3, k, k]), ramp(&[4])).unwrap();
            let input = ramp(&[3, 9, 8]);
            let fast = conv2d_valid(&input, &layer).unwrap();
            let slow = naive_conv(&input, &layer);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_rejects_bad_inputs() {
        let layer = ConvLayer::<f32>::zeros(4, 2, 5).unwrap();
        assert!(conv2d_valid(&Tensor::zeros(&[1, 8, 8]), &layer).is_err());
        assert!(conv2d_valid(&Tensor::zeros(&[2, 4, 8]), &layer).is_err());
        assert!(ConvLayer::<f32>::zeros(4, 2, 4).is_err());
        assert!(ConvLayer::<f32>::zeros(0, 2, 5).is_err());
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let layer = ConvLayer::from_parts(ramp(&[2, 2, 3, 3]).map(|v| v * 0.3), ramp(&[2])).unwrap();
        let input = ramp(&[2, 5, 6]);
        // Loss = sum(out * weights) so that dL/dout = weights.
        let out = conv2d_valid(&input, &layer).unwrap();
        let gout = ramp(out.dims()).map(|v| v + 0.25);
        let loss = |inp: &Tensor<f64>, l: &ConvLayer<f64>| -> f64 {
            let o = conv2d_valid(inp, l).unwrap();
            o.data().iter().zip(gout.data()).map(|(a, b)| a * b).sum()
        };
        let mut grad = ConvLayer::zeros(2, 2, 3).unwrap();
        let dx = conv2d_backward(&input, &layer, &gout, &mut grad, true).unwrap().unwrap();
        let h = 1e-6;
        for i in 0..layer.kernels.len() {
            let mut p = layer.clone();
            p.kernels.data_mut()[i] += h;
            let mut m = layer.clone();
            m.kernels.data_mut()[i] -= h;
            let fd = (loss(&input, &p) - loss(&input, &m)) / (2.0 * h);
            assert!((fd - grad.kernels.data()[i]).abs() < 1e-6);
        }
        for i in 0..input.len() {
            let mut p = input.clone();
            p.data_mut()[i] += h;
            let mut m = input.clone();
            m.data_mut()[i] -= h;
            let fd = (loss(&p, &layer) - loss(&m, &layer)) / (2.0 * h);
            assert!((fd - dx.data()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn pooling_halves_and_records_winner() {
        let t = Tensor::<f32>::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = maxpool2(&t).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);

        let c = Tensor::<f32>::filled(&[32, 28, 28], 0.7);
        let p = maxpool2(&c).unwrap();
        assert_eq!(p.output.dims(), &[32, 14, 14]);
        assert!(p.output.data().iter().all(|&v| v == 0.7));

        assert!(maxpool2(&Tensor::<f32>::zeros(&[1, 5, 4])).is_err());
    }

    #[test]
    fn pooling_backward_scatters() {
        let t = Tensor::<f64>::from_vec(&[1, 2, 4], vec![1., 5., 0., 0., 2., 3., 9., 1.]).unwrap();
        let p = maxpool2(&t).unwrap();
        let g = Tensor::from_vec(&[1, 1, 2], vec![10.0, 20.0]).unwrap();
        let dx = maxpool2_backward(t.dims(), &p.argmax, &g).unwrap();
        assert_eq!(dx.data(), &[0., 10., 0., 0., 0., 0., 20., 0.]);
    }

    #[test]
    fn activations() {
        let t = Tensor::<f64>::from_vec(&[3], vec![0.0, -3.0, 40.0]).unwrap();
        assert_eq!(tanh_act(&t).data()[0], 0.0);
        assert_eq!(relu_act(&t).data(), &[0.0, 0.0, 40.0]);
        let big = Tensor::<f32>::from_vec(&[2], vec![-1e30, 1e30]).unwrap();
        assert!(tanh_act(&big).data().iter().all(|v| v.abs() <= 1.0));

        let x = Tensor::<f64>::from_vec(&[3], vec![2.0, -2.0, 0.0]).unwrap();
        let y = relu_act(&x);
        let g = relu_backward(&y, &Tensor::filled(&[3], 1.0));
        assert_eq!(g.data(), &[1.0, 0.0, 0.0]);
    }
}
