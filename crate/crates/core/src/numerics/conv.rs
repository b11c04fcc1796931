use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{Scalar, Tensor4};

/// Upper bound on the number of elements in one im2col buffer. Large slices
/// are processed in horizontal strips so memory stays bounded.
const COL_BUDGET: usize = 1 << 22;

/// Square-kernel 2D convolution with "same" zero padding of `(k - 1) / 2`
/// voxels per side.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2DLayer<T> {
    /// `(c_out, c_in, k, k)`
    weights: Tensor4<T>,
    bias: Vec<T>,
}

impl<T: Scalar> Conv2DLayer<T> {
    pub fn new(weights: Tensor4<T>, bias: Vec<T>) -> Result<Self> {
        let [c_out, _, kh, kw] = weights.dims();
        if kh != kw {
            return Err(Error::invalid(format!("kernel must be square, got {kh}x{kw}")));
        }
        if kh % 2 == 0 {
            return Err(Error::invalid(format!("kernel size must be odd, got {kh}")));
        }
        if bias.len() != c_out {
            return Err(Error::shape(format!(
                "bias length {} does not match {} output channels",
                bias.len(),
                c_out
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(c_in: usize, c_out: usize, kernel: usize) -> Result<Self> {
        Self::new(
            Tensor4::zeros(c_out, c_in, kernel, kernel),
            vec![T::zero(); c_out],
        )
    }

    pub fn c_in(&self) -> usize {
        self.weights.c()
    }

    pub fn c_out(&self) -> usize {
        self.weights.n()
    }

    pub fn kernel(&self) -> usize {
        self.weights.h()
    }

    pub fn pad(&self) -> usize {
        (self.kernel() - 1) / 2
    }

    /// `k * k * c_in * c_out`
    pub fn weight_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &Tensor4<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor4<T> {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    /// Weights and bias as flat mutable slices.
    pub fn params_mut(&mut self) -> (&mut [T], &mut [T]) {
        (self.weights.as_mut_slice(), &mut self.bias)
    }

    pub fn cast<U: Scalar>(&self) -> Conv2DLayer<U> {
        Conv2DLayer {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|b| U::from_f64_lossy(b.as_f64())).collect(),
        }
    }

    fn patch_len(&self) -> usize {
        self.c_in() * self.kernel() * self.kernel()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGradients<T> {
    pub input: Tensor4<T>,
    pub weights: Tensor4<T>,
    pub bias: Vec<T>,
}

fn strip_rows(patch_len: usize, width: usize) -> usize {
    (COL_BUDGET / (patch_len * width).max(1)).max(1)
}

/// Unfolds rows `y0..y1` of one batch item into a `(c_in·k·k) × ((y1−y0)·w)`
/// row-major matrix.
fn im2col<T: Scalar>(
    item: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    y0: usize,
    y1: usize,
    col: &mut [T],
) {
    let pad = (k - 1) / 2;
    let span = (y1 - y0) * w;
    for i in 0..c_in {
        let plane = &item[i * h * w..(i + 1) * h * w];
        for dy in 0..k {
            for dx in 0..k {
                let r = (i * k + dy) * k + dx;
                let row = &mut col[r * span..(r + 1) * span];
                // valid x range: 0 <= x + dx - pad < w
                let x_lo = pad.saturating_sub(dx);
                let x_hi = (w + pad).saturating_sub(dx).min(w);
                for (yy, y) in (y0..y1).enumerate() {
                    let dst = &mut row[yy * w..(yy + 1) * w];
                    let iy = y + dy;
                    if iy < pad || iy - pad >= h || x_lo >= x_hi {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(iy - pad) * w..(iy - pad + 1) * w];
                    dst[..x_lo].fill(T::zero());
                    dst[x_hi..].fill(T::zero());
                    let sx = x_lo + dx - pad;
                    dst[x_lo..x_hi].copy_from_slice(&src[sx..sx + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a column matrix back onto the item,
/// accumulating overlaps.
fn col2im<T: Scalar>(
    col: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    y0: usize,
    y1: usize,
    item: &mut [T],
) {
    let pad = (k - 1) / 2;
    let span = (y1 - y0) * w;
    for i in 0..c_in {
        let plane = &mut item[i * h * w..(i + 1) * h * w];
        for dy in 0..k {
            for dx in 0..k {
                let r = (i * k + dy) * k + dx;
                let row = &col[r * span..(r + 1) * span];
                let x_lo = pad.saturating_sub(dx);
                let x_hi = (w + pad).saturating_sub(dx).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for (yy, y) in (y0..y1).enumerate() {
                    let iy = y + dy;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let src = &row[yy * w + x_lo..yy * w + x_hi];
                    let sx = x_lo + dx - pad;
                    let dst = &mut plane[(iy - pad) * w + sx..(iy - pad) * w + sx + (x_hi - x_lo)];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

fn forward_item<T: Scalar>(input: &[T], layer: &Conv2DLayer<T>, h: usize, w: usize, out: &mut [T]) {
    let plane = h * w;
    for (o, &b) in layer.bias.iter().enumerate() {
        out[o * plane..(o + 1) * plane].fill(b);
    }
    let kk = layer.patch_len();
    let rows = strip_rows(kk, w);
    let mut col = vec![T::zero(); kk * rows.min(h) * w];
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + rows).min(h);
        let span = (y1 - y0) * w;
        let col = &mut col[..kk * span];
        im2col(input, layer.c_in(), h, w, layer.kernel(), y0, y1, col);
        // out[:, y0..y1] += W (c_out × kk) · col (kk × span)
        unsafe {
            T::gemm(
                layer.c_out(),
                kk,
                span,
                T::one(),
                layer.weights.as_slice().as_ptr(),
                kk as isize,
                1,
                col.as_ptr(),
                span as isize,
                1,
                T::one(),
                out.as_mut_ptr().add(y0 * w),
                plane as isize,
                1,
            );
        }
        y0 = y1;
    }
}

/// Same-padded convolution:
/// `out[n,o,y,x] = bias[o] + Σ in[n,i,y+dy−pad,x+dx−pad] · w[o,i,dy,dx]`
/// with out-of-range input read as zero.
pub fn conv2d_forward<T: Scalar>(input: &Tensor4<T>, layer: &Conv2DLayer<T>) -> Result<Tensor4<T>> {
    let [n, c, h, w] = input.dims();
    if c != layer.c_in() {
        return Err(Error::shape(format!(
            "input has {c} channels, layer expects {}",
            layer.c_in()
        )));
    }
    let mut out = Tensor4::zeros(n, layer.c_out(), h, w);
    let out_len = out.item_len();
    if out_len == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(out_len)
        .enumerate()
        .for_each(|(b, dst)| forward_item(input.item(b), layer, h, w, dst));
    Ok(out)
}

/// Exact gradients of `Σ out · upstream` with respect to input, weights and
/// bias. Batch contributions are accumulated in batch order.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    layer: &Conv2DLayer<T>,
    upstream: &Tensor4<T>,
) -> Result<ConvGradients<T>> {
    let [n, c, h, w] = input.dims();
    if c != layer.c_in() {
        return Err(Error::shape(format!(
            "input has {c} channels, layer expects {}",
            layer.c_in()
        )));
    }
    if upstream.dims() != [n, layer.c_out(), h, w] {
        return Err(Error::shape(format!(
            "upstream gradient dims {:?} differ from forward output dims {:?}",
            upstream.dims(),
            [n, layer.c_out(), h, w]
        )));
    }
    let c_out = layer.c_out();
    let k = layer.kernel();
    let kk = layer.patch_len();
    let plane = h * w;
    let mut grad_input = Tensor4::zeros(n, c, h, w);
    let mut grad_weights = Tensor4::zeros(c_out, c, k, k);
    let mut grad_bias = vec![T::zero(); c_out];
    if plane == 0 {
        return Ok(ConvGradients {
            input: grad_input,
            weights: grad_weights,
            bias: grad_bias,
        });
    }
    let rows = strip_rows(kk, w);
    let mut col = vec![T::zero(); kk * rows.min(h) * w];
    let mut grad_col = vec![T::zero(); kk * rows.min(h) * w];

    for b in 0..n {
        let g = upstream.item(b);
        for (o, gb) in grad_bias.iter_mut().enumerate() {
            let mut acc = T::zero();
            for &v in &g[o * plane..(o + 1) * plane] {
                acc += v;
            }
            *gb += acc;
        }
        let x = input.item(b);
        let mut y0 = 0;
        while y0 < h {
            let y1 = (y0 + rows).min(h);
            let span = (y1 - y0) * w;
            let col = &mut col[..kk * span];
            let grad_col = &mut grad_col[..kk * span];
            im2col(x, c, h, w, k, y0, y1, col);
            unsafe {
                // dW (c_out × kk) += G (c_out × span) · colᵀ (span × kk)
                T::gemm(
                    c_out,
                    span,
                    kk,
                    T::one(),
                    g.as_ptr().add(y0 * w),
                    plane as isize,
                    1,
                    col.as_ptr(),
                    1,
                    span as isize,
                    T::one(),
                    grad_weights.as_mut_slice().as_mut_ptr(),
                    kk as isize,
                    1,
                );
                // dcol (kk × span) = Wᵀ (kk × c_out) · G (c_out × span)
                T::gemm(
                    kk,
                    c_out,
                    span,
                    T::one(),
                    layer.weights.as_slice().as_ptr(),
                    1,
                    kk as isize,
                    g.as_ptr().add(y0 * w),
                    plane as isize,
                    1,
                    T::zero(),
                    grad_col.as_mut_ptr(),
                    span as isize,
                    1,
                );
            }
            col2im(grad_col, c, h, w, k, y0, y1, grad_input.item_mut(b));
            y0 = y1;
        }
    }
    Ok(ConvGradients {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4<f64> {
        Tensor4::from_fn(dims, |_| rng.random_range(-1.0..1.0))
    }

    fn random_layer(rng: &mut ChaCha8Rng, c_in: usize, c_out: usize, k: usize) -> Conv2DLayer<f64> {
        let w = random_tensor(rng, [c_out, c_in, k, k]);
        let b = (0..c_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        Conv2DLayer::new(w, b).unwrap()
    }

    /// Direct six-loop summation.
    fn naive_conv(input: &Tensor4<f64>, layer: &Conv2DLayer<f64>) -> Tensor4<f64> {
        let [n, c, h, w] = input.dims();
        let k = layer.kernel() as isize;
        let pad = layer.pad() as isize;
        let mut out = Tensor4::zeros(n, layer.c_out(), h, w);
        for b in 0..n {
            for o in 0..layer.c_out() {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = layer.bias()[o];
                        for i in 0..c {
                            for dy in 0..k {
                                for dx in 0..k {
                                    let iy = y as isize + dy - pad;
                                    let ix = x as isize + dx - pad;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += input.get(b, i, iy as usize, ix as usize)
                                        * layer.weights().get(o, i, dy as usize, dx as usize);
                                }
                            }
                        }
                        out.set(b, o, y, x, acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn zero_input_yields_bias() {
        let mut layer = Conv2DLayer::<f32>::zeros(1, 2, 3).unwrap();
        layer.bias_mut().copy_from_slice(&[0.5, -2.0]);
        layer.weights_mut().as_mut_slice().fill(3.0);
        let out = conv2d_forward(&Tensor4::zeros(1, 1, 3, 3), &layer).unwrap();
        assert!(out.as_slice()[..9].iter().all(|&v| v == 0.5));
        assert!(out.as_slice()[9..].iter().all(|&v| v == -2.0));
    }

    #[test]
    fn identity_kernel_copies_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random_tensor(&mut rng, [2, 1, 5, 7]);
        let mut layer = Conv2DLayer::<f64>::zeros(1, 1, 3).unwrap();
        layer.weights_mut().set(0, 0, 1, 1, 1.0);
        let out = conv2d_forward(&input, &layer).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random_tensor(&mut rng, [2, 3, 8, 8]);
        let layer = random_layer(&mut rng, 3, 4, 5);
        let fast = conv2d_forward(&input, &layer).unwrap();
        let slow = naive_conv(&input, &layer);
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn strips_match_single_pass() {
        // 300 channels of 5x5 on a wide image forces multiple strips.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random_tensor(&mut rng, [1, 300, 20, 700]);
        let layer = random_layer(&mut rng, 300, 1, 5);
        assert!(strip_rows(layer.patch_len(), 700) < 20);
        let fast = conv2d_forward(&input, &layer).unwrap();
        let slow = naive_conv(&input, &layer);
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        let up = random_tensor(&mut rng, [1, 1, 20, 700]);
        let g = conv2d_backward(&input, &layer, &up).unwrap();
        // <conv(x) - bias, up> == <x, dx> by linearity in x
        let bias_term: f64 = up.as_slice().iter().sum::<f64>() * layer.bias()[0];
        let lhs: f64 = fast.as_slice().iter().zip(up.as_slice()).map(|(a, b)| a * b).sum::<f64>() - bias_term;
        let rhs: f64 = input.as_slice().iter().zip(g.input.as_slice()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-8 * lhs.abs().max(1.0));
    }

    #[test]
    fn rejects_channel_mismatch_and_even_kernels() {
        let layer = Conv2DLayer::<f32>::zeros(2, 1, 3).unwrap();
        assert!(matches!(
            conv2d_forward(&Tensor4::zeros(1, 3, 4, 4), &layer),
            Err(Error::Shape(_))
        ));
        assert!(Conv2DLayer::<f32>::zeros(1, 1, 4).is_err());
        let bad_up = Tensor4::zeros(1, 2, 4, 4);
        assert!(conv2d_backward(&Tensor4::zeros(1, 2, 4, 4), &layer, &bad_up).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let input = random_tensor(&mut rng, [2, 2, 6, 5]);
        let layer = random_layer(&mut rng, 2, 3, 3);
        let g = conv2d_backward(&input, &layer, &Tensor4::zeros(2, 3, 6, 5)).unwrap();
        assert!(g.input.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.weights.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_gradient_is_upstream_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let input = random_tensor(&mut rng, [3, 2, 4, 6]);
        let layer = random_layer(&mut rng, 2, 3, 5);
        let up = random_tensor(&mut rng, [3, 3, 4, 6]);
        let g = conv2d_backward(&input, &layer, &up).unwrap();
        for o in 0..3 {
            let mut expect = 0.0;
            for b in 0..3 {
                for y in 0..4 {
                    for x in 0..6 {
                        expect += up.get(b, o, y, x);
                    }
                }
            }
            assert!((g.bias[o] - expect).abs() < 1e-12);
        }
    }
}
