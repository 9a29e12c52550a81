//! Layer primitives with hand-written reverse passes.

use serde::{Deserialize, Serialize};

use super::{NnError, Tensor1};

/// 1-D convolution kernel bank. Weights are laid out `[out][in][k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, NnError> {
        let spec = Self {
            in_channels,
            out_channels,
            kernel_size,
            weights,
            bias,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zeros(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            weights: vec![0.0; in_channels * out_channels * kernel_size],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let expected = self
            .in_channels
            .checked_mul(self.out_channels)
            .and_then(|v| v.checked_mul(self.kernel_size));
        if self.kernel_size % 2 == 0
            || self.in_channels == 0
            || self.out_channels == 0
            || expected != Some(self.weights.len())
            || self.bias.len() != self.out_channels
        {
            return Err(NnError::ShapeMismatch(format!(
                "conv {}->{} k{} with {} weights, {} biases",
                self.in_channels,
                self.out_channels,
                self.kernel_size,
                self.weights.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn weight(&self, o: usize, i: usize, k: usize) -> f64 {
        self.weights[(o * self.in_channels + i) * self.kernel_size + k]
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn kernel(&self, o: usize, i: usize) -> &[f64] {
        let k = self.kernel_size;
        &self.weights[(o * self.in_channels + i) * k..][..k]
    }
}

/// Gradient buffers shaped like a `ConvSpec`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvGrad {
    pub fn zeros_like(spec: &ConvSpec) -> Self {
        Self {
            weights: vec![0.0; spec.weights.len()],
            bias: vec![0.0; spec.bias.len()],
        }
    }

    pub(crate) fn add_assign(&mut self, other: &ConvGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub(crate) fn scale(&mut self, s: f64) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|v| *v *= s);
    }
}

/// Valid output range `t0..t1` for tap offset `s` so that `t + s` stays in `0..len`.
#[inline]
fn tap_range(len: usize, s: isize) -> (usize, usize) {
    let t0 = (-s).max(0) as usize;
    let t1 = (len as isize - s).clamp(0, len as isize) as usize;
    (t0.min(t1), t1)
}

/// Four-lane dot product; the lanes keep the reduction vectorizable while
/// the summation order stays fixed.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(dst: &mut [f64], w: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += w * s;
    }
}

fn check_input(x: &Tensor1, spec: &ConvSpec) -> Result<(), NnError> {
    if x.channels() != spec.in_channels {
        return Err(NnError::ShapeMismatch(format!(
            "conv expects {} input channels, got {}",
            spec.in_channels,
            x.channels()
        )));
    }
    Ok(())
}

/// "Same" cross-correlation with zero padding.
pub fn conv1d(x: &Tensor1, spec: &ConvSpec) -> Result<Tensor1, NnError> {
    check_input(x, spec)?;
    let len = x.len();
    let half = (spec.kernel_size / 2) as isize;
    let mut out = Tensor1::zeros(spec.out_channels, len);
    for o in 0..spec.out_channels {
        let row = out.row_mut(o);
        row.fill(spec.bias[o]);
        for i in 0..spec.in_channels {
            let xr = x.row(i);
            for (k, &w) in spec.kernel(o, i).iter().enumerate() {
                let s = k as isize - half;
                let (t0, t1) = tap_range(len, s);
                if t0 < t1 {
                    let src = &xr[(t0 as isize + s) as usize..(t1 as isize + s) as usize];
                    axpy(&mut row[t0..t1], w, src);
                }
            }
        }
    }
    Ok(out)
}

/// Reverse pass of `conv1d`. Returns the input gradient and accumulates
/// parameter gradients into `grad`.
pub fn conv1d_backward(
    x: &Tensor1,
    spec: &ConvSpec,
    grad_out: &Tensor1,
    grad: &mut ConvGrad,
) -> Result<Tensor1, NnError> {
    check_input(x, spec)?;
    if grad_out.shape() != (spec.out_channels, x.len()) {
        return Err(NnError::ShapeMismatch("conv grad_out shape".into()));
    }
    let len = x.len();
    let k_size = spec.kernel_size;
    let half = (k_size / 2) as isize;
    let mut gx = Tensor1::zeros(spec.in_channels, len);
    for o in 0..spec.out_channels {
        let g = grad_out.row(o);
        grad.bias[o] += g.iter().sum::<f64>();
        for i in 0..spec.in_channels {
            let base = (o * spec.in_channels + i) * k_size;
            let xr = x.row(i);
            for k in 0..k_size {
                let s = k as isize - half;
                let (t0, t1) = tap_range(len, s);
                if t0 >= t1 {
                    continue;
                }
                let (u0, u1) = ((t0 as isize + s) as usize, (t1 as isize + s) as usize);
                grad.weights[base + k] += dot(&g[t0..t1], &xr[u0..u1]);
                axpy(&mut gx.row_mut(i)[u0..u1], spec.weights[base + k], &g[t0..t1]);
            }
        }
    }
    Ok(gx)
}

pub fn relu(x: &Tensor1) -> Tensor1 {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Gradient through a ReLU, given its output.
pub fn relu_backward(activated: &Tensor1, grad_out: &Tensor1) -> Tensor1 {
    let mut g = grad_out.clone();
    for (gv, &a) in g.data_mut().iter_mut().zip(activated.data()) {
        if a <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

fn check_even(x: &Tensor1) -> Result<(), NnError> {
    if x.len() % 2 != 0 {
        return Err(NnError::OddLength(x.len()));
    }
    Ok(())
}

/// Pairwise max; the second tensor-sized output records which element of
/// each pair won (0 or 1), first one on ties.
pub fn maxpool2(x: &Tensor1) -> Result<(Tensor1, Vec<u8>), NnError> {
    check_even(x)?;
    let half = x.len() / 2;
    let mut out = Tensor1::zeros(x.channels(), half);
    let mut arg = Vec::with_capacity(x.channels() * half);
    for c in 0..x.channels() {
        let xr = x.row(c);
        let row = out.row_mut(c);
        for j in 0..half {
            let (a, b) = (xr[2 * j], xr[2 * j + 1]);
            if b > a {
                row[j] = b;
                arg.push(1);
            } else {
                row[j] = a;
                arg.push(0);
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool2_backward(argmax: &[u8], grad_out: &Tensor1) -> Tensor1 {
    let half = grad_out.len();
    let mut gx = Tensor1::zeros(grad_out.channels(), 2 * half);
    for c in 0..grad_out.channels() {
        let g = grad_out.row(c);
        let row = gx.row_mut(c);
        for j in 0..half {
            row[2 * j + argmax[c * half + j] as usize] = g[j];
        }
    }
    gx
}

pub fn avgpool2(x: &Tensor1) -> Result<Tensor1, NnError> {
    check_even(x)?;
    let half = x.len() / 2;
    let mut out = Tensor1::zeros(x.channels(), half);
    for c in 0..x.channels() {
        let xr = x.row(c);
        for (j, v) in out.row_mut(c).iter_mut().enumerate() {
            *v = 0.5 * (xr[2 * j] + xr[2 * j + 1]);
        }
    }
    Ok(out)
}

pub fn avgpool2_backward(grad_out: &Tensor1) -> Tensor1 {
    let mut gx = Tensor1::zeros(grad_out.channels(), 2 * grad_out.len());
    for c in 0..grad_out.channels() {
        let g = grad_out.row(c).to_vec();
        for (j, pair) in gx.row_mut(c).chunks_exact_mut(2).enumerate() {
            pair[0] = 0.5 * g[j];
            pair[1] = 0.5 * g[j];
        }
    }
    gx
}

/// Nearest-neighbour doubling.
pub fn upsample2(x: &Tensor1) -> Tensor1 {
    let mut out = Tensor1::zeros(x.channels(), 2 * x.len());
    for c in 0..x.channels() {
        let xr = x.row(c).to_vec();
        for (j, pair) in out.row_mut(c).chunks_exact_mut(2).enumerate() {
            pair[0] = xr[j];
            pair[1] = xr[j];
        }
    }
    out
}

pub fn upsample2_backward(grad_out: &Tensor1) -> Tensor1 {
    let mut gx = Tensor1::zeros(grad_out.channels(), grad_out.len() / 2);
    for c in 0..gx.channels() {
        let g = grad_out.row(c).to_vec();
        for (j, v) in gx.row_mut(c).iter_mut().enumerate() {
            *v = g[2 * j] + g[2 * j + 1];
        }
    }
    gx
}

/// Linear doubling with half-sample alignment: outputs sit at `j -/+ 1/4`,
/// edge samples replicated.
pub fn upsample2_linear(x: &Tensor1) -> Tensor1 {
    let n = x.len();
    let mut out = Tensor1::zeros(x.channels(), 2 * n);
    for c in 0..x.channels() {
        let xr = x.row(c).to_vec();
        let row = out.row_mut(c);
        for j in 0..n {
            let prev = xr[j.saturating_sub(1)];
            let next = xr[(j + 1).min(n - 1)];
            row[2 * j] = 0.75 * xr[j] + 0.25 * prev;
            row[2 * j + 1] = 0.75 * xr[j] + 0.25 * next;
        }
    }
    out
}

pub fn upsample2_linear_backward(grad_out: &Tensor1) -> Tensor1 {
    let n = grad_out.len() / 2;
    let mut gx = Tensor1::zeros(grad_out.channels(), n);
    for c in 0..gx.channels() {
        let g = grad_out.row(c).to_vec();
        let row = gx.row_mut(c);
        for j in 0..n {
            row[j] += 0.75 * (g[2 * j] + g[2 * j + 1]);
            row[j.saturating_sub(1)] += 0.25 * g[2 * j];
            row[(j + 1).min(n - 1)] += 0.25 * g[2 * j + 1];
        }
    }
    gx
}

/// Mean squared error over every channel-sample and its gradient.
pub fn mse_loss(pred: &Tensor1, target: &Tensor1) -> Result<(f64, Tensor1), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.data().len() as f64;
    let mut grad = pred.clone();
    let mut loss = 0.0;
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(rows: &[&[f64]]) -> Tensor1 {
        Tensor1::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, l: usize) -> Tensor1 {
        Tensor1::new(c, l, (0..c * l).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_conv(rng: &mut ChaCha8Rng, i: usize, o: usize, k: usize) -> ConvSpec {
        ConvSpec::new(
            i,
            o,
            k,
            (0..i * o * k).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..o).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    /// Direct triple loop over the defining sum.
    fn naive_conv(x: &Tensor1, spec: &ConvSpec) -> Vec<Vec<f64>> {
        let l = x.len() as isize;
        let half = (spec.kernel_size / 2) as isize;
        (0..spec.out_channels)
            .map(|o| {
                (0..l)
                    .map(|tt| {
                        let mut acc = spec.bias[o];
                        for i in 0..spec.in_channels {
                            for k in 0..spec.kernel_size {
                                let src = tt + k as isize - half;
                                if (0..l).contains(&src) {
                                    acc += spec.weight(o, i, k) * x.get(i, src as usize);
                                }
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn conv_examples() {
        let x = t(&[&[1.0, 0.0, 0.0, 1.0]]);
        let spec = ConvSpec::new(1, 1, 3, vec![1.0, 2.0, 3.0], vec![0.0]).unwrap();
        assert_eq!(conv1d(&x, &spec).unwrap().row(0), &[2.0, 1.0, 3.0, 2.0]);
        // the same taps read as a true (flipped) convolution
        let flipped = ConvSpec::new(1, 1, 3, vec![3.0, 2.0, 1.0], vec![0.0]).unwrap();
        assert_eq!(conv1d(&x, &flipped).unwrap().row(0), &[2.0, 3.0, 1.0, 2.0]);

        let x = t(&[&[1.0, -2.0, 3.5], &[0.5, 0.25, -1.0]]);
        let mut delta = ConvSpec::zeros(2, 2, 5);
        delta.weights[2] = 1.0;
        delta.weights[5 + 5 + 5 + 2] = 1.0;
        assert_eq!(conv1d(&x, &delta).unwrap(), x);

        let mut constant = ConvSpec::zeros(2, 3, 3);
        constant.bias = vec![0.5, -1.0, 2.0];
        let out = conv1d(&x, &constant).unwrap();
        assert_eq!(out.row(1), &[-1.0, -1.0, -1.0]);

        assert!(conv1d(&t(&[&[1.0]]), &delta).is_err());
        assert!(ConvSpec::new(1, 1, 2, vec![0.0; 2], vec![0.0]).is_err());
    }

    #[test]
    fn conv_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(i, o, k, l) in &[(1, 3, 7, 20), (4, 2, 3, 5), (3, 3, 7, 3), (2, 5, 1, 9)] {
            let x = random_tensor(&mut rng, i, l);
            let spec = random_conv(&mut rng, i, o, k);
            let fast = conv1d(&x, &spec).unwrap();
            for (row, naive) in fast.rows().iter().zip(naive_conv(&x, &spec)) {
                for (a, b) in row.iter().zip(&naive) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pooling_and_upsampling_examples() {
        assert_eq!(relu(&t(&[&[-1.0, 2.0]])).row(0), &[0.0, 2.0]);
        let (p, arg) = maxpool2(&t(&[&[1.0, 3.0, 2.0, 2.0]])).unwrap();
        assert_eq!(p.row(0), &[3.0, 2.0]);
        assert_eq!(arg, vec![1, 0]);
        assert_eq!(maxpool2(&t(&[&[1.0, 2.0, 3.0]])), Err(NnError::OddLength(3)));
        assert_eq!(avgpool2(&t(&[&[1.0, 3.0, 2.0, 2.0]])).unwrap().row(0), &[2.0, 2.0]);
        assert_eq!(upsample2(&t(&[&[4.0, 5.0]])).row(0), &[4.0, 4.0, 5.0, 5.0]);
        assert_eq!(upsample2_linear(&t(&[&[4.0, 8.0]])).row(0), &[4.0, 5.0, 7.0, 8.0]);
    }

    #[test]
    fn mse_examples() {
        let (loss, g) = mse_loss(&t(&[&[0.0, 2.0]]), &t(&[&[1.0, 1.0]])).unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(g.row(0), &[-1.0, 1.0]);
        let a = t(&[&[0.3, 0.2], &[1.0, 1.0]]);
        assert_eq!(mse_loss(&a, &a).unwrap().0, 0.0);
        let shifted = t(&[&[1.3, 1.2], &[2.0, 2.0]]);
        assert_eq!(mse_loss(&shifted, &a).unwrap().0, 1.0);
        assert!(mse_loss(&a, &t(&[&[1.0, 1.0]])).is_err());
    }

    /// Central differences of `f` at `x`.
    fn numeric_grad(x: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-5;
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                probe[i] = x[i] + h;
                let up = f(&probe);
                probe[i] = x[i] - h;
                let down = f(&probe);
                probe[i] = x[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn assert_close(analytic: &[f64], numeric: &[f64]) {
        for (a, n) in analytic.iter().zip(numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel <= 1e-4, "analytic {a} numeric {n}");
        }
    }

    /// Loss = <weights, layer(x)> so that the upstream gradient is `weights`.
    #[test]
    fn layer_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (c, l) = (3, 8);
        let x = random_tensor(&mut rng, c, l);
        let probe = |len: usize, rng: &mut ChaCha8Rng| random_tensor(rng, c, len);
        let linear = |y: &Tensor1, w: &Tensor1| y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>();
        let at = |v: &[f64]| Tensor1::new(c, l, v.to_vec()).unwrap();

        let w = probe(l, &mut rng);
        let numeric = numeric_grad(x.data(), &|v| linear(&relu(&at(v)), &w));
        assert_close(relu_backward(&relu(&x), &w).data(), &numeric);

        let w = probe(l / 2, &mut rng);
        let (_, arg) = maxpool2(&x).unwrap();
        let numeric = numeric_grad(x.data(), &|v| linear(&maxpool2(&at(v)).unwrap().0, &w));
        assert_close(maxpool2_backward(&arg, &w).data(), &numeric);
        let numeric = numeric_grad(x.data(), &|v| linear(&avgpool2(&at(v)).unwrap(), &w));
        assert_close(avgpool2_backward(&w).data(), &numeric);

        let w = probe(2 * l, &mut rng);
        let numeric = numeric_grad(x.data(), &|v| linear(&upsample2(&at(v)), &w));
        assert_close(upsample2_backward(&w).data(), &numeric);
        let numeric = numeric_grad(x.data(), &|v| linear(&upsample2_linear(&at(v)), &w));
        assert_close(upsample2_linear_backward(&w).data(), &numeric);

        let target = probe(l, &mut rng);
        let (_, g) = mse_loss(&x, &target).unwrap();
        let numeric = numeric_grad(x.data(), &|v| mse_loss(&at(v), &target).unwrap().0);
        assert_close(g.data(), &numeric);

        let spec = random_conv(&mut rng, c, 2, 5);
        let w = random_tensor(&mut rng, 2, l);
        let mut grad = ConvGrad::zeros_like(&spec);
        let gx = conv1d_backward(&x, &spec, &w, &mut grad).unwrap();
        let numeric = numeric_grad(x.data(), &|v| linear(&conv1d(&at(v), &spec).unwrap(), &w));
        assert_close(gx.data(), &numeric);
        let numeric = numeric_grad(&spec.weights, &|v| {
            let s = ConvSpec {
                weights: v.to_vec(),
                ..spec.clone()
            };
            linear(&conv1d(&x, &s).unwrap(), &w)
        });
        assert_close(&grad.weights, &numeric);
        let numeric = numeric_grad(&spec.bias, &|v| {
            let s = ConvSpec {
                bias: v.to_vec(),
                ..spec.clone()
            };
            linear(&conv1d(&x, &s).unwrap(), &w)
        });
        assert_close(&grad.bias, &numeric);
    }
}
