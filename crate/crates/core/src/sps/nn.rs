//! Neural-network primitives in binary64: parameters, GEMM, 3x3/1x1
//! convolutions over the 11x11 grid, batch-norm, linear layers, and leaky
//! ReLU. Activations are laid out channel-major as `[C][B*HW]` so per-channel
//! statistics and im2col rows are contiguous.

use crate::gridworld::{CELLS, GRID};

pub const HW: usize = CELLS;
/// Leaky ReLU negative slope.
pub const LRELU_SLOPE: f64 = 0.01;

/// One named parameter tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    /// L1/L2 regularization applies only to connection weights.
    pub decay: bool,
}

impl Param {
    pub fn new(name: &str, shape: &[usize], decay: bool) -> Param {
        let n: usize = shape.iter().product();
        Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            value: vec![0.0; n],
            grad: vec![0.0; n],
            decay,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// C[m,n] = A[m,k] * B[k,n] + beta*C, all row-major.
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// C[m,n] = A[m,k] * B[n,k]^T + beta*C.
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// C[m,n] = A[k,m]^T * B[k,n] + beta*C.
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), 1, m as isize, b.as_ptr(), n as isize, 1, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Source-cell table for a k*k window with zero padding: entry `kk*HW + p`
/// is the flat source cell for tap `kk` at output cell `p`, or -1 outside.
fn neighbor_table(ksize: usize) -> Vec<i32> {
    let r = (ksize / 2) as i32;
    let mut table = vec![-1i32; ksize * ksize * HW];
    let g = GRID as i32;
    for (kk, (dr, dc)) in (0..ksize * ksize)
        .map(|kk| ((kk / ksize) as i32 - r, (kk % ksize) as i32 - r))
        .enumerate()
    {
        for p in 0..HW {
            let row = p as i32 / g + dr;
            let col = p as i32 % g + dc;
            if row >= 0 && row < g && col >= 0 && col < g {
                table[kk * HW + p] = row * g + col;
            }
        }
    }
    table
}

/// 2D convolution on the 11x11 grid, stride 1, zero padding keeping HW.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub ksize: usize,
    pub weight: Param,
    pub bias: Option<Param>,
    taps: Vec<i32>,
}

impl Conv2d {
    pub fn new(name: &str, in_c: usize, out_c: usize, ksize: usize, bias: bool) -> Conv2d {
        Conv2d {
            in_c,
            out_c,
            ksize,
            weight: Param::new(&format!("{}.weight", name), &[out_c, in_c, ksize, ksize], true),
            bias: bias.then(|| Param::new(&format!("{}.bias", name), &[out_c], false)),
            taps: neighbor_table(ksize),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_c * self.ksize * self.ksize
    }

    /// Builds the column matrix `[in_c*kk][B*HW]` from `x` `[in_c][B*HW]`.
    fn im2col(&self, x: &[f64], batch: usize, col: &mut Vec<f64>) {
        let kk = self.ksize * self.ksize;
        let width = batch * HW;
        col.clear();
        col.resize(self.in_c * kk * width, 0.0);
        for c in 0..self.in_c {
            let xrow = &x[c * width..(c + 1) * width];
            for tap in 0..kk {
                let out_row = &mut col[(c * kk + tap) * width..(c * kk + tap + 1) * width];
                let taps = &self.taps[tap * HW..(tap + 1) * HW];
                for b in 0..batch {
                    let src = &xrow[b * HW..(b + 1) * HW];
                    let dst = &mut out_row[b * HW..(b + 1) * HW];
                    for p in 0..HW {
                        let s = taps[p];
                        dst[p] = if s < 0 { 0.0 } else { src[s as usize] };
                    }
                }
            }
        }
    }

    /// y[out_c][B*HW]; `col` is scratch reused across calls.
    pub fn forward(&self, x: &[f64], batch: usize, col: &mut Vec<f64>, y: &mut Vec<f64>) {
        let width = batch * HW;
        let ck = self.in_c * self.ksize * self.ksize;
        self.im2col(x, batch, col);
        y.clear();
        y.resize(self.out_c * width, 0.0);
        gemm_nn(self.out_c, ck, width, &self.weight.value, col, y, 0.0);
        if let Some(bias) = &self.bias {
            for oc in 0..self.out_c {
                let b = bias.value[oc];
                for v in &mut y[oc * width..(oc + 1) * width] {
                    *v += b;
                }
            }
        }
    }

    /// Accumulates weight/bias gradients and writes dx (if requested).
    pub fn backward(
        &mut self,
        x: &[f64],
        dy: &[f64],
        batch: usize,
        col: &mut Vec<f64>,
        dx: Option<&mut Vec<f64>>,
    ) {
        let width = batch * HW;
        let kk = self.ksize * self.ksize;
        let ck = self.in_c * kk;
        // dW += dY * col^T.
        self.im2col(x, batch, col);
        let mut dw = vec![0.0; self.out_c * ck];
        gemm_nt(self.out_c, width, ck, dy, col, &mut dw, 0.0);
        for (g, d) in self.weight.grad.iter_mut().zip(&dw) {
            *g += d;
        }
        if let Some(bias) = &mut self.bias {
            for oc in 0..self.out_c {
                bias.grad[oc] += dy[oc * width..(oc + 1) * width].iter().sum::<f64>();
            }
        }
        if let Some(dx) = dx {
            // dcol = W^T * dY, then scatter back to cells.
            let mut dcol = vec![0.0; ck * width];
            gemm_tn(ck, self.out_c, width, &self.weight.value, dy, &mut dcol, 0.0);
            dx.clear();
            dx.resize(self.in_c * width, 0.0);
            for c in 0..self.in_c {
                let dxrow = &mut dx[c * width..(c + 1) * width];
                for tap in 0..kk {
                    let drow = &dcol[(c * kk + tap) * width..(c * kk + tap + 1) * width];
                    let taps = &self.taps[tap * HW..(tap + 1) * HW];
                    for b in 0..batch {
                        let src = &drow[b * HW..(b + 1) * HW];
                        let dst = &mut dxrow[b * HW..(b + 1) * HW];
                        for p in 0..HW {
                            let s = taps[p];
                            if s >= 0 {
                                dst[s as usize] += src[p];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Per-channel batch normalization over `[C][N]` activations.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

/// Forward cache for one batch-norm application.
#[derive(Debug, Clone, Default)]
pub struct BnCache {
    xhat: Vec<f64>,
    istd: Vec<f64>,
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize) -> BatchNorm {
        let mut gamma = Param::new(&format!("{}.gamma", name), &[channels], false);
        gamma.value.iter_mut().for_each(|v| *v = 1.0);
        BatchNorm {
            channels,
            gamma,
            beta: Param::new(&format!("{}.beta", name), &[channels], false),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    /// Training mode: batch statistics, running-stat update, cache for backward.
    pub fn forward_train(&mut self, x: &[f64], n: usize, y: &mut Vec<f64>, cache: &mut BnCache) {
        debug_assert_eq!(x.len(), self.channels * n);
        y.clear();
        y.resize(x.len(), 0.0);
        cache.xhat.clear();
        cache.xhat.resize(x.len(), 0.0);
        cache.istd.clear();
        cache.istd.resize(self.channels, 0.0);
        let nf = n as f64;
        for c in 0..self.channels {
            let row = &x[c * n..(c + 1) * n];
            let mean = row.iter().sum::<f64>() / nf;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
            let istd = 1.0 / (var + self.eps).sqrt();
            cache.istd[c] = istd;
            let g = self.gamma.value[c];
            let b = self.beta.value[c];
            let xh = &mut cache.xhat[c * n..(c + 1) * n];
            let yr = &mut y[c * n..(c + 1) * n];
            for i in 0..n {
                let v = (row[i] - mean) * istd;
                xh[i] = v;
                yr[i] = g * v + b;
            }
            let unbiased = if n > 1 { var * nf / (nf - 1.0) } else { var };
            self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean;
            self.running_var[c] = (1.0 - self.momentum) * self.running_var[c] + self.momentum * unbiased;
        }
    }

    /// Inference mode: frozen running statistics.
    pub fn forward_eval(&self, x: &[f64], n: usize, y: &mut Vec<f64>) {
        y.clear();
        y.resize(x.len(), 0.0);
        for c in 0..self.channels {
            let istd = 1.0 / (self.running_var[c] + self.eps).sqrt();
            let mean = self.running_mean[c];
            let g = self.gamma.value[c];
            let b = self.beta.value[c];
            let row = &x[c * n..(c + 1) * n];
            let yr = &mut y[c * n..(c + 1) * n];
            for i in 0..n {
                yr[i] = g * (row[i] - mean) * istd + b;
            }
        }
    }

    /// Backward through the batch statistics; accumulates dgamma/dbeta.
    pub fn backward(&mut self, dy: &[f64], n: usize, cache: &BnCache, dx: &mut Vec<f64>) {
        dx.clear();
        dx.resize(dy.len(), 0.0);
        let nf = n as f64;
        for c in 0..self.channels {
            let dyr = &dy[c * n..(c + 1) * n];
            let xh = &cache.xhat[c * n..(c + 1) * n];
            let sum_dy: f64 = dyr.iter().sum();
            let sum_dy_xhat: f64 = dyr.iter().zip(xh).map(|(d, h)| d * h).sum();
            self.gamma.grad[c] += sum_dy_xhat;
            self.beta.grad[c] += sum_dy;
            let scale = self.gamma.value[c] * cache.istd[c] / nf;
            let dxr = &mut dx[c * n..(c + 1) * n];
            for i in 0..n {
                dxr[i] = scale * (nf * dyr[i] - sum_dy - xh[i] * sum_dy_xhat);
            }
        }
    }
}

/// Fully connected layer over `[B][in]` row-major activations.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(name: &str, in_dim: usize, out_dim: usize) -> Linear {
        Linear {
            in_dim,
            out_dim,
            weight: Param::new(&format!("{}.weight", name), &[out_dim, in_dim], true),
            bias: Param::new(&format!("{}.bias", name), &[out_dim], false),
        }
    }

    pub fn forward(&self, x: &[f64], batch: usize, y: &mut Vec<f64>) {
        y.clear();
        y.resize(batch * self.out_dim, 0.0);
        gemm_nt(batch, self.in_dim, self.out_dim, x, &self.weight.value, y, 0.0);
        for b in 0..batch {
            for (o, bias) in self.bias.value.iter().enumerate() {
                y[b * self.out_dim + o] += bias;
            }
        }
    }

    pub fn backward(
        &mut self,
        x: &[f64],
        dy: &[f64],
        batch: usize,
        dx: Option<&mut Vec<f64>>,
    ) {
        let mut dw = vec![0.0; self.out_dim * self.in_dim];
        gemm_tn(self.out_dim, batch, self.in_dim, dy, x, &mut dw, 0.0);
        for (g, d) in self.weight.grad.iter_mut().zip(&dw) {
            *g += d;
        }
        for b in 0..batch {
            for o in 0..self.out_dim {
                self.bias.grad[o] += dy[b * self.out_dim + o];
            }
        }
        if let Some(dx) = dx {
            dx.clear();
            dx.resize(batch * self.in_dim, 0.0);
            gemm_nn(batch, self.out_dim, self.in_dim, dy, &self.weight.value, dx, 0.0);
        }
    }
}

pub fn lrelu_forward(x: &[f64], y: &mut Vec<f64>) {
    y.clear();
    y.extend(x.iter().map(|&v| if v >= 0.0 { v } else { LRELU_SLOPE * v }));
}

/// dx from dy using the forward input `x`.
pub fn lrelu_backward(x: &[f64], dy: &[f64], dx: &mut Vec<f64>) {
    dx.clear();
    dx.extend(
        x.iter()
            .zip(dy)
            .map(|(&v, &d)| if v >= 0.0 { d } else { LRELU_SLOPE * d }),
    );
}

/// Numerically stable row softmax for `[B][dim]` logits.
pub fn softmax_rows(logits: &[f64], batch: usize, dim: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(batch * dim, 0.0);
    for b in 0..batch {
        let row = &logits[b * dim..(b + 1) * dim];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let orow = &mut out[b * dim..(b + 1) * dim];
        for (o, &l) in orow.iter_mut().zip(row) {
            let e = (l - max).exp();
            *o = e;
            sum += e;
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
}
