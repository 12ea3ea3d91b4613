//! Dense math kernels for the translation model.
//!
//! Everything operates on flat row-major `Vec<S>` buffers. The model is small
//! enough that hand-rolled matrix-vector products beat the complexity of a
//! tensor library, and keeping the loops visible makes the backward pass
//! auditable against the forward pass line by line.

use num_traits::Float;

/// Converts an `f64` constant into the working scalar type.
pub(crate) fn s<S: Float>(x: f64) -> S {
    S::from(x).expect("constant out of scalar range")
}

/// One named parameter tensor with its gradient and Adam moment buffers.
///
/// `w`, `g`, `m`, and `v` all have `rows * cols` entries in row-major order.
/// Bias vectors are stored as single-column matrices.
pub(crate) struct Param<S> {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<S>,
    pub g: Vec<S>,
    pub m: Vec<S>,
    pub v: Vec<S>,
}

impl<S: Float> Param<S> {
    pub fn zeros(name: &'static str, rows: usize, cols: usize) -> Param<S> {
        let n = rows * cols;
        Param { name, rows, cols, w: vec![S::zero(); n], g: vec![S::zero(); n], m: vec![S::zero(); n], v: vec![S::zero(); n] }
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.w[r * self.cols..(r + 1) * self.cols]
    }

    /// Adds `d` into the gradient of row `r`.
    pub fn grad_row_add(&mut self, r: usize, d: &[S]) {
        let row = &mut self.g[r * self.cols..(r + 1) * self.cols];
        for (gi, di) in row.iter_mut().zip(d) {
            *gi = *gi + *di;
        }
    }

    /// One Adam update with bias correction at step `t`, then clears the gradient.
    pub fn adam_step(&mut self, lr: f64, t: u64) {
        let b1 = s::<S>(0.9);
        let b2 = s::<S>(0.999);
        let eps = s::<S>(1e-8);
        let c1 = s::<S>(1.0 / (1.0 - 0.9f64.powi(t as i32)));
        let c2 = s::<S>(1.0 / (1.0 - 0.999f64.powi(t as i32)));
        let lr = s::<S>(lr);
        for k in 0..self.w.len() {
            let g = self.g[k];
            self.m[k] = b1 * self.m[k] + (S::one() - b1) * g;
            self.v[k] = b2 * self.v[k] + (S::one() - b2) * g * g;
            let mhat = self.m[k] * c1;
            let vhat = self.v[k] * c2;
            self.w[k] = self.w[k] - lr * mhat / (vhat.sqrt() + eps);
            self.g[k] = S::zero();
        }
    }
}

pub(crate) fn dot<S: Float>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

/// y += s * x
pub(crate) fn axpy<S: Float>(y: &mut [S], scale: S, x: &[S]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + scale * *xi;
    }
}

/// y += A x, with A row-major `rows x cols`.
pub(crate) fn mv_acc<S: Float>(y: &mut [S], a: &[S], rows: usize, cols: usize, x: &[S]) {
    debug_assert_eq!(y.len(), rows);
    debug_assert_eq!(x.len(), cols);
    for r in 0..rows {
        y[r] = y[r] + dot(&a[r * cols..(r + 1) * cols], x);
    }
}

/// y += A^T x, with A row-major `rows x cols`; `x` has `rows` entries.
pub(crate) fn mtv_acc<S: Float>(y: &mut [S], a: &[S], rows: usize, cols: usize, x: &[S]) {
    debug_assert_eq!(y.len(), cols);
    debug_assert_eq!(x.len(), rows);
    for r in 0..rows {
        axpy(y, x[r], &a[r * cols..(r + 1) * cols]);
    }
}

/// G += dy ⊗ x, accumulating an outer product into a `rows x cols` gradient.
pub(crate) fn outer_acc<S: Float>(g: &mut [S], rows: usize, cols: usize, dy: &[S], x: &[S]) {
    debug_assert_eq!(dy.len(), rows);
    debug_assert_eq!(x.len(), cols);
    for r in 0..rows {
        axpy(&mut g[r * cols..(r + 1) * cols], dy[r], x);
    }
}

pub(crate) fn sigmoid<S: Float>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Replaces `v` with softmax(v), guarded against overflow by max subtraction.
pub(crate) fn softmax_in_place<S: Float>(v: &mut [S]) {
    if v.is_empty() {
        return;
    }
    let mut max = v[0];
    for &x in v.iter() {
        if x > max {
            max = x;
        }
    }
    let mut sum = S::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum = sum + *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

/// Saved activations from one LSTM step, enough to run the step backward.
pub(crate) struct LstmCache<S> {
    pub x: Vec<S>,
    pub h_prev: Vec<S>,
    pub c_prev: Vec<S>,
    pub i: Vec<S>,
    pub f: Vec<S>,
    pub g: Vec<S>,
    pub o: Vec<S>,
    pub c: Vec<S>,
    pub tc: Vec<S>,
    pub h: Vec<S>,
}

/// One LSTM step. Gate order in the stacked `4H` pre-activation is i, f, g, o.
pub(crate) fn lstm_step<S: Float>(
    w: &Param<S>,
    u: &Param<S>,
    b: &Param<S>,
    x: Vec<S>,
    h_prev: Vec<S>,
    c_prev: Vec<S>,
) -> LstmCache<S> {
    let hidden = u.cols;
    let mut z = b.w.clone();
    mv_acc(&mut z, &w.w, w.rows, w.cols, &x);
    mv_acc(&mut z, &u.w, u.rows, u.cols, &h_prev);
    let mut i = vec![S::zero(); hidden];
    let mut f = vec![S::zero(); hidden];
    let mut g = vec![S::zero(); hidden];
    let mut o = vec![S::zero(); hidden];
    for k in 0..hidden {
        i[k] = sigmoid(z[k]);
        f[k] = sigmoid(z[hidden + k]);
        g[k] = z[2 * hidden + k].tanh();
        o[k] = sigmoid(z[3 * hidden + k]);
    }
    let mut c = vec![S::zero(); hidden];
    let mut tc = vec![S::zero(); hidden];
    let mut h = vec![S::zero(); hidden];
    for k in 0..hidden {
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        tc[k] = c[k].tanh();
        h[k] = o[k] * tc[k];
    }
    LstmCache { x, h_prev, c_prev, i, f, g, o, c, tc, h }
}

/// Backward pass of [`lstm_step`]. `dh` and `dc_in` are the gradients flowing
/// into this step's `h` and `c`; returns `(dx, dh_prev, dc_prev)` and
/// accumulates parameter gradients in place.
pub(crate) fn lstm_back<S: Float>(
    w: &mut Param<S>,
    u: &mut Param<S>,
    b: &mut Param<S>,
    cache: &LstmCache<S>,
    dh: &[S],
    dc_in: &[S],
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let hidden = u.cols;
    let mut dz = vec![S::zero(); 4 * hidden];
    let mut dc_prev = vec![S::zero(); hidden];
    for k in 0..hidden {
        let doo = dh[k] * cache.tc[k];
        let dtc = dh[k] * cache.o[k];
        let dc = dc_in[k] + dtc * (S::one() - cache.tc[k] * cache.tc[k]);
        let di = dc * cache.g[k];
        let df = dc * cache.c_prev[k];
        let dg = dc * cache.i[k];
        dc_prev[k] = dc * cache.f[k];
        dz[k] = di * cache.i[k] * (S::one() - cache.i[k]);
        dz[hidden + k] = df * cache.f[k] * (S::one() - cache.f[k]);
        dz[2 * hidden + k] = dg * (S::one() - cache.g[k] * cache.g[k]);
        dz[3 * hidden + k] = doo * cache.o[k] * (S::one() - cache.o[k]);
    }
    outer_acc(&mut w.g, w.rows, w.cols, &dz, &cache.x);
    outer_acc(&mut u.g, u.rows, u.cols, &dz, &cache.h_prev);
    for k in 0..4 * hidden {
        b.g[k] = b.g[k] + dz[k];
    }
    let mut dx = vec![S::zero(); w.cols];
    mtv_acc(&mut dx, &w.w, w.rows, w.cols, &dz);
    let mut dh_prev = vec![S::zero(); hidden];
    mtv_acc(&mut dh_prev, &u.w, u.rows, u.cols, &dz);
    (dx, dh_prev, dc_prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_vector_products_match_naive_loops() {
        let a: Vec<f64> = (0..12).map(|k| k as f64 * 0.5 - 2.0).collect();
        let x = vec![1.0, -2.0, 3.0];
        let mut y = vec![0.0; 4];
        mv_acc(&mut y, &a, 4, 3, &x);
        for r in 0..4 {
            let want: f64 = (0..3).map(|c| a[r * 3 + c] * x[c]).sum();
            assert!((y[r] - want).abs() < 1e-12);
        }
        let xt = vec![1.0, 0.5, -1.0, 2.0];
        let mut yt = vec![0.0; 3];
        mtv_acc(&mut yt, &a, 4, 3, &xt);
        for c in 0..3 {
            let want: f64 = (0..4).map(|r| a[r * 3 + c] * xt[r]).sum();
            assert!((yt[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_normalizes_and_orders() {
        let mut v = vec![1.0f64, 3.0, -2.0, 0.5];
        softmax_in_place(&mut v);
        let sum: f64 = v.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(v[1] > v[0] && v[0] > v[3] && v[3] > v[2]);
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        // Single-step check; the full-model check in the training module
        // covers chains of steps and the attention path.
        let hidden = 3;
        let input = 2;
        let fill = |p: &mut Param<f64>, seed: f64| {
            for (k, w) in p.w.iter_mut().enumerate() {
                *w = ((k as f64 + seed) * 0.7).sin() * 0.4;
            }
        };
        let mut w = Param::<f64>::zeros("w", 4 * hidden, input);
        let mut u = Param::<f64>::zeros("u", 4 * hidden, hidden);
        let mut b = Param::<f64>::zeros("b", 4 * hidden, 1);
        fill(&mut w, 0.3);
        fill(&mut u, 1.1);
        fill(&mut b, 2.9);
        let x = vec![0.4, -0.7];
        let h0 = vec![0.1, -0.2, 0.3];
        let c0 = vec![-0.3, 0.2, 0.1];
        // Scalar objective: sum of h plus half the sum of c.
        let loss = |w: &Param<f64>, u: &Param<f64>, b: &Param<f64>| {
            let cache = lstm_step(w, u, b, x.clone(), h0.clone(), c0.clone());
            cache.h.iter().sum::<f64>() + 0.5 * cache.c.iter().sum::<f64>()
        };
        let cache = lstm_step(&w, &u, &b, x.clone(), h0.clone(), c0.clone());
        let dh = vec![1.0; hidden];
        let dc = vec![0.5; hidden];
        lstm_back(&mut w, &mut u, &mut b, &cache, &dh, &dc);
        let step = 1e-5;
        for k in 0..w.w.len() {
            let keep = w.w[k];
            w.w[k] = keep + step;
            let hi = loss(&w, &u, &b);
            w.w[k] = keep - step;
            let lo = loss(&w, &u, &b);
            w.w[k] = keep;
            let numeric = (hi - lo) / (2.0 * step);
            assert!((w.g[k] - numeric).abs() < 1e-7, "w[{k}]: {} vs {numeric}", w.g[k]);
        }
        for k in 0..u.w.len() {
            let keep = u.w[k];
            u.w[k] = keep + step;
            let hi = loss(&w, &u, &b);
            u.w[k] = keep - step;
            let lo = loss(&w, &u, &b);
            u.w[k] = keep;
            let numeric = (hi - lo) / (2.0 * step);
            assert!((u.g[k] - numeric).abs() < 1e-7);
        }
    }

    #[test]
    fn adam_moves_against_the_gradient_and_clears_it() {
        let mut p = Param::<f32>::zeros("p", 2, 2);
        p.w = vec![1.0, -1.0, 0.5, 0.0];
        p.g = vec![1.0, -2.0, 0.0, 3.0];
        let before = p.w.clone();
        p.adam_step(1e-2, 1);
        assert!(p.w[0] < before[0]);
        assert!(p.w[1] > before[1]);
        assert_eq!(p.w[2], before[2]);
        assert!(p.w[3] < before[3]);
        assert!(p.g.iter().all(|&g| g == 0.0));
    }
}
