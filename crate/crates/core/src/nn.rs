//! Multilayer perceptrons over a flat parameter vector, with hand-written
//! reverse-mode differentiation.
//!
//! A model owns one `Vec<f64>` of parameters; each [`Mlp`] is a view into a
//! contiguous range of it. Besides the usual forward/backward pair there is
//! a forward-tangent pass (value plus directional derivative) and its
//! reverse sweep. The pair is what makes energy-gradient models trainable:
//! the prediction uses `∇_x H(x)`, so the loss gradient needs derivatives of
//! a Jacobian-vector product with respect to the weights.
//!
//! All hidden layers use `tanh`; the output layer is linear. Weights start
//! Glorot-uniform, biases at zero.

use rand::Rng;

/// Shape of one network: `input -> hidden^depth -> output`, `depth` counting
/// hidden layers (so depth 1 has no hidden-to-hidden matrix).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MlpShape {
    pub input: usize,
    pub output: usize,
    pub hidden: usize,
    pub depth: usize,
}

impl MlpShape {
    pub fn param_count(&self) -> usize {
        self.hidden * (self.input + 1)
            + (self.depth - 1) * self.hidden * (self.hidden + 1)
            + self.output * (self.hidden + 1)
    }
}

/// Offsets of one layer inside the shared parameter vector.
#[derive(Clone, Copy, Debug)]
struct Layer {
    w: usize,
    b: usize,
    rows: usize,
    cols: usize,
}

/// A view into a model parameter vector, plus precomputed layer offsets.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub shape: MlpShape,
    pub offset: usize,
    layers: Vec<Layer>,
}

/// Reusable activation storage for one network. Holding both the value and
/// tangent halves keeps hot loops allocation-free.
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// `acts[0]` is the input, `acts[l]` for `l >= 1` the post-tanh layer l.
    acts: Vec<Vec<f64>>,
    pub out: Vec<f64>,
    tan_acts: Vec<Vec<f64>>,
    /// Preactivation tangents per hidden layer, needed by the reverse sweep.
    tan_pre: Vec<Vec<f64>>,
    pub tan_out: Vec<f64>,
    scratch_a: Vec<f64>,
    scratch_b: Vec<f64>,
    scratch_c: Vec<f64>,
    scratch_d: Vec<f64>,
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for c in 0..cols {
            acc += row[c] * x[c];
        }
        out[r] = acc;
    }
}

fn matvec_t(w: &[f64], rows: usize, cols: usize, d: &[f64], out: &mut [f64]) {
    out[..cols].fill(0.0);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let dr = d[r];
        for c in 0..cols {
            out[c] += row[c] * dr;
        }
    }
}

fn outer_acc(gw: &mut [f64], rows: usize, cols: usize, d: &[f64], x: &[f64]) {
    for r in 0..rows {
        let row = &mut gw[r * cols..(r + 1) * cols];
        let dr = d[r];
        for c in 0..cols {
            row[c] += dr * x[c];
        }
    }
}

impl Mlp {
    /// Create a view with parameters at `offset` in the model vector.
    pub fn new(shape: MlpShape, offset: usize) -> Self {
        assert!(shape.input > 0 && shape.output > 0 && shape.hidden > 0 && shape.depth > 0);
        let mut layers = Vec::with_capacity(shape.depth + 1);
        let mut at = offset;
        for l in 0..=shape.depth {
            let (rows, cols) = if l == shape.depth {
                (shape.output, shape.hidden)
            } else if l == 0 {
                (shape.hidden, shape.input)
            } else {
                (shape.hidden, shape.hidden)
            };
            layers.push(Layer { w: at, b: at + rows * cols, rows, cols });
            at += rows * cols + rows;
        }
        debug_assert_eq!(at - offset, shape.param_count());
        Mlp { shape, offset, layers }
    }

    pub fn param_count(&self) -> usize {
        self.shape.param_count()
    }

    pub fn end(&self) -> usize {
        self.offset + self.param_count()
    }

    /// Glorot-uniform weights, zero biases, drawn layer by layer in order.
    pub fn init<R: Rng>(&self, theta: &mut [f64], rng: &mut R) {
        for layer in &self.layers {
            let limit = (6.0 / (layer.cols + layer.rows) as f64).sqrt();
            for w in &mut theta[layer.w..layer.w + layer.rows * layer.cols] {
                *w = rng.random_range(-limit..=limit);
            }
            theta[layer.b..layer.b + layer.rows].fill(0.0);
        }
    }

    pub fn new_cache(&self) -> MlpCache {
        let s = &self.shape;
        let mut acts = Vec::with_capacity(s.depth + 1);
        acts.push(vec![0.0; s.input]);
        for _ in 0..s.depth {
            acts.push(vec![0.0; s.hidden]);
        }
        let tan_acts = acts.clone();
        let tan_pre = vec![vec![0.0; s.hidden]; s.depth];
        let wide = s.hidden.max(s.input).max(s.output);
        MlpCache {
            acts,
            out: vec![0.0; s.output],
            tan_acts,
            tan_pre,
            tan_out: vec![0.0; s.output],
            scratch_a: vec![0.0; wide],
            scratch_b: vec![0.0; wide],
            scratch_c: vec![0.0; wide],
            scratch_d: vec![0.0; wide],
        }
    }

    /// Plain forward pass; fills the value half of the cache.
    pub fn forward(&self, theta: &[f64], x: &[f64], cache: &mut MlpCache) {
        debug_assert_eq!(x.len(), self.shape.input);
        cache.acts[0].copy_from_slice(x);
        for l in 0..self.shape.depth {
            let layer = self.layers[l];
            let (prev, rest) = cache.acts.split_at_mut(l + 1);
            let z = &mut rest[0];
            matvec(&theta[layer.w..], layer.rows, layer.cols, &prev[l], z);
            for (zi, bi) in z.iter_mut().zip(&theta[layer.b..layer.b + layer.rows]) {
                *zi = (*zi + bi).tanh();
            }
        }
        let fin = self.layers[self.shape.depth];
        matvec(&theta[fin.w..], fin.rows, fin.cols, &cache.acts[self.shape.depth], &mut cache.out);
        for (oi, bi) in cache.out.iter_mut().zip(&theta[fin.b..fin.b + fin.rows]) {
            *oi += bi;
        }
    }

    /// Reverse pass for a forward() call still present in `cache`.
    /// Accumulates parameter gradients into `grad` (same layout as `theta`)
    /// when given, and the input adjoint into `d_input` when given.
    pub fn backward(
        &self,
        theta: &[f64],
        cache: &mut MlpCache,
        d_out: &[f64],
        mut grad: Option<&mut [f64]>,
        d_input: Option<&mut [f64]>,
    ) {
        debug_assert_eq!(d_out.len(), self.shape.output);
        let fin = self.layers[self.shape.depth];
        if let Some(g) = grad.as_deref_mut() {
            outer_acc(&mut g[fin.w..], fin.rows, fin.cols, d_out, &cache.acts[self.shape.depth]);
            for (gb, d) in g[fin.b..fin.b + fin.rows].iter_mut().zip(d_out) {
                *gb += d;
            }
        }
        matvec_t(&theta[fin.w..], fin.rows, fin.cols, d_out, &mut cache.scratch_a);

        for l in (0..self.shape.depth).rev() {
            let layer = self.layers[l];
            let z = &cache.acts[l + 1];
            // scratch_a currently holds the adjoint of z; convert to the
            // preactivation adjoint in scratch_b.
            for i in 0..layer.rows {
                cache.scratch_b[i] = cache.scratch_a[i] * (1.0 - z[i] * z[i]);
            }
            if let Some(g) = grad.as_deref_mut() {
                outer_acc(
                    &mut g[layer.w..],
                    layer.rows,
                    layer.cols,
                    &cache.scratch_b[..layer.rows],
                    &cache.acts[l],
                );
                for (gb, d) in g[layer.b..layer.b + layer.rows].iter_mut().zip(&cache.scratch_b) {
                    *gb += d;
                }
            }
            matvec_t(
                &theta[layer.w..],
                layer.rows,
                layer.cols,
                &cache.scratch_b[..layer.rows],
                &mut cache.scratch_a,
            );
        }
        if let Some(d) = d_input {
            d.copy_from_slice(&cache.scratch_a[..self.shape.input]);
        }
    }

    /// Forward pass carrying a directional derivative: computes `out` and
    /// `tan_out = J(x) dir` in one sweep, caching everything the reverse
    /// sweep needs.
    pub fn forward_tangent(&self, theta: &[f64], x: &[f64], dir: &[f64], cache: &mut MlpCache) {
        debug_assert_eq!(dir.len(), self.shape.input);
        cache.acts[0].copy_from_slice(x);
        cache.tan_acts[0].copy_from_slice(dir);
        for l in 0..self.shape.depth {
            let layer = self.layers[l];
            let (prev, rest) = cache.acts.split_at_mut(l + 1);
            let z = &mut rest[0];
            matvec(&theta[layer.w..], layer.rows, layer.cols, &prev[l], z);
            let (tprev, trest) = cache.tan_acts.split_at_mut(l + 1);
            let tz = &mut trest[0];
            matvec(&theta[layer.w..], layer.rows, layer.cols, &tprev[l], tz);
            cache.tan_pre[l][..layer.rows].copy_from_slice(&tz[..layer.rows]);
            for i in 0..layer.rows {
                let v = (z[i] + theta[layer.b + i]).tanh();
                z[i] = v;
                tz[i] *= 1.0 - v * v;
            }
        }
        let fin = self.layers[self.shape.depth];
        let last = self.shape.depth;
        matvec(&theta[fin.w..], fin.rows, fin.cols, &cache.acts[last], &mut cache.out);
        for (oi, bi) in cache.out.iter_mut().zip(&theta[fin.b..fin.b + fin.rows]) {
            *oi += bi;
        }
        matvec(&theta[fin.w..], fin.rows, fin.cols, &cache.tan_acts[last], &mut cache.tan_out);
    }

    /// Reverse sweep of [`Mlp::forward_tangent`]: accumulates into `grad`
    /// the parameter gradient of `<d_out, out> + <d_tan_out, tan_out>`.
    pub fn backward_tangent(
        &self,
        theta: &[f64],
        cache: &mut MlpCache,
        d_out: &[f64],
        d_tan_out: &[f64],
        grad: &mut [f64],
    ) {
        let fin = self.layers[self.shape.depth];
        let last = self.shape.depth;
        outer_acc(&mut grad[fin.w..], fin.rows, fin.cols, d_out, &cache.acts[last]);
        outer_acc(&mut grad[fin.w..], fin.rows, fin.cols, d_tan_out, &cache.tan_acts[last]);
        for (gb, d) in grad[fin.b..fin.b + fin.rows].iter_mut().zip(d_out) {
            *gb += d;
        }
        // scratch_a = value adjoint, scratch_c = tangent adjoint.
        matvec_t(&theta[fin.w..], fin.rows, fin.cols, d_out, &mut cache.scratch_a);
        matvec_t(&theta[fin.w..], fin.rows, fin.cols, d_tan_out, &mut cache.scratch_c);

        for l in (0..self.shape.depth).rev() {
            let layer = self.layers[l];
            let z = &cache.acts[l + 1];
            let tz_pre = &cache.tan_pre[l];
            for i in 0..layer.rows {
                let s = 1.0 - z[i] * z[i];
                // d(tanh') = -2 z (1 - z^2) feeding the tangent product rule.
                cache.scratch_b[i] =
                    cache.scratch_a[i] * s - 2.0 * cache.scratch_c[i] * tz_pre[i] * z[i] * s;
                cache.scratch_d[i] = cache.scratch_c[i] * s;
            }
            outer_acc(
                &mut grad[layer.w..],
                layer.rows,
                layer.cols,
                &cache.scratch_b[..layer.rows],
                &cache.acts[l],
            );
            outer_acc(
                &mut grad[layer.w..],
                layer.rows,
                layer.cols,
                &cache.scratch_d[..layer.rows],
                &cache.tan_acts[l],
            );
            for (gb, d) in grad[layer.b..layer.b + layer.rows].iter_mut().zip(&cache.scratch_b) {
                *gb += d;
            }
            matvec_t(
                &theta[layer.w..],
                layer.rows,
                layer.cols,
                &cache.scratch_b[..layer.rows],
                &mut cache.scratch_a,
            );
            matvec_t(
                &theta[layer.w..],
                layer.rows,
                layer.cols,
                &cache.scratch_d[..layer.rows],
                &mut cache.scratch_c,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(shape: MlpShape, seed: u64) -> (Mlp, Vec<f64>, ChaCha8Rng) {
        let mlp = Mlp::new(shape, 0);
        let mut theta = vec![0.0; mlp.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        mlp.init(&mut theta, &mut rng);
        // Nonzero biases exercise every term of the reverse sweeps.
        for layer in &mlp.layers {
            for b in &mut theta[layer.b..layer.b + layer.rows] {
                *b = rng.random_range(-0.3..=0.3);
            }
        }
        (mlp, theta, rng)
    }

    #[test]
    fn param_count_formula() {
        let shape = MlpShape { input: 3, output: 5, hidden: 4, depth: 2 };
        // 4*(3+1) weights+biases in, 4*(4+1) hidden, 5*(4+1) out.
        assert_eq!(shape.param_count(), 16 + 20 + 25);
        let shallow = MlpShape { input: 2, output: 1, hidden: 3, depth: 1 };
        assert_eq!(shallow.param_count(), 9 + 4);
    }

    #[test]
    fn forward_matches_hand_computation() {
        let shape = MlpShape { input: 2, output: 1, hidden: 2, depth: 1 };
        let mlp = Mlp::new(shape, 0);
        // W0 = [[1, -1], [0.5, 2]], b0 = [0.1, -0.2], W1 = [[2, 3]], b1 = [0.25]
        let theta = vec![1.0, -1.0, 0.5, 2.0, 0.1, -0.2, 2.0, 3.0, 0.25];
        let mut cache = mlp.new_cache();
        let x = [0.3, -0.7];
        mlp.forward(&theta, &x, &mut cache);
        let h1 = (0.3_f64 + 0.7 + 0.1).tanh();
        let h2 = (0.15_f64 - 1.4 - 0.2).tanh();
        let expect = 2.0 * h1 + 3.0 * h2 + 0.25;
        assert!((cache.out[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn glorot_init_respects_limits() {
        let shape = MlpShape { input: 7, output: 2, hidden: 5, depth: 3 };
        let mlp = Mlp::new(shape, 0);
        let mut theta = vec![9.0; mlp.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        mlp.init(&mut theta, &mut rng);
        for layer in &mlp.layers {
            let limit = (6.0 / (layer.rows + layer.cols) as f64).sqrt();
            for &w in &theta[layer.w..layer.w + layer.rows * layer.cols] {
                assert!(w.abs() <= limit);
            }
            for &b in &theta[layer.b..layer.b + layer.rows] {
                assert_eq!(b, 0.0);
            }
        }
    }

    /// Central finite difference of a scalar function of theta.
    fn fd_grad(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
        let mut g = Vec::with_capacity(theta.len());
        let mut t = theta.to_vec();
        for i in 0..theta.len() {
            t[i] = theta[i] + h;
            let fp = f(&t);
            t[i] = theta[i] - h;
            let fm = f(&t);
            t[i] = theta[i];
            g.push((fp - fm) / (2.0 * h));
        }
        g
    }

    fn assert_close(a: &[f64], b: &[f64], rel: f64) {
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            let scale = 1.0_f64.max(x.abs()).max(y.abs());
            assert!((x - y).abs() <= rel * scale, "component {i}: {x} vs {y}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let shape = MlpShape { input: 3, output: 2, hidden: 4, depth: 2 };
        let (mlp, theta, mut rng) = setup(shape, 1);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let c: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect();

        let mut cache = mlp.new_cache();
        mlp.forward(&theta, &x, &mut cache);
        let mut grad = vec![0.0; theta.len()];
        let mut d_input = vec![0.0; 3];
        mlp.backward(&theta, &mut cache, &c, Some(&mut grad), Some(&mut d_input));

        let mut cache2 = mlp.new_cache();
        let fd = fd_grad(
            |t| {
                mlp.forward(t, &x, &mut cache2);
                cache2.out.iter().zip(&c).map(|(o, ci)| o * ci).sum()
            },
            &theta,
            1e-6,
        );
        assert_close(&grad, &fd, 1e-7);

        // Input adjoint against finite differences in x.
        let mut xt = x.clone();
        for i in 0..3 {
            let h = 1e-6;
            xt[i] = x[i] + h;
            mlp.forward(&theta, &xt, &mut cache2);
            let fp: f64 = cache2.out.iter().zip(&c).map(|(o, ci)| o * ci).sum();
            xt[i] = x[i] - h;
            mlp.forward(&theta, &xt, &mut cache2);
            let fm: f64 = cache2.out.iter().zip(&c).map(|(o, ci)| o * ci).sum();
            xt[i] = x[i];
            assert!((d_input[i] - (fp - fm) / (2.0 * h)).abs() < 1e-7);
        }
    }

    #[test]
    fn tangent_matches_directional_difference() {
        let shape = MlpShape { input: 4, output: 3, hidden: 5, depth: 3 };
        let (mlp, theta, mut rng) = setup(shape, 2);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let mut cache = mlp.new_cache();
        mlp.forward_tangent(&theta, &x, &v, &mut cache);
        let tan = cache.tan_out.clone();
        let value = cache.out.clone();

        let h = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let mut c2 = mlp.new_cache();
        mlp.forward(&theta, &xp, &mut c2);
        let op = c2.out.clone();
        mlp.forward(&theta, &xm, &mut c2);
        let om = c2.out.clone();
        for i in 0..3 {
            assert!((tan[i] - (op[i] - om[i]) / (2.0 * h)).abs() < 1e-8);
        }
        // The value half must agree with a plain forward.
        mlp.forward(&theta, &x, &mut c2);
        assert_eq!(value, c2.out);
    }

    #[test]
    fn backward_tangent_matches_finite_differences() {
        let shape = MlpShape { input: 3, output: 2, hidden: 4, depth: 3 };
        let (mlp, theta, mut rng) = setup(shape, 3);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let c1: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let c2: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect();

        let mut cache = mlp.new_cache();
        mlp.forward_tangent(&theta, &x, &v, &mut cache);
        let mut grad = vec![0.0; theta.len()];
        mlp.backward_tangent(&theta, &mut cache, &c1, &c2, &mut grad);

        let mut sc = mlp.new_cache();
        let fd = fd_grad(
            |t| {
                mlp.forward_tangent(t, &x, &v, &mut sc);
                let a: f64 = sc.out.iter().zip(&c1).map(|(o, ci)| o * ci).sum();
                let b: f64 = sc.tan_out.iter().zip(&c2).map(|(o, ci)| o * ci).sum();
                a + b
            },
            &theta,
            1e-6,
        );
        assert_close(&grad, &fd, 1e-6);
    }

    #[test]
    fn offsets_support_packed_parameter_vectors() {
        // Two networks sharing one theta; gradients land in their own ranges.
        let s1 = MlpShape { input: 2, output: 1, hidden: 3, depth: 1 };
        let m1 = Mlp::new(s1, 0);
        let s2 = MlpShape { input: 2, output: 2, hidden: 2, depth: 2 };
        let m2 = Mlp::new(s2, m1.end());
        let total = m1.param_count() + m2.param_count();
        assert_eq!(m2.end(), total);
        let mut theta = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        m1.init(&mut theta, &mut rng);
        m2.init(&mut theta, &mut rng);

        let mut cache = m1.new_cache();
        m1.forward(&theta, &[0.5, -0.5], &mut cache);
        let mut grad = vec![0.0; total];
        m1.backward(&theta, &mut cache, &[1.0], Some(&mut grad), None);
        assert!(grad[..m1.param_count()].iter().any(|g| *g != 0.0));
        assert!(grad[m1.param_count()..].iter().all(|g| *g == 0.0));
    }
}
