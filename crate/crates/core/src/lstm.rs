//! Stacked LSTM with optional bidirectional first layer, with manual BPTT.
//!
//! Gate order within the `4H` pre-activation block is i, f, g, o.
//! Sequences are time-major: `xs[t]` is a `B × I` matrix.

use ndarray::{s, Array2, Axis};
use rand::Rng;

use crate::optim::Params;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDir {
    /// `I × 4H`
    pub w_ih: Array2<f64>,
    /// `H × 4H`
    pub w_hh: Array2<f64>,
    /// `1 × 4H`
    pub b: Array2<f64>,
}

impl LstmDir {
    fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut u = |r, c| Array2::from_shape_fn((r, c), |_| rng.random_range(-k..k));
        let w_ih = u(input, 4 * hidden);
        let w_hh = u(hidden, 4 * hidden);
        let mut b = u(1, 4 * hidden);
        b.slice_mut(s![.., hidden..2 * hidden]).mapv_inplace(|x| x + 1.0);
        Self { w_ih, w_hh, b }
    }

    fn hidden(&self) -> usize {
        self.w_hh.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub fwd: LstmDir,
    pub bwd: Option<LstmDir>,
}

impl LstmLayer {
    pub fn output_dim(&self) -> usize {
        self.fwd.hidden() * if self.bwd.is_some() { 2 } else { 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
}

impl Params for Lstm {
    fn named(&self) -> Vec<(String, &Array2<f64>)> {
        let mut v = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (d, dir) in [("fwd", Some(&l.fwd)), ("bwd", l.bwd.as_ref())] {
                if let Some(dir) = dir {
                    v.push((format!("lstm.{i}.{d}.w_ih"), &dir.w_ih));
                    v.push((format!("lstm.{i}.{d}.w_hh"), &dir.w_hh));
                    v.push((format!("lstm.{i}.{d}.b"), &dir.b));
                }
            }
        }
        v
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut v = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (d, dir) in [("fwd", Some(&mut l.fwd)), ("bwd", l.bwd.as_mut())] {
                if let Some(dir) = dir {
                    v.push((format!("lstm.{i}.{d}.w_ih"), &mut dir.w_ih));
                    v.push((format!("lstm.{i}.{d}.w_hh"), &mut dir.w_hh));
                    v.push((format!("lstm.{i}.{d}.b"), &mut dir.b));
                }
            }
        }
        v
    }
}

struct Step {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    /// Activated gates, `B × 4H`.
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
}

pub struct DirCache {
    steps: Vec<Step>,
    reversed: bool,
}

pub struct LayerCache {
    fwd: DirCache,
    bwd: Option<DirCache>,
}

pub struct LstmCache {
    layers: Vec<LayerCache>,
}

impl Lstm {
    pub fn init(input: usize, hidden: usize, layers: usize, bidirectional: bool, rng: &mut impl Rng) -> Self {
        let mut out = Vec::with_capacity(layers);
        let mut in_dim = input;
        for i in 0..layers {
            let fwd = LstmDir::init(in_dim, hidden, rng);
            let bwd = (bidirectional && i == 0).then(|| LstmDir::init(in_dim, hidden, rng));
            let layer = LstmLayer { fwd, bwd };
            in_dim = layer.output_dim();
            out.push(layer);
        }
        Self { layers: out }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fwd.w_ih.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_dim())
    }

    /// Runs the stack from zero state. Returns per-step outputs and the cache.
    pub fn forward(&self, xs: &[Array2<f64>]) -> (Vec<Array2<f64>>, LstmCache) {
        let mut cur: Vec<Array2<f64>> = xs.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (hf, cf) = run_dir(&layer.fwd, &cur, false);
            let (out, cb) = match &layer.bwd {
                Some(dir) => {
                    let (hb, cb) = run_dir(dir, &cur, true);
                    let out = hf
                        .iter()
                        .zip(&hb)
                        .map(|(a, b)| ndarray::concatenate(Axis(1), &[a.view(), b.view()]).unwrap())
                        .collect();
                    (out, Some(cb))
                }
                None => (hf, None),
            };
            caches.push(LayerCache { fwd: cf, bwd: cb });
            cur = out;
        }
        (cur, LstmCache { layers: caches })
    }

    /// Backpropagates per-step output gradients. Returns parameter gradients
    /// and per-step input gradients.
    pub fn backward(&self, cache: &LstmCache, d_out: &[Array2<f64>]) -> (Lstm, Vec<Array2<f64>>) {
        let mut grads = self.clone();
        for (_, t) in grads.named_mut() {
            t.fill(0.0);
        }
        let mut d_cur: Vec<Array2<f64>> = d_out.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[li];
            let h = layer.fwd.hidden();
            let (d_f, d_b): (Vec<_>, Vec<_>) = if layer.bwd.is_some() {
                d_cur
                    .iter()
                    .map(|d| (d.slice(s![.., ..h]).to_owned(), d.slice(s![.., h..]).to_owned()))
                    .unzip()
            } else {
                (d_cur, Vec::new())
            };
            let mut dx = backprop_dir(&layer.fwd, &lc.fwd, &d_f, &mut grads.layers[li].fwd);
            if let (Some(dir), Some(bc)) = (&layer.bwd, &lc.bwd) {
                let g = grads.layers[li].bwd.as_mut().expect("mirrors params");
                let dxb = backprop_dir(dir, bc, &d_b, g);
                for (a, b) in dx.iter_mut().zip(dxb) {
                    *a += &b;
                }
            }
            d_cur = dx;
        }
        (grads, d_cur)
    }
}

fn run_dir(p: &LstmDir, xs: &[Array2<f64>], reversed: bool) -> (Vec<Array2<f64>>, DirCache) {
    let n = xs.len();
    let h = p.hidden();
    let batch = xs.first().map_or(0, |x| x.nrows());
    let mut hs = vec![Array2::zeros((batch, h)); n];
    let mut steps = Vec::with_capacity(n);
    let mut h_prev = Array2::<f64>::zeros((batch, h));
    let mut c_prev = Array2::<f64>::zeros((batch, h));
    for k in 0..n {
        let t = if reversed { n - 1 - k } else { k };
        let x = &xs[t];
        let mut a = x.dot(&p.w_ih) + h_prev.dot(&p.w_hh) + &p.b;
        a.slice_mut(s![.., ..2 * h]).mapv_inplace(sigmoid);
        a.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(f64::tanh);
        a.slice_mut(s![.., 3 * h..]).mapv_inplace(sigmoid);
        let i = a.slice(s![.., ..h]);
        let f = a.slice(s![.., h..2 * h]);
        let g = a.slice(s![.., 2 * h..3 * h]);
        let o = a.slice(s![.., 3 * h..]);
        let c = &f * &c_prev + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        let h_t = &o * &tanh_c;
        steps.push(Step {
            x: x.clone(),
            h_prev: h_prev.clone(),
            c_prev: c_prev.clone(),
            gates: a.clone(),
            tanh_c,
        });
        hs[t] = h_t.clone();
        h_prev = h_t;
        c_prev = c;
    }
    (hs, DirCache { steps, reversed })
}

fn backprop_dir(p: &LstmDir, cache: &DirCache, d_h: &[Array2<f64>], g: &mut LstmDir) -> Vec<Array2<f64>> {
    let n = cache.steps.len();
    let h = p.hidden();
    let batch = d_h.first().map_or(0, |x| x.nrows());
    let mut dx = vec![Array2::zeros((batch, p.w_ih.nrows())); n];
    let mut dh_next = Array2::<f64>::zeros((batch, h));
    let mut dc_next = Array2::<f64>::zeros((batch, h));
    for k in (0..n).rev() {
        let t = if cache.reversed { n - 1 - k } else { k };
        let st = &cache.steps[k];
        let i = st.gates.slice(s![.., ..h]);
        let f = st.gates.slice(s![.., h..2 * h]);
        let gg = st.gates.slice(s![.., 2 * h..3 * h]);
        let o = st.gates.slice(s![.., 3 * h..]);
        let dh = &d_h[t] + &dh_next;
        let d_o = &dh * &st.tanh_c;
        let dc = &dh * &o * &st.tanh_c.mapv(|v| 1.0 - v * v) + &dc_next;
        let mut da = Array2::<f64>::zeros((batch, 4 * h));
        da.slice_mut(s![.., ..h])
            .assign(&(&dc * &gg * &i.mapv(|v| v * (1.0 - v))));
        da.slice_mut(s![.., h..2 * h])
            .assign(&(&dc * &st.c_prev * &f * &f.mapv(|v| 1.0 - v)));
        da.slice_mut(s![.., 2 * h..3 * h])
            .assign(&(&dc * &i * &gg.mapv(|v| 1.0 - v * v)));
        da.slice_mut(s![.., 3 * h..]).assign(&(&d_o * &o * &o.mapv(|v| 1.0 - v)));
        dc_next = &dc * &f;
        g.w_ih += &st.x.t().dot(&da);
        g.w_hh += &st.h_prev.t().dot(&da);
        g.b += &da.sum_axis(Axis(0)).insert_axis(Axis(0));
        dx[t] = da.dot(&p.w_ih.t());
        dh_next = da.dot(&p.w_hh.t());
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, seeded};

    fn inputs(rng: &mut impl Rng, steps: usize, batch: usize, dim: usize) -> Vec<Array2<f64>> {
        (0..steps)
            .map(|_| Array2::from_shape_fn((batch, dim), |_| normal(rng)))
            .collect()
    }

    #[test]
    fn shapes_and_forget_bias() {
        let mut rng = seeded(1);
        let net = Lstm::init(5, 4, 2, true, &mut rng);
        assert_eq!(net.layers[0].output_dim(), 8);
        assert!(net.layers[1].bwd.is_none());
        assert_eq!(net.layers[1].fwd.w_ih.nrows(), 8);
        assert_eq!(net.output_dim(), 4);
        let b = &net.layers[0].fwd.b;
        assert!(b.slice(s![.., 4..8]).iter().all(|&x| x > 0.5));
        let xs = inputs(&mut rng, 3, 2, 5);
        let (ys, _) = net.forward(&xs);
        assert_eq!(ys.len(), 3);
        assert_eq!(ys[0].shape(), &[2, 4]);
    }

    #[test]
    fn unidirectional_is_causal() {
        let mut rng = seeded(2);
        let net = Lstm::init(3, 4, 2, false, &mut rng);
        let xs = inputs(&mut rng, 5, 1, 3);
        let (a, _) = net.forward(&xs);
        let mut xs2 = xs.clone();
        xs2[4].fill(9.0);
        let (b, _) = net.forward(&xs2);
        for t in 0..4 {
            assert_eq!(a[t], b[t]);
        }
        assert_ne!(a[4], b[4]);
    }

    fn check_grads(bidirectional: bool) {
        let mut rng = seeded(3);
        let net = Lstm::init(3, 4, 2, bidirectional, &mut rng);
        let xs = inputs(&mut rng, 4, 2, 3);
        let w: Vec<Array2<f64>> = inputs(&mut rng, 4, 2, net.output_dim());
        let loss = |n: &Lstm, xs: &[Array2<f64>]| -> f64 {
            let (ys, _) = n.forward(xs);
            ys.iter().zip(&w).map(|(y, w)| (y * w).sum()).sum()
        };
        let (_, cache) = net.forward(&xs);
        let (g, dx) = net.backward(&cache, &w);
        let eps = 1e-6;
        let mut probe = net.clone();
        let names: Vec<String> = net.named().into_iter().map(|(n, _)| n).collect();
        for (k, name) in names.iter().enumerate() {
            let shape = net.named()[k].1.dim();
            for idx in [(0, 0), (shape.0 - 1, shape.1 - 1), (shape.0 / 2, shape.1 / 3)] {
                let orig = probe.named()[k].1[idx];
                probe.named_mut()[k].1[idx] = orig + eps;
                let lp = loss(&probe, &xs);
                probe.named_mut()[k].1[idx] = orig - eps;
                let lm = loss(&probe, &xs);
                probe.named_mut()[k].1[idx] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                let an = g.named()[k].1[idx];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-5 || (fd - an).abs() < 1e-9, "{name}{idx:?}: {fd} vs {an}");
            }
        }
        for t in 0..4 {
            for j in 0..3 {
                let mut xp = xs.clone();
                xp[t][[1, j]] += eps;
                let mut xm = xs.clone();
                xm[t][[1, j]] -= eps;
                let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * eps);
                assert!((fd - dx[t][[1, j]]).abs() < 1e-7, "dx[{t}][1,{j}]");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_grads(false);
    }

    #[test]
    fn bidirectional_gradients_match_finite_differences() {
        check_grads(true);
    }
}
