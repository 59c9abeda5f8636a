//! Patch embedding over 3×3 token windows.
//!
//! Each window is embedded token-by-token into an `E_int`-channel 3×3 map,
//! mixed with a same-padded 3×3 convolution of itself through a per-cell
//! sigmoid gate, flattened channel-major, projected to `D` and layer-normalised:
//!
//! ```text
//! emb   = W_emb[X]                               (E_int × 3 × 3)
//! patch = conv3x3(emb, W_patch, pad = 1)         (E_int × 3 × 3)
//! mix   = σ(α) ⊙ emb + (1 − σ(α)) ⊙ patch
//! E     = LayerNorm(flatten(mix) · W_proj)       (D)
//! ```
//!
//! `E_int = max(9, ⌊D/9⌋)`. Row 0 of `W_emb` (padding) is pinned to zero.

use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::optim::Params;
use crate::tokenizer::Token;

pub const KERNEL: usize = 3;
const CELLS: usize = KERNEL * KERNEL;
pub const LAYER_NORM_EPS: f64 = 1e-5;

pub fn internal_dim(embed_dim: usize) -> usize {
    (embed_dim / CELLS).max(9)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PxByEmbedParams {
    /// `V × E_int`
    pub w_emb: Array2<f64>,
    /// `E_out × (E_in · 9)`, kernel cell index `kh * 3 + kw`.
    pub w_patch: Array2<f64>,
    /// `(E_int · 9) × D`
    pub w_proj: Array2<f64>,
    /// `1 × 9` gate logits.
    pub alpha: Array2<f64>,
    pub ln_gain: Array2<f64>,
    pub ln_bias: Array2<f64>,
}

impl Params for PxByEmbedParams {
    fn named(&self) -> Vec<(String, &Array2<f64>)> {
        vec![
            ("pxby.w_emb".into(), &self.w_emb),
            ("pxby.w_patch".into(), &self.w_patch),
            ("pxby.w_proj".into(), &self.w_proj),
            ("pxby.alpha".into(), &self.alpha),
            ("pxby.ln_gain".into(), &self.ln_gain),
            ("pxby.ln_bias".into(), &self.ln_bias),
        ]
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        vec![
            ("pxby.w_emb".into(), &mut self.w_emb),
            ("pxby.w_patch".into(), &mut self.w_patch),
            ("pxby.w_proj".into(), &mut self.w_proj),
            ("pxby.alpha".into(), &mut self.alpha),
            ("pxby.ln_gain".into(), &mut self.ln_gain),
            ("pxby.ln_bias".into(), &mut self.ln_bias),
        ]
    }
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl PxByEmbedParams {
    pub fn init(vocab: usize, embed_dim: usize, rng: &mut impl Rng) -> Self {
        let e = internal_dim(embed_dim);
        let mut w_emb = uniform(rng, vocab, e, 1.0);
        w_emb.row_mut(0).fill(0.0);
        let conv_fan_in = (e * CELLS) as f64;
        Self {
            w_emb,
            w_patch: uniform(rng, e, e * CELLS, 1.0 / conv_fan_in.sqrt()),
            w_proj: uniform(rng, e * CELLS, embed_dim, 1.0 / conv_fan_in.sqrt()),
            alpha: Array2::zeros((1, CELLS)),
            ln_gain: Array2::ones((1, embed_dim)),
            ln_bias: Array2::zeros((1, embed_dim)),
        }
    }

    pub fn vocab(&self) -> usize {
        self.w_emb.nrows()
    }

    pub fn internal_dim(&self) -> usize {
        self.w_emb.ncols()
    }

    pub fn embed_dim(&self) -> usize {
        self.w_proj.ncols()
    }
}

struct Cache {
    ids: Vec<[Token; CELLS]>,
    batch: usize,
    len: usize,
    /// `N × (E·9)`, channel-major per row.
    emb: Array2<f64>,
    patch: Array2<f64>,
    flat: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

/// Gradients of one backward pass.
#[derive(Debug, Clone)]
pub struct PxByEmbedGrads {
    pub params: PxByEmbedParams,
    /// `N × (E·9)` gradient w.r.t. the looked-up embeddings (before mixing).
    pub input_embeddings: Array2<f64>,
}

pub struct PxByEmbed {
    pub params: PxByEmbedParams,
    cache: Option<Cache>,
}

impl PxByEmbed {
    pub fn new(params: PxByEmbedParams) -> Self {
        Self { params, cache: None }
    }

    /// `ids` holds `batch · len` windows in batch-major order; returns `B × L × D`.
    pub fn forward(&mut self, ids: &[[Token; CELLS]], batch: usize, len: usize) -> Result<Array3<f64>> {
        if ids.len() != batch * len {
            return Err(Error::Shape(format!(
                "{} windows for batch {batch} × len {len}",
                ids.len()
            )));
        }
        let p = &self.params;
        let v = p.vocab();
        let e = p.internal_dim();
        let d = p.embed_dim();
        let n = ids.len();
        let mut emb = Array2::<f64>::zeros((n, e * CELLS));
        for (r, win) in ids.iter().enumerate() {
            for (cell, &id) in win.iter().enumerate() {
                let id = id as usize;
                if id >= v {
                    return Err(Error::TokenOutOfRange { id, vocab: v });
                }
                for c in 0..e {
                    emb[[r, c * CELLS + cell]] = p.w_emb[[id, c]];
                }
            }
        }
        let patch = conv3x3(&emb, &p.w_patch, e);
        let gate: Vec<f64> = p.alpha.iter().map(|&a| sigmoid(a)).collect();
        let mut flat = Array2::<f64>::zeros((n, e * CELLS));
        for r in 0..n {
            for c in 0..e {
                for cell in 0..CELLS {
                    let k = c * CELLS + cell;
                    flat[[r, k]] = gate[cell] * emb[[r, k]] + (1.0 - gate[cell]) * patch[[r, k]];
                }
            }
        }
        let proj = flat.dot(&p.w_proj);
        let mut xhat = Array2::<f64>::zeros((n, d));
        let mut inv_std = Vec::with_capacity(n);
        let mut out = Array3::<f64>::zeros((batch, len, d));
        for r in 0..n {
            let row = proj.row(r);
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for j in 0..d {
                let xh = (row[j] - mean) * is;
                xhat[[r, j]] = xh;
                out[[r / len, r % len, j]] = p.ln_gain[[0, j]] * xh + p.ln_bias[[0, j]];
            }
        }
        self.cache = Some(Cache {
            ids: ids.to_vec(),
            batch,
            len,
            emb,
            patch,
            flat,
            xhat,
            inv_std,
        });
        Ok(out)
    }

    /// Backpropagates `d_out` (`B × L × D`) through the cached forward pass.
    pub fn backward(&self, d_out: &Array3<f64>) -> Result<PxByEmbedGrads> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        let p = &self.params;
        let e = p.internal_dim();
        let d = p.embed_dim();
        let n = cache.batch * cache.len;
        if d_out.shape() != [cache.batch, cache.len, d] {
            return Err(Error::Shape(format!("upstream gradient shape {:?}", d_out.shape())));
        }
        let d_out = d_out.to_shape((n, d)).expect("contiguous").to_owned();

        let mut g = PxByEmbedParams {
            w_emb: Array2::zeros(p.w_emb.raw_dim()),
            w_patch: Array2::zeros(p.w_patch.raw_dim()),
            w_proj: Array2::zeros(p.w_proj.raw_dim()),
            alpha: Array2::zeros(p.alpha.raw_dim()),
            ln_gain: Array2::zeros(p.ln_gain.raw_dim()),
            ln_bias: Array2::zeros(p.ln_bias.raw_dim()),
        };

        // Layer norm.
        let mut d_proj = Array2::<f64>::zeros((n, d));
        for r in 0..n {
            let mut mean_dx = 0.0;
            let mut mean_dx_x = 0.0;
            for j in 0..d {
                let go = d_out[[r, j]];
                g.ln_gain[[0, j]] += go * cache.xhat[[r, j]];
                g.ln_bias[[0, j]] += go;
                let dx = go * p.ln_gain[[0, j]];
                mean_dx += dx;
                mean_dx_x += dx * cache.xhat[[r, j]];
            }
            mean_dx /= d as f64;
            mean_dx_x /= d as f64;
            for j in 0..d {
                let dx = d_out[[r, j]] * p.ln_gain[[0, j]];
                d_proj[[r, j]] = cache.inv_std[r] * (dx - mean_dx - cache.xhat[[r, j]] * mean_dx_x);
            }
        }

        g.w_proj = cache.flat.t().dot(&d_proj);
        let d_flat = d_proj.dot(&p.w_proj.t());

        let gate: Vec<f64> = p.alpha.iter().map(|&a| sigmoid(a)).collect();
        let mut d_emb = Array2::<f64>::zeros((n, e * CELLS));
        let mut d_patch = Array2::<f64>::zeros((n, e * CELLS));
        for r in 0..n {
            for c in 0..e {
                for cell in 0..CELLS {
                    let k = c * CELLS + cell;
                    let df = d_flat[[r, k]];
                    let s = gate[cell];
                    g.alpha[[0, cell]] += df * (cache.emb[[r, k]] - cache.patch[[r, k]]) * s * (1.0 - s);
                    d_emb[[r, k]] += s * df;
                    d_patch[[r, k]] = (1.0 - s) * df;
                }
            }
        }

        // Convolution: weights and input.
        for r in 0..n {
            for o in 0..e {
                for cell in 0..CELLS {
                    let go = d_patch[[r, o * CELLS + cell]];
                    if go == 0.0 {
                        continue;
                    }
                    let (y, x) = ((cell / 3) as isize, (cell % 3) as isize);
                    for kh in 0..KERNEL {
                        for kw in 0..KERNEL {
                            let (sy, sx) = (y + kh as isize - 1, x + kw as isize - 1);
                            if !(0..3).contains(&sy) || !(0..3).contains(&sx) {
                                continue;
                            }
                            let src = (sy * 3 + sx) as usize;
                            let kcell = kh * KERNEL + kw;
                            for i in 0..e {
                                let wi = i * CELLS + kcell;
                                g.w_patch[[o, wi]] += go * cache.emb[[r, i * CELLS + src]];
                                d_emb[[r, i * CELLS + src]] += go * p.w_patch[[o, wi]];
                            }
                        }
                    }
                }
            }
        }

        for (r, win) in cache.ids.iter().enumerate() {
            for (cell, &id) in win.iter().enumerate() {
                if id == 0 {
                    continue;
                }
                for c in 0..e {
                    g.w_emb[[id as usize, c]] += d_emb[[r, c * CELLS + cell]];
                }
            }
        }

        Ok(PxByEmbedGrads {
            params: g,
            input_embeddings: d_emb,
        })
    }
}

/// Same-padded 3×3 cross-correlation, no bias. Rows of `input` are
/// channel-major `E × 9` maps; `weight` is `E_out × (E_in · 9)`.
fn conv3x3(input: &Array2<f64>, weight: &Array2<f64>, e: usize) -> Array2<f64> {
    let n = input.len_of(Axis(0));
    let mut out = Array2::<f64>::zeros((n, e * CELLS));
    for r in 0..n {
        for o in 0..e {
            for cell in 0..CELLS {
                let (y, x) = ((cell / 3) as isize, (cell % 3) as isize);
                let mut acc = 0.0;
                for kh in 0..KERNEL {
                    for kw in 0..KERNEL {
                        let (sy, sx) = (y + kh as isize - 1, x + kw as isize - 1);
                        if !(0..3).contains(&sy) || !(0..3).contains(&sx) {
                            continue;
                        }
                        let src = (sy * 3 + sx) as usize;
                        let kcell = kh * KERNEL + kw;
                        for i in 0..e {
                            acc += weight[[o, i * CELLS + kcell]] * input[[r, i * CELLS + src]];
                        }
                    }
                }
                out[[r, o * CELLS + cell]] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn internal_dim_rule() {
        assert_eq!(internal_dim(18), 9);
        assert_eq!(internal_dim(81), 9);
        assert_eq!(internal_dim(162), 18);
        assert_eq!(internal_dim(8), 9);
    }

    #[test]
    fn output_shape_and_normalisation() {
        let mut rng = seeded(1);
        let mut m = PxByEmbed::new(PxByEmbedParams::init(20, 18, &mut rng));
        let ids: Vec<[Token; 9]> = (0..6)
            .map(|k| std::array::from_fn(|c| ((k * 9 + c) % 20) as Token))
            .collect();
        let out = m.forward(&ids, 2, 3).unwrap();
        assert_eq!(out.shape(), &[2, 3, 18]);
        // Gain 1, bias 0 at init: each position is standardised.
        for b in 0..2 {
            for l in 0..3 {
                let row: Vec<f64> = (0..18).map(|j| out[[b, l, j]]).collect();
                let mean = row.iter().sum::<f64>() / 18.0;
                let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 18.0;
                assert!(mean.abs() < 1e-6);
                // var = v / (v + eps) for the raw projection variance v.
                assert!((var - 1.0).abs() < 1e-3, "{var}");
            }
        }
        assert!(matches!(m.forward(&[[20; 9]], 1, 1), Err(Error::TokenOutOfRange { .. })));
        assert!(m.forward(&ids, 1, 3).is_err());
    }

    #[test]
    fn zero_gate_logits_average_the_paths() {
        let mut rng = seeded(2);
        let params = PxByEmbedParams::init(10, 18, &mut rng);
        let mut m = PxByEmbed::new(params);
        let ids = vec![[1, 2, 3, 4, 5, 6, 7, 8, 9]];
        m.forward(&ids, 1, 1).unwrap();
        let c = m.cache.as_ref().unwrap();
        for k in 0..c.flat.ncols() {
            let mean = 0.5 * (c.emb[[0, k]] + c.patch[[0, k]]);
            assert!((c.flat[[0, k]] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn all_pad_projects_to_zero() {
        let mut rng = seeded(3);
        let mut m = PxByEmbed::new(PxByEmbedParams::init(10, 18, &mut rng));
        m.forward(&[[0; 9]], 1, 1).unwrap();
        let c = m.cache.as_ref().unwrap();
        let proj = c.flat.dot(&m.params.w_proj);
        assert!(proj.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn backward_needs_forward() {
        let mut rng = seeded(4);
        let m = PxByEmbed::new(PxByEmbedParams::init(10, 18, &mut rng));
        assert!(matches!(
            m.backward(&Array3::zeros((1, 1, 18))),
            Err(Error::NoForwardCache)
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = seeded(5);
        let mut m = PxByEmbed::new(PxByEmbedParams::init(10, 18, &mut rng));
        let ids = vec![[0, 1, 2, 3, 4, 5, 6, 7, 8]; 3];
        m.forward(&ids, 1, 3).unwrap();
        let g = m.backward(&Array3::zeros((1, 3, 18))).unwrap();
        for (_, t) in g.params.named() {
            assert!(t.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn pad_row_gradient_is_exactly_zero() {
        let mut rng = seeded(6);
        let mut m = PxByEmbed::new(PxByEmbedParams::init(10, 18, &mut rng));
        let ids = vec![[0, 0, 3, 0, 5, 0, 0, 9, 0]; 4];
        m.forward(&ids, 2, 2).unwrap();
        let up = Array3::from_shape_fn((2, 2, 18), |(a, b, c)| ((a + 2 * b + 3 * c) as f64).sin());
        let g = m.backward(&up).unwrap();
        assert!(g.params.w_emb.row(0).iter().all(|&x| x == 0.0));
    }
}
