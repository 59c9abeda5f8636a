//! Parameter containers and the Adam optimiser.

use ndarray::Array2;

/// A set of named dense tensors. Gradients use the same type as the
/// parameters they belong to, so tensors line up by position.
pub trait Params {
    fn named(&self) -> Vec<(String, &Array2<f64>)>;
    fn named_mut(&mut self) -> Vec<(String, &mut Array2<f64>)>;

    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for (_, t) in z.named_mut() {
            t.fill(0.0);
        }
        z
    }

    fn scale(&mut self, k: f64) {
        for (_, t) in self.named_mut() {
            t.mapv_inplace(|x| x * k);
        }
    }

    /// `self += other`, tensor by tensor.
    fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.named_mut().into_iter().zip(other.named()) {
            *a += b;
        }
    }

    fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<P> {
    pub config: AdamConfig,
    m: P,
    v: P,
    step: u64,
}

impl<P: Params + Clone> Adam<P> {
    pub fn new(config: AdamConfig, like: &P) -> Self {
        Self {
            config,
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let ps = params.named_mut();
        let gs = grads.named();
        let ms = self.m.named_mut();
        let vs = self.v.named_mut();
        for (((( _, p), (_, g)), (_, m)), (_, v)) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p -= lr * mh / (vh.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct One(Array2<f64>);

    impl Params for One {
        fn named(&self) -> Vec<(String, &Array2<f64>)> {
            vec![("x".into(), &self.0)]
        }
        fn named_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
            vec![("x".into(), &mut self.0)]
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Bias-corrected first step is lr · g / (|g| + eps).
        let mut p = One(Array2::from_elem((1, 2), 1.0));
        let g = One(Array2::from_shape_vec((1, 2), vec![3.0, -0.5]).unwrap());
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, &p);
        opt.step(&mut p, &g);
        assert!((p.0[[0, 0]] - 0.9).abs() < 1e-8);
        assert!((p.0[[0, 1]] - 1.1).abs() < 1e-7);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = One(Array2::from_elem((1, 1), 5.0));
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, &p);
        for _ in 0..500 {
            let g = One(p.0.mapv(|x| 2.0 * (x - 2.0)));
            opt.step(&mut p, &g);
        }
        assert!((p.0[[0, 0]] - 2.0).abs() < 1e-2);
    }

    #[test]
    fn helpers() {
        let mut a = One(Array2::from_elem((2, 2), 1.0));
        let b = a.clone();
        a.add_assign(&b);
        a.scale(0.25);
        assert!(a.0.iter().all(|&x| x == 0.5));
        assert_eq!(a.num_parameters(), 4);
        assert!(a.zeros_like().0.iter().all(|&x| x == 0.0));
    }
}
