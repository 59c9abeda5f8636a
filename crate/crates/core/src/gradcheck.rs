//! Central finite-difference checks for anything implementing [`Params`].

use crate::optim::Params;

/// `‖a − n‖ / (‖a‖ + ‖n‖)`, zero when both are zero.
pub fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub relative_error: f64,
    /// Entries of pinned rows whose analytic gradient was not exactly zero.
    pub pinned_violations: usize,
}

/// Compares `grads` with `(loss(θ + h) − loss(θ − h)) / 2h` entry by entry.
/// Row 0 of tensors named in `pinned` is held fixed by the model, so it is
/// only required to have a zero analytic gradient.
pub fn check<P: Params + Clone>(params: &P, grads: &P, pinned: &[&str], h: f64, loss: impl Fn(&P) -> f64) -> Vec<TensorCheck> {
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::with_capacity(names.len());
    for (ti, name) in names.into_iter().enumerate() {
        let g = grads.named()[ti].1.clone();
        let (rows, cols) = g.dim();
        let mut analytic = Vec::with_capacity(rows * cols);
        let mut numeric = Vec::with_capacity(rows * cols);
        let mut pinned_violations = 0;
        for r in 0..rows {
            for c in 0..cols {
                if r == 0 && pinned.contains(&name.as_str()) {
                    pinned_violations += usize::from(g[[r, c]] != 0.0);
                    continue;
                }
                let mut plus = params.clone();
                plus.named_mut()[ti].1[[r, c]] += h;
                let mut minus = params.clone();
                minus.named_mut()[ti].1[[r, c]] -= h;
                numeric.push((loss(&plus) - loss(&minus)) / (2.0 * h));
                analytic.push(g[[r, c]]);
            }
        }
        out.push(TensorCheck {
            relative_error: relative_error(&analytic, &numeric),
            name,
            pinned_violations,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[derive(Clone)]
    struct Quad(Array2<f64>);

    impl Params for Quad {
        fn named(&self) -> Vec<(String, &Array2<f64>)> {
            vec![("w".into(), &self.0)]
        }
        fn named_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
            vec![("w".into(), &mut self.0)]
        }
    }

    #[test]
    fn exact_and_wrong_gradients() {
        let p = Quad(Array2::from_shape_vec((2, 2), vec![1.0, -2.0, 0.5, 3.0]).unwrap());
        let loss = |q: &Quad| q.0.mapv(|x| x * x * x).sum();
        let good = Quad(p.0.mapv(|x| 3.0 * x * x));
        assert!(check(&p, &good, &[], 1e-5, loss)[0].relative_error < 1e-9);
        let bad = Quad(p.0.mapv(|x| 2.0 * x * x));
        assert!(check(&p, &bad, &[], 1e-5, loss)[0].relative_error > 0.1);
        let pinned = check(&p, &good, &["w"], 1e-5, loss);
        assert_eq!(pinned[0].pinned_violations, 2);
        assert_eq!(relative_error(&[1.0], &[3.0]), 0.5);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }
}
