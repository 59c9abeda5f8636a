//! Analytic gradients against central finite differences.

use ndarray::Array3;
use pixelbytes::embed::{PxByEmbed, PxByEmbedParams};
use pixelbytes::gradcheck;
use pixelbytes::model::{Mode, SeqModel, SeqModelConfig, SeqModelParams};
use pixelbytes::optim::Params;
use pixelbytes::rng::seeded;
use pixelbytes::sequence::ContextRow;
use pixelbytes::trainer::cross_entropy;
use pixelbytes::Token;
use rand::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn check<P: Params + Clone>(params: &P, grads: &P, pinned: &[&str], loss: impl Fn(&P) -> f64) {
    for t in gradcheck::check(params, grads, pinned, H, loss) {
        assert_eq!(t.pinned_violations, 0, "{} pad row must stay zero", t.name);
        assert!(t.relative_error <= TOL, "{}: relative error {:.3e}", t.name, t.relative_error);
    }
}

fn random_windows(rng: &mut impl Rng, n: usize, vocab: usize) -> Vec<[Token; 9]> {
    (0..n)
        .map(|_| std::array::from_fn(|_| if rng.random_bool(0.2) { 0 } else { rng.random_range(1..vocab) as Token }))
        .collect()
}

fn embed_loss(params: &PxByEmbedParams, ids: &[[Token; 9]], b: usize, l: usize, r: &Array3<f64>) -> f64 {
    let mut e = PxByEmbed::new(params.clone());
    let out = e.forward(ids, b, l).unwrap();
    (&out * r).sum()
}

#[test]
fn pxby_embed_matches_finite_differences() {
    for seed in 0..5u64 {
        let mut rng = seeded(seed);
        let (vocab, d, b, l) = (12, 18 + 9 * (seed as usize % 2), 2, 3);
        let mut params = PxByEmbedParams::init(vocab, d, &mut rng);
        // Move away from the symmetric start so every path carries gradient.
        params.alpha.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        params.ln_gain.mapv_inplace(|_| rng.random_range(0.5..1.5));
        params.ln_bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        let ids = random_windows(&mut rng, b * l, vocab);
        let r = Array3::from_shape_fn((b, l, d), |_| rng.random_range(-1.0..1.0));
        let mut e = PxByEmbed::new(params.clone());
        e.forward(&ids, b, l).unwrap();
        let grads = e.backward(&r).unwrap().params;
        check(&params, &grads, &["pxby.w_emb"], |p| embed_loss(p, &ids, b, l, &r));
    }
}

fn tiny_model(mode: Mode, seed: u64, bidirectional: bool) -> SeqModel {
    SeqModel::new(
        SeqModelConfig {
            mode,
            vocab: 10,
            embed_dim: 12,
            hidden: 5,
            layers: 2,
            bidirectional,
            diffusion_steps: 4,
        },
        &mut seeded(seed),
    )
    .unwrap()
}

fn random_contexts(rng: &mut impl Rng, b: usize, l: usize, vocab: usize) -> Vec<Vec<ContextRow>> {
    (0..b)
        .map(|_| {
            (0..l)
                .map(|_| std::array::from_fn(|_| rng.random_range(0..vocab) as Token))
                .collect()
        })
        .collect()
}

fn model_case(mode: Mode, seed: u64, bidirectional: bool) {
    let model = tiny_model(mode, seed, bidirectional);
    let mut rng = seeded(1000 + seed);
    let (b, l) = (2, 4);
    let x = random_contexts(&mut rng, b, l, model.config.vocab);
    let groups = mode.groups();
    let targets: Vec<Option<(usize, f64)>> = (0..b * l * groups)
        .map(|_| rng.random_bool(0.8).then(|| (rng.random_range(0..model.config.vocab), rng.random_range(0.5..2.0))))
        .collect();
    let (t, keep) = match mode {
        Mode::Diffusion => (Some(2), Some(vec![vec![true, false, true, false], vec![false, true, true, true]])),
        _ => (None, None),
    };
    let noise_seed = 77 + seed;
    let loss = |p: &SeqModelParams| {
        let m = SeqModel {
            config: model.config,
            params: p.clone(),
        };
        let out = m.forward(&x, t, keep.as_deref(), &mut seeded(noise_seed)).unwrap();
        cross_entropy(&out.logits, &targets).0.weighted_loss
    };
    let out = model.forward(&x, t, keep.as_deref(), &mut seeded(noise_seed)).unwrap();
    let (_, d_logits) = cross_entropy(&out.logits, &targets);
    let grads = model.backward(&out, &d_logits).unwrap();
    check(&model.params, &grads, &["embed.table"], loss);
}

#[test]
fn predictive_model_matches_finite_differences() {
    for seed in 0..5 {
        model_case(Mode::Predictive, seed, seed % 2 == 1);
    }
}

#[test]
fn autoregressive_model_matches_finite_differences() {
    for seed in 0..5 {
        model_case(Mode::Autoregressive, seed, seed % 2 == 0);
    }
}

#[test]
fn diffusion_model_matches_finite_differences() {
    for seed in 0..5 {
        model_case(Mode::Diffusion, seed, true);
    }
}
