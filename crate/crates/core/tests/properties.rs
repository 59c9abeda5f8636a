use pixelbytes::frames::Frames;
use pixelbytes::metrics::{bleu, cosine, hamming};
use pixelbytes::sequence::{create_sequence_data, ContextArray};
use pixelbytes::tokenizer::{action_center, VocabLayout, PAD};
use pixelbytes::trainer::class_weights;
use pixelbytes::{pxtk, Token, TokenStream, Tokenizer, VOCAB_SIZE};
use proptest::prelude::*;

fn text_strategy() -> impl Strategy<Value = Vec<u8>> {
    let allowed: Vec<u8> = (0x20u8..=0x7e).filter(|b| !b.is_ascii_uppercase()).chain([b'\n']).collect();
    prop::collection::vec(prop::sample::select(allowed), 1..24)
}

fn frames_strategy() -> impl Strategy<Value = Frames<u8>> {
    (1usize..3, 1usize..4, 1usize..5).prop_flat_map(|(t, h, w)| {
        prop::collection::vec(0u8..55, t * h * w).prop_map(move |d| Frames::from_vec(t, h, w, d).unwrap())
    })
}

fn audio_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4, 1usize..12).prop_flat_map(|(c, n)| {
        prop::collection::vec(prop::collection::vec((0usize..24).prop_map(action_center), n), c)
    })
}

fn record_strategy() -> impl Strategy<Value = TokenStream> {
    (
        prop::option::of(text_strategy()),
        prop::option::of(frames_strategy()),
        prop::option::of(audio_strategy()),
    )
        .prop_filter("at least one modality", |(t, f, a)| t.is_some() || f.is_some() || a.is_some())
        .prop_map(|(t, f, a)| {
            let tk = Tokenizer::default();
            let mut s = TokenStream::default();
            if let Some(t) = t {
                s.append(tk.encode_text(&t).stream);
            }
            if let Some(f) = f {
                s.append(tk.encode_frames(&f).unwrap());
            }
            if let Some(a) = a {
                s.append(tk.encode_action_channels(&a).unwrap());
            }
            s
        })
}

/// Direct transcription of the neighbourhood rule, one position at a time.
fn oracle(x: &Frames<Token>) -> ContextArray {
    let (tn, hn, wn) = x.shape();
    let get = |t: isize, h: isize, w: isize| -> Token {
        if t < 0 || h < 0 || w < 0 || t >= tn as isize || h >= hn as isize || w >= wn as isize {
            PAD
        } else {
            *x.get(t as usize, h as usize, w as usize)
        }
    };
    let mut out = ContextArray::default();
    let mut prev = PAD;
    for t in 0..tn as isize {
        for h in 0..hn as isize {
            for w in 0..wn as isize {
                out.contexts.push([
                    get(t - 1, h - 1, w),
                    get(t - 1, h, w),
                    get(t - 1, h + 1, w),
                    get(t, h - 1, w - 1),
                    get(t, h, w - 1),
                    prev,
                ]);
                let y = get(t, h, w);
                out.targets.push(y);
                prev = y;
            }
        }
    }
    out
}

fn volume_strategy() -> impl Strategy<Value = Frames<Token>> {
    (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(t, h, w)| {
        prop::collection::vec(0u16..VOCAB_SIZE as u16, t * h * w).prop_map(move |d| Frames::from_vec(t, h, w, d).unwrap())
    })
}

fn tokens(max: usize) -> impl Strategy<Value = Vec<Token>> {
    prop::collection::vec(3u16..20, 0..max)
}

proptest! {
    #[test]
    fn decode_encode_is_identity(rec in record_strategy()) {
        let tk = Tokenizer::default();
        rec.validate().unwrap();
        let decoded = tk.decode(&rec).unwrap();
        prop_assert_eq!(tk.encode_decoded(&decoded).unwrap(), rec);
    }

    #[test]
    fn pxtk_round_trip(recs in prop::collection::vec(record_strategy(), 0..4)) {
        let bytes = pxtk::encode(&recs).unwrap();
        prop_assert_eq!(pxtk::decode(&bytes).unwrap(), recs);
    }

    #[test]
    fn sequence_data_matches_oracle(x in volume_strategy()) {
        let got = create_sequence_data(&x).unwrap();
        let want = oracle(&x);
        prop_assert_eq!(&got, &want);
        for i in 1..got.len() {
            prop_assert_eq!(got.contexts[i][5], got.targets[i - 1]);
        }
    }

    #[test]
    fn metric_symmetries(a in tokens(30), b in tokens(30)) {
        prop_assert_eq!(hamming(&a, &b), hamming(&b, &a));
        prop_assert!((cosine(&a, &b) - cosine(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn cosine_ignores_repetition(a in tokens(20), b in tokens(20), k in 2usize..5) {
        let ak: Vec<Token> = a.iter().copied().cycle().take(a.len() * k).collect();
        let bk: Vec<Token> = b.iter().copied().cycle().take(b.len() * k).collect();
        prop_assert!((cosine(&a, &b) - cosine(&ak, &bk)).abs() < 1e-12);
    }

    #[test]
    fn bleu_bounded_by_unigram_precision(c in tokens(25), r in tokens(25)) {
        prop_assume!(!c.is_empty());
        let mut counts = std::collections::HashMap::new();
        for t in &r {
            *counts.entry(*t).or_insert(0usize) += 1;
        }
        let mut clipped = 0;
        for t in &c {
            if let Some(n) = counts.get_mut(t) {
                if *n > 0 {
                    *n -= 1;
                    clipped += 1;
                }
            }
        }
        let p1 = clipped as f64 / c.len() as f64;
        let b = bleu(&c, &r, 4);
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!(b <= p1 + 1e-12, "bleu {} > p1 {}", b, p1);
    }

    #[test]
    fn class_weight_ratio_law(f in prop::collection::vec(0.01f64..1000.0, 2..20)) {
        let w = class_weights(&f).unwrap();
        for i in 0..f.len() {
            for j in 0..f.len() {
                let lhs = w[i] / w[j];
                let rhs = (f[j] / f[i]).sqrt();
                prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
            }
        }
    }
}

#[test]
fn vocabulary_partition_is_exact() {
    let l = VocabLayout;
    let mut seen = vec![0; VOCAB_SIZE];
    for r in [0..3, l.text_ids(), l.palette_ids(), l.action_ids()] {
        for i in r {
            seen[i] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c == 1));
}
