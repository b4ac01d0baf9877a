mod common;

use std::collections::HashSet;

use common::{brute_force_top_k, random_candidates, random_example, rng, tiny_config, tiny_sizes};
use embrec::dataset::{build_vocabs, split, EncodedExample, MovieMeta, RatingRecord, PAD};
use embrec::model::{adam_step, AdamState, ModelParams};
use embrec::recommend::{taste_vector, top_k_similar};
use embrec::training::{evaluate, train_epoch, Metrics};
use proptest::prelude::*;

fn token() -> impl Strategy<Value = String> {
    "[a-z0-9]{1,4}"
}

fn example_strategy() -> impl Strategy<Value = EncodedExample> {
    (
        2usize..5,
        2usize..6,
        0usize..4,
        0usize..4,
        0usize..4,
        0usize..4,
        1u8..=10,
    )
        .prop_map(|(u, m, g1, g2, k1, k2, r)| EncodedExample {
            user_idx: u,
            movie_idx: m,
            genre1_idx: g1,
            genre2_idx: g2,
            kw1_idx: k1,
            kw2_idx: k2,
            target: r as f64 * 0.5,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vocab_round_trip(users in prop::collection::vec(token(), 0..40), genres in prop::collection::vec(prop::collection::vec(token(), 0..4), 0..10)) {
        let ratings: Vec<RatingRecord> = users.iter().map(|u| RatingRecord {
            user_id: u.clone(), movie_id: format!("m{u}"), rating: 3.0, timestamp: None,
        }).collect();
        let movies: Vec<MovieMeta> = genres.iter().enumerate().map(|(i, g)| MovieMeta {
            movie_id: i.to_string(), title: String::new(), genres: g.clone(), keywords: vec![],
        }).collect();
        let v = build_vocabs(&ratings, &movies);
        for vocab in [&v.user, &v.movie, &v.genre] {
            for t in vocab.tokens() {
                prop_assert_eq!(vocab.decode(vocab.encode(t)), Some(t.as_str()));
            }
            for i in 2..vocab.cardinality() {
                prop_assert_eq!(vocab.encode(vocab.decode(i).unwrap()), i);
            }
            let distinct: HashSet<&String> = vocab.tokens().iter().collect();
            prop_assert_eq!(distinct.len(), vocab.tokens().len());
        }
        let distinct_users: HashSet<&String> = users.iter().collect();
        prop_assert_eq!(v.user.cardinality(), distinct_users.len() + 2);
    }

    #[test]
    fn split_is_a_partition(n in 2usize..300, frac in 0.01f64..0.99, seed in any::<u64>()) {
        let examples: Vec<EncodedExample> = (0..n).map(|i| EncodedExample {
            user_idx: i + 2, movie_idx: 2, genre1_idx: 0, genre2_idx: 0, kw1_idx: 0, kw2_idx: 0, target: 3.0,
        }).collect();
        let s = split(&examples, frac, seed).unwrap();
        prop_assert_eq!(s.train.len() + s.test.len(), n);
        prop_assert_eq!(s.test.len(), (frac * n as f64).round() as usize);
        let mut ids: Vec<usize> = s.train.iter().chain(&s.test).map(|x| x.user_idx).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (2..n + 2).collect::<Vec<_>>());
        prop_assert_eq!(&s, &split(&examples, frac, seed).unwrap());
    }

    #[test]
    fn clamped_prediction_in_range(x in example_strategy(), seed in any::<u64>(), bias in -50.0f64..50.0) {
        let mut p = ModelParams::init(tiny_sizes(), &tiny_config(), seed).unwrap();
        p.output.bias[0] = bias;
        let y = p.predict_clamped(&x).unwrap();
        prop_assert!((0.5..=5.0).contains(&y));
        prop_assert_eq!(p.predict(&x).unwrap().to_bits(), p.predict(&x).unwrap().to_bits());
    }

    #[test]
    fn pad_rows_survive_training(xs in prop::collection::vec(example_strategy(), 1..12), seed in any::<u64>()) {
        let mut p = ModelParams::init(tiny_sizes(), &tiny_config(), seed).unwrap();
        let mut state = AdamState::new(&p);
        for (step, x) in xs.iter().enumerate() {
            let (_, cache) = p.forward(x).unwrap();
            let mut g = p.backward(x, &cache, x.target);
            // inject a gradient into PAD; the optimizer must still keep it at zero
            g.emb_genre.row_mut(PAD).fill(1.0);
            adam_step(&mut p, &g, &mut state, step as u64 + 1).unwrap();
            for t in p.tables() {
                prop_assert!(t.row(PAD).iter().all(|&w| w == 0.0));
            }
        }
        train_epoch(&mut p, &mut state, &xs, 1).unwrap();
        for t in p.tables() {
            prop_assert!(t.row(PAD).iter().all(|&w| w == 0.0));
        }
    }

    #[test]
    fn metric_identities(residuals in prop::collection::vec(-5.0f64..5.0, 1..200)) {
        let m = Metrics::from_residuals(residuals.iter().copied()).unwrap();
        prop_assert_eq!(m.rmse, m.mse.sqrt());
        let sq = m.rmse * m.rmse;
        let ulp = f64::EPSILON * m.mse.abs().max(f64::MIN_POSITIVE);
        prop_assert!((sq - m.mse).abs() <= ulp, "rmse^2 = {sq}, mse = {}", m.mse);
        prop_assert!(m.mae <= m.rmse * (1.0 + 1e-12));
        prop_assert!(m.mse >= 0.0 && m.mae >= 0.0 && m.count >= 1);
    }

    #[test]
    fn evaluate_ignores_order(xs in prop::collection::vec(example_strategy(), 1..60), seed in any::<u64>(), shuffle_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let p = ModelParams::init(tiny_sizes(), &tiny_config(), seed).unwrap();
        let a = evaluate(&p, &xs).unwrap();
        let mut ys = xs.clone();
        ys.shuffle(&mut rng(shuffle_seed));
        let b = evaluate(&p, &ys).unwrap();
        let close = |u: f64, v: f64| (u - v).abs() <= 1e-12 * u.abs().max(v.abs()).max(1e-300);
        prop_assert!(close(a.mse, b.mse) && close(a.mae, b.mae) && close(a.rmse, b.rmse));
        prop_assert_eq!(a.count, b.count);
    }

    #[test]
    fn every_batch_size_consumes_every_example(n in 1usize..40, batch in 1usize..50) {
        let cfg = embrec::model::ModelConfig { batch_size: batch, ..tiny_config() };
        let mut p = ModelParams::init(tiny_sizes(), &cfg, 1).unwrap();
        let mut state = AdamState::new(&p);
        let mut r = rng(n as u64);
        let xs: Vec<_> = (0..n).map(|_| random_example(tiny_sizes(), &mut r)).collect();
        train_epoch(&mut p, &mut state, &xs, 1).unwrap();
        prop_assert_eq!(state.steps as usize, n.div_ceil(batch));
    }

    #[test]
    fn top_k_matches_brute_force_and_is_scale_invariant(seed in any::<u64>(), n in 1usize..120, k in 1usize..15, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let cands = random_candidates(n, 5, &mut r);
        let query: Vec<f64> = (0..5).map(|_| rand::Rng::random_range(&mut r, -1.0..1.0)).collect();
        let exclude: Vec<usize> = (2..n + 2).filter(|i| i % 7 == 0).collect();
        let got = top_k_similar(&query, &cands, k, &exclude.iter().copied().collect()).unwrap();
        let want = brute_force_top_k(&query, &cands, k, &exclude);
        prop_assert_eq!(got.iter().map(|x| (x.movie_idx, x.score)).collect::<Vec<_>>(), want);
        for (i, rec) in got.iter().enumerate() {
            prop_assert_eq!(rec.rank, i + 1);
            prop_assert!(!exclude.contains(&rec.movie_idx));
        }
        let scaled: Vec<f64> = query.iter().map(|q| q * c).collect();
        let again = top_k_similar(&scaled, &cands, k, &exclude.iter().copied().collect()).unwrap();
        prop_assert_eq!(
            got.iter().map(|x| x.movie_idx).collect::<Vec<_>>(),
            again.iter().map(|x| x.movie_idx).collect::<Vec<_>>()
        );
    }

    #[test]
    fn taste_of_identical_movies_is_that_movie(support in 1usize..10, seed in any::<u64>()) {
        let p = ModelParams::init(tiny_sizes(), &tiny_config(), seed).unwrap();
        let x = EncodedExample { user_idx: 2, movie_idx: 3, genre1_idx: 2, genre2_idx: 3, kw1_idx: 2, kw2_idx: PAD, target: 4.5 };
        let history = vec![x; support];
        let t = taste_vector(&p, "u", &history, 4.0, 5).unwrap();
        let single = taste_vector(&p, "u", &history[..1], 4.0, 5).unwrap();
        prop_assert_eq!(t.support, support);
        for (a, b) in t.v.iter().zip(&single.v) {
            prop_assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }
}
