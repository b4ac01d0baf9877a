//! Oracles and fixtures shared by the integration tests. Nothing here calls
//! the code path it is used to check.

#![allow(dead_code)]

use std::path::PathBuf;

use embrec::dataset::{EncodedExample, VocabSizes};
use embrec::model::{ModelConfig, ModelParams};
use embrec::recommend::ContentVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn movielens_dir() -> PathBuf {
    workspace_root().join("data/ml-latest-small")
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        dim_user: 3,
        dim_movie: 2,
        dim_cat: 3,
        hidden_sizes: vec![4],
        ..ModelConfig::default()
    }
}

pub fn tiny_sizes() -> VocabSizes {
    VocabSizes {
        user: 5,
        movie: 6,
        genre: 4,
        keyword: 4,
    }
}

/// A random example over `sizes`; genre/keyword slots may be PAD or UNK.
pub fn random_example(sizes: VocabSizes, rng: &mut impl Rng) -> EncodedExample {
    EncodedExample {
        user_idx: rng.random_range(2..sizes.user),
        movie_idx: rng.random_range(2..sizes.movie),
        genre1_idx: rng.random_range(0..sizes.genre),
        genre2_idx: rng.random_range(0..sizes.genre),
        kw1_idx: rng.random_range(0..sizes.keyword),
        kw2_idx: rng.random_range(0..sizes.keyword),
        target: rng.random_range(1..=10) as f64 * 0.5,
    }
}

fn squared_error(params: &ModelParams, x: &EncodedExample, target: f64) -> f64 {
    let y = params.predict(x).unwrap();
    (y - target) * (y - target)
}

/// Central differences of the squared error for every parameter, in the
/// `Tensors::buffers` order. PAD rows are constants, so their entries are 0.
pub fn finite_difference_gradients(
    params: &ModelParams,
    x: &EncodedExample,
    target: f64,
    eps: f64,
) -> Vec<Vec<f64>> {
    let mut probe = params.clone();
    let lens: Vec<usize> = params.buffers().iter().map(|b| b.len()).collect();
    let pad_widths: Vec<usize> = params.tables().iter().map(|t| t.dim).collect();
    let mut out = Vec::with_capacity(lens.len());
    for (b, &len) in lens.iter().enumerate() {
        let mut grads = Vec::with_capacity(len);
        for i in 0..len {
            if pad_widths.get(b).is_some_and(|&w| i < w) {
                grads.push(0.0);
                continue;
            }
            let orig = probe.buffers()[b][i];
            probe.buffers_mut()[b][i] = orig + eps;
            let up = squared_error(&probe, x, target);
            probe.buffers_mut()[b][i] = orig - eps;
            let down = squared_error(&probe, x, target);
            probe.buffers_mut()[b][i] = orig;
            grads.push((up - down) / (2.0 * eps));
        }
        out.push(grads);
    }
    out
}

/// |a − n| / max(|a|, |n|, floor).
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Full sort of every non-excluded candidate: score descending, then movie
/// index ascending; first `k` as (movie index, score).
pub fn brute_force_top_k(
    query: &[f64],
    candidates: &[ContentVector],
    k: usize,
    exclude: &[usize],
) -> Vec<(usize, f64)> {
    let qn = query.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut all: Vec<(usize, f64)> = candidates
        .iter()
        .filter(|c| !exclude.contains(&c.movie_idx))
        .map(|c| {
            let cn = c.v.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = query.iter().zip(&c.v).map(|(a, b)| a * b).sum();
            let s = if qn < 1e-12 || cn < 1e-12 {
                0.0
            } else {
                dot / (qn * cn)
            };
            (c.movie_idx, s)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Random content vectors with a sprinkling of exact duplicates so the
/// tie-break rule is exercised.
pub fn random_candidates(n: usize, dim: usize, rng: &mut impl Rng) -> Vec<ContentVector> {
    let mut out: Vec<ContentVector> = Vec::with_capacity(n);
    for i in 0..n {
        let movie_idx = i + 2;
        let v = if i > 0 && i % 17 == 0 {
            out[i / 3].v.clone()
        } else {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        out.push(ContentVector {
            movie_idx,
            movie_id: format!("m{movie_idx}"),
            v,
        });
    }
    // present candidates out of index order
    out.reverse();
    out
}
