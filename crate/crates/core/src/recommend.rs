//! Content vectors, user taste aggregation and exact cosine top-k search.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use crate::dataset::{
    content_slots, ContentSlots, EncodedExample, MovieMeta, Vocabs, FIRST_TOKEN, PAD,
};
use crate::error::{Error, Result};
use crate::model::{EmbeddingTable, ModelParams};

pub const DEFAULT_THRESHOLD: f64 = 4.0;
pub const DEFAULT_FALLBACK_K: usize = 5;

/// Norms below this make cosine similarity 0.
const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ContentVector {
    pub movie_idx: usize,
    pub movie_id: String,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TasteVector {
    pub user_id: String,
    pub v: Vec<f64>,
    /// Number of movies averaged.
    pub support: usize,
    pub threshold_used: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recommendation {
    pub movie_idx: usize,
    pub movie_id: String,
    pub score: f64,
    pub rank: usize,
}

fn mean_of_rows(table: &EmbeddingTable, idxs: [usize; 2], out: &mut Vec<f64>) -> Result<()> {
    let start = out.len();
    out.resize(start + table.dim, 0.0);
    let mut n = 0;
    for idx in idxs {
        table.check(idx)?;
        if idx == PAD {
            continue;
        }
        for (o, w) in out[start..].iter_mut().zip(table.row(idx)) {
            *o += w;
        }
        n += 1;
    }
    if n > 1 {
        for o in &mut out[start..] {
            *o /= n as f64;
        }
    }
    Ok(())
}

/// `[movie embedding | mean non-PAD genre embedding | mean non-PAD keyword embedding]`.
pub fn content_vector(
    params: &ModelParams,
    movie_idx: usize,
    slots: ContentSlots,
) -> Result<Vec<f64>> {
    let mut v = params.emb_movie.lookup(movie_idx)?;
    v.reserve(2 * params.config.dim_cat);
    mean_of_rows(&params.emb_genre, slots.genres, &mut v)?;
    mean_of_rows(&params.emb_keyword, slots.keywords, &mut v)?;
    Ok(v)
}

fn example_slots(x: &EncodedExample) -> ContentSlots {
    ContentSlots {
        genres: [x.genre1_idx, x.genre2_idx],
        keywords: [x.kw1_idx, x.kw2_idx],
    }
}

/// Indices into `history` of the movies that shape the user's taste: every
/// entry rated at least `threshold`, or failing that the `fallback_k` highest
/// rated (earlier entries win ties).
pub fn select_liked(history: &[EncodedExample], threshold: f64, fallback_k: usize) -> Vec<usize> {
    let liked: Vec<usize> = (0..history.len())
        .filter(|&i| history[i].target >= threshold)
        .collect();
    if !liked.is_empty() {
        return liked;
    }
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| history[b].target.total_cmp(&history[a].target));
    order.truncate(fallback_k);
    order
}

/// Mean content vector of the user's highly rated movies.
pub fn taste_vector(
    params: &ModelParams,
    user_id: &str,
    history: &[EncodedExample],
    threshold: f64,
    fallback_k: usize,
) -> Result<TasteVector> {
    if history.is_empty() {
        return Err(Error::Argument(format!(
            "user `{user_id}` has no rating history"
        )));
    }
    if fallback_k == 0 {
        return Err(Error::Argument("fallback_k must be at least 1".into()));
    }
    let selected = select_liked(history, threshold, fallback_k);
    let mut v = vec![0.0; params.config.content_width()];
    for &i in &selected {
        let x = &history[i];
        let c = content_vector(params, x.movie_idx, example_slots(x))?;
        for (a, b) in v.iter_mut().zip(&c) {
            *a += b;
        }
    }
    let n = selected.len() as f64;
    for a in &mut v {
        *a /= n;
    }
    Ok(TasteVector {
        user_id: user_id.to_string(),
        v,
        support: selected.len(),
        threshold_used: threshold,
    })
}

/// Cosine similarity; 0 when either vector is (numerically) zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "cosine of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na < NORM_FLOOR || nb < NORM_FLOOR {
        return Ok(0.0);
    }
    Ok(dot / (na * nb))
}

/// Higher score first, then lower movie index.
fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Exhaustive cosine scan returning the `k` best candidates not in `exclude`
/// (movie indices). Ties go to the lower movie index.
pub fn top_k_similar(
    query: &[f64],
    candidates: &[ContentVector],
    k: usize,
    exclude: &HashSet<usize>,
) -> Result<Vec<Recommendation>> {
    if k < 1 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let mut scored = Vec::with_capacity(candidates.len());
    let mut position = HashMap::with_capacity(candidates.len());
    for (i, c) in candidates.iter().enumerate() {
        if exclude.contains(&c.movie_idx) {
            continue;
        }
        scored.push((cosine(query, &c.v)?, c.movie_idx));
        position.insert(c.movie_idx, i);
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(r, (score, idx))| Recommendation {
            movie_idx: idx,
            movie_id: candidates[position[&idx]].movie_id.clone(),
            score,
            rank: r + 1,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CatalogEntry {
    pub movie_id: String,
    pub title: String,
    pub slots: ContentSlots,
}

/// Content features of every movie in the movie vocabulary, indexed by
/// vocabulary index minus 2. Movies without metadata get PAD slots and an
/// empty title.
#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    entries: Vec<CatalogEntry>,
}

impl Catalog {
    pub fn new(vocabs: &Vocabs, movies: &[MovieMeta]) -> Self {
        let by_id: HashMap<&str, &MovieMeta> =
            movies.iter().map(|m| (m.movie_id.as_str(), m)).collect();
        let entries = vocabs
            .movie
            .tokens()
            .iter()
            .map(|id| match by_id.get(id.as_str()) {
                Some(meta) => CatalogEntry {
                    movie_id: id.clone(),
                    title: meta.title.clone(),
                    slots: content_slots(meta, vocabs),
                },
                None => CatalogEntry {
                    movie_id: id.clone(),
                    title: String::new(),
                    slots: ContentSlots::default(),
                },
            })
            .collect();
        Catalog { entries }
    }

    pub fn get(&self, movie_idx: usize) -> Option<&CatalogEntry> {
        movie_idx
            .checked_sub(FIRST_TOKEN)
            .and_then(|i| self.entries.get(i))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn content_vectors(&self, params: &ModelParams) -> Result<Vec<ContentVector>> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let movie_idx = i + FIRST_TOKEN;
                Ok(ContentVector {
                    movie_idx,
                    movie_id: e.movie_id.clone(),
                    v: content_vector(params, movie_idx, e.slots)?,
                })
            })
            .collect()
    }
}

/// What recommendation needs beyond the model: vocabularies, movie content
/// features and the training ratings that define each user's history.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub vocabs: Vocabs,
    pub catalog: Catalog,
    pub train: Vec<EncodedExample>,
}

impl Corpus {
    pub fn new(vocabs: Vocabs, movies: &[MovieMeta], train: Vec<EncodedExample>) -> Self {
        let catalog = Catalog::new(&vocabs, movies);
        Corpus {
            vocabs,
            catalog,
            train,
        }
    }

    pub fn history(&self, user_idx: usize) -> Vec<EncodedExample> {
        self.train
            .iter()
            .filter(|x| x.user_idx == user_idx)
            .copied()
            .collect()
    }
}

/// Top-`k` unseen movies closest to the user's taste vector.
pub fn recommend_for_user(
    params: &ModelParams,
    corpus: &Corpus,
    user_id: &str,
    k: usize,
    threshold: f64,
) -> Result<Vec<Recommendation>> {
    let candidates = corpus.catalog.content_vectors(params)?;
    recommend_among(params, corpus, &candidates, user_id, k, threshold)
}

/// [`recommend_for_user`] with precomputed candidate content vectors.
pub fn recommend_among(
    params: &ModelParams,
    corpus: &Corpus,
    candidates: &[ContentVector],
    user_id: &str,
    k: usize,
    threshold: f64,
) -> Result<Vec<Recommendation>> {
    let user_idx = corpus
        .vocabs
        .user
        .get(user_id)
        .ok_or_else(|| Error::Lookup {
            kind: "user",
            id: user_id.to_string(),
        })?;
    let history = corpus.history(user_idx);
    if history.is_empty() {
        return Err(Error::Argument(format!(
            "user `{user_id}` has no training ratings"
        )));
    }
    let taste = taste_vector(params, user_id, &history, threshold, DEFAULT_FALLBACK_K)?;
    let seen: HashSet<usize> = history.iter().map(|x| x.movie_idx).collect();
    top_k_similar(&taste.v, candidates, k, &seen)
}

/// Top-`k` movies closest to `movie_id`'s own content vector, excluding itself.
pub fn similar_movies(
    params: &ModelParams,
    corpus: &Corpus,
    movie_id: &str,
    k: usize,
) -> Result<Vec<Recommendation>> {
    let movie_idx = corpus
        .vocabs
        .movie
        .get(movie_id)
        .ok_or_else(|| Error::Lookup {
            kind: "movie",
            id: movie_id.to_string(),
        })?;
    let slots = corpus
        .catalog
        .get(movie_idx)
        .map(|e| e.slots)
        .unwrap_or_default();
    let query = content_vector(params, movie_idx, slots)?;
    let candidates = corpus.catalog.content_vectors(params)?;
    top_k_similar(&query, &candidates, k, &HashSet::from([movie_idx]))
}
