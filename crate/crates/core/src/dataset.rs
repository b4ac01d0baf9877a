//! MovieLens ingestion: ratings/movies/tags parsing, categorical vocabularies,
//! six-slot example encoding and seeded train/test splitting.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
/// First index assigned to a real token.
pub const FIRST_TOKEN: usize = 2;

pub const RATINGS_HEADER: &str = "userId,movieId,rating,timestamp";
pub const MOVIES_HEADER: &str = "movieId,title,genres";
pub const TAGS_HEADER: &str = "userId,movieId,tag,timestamp";

const NO_GENRES: &str = "(no genres listed)";

#[derive(Clone, Debug, PartialEq)]
pub struct RatingRecord {
    pub user_id: String,
    pub movie_id: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MovieMeta {
    pub movie_id: String,
    pub title: String,
    pub genres: Vec<String>,
    pub keywords: Vec<String>,
}

/// Result of reading the movies file together with an optional tags file.
#[derive(Clone, Debug, Default)]
pub struct MovieTable {
    pub movies: Vec<MovieMeta>,
    /// Tag rows that referenced a movie absent from the movies file.
    pub orphan_tags: usize,
}

/// True when `rating` lies on the half-star grid 0.5, 1.0, ..., 5.0.
pub fn is_valid_rating(rating: f64) -> bool {
    (0.5..=5.0).contains(&rating) && (rating * 2.0).fract() == 0.0
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader)
}

fn check_header<R: Read>(
    reader: &mut csv::Reader<R>,
    path: &Path,
    expected: &'static str,
) -> Result<()> {
    let header = reader.headers().map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found.join(",") != expected {
        return Err(Error::Header {
            path: path.to_path_buf(),
            expected,
        });
    }
    Ok(())
}

/// Iterate data rows, attaching the 1-based source line of each.
fn rows<'a, R: Read>(
    reader: &'a mut csv::Reader<R>,
    path: &Path,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + 'a {
    let path = path.to_path_buf();
    reader.records().map(move |row| {
        let row = row.map_err(|source| Error::Csv {
            path: path.clone(),
            source,
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        Ok((line, row))
    })
}

fn row_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Row {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn id_field(
    path: &Path,
    line: u64,
    row: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<String> {
    let value = row[i].trim();
    if value.is_empty() {
        return Err(row_error(path, line, format!("empty {name}")));
    }
    Ok(value.to_string())
}

pub fn parse_ratings(path: &Path) -> Result<Vec<RatingRecord>> {
    parse_ratings_from(open(path)?, path)
}

/// Parse ratings from any reader; `label` names the source in diagnostics.
pub fn parse_ratings_from<R: Read>(reader: R, label: &Path) -> Result<Vec<RatingRecord>> {
    let mut reader = csv_reader(reader);
    check_header(&mut reader, label, RATINGS_HEADER)?;
    let mut out = Vec::new();
    for row in rows(&mut reader, label) {
        let (line, row) = row?;
        let user_id = id_field(label, line, &row, 0, "userId")?;
        let movie_id = id_field(label, line, &row, 1, "movieId")?;
        let raw = row[2].trim();
        let rating: f64 = raw
            .parse()
            .map_err(|_| row_error(label, line, format!("non-numeric rating `{raw}`")))?;
        if !is_valid_rating(rating) {
            return Err(row_error(
                label,
                line,
                format!("rating {raw} is not on the 0.5..5.0 half-star grid"),
            ));
        }
        let ts = row[3].trim();
        let timestamp = if ts.is_empty() {
            None
        } else {
            Some(
                ts.parse()
                    .map_err(|_| row_error(label, line, format!("bad timestamp `{ts}`")))?,
            )
        };
        out.push(RatingRecord {
            user_id,
            movie_id,
            rating,
            timestamp,
        });
    }
    Ok(out)
}

pub fn parse_movies(movies_path: &Path, tags_path: Option<&Path>) -> Result<MovieTable> {
    let tags = match tags_path {
        Some(p) => Some((open(p)?, p.to_path_buf())),
        None => None,
    };
    parse_movies_from(open(movies_path)?, movies_path, tags)
}

pub fn parse_movies_from<R: Read, T: Read>(
    movies: R,
    movies_label: &Path,
    tags: Option<(T, PathBuf)>,
) -> Result<MovieTable> {
    let mut reader = csv_reader(movies);
    check_header(&mut reader, movies_label, MOVIES_HEADER)?;
    let mut out: Vec<MovieMeta> = Vec::new();
    let mut position: HashMap<String, usize> = HashMap::new();
    for row in rows(&mut reader, movies_label) {
        let (line, row) = row?;
        let movie_id = id_field(movies_label, line, &row, 0, "movieId")?;
        if position.contains_key(&movie_id) {
            return Err(row_error(
                movies_label,
                line,
                format!("duplicate movieId `{movie_id}`"),
            ));
        }
        let genres_raw = row[2].trim();
        let genres = if genres_raw == NO_GENRES {
            Vec::new()
        } else {
            let mut seen = HashSet::new();
            genres_raw
                .split('|')
                .map(str::trim)
                .filter(|g| !g.is_empty() && *g != NO_GENRES)
                .filter(|g| seen.insert(g.to_string()))
                .map(str::to_string)
                .collect()
        };
        position.insert(movie_id.clone(), out.len());
        out.push(MovieMeta {
            movie_id,
            title: row[1].to_string(),
            genres,
            keywords: Vec::new(),
        });
    }

    let mut orphan_tags = 0;
    if let Some((tags, tags_label)) = tags {
        let mut reader = csv_reader(tags);
        check_header(&mut reader, &tags_label, TAGS_HEADER)?;
        let mut frequency: HashMap<String, usize> = HashMap::new();
        let mut per_movie: Vec<Vec<String>> = vec![Vec::new(); out.len()];
        for row in rows(&mut reader, &tags_label) {
            let (_, row) = row?;
            let tag = row[2].trim().to_lowercase();
            if tag.is_empty() {
                continue;
            }
            *frequency.entry(tag.clone()).or_default() += 1;
            match position.get(row[1].trim()) {
                Some(&i) => {
                    if !per_movie[i].contains(&tag) {
                        per_movie[i].push(tag);
                    }
                }
                None => orphan_tags += 1,
            }
        }
        if orphan_tags > 0 {
            log::warn!(
                "{}: ignored {orphan_tags} tag rows referencing unknown movies",
                tags_label.display()
            );
        }
        for (meta, mut keywords) in out.iter_mut().zip(per_movie) {
            keywords.sort_by(|a, b| frequency[b].cmp(&frequency[a]).then_with(|| a.cmp(b)));
            meta.keywords = keywords;
        }
    }
    Ok(MovieTable {
        movies: out,
        orphan_tags,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabKind {
    User,
    Movie,
    Genre,
    Keyword,
}

impl VocabKind {
    pub fn name(self) -> &'static str {
        match self {
            VocabKind::User => "user",
            VocabKind::Movie => "movie",
            VocabKind::Genre => "genre",
            VocabKind::Keyword => "keyword",
        }
    }
}

/// Token ↔ index map with PAD at 0, UNK at 1 and real tokens from 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    kind: VocabKind,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(kind: VocabKind) -> Self {
        Vocab {
            kind,
            tokens: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Build from real tokens in index order. Duplicates are an error.
    pub fn from_tokens(kind: VocabKind, tokens: Vec<String>) -> Result<Self> {
        let mut vocab = Vocab::new(kind);
        for token in tokens {
            if vocab.index.contains_key(&token) {
                return Err(Error::integrity(
                    format!("vocabs.{}", kind.name()),
                    format!("duplicate token `{token}`"),
                ));
            }
            vocab.insert(&token);
        }
        Ok(vocab)
    }

    /// Add `token` if absent; returns its index either way.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len() + FIRST_TOKEN;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    /// Number of rows an embedding table over this vocabulary needs.
    pub fn cardinality(&self) -> usize {
        self.tokens.len() + FIRST_TOKEN
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or UNK when out of vocabulary.
    pub fn encode(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    /// Token at `index`; `None` for PAD, UNK and out-of-range indices.
    pub fn decode(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(FIRST_TOKEN)
            .and_then(|i| self.tokens.get(i))
            .map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabs {
    pub user: Vocab,
    pub movie: Vocab,
    pub genre: Vocab,
    pub keyword: Vocab,
}

impl Vocabs {
    pub fn sizes(&self) -> VocabSizes {
        VocabSizes {
            user: self.user.cardinality(),
            movie: self.movie.cardinality(),
            genre: self.genre.cardinality(),
            keyword: self.keyword.cardinality(),
        }
    }

    pub fn get(&self, kind: VocabKind) -> &Vocab {
        match kind {
            VocabKind::User => &self.user,
            VocabKind::Movie => &self.movie,
            VocabKind::Genre => &self.genre,
            VocabKind::Keyword => &self.keyword,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VocabSizes {
    pub user: usize,
    pub movie: usize,
    pub genre: usize,
    pub keyword: usize,
}

/// Users and movies in first-appearance order over the ratings; genres and
/// keywords in first-appearance order over the movies.
pub fn build_vocabs(ratings: &[RatingRecord], movies: &[MovieMeta]) -> Vocabs {
    let mut user = Vocab::new(VocabKind::User);
    let mut movie = Vocab::new(VocabKind::Movie);
    for r in ratings {
        user.insert(&r.user_id);
        movie.insert(&r.movie_id);
    }
    let mut genre = Vocab::new(VocabKind::Genre);
    let mut keyword = Vocab::new(VocabKind::Keyword);
    for m in movies {
        for g in &m.genres {
            genre.insert(g);
        }
        for k in &m.keywords {
            keyword.insert(k);
        }
    }
    Vocabs {
        user,
        movie,
        genre,
        keyword,
    }
}

/// One model input row: (user, movie, genre 1, genre 2, keyword 1, keyword 2) and the rating.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodedExample {
    pub user_idx: usize,
    pub movie_idx: usize,
    pub genre1_idx: usize,
    pub genre2_idx: usize,
    pub kw1_idx: usize,
    pub kw2_idx: usize,
    pub target: f64,
}

/// The four content slots of a movie: two genres and two keywords.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ContentSlots {
    pub genres: [usize; 2],
    pub keywords: [usize; 2],
}

fn first_two(tokens: &[String], vocab: &Vocab) -> [usize; 2] {
    let mut slots = [PAD; 2];
    for (slot, token) in slots.iter_mut().zip(tokens) {
        *slot = vocab.encode(token);
    }
    slots
}

pub fn content_slots(meta: &MovieMeta, vocabs: &Vocabs) -> ContentSlots {
    ContentSlots {
        genres: first_two(&meta.genres, &vocabs.genre),
        keywords: first_two(&meta.keywords, &vocabs.keyword),
    }
}

pub fn encode(
    record: &RatingRecord,
    meta: Option<&MovieMeta>,
    vocabs: &Vocabs,
) -> Result<EncodedExample> {
    let meta = meta.ok_or_else(|| Error::Lookup {
        kind: "movie",
        id: record.movie_id.clone(),
    })?;
    if meta.movie_id != record.movie_id {
        return Err(Error::Argument(format!(
            "metadata for movie `{}` supplied for rating of movie `{}`",
            meta.movie_id, record.movie_id
        )));
    }
    let slots = content_slots(meta, vocabs);
    Ok(EncodedExample {
        user_idx: vocabs.user.encode(&record.user_id),
        movie_idx: vocabs.movie.encode(&record.movie_id),
        genre1_idx: slots.genres[0],
        genre2_idx: slots.genres[1],
        kw1_idx: slots.keywords[0],
        kw2_idx: slots.keywords[1],
        target: record.rating,
    })
}

/// Encode every rating in file order, joining each to its movie metadata.
pub fn encode_all(
    ratings: &[RatingRecord],
    movies: &[MovieMeta],
    vocabs: &Vocabs,
) -> Result<Vec<EncodedExample>> {
    let by_id: HashMap<&str, &MovieMeta> =
        movies.iter().map(|m| (m.movie_id.as_str(), m)).collect();
    ratings
        .iter()
        .map(|r| encode(r, by_id.get(r.movie_id.as_str()).copied(), vocabs))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<EncodedExample>,
    pub test: Vec<EncodedExample>,
    pub seed: u64,
    pub test_frac: f64,
    pub source_count: usize,
}

pub fn test_size(test_frac: f64, count: usize) -> usize {
    (test_frac * count as f64).round() as usize
}

/// Shuffle with the seeded ChaCha8 stream (Fisher–Yates) and send the last
/// `round(test_frac * N)` examples to the test side.
pub fn split(examples: &[EncodedExample], test_frac: f64, seed: u64) -> Result<DatasetSplit> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::Argument(format!(
            "test fraction must be in (0, 1), got {test_frac}"
        )));
    }
    if examples.len() < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 examples to split, got {}",
            examples.len()
        )));
    }
    let mut shuffled = examples.to_vec();
    shuffled.shuffle(&mut rng::seeded(seed));
    let test = shuffled.split_off(examples.len() - test_size(test_frac, examples.len()));
    Ok(DatasetSplit {
        train: shuffled,
        test,
        seed,
        test_frac,
        source_count: examples.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetSummary {
    pub entries: usize,
    pub unique_movies: usize,
    pub unique_users: usize,
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "entries={} unique_movies={} unique_users={}",
            self.entries, self.unique_movies, self.unique_users
        )
    }
}

pub fn dataset_summary(ratings: &[RatingRecord]) -> DatasetSummary {
    let movies: HashSet<&str> = ratings.iter().map(|r| r.movie_id.as_str()).collect();
    let users: HashSet<&str> = ratings.iter().map(|r| r.user_id.as_str()).collect();
    DatasetSummary {
        entries: ratings.len(),
        unique_movies: movies.len(),
        unique_users: users.len(),
    }
}
