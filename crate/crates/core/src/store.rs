//! Versioned JSON model files and TSV embedding export.
//!
//! A model file is one JSON document:
//!
//! ```text
//! { "format_tag": "embrec-model", "version": 1, "config": {...},
//!   "vocabs": { "user": [...], "movie": [...], "genre": [...], "keyword": [...] },
//!   "params": { "emb_user": {"rows", "cols", "data"}, ..., "hidden": [{"weight", "bias"}], "output": {...} },
//!   "provenance": { "seed", "test_frac", "source_count" } }
//! ```
//!
//! Vocabulary lists hold real tokens only; PAD and UNK are implicit rows 0
//! and 1. Floats are written in shortest round-trip form, so load(save(m))
//! is bitwise exact and re-saving is byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Vocab, VocabKind, Vocabs, FIRST_TOKEN, PAD};
use crate::error::{Error, Result};
use crate::model::{DenseLayer, EmbeddingTable, ModelConfig, ModelParams, Tensors};
use crate::recommend::Catalog;

pub const FORMAT_TAG: &str = "embrec-model";
pub const VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub test_frac: f64,
    pub source_count: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_tag: String,
    version: u64,
    config: ModelConfig,
    vocabs: VocabLists,
    params: ParamArrays,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct VocabLists {
    user: Vec<String>,
    movie: Vec<String>,
    genre: Vec<String>,
    keyword: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Array {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Layer {
    weight: Array,
    bias: Array,
}

#[derive(Serialize, Deserialize)]
struct ParamArrays {
    emb_user: Array,
    emb_movie: Array,
    emb_genre: Array,
    emb_keyword: Array,
    hidden: Vec<Layer>,
    output: Layer,
}

/// A model as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub params: ModelParams,
    pub vocabs: Vocabs,
    pub provenance: Provenance,
}

fn table_array(t: &EmbeddingTable) -> Array {
    Array {
        rows: t.rows,
        cols: t.dim,
        data: t.weights.clone(),
    }
}

fn layer_doc(l: &DenseLayer) -> Layer {
    Layer {
        weight: Array {
            rows: l.out_dim,
            cols: l.in_dim,
            data: l.weight.clone(),
        },
        bias: Array {
            rows: l.out_dim,
            cols: 1,
            data: l.bias.clone(),
        },
    }
}

fn to_file(params: &ModelParams, vocabs: &Vocabs, provenance: Provenance) -> ModelFile {
    let t = &params.tensors;
    ModelFile {
        format_tag: FORMAT_TAG.into(),
        version: VERSION,
        config: params.config.clone(),
        vocabs: VocabLists {
            user: vocabs.user.tokens().to_vec(),
            movie: vocabs.movie.tokens().to_vec(),
            genre: vocabs.genre.tokens().to_vec(),
            keyword: vocabs.keyword.tokens().to_vec(),
        },
        params: ParamArrays {
            emb_user: table_array(&t.emb_user),
            emb_movie: table_array(&t.emb_movie),
            emb_genre: table_array(&t.emb_genre),
            emb_keyword: table_array(&t.emb_keyword),
            hidden: t.hidden.iter().map(layer_doc).collect(),
            output: layer_doc(&t.output),
        },
        provenance,
    }
}

/// Serialize a model to its canonical JSON text.
pub fn to_json(params: &ModelParams, vocabs: &Vocabs, provenance: Provenance) -> Result<String> {
    check_consistent(params, vocabs)?;
    let mut text = serde_json::to_string_pretty(&to_file(params, vocabs, provenance))
        .expect("model file serializes");
    text.push('\n');
    Ok(text)
}

fn check_consistent(params: &ModelParams, vocabs: &Vocabs) -> Result<()> {
    params.validate()?;
    for (kind, table) in [
        (VocabKind::User, &params.emb_user),
        (VocabKind::Movie, &params.emb_movie),
        (VocabKind::Genre, &params.emb_genre),
        (VocabKind::Keyword, &params.emb_keyword),
    ] {
        if vocabs.get(kind).cardinality() != table.rows {
            return Err(Error::Structure(format!(
                "{} vocabulary has {} entries but its table has {} rows",
                kind.name(),
                vocabs.get(kind).cardinality(),
                table.rows
            )));
        }
    }
    for (i, buf) in params.buffers().into_iter().enumerate() {
        if buf.iter().any(|w| !w.is_finite()) {
            return Err(Error::Structure(format!(
                "parameter buffer {i} holds a non-finite value"
            )));
        }
    }
    Ok(())
}

pub fn save(
    params: &ModelParams,
    vocabs: &Vocabs,
    provenance: Provenance,
    path: &Path,
) -> Result<()> {
    let text = to_json(params, vocabs, provenance)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn array(field: &str, a: Array, rows: usize, cols: usize) -> Result<Vec<f64>> {
    if a.rows != rows || a.cols != cols {
        return Err(Error::integrity(
            field,
            format!(
                "declared shape {}x{}, expected {rows}x{cols}",
                a.rows, a.cols
            ),
        ));
    }
    if a.data.len() != rows * cols {
        return Err(Error::integrity(
            field,
            format!(
                "shape {rows}x{cols} needs {} values, found {}",
                rows * cols,
                a.data.len()
            ),
        ));
    }
    Ok(a.data)
}

fn table(field: &str, a: Array, vocab: &Vocab, dim: usize) -> Result<EmbeddingTable> {
    let rows = vocab.cardinality();
    if a.rows != rows {
        return Err(Error::integrity(
            field,
            format!(
                "{} rows but the {} vocabulary has {rows} entries",
                a.rows,
                vocab.kind().name()
            ),
        ));
    }
    let weights = array(field, a, rows, dim)?;
    if weights[PAD * dim..(PAD + 1) * dim]
        .iter()
        .any(|&w| w != 0.0)
    {
        return Err(Error::integrity(field, "PAD row is not zero"));
    }
    Ok(EmbeddingTable { rows, dim, weights })
}

fn layer(field: &str, doc: Layer, in_dim: usize, out_dim: usize) -> Result<DenseLayer> {
    Ok(DenseLayer {
        in_dim,
        out_dim,
        weight: array(&format!("{field}.weight"), doc.weight, out_dim, in_dim)?,
        bias: array(&format!("{field}.bias"), doc.bias, out_dim, 1)?,
    })
}

/// Parse and validate a model document. `label` names the source in errors.
pub fn from_json(text: &str, label: &Path) -> Result<SavedModel> {
    let json_err = |source| Error::Json {
        path: label.to_path_buf(),
        source,
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    if value.get("format_tag").and_then(|v| v.as_str()) != Some(FORMAT_TAG) {
        return Err(Error::NotAModelFile(label.to_path_buf()));
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(VERSION) => {}
        Some(version) if version > VERSION => {
            return Err(Error::UnsupportedVersion {
                path: label.to_path_buf(),
                version,
            })
        }
        _ => return Err(Error::integrity("version", "missing or invalid version")),
    }
    let file: ModelFile = serde_json::from_value(value).map_err(json_err)?;
    let config = file.config;
    config
        .validate()
        .map_err(|e| Error::integrity("config", e.to_string()))?;

    let vocab = |kind, tokens| Vocab::from_tokens(kind, tokens);
    let vocabs = Vocabs {
        user: vocab(VocabKind::User, file.vocabs.user)?,
        movie: vocab(VocabKind::Movie, file.vocabs.movie)?,
        genre: vocab(VocabKind::Genre, file.vocabs.genre)?,
        keyword: vocab(VocabKind::Keyword, file.vocabs.keyword)?,
    };

    let p = file.params;
    if p.hidden.len() != config.hidden_sizes.len() {
        return Err(Error::integrity(
            "params.hidden",
            format!(
                "{} layers stored, config declares {}",
                p.hidden.len(),
                config.hidden_sizes.len()
            ),
        ));
    }
    let mut width = config.input_width();
    let mut hidden = Vec::with_capacity(p.hidden.len());
    for (i, (doc, &out)) in p.hidden.into_iter().zip(&config.hidden_sizes).enumerate() {
        hidden.push(layer(&format!("params.hidden[{i}]"), doc, width, out)?);
        width = out;
    }
    let tensors = Tensors {
        emb_user: table("params.emb_user", p.emb_user, &vocabs.user, config.dim_user)?,
        emb_movie: table(
            "params.emb_movie",
            p.emb_movie,
            &vocabs.movie,
            config.dim_movie,
        )?,
        emb_genre: table(
            "params.emb_genre",
            p.emb_genre,
            &vocabs.genre,
            config.dim_cat,
        )?,
        emb_keyword: table(
            "params.emb_keyword",
            p.emb_keyword,
            &vocabs.keyword,
            config.dim_cat,
        )?,
        hidden,
        output: layer("params.output", p.output, width, 1)?,
    };
    let provenance = file.provenance;
    if !(provenance.test_frac > 0.0 && provenance.test_frac < 1.0) {
        return Err(Error::integrity(
            "provenance.test_frac",
            "must be in (0, 1)",
        ));
    }
    Ok(SavedModel {
        params: ModelParams { tensors, config },
        vocabs,
        provenance,
    })
}

pub fn load(path: &Path) -> Result<SavedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text, path)
}

/// Which vectors `export_embeddings` writes.
#[derive(Clone, Copy, Debug)]
pub enum Export<'a> {
    Table(VocabKind),
    /// Per-movie content vectors, built from the catalog's genre and keyword slots.
    Content(&'a Catalog),
}

/// C-style `%.{precision}g`.
pub fn format_g(x: f64, precision: usize) -> String {
    let p = precision.max(1);
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn write_tsv<'a>(
    path: &Path,
    width: usize,
    rows: impl Iterator<Item = (&'a str, Vec<f64>)>,
) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let mut header = String::from("token");
    for i in 0..width {
        header.push_str(&format!("\tv{i}"));
    }
    writeln!(out, "{header}").map_err(io)?;
    for (token, v) in rows {
        let mut line = token.to_string();
        for x in v {
            line.push('\t');
            line.push_str(&format_g(x, 8));
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Write one TSV row per real token (PAD and UNK omitted): the token, then
/// its vector components in `%.8g`.
pub fn export_embeddings(
    params: &ModelParams,
    vocabs: &Vocabs,
    which: Export<'_>,
    path: &Path,
) -> Result<()> {
    match which {
        Export::Table(kind) => {
            let vocab = vocabs.get(kind);
            let table = params.tables()[match kind {
                VocabKind::User => 0,
                VocabKind::Movie => 1,
                VocabKind::Genre => 2,
                VocabKind::Keyword => 3,
            }];
            let rows = vocab
                .tokens()
                .iter()
                .enumerate()
                .map(|(i, t)| (t.as_str(), table.row(i + FIRST_TOKEN).to_vec()));
            write_tsv(path, table.dim, rows)
        }
        Export::Content(catalog) => {
            let vectors = catalog.content_vectors(params)?;
            let rows = vectors.iter().map(|c| (c.movie_id.as_str(), c.v.clone()));
            write_tsv(path, params.config.content_width(), rows)
        }
    }
}
