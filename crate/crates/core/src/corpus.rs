//! Corpus loading: poems, their categories, and the ground-truth ranking
//! the categories induce.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textnorm::normalize_name;

/// Opaque poem identifier; "id order" throughout the crate means the
/// lexicographic order of these strings.
pub type PoemId = String;

/// Quality tier a poem belongs to, ordered best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Good,
    Medium,
    Bad,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Good, Category::Medium, Category::Bad];

    /// Ground-truth rank of the tier: 1 is best.
    pub fn rank(self) -> u32 {
        match self {
            Category::Good => 1,
            Category::Medium => 2,
            Category::Bad => 3,
        }
    }

    /// Canonical display label.
    pub fn label(self) -> &'static str {
        match self {
            Category::Good => "Good",
            Category::Medium => "Medium",
            Category::Bad => "Bad",
        }
    }

    /// Case-insensitive parse of a tier label.
    pub fn parse_label(s: &str) -> Option<Category> {
        match s.trim().to_ascii_lowercase().as_str() {
            "good" => Some(Category::Good),
            "medium" => Some(Category::Medium),
            "bad" => Some(Category::Bad),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One corpus entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poem {
    pub id: PoemId,
    pub author: String,
    pub title: String,
    pub body: String,
    pub category: Category,
}

/// A validated collection of poems.
///
/// Ids are unique, normalized (author, title) pairs are unique, and bodies
/// are non-empty. Poems keep the order they were listed in.
#[derive(Debug, Clone)]
pub struct Corpus {
    poems: Vec<Poem>,
    index: HashMap<PoemId, usize>,
}

/// Errors raised while loading or assembling a corpus.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no manifest.csv under {0}")]
    MissingManifest(PathBuf),
    #[error("manifest {0}: {1}")]
    MalformedManifest(PathBuf, String),
    #[error("poem file for {id} not found at {path}")]
    MissingPoemFile { id: PoemId, path: PathBuf },
    #[error("duplicate poem id {0}")]
    DuplicateId(PoemId),
    #[error("unknown category label {0:?}")]
    UnknownCategory(String),
    #[error("poem {0} has an empty body")]
    EmptyBody(PoemId),
    #[error("poems {0} and {1} have the same author and title")]
    DuplicateAuthorTitle(PoemId, PoemId),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Corpus {
    /// Builds a corpus from already-loaded poems, enforcing the corpus
    /// invariants.
    pub fn from_poems(poems: Vec<Poem>) -> Result<Corpus, CorpusError> {
        let mut index = HashMap::with_capacity(poems.len());
        let mut names: HashMap<String, PoemId> = HashMap::with_capacity(poems.len());
        for (i, poem) in poems.iter().enumerate() {
            if index.insert(poem.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(poem.id.clone()));
            }
            if poem.body.trim().is_empty() {
                return Err(CorpusError::EmptyBody(poem.id.clone()));
            }
            let key = format!(
                "{}\u{1f}{}",
                normalize_name(&poem.author),
                normalize_name(&poem.title)
            );
            if let Some(other) = names.insert(key, poem.id.clone()) {
                return Err(CorpusError::DuplicateAuthorTitle(other, poem.id.clone()));
            }
        }
        Ok(Corpus { poems, index })
    }

    /// Poems in their original listing order.
    pub fn poems(&self) -> &[Poem] {
        &self.poems
    }

    pub fn len(&self) -> usize {
        self.poems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poems.is_empty()
    }

    /// Looks a poem up by id.
    pub fn poem(&self, id: &str) -> Option<&Poem> {
        self.index.get(id).map(|&i| &self.poems[i])
    }

    /// Number of poems per category (categories with no poems included).
    pub fn counts(&self) -> BTreeMap<Category, usize> {
        let mut counts: BTreeMap<Category, usize> =
            Category::ALL.iter().map(|&c| (c, 0)).collect();
        for p in &self.poems {
            *counts.get_mut(&p.category).expect("all categories present") += 1;
        }
        counts
    }

    /// All poem ids in id order.
    pub fn ids_in_id_order(&self) -> Vec<PoemId> {
        let mut ids: Vec<PoemId> = self.poems.iter().map(|p| p.id.clone()).collect();
        ids.sort();
        ids
    }

    /// Ground-truth category ranks, one per poem, in poem-id order.
    pub fn ground_truth_ranks(&self) -> Vec<u32> {
        let mut poems: Vec<&Poem> = self.poems.iter().collect();
        poems.sort_by(|a, b| a.id.cmp(&b.id));
        poems.iter().map(|p| p.category.rank()).collect()
    }
}

/// Loads a corpus from `root`, which must contain a `manifest.csv` with the
/// header `id,category,author,title,file` and one body file per poem.
///
/// Category labels are matched case-insensitively and stored canonically.
/// Body files must be UTF-8; both LF and CRLF line endings are accepted
/// and normalized to LF.
pub fn load_corpus(root: &Path) -> Result<Corpus, CorpusError> {
    let manifest_path = root.join("manifest.csv");
    if !manifest_path.is_file() {
        return Err(CorpusError::MissingManifest(root.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(&manifest_path).map_err(|e| {
        CorpusError::MalformedManifest(manifest_path.clone(), e.to_string())
    })?;

    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedManifest(manifest_path.clone(), e.to_string()))?
        .clone();
    let expected = ["id", "category", "author", "title", "file"];
    let positions: Vec<usize> = expected
        .iter()
        .map(|name| {
            headers.iter().position(|h| h.trim() == *name).ok_or_else(|| {
                CorpusError::MalformedManifest(
                    manifest_path.clone(),
                    format!("missing column {name:?}"),
                )
            })
        })
        .collect::<Result<_, _>>()?;

    let mut poems = Vec::new();
    let mut seen_ids = HashSet::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            CorpusError::MalformedManifest(manifest_path.clone(), e.to_string())
        })?;
        let field = |col: usize| -> Result<&str, CorpusError> {
            record.get(positions[col]).map(str::trim).ok_or_else(|| {
                CorpusError::MalformedManifest(
                    manifest_path.clone(),
                    format!("row {} is missing fields", row_idx + 2),
                )
            })
        };

        let id = field(0)?.to_string();
        if id.is_empty() {
            return Err(CorpusError::MalformedManifest(
                manifest_path.clone(),
                format!("row {} has an empty id", row_idx + 2),
            ));
        }
        if !seen_ids.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
        let category_label = field(1)?;
        let category = Category::parse_label(category_label)
            .ok_or_else(|| CorpusError::UnknownCategory(category_label.to_string()))?;
        let author = field(2)?.to_string();
        let title = field(3)?.to_string();
        let body_path = root.join(field(4)?);
        if !body_path.is_file() {
            return Err(CorpusError::MissingPoemFile {
                id,
                path: body_path,
            });
        }
        let raw = std::fs::read_to_string(&body_path).map_err(|source| CorpusError::Io {
            path: body_path.clone(),
            source,
        })?;
        let body = raw.replace("\r\n", "\n").trim_end().to_string();
        if body.is_empty() {
            return Err(CorpusError::EmptyBody(id));
        }

        poems.push(Poem {
            id,
            author,
            title,
            body,
            category,
        });
    }

    Corpus::from_poems(poems)
}
