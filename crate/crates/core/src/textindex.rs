//! Caption normalization and bag-of-words keyword retrieval.
//!
//! Text is lowercased, split into maximal runs of alphanumeric characters
//! (so `money-laundering` and `money laundering` normalize alike), mapped
//! through a surface→lemma dictionary, and stripped of stopwords. The
//! inverted index answers AND queries over lemma bags: a phrase matches a
//! caption when every one of its lemmas occurs somewhere in the caption.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io;

const BUILTIN_LEMMAS: &str = include_str!("../data/lemmas_en.tsv");
const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// Splits lowercased text into alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct LemmaDictionary {
    lemmas: HashMap<String, String>,
    stopwords: HashSet<String>,
}

impl LemmaDictionary {
    /// Validates the mapping and resolves lemma chains so that lemmatization
    /// is idempotent (`a→b, b→c` becomes `a→c, b→c`).
    pub fn new(lemmas: HashMap<String, String>, stopwords: HashSet<String>) -> Result<Self> {
        let mut lower: HashMap<String, String> = HashMap::with_capacity(lemmas.len());
        for (surface, lemma) in lemmas {
            let toks = tokenize(&lemma);
            if toks.len() != 1 || toks[0] != lemma {
                return Err(Error::invalid(format!(
                    "lemma `{lemma}` for `{surface}` must be a single lowercase token"
                )));
            }
            lower.insert(surface.to_lowercase(), lemma);
        }
        let mut resolved = HashMap::with_capacity(lower.len());
        for (surface, lemma) in &lower {
            let mut cur = lemma;
            let mut steps = 0;
            while let Some(next) = lower.get(cur) {
                if next == cur {
                    break;
                }
                cur = next;
                steps += 1;
                if steps > lower.len() {
                    return Err(Error::invalid(format!("lemma cycle through `{surface}`")));
                }
            }
            resolved.insert(surface.clone(), cur.clone());
        }
        let stopwords = stopwords.into_iter().map(|s| s.to_lowercase()).collect();
        Ok(LemmaDictionary {
            lemmas: resolved,
            stopwords,
        })
    }

    /// Parses a `surface<TAB>lemma` file and a one-token-per-line stopword file.
    pub fn parse(lemma_tsv: &str, stopwords: &str) -> Result<Self> {
        let mut lemmas = HashMap::new();
        for (row, line) in io::numbered_lines(lemma_tsv) {
            if line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(l), None) if !s.trim().is_empty() && !l.trim().is_empty() => {
                    lemmas.insert(s.trim().to_string(), l.trim().to_string());
                }
                _ => {
                    return Err(Error::Record {
                        source_name: "lemma dictionary".into(),
                        row,
                        message: "expected `surface<TAB>lemma`".into(),
                    })
                }
            }
        }
        let stop = io::parse_list(stopwords).into_iter().collect();
        LemmaDictionary::new(lemmas, stop)
    }

    pub fn from_files(lemma_tsv: &Path, stopwords: &Path) -> Result<Self> {
        LemmaDictionary::parse(&io::read_to_string(lemma_tsv)?, &io::read_to_string(stopwords)?)
    }

    /// The shipped English lemma table and stopword list.
    pub fn builtin() -> Self {
        LemmaDictionary::parse(BUILTIN_LEMMAS, BUILTIN_STOPWORDS).expect("builtin dictionary is valid")
    }

    pub fn builtin_stopwords() -> &'static str {
        BUILTIN_STOPWORDS
    }

    pub fn builtin_lemmas() -> &'static str {
        BUILTIN_LEMMAS
    }

    pub fn lemma<'a>(&'a self, token: &'a str) -> &'a str {
        self.lemmas.get(token).map(String::as_str).unwrap_or(token)
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// Lowercases, tokenizes, lemmatizes and removes stopwords, preserving order.
    pub fn normalize(&self, text: &str) -> Vec<String> {
        tokenize(text)
            .into_iter()
            .filter_map(|tok| {
                if self.is_stopword(&tok) {
                    return None;
                }
                let lemma = self.lemma(&tok);
                (!self.is_stopword(lemma)).then(|| lemma.to_string())
            })
            .collect()
    }
}

/// A keyword phrase reduced to its lemma bag (sorted, duplicate-free).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeywordQuery {
    phrase: String,
    lemmas: Vec<String>,
}

impl KeywordQuery {
    pub fn new(phrase: &str, dict: &LemmaDictionary) -> Result<Self> {
        let mut lemmas = dict.normalize(phrase);
        lemmas.sort();
        lemmas.dedup();
        if lemmas.is_empty() {
            return Err(Error::invalid(format!(
                "query `{phrase}` is empty after normalization"
            )));
        }
        Ok(KeywordQuery {
            phrase: phrase.to_string(),
            lemmas,
        })
    }

    pub fn phrase(&self) -> &str {
        &self.phrase
    }

    pub fn lemmas(&self) -> &[String] {
        &self.lemmas
    }
}

const INDEX_MAGIC: &[u8; 8] = b"DAUDIDX\0";
const INDEX_VERSION: u32 = 1;
const DEFAULT_SHARD_LEN: usize = 1024;

/// Lemma → sorted, duplicate-free list of document ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<u32>>,
    doc_sizes: Vec<u32>,
}

impl InvertedIndex {
    /// Builds an index over `(doc_id, text)` pairs. Ids must be unique; the
    /// document count is `max id + 1`.
    pub fn build<S: AsRef<str> + Sync>(docs: &[(u32, S)], dict: &LemmaDictionary) -> Result<Self> {
        Self::build_sharded(docs, dict, DEFAULT_SHARD_LEN)
    }

    /// As [`InvertedIndex::build`] with an explicit shard length. The result
    /// does not depend on `shard_len`.
    pub fn build_sharded<S: AsRef<str> + Sync>(
        docs: &[(u32, S)],
        dict: &LemmaDictionary,
        shard_len: usize,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        for (id, _) in docs {
            if !seen.insert(*id) {
                return Err(Error::DuplicateId(id.to_string()));
            }
        }
        let doc_count = docs.iter().map(|(id, _)| *id as usize + 1).max().unwrap_or(0);

        type Shard = (BTreeMap<String, Vec<u32>>, Vec<(u32, u32)>);
        let shards: Vec<Shard> = docs
            .par_chunks(shard_len.max(1))
            .map(|chunk| {
                let mut local: BTreeMap<String, Vec<u32>> = BTreeMap::new();
                let mut sizes = Vec::with_capacity(chunk.len());
                for (id, text) in chunk {
                    let lemmas = dict.normalize(text.as_ref());
                    sizes.push((*id, lemmas.len() as u32));
                    for l in lemmas {
                        let list = local.entry(l).or_default();
                        if list.last() != Some(id) {
                            list.push(*id);
                        }
                    }
                }
                (local, sizes)
            })
            .collect();

        let mut postings: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        let mut doc_sizes = vec![0u32; doc_count];
        for (local, sizes) in shards {
            for (lemma, ids) in local {
                postings.entry(lemma).or_default().extend(ids);
            }
            for (id, n) in sizes {
                doc_sizes[id as usize] = n;
            }
        }
        postings.par_iter_mut().for_each(|(_, ids)| {
            ids.sort_unstable();
            ids.dedup();
        });
        Ok(InvertedIndex { postings, doc_sizes })
    }

    /// Indexes the alt-text of every image, with the image position as doc id.
    pub fn over_captions(images: &[crate::corpus::ImageRecord], dict: &LemmaDictionary) -> Self {
        let docs: Vec<(u32, &str)> = images
            .iter()
            .enumerate()
            .map(|(i, im)| (i as u32, im.alt_text.as_str()))
            .collect();
        Self::build(&docs, dict).expect("positional ids are unique")
    }

    pub fn doc_count(&self) -> usize {
        self.doc_sizes.len()
    }

    /// Number of lemmas (with multiplicity) in a document.
    pub fn doc_size(&self, doc: u32) -> u32 {
        self.doc_sizes.get(doc as usize).copied().unwrap_or(0)
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn postings(&self, lemma: &str) -> &[u32] {
        self.postings.get(lemma).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Documents containing every lemma of `q`.
    pub fn query(&self, q: &KeywordQuery) -> Vec<u32> {
        let mut lists: Vec<&[u32]> = q.lemmas().iter().map(|l| self.postings(l)).collect();
        lists.sort_by_key(|l| l.len());
        let Some((first, rest)) = lists.split_first() else {
            return Vec::new();
        };
        let mut acc: Vec<u32> = first.to_vec();
        for list in rest {
            if acc.is_empty() {
                break;
            }
            acc = intersect(&acc, list);
        }
        acc
    }

    /// Documents matching at least one query, sorted and duplicate-free.
    pub fn query_any(&self, queries: &[KeywordQuery]) -> Vec<u32> {
        let mut hit = vec![false; self.doc_count()];
        for q in queries {
            for d in self.query(q) {
                hit[d as usize] = true;
            }
        }
        hit.iter()
            .enumerate()
            .filter(|(_, &h)| h)
            .map(|(i, _)| i as u32)
            .collect()
    }

    /// Versioned little-endian binary encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.doc_sizes.len() as u32).to_le_bytes());
        for s in &self.doc_sizes {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&(self.postings.len() as u32).to_le_bytes());
        for (term, ids) in &self.postings {
            out.extend_from_slice(&(term.len() as u32).to_le_bytes());
            out.extend_from_slice(term.as_bytes());
            out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
            for id in ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != INDEX_MAGIC {
            return Err(Error::Format("not an index file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(Error::Format(format!("unsupported index version {version}")));
        }
        let doc_count = r.u32()? as usize;
        let doc_sizes = (0..doc_count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let term_count = r.u32()? as usize;
        let mut postings = BTreeMap::new();
        let mut prev: Option<String> = None;
        for _ in 0..term_count {
            let len = r.u32()? as usize;
            let term = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("term is not utf-8".into()))?
                .to_string();
            if prev.as_ref().is_some_and(|p| *p >= term) {
                return Err(Error::Format("terms not strictly ascending".into()));
            }
            let n = r.u32()? as usize;
            let ids = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            if ids.windows(2).any(|w| w[0] >= w[1]) || ids.last().is_some_and(|&d| d as usize >= doc_count) {
                return Err(Error::Format(format!("corrupt posting list for `{term}`")));
            }
            prev = Some(term.clone());
            postings.insert(term, ids);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after index".into()));
        }
        Ok(InvertedIndex { postings, doc_sizes })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&io::read_bytes(path)?)
    }
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut out = Vec::with_capacity(small.len());
    let mut lo = 0;
    for &x in small {
        match large[lo..].binary_search(&x) {
            Ok(i) => {
                out.push(x);
                lo += i + 1;
            }
            Err(i) => lo += i,
        }
        if lo >= large.len() {
            break;
        }
    }
    out
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
