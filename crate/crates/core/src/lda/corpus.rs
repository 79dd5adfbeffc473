use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Sparse bag of words: distinct term ids with their counts, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub terms: Vec<u32>,
    pub counts: Vec<u32>,
}

impl Document {
    /// Builds a document from `(term, count)` pairs; pairs must be distinct
    /// terms with positive counts.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let (terms, counts) = pairs.into_iter().unzip();
        Document { terms, counts }
    }

    /// Number of distinct terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Number of tokens.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub vocab_size: usize,
    pub documents: Vec<Document>,
    pub vocabulary: Option<Vec<String>>,
}

impl Corpus {
    pub fn new(vocab_size: usize, documents: Vec<Document>) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::param("corpus", "vocabulary size must be positive"));
        }
        for (d, doc) in documents.iter().enumerate() {
            if doc.is_empty() || doc.terms.len() != doc.counts.len() {
                return Err(Error::data(d, "empty or malformed document"));
            }
            let mut seen = HashSet::with_capacity(doc.len());
            for (&t, &c) in doc.terms.iter().zip(&doc.counts) {
                if t as usize >= vocab_size {
                    return Err(Error::data(
                        d,
                        format!("term id {t} >= vocabulary size {vocab_size}"),
                    ));
                }
                if c == 0 {
                    return Err(Error::data(d, format!("term {t} has zero count")));
                }
                if !seen.insert(t) {
                    return Err(Error::data(d, format!("term {t} repeated")));
                }
            }
        }
        Ok(Corpus {
            vocab_size,
            documents,
            vocabulary: None,
        })
    }

    pub fn with_vocabulary(mut self, vocabulary: Vec<String>) -> Result<Self> {
        if vocabulary.len() != self.vocab_size {
            return Err(Error::DimensionMismatch {
                expected: self.vocab_size,
                got: vocabulary.len(),
            });
        }
        self.vocabulary = Some(vocabulary);
        Ok(self)
    }

    pub fn num_tokens(&self) -> u64 {
        self.documents.iter().map(Document::total).sum()
    }

    /// Parses the LDA-C format: one document per line, `N term:count ...`
    /// with `N` distinct terms. Without `vocab_size`, the vocabulary is the
    /// largest term id plus one.
    ///
    /// Error positions are a 1-based line number and the byte offset of the
    /// offending field from the start of the input.
    pub fn parse_ldac(text: &str, vocab_size: Option<usize>) -> Result<Self> {
        let mut documents = Vec::new();
        let mut max_term = 0u32;
        let mut line_start = 0usize;
        let lines: Vec<&str> = text.split('\n').collect();
        let last = lines.len() - 1;
        for (idx, raw) in lines.iter().enumerate() {
            let line_no = idx + 1;
            let start = line_start;
            line_start += raw.len() + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                if idx == last {
                    break;
                }
                return Err(Error::Parse {
                    line: line_no,
                    offset: start,
                    detail: "empty document".into(),
                });
            }
            let mut fields = fields_with_offsets(line, start);
            let (n_str, n_off) = fields.next().expect("non-empty line has a field");
            let n: usize = n_str.parse().map_err(|_| Error::Parse {
                line: line_no,
                offset: n_off,
                detail: format!("expected term count, found {n_str:?}"),
            })?;
            if n == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    offset: n_off,
                    detail: "document has no terms".into(),
                });
            }
            let mut terms = Vec::with_capacity(n);
            let mut counts = Vec::with_capacity(n);
            let mut seen = HashSet::with_capacity(n);
            for (field, off) in fields {
                let parse_err = |detail: String| Error::Parse {
                    line: line_no,
                    offset: off,
                    detail,
                };
                let (t, c) = field
                    .split_once(':')
                    .ok_or_else(|| parse_err(format!("expected term:count, found {field:?}")))?;
                let t: u32 = t
                    .parse()
                    .map_err(|_| parse_err(format!("bad term id {t:?}")))?;
                let c: u32 = c
                    .parse()
                    .map_err(|_| parse_err(format!("bad count {c:?}")))?;
                if c == 0 {
                    return Err(parse_err(format!("zero count for term {t}")));
                }
                if let Some(v) = vocab_size {
                    if t as usize >= v {
                        return Err(parse_err(format!("term id {t} >= vocabulary size {v}")));
                    }
                }
                if !seen.insert(t) {
                    return Err(parse_err(format!("term {t} repeated")));
                }
                max_term = max_term.max(t);
                terms.push(t);
                counts.push(c);
            }
            if terms.len() != n {
                return Err(Error::Parse {
                    line: line_no,
                    offset: n_off,
                    detail: format!("declared {n} terms, found {}", terms.len()),
                });
            }
            documents.push(Document { terms, counts });
        }
        if documents.is_empty() {
            return Err(Error::EmptyData);
        }
        let v = vocab_size.unwrap_or(max_term as usize + 1);
        Corpus::new(v, documents)
    }

    /// Serializes in the LDA-C format, one line per document.
    pub fn to_ldac(&self) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            write!(out, "{}", doc.len()).unwrap();
            for (t, c) in doc.terms.iter().zip(&doc.counts) {
                write!(out, " {t}:{c}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a vocabulary file: one term per line, line number = id.
pub fn parse_vocabulary(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect()
}

fn fields_with_offsets(line: &str, base: usize) -> impl Iterator<Item = (&str, usize)> {
    let mut pos = 0;
    std::iter::from_fn(move || {
        let rest = &line[pos..];
        let skip = rest.len() - rest.trim_start().len();
        let rest = &rest[skip..];
        if rest.is_empty() {
            return None;
        }
        let len = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let start = pos + skip;
        pos = start + len;
        Some((&line[start..start + len], base + start))
    })
}
