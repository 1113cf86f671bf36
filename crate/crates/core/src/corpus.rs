//! IOB2-tagged corpora in CoNLL token-per-line format.
//!
//! Each non-blank line holds a token and its tag separated by a tab or a run
//! of spaces; a blank line ends a sentence. `-DOCSTART-` lines are treated as
//! sentence boundaries. Tags are `O`, `B-<type>`, `I-<type>`, or the bare `B`
//! / `I` used by single-type benchmark dumps, which resolve to the corpus's
//! only declared type.
//!
//! Raw IOB violations (an `I` tag after `O`, at the start of a sentence, or
//! after a tag of another type) are repaired by promoting the `I` to `B`.
//! Every repair is reported back to the caller.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spanconv::iob2_to_spans;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TagKind {
    B,
    I,
    O,
}

/// One IOB2 tag. `entity_type` is present iff `kind` is not `O`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IobTag {
    kind: TagKind,
    entity_type: Option<String>,
}

impl IobTag {
    pub fn outside() -> Self {
        IobTag { kind: TagKind::O, entity_type: None }
    }

    pub fn begin(entity_type: impl Into<String>) -> Self {
        IobTag { kind: TagKind::B, entity_type: Some(entity_type.into()) }
    }

    pub fn inside(entity_type: impl Into<String>) -> Self {
        IobTag { kind: TagKind::I, entity_type: Some(entity_type.into()) }
    }

    pub fn kind(&self) -> TagKind {
        self.kind
    }

    pub fn entity_type(&self) -> Option<&str> {
        self.entity_type.as_deref()
    }

    pub fn is_begin(&self) -> bool {
        self.kind == TagKind::B
    }
}

impl fmt::Display for IobTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.kind, &self.entity_type) {
            (TagKind::O, _) => f.write_str("O"),
            (TagKind::B, Some(t)) => write!(f, "B-{t}"),
            (TagKind::I, Some(t)) => write!(f, "I-{t}"),
            (_, None) => unreachable!("typed tag without entity type"),
        }
    }
}

/// The set of entity types a corpus declares.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet(BTreeSet<String>);

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LabelSet(labels.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.contains(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The single declared type, used to resolve bare `B`/`I` tags.
    fn only(&self) -> Option<&str> {
        if self.0.len() == 1 {
            self.0.iter().next().map(String::as_str)
        } else {
            None
        }
    }

    fn parse_tag(&self, raw: &str, line: usize) -> Result<IobTag> {
        let (kind, ty) = match raw {
            "O" => return Ok(IobTag::outside()),
            "B" | "I" => {
                let ty = self.only().ok_or_else(|| {
                    Error::parse(line, format!("bare tag `{raw}` needs exactly one declared entity type"))
                })?;
                (&raw[..1], ty)
            }
            _ => match raw.split_once('-') {
                Some((kind @ ("B" | "I"), ty)) if !ty.is_empty() => (kind, ty),
                _ => return Err(Error::parse(line, format!("malformed tag `{raw}`"))),
            },
        };
        if !self.contains(ty) {
            return Err(Error::parse(line, format!("entity type `{ty}` is not declared")));
        }
        Ok(if kind == "B" { IobTag::begin(ty) } else { IobTag::inside(ty) })
    }
}

impl FromStr for LabelSet {
    type Err = std::convert::Infallible;

    /// Comma-separated list of types.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(LabelSet::new(s.split(',').map(str::trim).filter(|t| !t.is_empty())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSentence {
    pub id: String,
    pub tokens: Vec<String>,
}

/// A sentence with one IOB2 tag per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    pub sentence: TokenizedSentence,
    pub tags: Vec<IobTag>,
}

impl LabeledSentence {
    /// Builds a sentence from already well-formed parts.
    ///
    /// Panics if token and tag counts differ or the tags are not IOB2.
    pub fn new(id: impl Into<String>, tokens: Vec<String>, tags: Vec<IobTag>) -> Self {
        assert_eq!(tokens.len(), tags.len(), "token/tag count mismatch");
        assert!(is_well_formed(&tags), "tags are not well-formed IOB2");
        LabeledSentence { sentence: TokenizedSentence { id: id.into(), tokens }, tags }
    }

    pub fn id(&self) -> &str {
        &self.sentence.id
    }

    pub fn tokens(&self) -> &[String] {
        &self.sentence.tokens
    }

    pub fn len(&self) -> usize {
        self.sentence.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentence.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.sentence.tokens.join(" ")
    }
}

/// True when no `I` tag follows `O`, sentence start, or a tag of another type.
pub fn is_well_formed(tags: &[IobTag]) -> bool {
    let mut prev: Option<&IobTag> = None;
    for tag in tags {
        if tag.kind == TagKind::I {
            match prev {
                Some(p) if p.kind != TagKind::O && p.entity_type == tag.entity_type => {}
                _ => return false,
            }
        }
        prev = Some(tag);
    }
    true
}

/// A repaired tag: the offending `I` was promoted to `B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repair {
    pub line: usize,
    pub sentence_id: String,
    pub token_index: usize,
    pub original: IobTag,
    pub repaired: IobTag,
}

impl fmt::Display for Repair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: {} token {}: {} -> {}",
            self.line, self.sentence_id, self.token_index, self.original, self.repaired
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutput {
    pub sentences: Vec<LabeledSentence>,
    pub repairs: Vec<Repair>,
}

/// Parses CoNLL text from `reader`. Sentence ids are `<split>-<index>`.
pub fn parse_conll<R: BufRead>(reader: R, split: &str, labels: &LabelSet) -> Result<ParseOutput> {
    let mut out = ParseOutput::default();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<IobTag> = Vec::new();
    let mut tag_lines: Vec<usize> = Vec::new();

    let flush = |tokens: &mut Vec<String>, tags: &mut Vec<IobTag>, lines: &mut Vec<usize>, out: &mut ParseOutput| {
        if tokens.is_empty() {
            return;
        }
        let id = format!("{split}-{}", out.sentences.len());
        let mut prev: Option<IobTag> = None;
        for (i, tag) in tags.iter_mut().enumerate() {
            if tag.kind == TagKind::I {
                let continues = matches!(&prev, Some(p) if p.kind != TagKind::O && p.entity_type == tag.entity_type);
                if !continues {
                    let repaired = IobTag { kind: TagKind::B, entity_type: tag.entity_type.clone() };
                    out.repairs.push(Repair {
                        line: lines[i],
                        sentence_id: id.clone(),
                        token_index: i,
                        original: tag.clone(),
                        repaired: repaired.clone(),
                    });
                    *tag = repaired;
                }
            }
            prev = Some(tag.clone());
        }
        out.sentences.push(LabeledSentence {
            sentence: TokenizedSentence { id, tokens: std::mem::take(tokens) },
            tags: std::mem::take(tags),
        });
        lines.clear();
    };

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with("-DOCSTART-") {
            flush(&mut tokens, &mut tags, &mut tag_lines, &mut out);
            continue;
        }
        let cols: Vec<&str> = line.split(['\t', ' ']).filter(|c| !c.is_empty()).collect();
        if cols.len() != 2 {
            return Err(Error::parse(lineno, format!("expected 2 columns, found {}", cols.len())));
        }
        tokens.push(cols[0].to_string());
        tags.push(labels.parse_tag(cols[1], lineno)?);
        tag_lines.push(lineno);
    }
    flush(&mut tokens, &mut tags, &mut tag_lines, &mut out);
    Ok(out)
}

pub fn parse_conll_str(text: &str, split: &str, labels: &LabelSet) -> Result<ParseOutput> {
    parse_conll(text.as_bytes(), split, labels)
}

/// Writes sentences as CoNLL: one `token<TAB>tag` per line, blank line after each sentence.
pub fn write_conll<'a, W, I>(mut w: W, sentences: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a LabeledSentence>,
{
    for s in sentences {
        for (token, tag) in s.tokens().iter().zip(&s.tags) {
            writeln!(w, "{token}\t{tag}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn to_conll_string<'a, I>(sentences: I) -> String
where
    I: IntoIterator<Item = &'a LabeledSentence>,
{
    let mut buf = Vec::new();
    write_conll(&mut buf, sentences).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("tokens are UTF-8")
}

/// A named dataset with its declared label set and train/dev/test splits.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub name: String,
    pub entity_types: LabelSet,
    splits: BTreeMap<String, Vec<LabeledSentence>>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, entity_types: LabelSet) -> Self {
        Corpus { name: name.into(), entity_types, splits: BTreeMap::new() }
    }

    /// Adds a split, checking label membership and id uniqueness across the corpus.
    pub fn insert_split(&mut self, split: impl Into<String>, sentences: Vec<LabeledSentence>) -> Result<()> {
        let mut seen: HashSet<&str> = self.splits.values().flatten().map(LabeledSentence::id).collect();
        for s in &sentences {
            if !seen.insert(s.id()) {
                return Err(Error::DuplicateSentence(s.id().to_string()));
            }
            if let Some(ty) = s.tags.iter().filter_map(IobTag::entity_type).find(|t| !self.entity_types.contains(t)) {
                return Err(Error::UnknownEntityType(ty.to_string()));
            }
        }
        self.splits.insert(split.into(), sentences);
        Ok(())
    }

    pub fn split(&self, name: &str) -> Result<&[LabeledSentence]> {
        self.splits.get(name).map(Vec::as_slice).ok_or_else(|| Error::UnknownSplit(name.to_string()))
    }

    pub fn split_names(&self) -> impl Iterator<Item = &str> {
        self.splits.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub split: String,
    pub sentences: usize,
    pub tokens: usize,
    pub entities: usize,
    pub entities_by_type: BTreeMap<String, usize>,
    /// Entities per sentence.
    pub mean_entities: f64,
}

pub fn corpus_stats(corpus: &Corpus, split: &str) -> Result<CorpusStats> {
    Ok(sentence_stats(split, corpus.split(split)?))
}

/// Statistics over an arbitrary list of sentences, e.g. a drawn sample.
pub fn sentence_stats(label: &str, sentences: &[LabeledSentence]) -> CorpusStats {
    let mut by_type = BTreeMap::new();
    let mut tokens = 0;
    for s in sentences {
        tokens += s.len();
        for tag in s.tags.iter().filter(|t| t.is_begin()) {
            *by_type.entry(tag.entity_type().unwrap_or_default().to_string()).or_insert(0) += 1;
        }
    }
    let entities: usize = by_type.values().sum();
    CorpusStats {
        split: label.to_string(),
        sentences: sentences.len(),
        tokens,
        entities,
        entities_by_type: by_type,
        mean_entities: if sentences.is_empty() { 0.0 } else { entities as f64 / sentences.len() as f64 },
    }
}

/// Number of entities in a sentence according to its spans.
pub fn entity_count(sentence: &LabeledSentence) -> usize {
    iob2_to_spans(sentence).len()
}
