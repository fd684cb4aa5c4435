//! Dataset file formats: `label<TAB>text` classification files (an optional
//! middle column carries the aspect term) and CoNLL-style
//! `token<TAB>POS<TAB>tag` files with blank-line sentence separators.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::corpus::tokenize::{split_words, tokenize, Pos, Sentence};
use crate::corpus::vocab::Vocab;
use crate::error::{Error, Result};

/// One BIOS tag. Roles are free-form strings such as `H` (holder) or `T` (target).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bios {
    O,
    B(String),
    I(String),
    S(String),
}

impl Bios {
    pub fn parse(tag: &str) -> Option<Bios> {
        if tag == "O" {
            return Some(Bios::O);
        }
        let (prefix, role) = tag.split_once('-')?;
        if role.is_empty() {
            return None;
        }
        let role = role.to_string();
        match prefix {
            "B" => Some(Bios::B(role)),
            "I" => Some(Bios::I(role)),
            "S" => Some(Bios::S(role)),
            _ => None,
        }
    }

    pub fn role(&self) -> Option<&str> {
        match self {
            Bios::O => None,
            Bios::B(r) | Bios::I(r) | Bios::S(r) => Some(r),
        }
    }
}

impl fmt::Display for Bios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bios::O => f.write_str("O"),
            Bios::B(r) => write!(f, "B-{r}"),
            Bios::I(r) => write!(f, "I-{r}"),
            Bios::S(r) => write!(f, "S-{r}"),
        }
    }
}

/// Repairs orphan `I-X` tags (no open `B-X`/`I-X` span on their left) into
/// `B-X`. Returns the number of repaired positions.
pub fn canonicalize_bios(tags: &mut [Bios]) -> usize {
    let mut repaired = 0;
    let mut open: Option<String> = None;
    for tag in tags.iter_mut() {
        match tag {
            Bios::I(role) => {
                if open.as_deref() != Some(role.as_str()) {
                    *tag = Bios::B(role.clone());
                    repaired += 1;
                }
                open = tag.role().map(str::to_string);
            }
            Bios::B(role) => open = Some(role.clone()),
            Bios::S(_) | Bios::O => open = None,
        }
    }
    repaired
}

pub fn is_well_formed(tags: &[Bios]) -> bool {
    let mut copy = tags.to_vec();
    canonicalize_bios(&mut copy) == 0
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Single(Sentence),
    /// Aspect-level input: aspect description and its context text.
    Pair {
        aspect: Sentence,
        context: Sentence,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Class(String),
    Tags(Vec<Bios>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub input: Input,
    pub label: Label,
    /// Document identifier used for cross-validation folds.
    pub doc_id: String,
}

/// Reads `label<TAB>text` (sentence level) or `label<TAB>aspect<TAB>text`
/// (aspect level). The first data line fixes the column count for the file.
pub fn load_classification_tsv(path: &Path, vocab: &Vocab) -> Result<Vec<LabeledExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_classification(&text, path, vocab)
}

pub fn parse_classification(text: &str, path: &Path, vocab: &Vocab) -> Result<Vec<LabeledExample>> {
    let mut columns = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let expected = *columns.get_or_insert(fields.len());
        if fields.len() != expected || !(2..=3).contains(&fields.len()) {
            return Err(Error::format(
                path,
                i + 1,
                format!(
                    "expected {} tab-separated columns, found {}",
                    expected.clamp(2, 3),
                    fields.len()
                ),
            ));
        }
        let label = fields[0].trim();
        if label.is_empty() {
            return Err(Error::format(path, i + 1, "empty label"));
        }
        let input = if fields.len() == 2 {
            Input::Single(tokenize(fields[1], vocab))
        } else {
            Input::Pair {
                aspect: tokenize(fields[1], vocab),
                context: tokenize(fields[2], vocab),
            }
        };
        out.push(LabeledExample {
            input,
            label: Label::Class(label.to_string()),
            doc_id: format!("line{}", i + 1),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConllReport {
    pub sentences: usize,
    /// Number of orphan `I-` tags rewritten to `B-`.
    pub repaired_tags: usize,
}

/// Reads a CoNLL-style tagging file. A comment line `# doc = <id>` sets the
/// document id of the sentences that follow; otherwise each sentence is its
/// own document. POS tags from the file override the rule tagger; tags
/// outside the noun, adjective, adverb and verb families read as other.
pub fn load_conll(path: &Path, vocab: &Vocab) -> Result<(Vec<LabeledExample>, ConllReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, path, vocab)
}

pub fn parse_conll(text: &str, path: &Path, vocab: &Vocab) -> Result<(Vec<LabeledExample>, ConllReport)> {
    let mut report = ConllReport::default();
    let mut out = Vec::new();
    let mut doc: Option<String> = None;
    let mut surfaces = Vec::new();
    let mut pos = Vec::new();
    let mut tags = Vec::new();

    let flush = |surfaces: &mut Vec<String>,
                 pos: &mut Vec<Pos>,
                 tags: &mut Vec<Bios>,
                 doc: &Option<String>,
                 out: &mut Vec<LabeledExample>,
                 report: &mut ConllReport| {
        if surfaces.is_empty() {
            return;
        }
        report.repaired_tags += canonicalize_bios(tags);
        let mut sentence = Sentence::from_surfaces(std::mem::take(surfaces), vocab);
        sentence.pos = Some(std::mem::take(pos));
        let doc_id = doc.clone().unwrap_or_else(|| format!("sent{}", out.len()));
        out.push(LabeledExample {
            input: Input::Single(sentence),
            label: Label::Tags(std::mem::take(tags)),
            doc_id,
        });
        report.sentences += 1;
    };

    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut surfaces, &mut pos, &mut tags, &doc, &mut out, &mut report);
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                if key.trim() == "doc" {
                    flush(&mut surfaces, &mut pos, &mut tags, &doc, &mut out, &mut report);
                    doc = Some(value.trim().to_string());
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::format(
                path,
                i + 1,
                format!(
                    "expected 3 tab-separated columns (token, POS, tag), found {}",
                    fields.len()
                ),
            ));
        }
        let surface = split_words(fields[0]).concat();
        if surface.is_empty() {
            return Err(Error::format(path, i + 1, "empty token"));
        }
        let p = Pos::parse(fields[1].trim()).unwrap_or(Pos::Other);
        let tag = Bios::parse(fields[2].trim())
            .ok_or_else(|| Error::format(path, i + 1, format!("invalid BIOS tag {:?}", fields[2])))?;
        surfaces.push(surface);
        pos.push(p);
        tags.push(tag);
    }
    flush(&mut surfaces, &mut pos, &mut tags, &doc, &mut out, &mut report);
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.tsv")
    }

    #[test]
    fn classification_line() {
        let vocab = Vocab::from_tokens(["great", "movie"]);
        let ex = parse_classification("1\tgreat movie\n", p(), &vocab).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].label, Label::Class("1".into()));
        match &ex[0].input {
            Input::Single(s) => assert_eq!(s.len(), 2),
            _ => panic!("expected single input"),
        }
    }

    #[test]
    fn aspect_level_line() {
        let vocab = Vocab::from_tokens(["x"]);
        let ex = parse_classification("positive\tbattery life\tthe battery life is great\n", p(), &vocab).unwrap();
        match &ex[0].input {
            Input::Pair { aspect, context } => {
                assert_eq!(aspect.surfaces, ["battery", "life"]);
                assert_eq!(context.len(), 5);
            }
            _ => panic!("expected pair input"),
        }
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let vocab = Vocab::from_tokens(["x"]);
        let err = parse_classification("1\tok\n\n0\ta\tb\n", p(), &vocab).unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_classification("just text\n", p(), &vocab).is_err());
    }

    #[test]
    fn conll_block_to_tags() {
        let vocab = Vocab::from_tokens(["x"]);
        let text = "John\tNOUN\tB-H\nSmith\tNOUN\tI-H\nsaid\tVERB\tO\n";
        let (ex, report) = parse_conll(text, p(), &vocab).unwrap();
        assert_eq!(report.sentences, 1);
        assert_eq!(report.repaired_tags, 0);
        assert_eq!(
            ex[0].label,
            Label::Tags(vec![Bios::B("H".into()), Bios::I("H".into()), Bios::O])
        );
    }

    #[test]
    fn orphan_inside_is_repaired() {
        let vocab = Vocab::from_tokens(["x"]);
        let text = "a\tOTHER\tO\nb\tNOUN\tI-T\nc\tOTHER\tO\n\nd\tNOUN\tS-H\ne\tNOUN\tI-H\n";
        let (ex, report) = parse_conll(text, p(), &vocab).unwrap();
        assert_eq!(report.repaired_tags, 2);
        assert_eq!(ex[0].label, Label::Tags(vec![Bios::O, Bios::B("T".into()), Bios::O]));
        assert_eq!(ex[1].label, Label::Tags(vec![Bios::S("H".into()), Bios::B("H".into())]));
    }

    #[test]
    fn conll_doc_ids_and_errors() {
        let vocab = Vocab::from_tokens(["x"]);
        let text = "# doc = d1\na\tNOUN\tO\n\nb\tNOUN\tO\n\n# doc = d2\nc\tNOUN\tO\n";
        let (ex, _) = parse_conll(text, p(), &vocab).unwrap();
        let ids: Vec<_> = ex.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(ids, ["d1", "d1", "d2"]);
        let err = parse_conll("a\tNOUN\n", p(), &vocab).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
        assert!(parse_conll("a\tNOUN\tQ-X\n", p(), &vocab).is_err());
    }

    #[test]
    fn mixed_role_inside_is_orphan() {
        let mut tags = vec![Bios::B("H".into()), Bios::I("T".into())];
        assert_eq!(canonicalize_bios(&mut tags), 1);
        assert_eq!(tags[1], Bios::B("T".into()));
        assert!(is_well_formed(&tags));
    }
}
