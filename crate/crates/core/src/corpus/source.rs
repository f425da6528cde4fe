use std::fs::File;
use std::io::{BufRead, BufReader, Lines, Write};
use std::path::{Path, PathBuf};

use unicode_normalization::UnicodeNormalization;

use super::{Segmenter, Sentence};
use crate::error::{Error, Result};

/// A raw document, NFC-normalized on ingest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: &str) -> Document {
        Document {
            id: id.into(),
            text: text.nfc().collect(),
        }
    }
}

enum Inner {
    Files { root: PathBuf, files: std::vec::IntoIter<PathBuf> },
    Lines { path: PathBuf, lines: Lines<BufReader<File>>, line_no: usize },
    Memory(std::vec::IntoIter<Document>),
}

/// Streams documents from a directory of text files (one document per
/// file, visited in sorted path order) or from a single file holding one
/// document per line.
pub struct DocumentReader {
    inner: Inner,
}

pub fn read_documents(path: &Path) -> Result<DocumentReader> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let inner = if meta.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        files.sort();
        Inner::Files {
            root: path.to_path_buf(),
            files: files.into_iter(),
        }
    } else {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Inner::Lines {
            path: path.to_path_buf(),
            lines: BufReader::new(f).lines(),
            line_no: 0,
        }
    };
    Ok(DocumentReader { inner })
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if !entry.file_name().to_string_lossy().starts_with('.') {
            out.push(p);
        }
    }
    Ok(())
}

impl DocumentReader {
    pub fn from_documents(docs: Vec<Document>) -> DocumentReader {
        DocumentReader {
            inner: Inner::Memory(docs.into_iter()),
        }
    }

    pub fn sentences(self, segmenter: Segmenter) -> SentenceStream {
        SentenceStream {
            docs: self,
            segmenter,
            pending: Vec::new().into_iter(),
        }
    }
}

impl Iterator for DocumentReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            Inner::Files { root, files } => {
                let p = files.next()?;
                let id = p
                    .strip_prefix(&*root)
                    .unwrap_or(&p)
                    .to_string_lossy()
                    .into_owned();
                Some(
                    std::fs::read_to_string(&p)
                        .map(|text| Document::new(id, &text))
                        .map_err(|e| Error::io(&p, e)),
                )
            }
            Inner::Lines { path, lines, line_no } => loop {
                let line = lines.next()?;
                *line_no += 1;
                match line {
                    Err(e) => return Some(Err(Error::io(&*path, e))),
                    Ok(l) if l.trim().is_empty() => continue,
                    Ok(l) => return Some(Ok(Document::new(format!("line{}", line_no), &l))),
                }
            },
            Inner::Memory(it) => it.next().map(Ok),
        }
    }
}

/// Flattens a document stream into sentences without holding more than one
/// document in memory.
pub struct SentenceStream {
    docs: DocumentReader,
    segmenter: Segmenter,
    pending: std::vec::IntoIter<Sentence>,
}

impl Iterator for SentenceStream {
    type Item = Result<Sentence>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(s) = self.pending.next() {
                return Some(Ok(s));
            }
            match self.docs.next()? {
                Err(e) => return Some(Err(e)),
                Ok(doc) => {
                    self.pending = self.segmenter.segment(&doc.id, &doc.text).into_iter();
                }
            }
        }
    }
}

/// Writes one sentence per line: `doc_id TAB index TAB tok1 TAB tok2 ...`.
pub fn write_token_stream<W: Write>(
    out: &mut W,
    sentences: impl IntoIterator<Item = Result<Sentence>>,
) -> Result<usize> {
    let mut n = 0;
    for s in sentences {
        let s = s?;
        let mut line = format!("{}\t{}", s.doc_id, s.index);
        for t in &s.tokens {
            line.push('\t');
            line.push_str(&t.text);
        }
        writeln!(out, "{}", line).map_err(|e| Error::io("<token stream>", e))?;
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_directory_in_sorted_order() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.txt"), "Second doc. Two sentences.").unwrap();
        std::fs::write(dir.path().join("a.txt"), "First doc.").unwrap();
        let ids: Vec<String> = read_documents(dir.path())
            .unwrap()
            .map(|d| d.unwrap().id)
            .collect();
        assert_eq!(ids, ["a.txt", "b.txt"]);
        let n = read_documents(dir.path())
            .unwrap()
            .sentences(Segmenter::default())
            .count();
        assert_eq!(n, 3);
    }

    #[test]
    fn reads_line_per_document() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("corpus.txt");
        std::fs::write(&p, "One doc here.\n\nAnother. With two.\n").unwrap();
        let docs: Vec<Document> = read_documents(&p).unwrap().map(|d| d.unwrap()).collect();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].id, "line3");
    }

    #[test]
    fn nfc_on_ingest() {
        let d = Document::new("x", "cafe\u{301}");
        assert_eq!(d.text, "caf\u{e9}");
    }

    #[test]
    fn token_stream_format() {
        let s = Sentence::from_words("d1", 4, &["the", "flu", "."]);
        let mut buf = Vec::new();
        write_token_stream(&mut buf, vec![Ok(s)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "d1\t4\tthe\tflu\t.\n");
    }
}
