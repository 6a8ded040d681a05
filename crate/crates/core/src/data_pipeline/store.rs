//! On-disk clip corpus: `clips/<clip_id>.raw` plus a tab-separated
//! `index.tsv` of `clip_id, source_id, caption`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{invalid, io_err, Error, Result};
use crate::video_generator::VideoClip;

pub const INDEX_FILE: &str = "index.tsv";
pub const CLIP_DIR: &str = "clips";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub clip_id: String,
    pub source_id: String,
    pub caption: String,
}

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub clip: VideoClip,
    pub source_id: String,
    pub caption: String,
}

impl CorpusEntry {
    pub fn clip_id(&self) -> &str {
        &self.clip.caption_id
    }
}

fn check_field(what: &str, v: &str) -> Result<()> {
    if v.contains(['\t', '\n', '\r']) {
        return Err(invalid(format!("{what} {v:?} contains a tab or newline")));
    }
    Ok(())
}

fn check_id(id: &str) -> Result<()> {
    check_field("clip id", id)?;
    if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
        return Err(invalid(format!("clip id {id:?} is not a plain file name")));
    }
    Ok(())
}

pub fn clip_path(dir: &Path, clip_id: &str) -> PathBuf {
    dir.join(CLIP_DIR).join(format!("{clip_id}.raw"))
}

pub fn write_index<W: Write>(mut w: W, entries: &[IndexEntry]) -> std::io::Result<()> {
    for e in entries {
        writeln!(w, "{}\t{}\t{}", e.clip_id, e.source_id, e.caption)?;
    }
    w.flush()
}

pub fn read_index<R: BufRead>(r: R, path: &Path) -> Result<Vec<IndexEntry>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(io_err(format!("reading {}", path.display())))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [clip_id, source_id, caption] = fields[..] else {
            return Err(Error::Format {
                what: "clip index",
                path: path.to_path_buf(),
                reason: format!("line {}: expected 3 tab-separated fields, found {}", i + 1, fields.len()),
            });
        };
        out.push(IndexEntry {
            clip_id: clip_id.into(),
            source_id: source_id.into(),
            caption: caption.into(),
        });
    }
    Ok(out)
}

/// Writes every clip and the index. Clip ids must be unique file names.
pub fn save_corpus(dir: &Path, entries: &[CorpusEntry]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for e in entries {
        check_id(e.clip_id())?;
        check_field("source id", &e.source_id)?;
        check_field("caption", &e.caption)?;
        if !seen.insert(e.clip_id()) {
            return Err(invalid(format!("duplicate clip id {:?}", e.clip_id())));
        }
    }
    let clips = dir.join(CLIP_DIR);
    fs::create_dir_all(&clips).map_err(io_err(format!("creating {}", clips.display())))?;
    for e in entries {
        e.clip.save_raw(&clip_path(dir, e.clip_id()))?;
    }
    let index: Vec<IndexEntry> = entries
        .iter()
        .map(|e| IndexEntry {
            clip_id: e.clip_id().into(),
            source_id: e.source_id.clone(),
            caption: e.caption.clone(),
        })
        .collect();
    let path = dir.join(INDEX_FILE);
    let f = fs::File::create(&path).map_err(io_err(format!("creating {}", path.display())))?;
    write_index(BufWriter::new(f), &index).map_err(io_err(format!("writing {}", path.display())))
}

pub fn load_index(dir: &Path) -> Result<Vec<IndexEntry>> {
    let path = dir.join(INDEX_FILE);
    let f = fs::File::open(&path).map_err(io_err(format!("opening {}", path.display())))?;
    read_index(BufReader::new(f), &path)
}

/// Loads the index and every referenced clip, in index order.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusEntry>> {
    load_index(dir)?
        .into_iter()
        .map(|e| {
            check_id(&e.clip_id)?;
            let mut clip = VideoClip::load_raw(&clip_path(dir, &e.clip_id))?;
            clip.caption_id = e.clip_id;
            Ok(CorpusEntry {
                clip,
                source_id: e.source_id,
                caption: e.caption,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use t2v_autograd::Tensor;

    fn clip(id: &str, v: f32) -> VideoClip {
        VideoClip::new(Tensor::from_vec(&[2, 3, 4, 4], vec![v; 96]), id).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            CorpusEntry {
                clip: clip("a_0", 0.5),
                source_id: "s1".into(),
                caption: "a shape moving up on a red background".into(),
            },
            CorpusEntry {
                clip: clip("b_1", -0.25),
                source_id: "s2".into(),
                caption: "x".into(),
            },
        ];
        save_corpus(dir.path(), &entries).unwrap();
        let back = load_corpus(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in entries.iter().zip(&back) {
            assert_eq!(a.clip.frames.data(), b.clip.frames.data());
            assert_eq!((a.clip_id(), &a.source_id, &a.caption), (b.clip_id(), &b.source_id, &b.caption));
        }
    }

    #[test]
    fn rejects_bad_fields() {
        let dir = tempfile::tempdir().unwrap();
        let bad = CorpusEntry {
            clip: clip("../x", 0.0),
            source_id: "s".into(),
            caption: "c".into(),
        };
        assert!(save_corpus(dir.path(), &[bad]).is_err());
        let tab = CorpusEntry {
            clip: clip("x", 0.0),
            source_id: "s".into(),
            caption: "a\tb".into(),
        };
        assert!(save_corpus(dir.path(), &[tab]).is_err());
        assert!(read_index("a\tb\n".as_bytes(), Path::new("i")).is_err());
    }
}
