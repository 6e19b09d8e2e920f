//! Temporal event sets and their JSON Lines serialization.
//!
//! One line per event: `{"video": "...", "frame": 17, "class": "serve",
//! "score": 0.93}` with `score` optional (ground truth omits it). Class
//! names resolve against a vocabulary sidecar — a plain JSON array of
//! foreground names. Label 0 is reserved for background everywhere, so the
//! vocabulary entry at position `i` is label `i + 1`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Foreground class names; position `i` ↔ label `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocab {
    names: Vec<String>,
}

impl ClassVocab {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidParam {
                name: "vocabulary",
                msg: "needs at least one foreground class".into(),
            });
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidParam {
                    name: "vocabulary",
                    msg: format!("duplicate class name {n:?}"),
                });
            }
        }
        Ok(Self { names })
    }

    /// Foreground class count C.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one entry
    }

    /// 1-based label for a name, if known.
    pub fn label(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name).map(|i| i + 1)
    }

    /// Name for a 1-based foreground label.
    pub fn name(&self, label: usize) -> Option<&str> {
        label
            .checked_sub(1)
            .and_then(|i| self.names.get(i))
            .map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn read<P: AsRef<Path>>(path: P) -> Result<Self> {
        let names: Vec<String> =
            serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(|e| {
                Error::EventSyntax {
                    line: 0,
                    msg: format!("vocabulary: {e}"),
                }
            })?;
        Self::new(names)
    }

    pub fn write<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &self.names).map_err(|e| Error::EventSyntax {
            line: 0,
            msg: e.to_string(),
        })?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// A single spotted or annotated event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub frame: usize,
    /// 1-based foreground label (0 is background and never appears here).
    pub class: usize,
    /// Confidence in [0, 1]; ground truth carries `None`.
    pub score: Option<f64>,
}

/// All events of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSet {
    pub video: String,
    /// Foreground class count the labels index into.
    pub classes: usize,
    pub events: Vec<Event>,
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    video: String,
    frame: i64,
    class: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

/// Reads JSON Lines events, resolving class names through `vocab`.
///
/// Videos are grouped in order of first appearance; events keep file order
/// within each video. Rejected with the offending line number: syntax
/// errors, negative frames, unknown class names, scores outside [0, 1].
pub fn read_events<P: AsRef<Path>>(path: P, vocab: &ClassVocab) -> Result<Vec<EventSet>> {
    let r = BufReader::new(File::open(path)?);
    let mut sets: Vec<EventSet> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let rec: EventLine = serde_json::from_str(&line).map_err(|e| Error::EventSyntax {
            line: lineno,
            msg: e.to_string(),
        })?;
        if rec.frame < 0 {
            return Err(Error::NegativeFrame {
                line: lineno,
                frame: rec.frame,
            });
        }
        let class = vocab.label(&rec.class).ok_or_else(|| Error::UnknownClass {
            line: lineno,
            class: rec.class.clone(),
        })?;
        if let Some(s) = rec.score {
            if !(0.0..=1.0).contains(&s) || !s.is_finite() {
                return Err(Error::ScoreOutOfRange {
                    line: lineno,
                    score: s,
                });
            }
        }
        let event = Event {
            frame: rec.frame as usize,
            class,
            score: rec.score,
        };
        match sets.iter_mut().find(|s| s.video == rec.video) {
            Some(set) => set.events.push(event),
            None => sets.push(EventSet {
                video: rec.video,
                classes: vocab.len(),
                events: vec![event],
            }),
        }
    }
    Ok(sets)
}

/// Inverse of [`read_events`]; labels are written back as vocabulary names.
pub fn write_events<P: AsRef<Path>>(
    path: P,
    sets: &[EventSet],
    vocab: &ClassVocab,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for set in sets {
        for ev in &set.events {
            let name = vocab.name(ev.class).ok_or(Error::LabelOutOfRange {
                frame: ev.frame,
                label: ev.class,
                classes: vocab.len(),
            })?;
            let line = EventLine {
                video: set.video.clone(),
                frame: ev.frame as i64,
                class: name.to_string(),
                score: ev.score,
            };
            serde_json::to_writer(&mut w, &line).map_err(|e| Error::EventSyntax {
                line: 0,
                msg: e.to_string(),
            })?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> ClassVocab {
        ClassVocab::new(vec!["serve".into(), "swing".into()]).unwrap()
    }

    #[test]
    fn labels_are_one_based() {
        let v = vocab();
        assert_eq!(v.label("serve"), Some(1));
        assert_eq!(v.label("swing"), Some(2));
        assert_eq!(v.label("dunk"), None);
        assert_eq!(v.name(2), Some("swing"));
        assert_eq!(v.name(0), None); // background has no name
    }

    #[test]
    fn vocabulary_rejects_duplicates_and_empty() {
        assert!(ClassVocab::new(vec!["a".into(), "a".into()]).is_err());
        assert!(ClassVocab::new(vec![]).is_err());
    }

    #[test]
    fn round_trip_groups_by_video_in_first_appearance_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"video\":\"b\",\"frame\":4,\"class\":\"swing\",\"score\":0.5}\n",
                "{\"video\":\"a\",\"frame\":1,\"class\":\"serve\"}\n",
                "{\"video\":\"b\",\"frame\":9,\"class\":\"serve\",\"score\":1.0}\n",
            ),
        )
        .unwrap();
        let sets = read_events(&path, &vocab()).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].video, "b");
        assert_eq!(sets[0].events.len(), 2);
        assert_eq!(sets[0].events[1].frame, 9);
        assert_eq!(sets[1].video, "a");
        assert_eq!(sets[1].events[0].score, None);

        let out = dir.path().join("out.jsonl");
        write_events(&out, &sets, &vocab()).unwrap();
        assert_eq!(read_events(&out, &vocab()).unwrap(), sets);
    }

    #[test]
    fn negative_frame_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.jsonl");
        std::fs::write(
            &path,
            "{\"video\":\"v\",\"frame\":0,\"class\":\"serve\"}\n{\"video\":\"v\",\"frame\":-1,\"class\":\"serve\"}\n",
        )
        .unwrap();
        let err = read_events(&path, &vocab()).unwrap_err();
        assert!(matches!(err, Error::NegativeFrame { line: 2, frame: -1 }));
    }

    #[test]
    fn unknown_class_and_bad_score_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.jsonl");
        std::fs::write(&path, "{\"video\":\"v\",\"frame\":0,\"class\":\"dunk\"}\n").unwrap();
        assert!(matches!(
            read_events(&path, &vocab()).unwrap_err(),
            Error::UnknownClass { line: 1, .. }
        ));
        std::fs::write(
            &path,
            "{\"video\":\"v\",\"frame\":0,\"class\":\"serve\",\"score\":1.5}\n",
        )
        .unwrap();
        assert!(matches!(
            read_events(&path, &vocab()).unwrap_err(),
            Error::ScoreOutOfRange { line: 1, .. }
        ));
    }
}
