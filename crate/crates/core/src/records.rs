//! Line-delimited text records for pose sequences.
//!
//! Sequence record (`.phs`), UTF-8, `\n` line endings:
//!
//! ```text
//! POSEHAR-SEQ 1
//! action=<label>
//! viewpoint=<front|front-left|front-right|left|right|rear|rear-left|rear-right>
//! actor=<id>
//! dataset=<id>
//! frames=<T>
//! <x1> <y1> <p1> <x2> <y2> <p2> ... <x14> <y14> <p14>      (T lines)
//! ```
//!
//! Each frame line holds 42 tokens separated by single spaces. `p` is `1`
//! for a present landmark and `0` for an absent one; absent landmarks are
//! written as `0 0 0`. Reals use Rust's shortest round-trip decimal form, so
//! reading back a written record reproduces every coordinate bit-for-bit.
//!
//! A normalized record (`.phn`) uses the magic `POSEHAR-NORM 1` and adds a
//! `persistent_missing=<comma separated landmark indices>` line (possibly
//! empty) after `dataset=`. Poses are root-centered and scaled; temporal
//! derivatives are not stored and are recomputed on load.
//!
//! A series record (`.phe`) holds classifier input channels, channel-major:
//!
//! ```text
//! POSEHAR-SERIES 1
//! action=... viewpoint=... actor=... dataset=...   (one per line, as above)
//! channels=<C>
//! length=<T>
//! <name> <v1> ... <vT>                               (C lines)
//! ```
//!
//! Channel names never contain spaces (`pose/3/x`, `spatial/wave/J_a`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::embed::EmbeddingChannels;
use crate::error::{Error, Result};
use crate::pose::{LandmarkId, Pose, Sample, Viewpoint, NUM_LANDMARKS};
use crate::preprocess::NormalizedSequence;

pub const SEQ_MAGIC: &str = "POSEHAR-SEQ 1";
pub const NORM_MAGIC: &str = "POSEHAR-NORM 1";
pub const SERIES_MAGIC: &str = "POSEHAR-SERIES 1";

/// A normalized sequence together with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub seq: NormalizedSequence,
    pub action: String,
    pub viewpoint: Viewpoint,
    pub actor: String,
    pub dataset: String,
}

fn write_frame(out: &mut String, pose: &Pose) {
    for slot in 0..NUM_LANDMARKS {
        let id = LandmarkId::from_slot(slot);
        if slot > 0 {
            out.push(' ');
        }
        match pose.get(id) {
            Some([x, y]) => write!(out, "{x} {y} 1").unwrap(),
            None => out.push_str("0 0 0"),
        }
    }
    out.push('\n');
}

fn write_header(out: &mut String, magic: &str, action: &str, vp: Viewpoint, actor: &str, dataset: &str) {
    for (key, value) in [("action", action), ("actor", actor), ("dataset", dataset)] {
        assert!(!value.contains('\n'), "{key} label must not contain a newline");
    }
    writeln!(out, "{magic}").unwrap();
    writeln!(out, "action={action}").unwrap();
    writeln!(out, "viewpoint={vp}").unwrap();
    writeln!(out, "actor={actor}").unwrap();
    writeln!(out, "dataset={dataset}").unwrap();
}

pub fn sample_to_string(sample: &Sample) -> String {
    let mut out = String::new();
    write_header(
        &mut out,
        SEQ_MAGIC,
        &sample.action,
        sample.viewpoint,
        &sample.actor,
        &sample.dataset,
    );
    writeln!(out, "frames={}", sample.poses.len()).unwrap();
    for pose in &sample.poses {
        write_frame(&mut out, pose);
    }
    out
}

pub fn labeled_to_string(rec: &LabeledSequence) -> String {
    let mut out = String::new();
    write_header(
        &mut out,
        NORM_MAGIC,
        &rec.action,
        rec.viewpoint,
        &rec.actor,
        &rec.dataset,
    );
    let missing: Vec<String> = rec.seq.persistent_missing.iter().map(|id| id.to_string()).collect();
    writeln!(out, "persistent_missing={}", missing.join(",")).unwrap();
    writeln!(out, "frames={}", rec.seq.poses.len()).unwrap();
    for pose in &rec.seq.poses {
        write_frame(&mut out, pose);
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::parse(self.path, "end of file", format!("expected {what}")))
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let (n, line) = self.next_line(key)?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| Error::parse(self.path, format!("line {n}"), format!("expected `{key}=`")))
    }
}

fn parse_frame(path: &Path, line_no: usize, frame: usize, line: &str) -> Result<Pose> {
    let loc = || format!("line {line_no} (frame {frame})");
    let tokens: Vec<&str> = line.split(' ').collect();
    if tokens.len() != 3 * NUM_LANDMARKS {
        return Err(Error::parse(
            path,
            loc(),
            format!("expected 42 fields, found {}", tokens.len()),
        ));
    }
    let mut pose = Pose::empty();
    for (slot, t) in tokens.chunks(3).enumerate() {
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::parse(path, loc(), format!("bad number `{s}`: {e}")))
        };
        let (x, y) = (num(t[0])?, num(t[1])?);
        match t[2] {
            "1" => pose.set(LandmarkId::from_slot(slot), [x, y]),
            "0" => {}
            other => {
                return Err(Error::parse(path, loc(), format!("bad presence flag `{other}`")));
            }
        }
    }
    Ok(pose)
}

struct Header {
    action: String,
    viewpoint: Viewpoint,
    actor: String,
    dataset: String,
}

fn read_header(r: &mut Reader<'_>, magic: &str) -> Result<Header> {
    let (_, first) = r.next_line("magic header")?;
    if first != magic {
        return Err(Error::parse(
            r.path,
            "line 1",
            format!("expected magic `{magic}`, found `{first}`"),
        ));
    }
    let action = r.field("action")?.to_string();
    let viewpoint = r.field("viewpoint")?.parse()?;
    let actor = r.field("actor")?.to_string();
    let dataset = r.field("dataset")?.to_string();
    Ok(Header {
        action,
        viewpoint,
        actor,
        dataset,
    })
}

fn read_frames(r: &mut Reader<'_>) -> Result<Vec<Pose>> {
    let count_str = r.field("frames")?;
    let count: usize = count_str
        .parse()
        .map_err(|_| Error::parse(r.path, "frames", format!("bad frame count `{count_str}`")))?;
    let mut poses = Vec::with_capacity(count);
    for frame in 0..count {
        let (n, line) = r.next_line("frame")?;
        poses.push(parse_frame(r.path, n, frame, line)?);
    }
    Ok(poses)
}

pub fn sample_from_str(path: &Path, text: &str) -> Result<Sample> {
    let mut r = Reader {
        path,
        lines: text.lines().enumerate(),
    };
    let h = read_header(&mut r, SEQ_MAGIC)?;
    let poses = read_frames(&mut r)?;
    Ok(Sample {
        poses,
        action: h.action,
        viewpoint: h.viewpoint,
        actor: h.actor,
        dataset: h.dataset,
    })
}

pub fn labeled_from_str(path: &Path, text: &str) -> Result<LabeledSequence> {
    let mut r = Reader {
        path,
        lines: text.lines().enumerate(),
    };
    let h = read_header(&mut r, NORM_MAGIC)?;
    let missing_str = r.field("persistent_missing")?;
    let mut persistent_missing = std::collections::BTreeSet::new();
    for tok in missing_str.split(',').filter(|t| !t.is_empty()) {
        let id = tok
            .parse::<u8>()
            .ok()
            .and_then(LandmarkId::new)
            .ok_or_else(|| Error::parse(path, "persistent_missing", format!("bad landmark `{tok}`")))?;
        persistent_missing.insert(id);
    }
    let poses = read_frames(&mut r)?;
    Ok(LabeledSequence {
        seq: NormalizedSequence::from_poses(poses, persistent_missing),
        action: h.action,
        viewpoint: h.viewpoint,
        actor: h.actor,
        dataset: h.dataset,
    })
}

pub fn read_sample(path: &Path) -> Result<Sample> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    sample_from_str(path, &text)
}

pub fn write_sample(path: &Path, sample: &Sample) -> Result<()> {
    fs::write(path, sample_to_string(sample)).map_err(|e| Error::io(path, e))
}

pub fn read_labeled(path: &Path) -> Result<LabeledSequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    labeled_from_str(path, &text)
}

pub fn write_labeled(path: &Path, rec: &LabeledSequence) -> Result<()> {
    fs::write(path, labeled_to_string(rec)).map_err(|e| Error::io(path, e))
}

/// Classifier input channels with the labels of the clip they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub channels: EmbeddingChannels,
    pub action: String,
    pub viewpoint: Viewpoint,
    pub actor: String,
    pub dataset: String,
}

pub fn series_to_string(rec: &LabeledSeries) -> String {
    let mut out = String::new();
    write_header(
        &mut out,
        SERIES_MAGIC,
        &rec.action,
        rec.viewpoint,
        &rec.actor,
        &rec.dataset,
    );
    let ch = &rec.channels;
    writeln!(out, "channels={}", ch.channels()).unwrap();
    writeln!(out, "length={}", ch.len).unwrap();
    for (name, row) in ch.names.iter().zip(&ch.data) {
        assert!(
            !name.contains(char::is_whitespace),
            "channel name `{name}` has whitespace"
        );
        out.push_str(name);
        for v in row {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn count_field(r: &mut Reader<'_>, key: &str) -> Result<usize> {
    let s = r.field(key)?;
    s.parse()
        .map_err(|_| Error::parse(r.path, key.to_string(), format!("bad count `{s}`")))
}

pub fn series_from_str(path: &Path, text: &str) -> Result<LabeledSeries> {
    let mut r = Reader {
        path,
        lines: text.lines().enumerate(),
    };
    let h = read_header(&mut r, SERIES_MAGIC)?;
    let channels = count_field(&mut r, "channels")?;
    let len = count_field(&mut r, "length")?;
    let mut names = Vec::with_capacity(channels);
    let mut data = Vec::with_capacity(channels);
    for _ in 0..channels {
        let (n, line) = r.next_line("channel")?;
        let mut tokens = line.split(' ');
        let name = tokens.next().unwrap_or_default().to_string();
        let row = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::parse(path, format!("line {n}"), format!("bad number `{t}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != len {
            return Err(Error::parse(
                path,
                format!("line {n}"),
                format!("channel `{name}` has {} values, expected {len}", row.len()),
            ));
        }
        names.push(name);
        data.push(row);
    }
    Ok(LabeledSeries {
        channels: EmbeddingChannels { names, data, len },
        action: h.action,
        viewpoint: h.viewpoint,
        actor: h.actor,
        dataset: h.dataset,
    })
}

pub fn read_series(path: &Path) -> Result<LabeledSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    series_from_str(path, &text)
}

pub fn write_series(path: &Path, rec: &LabeledSeries) -> Result<()> {
    fs::write(path, series_to_string(rec)).map_err(|e| Error::io(path, e))
}
