//! On-disk dataset directories.
//!
//! ```text
//! manifest.json
//! pieces/<id>/page.pgm     full-resolution page
//! pieces/<id>/meta.json    staves, dpi, downscale, optional synth notes
//! pieces/<id>/align.json   {"events": [{onset, x, y, staff}, ...]}
//! pieces/<id>/audio.wav    or feats.f32 + feats.json
//! ```
//!
//! Coordinates are full-resolution pixels.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use pgtk_core::data::{
    validate_piece, AlignmentTrack, GenConfig, Piece, PieceAudio, ScorePage, Staff, SynthNote,
    Violation,
};
use pgtk_core::dsp::Spectrogram;
use serde::{Deserialize, Serialize};

use crate::pgm::{read_pgm, write_pgm};
use crate::wav::{read_wav, write_wav};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Generator seed, for synthetic pieces.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    #[serde(default)]
    pub root_seed: Option<u64>,
    #[serde(default)]
    pub generator: Option<GenConfig>,
    pub pieces: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn for_pieces(pieces: &[Piece]) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            root_seed: None,
            generator: None,
            pieces: pieces
                .iter()
                .map(|p| ManifestEntry {
                    id: p.id.clone(),
                    seed: None,
                    ambiguous: p.is_ambiguous(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PieceMeta {
    width: usize,
    height: usize,
    dpi: u32,
    downscale: usize,
    staves: Vec<Staff>,
    #[serde(default)]
    synth: Option<Vec<SynthNote>>,
    #[serde(default)]
    duplicated_bars: Option<[(usize, usize); 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatMeta {
    fps: f64,
    standardized: bool,
    n_bins: usize,
    frames: usize,
}

/// One problem found while loading.
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    File {
        piece: String,
        file: PathBuf,
        detail: String,
    },
    Invariant(Violation),
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::File {
                piece,
                file,
                detail,
            } => write!(f, "{piece}: {}: {detail}", file.display()),
            Issue::Invariant(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}", format_issues(.0))]
    Invalid(Vec<Issue>),
}

fn format_issues(issues: &[Issue]) -> String {
    let mut s = format!("{} problem(s) in dataset:", issues.len());
    for i in issues {
        s.push_str("\n  ");
        s.push_str(&i.to_string());
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub pieces: Vec<Piece>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), DatasetError> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

pub fn piece_dir(root: &Path, id: &str) -> PathBuf {
    root.join("pieces").join(id)
}

pub fn save_piece(dir: &Path, p: &Piece) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let page = dir.join("page.pgm");
    write_pgm(&page, &p.page.image).map_err(|e| {
        DatasetError::Invalid(vec![Issue::File {
            piece: p.id.clone(),
            file: page.clone(),
            detail: e.to_string(),
        }])
    })?;
    let meta = PieceMeta {
        width: p.page.image.width,
        height: p.page.image.height,
        dpi: p.page.dpi,
        downscale: p.page.downscale,
        staves: p.page.staves.clone(),
        synth: p.synth.clone(),
        duplicated_bars: p.duplicated_bars,
    };
    write_json(&dir.join("meta.json"), &meta)?;
    write_json(&dir.join("align.json"), &p.track)?;
    match &p.audio {
        PieceAudio::Wave(a) => {
            let path = dir.join("audio.wav");
            write_wav(&path, a).map_err(|e| {
                DatasetError::Invalid(vec![Issue::File {
                    piece: p.id.clone(),
                    file: path.clone(),
                    detail: e.to_string(),
                }])
            })?;
        }
        PieceAudio::Features(s) => {
            let meta = FeatMeta {
                fps: s.fps,
                standardized: s.standardized,
                n_bins: s.n_bins,
                frames: s.len(),
            };
            write_json(&dir.join("feats.json"), &meta)?;
            let bytes: Vec<u8> = s.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            let path = dir.join("feats.f32");
            fs::write(&path, bytes).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

/// Writes `pieces` below `root` (created if missing).
pub fn save_dataset(
    root: &Path,
    pieces: &[Piece],
    manifest: &Manifest,
) -> Result<(), DatasetError> {
    fs::create_dir_all(root.join("pieces")).map_err(io_err(root))?;
    for p in pieces {
        save_piece(&piece_dir(root, &p.id), p)?;
    }
    write_json(&root.join(MANIFEST), manifest)
}

fn read_json<T: for<'de> Deserialize<'de>>(
    path: &Path,
    id: &str,
    issues: &mut Vec<Issue>,
) -> Option<T> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            issues.push(Issue::File {
                piece: id.into(),
                file: path.into(),
                detail: e.to_string(),
            });
            return None;
        }
    };
    match serde_json::from_str(&text) {
        Ok(v) => Some(v),
        Err(e) => {
            issues.push(Issue::File {
                piece: id.into(),
                file: path.into(),
                detail: e.to_string(),
            });
            None
        }
    }
}

/// Loads and validates one piece directory; the id is the directory name.
pub fn load_piece(dir: &Path) -> Result<Piece, DatasetError> {
    let mut issues = Vec::new();
    match load_piece_into(dir, &mut issues) {
        Some(p) if issues.is_empty() => Ok(p),
        _ => Err(DatasetError::Invalid(issues)),
    }
}

fn load_piece_into(dir: &Path, issues: &mut Vec<Issue>) -> Option<Piece> {
    let id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut file_issue = |file: PathBuf, detail: String| {
        issues.push(Issue::File {
            piece: id.clone(),
            file,
            detail,
        })
    };
    let page_path = dir.join("page.pgm");
    let image = match read_pgm(&page_path) {
        Ok(i) => Some(i),
        Err(e) => {
            file_issue(page_path, e.to_string());
            None
        }
    };
    let wav = dir.join("audio.wav");
    let feats = dir.join("feats.f32");
    let audio = if wav.exists() {
        match read_wav(&wav) {
            Ok(a) => Some(PieceAudio::Wave(a)),
            Err(e) => {
                file_issue(wav, e.to_string());
                None
            }
        }
    } else if feats.exists() {
        load_features(dir, &id, issues).map(PieceAudio::Features)
    } else {
        file_issue(
            dir.to_path_buf(),
            "neither audio.wav nor feats.f32 present".into(),
        );
        None
    };
    let meta: Option<PieceMeta> = read_json(&dir.join("meta.json"), &id, issues);
    let track: Option<AlignmentTrack> = read_json(&dir.join("align.json"), &id, issues);
    let (image, audio, meta, track) = (image?, audio?, meta?, track?);
    if (image.width, image.height) != (meta.width, meta.height) {
        issues.push(Issue::File {
            piece: id.clone(),
            file: dir.join("meta.json"),
            detail: format!(
                "page is {}x{}, metadata says {}x{}",
                image.width, image.height, meta.width, meta.height
            ),
        });
    }
    let piece = Piece {
        id,
        page: ScorePage {
            image,
            staves: meta.staves,
            dpi: meta.dpi,
            downscale: meta.downscale,
        },
        track,
        audio,
        synth: meta.synth,
        duplicated_bars: meta.duplicated_bars,
    };
    issues.extend(validate_piece(&piece).into_iter().map(Issue::Invariant));
    Some(piece)
}

fn load_features(dir: &Path, id: &str, issues: &mut Vec<Issue>) -> Option<Spectrogram> {
    let meta: FeatMeta = read_json(&dir.join("feats.json"), id, issues)?;
    let path = dir.join("feats.f32");
    let bad = |detail: String| Issue::File {
        piece: id.into(),
        file: path.clone(),
        detail,
    };
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) => {
            issues.push(bad(e.to_string()));
            return None;
        }
    };
    if bytes.len() != meta.frames * meta.n_bins * 4 {
        issues.push(bad(format!(
            "{} bytes, expected {} frames of {} bins",
            bytes.len(),
            meta.frames,
            meta.n_bins
        )));
        return None;
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    match Spectrogram::new(data, meta.n_bins, meta.fps, meta.standardized) {
        Ok(s) => Some(s),
        Err(e) => {
            issues.push(bad(e.0));
            None
        }
    }
}

/// Loads every piece listed in the manifest; all problems are collected
/// before failing.
pub fn load_dataset(root: &Path) -> Result<Dataset, DatasetError> {
    let manifest_path = root.join(MANIFEST);
    let mut issues = Vec::new();
    let Some(manifest) = read_json::<Manifest>(&manifest_path, "<dataset>", &mut issues) else {
        return Err(DatasetError::Invalid(issues));
    };
    if manifest.format_version != FORMAT_VERSION {
        issues.push(Issue::File {
            piece: "<dataset>".into(),
            file: manifest_path,
            detail: format!(
                "format version {}, expected {FORMAT_VERSION}",
                manifest.format_version
            ),
        });
        return Err(DatasetError::Invalid(issues));
    }
    let mut pieces = Vec::with_capacity(manifest.pieces.len());
    for entry in &manifest.pieces {
        if let Some(p) = load_piece_into(&piece_dir(root, &entry.id), &mut issues) {
            pieces.push(p);
        }
    }
    if issues.is_empty() {
        Ok(Dataset { manifest, pieces })
    } else {
        Err(DatasetError::Invalid(issues))
    }
}
