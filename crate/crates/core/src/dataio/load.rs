use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    Dataset, FrameSequence, GrayFrame, GroundTruthEntry, LandmarkSet, Landmarks, Point,
    LANDMARK_COUNT,
};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// JSON manifest describing a dataset. Relative paths resolve against the
/// directory holding the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub ground_truth: PathBuf,
    pub videos: Vec<ManifestVideo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestVideo {
    pub video_id: String,
    pub subject_id: String,
    pub frames_dir: PathBuf,
    pub fps: f64,
    pub landmarks: PathBuf,
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::format("manifest", path, e))?;
    let mut ids = std::collections::HashSet::new();
    for v in &manifest.videos {
        if !ids.insert(v.video_id.as_str()) {
            return Err(Error::format(
                "manifest",
                path,
                format!("duplicate video id {}", v.video_id),
            ));
        }
    }
    Ok(manifest)
}

/// Loads every video listed in the manifest at `path` together with its
/// landmarks and the ground-truth table.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));

    let loaded: Vec<(FrameSequence, LandmarkSet)> = manifest
        .videos
        .par_iter()
        .map(|v| {
            let frames = read_frames(&base.join(&v.frames_dir))?;
            let seq = FrameSequence::new(&v.video_id, &v.subject_id, v.fps, frames)?;
            let landmarks = read_landmarks(&base.join(&v.landmarks), &v.video_id)?;
            Ok((seq, landmarks))
        })
        .collect::<Result<_>>()?;
    let (sequences, landmarks) = loaded.into_iter().unzip();
    let ground_truth = read_ground_truth(&base.join(&manifest.ground_truth))?;

    let dataset = Dataset {
        sequences,
        landmarks,
        ground_truth,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes `dataset` under `dir` as `manifest.json`, `ground_truth.csv`,
/// `landmarks/<video>.csv` and `frames/<video>/<index>.png`. Returns the
/// manifest path.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut videos = Vec::with_capacity(dataset.sequences.len());
    for seq in &dataset.sequences {
        let frames_dir = PathBuf::from("frames").join(&seq.video_id);
        let landmarks_path = PathBuf::from("landmarks").join(format!("{}.csv", seq.video_id));
        write_frames(seq, &dir.join(&frames_dir))?;
        let set = dataset
            .landmarks_for(&seq.video_id)
            .ok_or_else(|| Error::Validation(format!("video {} has no landmarks", seq.video_id)))?;
        write_landmarks(set, &dir.join(&landmarks_path))?;
        videos.push(ManifestVideo {
            video_id: seq.video_id.clone(),
            subject_id: seq.subject_id.clone(),
            frames_dir,
            fps: seq.fps,
            landmarks: landmarks_path,
        });
    }
    let gt_path = PathBuf::from("ground_truth.csv");
    write_ground_truth(&dataset.ground_truth, &dir.join(&gt_path))?;

    let manifest = DatasetManifest {
        ground_truth: gt_path,
        videos,
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "bmp" | "pgm" | "tif" | "tiff")
    )
}

/// Image files in `dir`, sorted by name; the frame order of a video.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| is_image(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no frame images"),
        ));
    }
    Ok(paths)
}

fn read_frames(dir: &Path) -> Result<Vec<GrayFrame>> {
    frame_paths(dir)?.iter().map(|p| read_frame(p)).collect()
}

/// Decodes one image to normalized grayscale. Color images use Rec. 601 luma.
pub fn read_frame(path: &Path) -> Result<GrayFrame> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_owned(),
            message: other.to_string(),
        },
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        image::DynamicImage::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| f32::from(v) / 255.0)
            .collect(),
        image::DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| f32::from(v) / 65535.0)
            .collect(),
        other => other
            .to_rgb32f()
            .pixels()
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect(),
    };
    GrayFrame::new(w, h, data)
}

/// Encodes a frame as an 8-bit grayscale PNG.
pub fn encode_png(frame: &GrayFrame) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        &frame.to_u8(),
        frame.width() as u32,
        frame.height() as u32,
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )
    .expect("in-memory PNG encoding cannot fail");
    out.into_inner()
}

fn write_frames(seq: &FrameSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    seq.frames
        .par_iter()
        .enumerate()
        .try_for_each(|(i, frame)| {
            let path = dir.join(format!("{i:06}.png"));
            fs::write(&path, encode_png(frame)).map_err(|e| Error::io(&path, e))
        })
}

fn landmark_header() -> Vec<String> {
    std::iter::once("frame".to_string())
        .chain((0..LANDMARK_COUNT).flat_map(|i| [format!("x{i}"), format!("y{i}")]))
        .collect()
}

pub fn read_landmarks(path: &Path, video_id: &str) -> Result<LandmarkSet> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, "landmark file", e))?;
    let mut frames = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, "landmark file", e))?;
        if record.len() != 1 + 2 * LANDMARK_COUNT {
            return Err(Error::format(
                "landmark file",
                path,
                format!(
                    "row {}: expected {} points, found {} coordinates",
                    row + 1,
                    LANDMARK_COUNT,
                    record.len().saturating_sub(1)
                ),
            ));
        }
        let frame: usize = record[0].trim().parse().map_err(|e| {
            Error::format(
                "landmark file",
                path,
                format!("row {}: frame: {e}", row + 1),
            )
        })?;
        let mut points: Landmarks = [Point::new(0.0, 0.0); LANDMARK_COUNT];
        for (i, p) in points.iter_mut().enumerate() {
            let parse = |col: usize| -> Result<f64> {
                record[col].trim().parse::<f64>().map_err(|e| {
                    Error::format(
                        "landmark file",
                        path,
                        format!("row {}: col {col}: {e}", row + 1),
                    )
                })
            };
            *p = Point::new(parse(1 + 2 * i)?, parse(2 + 2 * i)?);
        }
        frames.push((frame, points));
    }
    frames.sort_by_key(|(i, _)| *i);
    if frames.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::format(
            "landmark file",
            path,
            "duplicate frame index",
        ));
    }
    Ok(LandmarkSet {
        video_id: video_id.to_string(),
        frames,
    })
}

pub fn write_landmarks(set: &LandmarkSet, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| csv_error(path, "landmark file", e))?;
    writer
        .write_record(landmark_header())
        .map_err(|e| csv_error(path, "landmark file", e))?;
    for (frame, points) in &set.frames {
        let row = std::iter::once(frame.to_string()).chain(
            points
                .iter()
                .flat_map(|p| [p.x.to_string(), p.y.to_string()]),
        );
        writer
            .write_record(row)
            .map_err(|e| csv_error(path, "landmark file", e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct GroundTruthRow {
    subject: String,
    video: String,
    onset: usize,
    apex: usize,
    offset: usize,
    au: String,
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthEntry>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| csv_error(path, "ground truth", e))?;
    let mut entries = Vec::new();
    for row in reader.deserialize::<GroundTruthRow>() {
        let row = row.map_err(|e| csv_error(path, "ground truth", e))?;
        let entry = GroundTruthEntry {
            subject_id: row.subject,
            video_id: row.video,
            onset: row.onset,
            apex: row.apex,
            offset: row.offset,
            au_codes: row.au,
        };
        entry.validate()?;
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_ground_truth(entries: &[GroundTruthEntry], path: &Path) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| csv_error(path, "ground truth", e))?;
    if entries.is_empty() {
        writer
            .write_record(["subject", "video", "onset", "apex", "offset", "au"])
            .map_err(|e| csv_error(path, "ground truth", e))?;
    }
    for e in entries {
        writer
            .serialize(GroundTruthRow {
                subject: e.subject_id.clone(),
                video: e.video_id.clone(),
                onset: e.onset,
                apex: e.apex,
                offset: e.offset,
                au: e.au_codes.clone(),
            })
            .map_err(|err| csv_error(path, "ground truth", err))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, what: &'static str, err: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = err.kind() {
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(what, path, err)
    }
}
