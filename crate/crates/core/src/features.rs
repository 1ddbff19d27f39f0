//! Soft-binned histograms of oriented optical flow (HOOF) per region, and the
//! per-window feature sequences built from them.
//!
//! Bin `b` is centred at angle `2πb/B`. A flow vector with angle `φ` and
//! magnitude `m` gives `m·(1 − t)` to the bin below `φ` and `m·t` to the bin
//! above, `t` being the fractional position between the two centres.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::GrayFrame;
use crate::error::{Error, Result};
use crate::optflow::{flow_pairs_for_window, FlowEstimator, FlowField};
use crate::preprocess::{Roi, RoiSet, WindowInterval};

pub const ROI_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoofParams {
    pub bins: usize,
    /// Vectors shorter than this are ignored.
    pub min_magnitude: f64,
}

impl Default for HoofParams {
    fn default() -> Self {
        HoofParams {
            bins: 8,
            min_magnitude: 0.0,
        }
    }
}

impl HoofParams {
    pub fn dims(&self) -> usize {
        ROI_COUNT * self.bins
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoofHistogram {
    pub bins: Vec<f64>,
}

impl HoofHistogram {
    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn argmax(&self) -> usize {
        self.bins
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0
    }
}

/// Unnormalized soft-binned mass; the bins sum to the total magnitude of
/// the counted vectors.
pub fn hoof_mass(vectors: &[(f64, f64)], bins: usize, min_magnitude: f64) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 bins, got {bins}"
        )));
    }
    let width = TAU / bins as f64;
    let mut hist = vec![0.0; bins];
    for &(u, v) in vectors {
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite flow vector ({u}, {v})"
            )));
        }
        let m = u.hypot(v);
        if m == 0.0 || m < min_magnitude {
            continue;
        }
        let phi = v.atan2(u).rem_euclid(TAU);
        let pos = phi / width;
        let lower = pos.floor();
        let frac = pos - lower;
        let b0 = (lower as usize) % bins;
        hist[b0] += m * (1.0 - frac);
        hist[(b0 + 1) % bins] += m * frac;
    }
    Ok(hist)
}

/// L1-normalized HOOF; all zeros when no vector carries any magnitude.
pub fn hoof(vectors: &[(f64, f64)], params: &HoofParams) -> Result<HoofHistogram> {
    let mut bins = hoof_mass(vectors, params.bins, params.min_magnitude)?;
    let total: f64 = bins.iter().sum();
    if total > 0.0 {
        bins.iter_mut().for_each(|b| *b /= total);
    }
    Ok(HoofHistogram { bins })
}

/// Flow vectors of the valid interior that fall inside `roi`.
pub fn pool_roi(flow: &FlowField, roi: &Roi, roi_index: usize) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for b in &roi.boxes {
        for y in b.y0..b.y1.min(flow.height) {
            for x in b.x0..b.x1.min(flow.width) {
                if flow.is_interior(x, y) {
                    out.push(flow.at(x, y));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::DegenerateRoi(roi_index));
    }
    Ok(out)
}

/// Features of one window: `steps` timesteps of `dims` values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HoofSequence {
    pub window: WindowInterval,
    pub steps: usize,
    pub dims: usize,
    pub data: Vec<f64>,
    pub label: Option<bool>,
}

impl HoofSequence {
    pub fn zeros(window: WindowInterval, steps: usize, dims: usize) -> Self {
        HoofSequence {
            window,
            steps,
            dims,
            data: vec![0.0; steps * dims],
            label: None,
        }
    }

    pub fn timestep(&self, k: usize) -> &[f64] {
        &self.data[k * self.dims..(k + 1) * self.dims]
    }
}

/// One timestep: the three region histograms concatenated.
pub fn timestep_features(flow: &FlowField, rois: &RoiSet, params: &HoofParams) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(params.dims());
    for (j, roi) in rois.regions.iter().enumerate() {
        out.extend(hoof(&pool_roi(flow, roi, j)?, params)?.bins);
    }
    Ok(out)
}

/// Assembles a sequence from the flow fields of a window's frame pairs, in
/// pair order.
pub fn sequence_from_flows(
    window: &WindowInterval,
    flows: &[&FlowField],
    rois: &RoiSet,
    params: &HoofParams,
) -> Result<HoofSequence> {
    let dims = params.dims();
    let mut data = Vec::with_capacity(flows.len() * dims);
    for flow in flows {
        data.extend(timestep_features(flow, rois, params)?);
    }
    Ok(HoofSequence {
        window: window.clone(),
        steps: flows.len(),
        dims,
        data,
        label: None,
    })
}

/// Computes every flow pair of an aligned window and builds its sequence.
/// `frames[0]` is the window's first frame.
pub fn build_sequence(
    frames: &[GrayFrame],
    window: &WindowInterval,
    rois: &RoiSet,
    estimator: &dyn FlowEstimator,
    gap: usize,
    params: &HoofParams,
) -> Result<HoofSequence> {
    if frames.len() != window.len() {
        return Err(Error::Consistency(format!(
            "window [{}, {}) given {} frames",
            window.start,
            window.end,
            frames.len()
        )));
    }
    let flows = flow_pairs_for_window(window, gap)
        .into_iter()
        .map(|(a, b)| estimator.estimate(&frames[a - window.start], &frames[b - window.start]))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&FlowField> = flows.iter().collect();
    sequence_from_flows(window, &refs, rois, params)
}

/// All window sequences of one video, as stored in a feature cache file.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    pub video_id: String,
    pub subject_id: String,
    pub fps: f64,
    pub steps: usize,
    pub dims: usize,
    pub params_hash: [u8; 8],
    pub sequences: Vec<HoofSequence>,
}

const FEATURE_MAGIC: &[u8; 8] = b"MSFEAT01";

impl VideoFeatures {
    /// Binary cache layout, all integers little-endian:
    ///
    /// ```text
    /// magic "MSFEAT01"
    /// u32 len, video id (UTF-8) | u32 len, subject id (UTF-8) | f64 fps
    /// u32 steps | u32 dims | u32 window count | 8-byte params hash
    /// per window: u32 index, u32 start, u32 end, steps×dims f32 row-major
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(FEATURE_MAGIC);
        for s in [&self.video_id, &self.subject_id] {
            buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
            buf.extend_from_slice(s.as_bytes());
        }
        buf.extend_from_slice(&self.fps.to_le_bytes());
        for n in [self.steps, self.dims, self.sequences.len()] {
            buf.extend_from_slice(&(n as u32).to_le_bytes());
        }
        buf.extend_from_slice(&self.params_hash);
        for seq in &self.sequences {
            for n in [seq.window.index, seq.window.start, seq.window.end] {
                buf.extend_from_slice(&(n as u32).to_le_bytes());
            }
            for &x in &seq.data {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format("feature cache", path, msg);
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8).ok_or_else(|| bad("truncated header"))? != FEATURE_MAGIC {
            return Err(bad("bad magic"));
        }
        let string = |cur: &mut Cursor| -> Result<String> {
            let n = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
            let raw = cur.take(n).ok_or_else(|| bad("truncated header"))?;
            String::from_utf8(raw.to_vec()).map_err(|_| bad("id is not UTF-8"))
        };
        let video_id = string(&mut cur)?;
        let subject_id = string(&mut cur)?;
        let fps = f64::from_le_bytes(
            cur.take(8)
                .ok_or_else(|| bad("truncated header"))?
                .try_into()
                .unwrap(),
        );
        let steps = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let dims = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let count = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let params_hash: [u8; 8] = cur
            .take(8)
            .ok_or_else(|| bad("truncated header"))?
            .try_into()
            .unwrap();
        let mut sequences = Vec::with_capacity(count);
        for _ in 0..count {
            let mut next = || {
                cur.u32()
                    .map(|v| v as usize)
                    .ok_or_else(|| bad("truncated window"))
            };
            let (index, start, end) = (next()?, next()?, next()?);
            let raw = cur
                .take(4 * steps * dims)
                .ok_or_else(|| bad("truncated window"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            sequences.push(HoofSequence {
                window: WindowInterval {
                    video_id: video_id.clone(),
                    index,
                    start,
                    end,
                },
                steps,
                dims,
                data,
                label: None,
            });
        }
        if cur.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(VideoFeatures {
            video_id,
            subject_id,
            fps,
            steps,
            dims,
            params_hash,
            sequences,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        VideoFeatures::from_bytes(&buf, path)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}
