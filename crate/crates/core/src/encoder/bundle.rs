//! Binary persistence for [`VideoFeatureBundle`]: an 8-byte magic, a
//! little-endian `u32` header length, a JSON shape header, then the rows of
//! F_vid as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::VideoFeatureBundle;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GVTGFEAT";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    rows: usize,
    cols: usize,
    segments: usize,
    spatial_tokens: usize,
    temporal_tokens: usize,
    frames_per_segment: usize,
}

pub fn write_bundle(path: &Path, bundle: &VideoFeatureBundle) -> Result<()> {
    let header = Header {
        rows: bundle.video.nrows(),
        cols: bundle.video.ncols(),
        segments: bundle.segments,
        spatial_tokens: bundle.spatial_tokens,
        temporal_tokens: bundle.temporal_tokens,
        frames_per_segment: bundle.frames_per_segment,
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(&header)?;
    for v in bundle.video.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_bundle(path: &Path) -> Result<VideoFeatureBundle> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Schema(format!("{} is not a feature bundle", path.display())));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body_start = 12 + header_len;
    if bytes.len() < body_start {
        return Err(Error::Schema("truncated bundle header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[12..body_start])?;
    let body = &bytes[body_start..];
    if body.len() != header.rows * header.cols * 8 {
        return Err(Error::Schema(format!(
            "bundle body has {} bytes, header declares {}x{}",
            body.len(),
            header.rows,
            header.cols
        )));
    }
    if header.segments * (header.spatial_tokens + header.frames_per_segment * header.temporal_tokens) != header.rows {
        return Err(Error::Schema("bundle row count disagrees with its segment layout".into()));
    }
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let video = Array2::from_shape_vec((header.rows, header.cols), values).map_err(|e| Error::Shape(e.to_string()))?;
    Ok(VideoFeatureBundle {
        video,
        segments: header.segments,
        spatial_tokens: header.spatial_tokens,
        temporal_tokens: header.temporal_tokens,
        frames_per_segment: header.frames_per_segment,
    })
}
