//! Line-delimited dataset files and the binary image sidecar format.
//!
//! Sidecar layout (little endian): `"MMIM"`, `u8` rank, three reserved zero
//! bytes, `rank × u32` extents, then `f32` values. 2D images store
//! `H, W, C`; volumes store `N, H, W`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sample::{Image2D, ImagePayload, Modality, MultimodalSample, Task, Volume3D};
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: &[u8; 4] = b"MMIM";

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    image: Option<String>,
    modality: String,
    prompt: String,
    response: String,
    task: String,
}

pub fn encode_image(img: &ImagePayload) -> Vec<u8> {
    let extents: [usize; 3] = match img {
        ImagePayload::Image(i) => [i.height, i.width, i.channels],
        ImagePayload::Volume(v) => [v.slices, v.height, v.width],
    };
    let values = img.values();
    let mut out = Vec::with_capacity(8 + 12 + 4 * values.len());
    out.extend_from_slice(IMAGE_MAGIC);
    out.push(3);
    out.extend_from_slice(&[0, 0, 0]);
    for e in extents {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_image(bytes: &[u8], modality: Modality) -> Result<ImagePayload> {
    let bad = |msg: &str| Error::validation(format!("image sidecar: {msg}"));
    if bytes.len() < 8 || &bytes[..4] != IMAGE_MAGIC {
        return Err(bad("bad magic"));
    }
    let rank = bytes[4] as usize;
    if rank != 3 {
        return Err(bad(&format!("expected rank 3, found {rank}")));
    }
    let header = 8 + 4 * rank;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let ext: Vec<usize> = bytes[8..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: usize = ext.iter().product();
    if bytes.len() != header + 4 * count {
        return Err(bad(&format!("payload holds {} bytes, extents {ext:?} need {}", bytes.len() - header, 4 * count)));
    }
    let data: Vec<f32> = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    match modality {
        Modality::TwoD => Ok(ImagePayload::Image(Image2D::new(ext[0], ext[1], ext[2], data)?)),
        Modality::ThreeD => Ok(ImagePayload::Volume(Volume3D::new(ext[0], ext[1], ext[2], data)?)),
        Modality::None => Err(bad("image file given for modality `none`")),
    }
}

pub fn write_image(path: &Path, img: &ImagePayload) -> Result<()> {
    fs::write(path, encode_image(img)).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path, modality: Modality) -> Result<ImagePayload> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, modality)
}

/// Directory holding the sidecars of dataset `path` (`<stem>_images`).
pub fn image_dir_for(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    path.with_file_name(format!("{stem}_images"))
}

/// Writes `samples` as JSON lines with image sidecars next to the file.
pub fn write_dataset(path: &Path, samples: &[MultimodalSample]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let img_dir = image_dir_for(path);
    let img_dir_name = img_dir.file_name().and_then(|s| s.to_str()).unwrap_or("images").to_string();
    if samples.iter().any(|s| s.image.is_some()) {
        fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    }
    let mut out = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let image = match &s.image {
            Some(img) => {
                let file = format!("{i:06}.mmim");
                write_image(&img_dir.join(&file), img)?;
                Some(format!("{img_dir_name}/{file}"))
            }
            None => None,
        };
        let rec = Record {
            image,
            modality: s.modality().as_str().to_string(),
            prompt: s.prompt.clone(),
            response: s.response.clone(),
            task: s.task.as_str().to_string(),
        };
        serde_json::to_writer(&mut out, &rec).expect("in-memory write");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Reads and validates a dataset file; image paths resolve relative to it.
pub fn load_dataset(path: &Path) -> Result<Vec<MultimodalSample>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::at_line(lineno, format!("malformed record: {e}")))?;
        let at = |e: Error| match e {
            Error::Validation { msg, .. } => Error::at_line(lineno, msg),
            Error::Shape(msg) => Error::at_line(lineno, msg),
            other => other,
        };
        let task: Task = rec.task.parse().map_err(at)?;
        let modality: Modality = rec.modality.parse().map_err(at)?;
        let image = match (&rec.image, modality) {
            (None, Modality::None) => None,
            (Some(rel), Modality::TwoD | Modality::ThreeD) => Some(read_image(&base.join(rel), modality).map_err(at)?),
            (img, m) => {
                return Err(Error::at_line(
                    lineno,
                    format!("modality `{}` inconsistent with image field {img:?}", m.as_str()),
                ))
            }
        };
        let sample = MultimodalSample { image, prompt: rec.prompt, response: rec.response, task };
        sample.validate().map_err(at)?;
        samples.push(sample);
    }
    Ok(samples)
}
