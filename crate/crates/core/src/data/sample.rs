use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    ReportGeneration,
    VqaLong,
    VqaShort,
    VqaChoice,
    Rec,
    Reg,
    Caption,
}

impl Task {
    pub const ALL: [Task; 8] = [
        Task::Classification,
        Task::ReportGeneration,
        Task::VqaLong,
        Task::VqaShort,
        Task::VqaChoice,
        Task::Rec,
        Task::Reg,
        Task::Caption,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::ReportGeneration => "report_generation",
            Task::VqaLong => "vqa_long",
            Task::VqaShort => "vqa_short",
            Task::VqaChoice => "vqa_choice",
            Task::Rec => "rec",
            Task::Reg => "reg",
            Task::Caption => "caption",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown task tag `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
    #[serde(rename = "none")]
    None,
}

impl Modality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::TwoD => "2d",
            Modality::ThreeD => "3d",
            Modality::None => "none",
        }
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2d" => Ok(Modality::TwoD),
            "3d" => Ok(Modality::ThreeD),
            "none" => Ok(Modality::None),
            _ => Err(Error::validation(format!("unknown modality `{s}`"))),
        }
    }
}

/// `H×W×C` image, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image2D {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "image {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Image2D { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Image2D { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// `N×H×W` single-channel volume, values in `[0, 1]`. Slices run along the first axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    pub slices: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Volume3D {
    pub fn new(slices: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != slices * height * width {
            return Err(Error::Shape(format!(
                "volume {slices}x{height}x{width} needs {} values, got {}",
                slices * height * width,
                data.len()
            )));
        }
        Ok(Volume3D { slices, height, width, data })
    }

    pub fn slice(&self, j: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[j * n..(j + 1) * n]
    }

    /// `n` copies of a single-channel plane.
    pub fn repeated(plane: &[f32], n: usize, height: usize, width: usize) -> Result<Self> {
        let data = (0..n).flat_map(|_| plane.iter().copied()).collect();
        Volume3D::new(n, height, width, data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImagePayload {
    Image(Image2D),
    Volume(Volume3D),
}

impl ImagePayload {
    pub fn modality(&self) -> Modality {
        match self {
            ImagePayload::Image(_) => Modality::TwoD,
            ImagePayload::Volume(_) => Modality::ThreeD,
        }
    }

    /// In-plane `(height, width)`.
    pub fn plane(&self) -> (usize, usize) {
        match self {
            ImagePayload::Image(i) => (i.height, i.width),
            ImagePayload::Volume(v) => (v.height, v.width),
        }
    }

    pub fn values(&self) -> &[f32] {
        match self {
            ImagePayload::Image(i) => &i.data,
            ImagePayload::Volume(v) => &v.data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalSample {
    pub image: Option<ImagePayload>,
    pub prompt: String,
    pub response: String,
    pub task: Task,
}

impl MultimodalSample {
    pub fn modality(&self) -> Modality {
        self.image.as_ref().map(|i| i.modality()).unwrap_or(Modality::None)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(img) = &self.image {
            if img.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::validation("image values must lie in [0, 1]"));
            }
        }
        match self.task {
            Task::Caption if !self.prompt.is_empty() => {
                Err(Error::validation("caption samples must have an empty prompt"))
            }
            Task::Rec => {
                let img = self
                    .image
                    .as_ref()
                    .ok_or_else(|| Error::validation("rec sample without an image"))?;
                let b = parse_box(&self.response)
                    .ok_or_else(|| Error::validation(format!("rec response `{}` is not x1,y1,x2,y2", self.response)))?;
                let (h, w) = img.plane();
                if !(b[0] < b[2] && b[1] < b[3]) {
                    return Err(Error::validation(format!("rec box {b:?} needs x1<x2 and y1<y2")));
                }
                if b[0] < 0 || b[1] < 0 || b[2] > w as i64 || b[3] > h as i64 {
                    return Err(Error::validation(format!("rec box {b:?} outside {w}x{h} image")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Parses `"x1,y1,x2,y2"` integers.
pub fn parse_box(s: &str) -> Option<[i64; 4]> {
    let parts: Vec<i64> = s
        .trim()
        .split(',')
        .map(|p| p.trim().parse::<i64>())
        .collect::<std::result::Result<_, _>>()
        .ok()?;
    <[i64; 4]>::try_from(parts).ok()
}
