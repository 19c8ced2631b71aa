//! Synthetic multi-task corpora: flat colored shapes on a black canvas with
//! programmatically known answers.
//!
//! Objects sit on an 8×8 cell grid so boxes are multiples of `size / 8`.
//! Volumes extrude the grayscale scene across every slice.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::io::write_dataset;
use super::sample::{Image2D, ImagePayload, Modality, MultimodalSample, Task, Volume3D};
use crate::error::{Error, Result};
use crate::rng::SeedTree;

pub const GRID: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Cross,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Circle, Shape::Square, Shape::Triangle, Shape::Cross];

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
            Shape::Cross => "cross",
        }
    }

    /// Whether pixel `(px, py)` of a `side × side` box is covered.
    pub fn covers(&self, side: usize, px: usize, py: usize) -> bool {
        let s = side as f32;
        let (x, y) = (px as f32 + 0.5, py as f32 + 0.5);
        let (cx, cy) = (s / 2.0, s / 2.0);
        match self {
            Shape::Square => true,
            Shape::Circle => (x - cx).powi(2) + (y - cy).powi(2) <= (s / 2.0).powi(2),
            Shape::Triangle => (x - cx).abs() <= y / 2.0,
            Shape::Cross => (x - cx).abs() <= s / 6.0 || (y - cy).abs() <= s / 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

    pub fn name(&self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
        }
    }

    pub fn rgb(&self) -> [f32; 3] {
        match self {
            Color::Red => [1.0, 0.0, 0.0],
            Color::Green => [0.0, 1.0, 0.0],
            Color::Blue => [0.0, 0.0, 1.0],
            Color::Yellow => [1.0, 1.0, 0.0],
        }
    }

    /// Intensity used when the scene is rendered into a volume.
    pub fn gray(&self) -> f32 {
        match self {
            Color::Red => 0.4,
            Color::Green => 0.6,
            Color::Blue => 0.8,
            Color::Yellow => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Object {
    pub shape: Shape,
    pub color: Color,
    /// `[x1, y1, x2, y2]`, half-open pixel box.
    pub bbox: [usize; 4],
}

impl Object {
    pub fn side(&self) -> usize {
        self.bbox[2] - self.bbox[0]
    }

    pub fn box_text(&self) -> String {
        let [x1, y1, x2, y2] = self.bbox;
        format!("{x1},{y1},{x2},{y2}")
    }

    fn size_word(&self, cell: usize) -> &'static str {
        match self.side() / cell {
            0..=2 => "small",
            3 => "medium",
            _ => "large",
        }
    }

    fn phrase(&self) -> String {
        format!("a {} {}", self.color.name(), self.shape.name())
    }

    fn overlaps(&self, other: &Object, gap: usize) -> bool {
        let a = self.bbox;
        let b = other.bbox;
        a[0] < b[2] + gap && b[0] < a[2] + gap && a[1] < b[3] + gap && b[1] < a[3] + gap
    }
}

/// Object pixels of a canvas: `Some(color)` where a shape is drawn.
pub fn render_mask(size: usize, objects: &[Object]) -> Vec<Option<Color>> {
    let mut canvas = vec![None; size * size];
    for o in objects {
        let side = o.side();
        for py in 0..side {
            for px in 0..side {
                if o.shape.covers(side, px, py) {
                    canvas[(o.bbox[1] + py) * size + o.bbox[0] + px] = Some(o.color);
                }
            }
        }
    }
    canvas
}

pub fn render_image(size: usize, objects: &[Object]) -> Image2D {
    let mut img = Image2D::zeros(size, size, 3);
    for (i, px) in render_mask(size, objects).into_iter().enumerate() {
        if let Some(c) = px {
            img.data[i * 3..i * 3 + 3].copy_from_slice(&c.rgb());
        }
    }
    img
}

pub fn render_volume(size: usize, slices: usize, objects: &[Object]) -> Volume3D {
    let plane: Vec<f32> = render_mask(size, objects)
        .into_iter()
        .map(|p| p.map(|c| c.gray()).unwrap_or(0.0))
        .collect();
    Volume3D::repeated(&plane, slices, size, size).expect("consistent extents")
}

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    /// Task tag → number of samples.
    pub counts: BTreeMap<String, usize>,
    pub image_size: usize,
    pub modality: Modality,
    #[serde(default = "default_slices")]
    pub slices: usize,
}

fn default_slices() -> usize {
    4
}

impl CorpusSpec {
    pub fn new(counts: &[(Task, usize)], image_size: usize, modality: Modality, slices: usize) -> Self {
        CorpusSpec {
            counts: counts.iter().map(|(t, n)| (t.as_str().to_string(), *n)).collect(),
            image_size,
            modality,
            slices,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Same mix with every count scaled by `f` (at least one per task).
    pub fn scaled(&self, f: f64) -> CorpusSpec {
        let mut out = self.clone();
        for n in out.counts.values_mut() {
            *n = ((*n as f64 * f).round() as usize).max(1);
        }
        out
    }
}

/// Generator log entry for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub index: usize,
    pub task: Task,
    pub objects: Vec<Object>,
    /// Index into `objects` of the object the prompt refers to, if any.
    pub target: Option<usize>,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub samples: Vec<MultimodalSample>,
    pub truth: Vec<TruthRecord>,
    pub image_size: usize,
}

impl SyntheticCorpus {
    /// Writes `<dir>/<name>.jsonl`, its sidecars and `<dir>/<name>.truth.jsonl`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        write_dataset(&dir.join(format!("{name}.jsonl")), &self.samples)?;
        let path = dir.join(format!("{name}.truth.jsonl"));
        let mut out = Vec::new();
        for t in &self.truth {
            serde_json::to_writer(&mut out, t).expect("in-memory write");
            out.push(b'\n');
        }
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(&path, e))
    }

    /// Re-derives every answer from the rendered pixels and the log.
    ///
    /// For each logged object the drawn footprint inside its box must match
    /// exactly one shape, and that shape and color must agree with the
    /// stored response.
    pub fn audit(&self) -> Result<()> {
        for (s, t) in self.samples.iter().zip(&self.truth) {
            let fail = |msg: String| Err(Error::validation(format!("sample {}: {msg}", t.index)));
            let img = s.image.as_ref().ok_or_else(|| Error::validation("synthetic sample without image"))?;
            let seen = read_objects(img, self.image_size, &t.objects)?;
            if seen != t.objects {
                return fail(format!("pixels show {seen:?}, log says {:?}", t.objects));
            }
            let expected = answer_for(t.task, &seen, t.target, self.image_size, &s.prompt);
            if expected != s.response {
                return fail(format!("response `{}` but pixels imply `{expected}`", s.response));
            }
        }
        Ok(())
    }
}

/// Recovers `(shape, color)` inside each logged box from pixel data alone.
fn read_objects(img: &ImagePayload, size: usize, logged: &[Object]) -> Result<Vec<Object>> {
    logged
        .iter()
        .map(|o| {
            let side = o.side();
            let mut color = None;
            let mut covered = vec![false; side * side];
            for py in 0..side {
                for px in 0..side {
                    let (x, y) = (o.bbox[0] + px, o.bbox[1] + py);
                    let c = match img {
                        ImagePayload::Image(i) => {
                            let rgb = [i.at(y, x, 0), i.at(y, x, 1), i.at(y, x, 2)];
                            Color::ALL.into_iter().find(|c| c.rgb() == rgb)
                        }
                        ImagePayload::Volume(v) => {
                            let g = v.slice(0)[y * size + x];
                            Color::ALL.into_iter().find(|c| c.gray() == g)
                        }
                    };
                    if let Some(c) = c {
                        covered[py * side + px] = true;
                        color = Some(c);
                    }
                }
            }
            let matches: Vec<Shape> = Shape::ALL
                .into_iter()
                .filter(|sh| (0..side * side).all(|i| sh.covers(side, i % side, i / side) == covered[i]))
                .collect();
            match (matches.as_slice(), color) {
                ([shape], Some(color)) => Ok(Object { shape: *shape, color, bbox: o.bbox }),
                _ => Err(Error::validation(format!("box {:?} does not hold exactly one known shape", o.bbox))),
            }
        })
        .collect()
}

fn list_phrase(objects: &[Object]) -> String {
    let parts: Vec<String> = objects.iter().map(|o| o.phrase()).collect();
    match parts.len() {
        0 => String::new(),
        1 => parts[0].clone(),
        n => format!("{} and {}", parts[..n - 1].join(", "), parts[n - 1]),
    }
}

fn answer_for(task: Task, objects: &[Object], target: Option<usize>, size: usize, prompt: &str) -> String {
    let cell = size / GRID;
    let tgt = target.map(|i| &objects[i]);
    match task {
        Task::Classification => objects[0].shape.name().to_string(),
        Task::VqaShort => objects.len().to_string(),
        Task::VqaLong => {
            let o = &objects[0];
            format!("a {} {} {}", o.size_word(cell), o.color.name(), o.shape.name())
        }
        Task::VqaChoice => {
            let want = format!(") {}", objects[0].color.name());
            ["a", "b", "c"]
                .into_iter()
                .find(|l| prompt.contains(&format!("({l}{want}")))
                .unwrap_or("?")
                .to_string()
        }
        Task::ReportGeneration => {
            let n = objects.len();
            let noun = if n == 1 { "shape" } else { "shapes" };
            format!("{n} {noun}: {}.", list_phrase(objects))
        }
        Task::Rec => tgt.map(|o| o.box_text()).unwrap_or_default(),
        Task::Reg => tgt.map(|o| o.shape.name().to_string()).unwrap_or_default(),
        Task::Caption => list_phrase(objects),
    }
}

fn place(rng: &mut impl Rng, count: usize, sides: &[usize], cell: usize) -> Vec<Object> {
    'retry: loop {
        let mut objs: Vec<Object> = Vec::with_capacity(count);
        for _ in 0..count {
            let mut placed = false;
            for _ in 0..200 {
                let side = sides[rng.random_range(0..sides.len())];
                let gx = rng.random_range(0..=GRID - side);
                let gy = rng.random_range(0..=GRID - side);
                let o = Object {
                    shape: Shape::ALL[rng.random_range(0..Shape::ALL.len())],
                    color: Color::ALL[rng.random_range(0..Color::ALL.len())],
                    bbox: [gx * cell, gy * cell, (gx + side) * cell, (gy + side) * cell],
                };
                if objs.iter().all(|p| !p.overlaps(&o, cell)) {
                    objs.push(o);
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'retry;
            }
        }
        objs.sort_by_key(|o| (o.bbox[1], o.bbox[0]));
        return objs;
    }
}

fn prompt_for(task: Task, objects: &[Object], target: Option<usize>, rng: &mut impl Rng) -> String {
    match task {
        Task::Classification => "What shape is shown?".into(),
        Task::VqaShort => "How many shapes are there?".into(),
        Task::VqaLong => "Describe the shape.".into(),
        Task::VqaChoice => {
            let right = objects[0].color;
            let mut options: Vec<Color> = Color::ALL.into_iter().filter(|&c| c != right).collect();
            options.shuffle(rng);
            options.truncate(2);
            options.push(right);
            options.shuffle(rng);
            format!(
                "What color is the shape? (a) {} (b) {} (c) {}",
                options[0].name(),
                options[1].name(),
                options[2].name()
            )
        }
        Task::ReportGeneration => "Write a report.".into(),
        Task::Rec => {
            let o = &objects[target.unwrap_or(0)];
            format!("Locate the {} {}.", o.color.name(), o.shape.name())
        }
        Task::Reg => format!("What shape is at {}?", objects[target.unwrap_or(0)].box_text()),
        Task::Caption => String::new(),
    }
}

/// Generates the corpus described by `spec`; identical seeds give identical corpora.
pub fn make_synthetic_corpus(spec: &CorpusSpec, seed: u64) -> Result<SyntheticCorpus> {
    let size = spec.image_size;
    if size < 4 * GRID || size % GRID != 0 {
        return Err(Error::Config(format!("image_size {size} must be a multiple of {GRID} and at least {}", 4 * GRID)));
    }
    if spec.modality == Modality::None {
        return Err(Error::Config("synthetic corpora need an image modality".into()));
    }
    if spec.modality == Modality::ThreeD && spec.slices == 0 {
        return Err(Error::Config("3d corpora need at least one slice".into()));
    }
    let tasks = spec
        .counts
        .iter()
        .map(|(name, &n)| name.parse::<Task>().map(|t| (t, n)).map_err(|_| Error::Config(format!("unknown task `{name}` in corpus spec"))))
        .collect::<Result<Vec<_>>>()?;

    let cell = size / GRID;
    let mut rng = SeedTree::new(seed).rng("synthetic-corpus");
    let mut corpus = SyntheticCorpus { samples: Vec::new(), truth: Vec::new(), image_size: size };
    for (task, n) in tasks {
        for _ in 0..n {
            let (count, sides): (usize, &[usize]) = match task {
                Task::VqaShort => (rng.random_range(1..=4), &[2]),
                Task::ReportGeneration | Task::Caption => (rng.random_range(1..=3), &[2, 3]),
                Task::Reg => (2, &[2, 3]),
                _ => (1, &[2, 3, 4]),
            };
            let objects = place(&mut rng, count, sides, cell);
            let target = matches!(task, Task::Rec | Task::Reg).then(|| rng.random_range(0..objects.len()));
            let prompt = prompt_for(task, &objects, target, &mut rng);
            let response = answer_for(task, &objects, target, size, &prompt);
            let image = match spec.modality {
                Modality::ThreeD => ImagePayload::Volume(render_volume(size, spec.slices, &objects)),
                _ => ImagePayload::Image(render_image(size, &objects)),
            };
            let index = corpus.samples.len();
            corpus.samples.push(MultimodalSample { image: Some(image), prompt, response: response.clone(), task });
            corpus.truth.push(TruthRecord { index, task, objects, target, answer: response });
        }
    }
    for s in &corpus.samples {
        s.validate()?;
    }
    Ok(corpus)
}
