use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{parse_box, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ExactMatch,
    Iou,
    TokenF1,
}

impl Metric {
    pub fn for_task(task: Task) -> Metric {
        match task {
            Task::Classification | Task::VqaShort | Task::VqaChoice | Task::Reg => Metric::ExactMatch,
            Task::Rec => Metric::Iou,
            Task::ReportGeneration | Task::VqaLong | Task::Caption => Metric::TokenF1,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::ExactMatch => "exact_match",
            Metric::Iou => "iou",
            Metric::TokenF1 => "token_f1",
        }
    }

    pub fn definition(&self) -> &'static str {
        match self {
            Metric::ExactMatch => "1 if case-folded, whitespace-trimmed strings are equal, else 0",
            Metric::Iou => "intersection over union of x1,y1,x2,y2 boxes; unparsable prediction scores 0",
            Metric::TokenF1 => "F1 of whitespace-token multisets (two empty strings score 1)",
        }
    }

    pub fn score(&self, prediction: &str, reference: &str) -> f64 {
        match self {
            Metric::ExactMatch => exact_match(prediction, reference),
            Metric::Iou => box_iou(prediction, reference),
            Metric::TokenF1 => token_f1(prediction, reference),
        }
    }
}

pub fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

pub fn exact_match(prediction: &str, reference: &str) -> f64 {
    f64::from(u8::from(normalize(prediction) == normalize(reference)))
}

/// IoU of two `x1,y1,x2,y2` strings, treating boxes as continuous regions.
pub fn box_iou(prediction: &str, reference: &str) -> f64 {
    let (Some(p), Some(r)) = (parse_box(prediction.trim()), parse_box(reference.trim())) else {
        return 0.0;
    };
    let area = |b: [i64; 4]| ((b[2] - b[0]).max(0) * (b[3] - b[1]).max(0)) as f64;
    let iw = (p[2].min(r[2]) - p[0].max(r[0])).max(0);
    let ih = (p[3].min(r[3]) - p[1].max(r[1])).max(0);
    let inter = (iw * ih) as f64;
    let union = area(p) + area(r) - inter;
    if union <= 0.0 {
        return f64::from(u8::from(p == r));
    }
    inter / union
}

pub fn token_f1(prediction: &str, reference: &str) -> f64 {
    let count = |s: &str| {
        let mut m: HashMap<String, usize> = HashMap::new();
        for t in s.split_whitespace() {
            *m.entry(t.to_lowercase()).or_default() += 1;
        }
        m
    };
    let (p, r) = (count(prediction), count(reference));
    let (np, nr) = (p.values().sum::<usize>(), r.values().sum::<usize>());
    if np == 0 && nr == 0 {
        return 1.0;
    }
    let common: usize = p.iter().map(|(t, &c)| c.min(r.get(t).copied().unwrap_or(0))).sum();
    if common == 0 {
        return 0.0;
    }
    let (prec, rec) = (common as f64 / np as f64, common as f64 / nr as f64);
    2.0 * prec * rec / (prec + rec)
}
