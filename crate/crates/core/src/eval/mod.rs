//! Task metrics, model evaluation and the ablation runner.

pub mod ablation;
pub mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use ablation::{run_ablation, AblationAxis, AblationSettings, AblationTable};
pub use metrics::{box_iou, exact_match, token_f1, Metric};

use crate::data::{decode_string, MultimodalSample, Task};
use crate::error::{Error, Result};
use crate::model::MedVlm;
use crate::rng::fnv1a;
use crate::tensor::Elem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task: Task,
    pub metric: Metric,
    pub value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scores: Vec<TaskScore>,
    /// Metric name to its definition.
    pub definitions: BTreeMap<String, String>,
    pub config_digest: String,
    pub wall_clock_secs: f64,
}

impl MetricReport {
    pub fn get(&self, task: Task) -> Option<f64> {
        self.scores.iter().find(|s| s.task == task).map(|s| s.value)
    }

    /// One `key=value` line per task.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for s in &self.scores {
            let _ = writeln!(out, "task={} metric={} value={:.4} n={}", s.task, s.metric.as_str(), s.value, s.count);
        }
        let _ = writeln!(out, "config_digest={} wall_clock_secs={:.1}", self.config_digest, self.wall_clock_secs);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub task: Task,
    pub prediction: String,
    pub reference: String,
    pub score: f64,
}

pub fn config_digest<T: Serialize>(cfg: &T) -> String {
    format!("{:016x}", fnv1a(&serde_json::to_vec(cfg).expect("config serializes")))
}

/// Greedy-decodes every sample of the selected tasks and scores it.
/// The model is only read.
pub fn evaluate_detailed<E: Elem>(
    model: &MedVlm<E>,
    data: &[MultimodalSample],
    tasks: Option<&[Task]>,
    max_new: usize,
) -> Result<(MetricReport, Vec<Prediction>)> {
    let start = Instant::now();
    let selected: Vec<&MultimodalSample> = data.iter().filter(|s| tasks.is_none_or(|t| t.contains(&s.task))).collect();
    if selected.is_empty() {
        return Err(Error::validation("evaluation set is empty"));
    }
    let mut sums: BTreeMap<Task, (f64, usize)> = BTreeMap::new();
    let mut preds = Vec::with_capacity(selected.len());
    for s in selected {
        let text = decode_string(&model.generate(s, max_new)?);
        let score = Metric::for_task(s.task).score(&text, &s.response);
        let e = sums.entry(s.task).or_default();
        e.0 += score;
        e.1 += 1;
        preds.push(Prediction { task: s.task, prediction: text, reference: s.response.clone(), score });
    }
    let scores: Vec<TaskScore> = sums
        .into_iter()
        .map(|(task, (sum, n))| TaskScore { task, metric: Metric::for_task(task), value: sum / n as f64, count: n })
        .collect();
    let definitions = scores.iter().map(|s| (s.metric.as_str().to_string(), s.metric.definition().to_string())).collect();
    let report = MetricReport {
        scores,
        definitions,
        config_digest: config_digest(&model.cfg),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((report, preds))
}

pub fn evaluate<E: Elem>(model: &MedVlm<E>, data: &[MultimodalSample], tasks: Option<&[Task]>, max_new: usize) -> Result<MetricReport> {
    evaluate_detailed(model, data, tasks, max_new).map(|(r, _)| r)
}
