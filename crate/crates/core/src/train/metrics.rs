//! Evaluation metrics: accuracy and macro-averaged precision/recall/F1 from
//! per-task confusion matrices.
//!
//! Confusion rows are gold classes and columns are predictions. Per-class
//! ratios define 0/0 as 0, and macro averages run over every class of the
//! task, so an absent class contributes zero.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: String,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: usize,
    pub tasks: Vec<TaskMetrics>,
}

impl EvalReport {
    pub fn task(&self, id: &str) -> Option<&TaskMetrics> {
        self.tasks.iter().find(|t| t.task == id)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Derive all metrics for one task from its confusion matrix.
pub fn metrics_from_confusion(task: impl Into<String>, confusion: Vec<Vec<usize>>) -> TaskMetrics {
    let classes = confusion.len();
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..classes).map(|i| confusion[i][i]).sum();

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    for c in 0..classes {
        let col_sum: usize = (0..classes).map(|r| confusion[r][c]).sum();
        let row_sum: usize = confusion[c].iter().sum();
        let p = ratio(confusion[c][c], col_sum);
        let r = ratio(confusion[c][c], row_sum);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        precision_sum += p;
        recall_sum += r;
        f1_sum += f1;
    }
    TaskMetrics {
        task: task.into(),
        accuracy: ratio(correct, total),
        macro_precision: precision_sum / classes as f64,
        macro_recall: recall_sum / classes as f64,
        macro_f1: f1_sum / classes as f64,
        confusion,
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task\tacc\tmp\tmr\tf1")?;
        for t in &self.tasks {
            writeln!(
                f,
                "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                t.task, t.accuracy, t.macro_precision, t.macro_recall, t.macro_f1
            )?;
        }
        Ok(())
    }
}
