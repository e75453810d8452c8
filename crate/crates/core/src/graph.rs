//! The DAG of prediction tasks.
//!
//! Tasks are identified by a short string id and carry a class count. Edges
//! run from a pre-order task to a follow-up task. Construction validates
//! acyclicity and derives a deterministic topological order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub classes: usize,
}

impl TaskSpec {
    pub fn new(id: impl Into<String>, classes: usize) -> Self {
        TaskSpec {
            id: id.into(),
            classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct TaskGraph {
    tasks: Vec<TaskSpec>,
    edges: Vec<(usize, usize)>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

/// Serialized form: tasks plus edges, derived fields rebuilt on load.
#[derive(Serialize, Deserialize)]
struct GraphRepr {
    tasks: Vec<TaskSpec>,
    edges: Vec<(usize, usize)>,
}

impl From<TaskGraph> for GraphRepr {
    fn from(g: TaskGraph) -> Self {
        GraphRepr {
            tasks: g.tasks,
            edges: g.edges,
        }
    }
}

impl TryFrom<GraphRepr> for TaskGraph {
    type Error = Error;
    fn try_from(r: GraphRepr) -> Result<Self> {
        TaskGraph::new(r.tasks, r.edges)
    }
}

impl TaskGraph {
    pub fn new(tasks: Vec<TaskSpec>, edges: Vec<(usize, usize)>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Topology("graph has no tasks".into()));
        }
        let n = tasks.len();
        for (i, t) in tasks.iter().enumerate() {
            if t.id.is_empty() {
                return Err(Error::Topology(format!("task {i} has an empty id")));
            }
            if t.classes == 0 {
                return Err(Error::Topology(format!(
                    "task '{}' has zero classes",
                    t.id
                )));
            }
            if tasks[..i].iter().any(|u| u.id == t.id) {
                return Err(Error::Topology(format!("duplicate task id '{}'", t.id)));
            }
        }
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::Topology(format!(
                    "edge ({a}, {b}) references a task outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::Topology(format!("self-loop on task {a}")));
            }
            if succs[a].contains(&b) {
                return Err(Error::Topology(format!("duplicate edge ({a}, {b})")));
            }
            succs[a].push(b);
            preds[b].push(a);
        }
        for list in preds.iter_mut().chain(succs.iter_mut()) {
            list.sort_unstable();
        }

        // Kahn's algorithm; ties broken by lowest task index so the order is
        // deterministic.
        let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut topo = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        while let Some(&next) = ready.iter().min() {
            ready.retain(|&i| i != next);
            topo.push(next);
            for &s in &succs[next] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push(s);
                }
            }
        }
        if topo.len() != n {
            return Err(Error::Topology("task graph contains a cycle".into()));
        }

        Ok(TaskGraph {
            tasks,
            edges,
            preds,
            succs,
            topo,
        })
    }

    /// The default three-task topology: law feeds charge and penalty, charge
    /// feeds penalty.
    pub fn default_ljp(law_classes: usize, charge_classes: usize, penalty_classes: usize) -> Self {
        TaskGraph::new(
            vec![
                TaskSpec::new("law", law_classes),
                TaskSpec::new("charge", charge_classes),
                TaskSpec::new("penalty", penalty_classes),
            ],
            vec![(0, 1), (0, 2), (1, 2)],
        )
        .expect("default topology is acyclic")
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn classes(&self, task: usize) -> usize {
        self.tasks[task].classes
    }

    pub fn id(&self, task: usize) -> &str {
        &self.tasks[task].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Pre-order tasks of `task`, sorted by index.
    pub fn pre_order(&self, task: usize) -> &[usize] {
        &self.preds[task]
    }

    /// Follow-up tasks of `task`, sorted by index.
    pub fn follow_up(&self, task: usize) -> &[usize] {
        &self.succs[task]
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn is_root(&self, task: usize) -> bool {
        self.preds[task].is_empty()
    }
}
