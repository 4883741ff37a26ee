//! TOML problem files.
//!
//! ```toml
//! [dims]
//! agents = 2
//! m = 1
//! b = 1
//!
//! [graph]
//! edges = [[1, 2]]          # 1-based, any order
//!
//! [b]
//! values = [0.0]
//!
//! [agent.1]
//! kappa = 0.5               # optional, defaults to 1/N
//! a_block = [[1.0]]         # B rows of M entries
//! smooth = { quadratic = { p = [[1.0]], q = [0.0], r = 0.0 } }
//! nonsmooth = { box = { lo = [0.0], hi = [10.0] } }
//! ```
//!
//! Nonsmooth tags: `"zero"`, `{ l1 = { w } }`, `{ box = { lo, hi } }`, `{ norm_ball = { e } }`
//! with `e` one of 1 or 2. Box bounds accept `inf` / `-inf`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentProblem, ProblemError, ProblemInstance};
use crate::functions::{NonsmoothFunction, NormKind, SmoothFunction, SmoothKind};
use crate::topology::Graph;
use crate::{Matrix, Vector};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRecord {
    dims: DimsRecord,
    graph: GraphRecord,
    b: BRecord,
    #[serde(default)]
    agent: BTreeMap<String, AgentRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimsRecord {
    agents: usize,
    m: usize,
    b: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    edges: Vec<[usize; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BRecord {
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    a_block: Vec<Vec<f64>>,
    smooth: SmoothRecord,
    nonsmooth: NonsmoothRecord,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SmoothRecord {
    Quadratic {
        p: Vec<Vec<f64>>,
        q: Vec<f64>,
        #[serde(default)]
        r: f64,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum NonsmoothRecord {
    Zero,
    L1 { w: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    NormBall { e: u8 },
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<ProblemInstance, ProblemError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ProblemError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_instance(&text)
}

pub fn save_instance(
    instance: &ProblemInstance,
    path: impl AsRef<Path>,
) -> Result<(), ProblemError> {
    let path = path.as_ref();
    let text = write_instance(instance)?;
    fs::write(path, text).map_err(|source| ProblemError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_instance(text: &str) -> Result<ProblemInstance, ProblemError> {
    let rec: FileRecord = toml::from_str(text).map_err(|e| ProblemError::Parse(e.to_string()))?;
    let DimsRecord { agents: n, m, b } = rec.dims;
    if n == 0 || rec.agent.is_empty() {
        return Err(ProblemError::NoAgents);
    }
    if rec.b.values.len() != b {
        return Err(invalid("b.values", format!("expected {b} entries, got {}", rec.b.values.len())));
    }

    let mut by_index = BTreeMap::new();
    for (key, agent) in rec.agent {
        let idx: usize = key
            .parse()
            .ok()
            .filter(|i| (1..=n).contains(i))
            .ok_or_else(|| invalid(&format!("agent.{key}"), format!("key must be an agent index in 1..={n}")))?;
        by_index.insert(idx, agent);
    }
    if by_index.len() != n {
        let missing: Vec<String> = (1..=n)
            .filter(|i| !by_index.contains_key(i))
            .map(|i| i.to_string())
            .collect();
        return Err(invalid("agent", format!("missing agents {}", missing.join(", "))));
    }

    let pairs: Vec<(usize, usize)> = rec.graph.edges.iter().map(|e| (e[0], e[1])).collect();
    let graph = Graph::from_one_based(n, &pairs).map_err(|e| invalid("graph.edges", e.to_string()))?;

    let default_kappa = 1.0 / n as f64;
    let mut agents = Vec::with_capacity(n);
    for (idx, a) in by_index {
        let field = |name: &str| format!("agent.{idx}.{name}");
        let a_block = matrix_from_rows(&a.a_block, b, m).map_err(|msg| invalid(&field("a_block"), msg))?;
        let f = match a.smooth {
            SmoothRecord::Quadratic { p, q, r } => {
                let p = matrix_from_rows(&p, m, m).map_err(|msg| invalid(&field("smooth.p"), msg))?;
                if q.len() != m {
                    return Err(invalid(&field("smooth.q"), format!("expected {m} entries, got {}", q.len())));
                }
                SmoothFunction::quadratic(p, Vector::from_vec(q), r)
                    .map_err(|e| invalid(&field("smooth"), e.to_string()))?
            }
        };
        let g = match a.nonsmooth {
            NonsmoothRecord::Zero => NonsmoothFunction::Zero,
            NonsmoothRecord::L1 { w } => {
                NonsmoothFunction::l1(w).map_err(|e| invalid(&field("nonsmooth.l1"), e.to_string()))?
            }
            NonsmoothRecord::Box { lo, hi } => {
                if lo.len() != m || hi.len() != m {
                    return Err(invalid(&field("nonsmooth.box"), format!("bounds must have {m} entries")));
                }
                NonsmoothFunction::box_indicator(Vector::from_vec(lo), Vector::from_vec(hi))
                    .map_err(|e| invalid(&field("nonsmooth.box"), e.to_string()))?
            }
            NonsmoothRecord::NormBall { e } => NonsmoothFunction::Norm(match e {
                1 => NormKind::L1,
                2 => NormKind::L2,
                other => {
                    return Err(invalid(&field("nonsmooth.norm_ball.e"), format!("unsupported norm {other}")))
                }
            }),
        };
        agents.push(AgentProblem::new(f, g, a_block, a.kappa.unwrap_or(default_kappa)));
    }
    ProblemInstance::new(agents, Vector::from_vec(rec.b.values), graph)
}

pub fn write_instance(instance: &ProblemInstance) -> Result<String, ProblemError> {
    let dims = instance.dims();
    let mut agent = BTreeMap::new();
    for (i, a) in instance.agents.iter().enumerate() {
        let smooth = match a.f.kind() {
            SmoothKind::Quadratic { p, q, r } => SmoothRecord::Quadratic {
                p: rows_of(p),
                q: q.iter().copied().collect(),
                r: *r,
            },
            SmoothKind::Custom(_) => {
                return Err(ProblemError::Unsupported(format!(
                    "agent {} has a custom smooth function",
                    i + 1
                )))
            }
        };
        let nonsmooth = match &a.g {
            NonsmoothFunction::Zero => NonsmoothRecord::Zero,
            NonsmoothFunction::L1 { weight } => NonsmoothRecord::L1 { w: *weight },
            NonsmoothFunction::BoxIndicator { lo, hi } => NonsmoothRecord::Box {
                lo: lo.iter().copied().collect(),
                hi: hi.iter().copied().collect(),
            },
            NonsmoothFunction::Norm(NormKind::L1) => NonsmoothRecord::NormBall { e: 1 },
            NonsmoothFunction::Norm(NormKind::L2) => NonsmoothRecord::NormBall { e: 2 },
            NonsmoothFunction::CustomProx(_) | NonsmoothFunction::CustomStronglyConvex(_) => {
                return Err(ProblemError::Unsupported(format!(
                    "agent {} has a custom nonsmooth function",
                    i + 1
                )))
            }
        };
        agent.insert(
            (i + 1).to_string(),
            AgentRecord {
                kappa: Some(a.kappa),
                a_block: rows_of(&a.a_block),
                smooth,
                nonsmooth,
            },
        );
    }
    let rec = FileRecord {
        dims: DimsRecord {
            agents: dims.n,
            m: dims.m,
            b: dims.b,
        },
        graph: GraphRecord {
            edges: instance
                .graph
                .edges()
                .iter()
                .map(|e| [e.lo + 1, e.hi + 1])
                .collect(),
        },
        b: BRecord {
            values: instance.b.iter().copied().collect(),
        },
        agent,
    };
    toml::to_string(&rec).map_err(|e| ProblemError::Parse(e.to_string()))
}

fn invalid(field: &str, message: impl Into<String>) -> ProblemError {
    ProblemError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Matrix, String> {
    if rows.len() != nrows {
        return Err(format!("expected {nrows} rows, got {}", rows.len()));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return Err(format!("expected rows of {ncols} entries, got {}", r.len()));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
