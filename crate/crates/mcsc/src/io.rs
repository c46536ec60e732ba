//! CSV and JSON serialization of the interface types.
//!
//! All CSVs are UTF-8, comma-delimited, with a header row. Floats are
//! written with Rust's shortest round-trip formatting, so re-ingesting a
//! file reproduces the exact binary values and identical runs produce
//! byte-identical output.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chain::{
    Distribution, DistributionSeries, EventSet, TransitionEvent, TransitionMatrix,
};
use crate::control::{ControlConfig, ControlPlan, Horizon, Intervention};
use crate::error::{McscError, Result};
use crate::geometry::{Distance, LabeledRecord, LabeledSeries, Partition, PartitionKind};
use crate::models::Trajectory;
use crate::transport::TransportPlan;

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| McscError::MalformedFile {
        path: path.display().to_string(),
        reason: format!("expected a number, got {s:?}"),
    })
}

fn parse_usize(s: &str, path: &Path) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|_| McscError::MalformedFile {
        path: path.display().to_string(),
        reason: format!("expected an integer, got {s:?}"),
    })
}

fn parse_i64(s: &str, path: &Path) -> Result<i64> {
    s.trim().parse::<i64>().map_err(|_| McscError::MalformedFile {
        path: path.display().to_string(),
        reason: format!("expected an integer, got {s:?}"),
    })
}

// ---------------------------------------------------------------------------
// Partition JSON: {kind, edges|representatives, distance}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum PartitionDoc {
    PerAxis {
        edges: Vec<Vec<f64>>,
        distance: Distance,
    },
    Representatives {
        representatives: Vec<Vec<f64>>,
        distance: Distance,
    },
}

pub fn write_partition_json(path: impl AsRef<Path>, partition: &Partition) -> Result<()> {
    let doc = match partition.kind() {
        PartitionKind::PerAxis { edges } => PartitionDoc::PerAxis {
            edges: edges.clone(),
            distance: partition.distance(),
        },
        PartitionKind::Representatives { points } => PartitionDoc::Representatives {
            representatives: points.clone(),
            distance: partition.distance(),
        },
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_partition_json(path: impl AsRef<Path>) -> Result<Partition> {
    let text = fs::read_to_string(&path)?;
    let doc: PartitionDoc = serde_json::from_str(&text)?;
    match doc {
        PartitionDoc::PerAxis { edges, distance } => Partition::new_per_axis(edges, distance),
        PartitionDoc::Representatives {
            representatives,
            distance,
        } => Partition::new_representatives(representatives, distance),
    }
}

// ---------------------------------------------------------------------------
// Dense matrices and distributions: header row of state labels 1..K
// ---------------------------------------------------------------------------

fn write_dense_csv(path: &Path, rows: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = rows.ncols();
    w.write_record((1..=k).map(|i| i.to_string()))?;
    for row in rows.rows() {
        w.write_record(row.iter().map(|&v| fmt(v)))?;
    }
    w.flush()?;
    Ok(())
}

fn read_dense_csv(path: &Path) -> Result<Array2<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let k = r.headers()?.len();
    let mut data = Vec::new();
    let mut nrows = 0;
    for record in r.records() {
        let record = record?;
        if record.len() != k {
            return Err(McscError::MalformedFile {
                path: path.display().to_string(),
                reason: format!("row {} has {} fields, expected {k}", nrows + 1, record.len()),
            });
        }
        for field in record.iter() {
            data.push(parse_f64(field, path)?);
        }
        nrows += 1;
    }
    Array2::from_shape_vec((nrows, k), data).map_err(|e| McscError::MalformedFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn write_transition_matrix_csv(path: impl AsRef<Path>, a: &TransitionMatrix) -> Result<()> {
    write_dense_csv(path.as_ref(), a.as_array())
}

pub fn read_transition_matrix_csv(path: impl AsRef<Path>) -> Result<TransitionMatrix> {
    TransitionMatrix::new(read_dense_csv(path.as_ref())?)
}

pub fn write_transport_plan_csv(path: impl AsRef<Path>, plan: &TransportPlan) -> Result<()> {
    write_dense_csv(path.as_ref(), plan.as_array())
}

/// Raw dense matrix reader (transport plans, `A'` matrices).
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    read_dense_csv(path.as_ref())
}

/// Write any square matrix dense with a `1..K` header (used for `A'`).
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    write_dense_csv(path.as_ref(), m)
}

pub fn write_distribution_csv(path: impl AsRef<Path>, z: &Distribution) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record((1..=z.k()).map(|i| i.to_string()))?;
    w.write_record(z.as_array().iter().map(|&v| fmt(v)))?;
    w.flush()?;
    Ok(())
}

pub fn read_distribution_csv(path: impl AsRef<Path>) -> Result<Distribution> {
    let arr = read_dense_csv(path.as_ref())?;
    if arr.nrows() != 1 {
        return Err(McscError::MalformedFile {
            path: path.as_ref().display().to_string(),
            reason: format!("expected 1 data row, got {}", arr.nrows()),
        });
    }
    Distribution::new(Array1::from_iter(arr.row(0).iter().copied()))
}

// ---------------------------------------------------------------------------
// Distribution series: time, z_1..z_K
// ---------------------------------------------------------------------------

pub fn write_distribution_series_csv(
    path: impl AsRef<Path>,
    series: &DistributionSeries,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let k = series.k();
    let mut header = vec!["time".to_string()];
    header.extend((1..=k).map(|i| format!("z_{i}")));
    w.write_record(&header)?;
    for (t, z) in series.times().iter().zip(series.points()) {
        let mut rec = vec![fmt(*t)];
        rec.extend(z.as_array().iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_distribution_series_csv(path: impl AsRef<Path>) -> Result<DistributionSeries> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let k = r.headers()?.len().saturating_sub(1);
    if k == 0 {
        return Err(McscError::MalformedFile {
            path: path.display().to_string(),
            reason: "expected columns time, z_1..z_K".into(),
        });
    }
    let mut times = Vec::new();
    let mut points = Vec::new();
    for record in r.records() {
        let record = record?;
        if record.len() != k + 1 {
            return Err(McscError::MalformedFile {
                path: path.display().to_string(),
                reason: format!("row has {} fields, expected {}", record.len(), k + 1),
            });
        }
        times.push(parse_f64(&record[0], path)?);
        let mut z = Array1::zeros(k);
        for s in 0..k {
            z[s] = parse_f64(&record[s + 1], path)?;
        }
        points.push(Distribution::new(z)?);
    }
    DistributionSeries::new(times, points)
}

// ---------------------------------------------------------------------------
// Event sets: m, t, i, j
// ---------------------------------------------------------------------------

pub fn write_event_set_csv(path: impl AsRef<Path>, events: &EventSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["m", "t", "i", "j"])?;
    for e in events.events() {
        w.write_record([
            e.individual.clone(),
            e.time.to_string(),
            e.from.to_string(),
            e.to.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read an event set; `k` defaults to the largest label present.
pub fn read_event_set_csv(path: impl AsRef<Path>, k: Option<usize>) -> Result<EventSet> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut events = Vec::new();
    let mut max_label = 0usize;
    for record in r.records() {
        let record = record?;
        if record.len() != 4 {
            return Err(McscError::MalformedFile {
                path: path.display().to_string(),
                reason: format!("row has {} fields, expected 4", record.len()),
            });
        }
        let from = parse_usize(&record[2], path)?;
        let to = parse_usize(&record[3], path)?;
        max_label = max_label.max(from).max(to);
        events.push(TransitionEvent {
            individual: record[0].to_string(),
            time: parse_i64(&record[1], path)?,
            from,
            to,
        });
    }
    EventSet::new(events, k.unwrap_or(max_label))
}

// ---------------------------------------------------------------------------
// Labeled series: individual_id, time_index, state_label
// ---------------------------------------------------------------------------

pub fn write_labeled_series_csv(path: impl AsRef<Path>, series: &LabeledSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["individual_id", "time_index", "state_label"])?;
    for r in series.records() {
        w.write_record([
            r.individual.clone(),
            r.time.to_string(),
            r.label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a labeled series; `k` defaults to the largest label present.
pub fn read_labeled_series_csv(path: impl AsRef<Path>, k: Option<usize>) -> Result<LabeledSeries> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    let mut max_label = 0usize;
    for record in r.records() {
        let record = record?;
        if record.len() != 3 {
            return Err(McscError::MalformedFile {
                path: path.display().to_string(),
                reason: format!("row has {} fields, expected 3", record.len()),
            });
        }
        let label = parse_usize(&record[2], path)?;
        max_label = max_label.max(label);
        records.push(LabeledRecord {
            individual: record[0].to_string(),
            time: parse_i64(&record[1], path)?,
            label,
        });
    }
    LabeledSeries::new(records, k.unwrap_or(max_label))
}

// ---------------------------------------------------------------------------
// Trajectories: individual_id, t, x_1..x_N
// ---------------------------------------------------------------------------

pub fn write_trajectories_csv(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<()> {
    if trajectories.is_empty() {
        return Err(McscError::EmptyInput("trajectories"));
    }
    let dim = trajectories[0].dim();
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["individual_id".to_string(), "t".to_string()];
    header.extend((1..=dim).map(|d| format!("x_{d}")));
    w.write_record(&header)?;
    for traj in trajectories {
        for (t, p) in traj.times.iter().zip(&traj.points) {
            let mut rec = vec![traj.individual_id.clone(), t.to_string()];
            rec.extend(p.iter().map(|&v| fmt(v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories_csv(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "individual_id" || &headers[1] != "t" {
        return Err(McscError::MalformedFile {
            path: path.display().to_string(),
            reason: "expected columns individual_id, t, x_1..x_N".into(),
        });
    }
    let dim = headers.len() - 2;
    // Group rows by individual, keeping first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut grouped: std::collections::HashMap<String, Vec<(i64, Vec<f64>)>> =
        std::collections::HashMap::new();
    for record in r.records() {
        let record = record?;
        if record.len() != dim + 2 {
            return Err(McscError::MalformedFile {
                path: path.display().to_string(),
                reason: format!("row has {} fields, expected {}", record.len(), dim + 2),
            });
        }
        let id = record[0].to_string();
        let t = parse_i64(&record[1], path)?;
        let mut p = Vec::with_capacity(dim);
        for d in 0..dim {
            p.push(parse_f64(&record[d + 2], path)?);
        }
        if !grouped.contains_key(&id) {
            order.push(id.clone());
        }
        grouped.entry(id).or_default().push((t, p));
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = grouped.remove(&id).expect("id collected above");
        rows.sort_by_key(|(t, _)| *t);
        let (times, points) = rows.into_iter().unzip();
        out.push(Trajectory {
            individual_id: id,
            times,
            points,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Control plans
// ---------------------------------------------------------------------------

/// Rows: from_state, to_state, original_prob, controlled_prob,
/// cumulative_suppression.
pub fn write_control_plan_csv(
    path: impl AsRef<Path>,
    plan: &ControlPlan,
    a: &TransitionMatrix,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "from_state",
        "to_state",
        "original_prob",
        "controlled_prob",
        "cumulative_suppression",
    ])?;
    for iv in &plan.interventions {
        let original = a.prob(iv.from, iv.to);
        let controlled = original + plan.a_prime[[iv.to - 1, iv.from - 1]];
        w.write_record([
            iv.from.to_string(),
            iv.to.to_string(),
            fmt(original),
            fmt(controlled),
            fmt(iv.cumulative_suppression),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_control_plan_interventions_csv(path: impl AsRef<Path>) -> Result<Vec<Intervention>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        if record.len() != 5 {
            return Err(McscError::MalformedFile {
                path: path.display().to_string(),
                reason: format!("row has {} fields, expected 5", record.len()),
            });
        }
        out.push(Intervention {
            from: parse_usize(&record[0], path)?,
            to: parse_usize(&record[1], path)?,
            cumulative_suppression: parse_f64(&record[4], path)?,
        });
    }
    Ok(out)
}

/// JSON summary of a control run:
/// `{lambda1, lambda2, H, horizon, iterations, G_trace, interventions}`.
pub fn control_summary_json(plan: &ControlPlan, config: &ControlConfig) -> serde_json::Value {
    let horizon = match &config.horizon {
        Horizon::Stationary => json!("stationary"),
        Horizon::Finite { tau, .. } => json!({"finite": {"tau": tau}}),
    };
    json!({
        "lambda1": config.lambda1,
        "lambda2": config.lambda2,
        "H": config.suppression_levels,
        "horizon": horizon,
        "iterations": plan.objective_trace.len() - 1,
        "G_trace": plan.objective_trace,
        "interventions": plan.interventions.iter().map(|iv| json!({
            "from": iv.from,
            "to": iv.to,
            "cumulative_suppression": iv.cumulative_suppression,
        })).collect::<Vec<_>>(),
    })
}
