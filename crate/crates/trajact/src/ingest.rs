//! CSV trajectories in, tracklets out.
//!
//! The canonical header is `time_s,agent_id,agent_class,x_m,y_m,action`
//! with optional `vx_ms,vy_ms`. [`SchemaMap`] renames and rescales other
//! layouts onto it.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajact_core::data::{State, Tracklet, Trajectory};
use trajact_core::preprocess::trajectory_to_tracklets;
use trajact_core::vocab::{ActionClass, AgentClass};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Column names and unit factors of a source file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaMap {
    pub time: String,
    pub agent_id: String,
    pub agent_class: String,
    pub x: String,
    pub y: String,
    pub action: String,
    pub vx: String,
    pub vy: String,
    /// Optional column identifying the recording; the same agent in two
    /// recordings yields two trajectories.
    pub recording: Option<String>,
    /// Multiplies positions and velocities (0.001 for millimetres).
    pub position_scale: f64,
    /// Multiplies timestamps (0.001 for milliseconds).
    pub time_scale: f64,
    pub delimiter: char,
    /// Source label → vocabulary label, applied before lookup.
    pub aliases: BTreeMap<String, String>,
}

impl Default for SchemaMap {
    fn default() -> Self {
        Self {
            time: "time_s".into(),
            agent_id: "agent_id".into(),
            agent_class: "agent_class".into(),
            x: "x_m".into(),
            y: "y_m".into(),
            action: "action".into(),
            vx: "vx_ms".into(),
            vy: "vy_ms".into(),
            recording: None,
            position_scale: 1.0,
            time_scale: 1.0,
            delimiter: ',',
            aliases: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParseReport {
    pub rows: usize,
    /// Rows with unparsable or non-finite time or coordinates.
    pub dropped_invalid: usize,
    /// Rows whose action or agent class is not a known label.
    pub dropped_unknown: usize,
    /// Later rows repeating an agent's timestamp.
    pub duplicate_times: usize,
    /// Rows whose agent class differs from the agent's first row.
    pub class_conflicts: usize,
    pub unknown_labels: BTreeMap<String, usize>,
    /// The input had no header at all.
    pub empty: bool,
}

impl ParseReport {
    pub fn dropped(&self) -> usize {
        self.dropped_invalid + self.dropped_unknown + self.duplicate_times
    }
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub trajectories: Vec<Trajectory>,
    pub report: ParseReport,
}

struct Columns {
    time: usize,
    agent_id: usize,
    agent_class: usize,
    x: usize,
    y: usize,
    action: usize,
    vx: Option<usize>,
    vy: Option<usize>,
    recording: Option<usize>,
}

fn locate(headers: &csv::StringRecord, schema: &SchemaMap) -> Result<Columns, IngestError> {
    let find = |name: &str| -> Result<Option<usize>, IngestError> {
        let mut hits = headers.iter().enumerate().filter(|(_, h)| h.trim() == name);
        let first = hits.next().map(|(i, _)| i);
        if hits.next().is_some() {
            return Err(IngestError::DuplicateColumn(name.into()));
        }
        Ok(first)
    };
    let need = |name: &str| find(name)?.ok_or_else(|| IngestError::MissingColumn(name.into()));
    Ok(Columns {
        time: need(&schema.time)?,
        agent_id: need(&schema.agent_id)?,
        agent_class: need(&schema.agent_class)?,
        x: need(&schema.x)?,
        y: need(&schema.y)?,
        action: need(&schema.action)?,
        vx: find(&schema.vx)?,
        vy: find(&schema.vy)?,
        recording: match &schema.recording {
            Some(r) => Some(need(r)?),
            None => None,
        },
    })
}

fn number(field: Option<&str>) -> Option<f64> {
    field?.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

struct Row {
    state: State,
    class: AgentClass,
}

/// Reads a CSV stream into time-sorted trajectories, one per agent and
/// recording. Rows with bad numbers or unknown labels are dropped and
/// counted in the report.
pub fn parse_csv<R: Read>(input: R, schema: &SchemaMap) -> Result<Parsed, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut report = ParseReport::default();
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        report.empty = true;
        return Ok(Parsed { trajectories: Vec::new(), report });
    }
    let cols = locate(&headers, schema)?;
    let label = |raw: &str| -> String { schema.aliases.get(raw).cloned().unwrap_or_else(|| raw.to_string()) };

    let mut groups: BTreeMap<(String, String), Vec<Row>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        report.rows += 1;
        let (Some(t), Some(x), Some(y)) =
            (number(record.get(cols.time)), number(record.get(cols.x)), number(record.get(cols.y)))
        else {
            report.dropped_invalid += 1;
            continue;
        };
        let velocity = |c: Option<usize>| c.map_or(Some(0.0), |i| number(record.get(i)));
        let (Some(vx), Some(vy)) = (velocity(cols.vx), velocity(cols.vy)) else {
            report.dropped_invalid += 1;
            continue;
        };
        let class_raw = record.get(cols.agent_class).unwrap_or_default();
        let action_raw = record.get(cols.action).unwrap_or_default();
        let class = label(class_raw).parse::<AgentClass>();
        let action = label(action_raw).parse::<ActionClass>();
        if class.is_err() {
            *report.unknown_labels.entry(class_raw.to_string()).or_default() += 1;
        }
        if action.is_err() {
            *report.unknown_labels.entry(action_raw.to_string()).or_default() += 1;
        }
        let (Ok(class), Ok(action)) = (class, action) else {
            report.dropped_unknown += 1;
            continue;
        };
        let ps = schema.position_scale;
        let state = State { t: t * schema.time_scale, x: x * ps, y: y * ps, vx: vx * ps, vy: vy * ps, action };
        let recording = cols.recording.and_then(|i| record.get(i)).unwrap_or_default().to_string();
        let agent = record.get(cols.agent_id).unwrap_or_default().to_string();
        groups.entry((recording, agent)).or_default().push(Row { state, class });
    }

    let mut trajectories = Vec::with_capacity(groups.len());
    for ((recording, agent), mut rows) in groups {
        rows.sort_by(|a, b| a.state.t.total_cmp(&b.state.t));
        let class = rows[0].class;
        let mut states: Vec<State> = Vec::with_capacity(rows.len());
        for row in rows {
            if states.last().is_some_and(|s| s.t == row.state.t) {
                report.duplicate_times += 1;
                continue;
            }
            if row.class != class {
                report.class_conflicts += 1;
            }
            states.push(row.state);
        }
        let id = if recording.is_empty() { agent.clone() } else { format!("{recording}/{agent}") };
        trajectories.push(Trajectory { id, agent_id: agent, agent_class: class, states, scenario_tag: recording });
    }
    Ok(Parsed { trajectories, report })
}

/// Writes trajectories in the canonical schema. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(output: W, trajectories: &[Trajectory], with_velocities: bool) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    let mut header = vec!["time_s", "agent_id", "agent_class", "x_m", "y_m", "action"];
    if with_velocities {
        header.extend(["vx_ms", "vy_ms"]);
    }
    w.write_record(&header)?;
    for traj in trajectories {
        for s in &traj.states {
            let mut row = vec![
                s.t.to_string(),
                traj.agent_id.clone(),
                traj.agent_class.name().to_string(),
                s.x.to_string(),
                s.y.to_string(),
                s.action.name().to_string(),
            ];
            if with_velocities {
                row.extend([s.vx.to_string(), s.vy.to_string()]);
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConvertReport {
    pub trajectories: usize,
    /// Trajectories with fewer than two states, which cannot be resampled.
    pub skipped_short: usize,
    pub tracklets: usize,
}

/// Resamples, derives velocities and segments every trajectory at step `dt`.
pub fn to_tracklets(
    trajectories: &[Trajectory],
    dt: f64,
) -> Result<(Vec<Tracklet>, ConvertReport), trajact_core::Error> {
    let mut report = ConvertReport { trajectories: trajectories.len(), ..Default::default() };
    let mut out = Vec::new();
    for traj in trajectories {
        if traj.len() < 2 {
            report.skipped_short += 1;
            continue;
        }
        out.extend(trajectory_to_tracklets(traj, dt)?);
    }
    report.tracklets = out.len();
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "time_s,agent_id,agent_class,x_m,y_m,action\n";

    fn parse(text: &str) -> Parsed {
        parse_csv(text.as_bytes(), &SchemaMap::default()).unwrap()
    }

    #[test]
    fn three_rows_one_agent() {
        let p = parse(&format!(
            "{HEADER}0,a,Carrier-Box,0,0,PickBox\n0.4,a,Carrier-Box,0,0,PickBox\n0.8,a,Carrier-Box,0.4,0,WalkBox\n"
        ));
        assert_eq!(p.trajectories.len(), 1);
        let t = &p.trajectories[0];
        assert_eq!(t.len(), 3);
        assert_eq!(t.agent_class, AgentClass::CarrierBox);
        assert_eq!(t.states[2].action, ActionClass::WalkBox);
    }

    #[test]
    fn missing_action_column() {
        let err = parse_csv("time_s,agent_id,agent_class,x_m,y_m\n0,a,VisitorsAlone,0,0\n".as_bytes(), &SchemaMap::default())
            .unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(c) if c == "action"));
    }

    #[test]
    fn out_of_order_rows_are_sorted_stably() {
        let p = parse(&format!("{HEADER}0.8,a,VisitorsAlone,2,0,Walk\n0,a,VisitorsAlone,0,0,Walk\n0.4,a,VisitorsAlone,1,0,Walk\n"));
        let xs: Vec<f64> = p.trajectories[0].states.iter().map(|s| s.x).collect();
        assert_eq!(xs, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn bad_rows_are_counted() {
        let p = parse(&format!(
            "{HEADER}0,a,VisitorsAlone,0,0,Walk\n0.4,a,VisitorsAlone,NaN,0,Walk\n0.8,a,VisitorsAlone,x,0,Walk\n\
             1.2,a,VisitorsAlone,1,0,Dance\n1.2,b,Robot,1,0,Walk\n0,a,VisitorsAlone,5,5,Walk\n"
        ));
        let r = &p.report;
        assert_eq!(r.rows, 6);
        assert_eq!(r.dropped_invalid, 2);
        assert_eq!(r.dropped_unknown, 2);
        assert_eq!(r.duplicate_times, 1);
        assert_eq!(r.unknown_labels.get("Dance"), Some(&1));
        assert_eq!(r.unknown_labels.get("Robot"), Some(&1));
        assert_eq!(p.trajectories.len(), 1);
        assert_eq!(p.trajectories[0].states[0].x, 0.0);
    }

    #[test]
    fn empty_input_is_not_an_error() {
        let p = parse("");
        assert!(p.report.empty);
        assert!(p.trajectories.is_empty());
        assert!(!parse(HEADER).report.empty);
    }

    #[test]
    fn schema_map_renames_and_rescales() {
        let schema = SchemaMap {
            time: "Time".into(),
            agent_id: "ID".into(),
            agent_class: "Role".into(),
            x: "X".into(),
            y: "Y".into(),
            action: "Label".into(),
            recording: Some("File".into()),
            position_scale: 0.001,
            time_scale: 0.001,
            delimiter: ';',
            aliases: [("Carrier".to_string(), "CarrierLargeObject".to_string())].into(),
            ..SchemaMap::default()
        };
        let text = "File;Time;ID;Role;X;Y;Label\nr1;0;7;Carrier;1000;-500;WalkLO\nr1;400;7;Carrier;1500;-500;WalkLO\nr2;0;7;Carrier;0;0;Walk\n";
        let p = parse_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(p.trajectories.len(), 2);
        let t = &p.trajectories[0];
        assert_eq!(t.id, "r1/7");
        assert_eq!(t.scenario_tag, "r1");
        assert_eq!(t.agent_class, AgentClass::CarrierLargeObject);
        assert_eq!((t.states[1].t, t.states[1].x, t.states[1].y), (0.4, 1.5, -0.5));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let traj = Trajectory {
            id: "q".into(),
            agent_id: "q".into(),
            agent_class: AgentClass::VisitorsGroup,
            states: (0..5)
                .map(|k| State {
                    t: k as f64 * 0.4,
                    x: 0.1 * k as f64 + 1.0 / 3.0,
                    y: -2.0f64.sqrt() * k as f64,
                    vx: 0.7,
                    vy: -1e-17,
                    action: ActionClass::ObserveCardDraw,
                })
                .collect(),
            scenario_tag: String::new(),
        };
        for with_v in [true, false] {
            let mut buf = Vec::new();
            write_csv(&mut buf, std::slice::from_ref(&traj), with_v).unwrap();
            let back = parse_csv(buf.as_slice(), &SchemaMap::default()).unwrap().trajectories.remove(0);
            for (a, b) in traj.states.iter().zip(&back.states) {
                assert_eq!((a.t, a.x, a.y, a.action), (b.t, b.x, b.y, b.action));
                if with_v {
                    assert_eq!((a.vx, a.vy), (b.vx, b.vy));
                }
            }
        }
    }

    #[test]
    fn convert_counts() {
        let p = parse(&format!("{HEADER}0,solo,VisitorsAlone,0,0,Walk\n"));
        let (t, r) = to_tracklets(&p.trajectories, 0.4).unwrap();
        assert!(t.is_empty());
        assert_eq!(r.skipped_short, 1);
        let rows: String = (0..45).map(|k| format!("{},a,VisitorsAlone,{},0,Walk\n", k as f64 * 0.4, k)).collect();
        let p = parse(&format!("{HEADER}{rows}"));
        let (t, r) = to_tracklets(&p.trajectories, 0.4).unwrap();
        assert_eq!((t.len(), r.tracklets), (2, 2));
    }
}
