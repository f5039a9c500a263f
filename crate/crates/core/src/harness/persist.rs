//! Trajectory files: a CSV with header `t,observed,set_id,x_1,...,x_d` and a
//! `<stem>.meta.toml` sidecar holding the seed, the system, the schedule and
//! the table of distinct sets that `set_id` indexes.
//!
//! Floats are written in Rust's shortest round-trip form, so a save/load
//! cycle reproduces every bit. Unobserved rows may leave the state columns
//! empty when the file describes real censored data.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, matrix_to_rows};
use crate::sets::{ObservableSet, SetSchedule};
use crate::simulator::{CensoredTrajectory, CensoredView, SystemSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub horizon: usize,
    pub dim: usize,
    /// Present for simulated data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_star: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<SetSchedule>,
    pub sets: Vec<ObservableSet>,
}

impl TrajectoryMeta {
    pub fn a_star_matrix(&self) -> Result<Option<DMatrix<f64>>> {
        self.a_star.as_deref().map(matrix_from_rows).transpose()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedTrajectory {
    pub meta: TrajectoryMeta,
    pub observed: Vec<bool>,
    pub set_ids: Vec<usize>,
    pub states: Vec<Option<DVector<f64>>>,
}

impl LoadedTrajectory {
    pub fn censored_view(&self) -> CensoredView {
        CensoredView {
            horizon: self.meta.horizon,
            dim: self.meta.dim,
            observations: self
                .states
                .iter()
                .zip(&self.observed)
                .map(|(x, &o)| if o { x.clone() } else { None })
                .collect(),
            sets: self.set_ids.iter().map(|&i| self.meta.sets[i].clone()).collect(),
        }
    }

    /// The full trajectory, if every state was recorded.
    pub fn to_trajectory(&self) -> Option<CensoredTrajectory> {
        let states = self.states.iter().cloned().collect::<Option<Vec<_>>>()?;
        Some(CensoredTrajectory {
            horizon: self.meta.horizon,
            states,
            observed: self.observed.clone(),
            sets: self.set_ids.iter().map(|&i| self.meta.sets[i].clone()).collect(),
            seed: self.meta.seed,
        })
    }
}

/// `run.csv` -> `run.meta.toml`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.toml"))
}

pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Writes the CSV and its sidecar. `schedule` is omitted from the sidecar
/// when it cannot be serialized (user-supplied rules).
pub fn save_trajectory(
    csv_path: &Path,
    traj: &CensoredTrajectory,
    spec: Option<&SystemSpec>,
    schedule: Option<&SetSchedule>,
) -> Result<()> {
    let d = traj.dim();
    let mut table: Vec<ObservableSet> = Vec::new();
    let mut ids = Vec::with_capacity(traj.sets.len());
    for set in &traj.sets {
        // Consecutive repeats are the common case for static schedules.
        let id = match table.iter().rposition(|s| s == set) {
            Some(i) => i,
            None => {
                table.push(set.clone());
                table.len() - 1
            }
        };
        ids.push(id);
    }

    let mut w = csv::Writer::from_path(csv_path).map_err(csv_error(csv_path))?;
    let mut header = vec!["t".to_string(), "observed".into(), "set_id".into()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    w.write_record(&header).map_err(csv_error(csv_path))?;
    for (k, x) in traj.states.iter().enumerate() {
        let mut row = vec![
            (k + 1).to_string(),
            u8::from(traj.observed[k]).to_string(),
            ids[k].to_string(),
        ];
        row.extend(x.iter().map(|v| format_float(*v)));
        w.write_record(&row).map_err(csv_error(csv_path))?;
    }
    w.flush()?;

    let meta = TrajectoryMeta {
        seed: traj.seed,
        horizon: traj.horizon,
        dim: d,
        a_star: spec.map(|s| matrix_to_rows(&s.a_star)),
        x0: spec.map(|s| s.x0.iter().cloned().collect()),
        schedule: schedule.filter(|s| !matches!(s, SetSchedule::Custom { .. })).cloned(),
        sets: table,
    };
    let text = toml::to_string(&meta).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    fs::write(meta_path(csv_path), text)?;
    Ok(())
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| {
        let msg = match e.position() {
            Some(pos) => format!("line {}: {e}", pos.line()),
            None => e.to_string(),
        };
        Error::parse(path, msg)
    }
}

pub fn load_meta(path: &Path) -> Result<TrajectoryMeta> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn load_trajectory(csv_path: &Path) -> Result<LoadedTrajectory> {
    let meta = load_meta(&meta_path(csv_path))?;
    let d = meta.dim;
    let rows_expected = meta.horizon + 1;
    let mut r = csv::Reader::from_path(csv_path).map_err(csv_error(csv_path))?;
    let header = r.headers().map_err(csv_error(csv_path))?.clone();
    let mut expected = vec!["t".to_string(), "observed".into(), "set_id".into()];
    expected.extend((1..=d).map(|i| format!("x_{i}")));
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::parse(
            csv_path,
            format!("header must be {}", expected.join(",")),
        ));
    }

    let mut observed = Vec::with_capacity(rows_expected);
    let mut set_ids = Vec::with_capacity(rows_expected);
    let mut states = Vec::with_capacity(rows_expected);
    for (k, rec) in r.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::parse(csv_path, format!("row {row}: {e}")))?;
        let bad = |what: String| Error::parse(csv_path, format!("row {row}: {what}"));
        let t: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("invalid t {:?}", &rec[0])))?;
        if t != row {
            return Err(bad(format!("expected t = {row}, found {t}")));
        }
        let obs = match rec[1].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(bad(format!("invalid observed flag {other:?}"))),
        };
        let set_id: usize = rec[2]
            .trim()
            .parse()
            .map_err(|_| bad(format!("invalid set_id {:?}", &rec[2])))?;
        if set_id >= meta.sets.len() {
            return Err(bad(format!(
                "set_id {set_id} out of range (table has {})",
                meta.sets.len()
            )));
        }
        let fields: Vec<&str> = rec.iter().skip(3).map(str::trim).collect();
        let state = if fields.iter().all(|f| f.is_empty()) {
            if obs {
                return Err(bad("observed row has no state".into()));
            }
            None
        } else {
            let mut x = Vec::with_capacity(d);
            for (i, f) in fields.iter().enumerate() {
                let v: f64 = f
                    .parse()
                    .map_err(|_| bad(format!("invalid x_{} {f:?}", i + 1)))?;
                x.push(v);
            }
            Some(DVector::from_vec(x))
        };
        observed.push(obs);
        set_ids.push(set_id);
        states.push(state);
    }
    if states.len() != rows_expected {
        return Err(Error::parse(
            csv_path,
            format!("expected {rows_expected} rows, found {}", states.len()),
        ));
    }
    Ok(LoadedTrajectory {
        meta,
        observed,
        set_ids,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::{make_chasing_schedule, make_static_schedule};
    use crate::simulator::simulate;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.7, 0.1, -0.3, 0.5]);
        let spec = SystemSpec::new(a).unwrap();
        for (name, sched) in [
            ("chase", make_chasing_schedule(vec![-0.5, 0.2]).unwrap()),
            (
                "box",
                make_static_schedule(
                    ObservableSet::axis_box(vec![-1.0, f64::NEG_INFINITY], vec![1.0, 2.0]).unwrap(),
                ),
            ),
        ] {
            let traj = simulate(&spec, &sched, 60, 4).unwrap();
            let path = dir.path().join(format!("{name}.csv"));
            save_trajectory(&path, &traj, Some(&spec), Some(&sched)).unwrap();
            let loaded = load_trajectory(&path).unwrap();
            assert_eq!(loaded.to_trajectory().unwrap(), traj);
            assert_eq!(loaded.censored_view(), traj.censored_view());
            assert_eq!(loaded.meta.a_star_matrix().unwrap().unwrap(), spec.a_star);
            assert_eq!(loaded.meta.schedule.as_ref(), Some(&sched));
        }
    }

    #[test]
    fn static_schedule_stores_one_set() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SystemSpec::new(DMatrix::from_element(1, 1, 0.5)).unwrap();
        let sched = make_static_schedule(ObservableSet::full_space(1).unwrap());
        let traj = simulate(&spec, &sched, 100, 1).unwrap();
        let path = dir.path().join("t.csv");
        save_trajectory(&path, &traj, Some(&spec), Some(&sched)).unwrap();
        let loaded = load_trajectory(&path).unwrap();
        assert_eq!(loaded.meta.sets.len(), 1);
        assert_eq!(loaded.states.len(), 101);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,observed,set_id,x_1\n"));
    }

    #[test]
    fn float_format_round_trips_extremes() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e300, f64::MIN_POSITIVE, 5e-324, f64::INFINITY] {
            assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn corrupted_row_reports_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SystemSpec::new(DMatrix::from_element(1, 1, 0.5)).unwrap();
        let sched = make_static_schedule(ObservableSet::full_space(1).unwrap());
        let traj = simulate(&spec, &sched, 10, 1).unwrap();
        let path = dir.path().join("t.csv");
        save_trajectory(&path, &traj, Some(&spec), Some(&sched)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[5] = "5,1,0,not-a-number".into();
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        let err = load_trajectory(&path).unwrap_err().to_string();
        assert!(err.contains("row 5"), "{err}");
    }

    #[test]
    fn unobserved_rows_may_omit_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("real.csv");
        fs::write(&path, "t,observed,set_id,x_1\n1,1,0,0.5\n2,0,0,\n3,1,0,0.25\n").unwrap();
        let meta = TrajectoryMeta {
            seed: 0,
            horizon: 2,
            dim: 1,
            a_star: None,
            x0: None,
            schedule: None,
            sets: vec![ObservableSet::half_space(vec![1.0], 0.0).unwrap()],
        };
        fs::write(meta_path(&path), toml::to_string(&meta).unwrap()).unwrap();
        let loaded = load_trajectory(&path).unwrap();
        assert!(loaded.to_trajectory().is_none());
        let view = loaded.censored_view();
        assert_eq!(view.observations[1], None);
        assert_eq!(view.observations[2].as_ref().unwrap()[0], 0.25);
    }
}
