//! Motion feature matrices with the extra-dimensional status signature.
//!
//! Each point contributes one column stacking `(x, y[, s])` for frames
//! `1..=F`. Missing frames are padded from the nearest observation of the
//! same point; the signature `s` records why the entry was missing.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::format_value;

pub use crate::io::load_feature_csv;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub point_id: u64,
    /// Frame (1-based) to image coordinates.
    pub observations: BTreeMap<usize, (f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub num_frames: usize,
    pub points: Vec<TrajectoryPoint>,
}

impl TrajectorySet {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 {
            return Err(Error::InvalidSpec("trajectory set has no frames".into()));
        }
        for p in &self.points {
            let (Some((&first, _)), Some((&last, _))) = (
                p.observations.first_key_value(),
                p.observations.last_key_value(),
            ) else {
                return Err(Error::EmptyTrajectory(p.point_id));
            };
            if first < 1 || last > self.num_frames {
                return Err(Error::InvalidSpec(format!(
                    "point {}: frames must lie in 1..={}",
                    p.point_id, self.num_frames
                )));
            }
            if p.observations
                .values()
                .any(|(x, y)| !(x.is_finite() && y.is_finite()))
            {
                return Err(Error::InvalidSpec(format!(
                    "point {}: non-finite coordinate",
                    p.point_id
                )));
            }
        }
        Ok(())
    }
}

/// Signature values per status. Defaults are 1 (observed), 3 (missing
/// before the first observation) and 5 (missing after the last one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub observed: f64,
    pub new_point: f64,
    pub dead_point: f64,
}

impl Default for Signature {
    fn default() -> Self {
        Self {
            observed: 1.0,
            new_point: 3.0,
            dead_point: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameStatus {
    Observed,
    /// Before the point's first observation.
    NotYetAppeared,
    /// After the point's last observation.
    Dead,
    /// Between two observations; signed like a dead point.
    InteriorGap,
}

/// Status of `frame` and the frame whose coordinates fill it.
pub fn classify_frame(obs: &BTreeMap<usize, (f64, f64)>, frame: usize) -> (FrameStatus, usize) {
    if obs.contains_key(&frame) {
        return (FrameStatus::Observed, frame);
    }
    let before = obs.range(..frame).next_back().map(|(&f, _)| f);
    let after = obs.range(frame..).next().map(|(&f, _)| f);
    match (before, after) {
        (None, Some(a)) => (FrameStatus::NotYetAppeared, a),
        (Some(b), None) => (FrameStatus::Dead, b),
        (Some(b), Some(a)) => {
            let src = if frame - b <= a - frame { b } else { a };
            (FrameStatus::InteriorGap, src)
        }
        (None, None) => unreachable!("validated trajectories have observations"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionMatrix {
    /// `(2F or 3F) x N`.
    pub data: DMatrix<f64>,
    pub with_signature: bool,
    /// Number of (point, frame) entries filled across an interior gap.
    pub interior_gap_entries: usize,
}

impl MotionMatrix {
    pub fn rows_per_frame(&self) -> usize {
        if self.with_signature {
            3
        } else {
            2
        }
    }
}

pub fn build_motion_matrix(traj: &TrajectorySet, with_signature: bool) -> Result<MotionMatrix> {
    build_motion_matrix_with(traj, with_signature, &Signature::default())
}

pub fn build_motion_matrix_with(
    traj: &TrajectorySet,
    with_signature: bool,
    signature: &Signature,
) -> Result<MotionMatrix> {
    traj.validate()?;
    let per = if with_signature { 3 } else { 2 };
    let f_count = traj.num_frames;
    let mut data = DMatrix::zeros(per * f_count, traj.points.len());
    let mut gaps = 0;
    for (j, p) in traj.points.iter().enumerate() {
        for f in 1..=f_count {
            let (status, src) = classify_frame(&p.observations, f);
            let (x, y) = p.observations[&src];
            let row = per * (f - 1);
            data[(row, j)] = x;
            data[(row + 1, j)] = y;
            if status == FrameStatus::InteriorGap {
                gaps += 1;
            }
            if with_signature {
                data[(row + 2, j)] = match status {
                    FrameStatus::Observed => signature.observed,
                    FrameStatus::NotYetAppeared => signature.new_point,
                    FrameStatus::Dead | FrameStatus::InteriorGap => signature.dead_point,
                };
            }
        }
    }
    Ok(MotionMatrix {
        data,
        with_signature,
        interior_gap_entries: gaps,
    })
}

/// Drops every third row of a signature-augmented matrix.
pub fn strip_signature(m: &MotionMatrix) -> MotionMatrix {
    if !m.with_signature {
        return m.clone();
    }
    let frames = m.data.nrows() / 3;
    let data = DMatrix::from_fn(2 * frames, m.data.ncols(), |r, c| {
        m.data[(3 * (r / 2) + r % 2, c)]
    });
    MotionMatrix {
        data,
        with_signature: false,
        interior_gap_entries: m.interior_gap_entries,
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct ObservationRecord {
    point_id: u64,
    frame: usize,
    x: f64,
    y: f64,
}

/// Parses `point_id,frame,x,y` CSV. Points are ordered by id; the frame count
/// is `num_frames` if given, else the largest frame seen.
pub fn parse_trajectory_csv(
    text: &str,
    path: &Path,
    num_frames: Option<usize>,
) -> Result<TrajectorySet> {
    let perr = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    if text.trim().is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| perr(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["point_id", "frame", "x", "y"] {
        return Err(perr("header must be 'point_id,frame,x,y'".into()));
    }
    let mut points: BTreeMap<u64, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
    let mut max_frame = 0;
    for (line, rec) in reader.deserialize::<ObservationRecord>().enumerate() {
        let rec = rec.map_err(|e| perr(format!("record {}: {e}", line + 1)))?;
        if rec.frame == 0 {
            return Err(perr(format!("record {}: frames are 1-based", line + 1)));
        }
        if !(rec.x.is_finite() && rec.y.is_finite()) {
            return Err(perr(format!("record {}: non-finite coordinate", line + 1)));
        }
        max_frame = max_frame.max(rec.frame);
        if points
            .entry(rec.point_id)
            .or_default()
            .insert(rec.frame, (rec.x, rec.y))
            .is_some()
        {
            return Err(perr(format!(
                "point {} observed twice in frame {}",
                rec.point_id, rec.frame
            )));
        }
    }
    let num_frames = num_frames.unwrap_or(max_frame);
    let set = TrajectorySet {
        num_frames,
        points: points
            .into_iter()
            .map(|(point_id, observations)| TrajectoryPoint {
                point_id,
                observations,
            })
            .collect(),
    };
    set.validate()?;
    Ok(set)
}

pub fn read_trajectory_csv(path: &Path, num_frames: Option<usize>) -> Result<TrajectorySet> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trajectory_csv(&text, path, num_frames)
}

pub fn trajectory_to_csv(traj: &TrajectorySet) -> String {
    let mut out = String::from("point_id,frame,x,y\n");
    for p in &traj.points {
        for (f, (x, y)) in &p.observations {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.point_id,
                f,
                format_value(*x),
                format_value(*y)
            ));
        }
    }
    out
}

pub fn write_trajectory_csv(path: &Path, traj: &TrajectorySet) -> Result<()> {
    fs::write(path, trajectory_to_csv(traj)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(id: u64, obs: &[(usize, f64, f64)]) -> TrajectoryPoint {
        TrajectoryPoint {
            point_id: id,
            observations: obs.iter().map(|&(f, x, y)| (f, (x, y))).collect(),
        }
    }

    #[test]
    fn full_trajectories_have_unit_signature() {
        let traj = TrajectorySet {
            num_frames: 4,
            points: (0..3)
                .map(|i| {
                    point(
                        i,
                        &[
                            (1, 1.0, 2.0),
                            (2, 3.0, 4.0),
                            (3, 5.0, 6.0),
                            (4, 7.0, i as f64),
                        ],
                    )
                })
                .collect(),
        };
        let m = build_motion_matrix(&traj, true).unwrap();
        assert_eq!(m.data.nrows(), 12);
        for f in 0..4 {
            assert!(m.data.row(3 * f + 2).iter().all(|&s| s == 1.0));
        }
    }

    #[test]
    fn single_observation_column() {
        let traj = TrajectorySet {
            num_frames: 3,
            points: vec![point(0, &[(2, 7.0, 9.0)])],
        };
        let m = build_motion_matrix(&traj, true).unwrap();
        let col: Vec<f64> = m.data.column(0).iter().copied().collect();
        assert_eq!(col, vec![7.0, 9.0, 3.0, 7.0, 9.0, 1.0, 7.0, 9.0, 5.0]);
        let plain = build_motion_matrix(&traj, false).unwrap();
        assert_eq!(
            plain.data.column(0).as_slice(),
            &[7.0, 9.0, 7.0, 9.0, 7.0, 9.0]
        );
    }

    #[test]
    fn interior_gap_matches_per_frame_oracle() {
        let traj = TrajectorySet {
            num_frames: 4,
            points: vec![point(0, &[(1, 1.0, 2.0), (4, 10.0, 20.0)])],
        };
        let m = build_motion_matrix(&traj, true).unwrap();
        let observed = [(1usize, (1.0, 2.0)), (4, (10.0, 20.0))];
        for f in 1..=4usize {
            // nearest observed frame, earlier wins ties
            let (src, coords) = observed
                .iter()
                .min_by_key(|(g, _)| (f.abs_diff(*g), *g))
                .copied()
                .unwrap();
            let s = if src == f { 1.0 } else { 5.0 };
            let r = 3 * (f - 1);
            assert_eq!(m.data[(r, 0)], coords.0);
            assert_eq!(m.data[(r + 1, 0)], coords.1);
            assert_eq!(m.data[(r + 2, 0)], s);
        }
        assert_eq!(m.interior_gap_entries, 2);
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        let traj = TrajectorySet {
            num_frames: 3,
            points: vec![point(0, &[(1, 1.0, 1.0)]), point(7, &[])],
        };
        assert!(matches!(
            build_motion_matrix(&traj, true),
            Err(Error::EmptyTrajectory(7))
        ));
    }

    #[test]
    fn stripping_signature_gives_plain_matrix() {
        let traj = TrajectorySet {
            num_frames: 5,
            points: vec![
                point(0, &[(2, 1.0, 2.0), (3, 2.0, 3.0)]),
                point(1, &[(1, 4.0, 4.5), (5, 0.5, 0.25)]),
                point(
                    2,
                    &[
                        (1, 1.0, 1.0),
                        (2, 1.0, 1.0),
                        (3, 1.0, 1.0),
                        (4, 1.0, 1.0),
                        (5, 1.0, 1.0),
                    ],
                ),
            ],
        };
        let with = build_motion_matrix(&traj, true).unwrap();
        let without = build_motion_matrix(&traj, false).unwrap();
        assert_eq!(strip_signature(&with).data, without.data);
    }

    #[test]
    fn signature_separates_equal_padded_histories() {
        // Same padded (x, y) history, different observation status.
        let traj = TrajectorySet {
            num_frames: 3,
            points: vec![
                point(0, &[(1, 2.0, 2.0), (2, 2.0, 2.0), (3, 2.0, 2.0)]),
                point(1, &[(2, 2.0, 2.0)]),
            ],
        };
        let with = build_motion_matrix(&traj, true).unwrap();
        let without = build_motion_matrix(&traj, false).unwrap();
        assert_eq!(without.data.column(0), without.data.column(1));
        assert_ne!(with.data.column(0), with.data.column(1));
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let traj = TrajectorySet {
            num_frames: 3,
            points: vec![
                point(3, &[(1, 0.5, -1.25), (3, 2.0, 1.0)]),
                point(9, &[(2, 7.0, 9.0)]),
            ],
        };
        let text = trajectory_to_csv(&traj);
        let back = parse_trajectory_csv(&text, Path::new("t"), None).unwrap();
        assert_eq!(back, traj);
        assert!(
            parse_trajectory_csv("point_id,frame,x,y\n1,0,1,1\n", Path::new("t"), None).is_err()
        );
        assert!(parse_trajectory_csv("id,f,x,y\n1,1,1,1\n", Path::new("t"), None).is_err());
        assert!(parse_trajectory_csv("point_id,frame,x,y\n1,1,1\n", Path::new("t"), None).is_err());
    }
}
