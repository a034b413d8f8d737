//! Boundary measurement streams and their CSV representation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::liegroup::{exp_se3, log_se3, Pose, Twist, Wrench};

pub const CSV_HEADER: [&str; 20] = [
    "t", "m_x", "m_y", "m_z", "n_x", "n_y", "n_z", "qw", "qx", "qy", "qz", "px", "py", "pz", "w_x", "w_y", "w_z", "v_x",
    "v_y", "v_z",
];

/// Allowed deviation of a stored quaternion from unit norm.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

/// Time series of base wrench, tip pose and tip twist; absent channels are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementStream {
    timestamps: Vec<f64>,
    base_wrench: Option<Vec<Wrench>>,
    tip_pose: Option<Vec<Pose>>,
    tip_twist: Option<Vec<Twist>>,
}

/// One (possibly interpolated) sample of every present channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementSample {
    pub time: f64,
    pub base_wrench: Option<Wrench>,
    pub tip_pose: Option<Pose>,
    pub tip_twist: Option<Twist>,
}

impl MeasurementStream {
    pub fn new(
        timestamps: Vec<f64>,
        base_wrench: Option<Vec<Wrench>>,
        tip_pose: Option<Vec<Pose>>,
        tip_twist: Option<Vec<Twist>>,
    ) -> Result<Self> {
        if timestamps.is_empty() {
            return Err(Error::InvalidArgument("measurement stream is empty".into()));
        }
        if timestamps.iter().any(|t| !t.is_finite()) || timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("timestamps must be finite and strictly increasing".into()));
        }
        let n = timestamps.len();
        let check = |len: Option<usize>, name: &str| match len {
            Some(l) if l != n => Err(Error::InvalidArgument(format!("{name} has {l} samples, expected {n}"))),
            _ => Ok(()),
        };
        check(base_wrench.as_ref().map(Vec::len), "base wrench")?;
        check(tip_pose.as_ref().map(Vec::len), "tip pose")?;
        check(tip_twist.as_ref().map(Vec::len), "tip twist")?;
        if let Some(poses) = &tip_pose {
            for (i, p) in poses.iter().enumerate() {
                Pose::new(p.rotation, p.position)
                    .map_err(|e| Error::InvalidArgument(format!("tip pose sample {i}: {e}")))?;
            }
        }
        Ok(Self {
            timestamps,
            base_wrench,
            tip_pose,
            tip_twist,
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn first_time(&self) -> f64 {
        self.timestamps[0]
    }

    pub fn last_time(&self) -> f64 {
        *self.timestamps.last().expect("non-empty")
    }

    pub fn base_wrench(&self) -> Option<&[Wrench]> {
        self.base_wrench.as_deref()
    }

    pub fn tip_pose(&self) -> Option<&[Pose]> {
        self.tip_pose.as_deref()
    }

    pub fn tip_twist(&self) -> Option<&[Twist]> {
        self.tip_twist.as_deref()
    }

    pub fn has_base_wrench(&self) -> bool {
        self.base_wrench.is_some()
    }

    pub fn has_tip_pose(&self) -> bool {
        self.tip_pose.is_some()
    }

    pub fn has_tip_twist(&self) -> bool {
        self.tip_twist.is_some()
    }

    /// Drops channels, e.g. to emulate a sensor that is not installed.
    pub fn without_channels(mut self, base_wrench: bool, tip_pose: bool, tip_twist: bool) -> Self {
        if base_wrench {
            self.base_wrench = None;
        }
        if tip_pose {
            self.tip_pose = None;
        }
        if tip_twist {
            self.tip_twist = None;
        }
        self
    }

    pub fn sample(&self, index: usize) -> MeasurementSample {
        MeasurementSample {
            time: self.timestamps[index],
            base_wrench: self.base_wrench.as_ref().map(|v| v[index]),
            tip_pose: self.tip_pose.as_ref().map(|v| v[index]),
            tip_twist: self.tip_twist.as_ref().map(|v| v[index]),
        }
    }

    /// Linear interpolation per channel; geodesic for the pose.
    pub fn interpolate(&self, t: f64) -> Result<MeasurementSample> {
        let (first, last) = (self.first_time(), self.last_time());
        let slack = 1e-9 * first.abs().max(last.abs()).max(1.0);
        if !(t >= first - slack && t <= last + slack) {
            return Err(Error::OutOfRange { time: t, first, last });
        }
        let t = t.clamp(first, last);
        let upper = self.timestamps.partition_point(|&x| x < t);
        if upper < self.len() && self.timestamps[upper] == t {
            return Ok(self.sample(upper));
        }
        let (i, j) = (upper - 1, upper);
        let alpha = (t - self.timestamps[i]) / (self.timestamps[j] - self.timestamps[i]);
        let tip_pose = match &self.tip_pose {
            Some(p) => Some(interpolate_pose(&p[i], &p[j], alpha)?),
            None => None,
        };
        Ok(MeasurementSample {
            time: t,
            base_wrench: self.base_wrench.as_ref().map(|v| v[i] * (1.0 - alpha) + v[j] * alpha),
            tip_pose,
            tip_twist: self.tip_twist.as_ref().map(|v| v[i] * (1.0 - alpha) + v[j] * alpha),
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        let mut row: Vec<String> = Vec::with_capacity(20);
        for k in 0..self.len() {
            row.clear();
            row.push(self.timestamps[k].to_string());
            push_cells(&mut row, self.base_wrench.as_ref().map(|v| v[k].0.as_slice().to_vec()), 6);
            let pose = self.tip_pose.as_ref().map(|v| {
                let q = v[k].quaternion();
                let p = v[k].position;
                vec![q[0], q[1], q[2], q[3], p.x, p.y, p.z]
            });
            push_cells(&mut row, pose, 7);
            push_cells(&mut row, self.tip_twist.as_ref().map(|v| v[k].0.as_slice().to_vec()), 6);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if header != CSV_HEADER {
            return Err(Error::Configuration(format!(
                "measurement header must be {}, got {}",
                CSV_HEADER.join(","),
                header.join(",")
            )));
        }
        let mut times = Vec::new();
        let mut rows: Vec<[Option<f64>; 19]> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<Option<f64>> {
                let cell = rec.get(i).unwrap_or("");
                if cell.is_empty() {
                    return Ok(None);
                }
                cell.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Configuration(format!("row {}: cannot parse {cell:?} as a number", line + 1)))
            };
            let t = parse(0)?.ok_or_else(|| Error::Configuration(format!("row {}: missing timestamp", line + 1)))?;
            let mut vals = [None; 19];
            for (c, v) in vals.iter_mut().enumerate() {
                *v = parse(c + 1)?;
            }
            times.push(t);
            rows.push(vals);
        }
        let channel = |range: std::ops::Range<usize>, name: &str| -> Result<Option<Vec<Vec<f64>>>> {
            let present: Vec<bool> = rows.iter().map(|r| r[range.clone()].iter().all(Option::is_some)).collect();
            let absent = rows.iter().all(|r| r[range.clone()].iter().all(Option::is_none));
            if absent {
                return Ok(None);
            }
            if present.iter().any(|p| !p) {
                return Err(Error::Configuration(format!("channel {name} is only partially present")));
            }
            Ok(Some(rows.iter().map(|r| r[range.clone()].iter().map(|v| v.unwrap()).collect()).collect()))
        };
        let base = channel(0..6, "base wrench")?
            .map(|v| v.into_iter().map(|x| Wrench(nalgebra::Vector6::from_column_slice(&x))).collect());
        let twist = channel(13..19, "tip twist")?
            .map(|v| v.into_iter().map(|x| Twist(nalgebra::Vector6::from_column_slice(&x))).collect());
        let pose = match channel(6..13, "tip pose")? {
            Some(v) => Some(
                v.into_iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let norm = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt();
                        if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
                            return Err(Error::Configuration(format!(
                                "row {}: quaternion norm {norm} is not unit within {QUATERNION_NORM_TOLERANCE:e}",
                                i + 1
                            )));
                        }
                        Pose::from_quaternion([x[0], x[1], x[2], x[3]], Vector3::new(x[4], x[5], x[6]))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Self::new(times, base, pose, twist).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Configuration(m),
            other => other,
        })
    }

    pub fn from_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn push_cells(row: &mut Vec<String>, values: Option<Vec<f64>>, width: usize) {
    match values {
        Some(v) => row.extend(v.iter().map(f64::to_string)),
        None => row.extend(std::iter::repeat_n(String::new(), width)),
    }
}

/// `g1 exp(alpha log(g1^-1 g2))`.
pub fn interpolate_pose(g1: &Pose, g2: &Pose, alpha: f64) -> Result<Pose> {
    let rel = log_se3(&(g1.inverse() * *g2))?;
    Ok(g1.compose(&exp_se3(&rel, alpha)))
}
