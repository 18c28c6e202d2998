//! Grasp JSON Lines.
//!
//! One object per line:
//! `{"translation":[x,y,z],"rotation":[w,x,y,z],"width":w,"confidence":c}`.
//! Annotations carry `object_id` and may omit `confidence`.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::avh::GraspAnnotation;
use crate::fas::{Detection, GraspPose, GripperConfig};
use crate::geometry::{rotation_from_quaternion, rotation_to_quaternion};
use crate::scenegen::OracleGrasp;
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspRecord {
    pub translation: [f64; 3],
    pub rotation: [f64; 4],
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_id: Option<usize>,
}

fn unit_quaternion(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

impl GraspRecord {
    pub fn from_pose(pose: &GraspPose, confidence: Option<f32>) -> Self {
        Self {
            translation: pose.translation.into(),
            rotation: unit_quaternion(rotation_to_quaternion(&pose.rotation)),
            width: pose.width,
            confidence,
            object_id: None,
        }
    }

    pub fn pose(&self) -> Result<GraspPose> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::invalid("grasp width must be positive"));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("grasp translation must be finite"));
        }
        Ok(GraspPose {
            translation: Vec3::from(self.translation),
            rotation: rotation_from_quaternion(self.rotation)?,
            width: self.width,
        })
    }
}

impl From<&Detection> for GraspRecord {
    fn from(d: &Detection) -> Self {
        Self::from_pose(&d.pose, Some(d.confidence))
    }
}

impl From<&OracleGrasp> for GraspRecord {
    fn from(g: &OracleGrasp) -> Self {
        let a = &g.annotation;
        let mut r = Self::from_pose(
            &GraspPose {
                translation: a.translation,
                rotation: a.rotation,
                width: a.width,
            },
            None,
        );
        r.object_id = Some(g.object_id);
        r
    }
}

pub fn write_records<W: Write>(mut out: W, records: &[GraspRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses JSON Lines; blank lines are skipped. Errors carry the byte offset
/// of the offending line.
pub fn read_records<R: Read>(input: R) -> Result<Vec<GraspRecord>> {
    let mut reader = BufReader::new(input);
    let mut out = Vec::new();
    let mut offset = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        if !line.trim().is_empty() {
            let rec: GraspRecord = serde_json::from_str(&line)
                .map_err(|e| Error::format(offset, format!("bad grasp record: {e}")))?;
            rec.pose()
                .map_err(|e| Error::format(offset, e.to_string()))?;
            out.push(rec);
        }
        offset += n as u64;
    }
    Ok(out)
}

pub fn save_records(path: impl AsRef<Path>, records: &[GraspRecord]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_records(std::io::BufWriter::new(f), records)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<GraspRecord>> {
    read_records(std::fs::File::open(path)?)
}

/// Detections from records; a missing confidence reads as 1.0.
pub fn records_to_detections(records: &[GraspRecord]) -> Result<Vec<Detection>> {
    records
        .iter()
        .map(|r| {
            Ok(Detection {
                pose: r.pose()?,
                confidence: r.confidence.unwrap_or(1.0),
            })
        })
        .collect()
}

pub fn records_to_annotations(records: &[GraspRecord]) -> Result<Vec<GraspAnnotation>> {
    records
        .iter()
        .map(|r| {
            let p = r.pose()?;
            Ok(GraspAnnotation {
                translation: p.translation,
                rotation: p.rotation,
                width: p.width,
            })
        })
        .collect()
}

/// Wavefront OBJ of the occupied gripper boxes (two fingers and the palm)
/// for each pose, one object group per grasp.
pub fn write_gripper_obj<W: Write>(
    mut out: W,
    poses: &[GraspPose],
    gripper: &GripperConfig,
) -> Result<()> {
    // Quad faces over corner indices i = x | y << 1 | z << 2.
    const FACES: [[usize; 4]; 6] = [
        [0, 2, 6, 4],
        [1, 5, 7, 3],
        [0, 4, 5, 1],
        [2, 3, 7, 6],
        [0, 1, 3, 2],
        [4, 6, 7, 5],
    ];
    let mut base = 1usize;
    for (i, pose) in poses.iter().enumerate() {
        writeln!(out, "o grasp_{i}")?;
        for b in gripper.model(pose.width).occupied {
            for c in 0..8 {
                let s = Vec3::new(
                    if c & 1 == 0 { -1.0 } else { 1.0 },
                    if c & 2 == 0 { -1.0 } else { 1.0 },
                    if c & 4 == 0 { -1.0 } else { 1.0 },
                );
                let p = pose.translation + pose.rotation * (b.center + b.half.component_mul(&s));
                writeln!(out, "v {} {} {}", p.x, p.y, p.z)?;
            }
            for f in FACES {
                writeln!(
                    out,
                    "f {} {} {} {}",
                    base + f[0],
                    base + f[1],
                    base + f[2],
                    base + f[3]
                )?;
            }
            base += 8;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::orientation_from;

    fn sample() -> Detection {
        Detection {
            pose: GraspPose {
                translation: Vec3::new(0.01, -0.02, 0.55),
                rotation: orientation_from(&Vec3::new(0.6, 0.0, 0.8), 1.0).unwrap(),
                width: 0.04,
            },
            confidence: 0.75,
        }
    }

    #[test]
    fn round_trip() {
        let d = sample();
        let mut buf = Vec::new();
        write_records(&mut buf, &[GraspRecord::from(&d)]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.ends_with('\n'));
        assert!(!text.contains("object_id"));
        let back = records_to_detections(&read_records(&buf[..]).unwrap()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].confidence, 0.75);
        assert_eq!(back[0].pose.translation, d.pose.translation);
        assert!((back[0].pose.rotation.matrix() - d.pose.rotation.matrix()).norm() < 1e-12);
    }

    #[test]
    fn quaternion_is_normalized_on_write() {
        let r = GraspRecord::from(&sample());
        let n: f64 = r.rotation.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_line_reports_offset() {
        let good = r#"{"translation":[0,0,1],"rotation":[1,0,0,0],"width":0.02}"#;
        let text = format!("{good}\n\n{{\"translation\":[0,0]}}\n");
        match read_records(text.as_bytes()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, good.len() as u64 + 2),
            other => panic!("{other:?}"),
        }
        let zero_width = r#"{"translation":[0,0,1],"rotation":[1,0,0,0],"width":0}"#;
        assert!(read_records(zero_width.as_bytes()).is_err());
    }

    #[test]
    fn obj_has_three_boxes_per_grasp() {
        let d = sample();
        let mut buf = Vec::new();
        write_gripper_obj(&mut buf, &[d.pose, d.pose], &GripperConfig::default()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 48);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 36);
        let max_index = text
            .lines()
            .filter_map(|l| l.strip_prefix("f "))
            .flat_map(|l| l.split(' ').map(|t| t.parse::<usize>().unwrap()))
            .max();
        assert_eq!(max_index, Some(48));
    }
}
