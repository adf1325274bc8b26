//! Ground-truth articulation flow and articulation projection.
//!
//! Flow is the direction each point moves under an infinitesimal opening
//! displacement of the joint. For revolute joints it is scaled so that the
//! masked point farthest from the axis has unit flow. Projection is the
//! vector from each point to its foot on the axis line. Both are zero off
//! the mask.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::{JointSpec, JointType, Observation};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseFields {
    pub flow: Vec<Vec3>,
    pub projection: Vec<Vec3>,
    pub mask: Vec<bool>,
}

impl DenseFields {
    pub fn zeros(mask: Vec<bool>) -> Self {
        let n = mask.len();
        DenseFields {
            flow: vec![Vec3::zeros(); n],
            projection: vec![Vec3::zeros(); n],
            mask,
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
}

/// `(ωωᵀ − I)(p − v)` for a single point.
pub fn projection_vector(p: &Vec3, joint: &JointSpec) -> Vec3 {
    let d = p - joint.origin;
    joint.axis * joint.axis.dot(&d) - d
}

/// Articulation flow for every point of `obs`. Revolute flow is
/// `ω × (p − v) / max‖ω × (p − v)‖`, which is the opening-direction motion
/// (the negation of `ω × r` with `r` pointing at the axis).
pub fn gt_articulation_flow(obs: &Observation, joint: &JointSpec) -> Result<Vec<Vec3>> {
    let mut flow = vec![Vec3::zeros(); obs.len()];
    match joint.joint_type {
        JointType::Prismatic => {
            for i in obs.masked_indices() {
                flow[i] = joint.axis;
            }
        }
        JointType::Revolute => {
            let mut r_max = 0.0;
            for i in obs.masked_indices() {
                let tangent = joint.axis.cross(&(obs.points[i] - joint.origin));
                let radius = tangent.norm();
                // strict comparison: the lowest index wins ties
                if radius > r_max {
                    r_max = radius;
                }
                flow[i] = tangent;
            }
            if obs.mask_count() > 0 && r_max <= 1e-12 {
                return Err(Error::DegenerateGeometry(
                    "every masked point lies on the revolute axis".into(),
                ));
            }
            if r_max > 0.0 {
                for i in obs.masked_indices() {
                    flow[i] /= r_max;
                }
            }
        }
    }
    Ok(flow)
}

pub fn gt_articulation_projection(obs: &Observation, joint: &JointSpec) -> Vec<Vec3> {
    let mut proj = vec![Vec3::zeros(); obs.len()];
    for i in obs.masked_indices() {
        proj[i] = projection_vector(&obs.points[i], joint);
    }
    proj
}

pub fn gt_fields(obs: &Observation, joint: &JointSpec) -> Result<DenseFields> {
    Ok(DenseFields {
        flow: gt_articulation_flow(obs, joint)?,
        projection: gt_articulation_projection(obs, joint),
        mask: obs.mask.clone(),
    })
}

/// Mean over points of the squared distance between stacked `(f, r)`
/// six-vectors.
pub fn field_error(predicted: &DenseFields, truth: &DenseFields) -> Result<f64> {
    let n = truth.len();
    if predicted.len() != n || predicted.flow.len() != n || truth.flow.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: predicted.len(),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..n)
        .map(|i| {
            (predicted.flow[i] - truth.flow[i]).norm_squared()
                + (predicted.projection[i] - truth.projection[i]).norm_squared()
        })
        .sum();
    Ok(total / n as f64)
}

pub const FIELDS_CSV_HEADER: &str = "idx,x,y,z,fx,fy,fz,rx,ry,rz,mask";

/// Points plus fields as stored in a fields CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldsTable {
    pub points: Vec<Vec3>,
    pub fields: DenseFields,
}

pub fn write_fields_csv<W: Write>(mut out: W, points: &[Vec3], fields: &DenseFields) -> Result<()> {
    if points.len() != fields.len() {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            actual: fields.len(),
        });
    }
    writeln!(out, "{FIELDS_CSV_HEADER}")?;
    for (i, p) in points.iter().enumerate() {
        let f = fields.flow[i];
        let r = fields.projection[i];
        writeln!(
            out,
            "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            p.x,
            p.y,
            p.z,
            f.x,
            f.y,
            f.z,
            r.x,
            r.y,
            r.z,
            u8::from(fields.mask[i])
        )?;
    }
    Ok(())
}

fn format_error(row: usize, message: impl Into<String>) -> Error {
    Error::Format {
        file: "fields csv",
        row,
        message: message.into(),
    }
}

/// Strict reader: exact header, sequential indices, eleven columns per row.
/// Row numbers in errors are 1-based file lines.
pub fn read_fields_csv<R: BufRead>(input: R) -> Result<FieldsTable> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| format_error(1, format!("empty file; expected header `{FIELDS_CSV_HEADER}`")))?;
    if header.trim_end() != FIELDS_CSV_HEADER {
        return Err(format_error(
            1,
            format!("bad header `{}`; expected `{FIELDS_CSV_HEADER}`", header.trim_end()),
        ));
    }
    let mut table = FieldsTable {
        points: Vec::new(),
        fields: DenseFields::zeros(Vec::new()),
    };
    for (k, line) in lines.enumerate() {
        let row = k + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim_end().split(',').collect();
        if cols.len() != 11 {
            return Err(format_error(row, format!("expected 11 columns, found {}", cols.len())));
        }
        let idx: usize = cols[0]
            .parse()
            .map_err(|_| format_error(row, format!("bad index `{}`", cols[0])))?;
        if idx != table.points.len() {
            return Err(format_error(
                row,
                format!("index {idx} out of sequence; expected {}", table.points.len()),
            ));
        }
        let mut v = [0.0; 9];
        for (slot, raw) in v.iter_mut().zip(&cols[1..10]) {
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format_error(row, format!("bad number `{raw}`")))?;
        }
        let mask = match cols[10] {
            "0" => false,
            "1" => true,
            other => return Err(format_error(row, format!("mask must be 0 or 1, got `{other}`"))),
        };
        table.points.push(Vec3::new(v[0], v[1], v[2]));
        table.fields.flow.push(Vec3::new(v[3], v[4], v[5]));
        table.fields.projection.push(Vec3::new(v[6], v[7], v[8]));
        table.fields.mask.push(mask);
    }
    Ok(table)
}
