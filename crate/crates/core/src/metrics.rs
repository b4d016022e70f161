//! Hand and object pose-preservation metrics: Procrustes-aligned joint
//! error, 3D PCK area under curve, and the ADD-0.1D object criterion.
//!
//! Distances are in millimeters throughout.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RigidTransform;

pub const NUM_JOINTS: usize = 21;
/// Default PCK threshold range upper bound (mm).
pub const DEFAULT_PCK_MAX_MM: f64 = 50.0;
pub const DEFAULT_PCK_STEPS: usize = 100;
/// ADD threshold as a fraction of the object diameter.
pub const ADD_FRACTION: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("point sets differ in size ({pred} vs {gt})")]
    CountMismatch { pred: usize, gt: usize },
    #[error("expected {expected} joints, got {got}")]
    JointCount { expected: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("no input values")]
    EmptyInput,
    #[error("object has no vertices")]
    EmptyVertices,
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// `p ↦ s·R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub transform: Similarity,
    pub aligned: Vec<Vector3<f64>>,
}

/// Relative size below which an aligned error is indistinguishable from zero.
const ROUNDOFF: f64 = 1e-12;

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Least-squares similarity taking `pred` onto `gt` (Umeyama), reflections excluded.
pub fn procrustes_align(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<Alignment> {
    if pred.len() != gt.len() {
        return Err(MetricsError::CountMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if pred.len() < 3 {
        return Err(MetricsError::DegenerateConfiguration("fewer than 3 points"));
    }
    if pred
        .iter()
        .chain(gt)
        .any(|p| !p.iter().all(|c| c.is_finite()))
    {
        return Err(MetricsError::InvalidValue("non-finite coordinate".into()));
    }
    let n = pred.len() as f64;
    let (mp, mg) = (centroid(pred), centroid(gt));

    let mut cov = Matrix3::zeros();
    let mut gt_scatter = Matrix3::zeros();
    let mut pred_var = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let (dp, dg) = (p - mp, g - mg);
        cov += dg * dp.transpose();
        gt_scatter += dg * dg.transpose();
        pred_var += dp.norm_squared();
    }
    cov /= n;
    pred_var /= n;

    let gt_sv = gt_scatter.singular_values();
    let gt_max = gt_sv.max();
    let mut sorted = [gt_sv[0], gt_sv[1], gt_sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(gt_max > 0.0) || sorted[1] <= 1e-12 * gt_max {
        return Err(MetricsError::DegenerateConfiguration(
            "ground truth has rank < 2",
        ));
    }
    if !(pred_var > 0.0) {
        return Err(MetricsError::DegenerateConfiguration(
            "prediction points coincide",
        ));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = svd.singular_values;
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        // flip the axis of the smallest singular value
        let k = d.imin();
        s[(k, k)] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = (Matrix3::from_diagonal(&d) * s).trace() / pred_var;
    let translation = mg - scale * (rotation * mp);
    let transform = Similarity {
        scale,
        rotation,
        translation,
    };
    Ok(Alignment {
        aligned: pred.iter().map(|p| transform.apply(p)).collect(),
        transform,
    })
}

fn check_joints(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<()> {
    for got in [pred.len(), gt.len()] {
        if got != NUM_JOINTS {
            return Err(MetricsError::JointCount {
                expected: NUM_JOINTS,
                got,
            });
        }
    }
    Ok(())
}

/// Per-joint Euclidean errors after Procrustes alignment. Errors at the
/// round-off level of the ground-truth extent are reported as exactly zero.
pub fn aligned_joint_errors(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<Vec<f64>> {
    check_joints(pred, gt)?;
    let a = procrustes_align(pred, gt)?;
    let mg = centroid(gt);
    let extent = gt.iter().map(|g| (g - mg).norm()).fold(0.0, f64::max);
    let floor = ROUNDOFF * extent;
    Ok(a.aligned
        .iter()
        .zip(gt)
        .map(|(p, g)| (p - g).norm())
        .map(|e| if e <= floor { 0.0 } else { e })
        .collect())
}

/// Mean per-joint position error after Procrustes alignment.
pub fn pa_mpjpe(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    let e = aligned_joint_errors(pred, gt)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PckConfig {
    pub max_mm: f64,
    pub steps: usize,
}

impl Default for PckConfig {
    fn default() -> Self {
        Self {
            max_mm: DEFAULT_PCK_MAX_MM,
            steps: DEFAULT_PCK_STEPS,
        }
    }
}

fn sorted_errors(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(e) = errors.iter().find(|e| !(**e >= 0.0)) {
        return Err(MetricsError::InvalidValue(format!("joint error {e}")));
    }
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `(τ, PCK(τ))` at `steps + 1` uniformly spaced thresholds in `[0, max]`.
pub fn pck_curve(errors: &[f64], cfg: PckConfig) -> Result<Vec<(f64, f64)>> {
    if cfg.steps == 0 || !(cfg.max_mm > 0.0) {
        return Err(MetricsError::InvalidValue(format!("PCK range {cfg:?}")));
    }
    let v = sorted_errors(errors)?;
    let n = v.len() as f64;
    Ok((0..=cfg.steps)
        .map(|k| {
            let tau = cfg.max_mm * k as f64 / cfg.steps as f64;
            let within = v.partition_point(|&e| e <= tau);
            (tau, within as f64 / n)
        })
        .collect())
}

/// Trapezoidal area under the PCK curve, normalized to the threshold range, in percent.
pub fn pck_auc(errors: &[f64], cfg: PckConfig) -> Result<f64> {
    let curve = pck_curve(errors, cfg)?;
    let area: f64 = curve.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1)).sum();
    Ok(100.0 * area / cfg.steps as f64)
}

/// Mean distance between the object's vertices under the two poses.
///
/// Distances are taken through the difference transform `ΔR·v + Δt` and
/// averaged as a running mean, so identical rotations and a pure translation
/// give exactly the translation length.
pub fn add(pred: &RigidTransform, gt: &RigidTransform, vertices: &[Vector3<f64>]) -> Result<f64> {
    if vertices.is_empty() {
        return Err(MetricsError::EmptyVertices);
    }
    let dr = pred.rotation() - gt.rotation();
    let dt = pred.translation() - gt.translation();
    let mut mean = 0.0;
    for (k, v) in vertices.iter().enumerate() {
        let d = (dr * v + dt).norm();
        mean += (d - mean) / (k + 1) as f64;
    }
    Ok(mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AddResult {
    pub add: f64,
    pub pass: bool,
}

/// ADD plus the strict `add < 0.1·diameter` test.
pub fn add_01d(
    pred: &RigidTransform,
    gt: &RigidTransform,
    vertices: &[Vector3<f64>],
    diameter: f64,
) -> Result<AddResult> {
    if !(diameter > 0.0) {
        return Err(MetricsError::InvalidValue(format!("diameter {diameter}")));
    }
    let add = add(pred, gt, vertices)?;
    Ok(AddResult {
        add,
        pass: add < ADD_FRACTION * diameter,
    })
}

/// Exact maximum pairwise vertex distance.
pub fn object_diameter(vertices: &[Vector3<f64>]) -> Result<f64> {
    if vertices.is_empty() {
        return Err(MetricsError::EmptyVertices);
    }
    let best = (0..vertices.len())
        .into_par_iter()
        .map(|i| {
            vertices[i + 1..]
                .iter()
                .map(|w| (vertices[i] - w).norm_squared())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(best.sqrt())
}

/// One evaluation frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub pred_joints: Vec<[f64; 3]>,
    pub gt_joints: Vec<[f64; 3]>,
    #[serde(rename = "pred_R")]
    pub pred_r: [f64; 9],
    pub pred_t: [f64; 3],
    #[serde(rename = "gt_R")]
    pub gt_r: [f64; 9],
    pub gt_t: [f64; 3],
    pub object_id: String,
}

/// Canonical object model used for ADD.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub vertices: Vec<Vector3<f64>>,
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectScore {
    pub frames: usize,
    pub add_01d: f64,
    pub mean_add_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandScore {
    pub auc: f64,
    pub pa_mpjpe_mm: f64,
    pub pck_max_mm: f64,
    pub pck_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: usize,
    pub hand: HandScore,
    pub objects: BTreeMap<String, ObjectScore>,
    /// Mean of the per-object ADD-0.1D percentages.
    pub add_01d_average: f64,
}

fn to_points(v: &[[f64; 3]]) -> Vec<Vector3<f64>> {
    v.iter().map(|p| Vector3::from(*p)).collect()
}

/// Scores a dataset. Hand PCK pools every aligned joint error across frames.
pub fn evaluate(
    frames: &[FrameRecord],
    objects: &BTreeMap<String, ObjectModel>,
    pck: PckConfig,
) -> Result<MetricsReport> {
    if frames.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    struct FrameScore {
        joint_errors: Vec<f64>,
        object: String,
        add: AddResult,
    }
    let scores: Vec<FrameScore> = frames
        .par_iter()
        .map(|fr| {
            let joint_errors =
                aligned_joint_errors(&to_points(&fr.pred_joints), &to_points(&fr.gt_joints))?;
            let model = objects.get(&fr.object_id).ok_or_else(|| {
                MetricsError::InvalidValue(format!("unknown object {:?}", fr.object_id))
            })?;
            let pose = |r: &[f64; 9], t: &[f64; 3]| {
                RigidTransform::from_row_major(r, *t)
                    .map_err(|e| MetricsError::InvalidValue(format!("frame {}: {e}", fr.frame_id)))
            };
            let add = add_01d(
                &pose(&fr.pred_r, &fr.pred_t)?,
                &pose(&fr.gt_r, &fr.gt_t)?,
                &model.vertices,
                model.diameter,
            )?;
            Ok(FrameScore {
                joint_errors,
                object: fr.object_id.clone(),
                add,
            })
        })
        .collect::<Result<_>>()?;

    let all_errors: Vec<f64> = scores
        .iter()
        .flat_map(|s| s.joint_errors.iter().copied())
        .collect();
    let pa = scores
        .iter()
        .map(|s| s.joint_errors.iter().sum::<f64>() / s.joint_errors.len() as f64)
        .sum::<f64>()
        / scores.len() as f64;
    let hand = HandScore {
        auc: pck_auc(&all_errors, pck)?,
        pa_mpjpe_mm: pa,
        pck_max_mm: pck.max_mm,
        pck_steps: pck.steps,
    };

    let mut per_object: BTreeMap<String, (usize, usize, f64)> = BTreeMap::new();
    for s in &scores {
        let e = per_object.entry(s.object.clone()).or_default();
        e.0 += 1;
        e.1 += s.add.pass as usize;
        e.2 += s.add.add;
    }
    let objects: BTreeMap<String, ObjectScore> = per_object
        .into_iter()
        .map(|(id, (n, pass, sum))| {
            (
                id,
                ObjectScore {
                    frames: n,
                    add_01d: 100.0 * pass as f64 / n as f64,
                    mean_add_mm: sum / n as f64,
                },
            )
        })
        .collect();
    let add_01d_average = objects.values().map(|o| o.add_01d).sum::<f64>() / objects.len() as f64;
    Ok(MetricsReport {
        frames: frames.len(),
        hand,
        objects,
        add_01d_average,
    })
}

/// Renders a report as a one-row CSV table: method, hand AUC, PA-MPJPE,
/// one ADD-0.1D column per object, then the average.
pub fn report_table_csv(report: &MetricsReport, method: &str) -> String {
    let mut header = vec!["Method".to_string(), "AUC".into(), "PAJPE".into()];
    header.extend(report.objects.keys().cloned());
    header.push("Aver.".into());
    let mut row = vec![
        method.to_string(),
        format!("{:.1}", report.hand.auc),
        format!("{:.1}", report.hand.pa_mpjpe_mm),
    ];
    row.extend(report.objects.values().map(|o| format!("{:.1}", o.add_01d)));
    row.push(format!("{:.1}", report.add_01d_average));
    let quote = |s: &String| {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.clone()
        }
    };
    let line = |v: &[String]| v.iter().map(quote).collect::<Vec<_>>().join(",");
    format!("{}\n{}\n", line(&header), line(&row))
}
