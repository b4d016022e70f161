//! Independent reference implementations and scene generators shared by the
//! integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Matrix4, Rotation3, SymmetricEigen, UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use topoflow::synth::{scene_pair, DemoScene, HandPose};
use topoflow::RgbaImage;
use topoflow::RigidTransform;

/// Brute-force z-buffer: every pixel tests every face in index order.
/// Returns face ids (-1 for background) and interpolated depths.
pub struct OracleRaster {
    pub width: usize,
    pub height: usize,
    pub face: Vec<i32>,
    pub depth: Vec<f64>,
}

impl OracleRaster {
    pub fn face_at(&self, x: usize, y: usize) -> i32 {
        self.face[y * self.width + x]
    }

    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }
}

fn cross(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// An edge owns pixel centers lying exactly on it when, walking the
/// triangle counter-clockwise in y-down screen space, it is a top edge
/// (horizontal, heading +x) or a left edge (heading −y).
fn owns(from: (f64, f64), to: (f64, f64)) -> bool {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Depth at `(px, py)` on the plane through the three screen points,
/// solved as `p = a + s (b − a) + t (c − a)`.
pub fn plane_depth(tri: [Vector3<f64>; 3], px: f64, py: f64) -> Option<f64> {
    let [a, b, c] = tri;
    let (ux, uy) = (b.x - a.x, b.y - a.y);
    let (vx, vy) = (c.x - a.x, c.y - a.y);
    let det = ux * vy - uy * vx;
    if det.abs() <= 1e-12 {
        return None;
    }
    let (rx, ry) = (px - a.x, py - a.y);
    let s = (rx * vy - ry * vx) / det;
    let t = (ux * ry - uy * rx) / det;
    Some(a.z + s * (b.z - a.z) + t * (c.z - a.z))
}

pub fn oracle_raster(
    coords: &[Vector3<f64>],
    faces: &[[u32; 3]],
    skip: Option<&[bool]>,
    width: usize,
    height: usize,
) -> OracleRaster {
    let mut face = vec![-1i32; width * height];
    let mut depth = vec![f64::INFINITY; width * height];
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            for (fi, f) in faces.iter().enumerate() {
                if skip.is_some_and(|s| s[fi]) {
                    continue;
                }
                let [a, mut b, mut c] = f.map(|i| coords[i as usize]);
                let area = cross(a.x, a.y, b.x, b.y, c.x, c.y);
                if area.abs() <= 1e-12 {
                    continue;
                }
                if area < 0.0 {
                    std::mem::swap(&mut b, &mut c);
                }
                let pts = [(a.x, a.y), (b.x, b.y), (c.x, c.y)];
                let inside = (0..3).all(|k| {
                    let (from, to) = (pts[k], pts[(k + 1) % 3]);
                    let e = cross(from.0, from.1, to.0, to.1, px, py);
                    e > 0.0 || (e == 0.0 && owns(from, to))
                });
                if !inside {
                    continue;
                }
                let z = plane_depth([a, b, c], px, py).unwrap();
                let i = y * width + x;
                if z < depth[i] {
                    depth[i] = z;
                    face[i] = fi as i32;
                }
            }
        }
    }
    OracleRaster {
        width,
        height,
        face,
        depth,
    }
}

/// Horn's closed-form absolute orientation with scale: the rotation is the
/// quaternion of the largest eigenvalue of the 4×4 symmetric matrix built
/// from the cross-covariance. Returns the aligned prediction.
pub fn horn_align(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<Vector3<f64>>() / n;
    let mg = gt.iter().sum::<Vector3<f64>>() / n;
    let mut s = Matrix3::zeros();
    for (p, g) in pred.iter().zip(gt) {
        s += (p - mp) * (g - mg).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let nmat = Matrix4::new(
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx,
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz,
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy,
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(nmat);
    let k = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(k);
    let rot = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    let r = rot.to_rotation_matrix();
    let num: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (g - mg).dot(&(r * (p - mp))))
        .sum();
    let den: f64 = pred.iter().map(|p| (p - mp).norm_squared()).sum();
    let scale = num / den;
    pred.iter().map(|p| scale * (r * (p - mp)) + mg).collect()
}

pub fn horn_pa_mpjpe(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> f64 {
    let aligned = horn_align(pred, gt);
    aligned
        .iter()
        .zip(gt)
        .map(|(a, g)| (a - g).norm())
        .sum::<f64>()
        / gt.len() as f64
}

/// PCK AUC by direct counting at each threshold and a trapezoid sum, in percent.
pub fn brute_auc(errors: &[f64], max: f64, steps: usize) -> f64 {
    let pck = |tau: f64| errors.iter().filter(|&&e| e <= tau).count() as f64 / errors.len() as f64;
    let mut area = 0.0;
    for k in 0..steps {
        let t0 = max * k as f64 / steps as f64;
        let t1 = max * (k + 1) as f64 / steps as f64;
        area += 0.5 * (pck(t0) + pck(t1)) * (t1 - t0);
    }
    100.0 * area / max
}

/// Mean vertex distance with rotations given row-major.
pub fn brute_add(
    pr: &[f64; 9],
    pt: &[f64; 3],
    gr: &[f64; 9],
    gt: &[f64; 3],
    verts: &[[f64; 3]],
) -> f64 {
    let apply = |r: &[f64; 9], t: &[f64; 3], v: &[f64; 3]| -> [f64; 3] {
        let mut o = [0.0; 3];
        for i in 0..3 {
            o[i] = r[3 * i] * v[0] + r[3 * i + 1] * v[1] + r[3 * i + 2] * v[2] + t[i];
        }
        o
    };
    let mut sum = 0.0;
    for v in verts {
        let a = apply(pr, pt, v);
        let b = apply(gr, gt, v);
        sum += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    }
    sum / verts.len() as f64
}

pub fn brute_diameter(verts: &[[f64; 3]]) -> f64 {
    let mut best: f64 = 0.0;
    for a in verts {
        for b in verts {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            best = best.max(d);
        }
    }
    best
}

/// One channel of the fusion formula in floating point.
pub fn scalar_fuse(hand: u8, object: u8, background: u8, mh: bool, mf: bool) -> u8 {
    let (h, f) = (mh as u8 as f64, mf as u8 as f64);
    let fg = hand as f64 * h + object as f64 * (1.0 - h);
    let v = fg * f + background as f64 * (1.0 - f);
    v.round() as u8
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    let axis = Vector3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let axis = nalgebra::Unit::new_normalize(axis + Vector3::new(1e-3, 0.0, 0.0));
    Rotation3::from_axis_angle(&axis, rng.gen_range(-3.1..3.1))
}

pub fn rigid(r: Rotation3<f64>, t: Vector3<f64>) -> RigidTransform {
    RigidTransform::new(*r.matrix(), t).unwrap()
}

pub fn random_hand_pose(rng: &mut ChaCha8Rng) -> HandPose {
    let mut p = HandPose::grasp(rng.gen_range(0.0..0.9));
    for f in p.flex.iter_mut() {
        for a in f.iter_mut() {
            *a += rng.gen_range(-0.15..0.15);
        }
    }
    for s in p.spread.iter_mut() {
        *s += rng.gen_range(-0.1..0.1);
    }
    p
}

/// A cube tucked behind or between the fingers so the hand occludes it.
pub fn random_cube_pose(rng: &mut ChaCha8Rng) -> RigidTransform {
    rigid(
        random_rotation(rng),
        Vector3::new(
            rng.gen_range(-0.02..0.03),
            rng.gen_range(-0.03..0.01),
            rng.gen_range(0.52..0.58),
        ),
    )
}

/// Random occlusion-heavy scene pair; `same_pose` copies the source pose to the target.
pub fn random_scene(rng: &mut ChaCha8Rng, same_pose: bool) -> DemoScene {
    let hs = random_hand_pose(rng);
    let cs = random_cube_pose(rng);
    if same_pose {
        scene_pair(&hs, &hs, &cs, &cs)
    } else {
        let ht = random_hand_pose(rng);
        let ct = random_cube_pose(rng);
        scene_pair(&hs, &ht, &cs, &ct)
    }
}

/// Mean absolute RGB difference (in 0..255 units) over pixels where `keep` holds.
pub fn mae(a: &RgbaImage, b: &RgbaImage, keep: impl Fn(usize, usize) -> bool) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y, p) in a.enumerate_pixels() {
        if !keep(x as usize, y as usize) {
            continue;
        }
        let q = b.get_pixel(x, y);
        for c in 0..3 {
            sum += (p.0[c] as f64 - q.0[c] as f64).abs();
        }
        n += 1;
    }
    (if n == 0 { 0.0 } else { sum / (3 * n) as f64 }, n)
}

/// Distance from a point to the closest edge of a 2D triangle.
pub fn distance_to_boundary(p: (f64, f64), tri: [(f64, f64); 3]) -> f64 {
    (0..3)
        .map(|k| {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 {
                (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
            ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}
