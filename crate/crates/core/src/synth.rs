//! Synthetic hand-object scenes: a textured cube, a low-poly articulated hand
//! built from boxes, smooth procedural colors and a direct renderer.
//!
//! The renderer shades hand pixels from their rest-pose surface position and
//! object pixels from the cube texture, both with perspective-correct
//! interpolation, so images of the same surface under different poses agree.

use std::path::Path;

use image::{Rgba, RgbaImage};
use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};

use crate::geometry::{
    write_obj, Camera, FaceUv, Instance, Mesh, RigidTransform, Scene, SceneObject,
};
use crate::io::{write_rgba, IoError};
use crate::raster::{rasterize, Label, RasterBuffers, RasterInput};

const PALM: [f64; 3] = [0.08, 0.09, 0.022];
const FINGER_BASE_X: [f64; 4] = [-0.03, -0.01, 0.01, 0.03];
const FINGER_LENGTHS: [[f64; 3]; 5] = [
    [0.040, 0.030, 0.025],
    [0.045, 0.027, 0.020],
    [0.050, 0.030, 0.022],
    [0.046, 0.028, 0.021],
    [0.036, 0.022, 0.018],
];
const FINGER_WIDTH: f64 = 0.016;
const FINGER_THICKNESS: f64 = 0.014;

/// Box corner order: bit 0 → x, bit 1 → y, bit 2 → z.
const BOX_FACES: [[u32; 3]; 12] = [
    [0, 2, 1],
    [1, 2, 3],
    [4, 5, 6],
    [5, 7, 6],
    [0, 1, 4],
    [1, 5, 4],
    [2, 6, 3],
    [3, 6, 7],
    [0, 4, 2],
    [2, 4, 6],
    [1, 3, 5],
    [3, 7, 5],
];

/// Joint angles in radians. Finger 0 is the thumb.
#[derive(Debug, Clone, PartialEq)]
pub struct HandPose {
    /// Flexion of the three joints of each finger; positive curls toward the camera.
    pub flex: [[f64; 3]; 5],
    /// Sideways splay at each finger base.
    pub spread: [f64; 5],
}

impl HandPose {
    pub fn open() -> Self {
        Self {
            flex: [[0.0; 3]; 5],
            spread: [0.6, 0.12, 0.0, -0.1, -0.2],
        }
    }

    pub fn grasp(amount: f64) -> Self {
        let mut p = Self::open();
        for (i, f) in p.flex.iter_mut().enumerate() {
            let k = if i == 0 { 0.6 } else { 1.0 };
            *f = [0.9 * amount * k, 1.1 * amount * k, 0.7 * amount * k];
        }
        p
    }
}

fn box_vertices(frame: &RigidTransform, size: [f64; 3], y0: f64) -> [Vector3<f64>; 8] {
    std::array::from_fn(|i| {
        let x = if i & 1 == 0 { -0.5 } else { 0.5 } * size[0];
        let y = y0 + if i & 2 == 0 { 0.0 } else { size[1] };
        let z = if i & 4 == 0 { -0.5 } else { 0.5 } * size[2];
        frame.apply(&Vector3::new(x, y, z))
    })
}

fn rigid(r: Rotation3<f64>, t: Vector3<f64>) -> RigidTransform {
    RigidTransform::new(*r.matrix(), t).expect("rotation matrices are orthonormal")
}

/// Hand vertex positions in the hand's own frame (wrist at the origin,
/// fingers along +y, palm facing −z). 16 boxes, 8 vertices each.
pub fn hand_vertices(pose: &HandPose) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(128);
    out.extend(box_vertices(&RigidTransform::identity(), PALM, 0.0));
    for (i, lengths) in FINGER_LENGTHS.iter().enumerate() {
        let base = if i == 0 {
            rigid(
                Rotation3::from_axis_angle(&Vector3::z_axis(), pose.spread[0]),
                Vector3::new(-PALM[0] / 2.0, 0.025, 0.0),
            )
        } else {
            rigid(
                Rotation3::from_axis_angle(&Vector3::z_axis(), pose.spread[i]),
                Vector3::new(FINGER_BASE_X[i - 1], PALM[1], 0.0),
            )
        };
        let mut frame = base;
        for (j, &len) in lengths.iter().enumerate() {
            let bend = rigid(
                Rotation3::from_axis_angle(&Vector3::x_axis(), pose.flex[i][j]),
                Vector3::zeros(),
            );
            frame = frame.compose(&bend);
            out.extend(box_vertices(
                &frame,
                [FINGER_WIDTH, len, FINGER_THICKNESS],
                0.0,
            ));
            frame = frame.compose(&rigid(Rotation3::identity(), Vector3::new(0.0, len, 0.0)));
        }
    }
    out
}

pub fn hand_faces() -> Vec<[u32; 3]> {
    (0..16u32)
        .flat_map(|b| BOX_FACES.iter().map(move |f| f.map(|i| i + 8 * b)))
        .collect()
}

/// Posed hand mesh in the camera frame.
pub fn hand_mesh(pose: &HandPose, placement: &RigidTransform) -> Mesh {
    let vertices = hand_vertices(pose)
        .iter()
        .map(|v| placement.apply(v))
        .collect();
    Mesh::new(vertices, hand_faces(), None, Instance::Hand).expect("hand topology is valid")
}

/// Cube of side `side` centred on the origin, each face mapped to one cell
/// of a 3×2 texture layout with a small inset.
pub fn cube_mesh(side: f64) -> Mesh {
    let h = side / 2.0;
    let vertices = (0..8)
        .map(|i| {
            Vector3::new(
                if i & 1 == 0 { -h } else { h },
                if i & 2 == 0 { -h } else { h },
                if i & 4 == 0 { -h } else { h },
            )
        })
        .collect();
    let faces = BOX_FACES.to_vec();
    let inset = 0.03;
    let uvs: Vec<FaceUv> = faces
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let side = k / 2;
            let (cu, cv) = ((side % 3) as f64 / 3.0, (side / 3) as f64 / 2.0);
            // map the two in-plane coordinates of each corner onto the cell
            let axes = match side {
                0 | 1 => (0, 1),
                2 | 3 => (0, 2),
                _ => (1, 2),
            };
            f.map(|i| {
                let bit = |a: usize| ((i >> a) & 1) as f64;
                let (a, b) = (bit(axes.0), bit(axes.1));
                Vector2::new(
                    cu + (inset + a * (1.0 - 2.0 * inset)) / 3.0,
                    cv + (inset + b * (1.0 - 2.0 * inset)) / 2.0,
                )
            })
        })
        .collect();
    Mesh::new(vertices, faces, Some(uvs), Instance::Object).expect("cube topology is valid")
}

/// Smooth color pattern for the cube texture.
pub fn cube_texture(size: u32) -> RgbaImage {
    RgbaImage::from_fn(size, size, |x, y| {
        let u = (x as f64 + 0.5) / size as f64;
        let v = (y as f64 + 0.5) / size as f64;
        let cell = ((u * 3.0).floor() + 3.0 * (v * 2.0).floor()) * 0.7;
        let r = 140.0 + 70.0 * (6.0 * u + cell).sin();
        let g = 120.0 + 60.0 * (5.0 * v - cell).cos();
        let b = 110.0 + 50.0 * (4.0 * (u + v) + cell).sin();
        Rgba([r.round() as u8, g.round() as u8, b.round() as u8, 255])
    })
}

/// Skin-like color varying smoothly over the rest-pose hand surface.
pub fn hand_color(rest: &Vector3<f64>) -> [f32; 4] {
    [
        200.0 + 30.0 * (25.0 * rest.y).sin(),
        150.0 + 35.0 * (30.0 * rest.x + 8.0 * rest.y).cos(),
        120.0 + 30.0 * (40.0 * rest.z + 20.0 * rest.x).sin(),
        255.0,
    ]
    .map(|c| c as f32)
}

pub fn background(width: u32, height: u32) -> RgbaImage {
    RgbaImage::from_fn(width, height, |x, y| {
        let u = x as f64 / width as f64;
        let v = y as f64 / height as f64;
        Rgba([
            (40.0 + 60.0 * u) as u8,
            (70.0 + 50.0 * v) as u8,
            (90.0 + 40.0 * (3.0 * u * v).sin()) as u8,
            255,
        ])
    })
}

pub fn demo_camera() -> Camera {
    Camera::new(500.0, 500.0, 128.0, 128.0, 256, 256).expect("valid camera")
}

/// Ready-to-run demo: an open hand reaching for a cube, seen before and
/// after the hand closes and the cube turns.
#[derive(Debug, Clone)]
pub struct DemoScene {
    pub source: Scene,
    pub target: Scene,
    pub source_image: RgbaImage,
    pub object_texture: RgbaImage,
    /// Rest-pose hand vertices used for shading.
    pub hand_rest: Vec<Vector3<f64>>,
}

fn hand_placement(tilt: f64) -> RigidTransform {
    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), tilt);
    rigid(r, Vector3::new(-0.035, 0.06, 0.5))
}

fn cube_pose(yaw: f64, pitch: f64, t: Vector3<f64>) -> RigidTransform {
    let r = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch);
    rigid(r, t)
}

/// Builds a scene pair from explicit parameters. Poses equal → self-reconstruction.
pub fn scene_pair(
    hand_src: &HandPose,
    hand_tgt: &HandPose,
    cube_src: &RigidTransform,
    cube_tgt: &RigidTransform,
) -> DemoScene {
    let camera = demo_camera();
    let texture = cube_texture(256);
    let cube = cube_mesh(0.07);
    let scene = |hand: &HandPose, pose: &RigidTransform| Scene {
        hand: Some(hand_mesh(hand, &hand_placement(0.25))),
        object: Some(SceneObject {
            mesh: cube.clone(),
            pose: *pose,
            texture: None,
        }),
        camera,
        image: None,
    };
    let source = scene(hand_src, cube_src);
    let target = scene(hand_tgt, cube_tgt);
    let hand_rest = hand_vertices(&HandPose::open());
    let source_image = render(&source, &hand_rest, &texture).0;
    DemoScene {
        source,
        target,
        source_image,
        object_texture: texture,
        hand_rest,
    }
}

pub fn demo_scene() -> DemoScene {
    scene_pair(
        &HandPose::grasp(0.15),
        &HandPose::grasp(0.55),
        &cube_pose(0.5, 0.35, Vector3::new(0.005, -0.01, 0.56)),
        &cube_pose(0.9, 0.15, Vector3::new(0.012, -0.005, 0.55)),
    )
}

/// Perspective-correct barycentrics from screen-space ones.
fn perspective_weights(w: &[f64; 3], z: [f64; 3]) -> [f64; 3] {
    let q = [w[0] / z[0], w[1] / z[1], w[2] / z[2]];
    let s = q[0] + q[1] + q[2];
    [q[0] / s, q[1] / s, q[2] / s]
}

/// Renders a scene over the procedural background. Returns the image and
/// the raster it was shaded from.
pub fn render(
    scene: &Scene,
    hand_rest: &[Vector3<f64>],
    texture: &RgbaImage,
) -> (RgbaImage, RasterBuffers) {
    let view = scene
        .view_geometry()
        .expect("synthetic scenes are in front of the camera");
    let raster = rasterize(
        &RasterInput {
            coords: &view.screen,
            faces: &view.faces,
            instances: &view.instances,
            skip: Some(&view.skip),
        },
        view.width,
        view.height,
    )
    .expect("synthetic scenes are well-formed");
    let uvs = scene.object.as_ref().and_then(|o| o.mesh.face_uvs());
    let mut image = background(view.width as u32, view.height as u32);
    for (x, y, &f) in raster.face.iter_xy() {
        if f < 0 {
            continue;
        }
        let f = f as usize;
        let tri = view.faces[f];
        let z = tri.map(|i| view.screen[i as usize].z);
        let w = perspective_weights(raster.bary.get(x, y), z);
        let color = match *raster.instance.get(x, y) {
            Label::Hand => {
                let p = (0..3).fold(Vector3::zeros(), |acc, i| {
                    acc + hand_rest[tri[i] as usize] * w[i]
                });
                hand_color(&p)
            }
            _ => match uvs {
                Some(uvs) => {
                    let t = &uvs[f - view.hand_faces];
                    let uv = t[0] * w[0] + t[1] * w[1] + t[2] * w[2];
                    crate::flow::sample_bilinear(
                        texture,
                        uv.x * texture.width() as f64,
                        uv.y * texture.height() as f64,
                    )
                }
                None => [128.0f32, 128.0, 128.0, 255.0],
            },
        };
        image.put_pixel(x as u32, y as u32, crate::flow::to_rgba8(color));
    }
    (image, raster)
}

fn row_major(m: &Matrix3<f64>) -> Vec<f64> {
    (0..3)
        .flat_map(|r| (0..3).map(move |c| m[(r, c)]))
        .collect()
}

/// Writes the demo as files: OBJs, texture, source image and `scene.json`.
pub fn write_demo(dir: impl AsRef<Path>, demo: &DemoScene) -> Result<std::path::PathBuf, IoError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| IoError::io(&p, e))
    };
    let src_hand = demo.source.hand.as_ref().expect("demo has a hand");
    let tgt_hand = demo.target.hand.as_ref().expect("demo has a hand");
    let src_obj = demo.source.object.as_ref().expect("demo has an object");
    let tgt_obj = demo.target.object.as_ref().expect("demo has an object");
    write("hand_source.obj", write_obj(src_hand))?;
    write("hand_target.obj", write_obj(tgt_hand))?;
    write("cube.obj", write_obj(&src_obj.mesh))?;
    write_rgba(dir.join("cube.png"), &demo.object_texture)?;
    write_rgba(dir.join("source.png"), &demo.source_image)?;
    let cam = demo.source.camera;
    let config = serde_json::json!({
        "source": {
            "hand_obj": "hand_source.obj",
            "object_obj": "cube.obj",
            "object_texture": "cube.png",
            "object_rotation": row_major(src_obj.pose.rotation()),
            "object_translation": src_obj.pose.translation().as_slice(),
            "camera": {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy, "width": cam.width, "height": cam.height},
            "image": "source.png"
        },
        "target": {
            "hand_obj": "hand_target.obj",
            "object_rotation": row_major(tgt_obj.pose.rotation()),
            "object_translation": tgt_obj.pose.translation().as_slice()
        },
        "output": {"atlas_size": 1024, "margin": 1.0}
    });
    let path = dir.join("scene.json");
    write(
        "scene.json",
        serde_json::to_string_pretty(&config).expect("json value serializes"),
    )?;
    Ok(path)
}
