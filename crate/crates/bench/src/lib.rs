//! Fixtures shared by the benchmarks. Everything is deterministic so runs
//! stay comparable.

use topoflow::metrics::{FrameRecord, ObjectModel};
use topoflow::nalgebra::Vector3;
use topoflow::{synth, Grid, Instance, LayerSet, RgbaImage};

pub use topoflow::synth::DemoScene;

pub fn demo() -> DemoScene {
    synth::demo_scene()
}

/// `n × n` overlapping quads on a `size²` screen, each split in two and
/// tilted so depth tests are not trivial.
pub fn quad_soup(n: usize, size: f64) -> (Vec<Vector3<f64>>, Vec<[u32; 3]>, Vec<Instance>) {
    let step = size / n as f64;
    let mut coords = Vec::new();
    let mut faces = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (x, y) = (i as f64 * step, j as f64 * step);
            let z = 1.0 + ((i * 7 + j * 3) % 11) as f64 * 0.1;
            let base = coords.len() as u32;
            coords.extend([
                Vector3::new(x, y, z),
                Vector3::new(x + 1.6 * step, y, z + 0.3),
                Vector3::new(x + 1.6 * step, y + 1.6 * step, z),
                Vector3::new(x, y + 1.6 * step, z - 0.3),
            ]);
            faces.push([base, base + 1, base + 2]);
            faces.push([base, base + 2, base + 3]);
        }
    }
    let instances = vec![Instance::Hand; faces.len()];
    (coords, faces, instances)
}

pub fn layers(width: u32, height: u32) -> LayerSet {
    let img = |k: u32| RgbaImage::from_fn(width, height, |x, y| image_px(x * k + y, y * 3 + k));
    let (w, h) = (width as usize, height as usize);
    LayerSet {
        background: img(1),
        object: img(2),
        hand: img(5),
        hand_mask: Grid::from_fn(w, h, |x, y| (x + y) % 3 == 0 && x % 2 == 0),
        foreground_mask: Grid::from_fn(w, h, |x, _| x % 2 == 0),
    }
}

fn image_px(a: u32, b: u32) -> topoflow::image::Rgba<u8> {
    topoflow::image::Rgba([a as u8, b as u8, (a ^ b) as u8, 255])
}

/// `n` frames of a slightly perturbed hand and a cube, plus the registry.
pub fn frames(
    n: usize,
) -> (
    Vec<FrameRecord>,
    std::collections::BTreeMap<String, ObjectModel>,
) {
    let cube = synth::cube_mesh(70.0);
    let vertices = cube.vertices().to_vec();
    let diameter = topoflow::metrics::object_diameter(&vertices).expect("cube has extent");
    let objects = [("cube".to_string(), ObjectModel { vertices, diameter })].into();
    let r = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let frames = (0..n)
        .map(|f| {
            let gt: Vec<[f64; 3]> = (0..21)
                .map(|j| {
                    [
                        j as f64 * 8.0,
                        ((j * 5) % 9) as f64 * 6.0,
                        400.0 + (j % 4) as f64 * 5.0,
                    ]
                })
                .collect();
            let pred = gt
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    [
                        p[0] + ((j + f) % 5) as f64,
                        p[1] - ((j * f) % 3) as f64,
                        p[2],
                    ]
                })
                .collect();
            FrameRecord {
                frame_id: format!("{f:05}"),
                pred_joints: pred,
                gt_joints: gt,
                pred_r: r,
                pred_t: [f as f64 % 4.0, 0.0, 500.0],
                gt_r: r,
                gt_t: [0.0, 0.0, 500.0],
                object_id: "cube".into(),
            }
        })
        .collect();
    (frames, objects)
}
