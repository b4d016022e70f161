//! End-to-end driver: rasterize the three views, build every flow and the
//! atlas, synthesize the coarse target and fuse the final frame.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::RgbaImage;
use serde::Serialize;

use crate::compose::{analytic_masks, fill_hand_holes, fuse, inpaint_background, LayerSet};
use crate::flow::{
    assemble_unified_texture, compose_flow_target_from_source, flow_target_from_unified,
    flow_unified_from_source, synthesize_coarse_target, topology_map,
    visibility_unified_from_source, FlowField, TopologyMap, UnifiedTexture, VisibilityMask,
};
use crate::geometry::{Scene, UnifiedSpace, ViewGeometry};
use crate::grid::{Grid, Mask};
use crate::io::{
    read_rgba, write_face_map, write_mask, write_rgba, write_tflo, RawField, RunOptions,
    SceneConfig,
};
use crate::raster::{rasterize, RasterBuffers, RasterInput};
use crate::{Error, Result};

/// Every intermediate of one run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub space: UnifiedSpace,
    pub s_raster: RasterBuffers,
    pub t_raster: RasterBuffers,
    pub u_raster: RasterBuffers,
    pub flow_us: FlowField,
    pub visibility: VisibilityMask,
    pub texture: UnifiedTexture,
    pub flow_tu: FlowField,
    pub coarse: RgbaImage,
    pub topology: TopologyMap,
    pub flow_ts: FlowField,
    pub hand_mask: Mask,
    pub foreground_mask: Mask,
    /// Target pixels whose atlas footprint is fully textured.
    pub textured: Mask,
    pub final_image: Option<RgbaImage>,
    /// Stage name and wall time in milliseconds, in execution order.
    pub timings: Vec<(&'static str, f64)>,
}

struct Clock(Vec<(&'static str, f64)>);

impl Clock {
    fn stage<T, E: Into<Error>>(
        &mut self,
        name: &'static str,
        f: impl FnOnce() -> Result<T, E>,
    ) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| Error::Stage {
            stage: name,
            source: Box::new(e.into()),
        })?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        log::debug!("{name}: {ms:.1} ms");
        self.0.push((name, ms));
        Ok(out)
    }
}

pub fn raster_view(view: &ViewGeometry) -> Result<RasterBuffers> {
    Ok(rasterize(
        &RasterInput {
            coords: &view.screen,
            faces: &view.faces,
            instances: &view.instances,
            skip: Some(&view.skip),
        },
        view.width,
        view.height,
    )?)
}

pub fn raster_atlas(space: &UnifiedSpace) -> Result<RasterBuffers> {
    let (coords, faces) = space.raster_geometry();
    let size = space.atlas_size();
    Ok(rasterize(
        &RasterInput {
            coords: &coords,
            faces: &faces,
            instances: &space.instances,
            skip: None,
        },
        size,
        size,
    )?)
}

/// Whether every atlas texel the bilinear footprint of `p` touches is filled.
fn footprint_filled(filled: &Mask, x: f64, y: f64) -> bool {
    let (w, h) = filled.dims();
    let (fx, fy) = (x - 0.5, y - 0.5);
    let (x0, y0) = (fx.floor(), fy.floor());
    let (ax, ay) = (fx - x0, fy - y0);
    let clamp = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
    let xs = [(x0, 1.0 - ax), (x0 + 1.0, ax)];
    let ys = [(y0, 1.0 - ay), (y0 + 1.0, ay)];
    ys.iter().all(|&(ty, wy)| {
        xs.iter()
            .all(|&(tx, wx)| wx * wy == 0.0 || *filled.get(clamp(tx, w), clamp(ty, h)))
    })
}

/// Runs every stage on in-memory inputs.
pub fn run(
    source: &Scene,
    target: &Scene,
    source_image: &RgbaImage,
    object_texture: Option<&RgbaImage>,
    options: &RunOptions,
) -> Result<PipelineOutput> {
    let mut clock = Clock(Vec::new());
    let cam = source.camera;
    if (source_image.width(), source_image.height()) != (cam.width, cam.height) {
        return Err(Error::InvalidInput(format!(
            "source image is {}x{}, camera is {}x{}",
            source_image.width(),
            source_image.height(),
            cam.width,
            cam.height
        )));
    }

    let (s_view, t_view) = clock.stage("project", || {
        Ok::<_, Error>((source.view_geometry()?, target.view_geometry()?))
    })?;
    let space = clock.stage("atlas", || {
        UnifiedSpace::build(
            source.hand.as_ref(),
            source.object.as_ref().map(|o| &o.mesh),
            options.atlas_size,
            options.margin,
        )
    })?;
    let s_raster = clock.stage("raster_source", || raster_view(&s_view))?;
    let t_raster = clock.stage("raster_target", || raster_view(&t_view))?;
    let u_raster = clock.stage("raster_atlas", || raster_atlas(&space))?;

    let flow_us = clock.stage("flow_us", || {
        flow_unified_from_source(&u_raster, &s_view.screen, &s_view.faces)
    })?;
    let visibility = clock.stage("visibility", || {
        Ok::<_, Error>(visibility_unified_from_source(
            &u_raster, &s_raster, &flow_us,
        ))
    })?;
    let texture = clock.stage("assemble", || {
        assemble_unified_texture(
            source_image,
            &flow_us,
            &visibility,
            object_texture,
            &space,
            &u_raster,
        )
    })?;
    let flow_tu = clock.stage("flow_tu", || flow_target_from_unified(&t_raster, &space))?;
    let coarse = clock.stage("coarse", || {
        Ok::<_, Error>(synthesize_coarse_target(&flow_tu, &texture))
    })?;
    let topology = clock.stage("topology", || topology_map(&t_raster, &space))?;
    let flow_ts = clock.stage("flow_ts", || {
        compose_flow_target_from_source(&flow_tu, &flow_us, &visibility, &u_raster)
    })?;
    let (hand_mask, foreground_mask) =
        clock.stage("masks", || Ok::<_, Error>(analytic_masks(&t_raster)))?;
    let textured = Grid::from_fn(t_raster.width(), t_raster.height(), |x, y| {
        flow_tu
            .get(x, y)
            .is_some_and(|p| footprint_filled(&texture.filled, p.x, p.y))
    });

    let final_image = if options.skip_fusion {
        None
    } else {
        let hand = if hand_mask.count() > 0 {
            clock.stage("hand_fill", || {
                fill_hand_holes(&coarse, &t_raster, &textured)
            })?
        } else {
            coarse.clone()
        };
        let (_, source_fg) = analytic_masks(&s_raster);
        let background = clock.stage("inpaint", || inpaint_background(source_image, &source_fg))?;
        Some(clock.stage("fuse", || {
            fuse(&LayerSet {
                background,
                object: coarse.clone(),
                hand,
                hand_mask: hand_mask.clone(),
                foreground_mask: foreground_mask.clone(),
            })
        })?)
    };

    Ok(PipelineOutput {
        space,
        s_raster,
        t_raster,
        u_raster,
        flow_us,
        visibility,
        texture,
        flow_tu,
        coarse,
        topology,
        flow_ts,
        hand_mask,
        foreground_mask,
        textured,
        final_image,
        timings: clock.0,
    })
}

/// Record of one `generate` run, written last as `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub status: String,
    pub config: PathBuf,
    pub output_dir: PathBuf,
    /// File name → artifact kind.
    pub artifacts: BTreeMap<String, String>,
    /// Stage → milliseconds.
    pub timings_ms: BTreeMap<String, f64>,
    /// True when the run stopped at the coarse target.
    pub fusion_skipped: bool,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    fn new(config: &Path, out: &Path) -> Self {
        Self {
            status: "ok".into(),
            config: config.to_path_buf(),
            output_dir: out.to_path_buf(),
            artifacts: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
            fusion_skipped: false,
            version: env!("CARGO_PKG_VERSION").into(),
            error: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| crate::io::IoError::io(&path, e))?;
        Ok(())
    }
}

/// Command-line overrides applied on top of the config's `output` block.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub atlas_size: Option<u32>,
    pub threads: Option<usize>,
    pub skip_fusion: bool,
    pub dump_intermediate: bool,
}

impl Overrides {
    pub fn apply(&self, mut o: RunOptions) -> RunOptions {
        if let Some(a) = self.atlas_size {
            o.atlas_size = a;
        }
        if self.threads.is_some() {
            o.threads = self.threads;
        }
        o.skip_fusion |= self.skip_fusion;
        o.dump_intermediate |= self.dump_intermediate;
        o
    }
}

/// Reads the source image and, when the scene has an object, its texture.
pub fn load_inputs(config: &SceneConfig) -> Result<(RgbaImage, Option<RgbaImage>)> {
    let image_path = config
        .source
        .image
        .as_ref()
        .ok_or_else(|| crate::io::IoError::SchemaError("source.image".into()))?;
    let image = read_rgba(image_path)?;
    let texture = match config.source.object.as_ref() {
        Some(o) => {
            let p = o
                .texture
                .as_ref()
                .ok_or_else(|| crate::io::IoError::SchemaError("source.object_texture".into()))?;
            Some(read_rgba(p)?)
        }
        None => None,
    };
    Ok((image, texture))
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Writes every artifact of a finished run into `out` and returns the manifest entries.
pub fn write_artifacts(
    out: &Path,
    result: &PipelineOutput,
    dump_intermediate: bool,
) -> Result<BTreeMap<String, String>> {
    let mut artifacts = BTreeMap::new();
    let mut add = |name: &str, kind: &str| {
        artifacts.insert(name.to_string(), kind.to_string());
        out.join(name)
    };
    write_rgba(add("coarse_target.png", "image"), &result.coarse)?;
    if let Some(img) = &result.final_image {
        write_rgba(add("final.png", "image"), img)?;
    }
    write_tflo(
        add("flow_us.tflo", "flow"),
        &RawField::from(&result.flow_us),
    )?;
    write_tflo(
        add("flow_tu.tflo", "flow"),
        &RawField::from(&result.flow_tu),
    )?;
    write_tflo(
        add("flow_ts.tflo", "flow"),
        &RawField::from(&result.flow_ts),
    )?;
    write_mask(add("visibility.png", "mask"), &result.visibility)?;
    write_tflo(
        add("topology.tmap", "topology"),
        &RawField::from(&result.topology),
    )?;
    write_mask(add("mask_h.png", "mask"), &result.hand_mask)?;
    write_mask(add("mask_f.png", "mask"), &result.foreground_mask)?;
    write_rgba(add("atlas.png", "image"), &result.texture.image)?;
    if dump_intermediate {
        write_face_map(add("faces_source.png", "face_map"), &result.s_raster.face)?;
        write_face_map(add("faces_target.png", "face_map"), &result.t_raster.face)?;
        write_face_map(add("faces_atlas.png", "face_map"), &result.u_raster.face)?;
        write_tflo(
            add("depth_source.tflo", "depth"),
            &RawField::from(&result.s_raster.depth),
        )?;
        write_tflo(
            add("depth_target.tflo", "depth"),
            &RawField::from(&result.t_raster.depth),
        )?;
        write_mask(add("atlas_filled.png", "mask"), &result.texture.filled)?;
        write_mask(add("textured.png", "mask"), &result.textured)?;
    }
    Ok(artifacts)
}

/// Loads a config, runs the pipeline and writes all artifacts plus
/// `manifest.json` into `out`. On failure only a failure manifest is left
/// behind, unless the output directory itself cannot be created.
pub fn generate(config_path: &Path, out: &Path, overrides: &Overrides) -> Result<RunManifest> {
    std::fs::create_dir_all(out).map_err(|e| crate::io::IoError::io(out, e))?;
    let mut manifest = RunManifest::new(config_path, out);
    let mut attempt = || -> Result<(BTreeMap<String, String>, Vec<(&'static str, f64)>)> {
        let config = crate::io::parse_scene(config_path)?;
        let options = overrides.apply(config.options.clone());
        manifest.fusion_skipped = options.skip_fusion;
        let (image, texture) = load_inputs(&config)?;
        let result = with_threads(options.threads, || {
            run(
                &config.source,
                &config.target,
                &image,
                texture.as_ref(),
                &options,
            )
        })??;
        let artifacts = write_artifacts(out, &result, options.dump_intermediate)?;
        Ok((artifacts, result.timings))
    };
    match attempt() {
        Ok((artifacts, timings)) => {
            manifest.artifacts = artifacts;
            manifest.timings_ms = timings
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
            manifest.write(out)?;
            Ok(manifest)
        }
        Err(e) => {
            for name in std::mem::take(&mut manifest.artifacts).keys() {
                let _ = std::fs::remove_file(out.join(name));
            }
            remove_known_artifacts(out);
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
            manifest.write(out)?;
            Err(e)
        }
    }
}

const ARTIFACT_NAMES: [&str; 17] = [
    "coarse_target.png",
    "final.png",
    "flow_us.tflo",
    "flow_tu.tflo",
    "flow_ts.tflo",
    "visibility.png",
    "topology.tmap",
    "mask_h.png",
    "mask_f.png",
    "atlas.png",
    "faces_source.png",
    "faces_target.png",
    "faces_atlas.png",
    "depth_source.tflo",
    "depth_target.tflo",
    "atlas_filled.png",
    "textured.png",
];

fn remove_known_artifacts(out: &Path) {
    for name in ARTIFACT_NAMES {
        let _ = std::fs::remove_file(out.join(name));
    }
}
