//! Scene configuration JSON.
//!
//! ```json
//! {
//!   "source": {
//!     "hand_obj": "hand_src.obj",
//!     "object_obj": "cube.obj",
//!     "object_texture": "cube.png",
//!     "object_rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1],
//!     "object_translation": [0.0, 0.0, 0.5],
//!     "camera": { "fx": 500, "fy": 500, "cx": 128, "cy": 128, "width": 256, "height": 256 },
//!     "image": "source.png"
//!   },
//!   "target": { "hand_obj": "hand_tgt.obj", "object_rotation": [...], "object_translation": [...] },
//!   "output": { "atlas_size": 1024, "margin": 1.0 }
//! }
//! ```
//!
//! Relative paths resolve against the config file's directory. Any target
//! field left out is taken from the source, including the camera.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::IoError;
use crate::geometry::{
    load_obj, validate_topology, Camera, GeometryError, Instance, RigidTransform, Scene,
    SceneObject,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub atlas_size: u32,
    pub margin: f64,
    pub skip_fusion: bool,
    pub dump_intermediate: bool,
    pub threads: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            atlas_size: 1024,
            margin: 1.0,
            skip_fusion: false,
            dump_intermediate: false,
            threads: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub source: Scene,
    pub target: Scene,
    pub options: RunOptions,
}

pub fn parse_scene(path: impl AsRef<Path>) -> Result<SceneConfig, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scene_str(&text, base).map_err(|e| match e {
        IoError::Json { line, reason, .. } => IoError::Json {
            path: path.to_path_buf(),
            line,
            reason,
        },
        other => other,
    })
}

struct Ctx<'a> {
    base: &'a Path,
}

fn field<'v>(obj: &'v Map<String, Value>, key: &str) -> Option<&'v Value> {
    obj.get(key).filter(|v| !v.is_null())
}

fn as_object<'v>(v: &'v Value, at: &str) -> Result<&'v Map<String, Value>, IoError> {
    v.as_object()
        .ok_or_else(|| IoError::SchemaError(at.to_string()))
}

fn number(obj: &Map<String, Value>, key: &str, at: &str) -> Result<f64, IoError> {
    field(obj, key)
        .and_then(Value::as_f64)
        .filter(|v| v.is_finite())
        .ok_or_else(|| IoError::SchemaError(format!("{at}.{key}")))
}

fn uint(obj: &Map<String, Value>, key: &str, at: &str) -> Result<u32, IoError> {
    field(obj, key)
        .and_then(Value::as_u64)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| IoError::SchemaError(format!("{at}.{key}")))
}

fn floats<const N: usize>(v: &Value, at: &str) -> Result<[f64; N], IoError> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == N)
        .ok_or_else(|| IoError::SchemaError(at.to_string()))?;
    let mut out = [0.0; N];
    for (i, (o, x)) in out.iter_mut().zip(arr).enumerate() {
        *o = x
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| IoError::SchemaError(format!("{at}[{i}]")))?;
    }
    Ok(out)
}

impl Ctx<'_> {
    fn path(
        &self,
        obj: &Map<String, Value>,
        key: &str,
        at: &str,
    ) -> Result<Option<PathBuf>, IoError> {
        match field(obj, key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(self.base.join(s))),
            Some(_) => Err(IoError::SchemaError(format!("{at}.{key}"))),
        }
    }

    fn camera(&self, v: &Value, at: &str) -> Result<Camera, IoError> {
        let c = as_object(v, at)?;
        let cam = Camera {
            fx: number(c, "fx", at)?,
            fy: number(c, "fy", at)?,
            cx: number(c, "cx", at)?,
            cy: number(c, "cy", at)?,
            width: uint(c, "width", at)?,
            height: uint(c, "height", at)?,
        };
        let bad = [
            ("fx", !(cam.fx > 0.0)),
            ("fy", !(cam.fy > 0.0)),
            ("cx", !cam.cx.is_finite()),
            ("cy", !cam.cy.is_finite()),
            ("width", cam.width == 0),
            ("height", cam.height == 0),
        ];
        if let Some((key, _)) = bad.iter().find(|b| b.1) {
            return Err(IoError::SchemaError(format!("{at}.{key}")));
        }
        cam.validate()
            .map_err(|_| IoError::SchemaError(at.to_string()))?;
        Ok(cam)
    }
}

/// Resolves one side's field, falling back to the source side.
fn pick<'v>(
    side: &'v Map<String, Value>,
    fallback: Option<&'v Map<String, Value>>,
    key: &str,
) -> Option<&'v Value> {
    field(side, key).or_else(|| fallback.and_then(|f| field(f, key)))
}

fn build_scene(
    ctx: &Ctx<'_>,
    side: &Map<String, Value>,
    fallback: Option<&Map<String, Value>>,
    at: &str,
) -> Result<Scene, IoError> {
    // a value inherited from the source is reported at its source path
    let at_of = |key: &str| {
        if field(side, key).is_some() || fallback.is_none() {
            at.to_string()
        } else {
            "source".to_string()
        }
    };
    let single = |key: &str| -> Map<String, Value> {
        let mut m = Map::new();
        if let Some(v) = pick(side, fallback, key) {
            m.insert(key.to_string(), v.clone());
        }
        m
    };

    let camera = match pick(side, fallback, "camera") {
        Some(v) => ctx.camera(v, &format!("{}.camera", at_of("camera")))?,
        None => return Err(IoError::SchemaError(format!("{at}.camera"))),
    };
    let hand = match ctx.path(&single("hand_obj"), "hand_obj", &at_of("hand_obj"))? {
        Some(p) => Some(load_obj(&p, Instance::Hand).map_err(|e| missing_file(e, &p))?),
        None => None,
    };
    let object = match ctx.path(&single("object_obj"), "object_obj", &at_of("object_obj"))? {
        Some(p) => {
            let mesh = load_obj(&p, Instance::Object).map_err(|e| missing_file(e, &p))?;
            let rot_at = format!("{}.object_rotation", at_of("object_rotation"));
            let rotation = match pick(side, fallback, "object_rotation") {
                Some(v) => floats::<9>(v, &rot_at)?,
                None => [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            };
            let tr_at = format!("{}.object_translation", at_of("object_translation"));
            let translation = floats::<3>(
                pick(side, fallback, "object_translation")
                    .ok_or_else(|| IoError::SchemaError(tr_at.clone()))?,
                &tr_at,
            )?;
            let pose =
                RigidTransform::from_row_major(&rotation, translation).map_err(|e| match e {
                    GeometryError::NonOrthonormal(_) => IoError::SchemaError(rot_at.clone()),
                    other => other.into(),
                })?;
            let texture = ctx.path(
                &single("object_texture"),
                "object_texture",
                &at_of("object_texture"),
            )?;
            Some(SceneObject {
                mesh,
                pose,
                texture,
            })
        }
        None => None,
    };
    if hand.is_none() && object.is_none() {
        return Err(IoError::SchemaError(format!("{at}.hand_obj")));
    }
    let image = ctx.path(&single("image"), "image", &at_of("image"))?;
    Ok(Scene {
        hand,
        object,
        camera,
        image,
    })
}

fn missing_file(e: GeometryError, path: &Path) -> IoError {
    match e {
        GeometryError::Io { source, .. } => IoError::io(path, source),
        other => other.into(),
    }
}

fn options(v: Option<&Value>) -> Result<RunOptions, IoError> {
    let mut o = RunOptions::default();
    let Some(v) = v else { return Ok(o) };
    let m = as_object(v, "output")?;
    if field(m, "atlas_size").is_some() {
        o.atlas_size = uint(m, "atlas_size", "output")?;
        if o.atlas_size < 8 {
            return Err(IoError::SchemaError("output.atlas_size".into()));
        }
    }
    if field(m, "margin").is_some() {
        o.margin = number(m, "margin", "output")?;
        if o.margin < 0.0 {
            return Err(IoError::SchemaError("output.margin".into()));
        }
    }
    for (key, slot) in [
        ("skip_fusion", &mut o.skip_fusion),
        ("dump_intermediate", &mut o.dump_intermediate),
    ] {
        if let Some(b) = field(m, key) {
            *slot = b
                .as_bool()
                .ok_or_else(|| IoError::SchemaError(format!("output.{key}")))?;
        }
    }
    if field(m, "threads").is_some() {
        o.threads = Some(uint(m, "threads", "output")?.max(1) as usize);
    }
    Ok(o)
}

/// Parses config text; relative paths resolve against `base`.
pub fn parse_scene_str(text: &str, base: &Path) -> Result<SceneConfig, IoError> {
    let root: Value = serde_json::from_str(text).map_err(|e| IoError::Json {
        path: PathBuf::new(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    let root = as_object(&root, "$")?;
    let ctx = Ctx { base };
    let src = as_object(
        field(root, "source").ok_or_else(|| IoError::SchemaError("source".into()))?,
        "source",
    )?;
    let tgt = as_object(
        field(root, "target").ok_or_else(|| IoError::SchemaError("target".into()))?,
        "target",
    )?;
    let source = build_scene(&ctx, src, None, "source")?;
    let target = build_scene(&ctx, tgt, Some(src), "target")?;

    match (&source.hand, &target.hand) {
        (Some(a), Some(b)) => validate_topology(a, b)?,
        (None, None) => {}
        _ => {
            return Err(GeometryError::TopologyMismatch(
                "hand present in only one of source/target".into(),
            )
            .into())
        }
    }
    match (&source.object, &target.object) {
        (Some(a), Some(b)) => validate_topology(&a.mesh, &b.mesh)?,
        (None, None) => {}
        _ => {
            return Err(GeometryError::TopologyMismatch(
                "object present in only one of source/target".into(),
            )
            .into())
        }
    }
    Ok(SceneConfig {
        source,
        target,
        options: options(field(root, "output"))?,
    })
}
