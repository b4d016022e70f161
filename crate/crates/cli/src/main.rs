use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use topoflow::compose::{fuse, LayerSet};
use topoflow::io::{
    self, parse_scene, read_png_info, read_predictions, read_registry, read_rgba, read_tflo,
    write_face_map, write_rgba, write_tflo, RawField,
};
use topoflow::metrics::{
    evaluate, report_table_csv, PckConfig, DEFAULT_PCK_MAX_MM, DEFAULT_PCK_STEPS,
};
use topoflow::pipeline::{self, Overrides};
use topoflow::{synth, Error, Grid, IoError, Mask, MetricsError, RgbaImage};

/// Occlusion-aware hand-object texture transfer.
#[derive(Parser)]
#[command(name = "topoflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline on a scene config.
    Generate {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Stop after the coarse target; no final.png.
        #[arg(long)]
        skip_fusion: bool,
        /// Also write face maps, depth buffers and fill masks.
        #[arg(long)]
        dump_intermediate: bool,
    },
    /// Score pose predictions: hand AUC and PA-MPJPE, object ADD-0.1D.
    Metrics {
        /// JSON lines, one frame per line.
        predictions: PathBuf,
        /// Object registry JSON.
        registry: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PCK_MAX_MM)]
        pck_max_mm: f64,
        #[arg(long, default_value_t = DEFAULT_PCK_STEPS)]
        pck_steps: usize,
        #[arg(long, default_value = "topoflow")]
        method_name: String,
    },
    /// Summarize a TFLO, TMAP or PNG artifact.
    Inspect { path: PathBuf },
    /// Rasterize the source and target views: face maps and depth.
    Raster {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Build the unified atlas from the source view.
    Atlas {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compute the three flows and the topology map.
    Flow {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Merge background, object and hand layers with two masks.
    Fuse {
        #[arg(long)]
        background: PathBuf,
        #[arg(long)]
        object: PathBuf,
        #[arg(long)]
        hand: PathBuf,
        #[arg(long)]
        hand_mask: PathBuf,
        #[arg(long)]
        foreground_mask: PathBuf,
        /// Output PNG.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic cube-and-hand scene ready for `generate`.
    Demo {
        #[arg(long)]
        out: PathBuf,
        /// Use the source pose as the target too.
        #[arg(long)]
        identity: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    atlas_size: Option<u32>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            atlas_size: self.atlas_size,
            threads: self.threads,
            ..Overrides::default()
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_run(config: &Path, run: &RunArgs, skip_fusion: bool) -> Result<topoflow::PipelineOutput> {
    let cfg = parse_scene(config).map_err(Error::from)?;
    let options = Overrides {
        skip_fusion,
        ..run.overrides()
    }
    .apply(cfg.options.clone());
    let (image, texture) = pipeline::load_inputs(&cfg)?;
    let out = pipeline::with_threads(options.threads, || {
        pipeline::run(&cfg.source, &cfg.target, &image, texture.as_ref(), &options)
    })??;
    Ok(out)
}

fn save_tflo(dir: &Path, name: &str, raw: &RawField) -> Result<()> {
    write_tflo(dir.join(name), raw).map_err(Error::from)?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn save_png(dir: &Path, name: &str, img: &RgbaImage) -> Result<()> {
    write_rgba(dir.join(name), img).map_err(Error::from)?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn save_mask(dir: &Path, name: &str, m: &Mask) -> Result<()> {
    io::write_mask(dir.join(name), m).map_err(Error::from)?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn read_mask(path: &Path) -> Result<Mask> {
    let img = read_rgba(path).map_err(Error::from)?;
    Ok(Grid::from_fn(
        img.width() as usize,
        img.height() as usize,
        |x, y| img.get_pixel(x as u32, y as u32).0[0] >= 128,
    ))
}

fn inspect(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(io_error(path, e)))?;
    if bytes.starts_with(b"\x89PNG") {
        let info = read_png_info(path).map_err(Error::from)?;
        println!("kind: image");
        println!("size: {}x{}", info.width, info.height);
        println!(
            "channels: {} ({} bit)",
            info.channels, info.bits_per_channel
        );
        println!("valid: {:.1}%", 100.0 * info.valid_fraction);
        for (c, (lo, hi)) in info.ranges.iter().enumerate() {
            println!("channel {c}: min {lo} max {hi}");
        }
        return Ok(());
    }
    let raw = read_tflo(path).map_err(Error::from)?;
    let (w, h, ch) = (
        raw.width as usize,
        raw.height as usize,
        raw.channels as usize,
    );
    let valid = raw
        .data
        .chunks_exact(ch)
        .filter(|px| px.iter().all(|v| !v.is_nan()))
        .count();
    println!("kind: {}", raw.kind().name());
    println!("size: {w}x{h}");
    println!("channels: {ch}");
    println!("valid: {:.1}%", 100.0 * valid as f64 / (w * h) as f64);
    for c in 0..ch {
        let vals = raw
            .data
            .iter()
            .skip(c)
            .step_by(ch)
            .filter(|v| v.is_finite());
        let (lo, hi) = vals.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        if lo <= hi {
            println!("channel {c}: min {lo} max {hi}");
        } else {
            println!("channel {c}: no finite values");
        }
    }
    Ok(())
}

fn io_error(path: &Path, e: std::io::Error) -> IoError {
    if e.kind() == std::io::ErrorKind::NotFound {
        IoError::FileNotFound(path.to_path_buf())
    } else {
        IoError::Io {
            path: path.to_path_buf(),
            source: e,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            config,
            run,
            skip_fusion,
            dump_intermediate,
        } => {
            let overrides = Overrides {
                skip_fusion,
                dump_intermediate,
                ..run.overrides()
            };
            let manifest = pipeline::generate(&config, &run.out, &overrides)?;
            for name in manifest.artifacts.keys() {
                println!("wrote {}", run.out.join(name).display());
            }
            println!("wrote {}", run.out.join("manifest.json").display());
        }
        Command::Metrics {
            predictions,
            registry,
            out,
            pck_max_mm,
            pck_steps,
            method_name,
        } => {
            let frames = read_predictions(&predictions).map_err(Error::from)?;
            if frames.is_empty() {
                return Err(Error::from(MetricsError::EmptyInput))
                    .context(format!("{}", predictions.display()));
            }
            let objects = read_registry(&registry).map_err(Error::from)?;
            let report = evaluate(
                &frames,
                &objects,
                PckConfig {
                    max_mm: pck_max_mm,
                    steps: pck_steps,
                },
            )
            .map_err(Error::from)?;
            create_dir(&out)?;
            let json = serde_json::to_string_pretty(&report)? + "\n";
            std::fs::write(out.join("report.json"), json).context("writing report.json")?;
            let csv = report_table_csv(&report, &method_name);
            std::fs::write(out.join("table.csv"), &csv).context("writing table.csv")?;
            print!("{csv}");
        }
        Command::Inspect { path } => inspect(&path)?,
        Command::Raster { config, run } => {
            let cfg = parse_scene(&config).map_err(Error::from)?;
            create_dir(&run.out)?;
            for (name, scene) in [("source", &cfg.source), ("target", &cfg.target)] {
                let view = scene.view_geometry().map_err(Error::from)?;
                let r = pipeline::raster_view(&view)?;
                write_face_map(run.out.join(format!("faces_{name}.png")), &r.face)
                    .map_err(Error::from)?;
                save_tflo(
                    &run.out,
                    &format!("depth_{name}.tflo"),
                    &RawField::from(&r.depth),
                )?;
            }
        }
        Command::Atlas { config, run } => {
            let out = load_run(&config, &run, true)?;
            create_dir(&run.out)?;
            save_png(&run.out, "atlas.png", &out.texture.image)?;
            save_mask(&run.out, "visibility.png", &out.visibility)?;
            write_face_map(run.out.join("faces_atlas.png"), &out.u_raster.face)
                .map_err(Error::from)?;
        }
        Command::Flow { config, run } => {
            let out = load_run(&config, &run, true)?;
            create_dir(&run.out)?;
            save_tflo(&run.out, "flow_us.tflo", &RawField::from(&out.flow_us))?;
            save_tflo(&run.out, "flow_tu.tflo", &RawField::from(&out.flow_tu))?;
            save_tflo(&run.out, "flow_ts.tflo", &RawField::from(&out.flow_ts))?;
            save_tflo(&run.out, "topology.tmap", &RawField::from(&out.topology))?;
        }
        Command::Fuse {
            background,
            object,
            hand,
            hand_mask,
            foreground_mask,
            out,
        } => {
            let layers = LayerSet {
                background: read_rgba(&background).map_err(Error::from)?,
                object: read_rgba(&object).map_err(Error::from)?,
                hand: read_rgba(&hand).map_err(Error::from)?,
                hand_mask: read_mask(&hand_mask)?,
                foreground_mask: read_mask(&foreground_mask)?,
            };
            let img = fuse(&layers).map_err(|e| Error::InvalidInput(e.to_string()))?;
            write_rgba(&out, &img).map_err(Error::from)?;
            println!("wrote {}", out.display());
        }
        Command::Demo { out, identity } => {
            let demo = if identity {
                let d = synth::demo_scene();
                let mut d2 = d.clone();
                d2.target = d.source.clone();
                d2
            } else {
                synth::demo_scene()
            };
            let path = synth::write_demo(&out, &demo).map_err(Error::from)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TOPOFLOW_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
