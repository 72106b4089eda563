use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hieroscribe_core::corpus::{DatasetSplit, SplitPart};
use hieroscribe_core::evaluation::{GroupMode, TsneConfig};
use hieroscribe_core::raster;
use hieroscribe_core::segmentation::{render_overlay, segment_region, SegmentationConfig};
use hieroscribe_core::synth::{render_page, save_dataset, synthetic_dataset, PageLayout};
use hieroscribe_core::{Execution, GardinerCode};
use hieroscribe_service::pipeline::{self, BoxError, TrainConfig, SPLIT_FILE};
use hieroscribe_service::{BackendKind, ModelPaths, ServiceConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "hieroscribe", version, about = "Glyph segmentation, classification and MdC transcription")]
struct Cli {
    /// Run data-parallel stages on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Part {
    TestRandom,
    TestPages,
    Validation,
}

#[derive(Clone, Copy, ValueEnum)]
enum Group {
    Prefix,
    FirstLetter,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic glyph dataset (one directory per code).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        classes: usize,
        #[arg(long, default_value_t = 50)]
        per_class: usize,
        #[arg(long, default_value_t = 100)]
        size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write a facsimile-like page; columns separated by ';', codes by ','.
        #[arg(long, requires = "page_out")]
        page: Option<String>,
        #[arg(long)]
        page_out: Option<PathBuf>,
    },
    /// Train one or all backends on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON training configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_backend)]
        backend: Vec<BackendKind>,
    },
    /// Score the trained backends on a held-out split.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        models: PathBuf,
        /// Defaults to `<models>/split.json`.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "test-random")]
        part: Part,
        #[arg(long, value_enum, default_value = "prefix")]
        group: Group,
        /// Write a t-SNE map of Deep-MML embeddings.
        #[arg(long)]
        tsne: bool,
        #[arg(long, default_value_t = 100)]
        canonical_size: u32,
    },
    /// Segment a facsimile (or a region of it) and print the glyphs as JSON.
    Segment {
        image: PathBuf,
        /// x0,y0,x1,y1
        #[arg(long, value_delimiter = ',', num_args = 4)]
        roi: Option<Vec<u32>>,
        /// JSON segmentation configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    s.parse()
}

fn parse_columns(spec: &str) -> Result<Vec<Vec<GardinerCode>>, BoxError> {
    spec.split(';')
        .map(|col| {
            col.split(',')
                .map(|c| c.trim().parse::<GardinerCode>().map_err(BoxError::from))
                .collect()
        })
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BoxError> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

fn run(cli: Cli) -> Result<(), BoxError> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Synth {
            out,
            classes,
            per_class,
            size,
            seed,
            page,
            page_out,
        } => {
            let samples = synthetic_dataset(classes, per_class, size, seed)?;
            save_dataset(&out, &samples)?;
            println!("wrote {} samples to {}", samples.len(), out.display());
            if let (Some(spec), Some(path)) = (page, page_out) {
                let page = render_page(&parse_columns(&spec)?, &PageLayout::default(), seed)?;
                page.image.save(&path)?;
                println!("wrote page {}", path.display());
            }
        }
        Command::Train {
            data,
            out,
            config,
            backend,
        } => {
            let cfg = match config {
                Some(p) => read_json::<TrainConfig>(&p)?,
                None => TrainConfig::default(),
            }
            .with_exec(exec);
            let backends = if backend.is_empty() {
                BackendKind::ALL.to_vec()
            } else {
                backend
            };
            let paths = pipeline::train(&data, &out, &backends, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&paths)?);
        }
        Command::Evaluate {
            data,
            models,
            split,
            out,
            part,
            group,
            tsne,
            canonical_size,
        } => {
            let split = DatasetSplit::load(&split.unwrap_or_else(|| models.join(SPLIT_FILE)))?;
            let part = match part {
                Part::TestRandom => SplitPart::TestRandom,
                Part::TestPages => SplitPart::TestPages,
                Part::Validation => SplitPart::Validation,
            };
            let group = match group {
                Group::Prefix => GroupMode::Prefix,
                Group::FirstLetter => GroupMode::FirstLetter,
            };
            let tsne = tsne.then(|| TsneConfig {
                exec,
                ..TsneConfig::default()
            });
            let scores = pipeline::evaluate(
                &data,
                &ModelPaths::in_dir(&models),
                &split,
                part,
                &out,
                group,
                tsne,
                canonical_size,
            )?;
            println!("{}", serde_json::to_string_pretty(&scores)?);
        }
        Command::Segment {
            image,
            roi,
            config,
            overlay,
        } => {
            let cfg: SegmentationConfig = match config {
                Some(p) => read_json(&p)?,
                None => SegmentationConfig::default(),
            };
            let full = raster::load_gray(&image)?;
            let (x0, y0, crop) = match roi.as_deref() {
                Some(&[x0, y0, x1, y1]) => {
                    if x1 <= x0 || y1 <= y0 || x1 > full.width() || y1 > full.height() {
                        return Err(format!("roi {x0},{y0},{x1},{y1} is empty or outside the image").into());
                    }
                    (x0, y0, image::imageops::crop_imm(&full, x0, y0, x1 - x0, y1 - y0).to_image())
                }
                _ => (0, 0, full.clone()),
            };
            let glyphs = segment_region(&crop, &cfg)?;
            if let Some(path) = overlay {
                render_overlay(&crop, &glyphs).save(&path)?;
            }
            let rows: Vec<_> = glyphs
                .iter()
                .map(|g| {
                    let (a, b, c, d) = g.bbox.bbox;
                    json!({
                        "bbox": [a + x0, b + y0, c + x0, d + y0],
                        "area": g.bbox.area,
                        "column": g.column_index,
                        "order": g.order_index,
                    })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&rows)?);
        }
        Command::Serve { config } => {
            let cfg = ServiceConfig::load(config.as_deref())?;
            tokio::runtime::Runtime::new()?.block_on(hieroscribe_service::serve(cfg))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
