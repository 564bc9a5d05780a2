use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssrhef::groundtruth::{compute_thr, make_bundle, AnnotationSet, DensityMap, SegPyramid, DEFAULT_NUM_CLASSES};
use ssrhef::harness::{
    ablate, evaluate, export_density_image, load_checkpoint, load_dataset, read_pgm, run_model_check, run_op_suite,
    save_checkpoint, save_dataset, synth_dataset, write_dmap, CaseResult, SynthConfig,
};
use ssrhef::model::{forward, ModelConfig};
use ssrhef::trainer::{fit_to_stride, train_with_progress, TrainConfig};
use ssrhef::{Error, Params, Tensor};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "ssrhef", version, about = "Crowd density estimation with hard-example focusing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes as PGM images with JSON annotations.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        images: usize,
        #[arg(long, default_value_t = 8)]
        easy: usize,
        #[arg(long, default_value_t = 7)]
        hard: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write density, segmentation, and class targets for one annotation file.
    GenGt {
        #[arg(long)]
        ann: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
        /// Largest per-image count in the dataset; defaults to this image's count.
        #[arg(long)]
        max_count: Option<f64>,
    },
    /// Train a model and write a checkpoint plus a loss log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = 3e-5)]
        lr: f64,
        #[arg(long, default_value_t = 1e-2)]
        lambda_seg: f64,
        #[arg(long, default_value_t = 1e-3)]
        lambda_cla: f64,
        #[arg(long, default_value_t = 16)]
        base_channels: usize,
        #[arg(long, default_value_t = 100)]
        eval_every: usize,
        #[arg(long)]
        clip_norm: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the checkpoint path with a `.log` extension.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset directory.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        sigma: f64,
    },
    /// Predict the density of one image.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out_dmap: PathBuf,
        #[arg(long)]
        out_pgm: Option<PathBuf>,
    },
    /// Run the finite-difference gradient suite; exits 0 only if every case passes.
    Gradcheck {
        #[arg(long)]
        full_model: bool,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Train with and without hard-example focusing and report both.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
    },
}

enum Failure {
    Lib(Error),
    GradCheck(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::NonFinite(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn write_json(path: &Path, value: serde_json::Result<String>) -> Result<(), Failure> {
    fs::write(path, value.map_err(Error::Json)?)?;
    Ok(())
}

fn seg_level_map(pyr: &SegPyramid, level: usize) -> DensityMap<f64> {
    let l = &pyr.levels[level];
    DensityMap {
        height: l.height,
        width: l.width,
        stride: SegPyramid::stride(level),
        values: (0..l.height * l.width)
            .map(|i| if l.at(i / l.width, i % l.width) { 1.0 } else { 0.0 })
            .collect(),
    }
}

fn report_cases(cases: &[CaseResult]) -> usize {
    let mut failed = 0;
    for c in cases {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        println!("{verdict} {:<28} max_rel_err={:.3e} checked={}", c.name, c.max_rel_err, c.checked);
        failed += usize::from(!c.passed);
    }
    failed
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Synth {
            out,
            images,
            easy,
            hard,
            size,
            seed,
        } => {
            let base = SynthConfig {
                image_size: size,
                n_easy: easy,
                n_hard: hard,
                seed,
                ..SynthConfig::default()
            };
            let data = synth_dataset::<f64>(&base, images)?;
            save_dataset(&out, &data)?;
            println!("wrote {images} scenes to {}", out.display());
        }
        Command::GenGt {
            ann,
            sigma,
            out,
            max_count,
        } => {
            let ann = AnnotationSet::load(&ann)?;
            let spec = compute_thr(&[max_count.unwrap_or(ann.len() as f64)], DEFAULT_NUM_CLASSES)?;
            let b = make_bundle::<f64>(&ann, sigma, &spec)?;
            fs::create_dir_all(&out)?;
            write_dmap(&b.density, out.join("density_s1.dmap"))?;
            write_dmap(&b.density_s8, out.join("density_s8.dmap"))?;
            for level in 0..b.pyramid.levels.len() {
                let stride = SegPyramid::stride(level);
                write_dmap(&seg_level_map(&b.pyramid, level), out.join(format!("seg_s{stride}.dmap")))?;
            }
            let label = serde_json::json!({
                "head_count": b.head_count,
                "class_label": b.class_label,
                "thr": spec.thr,
                "num_classes": spec.num_classes,
            });
            write_json(&out.join("label.json"), serde_json::to_string_pretty(&label))?;
            println!("count {} class {}", b.head_count, b.class_label);
        }
        Command::Train {
            data,
            iters,
            seed,
            gamma,
            lr,
            lambda_seg,
            lambda_cla,
            base_channels,
            eval_every,
            clip_norm,
            out,
            log,
        } => {
            let dataset = load_dataset::<f64>(&data)?;
            let cfg = TrainConfig {
                iterations: iters,
                seed,
                gamma,
                lr,
                lambda_seg,
                lambda_cla,
                eval_every,
                clip_norm,
                model: ModelConfig::with_base_channels(base_channels),
                ..TrainConfig::default()
            };
            let outcome = train_with_progress(&dataset, &cfg, |line| {
                if matches!(line, ssrhef::trainer::LogLine::Eval { .. }) {
                    println!("{line}");
                }
            })?;
            save_checkpoint(&outcome.params, &out)?;
            let log_path = log.unwrap_or_else(|| out.with_extension("log"));
            outcome.log.save(&log_path)?;
            println!("checkpoint {} log {}", out.display(), log_path.display());
        }
        Command::Eval {
            ckpt,
            data,
            report,
            sigma,
        } => {
            let params: Params = load_checkpoint(&ckpt)?;
            let dataset = load_dataset::<f64>(&data)?;
            let r = evaluate(&params, &dataset, sigma)?;
            write_json(&report, serde_json::to_string_pretty(&r))?;
            println!("mae {:.6} mse {:.6}", r.mae, r.mse);
        }
        Command::Predict {
            ckpt,
            image,
            out_dmap,
            out_pgm,
        } => {
            let params: Params = load_checkpoint(&ckpt)?;
            let img: Tensor = read_pgm(&image)?;
            let (img, _) = fit_to_stride(&img, &AnnotationSet::empty(img.width(), img.height()))?;
            let out = forward(&params, &img)?;
            let d = DensityMap::from_tensor(&out.density, ssrhef::groundtruth::OUTPUT_STRIDE);
            write_dmap(&d, &out_dmap)?;
            if let Some(p) = out_pgm {
                export_density_image(&d, p)?;
            }
            println!("count {:.4}", d.sum());
        }
        Command::Gradcheck { full_model, seeds } => {
            let mut cases = run_op_suite(seeds)?;
            if full_model {
                cases.extend(run_model_check(0, 16)?);
            }
            let failed = report_cases(&cases);
            if failed > 0 {
                return Err(Failure::GradCheck(failed));
            }
            println!("all {} cases passed", cases.len());
        }
        Command::Ablate {
            data,
            iters,
            seed,
            report,
        } => {
            let dataset = load_dataset::<f64>(&data)?;
            let cfg = TrainConfig {
                iterations: iters,
                seed,
                ..TrainConfig::default()
            };
            let r = ablate(&dataset, &cfg)?;
            write_json(&report, serde_json::to_string_pretty(&r))?;
            println!(
                "gamma=2 mae {:.4}, gamma=0 mae {:.4}, hard under-estimation delta {:?}",
                r.focused.report.mae, r.plain.report.mae, r.hard_underestimation_delta
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::GradCheck(n)) => {
            eprintln!("error: {n} gradient check case(s) failed");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}
