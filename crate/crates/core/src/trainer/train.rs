use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::groundtruth::{compute_thr, AnnotationSet, ClassLabelSpec};
use crate::losses::{cls_loss, dice_loss, hef_loss, overall_loss, LossBreakdown};
use crate::model::{backward, build_model, forward, predict_count, ModelParams, OutputGrads, ParamGrads};
use crate::numerics::{sigmoid, Tensor4};
use crate::scalar::Scalar;
use crate::harness::Dataset;
use crate::trainer::adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
use crate::trainer::config::TrainConfig;
use crate::trainer::sample::{augment, crop_patches, fit_to_stride, TrainSample};

/// Independent random streams, so that changing how one purpose consumes
/// randomness never shifts another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stream {
    Init = 1,
    Crop = 2,
    Augment = 3,
    Order = 4,
}

fn stream_rng(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(s as u64);
    r
}

fn init_seed(seed: u64) -> u64 {
    use rand::RngCore;
    stream_rng(seed, Stream::Init).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogLine {
    Step { iter: usize, loss: LossBreakdown },
    Eval { iter: usize, train_mae: f64 },
}

impl std::fmt::Display for LogLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LogLine::Step { iter, loss } => write!(
                f,
                "{iter}, {:.10}, {:.10}, {:.10}, {:.10}",
                loss.hef, loss.segs, loss.cla, loss.overall
            ),
            LogLine::Eval { iter, train_mae } => write!(f, "eval, {iter}, {train_mae:.6}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub lines: Vec<LogLine>,
}

impl TrainLog {
    pub fn steps(&self) -> impl Iterator<Item = (usize, &LossBreakdown)> {
        self.lines.iter().filter_map(|l| match l {
            LogLine::Step { iter, loss } => Some((*iter, loss)),
            _ => None,
        })
    }

    pub fn evals(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.lines.iter().filter_map(|l| match l {
            LogLine::Eval { iter, train_mae } => Some((*iter, *train_mae)),
            _ => None,
        })
    }

    /// Mean overall loss over the `window` iterations ending at `iter` (1-based, inclusive).
    pub fn moving_average(&self, iter: usize, window: usize) -> Option<f64> {
        if window == 0 || iter < window {
            return None;
        }
        let vals: Vec<f64> = self
            .steps()
            .filter(|(i, _)| *i + window > iter && *i <= iter)
            .map(|(_, l)| l.overall)
            .collect();
        (vals.len() == window).then(|| vals.iter().sum::<f64>() / window as f64)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            writeln!(s, "{l}").expect("writing to a String");
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(fs::write(path, self.to_text())?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub adam: AdamState<T>,
    pub log: TrainLog,
    pub class_spec: ClassLabelSpec,
}

/// Loss breakdown and parameter gradients for one sample.
pub fn loss_and_grads<T: Scalar>(
    params: &ModelParams<T>,
    sample: &TrainSample<T>,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, ParamGrads<T>)> {
    let out = forward(params, &sample.image)?;
    let (hef, g_density) = hef_loss(&out.density, &sample.gt.density_s8.to_tensor(), &cfg.hef())?;
    let probs: Vec<Tensor4<T>> = out.seg_logits.iter().map(|l| l.map(sigmoid)).collect();
    let dice = dice_loss(&probs, &sample.gt.pyramid)?;
    let (cla, g_cls) = cls_loss(&out.class_logits, sample.gt.class_label)?;
    let (loss, scales) = overall_loss(hef.to_f64_lossy(), dice.total.to_f64_lossy(), cla.to_f64_lossy(), &cfg.weights());
    if !loss.overall.is_finite() {
        return Err(Error::NonFinite(format!("overall loss is {}", loss.overall)));
    }

    let seg_scale = T::of(scales.seg);
    let seg = dice
        .grads
        .iter()
        .zip(&probs)
        .map(|(g, p)| {
            let data = g
                .as_slice()
                .iter()
                .zip(p.as_slice())
                .map(|(&g, &p)| seg_scale * g * p * (T::one() - p))
                .collect();
            Tensor4::from_vec(g.dims(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    let grads_out = OutputGrads {
        density: g_density.scale(T::of(scales.hef)),
        seg,
        class_logits: g_cls.iter().map(|&g| g * T::of(scales.cla)).collect(),
    };
    Ok((loss, backward(params, &out, &grads_out)?))
}

/// Mean absolute count error of the model over whole images.
pub fn count_mae<T: Scalar>(params: &ModelParams<T>, images: &[Tensor4<T>], counts: &[f64]) -> Result<f64> {
    if images.is_empty() || images.len() != counts.len() {
        return Err(Error::invalid("count_mae needs one count per image"));
    }
    let mut acc = 0.0;
    for (img, &c) in images.iter().zip(counts) {
        let est = predict_count(&forward(params, img)?.density).to_f64_lossy();
        acc += (est - c).abs();
    }
    Ok(acc / images.len() as f64)
}

/// Images trimmed to the output stride, with their annotations and class spec.
pub fn prepare_dataset<T: Scalar>(
    dataset: &[(Tensor4<T>, AnnotationSet)],
    num_classes: usize,
) -> Result<(Dataset<T>, ClassLabelSpec)> {
    if dataset.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let fitted = dataset
        .iter()
        .map(|(img, ann)| fit_to_stride(img, ann))
        .collect::<Result<Vec<_>>>()?;
    let counts: Vec<f64> = fitted.iter().map(|(_, a)| a.len() as f64).collect();
    let spec = compute_thr(&counts, num_classes)?;
    Ok((fitted, spec))
}

/// End-to-end training on randomly cropped patches.
///
/// Each epoch regenerates the patch pool with fresh crop origins and visits it
/// in a seeded shuffle. Every logged number is a function of `(dataset, cfg)`.
pub fn train<T: Scalar>(dataset: &[(Tensor4<T>, AnnotationSet)], cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with_progress(dataset, cfg, |_| {})
}

/// Like [`train`], calling `on_line` as each log line is produced.
pub fn train_with_progress<T: Scalar>(
    dataset: &[(Tensor4<T>, AnnotationSet)],
    cfg: &TrainConfig,
    mut on_line: impl FnMut(&LogLine),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let (data, class_spec) = prepare_dataset(dataset, cfg.model.num_classes)?;
    let images: Vec<Tensor4<T>> = data.iter().map(|(i, _)| i.clone()).collect();
    let counts: Vec<f64> = data.iter().map(|(_, a)| a.len() as f64).collect();

    let mut params = build_model::<T>(&cfg.model, init_seed(cfg.seed))?;
    let mut adam = AdamState::new(&params);
    let adam_cfg = AdamConfig::with_lr(cfg.lr);
    let mut crop_rng = stream_rng(cfg.seed, Stream::Crop);
    let mut aug_rng = stream_rng(cfg.seed, Stream::Augment);
    let mut order_rng = stream_rng(cfg.seed, Stream::Order);

    let mut log = TrainLog::default();
    let mut pool: Vec<TrainSample<T>> = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    for iter in 1..=cfg.iterations {
        if cursor == order.len() {
            pool.clear();
            for (img, ann) in &data {
                pool.extend(crop_patches(img, ann, cfg, &class_spec, &mut crop_rng)?);
            }
            order = (0..pool.len()).collect();
            order.shuffle(&mut order_rng);
            cursor = 0;
        }
        let sample = augment(&pool[order[cursor]], cfg, &mut aug_rng);
        cursor += 1;

        let (loss, mut grads) = loss_and_grads(&params, &sample, cfg)
            .map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("iteration {iter}: {m}")),
            other => other,
        })?;
        if let Some(max) = cfg.clip_norm {
            clip_grad_norm(&mut grads, max);
        }
        adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
        let line = LogLine::Step { iter, loss };
        on_line(&line);
        log.lines.push(line);

        if cfg.eval_every > 0 && (iter % cfg.eval_every == 0 || iter == cfg.iterations) {
            let line = LogLine::Eval {
                iter,
                train_mae: count_mae(&params, &images, &counts)?,
            };
            on_line(&line);
            log.lines.push(line);
        }
    }
    Ok(TrainOutcome {
        params,
        adam,
        log,
        class_spec,
    })
}

/// Parameters that `train` starts from for this configuration.
pub fn initial_params<T: Scalar>(cfg: &TrainConfig) -> Result<ModelParams<T>> {
    build_model(&cfg.model, init_seed(cfg.seed))
}
