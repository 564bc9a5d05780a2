//! Finite-difference verification of every hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::groundtruth::{build_seg_pyramid, encode_segmentation, AnnotationSet, Point};
use crate::losses::{cls_loss, dice_loss, hef_loss, HefConfig};
use crate::model::{
    backward, build_model, feature_enhance, feature_enhance_backward, forward, semantic_refine,
    semantic_refine_backward, FelParams, ModelConfig, ModelParams, OutputGrads,
};
use crate::numerics::{
    activation, activation_backward, channel_pool, channel_pool_backward, conv2d, conv2d_backward, dense,
    dense_backward, finite_diff_check, finite_diff_check_at, maxpool2d, maxpool2d_backward, resize_bilinear,
    resize_bilinear_backward, spp_pool, spp_pool_backward, ActivationKind, GradCheckReport, Matrix, Tensor4,
    DEFAULT_EPSILON,
};

/// Maximum relative error accepted by the suite.
pub const SUITE_TOLERANCE: f64 = 1e-4;
pub const SUITE_SEEDS: u64 = 10;

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub name: String,
    pub seeds: u64,
    pub max_rel_err: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    pub passed: bool,
}

impl CaseResult {
    fn new(name: impl Into<String>, seeds: u64, r: GradCheckReport) -> Self {
        Self {
            name: name.into(),
            seeds,
            passed: r.passes(SUITE_TOLERANCE),
            max_rel_err: r.max_rel_err,
            worst_index: r.worst_index,
            checked: r.checked,
        }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn tensor(dims: [usize; 4], x: &[f64]) -> Tensor4<f64> {
    Tensor4::from_vec(dims, x.to_vec()).expect("dims match")
}

fn check(f: impl Fn(&[f64]) -> f64, point: &[f64], analytic: &[f64]) -> Result<GradCheckReport> {
    finite_diff_check(f, point, analytic, DEFAULT_EPSILON)
}

type Case = fn(&mut ChaCha8Rng) -> Result<GradCheckReport>;

fn case_conv2d(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let dil = r.random_range(1..=3);
    let x = rand_tensor(r, [1, 2, 6, 5]);
    let w = rand_tensor(r, [3, 2, 3, 3]);
    let b: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
    let (out, cache) = conv2d(&x, &w, &b, dil)?;
    let probe = rand_tensor(r, out.dims());
    let g = conv2d_backward(&cache, &probe)?;
    let p = probe.as_slice();
    let rx = check(|v| dot(conv2d(&tensor(x.dims(), v), &w, &b, dil).unwrap().0.as_slice(), p), x.as_slice(), g.input.as_slice())?;
    let rw = check(|v| dot(conv2d(&x, &tensor(w.dims(), v), &b, dil).unwrap().0.as_slice(), p), w.as_slice(), g.weights.as_slice())?;
    let rb = check(|v| dot(conv2d(&x, &w, v, dil).unwrap().0.as_slice(), p), &b, &g.bias)?;
    Ok(rx.merge(rw).merge(rb))
}

fn case_maxpool2d(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = rand_tensor(r, [1, 2, 5, 6]);
    let (out, cache) = maxpool2d(&x)?;
    let probe = rand_tensor(r, out.dims());
    let g = maxpool2d_backward(&cache, &probe)?;
    check(|v| dot(maxpool2d(&tensor(x.dims(), v)).unwrap().0.as_slice(), probe.as_slice()), x.as_slice(), g.as_slice())
}

fn case_channel_pool(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = rand_tensor(r, [1, 4, 3, 4]);
    let (out, cache) = channel_pool(&x)?;
    let probe = rand_tensor(r, out.dims());
    let g = channel_pool_backward(&cache, &probe)?;
    check(|v| dot(channel_pool(&tensor(x.dims(), v)).unwrap().0.as_slice(), probe.as_slice()), x.as_slice(), g.as_slice())
}

fn case_resize(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = rand_tensor(r, [1, 2, 4, 3]);
    let (nh, nw) = (r.random_range(2..9), r.random_range(2..9));
    let (out, cache) = resize_bilinear(&x, nh, nw)?;
    let probe = rand_tensor(r, out.dims());
    let g = resize_bilinear_backward(&cache, &probe)?;
    check(
        |v| dot(resize_bilinear(&tensor(x.dims(), v), nh, nw).unwrap().0.as_slice(), probe.as_slice()),
        x.as_slice(),
        g.as_slice(),
    )
}

fn case_activation(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = rand_tensor(r, [1, 2, 3, 4]).scale(3.0);
    let mut report: Option<GradCheckReport> = None;
    for kind in [ActivationKind::Relu, ActivationKind::Sigmoid] {
        let (out, cache) = activation(&x, kind)?;
        let probe = rand_tensor(r, out.dims());
        let g = activation_backward(&cache, &probe)?;
        let rep = check(
            |v| dot(activation(&tensor(x.dims(), v), kind).unwrap().0.as_slice(), probe.as_slice()),
            x.as_slice(),
            g.as_slice(),
        )?;
        report = Some(match report {
            Some(prev) => prev.merge(rep),
            None => rep,
        });
    }
    Ok(report.expect("two kinds checked"))
}

fn case_spp(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let (h, w) = (r.random_range(5..21), r.random_range(5..21));
    let x = rand_tensor(r, [1, 2, h, w]);
    let (out, cache) = spp_pool(&x)?;
    let probe: Vec<Vec<f64>> = out.iter().map(|o| o.iter().map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let g = spp_pool_backward(&cache, &probe)?;
    check(
        |v| {
            let (o, _) = spp_pool(&tensor(x.dims(), v)).unwrap();
            o.iter().zip(&probe).map(|(a, b)| dot(a, b)).sum()
        },
        x.as_slice(),
        g.as_slice(),
    )
}

fn case_dense(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let (rows, cols) = (4, 7);
    let x: Vec<f64> = (0..cols).map(|_| r.random_range(-1.0..1.0)).collect();
    let wv: Vec<f64> = (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect();
    let w = Matrix::from_vec(rows, cols, wv)?;
    let b: Vec<f64> = (0..rows).map(|_| r.random_range(-1.0..1.0)).collect();
    let probe: Vec<f64> = (0..rows).map(|_| r.random_range(-1.0..1.0)).collect();
    let (_, cache) = dense(&x, &w, &b)?;
    let g = dense_backward(&cache, &probe)?;
    let rx = check(|v| dot(&dense(v, &w, &b).unwrap().0, &probe), &x, &g.input)?;
    let rw = check(
        |v| dot(&dense(&x, &Matrix::from_vec(rows, cols, v.to_vec()).unwrap(), &b).unwrap().0, &probe),
        w.as_slice(),
        g.weights.as_slice(),
    )?;
    let rb = check(|v| dot(&dense(&x, &w, v).unwrap().0, &probe), &b, &g.bias)?;
    Ok(rx.merge(rw).merge(rb))
}

fn case_semantic_refine(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let f = rand_tensor(r, [1, 3, 4, 5]);
    let s = rand_tensor(r, [1, 1, 4, 5]).scale(3.0);
    let (out, cache) = semantic_refine(&f, &s)?;
    let probe = rand_tensor(r, out.dims());
    let (gf, gs) = semantic_refine_backward(&cache, &probe)?;
    let p = probe.as_slice();
    let rf = check(|v| dot(semantic_refine(&tensor(f.dims(), v), &s).unwrap().0.as_slice(), p), f.as_slice(), gf.as_slice())?;
    let rs = check(|v| dot(semantic_refine(&f, &tensor(s.dims(), v)).unwrap().0.as_slice(), p), s.as_slice(), gs.as_slice())?;
    Ok(rf.merge(rs))
}

fn case_feature_enhance(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let x = rand_tensor(r, [1, 3, 5, 6]);
    let cw = rand_tensor(r, [2, 3, 3, 3]);
    let cb: Vec<f64> = (0..2).map(|_| r.random_range(-0.5..0.5)).collect();
    let aw = rand_tensor(r, [1, 2, 7, 7]);
    let ab = vec![r.random_range(-0.5..0.5)];
    let run = |x: &Tensor4<f64>, cw: &Tensor4<f64>, cb: &[f64], aw: &Tensor4<f64>, ab: &[f64]| {
        let p = FelParams {
            conv_w: cw,
            conv_b: cb,
            attn_w: aw,
            attn_b: ab,
        };
        feature_enhance(x, &p)
    };
    let (out, cache) = run(&x, &cw, &cb, &aw, &ab)?;
    let probe = rand_tensor(r, out.dims());
    let g = feature_enhance_backward(&cache, &probe)?;
    let p = probe.as_slice();
    let f = |o: Result<(Tensor4<f64>, _)>| dot(o.unwrap().0.as_slice(), p);
    let rx = check(|v| f(run(&tensor(x.dims(), v), &cw, &cb, &aw, &ab)), x.as_slice(), g.input.as_slice())?;
    let rcw = check(|v| f(run(&x, &tensor(cw.dims(), v), &cb, &aw, &ab)), cw.as_slice(), g.conv_w.as_slice())?;
    let rcb = check(|v| f(run(&x, &cw, v, &aw, &ab)), &cb, &g.conv_b)?;
    let raw = check(|v| f(run(&x, &cw, &cb, &tensor(aw.dims(), v), &ab)), aw.as_slice(), g.attn_w.as_slice())?;
    let rab = check(|v| f(run(&x, &cw, &cb, &aw, v)), &ab, &g.attn_b)?;
    Ok(rx.merge(rcw).merge(rcb).merge(raw).merge(rab))
}

fn case_hef(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let pred = Tensor4::from_fn([1, 1, 4, 5], |_| r.random_range(-1.0..3.0));
    let gt = Tensor4::from_fn([1, 1, 4, 5], |_| r.random_range(0.0..1.0));
    let cfg = HefConfig {
        gamma: [0.0, 1.0, 2.0, 3.5][r.random_range(0..4)],
    };
    let (_, g) = hef_loss(&pred, &gt, &cfg)?;
    check(|v| hef_loss(&tensor(pred.dims(), v), &gt, &cfg).unwrap().0, pred.as_slice(), g.as_slice())
}

/// At least one head, so every level has foreground. With an empty target the
/// gradient is O(ε) and sits below the checker's denominator floor, where
/// central-difference roundoff dominates; that case is covered in closed form
/// by the loss's own tests.
fn case_dice(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let pts = (0..r.random_range(1..6))
        .map(|_| Point {
            x: r.random_range(0.0..32.0),
            y: r.random_range(0.0..32.0),
        })
        .collect();
    let pyr = build_seg_pyramid(&encode_segmentation(&AnnotationSet::new(32, 32, pts)?));
    let preds: Vec<Tensor4<f64>> = pyr
        .levels
        .iter()
        .map(|l| Tensor4::from_fn([1, 1, l.height, l.width], |_| r.random_range(0.01..0.99)))
        .collect();
    let out = dice_loss(&preds, &pyr)?;
    let mut report: Option<GradCheckReport> = None;
    for k in 0..preds.len() {
        let rep = check(
            |v| {
                let mut p = preds.clone();
                p[k] = tensor(preds[k].dims(), v);
                dice_loss(&p, &pyr).unwrap().total
            },
            preds[k].as_slice(),
            out.grads[k].as_slice(),
        )?;
        report = Some(match report {
            Some(prev) => prev.merge(rep),
            None => rep,
        });
    }
    Ok(report.expect("three levels"))
}

fn case_cls(r: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let logits: Vec<f64> = (0..15).map(|_| r.random_range(-3.0..3.0)).collect();
    let label = r.random_range(0..15);
    let (_, g) = cls_loss(&logits, label)?;
    check(|v| cls_loss(v, label).unwrap().0, &logits, &g)
}

pub const CASES: [(&str, Case); 12] = [
    ("conv2d", case_conv2d),
    ("maxpool2d", case_maxpool2d),
    ("channel_pool", case_channel_pool),
    ("resize_bilinear", case_resize),
    ("activation", case_activation),
    ("spp_pool", case_spp),
    ("dense", case_dense),
    ("semantic_refine", case_semantic_refine),
    ("feature_enhance", case_feature_enhance),
    ("hef_loss", case_hef),
    ("dice_loss", case_dice),
    ("cls_loss", case_cls),
];

/// Runs every op and loss case over `seeds` seeds.
pub fn run_op_suite(seeds: u64) -> Result<Vec<CaseResult>> {
    CASES
        .iter()
        .map(|(name, case)| {
            let mut merged: Option<GradCheckReport> = None;
            for seed in 0..seeds {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let rep = case(&mut r)?;
                merged = Some(match merged {
                    Some(prev) => prev.merge(rep),
                    None => rep,
                });
            }
            Ok(CaseResult::new(*name, seeds, merged.expect("at least one seed")))
        })
        .collect()
}

/// Checks the whole network at `base_channels = 2` on a 16×16 image.
///
/// The objective is a random linear probe of every output (density, all
/// segmentation logits, class logits), so each parameter receives gradient
/// through every path it feeds. Each parameter tensor is probed at up to
/// `per_param` coordinates drawn without replacement.
pub fn run_model_check(seed: u64, per_param: usize) -> Result<Vec<CaseResult>> {
    let cfg = ModelConfig::with_base_channels(2);
    let params: ModelParams<f64> = build_model(&cfg, seed)?;
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let image = Tensor4::from_fn([1, 1, 16, 16], |_| r.random_range(0.0..1.0));
    let out = forward(&params, &image)?;
    let mut probe = OutputGrads::zeros_like(&out);
    for v in probe.density.as_mut_slice() {
        *v = r.random_range(-1.0..1.0);
    }
    for s in &mut probe.seg {
        for v in s.as_mut_slice() {
            *v = r.random_range(-1.0..1.0);
        }
    }
    for v in &mut probe.class_logits {
        *v = r.random_range(-1.0..1.0);
    }
    let grads = backward(&params, &out, &probe)?;
    let objective = |p: &ModelParams<f64>| {
        let o = forward(p, &image).expect("forward on a valid image");
        let mut s = dot(o.density.as_slice(), probe.density.as_slice());
        for (l, g) in o.seg_logits.iter().zip(&probe.seg) {
            s += dot(l.as_slice(), g.as_slice());
        }
        s + dot(&o.class_logits, &probe.class_logits)
    };

    let mut results = Vec::new();
    for (name, p) in params.iter() {
        let n = p.len();
        let indices = rand::seq::index::sample(&mut r, n, per_param.min(n)).into_vec();
        let g = grads.get(name)?;
        let rep = finite_diff_check_at(
            |v: &[f64]| {
                let mut q = params.clone();
                q.get_mut(name).expect("same layout").as_mut_slice().copy_from_slice(v);
                objective(&q)
            },
            p.as_slice(),
            g.as_slice(),
            DEFAULT_EPSILON,
            &indices,
        )?;
        results.push(CaseResult::new(format!("model/{name}"), 1, rep));
    }
    Ok(results)
}
