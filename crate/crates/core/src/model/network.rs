//! The full network: dilated stem, three gated backbone stages, fused
//! multi-scale features, count classifier, spatial attention and density head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::groundtruth::SEG_LEVELS;
use crate::model::config::{ModelConfig, ATTENTION_KERNEL};
use crate::model::enhance::{feature_enhance, feature_enhance_backward, FelParams};
use crate::model::params::{ModelParams, Param, ParamGrads};
use crate::model::refine::{semantic_refine, semantic_refine_backward};
use crate::numerics::{
    activation, activation_backward, concat_channels, conv2d, conv2d_backward, dense, dense_backward, maxpool2d,
    maxpool2d_backward, resize_bilinear, resize_bilinear_backward, split_channels, spp_pool, spp_pool_backward,
    ActivationKind, Matrix, OpCache, Tensor4, SPP_GRID,
};
use crate::scalar::Scalar;

/// Stem branches are named `stem.d{dilation}` so checkpoints carry their dilation.
const STEM_PREFIX: &str = "stem.d";
const STAGES: [&str; 3] = ["stage1", "stage2", "stage3"];
const SEG_HEADS: [&str; 3] = ["seg1", "seg2", "seg3"];
const FUSE: &str = "fuse";
const FC1: &str = "cls.fc1";
const FC2: &str = "cls.fc2";
const FEL_CONV: &str = "fel.conv";
const FEL_ATTN: &str = "fel.attn";
const HEAD: [&str; 3] = ["head.conv1", "head.conv2", "head.out"];

fn weight(name: &str) -> String {
    format!("{name}.weight")
}

fn bias(name: &str) -> String {
    format!("{name}.bias")
}

/// Deterministic He-normal initialization (std `sqrt(2 / fan_in)`), zero biases.
pub fn build_model<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    cfg.validate()?;
    let w = cfg.widths();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();

    let conv = |params: &mut ModelParams<T>, rng: &mut ChaCha8Rng, name: &str, cout: usize, cin: usize, k: usize| {
        let fan_in = (cin * k * k) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        let t = Tensor4::from_fn([cout, cin, k, k], |_| T::of(normal.sample(rng)));
        params.insert(weight(name), Param::Conv(t));
        params.insert(bias(name), Param::Vector(vec![T::zero(); cout]));
    };

    for d in cfg.dilations {
        conv(&mut params, &mut rng, &format!("{STEM_PREFIX}{d}"), cfg.base_channels, 1, 3);
    }
    let ins = [w.stem, w.stages[0], w.stages[1]];
    for (k, name) in STAGES.iter().enumerate() {
        conv(&mut params, &mut rng, name, w.stages[k], ins[k], 3);
    }
    for (k, name) in SEG_HEADS.iter().enumerate() {
        conv(&mut params, &mut rng, name, 1, w.stages[k], 1);
    }
    conv(&mut params, &mut rng, FUSE, w.fused, w.stages.iter().sum(), 1);

    let fc = |params: &mut ModelParams<T>, rng: &mut ChaCha8Rng, name: &str, rows: usize, cols: usize| {
        let normal = Normal::new(0.0, (2.0 / cols as f64).sqrt()).expect("positive std");
        let data = (0..rows * cols).map(|_| T::of(normal.sample(rng))).collect();
        params.insert(weight(name), Param::Matrix(Matrix::from_vec(rows, cols, data).expect("sized")));
        params.insert(bias(name), Param::Vector(vec![T::zero(); rows]));
    };
    fc(&mut params, &mut rng, FC1, w.hidden, w.fused * SPP_GRID * SPP_GRID);
    fc(&mut params, &mut rng, FC2, cfg.num_classes, w.hidden);

    conv(&mut params, &mut rng, FEL_CONV, w.enhanced, w.fused, 3);
    conv(&mut params, &mut rng, FEL_ATTN, 1, 2, ATTENTION_KERNEL);
    conv(&mut params, &mut rng, HEAD[0], w.head, w.enhanced, 3);
    conv(&mut params, &mut rng, HEAD[1], w.head, w.head, 3);
    conv(&mut params, &mut rng, HEAD[2], 1, w.head, 1);
    Ok(params)
}

/// Number of weights in convolution layers (everything except the classifier's dense layers).
pub fn conv_parameter_count<T: Scalar>(params: &ModelParams<T>) -> usize {
    params.count_where(|n| !n.starts_with("cls."))
}

/// Test hooks for [`forward_with`].
#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    /// Replaces the segmentation logits of a level by a constant before gating.
    pub force_seg_logits: [Option<f64>; SEG_LEVELS],
}

/// Everything backward needs, in forward order.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    layout: u64,
    stem_names: Vec<String>,
    stem: Vec<OpCache<T>>,
    stem_relu: OpCache<T>,
    stages: Vec<[OpCache<T>; 3]>,
    seg_heads: Vec<Option<OpCache<T>>>,
    gates: Vec<OpCache<T>>,
    resizes: Vec<OpCache<T>>,
    fuse: OpCache<T>,
    fuse_relu: OpCache<T>,
    spp: OpCache<T>,
    fc1: OpCache<T>,
    fc1_relu: OpCache<T>,
    fc2: OpCache<T>,
    fel: OpCache<T>,
    head: Vec<(OpCache<T>, OpCache<T>)>,
    stage_channels: [usize; 3],
}

impl<T> ForwardTrace<T> {
    /// All op caches in the order they were produced.
    pub fn caches(&self) -> Vec<&OpCache<T>> {
        let mut v: Vec<&OpCache<T>> = self.stem.iter().collect();
        v.push(&self.stem_relu);
        for (k, s) in self.stages.iter().enumerate() {
            v.extend(s.iter());
            if let Some(c) = &self.seg_heads[k] {
                v.push(c);
            }
            v.push(&self.gates[k]);
        }
        v.extend(self.resizes.iter());
        v.extend([&self.fuse, &self.fuse_relu, &self.spp, &self.fc1, &self.fc1_relu, &self.fc2, &self.fel]);
        for (c, a) in &self.head {
            v.push(c);
            v.push(a);
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct ModelOutputs<T> {
    /// Non-negative density at stride 8.
    pub density: Tensor4<T>,
    /// Segmentation logits at strides 2, 4, 8.
    pub seg_logits: Vec<Tensor4<T>>,
    pub class_logits: Vec<T>,
    /// Backbone features F_1..F_3 before gating.
    pub features: Vec<Tensor4<T>>,
    /// Gated features F̂_1..F̂_3.
    pub refined: Vec<Tensor4<T>>,
    pub trace: ForwardTrace<T>,
}

/// Upstream gradients of the losses with respect to the network outputs.
#[derive(Debug, Clone)]
pub struct OutputGrads<T> {
    pub density: Tensor4<T>,
    /// Gradients with respect to the segmentation logits.
    pub seg: Vec<Tensor4<T>>,
    pub class_logits: Vec<T>,
}

impl<T: Scalar> OutputGrads<T> {
    pub fn zeros_like(out: &ModelOutputs<T>) -> Self {
        Self {
            density: Tensor4::zeros(out.density.dims()),
            seg: out.seg_logits.iter().map(|s| Tensor4::zeros(s.dims())).collect(),
            class_logits: vec![T::zero(); out.class_logits.len()],
        }
    }
}

pub fn forward<T: Scalar>(params: &ModelParams<T>, image: &Tensor4<T>) -> Result<ModelOutputs<T>> {
    forward_with(params, image, &ForwardOptions::default())
}

pub fn forward_with<T: Scalar>(
    params: &ModelParams<T>,
    image: &Tensor4<T>,
    opts: &ForwardOptions,
) -> Result<ModelOutputs<T>> {
    let [n, c, h, w] = image.dims();
    if n != 1 || c != 1 {
        return Err(Error::shape(format!("forward expects a 1x1xHxW image, got {:?}", image.dims())));
    }
    if h < 8 || w < 8 || h % 8 != 0 || w % 8 != 0 {
        return Err(Error::shape(format!(
            "image dims {h}x{w} must be positive multiples of 8"
        )));
    }
    let conv = |x: &Tensor4<T>, name: &str, dilation: usize| {
        conv2d(x, params.conv(&weight(name))?, params.vector(&bias(name))?, dilation)
    };

    let stem_names = stem_branches(params)?;
    let mut stem = Vec::with_capacity(stem_names.len());
    let mut branches = Vec::with_capacity(stem_names.len());
    for (name, d) in &stem_names {
        let (out, cache) = conv(image, name, *d)?;
        branches.push(out);
        stem.push(cache);
    }
    let refs: Vec<&Tensor4<T>> = branches.iter().collect();
    let (mut x, stem_relu) = activation(&concat_channels(&refs)?, ActivationKind::Relu)?;

    let mut stages = Vec::with_capacity(3);
    let mut seg_heads = Vec::with_capacity(3);
    let mut gates = Vec::with_capacity(3);
    let mut features = Vec::with_capacity(3);
    let mut refined = Vec::with_capacity(3);
    let mut seg_logits = Vec::with_capacity(3);
    for k in 0..3 {
        let (pre, cc) = conv(&x, STAGES[k], 1)?;
        let (act, rc) = activation(&pre, ActivationKind::Relu)?;
        let (f, pc) = maxpool2d(&act)?;
        stages.push([cc, rc, pc]);
        let (logit, head_cache) = match opts.force_seg_logits[k] {
            Some(v) => (Tensor4::filled([1, 1, f.height(), f.width()], T::of(v)), None),
            None => {
                let (l, c) = conv(&f, SEG_HEADS[k], 1)?;
                (l, Some(c))
            }
        };
        seg_heads.push(head_cache);
        let (g, gc) = semantic_refine(&f, &logit)?;
        gates.push(gc);
        x = f.clone();
        features.push(f);
        refined.push(g);
        seg_logits.push(logit);
    }

    let (oh, ow) = (refined[2].height(), refined[2].width());
    let mut resizes = Vec::with_capacity(2);
    let mut ups = Vec::with_capacity(2);
    for r in &refined[..2] {
        let (u, rc) = resize_bilinear(r, oh, ow)?;
        ups.push(u);
        resizes.push(rc);
    }
    let cat = concat_channels(&[&ups[0], &ups[1], &refined[2]])?;
    let (fused_pre, fuse) = conv(&cat, FUSE, 1)?;
    let (msrf, fuse_relu) = activation(&fused_pre, ActivationKind::Relu)?;

    let (pooled, spp) = spp_pool(&msrf)?;
    let (hidden, fc1) = dense(&pooled[0], params.matrix(&weight(FC1))?, params.vector(&bias(FC1))?)?;
    let hidden_t = Tensor4::from_vec([1, 1, 1, hidden.len()], hidden)?;
    let (hidden_act, fc1_relu) = activation(&hidden_t, ActivationKind::Relu)?;
    let (class_logits, fc2) = dense(hidden_act.as_slice(), params.matrix(&weight(FC2))?, params.vector(&bias(FC2))?)?;

    let fel_params = FelParams {
        conv_w: params.conv(&weight(FEL_CONV))?,
        conv_b: params.vector(&bias(FEL_CONV))?,
        attn_w: params.conv(&weight(FEL_ATTN))?,
        attn_b: params.vector(&bias(FEL_ATTN))?,
    };
    let (mut y, fel) = feature_enhance(&msrf, &fel_params)?;

    let mut head = Vec::with_capacity(3);
    for name in HEAD {
        let (pre, cc) = conv(&y, name, 1)?;
        let (act, ac) = activation(&pre, ActivationKind::Relu)?;
        head.push((cc, ac));
        y = act;
    }

    let trace = ForwardTrace {
        layout: params.layout_fingerprint(),
        stem_names: stem_names.into_iter().map(|(n, _)| n).collect(),
        stem,
        stem_relu,
        stages,
        seg_heads,
        gates,
        resizes,
        fuse,
        fuse_relu,
        spp,
        fc1,
        fc1_relu,
        fc2,
        fel,
        head,
        stage_channels: [features[0].channels(), features[1].channels(), features[2].channels()],
    };
    Ok(ModelOutputs {
        density: y,
        seg_logits,
        class_logits,
        features,
        refined,
        trace,
    })
}

/// Names and dilations of the stem branches, in parameter order.
fn stem_branches<T: Scalar>(params: &ModelParams<T>) -> Result<Vec<(String, usize)>> {
    let branches: Vec<(String, usize)> = params
        .names()
        .filter_map(|n| {
            let d = n.strip_prefix(STEM_PREFIX)?.strip_suffix(".weight")?.parse().ok()?;
            Some((n.trim_end_matches(".weight").to_string(), d))
        })
        .collect();
    if branches.is_empty() {
        return Err(Error::invalid("parameters contain no stem branches"));
    }
    Ok(branches)
}

fn put_conv<T: Scalar>(grads: &mut ParamGrads<T>, name: &str, w: Tensor4<T>, b: Vec<T>) -> Result<()> {
    *grads.get_mut(&weight(name))? = Param::Conv(w);
    *grads.get_mut(&bias(name))? = Param::Vector(b);
    Ok(())
}

/// Reverse pass over the recorded forward; returns gradients aligned with `params`.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    outputs: &ModelOutputs<T>,
    grads_in: &OutputGrads<T>,
) -> Result<ParamGrads<T>> {
    let t = &outputs.trace;
    if t.layout != params.layout_fingerprint() {
        return Err(Error::CacheMismatch {
            expected: "outputs of a forward pass with these parameters".into(),
            found: "outputs from a differently shaped parameter set".into(),
        });
    }
    if grads_in.seg.len() != SEG_LEVELS {
        return Err(Error::shape(format!("expected {SEG_LEVELS} segmentation grads, got {}", grads_in.seg.len())));
    }
    let mut grads = params.zeros_like();

    // density head
    let mut g = grads_in.density.clone();
    for (name, (cc, ac)) in HEAD.iter().zip(&t.head).rev() {
        let gp = activation_backward(ac, &g)?;
        let cg = conv2d_backward(cc, &gp)?;
        put_conv(&mut grads, name, cg.weights, cg.bias)?;
        g = cg.input;
    }

    // feature enhancement
    let fel = feature_enhance_backward(&t.fel, &g)?;
    put_conv(&mut grads, FEL_CONV, fel.conv_w, fel.conv_b)?;
    put_conv(&mut grads, FEL_ATTN, fel.attn_w, fel.attn_b)?;
    let mut g_msrf = fel.input;

    // classifier
    let d2 = dense_backward(&t.fc2, &grads_in.class_logits)?;
    *grads.get_mut(&weight(FC2))? = Param::Matrix(d2.weights);
    *grads.get_mut(&bias(FC2))? = Param::Vector(d2.bias);
    let g_hidden = activation_backward(&t.fc1_relu, &Tensor4::from_vec([1, 1, 1, d2.input.len()], d2.input)?)?;
    let d1 = dense_backward(&t.fc1, g_hidden.as_slice())?;
    *grads.get_mut(&weight(FC1))? = Param::Matrix(d1.weights);
    *grads.get_mut(&bias(FC1))? = Param::Vector(d1.bias);
    g_msrf.add_assign(&spp_pool_backward(&t.spp, &[d1.input])?)?;

    // fusion
    let g_fused = activation_backward(&t.fuse_relu, &g_msrf)?;
    let fg = conv2d_backward(&t.fuse, &g_fused)?;
    put_conv(&mut grads, FUSE, fg.weights, fg.bias)?;
    let parts = split_channels(&fg.input, &t.stage_channels)?;
    let g_refined = [
        resize_bilinear_backward(&t.resizes[0], &parts[0])?,
        resize_bilinear_backward(&t.resizes[1], &parts[1])?,
        parts[2].clone(),
    ];

    // gated backbone, deepest stage first
    let mut g_next: Option<Tensor4<T>> = None;
    for k in (0..3).rev() {
        let (mut g_f, mut g_logit) = semantic_refine_backward(&t.gates[k], &g_refined[k])?;
        if let Some(gn) = g_next.take() {
            g_f.add_assign(&gn)?;
        }
        if let Some(hc) = &t.seg_heads[k] {
            g_logit.add_assign(&grads_in.seg[k])?;
            let sg = conv2d_backward(hc, &g_logit)?;
            put_conv(&mut grads, SEG_HEADS[k], sg.weights, sg.bias)?;
            g_f.add_assign(&sg.input)?;
        }
        let [cc, rc, pc] = &t.stages[k];
        let g_act = maxpool2d_backward(pc, &g_f)?;
        let g_pre = activation_backward(rc, &g_act)?;
        let sg = conv2d_backward(cc, &g_pre)?;
        put_conv(&mut grads, STAGES[k], sg.weights, sg.bias)?;
        g_next = Some(sg.input);
    }

    // stem
    let g_stem = activation_backward(&t.stem_relu, &g_next.expect("three stages ran"))?;
    let sizes: Vec<usize> = t.stem.iter().map(|_| g_stem.channels() / t.stem.len()).collect();
    for ((name, cache), gs) in t.stem_names.iter().zip(&t.stem).zip(split_channels(&g_stem, &sizes)?) {
        let cg = conv2d_backward(cache, &gs)?;
        put_conv(&mut grads, name, cg.weights, cg.bias)?;
    }
    Ok(grads)
}

/// Estimated head count: the sum of the density map.
pub fn predict_count<T: Scalar>(density: &Tensor4<T>) -> T {
    density.sum()
}
