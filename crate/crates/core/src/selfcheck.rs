//! Built-in correctness checks: finite-difference gradients of every
//! primitive and of the composed models, the FiLM identity at
//! initialization, shape contracts and brute-force metric references.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dsp::NormStats;
use crate::eval::{alignment_error_cm, onset_error_table, px_to_cm, PixelCounts, ONSET_THRESHOLDS};
use crate::model::{EncoderKind, Model, ModelConfig};
use crate::rng::{self, SeededRng};
use crate::tensor::{
    grad_check_params_with, grad_check_with, kernels, Activation, GradCheckReport, Graph,
    GraphError, LstmParams, NodeId, ParamStore, Tensor,
};
use crate::track::{center_of_mass, CenterMode};

/// Finite-difference step and tolerance for single primitives.
pub const STEP: f64 = 1e-3;
pub const TOL: f64 = 1e-4;
/// Step and tolerance for the whole model.
pub const E2E_STEP: f64 = 1e-3;
pub const E2E_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn from_report(name: &str, r: Result<GradCheckReport, GraphError>) -> Self {
        match r {
            Ok(r) => Check {
                name: name.into(),
                passed: r.passed(),
                detail: match r.failures.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)) {
                    None => format!(
                        "{} coords ({} refined at pooling switches), max rel error {:.2e} (tol {:.0e})",
                        r.checked, r.refined, r.max_rel_error, r.tol
                    ),
                    Some(f) => format!(
                        "{} of {} coords above tol {:.0e}; worst {}[{}]: analytic {:.6e}, numeric {:.6e}",
                        r.failures.len(),
                        r.checked,
                        r.tol,
                        f.tensor,
                        f.index,
                        f.analytic,
                        f.numeric
                    ),
                },
            },
            Err(e) => Check { name: name.into(), passed: false, detail: format!("{e}") },
        }
    }

    fn from_bool(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// Graph factory; the broken variant corrupts the ELU derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GraphKind {
    pub broken_gradient: bool,
}

impl GraphKind {
    fn graph(self) -> Graph<f64> {
        if self.broken_gradient {
            Graph::new().with_corrupted_elu_grad()
        } else {
            Graph::new()
        }
    }
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng::from_seed(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng::normal(&mut r)).collect()).expect("shape")
}

/// Distinct, well-separated values so max pooling has no near ties.
fn spread(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng::from_seed(seed);
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * 0.1).collect();
    v.shuffle(&mut r);
    for x in &mut v {
        *x += r.gen_range(-0.01..0.01);
    }
    Tensor::from_vec(shape, v).expect("shape")
}

/// Scalar `sum(op(x) * r)` so that every output coordinate matters.
fn projected<F>(
    op: F,
    out_len: usize,
    seed: u64,
) -> impl Fn(&mut Graph<f64>, NodeId) -> Result<NodeId, GraphError>
where
    F: Fn(&mut Graph<f64>, NodeId) -> Result<NodeId, GraphError>,
{
    let r = random(&[out_len], seed);
    move |g: &mut Graph<f64>, x: NodeId| {
        let y = op(g, x)?;
        let shape = g.value(y).shape().to_vec();
        let w = g.input(r.clone().reshaped(&shape)?);
        let m = g.mul(y, w)?;
        Ok(g.sum(m))
    }
}

/// Gradient checks of every differentiable primitive, each input separately.
pub fn primitive_gradients(kind: GraphKind) -> Vec<Check> {
    let mut out = Vec::new();
    let mut run = |name: &str,
                   f: &dyn Fn(&mut Graph<f64>, NodeId) -> Result<NodeId, GraphError>,
                   x: &Tensor<f64>| {
        out.push(Check::from_report(
            name,
            grad_check_with(f, x, STEP, TOL, || kind.graph()),
        ));
    };

    let x0 = random(&[2, 5, 6], 21);
    let k0 = random(&[3, 2, 3, 3], 22);
    let b0 = random(&[3], 23);
    for (pad, stride) in [(1, 1), (0, 1), (1, 2)] {
        let n = 3
            * kernels::conv_out_dim(5, 3, pad, stride).unwrap_or(0)
            * kernels::conv_out_dim(6, 3, pad, stride).unwrap_or(0);
        let conv = |which: usize| {
            let (x, k, b) = (x0.clone(), k0.clone(), b0.clone());
            projected(
                move |g, v| {
                    let mut ins = [None, None, None];
                    ins[which] = Some(v);
                    let xi = ins[0].unwrap_or_else(|| g.input(x.clone()));
                    let ki = ins[1].unwrap_or_else(|| g.input(k.clone()));
                    let bi = ins[2].unwrap_or_else(|| g.input(b.clone()));
                    g.conv2d(xi, ki, bi, pad, stride)
                },
                n,
                24 + which as u64,
            )
        };
        run(
            &format!("conv2d[pad={pad},stride={stride}].x"),
            &conv(0),
            &x0,
        );
        run(
            &format!("conv2d[pad={pad},stride={stride}].kernel"),
            &conv(1),
            &k0,
        );
        run(
            &format!("conv2d[pad={pad},stride={stride}].bias"),
            &conv(2),
            &b0,
        );
    }
    {
        let k1 = random(&[4, 2, 1, 1], 27);
        let b1 = random(&[4], 28);
        let f = projected(
            move |g, x| {
                let k = g.input(k1.clone());
                let b = g.input(b1.clone());
                g.conv2d(x, k, b, 0, 1)
            },
            4 * 30,
            29,
        );
        run("conv2d[1x1].x", &f, &x0);
    }

    let (v0, w0, c0) = (random(&[6], 30), random(&[4, 6], 31), random(&[4], 32));
    let dense = |which: usize| {
        let (x, w, b) = (v0.clone(), w0.clone(), c0.clone());
        projected(
            move |g, v| {
                let mut ins = [None, None, None];
                ins[which] = Some(v);
                let xi = ins[0].unwrap_or_else(|| g.input(x.clone()));
                let wi = ins[1].unwrap_or_else(|| g.input(w.clone()));
                let bi = ins[2].unwrap_or_else(|| g.input(b.clone()));
                g.dense(xi, wi, Some(bi))
            },
            4,
            33 + which as u64,
        )
    };
    run("dense.x", &dense(0), &v0);
    run("dense.weight", &dense(1), &w0);
    run("dense.bias", &dense(2), &c0);

    let (l0, g0, lb0) = (random(&[3, 4, 5], 36), random(&[3], 37), random(&[3], 38));
    let norm = |which: usize, x: Tensor<f64>, gn: Tensor<f64>, b: Tensor<f64>, n: usize| {
        projected(
            move |g, v| {
                let mut ins = [None, None, None];
                ins[which] = Some(v);
                let xi = ins[0].unwrap_or_else(|| g.input(x.clone()));
                let gi = ins[1].unwrap_or_else(|| g.input(gn.clone()));
                let bi = ins[2].unwrap_or_else(|| g.input(b.clone()));
                g.layer_norm(xi, gi, bi)
            },
            n,
            39 + which as u64,
        )
    };
    run(
        "layer_norm.x",
        &norm(0, l0.clone(), g0.clone(), lb0.clone(), 60),
        &l0,
    );
    run(
        "layer_norm.gain",
        &norm(1, l0.clone(), g0.clone(), lb0.clone(), 60),
        &g0,
    );
    run(
        "layer_norm.bias",
        &norm(2, l0.clone(), g0.clone(), lb0.clone(), 60),
        &lb0,
    );
    let vec_x = random(&[7], 42);
    run(
        "layer_norm[vector].x",
        &norm(0, vec_x.clone(), random(&[7], 43), random(&[7], 44), 7),
        &vec_x,
    );

    let a0 = spread(&[2, 3, 4], 46);
    for (name, act) in [
        ("elu", Activation::Elu),
        ("sigmoid", Activation::Sigmoid),
        ("tanh", Activation::Tanh),
    ] {
        run(
            name,
            &projected(move |g, x| Ok(g.activation(act, x)), 24, 47),
            &a0,
        );
    }

    let p0 = spread(&[2, 5, 7], 48);
    run(
        "max_pool2",
        &projected(|g, x| g.max_pool2(x), 2 * 2 * 3, 49),
        &p0,
    );
    run(
        "upsample2",
        &projected(|g, x| g.upsample2(x), 2 * 10 * 14, 50),
        &p0,
    );
    run("crop", &projected(|g, x| g.crop(x, 3, 4), 2 * 12, 51), &p0);
    let other = random(&[1, 5, 7], 52);
    let concat = projected(
        move |g, x| {
            let o = g.input(other.clone());
            let a = g.concat_channels(o, x)?;
            g.concat_channels(a, x)
        },
        5 * 35,
        53,
    );
    run("concat_channels", &concat, &p0);

    let (f0, s0, t0) = (random(&[3, 4, 4], 54), random(&[3], 55), random(&[3], 56));
    let affine = |which: usize| {
        let (x, s, t) = (f0.clone(), s0.clone(), t0.clone());
        projected(
            move |g, v| {
                let mut ins = [None, None, None];
                ins[which] = Some(v);
                let xi = ins[0].unwrap_or_else(|| g.input(x.clone()));
                let si = ins[1].unwrap_or_else(|| g.input(s.clone()));
                let ti = ins[2].unwrap_or_else(|| g.input(t.clone()));
                g.channel_affine(xi, si, ti)
            },
            48,
            57 + which as u64,
        )
    };
    run("channel_affine.x", &affine(0), &f0);
    run("channel_affine.scale", &affine(1), &s0);
    run("channel_affine.shift", &affine(2), &t0);

    let e0 = random(&[6], 60);
    let other = random(&[6], 61);
    let elementwise = projected(
        move |g, x| {
            let o = g.input(other.clone());
            let a = g.add(x, o)?;
            let m = g.mul(a, x)?;
            let s = g.scale(m, 0.7);
            let s = g.add_scalar(s, 0.2);
            let sl = g.slice(s, 1, 4)?;
            g.reshape(sl, &[2, 2])
        },
        4,
        62,
    );
    run("add/mul/scale/slice/reshape", &elementwise, &e0);

    let target = Tensor::from_f64(
        &[1, 3, 4],
        &[0., 1., 1., 0., 0., 1., 1., 0., 0., 0., 0., 0.],
    )
    .expect("shape");
    let logits = random(&[1, 3, 4], 63);
    let dice = move |g: &mut Graph<f64>, x: NodeId| {
        let p = g.sigmoid(x);
        g.dice_loss(p, &target, 1.0)
    };
    run("dice_loss", &dice, &logits);

    out.extend(lstm_gradients(kind));
    out
}

fn lstm_gradients(kind: GraphKind) -> Vec<Check> {
    let mut store = ParamStore::<f64>::new();
    let w_ih = store.register("w_ih", random(&[20, 6], 64).map(|v| 0.5 * v));
    let w_hh = store.register("w_hh", random(&[20, 5], 65).map(|v| 0.5 * v));
    let bias = store.register("bias", random(&[20], 66));
    let x0 = random(&[6], 67);
    let h0 = random(&[5], 68);
    let c0 = random(&[5], 69);
    let r = random(&[5], 70);
    let build =
        |g: &mut Graph<f64>, s: &ParamStore<f64>, x: NodeId| -> Result<NodeId, GraphError> {
            let p = LstmParams {
                w_ih: g.param(s, w_ih),
                w_hh: g.param(s, w_hh),
                bias: g.param(s, bias),
            };
            let h = g.input(h0.clone());
            let c = g.input(c0.clone());
            let (h1, c1) = g.lstm_step(x, h, c, &p)?;
            let (h2, _) = g.lstm_step(x, h1, c1, &p)?;
            let w = g.input(r.clone());
            let m = g.mul(h2, w)?;
            Ok(g.sum(m))
        };
    vec![
        Check::from_report(
            "lstm_step.x",
            grad_check_with(|g, x| build(g, &store, x), &x0, STEP, TOL, || kind.graph()),
        ),
        Check::from_report(
            "lstm_step.params",
            grad_check_params_with(
                |g, s| {
                    let x = g.input(x0.clone());
                    build(g, s, x)
                },
                &store,
                STEP,
                TOL,
                None,
                0,
                || kind.graph(),
            ),
        ),
    ]
}

fn randomize(store: &mut ParamStore<f64>, rng: &mut SeededRng, scale: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let gain = store.name(id).ends_with(".gain");
        for v in store.get_mut(id).data_mut() {
            *v = if gain { 1.0 } else { 0.0 } + rng.gen_range(-scale..scale);
        }
    }
}

fn random_in(shape: &[usize], rng: &mut SeededRng, lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape")
}

/// The full-size context-based encoder (78x40 window to a 32-dim
/// embedding): sampled parameter coordinates and input coordinates.
pub fn cb_encoder_gradient(kind: GraphKind, per_tensor: usize) -> Check {
    let cfg = ModelConfig::with_encoder(EncoderKind::Cb);
    let model = match Model::<f64>::init(cfg.clone(), NormStats::identity(cfg.n_bins), 5) {
        Ok(m) => m,
        Err(e) => return Check::from_bool("cb_encoder", false, format!("{e}")),
    };
    let mut rng = rng::from_seed(31);
    let mut store = model.params.clone();
    let input = store.register("window", spread(&[1, cfg.n_bins, cfg.window_frames], 32));
    let r = random_in(&[cfg.embed_dim], &mut rng, -1.0, 1.0);
    let report = grad_check_params_with(
        |g, s| {
            let mut m = model.clone();
            m.params = s.clone();
            let x = g.param(s, input);
            let e = m.encode_window(g, x)?;
            let w = g.input(r.clone());
            let p = g.mul(e, w)?;
            Ok(g.sum(p))
        },
        &store,
        STEP,
        TOL,
        Some(per_tensor),
        33,
        || kind.graph(),
    );
    Check::from_report("cb_encoder", report)
}

/// Small model configuration used by the end-to-end gradient check.
pub fn tiny_config(kind: EncoderKind) -> ModelConfig {
    ModelConfig {
        encoder: kind,
        base_filters: 2,
        n_bins: 12,
        window_frames: 8,
        encoder_channels: vec![3, 4],
        encoder_head: 4,
        embed_dim: 5,
        hidden: 6,
        ..ModelConfig::default()
    }
}

/// Two conditioned steps of a tiny model (encoder, conditioner, U-Net,
/// Dice loss) against finite differences over sampled coordinates.
pub fn end_to_end_gradient(encoder: EncoderKind, kind: GraphKind) -> Check {
    let name = format!("end_to_end[{encoder}]");
    let cfg = tiny_config(encoder);
    let mut base = match Model::<f64>::init(cfg.clone(), NormStats::identity(cfg.n_bins), 4) {
        Ok(m) => m,
        Err(e) => return Check::from_bool(&name, false, format!("{e}")),
    };
    let mut rng = rng::from_seed(21);
    randomize(&mut base.params, &mut rng, 0.5);
    let audio_shape: Vec<usize> = if encoder.uses_window() {
        vec![1, cfg.n_bins, cfg.window_frames]
    } else {
        vec![cfg.n_bins]
    };
    let audio: Vec<Tensor<f64>> = (0..2)
        .map(|_| random_in(&audio_shape, &mut rng, -1.0, 1.0))
        .collect();
    let page = match base.prepare_page(&random_in(&[32, 32], &mut rng, 0.0, 1.0)) {
        Ok(p) => p,
        Err(e) => return Check::from_bool(&name, false, format!("{e}")),
    };
    let target: Vec<f64> = (0..32 * 32)
        .map(|i| if (i % 32) / 8 == 1 { 1.0 } else { 0.0 })
        .collect();
    let target = Tensor::from_vec(&[1, 32, 32], target).expect("shape");
    let report = grad_check_params_with(
        |g, store| {
            let mut m = base.clone();
            m.params = store.clone();
            let mut state = m.zero_state(g);
            let mut total: Option<NodeId> = None;
            for a in &audio {
                let x = g.input(a.clone());
                let e = m.encode(g, x)?;
                let (z, next) = m.condition_step(g, e, state)?;
                state = next;
                let pred = m.unet_forward(g, &page, z)?;
                let loss = g.dice_loss(pred, &target, 1.0)?;
                total = Some(match total {
                    None => loss,
                    Some(t) => g.add(t, loss)?,
                });
            }
            total.ok_or_else(|| {
                GraphError::Shape(crate::tensor::ShapeError::new("end_to_end", "no steps"))
            })
        },
        &base.params,
        E2E_STEP,
        E2E_TOL,
        Some(3),
        77,
        || kind.graph(),
    );
    Check::from_report(&name, report)
}

/// Freshly initialized model: U-Net output bit-identical for two random
/// conditioning vectors.
pub fn film_identity(seed: u64) -> Check {
    let cfg = ModelConfig {
        base_filters: 4,
        ..ModelConfig::default()
    };
    let m = match Model::<f32>::init(cfg.clone(), NormStats::identity(cfg.n_bins), seed) {
        Ok(m) => m,
        Err(e) => return Check::from_bool("film_identity", false, format!("{e}")),
    };
    let mut rng = rng::from_seed(seed ^ 0x5eed);
    let page = random_in(&[48, 64], &mut rng, 0.0, 1.0).cast::<f32>();
    let run = |z: Tensor<f32>| -> Result<Tensor<f32>, GraphError> {
        let mut g = Graph::new();
        let input = m.prepare_page(&page)?;
        let zn = g.input(z);
        let out = m.unet_forward(&mut g, &input, zn)?;
        Ok(g.value(out).clone())
    };
    let z1 = random_in(&[cfg.hidden], &mut rng, -1.0, 1.0).cast::<f32>();
    let z2 = random_in(&[cfg.hidden], &mut rng, -1.0, 1.0).cast::<f32>();
    match (run(z1), run(z2)) {
        (Ok(a), Ok(b)) => {
            let same = a
                .data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| x.to_bits() == y.to_bits());
            Check::from_bool(
                "film_identity",
                same,
                format!("{} outputs compared", a.len()),
            )
        }
        (Err(e), _) | (_, Err(e)) => Check::from_bool("film_identity", false, format!("{e}")),
    }
}

/// Context encoder shape chain and U-Net output sizes.
pub fn shape_contracts(unet_sizes: &[(usize, usize)]) -> Vec<Check> {
    let mut out = Vec::new();
    let cfg = ModelConfig::default();
    let m = match Model::<f32>::init(cfg.clone(), NormStats::identity(cfg.n_bins), 1) {
        Ok(m) => m,
        Err(e) => return vec![Check::from_bool("shapes", false, format!("{e}"))],
    };
    let mut g = Graph::new();
    let w = g.input(Tensor::zeros(&[1, cfg.n_bins, cfg.window_frames]));
    let expect: Vec<Vec<usize>> = vec![
        vec![24, 39, 20],
        vec![48, 19, 10],
        vec![96, 9, 5],
        vec![96, 4, 2],
        vec![96, 4, 2],
        vec![32],
    ];
    out.push(match m.encode_window_traced(&mut g, w) {
        Ok((_, trace)) => {
            Check::from_bool("cb_encoder_chain", trace == expect, format!("{trace:?}"))
        }
        Err(e) => Check::from_bool("cb_encoder_chain", false, format!("{e}")),
    });
    let z = Tensor::<f32>::zeros(&[cfg.hidden]);
    for &(h, w) in unet_sizes {
        let name = format!("unet[{h}x{w}]");
        let run = || -> Result<Vec<usize>, GraphError> {
            let mut g = Graph::new();
            let input = m.prepare_page(&Tensor::full(&[h, w], 0.5))?;
            let zn = g.input(z.clone());
            let y = m.unet_forward(&mut g, &input, zn)?;
            Ok(g.value(y).shape().to_vec())
        };
        out.push(match run() {
            Ok(s) => Check::from_bool(&name, s == [1, h, w], format!("{s:?}")),
            Err(e) => Check::from_bool(&name, false, format!("{e}")),
        });
    }
    out
}

/// Evaluation measures on random 16x16 masks against direct loops.
pub fn metric_oracles(pairs: usize, seed: u64) -> Check {
    let mut rng = rng::from_seed(seed);
    let (w, h) = (16usize, 16usize);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let density = rng.gen_range(0.0..1.0);
        let pred: Vec<f32> = (0..w * h)
            .map(|_| {
                if rng.gen_bool(density) {
                    rng.gen_range(0.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let gt: Vec<u8> = (0..w * h).map(|_| rng.gen_bool(0.3) as u8).collect();

        let (mut tp, mut fp, mut fn_) = (0.0f64, 0.0f64, 0.0f64);
        for y in 0..h {
            for x in 0..w {
                let p = pred[y * w + x] >= 0.5;
                let g = gt[y * w + x] == 1;
                tp += (p && g) as u8 as f64;
                fp += (p && !g) as u8 as f64;
                fn_ += (!p && g) as u8 as f64;
            }
        }
        let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if prec + rec > 0.0 {
            2.0 * prec * rec / (prec + rec)
        } else {
            0.0
        };
        let (p2, r2, f2) = PixelCounts::of(&pred, &gt, 0.5).metrics();
        worst = worst
            .max((p2 - prec).abs())
            .max((r2 - rec).abs())
            .max((f2 - f1).abs());

        let com = |m: &[f32], thr: f32| -> Option<(f64, f64)> {
            let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let v = m[y * w + x] as f64;
                    if v >= thr as f64 {
                        sw += v;
                        sx += v * x as f64;
                        sy += v * y as f64;
                    }
                }
            }
            (sw > 0.0).then(|| (sx / sw, sy / sw))
        };
        let gt_f: Vec<f32> = gt.iter().map(|&v| v as f32).collect();
        let mine = center_of_mass(&pred, w, 0.5, CenterMode::Weighted);
        let reference = com(&pred, 0.5);
        match (mine, reference) {
            (Some(a), Some(b)) => worst = worst.max((a.0 - b.0).abs()).max((a.1 - b.1).abs()),
            (None, None) => {}
            _ => worst = f64::INFINITY,
        }
        let err = alignment_error_cm(&pred, &gt, w, 0.5, 3);
        let ref_err = match (reference, com(&gt_f, 0.5)) {
            (Some(p), Some(g)) => Some(
                libm::sqrt((p.0 - g.0) * (p.0 - g.0) + (p.1 - g.1) * (p.1 - g.1)) * 3.0 * 0.0352,
            ),
            _ => None,
        };
        match (err, ref_err) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => worst = f64::INFINITY,
        }

        let errs: Vec<Option<f64>> = (0..rng.gen_range(1..20))
            .map(|_| {
                if rng.gen_bool(0.1) {
                    None
                } else {
                    Some(rng.gen_range(-6.0..6.0))
                }
            })
            .collect();
        let table = onset_error_table(&errs, &ONSET_THRESHOLDS);
        for row in &table {
            let hits = errs
                .iter()
                .filter(|e| matches!(e, Some(v) if v.abs() <= row.threshold))
                .count();
            worst = worst.max((row.fraction - hits as f64 / errs.len() as f64).abs());
        }
    }
    let factor_exact = px_to_cm(100.0, 1) == 3.52;
    Check::from_bool(
        "metric_oracles",
        worst <= 1e-9 && factor_exact,
        format!("{pairs} pairs, max deviation {worst:.1e}"),
    )
}

/// Everything `pgtk verify` runs.
pub fn all_checks(kind: GraphKind) -> Vec<Check> {
    let mut out = primitive_gradients(kind);
    out.push(cb_encoder_gradient(kind, 2));
    for e in [EncoderKind::Cb, EncoderKind::Fb, EncoderKind::Ntc] {
        out.push(end_to_end_gradient(e, kind));
    }
    out.push(film_identity(3));
    out.extend(shape_contracts(&[
        (393, 278),
        (32, 32),
        (64, 48),
        (128, 128),
    ]));
    out.push(metric_oracles(1000, 4));
    out
}
