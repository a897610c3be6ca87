//! The audio-conditioned U-Net.
//!
//! An audio encoder turns spectrogram input into a 32-dim embedding, a
//! recurrent conditioner (or a dense layer for the no-context ablation)
//! turns the embedding sequence into the conditioning vector `z`, and
//! FiLM layers inject `z` into blocks B-H of a U-Net that segments the
//! score page.

mod config;
mod init;

use alloc::format;
use alloc::vec::Vec;

use crate::dsp::NormStats;
use crate::rng;
use crate::tensor::{
    reflect_pad, Graph, GraphError, LstmParams, NodeId, ParamId, ParamStore, Real, Tensor,
};

pub use config::{ConfigError, EncoderKind, ModelConfig};
pub use init::orthogonal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub pad: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseParams {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// `s(z) = 1 + scale(z)`, `t(z) = shift(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilmParams {
    pub scale: DenseParams,
    pub shift: DenseParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockParams {
    /// 1x1 conv after bilinear upsampling (decoder blocks only).
    pub up: Option<ConvParams>,
    pub conv1: ConvParams,
    pub norm1: NormParams,
    pub conv2: ConvParams,
    pub norm2: NormParams,
    pub film: Option<FilmParams>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncoderParams {
    Context {
        stages: Vec<[(ConvParams, NormParams); 2]>,
        head: (ConvParams, NormParams),
        dense: DenseParams,
        norm: NormParams,
    },
    Frame {
        dense: DenseParams,
        norm: NormParams,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConditionerParams {
    Lstm {
        w_ih: ParamId,
        w_hh: ParamId,
        bias: ParamId,
    },
    Dense(DenseParams),
}

/// Parameter ids of every layer, in registration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub encoder: EncoderParams,
    pub conditioner: ConditionerParams,
    pub blocks: Vec<BlockParams>,
    pub output: ConvParams,
}

/// Weight initializer used while registering a layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Orthogonal,
    Zeros,
    Ones,
}

struct Builder<T: Real> {
    store: ParamStore<T>,
    rng: rng::SeededRng,
}

impl<T: Real> Builder<T> {
    fn tensor(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId {
        let t = match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::full(shape, T::ONE),
            Init::Orthogonal => {
                let rows = shape[0];
                let cols = shape[1..].iter().product();
                Tensor::from_f64(shape, &orthogonal(rows, cols, &mut self.rng))
                    .expect("shape product")
            }
        };
        self.store.register(name, t)
    }

    fn conv(&mut self, name: &str, c_out: usize, c_in: usize, f: usize) -> ConvParams {
        ConvParams {
            weight: self.tensor(
                &format!("{}.weight", name),
                &[c_out, c_in, f, f],
                Init::Orthogonal,
            ),
            bias: self.tensor(&format!("{}.bias", name), &[c_out], Init::Zeros),
            pad: f / 2,
        }
    }

    fn norm(&mut self, name: &str, n: usize) -> NormParams {
        NormParams {
            gain: self.tensor(&format!("{}.gain", name), &[n], Init::Ones),
            bias: self.tensor(&format!("{}.bias", name), &[n], Init::Zeros),
        }
    }

    fn dense(&mut self, name: &str, out: usize, inp: usize, weight: Init) -> DenseParams {
        DenseParams {
            weight: self.tensor(&format!("{}.weight", name), &[out, inp], weight),
            bias: self.tensor(&format!("{}.bias", name), &[out], Init::Zeros),
        }
    }
}

fn build_layout<T: Real>(cfg: &ModelConfig, b: &mut Builder<T>) -> Layout {
    let encoder = if cfg.encoder.uses_window() {
        let mut stages = Vec::new();
        let mut c_in = 1;
        for (s, &c) in cfg.encoder_channels.iter().enumerate() {
            let first = (
                b.conv(&format!("enc.s{}.conv0", s), c, c_in, 3),
                b.norm(&format!("enc.s{}.norm0", s), c),
            );
            let second = (
                b.conv(&format!("enc.s{}.conv1", s), c, c, 3),
                b.norm(&format!("enc.s{}.norm1", s), c),
            );
            stages.push([first, second]);
            c_in = c;
        }
        let head = (
            b.conv("enc.head.conv", cfg.encoder_head, c_in, 1),
            b.norm("enc.head.norm", cfg.encoder_head),
        );
        let (h, w) = cfg.encoder_output_dims();
        let dense = b.dense(
            "enc.dense",
            cfg.embed_dim,
            cfg.encoder_head * h * w,
            Init::Orthogonal,
        );
        let norm = b.norm("enc.norm", cfg.embed_dim);
        EncoderParams::Context {
            stages,
            head,
            dense,
            norm,
        }
    } else {
        let dense = b.dense("enc.dense", cfg.embed_dim, cfg.n_bins, Init::Orthogonal);
        let norm = b.norm("enc.norm", cfg.embed_dim);
        EncoderParams::Frame { dense, norm }
    };
    let conditioner = if cfg.encoder.is_recurrent() {
        ConditionerParams::Lstm {
            w_ih: b.tensor(
                "lstm.w_ih",
                &[4 * cfg.hidden, cfg.embed_dim],
                Init::Orthogonal,
            ),
            w_hh: b.tensor("lstm.w_hh", &[4 * cfg.hidden, cfg.hidden], Init::Orthogonal),
            bias: b.tensor("lstm.bias", &[4 * cfg.hidden], Init::Zeros),
        }
    } else {
        ConditionerParams::Dense(b.dense("ntc.dense", cfg.hidden, cfg.embed_dim, Init::Orthogonal))
    };
    let mut blocks = Vec::new();
    for i in 0..cfg.n_blocks() {
        let letter = ModelConfig::block_letter(i);
        let c = cfg.block_channels(i);
        let (up, c_in) = if i == 0 {
            (None, 1)
        } else if i < cfg.depth {
            (None, cfg.block_channels(i - 1))
        } else {
            let below = cfg.block_channels(i - 1);
            // upsampled features are projected to `c` then concatenated with the skip
            (
                Some(b.conv(&format!("unet.{}.up", letter), c, below, 1)),
                2 * c,
            )
        };
        let conv1 = b.conv(&format!("unet.{}.conv1", letter), c, c_in, 3);
        let norm1 = b.norm(&format!("unet.{}.norm1", letter), c);
        let conv2 = b.conv(&format!("unet.{}.conv2", letter), c, c, 3);
        let norm2 = b.norm(&format!("unet.{}.norm2", letter), c);
        let film = cfg.has_film(i).then(|| FilmParams {
            scale: b.dense(
                &format!("unet.{}.film.scale", letter),
                c,
                cfg.hidden,
                Init::Zeros,
            ),
            shift: b.dense(
                &format!("unet.{}.film.shift", letter),
                c,
                cfg.hidden,
                Init::Zeros,
            ),
        });
        blocks.push(BlockParams {
            up,
            conv1,
            norm1,
            conv2,
            norm2,
            film,
        });
    }
    let output = b.conv("unet.out", 1, cfg.base_filters, 1);
    Layout {
        encoder,
        conditioner,
        blocks,
        output,
    }
}

/// Configuration, parameters and normalization statistics of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub layout: Layout,
    pub norm_stats: NormStats,
}

/// Padded page ready for the U-Net.
#[derive(Debug, Clone, PartialEq)]
pub struct PageInput<T> {
    pub padded: Tensor<T>,
    pub height: usize,
    pub width: usize,
}

impl<T: Real> Model<T> {
    /// Orthogonal weights, zero biases, unit norm gains, zero FiLM layers.
    pub fn init(
        config: ModelConfig,
        norm_stats: NormStats,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut b = Builder {
            store: ParamStore::new(),
            rng: rng::split(seed, "init"),
        };
        let layout = build_layout(&config, &mut b);
        Ok(Self {
            config,
            params: b.store,
            layout,
            norm_stats,
        })
    }

    /// Rebuilds a model from named tensors, checking names and shapes.
    pub fn from_tensors(
        config: ModelConfig,
        norm_stats: NormStats,
        tensors: Vec<(alloc::string::String, Tensor<T>)>,
    ) -> Result<Self, ConfigError> {
        let mut model = Self::init(config, norm_stats, 0)?;
        if tensors.len() != model.params.len() {
            return Err(ConfigError(format!(
                "expected {} tensors, got {}",
                model.params.len(),
                tensors.len()
            )));
        }
        for (id, (name, t)) in model
            .params
            .ids()
            .collect::<Vec<_>>()
            .into_iter()
            .zip(tensors)
        {
            if model.params.name(id) != name || model.params.get(id).shape() != t.shape() {
                return Err(ConfigError(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    name,
                    t.shape(),
                    model.params.name(id),
                    model.params.get(id).shape()
                )));
            }
            *model.params.get_mut(id) = t;
        }
        Ok(model)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
            norm_stats: self.norm_stats.clone(),
        }
    }

    /// Pads a `[H, W]` page (ink = 1) to the U-Net size multiple.
    pub fn prepare_page(&self, page: &Tensor<T>) -> Result<PageInput<T>, GraphError> {
        let shape = page.shape();
        let (h, w) = match shape[..] {
            [h, w] | [1, h, w] => (h, w),
            _ => {
                return Err(shape_error(
                    "page",
                    format!("expected [H,W], got {:?}", shape),
                ))
            }
        };
        let min = self.config.min_page_size();
        if h < min || w < min {
            return Err(shape_error(
                "page",
                format!("page {}x{} smaller than {}x{}", h, w, min, min),
            ));
        }
        let m = self.config.size_multiple();
        let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        let chw = page.clone().reshaped(&[1, h, w])?;
        Ok(PageInput {
            padded: reflect_pad(&chw, ph, pw)?,
            height: h,
            width: w,
        })
    }

    fn p(&self, g: &mut Graph<T>, id: ParamId) -> NodeId {
        g.param(&self.params, id)
    }

    fn conv(&self, g: &mut Graph<T>, x: NodeId, c: &ConvParams) -> Result<NodeId, GraphError> {
        let (w, b) = (self.p(g, c.weight), self.p(g, c.bias));
        g.conv2d(x, w, b, c.pad, 1)
    }

    fn norm(&self, g: &mut Graph<T>, x: NodeId, n: &NormParams) -> Result<NodeId, GraphError> {
        let (gain, bias) = (self.p(g, n.gain), self.p(g, n.bias));
        g.layer_norm(x, gain, bias)
    }

    fn dense(&self, g: &mut Graph<T>, x: NodeId, d: &DenseParams) -> Result<NodeId, GraphError> {
        let (w, b) = (self.p(g, d.weight), self.p(g, d.bias));
        g.dense(x, w, Some(b))
    }

    fn conv_norm_elu(
        &self,
        g: &mut Graph<T>,
        x: NodeId,
        c: &(ConvParams, NormParams),
    ) -> Result<NodeId, GraphError> {
        let y = self.conv(g, x, &c.0)?;
        let y = self.norm(g, y, &c.1)?;
        Ok(g.elu(y))
    }

    /// Context-based encoder on a `[1, bins, frames]` window.
    pub fn encode_window(&self, g: &mut Graph<T>, window: NodeId) -> Result<NodeId, GraphError> {
        Ok(self.encode_window_traced(g, window)?.0)
    }

    /// [`Self::encode_window`] that also returns the shape after every
    /// conv-pool stage, after the head conv and of the embedding.
    pub fn encode_window_traced(
        &self,
        g: &mut Graph<T>,
        window: NodeId,
    ) -> Result<(NodeId, Vec<Vec<usize>>), GraphError> {
        let EncoderParams::Context {
            stages,
            head,
            dense,
            norm,
        } = &self.layout.encoder
        else {
            return Err(shape_error(
                "encode_window",
                "model has a frame-based encoder".into(),
            ));
        };
        let expect = [1, self.config.n_bins, self.config.window_frames];
        if g.value(window).shape() != expect {
            return Err(shape_error(
                "encode_window",
                format!(
                    "window {:?}, expected {:?}",
                    g.value(window).shape(),
                    expect
                ),
            ));
        }
        let mut x = window;
        let mut trace = Vec::with_capacity(stages.len() + 2);
        for stage in stages {
            x = self.conv_norm_elu(g, x, &stage[0])?;
            x = self.conv_norm_elu(g, x, &stage[1])?;
            x = g.max_pool2(x)?;
            trace.push(g.value(x).shape().to_vec());
        }
        x = self.conv_norm_elu(g, x, head)?;
        trace.push(g.value(x).shape().to_vec());
        let e = self.dense(g, x, dense)?;
        let e = self.norm(g, e, norm)?;
        let e = g.elu(e);
        trace.push(g.value(e).shape().to_vec());
        Ok((e, trace))
    }

    /// Frame-based encoder on a single spectrogram frame.
    pub fn encode_frame(&self, g: &mut Graph<T>, frame: NodeId) -> Result<NodeId, GraphError> {
        let EncoderParams::Frame { dense, norm } = &self.layout.encoder else {
            return Err(shape_error(
                "encode_frame",
                "model has a context-based encoder".into(),
            ));
        };
        if g.value(frame).len() != self.config.n_bins {
            return Err(shape_error(
                "encode_frame",
                format!("frame of {} bins", g.value(frame).len()),
            ));
        }
        let e = self.dense(g, frame, dense)?;
        let e = self.norm(g, e, norm)?;
        Ok(g.elu(e))
    }

    /// Encodes the audio input of one step: a `[1, bins, frames]` window
    /// for context encoders, a `[bins]` frame otherwise.
    pub fn encode(&self, g: &mut Graph<T>, audio: NodeId) -> Result<NodeId, GraphError> {
        if self.config.encoder.uses_window() {
            self.encode_window(g, audio)
        } else {
            self.encode_frame(g, audio)
        }
    }

    /// One conditioning step. `state` is `(h, c)`; the returned state is
    /// unchanged for the dense (no temporal context) conditioner.
    pub fn condition_step(
        &self,
        g: &mut Graph<T>,
        embedding: NodeId,
        state: (NodeId, NodeId),
    ) -> Result<(NodeId, (NodeId, NodeId)), GraphError> {
        match &self.layout.conditioner {
            ConditionerParams::Lstm { w_ih, w_hh, bias } => {
                let p = LstmParams {
                    w_ih: self.p(g, *w_ih),
                    w_hh: self.p(g, *w_hh),
                    bias: self.p(g, *bias),
                };
                let (h, c) = g.lstm_step(embedding, state.0, state.1, &p)?;
                Ok((h, (h, c)))
            }
            ConditionerParams::Dense(d) => Ok((self.dense(g, embedding, d)?, state)),
        }
    }

    pub fn zero_state(&self, g: &mut Graph<T>) -> (NodeId, NodeId) {
        let h = g.input(Tensor::zeros(&[self.config.hidden]));
        let c = g.input(Tensor::zeros(&[self.config.hidden]));
        (h, c)
    }

    /// `s(z) * x + t(z)` per feature map, with `s = 1 + dense_s(z)`.
    pub fn film_apply(
        &self,
        g: &mut Graph<T>,
        x: NodeId,
        z: NodeId,
        film: &FilmParams,
    ) -> Result<NodeId, GraphError> {
        let k = g.value(x).shape()[0];
        if self.params.get(film.scale.bias).len() != k {
            return Err(shape_error(
                "film",
                format!(
                    "FiLM for {} maps applied to {}",
                    self.params.get(film.scale.bias).len(),
                    k
                ),
            ));
        }
        let s = self.dense(g, z, &film.scale)?;
        let s = g.add_scalar(s, T::ONE);
        let t = self.dense(g, z, &film.shift)?;
        g.channel_affine(x, s, t)
    }

    fn block(
        &self,
        g: &mut Graph<T>,
        x: NodeId,
        z: Option<NodeId>,
        b: &BlockParams,
    ) -> Result<NodeId, GraphError> {
        let y = self.conv(g, x, &b.conv1)?;
        let y = self.norm(g, y, &b.norm1)?;
        let y = g.elu(y);
        let y = self.conv(g, y, &b.conv2)?;
        let mut y = self.norm(g, y, &b.norm2)?;
        if let (Some(film), Some(z)) = (&b.film, z) {
            y = self.film_apply(g, y, z, film)?;
        }
        Ok(g.elu(y))
    }

    /// Block A on the padded page. It carries no conditioning, so one
    /// evaluation can be shared by every step on the same page.
    pub fn unet_stem(&self, g: &mut Graph<T>, page: NodeId) -> Result<NodeId, GraphError> {
        let shape = g.value(page).shape();
        let m = self.config.size_multiple();
        if shape.len() != 3 || shape[0] != 1 || shape[1] % m != 0 || shape[2] % m != 0 {
            return Err(shape_error(
                "unet",
                format!("padded page {:?} not a multiple of {}", shape, m),
            ));
        }
        let first = &self.layout.blocks[0];
        let z = None;
        if first.film.is_some() {
            return Err(shape_error(
                "unet",
                "block A must not be conditioned to be shared".into(),
            ));
        }
        self.block(g, page, z, first)
    }

    /// Remaining blocks after [`unet_stem`](Self::unet_stem); returns the
    /// `[1, height, width]` probability map.
    pub fn unet_head(
        &self,
        g: &mut Graph<T>,
        stem: NodeId,
        z: NodeId,
        height: usize,
        width: usize,
    ) -> Result<NodeId, GraphError> {
        let depth = self.config.depth;
        let blocks = &self.layout.blocks;
        let mut skips = Vec::with_capacity(depth);
        skips.push(stem);
        let mut x = stem;
        for b in &blocks[1..depth] {
            let pooled = g.max_pool2(x)?;
            x = self.block(g, pooled, Some(z), b)?;
            skips.push(x);
        }
        skips.pop();
        for b in &blocks[depth..] {
            let up = g.upsample2(x)?;
            let up = self.conv(g, up, b.up.as_ref().expect("decoder block has an up conv"))?;
            let skip = skips.pop().expect("mirror block");
            let cat = g.concat_channels(up, skip)?;
            x = self.block(g, cat, Some(z), b)?;
        }
        let logits = self.conv(g, x, &self.layout.output)?;
        let logits = g.crop(logits, height, width)?;
        Ok(g.sigmoid(logits))
    }

    /// Full U-Net forward pass on a prepared page.
    pub fn unet_forward(
        &self,
        g: &mut Graph<T>,
        page: &PageInput<T>,
        z: NodeId,
    ) -> Result<NodeId, GraphError> {
        let p = g.input(page.padded.clone());
        let stem = self.unet_stem(g, p)?;
        self.unet_head(g, stem, z, page.height, page.width)
    }
}

fn shape_error(op: &'static str, detail: alloc::string::String) -> GraphError {
    GraphError::Shape(crate::tensor::ShapeError::new(op, detail))
}
