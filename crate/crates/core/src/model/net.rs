use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, TrainConfig, GEOMETRY_DIMS};
use super::encoding::{encode_geometry, position_table, NormBounds};
use crate::data::LayoutMask;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::scalar::Scalar;

const NEG_INF_MASK: f64 = -1e9;

#[derive(Clone, Debug)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Debug)]
struct Block {
    ln1: Norm,
    qkv: Linear,
    proj: Linear,
    ln2: Norm,
    fc: Linear,
    out: Linear,
}

#[derive(Clone, Debug)]
struct LayoutIds {
    patch: Linear,
    cls: ParamId,
    pos: ParamId,
    blocks: Vec<Block>,
    ln: Norm,
    head1: Linear,
    head2: Linear,
}

#[derive(Clone, Debug)]
struct Ids {
    layout: LayoutIds,
    input: Linear,
    blocks: Vec<Block>,
    ln: Norm,
    class_table: ParamId,
    mask_token: ParamId,
    class_head: Linear,
    geo1: Linear,
    geo2: Linear,
}

struct Builder<'a, T: Scalar> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
    std: f64,
}

impl<T: Scalar> Builder<'_, T> {
    fn tensor(&mut self, name: String, shape: Vec<usize>, init: Init) -> Result<ParamId> {
        let a = self.std * 3f64.sqrt();
        let rng = &mut self.rng;
        let t = match init {
            Init::Random => Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-a..a))),
            Init::Const(v) => Tensor::full(shape, T::lit(v)),
        };
        self.store.add(name, t)
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        Ok(Linear {
            w: self.tensor(format!("{name}.w"), vec![fan_in, fan_out], Init::Random)?,
            b: self.tensor(format!("{name}.b"), vec![fan_out], Init::Const(0.0))?,
        })
    }

    fn norm(&mut self, name: &str, dim: usize) -> Result<Norm> {
        Ok(Norm {
            gamma: self.tensor(format!("{name}.gamma"), vec![dim], Init::Const(1.0))?,
            beta: self.tensor(format!("{name}.beta"), vec![dim], Init::Const(0.0))?,
        })
    }

    fn block(&mut self, name: &str, dim: usize, ff: usize) -> Result<Block> {
        Ok(Block {
            ln1: self.norm(&format!("{name}.ln1"), dim)?,
            qkv: self.linear(&format!("{name}.qkv"), dim, 3 * dim)?,
            proj: self.linear(&format!("{name}.proj"), dim, dim)?,
            ln2: self.norm(&format!("{name}.ln2"), dim)?,
            fc: self.linear(&format!("{name}.fc"), dim, ff * dim)?,
            out: self.linear(&format!("{name}.out"), ff * dim, dim)?,
        })
    }
}

#[derive(Clone, Copy)]
enum Init {
    Random,
    Const(f64),
}

/// Autoregressive layout model: a patch transformer turns the floor mask
/// into a start token, a causal decoder reads object tokens, and two heads
/// predict the next class and that object's geometry.
#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub vocab: Vec<String>,
    pub bounds: NormBounds,
    /// Settings of the run that produced these weights, if any.
    pub train_config: Option<TrainConfig>,
    params: ParamStore<T>,
    ids: Ids,
}

/// Input for one teacher-forced pass.
#[derive(Clone, Debug)]
pub struct SequenceInput<T> {
    pub mask: LayoutMask,
    /// Normalized attributes of each object, in sequence order.
    pub geometry: Vec<[T; GEOMETRY_DIMS]>,
    /// Class ids fed to the network (possibly noised).
    pub forced_classes: Vec<usize>,
    /// Positions whose token is replaced by the learned mask token.
    pub masked: Vec<bool>,
}

/// Per-scene loss terms.
#[derive(Clone, Debug)]
pub struct SceneLoss {
    pub total: Var,
    pub class_nll: f64,
    pub geometry_nll: f64,
    /// Class logits, `[n + 1, C + 1]`.
    pub logits: Var,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, vocab: Vec<String>, bounds: NormBounds, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::EmptyInput("class vocabulary"));
        }
        let mut params = ParamStore::new();
        let ids = register(&config, vocab.len(), &mut params, seed)?;
        Ok(Self {
            config,
            vocab,
            bounds,
            train_config: None,
            params,
            ids,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.vocab.len()
    }

    /// Index of the end-of-scene class in the logits.
    pub fn end_class(&self) -> usize {
        self.vocab.len()
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.vocab.iter().position(|c| c == name)
    }

    /// Scalars in the layout encoder.
    pub fn layout_encoder_params(&self) -> usize {
        self.params.num_scalars_with_prefix("layout.")
    }

    fn check_mask(&self, mask: &LayoutMask) -> Result<()> {
        let r = self.config.layout_resolution;
        if mask.resolution != r || mask.cells.len() != r * r {
            return Err(Error::ShapeMismatch {
                op: "encode_layout",
                lhs: vec![r, r],
                rhs: vec![mask.resolution, mask.cells.len() / mask.resolution.max(1)],
            });
        }
        Ok(())
    }

    /// Start token `[1, token_dim]` from a floor mask.
    pub fn encode_layout(&self, g: &mut Graph<'_, T>, mask: &LayoutMask) -> Result<Var> {
        self.check_mask(mask)?;
        let c = &self.config;
        let (res, p) = (c.layout_resolution, c.layout_patch);
        let side = res / p;
        let mut patches = Vec::with_capacity(side * side * p * p);
        for pr in 0..side {
            for pc in 0..side {
                for r in 0..p {
                    for q in 0..p {
                        patches.push(T::lit(mask.get(pr * p + r, pc * p + q) as f64));
                    }
                }
            }
        }
        let ids = &self.ids.layout;
        let x = g.input(Tensor::new(vec![side * side, p * p], patches)?);
        let x = linear(g, x, &ids.patch)?;
        let cls = g.param(ids.cls);
        let x = g.concat_rows(&[cls, x])?;
        let pos = g.param(ids.pos);
        let mut x = g.add(x, pos)?;
        for b in &ids.blocks {
            x = block(g, x, b, c.layout_heads, c.dropout, None)?;
        }
        let first = g.slice_rows(x, 0, 1)?;
        let h = layer_norm(g, first, &ids.ln)?;
        let h = linear(g, h, &ids.head1)?;
        let h = g.tanh(h);
        linear(g, h, &ids.head2)
    }

    /// Object tokens `[n, token_dim]`: class embedding then attribute encoding.
    pub fn object_tokens(&self, g: &mut Graph<'_, T>, classes: &[usize], geometry: &[[T; GEOMETRY_DIMS]]) -> Result<Var> {
        let table = g.param(self.ids.class_table);
        let emb = g.embedding(table, classes)?;
        let f = self.config.encoding_frequencies;
        let feats: Vec<T> = geometry.iter().flat_map(|h| encode_geometry(h, f)).collect();
        let width = GEOMETRY_DIMS * 2 * f;
        let feats = g.input(Tensor::new(vec![geometry.len(), width], feats)?);
        g.concat_cols(&[emb, feats])
    }

    /// Decoder contexts `[len, hidden]` for a token sequence `[len, token_dim]`.
    pub fn decode(&self, g: &mut Graph<'_, T>, tokens: Var) -> Result<Var> {
        let c = &self.config;
        let len = g.shape(tokens)[0];
        if len > c.max_len + 1 {
            return Err(Error::TooLong {
                len: len - 1,
                max: c.max_len,
            });
        }
        let x = linear(g, tokens, &self.ids.input)?;
        let pe = g.input(Tensor::new(vec![len, c.hidden], position_table(len, c.hidden))?);
        let x = g.add(x, pe)?;
        let mut x = g.dropout(x, c.dropout);
        let mut causal = vec![T::zero(); len * len];
        for i in 0..len {
            for j in i + 1..len {
                causal[i * len + j] = T::lit(NEG_INF_MASK);
            }
        }
        let causal = g.input(Tensor::new(vec![len, len], causal)?);
        for b in &self.ids.blocks {
            x = block(g, x, b, c.decoder_heads, c.dropout, Some(causal))?;
        }
        layer_norm(g, x, &self.ids.ln)
    }

    /// Full token sequence: start token, then objects with masked positions
    /// swapped for the mask token.
    pub fn sequence(&self, g: &mut Graph<'_, T>, input: &SequenceInput<T>) -> Result<Var> {
        let n = input.geometry.len();
        if input.forced_classes.len() != n || (!input.masked.is_empty() && input.masked.len() != n) {
            return Err(Error::ShapeMismatch {
                op: "sequence",
                lhs: vec![n],
                rhs: vec![input.forced_classes.len(), input.masked.len()],
            });
        }
        let start = self.encode_layout(g, &input.mask)?;
        if n == 0 {
            return Ok(start);
        }
        let tokens = self.object_tokens(g, &input.forced_classes, &input.geometry)?;
        let mut parts = vec![start];
        if input.masked.iter().any(|&m| m) {
            let mask_token = g.param(self.ids.mask_token);
            let mut run_start = 0;
            for i in 0..=n {
                let boundary = i == n || input.masked[i];
                if boundary {
                    if run_start < i {
                        parts.push(g.slice_rows(tokens, run_start, i)?);
                    }
                    if i < n {
                        parts.push(mask_token);
                    }
                    run_start = i + 1;
                }
            }
        } else {
            parts.push(tokens);
        }
        g.concat_rows(&parts)
    }

    /// Class logits `[rows, C + 1]`.
    pub fn class_logits(&self, g: &mut Graph<'_, T>, ctx: Var) -> Result<Var> {
        linear(g, ctx, &self.ids.class_head)
    }

    /// Mixture parameters `[rows * 7, 3K]` given contexts and the class of
    /// the object being predicted at each row.
    pub fn geometry_params(&self, g: &mut Graph<'_, T>, ctx: Var, classes: &[usize]) -> Result<Var> {
        let table = g.param(self.ids.class_table);
        let emb = g.embedding(table, classes)?;
        let x = g.concat_cols(&[ctx, emb])?;
        let h = linear(g, x, &self.ids.geo1)?;
        let h = g.gelu(h);
        let out = linear(g, h, &self.ids.geo2)?;
        let k3 = 3 * self.config.mixture_components;
        g.reshape(out, vec![classes.len() * GEOMETRY_DIMS, k3])
    }

    /// Teacher-forced negative log-likelihood of one ordered scene: class
    /// cross-entropy for every object and the end token, plus the
    /// discretized mixture terms for every attribute.
    pub fn scene_loss(&self, g: &mut Graph<'_, T>, input: &SequenceInput<T>, targets: &[usize]) -> Result<SceneLoss> {
        let n = input.geometry.len();
        if targets.len() != n {
            return Err(Error::ShapeMismatch {
                op: "scene_loss",
                lhs: vec![n],
                rhs: vec![targets.len()],
            });
        }
        if n > self.config.max_len {
            return Err(Error::TooLong {
                len: n,
                max: self.config.max_len,
            });
        }
        let seq = self.sequence(g, input)?;
        let ctx = self.decode(g, seq)?;
        let logits = self.class_logits(g, ctx)?;
        let mut class_targets = targets.to_vec();
        class_targets.push(self.end_class());
        let ce = g.cross_entropy(logits, &class_targets)?;
        let ce = g.sum(ce);
        let class_nll = g.scalar(ce).as_f64();
        if n == 0 {
            return Ok(SceneLoss {
                total: ce,
                class_nll,
                geometry_nll: 0.0,
                logits,
            });
        }
        let obj_ctx = g.slice_rows(ctx, 0, n)?;
        let mix = self.geometry_params(g, obj_ctx, &input.forced_classes)?;
        let geo_targets: Vec<T> = input.geometry.iter().flatten().copied().collect();
        let nll = g.mixture_nll(mix, &geo_targets, self.config.bins)?;
        let nll = g.sum(nll);
        let geometry_nll = g.scalar(nll).as_f64();
        let both = g.concat_rows(&[ce, nll])?;
        let total = g.sum(both);
        Ok(SceneLoss {
            total,
            class_nll,
            geometry_nll,
            logits,
        })
    }
}

fn register<T: Scalar>(c: &ModelConfig, num_classes: usize, store: &mut ParamStore<T>, seed: u64) -> Result<Ids> {
    let mut b = Builder {
        store,
        rng: ChaCha8Rng::seed_from_u64(seed),
        std: c.init_std,
    };
    let token = c.token_dim();
    let (ld, p) = (c.layout_dim, c.layout_patch);
    let layout = LayoutIds {
        patch: b.linear("layout.patch", p * p, ld)?,
        cls: b.tensor("layout.cls".into(), vec![1, ld], Init::Random)?,
        pos: b.tensor("layout.pos".into(), vec![c.num_patches() + 1, ld], Init::Random)?,
        blocks: (0..c.layout_layers)
            .map(|i| b.block(&format!("layout.block{i}"), ld, c.ff_mult))
            .collect::<Result<_>>()?,
        ln: b.norm("layout.ln", ld)?,
        head1: b.linear("layout.head1", ld, token)?,
        head2: b.linear("layout.head2", token, token)?,
    };
    let input = b.linear("decoder.input", token, c.hidden)?;
    let blocks = (0..c.decoder_layers)
        .map(|i| b.block(&format!("decoder.block{i}"), c.hidden, c.ff_mult))
        .collect::<Result<_>>()?;
    let ln = b.norm("decoder.ln", c.hidden)?;
    let class_table = b.tensor("class_embedding".into(), vec![num_classes, c.class_dim], Init::Random)?;
    let mask_token = b.tensor("mask_token".into(), vec![1, token], Init::Random)?;
    let class_head = b.linear("head.class", c.hidden, num_classes + 1)?;
    let geo1 = b.linear("head.geometry1", c.hidden + c.class_dim, c.geometry_hidden)?;
    let geo2 = b.linear("head.geometry2", c.geometry_hidden, GEOMETRY_DIMS * 3 * c.mixture_components)?;
    // spread component means over the range and start with moderate scales
    let k = c.mixture_components;
    let bias = b.store.get_mut(geo2.b).data_mut();
    for d in 0..GEOMETRY_DIMS {
        for j in 0..k {
            let mean = if k == 1 { 0.0 } else { -0.9 + 1.8 * j as f64 / (k - 1) as f64 };
            bias[d * 3 * k + k + j] = T::lit(mean);
            bias[d * 3 * k + 2 * k + j] = T::lit(0.1f64.ln());
        }
    }
    Ok(Ids {
        layout,
        input,
        blocks,
        ln,
        class_table,
        mask_token,
        class_head,
        geo1,
        geo2,
    })
}

fn linear<T: Scalar>(g: &mut Graph<'_, T>, x: Var, l: &Linear) -> Result<Var> {
    let (w, b) = (g.param(l.w), g.param(l.b));
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

fn layer_norm<T: Scalar>(g: &mut Graph<'_, T>, x: Var, n: &Norm) -> Result<Var> {
    let (gamma, beta) = (g.param(n.gamma), g.param(n.beta));
    g.layer_norm(x, gamma, beta)
}

fn block<T: Scalar>(g: &mut Graph<'_, T>, x: Var, b: &Block, heads: usize, dropout: f64, causal: Option<Var>) -> Result<Var> {
    let dim = g.shape(x)[1];
    let dh = dim / heads;
    let h = layer_norm(g, x, &b.ln1)?;
    let qkv = linear(g, h, &b.qkv)?;
    let scale = T::lit(1.0 / (dh as f64).sqrt());
    let mut outs = Vec::with_capacity(heads);
    for i in 0..heads {
        let q = g.slice_cols(qkv, i * dh, (i + 1) * dh)?;
        let k = g.slice_cols(qkv, dim + i * dh, dim + (i + 1) * dh)?;
        let v = g.slice_cols(qkv, 2 * dim + i * dh, 2 * dim + (i + 1) * dh)?;
        let s = g.matmul_t(q, k)?;
        let mut s = g.scale(s, scale);
        if let Some(m) = causal {
            s = g.add(s, m)?;
        }
        let a = g.softmax(s);
        let a = g.dropout(a, dropout);
        outs.push(g.matmul(a, v)?);
    }
    let att = g.concat_cols(&outs)?;
    let att = linear(g, att, &b.proj)?;
    let att = g.dropout(att, dropout);
    let x = g.add(x, att)?;
    let h = layer_norm(g, x, &b.ln2)?;
    let h = linear(g, h, &b.fc)?;
    let h = g.gelu(h);
    let h = linear(g, h, &b.out)?;
    let h = g.dropout(h, dropout);
    g.add(x, h)
}
