use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{
    apply_mask, attention_weights, attention_weights_backward, dropout_mask, gelu, gelu_grad, layer_norm,
    layer_norm_backward, Normalized,
};
use super::tensor::Mat;
use super::vocab::TokenSequence;
use super::EncoderConfig;
use crate::baselines::{cross_entropy, softmax};
use crate::error::{Error, Result};
use crate::market::PerformanceClass;

const INIT_STD: f64 = 0.02;
/// Unit scale: there is no embedding layer norm, so this matches the
/// normalized residual stream the layers see after the first block.
const EMBEDDING_INIT_STD: f64 = 1.0;

/// `y = x W + b` with `W` stored input-major (in x out).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Linear {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Mat::zeros(inputs, outputs),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &Mat) -> Mat {
        let mut y = x.matmul(&self.weight);
        y.add_row_vector(&self.bias);
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Linear) -> Mat {
        x.t_matmul_into(dy, &mut grad.weight);
        dy.col_sums_into(&mut grad.bias);
        dy.matmul_t(&self.weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub offset: Vec<f64>,
}

impl LayerNorm {
    fn zeros(dim: usize) -> Self {
        LayerNorm {
            gain: vec![0.0; dim],
            offset: vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub attn_norm: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub ff_norm: LayerNorm,
}

impl EncoderLayer {
    fn zeros(c: &EncoderConfig) -> Self {
        let d = c.d_model;
        EncoderLayer {
            query: Linear::zeros(d, d),
            key: Linear::zeros(d, d),
            value: Linear::zeros(d, d),
            attn_out: Linear::zeros(d, d),
            attn_norm: LayerNorm::zeros(d),
            ff_in: Linear::zeros(d, c.d_ff),
            ff_out: Linear::zeros(c.d_ff, d),
            ff_norm: LayerNorm::zeros(d),
        }
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_embedding: Mat,
    pub position_embedding: Mat,
    pub layers: Vec<EncoderLayer>,
    pub pooler: Linear,
    /// d_model x 3
    pub classifier: Linear,
}

/// Name, shape and weight-decay flag of one tensor, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: (usize, usize),
    pub decay: bool,
}

impl EncoderParams {
    pub fn zeros(c: &EncoderConfig) -> Self {
        EncoderParams {
            token_embedding: Mat::zeros(c.vocab_size, c.d_model),
            position_embedding: Mat::zeros(c.max_seq_len, c.d_model),
            layers: (0..c.n_layers).map(|_| EncoderLayer::zeros(c)).collect(),
            pooler: Linear::zeros(c.d_model, c.d_model),
            classifier: Linear::zeros(c.d_model, 3),
        }
    }

    /// Embeddings from N(0, 1), other weights from N(0, 0.02), zero biases,
    /// unit layer-norm gains.
    pub fn init(c: &EncoderConfig) -> Self {
        let mut p = Self::zeros(c);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let embedding = Normal::new(0.0, EMBEDDING_INIT_STD).expect("valid std");
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        for (info, t) in Self::layout(c).iter().zip(p.tensors_mut()) {
            if info.name.ends_with(".gain") {
                t.fill(1.0);
            } else if info.name.starts_with("embeddings.") {
                t.iter_mut().for_each(|v| *v = embedding.sample(&mut rng));
            } else if info.decay {
                t.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            }
        }
        p
    }

    /// Tensor names and shapes in the order of [`tensors`](Self::tensors).
    pub fn layout(c: &EncoderConfig) -> Vec<TensorInfo> {
        let d = c.d_model;
        let mut out = Vec::new();
        let mut push = |name: String, shape: (usize, usize), decay: bool| out.push(TensorInfo { name, shape, decay });
        push("embeddings.token".into(), (c.vocab_size, d), true);
        push("embeddings.position".into(), (c.max_seq_len, d), true);
        for l in 0..c.n_layers {
            for (name, shape) in [
                ("query", (d, d)),
                ("key", (d, d)),
                ("value", (d, d)),
                ("attn_out", (d, d)),
            ] {
                push(format!("layer{l}.{name}.weight"), shape, true);
                push(format!("layer{l}.{name}.bias"), (1, shape.1), false);
            }
            push(format!("layer{l}.attn_norm.gain"), (1, d), false);
            push(format!("layer{l}.attn_norm.offset"), (1, d), false);
            push(format!("layer{l}.ff_in.weight"), (d, c.d_ff), true);
            push(format!("layer{l}.ff_in.bias"), (1, c.d_ff), false);
            push(format!("layer{l}.ff_out.weight"), (c.d_ff, d), true);
            push(format!("layer{l}.ff_out.bias"), (1, d), false);
            push(format!("layer{l}.ff_norm.gain"), (1, d), false);
            push(format!("layer{l}.ff_norm.offset"), (1, d), false);
        }
        push("pooler.weight".into(), (d, d), true);
        push("pooler.bias".into(), (1, d), false);
        push("classifier.weight".into(), (d, 3), true);
        push("classifier.bias".into(), (1, 3), false);
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.token_embedding.data, &self.position_embedding.data];
        for l in &self.layers {
            for lin in [&l.query, &l.key, &l.value, &l.attn_out] {
                out.push(&lin.weight.data);
                out.push(&lin.bias);
            }
            out.push(&l.attn_norm.gain);
            out.push(&l.attn_norm.offset);
            out.push(&l.ff_in.weight.data);
            out.push(&l.ff_in.bias);
            out.push(&l.ff_out.weight.data);
            out.push(&l.ff_out.bias);
            out.push(&l.ff_norm.gain);
            out.push(&l.ff_norm.offset);
        }
        out.push(&self.pooler.weight.data);
        out.push(&self.pooler.bias);
        out.push(&self.classifier.weight.data);
        out.push(&self.classifier.bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.token_embedding.data, &mut self.position_embedding.data];
        for l in &mut self.layers {
            for lin in [&mut l.query, &mut l.key, &mut l.value, &mut l.attn_out] {
                out.push(&mut lin.weight.data);
                out.push(&mut lin.bias);
            }
            out.push(&mut l.attn_norm.gain);
            out.push(&mut l.attn_norm.offset);
            out.push(&mut l.ff_in.weight.data);
            out.push(&mut l.ff_in.bias);
            out.push(&mut l.ff_out.weight.data);
            out.push(&mut l.ff_out.bias);
            out.push(&mut l.ff_norm.gain);
            out.push(&mut l.ff_norm.offset);
        }
        out.push(&mut self.pooler.weight.data);
        out.push(&mut self.pooler.bias);
        out.push(&mut self.classifier.weight.data);
        out.push(&mut self.classifier.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active, drawn from a generator seeded with `seed`.
    Train { seed: u64 },
}

struct LayerCache {
    input: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    probs: Vec<Mat>,
    prob_masks: Vec<Option<Vec<f64>>>,
    context: Mat,
    attn_mask: Option<Vec<f64>>,
    attn_norm: Normalized,
    hidden: Mat,
    ff_pre: Mat,
    ff_act: Mat,
    ff_mask: Option<Vec<f64>>,
    ff_norm: Normalized,
}

pub(crate) struct ForwardCache {
    ids: Vec<u32>,
    emb_mask: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    cls: Vec<f64>,
    pooled: Vec<f64>,
    pooled_mask: Option<Vec<f64>>,
    pooled_dropped: Vec<f64>,
    pub(crate) logits: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    config: EncoderConfig,
    params: EncoderParams,
}

impl EncoderModel {
    /// Seeded random initialization.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let params = EncoderParams::init(&config);
        Ok(EncoderModel { config, params })
    }

    pub fn from_parts(config: EncoderConfig, params: EncoderParams) -> Result<Self> {
        config.validate()?;
        let layout = EncoderParams::layout(&config);
        let tensors = params.tensors();
        if layout.len() != tensors.len()
            || layout.iter().zip(&tensors).any(|(i, t)| i.shape.0 * i.shape.1 != t.len())
        {
            return Err(Error::Data("parameter shapes do not match the encoder config".into()));
        }
        if !params.is_finite() {
            return Err(Error::Data("encoder parameters contain non-finite values".into()));
        }
        Ok(EncoderModel { config, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut EncoderParams {
        &mut self.params
    }

    pub fn into_parts(self) -> (EncoderConfig, EncoderParams) {
        (self.config, self.params)
    }

    pub fn forward(&self, seq: &TokenSequence, mode: Mode) -> Result<[f64; 3]> {
        let mut rng = match mode {
            Mode::Eval => None,
            Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        Ok(self.forward_cached(seq, rng.as_mut())?.logits)
    }

    pub fn predict_proba(&self, seq: &TokenSequence) -> Result<[f64; 3]> {
        Ok(softmax(&self.forward(seq, Mode::Eval)?))
    }

    /// Eval-mode cross-entropy and its full parameter gradient.
    pub fn loss_and_gradient(&self, seq: &TokenSequence, label: PerformanceClass) -> Result<(f64, EncoderParams)> {
        let cache = self.forward_cached(seq, None)?;
        let mut grad = EncoderParams::zeros(&self.config);
        let loss = self.backward(&cache, label, 1.0, &mut grad);
        Ok((loss, grad))
    }

    fn check_sequence(&self, seq: &TokenSequence) -> Result<()> {
        if seq.len() > self.config.max_seq_len {
            return Err(Error::Usage(format!(
                "sequence of {} tokens exceeds max_seq_len {}",
                seq.len(),
                self.config.max_seq_len
            )));
        }
        if let Some(&id) = seq.ids().iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::Usage(format!("token id {id} outside vocabulary of {}", self.config.vocab_size)));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, seq: &TokenSequence, mut rng: Option<&mut ChaCha8Rng>) -> Result<ForwardCache> {
        self.check_sequence(seq)?;
        let c = &self.config;
        let p = &self.params;
        let (n, d) = (seq.len(), c.d_model);
        let mut x = Mat::zeros(n, d);
        for (i, &id) in seq.ids().iter().enumerate() {
            for ((o, &t), &pos) in x
                .row_mut(i)
                .iter_mut()
                .zip(p.token_embedding.row(id as usize))
                .zip(p.position_embedding.row(i))
            {
                *o = t + pos;
            }
        }
        let emb_mask = dropout_mask(n * d, c.dropout, rng.as_deref_mut());
        apply_mask(&mut x.data, emb_mask.as_ref());

        let mut layers = Vec::with_capacity(p.layers.len());
        for layer in &p.layers {
            let (out, cache) = self.layer_forward(layer, x, seq.mask(), &mut rng);
            layers.push(cache);
            x = out;
        }

        let cls = x.row(0).to_vec();
        let pre = p.pooler.forward(&Mat::from_vec(1, d, cls.clone()));
        let pooled: Vec<f64> = pre.data.iter().map(|v| v.tanh()).collect();
        let pooled_mask = dropout_mask(d, c.dropout, rng);
        let mut pooled_dropped = pooled.clone();
        apply_mask(&mut pooled_dropped, pooled_mask.as_ref());
        let out = p.classifier.forward(&Mat::from_vec(1, d, pooled_dropped.clone()));
        let logits = [out.data[0], out.data[1], out.data[2]];
        Ok(ForwardCache {
            ids: seq.ids().to_vec(),
            emb_mask,
            layers,
            cls,
            pooled,
            pooled_mask,
            pooled_dropped,
            logits,
        })
    }

    fn layer_forward(
        &self,
        layer: &EncoderLayer,
        x: Mat,
        mask: &[u8],
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> (Mat, LayerCache) {
        let c = &self.config;
        let (n, dh) = (x.rows, c.head_dim());
        let q = layer.query.forward(&x);
        let k = layer.key.forward(&x);
        let v = layer.value.forward(&x);
        let mut context = Mat::zeros(n, c.d_model);
        let mut probs = Vec::with_capacity(c.n_heads);
        let mut prob_masks = Vec::with_capacity(c.n_heads);
        for h in 0..c.n_heads {
            let vh = v.columns(h * dh, dh);
            let ph = attention_weights(&q.columns(h * dh, dh), &k.columns(h * dh, dh), mask);
            let pm = dropout_mask(n * n, c.dropout, rng.as_deref_mut());
            let ctx = if pm.is_some() {
                let mut dropped = ph.clone();
                apply_mask(&mut dropped.data, pm.as_ref());
                dropped.matmul(&vh)
            } else {
                ph.matmul(&vh)
            };
            context.set_columns(h * dh, &ctx);
            probs.push(ph);
            prob_masks.push(pm);
        }
        let mut a = layer.attn_out.forward(&context);
        let attn_mask = dropout_mask(a.data.len(), c.dropout, rng.as_deref_mut());
        apply_mask(&mut a.data, attn_mask.as_ref());
        a.add_assign(&x);
        let (hidden, attn_norm) = layer_norm(&a, &layer.attn_norm.gain, &layer.attn_norm.offset);

        let ff_pre = layer.ff_in.forward(&hidden);
        let ff_act = Mat::from_vec(ff_pre.rows, ff_pre.cols, ff_pre.data.iter().map(|&v| gelu(v)).collect());
        let mut f = layer.ff_out.forward(&ff_act);
        let ff_mask = dropout_mask(f.data.len(), c.dropout, rng.as_deref_mut());
        apply_mask(&mut f.data, ff_mask.as_ref());
        f.add_assign(&hidden);
        let (out, ff_norm) = layer_norm(&f, &layer.ff_norm.gain, &layer.ff_norm.offset);
        let cache = LayerCache {
            input: x,
            q,
            k,
            v,
            probs,
            prob_masks,
            context,
            attn_mask,
            attn_norm,
            hidden,
            ff_pre,
            ff_act,
            ff_mask,
            ff_norm,
        };
        (out, cache)
    }

    /// Backpropagates `scale * cross_entropy` into `grad`; returns the unscaled loss.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        label: PerformanceClass,
        scale: f64,
        grad: &mut EncoderParams,
    ) -> f64 {
        let p = &self.params;
        let d = self.config.d_model;
        let loss = cross_entropy(&cache.logits, label.index());
        let mut dlogits = softmax(&cache.logits);
        dlogits[label.index()] -= 1.0;
        let dlogits = Mat::from_vec(1, 3, dlogits.iter().map(|v| v * scale).collect());

        let pooled_in = Mat::from_vec(1, d, cache.pooled_dropped.clone());
        let mut dpooled = p.classifier.backward(&pooled_in, &dlogits, &mut grad.classifier);
        apply_mask(&mut dpooled.data, cache.pooled_mask.as_ref());
        for (g, &y) in dpooled.data.iter_mut().zip(&cache.pooled) {
            *g *= 1.0 - y * y;
        }
        let cls_in = Mat::from_vec(1, d, cache.cls.clone());
        let dcls = p.pooler.backward(&cls_in, &dpooled, &mut grad.pooler);

        let n = cache.ids.len();
        let mut dx = Mat::zeros(n, d);
        dx.row_mut(0).copy_from_slice(&dcls.data);
        for (l, lc) in cache.layers.iter().enumerate().rev() {
            dx = self.layer_backward(&p.layers[l], lc, &dx, &mut grad.layers[l]);
        }

        apply_mask(&mut dx.data, cache.emb_mask.as_ref());
        for (i, &id) in cache.ids.iter().enumerate() {
            let row = dx.row(i);
            for (g, &v) in grad.token_embedding.row_mut(id as usize).iter_mut().zip(row) {
                *g += v;
            }
            for (g, &v) in grad.position_embedding.row_mut(i).iter_mut().zip(row) {
                *g += v;
            }
        }
        loss
    }

    fn layer_backward(&self, layer: &EncoderLayer, c: &LayerCache, dout: &Mat, g: &mut EncoderLayer) -> Mat {
        let cfg = &self.config;
        let (n, dh) = (dout.rows, cfg.head_dim());

        let dr2 = layer_norm_backward(dout, &c.ff_norm, &layer.ff_norm.gain, &mut g.ff_norm.gain, &mut g.ff_norm.offset);
        let mut df = dr2.clone();
        apply_mask(&mut df.data, c.ff_mask.as_ref());
        let mut dpre = layer.ff_out.backward(&c.ff_act, &df, &mut g.ff_out);
        for (d, &x) in dpre.data.iter_mut().zip(&c.ff_pre.data) {
            *d *= gelu_grad(x);
        }
        let mut dhidden = layer.ff_in.backward(&c.hidden, &dpre, &mut g.ff_in);
        dhidden.add_assign(&dr2);

        let dr1 = layer_norm_backward(
            &dhidden,
            &c.attn_norm,
            &layer.attn_norm.gain,
            &mut g.attn_norm.gain,
            &mut g.attn_norm.offset,
        );
        let mut da = dr1.clone();
        apply_mask(&mut da.data, c.attn_mask.as_ref());
        let dcontext = layer.attn_out.backward(&c.context, &da, &mut g.attn_out);

        let mut dq = Mat::zeros(n, cfg.d_model);
        let mut dk = Mat::zeros(n, cfg.d_model);
        let mut dv = Mat::zeros(n, cfg.d_model);
        for h in 0..cfg.n_heads {
            let (qh, kh, vh) = (c.q.columns(h * dh, dh), c.k.columns(h * dh, dh), c.v.columns(h * dh, dh));
            let dctx = dcontext.columns(h * dh, dh);
            let pm = c.prob_masks[h].as_ref();
            let mut dropped = c.probs[h].clone();
            apply_mask(&mut dropped.data, pm);
            let mut dvh = Mat::zeros(n, dh);
            dropped.t_matmul_into(&dctx, &mut dvh);
            let mut dprobs = dctx.matmul_t(&vh);
            apply_mask(&mut dprobs.data, pm);
            let mut dqh = Mat::zeros(n, dh);
            let mut dkh = Mat::zeros(n, dh);
            attention_weights_backward(&c.probs[h], &dprobs, &qh, &kh, &mut dqh, &mut dkh);
            dq.set_columns(h * dh, &dqh);
            dk.set_columns(h * dh, &dkh);
            dv.set_columns(h * dh, &dvh);
        }
        let mut dx = dr1;
        dx.add_assign(&layer.query.backward(&c.input, &dq, &mut g.query));
        dx.add_assign(&layer.key.backward(&c.input, &dk, &mut g.key));
        dx.add_assign(&layer.value.backward(&c.input, &dv, &mut g.value));
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::CLS_ID;
    use rand::Rng;

    fn tiny(seed: u64) -> EncoderModel {
        EncoderModel::new(EncoderConfig { seed, ..EncoderConfig::tiny(20) }).unwrap()
    }

    fn seq(ids: &[u32]) -> TokenSequence {
        let mut v = vec![CLS_ID];
        v.extend_from_slice(ids);
        let n = v.len();
        TokenSequence::new(v, vec![1; n]).unwrap()
    }

    #[test]
    fn layout_matches_tensors() {
        let m = tiny(0);
        let layout = EncoderParams::layout(m.config());
        let tensors = m.params().tensors();
        assert_eq!(layout.len(), tensors.len());
        for (info, t) in layout.iter().zip(&tensors) {
            assert_eq!(info.shape.0 * info.shape.1, t.len(), "{}", info.name);
        }
        assert_eq!(m.params().layers[0].attn_norm.gain, vec![1.0; 8]);
        assert!(m.params().layers[0].query.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn eval_is_deterministic_and_train_zero_dropout_matches() {
        let m = tiny(3);
        let s = seq(&[5, 6, 7]);
        assert_eq!(m.forward(&s, Mode::Eval).unwrap(), m.forward(&s, Mode::Eval).unwrap());
        let cfg = EncoderConfig { dropout: 0.0, ..m.config().clone() };
        let m0 = EncoderModel::from_parts(cfg, m.params().clone()).unwrap();
        assert_eq!(m0.forward(&s, Mode::Train { seed: 9 }).unwrap(), m0.forward(&s, Mode::Eval).unwrap());
        assert_ne!(m.forward(&s, Mode::Train { seed: 9 }).unwrap(), m.forward(&s, Mode::Eval).unwrap());
    }

    #[test]
    fn sequence_errors() {
        let m = tiny(0);
        assert_eq!(m.forward(&seq(&[3, 3, 3, 3, 3, 3]), Mode::Eval).unwrap_err().exit_code(), 1);
        assert_eq!(m.forward(&seq(&[25]), Mode::Eval).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn padding_does_not_change_logits() {
        let m = tiny(2);
        let s = seq(&[4, 9]);
        let a = m.forward(&s, Mode::Eval).unwrap();
        let b = m.forward(&s.padded(6), Mode::Eval).unwrap();
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_in_train_mode() {
        // dropout masks are fixed by the seed, so the loss is a smooth function of the parameters
        let m = tiny(4);
        let s = seq(&[3, 8, 11, 4]);
        let label = PerformanceClass::Over;
        let run = |m: &EncoderModel| {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            m.forward_cached(&s, Some(&mut rng)).unwrap()
        };
        let mut grad = EncoderParams::zeros(m.config());
        m.backward(&run(&m), label, 1.0, &mut grad);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layout = EncoderParams::layout(m.config());
        for (t, info) in layout.iter().enumerate() {
            for _ in 0..3 {
                let idx = rng.random_range(0..info.shape.0 * info.shape.1);
                let loss_at = |delta: f64| {
                    let mut p = m.clone();
                    p.params_mut().tensors_mut()[t][idx] += delta;
                    cross_entropy(&run(&p).logits, label.index())
                };
                let fd = (loss_at(1e-5) - loss_at(-1e-5)) / 2e-5;
                let a = grad.tensors()[t][idx];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "{}[{idx}]: {a} vs {fd}", info.name);
            }
        }
    }
}
