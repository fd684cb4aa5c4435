use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::config::EncoderConfig;
use crate::encoder::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
}

impl LayerParams {
    fn init(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let (d, f, s) = (cfg.hidden_dim, cfg.ffn_dim, cfg.init_std);
        LayerParams {
            wq: Tensor::randn(d, d, s, rng),
            bq: Tensor::zeros(1, d),
            wk: Tensor::randn(d, d, s, rng),
            bk: Tensor::zeros(1, d),
            wv: Tensor::randn(d, d, s, rng),
            bv: Tensor::zeros(1, d),
            wo: Tensor::randn(d, d, s, rng),
            bo: Tensor::zeros(1, d),
            ln1_g: Tensor::filled(1, d, 1.0),
            ln1_b: Tensor::zeros(1, d),
            w1: Tensor::randn(d, f, s, rng),
            b1: Tensor::zeros(1, f),
            w2: Tensor::randn(f, d, s, rng),
            b2: Tensor::zeros(1, d),
            ln2_g: Tensor::filled(1, d, 1.0),
            ln2_b: Tensor::zeros(1, d),
        }
    }

    fn fields(&self) -> [(&'static str, &Tensor); 16] {
        [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln1_g", &self.ln1_g),
            ("ln1_b", &self.ln1_b),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("ln2_g", &self.ln2_g),
            ("ln2_b", &self.ln2_b),
        ]
    }

    fn fields_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_g,
            &mut self.ln2_b,
        ]
    }
}

/// Every learnable tensor of the encoder and its three pre-training heads.
///
/// The same type doubles as a gradient accumulator (see [`EncoderParams::zeros_like`]).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    /// V × d
    pub tok_emb: Tensor,
    /// max_seq_len × d
    pub pos_emb: Tensor,
    pub emb_ln_g: Tensor,
    pub emb_ln_b: Tensor,
    pub layers: Vec<LayerParams>,
    /// d × V; absent when the output projection is tied to `tok_emb`.
    pub sw_w: Option<Tensor>,
    pub sw_b: Tensor,
    /// d × 2 polarity head.
    pub wp_w: Tensor,
    pub wp_b: Tensor,
    /// `ap_dim` × V pair head.
    pub ap_w: Tensor,
    pub ap_b: Tensor,
}

impl EncoderParams {
    /// Random initialization: normal weights, zero biases, unit layer-norm gains.
    pub fn init(config: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, d, s) = (config.vocab_size, config.hidden_dim, config.init_std);
        let tok_emb = Tensor::randn(v, d, s, &mut rng);
        let pos_emb = Tensor::randn(config.max_seq_len, d, s, &mut rng);
        let layers = (0..config.n_layers)
            .map(|_| LayerParams::init(&config, &mut rng))
            .collect();
        let sw_w = (!config.tie_output).then(|| Tensor::randn(d, v, s, &mut rng));
        let wp_w = Tensor::randn(d, 2, s, &mut rng);
        let ap_w = Tensor::randn(config.ap_dim(), v, s, &mut rng);
        EncoderParams {
            config,
            tok_emb,
            pos_emb,
            emb_ln_g: Tensor::filled(1, d, 1.0),
            emb_ln_b: Tensor::zeros(1, d),
            layers,
            sw_w,
            sw_b: Tensor::zeros(1, v),
            wp_w,
            wp_b: Tensor::zeros(1, 2),
            ap_w,
            ap_b: Tensor::zeros(1, v),
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Tensors with stable names, in serialization and optimizer order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("tok_emb".into(), &self.tok_emb),
            ("pos_emb".into(), &self.pos_emb),
            ("emb_ln_g".into(), &self.emb_ln_g),
            ("emb_ln_b".into(), &self.emb_ln_b),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(layer.fields().into_iter().map(|(n, t)| (format!("layer{i}.{n}"), t)));
        }
        if let Some(w) = &self.sw_w {
            out.push(("sw_w".into(), w));
        }
        out.push(("sw_b".into(), &self.sw_b));
        out.push(("wp_w".into(), &self.wp_w));
        out.push(("wp_b".into(), &self.wp_b));
        out.push(("ap_w".into(), &self.ap_w));
        out.push(("ap_b".into(), &self.ap_b));
        out
    }

    /// Mutable view in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.tok_emb,
            &mut self.pos_emb,
            &mut self.emb_ln_g,
            &mut self.emb_ln_b,
        ];
        for layer in &mut self.layers {
            out.extend(layer.fields_mut());
        }
        if let Some(w) = &mut self.sw_w {
            out.push(w);
        }
        out.extend([
            &mut self.sw_b,
            &mut self.wp_w,
            &mut self.wp_b,
            &mut self.ap_w,
            &mut self.ap_b,
        ]);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.named_tensors()
            .into_iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n)
    }

    pub fn add_assign(&mut self, other: &EncoderParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }
}
