use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::TokenId;
use crate::encoder::params::{EncoderParams, LayerParams};
use crate::encoder::tensor::{gelu, gelu_grad, matmul_at_acc, matmul_bt_acc, softmax_in_place, Tensor};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-12;

/// Eval mode is deterministic; train mode draws dropout masks from the rng.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

struct LnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

struct LayerTrace {
    input: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// One n × n matrix per head.
    probs: Vec<Tensor>,
    ctx: Tensor,
    drop_attn: Option<Vec<f64>>,
    ln1: LnCache,
    h1: Tensor,
    ff_pre: Tensor,
    ff_act: Tensor,
    drop_ff: Option<Vec<f64>>,
    ln2: LnCache,
}

struct Trace {
    ids: Vec<TokenId>,
    emb_ln: LnCache,
    drop_emb: Option<Vec<f64>>,
    layers: Vec<LayerTrace>,
}

/// Final hidden states (row 0 is `[CLS]`) plus what backward needs.
pub struct EncoderOutput {
    pub hidden: Tensor,
    retain_attention: bool,
    trace: Trace,
}

impl EncoderOutput {
    pub fn len(&self) -> usize {
        self.hidden.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.rows() == 0
    }

    pub fn state(&self, position: usize) -> &[f64] {
        self.hidden.row(position)
    }

    /// Attention matrices indexed `[layer][head]`, each n × n with rows
    /// summing to one. `None` unless requested at forward time.
    pub fn attention(&self) -> Option<Vec<&[Tensor]>> {
        self.retain_attention
            .then(|| self.trace.layers.iter().map(|l| l.probs.as_slice()).collect())
    }

    /// Row of weights with which `[CLS]` attends to every position.
    pub fn cls_attention(&self, layer: usize, head: usize) -> Option<&[f64]> {
        if !self.retain_attention {
            return None;
        }
        Some(self.trace.layers.get(layer)?.probs.get(head)?.row(0))
    }
}

fn layer_norm(x: &Tensor, g: &Tensor, b: &Tensor) -> (Tensor, LnCache) {
    let (n, d) = x.shape();
    let mut xhat = Tensor::zeros(n, d);
    let mut out = Tensor::zeros(n, d);
    let mut inv_std = Vec::with_capacity(n);
    for r in 0..n {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(inv);
        let xr = xhat.row_mut(r);
        for (o, v) in xr.iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
        let orow = out.row_mut(r);
        for j in 0..d {
            orow[j] = xhat.at(r, j) * g.data()[j] + b.data()[j];
        }
    }
    (out, LnCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Tensor, cache: &LnCache, g: &Tensor, dg: &mut Tensor, db: &mut Tensor) -> Tensor {
    let (n, d) = dy.shape();
    let mut dx = Tensor::zeros(n, d);
    let mut dxhat = vec![0.0; d];
    for r in 0..n {
        let dyr = dy.row(r);
        let xh = cache.xhat.row(r);
        for j in 0..d {
            dg.data_mut()[j] += dyr[j] * xh[j];
            db.data_mut()[j] += dyr[j];
            dxhat[j] = dyr[j] * g.data()[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let inv = cache.inv_std[r];
        for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = inv * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

fn dropout(x: &mut Tensor, rate: f64, mode: &mut Mode<'_>) -> Option<Vec<f64>> {
    let Mode::Train(rng) = mode else {
        return None;
    };
    if rate == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    for (v, m) in x.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

fn apply_mask(x: &mut Tensor, mask: &Option<Vec<f64>>) {
    if let Some(mask) = mask {
        for (v, m) in x.data_mut().iter_mut().zip(mask) {
            *v *= m;
        }
    }
}

fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let mut out = x.matmul(w);
    out.add_row(b);
    out
}

/// Accumulates gradients of `y = x·w + b` and returns dx.
fn linear_backward(dy: &Tensor, x: &Tensor, w: &Tensor, dw: &mut Tensor, db: &mut Tensor) -> Tensor {
    let (n, m) = dy.shape();
    let k = x.cols();
    matmul_at_acc(x.data(), dy.data(), n, k, m, dw.data_mut());
    for r in 0..n {
        for (g, d) in db.data_mut().iter_mut().zip(dy.row(r)) {
            *g += d;
        }
    }
    let mut dx = Tensor::zeros(n, k);
    matmul_bt_acc(dy.data(), w.data(), n, k, m, dx.data_mut());
    dx
}

impl EncoderParams {
    /// Runs the encoder over `ids` (which should start with `[CLS]`).
    pub fn forward(&self, ids: &[TokenId], retain_attention: bool, mut mode: Mode<'_>) -> Result<EncoderOutput> {
        let cfg = &self.config;
        if ids.is_empty() || ids.len() > cfg.max_seq_len {
            return Err(Error::Contract(format!(
                "sequence length {} outside 1..={}",
                ids.len(),
                cfg.max_seq_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(Error::Contract(format!(
                "token id {bad} >= vocab size {}",
                cfg.vocab_size
            )));
        }
        let (n, d) = (ids.len(), cfg.hidden_dim);
        let mut x = Tensor::zeros(n, d);
        for (i, &id) in ids.iter().enumerate() {
            let tok = self.tok_emb.row(id as usize);
            let pos = self.pos_emb.row(i);
            for ((o, a), b) in x.row_mut(i).iter_mut().zip(tok).zip(pos) {
                *o = a + b;
            }
        }
        let (mut x, emb_ln) = layer_norm(&x, &self.emb_ln_g, &self.emb_ln_b);
        let drop_emb = dropout(&mut x, cfg.dropout_rate, &mut mode);

        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, trace) = self.layer_forward(layer, x, &mut mode);
            layers.push(trace);
            x = out;
        }
        Ok(EncoderOutput {
            hidden: x,
            retain_attention,
            trace: Trace {
                ids: ids.to_vec(),
                emb_ln,
                drop_emb,
                layers,
            },
        })
    }

    fn layer_forward(&self, p: &LayerParams, input: Tensor, mode: &mut Mode<'_>) -> (Tensor, LayerTrace) {
        let cfg = &self.config;
        let (n, d, h, dh) = (input.rows(), cfg.hidden_dim, cfg.n_heads, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let q = linear(&input, &p.wq, &p.bq);
        let k = linear(&input, &p.wk, &p.bk);
        let v = linear(&input, &p.wv, &p.bv);
        let mut ctx = Tensor::zeros(n, d);
        let mut probs = Vec::with_capacity(h);
        for head in 0..h {
            let off = head * dh;
            let mut pm = Tensor::zeros(n, n);
            for i in 0..n {
                let qi = &q.row(i)[off..off + dh];
                let row = pm.row_mut(i);
                for (j, s) in row.iter_mut().enumerate() {
                    let kj = &k.row(j)[off..off + dh];
                    *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                softmax_in_place(row);
            }
            for i in 0..n {
                for j in 0..n {
                    let w = pm.at(i, j);
                    let vj = &v.row(j)[off..off + dh];
                    let ci = &mut ctx.row_mut(i)[off..off + dh];
                    for (c, vv) in ci.iter_mut().zip(vj) {
                        *c += w * vv;
                    }
                }
            }
            probs.push(pm);
        }
        let mut attn = linear(&ctx, &p.wo, &p.bo);
        let drop_attn = dropout(&mut attn, cfg.dropout_rate, mode);
        attn.add_assign(&input);
        let (h1, ln1) = layer_norm(&attn, &p.ln1_g, &p.ln1_b);
        let ff_pre = linear(&h1, &p.w1, &p.b1);
        let mut ff_act = ff_pre.clone();
        for v in ff_act.data_mut() {
            *v = gelu(*v);
        }
        let mut ff = linear(&ff_act, &p.w2, &p.b2);
        let drop_ff = dropout(&mut ff, cfg.dropout_rate, mode);
        ff.add_assign(&h1);
        let (out, ln2) = layer_norm(&ff, &p.ln2_g, &p.ln2_b);
        let trace = LayerTrace {
            input,
            q,
            k,
            v,
            probs,
            ctx,
            drop_attn,
            ln1,
            h1,
            ff_pre,
            ff_act,
            drop_ff,
            ln2,
        };
        (out, trace)
    }

    /// Back-propagates `d_hidden` (same shape as `output.hidden`) into `grads`.
    pub fn backward(&self, output: &EncoderOutput, d_hidden: &Tensor, grads: &mut EncoderParams) {
        assert_eq!(d_hidden.shape(), output.hidden.shape(), "gradient shape mismatch");
        let trace = &output.trace;
        let mut dy = d_hidden.clone();
        for (li, lt) in trace.layers.iter().enumerate().rev() {
            dy = self.layer_backward(&self.layers[li], lt, &dy, &mut grads.layers[li]);
        }
        apply_mask(&mut dy, &trace.drop_emb);
        let dx = layer_norm_backward(
            &dy,
            &trace.emb_ln,
            &self.emb_ln_g,
            &mut grads.emb_ln_g,
            &mut grads.emb_ln_b,
        );
        for (i, &id) in trace.ids.iter().enumerate() {
            let row = dx.row(i);
            for (g, v) in grads.tok_emb.row_mut(id as usize).iter_mut().zip(row) {
                *g += v;
            }
            for (g, v) in grads.pos_emb.row_mut(i).iter_mut().zip(row) {
                *g += v;
            }
        }
    }

    fn layer_backward(&self, p: &LayerParams, t: &LayerTrace, dy: &Tensor, g: &mut LayerParams) -> Tensor {
        let cfg = &self.config;
        let (n, d, h, dh) = (dy.rows(), cfg.hidden_dim, cfg.n_heads, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();

        let dr2 = layer_norm_backward(dy, &t.ln2, &p.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
        let mut dff = dr2.clone();
        apply_mask(&mut dff, &t.drop_ff);
        let mut dact = linear_backward(&dff, &t.ff_act, &p.w2, &mut g.w2, &mut g.b2);
        for (da, pre) in dact.data_mut().iter_mut().zip(t.ff_pre.data()) {
            *da *= gelu_grad(*pre);
        }
        let mut dh1 = linear_backward(&dact, &t.h1, &p.w1, &mut g.w1, &mut g.b1);
        dh1.add_assign(&dr2);

        let dr1 = layer_norm_backward(&dh1, &t.ln1, &p.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
        let mut dattn = dr1.clone();
        apply_mask(&mut dattn, &t.drop_attn);
        let dctx = linear_backward(&dattn, &t.ctx, &p.wo, &mut g.wo, &mut g.bo);

        let mut dq = Tensor::zeros(n, d);
        let mut dk = Tensor::zeros(n, d);
        let mut dv = Tensor::zeros(n, d);
        let mut dp = vec![0.0; n];
        for head in 0..h {
            let off = head * dh;
            let pm = &t.probs[head];
            for i in 0..n {
                let dci = &dctx.row(i)[off..off + dh];
                for (j, slot) in dp.iter_mut().enumerate() {
                    let vj = &t.v.row(j)[off..off + dh];
                    *slot = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                    let w = pm.at(i, j);
                    for (o, c) in dv.row_mut(j)[off..off + dh].iter_mut().zip(dci) {
                        *o += w * c;
                    }
                }
                let pr = pm.row(i);
                let dot: f64 = pr.iter().zip(&dp).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    let ds = pr[j] * (dp[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj = &t.k.row(j)[off..off + dh];
                    for (o, kv) in dq.row_mut(i)[off..off + dh].iter_mut().zip(kj) {
                        *o += ds * kv;
                    }
                    let qi = &t.q.row(i)[off..off + dh];
                    for (o, qv) in dk.row_mut(j)[off..off + dh].iter_mut().zip(qi) {
                        *o += ds * qv;
                    }
                }
            }
        }
        let mut dx = dr1;
        dx.add_assign(&linear_backward(&dq, &t.input, &p.wq, &mut g.wq, &mut g.bq));
        dx.add_assign(&linear_backward(&dk, &t.input, &p.wk, &mut g.wk, &mut g.bk));
        dx.add_assign(&linear_backward(&dv, &t.input, &p.wv, &mut g.wv, &mut g.bv));
        dx
    }
}
