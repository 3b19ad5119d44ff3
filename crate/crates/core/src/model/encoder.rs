//! Pre-norm transformer encoder with a prepended summary slot, forward
//! caching and reverse-mode gradients.

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng as _;

use super::params::Params;
use super::ModelConfig;
use crate::corpus::{TokenId, MASK, PAD};
use crate::rng::Rng;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centered * inv_std.view().insert_axis(Axis(1));
    let y = &xhat * gain + bias;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let dxhat = dy * gain;
    let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
    let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat - mean_dxhat.view().insert_axis(Axis(1));
    dx -= &(&cache.xhat * &mean_dxhat_xhat.view().insert_axis(Axis(1)));
    dx * cache.inv_std.view().insert_axis(Axis(1))
}

fn dropout_mask(shape: (usize, usize), rate: f64, rng: &mut Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_fn(shape, |_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    ln2: LnCache,
    b: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
    ffn_mask: Option<Array2<f64>>,
}

/// Everything the backward pass needs from one forward pass.
pub(crate) struct ForwardCache {
    tokens: Vec<TokenId>,
    emb_mask: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    final_ln: LnCache,
    /// Final hidden states; row 0 is the summary slot, row i + 1 is token i.
    pub(crate) z: Array2<f64>,
}

impl ForwardCache {
    /// Head-averaged attention of the summary slot in the last layer over the
    /// document tokens, renormalized after dropping the summary slot itself.
    pub(crate) fn summary_attention(&self) -> Vec<f64> {
        let last = self.layers.last().expect("at least one layer");
        let n = self.tokens.len() + 1;
        let heads = last.probs.len() as f64;
        let mut w = vec![0.0; n - 1];
        for p in &last.probs {
            for (j, wj) in w.iter_mut().enumerate() {
                *wj += p[[0, j + 1]] / heads;
            }
        }
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|x| *x /= total);
        } else if !w.is_empty() {
            // nothing visible: spread evenly
            let u = 1.0 / w.len() as f64;
            w.iter_mut().for_each(|x| *x = u);
        }
        w
    }
}

pub(crate) fn forward(
    params: &Params,
    config: &ModelConfig,
    tokens: &[TokenId],
    mut dropout: Option<&mut Rng>,
) -> ForwardCache {
    let n = tokens.len() + 1;
    let d = config.dim;
    let heads = config.heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let rate = config.dropout;
    let mut mask = |shape: (usize, usize)| -> Option<Array2<f64>> {
        match dropout.as_deref_mut() {
            Some(rng) if rate > 0.0 => Some(dropout_mask(shape, rate, rng)),
            _ => None,
        }
    };

    // keys that no query may attend to
    let hidden: Vec<usize> = if config.hide_masked_keys {
        tokens
            .iter()
            .enumerate()
            .filter(|&(_, &t)| t == PAD || t == MASK)
            .map(|(i, _)| i + 1)
            .collect()
    } else {
        Vec::new()
    };

    let mut h = Array2::zeros((n, d));
    h.row_mut(0).assign(&(&params.summary + &params.position_embedding.row(0)));
    for (i, &t) in tokens.iter().enumerate() {
        h.row_mut(i + 1)
            .assign(&(&params.token_embedding.row(t as usize) + &params.position_embedding.row(i + 1)));
    }
    let emb_mask = mask((n, d));
    if let Some(m) = &emb_mask {
        h *= m;
    }

    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (a, ln1) = layer_norm(&h, &lp.ln1_gain, &lp.ln1_bias);
        let q = a.dot(&lp.wq) + &lp.bq;
        let k = a.dot(&lp.wk) + &lp.bk;
        let v = a.dot(&lp.wv) + &lp.bv;
        let mut ctx = Array2::zeros((n, d));
        let mut probs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let mut sc = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for &j in &hidden {
                sc.column_mut(j).fill(f64::NEG_INFINITY);
            }
            for mut row in sc.rows_mut() {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|x| (x - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|x| x / sum);
            }
            ctx.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
            probs.push(sc);
        }
        let mut o = ctx.dot(&lp.wo) + &lp.bo;
        let attn_mask = mask((n, d));
        if let Some(m) = &attn_mask {
            o *= m;
        }
        h += &o;

        let (b, ln2) = layer_norm(&h, &lp.ln2_gain, &lp.ln2_bias);
        let u = b.dot(&lp.w1) + &lp.b1;
        let g = u.mapv(gelu);
        let mut f = g.dot(&lp.w2) + &lp.b2;
        let ffn_mask = mask((n, d));
        if let Some(m) = &ffn_mask {
            f *= m;
        }
        h += &f;
        layers.push(LayerCache {
            ln1,
            a,
            q,
            k,
            v,
            probs,
            ctx,
            attn_mask,
            ln2,
            b,
            u,
            g,
            ffn_mask,
        });
    }
    let (z, final_ln) = layer_norm(&h, &params.final_gain, &params.final_bias);
    ForwardCache {
        tokens: tokens.to_vec(),
        emb_mask,
        layers,
        final_ln,
        z,
    }
}

pub(crate) fn doc_logits(params: &Params, cache: &ForwardCache) -> Array1<f64> {
    cache.z.row(0).dot(&params.doc_w) + &params.doc_b
}

/// Token-head logits for document positions `positions` (0-based, summary
/// slot excluded), one row per position.
pub(crate) fn token_logits(params: &Params, cache: &ForwardCache, positions: &[usize]) -> Array2<f64> {
    let rows: Vec<usize> = positions.iter().map(|&p| p + 1).collect();
    cache.z.select(Axis(0), &rows).dot(&params.tok_w) + &params.tok_b
}

/// Accumulates into `grads` the gradient of a loss whose derivative with
/// respect to the document logits is `d_doc` and with respect to the token
/// logits at `positions` is the matching row of `d_tok`.
pub(crate) fn backward(
    params: &Params,
    config: &ModelConfig,
    cache: &ForwardCache,
    d_doc: Option<&Array1<f64>>,
    d_tok: Option<(&[usize], &Array2<f64>)>,
    grads: &mut Params,
) {
    let n = cache.tokens.len() + 1;
    let d = config.dim;
    let dh = d / config.heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut dz = Array2::<f64>::zeros((n, d));
    if let Some(g) = d_doc {
        grads.doc_w += &outer(cache.z.row(0), g.view());
        grads.doc_b += g;
        let mut row = dz.row_mut(0);
        row += &params.doc_w.dot(g);
    }
    if let Some((positions, g)) = d_tok {
        let rows: Vec<usize> = positions.iter().map(|&p| p + 1).collect();
        let zr = cache.z.select(Axis(0), &rows);
        grads.tok_w += &zr.t().dot(g);
        grads.tok_b += &g.sum_axis(Axis(0));
        let dzr = g.dot(&params.tok_w.t());
        for (j, &r) in rows.iter().enumerate() {
            let mut row = dz.row_mut(r);
            row += &dzr.row(j);
        }
    }
    let mut dh_acc = layer_norm_backward(
        &dz,
        &cache.final_ln,
        &params.final_gain,
        &mut grads.final_gain,
        &mut grads.final_bias,
    );

    for (l, lc) in cache.layers.iter().enumerate().rev() {
        let lp = &params.layers[l];
        let lg = &mut grads.layers[l];

        // feed-forward branch
        let mut df = dh_acc.clone();
        if let Some(m) = &lc.ffn_mask {
            df *= m;
        }
        lg.w2 += &lc.g.t().dot(&df);
        lg.b2 += &df.sum_axis(Axis(0));
        let mut du = df.dot(&lp.w2.t());
        Zip::from(&mut du).and(&lc.u).for_each(|g, &u| *g *= gelu_grad(u));
        lg.w1 += &lc.b.t().dot(&du);
        lg.b1 += &du.sum_axis(Axis(0));
        let db = du.dot(&lp.w1.t());
        dh_acc += &layer_norm_backward(&db, &lc.ln2, &lp.ln2_gain, &mut lg.ln2_gain, &mut lg.ln2_bias);

        // attention branch
        let mut dout = dh_acc.clone();
        if let Some(m) = &lc.attn_mask {
            dout *= m;
        }
        lg.wo += &lc.ctx.t().dot(&dout);
        lg.bo += &dout.sum_axis(Axis(0));
        let dctx = dout.dot(&lp.wo.t());
        let mut dq = Array2::<f64>::zeros((n, d));
        let mut dk = Array2::<f64>::zeros((n, d));
        let mut dv = Array2::<f64>::zeros((n, d));
        for (hd, p) in lc.probs.iter().enumerate() {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let dctx_h = dctx.slice(cols);
            let dp = dctx_h.dot(&lc.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
            let row_dot = (&dp * p).sum_axis(Axis(1));
            let ds = (dp - row_dot.view().insert_axis(Axis(1))) * p * scale;
            dq.slice_mut(cols).assign(&ds.dot(&lc.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&lc.q.slice(cols)));
        }
        lg.wq += &lc.a.t().dot(&dq);
        lg.bq += &dq.sum_axis(Axis(0));
        lg.wk += &lc.a.t().dot(&dk);
        lg.bk += &dk.sum_axis(Axis(0));
        lg.wv += &lc.a.t().dot(&dv);
        lg.bv += &dv.sum_axis(Axis(0));
        let da = dq.dot(&lp.wq.t()) + dk.dot(&lp.wk.t()) + dv.dot(&lp.wv.t());
        dh_acc += &layer_norm_backward(&da, &lc.ln1, &lp.ln1_gain, &mut lg.ln1_gain, &mut lg.ln1_bias);
    }

    if let Some(m) = &cache.emb_mask {
        dh_acc *= m;
    }
    grads.summary += &dh_acc.row(0);
    for i in 0..n {
        let mut row = grads.position_embedding.row_mut(i);
        row += &dh_acc.row(i);
    }
    for (i, &t) in cache.tokens.iter().enumerate() {
        let mut row = grads.token_embedding.row_mut(t as usize);
        row += &dh_acc.row(i + 1);
    }
}
