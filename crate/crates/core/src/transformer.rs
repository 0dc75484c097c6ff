//! Pre-norm transformer stacks with hand-written backward passes.
//!
//! A stack is `blocks → final LayerNorm`; each block is
//! `x + MHA(LN(x))` followed by `h + MLP(LN(h))` with a GELU MLP.
//! Padding is handled by running the stack on the valid prefix only, which is
//! exactly equivalent to masking padded keys with `-inf`.

use crate::nn::{
    gelu, gelu_backward, layer_norm, layer_norm_backward, linear, linear_backward, softmax_in_place, LayerNormCache,
};
use crate::params::ParamStore;
use crate::tensor::{gemm, MatMut, MatRef, Tensor};

/// Initialisation rule attached to every parameter array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    /// Uniform(−a, a) with a = sqrt(6 / (fan_in + fan_out)).
    Xavier,
    /// N(0, 0.02) positional tables.
    Positional,
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: InitKind) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }
}

/// Geometry of one transformer stack.
#[derive(Clone, Copy, Debug)]
pub struct StackSpec<'a> {
    pub prefix: &'a str,
    pub layers: usize,
    pub heads: usize,
    pub causal: bool,
}

struct BlockNames {
    ln1_g: String,
    ln1_b: String,
    wq: String,
    bq: String,
    wk: String,
    bk: String,
    wv: String,
    bv: String,
    wo: String,
    bo: String,
    ln2_g: String,
    ln2_b: String,
    fc1_w: String,
    fc1_b: String,
    fc2_w: String,
    fc2_b: String,
}

impl BlockNames {
    fn new(prefix: &str, layer: usize) -> Self {
        let p = format!("{prefix}.blocks.{layer}");
        Self {
            ln1_g: format!("{p}.ln1.gamma"),
            ln1_b: format!("{p}.ln1.beta"),
            wq: format!("{p}.attn.q.weight"),
            bq: format!("{p}.attn.q.bias"),
            wk: format!("{p}.attn.k.weight"),
            bk: format!("{p}.attn.k.bias"),
            wv: format!("{p}.attn.v.weight"),
            bv: format!("{p}.attn.v.bias"),
            wo: format!("{p}.attn.o.weight"),
            bo: format!("{p}.attn.o.bias"),
            ln2_g: format!("{p}.ln2.gamma"),
            ln2_b: format!("{p}.ln2.beta"),
            fc1_w: format!("{p}.mlp.fc1.weight"),
            fc1_b: format!("{p}.mlp.fc1.bias"),
            fc2_w: format!("{p}.mlp.fc2.weight"),
            fc2_b: format!("{p}.mlp.fc2.bias"),
        }
    }
}

pub fn stack_param_specs(prefix: &str, layers: usize, d: usize, mlp_ratio: usize) -> Vec<ParamSpec> {
    let hidden = d * mlp_ratio;
    let mut out = Vec::new();
    for l in 0..layers {
        let n = BlockNames::new(prefix, l);
        out.push(ParamSpec::new(n.ln1_g, &[d], InitKind::Ones));
        out.push(ParamSpec::new(n.ln1_b, &[d], InitKind::Zeros));
        for (w, b) in [(n.wq, n.bq), (n.wk, n.bk), (n.wv, n.bv), (n.wo, n.bo)] {
            out.push(ParamSpec::new(w, &[d, d], InitKind::Xavier));
            out.push(ParamSpec::new(b, &[d], InitKind::Zeros));
        }
        out.push(ParamSpec::new(n.ln2_g, &[d], InitKind::Ones));
        out.push(ParamSpec::new(n.ln2_b, &[d], InitKind::Zeros));
        out.push(ParamSpec::new(n.fc1_w, &[d, hidden], InitKind::Xavier));
        out.push(ParamSpec::new(n.fc1_b, &[hidden], InitKind::Zeros));
        out.push(ParamSpec::new(n.fc2_w, &[hidden, d], InitKind::Xavier));
        out.push(ParamSpec::new(n.fc2_b, &[d], InitKind::Zeros));
    }
    out.push(ParamSpec::new(format!("{prefix}.ln_f.gamma"), &[d], InitKind::Ones));
    out.push(ParamSpec::new(format!("{prefix}.ln_f.beta"), &[d], InitKind::Zeros));
    out
}

struct AttentionCache {
    x: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// heads × n × n row-stochastic attention weights.
    probs: Vec<f64>,
    ctx: Tensor,
}

fn head_ref(t: &Tensor, head: usize, dh: usize) -> MatRef<'_> {
    let d = t.cols();
    MatRef::strided(&t.data()[head * dh..], t.rows(), dh, d, 1)
}

fn head_mut(t: &mut Tensor, head: usize, dh: usize) -> MatMut<'_> {
    let (n, d) = (t.rows(), t.cols());
    MatMut::strided(&mut t.data_mut()[head * dh..], n, dh, d, 1)
}

fn attention_forward(
    params: &ParamStore,
    names: &BlockNames,
    x: Tensor,
    heads: usize,
    causal: bool,
) -> (Tensor, AttentionCache) {
    let (n, d) = (x.rows(), x.cols());
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = linear(&x, params.get(&names.wq), Some(params.get(&names.bq)));
    let k = linear(&x, params.get(&names.wk), Some(params.get(&names.bk)));
    let v = linear(&x, params.get(&names.wv), Some(params.get(&names.bv)));
    let mut probs = vec![0.0; heads * n * n];
    let mut ctx = Tensor::zeros(&[n, d]);
    for h in 0..heads {
        let p = &mut probs[h * n * n..(h + 1) * n * n];
        gemm(
            scale,
            head_ref(&q, h, dh),
            head_ref(&k, h, dh).t(),
            0.0,
            MatMut::row_major(p, n, n),
        );
        for i in 0..n {
            let row = &mut p[i * n..(i + 1) * n];
            if causal {
                softmax_in_place(&mut row[..=i]);
                row[i + 1..].fill(0.0);
            } else {
                softmax_in_place(row);
            }
        }
        gemm(
            1.0,
            MatRef::row_major(p, n, n),
            head_ref(&v, h, dh),
            0.0,
            head_mut(&mut ctx, h, dh),
        );
    }
    let out = linear(&ctx, params.get(&names.wo), Some(params.get(&names.bo)));
    (out, AttentionCache { x, q, k, v, probs, ctx })
}

fn attention_backward(
    params: &ParamStore,
    grads: &mut ParamStore,
    names: &BlockNames,
    cache: &AttentionCache,
    heads: usize,
    dout: &Tensor,
) -> Tensor {
    let (n, d) = (cache.x.rows(), cache.x.cols());
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let dctx = {
        let (dw, db) = two_mut(grads, &names.wo, &names.bo);
        linear_backward(&cache.ctx, params.get(&names.wo), dout, dw, Some(db), true).expect("dx requested")
    };

    let mut dq = Tensor::zeros(&[n, d]);
    let mut dk = Tensor::zeros(&[n, d]);
    let mut dv = Tensor::zeros(&[n, d]);
    let mut dp = vec![0.0; n * n];
    for h in 0..heads {
        let p = &cache.probs[h * n * n..(h + 1) * n * n];
        gemm(
            1.0,
            head_ref(&dctx, h, dh),
            head_ref(&cache.v, h, dh).t(),
            0.0,
            MatMut::row_major(&mut dp, n, n),
        );
        gemm(
            1.0,
            MatRef::row_major(p, n, n).t(),
            head_ref(&dctx, h, dh),
            0.0,
            head_mut(&mut dv, h, dh),
        );
        // dS = P ⊙ (dP − rowsum(dP ⊙ P))
        for i in 0..n {
            let pr = &p[i * n..(i + 1) * n];
            let dr = &mut dp[i * n..(i + 1) * n];
            let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
            for (dv_, pv) in dr.iter_mut().zip(pr) {
                *dv_ = pv * (*dv_ - dot);
            }
        }
        gemm(
            scale,
            MatRef::row_major(&dp, n, n),
            head_ref(&cache.k, h, dh),
            0.0,
            head_mut(&mut dq, h, dh),
        );
        gemm(
            scale,
            MatRef::row_major(&dp, n, n).t(),
            head_ref(&cache.q, h, dh),
            0.0,
            head_mut(&mut dk, h, dh),
        );
    }

    let mut dx = Tensor::zeros(&[n, d]);
    for (w, b, dy) in [
        (&names.wq, &names.bq, &dq),
        (&names.wk, &names.bk, &dk),
        (&names.wv, &names.bv, &dv),
    ] {
        let (dw, db) = two_mut(grads, w, b);
        let part = linear_backward(&cache.x, params.get(w), dy, dw, Some(db), true).expect("dx requested");
        dx.add_assign(&part);
    }
    dx
}

/// Borrow two distinct gradient arrays mutably.
fn two_mut<'a>(grads: &'a mut ParamStore, a: &str, b: &str) -> (&'a mut Tensor, &'a mut Tensor) {
    let mut first = None;
    let mut second = None;
    for (name, t) in grads.iter_mut() {
        if name == a {
            first = Some(t);
        } else if name == b {
            second = Some(t);
        }
    }
    (
        first.unwrap_or_else(|| panic!("missing gradient `{a}`")),
        second.unwrap_or_else(|| panic!("missing gradient `{b}`")),
    )
}

struct BlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    m: Tensor,
    u: Tensor,
    g: Tensor,
}

pub struct StackCache {
    blocks: Vec<BlockCache>,
    ln_f: LayerNormCache,
}

/// Head-averaged attention weights per layer (`n × n`, rows sum to 1).
pub type AttentionRecord = Vec<Tensor>;

fn head_average(probs: &[f64], heads: usize, n: usize) -> Tensor {
    let mut avg = vec![0.0; n * n];
    for h in 0..heads {
        for (a, p) in avg.iter_mut().zip(&probs[h * n * n..(h + 1) * n * n]) {
            *a += p;
        }
    }
    for a in &mut avg {
        *a /= heads as f64;
    }
    Tensor::mat(n, n, avg)
}

pub fn stack_forward(
    params: &ParamStore,
    spec: StackSpec<'_>,
    mut x: Tensor,
    record: bool,
) -> (Tensor, StackCache, Option<AttentionRecord>) {
    let mut blocks = Vec::with_capacity(spec.layers);
    let mut rec = record.then(Vec::new);
    for l in 0..spec.layers {
        let names = BlockNames::new(spec.prefix, l);
        let (a, ln1) = layer_norm(&x, params.get(&names.ln1_g), params.get(&names.ln1_b));
        let (att, attn) = attention_forward(params, &names, a, spec.heads, spec.causal);
        if let Some(r) = rec.as_mut() {
            r.push(head_average(&attn.probs, spec.heads, x.rows()));
        }
        x.add_assign(&att);
        let (m, ln2) = layer_norm(&x, params.get(&names.ln2_g), params.get(&names.ln2_b));
        let u = linear(&m, params.get(&names.fc1_w), Some(params.get(&names.fc1_b)));
        let g = gelu(&u);
        let z = linear(&g, params.get(&names.fc2_w), Some(params.get(&names.fc2_b)));
        x.add_assign(&z);
        blocks.push(BlockCache {
            ln1,
            attn,
            ln2,
            m,
            u,
            g,
        });
    }
    let (y, ln_f) = layer_norm(
        &x,
        params.get(&format!("{}.ln_f.gamma", spec.prefix)),
        params.get(&format!("{}.ln_f.beta", spec.prefix)),
    );
    (y, StackCache { blocks, ln_f }, rec)
}

pub fn stack_backward(
    params: &ParamStore,
    grads: &mut ParamStore,
    spec: StackSpec<'_>,
    cache: &StackCache,
    dy: &Tensor,
) -> Tensor {
    let gname = format!("{}.ln_f.gamma", spec.prefix);
    let bname = format!("{}.ln_f.beta", spec.prefix);
    let mut dx = {
        let (dg, db) = two_mut(grads, &gname, &bname);
        layer_norm_backward(&cache.ln_f, params.get(&gname), dy, dg, db)
    };
    for l in (0..spec.layers).rev() {
        let names = BlockNames::new(spec.prefix, l);
        let bc = &cache.blocks[l];
        // MLP branch
        let dg = {
            let (dw, db) = two_mut(grads, &names.fc2_w, &names.fc2_b);
            linear_backward(&bc.g, params.get(&names.fc2_w), &dx, dw, Some(db), true).expect("dx requested")
        };
        let du = gelu_backward(&bc.u, &dg);
        let dm = {
            let (dw, db) = two_mut(grads, &names.fc1_w, &names.fc1_b);
            linear_backward(&bc.m, params.get(&names.fc1_w), &du, dw, Some(db), true).expect("dx requested")
        };
        let dh = {
            let (dgm, dbt) = two_mut(grads, &names.ln2_g, &names.ln2_b);
            layer_norm_backward(&bc.ln2, params.get(&names.ln2_g), &dm, dgm, dbt)
        };
        dx.add_assign(&dh);
        // attention branch
        let da = attention_backward(params, grads, &names, &bc.attn, spec.heads, &dx);
        let dres = {
            let (dgm, dbt) = two_mut(grads, &names.ln1_g, &names.ln1_b);
            layer_norm_backward(&bc.ln1, params.get(&names.ln1_g), &da, dgm, dbt)
        };
        dx.add_assign(&dres);
    }
    dx
}
