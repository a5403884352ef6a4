//! Plain scalar-loop transcriptions used as independent references.
#![allow(dead_code)]

use xtrack::cells::{ForgetActivation, GateParams, MLstmParams};
use xtrack::numcore::{Linear, ParamId, ParamStore};

pub fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        let mut s = 0.0;
        for c in 0..cols {
            s += w[r * cols + c] * x[c];
        }
        out[r] = s;
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn vals(store: &ParamStore, id: ParamId) -> Vec<f64> {
    store.get(id).values().to_vec()
}

/// Full `d×d` matrix from head blocks.
fn dense_recurrent(store: &ParamStore, id: ParamId, d: usize, heads: usize) -> Vec<f64> {
    let blocks = vals(store, id);
    let bs = d / heads;
    let mut full = vec![0.0; d * d];
    for h in 0..heads {
        for a in 0..bs {
            for b in 0..bs {
                full[(h * bs + a) * d + h * bs + b] = blocks[(h * bs + a) * bs + b];
            }
        }
    }
    full
}

pub fn gate_preacts(store: &ParamStore, p: &GateParams, x: &[f64], h: &[f64]) -> [Vec<f64>; 4] {
    let d = p.hidden_dim;
    let mut out: [Vec<f64>; 4] = Default::default();
    for g in 0..4 {
        let wx = matvec(&vals(store, p.w[g]), d, p.input_dim, x);
        let rh = matvec(&dense_recurrent(store, p.r[g], d, p.num_heads), d, d, h);
        let b = vals(store, p.b[g]);
        out[g] = (0..d).map(|k| wx[k] + rh[k] + b[k]).collect();
    }
    out
}

/// Textbook LSTM. Returns `(c, h)`.
pub fn lstm_direct(store: &ParamStore, p: &GateParams, x: &[f64], c: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let [z, i, f, o] = gate_preacts(store, p, x, h);
    let d = p.hidden_dim;
    let mut c2 = vec![0.0; d];
    let mut h2 = vec![0.0; d];
    for k in 0..d {
        c2[k] = sigmoid(f[k]) * c[k] + sigmoid(i[k]) * z[k].tanh();
        h2[k] = sigmoid(o[k]) * c2[k].tanh();
    }
    (c2, h2)
}

/// Unstabilized sLSTM recurrence. Returns `(c, n, h)`.
pub fn slstm_direct(
    store: &ParamStore,
    p: &GateParams,
    x: &[f64],
    c: &[f64],
    n: &[f64],
    h: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let [z, i, f, o] = gate_preacts(store, p, x, h);
    let d = p.hidden_dim;
    let (mut c2, mut n2, mut h2) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for k in 0..d {
        let ig = i[k].exp();
        let fg = match p.forget_activation {
            ForgetActivation::Exp => f[k].exp(),
            ForgetActivation::Sigmoid => sigmoid(f[k]),
        };
        c2[k] = fg * c[k] + ig * z[k].tanh();
        n2[k] = fg * n[k] + ig;
        h2[k] = sigmoid(o[k]) * c2[k] / n2[k];
    }
    (c2, n2, h2)
}

fn affine(store: &ParamStore, l: &Linear, x: &[f64]) -> Vec<f64> {
    let y = matvec(&vals(store, l.weight), l.out_dim, l.in_dim, x);
    let b = vals(store, l.bias);
    y.iter().zip(&b).map(|(a, b)| a + b).collect()
}

/// Unstabilized mLSTM step. `cmat` is row-major `d×d`. Returns `(C, n, h)`.
pub fn mlstm_direct(
    store: &ParamStore,
    p: &MLstmParams,
    x: &[f64],
    cmat: &[f64],
    n: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = p.hidden_dim;
    let q = affine(store, &p.query, x);
    let k: Vec<f64> = affine(store, &p.key, x).iter().map(|v| v / (d as f64).sqrt()).collect();
    let v = affine(store, &p.value, x);
    let ig = affine(store, &p.input_gate, x)[0].exp();
    let fpre = affine(store, &p.forget_gate, x)[0];
    let fg = match p.forget_activation {
        ForgetActivation::Exp => fpre.exp(),
        ForgetActivation::Sigmoid => sigmoid(fpre),
    };
    let o: Vec<f64> = affine(store, &p.output_gate, x).iter().map(|&v| sigmoid(v)).collect();
    let mut c2 = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..d {
            c2[a * d + b] = fg * cmat[a * d + b] + ig * v[a] * k[b];
        }
    }
    let n2: Vec<f64> = (0..d).map(|a| fg * n[a] + ig * k[a]).collect();
    let nq: f64 = (0..d).map(|a| n2[a] * q[a]).sum();
    let denom = nq.abs().max(1.0);
    let cq = matvec(&c2, d, d, &q);
    let h = (0..d).map(|a| o[a] * cq[a] / denom).collect();
    (c2, n2, h)
}

/// Reference Adam trace on `f(w) = w²` from `w0`.
pub fn adam_trace_square(w0: f64, steps: usize, lr: f64) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut m, mut v, mut w) = (0.0, 0.0, w0);
    let mut trace = Vec::with_capacity(steps);
    for t in 1..=steps {
        let g = 2.0 * w;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32));
        let vh = v / (1.0 - b2.powi(t as i32));
        w -= lr * mh / (vh.sqrt() + eps);
        trace.push(w);
    }
    trace
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
