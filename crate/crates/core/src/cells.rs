//! Recurrent cells: conventional LSTM, sLSTM with exponential gating and a
//! log-domain stabilizer, and mLSTM with a matrix memory.
//!
//! sLSTM tracks the running maximum `m` of the log gate values and keeps `c`
//! and `n` scaled by `exp(-m)`. The hidden state `o ⊙ c / n` is invariant to
//! that scaling, so the stabilized step returns the same `h` as the plain
//! recurrence whenever the plain one is representable.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{uniform_init, DiffTensor, Linear, ParamId, ParamStore, SeededRng, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    SLstm,
    MLstm,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Lstm, CellKind::SLstm, CellKind::MLstm];
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::SLstm => "slstm",
            CellKind::MLstm => "mlstm",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "slstm" => Ok(CellKind::SLstm),
            "mlstm" => Ok(CellKind::MLstm),
            other => Err(Error::Config(format!("unknown cell `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForgetActivation {
    Sigmoid,
    Exp,
}

impl fmt::Display for ForgetActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForgetActivation::Sigmoid => "sigmoid",
            ForgetActivation::Exp => "exp",
        })
    }
}

impl FromStr for ForgetActivation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ForgetActivation::Sigmoid),
            "exp" => Ok(ForgetActivation::Exp),
            other => Err(Error::Config(format!("unknown forget activation `{other}`"))),
        }
    }
}

/// Gate order used by every `[ParamId; 4]` below.
pub const GATES: [&str; 4] = ["z", "i", "f", "o"];
const Z: usize = 0;
const I: usize = 1;
const F: usize = 2;
const O: usize = 3;

/// Input weights, recurrent weights and biases of a scalar-memory cell.
///
/// Recurrent weights are stored as `[heads, d/heads, d/heads]` blocks, so
/// the hidden state only mixes within a head.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w: [ParamId; 4],
    pub r: [ParamId; 4],
    pub b: [ParamId; 4],
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub forget_activation: ForgetActivation,
}

impl GateParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        num_heads: usize,
        forget_activation: ForgetActivation,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if num_heads == 0 || !hidden_dim.is_multiple_of(num_heads) {
            return Err(Error::Config(format!(
                "hidden size {hidden_dim} is not divisible by {num_heads} heads"
            )));
        }
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config("cell dimensions must be positive".into()));
        }
        let bs = hidden_dim / num_heads;
        let w = GATES.map(|g| {
            store.add(
                format!("{name}.w_{g}"),
                uniform_init(rng, &[hidden_dim, input_dim], input_dim),
            )
        });
        let r = GATES.map(|g| {
            store.add(
                format!("{name}.r_{g}"),
                uniform_init(rng, &[num_heads, bs, bs], bs),
            )
        });
        let forget_bias = match forget_activation {
            ForgetActivation::Sigmoid => 1.0,
            ForgetActivation::Exp => 0.0,
        };
        let b = GATES.map(|g| {
            let fill = if g == "f" { forget_bias } else { 0.0 };
            store.add(
                format!("{name}.b_{g}"),
                DiffTensor::new(vec![hidden_dim], vec![fill; hidden_dim]).expect("shape"),
            )
        });
        Ok(Self {
            w,
            r,
            b,
            input_dim,
            hidden_dim,
            num_heads,
            forget_activation,
        })
    }

    /// `W_g x + R_g h + b_g` for the four gates, in [`GATES`] order.
    pub fn preactivations<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: Var<'t>,
        h_prev: Var<'t>,
    ) -> Result<[Var<'t>; 4]> {
        if x.len() != self.input_dim {
            return Err(Error::Shape {
                op: "cell input",
                lhs: x.shape(),
                rhs: vec![self.input_dim],
            });
        }
        let mut out = Vec::with_capacity(4);
        for g in 0..4 {
            let wx = x.linear(tape.param(store, self.w[g]), Some(tape.param(store, self.b[g])))?;
            let rh = h_prev.block_linear(tape.param(store, self.r[g]))?;
            out.push(wx + rh);
        }
        Ok([out[0], out[1], out[2], out[3]])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState<'t> {
    pub c: Var<'t>,
    pub h: Var<'t>,
}

impl<'t> LstmState<'t> {
    pub fn zeros(tape: &'t Tape, d: usize) -> Self {
        Self {
            c: tape.zeros(&[d]),
            h: tape.zeros(&[d]),
        }
    }
}

/// sLSTM carry: cell, normalizer, hidden and log-domain stabilizer.
#[derive(Debug, Clone, Copy)]
pub struct SLstmState<'t> {
    pub c: Var<'t>,
    pub n: Var<'t>,
    pub h: Var<'t>,
    pub m: Var<'t>,
}

impl<'t> SLstmState<'t> {
    pub fn zeros(tape: &'t Tape, d: usize) -> Self {
        Self {
            c: tape.zeros(&[d]),
            n: tape.zeros(&[d]),
            h: tape.zeros(&[d]),
            // an empty carry must not dominate the first step's stabilizer
            m: tape.constant(&[d], vec![f64::NEG_INFINITY; d]),
        }
    }
}

/// mLSTM carry: `d×d` memory, normalizer, scalar stabilizer, hidden.
#[derive(Debug, Clone, Copy)]
pub struct MLstmState<'t> {
    pub c: Var<'t>,
    pub n: Var<'t>,
    pub m: Var<'t>,
    pub h: Var<'t>,
}

impl<'t> MLstmState<'t> {
    pub fn zeros(tape: &'t Tape, d: usize) -> Self {
        Self {
            c: tape.zeros(&[d, d]),
            n: tape.zeros(&[d]),
            m: tape.constant(&[1], vec![f64::NEG_INFINITY]),
            h: tape.zeros(&[d]),
        }
    }
}

/// Conventional LSTM step with sigmoid gates and tanh cell input/output.
pub fn lstm_step<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    params: &GateParams,
    state: &LstmState<'t>,
    x: Var<'t>,
) -> Result<LstmState<'t>> {
    let pre = params.preactivations(tape, store, x, state.h)?;
    let z = pre[Z].tanh();
    let i = pre[I].sigmoid();
    let f = pre[F].sigmoid();
    let o = pre[O].sigmoid();
    let c = f * state.c + i * z;
    let h = o * c.tanh();
    Ok(LstmState { c, h })
}

/// Log of the forget gate.
fn log_forget<'t>(pre: Var<'t>, act: ForgetActivation) -> Var<'t> {
    match act {
        ForgetActivation::Exp => pre,
        ForgetActivation::Sigmoid => pre.log_sigmoid(),
    }
}

/// One stabilized sLSTM step.
pub fn slstm_step<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    params: &GateParams,
    state: &SLstmState<'t>,
    x: Var<'t>,
) -> Result<SLstmState<'t>> {
    let pre = params.preactivations(tape, store, x, state.h)?;
    let z = pre[Z].tanh();
    let log_i = pre[I];
    let log_f = log_forget(pre[F], params.forget_activation);
    let o = pre[O].sigmoid();

    let m = (log_f + state.m).maximum(log_i)?;
    let i_gate = (log_i - m).exp();
    let f_gate = (log_f + state.m - m).exp();
    let c = f_gate * state.c + i_gate * z;
    let n = f_gate * state.n + i_gate;
    let h = o * (c / n);
    Ok(SLstmState { c, n, h, m })
}

/// Projections and gates of a single-head mLSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct MLstmParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub input_gate: Linear,
    pub forget_gate: Linear,
    pub output_gate: Linear,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub forget_activation: ForgetActivation,
}

impl MLstmParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        forget_activation: ForgetActivation,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config("cell dimensions must be positive".into()));
        }
        let mut lin = |s: &str, out| Linear::new(store, &format!("{name}.{s}"), input_dim, out, rng);
        let query = lin("w_q", hidden_dim);
        let key = lin("w_k", hidden_dim);
        let value = lin("w_v", hidden_dim);
        let input_gate = lin("w_i", 1);
        let forget_gate = lin("w_f", 1);
        let output_gate = lin("w_o", hidden_dim);
        if forget_activation == ForgetActivation::Sigmoid {
            store.get_mut(forget_gate.bias).values_mut()[0] = 1.0;
        }
        Ok(Self {
            query,
            key,
            value,
            input_gate,
            forget_gate,
            output_gate,
            input_dim,
            hidden_dim,
            forget_activation,
        })
    }
}

/// One stabilized mLSTM step:
/// `C' = f·C + i·v kᵀ`, `n' = f·n + i·k`, `h = o ⊙ C'q / max(|n'ᵀq|, 1)`,
/// evaluated in the frame scaled by `exp(-m)`.
pub fn mlstm_step<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    params: &MLstmParams,
    state: &MLstmState<'t>,
    x: Var<'t>,
) -> Result<MLstmState<'t>> {
    if x.len() != params.input_dim {
        return Err(Error::Shape {
            op: "cell input",
            lhs: x.shape(),
            rhs: vec![params.input_dim],
        });
    }
    let d = params.hidden_dim;
    let q = params.query.forward(tape, store, x)?;
    let k = params
        .key
        .forward(tape, store, x)?
        .scale(1.0 / (d as f64).sqrt());
    let v = params.value.forward(tape, store, x)?;
    let log_i = params.input_gate.forward(tape, store, x)?;
    let log_f = log_forget(
        params.forget_gate.forward(tape, store, x)?,
        params.forget_activation,
    );
    let o = params.output_gate.forward(tape, store, x)?.sigmoid();

    let m = (log_f + state.m).maximum(log_i)?;
    let i_gate = (log_i - m).exp();
    let f_gate = (log_f + state.m - m).exp();

    let c = f_gate.broadcast(&[d, d]) * state.c + i_gate.broadcast(&[d, d]) * v.outer(k);
    let n = f_gate.broadcast(&[d]) * state.n + i_gate.broadcast(&[d]) * k;
    // max(|nᵀq|, 1) in the unscaled frame is max(|nᵀq|, exp(-m)) here.
    let floor = (-m).exp();
    let denom = n.dot(q)?.abs().maximum(floor)?;
    let h = o * (q.linear(c, None)? / denom.broadcast(&[d]));
    Ok(MLstmState { c, n, m, h })
}

/// Parameters of any of the three cells.
#[derive(Debug, Clone, PartialEq)]
pub enum CellParams {
    Lstm(GateParams),
    SLstm(GateParams),
    MLstm(MLstmParams),
}

/// Per-cell hyperparameters that are not dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOptions {
    pub num_heads: usize,
    pub forget_activation: ForgetActivation,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            num_heads: 1,
            forget_activation: ForgetActivation::Exp,
        }
    }
}

impl CellParams {
    pub fn new(
        kind: CellKind,
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        options: CellOptions,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(match kind {
            CellKind::Lstm => CellParams::Lstm(GateParams::new(
                store,
                name,
                input_dim,
                hidden_dim,
                1,
                ForgetActivation::Sigmoid,
                rng,
            )?),
            CellKind::SLstm => CellParams::SLstm(GateParams::new(
                store,
                name,
                input_dim,
                hidden_dim,
                options.num_heads,
                options.forget_activation,
                rng,
            )?),
            CellKind::MLstm => CellParams::MLstm(MLstmParams::new(
                store,
                name,
                input_dim,
                hidden_dim,
                options.forget_activation,
                rng,
            )?),
        })
    }

    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Lstm(_) => CellKind::Lstm,
            CellParams::SLstm(_) => CellKind::SLstm,
            CellParams::MLstm(_) => CellKind::MLstm,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            CellParams::Lstm(p) | CellParams::SLstm(p) => p.hidden_dim,
            CellParams::MLstm(p) => p.hidden_dim,
        }
    }

    pub fn zero_state<'t>(&self, tape: &'t Tape) -> CellState<'t> {
        let d = self.hidden_dim();
        match self {
            CellParams::Lstm(_) => CellState::Lstm(LstmState::zeros(tape, d)),
            CellParams::SLstm(_) => CellState::SLstm(SLstmState::zeros(tape, d)),
            CellParams::MLstm(_) => CellState::MLstm(MLstmState::zeros(tape, d)),
        }
    }

    pub fn step<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        state: &CellState<'t>,
        x: Var<'t>,
    ) -> Result<CellState<'t>> {
        match (self, state) {
            (CellParams::Lstm(p), CellState::Lstm(s)) => {
                lstm_step(tape, store, p, s, x).map(CellState::Lstm)
            }
            (CellParams::SLstm(p), CellState::SLstm(s)) => {
                slstm_step(tape, store, p, s, x).map(CellState::SLstm)
            }
            (CellParams::MLstm(p), CellState::MLstm(s)) => {
                mlstm_step(tape, store, p, s, x).map(CellState::MLstm)
            }
            _ => Err(Error::Usage("cell state does not match cell kind".into())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CellState<'t> {
    Lstm(LstmState<'t>),
    SLstm(SLstmState<'t>),
    MLstm(MLstmState<'t>),
}

impl<'t> CellState<'t> {
    pub fn hidden(&self) -> Var<'t> {
        match self {
            CellState::Lstm(s) => s.h,
            CellState::SLstm(s) => s.h,
            CellState::MLstm(s) => s.h,
        }
    }
}

/// Result of unrolling a cell over a sequence.
#[derive(Debug, Clone, Copy)]
pub struct Encoded<'t> {
    /// `[t_obs, d]` hidden states, one row per input step.
    pub hidden: Var<'t>,
    pub final_state: CellState<'t>,
}

/// Left-to-right unroll from the zero state over the rows of `inputs`.
pub fn encode_sequence<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    cell: &CellParams,
    inputs: Var<'t>,
) -> Result<Encoded<'t>> {
    let shape = inputs.shape();
    let steps = match shape.as_slice() {
        [t, _] => *t,
        _ => {
            return Err(Error::Shape {
                op: "encode_sequence",
                lhs: shape,
                rhs: vec![0, 0],
            })
        }
    };
    if steps == 0 {
        return Err(Error::Empty("input sequence".into()));
    }
    let mut state = cell.zero_state(tape);
    let mut hidden = Vec::with_capacity(steps);
    for t in 0..steps {
        state = cell.step(tape, store, &state, inputs.row(t)?)?;
        hidden.push(state.hidden());
    }
    Ok(Encoded {
        hidden: Var::stack_rows(&hidden)?,
        final_state: state,
    })
}
