//! Star-graph interaction model: the target is node 0, neighbors are nodes
//! `1..=N`, and each neighbor has one directed edge into the target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{uniform_init, DiffTensor, Linear, ParamId, ParamStore, SeededRng, Tape, Var};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarGraph {
    pub node_count: usize,
    /// `(source, destination)` pairs, sorted.
    pub edges: Vec<(usize, usize)>,
    pub self_loops: bool,
}

pub fn build_star_graph(num_neighbors: usize) -> StarGraph {
    StarGraph::new(num_neighbors, true)
}

impl StarGraph {
    pub fn new(num_neighbors: usize, self_loops: bool) -> Self {
        let node_count = num_neighbors + 1;
        let mut edges: Vec<(usize, usize)> = (1..node_count).map(|j| (j, 0)).collect();
        if self_loops {
            edges.extend((0..node_count).map(|i| (i, i)));
        }
        edges.sort_unstable();
        Self {
            node_count,
            edges,
            self_loops,
        }
    }

    /// Number of neighbor edges into the target, excluding self loops.
    pub fn inbound_count(&self) -> usize {
        self.edges.iter().filter(|(s, d)| *d == 0 && *s != 0).count()
    }

    /// Removes the edge from `neighbor` into the target.
    pub fn without_neighbor(mut self, neighbor: usize) -> Self {
        self.edges.retain(|&(s, d)| !(s == neighbor && d == 0));
        self
    }

    /// Sources of edges ending at `dst`, ascending.
    pub fn in_neighbors(&self, dst: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(_, d)| *d == dst)
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match self
            .edges
            .iter()
            .find(|(s, d)| *s >= self.node_count || *d >= self.node_count)
        {
            Some(e) => Err(Error::Graph(format!(
                "edge {e:?} references a node outside 0..{}",
                self.node_count
            ))),
            None => Ok(()),
        }
    }
}

/// One multi-head graph-attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayerParams {
    /// Per-head `[head_dim, d_in]` transforms.
    pub weights: Vec<ParamId>,
    /// Per-head `[2 * head_dim]` attention vectors.
    pub attention: Vec<ParamId>,
    pub bias: ParamId,
    pub heads: usize,
    pub head_dim: usize,
    pub in_dim: usize,
    pub attention_slope: f64,
    pub concat: bool,
    /// LeakyReLU slope applied to the layer output, if any.
    pub activation: Option<f64>,
}

impl GatLayerParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        concat: bool,
        activation: Option<f64>,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if heads == 0 || (concat && !out_dim.is_multiple_of(heads)) {
            return Err(Error::Config(format!(
                "GAT width {out_dim} is not divisible by {heads} heads"
            )));
        }
        let head_dim = if concat { out_dim / heads } else { out_dim };
        let weights = (0..heads)
            .map(|h| {
                store.add(
                    format!("{name}.head{h}.weight"),
                    uniform_init(rng, &[head_dim, in_dim], in_dim),
                )
            })
            .collect();
        let attention = (0..heads)
            .map(|h| {
                store.add(
                    format!("{name}.head{h}.attention"),
                    uniform_init(rng, &[2 * head_dim], 2 * head_dim),
                )
            })
            .collect();
        let bias = store.add(format!("{name}.bias"), DiffTensor::zeros(&[out_dim]));
        Ok(Self {
            weights,
            attention,
            bias,
            heads,
            head_dim,
            in_dim,
            attention_slope: 0.2,
            concat,
            activation,
        })
    }

    pub fn out_dim(&self) -> usize {
        if self.concat {
            self.heads * self.head_dim
        } else {
            self.head_dim
        }
    }
}

/// Attention weights of one head at one destination node.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub head: usize,
    pub node: usize,
    pub sources: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug)]
pub struct GatOutput<'t> {
    /// `[node_count, out_dim]`
    pub features: Var<'t>,
    pub attention: Vec<AttentionWeights>,
}

/// Applies one GAT layer to `[node_count, d_in]` node features.
pub fn gat_layer<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    node_feats: Var<'t>,
    graph: &StarGraph,
    params: &GatLayerParams,
) -> Result<GatOutput<'t>> {
    graph.validate()?;
    let shape = node_feats.shape();
    if shape != [graph.node_count, params.in_dim] {
        return Err(Error::Shape {
            op: "gat_layer",
            lhs: shape,
            rhs: vec![graph.node_count, params.in_dim],
        });
    }
    let n = graph.node_count;
    let dh = params.head_dim;
    let sources: Vec<Vec<usize>> = (0..n).map(|i| graph.in_neighbors(i)).collect();

    let mut per_node: Vec<Vec<Var<'t>>> = vec![Vec::with_capacity(params.heads); n];
    let mut attention = Vec::new();
    for h in 0..params.heads {
        let transformed = node_feats.linear(tape.param(store, params.weights[h]), None)?;
        let a = tape.param(store, params.attention[h]);
        let a_dst = a.slice(0, dh)?;
        let a_src = a.slice(dh, dh)?;
        let rows: Vec<Var<'t>> = (0..n)
            .map(|i| transformed.row(i))
            .collect::<Result<_>>()?;
        for (dst, srcs) in sources.iter().enumerate() {
            if srcs.is_empty() {
                per_node[dst].push(tape.zeros(&[dh]));
                continue;
            }
            let dst_term = a_dst.dot(rows[dst])?;
            let scores: Vec<Var<'t>> = srcs
                .iter()
                .map(|&s| Ok((dst_term + a_src.dot(rows[s])?).leaky_relu(params.attention_slope)))
                .collect::<Result<_>>()?;
            let alpha = Var::concat(&scores).softmax();
            attention.push(AttentionWeights {
                head: h,
                node: dst,
                sources: srcs.clone(),
                weights: alpha.value(),
            });
            let msgs: Vec<Var<'t>> = srcs.iter().map(|&s| rows[s]).collect();
            let stacked = Var::stack_rows(&msgs)?.transpose()?;
            per_node[dst].push(alpha.linear(stacked, None)?);
        }
    }

    let bias = tape.param(store, params.bias);
    let outputs: Vec<Var<'t>> = per_node
        .into_iter()
        .map(|heads| {
            let merged = if params.concat {
                Var::concat(&heads)
            } else {
                let k = heads.len() as f64;
                heads
                    .into_iter()
                    .reduce(|acc, x| acc + x)
                    .expect("at least one head")
                    .scale(1.0 / k)
            };
            let y = merged + bias;
            match params.activation {
                Some(slope) => y.leaky_relu(slope),
                None => y,
            }
        })
        .collect();
    Ok(GatOutput {
        features: Var::stack_rows(&outputs)?,
        attention,
    })
}

/// Two GAT layers followed by the projection `Φ = LeakyReLU(W·z + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionParams {
    pub gat1: GatLayerParams,
    pub gat2: GatLayerParams,
    pub projection: Linear,
    pub output_slope: f64,
}

impl InteractionParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        gat_width: usize,
        heads: usize,
        second_concat: bool,
        out_dim: usize,
        slope: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let gat1 = GatLayerParams::new(
            store,
            &format!("{name}.gat1"),
            in_dim,
            gat_width,
            heads,
            true,
            Some(slope),
            rng,
        )?;
        let gat2 = GatLayerParams::new(
            store,
            &format!("{name}.gat2"),
            gat1.out_dim(),
            gat_width,
            heads,
            second_concat,
            None,
            rng,
        )?;
        let projection = Linear::new(store, &format!("{name}.proj"), gat2.out_dim(), out_dim, rng);
        Ok(Self {
            gat1,
            gat2,
            projection,
            output_slope: slope,
        })
    }
}

/// Interaction feature of the target node.
pub fn interaction_vector<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    hidden_states: Var<'t>,
    graph: &StarGraph,
    params: &InteractionParams,
) -> Result<Var<'t>> {
    let z = gat_layer(tape, store, hidden_states, graph, &params.gat1)?.features;
    let z2 = gat_layer(tape, store, z, graph, &params.gat2)?.features;
    let target = z2.row(0)?;
    Ok(params
        .projection
        .forward(tape, store, target)?
        .leaky_relu(params.output_slope))
}
