//! X-TRAJ and X-TRACK: per-vehicle embedding and recurrent encoding, star
//! graph attention over the neighbor grid, a recurrent decoder, and for
//! X-TRACK a bounded control head followed by the kinematic rollout.

mod checkpoint;
mod config;
mod train;

use serde::{Deserialize, Serialize};

use crate::cells::{encode_sequence, CellOptions, CellParams};
use crate::error::{Error, Result};
use crate::graph::{build_star_graph, interaction_vector, InteractionParams, StarGraph};
use crate::kinematics::{
    derive_controls, rollout_var, saturate, state_on_tape, ControlSequence, KinematicState, MotionLimits,
    PositionTrack,
};
use crate::numcore::{Linear, ParamStore, SeededRng, Tape, Var};
use crate::scenario::{Scenario, Slot};

pub use checkpoint::{load_params, read_params, save_params, write_params, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Variant};
pub use train::{evaluate_loss, train, EpochStats, TrainConfig, TrainOutcome};

/// Model output for one scenario, in the target frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub scenario_id: String,
    /// `t_f` future positions.
    pub positions: Vec<[f64; 2]>,
    /// Bounded per-step controls (X-TRACK only).
    pub controls: Option<ControlSequence>,
}

/// Network inputs and targets derived once per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedScenario {
    pub scenario_id: String,
    /// Row-major `[t_obs, features]` per node; `None` marks a ghost, which
    /// shares the target's (node 0) features.
    nodes: Vec<Option<Vec<f64>>>,
    /// Target state at the last observed step.
    pub initial: KinematicState,
    pub truth: Vec<[f64; 2]>,
    /// Ground-truth controls over the horizon (X-TRACK only).
    pub truth_controls: Option<ControlSequence>,
    pub dt: f64,
}

fn history_positions(t: &crate::scenario::Track, t_obs: usize) -> Vec<[f64; 2]> {
    t.positions()[..t_obs].to_vec()
}

impl PreparedScenario {
    pub fn new(scenario: &Scenario, config: &ModelConfig) -> Result<Self> {
        scenario.validate()?;
        if scenario.t_obs != config.t_obs || scenario.t_f != config.t_f {
            return Err(Error::Config(format!(
                "scenario {} has {}+{} steps, model expects {}+{}",
                scenario.scenario_id, scenario.t_obs, scenario.t_f, config.t_obs, config.t_f
            )));
        }
        let (t_obs, dt) = (config.t_obs, scenario.dt);
        let features = |t: &crate::scenario::Track| -> Result<Vec<f64>> {
            match config.variant {
                Variant::Xtraj => Ok((0..t_obs)
                    .flat_map(|k| {
                        [
                            t.x[k] / config.position_scale,
                            t.y[k] / config.lateral_scale,
                            t.v[k] / config.speed_scale,
                            t.a[k] / config.accel_scale,
                        ]
                    })
                    .collect()),
                Variant::Xtrack => {
                    let m = derive_controls(&PositionTrack::uniform(history_positions(t, t_obs), dt), dt)?;
                    Ok((0..t_obs)
                        .flat_map(|k| {
                            [
                                m.controls.a_x[k] / config.accel_scale,
                                m.controls.psi_dot[k] / config.yaw_rate_scale,
                            ]
                        })
                        .collect())
                }
            }
        };
        let mut nodes = vec![Some(features(&scenario.target)?)];
        for slot in &scenario.neighbors.slots[..config.neighbors] {
            nodes.push(match slot {
                Slot::Ghost => None,
                Slot::Vehicle(t) => Some(features(t)?),
            });
        }
        let initial = derive_controls(&PositionTrack::uniform(history_positions(&scenario.target, t_obs), dt), dt)?
            .final_state();
        let truth_controls = match config.variant {
            Variant::Xtraj => None,
            Variant::Xtrack => {
                let full = derive_controls(&PositionTrack::uniform(scenario.target.positions(), dt), dt)?;
                Some(full.controls.window(t_obs - 1, t_obs - 1 + config.t_f))
            }
        };
        Ok(Self {
            scenario_id: scenario.scenario_id.clone(),
            nodes,
            initial,
            truth: scenario.future_positions(),
            truth_controls,
            dt,
        })
    }
}

/// Tape outputs of one forward pass.
pub struct ForwardVars<'t> {
    /// `[t_f, 2]` positions.
    pub positions: Var<'t>,
    /// Bounded `(a_x, ψ̇)` per step (X-TRACK only).
    pub controls: Option<(Vec<Var<'t>>, Vec<Var<'t>>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    embed: Linear,
    encoder: CellParams,
    interaction: InteractionParams,
    decoder: CellParams,
    head: Linear,
    graph: StarGraph,
}

impl Model {
    /// Fresh parameters drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(config.seed);
        let mut store = ParamStore::new();
        let c = &config;
        let options = CellOptions {
            num_heads: c.slstm_heads,
            forget_activation: c.forget_activation,
        };
        let embed = Linear::new(&mut store, "embed", c.input_features(), c.embed_dim, &mut rng);
        let encoder = CellParams::new(c.encoder, &mut store, "encoder", c.embed_dim, c.encoder_hidden, options, &mut rng)?;
        let interaction = InteractionParams::new(
            &mut store,
            "gat",
            c.encoder_hidden,
            c.encoder_hidden,
            c.gat_heads,
            true,
            c.encoder_hidden,
            c.leaky_slope,
            &mut rng,
        )?;
        let decoder = CellParams::new(
            c.decoder,
            &mut store,
            "decoder",
            2 * c.encoder_hidden,
            c.decoder_hidden,
            options,
            &mut rng,
        )?;
        let head = Linear::new(&mut store, "head", c.decoder_hidden, 2, &mut rng);
        let graph = build_star_graph(c.neighbors);
        Ok(Self {
            config,
            store,
            embed,
            encoder,
            interaction,
            decoder,
            head,
            graph,
        })
    }

    pub fn prepare(&self, scenario: &Scenario) -> Result<PreparedScenario> {
        PreparedScenario::new(scenario, &self.config)
    }

    /// Builds the forward graph with parameters read from `store`, which
    /// must share this model's layout.
    pub fn forward_vars<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        s: &PreparedScenario,
    ) -> Result<ForwardVars<'t>> {
        let c = &self.config;
        let f = c.input_features();
        let mut finals: Vec<Var<'t>> = Vec::with_capacity(s.nodes.len());
        for node in &s.nodes {
            let h = match node {
                None => finals[0],
                Some(feats) => {
                    let x = tape.constant(&[c.t_obs, f], feats.clone());
                    let e = self.embed.forward(tape, store, x)?.leaky_relu(c.leaky_slope);
                    encode_sequence(tape, store, &self.encoder, e)?.final_state.hidden()
                }
            };
            finals.push(h);
        }
        let g = interaction_vector(tape, store, Var::stack_rows(&finals)?, &self.graph, &self.interaction)?;
        let context = Var::concat(&[finals[0], g]);

        let mut state = self.decoder.zero_state(tape);
        let mut outs = Vec::with_capacity(c.t_f);
        for _ in 0..c.t_f {
            state = self.decoder.step(tape, store, &state, context)?;
            outs.push(self.head.forward(tape, store, state.hidden())?.leaky_relu(c.leaky_slope));
        }
        match c.variant {
            Variant::Xtraj => {
                // each step emits a displacement on top of the constant-velocity
                // step from the last observed state
                let k = &s.initial;
                let base = tape.vector(vec![k.v * k.psi.cos() * s.dt, k.v * k.psi.sin() * s.dt]);
                let mut p = tape.vector(vec![k.x, k.y]);
                let mut rows = Vec::with_capacity(c.t_f);
                for o in &outs {
                    p = p + base + *o * c.step_scale;
                    rows.push(p);
                }
                Ok(ForwardVars {
                    positions: Var::stack_rows(&rows)?,
                    controls: None,
                })
            }
            Variant::Xtrack => {
                let limits = MotionLimits::default();
                let mut a = Vec::with_capacity(c.t_f);
                let mut w = Vec::with_capacity(c.t_f);
                for o in &outs {
                    a.push(saturate(o.slice(0, 1)? * c.accel_scale, limits.a_max));
                    w.push(saturate(o.slice(1, 1)? * c.yaw_rate_scale, limits.psi_dot_max));
                }
                let positions = rollout_var(state_on_tape(tape, &s.initial), &a, &w, s.dt)?;
                Ok(ForwardVars {
                    positions,
                    controls: Some((a, w)),
                })
            }
        }
    }

    /// Position MSE plus `aux_weight` times the control MSE against the
    /// derived ground-truth controls.
    pub fn loss_var<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        s: &PreparedScenario,
        aux_weight: f64,
    ) -> Result<Var<'t>> {
        let out = self.forward_vars(tape, store, s)?;
        let truth: Vec<f64> = s.truth.iter().flat_map(|p| *p).collect();
        let gt = tape.constant(&[s.truth.len(), 2], truth);
        let mut loss = out.positions.try_sub(gt)?.square().mean();
        if aux_weight != 0.0 {
            if let (Some((a, w)), Some(tc)) = (&out.controls, &s.truth_controls) {
                let pred = Var::concat(&[Var::concat(a), Var::concat(w)]);
                let mut gt = tc.a_x.clone();
                gt.extend_from_slice(&tc.psi_dot);
                let gt = tape.vector(gt);
                loss = loss + pred.try_sub(gt)?.square().mean() * aux_weight;
            }
        }
        Ok(loss)
    }

    pub fn predict_prepared(&self, s: &PreparedScenario) -> Result<Prediction> {
        let tape = Tape::new();
        let out = self.forward_vars(&tape, &self.store, s)?;
        let v = out.positions.value();
        let positions: Vec<[f64; 2]> = v.chunks(2).map(|p| [p[0], p[1]]).collect();
        if positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("prediction for {}", s.scenario_id)));
        }
        let controls = match out.controls {
            Some((a, w)) => Some(ControlSequence::new(
                a.iter().map(Var::scalar).collect(),
                w.iter().map(Var::scalar).collect(),
                s.dt,
            )?),
            None => None,
        };
        Ok(Prediction {
            scenario_id: s.scenario_id.clone(),
            positions,
            controls,
        })
    }

    pub fn predict(&self, scenario: &Scenario) -> Result<Prediction> {
        self.predict_prepared(&self.prepare(scenario)?)
    }

    /// Predictions for many scenarios on a worker pool, in input order.
    pub fn predict_all(&self, scenarios: &[Scenario], threads: Option<usize>) -> Result<Vec<Prediction>> {
        use rayon::prelude::*;
        crate::parallel::pool(threads)?.install(|| scenarios.par_iter().map(|s| self.predict(s)).collect())
    }
}

/// Mean squared error over every step and both coordinates.
pub fn loss(pred: &Prediction, truth: &[[f64; 2]]) -> Result<f64> {
    if pred.positions.len() != truth.len() || truth.is_empty() {
        return Err(Error::Shape {
            op: "loss",
            lhs: vec![pred.positions.len(), 2],
            rhs: vec![truth.len(), 2],
        });
    }
    let sum: f64 = pred
        .positions
        .iter()
        .zip(truth)
        .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
        .sum();
    Ok(sum / (2 * truth.len()) as f64)
}
