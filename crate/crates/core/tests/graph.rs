use xtrack::graph::*;
use xtrack::numcore::*;

fn leaky(x: f64, s: f64) -> f64 {
    if x > 0.0 { x } else { s * x }
}

fn set(store: &mut ParamStore, id: ParamId, v: &[f64]) {
    store.get_mut(id).values_mut().copy_from_slice(v);
}

#[test]
fn two_neighbor_hand_arithmetic() {
    let g = build_star_graph(2);
    let mut store = ParamStore::new();
    let p = GatLayerParams::new(&mut store, "g", 2, 2, 1, true, None, &mut SeededRng::new(0)).unwrap();
    let w = [0.5, -0.3, 0.2, 0.8];
    let a = [0.7, -0.4, 0.1, 0.9];
    let bias = [0.05, -0.02];
    set(&mut store, p.weights[0], &w);
    set(&mut store, p.attention[0], &a);
    set(&mut store, p.bias, &bias);
    let h = [[1.0, 2.0], [-1.0, 0.5], [0.3, -0.7]];

    let tape = Tape::new();
    let x = tape.constant(&[3, 2], h.iter().flatten().copied().collect());
    let out = gat_layer(&tape, &store, x, &g, &p).unwrap();

    let wh: Vec<[f64; 2]> = h
        .iter()
        .map(|r| [w[0] * r[0] + w[1] * r[1], w[2] * r[0] + w[3] * r[1]])
        .collect();
    let dst = a[0] * wh[0][0] + a[1] * wh[0][1];
    let scores: Vec<f64> = (0..3)
        .map(|j| leaky(dst + a[2] * wh[j][0] + a[3] * wh[j][1], 0.2))
        .collect();
    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    let alpha: Vec<f64> = e.iter().map(|v| v / z).collect();
    let target = [
        alpha[0] * wh[0][0] + alpha[1] * wh[1][0] + alpha[2] * wh[2][0] + bias[0],
        alpha[0] * wh[0][1] + alpha[1] * wh[1][1] + alpha[2] * wh[2][1] + bias[1],
    ];
    let got = out.features.value();
    assert!((got[0] - target[0]).abs() <= 1e-12 && (got[1] - target[1]).abs() <= 1e-12);
    // neighbors only see their own self loop
    for j in 1..3 {
        assert!((got[2 * j] - wh[j][0] - bias[0]).abs() <= 1e-12);
        assert!((got[2 * j + 1] - wh[j][1] - bias[1]).abs() <= 1e-12);
    }
    let att = out.attention.iter().find(|a| a.node == 0).unwrap();
    assert_eq!(att.sources, vec![0, 1, 2]);
    for k in 0..3 {
        assert!((att.weights[k] - alpha[k]).abs() <= 1e-12);
    }
}

#[test]
fn identical_neighbors_share_attention() {
    let g = StarGraph::new(2, false);
    let mut store = ParamStore::new();
    let p = GatLayerParams::new(&mut store, "g", 3, 4, 2, true, Some(0.1), &mut SeededRng::new(3)).unwrap();
    let tape = Tape::new();
    let x = tape.constant(&[3, 3], vec![0.4, 0.1, -0.2, 1.0, -1.0, 0.5, 1.0, -1.0, 0.5]);
    let out = gat_layer(&tape, &store, x, &g, &p).unwrap();
    for a in out.attention.iter().filter(|a| a.node == 0) {
        assert_eq!(a.weights, vec![0.5, 0.5]);
    }
}

#[test]
fn attention_is_a_distribution_for_every_head() {
    let g = build_star_graph(8);
    let mut store = ParamStore::new();
    let mut rng = SeededRng::new(12);
    let p = GatLayerParams::new(&mut store, "g", 6, 8, 4, true, Some(0.1), &mut rng).unwrap();
    for _ in 0..20 {
        let tape = Tape::new();
        let x = tape.constant(&[9, 6], (0..54).map(|_| 3.0 * rng.normal()).collect());
        let out = gat_layer(&tape, &store, x, &g, &p).unwrap();
        assert_eq!(out.attention.iter().filter(|a| a.node == 0).count(), 4);
        for a in &out.attention {
            assert!(a.weights.iter().all(|w| *w >= 0.0));
            assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

fn interaction(store: &mut ParamStore, seed: u64) -> InteractionParams {
    InteractionParams::new(store, "gat", 8, 8, 4, true, 8, 0.1, &mut SeededRng::new(seed)).unwrap()
}

#[test]
fn standard_widths() {
    let mut store = ParamStore::new();
    let p = InteractionParams::new(&mut store, "gat", 64, 64, 4, true, 64, 0.1, &mut SeededRng::new(0)).unwrap();
    assert_eq!(p.gat1.head_dim, 16);
    assert_eq!(p.gat1.out_dim(), 64);
    assert_eq!(p.gat2.out_dim(), 64);
    let tape = Tape::new();
    let g = interaction_vector(&tape, &store, tape.zeros(&[9, 64]), &build_star_graph(8), &p).unwrap();
    assert_eq!(g.shape(), vec![64]);
}

#[test]
fn zero_states_and_biases_give_zero_interaction() {
    let mut store = ParamStore::new();
    let p = interaction(&mut store, 1);
    let tape = Tape::new();
    let g = interaction_vector(&tape, &store, tape.zeros(&[9, 8]), &build_star_graph(8), &p).unwrap();
    assert!(g.value().iter().all(|v| *v == 0.0));
}

#[test]
fn swapping_identical_neighbors_leaves_interaction_unchanged() {
    let mut store = ParamStore::new();
    let p = interaction(&mut store, 2);
    let mut rng = SeededRng::new(20);
    let mut feats: Vec<f64> = (0..72).map(|_| rng.normal()).collect();
    // slots 3 and 6 identical
    let row3: Vec<f64> = feats[24..32].to_vec();
    feats[48..56].copy_from_slice(&row3);
    let run = |f: &[f64]| {
        let tape = Tape::new();
        interaction_vector(&tape, &store, tape.constant(&[9, 8], f.to_vec()), &build_star_graph(8), &p)
            .unwrap()
            .value()
    };
    let base = run(&feats);
    let mut swapped = feats.clone();
    for k in 0..8 {
        swapped.swap(8 + k, 56 + k);
        swapped.swap(24 + k, 48 + k);
    }
    // permuting slots 1 and 7 as well as 3 and 6
    let permuted = run(&swapped);
    assert!(base.iter().zip(&permuted).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn masked_neighbor_has_zero_sensitivity() {
    let mut store = ParamStore::new();
    let p = interaction(&mut store, 4);
    let graph = build_star_graph(8).without_neighbor(5);
    let mut rng = SeededRng::new(40);
    let feats = DiffTensor::matrix(9, 8, (0..72).map(|_| rng.normal()).collect()).unwrap();
    let tape = Tape::new();
    let x = tape.leaf(&feats);
    let g = interaction_vector(&tape, &store, x, &graph, &p).unwrap();
    let grads = tape.backward(g.sum()).unwrap().wrt(x);
    assert!(grads[40..48].iter().all(|v| *v == 0.0));
    assert!(grads[8..16].iter().any(|v| *v != 0.0));

    let eval = |f: &[f64]| {
        let tape = Tape::new();
        interaction_vector(&tape, &store, tape.constant(&[9, 8], f.to_vec()), &graph, &p)
            .unwrap()
            .value()
    };
    let base = eval(feats.values());
    let mut bumped = feats.values().to_vec();
    for v in &mut bumped[40..48] {
        *v += 1e-3;
    }
    assert_eq!(base, eval(&bumped));
}

#[test]
fn gat_layer_passes_grad_check() {
    let graph = build_star_graph(4);
    for seed in 0..20u64 {
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(seed);
        let concat = seed % 2 == 0;
        let p = GatLayerParams::new(&mut store, "g", 3, 4, 2, concat, Some(0.1), &mut rng).unwrap();
        let x = DiffTensor::matrix(5, 3, (0..15).map(|_| rng.normal()).collect()).unwrap();
        let w: Vec<f64> = (0..5 * p.out_dim()).map(|k| ((k * 7) % 11) as f64 / 11.0 - 0.4).collect();
        let report = grad_check_params(
            |tape, store| {
                let out = gat_layer(tape, store, tape.leaf(&x), &graph, &p)?;
                Ok((out.features * tape.constant(&[5, p.out_dim()], w.clone())).sum())
            },
            &store,
            1e-6,
        )
        .unwrap()
        .merge(
            grad_check(
                |tape, v| {
                    let out = gat_layer(tape, &store, v[0], &graph, &p)?;
                    Ok((out.features * tape.constant(&[5, p.out_dim()], w.clone())).sum())
                },
                std::slice::from_ref(&x),
                1e-6,
            )
            .unwrap(),
        );
        assert!(report.passes(1e-4), "seed {seed}: {report:?}");
    }
}

#[test]
fn interaction_vector_passes_grad_check() {
    let mut store = ParamStore::new();
    let p = interaction(&mut store, 9);
    let mut rng = SeededRng::new(90);
    let x = DiffTensor::matrix(9, 8, (0..72).map(|_| rng.normal()).collect()).unwrap();
    let report = grad_check_params(
        |tape, store| Ok(interaction_vector(tape, store, tape.leaf(&x), &build_star_graph(8), &p)?.sum()),
        &store,
        1e-6,
    )
    .unwrap();
    assert!(report.passes(1e-4), "{report:?}");
}
