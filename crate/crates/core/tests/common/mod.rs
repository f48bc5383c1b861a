#![allow(dead_code)]

use dualcycle::math::{Graph, NodeId, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Relative error with a small absolute floor so that two near-zero
/// derivatives compare as equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn eval<S>(state: &S, loss_of: &impl Fn(&S, &mut Graph) -> NodeId) -> f64 {
    let mut g = Graph::new();
    let l = loss_of(state, &mut g);
    g.value(l).item().unwrap()
}

/// Largest relative error between analytic parameter gradients and central
/// finite differences. At most `per_param` entries of each parameter are
/// probed (chosen by a fixed-seed sampler).
pub fn param_grad_error<S>(
    state: &mut S,
    stores_of: impl Fn(&mut S) -> Vec<&mut ParamStore>,
    loss_of: impl Fn(&S, &mut Graph) -> NodeId,
    per_param: usize,
) -> f64 {
    for s in stores_of(state) {
        s.zero_grad();
    }
    let mut g = Graph::new();
    let l = loss_of(state, &mut g);
    let grads = g.backward(l).unwrap();
    let mut analytic: Vec<Vec<Tensor>> = Vec::new();
    for s in stores_of(state) {
        s.accumulate(&g, &grads);
        analytic.push(s.ids().map(|id| s.grad(id).unwrap().clone()).collect());
    }
    drop(g);

    let mut pick = rng(99);
    let mut worst: f64 = 0.0;
    for (k, per_store) in analytic.iter().enumerate() {
        for (p, grad) in per_store.iter().enumerate() {
            let n = grad.len();
            let probes: Vec<usize> = if n <= per_param {
                (0..n).collect()
            } else {
                (0..per_param).map(|_| pick.gen_range(0..n)).collect()
            };
            for i in probes {
                let nudge = |state: &mut S, delta: f64| {
                    let mut stores = stores_of(state);
                    let id = stores[k].ids().nth(p).unwrap();
                    stores[k].value_mut(id).data_mut()[i] += delta;
                };
                nudge(state, FD_EPS);
                let up = eval(state, &loss_of);
                nudge(state, -2.0 * FD_EPS);
                let down = eval(state, &loss_of);
                nudge(state, FD_EPS);
                let numeric = (up - down) / (2.0 * FD_EPS);
                worst = worst.max(rel_err(grad.data()[i], numeric));
            }
        }
    }
    worst
}

/// Same check for free input leaves: `build` receives the current input
/// tensors and must create them with `Graph::variable` in order.
pub fn input_grad_error(
    inputs: &mut [Tensor],
    build: impl Fn(&mut Graph, &[NodeId]) -> NodeId,
) -> f64 {
    let run = |inputs: &[Tensor]| {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
        let l = build(&mut g, &ids);
        (g, ids, l)
    };
    let (g, ids, l) = run(inputs);
    let grads = g.backward(l).unwrap();
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .zip(inputs.iter())
        .map(|(id, t)| {
            grads
                .get(*id)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();
    let mut worst: f64 = 0.0;
    for k in 0..inputs.len() {
        for i in 0..inputs[k].len() {
            inputs[k].data_mut()[i] += FD_EPS;
            let (g, _, l) = run(inputs);
            let up = g.value(l).item().unwrap();
            inputs[k].data_mut()[i] -= 2.0 * FD_EPS;
            let (g, _, l) = run(inputs);
            let down = g.value(l).item().unwrap();
            inputs[k].data_mut()[i] += FD_EPS;
            worst = worst.max(rel_err(analytic[k][i], (up - down) / (2.0 * FD_EPS)));
        }
    }
    worst
}

/// Weighted sum of all entries with fixed pseudo-random weights, so that the
/// checked scalar depends on every output component differently.
pub fn probe_loss(g: &mut Graph, out: NodeId, seed: u64) -> NodeId {
    let t = g.value(out);
    let w = random_tensor(&mut rng(seed), t.shape(), 1.0);
    let w = g.input(w);
    let m = g.mul(out, w).unwrap();
    g.sum(m)
}

pub type Build = Box<dyn Fn(&mut Graph, &[NodeId]) -> NodeId>;

/// One finite-difference case per differentiable graph operation.
pub fn op_cases() -> Vec<(&'static str, Vec<Tensor>, Build)> {
    let mut r = rng(6);
    let a = random_tensor(&mut r, &[3, 4], 1.0);
    let b = random_tensor(&mut r, &[3, 4], 1.0);
    let z = random_tensor(&mut r, &[3, 4], 1.0).map(|v| 0.5 + 0.4 * v);
    let bias = random_tensor(&mut r, &[4], 1.0);
    let bias3 = random_tensor(&mut r, &[3], 1.0);
    let k = random_tensor(&mut r, &[4, 2], 1.0);
    let pos = random_tensor(&mut r, &[3, 4], 1.0).map(|v| 1.5 + v);
    // relu inputs kept away from the kink
    let away = a.map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });

    vec![
        ("add", vec![a.clone(), b.clone()], Box::new(|g, i| { let o = g.add(i[0], i[1]).unwrap(); probe_loss(g, o, 1) })),
        ("sub", vec![a.clone(), b.clone()], Box::new(|g, i| { let o = g.sub(i[0], i[1]).unwrap(); probe_loss(g, o, 2) })),
        ("mul", vec![a.clone(), b.clone()], Box::new(|g, i| { let o = g.mul(i[0], i[1]).unwrap(); probe_loss(g, o, 3) })),
        ("add_row", vec![a.clone(), bias.clone()], Box::new(|g, i| { let o = g.add_row(i[0], i[1]).unwrap(); probe_loss(g, o, 4) })),
        ("scale", vec![a.clone()], Box::new(|g, i| { let o = g.scale(i[0], -2.5); probe_loss(g, o, 5) })),
        ("one_minus", vec![a.clone()], Box::new(|g, i| { let o = g.one_minus(i[0]); probe_loss(g, o, 6) })),
        ("sigmoid", vec![a.clone()], Box::new(|g, i| { let o = g.sigmoid(i[0]); probe_loss(g, o, 7) })),
        ("tanh", vec![a.clone()], Box::new(|g, i| { let o = g.tanh(i[0]); probe_loss(g, o, 8) })),
        ("relu", vec![away], Box::new(|g, i| { let o = g.relu(i[0]); probe_loss(g, o, 9) })),
        ("log", vec![pos], Box::new(|g, i| { let o = g.log(i[0]); probe_loss(g, o, 10) })),
        ("softmax", vec![a.clone()], Box::new(|g, i| { let o = g.softmax(i[0]); probe_loss(g, o, 11) })),
        ("blend", vec![z, a.clone(), b.clone()], Box::new(|g, i| { let o = g.blend(i[0], i[1], i[2]).unwrap(); probe_loss(g, o, 12) })),
        ("matmul", vec![a.clone(), k], Box::new(|g, i| { let o = g.matmul(i[0], i[1]).unwrap(); probe_loss(g, o, 13) })),
        ("affine", vec![a.clone(), b.clone(), bias3], Box::new(|g, i| { let o = g.affine(i[0], i[1], Some(i[2])).unwrap(); probe_loss(g, o, 14) })),
        ("row_sum", vec![a.clone()], Box::new(|g, i| { let o = g.row_sum(i[0]); probe_loss(g, o, 15) })),
        ("mean", vec![a.clone()], Box::new(|g, i| g.mean(i[0]))),
        ("gather", vec![a.clone()], Box::new(|g, i| { let o = g.gather(i[0], &[2, 0, 2, 1]).unwrap(); probe_loss(g, o, 16) })),
        ("pick", vec![a.clone()], Box::new(|g, i| { let o = g.pick(i[0], &[3, 0, 1]).unwrap(); probe_loss(g, o, 17) })),
    ]
}
