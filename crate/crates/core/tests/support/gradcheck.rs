//! Analytic gradients against central finite differences.
//!
//! Every op is wrapped as `L = Σ W ⊙ op(inputs)` with a fixed random `W`, so
//! all output elements contribute. The error measure is the norm-wise
//! relative error `‖g_analytic − g_numeric‖ / max(‖g_analytic‖, ‖g_numeric‖)`
//! over all inputs of the op.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seaice_core::losses::{cross_entropy, focal_loss, weighted_cross_entropy, ClassWeights, FocalParams};
use seaice_core::vit::{forward, init_params, ViTConfig, ViTParams};
use seaice_core::{Tape, Tensor, Var};

pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const OP_STEP: f32 = 1e-3;
pub const OP_TOL: f64 = 1e-3;
pub const E2E_STEP: f32 = 1e-2;
pub const E2E_TOL: f64 = 1e-2;
pub const E2E_LOSSES: [&str; 3] = ["ce", "wce", "focal"];

pub type OpFn = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;
pub type MakeOp = Box<dyn Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, OpFn)>;

pub struct OpCase {
    pub name: String,
    pub make: MakeOp,
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Builds the scalar objective on a fresh tape; `track` selects whether the
/// inputs are registered as gradient-carrying parameters.
fn objective(inputs: &[Tensor], f: &OpFn, weight_seed: u64, track: bool) -> (Tape, Vec<Var>, Var) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| {
            if track {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
        .collect();
    let out = f(&mut tape, &vars);
    let shape = tape.value(out).shape().to_vec();
    let w = random(&mut ChaCha8Rng::seed_from_u64(weight_seed), &shape, 1.0);
    let w = tape.constant(w);
    let prod = tape.mul(out, w).unwrap();
    let loss = tape.sum(prod).unwrap();
    (tape, vars, loss)
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-12)
}

fn gradient_error(inputs: Vec<Tensor>, f: OpFn, step: f32, weight_seed: u64) -> f64 {
    let (tape, vars, loss) = objective(&inputs, &f, weight_seed, true);
    let grads = tape.backward(loss).unwrap();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for (i, v) in vars.iter().enumerate() {
        for (j, &a) in grads.get(*v).unwrap().data().iter().enumerate() {
            let eval = |delta: f32| {
                let mut shifted = inputs.clone();
                shifted[i].data_mut()[j] += delta;
                let (t, _, l) = objective(&shifted, &f, weight_seed, false);
                t.value(l).item().unwrap() as f64
            };
            analytic.push(a as f64);
            numeric.push((eval(step) - eval(-step)) / (2.0 * step as f64));
        }
    }
    relative_error(&analytic, &numeric)
}

pub fn op_error(case: &OpCase, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (inputs, f) = (case.make)(&mut rng);
    gradient_error(inputs, f, OP_STEP, seed + 100)
}

fn case(name: &str, make: impl Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, OpFn) + 'static) -> OpCase {
    OpCase {
        name: name.to_string(),
        make: Box::new(make),
    }
}

fn unary(
    name: &str,
    shape: &'static [usize],
    scale: f32,
    f: impl Fn(&mut Tape, Var) -> Var + Clone + 'static,
) -> OpCase {
    case(name, move |r| {
        let f = f.clone();
        (
            vec![random(r, shape, scale)],
            Box::new(move |t: &mut Tape, v: &[Var]| f(t, v[0])),
        )
    })
}

fn binary(name: &str, a: &'static [usize], b: &'static [usize], f: fn(&mut Tape, Var, Var) -> Var) -> OpCase {
    case(name, move |r| {
        (
            vec![random(r, a, 1.0), random(r, b, 1.0)],
            Box::new(move |t: &mut Tape, v: &[Var]| f(t, v[0], v[1])),
        )
    })
}

/// Every differentiable tape op, plus the loss functions built on them.
pub fn op_cases() -> Vec<OpCase> {
    let mut cases = vec![
        binary("matmul", &[3, 4], &[4, 5], |t, a, b| t.matmul(a, b).unwrap()),
        case("linear", |r| {
            let ins = vec![random(r, &[3, 4], 1.0), random(r, &[2, 4], 1.0), random(r, &[2], 1.0)];
            (
                ins,
                Box::new(|t: &mut Tape, v: &[Var]| t.linear(v[0], v[1], v[2]).unwrap()),
            )
        }),
        unary("transpose", &[3, 2], 1.0, |t, x| t.transpose(x).unwrap()),
        binary("add", &[2, 3], &[2, 3], |t, a, b| t.add(a, b).unwrap()),
        binary("add_broadcast", &[6, 3], &[2, 3], |t, a, b| {
            t.add_broadcast(a, b).unwrap()
        }),
        binary("mul", &[2, 3], &[2, 3], |t, a, b| t.mul(a, b).unwrap()),
        unary("scale", &[4], 1.0, |t, x| t.scale(x, -2.5).unwrap()),
        unary("gelu", &[3, 4], 3.0, |t, x| t.gelu(x).unwrap()),
        unary("reshape", &[2, 6], 1.0, |t, x| t.reshape(x, vec![3, 4]).unwrap()),
        unary("slice", &[4, 5], 1.0, |t, x| t.slice(x, 1, 2, 2, 3).unwrap()),
        binary("concat_rows", &[1, 3], &[2, 3], |t, a, b| {
            t.concat_rows(&[a, b, a]).unwrap()
        }),
        binary("concat_cols", &[2, 1], &[2, 3], |t, a, b| {
            t.concat_cols(&[b, a]).unwrap()
        }),
        unary("gather_rows", &[4, 3], 1.0, |t, x| {
            t.gather_rows(x, &[3, 0, 3, 1]).unwrap()
        }),
        unary("pick", &[3, 4], 1.0, |t, x| t.pick(x, &[2, 0, 3]).unwrap()),
        unary("sum", &[3, 4], 1.0, |t, x| t.sum(x).unwrap()),
        unary("mean", &[3, 4], 1.0, |t, x| t.mean(x).unwrap()),
        unary("softmax(axis 0)", &[3, 4], 3.0, |t, x| t.softmax(x, 0).unwrap()),
        unary("softmax(axis 1)", &[3, 4], 3.0, |t, x| t.softmax(x, 1).unwrap()),
        unary("log_softmax", &[3, 4], 3.0, |t, x| t.log_softmax(x).unwrap()),
        case("layer_norm", |r| {
            let ins = vec![random(r, &[3, 5], 2.0), random(r, &[5], 1.5), random(r, &[5], 1.0)];
            (
                ins,
                Box::new(|t: &mut Tape, v: &[Var]| t.layer_norm(v[0], v[1], v[2], 1e-6).unwrap()),
            )
        }),
        unary("cross_entropy", &[4, 3], 2.0, |t, x| {
            cross_entropy(t, x, &[1, 0, 2, 2]).unwrap()
        }),
        unary("weighted_cross_entropy", &[4, 3], 2.0, |t, x| {
            let w = ClassWeights::new(vec![0.5, 3.0, 1.25]).unwrap();
            weighted_cross_entropy(t, x, &[1, 0, 2, 2], &w).unwrap()
        }),
        unary("focal_loss", &[4, 3], 2.0, |t, x| {
            focal_loss(t, x, &[1, 0, 2, 2], &FocalParams::default()).unwrap()
        }),
        // x feeds three paths: x·x, softmax(x) and x itself.
        unary("fan-out", &[2, 3], 1.0, |t, x| {
            let sq = t.mul(x, x).unwrap();
            let sm = t.softmax(x, 1).unwrap();
            let a = t.add(sq, sm).unwrap();
            t.add(a, x).unwrap()
        }),
    ];
    for gamma in [0.0, 0.5, 2.0] {
        cases.push(unary(
            &format!("focal_nll(gamma {gamma})"),
            &[4, 3],
            2.0,
            move |t, x| t.focal_nll(x, &[0, 2, 1, 2], gamma).unwrap(),
        ));
    }
    cases
}

/// Full `loss(forward(·))` on the three-class test model, checked against
/// central differences over every parameter.
pub fn end_to_end_error(loss: &str, seed: u64) -> f64 {
    let config = ViTConfig::vit_test();
    let targets = [0usize, 2, 1];
    let weights = ClassWeights::new(vec![1.0, 4.0, 0.5]).unwrap();
    let apply = |t: &mut Tape, z: Var| match loss {
        "ce" => cross_entropy(t, z, &targets).unwrap(),
        "wce" => weighted_cross_entropy(t, z, &targets, &weights).unwrap(),
        "focal" => focal_loss(t, z, &targets, &FocalParams::default()).unwrap(),
        other => panic!("unknown loss {other}"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = random(&mut rng, &[3, 2, 8, 8], 1.5);
    // Non-zero biases and embeddings so every path carries signal.
    let mut params = init_params(&config, seed).unwrap();
    for p in params.ordered_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let eval = |p: &ViTParams, track: bool| {
        let mut tape = Tape::new();
        let bound = p.map(|x| {
            if track {
                tape.param(x.clone())
            } else {
                tape.constant(x.clone())
            }
        });
        let z = forward(&mut tape, &bound, &config, &batch).unwrap();
        let l = apply(&mut tape, z);
        (tape, bound, l)
    };
    let (tape, bound, l) = eval(&params, true);
    let grads = tape.backward(l).unwrap();
    let analytic: Vec<f64> = bound
        .ordered()
        .iter()
        .flat_map(|v| grads.get(**v).unwrap().data().iter().map(|&g| g as f64))
        .collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    for ti in 0..params.ordered().len() {
        for j in 0..params.ordered()[ti].numel() {
            let at = |delta: f32| {
                let mut p = params.clone();
                p.ordered_mut()[ti].data_mut()[j] += delta;
                let (t, _, l) = eval(&p, false);
                t.value(l).item().unwrap() as f64
            };
            numeric.push((at(E2E_STEP) - at(-E2E_STEP)) / (2.0 * E2E_STEP as f64));
        }
    }
    relative_error(&analytic, &numeric)
}
