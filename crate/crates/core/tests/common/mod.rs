#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsrcdf::loss::{afc_loss, confidence_penalty, domain_kl, focal_loss, one_hot, LossConfig};
use tsrcdf::mlp::{backward, forward, init_params, MlpParams, Mode};

pub const FD_STEP: f64 = 1e-5;

pub const LOSS_NAMES: [&str; 4] = ["focal", "conf", "domain", "afc"];

/// One randomly drawn loss instance: network, batch and loss settings.
pub struct Instance {
    pub params: MlpParams,
    pub x: Array2<f64>,
    pub targets: Array2<f64>,
    pub cfg: LossConfig,
    pub gamma: f64,
}

pub fn random_distribution(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let classes = 3;
    let batch = rng.random_range(1..=8);
    let d_in = rng.random_range(1..=16);
    let hidden = [rng.random_range(2..=8), rng.random_range(2..=8)];
    let mut params = init_params(d_in, &hidden, classes, rng.random()).unwrap();
    // Nonzero biases keep pre-activations off the ReLU kink at 0.
    for layer in &mut params.layers {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let x = Array2::from_shape_simple_fn((batch, d_in), || rng.random_range(-1.0..1.0));
    let y: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let cfg = LossConfig {
        class_weights: (0..classes).map(|_| rng.random_range(0.5..2.0)).collect(),
        gamma_base: 2.0,
        eta: 1.0,
        alpha: rng.random_range(0.5..1.5),
        beta: rng.random_range(0.0..0.5),
        lambda: rng.random_range(0.0..0.5),
        target_distribution: random_distribution(rng, classes),
    };
    Instance {
        params,
        x,
        targets: one_hot(&y, classes),
        gamma: rng.random_range(0.0..3.0),
        cfg,
    }
}

/// Loss value and gradient with respect to the logits.
pub fn loss(which: &str, probs: ArrayView2<f64>, inst: &Instance) -> (f64, Array2<f64>) {
    match which {
        "focal" => {
            let o = focal_loss(probs, inst.targets.view(), &inst.cfg.class_weights, inst.gamma).unwrap();
            (o.value, o.grad)
        }
        "conf" => {
            let o = confidence_penalty(probs).unwrap();
            (o.value, o.grad)
        }
        "domain" => {
            let o = domain_kl(probs, &inst.cfg.target_distribution).unwrap();
            (o.value, o.grad)
        }
        "afc" => {
            let o = afc_loss(probs, inst.targets.view(), &inst.cfg, inst.gamma).unwrap();
            (o.value, o.grad)
        }
        other => panic!("unknown loss {other}"),
    }
}

fn value_at(which: &str, params: &MlpParams, inst: &Instance) -> f64 {
    let (probs, _) = forward(params, inst.x.view(), Mode::Eval).unwrap();
    loss(which, probs.view(), inst).0
}

fn flat_mut(params: &mut MlpParams) -> Vec<&mut f64> {
    params
        .layers
        .iter_mut()
        .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
        .collect()
}

/// `‖a − n‖ / (‖a‖ + ‖n‖)` between the backpropagated gradient and central
/// differences over every network parameter.
pub fn relative_error(which: &str, inst: &Instance) -> f64 {
    let (probs, cache) = forward(&inst.params, inst.x.view(), Mode::Eval).unwrap();
    let (_, grad_logits) = loss(which, probs.view(), inst);
    let grads = backward(&cache, &inst.params, grad_logits.view()).unwrap();
    let analytic: Vec<f64> = grads
        .layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
        .collect();

    let mut probe = inst.params.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..analytic.len() {
        let orig = *flat_mut(&mut probe)[i];
        *flat_mut(&mut probe)[i] = orig + FD_STEP;
        let up = value_at(which, &probe, inst);
        *flat_mut(&mut probe)[i] = orig - FD_STEP;
        let down = value_at(which, &probe, inst);
        *flat_mut(&mut probe)[i] = orig;
        numeric.push((up - down) / (2.0 * FD_STEP));
    }
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(&numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Worst relative error per loss over `n` random instances.
pub fn gradient_suite(n: usize, seed: u64) -> [(&'static str, f64); 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = LOSS_NAMES.map(|name| (name, 0.0f64));
    for _ in 0..n {
        let inst = random_instance(&mut rng);
        for (name, w) in worst.iter_mut() {
            *w = w.max(relative_error(name, &inst));
        }
    }
    worst
}
