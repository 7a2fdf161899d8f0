//! Central finite-difference checks of every analytic backward pass, in f64
//! with h = 1e-5. Each case panics on the first entry out of tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resflu_core::model::{init_model, losses_with_teacher, softened_teacher, Mode, ModelConfig};
use resflu_core::nn::{
    cross_entropy_with_logits, global_avg_pool, global_avg_pool_backward, kl_divergence, kl_grad_wrt_student_logits,
    relu, relu_backward, tempered_softmax, BatchNorm, Conv1d, ConvSpec, Linear, Padding, Tensor,
};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
/// Magnitude below which errors are judged in absolute terms.
const FLOOR: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Compares `analytic` with central differences of `f` around `x`.
fn check(name: &str, x: &mut [f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) {
    assert_eq!(x.len(), analytic.len(), "{name}: gradient length");
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + H;
        let up = f(x);
        x[i] = orig - H;
        let down = f(x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        let e = rel_err(analytic[i], numeric);
        assert!(e < TOL, "{name}[{i}]: analytic {} numeric {numeric} rel err {e}", analytic[i]);
        worst = worst.max(e);
    }
    eprintln!("{name}: {} entries, worst relative error {worst:.2e}", x.len());
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// `Σ w·y`: a scalar objective whose gradient w.r.t. `y` is `w`.
fn weighted(y: &Tensor<f64>, w: &[f64]) -> f64 {
    y.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

fn conv_case(c_in: usize, f: usize, k: usize, stride: usize, padding: Padding, t: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = Conv1d::<f64>::new(c_in, ConvSpec::new(f, k, stride).unwrap(), padding).unwrap();
    conv.init_kaiming(&mut rng);
    conv.bias = random_vec(&mut rng, f, 0.5);
    let b = 2;
    let x = Tensor::new(vec![b, t, c_in], random_vec(&mut rng, b * t * c_in, 1.0)).unwrap();
    let y = conv.forward(&x).unwrap();
    let w = random_vec(&mut rng, y.len(), 1.0);
    let grads = conv.backward(&x, &Tensor::new(y.shape().to_vec(), w.clone()).unwrap(), true).unwrap();
    let tag = format!("conv c{c_in} f{f} k{k} s{stride}");

    let mut weight = conv.weight.clone();
    check(&format!("{tag} weight"), &mut weight, &grads.weight, |p| {
        let mut c = conv.clone();
        c.weight = p.to_vec();
        weighted(&c.forward(&x).unwrap(), &w)
    });
    let mut bias = conv.bias.clone();
    check(&format!("{tag} bias"), &mut bias, &grads.bias, |p| {
        let mut c = conv.clone();
        c.bias = p.to_vec();
        weighted(&c.forward(&x).unwrap(), &w)
    });
    let mut input = x.data().to_vec();
    check(&format!("{tag} input"), &mut input, grads.input.as_ref().unwrap().data(), |p| {
        let xi = Tensor::new(x.shape().to_vec(), p.to_vec()).unwrap();
        weighted(&conv.forward(&xi).unwrap(), &w)
    });
}

pub fn conv_same_padding() {
    conv_case(3, 4, 5, 1, Padding::same(5), 9, 1);
}

pub fn conv_strided_even_kernel() {
    conv_case(2, 3, 4, 2, Padding::same(4), 10, 2);
}

pub fn conv_valid_and_pointwise() {
    conv_case(3, 2, 3, 1, Padding::VALID, 7, 3);
    conv_case(4, 5, 1, 2, Padding::VALID, 8, 4);
}

pub fn batch_norm_train_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (b, t, c) = (3, 4, 3);
    let mut bn = BatchNorm::<f64>::new(c);
    bn.gamma = random_vec(&mut rng, c, 2.0);
    bn.beta = random_vec(&mut rng, c, 1.0);
    let x = Tensor::new(vec![b, t, c], random_vec(&mut rng, b * t * c, 2.0)).unwrap();
    let (y, cache) = bn.forward_train(&x).unwrap();
    let w = random_vec(&mut rng, y.len(), 1.0);
    let grads = bn.backward(&cache, &Tensor::new(y.shape().to_vec(), w.clone()).unwrap()).unwrap();

    let eval = |bn: &BatchNorm<f64>, x: &Tensor<f64>| weighted(&bn.forward_train(x).unwrap().0, &w);
    let mut gamma = bn.gamma.clone();
    check("bn gamma", &mut gamma, &grads.gamma, |p| {
        let mut n = bn.clone();
        n.gamma = p.to_vec();
        eval(&n, &x)
    });
    let mut beta = bn.beta.clone();
    check("bn beta", &mut beta, &grads.beta, |p| {
        let mut n = bn.clone();
        n.beta = p.to_vec();
        eval(&n, &x)
    });
    let mut input = x.data().to_vec();
    check("bn input", &mut input, grads.input.data(), |p| {
        eval(&bn, &Tensor::new(x.shape().to_vec(), p.to_vec()).unwrap())
    });
}

pub fn linear_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut fc = Linear::<f64>::new(5, 3);
    fc.init_kaiming(&mut rng);
    fc.bias = random_vec(&mut rng, 3, 0.5);
    let x = Tensor::new(vec![4, 5], random_vec(&mut rng, 20, 1.0)).unwrap();
    let y = fc.forward(&x).unwrap();
    let w = random_vec(&mut rng, y.len(), 1.0);
    let grads = fc.backward(&x, &Tensor::new(y.shape().to_vec(), w.clone()).unwrap()).unwrap();
    let mut weight = fc.weight.clone();
    check("linear weight", &mut weight, &grads.weight, |p| {
        let mut l = fc.clone();
        l.weight = p.to_vec();
        weighted(&l.forward(&x).unwrap(), &w)
    });
    let mut bias = fc.bias.clone();
    check("linear bias", &mut bias, &grads.bias, |p| {
        let mut l = fc.clone();
        l.bias = p.to_vec();
        weighted(&l.forward(&x).unwrap(), &w)
    });
    let mut input = x.data().to_vec();
    check("linear input", &mut input, grads.input.data(), |p| {
        weighted(&fc.forward(&Tensor::new(x.shape().to_vec(), p.to_vec()).unwrap()).unwrap(), &w)
    });
}

pub fn relu_and_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // keep inputs clear of the kink so the one-sided slopes agree
    let data: Vec<f64> = (0..2 * 5 * 3)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    let x = Tensor::new(vec![2, 5, 3], data).unwrap();
    let w = random_vec(&mut rng, x.len(), 1.0);
    let g = relu_backward(&x, &Tensor::new(x.shape().to_vec(), w.clone()).unwrap()).unwrap();
    let mut input = x.data().to_vec();
    check("relu input", &mut input, g.data(), |p| {
        weighted(&relu(&Tensor::new(x.shape().to_vec(), p.to_vec()).unwrap()), &w)
    });

    let wp = random_vec(&mut rng, 2 * 3, 1.0);
    let g = global_avg_pool_backward(&Tensor::new(vec![2, 3], wp.clone()).unwrap(), 5).unwrap();
    let mut input = x.data().to_vec();
    check("pool input", &mut input, g.data(), |p| {
        weighted(&global_avg_pool(&Tensor::new(x.shape().to_vec(), p.to_vec()).unwrap()).unwrap(), &wp)
    });
}

pub fn cross_entropy_logit_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for label in 0..4 {
        let mut z = random_vec(&mut rng, 4, 3.0);
        let (_, g) = cross_entropy_with_logits(&z, label).unwrap();
        check("cross entropy", &mut z, &g, |p| cross_entropy_with_logits(p, label).unwrap().0);
    }
}

pub fn kl_student_logit_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for temperature in [1.0, 3.0, 7.5] {
        let teacher = tempered_softmax(&random_vec(&mut rng, 5, 4.0), temperature).unwrap().probs;
        let mut z = random_vec(&mut rng, 5, 4.0);
        let student = tempered_softmax(&z, temperature).unwrap().probs;
        let g = kl_grad_wrt_student_logits(&teacher, &student, temperature);
        check(&format!("kl T={temperature}"), &mut z, &g, |p| {
            kl_divergence(&teacher, &tempered_softmax(p, temperature).unwrap().probs).unwrap().value
        });
    }
}

/// conv → batch norm → relu → pool → linear → cross-entropy, chained by hand.
pub fn composite_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (b, t, c, f, n) = (3, 8, 2, 4, 3);
    let mut conv = Conv1d::<f64>::new(c, ConvSpec::new(f, 3, 1).unwrap(), Padding::same(3)).unwrap();
    conv.init_kaiming(&mut rng);
    let mut bn = BatchNorm::<f64>::new(f);
    bn.gamma = random_vec(&mut rng, f, 1.5);
    bn.beta = random_vec(&mut rng, f, 0.5);
    let mut fc = Linear::<f64>::new(f, n);
    fc.init_kaiming(&mut rng);
    let x = Tensor::new(vec![b, t, c], random_vec(&mut rng, b * t * c, 1.0)).unwrap();
    let labels = [0usize, 2, 1];

    let loss = |conv: &Conv1d<f64>, bn: &BatchNorm<f64>, fc: &Linear<f64>, x: &Tensor<f64>| -> f64 {
        let (y, _) = bn.forward_train(&conv.forward(x).unwrap()).unwrap();
        let logits = fc.forward(&global_avg_pool(&relu(&y)).unwrap()).unwrap();
        labels.iter().enumerate().map(|(i, &l)| cross_entropy_with_logits(logits.row(i), l).unwrap().0).sum::<f64>()
            / b as f64
    };

    let h1 = conv.forward(&x).unwrap();
    let (h2, bn_cache) = bn.forward_train(&h1).unwrap();
    let h3 = relu(&h2);
    let pooled = global_avg_pool(&h3).unwrap();
    let logits = fc.forward(&pooled).unwrap();
    let mut dlogits = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        dlogits.extend(cross_entropy_with_logits(logits.row(i), l).unwrap().1.into_iter().map(|v| v / b as f64));
    }
    let fc_g = fc.backward(&pooled, &Tensor::new(vec![b, n], dlogits).unwrap()).unwrap();
    let d3 = global_avg_pool_backward(&fc_g.input, t).unwrap();
    let d2 = relu_backward(&h2, &d3).unwrap();
    let bn_g = bn.backward(&bn_cache, &d2).unwrap();
    let conv_g = conv.backward(&x, &bn_g.input, true).unwrap();

    let mut p = conv.weight.clone();
    check("chain conv weight", &mut p, &conv_g.weight, |v| {
        let mut cv = conv.clone();
        cv.weight = v.to_vec();
        loss(&cv, &bn, &fc, &x)
    });
    let mut p = bn.gamma.clone();
    check("chain bn gamma", &mut p, &bn_g.gamma, |v| {
        let mut nb = bn.clone();
        nb.gamma = v.to_vec();
        loss(&conv, &nb, &fc, &x)
    });
    let mut p = fc.weight.clone();
    check("chain fc weight", &mut p, &fc_g.weight, |v| {
        let mut l = fc.clone();
        l.weight = v.to_vec();
        loss(&conv, &bn, &l, &x)
    });
    let mut p = x.data().to_vec();
    check("chain input", &mut p, conv_g.input.as_ref().unwrap().data(), |v| {
        loss(&conv, &bn, &fc, &Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap())
    });
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        n_blocks: 2,
        subblocks_per_block: 2,
        block_widths: vec![3, 4],
        kernel: 3,
        block_entry_stride: vec![1, 2],
        n_classes: 2,
        input_dim: 4,
        seq_len: 12,
        distill_temperature: 3.0,
        reduced: true,
    }
}

/// Every parameter of a small network under the full distillation objective.
/// The teacher distribution is frozen at the unperturbed fusion output, as
/// in training, where no gradient flows into it from the distillation terms.
pub fn whole_network_objective() {
    let config = tiny_config();
    let mut model = init_model::<f64>(&config, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for norm in model.norms_mut() {
        norm.gamma = (0..norm.gamma.len()).map(|_| rng.random_range(0.5..1.5)).collect();
        norm.beta = random_vec(&mut rng, norm.beta.len(), 0.3);
    }
    let batch = 3;
    let x = Tensor::new(vec![batch, 12, 4], random_vec(&mut rng, batch * 12 * 4, 1.0)).unwrap();
    let labels = [1usize, 0, 1];

    let pass = model.forward(&x, Mode::Train).unwrap();
    let teacher = softened_teacher(&pass.outputs, config.distill_temperature).unwrap();
    let (_, logit_grads) = losses_with_teacher(&pass.outputs, &labels, config.distill_temperature, &teacher).unwrap();
    let grads = model.backward(&pass, &logit_grads).unwrap().into_flat();
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), grads.len());

    for (k, name) in names.iter().enumerate() {
        let mut values = model.params_mut()[k].to_vec();
        let probe = model.clone();
        check(&format!("model {name}"), &mut values, &grads[k], |v| {
            let mut m = probe.clone();
            m.params_mut()[k].copy_from_slice(v);
            let out = m.forward(&x, Mode::Train).unwrap().outputs;
            losses_with_teacher(&out, &labels, config.distill_temperature, &teacher).unwrap().0.total
        });
    }
}

pub fn all() {
    conv_same_padding();
    conv_strided_even_kernel();
    conv_valid_and_pointwise();
    batch_norm_train_mode();
    linear_layer();
    relu_and_pooling();
    cross_entropy_logit_gradient();
    kl_student_logit_gradient();
    composite_chain();
    whole_network_objective();
}
