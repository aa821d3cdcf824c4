use glioma_core::nn::{LayerRole, Network, NetworkSpec, Tensor};
use glioma_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_spec() -> NetworkSpec {
    NetworkSpec {
        height: 8,
        width: 8,
        in_channels: 4,
        encoder_maps: vec![3, 4, 5],
        decoder_maps: vec![4, 3],
        dense_block_depth: 2,
    }
}

fn random_input(n: usize, spec: &NetworkSpec, scale: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = n * spec.in_channels * spec.height * spec.width;
    let data = (0..len).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::from_vec(n, spec.in_channels, spec.height, spec.width, data)
}

/// Scalar probe loss `sum(r * p)` with fixed random weights `r`.
fn probe_loss(net: &Network<f64>, x: &Tensor<f64>, r: &[f64]) -> f64 {
    let p = net.forward(x).unwrap();
    p.data.iter().zip(r).map(|(a, b)| a * b).sum()
}

fn params_mut(net: &mut Network<f64>) -> Vec<*mut f64> {
    let mut out = Vec::new();
    net.for_each_conv_mut(|c| {
        out.extend(c.weight.iter_mut().map(|v| v as *mut f64));
        out.extend(c.bias.iter_mut().map(|v| v as *mut f64));
    });
    out
}

#[test]
fn parameter_gradients_match_central_differences() {
    let spec = toy_spec();
    let mut net = Network::<f64>::new(&spec, 11).unwrap();
    // nonzero biases so no ReLU sits exactly at a kink
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    net.for_each_conv_mut(|c| c.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1)));
    let x = random_input(2, &spec, 1.0, 3);
    let r: Vec<f64> = (0..2 * 64).map(|_| rng.gen_range(-1.0..1.0)).collect();

    net.zero_grad();
    let cache = net.forward_train(&x).unwrap();
    net.backward(&cache, &r);
    let mut analytic = Vec::new();
    net.for_each_conv(|c| {
        analytic.extend_from_slice(&c.grad_weight);
        analytic.extend_from_slice(&c.grad_bias);
    });

    let ptrs = params_mut(&mut net);
    assert_eq!(ptrs.len(), analytic.len());
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (i, &p) in ptrs.iter().enumerate() {
        // SAFETY: pointers reference live parameters of `net`, which is not
        // otherwise borrowed while they are written.
        let orig = unsafe { *p };
        unsafe { *p = orig + h };
        let up = probe_loss(&net, &x, &r);
        unsafe { *p = orig - h };
        let down = probe_loss(&net, &x, &r);
        unsafe { *p = orig };
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        if scale < 1e-7 {
            continue;
        }
        worst = worst.max((a - numeric).abs() / scale);
    }
    assert!(worst < 1e-3, "worst relative gradient error {worst}");
}

#[test]
fn reference_architecture_channels() {
    let spec = NetworkSpec::default();
    let net = Network::<f32>::new(&spec, 0).unwrap();
    assert_eq!(net.channel_progression(), [64, 128, 256, 128, 64]);
    let layers = net.layers();
    assert_eq!(layers.iter().filter(|l| l.role == LayerRole::Transition).count(), 3);
    assert_eq!(layers.iter().filter(|l| l.role == LayerRole::UpConv).count(), 2);
    let head = layers.last().unwrap();
    assert_eq!((head.in_channels, head.out_channels, head.kernel), (64, 1, 1));
}

#[test]
fn dense_connectivity_metadata() {
    let spec = NetworkSpec::default();
    let net = Network::<f32>::new(&spec, 0).unwrap();
    let layers = net.layers();
    for level in 0..3 {
        let dense: Vec<_> = layers
            .iter()
            .filter(|l| l.role == LayerRole::Dense && l.module == level)
            .collect();
        assert_eq!(dense.len(), spec.dense_block_depth);
        let module_in = spec.dense_input(level);
        let mut expected = module_in;
        for l in &dense {
            assert_eq!(l.in_channels, expected, "{}", l.name);
            assert_eq!(l.kernel, 3);
            expected += l.out_channels;
        }
        let t = layers
            .iter()
            .find(|l| l.role == LayerRole::Transition && l.module == level)
            .unwrap();
        assert_eq!(t.in_channels, expected);
        assert_eq!(t.out_channels, spec.encoder_maps[level]);
    }
}

#[test]
fn output_shape_and_range() {
    let spec = toy_spec();
    let net = Network::<f32>::new(&spec, 1).unwrap();
    let x = random_input(3, &spec, 1.0, 0);
    let x32 = Tensor::from_vec(3, 4, 8, 8, x.data.iter().map(|&v| v as f32).collect());
    let p = net.forward(&x32).unwrap();
    assert_eq!((p.n, p.c, p.h, p.w), (3, 1, 8, 8));
    assert!(p.data.iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn zero_network_outputs_half() {
    let spec = toy_spec();
    let mut net = Network::<f64>::new(&spec, 1).unwrap();
    net.for_each_conv_mut(|c| {
        c.weight.iter_mut().for_each(|w| *w = 0.0);
        c.bias.iter_mut().for_each(|b| *b = 0.0);
    });
    let x = Tensor::zeros(2, 4, 8, 8);
    assert!(net.forward(&x).unwrap().data.iter().all(|&v| v == 0.5));
}

#[test]
fn batch_permutation_equivariance() {
    let spec = toy_spec();
    let net = Network::<f64>::new(&spec, 4).unwrap();
    let x = random_input(3, &spec, 1.0, 8);
    let p = net.forward(&x).unwrap();
    let order = [2, 0, 1];
    let mut permuted = Vec::new();
    for &s in &order {
        permuted.extend_from_slice(x.sample(s));
    }
    let xp = Tensor::from_vec(3, 4, 8, 8, permuted);
    let pp = net.forward(&xp).unwrap();
    for (i, &s) in order.iter().enumerate() {
        assert_eq!(pp.sample(i), p.sample(s));
    }
}

#[test]
fn large_inputs_stay_finite() {
    let spec = toy_spec();
    for seed in 0..5 {
        let net = Network::<f32>::new(&spec, seed).unwrap();
        let x = random_input(2, &spec, 1e3, seed + 100);
        let x32 = Tensor::from_vec(2, 4, 8, 8, x.data.iter().map(|&v| v as f32).collect());
        let p = net.forward(&x32).unwrap();
        assert!(p.data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }
}

#[test]
fn same_seed_same_weights() {
    let spec = NetworkSpec::with_input(16, 16);
    let a = Network::<f32>::new(&spec, 42).unwrap().get_weights();
    let b = Network::<f32>::new(&spec, 42).unwrap().get_weights();
    let c = Network::<f32>::new(&spec, 43).unwrap().get_weights();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn weights_roundtrip() {
    let spec = toy_spec();
    let src = Network::<f32>::new(&spec, 1).unwrap();
    let mut dst = Network::<f32>::new(&spec, 2).unwrap();
    let w = src.get_weights();
    dst.set_weights(&w).unwrap();
    assert_eq!(dst.get_weights(), w);
    let x = random_input(1, &spec, 1.0, 0);
    let x32 = Tensor::from_vec(1, 4, 8, 8, x.data.iter().map(|&v| v as f32).collect());
    assert_eq!(src.forward(&x32).unwrap(), dst.forward(&x32).unwrap());
}

#[test]
fn truncated_weight_set_is_incompatible() {
    let spec = toy_spec();
    let mut net = Network::<f32>::new(&spec, 1).unwrap();
    let mut w = net.get_weights();
    // drop the deepest encoder level, as a two-level network would have
    w.tensors.retain(|t| !t.name.starts_with("enc2."));
    assert!(matches!(net.set_weights(&w), Err(Error::IncompatibleWeights(_))));

    let mut other = toy_spec();
    other.dense_block_depth = 3;
    let foreign = Network::<f32>::new(&other, 1).unwrap().get_weights();
    assert!(matches!(net.set_weights(&foreign), Err(Error::IncompatibleWeights(_))));
}

#[test]
fn shape_errors() {
    let spec = toy_spec();
    let net = Network::<f64>::new(&spec, 1).unwrap();
    assert!(matches!(net.forward(&Tensor::zeros(1, 3, 8, 8)), Err(Error::Shape(_))));
    assert!(matches!(net.forward(&Tensor::zeros(1, 4, 12, 8)), Err(Error::Shape(_))));
    let bad = NetworkSpec::with_input(242, 240);
    assert!(matches!(Network::<f32>::new(&bad, 0), Err(Error::Shape(_))));
}
