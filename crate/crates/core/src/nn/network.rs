use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::conv::Conv2d;
use super::tensor::{
    maxpool2, maxpool2_backward, relu_backward_inplace, relu_inplace, sigmoid, upsample2,
    upsample2_backward, Tensor,
};
use super::{NamedTensor, NetworkSpec, Scalar, WeightSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct DenseModule<T> {
    layers: Vec<Conv2d<T>>,
    transition: Conv2d<T>,
}

#[derive(Debug, Clone)]
struct ConvModule<T> {
    up: Conv2d<T>,
    conv1: Conv2d<T>,
    conv2: Conv2d<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerRole {
    Dense,
    Transition,
    UpConv,
    DecoderConv,
    Head,
}

/// Static description of one convolution in the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub role: LayerRole,
    /// Encoder level for dense/transition layers, decoder index otherwise.
    pub module: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

/// Dense-encoder / convolution-decoder FCN with hand-written backpropagation.
#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: NetworkSpec,
    encoder: Vec<DenseModule<T>>,
    decoder: Vec<ConvModule<T>>,
    head: Conv2d<T>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    dense: Vec<Tensor<T>>,
    encoded: Vec<Tensor<T>>,
    pool_argmax: Vec<Vec<u8>>,
    upsampled: Vec<Tensor<T>>,
    joined: Vec<Tensor<T>>,
    mid: Vec<Tensor<T>>,
    decoded: Vec<Tensor<T>>,
    prob: Tensor<T>,
}

impl<T> ForwardCache<T> {
    pub fn probabilities(&self) -> &Tensor<T> {
        &self.prob
    }

    pub fn into_probabilities(self) -> Tensor<T> {
        self.prob
    }
}

fn he_init<T: Scalar>(conv: &mut Conv2d<T>, rng: &mut ChaCha8Rng, gain: f64) {
    let fan_in = (conv.cin * conv.kernel * conv.kernel) as f64;
    let std = libm::sqrt(gain / fan_in);
    for w in &mut conv.weight {
        let z: f64 = StandardNormal.sample(rng);
        *w = T::from_f64(z * std);
    }
}

impl<T: Scalar> Network<T> {
    /// Builds the network with deterministic He-normal initialization.
    pub fn new(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let levels = spec.levels();
        let depth = spec.dense_block_depth;
        let mut encoder = Vec::with_capacity(levels);
        for l in 0..levels {
            let cin = spec.dense_input(l);
            let g = spec.growth(l);
            let layers = (0..depth).map(|k| Conv2d::new(cin + k * g, g, 3)).collect();
            let transition = Conv2d::new(cin + depth * g, spec.encoder_maps[l], 1);
            encoder.push(DenseModule { layers, transition });
        }
        let mut decoder = Vec::with_capacity(levels - 1);
        let mut prev = spec.encoder_maps[levels - 1];
        for j in 0..levels - 1 {
            let out = spec.decoder_maps[j];
            let skip = spec.encoder_maps[levels - 2 - j];
            decoder.push(ConvModule {
                up: Conv2d::new(prev, out, 3),
                conv1: Conv2d::new(out + skip, out, 3),
                conv2: Conv2d::new(out, out, 3),
            });
            prev = out;
        }
        let head = Conv2d::new(prev, 1, 1);
        let mut net = Network {
            spec: spec.clone(),
            encoder,
            decoder,
            head,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut remaining = 0;
        net.for_each_conv(|_| remaining += 1);
        net.for_each_conv_mut(|c| {
            remaining -= 1;
            // rectifier gain everywhere except the logistic head
            let gain = if remaining == 0 { 1.0 } else { 2.0 };
            he_init(c, &mut rng, gain);
        });
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn for_each_conv(&self, mut f: impl FnMut(&Conv2d<T>)) {
        for m in &self.encoder {
            m.layers.iter().for_each(&mut f);
            f(&m.transition);
        }
        for m in &self.decoder {
            f(&m.up);
            f(&m.conv1);
            f(&m.conv2);
        }
        f(&self.head);
    }

    pub fn for_each_conv_mut(&mut self, mut f: impl FnMut(&mut Conv2d<T>)) {
        for m in &mut self.encoder {
            m.layers.iter_mut().for_each(&mut f);
            f(&mut m.transition);
        }
        for m in &mut self.decoder {
            f(&mut m.up);
            f(&mut m.conv1);
            f(&mut m.conv2);
        }
        f(&mut self.head);
    }

    pub fn zero_grad(&mut self) {
        self.for_each_conv_mut(|c| c.zero_grad());
    }

    /// Layer metadata in parameter order.
    pub fn layers(&self) -> Vec<LayerInfo> {
        let mut out = Vec::new();
        let info = |name: String, role, module, c: &Conv2d<T>| LayerInfo {
            name,
            role,
            module,
            in_channels: c.cin,
            out_channels: c.cout,
            kernel: c.kernel,
        };
        for (l, m) in self.encoder.iter().enumerate() {
            for (k, c) in m.layers.iter().enumerate() {
                out.push(info(format!("enc{l}.dense{k}"), LayerRole::Dense, l, c));
            }
            out.push(info(format!("enc{l}.transition"), LayerRole::Transition, l, &m.transition));
        }
        for (j, m) in self.decoder.iter().enumerate() {
            out.push(info(format!("dec{j}.up"), LayerRole::UpConv, j, &m.up));
            out.push(info(format!("dec{j}.conv1"), LayerRole::DecoderConv, j, &m.conv1));
            out.push(info(format!("dec{j}.conv2"), LayerRole::DecoderConv, j, &m.conv2));
        }
        out.push(info("head".into(), LayerRole::Head, 0, &self.head));
        out
    }

    /// Output channels of each dense module followed by each convolution module.
    pub fn channel_progression(&self) -> Vec<usize> {
        self.encoder
            .iter()
            .map(|m| m.transition.cout)
            .chain(self.decoder.iter().map(|m| m.conv2.cout))
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.for_each_conv(|c| n += c.weight.len() + c.bias.len());
        n
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let s = &self.spec;
        let div = s.downsample_factor();
        if input.c != s.in_channels || !input.h.is_multiple_of(div) || !input.w.is_multiple_of(div) || input.h == 0 || input.w == 0 {
            return Err(Error::shape(format!(
                "input {}x{}x{}x{} does not fit {} channels with sides divisible by {div}",
                input.n, input.c, input.h, input.w, s.in_channels
            )));
        }
        if input.h != s.height || input.w != s.width {
            return Err(Error::shape(format!(
                "input is {}x{}, network expects {}x{}",
                input.h, input.w, s.height, s.width
            )));
        }
        Ok(())
    }

    /// Probabilities for a batch (`N x C x H x W` in, `N x 1 x H x W` out).
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(input)?.into_probabilities())
    }

    pub fn forward_train(&self, input: &Tensor<T>) -> Result<ForwardCache<T>> {
        self.check_input(input)?;
        let n = input.n;
        let levels = self.spec.levels();
        let mut scratch = Vec::new();

        let mut dense = Vec::with_capacity(levels);
        let mut encoded: Vec<Tensor<T>> = Vec::with_capacity(levels);
        let mut pool_argmax = Vec::with_capacity(levels - 1);
        let (mut h, mut w) = (input.h, input.w);
        for (l, module) in self.encoder.iter().enumerate() {
            let cin = self.spec.dense_input(l);
            let g = self.spec.growth(l);
            let total = cin + module.layers.len() * g;
            let mut buf = Tensor::zeros(n, total, h, w);
            if l == 0 {
                for s in 0..n {
                    buf.channels_mut(s, 0, cin).copy_from_slice(input.sample(s));
                }
            } else {
                let prev = &encoded[l - 1];
                let mut argmax = vec![0u8; n * cin * h * w];
                for s in 0..n {
                    maxpool2(
                        prev.sample(s),
                        cin,
                        prev.h,
                        prev.w,
                        buf.channels_mut(s, 0, cin),
                        &mut argmax[s * cin * h * w..(s + 1) * cin * h * w],
                    );
                }
                pool_argmax.push(argmax);
            }
            let hw = h * w;
            for (k, layer) in module.layers.iter().enumerate() {
                let start = cin + k * g;
                for s in 0..n {
                    let sample = buf.sample_mut(s);
                    let (prefix, rest) = sample.split_at_mut(start * hw);
                    let out = &mut rest[..g * hw];
                    layer.forward_sample(prefix, h, w, out, &mut scratch);
                    relu_inplace(out);
                }
            }
            let mut enc = Tensor::zeros(n, module.transition.cout, h, w);
            for s in 0..n {
                module.transition.forward_sample(buf.sample(s), h, w, enc.sample_mut(s), &mut scratch);
                relu_inplace(enc.sample_mut(s));
            }
            dense.push(buf);
            encoded.push(enc);
            if l + 1 < levels {
                h /= 2;
                w /= 2;
            }
        }

        let mut upsampled = Vec::with_capacity(levels - 1);
        let mut joined = Vec::with_capacity(levels - 1);
        let mut mid = Vec::with_capacity(levels - 1);
        let mut decoded: Vec<Tensor<T>> = Vec::with_capacity(levels - 1);
        for (j, module) in self.decoder.iter().enumerate() {
            let x = if j == 0 { &encoded[levels - 1] } else { &decoded[j - 1] };
            let skip = &encoded[levels - 2 - j];
            let (oh, ow) = (x.h * 2, x.w * 2);
            let mut up = Tensor::zeros(n, x.c, oh, ow);
            for s in 0..n {
                upsample2(x.sample(s), x.c, x.h, x.w, up.sample_mut(s));
            }
            let out_c = module.up.cout;
            let mut cat = Tensor::zeros(n, out_c + skip.c, oh, ow);
            let mut m1 = Tensor::zeros(n, out_c, oh, ow);
            let mut m2 = Tensor::zeros(n, out_c, oh, ow);
            for s in 0..n {
                {
                    let dst = cat.channels_mut(s, 0, out_c);
                    module.up.forward_sample(up.sample(s), oh, ow, dst, &mut scratch);
                    relu_inplace(dst);
                }
                cat.channels_mut(s, out_c, out_c + skip.c).copy_from_slice(skip.sample(s));
                module.conv1.forward_sample(cat.sample(s), oh, ow, m1.sample_mut(s), &mut scratch);
                relu_inplace(m1.sample_mut(s));
                module.conv2.forward_sample(m1.sample(s), oh, ow, m2.sample_mut(s), &mut scratch);
                relu_inplace(m2.sample_mut(s));
            }
            upsampled.push(up);
            joined.push(cat);
            mid.push(m1);
            decoded.push(m2);
        }

        let last = decoded.last().expect("at least one decoder level");
        let mut prob = Tensor::zeros(n, 1, last.h, last.w);
        for s in 0..n {
            self.head.forward_sample(last.sample(s), last.h, last.w, prob.sample_mut(s), &mut scratch);
        }
        prob.data.iter_mut().for_each(|z| *z = sigmoid(*z));

        Ok(ForwardCache {
            dense,
            encoded,
            pool_argmax,
            upsampled,
            joined,
            mid,
            decoded,
            prob,
        })
    }

    /// Accumulates parameter gradients given `dprob`, the loss gradient with
    /// respect to the output probabilities (same layout as the output).
    pub fn backward(&mut self, cache: &ForwardCache<T>, dprob: &[T]) {
        let levels = self.spec.levels();
        let n = cache.prob.n;
        assert_eq!(dprob.len(), cache.prob.data.len(), "gradient length");
        let mut scratch = Vec::new();

        // through the logistic head
        let mut dz = cache.prob.clone();
        for (d, (&p, &g)) in dz.data.iter_mut().zip(cache.prob.data.iter().zip(dprob)) {
            *d = g * p * (T::one() - p);
        }
        let last = cache.decoded.last().expect("decoder output");
        let mut dx = Tensor::zeros(n, last.c, last.h, last.w);
        for s in 0..n {
            self.head
                .backward_sample(last.sample(s), last.h, last.w, dz.sample(s), Some(dx.sample_mut(s)), &mut scratch);
        }

        let mut dencoded: Vec<Tensor<T>> = cache
            .encoded
            .iter()
            .map(|e| Tensor::zeros(e.n, e.c, e.h, e.w))
            .collect();

        for j in (0..levels - 1).rev() {
            let module = &mut self.decoder[j];
            let (up, cat, m1, m2) = (&cache.upsampled[j], &cache.joined[j], &cache.mid[j], &cache.decoded[j]);
            let (oh, ow) = (m2.h, m2.w);
            let out_c = module.up.cout;
            let skip_level = levels - 2 - j;
            let mut dm1 = Tensor::zeros(n, out_c, oh, ow);
            let mut dcat = Tensor::zeros(n, cat.c, oh, ow);
            let mut dup = Tensor::zeros(n, up.c, oh, ow);
            for s in 0..n {
                relu_backward_inplace(dx.sample_mut(s), m2.sample(s));
                module
                    .conv2
                    .backward_sample(m1.sample(s), oh, ow, dx.sample(s), Some(dm1.sample_mut(s)), &mut scratch);
                relu_backward_inplace(dm1.sample_mut(s), m1.sample(s));
                module
                    .conv1
                    .backward_sample(cat.sample(s), oh, ow, dm1.sample(s), Some(dcat.sample_mut(s)), &mut scratch);
                {
                    let dskip = dcat.channels(s, out_c, cat.c);
                    let acc = dencoded[skip_level].sample_mut(s);
                    for (a, &b) in acc.iter_mut().zip(dskip) {
                        *a = *a + b;
                    }
                }
                let act = cat.channels(s, 0, out_c);
                let dact = dcat.channels_mut(s, 0, out_c);
                relu_backward_inplace(dact, act);
                module
                    .up
                    .backward_sample(up.sample(s), oh, ow, dcat.channels(s, 0, out_c), Some(dup.sample_mut(s)), &mut scratch);
            }
            let (ih, iw) = (oh / 2, ow / 2);
            let mut dprev = Tensor::zeros(n, up.c, ih, iw);
            for s in 0..n {
                upsample2_backward(dup.sample(s), up.c, ih, iw, dprev.sample_mut(s));
            }
            if j == 0 {
                let acc = &mut dencoded[levels - 1];
                for (a, &b) in acc.data.iter_mut().zip(&dprev.data) {
                    *a = *a + b;
                }
            } else {
                dx = dprev;
            }
        }

        for l in (0..levels).rev() {
            let module = &mut self.encoder[l];
            let buf = &cache.dense[l];
            let enc = &cache.encoded[l];
            let (h, w) = (buf.h, buf.w);
            let hw = h * w;
            let cin = self.spec.dense_input(l);
            let g = self.spec.growth(l);
            let mut dbuf = Tensor::zeros(n, buf.c, h, w);
            let denc = &mut dencoded[l];
            for s in 0..n {
                relu_backward_inplace(denc.sample_mut(s), enc.sample(s));
                module
                    .transition
                    .backward_sample(buf.sample(s), h, w, denc.sample(s), Some(dbuf.sample_mut(s)), &mut scratch);
            }
            for (k, layer) in module.layers.iter_mut().enumerate().rev() {
                let start = cin + k * g;
                for s in 0..n {
                    let act = &buf.sample(s)[start * hw..(start + g) * hw];
                    let dsample = dbuf.sample_mut(s);
                    let (dprefix, drest) = dsample.split_at_mut(start * hw);
                    let dout = &mut drest[..g * hw];
                    relu_backward_inplace(dout, act);
                    let src = &buf.sample(s)[..start * hw];
                    // the network input needs no gradient
                    let dsrc = if l == 0 && k == 0 { None } else { Some(dprefix) };
                    layer.backward_sample(src, h, w, dout, dsrc, &mut scratch);
                }
            }
            if l > 0 {
                let prev = &mut dencoded[l - 1];
                let argmax = &cache.pool_argmax[l - 1];
                for s in 0..n {
                    let dpooled = dbuf.channels(s, 0, cin);
                    maxpool2_backward(
                        dpooled,
                        &argmax[s * cin * hw..(s + 1) * cin * hw],
                        cin,
                        prev.h,
                        prev.w,
                        prev.sample_mut(s),
                    );
                }
            }
        }
    }

    /// Parameters converted to `f32`, in layer order.
    pub fn get_weights(&self) -> WeightSet {
        let mut tensors = Vec::new();
        let names: Vec<String> = self.layers().into_iter().map(|l| l.name).collect();
        let mut i = 0;
        self.for_each_conv(|c| {
            let name = &names[i];
            tensors.push(NamedTensor {
                name: format!("{name}.weight"),
                shape: vec![c.cout, c.cin, c.kernel, c.kernel],
                data: c.weight.iter().map(|v| v.as_f64() as f32).collect(),
            });
            tensors.push(NamedTensor {
                name: format!("{name}.bias"),
                shape: vec![c.cout],
                data: c.bias.iter().map(|v| v.as_f64() as f32).collect(),
            });
            i += 1;
        });
        WeightSet {
            fingerprint: self.spec.fingerprint(),
            tensors,
        }
    }

    /// Replaces all parameters. Names and shapes must match this network.
    pub fn set_weights(&mut self, weights: &WeightSet) -> Result<()> {
        let current = self.get_weights();
        if weights.fingerprint != current.fingerprint {
            return Err(Error::IncompatibleWeights(format!(
                "architecture fingerprint {} does not match {}",
                weights.fingerprint, current.fingerprint
            )));
        }
        if !current.same_structure(weights) {
            let detail = current
                .tensors
                .iter()
                .zip(&weights.tensors)
                .find(|(a, b)| a.name != b.name || a.shape != b.shape)
                .map(|(a, b)| format!("expected {} {:?}, found {} {:?}", a.name, a.shape, b.name, b.shape))
                .unwrap_or_else(|| {
                    format!("expected {} tensors, found {}", current.tensors.len(), weights.tensors.len())
                });
            return Err(Error::IncompatibleWeights(detail));
        }
        for t in &weights.tensors {
            if t.data.len() != t.shape.iter().product::<usize>() {
                return Err(Error::IncompatibleWeights(format!("{} has inconsistent data length", t.name)));
            }
        }
        let mut it = weights.tensors.iter();
        self.for_each_conv_mut(|c| {
            let w = it.next().expect("structure checked");
            let b = it.next().expect("structure checked");
            for (dst, &src) in c.weight.iter_mut().zip(&w.data) {
                *dst = T::from_f64(src as f64);
            }
            for (dst, &src) in c.bias.iter_mut().zip(&b.data) {
                *dst = T::from_f64(src as f64);
            }
        });
        Ok(())
    }
}
