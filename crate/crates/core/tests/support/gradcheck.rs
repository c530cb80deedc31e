//! One randomized finite-difference instance per call; each returns the worst
//! normwise relative error over all gradients of the op.

use super::fd::check;
use super::random_tensor;
use scratchdet::backbone::{build_backbone, BackboneConfig, FeaturePyramid, Network};
use scratchdet::detector::{multibox_loss, AnchorTarget, Head, HeadConfig};
use scratchdet::nn::{
    batchnorm_backward, batchnorm_forward, relu_backward, relu_forward, smooth_l1,
    softmax_cross_entropy, BatchNormState, Mode,
};
use scratchdet::tensor::{
    conv2d_backward, conv2d_forward, conv_output_size, maxpool2d_backward, maxpool2d_forward,
    SeededRng, Tensor,
};

fn with(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::from_vec(t.shape(), data.to_vec()).unwrap()
}

pub fn conv(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let n = 1 + rng.below(2);
    let c = 1 + rng.below(3);
    let o = 1 + rng.below(3);
    let k = [1, 2, 3][rng.below(3)];
    let stride = 1 + rng.below(2);
    let pad = rng.below(2);
    let h = k + rng.below(5);
    let x = random_tensor(&[n, c, h, h], &mut rng);
    let w = random_tensor(&[o, c, k, k], &mut rng);
    let b: Vec<f64> = (0..o).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let oh = conv_output_size(h, k, stride, pad).unwrap();
    let r = random_tensor(&[n, o, oh, oh], &mut rng);
    let g = conv2d_backward(&r, &x, &w, stride, pad).unwrap();
    let fx = |v: &[f64]| {
        conv2d_forward(&with(&x, v), &w, Some(&b), stride, pad)
            .unwrap()
            .dot(&r)
    };
    let fw = |v: &[f64]| {
        conv2d_forward(&x, &with(&w, v), Some(&b), stride, pad)
            .unwrap()
            .dot(&r)
    };
    let fb = |v: &[f64]| {
        conv2d_forward(&x, &w, Some(v), stride, pad)
            .unwrap()
            .dot(&r)
    };
    check(fx, x.data(), g.input.data(), None)
        .max(check(fw, w.data(), g.weight.data(), None))
        .max(check(fb, &b, &g.bias, None))
}

pub fn maxpool(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let (k, s) = [(2, 2), (3, 2), (2, 1)][rng.below(3)];
    let x = loop {
        let x = random_tensor(&[1, 1 + rng.below(2), 6, 6], &mut rng);
        if window_gap(&x, k, s) > 1e-3 {
            break x;
        }
    };
    let out = maxpool2d_forward(&x, k, s).unwrap();
    let r = random_tensor(out.output.shape(), &mut rng);
    let gi = maxpool2d_backward(&r, &out.argmax, x.shape()).unwrap();
    let f = |v: &[f64]| {
        maxpool2d_forward(&with(&x, v), k, s)
            .unwrap()
            .output
            .dot(&r)
    };
    check(f, x.data(), gi.data(), None)
}

// Smallest gap between the two largest values of any pooling window.
fn window_gap(x: &Tensor, k: usize, s: usize) -> f64 {
    let (n, c, h, w) = x.dims4("gap").unwrap();
    let mut gap = f64::INFINITY;
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..(h - k) / s + 1 {
                for ox in 0..(w - k) / s + 1 {
                    let mut v: Vec<f64> = (0..k * k)
                        .map(|i| x.at4(b, ch, oy * s + i / k, ox * s + i % k))
                        .collect();
                    v.sort_by(|a, b| b.total_cmp(a));
                    gap = gap.min(v[0] - v[1]);
                }
            }
        }
    }
    gap
}

pub fn batchnorm(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let shape = [
        1 + rng.below(3),
        1 + rng.below(3),
        1 + rng.below(4),
        2 + rng.below(3),
    ];
    let c = shape[1];
    let x = random_tensor(&shape, &mut rng);
    let mut state = BatchNormState::new("bn", c);
    for i in 0..c {
        state.gamma.value.data_mut()[i] = rng.uniform_range(0.5, 1.5);
        state.beta.value.data_mut()[i] = rng.uniform_range(-0.5, 0.5);
    }
    let r = random_tensor(&shape, &mut rng);
    let (_, cache) = batchnorm_forward(&x, &mut state.clone(), Mode::Train).unwrap();
    let g = batchnorm_backward(&r, &cache).unwrap();
    let run = |x: &Tensor, gamma: &[f64], beta: &[f64]| {
        let mut s = state.clone();
        s.gamma.value.data_mut().copy_from_slice(gamma);
        s.beta.value.data_mut().copy_from_slice(beta);
        batchnorm_forward(x, &mut s, Mode::Train).unwrap().0.dot(&r)
    };
    let gamma = state.gamma.value.data().to_vec();
    let beta = state.beta.value.data().to_vec();
    check(
        |v| run(&with(&x, v), &gamma, &beta),
        x.data(),
        g.input.data(),
        None,
    )
    .max(check(|v| run(&x, v, &beta), &gamma, &g.gamma, None))
    .max(check(|v| run(&x, &gamma, v), &beta, &g.beta, None))
}

pub fn relu(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let n = 2 + rng.below(30);
    let data: Vec<f64> = (0..n)
        .map(|_| loop {
            let v = rng.uniform_range(-2.0, 2.0);
            if v.abs() > 1e-3 {
                break v;
            }
        })
        .collect();
    let x = Tensor::from_vec(&[n], data).unwrap();
    let r = random_tensor(&[n], &mut rng);
    let gi = relu_backward(&r, &x).unwrap();
    check(
        |v| relu_forward(&with(&x, v)).dot(&r),
        x.data(),
        gi.data(),
        None,
    )
}

pub fn smooth_l1_loss(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let n = 1 + rng.below(20);
    let target = random_tensor(&[n, 4], &mut rng);
    let pred: Vec<f64> = target
        .data()
        .iter()
        .map(|&t| loop {
            let d = rng.uniform_range(-3.0, 3.0);
            if (d.abs() - 1.0).abs() > 1e-3 {
                break t + d;
            }
        })
        .collect();
    let pred = with(&target, &pred);
    let (_, g) = smooth_l1(&pred, &target).unwrap();
    check(
        |v| smooth_l1(&with(&pred, v), &target).unwrap().0,
        pred.data(),
        g.data(),
        None,
    )
}

pub fn softmax_ce(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let (a, k) = (1 + rng.below(8), 2 + rng.below(5));
    let mut logits = random_tensor(&[a, k], &mut rng);
    logits.scale(3.0);
    let labels: Vec<usize> = (0..a).map(|_| rng.below(k)).collect();
    let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
    let f = |v: &[f64]| {
        softmax_cross_entropy(&with(&logits, v), &labels)
            .unwrap()
            .0
            .iter()
            .sum::<f64>()
    };
    check(f, logits.data(), g.data(), None)
}

/// Multibox loss through a random two-level head, w.r.t. the pyramid and a sample of head parameters.
pub fn head(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let cfg = HeadConfig {
        bn_in_head: rng.bernoulli(0.5),
        num_classes: 2 + rng.below(2),
        ..HeadConfig::default()
    };
    let n = 2;
    let c = 1 + rng.below(3);
    let pyramid = FeaturePyramid {
        levels: vec![
            random_tensor(&[n, c, 3, 3], &mut rng),
            random_tensor(&[n, c, 2, 2], &mut rng),
        ],
    };
    let head = Head::new(&cfg, &[c, c], &mut rng).unwrap();
    let anchors = (9 + 4) * cfg.anchors_per_cell;
    let targets: Vec<Vec<AnchorTarget>> = (0..n)
        .map(|_| {
            (0..anchors)
                .map(|_| {
                    if rng.bernoulli(0.15) {
                        AnchorTarget::Positive {
                            class: 1 + rng.below(cfg.num_classes - 1),
                            offsets: [0; 4].map(|_| rng.uniform_range(-0.4, 0.4)),
                        }
                    } else if rng.bernoulli(0.1) {
                        AnchorTarget::Ignored
                    } else {
                        AnchorTarget::Negative
                    }
                })
                .collect()
        })
        .collect();
    let loss_of = |h: &mut Head, p: &FeaturePyramid| {
        let (out, _) = h.forward(p, Mode::Train).unwrap();
        multibox_loss(&out.loc, &out.cls, &targets, 3)
            .unwrap()
            .0
            .total
    };
    let mut work = head.clone();
    let (out, cache) = work.forward(&pyramid, Mode::Train).unwrap();
    let (_, gl, gc) = multibox_loss(&out.loc, &out.cls, &targets, 3).unwrap();
    let tap_grads = work.backward(&cache, &gl, &gc).unwrap();
    let mut err = 0.0f64;
    for (l, g) in tap_grads.iter().enumerate() {
        let base = pyramid.levels[l].clone();
        let f = |v: &[f64]| {
            let mut p = pyramid.clone();
            p.levels[l] = with(&base, v);
            loss_of(&mut head.clone(), &p)
        };
        err = err.max(check(f, base.data(), g.data(), None));
    }
    let grads: Vec<Vec<f64>> = work
        .params()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();
    for (pi, analytic) in grads.iter().enumerate() {
        let value = head.params()[pi].value.data().to_vec();
        let coords: Vec<usize> = (0..4.min(value.len()))
            .map(|_| rng.below(value.len()))
            .collect();
        let f = |v: &[f64]| {
            let mut h = head.clone();
            h.params_mut()[pi].value.data_mut().copy_from_slice(v);
            loss_of(&mut h, &pyramid)
        };
        err = err.max(check(f, &value, analytic, Some(&coords)));
    }
    err
}

/// Input gradient of a random projection of the pyramid of a tiny residual network.
pub fn network(seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    // every stem variant totals two reductions, so the ladder is the same
    let (stride, pool) = [(1, true), (2, false), (2, true)][rng.below(3)];
    let cfg = BackboneConfig {
        first_conv_kernel: 3,
        first_conv_stride: stride,
        root_depth: 1 + rng.below(2),
        use_first_maxpool: pool,
        stage_channels: vec![8, 8],
        stage_blocks: vec![1, 1],
        bn_in_backbone: rng.bernoulli(0.5),
        input_size: 16,
        target_ladder: vec![4, 2, 1],
        extra_channels: 8,
        input_channels: 3,
    };
    let spec = build_backbone(&cfg).unwrap();
    let net = Network::new(spec, &mut rng).unwrap();
    let x = random_tensor(&[2, 3, 16, 16], &mut rng);
    let mut work = net.clone();
    let (p, cache) = work.forward_pyramid(&x, Mode::Train).unwrap();
    let rs: Vec<Tensor> = p
        .levels
        .iter()
        .map(|l| random_tensor(l.shape(), &mut rng))
        .collect();
    let gx = work.backward(&cache, &rs, true).unwrap().unwrap();
    let coords: Vec<usize> = (0..40).map(|_| rng.below(x.len())).collect();
    let f = |v: &[f64]| {
        let (p, _) = net
            .clone()
            .forward_pyramid(&with(&x, v), Mode::Train)
            .unwrap();
        p.levels.iter().zip(&rs).map(|(a, b)| a.dot(b)).sum::<f64>()
    };
    check(f, x.data(), gx.data(), Some(&coords))
}
