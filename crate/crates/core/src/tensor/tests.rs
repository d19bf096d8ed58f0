use rand::Rng;

use super::gradcheck::{gradcheck, project, KINK_EXCLUSION};
use super::*;
use crate::rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape, data.to_vec()).unwrap()
}

fn random(shape: &[usize], rng: &mut rng::Rng) -> Tensor {
    let n = numel(shape);
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Random tensor with every entry at least `KINK_EXCLUSION` away from zero.
fn random_off_kink(shape: &[usize], rng: &mut rng::Rng) -> Tensor {
    let n = numel(shape);
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if v.abs() > 10.0 * KINK_EXCLUSION {
                break v;
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len(), "{a:?} vs {b:?}");
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn elementwise_examples() {
    let sum = t(&[2], &[1.0, 2.0]).add(&t(&[2], &[3.0, 4.0])).unwrap();
    assert_eq!(sum.data(), &[4.0, 6.0]);
    assert_eq!(t(&[3], &[-1.0, 0.0, 2.0]).relu().data(), &[0.0, 0.0, 2.0]);
    assert_eq!(t(&[3], &[1.0, 2.0, 3.0]).mul_scalar(2.0).data(), &[2.0, 4.0, 6.0]);
    assert_eq!(t(&[3], &[-2.0, 0.5, 3.0]).clamp(-1.0, 1.0).unwrap().data(), &[-1.0, 0.5, 1.0]);
    assert_eq!(t(&[2], &[-2.0, 3.0]).abs().data(), &[2.0, 3.0]);
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let err = t(&[2], &[1.0, 2.0]).add(&t(&[3], &[1.0, 2.0, 3.0])).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
}

#[test]
fn division_by_zero_is_an_error() {
    let a = t(&[2], &[1.0, 2.0]);
    assert!(matches!(
        a.div(&t(&[2], &[1.0, 0.0])),
        Err(crate::Error::DivisionByZero { .. })
    ));
    assert!(a.div_scalar(0.0).is_err());
}

#[test]
fn broadcasting_matches_index_oracle() {
    // every shape up to 2×3×2×2 against every operand obtained by collapsing
    // axes to 1 or dropping leading axes
    let full = [2usize, 3, 2, 2];
    let mut shapes = Vec::new();
    for rank in 1..=4 {
        let base = &full[4 - rank..];
        for mask in 0..(1u32 << rank) {
            let s: Vec<usize> = base
                .iter()
                .enumerate()
                .map(|(i, &e)| if mask & (1 << i) != 0 { 1 } else { e })
                .collect();
            shapes.push(s);
        }
    }
    let mut rng = rng::seeded(11);
    for sa in &shapes {
        for sb in &shapes {
            let Some(out) = broadcast_shape(sa, sb) else {
                continue;
            };
            let a = random(sa, &mut rng);
            let b = random(sb, &mut rng);
            for kind in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul] {
                let r = a.binary(kind, &b).unwrap();
                assert_eq!(r.shape(), out.as_slice());
                let rank = out.len();
                for (lin, &v) in r.data().iter().enumerate() {
                    // decompose the output index and resolve each operand
                    let mut idx = vec![0; rank];
                    let mut rem = lin;
                    for ax in (0..rank).rev() {
                        idx[ax] = rem % out[ax];
                        rem /= out[ax];
                    }
                    let resolve = |shape: &[usize]| {
                        let off = rank - shape.len();
                        shape.iter().enumerate().fold(0, |acc, (i, &e)| {
                            acc * e + if e == 1 { 0 } else { idx[off + i] }
                        })
                    };
                    let (x, y) = (a.data()[resolve(sa)], b.data()[resolve(sb)]);
                    let expect = match kind {
                        BinaryOp::Add => x + y,
                        BinaryOp::Sub => x - y,
                        BinaryOp::Mul => x * y,
                        BinaryOp::Div => unreachable!(),
                    };
                    assert_eq!(v, expect, "{sa:?} {sb:?} {kind:?}");
                }
            }
        }
    }
}

#[test]
fn affine_examples() {
    let y = t(&[1, 2], &[1.0, 2.0])
        .affine(&t(&[2, 1], &[1.0, 1.0]), &t(&[1], &[0.0]))
        .unwrap();
    assert_eq!(y.data(), &[3.0]);

    let x = t(&[2, 2], &[1.0, -2.0, 0.5, 4.0]);
    let id = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
    let y = x.affine(&id, &Tensor::zeros(&[2])).unwrap();
    assert_eq!(y.data(), x.data());

    assert!(x.affine(&t(&[3, 1], &[1.0; 3]), &t(&[1], &[0.0])).is_err());
}

#[test]
fn conv1x1_examples() {
    let mut rng = rng::seeded(3);
    let x = random(&[2, 2, 3, 3], &mut rng);
    let avg = x
        .conv1x1(&t(&[1, 2], &[0.5, 0.5]), &t(&[1], &[0.0]))
        .unwrap();
    for n in 0..2 {
        for p in 0..9 {
            let expect = 0.5 * (x.data()[n * 18 + p] + x.data()[n * 18 + 9 + p]);
            assert!((avg.data()[n * 9 + p] - expect).abs() < 1e-15);
        }
    }
    let id = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(x.conv1x1(&id, &Tensor::zeros(&[2])).unwrap().data(), x.data());
    assert!(x.conv1x1(&t(&[1, 3], &[1.0; 3]), &t(&[1], &[0.0])).is_err());
}

#[test]
fn concat_examples() {
    let mut rng = rng::seeded(5);
    let a = random(&[1, 2, 3, 3], &mut rng);
    let b = random(&[1, 3, 3, 3], &mut rng);
    assert_eq!(a.concat_channels(&b).unwrap().shape(), &[1, 5, 3, 3]);

    let round = a
        .concat_channels(&Tensor::zeros(&[1, 3, 3, 3]))
        .unwrap()
        .narrow(1, 0, 2)
        .unwrap();
    assert_eq!(round.data(), a.data());

    assert!(a.concat_channels(&Tensor::zeros(&[1, 3, 2, 3])).is_err());
}

#[test]
fn concat_gradient_is_exact() {
    let mut rng = rng::seeded(6);
    let a = random(&[2, 2, 2, 2], &mut rng);
    let b = random(&[2, 1, 2, 2], &mut rng);
    let (va, vb) = (a.clone().into_var(), b.clone().into_var());
    let g = va.concat_channels(&vb).unwrap().sum().backward().unwrap();
    assert!(g.wrt(&va).iter().chain(g.wrt(&vb).iter()).all(|&d| d == 1.0));
    let r = gradcheck("concat", &[a, b], |x| Ok(x[0].concat_channels(&x[1])?.sum())).unwrap();
    assert!(r.max_rel_err < 1e-8, "{r:?}");
}

#[test]
fn spatial_stats_examples() {
    let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let s = x.spatial_mean_std(0.0).unwrap();
    assert_eq!(s.mu.data(), &[2.5]);
    assert!((s.sigma.data()[0] - 1.118034).abs() < 1e-6);

    let c = Tensor::full(&[1, 1, 3, 3], 4.2);
    let s = c.spatial_mean_std(1e-5).unwrap();
    assert!((s.mu.data()[0] - 4.2).abs() < 1e-14);
    assert!((s.sigma.data()[0] - 1e-5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn gap_examples() {
    let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(x.gap().unwrap().data(), &[2.5]);
    assert_eq!(Tensor::full(&[1, 1, 3, 3], 7.0).gap().unwrap().data(), &[7.0]);

    let v = Tensor::var(&[1, 2, 2, 3], vec![0.3; 12]).unwrap();
    let g = v.gap().unwrap().sum().backward().unwrap();
    assert!(g.wrt(&v).iter().all(|&d| (d - 1.0 / 6.0).abs() < 1e-15));
}

#[test]
fn backward_examples() {
    let x = t(&[3], &[0.5, -1.0, 2.0]);
    let w = Tensor::var(&[3], vec![1.0, 1.0, 1.0]).unwrap();
    let loss = w.mul(&x).unwrap().sum();
    assert_eq!(loss.backward().unwrap().wrt(&w), x.to_vec());

    let unrelated = Tensor::var(&[2], vec![1.0, 2.0]).unwrap();
    let g = loss.backward().unwrap();
    assert_eq!(g.wrt(&unrelated), vec![0.0, 0.0]);

    assert!(matches!(
        w.mul(&x).unwrap().backward(),
        Err(crate::Error::NonScalarLoss(_))
    ));
}

#[test]
fn param_store_zeroes_unreachable() {
    let mut store = ParamStore::new();
    store.insert("used", Tensor::from_vec(vec![2.0]), true).unwrap();
    store.insert("idle", Tensor::from_vec(vec![5.0, 6.0]), true).unwrap();
    store.insert("frozen", Tensor::from_vec(vec![1.0]), false).unwrap();
    assert!(store.insert("used", Tensor::scalar(0.0), true).is_err());
    let loss = store
        .get("used")
        .unwrap()
        .square()
        .mul(store.get("frozen").unwrap())
        .unwrap()
        .sum();
    store.backward(&loss).unwrap();
    assert_eq!(store.grad("used"), Some(&[4.0][..]));
    assert_eq!(store.grad("idle"), Some(&[0.0, 0.0][..]));
    assert_eq!(store.grad("frozen"), None);
}

#[test]
fn backward_is_linear() {
    let mut rng = rng::seeded(9);
    let w = random(&[3, 4], &mut rng).into_var();
    let x = random(&[2, 3], &mut rng);
    let b = random(&[4], &mut rng).into_var();
    let l1 = |w: &Tensor, b: &Tensor| x.affine(w, b).unwrap().square().sum();
    let l2 = |w: &Tensor, b: &Tensor| x.affine(w, b).unwrap().exp().sum();
    let (ca, cb) = (0.7, -1.3);
    let combined = l1(&w, &b)
        .mul_scalar(ca)
        .add(&l2(&w, &b).mul_scalar(cb))
        .unwrap();
    let g = combined.backward().unwrap();
    let g1 = l1(&w, &b).backward().unwrap();
    let g2 = l2(&w, &b).backward().unwrap();
    for v in [&w, &b] {
        let expect: Vec<f64> = g1
            .wrt(v)
            .iter()
            .zip(g2.wrt(v))
            .map(|(a, b)| ca * a + cb * b)
            .collect();
        assert_close(&g.wrt(v), &expect, 1e-10);
    }
}

#[test]
fn gradcheck_elementwise_ops() {
    let mut rng = rng::seeded(21);
    let shapes = [(vec![2, 3], vec![3]), (vec![2, 1, 2], vec![3, 1]), (vec![4], vec![4])];
    for (sa, sb) in &shapes {
        for kind in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div] {
            let a = random(sa, &mut rng);
            let b = random_off_kink(sb, &mut rng);
            let r = gradcheck("binary", &[a, b], |x| project(&x[0].binary(kind, &x[1])?, 1)).unwrap();
            assert!(r.passed(), "{kind:?} {r:?}");
        }
    }
    for kind in [
        UnaryOp::Abs,
        UnaryOp::Relu,
        UnaryOp::Neg,
        UnaryOp::Square,
        UnaryOp::Exp,
        UnaryOp::Clamp { lo: -0.5, hi: 0.5 },
        UnaryOp::SmoothL1 { beta: 0.3 },
        UnaryOp::Acos,
    ] {
        let x = loop {
            let x = random_off_kink(&[3, 4], &mut rng).mul_scalar(0.95);
            if x.clone().into_var().unary(kind).unwrap().kink_margin() > KINK_EXCLUSION {
                break x;
            }
        };
        let r = gradcheck("unary", &[x], |x| project(&x[0].unary(kind)?, 2)).unwrap();
        assert!(r.passed(), "{kind:?} {r:?}");
    }
    let pos = random(&[5], &mut rng).abs().add_scalar(0.1);
    let r = gradcheck("sqrt", &[pos], |x| project(&x[0].sqrt()?, 3)).unwrap();
    assert!(r.passed(), "{r:?}");
}

#[test]
fn gradcheck_structural_ops() {
    let mut rng = rng::seeded(33);
    let x = random(&[3, 4], &mut rng);
    let w = random(&[4, 2], &mut rng);
    let b = random(&[2], &mut rng);
    let r = gradcheck("affine", &[x, w, b], |p| project(&p[0].affine(&p[1], &p[2])?, 4)).unwrap();
    assert!(r.passed(), "{r:?}");

    let x = random(&[2, 4, 3, 3], &mut rng);
    let w = random(&[3, 4], &mut rng);
    let b = random(&[3], &mut rng);
    let r = gradcheck("conv1x1", &[x, w, b], |p| project(&p[0].conv1x1(&p[1], &p[2])?, 5)).unwrap();
    assert!(r.passed(), "{r:?}");

    let x = random(&[1, 2, 3, 3], &mut rng);
    let r = gradcheck("spatial_std", &[x], |p| {
        project(&p[0].spatial_mean_std(1e-5)?.sigma, 6)
    })
    .unwrap();
    assert!(r.passed(), "{r:?}");

    let x = random(&[2, 3, 2, 2], &mut rng);
    let r = gradcheck("gap", &[x], |p| project(&p[0].gap()?, 7)).unwrap();
    assert!(r.passed(), "{r:?}");

    let x = random(&[3, 2, 2], &mut rng);
    let r = gradcheck("row_norm", &[x], |p| project(&p[0].row_norm()?, 8)).unwrap();
    assert!(r.passed(), "{r:?}");

    let x = random(&[1, 2, 2, 2], &mut rng);
    let r = gradcheck("repeat", &[x], |p| project(&p[0].repeat_batch(3)?, 9)).unwrap();
    assert!(r.passed(), "{r:?}");

    let x = random(&[3, 5], &mut rng);
    let r = gradcheck("narrow", &[x], |p| project(&p[0].narrow(1, 1, 3)?, 10)).unwrap();
    assert!(r.passed(), "{r:?}");
}

#[test]
fn kink_margin_sees_relu_inputs() {
    let x = Tensor::var(&[3], vec![0.5, -0.0002, 2.0]).unwrap();
    let y = x.relu().sum();
    assert!((y.kink_margin() - 0.0002).abs() < 1e-15);
    assert_eq!(x.exp().sum().kink_margin(), f64::INFINITY);
}

#[test]
fn subgradient_zero_at_kinks() {
    let x = Tensor::var(&[2], vec![0.0, 0.0]).unwrap();
    let g = x.abs().add(&x.relu()).unwrap().sum().backward().unwrap();
    assert_eq!(g.wrt(&x), vec![0.0, 0.0]);
}
