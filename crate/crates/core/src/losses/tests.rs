use super::graph as lgraph;
use super::*;
use crate::diff::{self, Graph, Tensor};
use crate::estimator::{ClassDistribution, Provenance};
use crate::geometry::graph::CurvatureVar;
use crate::geometry::{distance, expm0};
use crate::selfcheck::bound_instance;
use crate::wrapped_normal::{unpack_lower, WrappedNormal};
use alloc::string::ToString;

fn c(v: f64) -> Curvature {
    Curvature::new(v).unwrap()
}

fn pt(v: &[f64], k: f64) -> BallPoint {
    BallPoint::new(v.to_vec(), c(k)).unwrap()
}

fn clf(points: &[&[f64]], k: f64) -> HyperbolicClassifier {
    HyperbolicClassifier::new(
        (0..points.len()).map(|i| alloc::format!("k{i}")).collect(),
        points.iter().map(|p| pt(p, k)).collect(),
    )
    .unwrap()
}

fn dists_from(
    k: f64,
    specs: &[(&[f64], &[f64], &[f64])],
) -> ClassDistributions {
    let classes = specs
        .iter()
        .enumerate()
        .map(|(i, (p, mu, l))| ClassDistribution {
            label: alloc::format!("k{i}"),
            dist: WrappedNormal::with_floor(pt(p, k), mu.to_vec(), unpack_lower(l, p.len())).unwrap(),
            provenance: Provenance::Seen,
        })
        .collect();
    ClassDistributions::new(c(k), classes).unwrap()
}

#[test]
fn classifier_validation() {
    assert!(HyperbolicClassifier::new(vec!["a".into()], vec![]).is_err());
    assert!(HyperbolicClassifier::new(
        vec!["a".into(), "a".into()],
        vec![pt(&[0.0], -1.0), pt(&[0.1], -1.0)]
    )
    .is_err());
    assert!(HyperbolicClassifier::new(
        vec!["a".into(), "b".into()],
        vec![pt(&[0.0], -1.0), pt(&[0.1], -0.5)]
    )
    .is_err());
}

#[test]
fn probability_examples() {
    let m = clf(&[&[0.3, 0.0], &[-0.3, 0.0]], -1.0);
    let p = class_probability(&m, &pt(&[0.0, 0.2], -1.0)).unwrap();
    assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);

    let far = clf(&[&[0.1, 0.1], &[0.9, 0.0], &[0.0, -0.9]], -1.0);
    let x = pt(&[0.1, 0.1], -1.0);
    assert_eq!(far.predict(&x).unwrap(), 0);

    let three = clf(&[&[0.2, -0.1], &[0.5, 0.3], &[-0.4, 0.1]], -0.7);
    let x = pt(&[0.05, 0.2], -0.7);
    let p = class_probability(&three, &x).unwrap();
    let e: Vec<f64> = three
        .weights()
        .iter()
        .map(|w| math::exp(-distance(&x, w).unwrap()))
        .collect();
    let z: f64 = e.iter().sum();
    for (a, b) in p.iter().zip(&e) {
        assert!((a - b / z).abs() < 1e-12);
    }
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(class_probability(&three, &pt(&[0.1], -0.7)).is_err());
}

#[test]
fn finite_loss_examples() {
    let one = clf(&[&[0.2, 0.1]], -1.0);
    let data = vec![("k0".to_string(), vec![pt(&[0.5, 0.0], -1.0), pt(&[-0.3, 0.3], -1.0)])];
    assert!(finite_sample_loss(&one, &data).unwrap().abs() < 1e-15);

    let mut prev = f64::INFINITY;
    for s in [0.2, 0.4, 0.6, 0.8] {
        let m = clf(&[&[s, 0.0], &[-s, 0.0]], -1.0);
        let data = vec![
            ("k0".to_string(), vec![pt(&[s, 0.0], -1.0)]),
            ("k1".to_string(), vec![pt(&[-s, 0.0], -1.0)]),
        ];
        let l = finite_sample_loss(&m, &data).unwrap();
        assert!(l < prev);
        prev = l;
    }

    let m = clf(&[&[0.1, 0.2], &[-0.3, 0.1]], -0.5);
    let xa = [pt(&[0.0, 0.1], -0.5), pt(&[0.2, 0.2], -0.5)];
    let xb = [pt(&[-0.1, -0.1], -0.5)];
    let data = vec![
        ("k0".to_string(), xa.to_vec()),
        ("k1".to_string(), xb.to_vec()),
    ];
    let nll = |x: &BallPoint, j: usize| {
        let d: Vec<f64> = m.weights().iter().map(|w| distance(x, w).unwrap()).collect();
        let z: f64 = d.iter().map(|v| math::exp(-v)).sum();
        d[j] + math::ln(z)
    };
    let want = ((nll(&xa[0], 0) + nll(&xa[1], 0)) / 2.0 + nll(&xb[0], 1)) / 2.0;
    assert!((finite_sample_loss(&m, &data).unwrap() - want).abs() < 1e-12);
    let bad = vec![("zz".to_string(), xb.to_vec())];
    assert!(matches!(finite_sample_loss(&m, &bad), Err(Error::UnknownLabel(_))));
}

#[test]
fn mc_loss_degenerate_and_single_draw() {
    let m = clf(&[&[0.1, 0.2], &[-0.3, 0.1], &[0.0, -0.4]], -1.0);
    let tiny: &[f64] = &[1e-6, 0.0, 1e-6];
    let ds = dists_from(
        -1.0,
        &[
            (&[0.15, 0.1], &[0.0, 0.0], tiny),
            (&[-0.2, 0.0], &[0.0, 0.0], tiny),
            (&[0.1, -0.3], &[0.0, 0.0], tiny),
        ],
    );
    let at_protos: Vec<(String, Vec<BallPoint>)> = ds
        .classes()
        .iter()
        .map(|cd| (cd.label.clone(), vec![cd.dist.prototype().clone()]))
        .collect();
    let finite = finite_sample_loss(&m, &at_protos).unwrap();
    let mc = mc_infinite_loss(&m, &ds, 500, 3).unwrap();
    assert!((mc - finite).abs() < 1e-3);

    let wide: &[f64] = &[0.3, 0.05, 0.2];
    let ds = dists_from(
        -1.0,
        &[
            (&[0.15, 0.1], &[0.05, 0.0], wide),
            (&[-0.2, 0.0], &[0.0, 0.1], wide),
            (&[0.1, -0.3], &[0.0, 0.0], wide),
        ],
    );
    let one = mc_infinite_loss(&m, &ds, 1, 17).unwrap();
    let mut r = rng::seeded(17);
    let drawn: Vec<(String, Vec<BallPoint>)> = ds
        .classes()
        .iter()
        .map(|cd| {
            let x = cd.dist.sample(&rng::standard_normal(&mut r, 2)).unwrap();
            (cd.label.clone(), vec![x])
        })
        .collect();
    assert!((one - finite_sample_loss(&m, &drawn).unwrap()).abs() < 1e-15);
    assert_eq!(mc_infinite_loss(&m, &ds, 50, 4), mc_infinite_loss(&m, &ds, 50, 4));
    assert!(mc_infinite_loss(&m, &ds, 0, 4).is_err());
}

#[test]
fn mc_variance_scales_inversely_with_draws() {
    let m = clf(&[&[0.1, 0.2], &[-0.3, 0.1]], -1.0);
    let wide: &[f64] = &[0.3, 0.05, 0.2];
    let ds = dists_from(
        -1.0,
        &[(&[0.15, 0.1], &[0.0, 0.0], wide), (&[-0.2, 0.0], &[0.0, 0.1], wide)],
    );
    let spread = |draws: usize| {
        let xs: Vec<f64> = (0..40)
            .map(|s| mc_infinite_loss(&m, &ds, draws, 1000 + s).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / 40.0;
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 39.0
    };
    let (v2, v3, v4) = (spread(100), spread(1000), spread(10_000));
    // Log-log slope of variance against draws should be close to -1.
    let slope = (math::ln(v4) - math::ln(v2)) / (math::ln(10_000.0) - math::ln(100.0));
    assert!((slope + 1.0).abs() < 0.25, "{v2} {v3} {v4} slope {slope}");
}

#[test]
fn bound_single_class_is_zero() {
    let m = clf(&[&[0.2, 0.1]], -1.0);
    let ds = dists_from(-1.0, &[(&[0.1, 0.0], &[0.05, 0.0], &[0.3, 0.1, 0.2])]);
    assert_eq!(upper_bound_loss(&m, &ds).unwrap(), 0.0);
}

#[test]
fn bound_matches_direct_evaluation() {
    let m = clf(&[&[0.05, 0.02], &[-0.03, 0.04], &[0.01, -0.06]], -0.5);
    let l: &[f64] = &[0.2, 0.05, 0.1];
    let ds = dists_from(
        -0.5,
        &[
            (&[0.04, 0.01], &[0.01, 0.0], l),
            (&[-0.02, 0.03], &[0.0, -0.01], l),
            (&[0.0, -0.05], &[0.02, 0.02], l),
        ],
    );
    let terms = upper_bound_terms(&m, &ds).unwrap();
    let sigma = ds.classes()[0].dist.covariance();
    let mut direct = 0.0;
    for (j, cd) in ds.classes().iter().enumerate() {
        let p_hat = raw::logm0(cd.dist.prototype().coords(), -0.5);
        let a: Vec<f64> = p_hat.iter().zip(cd.dist.mean()).map(|(x, y)| x + y).collect();
        let wj = m.weights()[j].coords();
        let mut xi = 0.0;
        for w in m.weights() {
            let wp = w.coords();
            let dv = [wp[0] - wj[0], wp[1] - wj[1]];
            let q = dv[0] * (sigma.get(0, 0) * dv[0] + sigma.get(0, 1) * dv[1])
                + dv[1] * (sigma.get(1, 0) * dv[0] + sigma.get(1, 1) * dv[1]);
            xi += math::exp(math::dot(wp, &a) + math::norm_sq(wp) - math::norm_sq(wj) + 0.5 * q);
        }
        let own = math::dot(wj, &a);
        assert!(xi >= math::exp(own) * (1.0 - 1e-15));
        assert!((math::ln(xi) - terms.log_xi[j]).abs() < 1e-12);
        direct += -(own - math::ln(xi));
        assert_eq!(terms.exponents[j][j], 0.0);
    }
    direct /= 3.0;
    assert!((terms.loss - direct).abs() < 1e-12);
    assert!(terms.terms.iter().all(|&t| t >= 0.0));
}

#[test]
fn bound_rejects_curvature_mismatch() {
    let m = clf(&[&[0.2, 0.1]], -1.0);
    let ds = dists_from(-0.5, &[(&[0.1, 0.0], &[0.0, 0.0], &[0.3, 0.1, 0.2])]);
    assert!(matches!(upper_bound_loss(&m, &ds), Err(Error::CurvatureMismatch { .. })));
}

fn random_instance(seed: u64, n: usize, d: usize, k: f64) -> (HyperbolicClassifier, ClassDistributions) {
    let mut r = rng::seeded(seed);
    let small = |r: &mut rng::ChaCha8Rng, s: f64| -> Vec<f64> {
        rng::standard_normal(r, d).into_iter().map(|v| v * s).collect()
    };
    let weights: Vec<BallPoint> = (0..n).map(|_| expm0(&small(&mut r, 0.3), c(k)).unwrap()).collect();
    let classes = (0..n)
        .map(|i| {
            let packed: Vec<f64> = rng::standard_normal(&mut r, d * (d + 1) / 2)
                .into_iter()
                .map(|v| v * 0.3)
                .collect();
            ClassDistribution {
                label: alloc::format!("k{i}"),
                dist: WrappedNormal::with_floor(
                    expm0(&small(&mut r, 0.3), c(k)).unwrap(),
                    small(&mut r, 0.1),
                    unpack_lower(&packed, d),
                )
                .unwrap(),
                provenance: Provenance::Seen,
            }
        })
        .collect();
    let labels = (0..n).map(|i| alloc::format!("k{i}")).collect();
    (
        HyperbolicClassifier::new(labels, weights).unwrap(),
        ClassDistributions::new(c(k), classes).unwrap(),
    )
}

#[test]
fn bound_gradient_matches_finite_differences() {
    let (m, ds) = random_instance(5, 4, 3, -0.8);
    let grad = upper_bound_gradient(&m, &ds).unwrap();
    let h = 1e-6;
    for j in 0..m.len() {
        for i in 0..m.dim() {
            let bump = |s: f64| {
                let ws: Vec<BallPoint> = m
                    .weights()
                    .iter()
                    .enumerate()
                    .map(|(jj, w)| {
                        let mut v = w.coords().to_vec();
                        if jj == j {
                            v[i] += s;
                        }
                        BallPoint::new(v, m.curvature()).unwrap()
                    })
                    .collect();
                upper_bound_loss(&m.with_weights(ws).unwrap(), &ds).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            assert!((fd - grad[j][i]).abs() < 1e-8 + 1e-5 * fd.abs(), "{j},{i}: {fd} {}", grad[j][i]);
        }
    }
}

fn bound_graph_inputs(m: &HyperbolicClassifier, ds: &ClassDistributions) -> (Tensor, Tensor, Vec<Tensor>) {
    let k = ds.curvature().value();
    let w = Tensor::from_rows(&m.weights().iter().map(|w| w.coords().to_vec()).collect::<Vec<_>>()).unwrap();
    let a = Tensor::from_rows(
        &ds.classes()
            .iter()
            .map(|cd| {
                raw::logm0(cd.dist.prototype().coords(), k)
                    .iter()
                    .zip(cd.dist.mean())
                    .map(|(x, y)| x + y)
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let ls = ds.classes().iter().map(|cd| cd.dist.scale().clone()).collect();
    (w, a, ls)
}

#[test]
fn graph_bound_matches_plain_value_and_gradient() {
    let (m, ds) = random_instance(9, 5, 3, -0.6);
    let (w, a, ls) = bound_graph_inputs(&m, &ds);
    let g = Graph::new();
    let wv = g.leaf(w.clone());
    let scales: Vec<_> = ls.iter().map(|l| g.constant(l.clone())).collect();
    let b = lgraph::upper_bound(wv, g.constant(a.clone()), &scales);
    let plain = upper_bound_loss(&m, &ds).unwrap();
    assert!((b.loss.scalar().unwrap() - plain).abs() < 1e-12);
    let analytic = b.gradient.value();
    let grads = g.backward(b.loss).unwrap();
    let tape = grads.get(wv);
    let plain_grad = upper_bound_gradient(&m, &ds).unwrap();
    for j in 0..5 {
        for i in 0..3 {
            assert!((analytic.get(j, i) - tape.get(j, i)).abs() < 1e-12);
            assert!((analytic.get(j, i) - plain_grad[j][i]).abs() < 1e-12);
        }
    }
}

#[test]
fn graph_bound_gradient_is_differentiable() {
    // The analytic gradient node itself must carry correct derivatives with
    // respect to anchors and scales (it is unrolled by the inner loop).
    let (m, ds) = random_instance(10, 3, 2, -0.9);
    let (w, a, ls) = bound_graph_inputs(&m, &ds);
    let probe = Tensor::new(3, 2, vec![0.3, -0.7, 1.1, 0.2, -0.4, 0.8]).unwrap();
    let mut params = vec![w, a];
    params.extend(ls);
    fn f<'g>(g: &'g Graph, p: &[crate::diff::Var<'g>], probe: &Tensor) -> crate::diff::Var<'g> {
        let b = lgraph::upper_bound(p[0], p[1], &p[2..]);
        (b.gradient * g.constant(probe.clone())).sum()
    }
    let (_, grads) = diff::value_and_grad(|g, p| Ok(f(g, p, &probe)), &params).unwrap();
    let eval = |ps: &[Tensor]| {
        let g = Graph::new();
        let vs: Vec<_> = ps.iter().map(|t| g.constant(t.clone())).collect();
        f(&g, &vs, &probe).scalar().unwrap()
    };
    let h = 1e-5;
    for (pi, t) in params.iter().enumerate() {
        for e in 0..t.len() {
            let mut plus = params.clone();
            plus[pi].data_mut()[e] += h;
            let mut minus = params.clone();
            minus[pi].data_mut()[e] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let an = grads[pi].data()[e];
            assert!((fd - an).abs() <= 1e-8 + 1e-4 * fd.abs(), "{pi}[{e}] {an} {fd}");
        }
    }
}

#[test]
fn graph_logits_and_cross_entropy_match_plain() {
    let m = clf(&[&[0.1, 0.2], &[-0.3, 0.1], &[0.0, -0.4]], -0.7);
    let xs = [pt(&[0.0, 0.1], -0.7), pt(&[0.2, -0.2], -0.7), pt(&[-0.1, 0.3], -0.7)];
    let labels = ["k0", "k2", "k1"];
    let validation: Vec<(String, BallPoint)> =
        labels.iter().zip(&xs).map(|(l, x)| (l.to_string(), x.clone())).collect();
    let g = Graph::new();
    let k = CurvatureVar::constant(&g, -0.7);
    let xv = g.constant(Tensor::from_rows(&xs.iter().map(|x| x.coords().to_vec()).collect::<Vec<_>>()).unwrap());
    let wv = g.constant(
        Tensor::from_rows(&m.weights().iter().map(|w| w.coords().to_vec()).collect::<Vec<_>>()).unwrap(),
    );
    let lg = lgraph::logits(xv, wv, k);
    let ce = lgraph::cross_entropy(lg, &[0, 2, 1]).scalar().unwrap();
    assert!((ce - validation_cross_entropy(&m, &validation).unwrap()).abs() < 1e-12);
    let row0 = m.logits(&xs[0]).unwrap();
    for (j, v) in row0.iter().enumerate() {
        assert!((lg.value().get(0, j) - v).abs() < 1e-12);
    }
}

#[test]
fn hierarchy_examples() {
    let o = pt(&[0.0, 0.0], -1.0);
    assert_eq!(hierarchy_regularizer(&o, &o, &o, 0.1).unwrap(), 0.0);
    let at = |d: f64| pt(&[math::tanh(d / 2.0), 0.0], -1.0);
    let r = hierarchy_regularizer(&at(1.0), &at(1.0), &at(0.5), 0.1).unwrap();
    assert!((r + 1.0).abs() < 1e-12, "{r}");
    assert!(hierarchy_regularizer(&o, &o, &o, 0.0).is_err());
    assert!(hierarchy_regularizer(&o, &o, &o, 1.0).is_err());

    let g = Graph::new();
    let dk = g.leaf(Tensor::scalar(0.5));
    let r = lgraph::hierarchy(g.constant(Tensor::scalar(1.0)), g.constant(Tensor::scalar(1.0)), dk, 0.1);
    assert!((r.scalar().unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(g.backward(r).unwrap().get(dk).data()[0], 2.0);
}

#[test]
fn meta_loss_decomposes() {
    let m = clf(&[&[0.1, 0.2], &[-0.3, 0.1]], -1.0);
    let validation = vec![
        ("k0".to_string(), pt(&[0.0, 0.1], -1.0)),
        ("k1".to_string(), pt(&[-0.2, 0.0], -1.0)),
    ];
    let triples = vec![
        (pt(&[0.3, 0.0], -1.0), pt(&[0.0, 0.3], -1.0), pt(&[0.1, 0.1], -1.0)),
        (pt(&[0.4, 0.1], -1.0), pt(&[-0.2, 0.3], -1.0), pt(&[0.3, 0.2], -1.0)),
    ];
    let ce = validation_cross_entropy(&m, &validation).unwrap();
    assert_eq!(total_meta_loss(&m, &validation, &triples, 0.0, 0.1).unwrap(), ce);
    assert_eq!(total_meta_loss(&m, &validation, &[], 10.0, 0.1).unwrap(), ce);
    let reg: f64 = triples
        .iter()
        .map(|(a, b, k)| hierarchy_regularizer(a, b, k, 0.1).unwrap())
        .sum::<f64>()
        / 2.0;
    let total = total_meta_loss(&m, &validation, &triples, 10.0, 0.1).unwrap();
    assert!((total - (ce + 10.0 * reg)).abs() < 1e-12);
}

#[test]
fn bound_dominates_monte_carlo_on_small_instances() {
    let mut r = rng::seeded(2024);
    let mut passed = 0;
    for t in 0..20 {
        let inst = bound_instance(&mut r).unwrap();
        let bound = upper_bound_loss(&inst.classifier, &inst.dists).unwrap();
        let mc = mc_infinite_loss_estimate(&inst.classifier, &inst.dists, 20_000, t).unwrap();
        if bound >= mc.mean - 3.0 * mc.std_error {
            passed += 1;
        }
    }
    assert!(passed >= 19, "{passed}/20");
}
