use super::*;
use crate::geometry::expm0;
use alloc::string::ToString;

fn c(v: f64) -> Curvature {
    Curvature::new(v).unwrap()
}

fn small_cfg() -> BankConfig {
    BankConfig {
        hidden: 8,
        ..BankConfig::default()
    }
}

fn classes(seed: u64, n: usize, per: usize, d: usize) -> Vec<(String, Vec<BallPoint>)> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|i| {
            let centre: Vec<f64> = rng::standard_normal(&mut r, d).iter().map(|v| v * 0.5).collect();
            let pts = (0..per)
                .map(|_| {
                    let u: Vec<f64> = centre
                        .iter()
                        .zip(rng::standard_normal(&mut r, d))
                        .map(|(a, b)| a + 0.1 * b)
                        .collect();
                    expm0(&u, c(-1.0)).unwrap()
                })
                .collect();
            (alloc::format!("class{i}"), pts)
        })
        .collect()
}

fn assert_dist_close(a: &WrappedNormal, b: &WrappedNormal, tol: f64) {
    for (x, y) in a.prototype().coords().iter().zip(b.prototype().coords()) {
        assert!((x - y).abs() < tol, "prototype {x} {y}");
    }
    for (x, y) in a.mean().iter().zip(b.mean()) {
        assert!((x - y).abs() < tol, "mean {x} {y}");
    }
    for (x, y) in a.scale().data().iter().zip(b.scale().data()) {
        assert!((x - y).abs() < tol, "scale {x} {y}");
    }
}

#[test]
fn zero_flows_return_initial_fits() {
    let mut bank = EstimatorBank::new(3, &small_cfg(), 1).unwrap();
    bank.zero_outputs();
    let data = classes(2, 3, 4, 3);
    let est = bank.estimate_seen(&data).unwrap();
    assert_eq!(est.curvature(), bank.c0());
    for ((label, pts), cd) in data.iter().zip(est.classes()) {
        assert_eq!(&cd.label, label);
        assert_eq!(cd.provenance, Provenance::Seen);
        assert_dist_close(&cd.dist, &WrappedNormal::fit_initial(pts).unwrap(), 1e-12);
    }
}

#[test]
fn constant_mean_flow_integrates_exactly() {
    let mut bank = EstimatorBank::new(2, &small_cfg(), 1).unwrap();
    bank.zero_outputs();
    let g = [0.3, -0.2];
    bank.network_mut(FlowKind::Mean).set_constant_output(&g).unwrap();
    let data = classes(3, 1, 3, 2);
    let est = bank.estimate_seen(&data).unwrap();
    let mu0 = WrappedNormal::fit_initial(&data[0].1).unwrap();
    for i in 0..2 {
        let want = mu0.mean()[i] + bank.horizon() * g[i];
        assert!((est.classes()[0].dist.mean()[i] - want).abs() < 1e-10);
    }
}

#[test]
fn estimation_is_permutation_equivariant() {
    let bank = EstimatorBank::new(3, &small_cfg(), 5).unwrap();
    let data = classes(4, 4, 3, 3);
    let est = bank.estimate_seen(&data).unwrap();
    let order = [2, 0, 3, 1];
    let permuted: Vec<_> = order.iter().map(|&i| data[i].clone()).collect();
    let est_p = bank.estimate_seen(&permuted).unwrap();
    assert!((est.curvature().value() - est_p.curvature().value()).abs() < 1e-12);
    for (slot, &i) in order.iter().enumerate() {
        assert_eq!(est_p.classes()[slot].label, est.classes()[i].label);
        assert_dist_close(&est_p.classes()[slot].dist, &est.classes()[i].dist, 1e-10);
    }
}

#[test]
fn estimation_rejects_bad_input() {
    let bank = EstimatorBank::new(3, &small_cfg(), 5).unwrap();
    let empty = vec![("a".to_string(), vec![])];
    assert!(matches!(bank.estimate_seen(&empty), Err(Error::EmptyClass(_))));
    let wrong = classes(1, 2, 2, 2);
    assert!(matches!(bank.estimate_seen(&wrong), Err(Error::DimensionMismatch { .. })));
    let one = bank.estimate_seen(&classes(1, 1, 2, 3)).unwrap();
    assert!(matches!(bank.synthesize_unseen(&one), Err(Error::TooFewClasses { .. })));
}

#[test]
fn synthesis_count_law() {
    let bank = EstimatorBank::new(2, &BankConfig { hidden: 4, steps: 2, ..BankConfig::default() }, 9).unwrap();
    for n in 2..=12 {
        let seen = bank.estimate_seen(&classes(n as u64, n, 2, 2)).unwrap();
        let unseen = bank.synthesize_unseen(&seen).unwrap();
        assert_eq!(unseen.len(), n * (n - 1) / 2);
        assert!(unseen.classes().iter().all(|c| c.provenance == Provenance::Unseen));
        assert_eq!(unseen.curvature(), seen.curvature());
    }
    let seen = bank.estimate_seen(&classes(4, 4, 2, 2)).unwrap();
    let unseen = bank.synthesize_unseen(&seen).unwrap();
    let labels: Vec<&str> = unseen.labels().collect();
    assert_eq!(labels[0], "class0+class1");
    assert_eq!(labels[5], "class2+class3");
}

#[test]
fn zero_perturbation_lands_on_partner_class() {
    let mut bank = EstimatorBank::new(3, &small_cfg(), 2).unwrap();
    bank.zero_outputs();
    let seen = bank.estimate_seen(&classes(6, 3, 4, 3)).unwrap();
    let unseen = bank.synthesize_unseen(&seen).unwrap();
    let pairs = [(0, 1), (0, 2), (1, 2)];
    for (cd, &(_, j)) in unseen.classes().iter().zip(&pairs) {
        assert_dist_close(&cd.dist, &seen.classes()[j].dist, 1e-12);
    }
}

#[test]
fn constant_mean_shift_integrates_exactly() {
    let mut bank = EstimatorBank::new(2, &small_cfg(), 2).unwrap();
    bank.zero_outputs();
    let g = [0.05, 0.1];
    bank.network_mut(FlowKind::MeanShift).set_constant_output(&g).unwrap();
    let seen = bank.estimate_seen(&classes(7, 2, 3, 2)).unwrap();
    let unseen = bank.synthesize_unseen(&seen).unwrap();
    let (mi, mj) = (seen.classes()[0].dist.mean(), seen.classes()[1].dist.mean());
    for i in 0..2 {
        let want = mi[i] + (mj[i] - mi[i]) + bank.horizon() * g[i];
        assert!((unseen.classes()[0].dist.mean()[i] - want).abs() < 1e-10);
    }
}

#[test]
fn curvature_is_shared_and_clamped() {
    let mut bank = EstimatorBank::new(2, &small_cfg(), 3).unwrap();
    bank.zero_outputs();
    bank.network_mut(FlowKind::Curvature).set_constant_output(&[50.0]).unwrap();
    let dual = bank.estimate_dual(&classes(8, 3, 2, 2)).unwrap();
    assert_eq!(dual.curvature().value(), CURVATURE_RANGE.1);
    assert_eq!(dual.len(), 6);
    bank.network_mut(FlowKind::Curvature).set_constant_output(&[-50.0]).unwrap();
    let dual = bank.estimate_dual(&classes(8, 3, 2, 2)).unwrap();
    assert_eq!(dual.curvature().value(), CURVATURE_RANGE.0);
    assert!(dual.classes().iter().all(|c| c.dist.curvature() == dual.curvature()));
}

#[test]
fn call_counter_tracks_binds() {
    let bank = EstimatorBank::new(2, &small_cfg(), 3).unwrap();
    assert_eq!(bank.calls(), 0);
    let seen = bank.estimate_seen(&classes(8, 2, 2, 2)).unwrap();
    bank.synthesize_unseen(&seen).unwrap();
    assert_eq!(bank.calls(), 2);
    let input = EstimationInput::new(&classes(8, 2, 2, 2), bank.c0()).unwrap();
    input.initial_distributions().unwrap();
    assert_eq!(bank.calls(), 2);
}

#[test]
fn from_parts_validates_shapes() {
    let bank = EstimatorBank::new(2, &small_cfg(), 3).unwrap();
    let nets = bank.networks().to_vec();
    assert!(EstimatorBank::from_parts(nets.clone(), 3, 1.0, 10, -1.0).is_err());
    assert!(EstimatorBank::from_parts(nets[..5].to_vec(), 2, 1.0, 10, -1.0).is_err());
    assert!(EstimatorBank::from_parts(nets.clone(), 2, 1.0, 10, 0.5).is_err());
    let back = EstimatorBank::from_parts(nets, 2, 1.0, 10, -1.0).unwrap();
    assert_eq!(back, bank);
}

#[test]
fn outputs_are_differentiable_in_network_weights() {
    let bank = EstimatorBank::new(2, &BankConfig { hidden: 4, steps: 3, ..BankConfig::default() }, 11).unwrap();
    let data = classes(12, 3, 3, 2);
    let input = EstimationInput::new(&data, bank.c0()).unwrap();
    let objective = |bank: &EstimatorBank, grad: bool| -> (f64, Vec<Tensor>) {
        let g = Graph::new();
        let bound = bank.bind(&g);
        let seen = bound.estimate_seen(&input).unwrap();
        let unseen = bound.synthesize_unseen(&seen).unwrap();
        let all = seen.concat(&unseen);
        let loss = (all.anchors().square().sum()
            + all.scales.square().sum().scale(0.3)
            + all.k.c.scale(0.7)
            + ggraph::distance_to_origin(all.protos, all.k).sum())
        .sum();
        let value = loss.scalar().unwrap();
        if !grad {
            return (value, Vec::new());
        }
        let grads = g.backward(loss).unwrap();
        (value, bound.params().iter().map(|p| grads.get(*p)).collect())
    };
    let (_, grads) = objective(&bank, true);
    let h = 1e-5;
    let mut checked = 0;
    let n_params = bank.params().len();
    for pi in 0..n_params {
        let len = bank.params()[pi].len();
        for e in [0, len / 2, len - 1] {
            let mut plus = bank.clone();
            plus.params_mut()[pi].data_mut()[e] += h;
            let mut minus = bank.clone();
            minus.params_mut()[pi].data_mut()[e] -= h;
            let fd = (objective(&plus, false).0 - objective(&minus, false).0) / (2.0 * h);
            let an = grads[pi].data()[e];
            assert!((fd - an).abs() <= 1e-8 + 1e-4 * fd.abs(), "param {pi}[{e}]: {an} vs {fd}");
            checked += 1;
        }
    }
    assert!(checked >= 20);
}
