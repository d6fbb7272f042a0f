//! Randomized identity suites shared by the CLI and the tests.

use crate::diff::{Activation, BoundAttention, BoundDense, Graph, Tensor, Var};
use crate::error::Result;
use crate::estimator::{ClassDistribution, ClassDistributions, Provenance};
use crate::geometry::graph::{self as ggraph, CurvatureVar};
use crate::geometry::{raw, BallPoint, Curvature};
use crate::losses::graph as lgraph;
use crate::losses::HyperbolicClassifier;
use crate::math;
use crate::rng::{self, ChaCha8Rng};
use crate::wrapped_normal::{sample_graph, unpack_lower, WrappedNormal};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;

/// A classifier and matching distributions in the small-scale regime where
/// the closed-form bound dominates the expected cross-entropy.
#[derive(Clone, Debug)]
pub struct BoundInstance {
    pub classifier: HyperbolicClassifier,
    pub dists: ClassDistributions,
}

fn vector_in_ball(r: &mut ChaCha8Rng, d: usize, radius: f64) -> Vec<f64> {
    let v = rng::standard_normal(r, d);
    let n = math::norm(&v);
    let s = r.random_range(0.0..radius) / n;
    v.into_iter().map(|x| x * s).collect()
}

/// Draw one instance: `d` and class count in `2..=4`, `|c|` in `[0.05, 1)`,
/// `||p_hat||, ||mu|| <= 0.1`, scale entries of order `0.02`, and each weight
/// within `0.01` of `expm_0(p_hat_j + mu_j)`. Draws whose weights are not
/// nearest to their own class centre are rejected.
pub fn bound_instance(r: &mut ChaCha8Rng) -> Result<BoundInstance> {
    loop {
        let d = r.random_range(2..=4usize);
        let n = r.random_range(2..=4usize);
        let c = Curvature::new(-r.random_range(0.05..1.0))?;
        let mut classes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut centres = Vec::with_capacity(n);
        for j in 0..n {
            let p_hat = vector_in_ball(r, d, 0.1);
            let mu = vector_in_ball(r, d, 0.1);
            let packed: Vec<f64> = rng::standard_normal(r, d * (d + 1) / 2)
                .into_iter()
                .map(|v| v * 0.02)
                .collect();
            let p = BallPoint::new(raw::expm0(&p_hat, c.value()), c)?;
            let dist = WrappedNormal::with_floor(p, mu.clone(), unpack_lower(&packed, d))?;
            let a: Vec<f64> = p_hat.iter().zip(&mu).map(|(x, y)| x + y).collect();
            let centre = raw::expm0(&a, c.value());
            let jitter = vector_in_ball(r, d, 0.01);
            let w: Vec<f64> = centre.iter().zip(&jitter).map(|(x, y)| x + y).collect();
            weights.push(BallPoint::new(w, c)?);
            centres.push(centre);
            classes.push(ClassDistribution {
                label: format!("c{j}"),
                dist,
                provenance: Provenance::Seen,
            });
        }
        let nearest_own = centres.iter().enumerate().all(|(j, centre)| {
            let own = raw::distance(centre, weights[j].coords(), c.value());
            weights
                .iter()
                .all(|w| raw::distance(centre, w.coords(), c.value()) >= own)
        });
        if !nearest_own {
            continue;
        }
        let labels: Vec<String> = classes.iter().map(|c| c.label.clone()).collect();
        return Ok(BoundInstance {
            classifier: HyperbolicClassifier::new(labels, weights)?,
            dists: ClassDistributions::new(c, classes)?,
        });
    }
}

/// Outcome of one suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub failures: usize,
    pub detail: String,
}

impl SuiteReport {
    fn new(name: &'static str, checks: usize, failures: usize, detail: String) -> Self {
        Self {
            name,
            passed: failures == 0 && checks > 0,
            checks,
            failures,
            detail,
        }
    }
}

/// Ball operations with an adjustable projection margin, so the suite can be
/// pointed at a misconfigured ball.
struct MarginBall {
    c: f64,
    margin: f64,
}

impl MarginBall {
    fn project(&self, x: &[f64]) -> Vec<f64> {
        raw::project_with_margin(x, self.c, self.margin)
    }

    fn add(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.project(&raw::mobius_add_unprojected(x, y, self.c))
    }

    fn expm(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let c = self.c;
        let lambda = raw::conformal_factor(x, c);
        let f = lambda / 2.0 * math::tanh_ratio(raw::sqrt_abs(c) * lambda * math::norm(u) / 2.0);
        let step = self.project(&u.iter().map(|v| v * f).collect::<Vec<_>>());
        self.add(x, &step)
    }

    fn logm(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let c = self.c;
        let w = self.add(&raw::neg(x), y);
        let f = 2.0 / raw::conformal_factor(x, c) * math::atanh_ratio(raw::sqrt_abs(c) * math::norm(&w));
        w.iter().map(|v| v * f).collect()
    }

    fn inside(&self, x: &[f64]) -> bool {
        math::norm(x) <= raw::max_norm(self.c, self.margin) * (1.0 + 1e-15)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Curvatures exercised by the geometry suite.
pub const SUITE_CURVATURES: [f64; 3] = [-0.1, -0.3, -1.0];

/// `checks` randomized identities split evenly across left cancellation,
/// exp/log inversion (both directions), the two distance formulas and ball
/// containment, cycling through [`SUITE_CURVATURES`]. `ball_eps` is the
/// projection margin under test (normally [`crate::geometry::BALL_EPS`]).
pub fn geometry_suite(checks: usize, seed: u64, ball_eps: f64) -> SuiteReport {
    let mut r = rng::seeded(seed);
    let mut failures = 0;
    let mut done = 0;
    let mut first = String::new();
    let fail = |what: &str, c: f64, err: f64, first: &mut String| {
        if first.is_empty() {
            *first = format!("first failure: {what} at c={c} (error {err:e})");
        }
    };
    let mut i = 0usize;
    while done < checks {
        let c = SUITE_CURVATURES[i % 3];
        i += 1;
        let ball = MarginBall { c, margin: ball_eps };
        let radius = 1.0 / raw::sqrt_abs(c);
        let d = r.random_range(2..=6usize);
        let x = vector_in_ball(&mut r, d, 0.7 * radius);
        let y = vector_in_ball(&mut r, d, 0.7 * radius);
        let scale = radius.max(1.0);

        let back = ball.add(&raw::neg(&x), &ball.add(&x, &y));
        let err = max_abs_diff(&back, &y);
        if !(err <= 1e-9 * scale) {
            failures += 1;
            fail("left cancellation", c, err, &mut first);
        }

        let round = ball.expm(&x, &ball.logm(&x, &y));
        let u = vector_in_ball(&mut r, d, 1.0);
        let back_u = ball.logm(&x, &ball.expm(&x, &u));
        let err = max_abs_diff(&round, &y).max(max_abs_diff(&back_u, &u));
        if !(err <= 1e-7 * scale) {
            failures += 1;
            fail("exp/log inversion", c, err, &mut first);
        }

        let a = raw::distance(&x, &y, c);
        let b = raw::distance_via_mobius(&x, &y, c);
        let err = (a - b).abs();
        if !(err <= 1e-9 * a.max(1.0)) {
            failures += 1;
            fail("distance forms", c, err, &mut first);
        }

        let far: Vec<f64> = rng::standard_normal(&mut r, d).iter().map(|v| v * 10.0 * radius).collect();
        let outs = [ball.add(&x, &y), ball.expm(&x, &far), ball.project(&far), ball.add(&far, &y)];
        if !outs.iter().all(|o| ball.inside(o) && o.iter().all(|v| v.is_finite())) {
            failures += 1;
            fail("containment", c, f64::NAN, &mut first);
        }
        done += 4;
    }
    let detail = if failures == 0 {
        format!("{done} identities at c in {SUITE_CURVATURES:?}")
    } else {
        first
    };
    SuiteReport::new("geometry", done, failures, detail)
}

/// Error ratios of RK4 on `dy/dt = y` over `[0, 1]` as the step count
/// doubles from 10 to 160.
pub fn rk4_error_ratios() -> Result<Vec<f64>> {
    let exact = math::exp(1.0);
    let mut errors = Vec::new();
    for steps in [10usize, 20, 40, 80, 160] {
        let y = crate::diff::rk4_solve(&crate::diff::Tensor::scalar(1.0), |s, _| Ok(s.clone()), 1.0, steps)?;
        errors.push((y.data()[0] - exact).abs());
    }
    Ok(errors.windows(2).map(|w| w[0] / w[1]).collect())
}

/// Every halving must cut the error by at least 12.
pub fn rk4_suite() -> SuiteReport {
    match rk4_error_ratios() {
        Ok(ratios) => {
            let failures = ratios.iter().filter(|&&q| !(q >= 12.0)).count();
            SuiteReport::new("rk4", ratios.len(), failures, format!("error ratios {ratios:.2?}"))
        }
        Err(e) => SuiteReport::new("rk4", 1, 1, format!("{e}")),
    }
}

/// Dominance of the closed-form bound over the Monte-Carlo expected loss
/// (`draws` per instance) at 3 standard errors on `trials` random instances,
/// passing when at most 1.5% of instances fall short.
pub fn bound_suite(trials: usize, draws: usize, seed: u64) -> SuiteReport {
    let mut r = rng::seeded(seed);
    let mut short = 0;
    let mut worst = f64::INFINITY;
    for t in 0..trials {
        let outcome = bound_instance(&mut r).and_then(|inst| {
            let ub = crate::losses::upper_bound_loss(&inst.classifier, &inst.dists)?;
            let mc = crate::losses::mc_infinite_loss_estimate(&inst.classifier, &inst.dists, draws, rng::mix(seed, t as u64))?;
            Ok((ub - mc.mean) / mc.std_error.max(f64::MIN_POSITIVE))
        });
        match outcome {
            Ok(z) => {
                worst = worst.min(z);
                if !(z >= -3.0) {
                    short += 1;
                }
            }
            Err(_) => short += 1,
        }
    }
    let allowed = trials * 3 / 200;
    let passed = short <= allowed;
    let mut rep = SuiteReport::new(
        "bound",
        trials,
        if passed { 0 } else { short },
        format!("{}/{} dominated at 3 sigma (worst z {worst:.2})", trials - short, trials),
    );
    rep.passed = passed && trials > 0;
    rep
}

type TapeFn = for<'g> fn(&'g Graph, &[Var<'g>]) -> Var<'g>;

/// One differentiable operation with a generator for valid inputs.
struct GradCase {
    name: &'static str,
    inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>,
    f: TapeFn,
}

fn gauss(r: &mut ChaCha8Rng, rows: usize, cols: usize, s: f64) -> Tensor {
    let data = rng::standard_normal(r, rows * cols).into_iter().map(|v| v * s).collect();
    Tensor::from_parts(rows, cols, data)
}

fn away_from_zero(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    gauss(r, rows, cols, 1.0).map(|v| v + 0.2 * v.signum())
}

fn curv(r: &mut ChaCha8Rng) -> Tensor {
    Tensor::scalar(-r.random_range(0.2..1.5))
}

/// `rows x d` points of the ball of curvature `c` within `frac` of its radius.
fn ball_rows(r: &mut ChaCha8Rng, rows: usize, d: usize, c: f64, frac: f64) -> Tensor {
    let radius = frac / raw::sqrt_abs(c);
    let data = (0..rows).flat_map(|_| vector_in_ball(r, d, radius)).collect();
    Tensor::from_parts(rows, d, data)
}

fn ckx(r: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<Tensor> {
    let c = curv(r);
    let d = r.random_range(2..=4usize);
    let x = ball_rows(r, n, d, c.data()[0], 0.7);
    let y = ball_rows(r, m, d, c.data()[0], 0.7);
    alloc::vec![c, x, y]
}

fn kv<'g>(v: &[Var<'g>]) -> CurvatureVar<'g> {
    CurvatureVar::new(v[0])
}

fn lower_tensor(r: &mut ChaCha8Rng, d: usize, s: f64) -> Tensor {
    let packed = rng::standard_normal(r, d * (d + 1) / 2).into_iter().map(|v| v * s).collect::<Vec<_>>();
    unpack_lower(&packed, d)
}

fn bound_inputs(r: &mut ChaCha8Rng) -> Vec<Tensor> {
    let n = r.random_range(2..=4usize);
    let d = r.random_range(2..=3usize);
    let mut out = alloc::vec![gauss(r, n, d, 0.3), gauss(r, n, d, 0.3)];
    out.extend((0..n).map(|_| lower_tensor(r, d, 0.3)));
    out
}

fn grad_cases() -> Vec<GradCase> {
    fn c(name: &'static str, inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>, f: TapeFn) -> GradCase {
        GradCase { name, inputs, f }
    }
    let one = |r: &mut ChaCha8Rng| alloc::vec![gauss(r, 3, 2, 1.0)];
    let two = |r: &mut ChaCha8Rng| alloc::vec![gauss(r, 3, 2, 1.0), gauss(r, 3, 2, 1.0)];
    let pos = |r: &mut ChaCha8Rng| alloc::vec![gauss(r, 3, 2, 1.0).map(|v| 0.3 + v.abs())];
    let unit = |r: &mut ChaCha8Rng| alloc::vec![gauss(r, 3, 2, 1.0).map(|v| 0.9 * math::tanh(v))];
    let apart = |r: &mut ChaCha8Rng| alloc::vec![away_from_zero(r, 3, 2)];
    alloc::vec![
        c("tanh", one, |_, v| v[0].tanh()),
        c("exp", one, |_, v| v[0].exp()),
        c("ln", pos, |_, v| v[0].ln()),
        c("sqrt", pos, |_, v| v[0].sqrt()),
        c("square", one, |_, v| v[0].square()),
        c("recip", apart, |_, v| v[0].recip()),
        c("atanh", unit, |_, v| v[0].atanh()),
        c("acosh", pos, |_, v| v[0].offset(1.0).acosh_clamped()),
        c("tanh_ratio", one, |_, v| v[0].tanh_ratio()),
        c("atanh_ratio", unit, |_, v| v[0].atanh_ratio()),
        c("relu", apart, |_, v| v[0].relu()),
        c("maximum", |r| alloc::vec![gauss(r, 3, 2, 1.0), away_from_zero(r, 3, 2)], |_, v| {
            v[0].maximum(v[0] + v[1])
        }),
        c("add_broadcast", |r| alloc::vec![gauss(r, 3, 2, 1.0), gauss(r, 1, 2, 1.0)], |_, v| v[0] + v[1]),
        c("sub_broadcast", |r| alloc::vec![gauss(r, 3, 2, 1.0), gauss(r, 3, 1, 1.0)], |_, v| v[0] - v[1]),
        c("mul", two, |_, v| v[0] * v[1]),
        c("div", |r| alloc::vec![gauss(r, 3, 2, 1.0), away_from_zero(r, 3, 1)], |_, v| v[0] / v[1]),
        c("matmul", |r| alloc::vec![gauss(r, 3, 4, 1.0), gauss(r, 4, 2, 1.0)], |_, v| v[0].matmul(v[1])),
        c("matmul_t", two, |_, v| v[0].matmul_t(v[1])),
        c("transpose_reshape", one, |_, v| v[0].transpose().reshape(1, 6)),
        c("select_rows", one, |_, v| v[0].select_rows(&[2, 0, 2])),
        c("gather", one, |_, v| v[0].gather(2, 2, alloc::vec![Some(5), None, Some(0), Some(5)])),
        c("slice_pick", one, |_, v| v[0].slice_cols(1, 1) + v[0].pick_per_row(&[1, 0, 1])),
        c("concat", two, |g, v| g.concat_rows(&[v[0], v[1]]) * g.concat_cols(&[v[1], v[0]]).reshape(6, 2)),
        c("reductions", one, |g, v| {
            g.concat_rows(&[v[0].row_sums().transpose().sum(), v[0].mean(), v[0].col_sums().sum()])
        }),
        c("logsumexp_softmax", one, |_, v| v[0].softmax_rows() + v[0].logsumexp_rows()),
        c("row_norms", apart, |_, v| v[0].row_norm() + v[0].row_norm_sq() + v[0].row_dot(v[0].tanh())),
        c("mobius_add", |r| ckx(r, 3, 1), |_, v| ggraph::mobius_add(v[1], v[2], kv(v))),
        c("conformal_factor", |r| ckx(r, 3, 1), |_, v| ggraph::conformal_factor(v[1], kv(v))),
        c("distance", |r| ckx(r, 3, 3), |_, v| ggraph::distance(v[1], v[2], kv(v))),
        c("pairwise_distance", |r| ckx(r, 3, 2), |_, v| ggraph::pairwise_distance(v[1], v[2], kv(v))),
        c("distance_to_origin", |r| ckx(r, 3, 1), |_, v| ggraph::distance_to_origin(v[1], kv(v))),
        c("expm0", |r| alloc::vec![curv(r), gauss(r, 3, 3, 0.5)], |_, v| ggraph::expm0(v[1], kv(v))),
        c("logm0", |r| ckx(r, 3, 1), |_, v| ggraph::logm0(v[1], kv(v))),
        c("expm", |r| {
            let mut v = ckx(r, 3, 1);
            v[2] = gauss(r, 3, v[1].cols(), 0.5);
            v
        }, |_, v| ggraph::expm(v[1], v[2], kv(v))),
        c("logm", |r| ckx(r, 3, 3), |_, v| ggraph::logm(v[1], v[2], kv(v))),
        c("transport", |r| {
            let mut v = ckx(r, 3, 1);
            v[2] = gauss(r, 3, v[1].cols(), 1.0);
            v
        }, |_, v| ggraph::transport_from_origin(v[1], v[2], kv(v)) + ggraph::transport_to_origin(v[1], v[2], kv(v))),
        c("project_outside", |r| {
            let c = curv(r);
            let x = gauss(r, 3, 3, 1.0);
            let s = 2.0 / raw::sqrt_abs(c.data()[0]);
            let x = Tensor::from_parts(3, 3, (0..3).flat_map(|i| {
                let row = x.row_slice(i);
                let n = math::norm(row);
                row.iter().map(move |v| v * s / n).collect::<Vec<_>>()
            }).collect());
            alloc::vec![c, x]
        }, |_, v| ggraph::project(v[1], kv(v))),
        c("sample_graph", |r| {
            let c = curv(r);
            let d = r.random_range(2..=3usize);
            let p = ball_rows(r, 1, d, c.data()[0], 0.6);
            alloc::vec![c, p, gauss(r, 1, d, 0.3), lower_tensor(r, d, 0.3)]
        }, |_, v| {
            let eps = Tensor::from_parts(4, v[1].cols(), (0..4 * v[1].cols()).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.4).collect());
            sample_graph(v[1], v[2], v[3], &eps, kv(v))
        }),
        c("logits_cross_entropy", |r| ckx(r, 4, 3), |_, v| {
            let l = lgraph::logits(v[1], v[2], kv(v));
            l + lgraph::cross_entropy(l, &[0, 2, 1, 1])
        }),
        c("upper_bound", bound_inputs, |_, v| {
            lgraph::upper_bound(v[0], v[1], &v[2..]).loss
        }),
        c("upper_bound_gradient", bound_inputs, |_, v| {
            lgraph::upper_bound(v[0], v[1], &v[2..]).gradient
        }),
        c("hierarchy", |r| (0..3).map(|k| gauss(r, 3, 2, 1.0).map(|v| 0.3 + 0.2 * k as f64 + v.abs())).collect(), |_, v| {
            lgraph::hierarchy(v[0].reshape(6, 1), v[1].reshape(6, 1), v[2].reshape(6, 1), 0.1)
        }),
        c("rk4", |r| alloc::vec![gauss(r, 2, 3, 1.0), gauss(r, 3, 3, 0.5)], |_, v| {
            let a = v[1];
            crate::diff::rk4_solve_graph(v[0], |s, t| (s.matmul(a) + t).tanh(), 1.0, 4).expect("finite")
        }),
        c("dense", |r| alloc::vec![gauss(r, 3, 4, 1.0), gauss(r, 2, 4, 0.5), gauss(r, 1, 2, 0.5)], |_, v| {
            BoundDense { weight: v[1], bias: v[2], activation: Activation::Tanh }.forward(v[0])
        }),
        c("attention", |r| {
            let mut out = alloc::vec![gauss(r, 3, 2, 1.0)];
            for _ in 0..3 {
                out.push(gauss(r, 2, 2, 0.7));
                out.push(gauss(r, 1, 2, 0.3));
            }
            out
        }, |_, v| {
            let p = |i: usize| BoundDense { weight: v[i], bias: v[i + 1], activation: Activation::Identity };
            BoundAttention { query: p(1), key: p(3), value: p(5) }.forward(v[0])
        }),
        c("riemannian_step", |r| {
            let mut v = ckx(r, 3, 1);
            v[2] = gauss(r, 3, v[1].cols(), 0.5);
            v
        }, |_, v| crate::trainer::riemannian_step_graph(v[1], v[2], kv(v), 0.3)),
    ]
}

/// Projection of an output onto fixed random directions.
fn contract(f: TapeFn, inputs: &[Tensor], dir: Option<&Tensor>) -> (f64, Vec<Tensor>, Tensor) {
    let g = Graph::new();
    let leaves: Vec<Var<'_>> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&g, &leaves);
    let dir = dir.cloned().unwrap_or_else(|| {
        let n = out.rows() * out.cols();
        Tensor::from_parts(out.rows(), out.cols(), (0..n).map(|i| 1.0 - 0.37 * i as f64 % 1.3).collect())
    });
    let obj = (out * g.constant(dir.clone())).sum();
    let value = obj.value().data()[0];
    let grads = g.backward(obj).map(|gr| leaves.iter().map(|l| gr.get(*l)).collect()).unwrap_or_default();
    (value, grads, dir)
}

/// Worst `|analytic - fd| / (rel * max(|analytic|, |fd|) + abs)` over all
/// input entries of one instance.
fn fd_excess(f: TapeFn, inputs: &[Tensor], rel: f64, abs: f64) -> f64 {
    let (_, grads, dir) = contract(f, inputs, None);
    if grads.len() != inputs.len() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for (k, t) in inputs.iter().enumerate() {
        for i in 0..t.len() {
            let h = 1e-6 * t.data()[i].abs().max(1.0);
            let shifted = |delta: f64| {
                let mut moved = inputs.to_vec();
                moved[k].data_mut()[i] += delta;
                contract(f, &moved, Some(&dir)).0
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let an = grads[k].data()[i];
            let e = (an - fd).abs() / (rel * an.abs().max(fd.abs()) + abs);
            worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
        }
    }
    worst
}

/// Names of the operations covered by [`gradient_suite`].
pub fn gradient_case_names() -> Vec<&'static str> {
    grad_cases().iter().map(|c| c.name).collect()
}

/// Tape gradients against central finite differences on `instances` random
/// inputs per operation: relative tolerance `1e-4`, absolute floor `1e-8`.
/// The closed-form bound gradient is also compared with the tape gradient of
/// the bound.
pub fn gradient_suite(instances: usize, seed: u64) -> SuiteReport {
    let mut r = rng::seeded(seed);
    let mut checks = 0;
    let mut failed: Vec<(&str, f64)> = Vec::new();
    for case in grad_cases() {
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let inputs = (case.inputs)(&mut r);
            worst = worst.max(fd_excess(case.f, &inputs, 1e-4, 1e-8));
            checks += 1;
        }
        if !(worst <= 1.0) {
            failed.push((case.name, worst));
        }
    }
    let mut worst_gap: f64 = 0.0;
    for _ in 0..instances {
        let inputs = bound_inputs(&mut r);
        let g = Graph::new();
        let leaves: Vec<Var<'_>> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let b = lgraph::upper_bound(leaves[0], leaves[1], &leaves[2..]);
        let Ok(tape) = g.backward(b.loss) else {
            worst_gap = f64::INFINITY;
            continue;
        };
        let tape = tape.get(leaves[0]);
        let closed = b.gradient.value();
        for (x, y) in tape.data().iter().zip(closed.data()) {
            let e = (x - y).abs() / (1e-4 * x.abs().max(y.abs()) + 1e-8);
            worst_gap = if e.is_nan() { f64::INFINITY } else { worst_gap.max(e) };
        }
        checks += 1;
    }
    if !(worst_gap <= 1.0) {
        failed.push(("closed_form_bound_gradient", worst_gap));
    }
    let detail = if failed.is_empty() {
        format!("{} operations x {instances} instances", grad_cases().len() + 1)
    } else {
        format!("failing: {failed:?}")
    };
    SuiteReport::new("gradient", checks, failed.len(), detail)
}
