//! Randomized finite-difference checks of every differentiable primitive,
//! plus second-order checks on the ops the gradient penalty runs through.

use std::time::Instant;

use gradcore::gradcheck::{check_gradients, check_second_order};
use gradcore::ops::{elementwise, Elementwise};
use gradcore::{GradError, Padding, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kspace::{derive_seed, rss};
use crate::models::{adversary_forward, init_adversary, AdversaryConfig, PoolChoice};
use crate::training::ssim;

pub const FD_STEP: f64 = 1e-4;
/// Step for whole-network checks. A random network has many ReLU and max-pool
/// switching points, and a 1e-4 stencil lands across one often enough to
/// break the oracle.
pub const NETWORK_FD_STEP: f64 = 1e-6;
pub const FIRST_ORDER_TOL: f64 = 1e-4;
pub const SECOND_ORDER_TOL: f64 = 1e-3;

type Objective = Box<dyn Fn(&[Tensor<f64>]) -> gradcore::Result<Tensor<f64>>>;

/// One randomized instance of a check.
pub struct Instance {
    pub f: Objective,
    pub inputs: Vec<Tensor<f64>>,
}

pub struct Check {
    pub name: &'static str,
    pub second_order: bool,
    pub step: f64,
    pub build: fn(&mut ChaCha8Rng) -> Instance,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub second_order: bool,
    pub max_error: f64,
    pub tolerance: f64,
    pub seeds: usize,
    pub failure: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.max_error < self.tolerance
    }
}

pub struct SuiteReport {
    pub results: Vec<CheckResult>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(CheckResult::passed)
    }

    pub fn worst(&self, second_order: bool) -> f64 {
        self.results
            .iter()
            .filter(|r| r.second_order == second_order)
            .map(|r| r.max_error)
            .fold(0.0, f64::max)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            s.push_str(&format!(
                "{:<6} {:<2} {:<24} max rel err {:.3e} (tol {:.0e}, {} seeds){}\n",
                if r.passed() { "ok" } else { "FAIL" },
                if r.second_order { "2" } else { "1" },
                r.name,
                r.max_error,
                r.tolerance,
                r.seeds,
                r.failure.as_deref().map(|f| format!(" error: {f}")).unwrap_or_default()
            ));
        }
        s
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(v, shape).unwrap()
}

fn normalish(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    uniform(rng, shape, -1.0, 1.0)
}

/// Values in `[-1, -m] U [m, 1]`, keeping kinks out of the difference stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], m: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let v = (0..n)
        .map(|_| {
            let a = rng.random_range(m..1.0);
            if rng.random::<bool>() {
                a
            } else {
                -a
            }
        })
        .collect();
    Tensor::from_vec(v, shape).unwrap()
}

/// A random permutation of well-separated values, so every pooling window
/// has a unique maximum.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        v.swap(i, j);
    }
    Tensor::from_vec(v, shape).unwrap()
}

fn complex(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = 2 * shape.iter().product::<usize>();
    let v = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_interleaved(v, shape).unwrap()
}

fn dims(rng: &mut ChaCha8Rng, rank: usize, lo: usize, hi: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.random_range(lo..=hi)).collect()
}

fn pow2(rng: &mut ChaCha8Rng) -> usize {
    1 << rng.random_range(1..=3)
}

/// Weighted sum with fixed random weights; complex outputs are probed through
/// the real part of a product with a fixed complex weight.
fn probe(y: &Tensor<f64>, w: &Tensor<f64>) -> gradcore::Result<Tensor<f64>> {
    if y.is_complex() {
        y.mul(w)?.re()?.sum()
    } else {
        y.mul(w)?.sum()
    }
}

fn weights_for(rng: &mut ChaCha8Rng, y: &Tensor<f64>) -> Tensor<f64> {
    if y.is_complex() {
        complex(rng, y.shape())
    } else {
        normalish(rng, y.shape())
    }
}

/// Wraps a unary op `g` into a probed objective on one input.
fn unary(
    rng: &mut ChaCha8Rng,
    x: Tensor<f64>,
    g: impl Fn(&Tensor<f64>) -> gradcore::Result<Tensor<f64>> + 'static,
) -> Instance {
    let y = g(&x).expect("op applies to its generated input");
    let w = weights_for(rng, &y);
    Instance {
        f: Box::new(move |t| probe(&g(&t[0])?, &w)),
        inputs: vec![x],
    }
}

fn binary(
    rng: &mut ChaCha8Rng,
    a: Tensor<f64>,
    b: Tensor<f64>,
    g: impl Fn(&Tensor<f64>, &Tensor<f64>) -> gradcore::Result<Tensor<f64>> + 'static,
) -> Instance {
    let y = g(&a, &b).expect("op applies to its generated inputs");
    let w = weights_for(rng, &y);
    Instance {
        f: Box::new(move |t| probe(&g(&t[0], &t[1])?, &w)),
        inputs: vec![a, b],
    }
}

/// `sum(w * sigmoid(op(x)))`: nonlinear on top of any op, so second
/// derivatives are nontrivial even for linear primitives.
fn curved(
    rng: &mut ChaCha8Rng,
    inputs: Vec<Tensor<f64>>,
    g: impl Fn(&[Tensor<f64>]) -> gradcore::Result<Tensor<f64>> + 'static,
) -> Instance {
    let y = g(&inputs).expect("op applies to its generated inputs");
    let w = normalish(rng, y.shape());
    Instance {
        f: Box::new(move |t| g(t)?.sigmoid()?.mul(&w)?.sum()),
        inputs,
    }
}

fn ew(kind: Elementwise) -> impl Fn(&Tensor<f64>) -> gradcore::Result<Tensor<f64>> {
    move |x| elementwise(kind, &[x])
}

fn ew2(kind: Elementwise) -> impl Fn(&Tensor<f64>, &Tensor<f64>) -> gradcore::Result<Tensor<f64>> {
    move |a, b| elementwise(kind, &[a, b])
}

/// Broadcast-compatible pair: `[a, b]` with `[b]`, `[a, 1]` or `[a, b]`.
fn broadcast_pair(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let s = dims(rng, 2, 1, 4);
    let other = match rng.random_range(0..3) {
        0 => vec![s[1]],
        1 => vec![s[0], 1],
        _ => s.clone(),
    };
    if rng.random::<bool>() {
        (s, other)
    } else {
        (other, s)
    }
}

fn lift(e: crate::Error) -> GradError {
    GradError::Invalid {
        op: "bandless",
        detail: e.to_string(),
    }
}

fn tiny_adversary(pool: PoolChoice) -> AdversaryConfig {
    AdversaryConfig {
        stem_channels: 4,
        block1_channels: 4,
        block2_channels: 6,
        groups: 2,
        pool_window: 2,
        pool,
    }
}

macro_rules! check {
    ($name:expr, $second:expr, $build:expr) => {
        check!($name, $second, FD_STEP, $build)
    };
    ($name:expr, $second:expr, $step:expr, $build:expr) => {
        Check {
            name: $name,
            second_order: $second,
            step: $step,
            build: $build,
        }
    };
}

/// All checks, first-order ones first.
pub fn checks() -> Vec<Check> {
    vec![
        check!("add", false, |r| {
            let (a, b) = broadcast_pair(r);
            let (a, b) = (normalish(r, &a), normalish(r, &b));
            binary(r, a, b, ew2(Elementwise::Add))
        }),
        check!("sub", false, |r| {
            let (a, b) = broadcast_pair(r);
            let (a, b) = (normalish(r, &a), normalish(r, &b));
            binary(r, a, b, ew2(Elementwise::Sub))
        }),
        check!("mul", false, |r| {
            let (a, b) = broadcast_pair(r);
            let (a, b) = (normalish(r, &a), normalish(r, &b));
            binary(r, a, b, ew2(Elementwise::Mul))
        }),
        check!("div", false, |r| {
            let (a, b) = broadcast_pair(r);
            let (a, b) = (normalish(r, &a), uniform(r, &b, 0.5, 2.0));
            binary(r, a, b, ew2(Elementwise::Div))
        }),
        check!("relu", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = away_from_zero(r, &shape, 0.01);
            unary(r, x, ew(Elementwise::Relu))
        }),
        check!("leaky_relu", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = away_from_zero(r, &shape, 0.01);
            unary(r, x, ew(Elementwise::LeakyRelu))
        }),
        check!("sigmoid", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = uniform(r, &shape, -4.0, 4.0);
            unary(r, x, ew(Elementwise::Sigmoid))
        }),
        check!("log", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = uniform(r, &shape, 0.5, 2.0);
            unary(r, x, ew(Elementwise::Log))
        }),
        check!("sqrt", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = uniform(r, &shape, 0.5, 2.0);
            unary(r, x, ew(Elementwise::Sqrt))
        }),
        check!("abs", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = away_from_zero(r, &shape, 0.01);
            unary(r, x, ew(Elementwise::Abs))
        }),
        check!("square", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = normalish(r, &shape);
            unary(r, x, ew(Elementwise::Square))
        }),
        check!("scale_add_scalar_neg", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = normalish(r, &shape);
            let c = r.random_range(-2.0..2.0);
            unary(r, x, move |x| x.scale(c)?.add_scalar(c)?.neg())
        }),
        check!("exp", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = normalish(r, &shape);
            unary(r, x, |x| x.exp())
        }),
        check!("softplus", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = uniform(r, &shape, -4.0, 4.0);
            unary(r, x, |x| x.softplus())
        }),
        check!("log_sigmoid", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = uniform(r, &shape, -4.0, 4.0);
            unary(r, x, |x| x.log_sigmoid())
        }),
        check!("sqrt_floored", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = uniform(r, &shape, 0.5, 2.0);
            unary(r, x, |x| x.sqrt_floored(1e-12))
        }),
        check!("clamp_min", false, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = away_from_zero(r, &shape, 0.01);
            unary(r, x, |x| x.clamp_min(0.0))
        }),
        check!("sum_mean", false, |r| {
            let shape = dims(r, 3, 1, 4);
            let x = normalish(r, &shape);
            unary(r, x, |x| x.sum()?.add(&x.mean()?.scale(3.0)?))
        }),
        check!("sum_axes_mean_axes", false, |r| {
            let shape = dims(r, 3, 1, 4);
            let x = normalish(r, &shape);
            let keep = r.random::<bool>();
            unary(r, x, move |x| {
                let a = x.sum_axes(&[0, 2], keep)?;
                let b = x.mean_axes(&[0, 2], keep)?;
                a.add(&b.scale(2.0)?)
            })
        }),
        check!("sum_to_broadcast_to", false, |r| {
            let s = dims(r, 2, 1, 4);
            let x = normalish(r, &[s[1]]);
            let big = vec![s[0], s[1]];
            unary(r, x, move |x| x.broadcast_to(&big)?.square()?.sum_to(&[1, big[1]]))
        }),
        check!("reshape_transpose", false, |r| {
            let s = dims(r, 3, 1, 4);
            let x = normalish(r, &s);
            unary(r, x, move |x| x.reshape(&[s[0] * s[1], s[2]])?.transpose_last2())
        }),
        check!("narrow_pad_concat", false, |r| {
            let s = dims(r, 2, 2, 5);
            let x = normalish(r, &s);
            unary(r, x, move |x| {
                let a = x.narrow(1, 1, s[1] - 1)?;
                let p = a.pad_axis(1, 0, s[1] + 1)?;
                Tensor::concat(&[&p, x], 1)
            })
        }),
        check!("roll_fftshift", false, |r| {
            let s = dims(r, 3, 1, 5);
            let x = complex(r, &s);
            let (dy, dx) = (r.random_range(-3i32..4) as isize, r.random_range(-3i32..4) as isize);
            unary(r, x, move |x| x.roll_last2(dy, dx)?.fftshift()?.ifftshift()?.fftshift())
        }),
        check!("complex_re_im", false, |r| {
            let s = dims(r, 2, 1, 4);
            let (a, b) = (normalish(r, &s), normalish(r, &s));
            binary(r, a, b, |a, b| {
                let z = Tensor::complex(a, b)?;
                z.re()?.mul(&z.im()?)?.add(&z.re()?)
            })
        }),
        check!("conj_abs2", false, |r| {
            let shape = dims(r, 2, 1, 4);
            let x = complex(r, &shape);
            unary(r, x, |x| x.conj()?.mul(x)?.re()?.add(&x.abs2()?))
        }),
        check!("mul_complex", false, |r| {
            let s = dims(r, 3, 1, 3);
            let (a, b) = (complex(r, &s), complex(r, &s[1..]));
            binary(r, a, b, |a, b| a.mul(b))
        }),
        check!("mul_complex_real", false, |r| {
            let s = dims(r, 3, 1, 3);
            let (a, b) = (complex(r, &s), normalish(r, &s[2..]));
            binary(r, a, b, |a, b| a.mul(b))
        }),
        check!("fft2_ifft2", false, |r| {
            let shape = vec![r.random_range(1..=2), pow2(r), pow2(r)];
            let x = complex(r, &shape);
            unary(r, x, |x| x.fft2()?.mul(x)?.ifft2())
        }),
        check!("fft2c_ifft2c", false, |r| {
            let shape = vec![pow2(r), pow2(r)];
            let x = complex(r, &shape);
            unary(r, x, |x| x.ifft2c()?.abs2()?.add(&x.fft2c()?.re()?))
        }),
        check!("conv2d_same", false, |r| {
            let (ci, co) = (r.random_range(1..=3), r.random_range(1..=3));
            let (h, w) = (r.random_range(3..=6), r.random_range(3..=7));
            let k = [1, 3, 5][r.random_range(0..3)];
            let x = normalish(r, &[ci, h, w]);
            let wt = normalish(r, &[co, ci, k, k]);
            let b = normalish(r, &[co]);
            let y = x.conv2d(&wt, Some(&b), Padding::Same).unwrap();
            let pw = normalish(r, y.shape());
            Instance {
                f: Box::new(move |t| probe(&t[0].conv2d(&t[1], Some(&t[2]), Padding::Same)?, &pw)),
                inputs: vec![x, wt, b],
            }
        }),
        check!("conv2d_valid", false, |r| {
            let (ci, co) = (r.random_range(1..=3), r.random_range(1..=3));
            let (kh, kw) = (r.random_range(1..=3), r.random_range(1..=3));
            let shape = vec![ci, kh + r.random_range(0..4), kw + r.random_range(0..4)];
            let x = normalish(r, &shape);
            let wt = normalish(r, &[co, ci, kh, kw]);
            binary(r, x, wt, |x, w| x.conv2d(w, None, Padding::Valid))
        }),
        check!("max_pool2d", false, |r| {
            let k = r.random_range(1..=3);
            let shape = vec![r.random_range(1..=2), k * r.random_range(1..=3), k * r.random_range(1..=3)];
            let x = distinct(r, &shape);
            unary(r, x, move |x| x.max_pool2d(k))
        }),
        check!("avg_pool2d", false, |r| {
            let k = r.random_range(1..=3);
            let shape = vec![r.random_range(1..=2), k * r.random_range(1..=3), k * r.random_range(1..=3)];
            let x = normalish(r, &shape);
            unary(r, x, move |x| x.avg_pool2d(k))
        }),
        check!("upsample_nearest", false, |r| {
            let k = r.random_range(1..=3);
            let shape = dims(r, 3, 1, 3);
            let x = normalish(r, &shape);
            unary(r, x, move |x| x.upsample_nearest(k))
        }),
        check!("group_norm", false, |r| {
            let g = r.random_range(1..=3);
            let c = g * r.random_range(1..=2);
            let shape = vec![c, r.random_range(2..=4), r.random_range(2..=4)];
            let x = normalish(r, &shape);
            let (gain, bias) = (normalish(r, &[c]), normalish(r, &[c]));
            let y = x.group_norm(g, &gain, &bias, 1e-5).unwrap();
            let pw = normalish(r, y.shape());
            Instance {
                f: Box::new(move |t| probe(&t[0].group_norm(g, &t[1], &t[2], 1e-5)?, &pw)),
                inputs: vec![x, gain, bias],
            }
        }),
        check!("rss", false, |r| {
            let shape = dims(r, 3, 1, 4);
            let x = complex(r, &shape);
            unary(r, x, |x| rss(x).map_err(lift))
        }),
        check!("ssim", false, |r| {
            let s = [r.random_range(7..=9), r.random_range(7..=9)];
            let (a, b) = (uniform(r, &s, 0.0, 1.0), uniform(r, &s, 0.0, 1.0));
            Instance {
                f: Box::new(|t| ssim(&t[0], &t[1], 1.0).map_err(lift)),
                inputs: vec![a, b],
            }
        }),
        // Second order: the ops the penalty differentiates through.
        check!("conv2d", true, |r| {
            let x = normalish(r, &[2, 4, 4]);
            let w = normalish(r, &[2, 2, 3, 3]);
            let b = normalish(r, &[2]);
            curved(r, vec![x, w, b], |t| t[0].conv2d(&t[1], Some(&t[2]), Padding::Same))
        }),
        check!("relu", true, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = away_from_zero(r, &shape, 0.01);
            curved(r, vec![x], |t| t[0].relu())
        }),
        check!("leaky_relu", true, |r| {
            let shape = dims(r, 2, 1, 5);
            let x = away_from_zero(r, &shape, 0.01);
            curved(r, vec![x], |t| t[0].leaky_relu(0.2))
        }),
        check!("avg_pool2d", true, |r| {
            let x = normalish(r, &[2, 4, 4]);
            curved(r, vec![x], |t| t[0].avg_pool2d(2))
        }),
        check!("max_pool2d", true, |r| {
            let x = distinct(r, &[2, 4, 4]);
            curved(r, vec![x], |t| t[0].max_pool2d(2))
        }),
        check!("group_norm", true, |r| {
            let x = normalish(r, &[4, 3, 3]);
            let (g, b) = (normalish(r, &[4]), normalish(r, &[4]));
            curved(r, vec![x, g, b], |t| t[0].group_norm(2, &t[1], &t[2], 1e-5))
        }),
        check!("affine", true, |r| {
            let x = normalish(r, &[5]);
            let (w, b) = (normalish(r, &[5]), normalish(r, &[1]));
            curved(r, vec![x, w, b], |t| t[0].mul(&t[1])?.sum()?.add(&t[2].reshape(&[])?))
        }),
        check!("sigmoid", true, |r| {
            let shape = dims(r, 2, 1, 4);
            let x = uniform(r, &shape, -3.0, 3.0);
            let w = normalish(r, x.shape());
            Instance {
                f: Box::new(move |t| t[0].sigmoid()?.mul(&w)?.sum()),
                inputs: vec![x],
            }
        }),
        check!("arithmetic", true, |r| {
            let (a, b) = (normalish(r, &[3, 3]), uniform(r, &[3], 0.5, 2.0));
            curved(r, vec![a, b], |t| t[0].mul(&t[1])?.div(&t[1].square()?)?.sub(&t[0].square()?))
        }),
        check!("reductions", true, |r| {
            let x = normalish(r, &[3, 4]);
            curved(r, vec![x], |t| t[0].square()?.mean_axes(&[1], false)?.add(&t[0].sum()?))
        }),
        check!("adversary_input_penalty", true, NETWORK_FD_STEP, |r| {
            let pool = if r.random::<bool>() { "max" } else { "avg" };
            let cfg = tiny_adversary(pool.parse().unwrap());
            let ns = init_adversary::<f64>(r.random(), &cfg).unwrap();
            let x = if pool == "max" {
                distinct(r, &[8, 8])
            } else {
                uniform(r, &[8, 8], 0.0, 1.0)
            };
            Instance {
                f: Box::new(move |t| {
                    adversary_forward(&t[0], &ns, &cfg)
                        .map(|o| o.prob)
                        .map_err(lift)
                }),
                inputs: vec![x],
            }
        }),
    ]
}

/// Runs every check over `seeds` random instances.
pub fn run_suite(seeds: usize, base_seed: u64) -> SuiteReport {
    let start = Instant::now();
    let results = checks()
        .iter()
        .enumerate()
        .map(|(ci, c)| run_check(c, seeds, derive_seed(base_seed, ci as u64)))
        .collect();
    SuiteReport {
        results,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_check(c: &Check, seeds: usize, seed: u64) -> CheckResult {
    let _checked = gradcore::CheckedGuard::new(true);
    let tolerance = if c.second_order {
        SECOND_ORDER_TOL
    } else {
        FIRST_ORDER_TOL
    };
    let mut max_error: f64 = 0.0;
    let mut failure = None;
    for s in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, s as u64));
        let inst = (c.build)(&mut rng);
        let err = if c.second_order {
            let dirs: Vec<Tensor<f64>> = inst.inputs.iter().map(|t| normalish(&mut rng, t.shape())).collect();
            check_second_order(&*inst.f, &inst.inputs, &dirs, c.step)
        } else {
            check_gradients(&*inst.f, &inst.inputs, c.step)
        };
        match err {
            Ok(e) => max_error = max_error.max(if e.is_nan() { f64::INFINITY } else { e }),
            Err(e) => {
                failure = Some(format!("seed {s}: {e}"));
                break;
            }
        }
    }
    CheckResult {
        name: c.name,
        second_order: c.second_order,
        max_error,
        tolerance,
        seeds,
        failure,
    }
}
