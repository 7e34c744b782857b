//! Central-difference gradient battery shared by the numcore tests and the
//! acceptance run. Every function panics on the first mismatch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use somagrid::numcore::{gru_step, GruCell, Linear, Var};
use somagrid::{Tape, Tensor};

pub const INSTANCES: usize = 100;
pub const REL_TOL: f64 = 1e-4;
const H: f64 = 1e-6;

/// Builds a scalar loss from `inputs`, registering each one as a leaf (trainable
/// or not) and returning the leaves in input order.
type Build<'a> = dyn Fn(&mut Tape, &[Tensor], bool) -> (Var, Vec<Var>) + 'a;

fn leaves(tape: &mut Tape, inputs: &[Tensor], trainable: bool) -> Vec<Var> {
    inputs.iter().map(|t| tape.leaf(t.clone(), trainable)).collect()
}

/// Projects any output onto fixed random weights so every element is checked.
fn reduce(tape: &mut Tape, out: Var, weights: &[f64]) -> Var {
    let n = tape.value(out).len();
    let w = tape.constant(Tensor::vector(weights[..n].to_vec()).reshape(tape.value(out).shape().to_vec()).unwrap());
    let p = tape.mul(out, w).unwrap();
    tape.sum(p)
}

fn rel_err(a: f64, n: f64) -> f64 {
    // gradients near zero are compared on an absolute scale of 1e-3
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn check(name: &str, inputs: &[Tensor], build: &Build) {
    let mut tape = Tape::new();
    let (loss, vars) = build(&mut tape, inputs, true);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| match tape.grad(*v) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; t.len()],
        })
        .collect();
    let eval = |xs: &[Tensor]| {
        let mut t = Tape::new();
        let (l, _) = build(&mut t, xs, false);
        t.value(l).item()
    };
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let a = analytic[i][j];
            assert!(
                rel_err(a, numeric) < REL_TOL,
                "{name}: input {i} entry {j}: analytic {a} vs numeric {numeric}"
            );
        }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn weights(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Runs `INSTANCES` random instances of a unary vector op.
fn unary(name: &str, lo: f64, hi: f64, op: fn(&mut Tape, Var) -> Var) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64);
    for _ in 0..INSTANCES {
        let n = rng.random_range(1..7);
        let x = rand_tensor(&mut rng, &[n], lo, hi);
        let w = weights(&mut rng);
        check(name, &[x], &|t, xs, tr| {
            let v = leaves(t, xs, tr);
            let y = op(t, v[0]);
            (reduce(t, y, &w), v)
        });
    }
}

/// Runs `INSTANCES` random instances of a same-shape binary op.
fn binary(name: &str, op: fn(&mut Tape, Var, Var) -> Var) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 + 100);
    for _ in 0..INSTANCES {
        let n = rng.random_range(1..7);
        let xs = [rand_tensor(&mut rng, &[n], -2.0, 2.0), rand_tensor(&mut rng, &[n], -2.0, 2.0)];
        let w = weights(&mut rng);
        check(name, &xs, &|t, xs, tr| {
            let v = leaves(t, xs, tr);
            let y = op(t, v[0], v[1]);
            (reduce(t, y, &w), v)
        });
    }
}

pub fn elementwise_unary_gradients() {
    unary("tanh", -3.0, 3.0, |t, a| t.tanh(a));
    unary("sigmoid", -6.0, 6.0, |t, a| t.sigmoid(a));
    unary("exp", -2.0, 2.0, |t, a| t.exp(a));
    unary("ln", 0.1, 3.0, |t, a| t.ln(a, 1e-8));
    unary("square", -3.0, 3.0, |t, a| t.square(a));
    unary("scale", -3.0, 3.0, |t, a| t.scale(a, -1.7));
    unary("add_scalar", -3.0, 3.0, |t, a| t.add_scalar(a, 0.4));
    unary("sum", -3.0, 3.0, |t, a| t.sum(a));
    unary("mean", -3.0, 3.0, |t, a| t.mean(a));
    unary("log_softmax", -3.0, 3.0, |t, a| t.log_softmax(a));
    unary("softmax", -3.0, 3.0, |t, a| t.softmax(a, 0.3).unwrap());
}

pub fn elementwise_binary_gradients() {
    binary("add", |t, a, b| t.add(a, b).unwrap());
    binary("sub", |t, a, b| t.sub(a, b).unwrap());
    binary("mul", |t, a, b| t.mul(a, b).unwrap());
    binary("outer", |t, a, b| t.outer(a, b));
    binary("concat", |t, a, b| t.concat(&[a, b, a]));
}

pub fn structural_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..INSTANCES {
        let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        let w = weights(&mut rng);
        let xs = [rand_tensor(&mut rng, &[m, k], -1.0, 1.0), rand_tensor(&mut rng, &[k, n], -1.0, 1.0)];
        check("matmul", &xs, &|t, xs, tr| {
            let v = leaves(t, xs, tr);
            let y = t.matmul(v[0], v[1]).unwrap();
            (reduce(t, y, &w), v)
        });
        check("transpose", &xs[..1], &|t, xs, tr| {
            let v = leaves(t, xs, tr);
            let y = t.transpose(v[0]).unwrap();
            (reduce(t, y, &w), v)
        });
        check("reshape", &xs[..1], &|t, xs, tr| {
            let v = leaves(t, xs, tr);
            let y = t.reshape(v[0], vec![m * k]).unwrap();
            (reduce(t, y, &w), v)
        });
        let affine_in = [
            rand_tensor(&mut rng, &[m, k], -1.0, 1.0),
            rand_tensor(&mut rng, &[k], -1.0, 1.0),
            rand_tensor(&mut rng, &[m], -1.0, 1.0),
        ];
        check("affine", &affine_in, &|t, xs, tr| {
            let v = leaves(t, xs, tr);
            let y = t.affine(v[0], v[1], Some(v[2])).unwrap();
            (reduce(t, y, &w), v)
        });
        let len = m + k + n;
        let start = rng.random_range(0..len);
        let take = rng.random_range(1..=len - start);
        check("slice", &[rand_tensor(&mut rng, &[len], -1.0, 1.0)], &|t, xs, tr| {
            let v = leaves(t, xs, tr);
            let y = t.slice(v[0], start, take).unwrap();
            (reduce(t, y, &w), v)
        });
        let tri = m * (m + 1) / 2;
        check("tril_from_vec", &[rand_tensor(&mut rng, &[tri], -1.0, 1.0)], &|t, xs, tr| {
            let v = leaves(t, xs, tr);
            let y = t.tril_from_vec(v[0], m).unwrap();
            (reduce(t, y, &w), v)
        });
        let ms = [rand_tensor(&mut rng, &[n], -1.0, 1.0), rand_tensor(&mut rng, &[1], -2.0, 2.0)];
        check("mul_scalar_var", &ms, &|t, xs, tr| {
            let v = leaves(t, xs, tr);
            let y = t.mul_scalar_var(v[0], v[1]).unwrap();
            (reduce(t, y, &w), v)
        });
    }
}

pub fn kl_gradient_through_both_arguments() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..INSTANCES {
        let n = rng.random_range(2..7);
        let xs = [rand_tensor(&mut rng, &[n], -2.0, 2.0), rand_tensor(&mut rng, &[n], -2.0, 2.0)];
        check("kl", &xs, &|t, xs, tr| {
            let v = leaves(t, xs, tr);
            let q = t.softmax(v[0], 1.0).unwrap();
            let p = t.softmax(v[1], 0.5).unwrap();
            (t.kl_divergence(q, p).unwrap(), v)
        });
    }
}

pub fn gru_and_linear_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..INSTANCES {
        let (i, h) = (rng.random_range(1..5), rng.random_range(1..5));
        let cell = GruCell::<f64>::init(i, h, &mut rng);
        let mut inputs: Vec<Tensor> = cell.tensors().iter().map(|t| (*t).clone()).collect();
        inputs.push(rand_tensor(&mut rng, &[i], -1.0, 1.0));
        inputs.push(rand_tensor(&mut rng, &[h], -1.0, 1.0));
        let w = weights(&mut rng);
        check("gru_step", &inputs, &|t, xs, tr| {
            let mut c = GruCell::<f64>::zeros(i, h);
            for (dst, src) in c.tensors_mut().into_iter().zip(xs) {
                *dst = src.clone();
            }
            let cv = c.bind(t, tr);
            let x = t.leaf(xs[9].clone(), tr);
            let hv = t.leaf(xs[10].clone(), tr);
            let y = gru_step(t, &cv, x, hv).unwrap();
            let mut vars = cv.all().to_vec();
            vars.extend([x, hv]);
            (reduce(t, y, &w), vars)
        });

        let layer = Linear::<f64>::init(h, i, &mut rng);
        let lin = [layer.w.clone(), layer.b.clone(), rand_tensor(&mut rng, &[i], -1.0, 1.0)];
        check("linear", &lin, &|t, xs, tr| {
            let l = Linear { w: xs[0].clone(), b: xs[1].clone() };
            let lv = l.bind(t, tr);
            let x = t.leaf(xs[2].clone(), tr);
            let y = lv.apply(t, x).unwrap();
            let y = t.tanh(y);
            (reduce(t, y, &w), vec![lv.w, lv.b, x])
        });
    }
}
