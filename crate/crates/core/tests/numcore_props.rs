//! Random compositions of graph primitives against central differences.

use proptest::prelude::*;
use vln_core::num::{relative_error, Graph, Rng, Tensor, Var};

const WIDTH: usize = 4;

/// Replays `recipe` on fresh inputs built from `x` and returns the scalar result.
fn build(g: &mut Graph, x: &[f64], recipe: &[u8], as_input: bool) -> (Vec<Var>, Var) {
    let mk = |g: &mut Graph, t: Tensor| if as_input { g.input(t).unwrap() } else { g.constant(t).unwrap() };
    let a = mk(g, Tensor::vector(x[..WIDTH].to_vec()).unwrap());
    let b = mk(g, Tensor::vector(x[WIDTH..2 * WIDTH].to_vec()).unwrap());
    let m = mk(g, Tensor::matrix(WIDTH, WIDTH, x[2 * WIDTH..].to_vec()).unwrap());
    let inputs = vec![a, b, m];
    let mut cur = a;
    for &op in recipe {
        cur = match op % 14 {
            0 => g.add(cur, b).unwrap(),
            1 => g.sub(cur, b).unwrap(),
            2 => g.mul(cur, b).unwrap(),
            3 => g.scale(cur, 0.7).unwrap(),
            4 => g.offset(cur, -0.3).unwrap(),
            5 => g.sigmoid(cur).unwrap(),
            6 => g.tanh(cur).unwrap(),
            7 => {
                let t = g.tanh(cur).unwrap();
                g.exp(t).unwrap()
            }
            8 => {
                let s = g.square(cur).unwrap();
                let s = g.offset(s, 1.0).unwrap();
                g.ln(s).unwrap()
            }
            9 => g.softmax(cur).unwrap(),
            10 => g.linear(cur, m, Some(b)).unwrap(),
            11 => g.matvec(m, cur).unwrap(),
            12 => {
                let c = g.concat(&[cur, b]).unwrap();
                g.slice(c, 2, WIDTH).unwrap()
            }
            _ => {
                let rows = g.stack(&[cur, b]).unwrap();
                let joined = g.concat_rows(&[rows, m]).unwrap();
                let picked = g.gather_rows(joined, &[0, 3, 0]).unwrap();
                let cols = g.col_slice(picked, 0, WIDTH).unwrap();
                g.mean_rows(cols).unwrap()
            }
        };
    }
    let sq = g.square(cur).unwrap();
    let s = g.sum(sq).unwrap();
    let p = g.pick(cur, 1).unwrap();
    let loss = g.add(s, p).unwrap();
    (inputs, loss)
}

fn eval(x: &[f64], recipe: &[u8]) -> vln_core::Result<f64> {
    let mut g = Graph::new();
    let (_, loss) = build(&mut g, x, recipe, false);
    g.value(loss).item()
}

/// Five-point central stencil; fourth-order accurate.
fn five_point(x: &[f64], recipe: &[u8], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let mut at = |d: f64| {
                p[i] = x[i] + d;
                let v = eval(&p, recipe).unwrap();
                p[i] = x[i];
                v
            };
            (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
        })
        .collect()
}

#[test]
fn hundred_random_compositions_match_finite_differences() {
    let mut rng = Rng::new(31);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let len = 1 + rng.below(8);
        let recipe: Vec<u8> = (0..len).map(|_| rng.below(14) as u8).collect();
        let x: Vec<f64> = (0..2 * WIDTH + WIDTH * WIDTH).map(|_| rng.uniform(-0.8, 0.8)).collect();
        let mut g = Graph::new();
        let (inputs, loss) = build(&mut g, &x, &recipe, true);
        let grads = g.backward(loss).unwrap();
        let analytic: Vec<f64> = inputs
            .iter()
            .flat_map(|v| grads.wrt(*v).map_or_else(|| vec![0.0; g.value(*v).len()], <[f64]>::to_vec))
            .collect();
        let numeric = five_point(&x, &recipe, 1e-3);
        for (a, n) in analytic.iter().zip(&numeric) {
            let e = relative_error(*a, *n, 1e-4);
            assert!(e <= 1e-6, "recipe {recipe:?}: analytic {a} numeric {n} (rel {e})");
            worst = worst.max(e);
        }
    }
    println!("worst relative error {worst:e}");
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(v in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(v).unwrap()).unwrap();
        let p = g.softmax(x).unwrap();
        let vals = g.value(p).values();
        prop_assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(vals.iter().all(|q| *q >= 0.0));
    }

    #[test]
    fn linear_is_affine(x in prop::collection::vec(-5.0f64..5.0, 3), y in prop::collection::vec(-5.0f64..5.0, 3),
                        w in prop::collection::vec(-2.0f64..2.0, 6)) {
        let mut g = Graph::new();
        let wv = g.constant(Tensor::matrix(3, 2, w).unwrap()).unwrap();
        let xv = g.constant(Tensor::vector(x.clone()).unwrap()).unwrap();
        let yv = g.constant(Tensor::vector(y.clone()).unwrap()).unwrap();
        let sum = g.add(xv, yv).unwrap();
        let lhs = g.linear(sum, wv, None).unwrap();
        let lx = g.linear(xv, wv, None).unwrap();
        let ly = g.linear(yv, wv, None).unwrap();
        let rhs = g.add(lx, ly).unwrap();
        for (a, b) in g.value(lhs).values().iter().zip(g.value(rhs).values()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn sum_gradient_is_ones(v in prop::collection::vec(-10.0f64..10.0, 1..20)) {
        let n = v.len();
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(v).unwrap()).unwrap();
        let s = g.sum(x).unwrap();
        let grads = g.backward(s).unwrap();
        let ones = vec![1.0; n];
        prop_assert_eq!(grads.wrt(x).unwrap(), ones.as_slice());
    }
}
