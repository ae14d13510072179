//! The reverse-mode engine on its own: record a graph, backpropagate, and
//! watch the Gumbel-softmax head sharpen as the temperature drops.
//!
//! Run with: cargo run --release --example autodiff_basics

use fluencygan::rng::Rng;
use fluencygan::{Graph, Tensor};

fn main() {
    // d/dx of sum(tanh(x W)^2) by hand would be unpleasant; the tape does it.
    let mut rng = Rng::new(7);
    let mut g = Graph::new();
    let x = {
        let mut t = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.5]).unwrap();
        t.requires_grad = true;
        g.leaf(&t)
    };
    let w = g.constant(Tensor::param_uniform(vec![3, 4], 0.5, &mut rng));
    let h = g.matmul(x, w).unwrap();
    let act = g.tanh(h);
    let sq = g.mul(act, act).unwrap();
    let loss = g.sum(sq, None).unwrap();
    g.backward(loss).unwrap();
    println!("loss = {:.6}", g.data(loss)[0]);
    println!("dloss/dx = {:?}", g.grad_of(x).unwrap());

    // Gumbel-softmax: same logits and noise, falling temperature.
    let logits = Tensor::new(vec![1, 5], vec![1.0, 2.5, 0.3, 1.8, -0.7]).unwrap();
    let noise = Tensor::new(vec![1, 5], (0..5).map(|_| rng.gumbel()).collect()).unwrap();
    println!("\ntau      sampled distribution");
    for tau in [2.0f32, 1.0, 0.5, 0.1] {
        let mut g = Graph::new();
        let l = g.constant(logits.clone());
        let n = g.constant(noise.clone());
        let soft = g.gumbel_softmax(l, tau, n).unwrap();
        let row: Vec<String> = g.data(soft).iter().map(|p| format!("{p:.3}")).collect();
        println!("{tau:<8} [{}]", row.join(", "));
    }
    println!("\nlow tau pushes the sample toward one-hot while staying differentiable");
}
