//! The 1-D meta-gradient toy, worked by hand and by tape.
//!
//! Support loss L_s(θ) = (θ − 1)²/2, query loss L_q(θ) = (θ − 2)²/2, θ = 0,
//! inner step θ' = θ − α·L_s'(θ) with α = 0.5.
//!
//! θ' = 0 − 0.5·(0 − 1) = 0.5, and dθ'/dθ = 1 − α·L_s''(θ) = 0.5, so the
//! second-order meta-gradient is L_q'(θ')·0.5 = (0.5 − 2)·0.5 = −0.75, while
//! the first-order treatment drops the inner Jacobian and yields −1.5.
//!
//! Usage: cargo run --example second_order_toy

use metadro::autodiff::{Tape, Tensor};
use metadro::models::sgd_step_on_tape;

fn meta_gradient(through: bool) -> f64 {
    let mut tape = Tape::new();
    let theta = tape.parameter(Tensor::scalar(0.0));
    let one = tape.constant(Tensor::scalar(1.0));
    let two = tape.constant(Tensor::scalar(2.0));

    let d = tape.sub(theta.var, one).unwrap();
    let sq = tape.mul(d, d).unwrap();
    let support_loss = tape.scale(sq, 0.5);

    let adapted = sgd_step_on_tape(&mut tape, &[theta.var], support_loss, 0.5, through).unwrap();

    let dq = tape.sub(adapted[0], two).unwrap();
    let sq2 = tape.mul(dq, dq).unwrap();
    let query_loss = tape.scale(sq2, 0.5);

    let g = tape.grad(query_loss, &[theta.var]).unwrap();
    tape.value(g[0]).item().unwrap()
}

fn main() {
    let second = meta_gradient(true);
    let first = meta_gradient(false);
    println!("second-order meta-gradient: {:+.10}  (analytic −0.75)", second);
    println!("first-order  meta-gradient: {:+.10}  (analytic −1.50)", first);
    assert!((second + 0.75).abs() < 1e-10);
    assert!((first + 1.5).abs() < 1e-10);
}
