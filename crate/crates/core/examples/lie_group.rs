//! Exponential and logarithm on SE(3), adjoints and the Lie bracket.

use cosserat_observer::liegroup::*;

fn main() {
    let x = Twist::from_array([0.3, -0.2, 1.1, 0.5, 0.0, 0.2]);
    let g = exp_se3(&x, 1.0);
    println!("exp(x) =\n{}", g.to_homogeneous());
    let back = log_se3(&g).expect("angle below pi");
    println!("log(exp(x)) - x = {:.2e}", (back - x).norm());

    let h = exp_se3(&Twist::from_array([0.0, 0.4, 0.0, 0.1, 0.2, 0.3]), 1.0);
    let lhs = adjoint(&g.compose(&h));
    let rhs = adjoint(&g) * adjoint(&h);
    println!("|Ad(gh) - Ad(g)Ad(h)| = {:.2e}", (lhs - rhs).norm());

    let y = Twist::from_array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    println!("[x, y] = {}", bracket(&x.0, &y.0).transpose());
}
