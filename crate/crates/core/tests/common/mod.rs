//! Helpers shared by the integration tests: builtin fixtures and
//! finite-difference oracles that never go through the jet arithmetic.

#![allow(dead_code)]

use spray_holonomy::ad::Jet;
use spray_holonomy::analysis::sample_points;
use spray_holonomy::builtin::{builtin_examples, BuiltinExample};
use spray_holonomy::expr::ExprAst;
use spray_holonomy::geometry::{ChartPoint, Domain, Interval, SprayModel};
use std::collections::BTreeMap;

pub fn example(id: u8) -> BuiltinExample {
    builtin_examples().into_iter().find(|e| e.id == id).expect("ids 1 to 4")
}

/// The spray `G = 0` on a wide box.
pub fn flat(n: usize) -> SprayModel {
    let domain = Domain { x: vec![Interval::closed(-10.0, 10.0); n], y: vec![Interval::closed(-10.0, 10.0); n] };
    SprayModel::new("flat", domain, &vec!["0"; n], BTreeMap::new()).unwrap()
}

pub fn at(x: [f64; 2], y: [f64; 2]) -> ChartPoint {
    ChartPoint::new(x, y)
}

/// The first `count` configured samples of an example.
pub fn samples(ex: &BuiltinExample, count: usize) -> Vec<ChartPoint> {
    let model = ex.model().unwrap();
    let (mut pts, _) = sample_points(&ex.config, &model, ex.config.samples.seed).unwrap();
    pts.truncate(count);
    pts
}

pub fn eval(model: &SprayModel, e: &ExprAst, z: &[f64]) -> f64 {
    model.eval_expr(e, z).unwrap()
}

fn shifted(z: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut out = z.to_vec();
    for &(a, d) in moves {
        out[a] += d;
    }
    out
}

/// Central difference of plain `f64` evaluations, first order.
pub fn fd_first(model: &SprayModel, e: &ExprAst, z: &[f64], a: usize, h: f64) -> f64 {
    (eval(model, e, &shifted(z, &[(a, h)])) - eval(model, e, &shifted(z, &[(a, -h)]))) / (2.0 * h)
}

/// Central second difference of plain `f64` evaluations.
pub fn fd_second(model: &SprayModel, e: &ExprAst, z: &[f64], a: usize, b: usize, h: f64) -> f64 {
    let f = |m: &[(usize, f64)]| eval(model, e, &shifted(z, m));
    if a == b {
        (f(&[(a, h)]) - 2.0 * f(&[]) + f(&[(a, -h)])) / (h * h)
    } else {
        (f(&[(a, h), (b, h)]) - f(&[(a, h), (b, -h)]) - f(&[(a, -h), (b, h)]) + f(&[(a, -h), (b, -h)])) / (4.0 * h * h)
    }
}

/// Mixed partial from the jet expansion.
pub fn ad_partial(model: &SprayModel, e: &ExprAst, z: &[f64], alpha: &[u8]) -> f64 {
    let order: usize = alpha.iter().map(|&k| usize::from(k)).sum();
    let jets = Jet::seed(z, order);
    model.eval_expr(e, &jets).unwrap().partial(alpha).unwrap()
}

/// All multi-indices of exactly `order` over `nvars` variables.
pub fn multi_indices(nvars: usize, order: usize) -> Vec<Vec<u8>> {
    fn go(prefix: &mut Vec<u8>, left: usize, nvars: usize, out: &mut Vec<Vec<u8>>) {
        if prefix.len() == nvars - 1 {
            prefix.push(left as u8);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k as u8);
            go(prefix, left - k, nvars, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), order, nvars, &mut out);
    out
}

/// Second difference with one Richardson step, cancelling the `h^2` term
/// that dominates near the edge of a domain where derivatives blow up.
pub fn fd_second_extrapolated(model: &SprayModel, e: &ExprAst, z: &[f64], a: usize, b: usize, h: f64) -> f64 {
    (4.0 * fd_second(model, e, z, a, b, h / 2.0) - fd_second(model, e, z, a, b, h)) / 3.0
}

/// Finite-difference value of the partial `alpha` (order 1 to 3).
///
/// Orders 1 and 2 use plain evaluations only. Order 3 differences a
/// second-order jet partial along one variable, since a pure third
/// difference at `f64` precision is dominated by rounding.
pub fn fd_partial(model: &SprayModel, e: &ExprAst, z: &[f64], alpha: &[u8]) -> f64 {
    let vars: Vec<usize> = alpha.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize)).collect();
    match vars.len() {
        1 => fd_first(model, e, z, vars[0], 1e-5),
        2 => fd_second_extrapolated(model, e, z, vars[0], vars[1], 1e-4),
        3 => {
            let c = vars[0];
            let mut beta = alpha.to_vec();
            beta[c] -= 1;
            let h = 1e-5;
            (ad_partial(model, e, &shifted(z, &[(c, h)]), &beta) - ad_partial(model, e, &shifted(z, &[(c, -h)]), &beta))
                / (2.0 * h)
        }
        _ => panic!("orders 1 to 3 only"),
    }
}

/// `|ad - fd| / max(1, |fd|)`.
pub fn scaled_gap(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / fd.abs().max(1.0)
}

/// Worst scaled gap between jet and finite-difference partials of orders
/// 1 to 3 of `e` at `points`.
pub fn worst_ad_gap(model: &SprayModel, e: &ExprAst, points: &[ChartPoint]) -> f64 {
    let nvars = 2 * model.dim();
    let mut worst: f64 = 0.0;
    for p in points {
        let z = p.stacked();
        for order in 1..=3 {
            for alpha in multi_indices(nvars, order) {
                worst = worst.max(scaled_gap(ad_partial(model, e, &z, &alpha), fd_partial(model, e, &z, &alpha)));
            }
        }
    }
    worst
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}
