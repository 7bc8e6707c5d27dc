use std::collections::HashMap;

use patchy_core::expr::{parse, BinOp, CompiledExpr, Expr, Func};
use patchy_core::jets::Jet;
use proptest::prelude::*;

fn expr_strategy() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0.0f64..4.0).prop_map(Expr::Number),
        Just(Expr::Ident("x".into())),
        Just(Expr::Ident("y".into())),
        Just(Expr::Ident("k".into())),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (inner.clone(), inner.clone(), 0..3usize).prop_map(|(a, b, op)| {
                let op = [BinOp::Add, BinOp::Sub, BinOp::Mul][op];
                Expr::Binary(op, Box::new(a), Box::new(b))
            }),
            (inner.clone(), 1..4u32).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
            (inner, 0..3usize).prop_map(|(a, f)| {
                let f = [Func::Sin, Func::Cos, Func::Exp][f];
                // keep exp arguments bounded
                let a = if f == Func::Exp {
                    Expr::Call(Func::Sin, Box::new(a))
                } else {
                    a
                };
                Expr::Call(f, Box::new(a))
            }),
        ]
    })
}

fn params() -> HashMap<String, f64> {
    HashMap::from([("k".to_string(), 0.75)])
}

proptest! {
    #[test]
    fn printing_round_trips(e in expr_strategy(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let text = e.to_string();
        let back = parse(&text).unwrap();
        let p = params();
        let a = CompiledExpr::compile(&e, &["x", "y"], &p).unwrap().eval_f64(&[x, y]);
        let b = CompiledExpr::compile(&back, &["x", "y"], &p).unwrap().eval_f64(&[x, y]);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{} -> {}: {} vs {}", text, back, a, b);
        prop_assert_eq!(parse(&back.to_string()).unwrap().to_string(), back.to_string());
    }

    #[test]
    fn jet_evaluation_matches_f64(e in expr_strategy(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let c = CompiledExpr::compile(&e, &["x", "y"], &params()).unwrap();
        let jx = Jet::variable(0, x, 2, 2).unwrap();
        let jy = Jet::variable(1, y, 2, 2).unwrap();
        let j = c.eval_jet(&[jx, jy]).unwrap();
        let f = |x: f64, y: f64| c.eval_f64(&[x, y]);
        let v = f(x, y);
        prop_assert!((j.value() - v).abs() <= 1e-12 * (1.0 + v.abs()));
        let h = 1e-6;
        let dx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let dy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        let scale = 1.0 + v.abs() + dx.abs() + dy.abs();
        prop_assert!((j.derivative(&[1, 0]).unwrap() - dx).abs() <= 1e-6 * scale);
        prop_assert!((j.derivative(&[0, 1]).unwrap() - dy).abs() <= 1e-6 * scale);
    }
}

#[test]
fn precedence_and_associativity() {
    let c = |s: &str| {
        CompiledExpr::from_source(s, &["x"], &HashMap::new())
            .unwrap()
            .eval_f64(&[2.0])
    };
    assert_eq!(c("1 - x - 1"), -2.0);
    assert_eq!(c("8 / x / 2"), 2.0);
    assert_eq!(c("-x^2"), -4.0);
    assert_eq!(c("2*x^3 + 1"), 17.0);
    assert_eq!(c("(1 + x)*(1 - x)"), -3.0);
}

#[test]
fn malformed_sources_are_rejected() {
    for bad in ["1 +", "sin(x", "x ** 2", "foo(x)", "x^-1", "2 x"] {
        assert!(
            CompiledExpr::from_source(bad, &["x"], &HashMap::new()).is_err(),
            "{bad} should not parse"
        );
    }
    assert!(CompiledExpr::from_source("x + q", &["x"], &HashMap::new()).is_err());
}
