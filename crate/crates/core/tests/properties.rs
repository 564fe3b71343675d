use std::collections::BTreeMap;

use proptest::prelude::*;

use choreo::epp::{merge, Behaviour, PortName};
use choreo::model::{
    desugar_multicast, validate_interaction_set, BinOp, Choreography, EtaSet, Expr, Payload, Receiver,
};
use choreo::textio::{parse_behaviour, parse_choreography, print_behaviour, print_choreography, ParseOptions};

const PROCS: [&str; 3] = ["p", "q", "r"];

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0i64..10).prop_map(Expr::int),
        prop::sample::select(vec!["x", "y"]).prop_map(Expr::var),
    ];
    leaf.prop_recursive(2, 6, 2, |inner| {
        (prop::sample::select(vec![BinOp::Add, BinOp::Lt, BinOp::Eq]), inner.clone(), inner)
            .prop_map(|(op, a, b)| Expr::binary(op, a, b))
    })
}

fn multicast() -> impl Strategy<Value = (String, Payload, Vec<Receiver>)> {
    (0..3usize, prop::sample::subsequence(vec![0usize, 1, 2], 1..=2), any::<bool>(), expr()).prop_map(
        |(s, targets, is_label, e)| {
            let sender = PROCS[s];
            let receivers: Vec<Receiver> = targets
                .into_iter()
                .filter(|&t| t != s)
                .map(|t| if is_label { Receiver::new(PROCS[t]) } else { Receiver::into_var(PROCS[t], "y") })
                .collect();
            let payload = if is_label { Payload::Label("ok".into()) } else { Payload::Value(e) };
            (sender.to_owned(), payload, receivers)
        },
    )
}

fn etas() -> impl Strategy<Value = EtaSet> {
    multicast()
        .prop_filter("needs a receiver", |(_, _, rs)| !rs.is_empty())
        .prop_map(|(s, payload, rs)| desugar_multicast(&s, &payload, &rs).unwrap())
}

fn choreography() -> impl Strategy<Value = Choreography> {
    let leaf = Just(Choreography::End);
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            3 => (etas(), prop::sample::select(vec!["g", "h"]), inner.clone())
                .prop_map(|(e, g, k)| Choreography::prefix(e, g, k)),
            1 => (prop::sample::select(PROCS.to_vec()), expr(), inner.clone(), inner.clone())
                .prop_map(|(p, e, t, f)| Choreography::cond(p, e, t, f)),
            1 => (etas(), inner).prop_map(|(e, k)| {
                let body = Choreography::prefix(e, "g", Choreography::Call("X".into()));
                Choreography::def("X", body, k)
            }),
        ]
    })
}

/// Behaviours over one port pair with few labels, so that merges often exist.
fn behaviour() -> impl Strategy<Value = Behaviour> {
    let out = PortName::out("p", "g");
    let inp = PortName::inp("p", "g");
    let leaf = Just(Behaviour::End);
    leaf.prop_recursive(3, 16, 3, move |inner| {
        let (out, inp) = (out.clone(), inp.clone());
        prop_oneof![
            (inner.clone()).prop_map({
                let out = out.clone();
                move |k| Behaviour::Send {
                    port: out.clone(),
                    expr: Expr::var("x"),
                    cont: Box::new(k),
                }
            }),
            (inner.clone()).prop_map({
                let inp = inp.clone();
                move |k| Behaviour::Recv {
                    port: inp.clone(),
                    var: "y".into(),
                    cont: Box::new(k),
                }
            }),
            prop::collection::btree_map(prop::sample::select(vec!["a", "b", "c"]), inner, 1..=2).prop_map(
                move |bs| Behaviour::Branch {
                    port: inp.clone(),
                    branches: bs.into_iter().map(|(l, b)| (l.to_owned(), b)).collect::<BTreeMap<_, _>>(),
                }
            ),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn choreographies_print_and_parse(c in choreography()) {
        let text = print_choreography(&c);
        let back = parse_choreography(&text, ParseOptions::default());
        prop_assert_eq!(back.as_ref().ok(), Some(&c), "{}", text);
    }

    #[test]
    fn behaviours_print_and_parse(b in behaviour()) {
        let text = print_behaviour(&b);
        prop_assert_eq!(parse_behaviour(&text).ok(), Some(b), "{}", text);
    }

    #[test]
    fn merge_is_idempotent(a in behaviour()) {
        prop_assert_eq!(merge(&a, &a).ok(), Some(a));
    }

    #[test]
    fn merge_is_commutative(a in behaviour(), b in behaviour()) {
        prop_assert_eq!(merge(&a, &b).ok(), merge(&b, &a).ok());
    }

    #[test]
    fn merge_is_associative(a in behaviour(), b in behaviour(), c in behaviour()) {
        let left = merge(&a, &b).and_then(|ab| merge(&ab, &c)).ok();
        let right = merge(&b, &c).and_then(|bc| merge(&a, &bc)).ok();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn desugared_multicasts_are_valid((s, payload, rs) in multicast()) {
        match desugar_multicast(&s, &payload, &rs) {
            Ok(set) => {
                prop_assert!(validate_interaction_set(&set).is_empty(), "{:?}", set);
                prop_assert_eq!(set.len(), rs.len());
                prop_assert!(set.iter().all(|e| e.sender() == Some(s.as_str())));
            }
            Err(_) => prop_assert!(rs.is_empty()),
        }
    }
}
