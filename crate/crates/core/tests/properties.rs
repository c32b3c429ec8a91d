use fexkit::datagen::{check_record, generate_dataset, record_seed, GeneratorConfig};
use fexkit::expr::jet::{Order, Program, Workspace};
use fexkit::expr::{
    differentiate, encode_operator_set, extract_operator_set, extract_operator_set_from_tokens, laplacian, mismatch,
    parse_postfix, random_tree_seeded, simplify, to_postfix, BinaryOp, OperatorDictionary, OperatorSetVector, UnaryOp,
};
use fexkit::fex::PolicyParams;
use fexkit::pde::{reward, BcType, Domain, PdeType};
use fexkit::wos::distance_to_boundary;
use fexkit::Expr;
use proptest::prelude::*;

fn tree(depth: usize, seed: u64) -> Expr {
    random_tree_seeded(depth, &UnaryOp::DEFAULT_SET, &BinaryOp::DEFAULT_SET, 3, seed)
}

fn agree(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn bits(n: usize) -> impl Strategy<Value = OperatorSetVector> {
    proptest::collection::vec(0u8..=1, n).prop_map(|bits| OperatorSetVector { bits })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mismatch_is_a_hamming_metric(y in bits(12), z in bits(12), w in bits(12)) {
        let d = |a: &OperatorSetVector, b: &OperatorSetVector| mismatch(a, b).unwrap();
        let hamming = y.bits.iter().zip(&z.bits).filter(|(a, b)| a != b).count();
        prop_assert_eq!(d(&y, &z), hamming);
        prop_assert_eq!(d(&y, &z), d(&z, &y));
        prop_assert_eq!(d(&y, &z) == 0, y == z);
        prop_assert!(d(&y, &w) <= d(&y, &z) + d(&z, &w));
    }

    #[test]
    fn postfix_round_trip_preserves_values(depth in 1usize..=3, seed in any::<u64>(), x in proptest::array::uniform3(-1.0f64..1.0)) {
        let e = tree(depth, seed);
        let back = parse_postfix(&to_postfix(&e), &OperatorDictionary::standard(3)).unwrap();
        match (e.eval(&x), back.eval(&x)) {
            (Ok(a), Ok(b)) => prop_assert!(agree(a, b, 1e-12), "{} vs {}", a, b),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "domain changed: {:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn operator_set_of_tree_matches_its_tokens(depth in 1usize..=3, seed in any::<u64>()) {
        let e = simplify(&tree(depth, seed));
        let toks = to_postfix(&e);
        prop_assert_eq!(extract_operator_set(&e), extract_operator_set_from_tokens(&toks));
        let dict = OperatorDictionary::standard(3);
        let v = encode_operator_set(&extract_operator_set(&e).restrict_to(&dict), &dict).unwrap();
        prop_assert_eq!(v.len(), dict.len());
    }

    #[test]
    fn simplify_preserves_values(depth in 1usize..=3, seed in any::<u64>(), x in proptest::array::uniform3(-1.0f64..1.0)) {
        let e = tree(depth, seed);
        if let (Ok(a), Ok(b)) = (e.eval(&x), simplify(&e).eval(&x)) {
            prop_assert!(agree(a, b, 1e-9), "{} vs {}", a, b);
        }
    }

    #[test]
    fn jets_match_symbolic_derivatives(depth in 1usize..=3, seed in any::<u64>(), x in proptest::array::uniform3(-0.9f64..0.9)) {
        let e = tree(depth, seed);
        let lap = laplacian(&e, 3);
        let grads: Vec<Expr> = (0..3).map(|k| differentiate(&e, k)).collect();
        let program = Program::from_expr(&e);
        let mut ws = Workspace::new();
        let symbolic: Result<Vec<f64>, _> = grads.iter().map(|g| g.eval(&x)).collect();
        if let (Ok(v), Ok(g), Ok(l), Ok(())) = (e.eval(&x), symbolic, lap.eval(&x), program.eval_jet(&[], &x, Order::Second, &mut ws)) {
            prop_assume!(v.is_finite() && l.is_finite() && g.iter().all(|t| t.is_finite()));
            prop_assert!(agree(ws.value(), v, 1e-12));
            for k in 0..3 {
                prop_assert!(agree(ws.gradient()[k], g[k], 1e-9), "d{}: {} vs {}", k, ws.gradient()[k], g[k]);
            }
            prop_assert!(agree(ws.laplacian(), l, 1e-8), "{} vs {}", ws.laplacian(), l);
        }
    }

    #[test]
    fn policy_estimates_and_projection(logits in proptest::collection::vec(-20.0f64..20.0, 9), rewards in proptest::collection::vec(0.0f64..1.0, 5), eta in 0.01f64..5.0) {
        let sizes = [2usize, 3, 4];
        let mut p = PolicyParams::uniform(&sizes, 3.0);
        p.logits = logits;
        p.project();
        prop_assert!(p.logits.iter().all(|v| v.abs() <= 3.0));
        let probs = p.probabilities();
        let mut start = 0;
        for &n in &sizes {
            let s: f64 = probs[start..start + n].iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            start += n;
        }
        let batch: Vec<(Vec<usize>, f64)> = rewards.iter().enumerate().map(|(i, &r)| (vec![i % 2, i % 3, i % 4], r)).collect();
        let g = p.gradient_estimate(&batch);
        // one-hot minus softmax sums to zero within each slot
        let mut start = 0;
        for &n in &sizes {
            prop_assert!(g[start..start + n].iter().sum::<f64>().abs() < 1e-12);
            start += n;
        }
        let proxy = p.ascend(&g, eta);
        prop_assert!(proxy >= 0.0);
        prop_assert!(p.logits.iter().all(|v| v.abs() <= 3.0));
    }

    #[test]
    fn reward_is_decreasing_in_loss(a in 0.0f64..1e6, b in 0.0f64..1e6) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(reward(lo) >= reward(hi));
        prop_assert!(reward(lo) <= 1.0 && reward(hi) > 0.0);
    }

    #[test]
    fn walk_distance_matches_domain_distance(x in proptest::array::uniform3(-0.99f64..0.99)) {
        for dom in [Domain::unit_box(3), Domain::unit_ball(3)] {
            if !dom.contains(&x) {
                continue;
            }
            let (d, p) = distance_to_boundary(&dom, &x).unwrap();
            prop_assert!((d - dom.distance(&x)).abs() < 1e-12);
            prop_assert!(dom.is_on_boundary(&p, 1e-9));
            let gap: f64 = p.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            prop_assert!((gap - d).abs() < 1e-12);
        }
    }
}

#[test]
fn generated_records_pass_their_checks() {
    let types = [(PdeType::Poisson, BcType::Neumann), (PdeType::Conservation, BcType::Cauchy)];
    let recs = generate_dataset(40, 2, 3, &types, 5, &GeneratorConfig::default()).unwrap();
    assert_eq!(recs.len(), 40);
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r.seed, record_seed(5, i as u64));
        check_record(r, 1e-6).unwrap();
    }
    let again = generate_dataset(40, 2, 3, &types, 5, &GeneratorConfig::default()).unwrap();
    assert_eq!(recs, again);
}
