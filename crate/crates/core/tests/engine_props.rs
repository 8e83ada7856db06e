mod common;

use common::{backward_vs_oracle, grad_case, worst_mismatch};
use graddiag::engine::{loss_eval, sgd_step, sgd_step_in_place, LossKind, Network, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn backward_agrees_with_central_differences(i in 0u64..100_000) {
        let case = grad_case(i);
        let (g, fd) = backward_vs_oracle(&case);
        prop_assert!(worst_mismatch(&g, &fd, 1e-4, 1e-7) <= 0.0);
    }

    #[test]
    fn forward_is_deterministic_and_json_round_trips(i in 0u64..100_000) {
        let case = grad_case(i);
        let a = case.net.predict(&case.x).unwrap();
        let b = case.net.predict(&case.x).unwrap();
        prop_assert_eq!(a.data(), b.data());
        let back = Network::from_json(&case.net.to_json().unwrap()).unwrap();
        let bits = |p: &[f64]| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(back.params()), bits(case.net.params()));
        let c = back.predict(&case.x).unwrap();
        prop_assert_eq!(c.data(), a.data());
    }

    #[test]
    fn hinge_and_square_are_nonnegative(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20),
    ) {
        let n = pairs.len();
        let p = Tensor::new(vec![n, 1], pairs.iter().map(|q| q.0).collect()).unwrap();
        let y = Tensor::new(vec![n, 1], pairs.iter().map(|q| q.1).collect()).unwrap();
        prop_assert!(loss_eval(LossKind::Hinge, &p, &y).unwrap().0 >= 0.0);
        let (sq, _) = loss_eval(LossKind::Square, &p, &y).unwrap();
        prop_assert!(sq >= 0.0);
        let same = loss_eval(LossKind::Square, &p, &p).unwrap().0;
        prop_assert_eq!(same, 0.0);
        let differs = pairs.iter().any(|q| q.0 != q.1);
        prop_assert_eq!(sq > 0.0, differs);
    }

    #[test]
    fn sgd_step_is_elementwise(
        v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..30),
        lr in -1.0f64..1.0,
    ) {
        let params: Vec<f64> = v.iter().map(|q| q.0).collect();
        let grads: Vec<f64> = v.iter().map(|q| q.1).collect();
        let next = sgd_step(&params, &grads, lr).unwrap();
        for ((n, p), g) in next.iter().zip(&params).zip(&grads) {
            prop_assert_eq!(*n, p - lr * g);
        }
        let mut frozen = params.clone();
        sgd_step_in_place(&mut frozen, &grads, 0.0).unwrap();
        sgd_step_in_place(&mut frozen, &grads, 0.0).unwrap();
        prop_assert_eq!(frozen, params);
    }
}
