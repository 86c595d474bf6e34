use oppcomp::model::*;
use proptest::prelude::*;

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

prop_compose! {
    fn inputs()(
        delta in log_uniform(1e-4, 1.0),
        delta_prime in log_uniform(1e-5, 1.0),
        mu in log_uniform(1e-3, 1.0),
        rho in 0.0..0.95f64,
        k in prop_oneof![Just(0.0), 0.0..1e7f64],
        kprime in prop_oneof![Just(0.0), 0.0..1e7f64],
        v in log_uniform(1e3, 1e8),
    ) -> (LinkParams, ProviderParams, TransferSizes) {
        let d = 1.0 / mu;
        (
            LinkParams::new(delta, delta_prime, v).unwrap(),
            ProviderParams::new(rho / d, 1.0, 1.0, d, 2.0 * d * d).unwrap(),
            TransferSizes::new(k, kprime).unwrap(),
        )
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn probabilities_are_a_distribution((link, prov, sizes) in inputs()) {
        let p = prob_cases(&link, &prov, &sizes).unwrap();
        for x in [p.p1, p.p2, p.p3] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        prop_assert!((p.p1 + p.p2 + p.p3 - 1.0).abs() <= 1e-12);
        let e = estimate_single(&link, &prov, &sizes, false);
        prop_assert!((e.p1 + e.p2 + e.p3 - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn transfer_lower_bounds((link, prov, sizes) in inputs()) {
        let a = sizes.k() / link.throughput();
        let a_out = sizes.kprime() / link.throughput();
        let b = expected_b_total(&link, &prov, &sizes).unwrap();
        prop_assert!(b >= a * (1.0 - 1e-12));
        let p = prob_cases(&link, &prov, &sizes).unwrap();
        let t = expected_theta_single(&link, &prov, &sizes).unwrap();
        prop_assert!(t >= p.p1 * a_out * (1.0 - 1e-12));
    }

    #[test]
    fn monotone_in_transfer_sizes((link, prov, sizes) in inputs(), extra in 0.0..1e6f64) {
        let more_in = TransferSizes::new(sizes.k() + extra, sizes.kprime()).unwrap();
        let more_out = TransferSizes::new(sizes.k(), sizes.kprime() + extra).unwrap();
        let b0 = expected_b_total(&link, &prov, &sizes).unwrap();
        let b1 = expected_b_total(&link, &prov, &more_in).unwrap();
        prop_assert!(b1 >= b0 * (1.0 - 1e-12) - 1e-12, "{b0} {b1}");
        let t0 = expected_theta_single(&link, &prov, &sizes).unwrap();
        let t1 = expected_theta_single(&link, &prov, &more_out).unwrap();
        prop_assert!(t1 >= t0 * (1.0 - 1e-12) - 1e-12, "{t0} {t1}");
    }

    #[test]
    fn n2b_is_normalised_with_mean((link, _prov, sizes) in inputs()) {
        let x = link.delta() * sizes.kprime() / link.throughput();
        prop_assume!(x < 50.0);
        let (mut s, mut m) = (0.0, 0.0);
        for n in 0..400u32 {
            let p = pmf_n2b(n, &link, &sizes);
            s += p;
            m += n as f64 * p;
        }
        prop_assert!((s - 1.0).abs() < 1e-9);
        prop_assert!((m - x).abs() < 1e-9 * (1.0 + x));
    }

    #[test]
    fn single_leg_composition_is_single_estimate((link, prov, sizes) in inputs(), in_contact: bool) {
        let leg = CompositionLeg { link, prov, sizes, tq: 0.0 };
        let c = estimate_composition(in_contact, &[leg], &link).unwrap();
        prop_assert_eq!(c.to_bits(), estimate_single(&link, &prov, &sizes, in_contact).total.to_bits());
    }

    #[test]
    fn collapses_to_case_one_without_disconnections((link, prov, sizes) in inputs()) {
        let still = LinkParams::new(1e-14, link.delta_prime(), link.throughput()).unwrap();
        let e = estimate_single(&still, &prov, &sizes, false);
        let want = 1.0 / link.delta_prime() + sizes.k() / link.throughput()
            + expected_queue_delay(&prov).unwrap() + prov.d() + sizes.kprime() / link.throughput();
        prop_assert!((e.total - want).abs() <= 1e-6 * want, "{} vs {}", e.total, want);
    }
}
