use log::debug;

use super::{positive, LinkParams, ModelError, ProviderParams, TransferSizes};

/// `rate * bytes / throughput`, taken as zero when nothing is transferred.
pub(super) fn exponent(rate: f64, bytes: f64, throughput: f64) -> f64 {
    if bytes == 0.0 {
        0.0
    } else {
        rate * (bytes / throughput)
    }
}

/// Net in-contact time needed to move `bytes`.
pub(super) fn net_time(bytes: f64, link: &LinkParams) -> f64 {
    bytes / link.throughput()
}

/// μ(1−ρ)/(δ+μ(1−ρ)): probability that the exponential sojourn at the
/// provider ends before a contact with rate δ.
fn outruns_contact(link: &LinkParams, sojourn_rate: f64) -> f64 {
    if sojourn_rate == 0.0 {
        0.0
    } else {
        sojourn_rate / (link.delta() + sojourn_rate)
    }
}

/// Expected wait before the first contact.
pub fn expected_wait(in_contact: bool, delta_prime: f64) -> Result<f64, ModelError> {
    positive("delta_prime", delta_prime)?;
    Ok(if in_contact { 0.0 } else { 1.0 / delta_prime })
}

/// Mean wait in the provider's queue before execution starts.
pub fn expected_queue_delay(prov: &ProviderParams) -> Result<f64, ModelError> {
    let rho = prov.rho();
    if rho >= 1.0 {
        return Err(ModelError::UnstableQueue { rho });
    }
    let free = 1.0 - rho;
    Ok(prov.lambda() * prov.l() * prov.d2() / (2.0 * free) + prov.l2() * prov.d() / (2.0 * prov.l() * free))
}

/// Probabilities of cases 1, 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseProbabilities {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

pub(super) fn cases_with_rate(link: &LinkParams, sizes: &TransferSizes, sojourn_rate: f64) -> CaseProbabilities {
    let delta = link.delta();
    let x_in = exponent(delta, sizes.k(), link.throughput());
    let x_out = exponent(delta, sizes.kprime(), link.throughput());
    let mut p1 = outruns_contact(link, sojourn_rate) * (-(x_in + x_out)).exp();
    let mut p3 = -(-x_in).exp_m1();
    let mut p2 = 1.0 - p1 - p3;
    if p2 < 0.0 {
        debug!("clamping negative p2={p2} (p1={p1}, p3={p3})");
        let s = p1 + p3;
        p1 /= s;
        p3 /= s;
        p2 = 0.0;
    }
    CaseProbabilities { p1, p2, p3 }
}

pub fn prob_cases(link: &LinkParams, prov: &ProviderParams, sizes: &TransferSizes) -> Result<CaseProbabilities, ModelError> {
    Ok(cases_with_rate(link, sizes, prov.sojourn_rate()?))
}

pub(super) fn case2a_with_rate(link: &LinkParams, sizes: &TransferSizes, sojourn_rate: f64) -> f64 {
    (-exponent(link.delta(), sizes.k(), link.throughput())).exp() * outruns_contact(link, sojourn_rate)
}

/// Probability that the first contact outlasts the input and the task
/// leaves the provider while it is still up.
pub fn prob_case2a(link: &LinkParams, prov: &ProviderParams, sizes: &TransferSizes) -> Result<f64, ModelError> {
    Ok(case2a_with_rate(link, sizes, prov.sojourn_rate()?))
}

/// Long-run fractions of time spent in contact and in inter-contact.
pub fn steady_state_split(delta: f64, delta_prime: f64) -> Result<(f64, f64), ModelError> {
    positive("delta", delta)?;
    positive("delta_prime", delta_prime)?;
    let r = delta / delta_prime;
    if r.is_infinite() {
        return Ok((0.0, 1.0));
    }
    Ok((1.0 / (1.0 + r), r / (1.0 + r)))
}

pub(super) fn theta_case2a_with_rate(link: &LinkParams, sizes: &TransferSizes, sojourn_rate: f64) -> f64 {
    let a_out = net_time(sizes.kprime(), link);
    let x_in = exponent(link.delta(), sizes.k(), link.throughput());
    let x_out = exponent(link.delta(), sizes.kprime(), link.throughput());
    // e^{-x_in} (x_out - 1 + e^{-x_out}), written to stay accurate for
    // small x_out and finite for large x_out.
    let series = (-x_in).exp() * (x_out + (-x_out).exp_m1());
    let inv_dp = 1.0 / link.delta_prime();
    a_out + inv_dp + inv_dp * series * outruns_contact(link, sojourn_rate)
}

pub fn expected_theta_case2a(link: &LinkParams, prov: &ProviderParams, sizes: &TransferSizes) -> Result<f64, ModelError> {
    Ok(theta_case2a_with_rate(link, sizes, prov.sojourn_rate()?))
}

/// Output transfer starting at the beginning of a contact.
pub fn expected_theta_case2b(link: &LinkParams, sizes: &TransferSizes) -> f64 {
    net_time(sizes.kprime(), link) * (1.0 + link.ratio())
}

/// Output transfer starting during an inter-contact period.
pub fn expected_theta_case2c(link: &LinkParams, sizes: &TransferSizes) -> f64 {
    1.0 / link.delta_prime() + expected_theta_case2b(link, sizes)
}

/// Input transfer given that the first contact ends before it completes.
pub fn expected_b_case3(link: &LinkParams, sizes: &TransferSizes) -> f64 {
    let a_in = net_time(sizes.k(), link);
    a_in * (1.0 + link.ratio()) + (-exponent(link.delta(), sizes.k(), link.throughput())).exp() / link.delta_prime()
}

/// Output transfer in case 3, starting at a steady-state instant.
pub fn expected_theta_case3(link: &LinkParams, sizes: &TransferSizes) -> f64 {
    let d = link.delta();
    let dp = link.delta_prime();
    expected_theta_case2b(link, sizes) + d / (dp * (dp + d))
}

pub(super) fn b_total_with_rate(link: &LinkParams, sizes: &TransferSizes, sojourn_rate: f64) -> f64 {
    let p = cases_with_rate(link, sizes, sojourn_rate);
    net_time(sizes.k(), link) * (p.p1 + p.p2) + expected_b_case3(link, sizes) * p.p3
}

pub fn expected_b_total(link: &LinkParams, prov: &ProviderParams, sizes: &TransferSizes) -> Result<f64, ModelError> {
    Ok(b_total_with_rate(link, sizes, prov.sojourn_rate()?))
}

pub(super) fn theta_case2_with_rate(link: &LinkParams, sizes: &TransferSizes, sojourn_rate: f64) -> f64 {
    let pa = case2a_with_rate(link, sizes, sojourn_rate);
    let (fc, fi) = steady_state_split(link.delta(), link.delta_prime()).expect("link rates are positive");
    pa * theta_case2a_with_rate(link, sizes, sojourn_rate)
        + (1.0 - pa) * (fc * expected_theta_case2b(link, sizes) + fi * expected_theta_case2c(link, sizes))
}

/// Output transfer in case 2, mixing sub-cases 2A, 2B and 2C.
pub fn expected_theta_case2(link: &LinkParams, prov: &ProviderParams, sizes: &TransferSizes) -> Result<f64, ModelError> {
    Ok(theta_case2_with_rate(link, sizes, prov.sojourn_rate()?))
}

pub(super) fn theta_single_with_rate(link: &LinkParams, sizes: &TransferSizes, sojourn_rate: f64) -> f64 {
    let p = cases_with_rate(link, sizes, sojourn_rate);
    p.p1 * net_time(sizes.kprime(), link)
        + p.p2 * theta_case2_with_rate(link, sizes, sojourn_rate)
        + p.p3 * expected_theta_case3(link, sizes)
}

/// Output transfer back to the seeker of a single-service request.
pub fn expected_theta_single(link: &LinkParams, prov: &ProviderParams, sizes: &TransferSizes) -> Result<f64, ModelError> {
    Ok(theta_single_with_rate(link, sizes, prov.sojourn_rate()?))
}

/// Output transfer between consecutive providers of a composition (or
/// from the last one to the seeker), given the mean time `tq` output
/// data waits on that link before it starts moving.
pub fn expected_theta_composition(link: &LinkParams, sizes: &TransferSizes, tq: f64) -> Result<f64, ModelError> {
    super::non_negative("tq", tq)?;
    Ok(tq + expected_theta_case2b(link, sizes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link() -> LinkParams {
        LinkParams::new(0.02, 0.005, 100_000.0).unwrap()
    }

    fn prov(rho: f64) -> ProviderParams {
        ProviderParams::new(rho / 75.0, 1.0, 1.0, 75.0, 11250.0).unwrap()
    }

    fn sizes() -> TransferSizes {
        TransferSizes::new(40_000.0, 40_000.0).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wait() {
        assert_eq!(expected_wait(true, 0.005).unwrap(), 0.0);
        assert_eq!(expected_wait(false, 0.005).unwrap(), 200.0);
        assert_eq!(expected_wait(false, 0.01).unwrap(), 100.0);
        assert!(expected_wait(false, 0.0).is_err());
    }

    #[test]
    fn queue_delay() {
        let p = ProviderParams::new(0.005, 1.0, 1.0, 75.0, 11250.0).unwrap();
        assert!(close(p.rho(), 0.375, 1e-15));
        assert!(close(expected_queue_delay(&p).unwrap(), 105.0, 1e-10));
        let idle = ProviderParams::new(0.0, 1.0, 1.0, 75.0, 11250.0).unwrap();
        assert!(close(expected_queue_delay(&idle).unwrap(), 37.5, 1e-12));
        let full = ProviderParams::new(1.0 / 75.0, 1.0, 1.0, 75.0, 11250.0).unwrap();
        assert!(matches!(expected_queue_delay(&full), Err(ModelError::UnstableQueue { .. })));
    }

    #[test]
    fn case_probabilities() {
        let p = prob_cases(&link(), &prov(0.5), &sizes()).unwrap();
        assert!(close(p.p1, 0.24603, 5e-6), "{p:?}");
        assert!(close(p.p3, 0.0079681, 1e-7), "{p:?}");
        assert!(close(p.p1 + p.p2 + p.p3, 1.0, 1e-12));

        let zero = TransferSizes::new(0.0, 0.0).unwrap();
        let p = prob_cases(&link(), &prov(0.5), &zero).unwrap();
        assert_eq!(p.p3, 0.0);
        assert!(close(p.p1, 0.25, 1e-15));

        let fast = LinkParams::new(0.02, 0.005, f64::INFINITY).unwrap();
        let p = prob_cases(&fast, &prov(0.5), &sizes()).unwrap();
        assert_eq!(p.p3, 0.0);
        assert!(close(p.p1, 0.25, 1e-15));
    }

    #[test]
    fn case2a_probability() {
        assert!(close(prob_case2a(&link(), &prov(0.5), &sizes()).unwrap(), 0.248008, 1e-6));
        let k0 = TransferSizes::new(0.0, 40_000.0).unwrap();
        assert!(close(prob_case2a(&link(), &prov(0.5), &k0).unwrap(), 0.25, 1e-15));
        let instant = ProviderParams::new(0.0, 1.0, 0.0, 1e-300, 0.0).unwrap();
        assert!(close(prob_case2a(&link(), &instant, &sizes()).unwrap(), (-0.008f64).exp(), 1e-12));
    }

    #[test]
    fn split() {
        let (c, i) = steady_state_split(0.02, 0.005).unwrap();
        assert!(close(c, 0.2, 1e-15) && close(i, 0.8, 1e-15));
        assert_eq!(steady_state_split(0.3, 0.3).unwrap(), (0.5, 0.5));
        let (c, i) = steady_state_split(0.02, 1e300).unwrap();
        assert!(close(c, 1.0, 1e-15) && close(i, 0.0, 1e-15));
        assert_eq!(steady_state_split(0.02, f64::INFINITY).unwrap(), (1.0, 0.0));
        assert!(steady_state_split(0.0, 1.0).is_err());
    }

    #[test]
    fn theta_2a() {
        let t = expected_theta_case2a(&link(), &prov(0.5), &sizes()).unwrap();
        assert!(close(t, 200.4016, 1e-4), "{t}");
        let kp0 = TransferSizes::new(40_000.0, 0.0).unwrap();
        assert!(close(expected_theta_case2a(&link(), &prov(0.5), &kp0).unwrap(), 200.0, 1e-12));
        let still = LinkParams::new(1e-300, 0.005, 100_000.0).unwrap();
        assert!(close(expected_theta_case2a(&still, &prov(0.5), &sizes()).unwrap(), 200.4, 1e-9));
    }

    #[test]
    fn theta_2b_2c() {
        assert!(close(expected_theta_case2b(&link(), &sizes()), 2.0, 1e-12));
        assert!(close(expected_theta_case2c(&link(), &sizes()), 202.0, 1e-12));
        let still = LinkParams::new(1e-300, 0.005, 100_000.0).unwrap();
        assert!(close(expected_theta_case2b(&still, &sizes()), 0.4, 1e-12));
        assert!(close(expected_theta_case2c(&still, &sizes()), 200.4, 1e-12));
        let none = TransferSizes::new(40_000.0, 0.0).unwrap();
        assert_eq!(expected_theta_case2b(&link(), &none), 0.0);
        assert_eq!(expected_theta_case2c(&link(), &none), 200.0);
    }

    #[test]
    fn case3_terms() {
        let b = expected_b_case3(&link(), &sizes());
        assert!(close(b, 2.0 + 200.0 * (-0.008f64).exp(), 1e-12));
        assert!(close(b, 200.41, 0.005));
        let k0 = TransferSizes::new(0.0, 0.0).unwrap();
        assert_eq!(expected_b_case3(&link(), &k0), 200.0);
        let instant = LinkParams::new(0.02, f64::INFINITY, 100_000.0).unwrap();
        assert!(close(expected_b_case3(&instant, &sizes()), 0.4, 1e-12));

        assert!(close(expected_theta_case3(&link(), &sizes()), 162.0, 1e-9));
        let still = LinkParams::new(1e-300, 0.005, 100_000.0).unwrap();
        assert!(close(expected_theta_case3(&still, &sizes()), 0.4, 1e-12));
        let eq = LinkParams::new(0.01, 0.01, 100_000.0).unwrap();
        assert!(close(expected_theta_case3(&eq, &sizes()), 0.8 + 50.0, 1e-12));
    }

    #[test]
    fn b_total() {
        let b = expected_b_total(&link(), &prov(0.5), &sizes()).unwrap();
        assert!(close(b, 1.994, 5e-4), "{b}");
        let k0 = TransferSizes::new(0.0, 40_000.0).unwrap();
        assert_eq!(expected_b_total(&link(), &prov(0.5), &k0).unwrap(), 0.0);
        let still = LinkParams::new(1e-300, 0.005, 100_000.0).unwrap();
        assert!(close(expected_b_total(&still, &prov(0.5), &sizes()).unwrap(), 0.4, 1e-12));
    }

    #[test]
    fn theta_single() {
        let p = prob_cases(&link(), &prov(0.5), &sizes()).unwrap();
        let pa = 0.248008;
        let case2 = pa * 200.4016 + (1.0 - pa) * (0.2 * 2.0 + 0.8 * 202.0);
        let want = p.p1 * 0.4 + p.p2 * case2 + p.p3 * 162.0;
        let got = expected_theta_single(&link(), &prov(0.5), &sizes()).unwrap();
        assert!(close(got, want, 1e-3), "{got} vs {want}");
        let still = LinkParams::new(1e-300, 0.005, 100_000.0).unwrap();
        assert!(close(expected_theta_single(&still, &prov(0.5), &sizes()).unwrap(), 0.4, 1e-9));
    }

    #[test]
    fn theta_composition() {
        assert!(close(expected_theta_composition(&link(), &sizes(), 10.0).unwrap(), 12.0, 1e-12));
        assert_eq!(expected_theta_composition(&link(), &sizes(), 0.0).unwrap(), expected_theta_case2b(&link(), &sizes()));
        let none = TransferSizes::new(40_000.0, 0.0).unwrap();
        assert_eq!(expected_theta_composition(&link(), &none, 7.0).unwrap(), 7.0);
        assert!(expected_theta_composition(&link(), &sizes(), -1.0).is_err());
    }
}
