//! Distributions of the number of contact interruptions.

use super::phases::exponent;
use super::{LinkParams, ModelError, ProviderParams, TransferSizes};

fn ln_factorial(n: u64) -> f64 {
    if n < 256 {
        (2..=n).map(|i| (i as f64).ln()).sum()
    } else {
        let x = n as f64;
        x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
    }
}

/// Poisson probability of `n` with mean `x`.
fn poisson(n: u64, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-x + n as f64 * x.ln() - ln_factorial(n)).exp()
}

/// Number of contacts that end while the output is sent, when sending
/// starts at the beginning of a contact.
pub fn pmf_n2b(n: u32, link: &LinkParams, sizes: &TransferSizes) -> f64 {
    poisson(u64::from(n), exponent(link.delta(), sizes.kprime(), link.throughput()))
}

/// Additional inter-contact periods incurred by the output in case 2A.
///
/// Joint with the case-2A event: summing over `n` gives the probability
/// of at least one interruption during the output, not one.
pub fn pmf_n2a(n: u32, link: &LinkParams, prov: &ProviderParams, sizes: &TransferSizes) -> Result<f64, ModelError> {
    let m = prov.mu() * {
        let rho = prov.rho();
        if rho >= 1.0 {
            return Err(ModelError::UnstableQueue { rho });
        }
        1.0 - rho
    };
    let delta = link.delta();
    let x_in = exponent(delta, sizes.k(), link.throughput());
    let x_out = exponent(delta, sizes.kprime(), link.throughput());
    Ok((-x_in).exp() * poisson(u64::from(n) + 1, x_out) * m / (delta + m))
}

/// Additional interruptions of the input in case 3.
///
/// Joint with the case-3 event: summing over `n` gives p3.
pub fn pmf_rnic(n: u32, link: &LinkParams, sizes: &TransferSizes) -> f64 {
    poisson(u64::from(n) + 1, exponent(link.delta(), sizes.k(), link.throughput()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_branches_agree() {
        let exact: f64 = (2..=300u64).map(|i| (i as f64).ln()).sum();
        assert!((ln_factorial(300) - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn n2b_is_poisson() {
        let link = LinkParams::new(0.02, 0.005, 100_000.0).unwrap();
        let sizes = TransferSizes::new(40_000.0, 40_000.0).unwrap();
        assert!((pmf_n2b(0, &link, &sizes) - (-0.008f64).exp()).abs() < 1e-15);
        assert!((pmf_n2b(0, &link, &sizes) - 0.99203).abs() < 1e-5);
        let s: f64 = (0..200).map(|n| pmf_n2b(n, &link, &sizes)).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rnic_sums_to_case3_probability() {
        let link = LinkParams::new(0.05, 0.005, 10_000.0).unwrap();
        let sizes = TransferSizes::new(400_000.0, 0.0).unwrap();
        let s: f64 = (0..200).map(|n| pmf_rnic(n, &link, &sizes)).sum();
        assert!((s - (1.0 - (-2.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn n2a_unstable() {
        let link = LinkParams::new(0.05, 0.005, 10_000.0).unwrap();
        let sizes = TransferSizes::new(1.0, 1.0).unwrap();
        let p = ProviderParams::new(1.0, 1.0, 1.0, 1.0, 2.0).unwrap();
        assert!(pmf_n2a(0, &link, &p, &sizes).is_err());
    }
}
