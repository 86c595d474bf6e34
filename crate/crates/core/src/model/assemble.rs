use serde::Serialize;

use super::phases::{
    b_total_with_rate, cases_with_rate, expected_theta_composition, expected_wait, theta_single_with_rate,
};
use super::{expected_queue_delay, LinkParams, ModelError, ProviderParams, TransferSizes};

/// Expected duration of each phase of one service interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseEstimate {
    pub e_w: f64,
    pub e_b: f64,
    pub e_dq: f64,
    pub e_ds: f64,
    pub e_theta: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub total: f64,
}

impl PhaseEstimate {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

fn sojourn_rate_or_zero(prov: &ProviderParams) -> f64 {
    if prov.is_stable() {
        prov.mu() * (1.0 - prov.rho())
    } else {
        0.0
    }
}

/// Expected provisioning time of a single-service request.
///
/// An unstable provider yields an infinite queueing delay and total; the
/// remaining fields are then the limits as the load approaches one.
pub fn estimate_single(link: &LinkParams, prov: &ProviderParams, sizes: &TransferSizes, in_contact: bool) -> PhaseEstimate {
    let m = sojourn_rate_or_zero(prov);
    let p = cases_with_rate(link, sizes, m);
    let e_w = expected_wait(in_contact, link.delta_prime()).expect("link rates are positive");
    let e_b = b_total_with_rate(link, sizes, m);
    let e_dq = expected_queue_delay(prov).unwrap_or(f64::INFINITY);
    let e_ds = prov.d();
    let e_theta = theta_single_with_rate(link, sizes, m);
    PhaseEstimate { e_w, e_b, e_dq, e_ds, e_theta, p1: p.p1, p2: p.p2, p3: p.p3, total: e_w + e_b + e_dq + e_ds + e_theta }
}

/// One provider of a composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionLeg {
    /// Link from the previous data holder (the seeker for the first leg)
    /// to this provider.
    pub link: LinkParams,
    pub prov: ProviderParams,
    /// `k` is the input sent over `link`, `kprime` the output this leg
    /// produces.
    pub sizes: TransferSizes,
    /// Mean time the output waits on the outgoing link before moving.
    pub tq: f64,
}

/// Expected provisioning time of a chain of services.
///
/// The first leg contributes the wait for contact and the input transfer,
/// every leg its queueing delay, execution and output transfer. Outputs
/// travel over the next leg's link, and over `return_link` for the last
/// leg of a multi-leg chain. A single leg is estimated exactly as
/// [`estimate_single`] on its own link. Any unstable provider makes the
/// result infinite.
pub fn estimate_composition(in_contact: bool, legs: &[CompositionLeg], return_link: &LinkParams) -> Result<f64, ModelError> {
    let first = legs.first().ok_or(ModelError::EmptyComposition)?;
    if legs.len() == 1 {
        return Ok(estimate_single(&first.link, &first.prov, &first.sizes, in_contact).total);
    }
    if legs.iter().any(|l| !l.prov.is_stable()) {
        return Ok(f64::INFINITY);
    }
    let m = sojourn_rate_or_zero(&first.prov);
    let mut total = expected_wait(in_contact, first.link.delta_prime())? + b_total_with_rate(&first.link, &first.sizes, m);
    for (i, leg) in legs.iter().enumerate() {
        let out_link = legs.get(i + 1).map_or(return_link, |next| &next.link);
        total += expected_queue_delay(&leg.prov)? + leg.prov.d() + expected_theta_composition(out_link, &leg.sizes, leg.tq)?;
    }
    Ok(total)
}
