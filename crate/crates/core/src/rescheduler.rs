//! Greedy mediator scheduling.
//!
//! Clients are packed into mediators of at most `gamma` members. Each pick
//! adds the unassigned client that brings the mediator's pooled class
//! distribution closest (in KL divergence) to uniform.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::ClassDistribution;
use crate::error::{Error, Result};
use crate::metrics::Summary;

pub type ClientId = usize;

/// `Σ p_i ln(p_i / q_i)` in nats, with `0 · ln 0 = 0`.
pub fn kld(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            context: "kld",
            expected: p.len(),
            actual: q.len(),
        });
    }
    for (name, v) in [("P", p), ("Q", q)] {
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || v.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Distribution(format!(
                "{name} is not a probability vector (sum {sum})"
            )));
        }
    }
    let mut acc = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::DivergenceUndefined { index });
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(acc.max(0.0))
}

/// KL divergence of a count vector's normalized shape from uniform.
///
/// Uses `Σ p ln p + ln N`. Terms are summed in ascending count order so that
/// permuted histograms score bit-identically and exact ties stay exact.
pub fn kld_to_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let neg_entropy: f64 = sorted
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            p * p.ln()
        })
        .sum();
    (neg_entropy + (counts.len() as f64).ln()).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mediator {
    /// Member clients in the order they were picked (and will train).
    pub clients: Vec<ClientId>,
    pub combined: ClassDistribution,
}

impl Mediator {
    pub fn size(&self) -> usize {
        self.clients.len()
    }

    /// Training samples under this mediator (`n_m`).
    pub fn num_samples(&self) -> u64 {
        self.combined.total()
    }

    pub fn kld(&self) -> f64 {
        kld_to_uniform(self.combined.counts())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediatorAssignment {
    pub mediators: Vec<Mediator>,
    pub gamma: usize,
}

impl MediatorAssignment {
    pub fn num_clients(&self) -> usize {
        self.mediators.iter().map(Mediator::size).sum()
    }

    pub fn client_ids(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.mediators.iter().flat_map(|m| m.clients.iter().copied())
    }
}

/// One greedy step: the unassigned client minimizing the KLD of
/// `mediator + client` from uniform. Strict `<` over ascending ids gives the
/// lowest-id tie-break.
pub fn greedy_pick(
    current: &ClassDistribution,
    candidates: &BTreeMap<ClientId, &ClassDistribution>,
) -> Option<(ClientId, f64)> {
    let mut best: Option<(ClientId, f64)> = None;
    let mut merged = current.clone();
    for (&id, dist) in candidates {
        merged.clone_from(current);
        merged.add(dist);
        let score = kld_to_uniform(merged.counts());
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((id, score));
        }
    }
    best
}

/// Assign every client in `client_dists` to a mediator of at most `gamma` members.
pub fn reschedule(
    client_dists: &BTreeMap<ClientId, ClassDistribution>,
    gamma: usize,
) -> Result<MediatorAssignment> {
    if gamma == 0 {
        return Err(Error::config("gamma", "must be >= 1"));
    }
    let num_classes = match client_dists.values().next() {
        Some(d) => d.num_classes(),
        None => {
            return Ok(MediatorAssignment {
                mediators: Vec::new(),
                gamma,
            })
        }
    };
    for (id, d) in client_dists {
        if d.num_classes() != num_classes {
            return Err(Error::config("client_dists", format!("client {id} has a different class count")));
        }
        if d.total() == 0 {
            return Err(Error::config("client_dists", format!("client {id} holds no samples")));
        }
    }

    let mut unassigned: BTreeMap<ClientId, &ClassDistribution> =
        client_dists.iter().map(|(&id, d)| (id, d)).collect();
    let mut mediators = Vec::new();
    while !unassigned.is_empty() {
        let mut m = Mediator {
            clients: Vec::with_capacity(gamma),
            combined: ClassDistribution::zeros(num_classes),
        };
        while m.size() < gamma {
            let Some((id, _)) = greedy_pick(&m.combined, &unassigned) else {
                break;
            };
            let dist = unassigned.remove(&id).expect("picked from candidates");
            m.combined.add(dist);
            m.clients.push(id);
        }
        mediators.push(m);
    }
    Ok(MediatorAssignment { mediators, gamma })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KldReport {
    /// `D_KL(P_m || P_u)` per mediator, in assignment order.
    pub mediator_values: Vec<f64>,
    /// `D_KL(P_k || P_u)` per scheduled client, in assignment order.
    pub client_values: Vec<f64>,
    pub mediator: Summary,
    pub client: Summary,
}

pub fn kld_report(
    assignment: &MediatorAssignment,
    client_dists: &BTreeMap<ClientId, ClassDistribution>,
) -> Result<KldReport> {
    if assignment.mediators.is_empty() {
        return Err(Error::config("assignment", "KLD report needs at least one mediator"));
    }
    let mediator_values: Vec<f64> = assignment.mediators.iter().map(Mediator::kld).collect();
    let client_values = assignment
        .client_ids()
        .map(|id| {
            client_dists
                .get(&id)
                .map(|d| kld_to_uniform(d.counts()))
                .ok_or_else(|| Error::config("assignment", format!("unknown client {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KldReport {
        mediator: Summary::of(&mediator_values),
        client: Summary::of(&client_values),
        mediator_values,
        client_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn dists(v: &[&[u64]]) -> BTreeMap<ClientId, ClassDistribution> {
        v.iter()
            .enumerate()
            .map(|(i, c)| (i, ClassDistribution::new(c.to_vec())))
            .collect()
    }

    #[test]
    fn kld_examples() {
        let u = [0.25; 4];
        assert_eq!(kld(&u, &u).unwrap(), 0.0);
        assert!((kld(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - LN_2).abs() < 1e-15);
        assert!((kld(&[0.5, 0.5, 0.0, 0.0], &u).unwrap() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn kld_errors() {
        assert!(matches!(
            kld(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::DivergenceUndefined { index: 1 })
        ));
        assert!(kld(&[0.5, 0.4], &[0.5, 0.5]).is_err());
        assert!(kld(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn uniform_shortcut_agrees_with_general_form() {
        let counts = [3u64, 0, 9, 1, 4];
        let total: u64 = counts.iter().sum();
        let p: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let general = kld(&p, &[0.2; 5]).unwrap();
        assert!((general - kld_to_uniform(&counts)).abs() < 1e-14);
    }

    #[test]
    fn complementary_pair_shares_a_mediator() {
        let d = dists(&[&[10, 0], &[0, 10]]);
        let a = reschedule(&d, 2).unwrap();
        assert_eq!(a.mediators.len(), 1);
        assert_eq!(a.mediators[0].clients, vec![0, 1]);
        assert_eq!(a.mediators[0].kld(), 0.0);
    }

    #[test]
    fn gamma_one_orders_by_own_kld() {
        // KLDs: client0 ln2, client1 ~0.02, client2 0 → picks 2, 1, 0.
        let d = dists(&[&[10, 0], &[6, 4], &[5, 5]]);
        let a = reschedule(&d, 1).unwrap();
        let order: Vec<Vec<usize>> = a.mediators.iter().map(|m| m.clients.clone()).collect();
        assert_eq!(order, vec![vec![2], vec![1], vec![0]]);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let d = dists(&[&[5, 5], &[5, 5], &[5, 5]]);
        let a = reschedule(&d, 2).unwrap();
        assert_eq!(a.mediators[0].clients, vec![0, 1]);
        assert_eq!(a.mediators[1].clients, vec![2]);
    }

    #[test]
    fn errors_and_empty_input() {
        assert!(reschedule(&dists(&[&[1, 1]]), 0).is_err());
        assert!(reschedule(&dists(&[&[0, 0]]), 1).is_err());
        assert!(reschedule(&BTreeMap::new(), 3).unwrap().mediators.is_empty());
    }

    #[test]
    fn report_statistics() {
        let d = dists(&[&[10, 0], &[0, 10]]);
        let a = reschedule(&d, 2).unwrap();
        let r = kld_report(&a, &d).unwrap();
        assert_eq!(r.mediator.mean, 0.0);
        assert_eq!(r.mediator.iqr(), 0.0);
        assert!((r.client.mean - LN_2).abs() < 1e-15);

        let single = reschedule(&dists(&[&[3, 1]]), 4).unwrap();
        let r = kld_report(&single, &dists(&[&[3, 1]])).unwrap();
        assert_eq!(r.mediator.mean, single.mediators[0].kld());
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<u64>>, usize)> {
        (1usize..5, 1usize..9, 1usize..5).prop_flat_map(|(classes, clients, gamma)| {
            (
                prop::collection::vec(
                    prop::collection::vec(0u64..20, classes + 1).prop_filter("nonempty", |v| v.iter().any(|&c| c > 0)),
                    clients,
                ),
                Just(gamma),
            )
        })
    }

    proptest! {
        #[test]
        fn assignment_is_a_capacity_respecting_partition((raw, gamma) in instance()) {
            let d: BTreeMap<ClientId, ClassDistribution> =
                raw.into_iter().enumerate().map(|(i, c)| (i, ClassDistribution::new(c))).collect();
            let a = reschedule(&d, gamma).unwrap();
            let mut ids: Vec<_> = a.client_ids().collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, d.keys().copied().collect::<Vec<_>>());
            let last = a.mediators.len() - 1;
            for (i, m) in a.mediators.iter().enumerate() {
                prop_assert!(m.size() >= 1 && m.size() <= gamma);
                if i != last {
                    prop_assert_eq!(m.size(), gamma);
                }
                let sum = ClassDistribution::sum(m.combined.num_classes(), m.clients.iter().map(|c| &d[c]));
                prop_assert_eq!(&sum, &m.combined);
                prop_assert!(m.kld() >= 0.0);
            }
        }
    }
}
