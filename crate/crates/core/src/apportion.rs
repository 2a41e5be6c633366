//! Largest-remainder apportionment.
//!
//! Used wherever a fractional allocation must become integer counts that sum
//! to an exact total. Ties between equal remainders go to the lowest index.

use crate::error::{Error, Result};

/// Apportion `total` units proportionally to integer `weights` using exact
/// integer arithmetic. Zero-weight entries never receive units.
pub fn by_counts(weights: &[u64], total: u64) -> Result<Vec<u64>> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        if total == 0 {
            return Ok(vec![0; weights.len()]);
        }
        return Err(Error::Distribution(
            "cannot apportion a positive total over all-zero weights".into(),
        ));
    }
    let mut out = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let num = w as u128 * total as u128;
        out.push((num / sum) as u64);
        rems.push((num % sum, i));
    }
    let assigned: u64 = out.iter().sum();
    let left = (total - assigned) as usize;
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().take(left) {
        out[i] += 1;
    }
    Ok(out)
}

/// Apportion `total` units proportionally to real, nonnegative `weights`.
pub fn by_weights(weights: &[f64], total: u64) -> Result<Vec<u64>> {
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Distribution(format!(
            "weight {i} is negative or non-finite"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        if total == 0 {
            return Ok(vec![0; weights.len()]);
        }
        return Err(Error::Distribution(
            "cannot apportion a positive total over all-zero weights".into(),
        ));
    }
    let mut out = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let quota = w / sum * total as f64;
        let floor = quota.floor();
        out.push(floor as u64);
        rems.push((quota - floor, i));
    }
    // Float rounding can push the floor sum past total in pathological cases.
    while out.iter().sum::<u64>() > total {
        let i = (0..out.len())
            .filter(|&i| out[i] > 0)
            .min_by(|&a, &b| rems[a].0.total_cmp(&rems[b].0))
            .expect("positive entry exists");
        out[i] -= 1;
    }
    let left = (total - out.iter().sum::<u64>()) as usize;
    rems.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().filter(|(_, i)| weights[*i] > 0.0).take(left) {
        out[i] += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_fractions() {
        assert_eq!(by_weights(&[0.75, 0.25], 8).unwrap(), vec![6, 2]);
        assert_eq!(by_counts(&[20, 5], 25).unwrap(), vec![20, 5]);
        assert_eq!(by_counts(&[1, 1, 1], 4).unwrap(), vec![2, 1, 1]);
    }

    #[test]
    fn zero_weight_never_receives() {
        assert_eq!(by_counts(&[0, 3, 0, 3], 5).unwrap(), vec![0, 3, 0, 2]);
        assert_eq!(by_weights(&[0.0, 1.0, 0.0], 7).unwrap(), vec![0, 7, 0]);
    }

    #[test]
    fn all_zero_weights_rejected() {
        assert!(by_counts(&[0, 0], 1).is_err());
        assert_eq!(by_counts(&[0, 0], 0).unwrap(), vec![0, 0]);
    }

    proptest! {
        #[test]
        fn conserves_total(weights in prop::collection::vec(0u64..1000, 1..20), total in 0u64..10_000) {
            prop_assume!(weights.iter().any(|&w| w > 0));
            let a = by_counts(&weights, total).unwrap();
            prop_assert_eq!(a.iter().sum::<u64>(), total);
            let sum: u64 = weights.iter().sum();
            for (w, n) in weights.iter().zip(&a) {
                let quota = *w as f64 * total as f64 / sum as f64;
                prop_assert!((*n as f64 - quota).abs() < 1.0 + 1e-9);
            }
            let f: Vec<f64> = weights.iter().map(|&w| w as f64).collect();
            prop_assert_eq!(by_weights(&f, total).unwrap().iter().sum::<u64>(), total);
        }
    }
}
